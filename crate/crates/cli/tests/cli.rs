use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn emubench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emubench"))
        .args(args)
        .env_remove("EMUBENCH_SEED")
        .output()
        .expect("spawn emubench")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn gen_small(dir: &Path) {
    let out = emubench(&["gen-data", "--out", dir.to_str().unwrap(), "--members", "4", "--n-lat", "4", "--n-lon", "6"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn validate_accepts_fresh_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    gen_small(tmp.path());
    assert!(tmp.path().join("gen-data.config.json").is_file());
    assert!(tmp.path().join("collection.json.manifest.json").is_file());

    let out = emubench(&["validate", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("\"schema_version\": 1"));
    assert!(!text.contains("MISMATCH"));

    let single = tmp.path().join("tas_ssp245");
    assert_eq!(code(&emubench(&["validate", single.to_str().unwrap()])), 0);
}

#[test]
fn validate_flags_corrupted_payload_as_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    gen_small(tmp.path());
    let payload = tmp.path().join("pr_ssp126").join("values.f64");
    let mut bytes = fs::read(&payload).unwrap();
    bytes[3] ^= 0x40;
    fs::write(&payload, bytes).unwrap();
    let out = emubench(&["validate", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stdout).contains("MISMATCH"));
}

#[test]
fn score_of_target_against_itself_is_zero() {
    let tmp = tempfile::tempdir().unwrap();
    gen_small(tmp.path());
    let t = tmp.path().join("pr_ssp245");
    let csv_path = tmp.path().join("scores.csv");
    let out = emubench(&[
        "score",
        "--pred",
        t.to_str().unwrap(),
        "--target",
        t.to_str().unwrap(),
        "--out",
        csv_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&csv_path).unwrap();
    let mut rows = 0;
    for line in text.lines().skip(1) {
        let value: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert_eq!(value, 0.0, "{line}");
        rows += 1;
    }
    assert_eq!(rows, 5);
    assert!(tmp.path().join("scores.csv.manifest.json").is_file());
}

#[test]
fn score_rejects_year_range_outside_data() {
    let tmp = tempfile::tempdir().unwrap();
    gen_small(tmp.path());
    let t = tmp.path().join("pr_ssp245");
    let t = t.to_str().unwrap();
    let out = emubench(&["score", "--pred", t, "--target", t, "--years", "1990:2000"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn biasvar_reruns_are_byte_identical_across_worker_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |dir: &str, workers: &str| {
        let out_dir = tmp.path().join(dir);
        let out = emubench(&[
            "--workers",
            workers,
            "run-biasvar",
            "--profile",
            "desk",
            "--draws",
            "4",
            "--n-grid",
            "2,5",
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        out_dir
    };
    let a = run("a", "1");
    let b = run("b", "3");
    for f in ["biasvar.csv", "spectra.csv", "bands.csv", "biasvar.csv.manifest.json", "run-biasvar.config.json"] {
        let (x, y) = (fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
        assert!(!x.is_empty(), "{f} is empty");
        assert_eq!(x, y, "{f} differs between runs");
    }
    let header = fs::read_to_string(a.join("biasvar.csv")).unwrap();
    assert!(header.starts_with("technique,n,bias2,var,mse"));
    let spectra = fs::read_to_string(a.join("spectra.csv")).unwrap();
    assert!(spectra.starts_with("technique,n,period,energy"));
}

#[test]
fn seed_environment_variable_reaches_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_emubench"))
        .args(["run-biasvar", "--draws", "2", "--n-grid", "2", "--out", tmp.path().to_str().unwrap()])
        .env("EMUBENCH_SEED", "4242")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("spectra.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["base_seed"], 4242);
    assert_eq!(m["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(m["config_file"], "run-biasvar.config.json");
}

#[test]
fn lps_sweep_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    gen_small(&data);
    let sweep = |tech: &str, file: &str| {
        let path = tmp.path().join(file);
        let out = emubench(&[
            "run-iv",
            "--dataset",
            data.to_str().unwrap(),
            "--technique",
            tech,
            "--profile",
            "desk",
            "--n-grid",
            "1,2,4",
            "--draws",
            "2",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        path
    };
    let lps = sweep("lps", "lps.csv");
    let text = fs::read_to_string(&lps).unwrap();
    assert!(text.starts_with("technique,metric,n,k,l_or_mean,value"));
    assert!(tmp.path().join("run-iv.config.json").is_file());

    let cmp = tmp.path().join("cmp.csv");
    let out = emubench(&[
        "report",
        "--a",
        lps.to_str().unwrap(),
        "--b",
        lps.to_str().unwrap(),
        "--technique-a",
        "lps",
        "--technique-b",
        "lps",
        "--out",
        cmp.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("slope 0.0000e0"));
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(code(&emubench(&["frobnicate"])), 1);
    assert_eq!(code(&emubench(&["run-biasvar"])), 1);
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().to_str().unwrap();
    assert_eq!(code(&emubench(&["run-biasvar", "--draws", "1", "--out", out_dir])), 1);
    assert_eq!(code(&emubench(&["--workers", "0", "validate", out_dir])), 1);
    assert_eq!(code(&emubench(&["--help"])), 0);
}

#[test]
fn missing_dataset_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope");
    let out = emubench(&["validate", missing.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    let out = emubench(&[
        "run-iv",
        "--dataset",
        missing.to_str().unwrap(),
        "--technique",
        "lps",
        "--out",
        tmp.path().join("x.csv").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
}
