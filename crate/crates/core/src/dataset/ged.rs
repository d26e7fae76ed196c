//! GED v1: a directory holding `manifest.json` and one raw little-endian
//! `f64` payload per array, row-major.
//!
//! ```text
//! <dir>/manifest.json
//! <dir>/values.f64            [member][year][lat][lon]
//! <dir>/channel_<name>.f64    [year] or [year][lat][lon]
//! ```

use super::{Channel, ChannelData, GriddedEnsemble, ScenarioInputs};
use crate::error::{Error, Result};
use ndarray::{Array3, Array4};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::Path;

pub const GED_SCHEMA_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";
const VALUES_FILE: &str = "values.f64";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayloadInfo {
    pub file: String,
    pub shape: Vec<usize>,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelInfo {
    pub name: String,
    pub units: String,
    /// `"global"` or `"gridded"`.
    pub kind: String,
    #[serde(flatten)]
    pub payload: PayloadInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GedManifest {
    pub schema_version: u32,
    pub variable: String,
    pub units: String,
    pub scenario: String,
    pub years: Vec<i32>,
    pub lats: Vec<f64>,
    pub lons: Vec<f64>,
    pub n_members: usize,
    pub byte_order: String,
    pub dtype: String,
    pub values: PayloadInfo,
    pub channels: Vec<ChannelInfo>,
}

fn encode(values: impl Iterator<Item = f64>, len: usize) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(len * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_payload(dir: &Path, file: &str, shape: Vec<usize>, values: impl Iterator<Item = f64>) -> Result<PayloadInfo> {
    let len = shape.iter().product();
    let bytes = encode(values, len);
    fs::write(dir.join(file), &bytes)?;
    Ok(PayloadInfo { file: file.to_string(), shape, sha256: sha256_hex(&bytes) })
}

/// Writes an ensemble and its scenario inputs as a GED v1 directory.
pub fn save_ged(dir: impl AsRef<Path>, ens: &GriddedEnsemble, inputs: &ScenarioInputs) -> Result<GedManifest> {
    let dir = dir.as_ref();
    ens.validate()?;
    inputs.validate(Some(ens.grid_shape()))?;
    if inputs.years != ens.years {
        return Err(Error::Shape("inputs and ensemble cover different years".into()));
    }
    fs::create_dir_all(dir)?;
    let values = write_payload(dir, VALUES_FILE, ens.values.shape().to_vec(), ens.values.iter().copied())?;
    let mut channels = Vec::with_capacity(inputs.channels.len());
    for c in &inputs.channels {
        let file = format!("channel_{}.f64", c.name);
        let (kind, payload) = match &c.data {
            ChannelData::Global(v) => ("global", write_payload(dir, &file, vec![v.len()], v.iter().copied())?),
            ChannelData::Gridded(a) => ("gridded", write_payload(dir, &file, a.shape().to_vec(), a.iter().copied())?),
        };
        channels.push(ChannelInfo { name: c.name.clone(), units: c.units.clone(), kind: kind.into(), payload });
    }
    let manifest = GedManifest {
        schema_version: GED_SCHEMA_VERSION,
        variable: ens.variable.clone(),
        units: ens.units.clone(),
        scenario: ens.scenario.clone(),
        years: ens.years.clone(),
        lats: ens.lats.clone(),
        lons: ens.lons.clone(),
        n_members: ens.n_members(),
        byte_order: "little-endian".into(),
        dtype: "f64".into(),
        values,
        channels,
    };
    fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

fn read_payload(dir: &Path, info: &PayloadInfo) -> Result<Vec<f64>> {
    let bytes = fs::read(dir.join(&info.file))?;
    let expected = info.shape.iter().product::<usize>() * 8;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "{}: payload has {} bytes, manifest shape {:?} requires {}",
            info.file,
            bytes.len(),
            info.shape,
            expected
        )));
    }
    if !info.sha256.is_empty() && sha256_hex(&bytes) != info.sha256 {
        return Err(Error::Format(format!("{}: checksum mismatch", info.file)));
    }
    let values: Vec<f64> =
        bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Format(format!("{}: non-finite values", info.file)));
    }
    Ok(values)
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<GedManifest> {
    let text = fs::read_to_string(dir.as_ref().join(MANIFEST))?;
    let m: GedManifest = serde_json::from_str(&text)?;
    if m.schema_version != GED_SCHEMA_VERSION {
        return Err(Error::Format(format!(
            "unsupported GED schema version {} (expected {GED_SCHEMA_VERSION})",
            m.schema_version
        )));
    }
    if m.byte_order != "little-endian" || m.dtype != "f64" {
        return Err(Error::Format(format!("unsupported encoding {} / {}", m.byte_order, m.dtype)));
    }
    Ok(m)
}

/// Reads a GED v1 directory.
pub fn load_ged(dir: impl AsRef<Path>) -> Result<(GriddedEnsemble, ScenarioInputs)> {
    let dir = dir.as_ref();
    let m = read_manifest(dir)?;
    let dims = [m.n_members, m.years.len(), m.lats.len(), m.lons.len()];
    if m.values.shape != dims {
        return Err(Error::Format(format!("values shape {:?} disagrees with axes {:?}", m.values.shape, dims)));
    }
    let values =
        Array4::from_shape_vec(dims, read_payload(dir, &m.values)?).map_err(|e| Error::Format(e.to_string()))?;
    let ens = GriddedEnsemble::new(values, m.variable, m.units, m.scenario.clone(), m.years.clone(), m.lats, m.lons)?;

    let mut channels = Vec::with_capacity(m.channels.len());
    for c in &m.channels {
        let raw = read_payload(dir, &c.payload)?;
        let data = match c.kind.as_str() {
            "global" => ChannelData::Global(raw),
            "gridded" => {
                let s = &c.payload.shape;
                if s.len() != 3 {
                    return Err(Error::Format(format!("gridded channel `{}` must be 3-D", c.name)));
                }
                ChannelData::Gridded(
                    Array3::from_shape_vec((s[0], s[1], s[2]), raw).map_err(|e| Error::Format(e.to_string()))?,
                )
            }
            other => return Err(Error::Format(format!("unknown channel kind `{other}`"))),
        };
        channels.push(Channel { name: c.name.clone(), units: c.units.clone(), data });
    }
    let inputs = ScenarioInputs { scenario: m.scenario, years: m.years, channels };
    inputs.validate(Some(ens.grid_shape()))?;
    Ok((ens, inputs))
}

/// Recomputes payload checksums and compares them with the manifest.
/// Returns `(file, sha256, matches)` per payload.
pub fn payload_checksums(dir: impl AsRef<Path>) -> Result<Vec<(String, String, bool)>> {
    let dir = dir.as_ref();
    let m = read_manifest(dir)?;
    std::iter::once(&m.values)
        .chain(m.channels.iter().map(|c| &c.payload))
        .map(|p| {
            let sum = sha256_hex(&fs::read(dir.join(&p.file))?);
            let ok = sum == p.sha256;
            Ok((p.file.clone(), sum, ok))
        })
        .collect()
}
