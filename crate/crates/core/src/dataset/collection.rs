//! A directory of GED v1 datasets indexed by `collection.json`.

use super::{load_ged, save_ged, GriddedEnsemble, ScenarioInputs, SplitSpec};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

pub const COLLECTION_FILE: &str = "collection.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryRole {
    /// Multi-member ensemble.
    Ensemble,
    /// Single-member noise-free forced signal.
    Forced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectionEntry {
    pub variable: String,
    pub scenario: String,
    pub role: EntryRole,
    /// Relative to the collection root.
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Collection {
    #[serde(skip)]
    pub root: PathBuf,
    pub split: SplitSpec,
    /// Variable whose global mean feeds the pattern-scaling first stage.
    pub temperature_variable: String,
    /// Scenario prepended to every other scenario when building input
    /// windows, if any.
    #[serde(default)]
    pub history_scenario: Option<String>,
    pub entries: Vec<CollectionEntry>,
}

impl Collection {
    pub fn new(root: impl Into<PathBuf>, split: SplitSpec, temperature_variable: impl Into<String>) -> Self {
        Self {
            root: root.into(),
            split,
            temperature_variable: temperature_variable.into(),
            history_scenario: None,
            entries: Vec::new(),
        }
    }

    /// Saves one dataset under the root and records it in the index.
    pub fn add(&mut self, role: EntryRole, ens: &GriddedEnsemble, inputs: &ScenarioInputs) -> Result<PathBuf> {
        let prefix = match role {
            EntryRole::Ensemble => "",
            EntryRole::Forced => "forced_",
        };
        let rel = format!("{prefix}{}_{}", ens.variable, ens.scenario);
        let path = self.root.join(&rel);
        save_ged(&path, ens, inputs)?;
        self.entries.retain(|e| !(e.variable == ens.variable && e.scenario == ens.scenario && e.role == role));
        self.entries.push(CollectionEntry {
            variable: ens.variable.clone(),
            scenario: ens.scenario.clone(),
            role,
            path: rel,
        });
        Ok(path)
    }

    pub fn write_index(&self) -> Result<()> {
        fs::create_dir_all(&self.root)?;
        fs::write(self.root.join(COLLECTION_FILE), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref();
        let text = fs::read_to_string(root.join(COLLECTION_FILE))?;
        let mut c: Collection = serde_json::from_str(&text)?;
        c.root = root.to_path_buf();
        Ok(c)
    }

    pub fn entry(&self, variable: &str, scenario: &str, role: EntryRole) -> Result<&CollectionEntry> {
        self.entries
            .iter()
            .find(|e| e.variable == variable && e.scenario == scenario && e.role == role)
            .ok_or_else(|| Error::Format(format!("collection has no {role:?} entry for {variable}/{scenario}")))
    }

    pub fn load(&self, variable: &str, scenario: &str, role: EntryRole) -> Result<(GriddedEnsemble, ScenarioInputs)> {
        load_ged(self.root.join(&self.entry(variable, scenario, role)?.path))
    }

    pub fn variables(&self) -> Vec<String> {
        let mut v: Vec<String> = self.entries.iter().map(|e| e.variable.clone()).collect();
        v.sort();
        v.dedup();
        v
    }

    pub fn paths(&self) -> impl Iterator<Item = PathBuf> + '_ {
        self.entries.iter().map(|e| self.root.join(&e.path))
    }
}
