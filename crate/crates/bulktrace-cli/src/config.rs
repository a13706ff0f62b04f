//! Run configuration, read from a TOML file.
//!
//! ```toml
//! case = "arc_family"
//! p = [2, 3]
//! n = [0, 1, 2]
//! workers = 1
//!
//! [output]
//! csv = "study.csv"
//! vtk_dir = "out"
//! fields = ["u", "m_principal"]
//!
//! [solver]
//! recovery = "auto"
//! batch = 64
//! ```

use std::path::PathBuf;

use bulktrace::assembly::{AssemblyOptions, RecoveryMode};
use bulktrace::mesh::blocks::check_order;
use bulktrace::mesh::BenchmarkId;
use bulktrace::solve::Quantity;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub case: String,
    pub p: Vec<usize>,
    pub n: Vec<usize>,
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub solver: SolverConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    #[serde(default = "dot")]
    pub vtk_dir: PathBuf,
    #[serde(default = "default_fields")]
    pub fields: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Recovery {
    Auto,
    Cache,
    Reassemble,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "auto")]
    pub recovery: Recovery,
    #[serde(default = "batch")]
    pub batch: usize,
}

fn one() -> usize {
    1
}

fn dot() -> PathBuf {
    PathBuf::from(".")
}

fn auto() -> Recovery {
    Recovery::Auto
}

fn batch() -> usize {
    64
}

fn default_fields() -> Vec<String> {
    ["u", "u_norm", "m_principal", "n_real_principal", "shear_q"].iter().map(|s| s.to_string()).collect()
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { csv: None, vtk_dir: dot(), fields: default_fields() }
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { recovery: auto(), batch: batch() }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        let c: RunConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        c.validate()?;
        Ok(c)
    }

    #[cfg(test)]
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn case_id(&self) -> Result<BenchmarkId, String> {
        self.case.parse::<BenchmarkId>().map_err(|e| e.to_string())
    }

    pub fn validate(&self) -> Result<(), String> {
        let id = self.case_id()?;
        if self.p.is_empty() || self.n.is_empty() {
            return Err("`p` and `n` must be nonempty".into());
        }
        for &p in &self.p {
            check_order(id.dim(), p).map_err(|e| e.to_string())?;
        }
        if self.workers == 0 {
            return Err("`workers` must be at least 1".into());
        }
        if self.solver.batch == 0 {
            return Err("`solver.batch` must be at least 1".into());
        }
        self.quantities()?;
        Ok(())
    }

    pub fn quantities(&self) -> Result<Vec<Quantity>, String> {
        self.output
            .fields
            .iter()
            .map(|f| {
                Quantity::all()
                    .into_iter()
                    .find(|q| q.name() == f)
                    .ok_or_else(|| format!("unknown field `{f}`"))
            })
            .collect()
    }

    pub fn assembly(&self) -> AssemblyOptions {
        let recovery = match self.solver.recovery {
            Recovery::Auto => RecoveryMode::Auto,
            Recovery::Cache => RecoveryMode::Cache,
            Recovery::Reassemble => RecoveryMode::Reassemble,
        };
        AssemblyOptions { recovery, batch: self.solver.batch }
    }
}
