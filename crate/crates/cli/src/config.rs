//! Optional TOML defaults. Keys mirror the long flag names in snake_case.

use std::path::Path;

use serde::Deserialize;

use crate::args::{KernelArg, MethodArg, StandardizeArg};
use crate::UsageError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub method: Option<MethodArg>,
    pub layer: Option<usize>,
    pub k: Option<usize>,
    pub lambda: Option<f64>,
    pub nu: Option<f64>,
    pub kernel: Option<KernelArg>,
    pub gamma: Option<f64>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub standardize: Option<StandardizeArg>,
    pub seed: Option<u64>,
    pub bins: Option<usize>,
    pub temperature: Option<f64>,
    pub n_train: Option<usize>,
    pub n_in: Option<usize>,
    pub n_out: Option<usize>,
    pub layers: Option<usize>,
    pub dim: Option<usize>,
    pub signal_layers: Option<Vec<usize>>,
    pub shift: Option<f64>,
    pub anisotropy: Option<f64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, UsageError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())))
    }
}
