//! Flat `key = value` configuration.
//!
//! One assignment per line; `#` starts a comment. Every key names a field of
//! the scene generator, the problem or the solver. Later sources (command-line
//! overrides) replace earlier ones.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use spsu_core::{Constraint, Variant};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub height: usize,
    pub width: usize,
    pub regions: usize,
    pub bands: usize,
    /// Endmember matrix (`bands x r1`, CSV or SPSU-BIN) replacing the procedural library.
    pub endmember_file: Option<PathBuf>,
    pub r1: usize,
    pub psi_mix: f64,
    pub potts_beta: f64,
    pub potts_sweeps: usize,
    pub patch: usize,
    pub method: Variant,
    pub r2: usize,
    pub k: usize,
    pub lambda0: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda_z: f64,
    pub constraint: Constraint,
    pub alpha: f64,
    pub rel_tol: f64,
    pub max_iters: usize,
    pub trace_every: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            height: 64,
            width: 64,
            regions: 2,
            bands: 100,
            endmember_file: None,
            r1: 4,
            psi_mix: 0.3,
            potts_beta: 1.0,
            potts_sweeps: 200,
            patch: 11,
            method: Variant::Sp2u,
            r2: 20,
            k: 30,
            lambda0: 1.0,
            lambda1: 1.0,
            lambda2: 1.0,
            lambda_z: 0.1,
            constraint: Constraint::AbundanceSimplex,
            alpha: 2.0,
            rel_tol: 1e-4,
            max_iters: 10_000,
            trace_every: 0,
            seed: 0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> CliResult<T>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| CliError::usage(format!("invalid value `{value}` for `{key}`: {e}")))
}

impl RunConfig {
    pub const KEYS: [&'static str; 23] = [
        "height",
        "width",
        "regions",
        "bands",
        "endmember_file",
        "r1",
        "psi_mix",
        "potts_beta",
        "potts_sweeps",
        "patch",
        "method",
        "r2",
        "k",
        "lambda0",
        "lambda1",
        "lambda2",
        "lambda_z",
        "constraint",
        "alpha",
        "rel_tol",
        "max_iters",
        "trace_every",
        "seed",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        let v = value.trim();
        match key.trim() {
            "height" => self.height = parse(key, v)?,
            "width" => self.width = parse(key, v)?,
            "regions" => self.regions = parse(key, v)?,
            "bands" => self.bands = parse(key, v)?,
            "endmember_file" => self.endmember_file = (!v.is_empty()).then(|| PathBuf::from(v)),
            "r1" => self.r1 = parse(key, v)?,
            "psi_mix" => self.psi_mix = parse(key, v)?,
            "potts_beta" => self.potts_beta = parse(key, v)?,
            "potts_sweeps" => self.potts_sweeps = parse(key, v)?,
            "patch" => self.patch = parse(key, v)?,
            "method" => self.method = parse(key, v)?,
            "r2" => self.r2 = parse(key, v)?,
            "k" => self.k = parse(key, v)?,
            "lambda0" => self.lambda0 = parse(key, v)?,
            "lambda1" => self.lambda1 = parse(key, v)?,
            "lambda2" => self.lambda2 = parse(key, v)?,
            "lambda_z" => self.lambda_z = parse(key, v)?,
            "constraint" => self.constraint = parse(key, v)?,
            "alpha" => self.alpha = parse(key, v)?,
            "rel_tol" => self.rel_tol = parse(key, v)?,
            "max_iters" => self.max_iters = parse(key, v)?,
            "trace_every" => self.trace_every = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            other => return Err(CliError::usage(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "height" => self.height.to_string(),
            "width" => self.width.to_string(),
            "regions" => self.regions.to_string(),
            "bands" => self.bands.to_string(),
            "endmember_file" => self
                .endmember_file
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
            "r1" => self.r1.to_string(),
            "psi_mix" => self.psi_mix.to_string(),
            "potts_beta" => self.potts_beta.to_string(),
            "potts_sweeps" => self.potts_sweeps.to_string(),
            "patch" => self.patch.to_string(),
            "method" => self.method.to_string(),
            "r2" => self.r2.to_string(),
            "k" => self.k.to_string(),
            "lambda0" => self.lambda0.to_string(),
            "lambda1" => self.lambda1.to_string(),
            "lambda2" => self.lambda2.to_string(),
            "lambda_z" => self.lambda_z.to_string(),
            "constraint" => self.constraint.to_string(),
            "alpha" => self.alpha.to_string(),
            "rel_tol" => self.rel_tol.to_string(),
            "max_iters" => self.max_iters.to_string(),
            "trace_every" => self.trace_every.to_string(),
            "seed" => self.seed.to_string(),
            _ => return None,
        })
    }

    /// Applies every assignment in `text`. A key may appear only once.
    pub fn apply_text(&mut self, text: &str) -> CliResult<()> {
        let mut seen = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::usage(format!("line {}: expected `key = value`, got `{line}`", n + 1))
            })?;
            let key = key.trim();
            if seen.contains(&key) {
                return Err(CliError::usage(format!("line {}: duplicate key `{key}`", n + 1)));
            }
            seen.push(key);
            self.set(key, value)
                .map_err(|e| CliError::usage(format!("line {}: {}", n + 1, e.message)))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text).map_err(|e| e.context(path))?;
        Ok(cfg)
    }

    /// Applies a `key=value` override from the command line.
    pub fn apply_override(&mut self, assignment: &str) -> CliResult<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("override `{assignment}` is not key=value")))?;
        self.set(key, value)
    }

    /// Every key with its current value, in [`RunConfig::KEYS`] order.
    pub fn pairs(&self) -> Vec<(String, String)> {
        Self::KEYS
            .iter()
            .map(|k| (k.to_string(), self.get(k).expect("listed key")))
            .collect()
    }

    pub fn to_text(&self) -> String {
        self.pairs()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}
