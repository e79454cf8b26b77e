//! TOML run configuration with `[kernel]`, `[problem]`, `[optimizer]`,
//! `[output]` and an optional `[verify]` table. Unknown keys are errors.
//! Relative paths are resolved against the directory of the config file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::kernel::{Coefficients, KernelClass, KernelSpec};
use crate::linsolve::SolverKind;
use crate::mesh::RegionTags;
use crate::optimizer::{DataSource, MeshSource, RunConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelPreset {
    Gamma1,
    Gamma2,
    /// Everything given explicitly: `class`, `coefficients` and `normalizer`.
    Custom,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelTable {
    pub preset: KernelPreset,
    pub delta: f64,
    pub s: Option<f64>,
    pub class: Option<KernelClass>,
    pub normalizer: Option<f64>,
    pub coefficients: Option<Coefficients>,
}

impl KernelTable {
    pub fn spec(&self) -> Result<KernelSpec> {
        let s = self.s.unwrap_or(0.5);
        let mut spec = match self.preset {
            KernelPreset::Gamma1 => KernelSpec::gamma1(self.delta),
            KernelPreset::Gamma2 => KernelSpec::gamma2(self.delta, s),
            KernelPreset::Custom => {
                let (Some(class), Some(coeff), Some(normalizer)) = (self.class, self.coefficients, self.normalizer)
                else {
                    return Err(Error::Config("custom kernels need class, coefficients and normalizer".into()));
                };
                KernelSpec { class, delta: self.delta, s, coeff, normalizer }
            }
        };
        if self.preset != KernelPreset::Custom {
            if let Some(class) = self.class {
                if class != spec.class {
                    return Err(Error::Config("kernel class conflicts with the preset".into()));
                }
            }
            if let Some(c) = self.coefficients {
                spec.coeff = c;
            }
            if let Some(n) = self.normalizer {
                spec.normalizer = n;
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemTable {
    pub nu: f64,
    /// Constant forcing on Ω₁ and Ω₂.
    pub forcing: [f64; 2],
    pub initial_mesh: MeshSource,
    /// Mesh carrying the target interface; ū is computed on it.
    pub target_mesh: Option<MeshSource>,
    /// Previously generated ū; used instead of `target_mesh`.
    pub data_file: Option<PathBuf>,
    /// Coefficients of a quadratic ū: 1, x₁, x₂, x₁², x₁x₂, x₂².
    pub data_quadratic: Option<[f64; 6]>,
    #[serde(default)]
    pub tags: RegionTags,
}

fn default_maxiter() -> usize {
    50
}

fn default_tol() -> f64 {
    5e-5
}

fn default_halvings() -> usize {
    5
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerTable {
    pub epsilon: f64,
    #[serde(default = "default_maxiter")]
    pub maxiter: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_halvings")]
    pub max_halvings: usize,
    #[serde(default)]
    pub solver: SolverKind,
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputTable {
    pub dir: PathBuf,
    #[serde(default = "default_true")]
    pub snapshots: bool,
}

fn default_ts() -> Vec<f64> {
    vec![1e-2, 1e-3, 1e-4]
}

fn default_fields() -> usize {
    3
}

/// Parameters of the verification suites.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyTable {
    #[serde(default = "default_ts")]
    pub t: Vec<f64>,
    #[serde(default = "default_fields")]
    pub fields: usize,
    #[serde(default)]
    pub seed: u64,
    /// Relative tolerance of the first-derivative check.
    pub tol_first: Option<f64>,
}

impl Default for VerifyTable {
    fn default() -> Self {
        VerifyTable { t: default_ts(), fields: default_fields(), seed: 0, tol_first: None }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub kernel: KernelTable,
    pub problem: ProblemTable,
    pub optimizer: OptimizerTable,
    pub output: OutputTable,
    #[serde(default)]
    pub verify: VerifyTable,
}

impl ConfigFile {
    /// Parse TOML text; errors carry the line and column of the offending key.
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    /// Make relative paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let MeshSource::File { path, .. } = &mut self.problem.initial_mesh {
            fix(path);
        }
        if let Some(MeshSource::File { path, .. }) = &mut self.problem.target_mesh {
            fix(path);
        }
        if let Some(p) = &mut self.problem.data_file {
            fix(p);
        }
        fix(&mut self.output.dir);
    }

    /// Apply region tags from `[problem]` to file mesh sources that use the defaults.
    fn tagged(&self, source: &MeshSource) -> MeshSource {
        match source {
            MeshSource::File { path, tags } if *tags == RegionTags::default() => {
                MeshSource::File { path: path.clone(), tags: self.problem.tags.clone() }
            }
            other => other.clone(),
        }
    }

    pub fn run_config(&self) -> Result<RunConfig> {
        let p = &self.problem;
        let data = match (&p.target_mesh, &p.data_file, p.data_quadratic) {
            (Some(t), None, None) => DataSource::Target(self.tagged(t)),
            (None, Some(path), None) => DataSource::File { path: path.clone(), tags: p.tags.clone() },
            (None, None, Some(c)) => DataSource::Quadratic(c),
            _ => {
                return Err(Error::Config(
                    "[problem] needs exactly one of target_mesh, data_file and data_quadratic".into(),
                ))
            }
        };
        let cfg = RunConfig {
            kernel: self.kernel.spec()?,
            nu: self.problem.nu,
            epsilon: self.optimizer.epsilon,
            maxiter: self.optimizer.maxiter,
            tol: self.optimizer.tol,
            max_halvings: self.optimizer.max_halvings,
            forcing: self.problem.forcing,
            initial_mesh: self.tagged(&self.problem.initial_mesh),
            data,
            solver: self.optimizer.solver,
            output_dir: Some(self.output.dir.clone()),
            snapshots: self.output.snapshots,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[kernel]
preset = "gamma1"
delta = 0.1

[problem]
nu = 2e-3
forcing = [10.0, -10.0]
initial_mesh = { generated = { cells = 10, collar_cells = 1, shape = { kind = "square", center = [0.5, 0.5], half_width = 0.2 } } }
target_mesh = { generated = { cells = 10, collar_cells = 1, shape = { kind = "circle", center = [0.5, 0.5], radius = 0.25 } } }

[optimizer]
epsilon = 0.3

[output]
dir = "out"
"#;

    #[test]
    fn parses_defaults() {
        let cfg = ConfigFile::parse(BASE).unwrap();
        let run = cfg.run_config().unwrap();
        assert_eq!(run.maxiter, 50);
        assert_eq!(run.tol, 5e-5);
        assert_eq!(run.max_halvings, 5);
        assert_eq!(run.kernel, KernelSpec::gamma1(0.1));
    }

    #[test]
    fn unknown_key_is_rejected_with_position() {
        let text = BASE.replace("epsilon = 0.3", "epsilon = 0.3\nepsilonn = 1.0");
        let msg = ConfigFile::parse(&text).unwrap_err().to_string();
        assert!(msg.contains("epsilonn") && msg.contains("line"), "{msg}");
    }

    #[test]
    fn invariants_are_enforced() {
        for (from, to) in [("epsilon = 0.3", "epsilon = 0.0"), ("nu = 2e-3", "nu = -1.0")] {
            let cfg = ConfigFile::parse(&BASE.replace(from, to)).unwrap();
            assert!(matches!(cfg.run_config(), Err(Error::Config(_))));
        }
        let text = BASE.replace(
            "delta = 0.1",
            "delta = 0.1\ncoefficients = { o11 = -1.0, o12 = 1.0, o21 = 1.0, o22 = 1.0, o1i = 1.0, o2i = 1.0 }",
        );
        assert!(matches!(ConfigFile::parse(&text).unwrap().run_config(), Err(Error::Kernel(_))));
    }
}
