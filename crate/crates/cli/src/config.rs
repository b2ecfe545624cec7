//! Run configuration: a TOML file plus command-line overrides.

use std::path::{Path, PathBuf};

use extreme_bma::bma::{BmaConfig, FutureVariance, MspSettings, TermSetMode};
use extreme_bma::msp::{DependenceKind, DistanceMode};
use extreme_bma::optimize::OptimizerConfig;
use extreme_bma::sim::EnsembleConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PipelineChoice {
    GevBma,
    MspBma,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorName {
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Priors {
    Named(PriorName),
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub sites: Option<PathBuf>,
    /// Single dataset for `fit` and `diagnose`; the reanalysis if absent.
    pub dataset: Option<PathBuf>,
    pub reanalysis: Option<PathBuf>,
    pub historical: Vec<PathBuf>,
    pub future: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub boot: usize,
    pub periods: Vec<f64>,
    pub pipeline: PipelineChoice,
    pub characterization: DependenceKind,
    pub term_mode: TermSetMode,
    pub priors: Priors,
    pub distance: DistanceMode,
    pub future_variance: FutureVariance,
    /// Group-wise maxima simulations for the QQ diagnostic.
    pub qq_simulations: usize,
    pub output: PathBuf,
    pub data: DataPaths,
    pub optimizer: OptimizerConfig,
    pub replicate_optimizer: OptimizerConfig,
    pub simulate: EnsembleConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let msp = MspSettings::default();
        RunConfig {
            seed: 0,
            boot: 500,
            periods: vec![20.0, 50.0],
            pipeline: PipelineChoice::Both,
            characterization: msp.kind,
            term_mode: msp.term_mode,
            priors: Priors::Named(PriorName::Uniform),
            distance: DistanceMode::Normalized,
            future_variance: FutureVariance::Bootstrap,
            qq_simulations: 200,
            output: PathBuf::from("out"),
            data: DataPaths::default(),
            optimizer: msp.optimizer,
            replicate_optimizer: msp.replicate_optimizer,
            simulate: EnsembleConfig::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub boot: Option<usize>,
    pub periods: Vec<f64>,
    pub output: Option<PathBuf>,
}

impl RunConfig {
    /// Parses a config file; relative data and output paths are resolved
    /// against the file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output);
        let d = &mut self.data;
        d.sites.iter_mut().chain(d.dataset.iter_mut()).chain(d.reanalysis.iter_mut()).for_each(fix);
        d.historical.iter_mut().chain(d.future.iter_mut()).for_each(fix);
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(b) = o.boot {
            self.boot = b;
        }
        if !o.periods.is_empty() {
            self.periods = o.periods.clone();
        }
        if let Some(out) = &o.output {
            self.output = out.clone();
        }
    }

    /// Checks every field that does not depend on the data.
    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.periods.is_empty() || self.periods.iter().any(|t| !(t.is_finite() && *t > 1.0)) {
            return bad(format!("return periods must be finite and greater than 1, got {:?}", self.periods));
        }
        if self.boot < 1 {
            return bad("boot must be at least 1".into());
        }
        if self.qq_simulations < 1 {
            return bad("qq_simulations must be at least 1".into());
        }
        if self.distance != DistanceMode::Normalized {
            return bad("only the 'normalized' distance mode is supported for fitting".into());
        }
        if let Priors::Explicit(p) = &self.priors {
            if p.iter().any(|v| !(*v >= 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return bad("explicit priors must be nonnegative and sum to 1".into());
            }
        }
        for (name, o) in [("optimizer", &self.optimizer), ("replicate_optimizer", &self.replicate_optimizer)] {
            o.validate(2).map_err(|e| CliError::Config(format!("{name}: {e}")))?;
        }
        self.simulate.validate().map_err(|e| CliError::Config(format!("simulate: {e}")))?;
        Ok(())
    }

    pub fn bma_config(&self) -> BmaConfig {
        BmaConfig {
            periods: self.periods.clone(),
            b: self.boot,
            seed: self.seed,
            priors: match &self.priors {
                Priors::Named(PriorName::Uniform) => None,
                Priors::Explicit(p) => Some(p.clone()),
            },
            future_variance: self.future_variance,
            msp: self.msp_settings(),
        }
    }

    pub fn msp_settings(&self) -> MspSettings {
        MspSettings {
            kind: self.characterization,
            term_mode: self.term_mode,
            optimizer: OptimizerConfig { seed: self.seed, ..self.optimizer },
            replicate_optimizer: self.replicate_optimizer,
        }
    }

    /// `# `-prefixed TOML rendering of the resolved config.
    pub fn header(&self, command: &str) -> String {
        let body = toml::to_string(self).expect("config serializes");
        let mut out = format!("# extreme-bma {command}\n");
        for line in body.lines() {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
        out
    }
}

pub fn require<'a>(p: &'a Option<PathBuf>, what: &str) -> CliResult<&'a Path> {
    p.as_deref().ok_or_else(|| CliError::Config(format!("data.{what} is required for this command")))
}
