//! TOML experiment files.
//!
//! ```toml
//! seed = 7
//!
//! [model]
//! lambda_i = 1.0
//! kernel = { exponential = { a = 0.5, b = 1.0 } }
//! shot = { saturating = { b = 1.0 } }
//!
//! [grid]
//! h = 1e-3
//! horizon = 40.0
//!
//! [experiment]
//! mode = "clt"
//! functional = { kind = "cumulative_intensity" }
//! scales = [500.0]
//! replicas = 10000
//! ```
//!
//! Exactly one of `[model]` and `[microbes]` must be present. Unknown keys are
//! rejected everywhere.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::microbes::{build_model, MicrobeParams};
use crate::model::{
    Boxcar, CappedAge, ConstantRate, DecayingRate, Exogenous, Exponential, Kernel, MarkDistribution, ModelSpec,
    MomentParams, PerLabel, Power, Saturating, ShotShape, UnitJump, Window, WindowRate, ZeroKernel, ZeroRate,
    ZeroShot,
};
use crate::montecarlo::ExperimentConfig;
use crate::resolvent::GridSpec;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    #[default]
    Zero,
    Exponential { a: f64, b: f64 },
    Power { a: f64, b: f64, p: f64 },
    Boxcar { a: f64, y: f64 },
    /// One kernel per discrete mark label.
    PerLabel(Vec<KernelConfig>),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MarksConfig {
    #[default]
    Single,
    /// Label probabilities.
    Labels(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum RateConfig {
    #[default]
    Zero,
    Constant { c: f64 },
    Decaying { c: f64, b: f64 },
    Window { c: f64, y: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ShotConfig {
    Zero,
    UnitJump,
    Saturating { b: f64 },
    Window { y: f64 },
    CappedAge { y: f64 },
}

fn nonneg(name: &str, v: f64) -> Result<f64> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidSpec(format!("{name} = {v} must be finite and non-negative")))
    }
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidSpec(format!("{name} = {v} must be finite and positive")))
    }
}

impl KernelConfig {
    pub fn build(&self) -> Result<Arc<dyn Kernel>> {
        Ok(match *self {
            KernelConfig::Zero => Arc::new(ZeroKernel),
            KernelConfig::Exponential { a, b } => Arc::new(Exponential { a: nonneg("a", a)?, b: positive("b", b)? }),
            KernelConfig::Power { a, b, p } => {
                if !(p > 1.0 && p.is_finite()) {
                    return Err(Error::InvalidKernel(format!("power exponent p = {p} must exceed 1")));
                }
                Arc::new(Power { a: nonneg("a", a)?, b: positive("b", b)?, p })
            }
            KernelConfig::Boxcar { a, y } => Arc::new(Boxcar { a: nonneg("a", a)?, y: positive("y", y)? }),
            KernelConfig::PerLabel(ref ks) => {
                if ks.is_empty() {
                    return Err(Error::InvalidSpec("per_label needs at least one kernel".into()));
                }
                Arc::new(PerLabel { kernels: ks.iter().map(|k| k.build()).collect::<Result<_>>()? })
            }
        })
    }

    fn labels(&self) -> Option<usize> {
        match self {
            KernelConfig::PerLabel(ks) => Some(ks.len()),
            _ => None,
        }
    }
}

impl MarksConfig {
    pub fn build(&self) -> Result<MarkDistribution> {
        match self {
            MarksConfig::Single => Ok(MarkDistribution::single()),
            MarksConfig::Labels(w) => MarkDistribution::labels(w),
        }
    }

    fn labels(&self) -> usize {
        match self {
            MarksConfig::Single => 1,
            MarksConfig::Labels(w) => w.len(),
        }
    }
}

impl RateConfig {
    pub fn build(&self) -> Result<Arc<dyn Exogenous>> {
        Ok(match *self {
            RateConfig::Zero => Arc::new(ZeroRate),
            RateConfig::Constant { c } => Arc::new(ConstantRate { c: nonneg("c", c)? }),
            RateConfig::Decaying { c, b } => Arc::new(DecayingRate { c: nonneg("c", c)?, b: positive("b", b)? }),
            RateConfig::Window { c, y } => Arc::new(WindowRate { c: nonneg("c", c)?, y: positive("y", y)? }),
        })
    }
}

impl ShotConfig {
    pub fn build(&self) -> Result<Arc<dyn ShotShape>> {
        Ok(match *self {
            ShotConfig::Zero => Arc::new(ZeroShot),
            ShotConfig::UnitJump => Arc::new(UnitJump),
            ShotConfig::Saturating { b } => Arc::new(Saturating { b: positive("b", b)? }),
            ShotConfig::Window { y } => Arc::new(Window { y: positive("y", y)? }),
            ShotConfig::CappedAge { y } => Arc::new(CappedAge { y: positive("y", y)? }),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub lambda_i: f64,
    #[serde(default)]
    pub kernel: KernelConfig,
    /// Hawkes marks.
    #[serde(default)]
    pub marks: MarksConfig,
    /// Defaults to the Hawkes marks.
    #[serde(default)]
    pub immigration_marks: Option<MarksConfig>,
    #[serde(default)]
    pub mu0: RateConfig,
    #[serde(default)]
    pub shot: Option<ShotConfig>,
    #[serde(default)]
    pub moments: Option<MomentParams>,
}

impl ModelConfig {
    pub fn build(&self) -> Result<ModelSpec> {
        if let Some(n) = self.kernel.labels() {
            let marks = [Some(&self.marks), self.immigration_marks.as_ref()];
            if let Some(m) = marks.into_iter().flatten().find(|m| m.labels() > n) {
                return Err(Error::InvalidSpec(format!(
                    "{} mark labels but only {n} per-label kernels",
                    m.labels()
                )));
            }
        }
        let mut b = ModelSpec::builder(self.lambda_i)
            .kernel(self.kernel.build()?)
            .marks(self.marks.build()?)
            .mu0(self.mu0.build()?);
        if let Some(m) = &self.immigration_marks {
            b = b.immigration_marks(m.build()?);
        }
        if let Some(s) = &self.shot {
            b = b.shot(s.build()?);
        }
        if let Some(m) = self.moments {
            b = b.moments(m);
        }
        b.build()
    }
}

/// Missing entries are chosen from the model.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub h: Option<f64>,
    pub horizon: Option<f64>,
}

impl GridConfig {
    pub fn resolve(&self, spec: &ModelSpec) -> Result<GridSpec> {
        let auto = match (self.h, self.horizon) {
            (Some(h), Some(horizon)) => GridSpec { h, horizon },
            _ => GridSpec::auto(spec)?,
        };
        let g = GridSpec { h: self.h.unwrap_or(auto.h), horizon: self.horizon.unwrap_or(auto.horizon) };
        positive("grid.h", g.h)?;
        positive("grid.horizon", g.horizon)?;
        if g.h >= g.horizon {
            return Err(Error::Config(format!("grid.h = {} must be below grid.horizon = {}", g.h, g.horizon)));
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathFormat {
    Csv,
    Binary,
    #[default]
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub horizon: f64,
    #[serde(default = "one")]
    pub replicas: usize,
    #[serde(default)]
    pub format: PathFormat,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub seed: u64,
    pub model: Option<ModelConfig>,
    pub microbes: Option<MicrobeParams>,
    #[serde(default)]
    pub grid: GridConfig,
    pub experiment: Option<ExperimentConfig>,
    pub simulate: Option<SimulateConfig>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let c: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.check()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Structural checks that need no numerics.
    pub fn check(&self) -> Result<()> {
        match (&self.model, &self.microbes) {
            (Some(_), Some(_)) => return Err(Error::Config("give either [model] or [microbes], not both".into())),
            (None, None) => return Err(Error::Config("missing [model] or [microbes] block".into())),
            _ => {}
        }
        if let Some(m) = &self.microbes {
            m.check()?;
        }
        if let Some(s) = &self.simulate {
            positive("simulate.horizon", s.horizon)?;
            if s.replicas == 0 {
                return Err(Error::Config("simulate.replicas must be at least 1".into()));
            }
        }
        if let Some(e) = &self.experiment {
            e.check()?;
        }
        Ok(())
    }

    pub fn spec(&self) -> Result<ModelSpec> {
        match (&self.model, &self.microbes) {
            (Some(m), None) => m.build(),
            (None, Some(p)) => build_model(p),
            _ => Err(Error::Config("give exactly one of [model] and [microbes]".into())),
        }
    }

    /// The experiment block with the effective seed filled in.
    pub fn experiment(&self, seed: u64) -> Result<ExperimentConfig> {
        let mut e = self.experiment.clone().ok_or_else(|| Error::Config("missing [experiment] block".into()))?;
        e.seed = seed;
        Ok(e)
    }
}
