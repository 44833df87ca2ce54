//! Marks and mark distributions.

use std::fmt;
use std::sync::{Arc, OnceLock};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::RngCore;

use crate::error::{Error, Result};
use crate::microbes::MicrobeMark;
use crate::rng::{substream, StreamRole};

/// A point of the mark space.
#[derive(Debug, Clone, PartialEq)]
pub enum Mark {
    /// Discrete label `k` in `0..d`.
    Label(usize),
    /// Real vector of fixed dimension per model.
    Vector(Vec<f64>),
    Microbe(MicrobeMark),
}

impl Mark {
    pub fn label(&self) -> Option<usize> {
        match self {
            Mark::Label(k) => Some(*k),
            _ => None,
        }
    }

    /// Index written to path files; non-label marks have no index.
    pub fn file_index(&self) -> u32 {
        match self {
            Mark::Label(k) => *k as u32,
            _ => u32::MAX,
        }
    }
}

/// Source of marks for continuous mark distributions.
///
/// Implementations must be pure: the mark returned depends only on the state of `rng`.
pub trait MarkSampler: Send + Sync + fmt::Debug {
    fn sample(&self, rng: &mut dyn RngCore) -> Mark;

    /// Exact weighted nodes for integrals of low-degree integrands, if the
    /// sampler knows one. Preferred over Monte Carlo averaging when present.
    fn quadrature(&self) -> Option<Vec<(Mark, f64)>> {
        None
    }
}

pub const DEFAULT_INTEGRATION_SAMPLES: usize = 100_000;
const PROBABILITY_TOLERANCE: f64 = 1e-12;

#[derive(Clone)]
pub struct DiscreteMarks {
    atoms: Vec<(Mark, f64)>,
    index: WeightedIndex<f64>,
}

impl fmt::Debug for DiscreteMarks {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiscreteMarks").field("atoms", &self.atoms).finish()
    }
}

#[derive(Clone)]
pub struct SampledMarks {
    sampler: Arc<dyn MarkSampler>,
    integration_samples: usize,
    seed: u64,
    points: Arc<OnceLock<Vec<(Mark, f64)>>>,
}

impl fmt::Debug for SampledMarks {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SampledMarks")
            .field("sampler", &self.sampler)
            .field("integration_samples", &self.integration_samples)
            .field("seed", &self.seed)
            .finish()
    }
}

/// Law of the marks of one event stream.
#[derive(Debug, Clone)]
pub enum MarkDistribution {
    Discrete(DiscreteMarks),
    Sampled(SampledMarks),
}

impl MarkDistribution {
    /// Finite mark distribution; probabilities must be nonnegative and sum to one.
    pub fn discrete(atoms: Vec<(Mark, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidSpec("discrete mark distribution has no atoms".into()));
        }
        if atoms.iter().any(|(_, p)| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidSpec("mark probabilities must be finite and nonnegative".into()));
        }
        let total: f64 = atoms.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > PROBABILITY_TOLERANCE {
            return Err(Error::InvalidSpec(format!("mark probabilities sum to {total}, not 1")));
        }
        let index = WeightedIndex::new(atoms.iter().map(|(_, p)| *p))
            .map_err(|e| Error::InvalidSpec(format!("mark weights: {e}")))?;
        Ok(MarkDistribution::Discrete(DiscreteMarks { atoms, index }))
    }

    /// Labels `0..weights.len()` with the given probabilities.
    pub fn labels(weights: &[f64]) -> Result<Self> {
        Self::discrete(weights.iter().enumerate().map(|(k, &p)| (Mark::Label(k), p)).collect())
    }

    /// Point mass on label 0 (the unmarked case).
    pub fn single() -> Self {
        Self::labels(&[1.0]).expect("point mass is valid")
    }

    pub fn sampled(sampler: Arc<dyn MarkSampler>, integration_samples: usize, seed: u64) -> Result<Self> {
        if integration_samples == 0 {
            return Err(Error::InvalidSpec("integration sample count must be positive".into()));
        }
        Ok(MarkDistribution::Sampled(SampledMarks {
            sampler,
            integration_samples,
            seed,
            points: Arc::new(OnceLock::new()),
        }))
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, MarkDistribution::Discrete(_))
    }

    /// Atoms of a discrete distribution.
    pub fn atoms(&self) -> Option<&[(Mark, f64)]> {
        match self {
            MarkDistribution::Discrete(d) => Some(&d.atoms),
            MarkDistribution::Sampled(_) => None,
        }
    }

    /// Probability of label `k` (zero for sampled distributions).
    pub fn label_probability(&self, k: usize) -> f64 {
        self.atoms()
            .map(|a| a.iter().filter(|(m, _)| m.label() == Some(k)).map(|(_, p)| p).sum())
            .unwrap_or(0.0)
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> Mark {
        match self {
            MarkDistribution::Discrete(d) => {
                if d.atoms.len() == 1 {
                    d.atoms[0].0.clone()
                } else {
                    d.atoms[d.index.sample(rng)].0.clone()
                }
            }
            MarkDistribution::Sampled(s) => s.sampler.sample(rng),
        }
    }

    /// Weighted points used for every mark integral.
    ///
    /// Discrete distributions return their atoms. Sampled distributions return
    /// the sampler's quadrature when it has one, otherwise `M` draws of weight
    /// `1/M`, draw `i` taken from substream `(seed, i)`.
    pub fn integration_points(&self) -> &[(Mark, f64)] {
        match self {
            MarkDistribution::Discrete(d) => &d.atoms,
            MarkDistribution::Sampled(s) => s.points.get_or_init(|| {
                if let Some(q) = s.sampler.quadrature() {
                    return q;
                }
                let w = 1.0 / s.integration_samples as f64;
                (0..s.integration_samples)
                    .map(|i| {
                        let mut rng = substream(s.seed, i as u64, StreamRole::MarkIntegration);
                        (s.sampler.sample(&mut rng), w)
                    })
                    .collect()
            }),
        }
    }

    /// Monte Carlo points regardless of any quadrature the sampler offers.
    pub fn monte_carlo_points(&self, samples: usize, seed: u64) -> Vec<(Mark, f64)> {
        let w = 1.0 / samples as f64;
        (0..samples)
            .map(|i| {
                let mut rng = substream(seed, i as u64, StreamRole::MarkIntegration);
                (self.sample(&mut rng), w)
            })
            .collect()
    }

    /// `ν(f)`.
    pub fn expect(&self, f: impl Fn(&Mark) -> f64) -> f64 {
        self.integration_points().iter().map(|(m, w)| w * f(m)).sum()
    }
}
