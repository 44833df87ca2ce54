//! Domain model of a marked Hawkes system with homogeneous immigration.
//!
//! A [`ModelSpec`] bundles the immigration rate `λ_I`, the mark laws `ν_I`
//! and `ν_H`, the excitation kernel `φ(t, u)`, a deterministic exogenous rate
//! `μ₀(t)` and an optional shot shape `ψ(t, u)`. The Hawkes intensity is
//!
//! ```text
//! Z(t) = μ₀(t) + Σ_{σ_j < t} φ(t − σ_j, η_j) + Σ_{τ_k < t} φ(t − τ_k, ξ_k)
//! ```
//!
//! with immigration events `(σ_j, η_j)` and Hawkes events `(τ_k, ξ_k)`.

pub mod exogenous;
pub mod kernel;
pub mod marks;
pub mod shot;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use exogenous::{ConstantRate, DecayingRate, Exogenous, WindowRate, ZeroRate};
pub use kernel::{Boxcar, Exponential, Kernel, PerLabel, Power, ZeroKernel};
pub use marks::{Mark, MarkDistribution, MarkSampler, DEFAULT_INTEGRATION_SAMPLES};
pub use shot::{CappedAge, Saturating, ShotShape, UnitJump, Window, ZeroShot};

/// Which stream an event belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Immigration,
    Hawkes,
}

/// Closed form for the mark-averaged kernel `φ_i(t) = ν_i(φ(t, ·))`.
///
/// Models with continuous marks supply one so that resolvent grids do not
/// average the kernel over every integration sample at every grid point.
pub trait MeanKernel: Send + Sync + fmt::Debug {
    fn mean(&self, t: f64, origin: Origin) -> f64;
}

/// Declared moment exponents `α`, `θ₀`, `θ₁`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentParams {
    pub alpha: f64,
    pub theta0: f64,
    pub theta1: f64,
}

impl Default for MomentParams {
    fn default() -> Self {
        Self { alpha: 2.0, theta0: 1.2, theta1: 2.0 }
    }
}

impl MomentParams {
    pub fn check(&self) -> Result<()> {
        let a = self.alpha;
        if !(a > 1.0) {
            return Err(Error::InvalidSpec(format!("alpha = {a} must exceed 1")));
        }
        let theta0_min = a / (2.0 * a - 2.0);
        if !(self.theta0 > theta0_min) {
            return Err(Error::InvalidSpec(format!("theta0 = {} must exceed {theta0_min}", self.theta0)));
        }
        let theta1_min = (2.0 * a - 1.0) / (2.0 * a - 2.0);
        if !(self.theta1 > theta1_min) {
            return Err(Error::InvalidSpec(format!("theta1 = {} must exceed {theta1_min}", self.theta1)));
        }
        Ok(())
    }
}

/// Full description of a marked Hawkes system. Immutable once built.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    lambda_i: f64,
    nu_i: MarkDistribution,
    nu_h: MarkDistribution,
    kernel: Arc<dyn Kernel>,
    mu0: Arc<dyn Exogenous>,
    shot: Option<Arc<dyn ShotShape>>,
    moments: MomentParams,
    mean_kernel: Option<Arc<dyn MeanKernel>>,
}

impl ModelSpec {
    pub fn builder(lambda_i: f64) -> ModelSpecBuilder {
        ModelSpecBuilder {
            lambda_i,
            nu_i: None,
            nu_h: MarkDistribution::single(),
            kernel: Arc::new(ZeroKernel),
            mu0: Arc::new(ZeroRate),
            shot: None,
            moments: MomentParams::default(),
            mean_kernel: None,
        }
    }

    /// Unmarked system with `φ(t) = a·e^{−bt}` and `μ₀ ≡ 0`.
    pub fn exponential(lambda_i: f64, a: f64, b: f64) -> Result<Self> {
        Self::builder(lambda_i).kernel(Arc::new(Exponential { a, b })).build()
    }

    pub fn lambda_i(&self) -> f64 {
        self.lambda_i
    }
    pub fn nu_i(&self) -> &MarkDistribution {
        &self.nu_i
    }
    pub fn nu_h(&self) -> &MarkDistribution {
        &self.nu_h
    }
    pub fn kernel(&self) -> &dyn Kernel {
        self.kernel.as_ref()
    }
    pub fn mu0(&self) -> &dyn Exogenous {
        self.mu0.as_ref()
    }
    pub fn shot(&self) -> Option<&dyn ShotShape> {
        self.shot.as_deref()
    }
    pub fn moments(&self) -> MomentParams {
        self.moments
    }

    pub fn marks(&self, origin: Origin) -> &MarkDistribution {
        match origin {
            Origin::Immigration => &self.nu_i,
            Origin::Hawkes => &self.nu_h,
        }
    }

    /// Same system with a different shot shape.
    pub fn with_shot(&self, shot: Arc<dyn ShotShape>) -> Self {
        Self { shot: Some(shot), ..self.clone() }
    }

    /// Same system with immigration rate scaled by `c`.
    pub fn with_lambda_i(&self, lambda_i: f64) -> Result<Self> {
        if !(lambda_i > 0.0 && lambda_i.is_finite()) {
            return Err(Error::InvalidSpec(format!("lambda_I = {lambda_i} must be positive")));
        }
        Ok(Self { lambda_i, ..self.clone() })
    }

    /// `φ_i(t) = ν_i(φ(t, ·))`.
    pub fn mean_kernel(&self, t: f64, origin: Origin) -> f64 {
        if let Some(mk) = &self.mean_kernel {
            return mk.mean(t, origin);
        }
        self.marks(origin).expect(|u| self.kernel.phi(t, u))
    }

    /// `‖φ_i‖_{L¹} = ν_i(‖φ(·)‖_{L¹})`.
    pub fn kernel_mass(&self, origin: Origin) -> Result<f64> {
        let marks = self.marks(origin);
        let mut total = 0.0;
        for (u, w) in marks.integration_points() {
            let l1 = self.kernel.l1(u);
            if !(l1.is_finite() && l1 >= 0.0) {
                return Err(Error::InvalidKernel(format!("non-finite L1 norm {l1} at mark {u:?}")));
            }
            total += w * l1;
        }
        Ok(total)
    }

    /// Whether `ν_I` and `ν_H` are the same law.
    pub fn marks_coincide(&self) -> bool {
        format!("{:?}", self.nu_i) == format!("{:?}", self.nu_h)
    }

    /// Stable identity of this specification.
    pub fn fingerprint(&self) -> u64 {
        let description = format!(
            "{:?}|{:?}|{:?}|{:?}|{:?}|{:?}|{:?}|{:?}",
            self.lambda_i, self.nu_i, self.nu_h, self.kernel, self.mu0, self.shot, self.moments, self.mean_kernel
        );
        let digest = Sha256::digest(description.as_bytes());
        u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
    }
}

pub struct ModelSpecBuilder {
    lambda_i: f64,
    nu_i: Option<MarkDistribution>,
    nu_h: MarkDistribution,
    kernel: Arc<dyn Kernel>,
    mu0: Arc<dyn Exogenous>,
    shot: Option<Arc<dyn ShotShape>>,
    moments: MomentParams,
    mean_kernel: Option<Arc<dyn MeanKernel>>,
}

impl ModelSpecBuilder {
    pub fn kernel(mut self, kernel: Arc<dyn Kernel>) -> Self {
        self.kernel = kernel;
        self
    }

    /// Sets `ν_H`; `ν_I` follows it unless set explicitly.
    pub fn marks(mut self, nu_h: MarkDistribution) -> Self {
        self.nu_h = nu_h;
        self
    }

    pub fn immigration_marks(mut self, nu_i: MarkDistribution) -> Self {
        self.nu_i = Some(nu_i);
        self
    }

    pub fn mu0(mut self, mu0: Arc<dyn Exogenous>) -> Self {
        self.mu0 = mu0;
        self
    }

    pub fn shot(mut self, shot: Arc<dyn ShotShape>) -> Self {
        self.shot = Some(shot);
        self
    }

    pub fn moments(mut self, moments: MomentParams) -> Self {
        self.moments = moments;
        self
    }

    pub fn mean_kernel(mut self, mean_kernel: Arc<dyn MeanKernel>) -> Self {
        self.mean_kernel = Some(mean_kernel);
        self
    }

    pub fn build(self) -> Result<ModelSpec> {
        if !(self.lambda_i > 0.0 && self.lambda_i.is_finite()) {
            return Err(Error::InvalidSpec(format!("lambda_I = {} must be positive", self.lambda_i)));
        }
        self.moments.check()?;
        if !(self.mu0.sup() >= 0.0) {
            return Err(Error::InvalidSpec("mu0 must be nonnegative".into()));
        }
        Ok(ModelSpec {
            lambda_i: self.lambda_i,
            nu_i: self.nu_i.unwrap_or_else(|| self.nu_h.clone()),
            nu_h: self.nu_h,
            kernel: self.kernel,
            mu0: self.mu0,
            shot: self.shot,
            moments: self.moments,
            mean_kernel: self.mean_kernel,
        })
    }
}

/// `‖φ_H‖_{L¹}`, the mean number of direct offspring per event.
pub fn branching_ratio(spec: &ModelSpec) -> Result<f64> {
    spec.kernel_mass(Origin::Hawkes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    NotApplicable,
}

impl CheckStatus {
    fn from_bool(ok: bool) -> Self {
        if ok {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        }
    }
}

/// Outcome of [`validate`]. Moment checks are evaluated on finite probes only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub branching_ratio: f64,
    pub stability: CheckStatus,
    pub declared_parameters: CheckStatus,
    /// `max_i ν_i(‖φ‖_∞^{2α} + ‖φ‖_{L¹}^{2α})`.
    pub kernel_moment: f64,
    pub kernel_moment_check: CheckStatus,
    /// `max_i sup_t ν_i(|ψ(t,·)|^{2α})` over the probe grid.
    pub shot_moment: Option<f64>,
    pub shot_moment_check: CheckStatus,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        [self.stability, self.declared_parameters, self.kernel_moment_check, self.shot_moment_check]
            .iter()
            .all(|c| *c != CheckStatus::Fail)
    }
}

/// Probe ages for shot-shape checks: `0` plus a log-spaced grid up to `10⁴`.
fn shot_probe_ages() -> Vec<f64> {
    std::iter::once(0.0).chain((0..=60).map(|i| 10f64.powf(-2.0 + i as f64 / 10.0))).collect()
}

/// Checks the verifiable parts of the standing assumptions.
pub fn validate(spec: &ModelSpec) -> ValidationReport {
    let mut warnings = Vec::new();
    let two_alpha = 2.0 * spec.moments.alpha;

    let (branching_ratio, stability) = match branching_ratio(spec) {
        Ok(m) => (m, CheckStatus::from_bool(m < 1.0)),
        Err(e) => {
            warnings.push(format!("branching ratio unavailable: {e}"));
            (f64::NAN, CheckStatus::Fail)
        }
    };

    let declared_parameters = CheckStatus::from_bool(spec.moments.check().is_ok());

    let kernel_moment = [Origin::Hawkes, Origin::Immigration]
        .iter()
        .map(|&o| {
            spec.marks(o)
                .expect(|u| spec.kernel.sup(u).powf(two_alpha) + spec.kernel.l1(u).powf(two_alpha))
        })
        .fold(0.0f64, |acc, v| if v.is_nan() { f64::NAN } else { acc.max(v) });
    let kernel_moment_check = CheckStatus::from_bool(kernel_moment.is_finite());

    let (shot_moment, shot_moment_check) = match spec.shot() {
        None => (None, CheckStatus::NotApplicable),
        Some(shot) => {
            let ages = shot_probe_ages();
            let mut worst = 0.0f64;
            for &o in &[Origin::Hawkes, Origin::Immigration] {
                for &t in &ages {
                    let v = spec.marks(o).expect(|u| shot.psi(t, u).abs().powf(two_alpha));
                    worst = if v.is_nan() { f64::NAN } else { worst.max(v) };
                }
                let far = *ages.last().expect("non-empty probe grid");
                let tail = spec.marks(o).expect(|u| shot.tail(far, u).abs());
                if !(tail < 1e-6) {
                    warnings.push(format!("shot tail at age {far} is {tail}, not yet decayed"));
                }
            }
            (Some(worst), CheckStatus::from_bool(worst.is_finite()))
        }
    };

    let mu0 = spec.mu0();
    if !mu0.lp_norm_pow(1.0).is_finite() {
        warnings.push("mu0 is not integrable; the mean intensity does not settle at the drift level".into());
    }
    if !mu0.lp_norm_pow(two_alpha).is_finite() {
        warnings.push(format!("mu0 has infinite L^{two_alpha} norm"));
    }
    warnings.push("moment conditions are checked on finite probes, not proved".into());

    ValidationReport {
        branching_ratio,
        stability,
        declared_parameters,
        kernel_moment,
        kernel_moment_check,
        shot_moment,
        shot_moment_check,
        warnings,
    }
}
