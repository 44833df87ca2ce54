//! Budding microbes in a host.
//!
//! Each event is a budding (Hawkes) or an invasion (immigration) that adds `k`
//! microbes with life-lengths `y_1..y_k`. A microbe of age `t` buds at rate
//! `γ_i(t, y)` and has released `𝚃(t, y)` toxins so far, so a mark
//! `u = (i, k, y, 𝚃)` excites with `φ(t, u) = Σ_j γ_i(t, y_j)` and contributes
//! `ψ(t, u) = Σ_j 𝚃_j(t, y_j)` to the cumulative toxin load.

use std::sync::Arc;

use gauss_quad::{GaussLaguerre, GaussLegendre};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::RngCore;
use rand_distr::{Exp, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    Exogenous, Kernel, Mark, MarkDistribution, MarkSampler, MeanKernel, ModelSpec, MomentParams, Origin, ShotShape,
    ZeroRate, DEFAULT_INTEGRATION_SAMPLES,
};

/// Cumulative toxin release `𝚃(t, y)` of one microbe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Toxin {
    /// `𝚃 ≡ 1`: every microbe counts once.
    UnitCount,
    /// `𝚃(t, y) = t ∧ y`: time alive.
    PopulationIntegral,
    /// `𝚃(t, y) = ρ·(t ∧ y)`.
    Rate { rho: f64 },
    /// `𝚃(t, y) = ϑ·1{t >= y}`: release on death.
    DeathRelease { theta: f64 },
}

impl Toxin {
    pub fn value(&self, t: f64, y: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        match *self {
            Toxin::UnitCount => 1.0,
            Toxin::PopulationIntegral => t.min(y),
            Toxin::Rate { rho } => rho * t.min(y),
            Toxin::DeathRelease { theta } => {
                if t >= y {
                    theta
                } else {
                    0.0
                }
            }
        }
    }

    /// `𝚃(y, y)`.
    pub fn total(&self, y: f64) -> f64 {
        self.value(y, y)
    }

    fn check(&self) -> Result<()> {
        let ok = match *self {
            Toxin::Rate { rho } => rho.is_finite() && rho >= 0.0,
            Toxin::DeathRelease { theta } => theta.is_finite() && theta >= 0.0,
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("toxin {self:?} needs a finite nonnegative parameter")))
        }
    }

    /// `𝚃(y, y) = a + b·y` as `(a, b)`.
    fn total_affine(&self) -> (f64, f64) {
        match *self {
            Toxin::UnitCount => (1.0, 0.0),
            Toxin::PopulationIntegral => (0.0, 1.0),
            Toxin::Rate { rho } => (0.0, rho),
            Toxin::DeathRelease { theta } => (theta, 0.0),
        }
    }
}

/// Law `Λ` of a life-length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum LifeLaw {
    Exponential { mean: f64 },
    Uniform { a: f64, b: f64 },
    Point { y: f64 },
}

impl LifeLaw {
    fn check(&self) -> Result<()> {
        let ok = match *self {
            LifeLaw::Exponential { mean } => mean.is_finite() && mean > 0.0,
            LifeLaw::Uniform { a, b } => a.is_finite() && b.is_finite() && a >= 0.0 && b > a,
            LifeLaw::Point { y } => y.is_finite() && y > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("life-length law {self:?} is not a law on (0, ∞)")))
        }
    }

    /// `∫ y^κ Λ(dy)` for `κ = 1, 2`.
    pub fn moment(&self, kappa: u32) -> f64 {
        match (*self, kappa) {
            (LifeLaw::Exponential { mean }, 1) => mean,
            (LifeLaw::Exponential { mean }, 2) => 2.0 * mean * mean,
            (LifeLaw::Uniform { a, b }, 1) => 0.5 * (a + b),
            (LifeLaw::Uniform { a, b }, 2) => (a * a + a * b + b * b) / 3.0,
            (LifeLaw::Point { y }, 1) => y,
            (LifeLaw::Point { y }, 2) => y * y,
            _ => unreachable!("only first and second moments are used"),
        }
    }

    /// `Λ((t, ∞))`.
    pub fn survival(&self, t: f64) -> f64 {
        match *self {
            LifeLaw::Exponential { mean } => (-t.max(0.0) / mean).exp(),
            LifeLaw::Uniform { a, b } => ((b - t) / (b - a)).clamp(0.0, 1.0),
            LifeLaw::Point { y } => {
                if t < y {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        match *self {
            LifeLaw::Exponential { mean } => Exp::new(1.0 / mean).expect("positive rate").sample(rng),
            LifeLaw::Uniform { a, b } => Uniform::new(a, b).expect("a < b").sample(rng),
            LifeLaw::Point { y } => y,
        }
    }

    /// Three-node Gauss rule (one node for a point mass), exact for
    /// polynomials of degree 5.
    fn nodes(&self) -> Vec<(f64, f64)> {
        match *self {
            LifeLaw::Exponential { mean } => GaussLaguerre::new(3, 0.0)
                .expect("valid Laguerre degree")
                .as_node_weight_pairs()
                .into_iter()
                .map(|(x, w)| (mean * x, *w))
                .collect(),
            LifeLaw::Uniform { a, b } => GaussLegendre::new(3)
                .expect("valid Legendre degree")
                .as_node_weight_pairs()
                .into_iter()
                .map(|(x, w)| (a + 0.5 * (b - a) * (x + 1.0), 0.5 * *w))
                .collect(),
            LifeLaw::Point { y } => vec![(y, 1.0)],
        }
    }

    /// `∫_{(lo, ∞)} f(y) Λ(dy)` for `f` smooth between the given breakpoints.
    fn integrate_above(&self, lo: f64, breaks: &[f64], f: impl Fn(f64) -> f64) -> f64 {
        let (start, end, density): (f64, f64, Box<dyn Fn(f64) -> f64>) = match *self {
            LifeLaw::Point { y } => return if y > lo { f(y) } else { 0.0 },
            LifeLaw::Exponential { mean } => {
                (lo.max(0.0), lo.max(0.0) + 60.0 * mean, Box::new(move |y: f64| (-y / mean).exp() / mean))
            }
            LifeLaw::Uniform { a, b } => (lo.max(a), b, Box::new(move |_| 1.0 / (b - a))),
        };
        if end <= start {
            return 0.0;
        }
        let mut cuts: Vec<f64> = vec![start];
        cuts.extend(breaks.iter().copied().filter(|b| *b > start && *b < end));
        cuts.push(end);
        let rule = GaussLegendre::new(10).expect("valid Legendre degree");
        let panels = 40;
        let mut total = 0.0;
        for w in cuts.windows(2) {
            let width = (w[1] - w[0]) / panels as f64;
            for p in 0..panels {
                let a = w[0] + p as f64 * width;
                total += rule.integrate(a, a + width, |y| f(y) * density(y));
            }
        }
        total
    }
}

/// Budding rate `γ(t, y)` of a microbe with life-length `y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GammaFamily {
    /// `γ(t, y) = c·1{t < y}`.
    Boxcar { c: f64 },
    /// Rises linearly to `c` at `y/2`, falls back to zero at `y`.
    Tent { c: f64 },
}

impl GammaFamily {
    fn c(&self) -> f64 {
        match *self {
            GammaFamily::Boxcar { c } | GammaFamily::Tent { c } => c,
        }
    }

    fn check(&self) -> Result<()> {
        let c = self.c();
        if !c.is_finite() {
            return Err(Error::InvalidKernel(format!("budding rate {self:?} is unbounded")));
        }
        if c < 0.0 {
            return Err(Error::InvalidParams(format!("budding rate {self:?} is negative")));
        }
        Ok(())
    }

    pub fn rate(&self, t: f64, y: f64) -> f64 {
        if !(0.0..y).contains(&t) {
            return 0.0;
        }
        match *self {
            GammaFamily::Boxcar { c } => c,
            GammaFamily::Tent { c } => {
                if t < 0.5 * y {
                    2.0 * c * t / y
                } else {
                    2.0 * c * (y - t) / y
                }
            }
        }
    }

    /// `sup_{s >= t} γ(s, y)`.
    pub fn majorant(&self, t: f64, y: f64) -> f64 {
        match *self {
            GammaFamily::Boxcar { .. } => self.rate(t.max(0.0), y),
            GammaFamily::Tent { c } => {
                if t < 0.5 * y {
                    c
                } else {
                    self.rate(t, y)
                }
            }
        }
    }

    /// `‖γ(y)‖_{L¹} = κ·c·y`.
    pub fn l1(&self, y: f64) -> f64 {
        self.l1_factor() * y
    }

    fn l1_factor(&self) -> f64 {
        match *self {
            GammaFamily::Boxcar { c } => c,
            GammaFamily::Tent { c } => 0.5 * c,
        }
    }

    /// `∫_a^b γ(s, y) ds`.
    pub fn integral(&self, a: f64, b: f64, y: f64) -> f64 {
        let (a, b) = (a.clamp(0.0, y), b.clamp(0.0, y));
        if b <= a {
            return 0.0;
        }
        match *self {
            GammaFamily::Boxcar { c } => c * (b - a),
            GammaFamily::Tent { .. } => {
                let prim = |s: f64| {
                    let half = 0.5 * y;
                    let c = self.c();
                    if s <= half {
                        c * s * s / y
                    } else {
                        c * half * half / y + 2.0 * c * ((y * s - 0.5 * s * s) - (y * half - 0.5 * half * half)) / y
                    }
                };
                prim(b) - prim(a)
            }
        }
    }

    /// `∫ γ(t, y) Λ(dy)`.
    fn mean_rate(&self, t: f64, life: &LifeLaw) -> f64 {
        match *self {
            GammaFamily::Boxcar { c } => c * life.survival(t),
            GammaFamily::Tent { .. } => life.integrate_above(t, &[2.0 * t], |y| self.rate(t, y)),
        }
    }
}

/// Mark `u = (i, k, y, 𝚃)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MicrobeMark {
    pub origin: Origin,
    pub lives: Vec<f64>,
    pub toxins: Vec<Toxin>,
}

impl MicrobeMark {
    /// Litter size `k`.
    pub fn litter(&self) -> usize {
        self.lives.len()
    }
}

fn default_lambda() -> f64 {
    1.0
}
fn default_alpha() -> f64 {
    2.0
}
fn default_samples() -> usize {
    DEFAULT_INTEGRATION_SAMPLES
}

/// Parameters of the budding-microbe model; `p[k−1]` is the probability of `k` offspring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MicrobeParams {
    #[serde(rename = "p_H", alias = "p_h")]
    pub p_h: Vec<f64>,
    #[serde(rename = "p_I", alias = "p_i")]
    pub p_i: Vec<f64>,
    pub life_h: LifeLaw,
    pub life_i: LifeLaw,
    pub gamma_h: GammaFamily,
    pub gamma_i: GammaFamily,
    pub toxin_h: Toxin,
    pub toxin_i: Toxin,
    #[serde(default = "default_lambda")]
    pub lambda_i: f64,
    /// Life-lengths of the microbes present at time 0.
    #[serde(default)]
    pub ancestors: Vec<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_samples")]
    pub integration_samples: usize,
    #[serde(default)]
    pub seed: u64,
}

impl MicrobeParams {
    /// Same offspring law, life law, budding rate and toxin for both origins.
    pub fn symmetric(p: Vec<f64>, life: LifeLaw, gamma: GammaFamily, toxin: Toxin) -> Self {
        Self {
            p_h: p.clone(),
            p_i: p,
            life_h: life,
            life_i: life,
            gamma_h: gamma,
            gamma_i: gamma,
            toxin_h: toxin,
            toxin_i: toxin,
            lambda_i: 1.0,
            ancestors: Vec::new(),
            alpha: 2.0,
            integration_samples: DEFAULT_INTEGRATION_SAMPLES,
            seed: 0,
        }
    }

    pub fn with_toxin(&self, toxin: Toxin) -> Self {
        Self { toxin_h: toxin, toxin_i: toxin, ..self.clone() }
    }

    pub fn check(&self) -> Result<()> {
        for (name, p) in [("p_H", &self.p_h), ("p_I", &self.p_i)] {
            if p.is_empty() || p.iter().any(|q| !(q.is_finite() && *q >= 0.0)) {
                return Err(Error::InvalidParams(format!("{name} must be a nonempty list of probabilities")));
            }
            let total: f64 = p.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParams(format!("{name} sums to {total}, not 1")));
            }
        }
        self.life_h.check()?;
        self.life_i.check()?;
        self.gamma_h.check()?;
        self.gamma_i.check()?;
        self.toxin_h.check()?;
        self.toxin_i.check()?;
        if !(self.lambda_i > 0.0 && self.lambda_i.is_finite()) {
            return Err(Error::InvalidParams(format!("lambda_I = {} must be positive", self.lambda_i)));
        }
        if self.ancestors.iter().any(|y| !(y.is_finite() && *y > 0.0)) {
            return Err(Error::InvalidParams("ancestor life-lengths must be positive".into()));
        }
        if !(self.alpha > 1.0) {
            return Err(Error::InvalidParams(format!("alpha = {} must exceed 1", self.alpha)));
        }
        if self.integration_samples == 0 {
            return Err(Error::InvalidParams("integration_samples must be positive".into()));
        }
        Ok(())
    }

    fn side(&self, origin: Origin) -> (&[f64], LifeLaw, GammaFamily, Toxin) {
        match origin {
            Origin::Hawkes => (&self.p_h, self.life_h, self.gamma_h, self.toxin_h),
            Origin::Immigration => (&self.p_i, self.life_i, self.gamma_i, self.toxin_i),
        }
    }
}

/// `g′(1) = Σ k·p_k`.
pub fn g1(p: &[f64]) -> f64 {
    p.iter().enumerate().map(|(i, q)| (i + 1) as f64 * q).sum()
}

/// `g″(1) = Σ k(k−1)·p_k`.
pub fn g2(p: &[f64]) -> f64 {
    p.iter().enumerate().map(|(i, q)| ((i + 1) * i) as f64 * q).sum()
}

/// Norms of one origin `i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SideNorms {
    pub g1: f64,
    pub g2: f64,
    /// `‖γ‖_{Λ¹}`.
    pub gamma_l1: f64,
    /// `‖γ‖_{Λ²}`.
    pub gamma_l2: f64,
    /// `‖𝚃‖_{Λ¹}`.
    pub toxin_l1: f64,
    /// `‖𝚃‖_{Λ²}`.
    pub toxin_l2: f64,
    /// `⟨γ, 𝚃⟩`.
    pub gamma_toxin: f64,
    /// `‖Λ¹‖`.
    pub life_l1: f64,
    /// `‖Λ²‖`.
    pub life_l2: f64,
    /// `∫ y·‖γ(y)‖_{L¹} Λ(dy)`.
    pub life_gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub hawkes: SideNorms,
    pub immigration: SideNorms,
}

fn side_norms(p: &[f64], life: LifeLaw, gamma: GammaFamily, toxin: Toxin) -> Result<SideNorms> {
    let m1 = life.moment(1);
    let m2 = life.moment(2);
    let kappa = gamma.l1_factor();
    let (a, b) = toxin.total_affine();
    let norms = SideNorms {
        g1: g1(p),
        g2: g2(p),
        gamma_l1: kappa * m1,
        gamma_l2: kappa * m2.sqrt(),
        toxin_l1: a + b * m1,
        toxin_l2: (a * a + 2.0 * a * b * m1 + b * b * m2).sqrt(),
        gamma_toxin: kappa * (a * m1 + b * m2),
        life_l1: m1,
        life_l2: m2.sqrt(),
        life_gamma: kappa * m2,
    };
    let all = [
        norms.gamma_l1,
        norms.gamma_l2,
        norms.toxin_l1,
        norms.toxin_l2,
        norms.gamma_toxin,
        norms.life_l1,
        norms.life_l2,
        norms.life_gamma,
    ];
    if all.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParams("a life-length or toxin norm diverges".into()));
    }
    Ok(norms)
}

pub fn norms(params: &MicrobeParams) -> Result<Norms> {
    params.check()?;
    let (p, life, gamma, toxin) = params.side(Origin::Hawkes);
    let hawkes = side_norms(p, life, gamma, toxin)?;
    let (p, life, gamma, toxin) = params.side(Origin::Immigration);
    let immigration = side_norms(p, life, gamma, toxin)?;
    Ok(Norms { hawkes, immigration })
}

/// Constants of the joint limit of the integrated budding rate and the toxin load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuddingConstants {
    pub branching_ratio: f64,
    pub drift_b: f64,
    pub drift_t: f64,
    /// Intensity factor `λ_I g′_I‖γ‖_{Λ_I¹}/(1 − m)` of the budding white noise.
    pub hawkes_noise_intensity: f64,
    pub c_h1: f64,
    pub c_h2: f64,
    pub c_i1: f64,
    pub c_i2: f64,
    /// `⟨B_{H1}, B_{H2}⟩_1`.
    pub corr_h: f64,
    /// `⟨B_{I1}, B_{I2}⟩_1`.
    pub corr_i: f64,
    pub variance_b: f64,
    pub variance_t: f64,
    pub covariance_bt: f64,
}

struct SideConstants {
    c1_sq: f64,
    c2_sq: f64,
    cross: f64,
}

fn side_constants(s: &SideNorms, m: f64, a: f64) -> SideConstants {
    let one_m = 1.0 - m;
    let c1_sq = (s.g1 * s.gamma_l2.powi(2) + s.g2 * s.gamma_l1.powi(2)) / one_m.powi(2);
    let c2_sq = s.g1 * (s.toxin_l2 + a * s.gamma_l2).powi(2)
        + s.g2 * (s.toxin_l1 + a * s.gamma_l1).powi(2)
        + 2.0 * a * s.g1 * (s.gamma_toxin - s.toxin_l2 * s.gamma_l2);
    let cross = (s.g1 * s.gamma_toxin + s.g2 * s.gamma_l1 * s.toxin_l1) / one_m
        + a * (s.g1 * s.gamma_l2.powi(2) + s.g2 * s.gamma_l1.powi(2)) / one_m;
    SideConstants { c1_sq, c2_sq, cross }
}

fn correlation(cross: f64, c1: f64, c2: f64) -> f64 {
    if c1 > 0.0 && c2 > 0.0 {
        cross / (c1 * c2)
    } else {
        0.0
    }
}

pub fn budding_constants(params: &MicrobeParams) -> Result<BuddingConstants> {
    let n = norms(params)?;
    let (h, i) = (&n.hawkes, &n.immigration);
    let m = h.g1 * h.gamma_l1;
    if m >= 1.0 {
        return Err(Error::Unstable { ratio: m });
    }
    let lambda = params.lambda_i;
    let one_m = 1.0 - m;
    let drift_b = lambda * i.g1 * i.gamma_l1 / one_m;
    let drift_t =
        lambda * i.g1 * (i.toxin_l1 + h.g1 * (i.gamma_l1 * h.toxin_l1 - h.gamma_l1 * i.toxin_l1)) / one_m;
    // coefficient of ‖γ‖ in the toxin component of the integrand
    let a = h.g1 * h.toxin_l1 / one_m;
    let hs = side_constants(h, m, a);
    let is = side_constants(i, m, a);
    let (c_h1, c_h2, c_i1, c_i2) = (hs.c1_sq.sqrt(), hs.c2_sq.max(0.0).sqrt(), is.c1_sq.sqrt(), is.c2_sq.max(0.0).sqrt());
    Ok(BuddingConstants {
        branching_ratio: m,
        drift_b,
        drift_t,
        hawkes_noise_intensity: drift_b,
        c_h1,
        c_h2,
        c_i1,
        c_i2,
        corr_h: correlation(hs.cross, c_h1, c_h2),
        corr_i: correlation(is.cross, c_i1, c_i2),
        variance_b: drift_b * hs.c1_sq + lambda * is.c1_sq,
        variance_t: drift_b * hs.c2_sq + lambda * is.c2_sq,
        covariance_bt: drift_b * hs.cross + lambda * is.cross,
    })
}

/// Drift and limit variance of one toxin functional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToxinConstants {
    pub drift: f64,
    pub c_h2: f64,
    pub c_i2: f64,
    pub hawkes_noise_intensity: f64,
    pub total_variance: f64,
}

impl From<BuddingConstants> for ToxinConstants {
    fn from(c: BuddingConstants) -> Self {
        Self {
            drift: c.drift_t,
            c_h2: c.c_h2,
            c_i2: c.c_i2,
            hawkes_noise_intensity: c.hawkes_noise_intensity,
            total_variance: c.variance_t,
        }
    }
}

/// Total progeny: every microbe counts once.
pub fn progeny_constants(params: &MicrobeParams) -> Result<ToxinConstants> {
    budding_constants(&params.with_toxin(Toxin::UnitCount)).map(Into::into)
}

/// Time integral of the living population.
pub fn population_integral_constants(params: &MicrobeParams) -> Result<ToxinConstants> {
    if !(params.alpha > 1.5) {
        return Err(Error::ConditionViolated(format!(
            "the population integral needs alpha > 3/2, got {}",
            params.alpha
        )));
    }
    budding_constants(&params.with_toxin(Toxin::PopulationIntegral)).map(Into::into)
}

/// Every microbe constant, in the layout written by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicrobeConstants {
    pub norms: Norms,
    pub budding: BuddingConstants,
    pub progeny: ToxinConstants,
    pub population_integral: Option<ToxinConstants>,
}

pub fn all_constants(params: &MicrobeParams) -> Result<MicrobeConstants> {
    Ok(MicrobeConstants {
        norms: norms(params)?,
        budding: budding_constants(params)?,
        progeny: progeny_constants(params)?,
        population_integral: match population_integral_constants(params) {
            Ok(c) => Some(c),
            Err(Error::ConditionViolated(_)) => None,
            Err(e) => return Err(e),
        },
    })
}

/// `φ(t, u) = Σ_j γ_i(t, y_j)`.
#[derive(Debug, Clone)]
pub struct MicrobeKernel {
    pub gamma_h: GammaFamily,
    pub gamma_i: GammaFamily,
}

impl MicrobeKernel {
    fn split<'a>(&self, mark: &'a Mark) -> (GammaFamily, &'a [f64]) {
        match mark {
            Mark::Microbe(m) => {
                let g = match m.origin {
                    Origin::Hawkes => self.gamma_h,
                    Origin::Immigration => self.gamma_i,
                };
                (g, &m.lives)
            }
            other => panic!("microbe kernel evaluated at non-microbe mark {other:?}"),
        }
    }
}

impl Kernel for MicrobeKernel {
    fn phi(&self, t: f64, mark: &Mark) -> f64 {
        let (g, lives) = self.split(mark);
        lives.iter().map(|&y| g.rate(t, y)).sum()
    }
    fn majorant(&self, t: f64, mark: &Mark) -> f64 {
        let (g, lives) = self.split(mark);
        lives.iter().map(|&y| g.majorant(t, y)).sum()
    }
    fn l1(&self, mark: &Mark) -> f64 {
        let (g, lives) = self.split(mark);
        lives.iter().map(|&y| g.l1(y)).sum()
    }
    fn sup(&self, mark: &Mark) -> f64 {
        let (g, lives) = self.split(mark);
        g.c() * lives.len() as f64
    }
    fn integral(&self, a: f64, b: f64, mark: &Mark) -> Option<f64> {
        let (g, lives) = self.split(mark);
        Some(lives.iter().map(|&y| g.integral(a, b, y)).sum())
    }
    fn is_zero(&self) -> bool {
        self.gamma_h.c() == 0.0 && self.gamma_i.c() == 0.0
    }
}

/// `ψ(t, u) = Σ_j 𝚃_j(t, y_j)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct MicrobeShot;

fn microbe(mark: &Mark) -> &MicrobeMark {
    match mark {
        Mark::Microbe(m) => m,
        other => panic!("microbe shot evaluated at non-microbe mark {other:?}"),
    }
}

impl ShotShape for MicrobeShot {
    fn psi(&self, t: f64, mark: &Mark) -> f64 {
        let m = microbe(mark);
        m.lives.iter().zip(&m.toxins).map(|(&y, tox)| tox.value(t, y)).sum()
    }
    fn psi_inf(&self, mark: &Mark) -> f64 {
        let m = microbe(mark);
        m.lives.iter().zip(&m.toxins).map(|(&y, tox)| tox.total(y)).sum()
    }
}

/// Budding rate of the ancestors alive at time 0.
#[derive(Debug, Clone)]
pub struct AncestorRate {
    pub gamma: GammaFamily,
    pub lives: Vec<f64>,
}

impl Exogenous for AncestorRate {
    fn rate(&self, t: f64) -> f64 {
        self.lives.iter().map(|&y| self.gamma.rate(t, y)).sum()
    }
    fn majorant(&self, t: f64) -> f64 {
        self.lives.iter().map(|&y| self.gamma.majorant(t, y)).sum()
    }
    fn integral(&self, a: f64, b: f64) -> Option<f64> {
        Some(self.lives.iter().map(|&y| self.gamma.integral(a, b, y)).sum())
    }
    fn lp_norm_pow(&self, p: f64) -> f64 {
        let end = self.lives.iter().copied().fold(0.0, f64::max);
        let n = 10_000;
        let h = end / n as f64;
        (0..n).map(|i| self.rate((i as f64 + 0.5) * h).powf(p) * h).sum()
    }
    fn is_zero(&self) -> bool {
        self.lives.is_empty() || self.gamma.c() == 0.0
    }
}

const MAX_QUADRATURE_NODES: usize = 20_000;

/// Draws `(i, k, y, 𝚃)` for one origin.
#[derive(Debug, Clone)]
pub struct MicrobeSampler {
    origin: Origin,
    p: Vec<f64>,
    index: WeightedIndex<f64>,
    life: LifeLaw,
    toxin: Toxin,
}

impl MicrobeSampler {
    pub fn new(params: &MicrobeParams, origin: Origin) -> Result<Self> {
        let (p, life, _, toxin) = params.side(origin);
        let index = WeightedIndex::new(p.iter().copied())
            .map_err(|e| Error::InvalidParams(format!("offspring law: {e}")))?;
        Ok(Self { origin, p: p.to_vec(), index, life, toxin })
    }
}

impl MarkSampler for MicrobeSampler {
    fn sample(&self, rng: &mut dyn RngCore) -> Mark {
        let k = self.index.sample(rng) + 1;
        let lives = (0..k).map(|_| self.life.sample(rng)).collect();
        Mark::Microbe(MicrobeMark { origin: self.origin, lives, toxins: vec![self.toxin; k] })
    }

    /// Tensor Gauss rule over the life-lengths of each litter size, exact for
    /// integrands of degree at most 5 in each `y_j`.
    fn quadrature(&self) -> Option<Vec<(Mark, f64)>> {
        let nodes = self.life.nodes();
        let total: usize = self
            .p
            .iter()
            .enumerate()
            .filter(|(_, q)| **q > 0.0)
            .map(|(i, _)| nodes.len().checked_pow(i as u32 + 1).unwrap_or(usize::MAX))
            .fold(0usize, |a, b| a.saturating_add(b));
        if total > MAX_QUADRATURE_NODES {
            return None;
        }
        let mut out = Vec::with_capacity(total);
        for (i, &q) in self.p.iter().enumerate() {
            if q == 0.0 {
                continue;
            }
            let k = i + 1;
            let mut digits = vec![0usize; k];
            loop {
                let lives: Vec<f64> = digits.iter().map(|&d| nodes[d].0).collect();
                let w: f64 = digits.iter().map(|&d| nodes[d].1).product();
                out.push((Mark::Microbe(MicrobeMark { origin: self.origin, lives, toxins: vec![self.toxin; k] }), q * w));
                let mut pos = 0;
                loop {
                    if pos == k {
                        break;
                    }
                    digits[pos] += 1;
                    if digits[pos] < nodes.len() {
                        break;
                    }
                    digits[pos] = 0;
                    pos += 1;
                }
                if pos == k {
                    break;
                }
            }
        }
        Some(out)
    }
}

/// `φ_i(t) = g′_i(1)·∫ γ_i(t, y) Λ_i(dy)`.
#[derive(Debug, Clone)]
pub struct MicrobeMeanKernel {
    params: MicrobeParams,
}

impl MeanKernel for MicrobeMeanKernel {
    fn mean(&self, t: f64, origin: Origin) -> f64 {
        let (p, life, gamma, _) = self.params.side(origin);
        g1(p) * gamma.mean_rate(t, &life)
    }
}

/// Marked Hawkes system of the microbe population with toxin shot shape.
pub fn build_model(params: &MicrobeParams) -> Result<ModelSpec> {
    params.check()?;
    let nu_h = MarkDistribution::sampled(
        Arc::new(MicrobeSampler::new(params, Origin::Hawkes)?),
        params.integration_samples,
        params.seed,
    )?;
    let nu_i = MarkDistribution::sampled(
        Arc::new(MicrobeSampler::new(params, Origin::Immigration)?),
        params.integration_samples,
        params.seed ^ 0x9e37_79b9_7f4a_7c15,
    )?;
    let mu0: Arc<dyn Exogenous> = if params.ancestors.is_empty() {
        Arc::new(ZeroRate)
    } else {
        Arc::new(AncestorRate { gamma: params.gamma_i, lives: params.ancestors.clone() })
    };
    let a = params.alpha;
    let moments = MomentParams {
        alpha: a,
        theta0: a / (2.0 * a - 2.0) + 0.1,
        theta1: (2.0 * a - 1.0) / (2.0 * a - 2.0) + 0.1,
    };
    ModelSpec::builder(params.lambda_i)
        .kernel(Arc::new(MicrobeKernel { gamma_h: params.gamma_h, gamma_i: params.gamma_i }))
        .marks(nu_h)
        .immigration_marks(nu_i)
        .mu0(mu0)
        .shot(Arc::new(MicrobeShot))
        .moments(moments)
        .mean_kernel(Arc::new(MicrobeMeanKernel { params: params.clone() }))
        .build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::branching_ratio;
    use crate::rng::{substream, StreamRole};

    fn s_star() -> MicrobeParams {
        MicrobeParams::symmetric(
            vec![1.0],
            LifeLaw::Exponential { mean: 1.0 },
            GammaFamily::Boxcar { c: 0.5 },
            Toxin::UnitCount,
        )
    }

    #[test]
    fn generating_function_derivatives() {
        assert_eq!(g1(&[0.0, 1.0, 0.0]), 2.0);
        assert_eq!(g2(&[0.0, 1.0, 0.0]), 2.0);
        assert_eq!(g1(&[0.2, 0.3, 0.5]), 0.2 + 0.6 + 1.5);
        assert_eq!(g2(&[0.2, 0.3, 0.5]), 0.6 + 3.0);
    }

    #[test]
    fn boxcar_exponential_norms() {
        let p = MicrobeParams::symmetric(
            vec![1.0],
            LifeLaw::Exponential { mean: 3.0 },
            GammaFamily::Boxcar { c: 0.2 },
            Toxin::PopulationIntegral,
        );
        let n = norms(&p).unwrap().hawkes;
        assert!((n.gamma_l1 - 0.6).abs() < 1e-15);
        assert!((n.gamma_l2.powi(2) - 0.04 * 18.0).abs() < 1e-12);
        assert!((n.toxin_l1 - 3.0).abs() < 1e-15);
        assert_eq!(n.toxin_l1, n.life_l1);
    }

    #[test]
    fn point_life_builds_boxcar_kernel() {
        let p = MicrobeParams::symmetric(vec![1.0], LifeLaw::Point { y: 1.5 }, GammaFamily::Boxcar { c: 0.4 }, Toxin::UnitCount);
        let spec = build_model(&p).unwrap();
        assert!((branching_ratio(&spec).unwrap() - 0.6).abs() < 1e-14);
        let u = spec.nu_h().integration_points()[0].0.clone();
        assert_eq!(spec.kernel().phi(1.0, &u), 0.4);
        assert_eq!(spec.kernel().phi(1.5, &u), 0.0);
        assert_eq!(spec.shot().unwrap().psi_inf(&u), 1.0);
    }

    #[test]
    fn s_star_constants() {
        let p = s_star();
        let c = budding_constants(&p).unwrap();
        assert!((c.branching_ratio - 0.5).abs() < 1e-15);
        assert!((c.drift_b - 1.0).abs() < 1e-15);
        let prog = progeny_constants(&p).unwrap();
        assert!((prog.drift - 2.0).abs() < 1e-15);
        // E[(1 + y)²] = 5 on each side, noise intensities 1 and 1
        assert!((prog.total_variance - 10.0).abs() < 1e-12);
        let pop = population_integral_constants(&p).unwrap();
        assert!((pop.drift - 2.0).abs() < 1e-15);
        assert!((pop.total_variance - 16.0).abs() < 1e-12);
    }

    #[test]
    fn point_life_progeny_is_standard_hawkes() {
        let p = MicrobeParams::symmetric(vec![1.0], LifeLaw::Point { y: 1.0 }, GammaFamily::Boxcar { c: 0.5 }, Toxin::UnitCount);
        let prog = progeny_constants(&p).unwrap();
        assert!((prog.total_variance - 8.0).abs() < 1e-12);
    }

    /// Literal progeny formula with unit toxins.
    fn progeny_c2_sq(s: &SideNorms, h: &SideNorms) -> f64 {
        let one_m = 1.0 - h.g1 * h.gamma_l1;
        s.g1 * (1.0 + h.g1 * s.gamma_l2 / one_m).powi(2)
            + s.g2 * (1.0 + h.g1 * s.gamma_l1 / one_m).powi(2)
            + 2.0 * h.g1 * s.g1 / one_m * (s.gamma_l1 - s.gamma_l2)
    }

    #[test]
    fn progeny_matches_literal_formula() {
        let mut p = MicrobeParams::symmetric(
            vec![0.3, 0.5, 0.2],
            LifeLaw::Uniform { a: 0.5, b: 1.5 },
            GammaFamily::Tent { c: 0.6 },
            Toxin::UnitCount,
        );
        p.p_i = vec![0.6, 0.4];
        p.life_i = LifeLaw::Exponential { mean: 0.7 };
        let n = norms(&p).unwrap();
        let c = progeny_constants(&p).unwrap();
        assert!((c.c_h2.powi(2) - progeny_c2_sq(&n.hawkes, &n.hawkes)).abs() < 1e-12);
        assert!((c.c_i2.powi(2) - progeny_c2_sq(&n.immigration, &n.hawkes)).abs() < 1e-12);
        let budding = budding_constants(&p.with_toxin(Toxin::UnitCount)).unwrap();
        assert_eq!(c.c_h2, budding.c_h2);
        assert_eq!(c.total_variance, budding.variance_t);
    }

    #[test]
    fn zero_budding_is_pure_immigration() {
        let p = MicrobeParams::symmetric(vec![1.0], LifeLaw::Point { y: 2.0 }, GammaFamily::Boxcar { c: 0.0 }, Toxin::UnitCount);
        let c = budding_constants(&p).unwrap();
        assert_eq!((c.c_h1, c.c_i1, c.drift_b), (0.0, 0.0, 0.0));
        let prog = progeny_constants(&p).unwrap();
        assert_eq!(prog.drift, 1.0);
        assert_eq!(prog.total_variance, 1.0);
        assert!(build_model(&p).unwrap().kernel().is_zero());
    }

    #[test]
    fn population_integral_needs_alpha() {
        let mut p = s_star();
        p.alpha = 1.4;
        assert!(matches!(population_integral_constants(&p), Err(Error::ConditionViolated(_))));
        assert!(all_constants(&p).unwrap().population_integral.is_none());
    }

    #[test]
    fn unstable_and_invalid_params() {
        let p = MicrobeParams::symmetric(vec![0.0, 1.0], LifeLaw::Point { y: 1.0 }, GammaFamily::Boxcar { c: 0.5 }, Toxin::UnitCount);
        assert!(matches!(budding_constants(&p), Err(Error::Unstable { .. })));
        let bad = MicrobeParams::symmetric(vec![0.5], LifeLaw::Point { y: 1.0 }, GammaFamily::Boxcar { c: 0.5 }, Toxin::UnitCount);
        assert!(matches!(norms(&bad), Err(Error::InvalidParams(_))));
        let unbounded = MicrobeParams::symmetric(vec![1.0], LifeLaw::Point { y: 1.0 }, GammaFamily::Boxcar { c: f64::INFINITY }, Toxin::UnitCount);
        assert!(matches!(build_model(&unbounded), Err(Error::InvalidKernel(_))));
    }

    #[test]
    fn quadrature_is_exact_for_quadratics() {
        let mut p = s_star();
        p.p_h = vec![0.5, 0.5];
        let spec = build_model(&p).unwrap();
        // E[(Σ y_j)²] with k ∈ {1,2}, y ~ Exp(1): 0.5·2 + 0.5·(2·2 + 2·1) = 4
        let v = spec.nu_h().expect(|u| {
            let s: f64 = microbe(u).lives.iter().sum();
            s * s
        });
        assert!((v - 4.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn sampler_draws_from_the_law() {
        let s = MicrobeSampler::new(&s_star(), Origin::Hawkes).unwrap();
        let mut rng = substream(5, 0, StreamRole::Oracle);
        let n = 20_000;
        let mean: f64 = (0..n).map(|_| microbe(&s.sample(&mut rng)).lives[0]).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 4.0 / (n as f64).sqrt());
    }

    #[test]
    fn kernel_majorant_and_integrals() {
        let k = MicrobeKernel { gamma_h: GammaFamily::Tent { c: 2.0 }, gamma_i: GammaFamily::Boxcar { c: 1.0 } };
        let u = Mark::Microbe(MicrobeMark { origin: Origin::Hawkes, lives: vec![1.0, 3.0], toxins: vec![Toxin::UnitCount; 2] });
        let mut prev = f64::INFINITY;
        for i in 0..1000 {
            let t = i as f64 * 0.004;
            let m = k.majorant(t, &u);
            assert!(k.phi(t, &u) <= m + 1e-15);
            assert!(m <= prev + 1e-15);
            prev = m;
        }
        assert!((k.integral(0.0, 10.0, &u).unwrap() - k.l1(&u)).abs() < 1e-12);
        let n = 40_000;
        let riemann: f64 = (0..n).map(|i| k.phi((i as f64 + 0.5) * 2.0 / n as f64, &u) * 2.0 / n as f64).sum();
        assert!((k.integral(0.0, 2.0, &u).unwrap() - riemann).abs() < 1e-6);
    }

    #[test]
    fn mean_kernel_matches_mark_average() {
        let p = MicrobeParams::symmetric(vec![0.4, 0.6], LifeLaw::Uniform { a: 0.5, b: 2.0 }, GammaFamily::Tent { c: 0.3 }, Toxin::UnitCount);
        let mk = MicrobeMeanKernel { params: p.clone() };
        let spec = build_model(&p).unwrap();
        let mc = spec.nu_h().monte_carlo_points(200_000, 9);
        for t in [0.1, 0.4, 0.8, 1.2] {
            let direct: f64 = mc.iter().map(|(u, w)| w * spec.kernel().phi(t, u)).sum();
            assert!((mk.mean(t, Origin::Hawkes) - direct).abs() < 5e-3, "t = {t}");
        }
    }

    #[test]
    fn death_release_toxin() {
        let t = Toxin::DeathRelease { theta: 2.0 };
        assert_eq!(t.value(0.5, 1.0), 0.0);
        assert_eq!(t.value(1.0, 1.0), 2.0);
        assert_eq!(Toxin::PopulationIntegral.value(3.0, 1.0), 1.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn longer_lives_raise_the_budding_drift(y0 in 0.1f64..1.0, c in 0.05f64..0.9) {
                let base = MicrobeParams::symmetric(vec![1.0], LifeLaw::Point { y: y0 }, GammaFamily::Boxcar { c }, Toxin::UnitCount);
                let long = MicrobeParams { life_h: LifeLaw::Point { y: 2.0 * y0 }, life_i: LifeLaw::Point { y: 2.0 * y0 }, ..base.clone() };
                let (a, b) = (norms(&base).unwrap(), norms(&long).unwrap());
                prop_assert!(b.hawkes.gamma_l1 > a.hawkes.gamma_l1);
                match (budding_constants(&base), budding_constants(&long)) {
                    (Ok(x), Ok(y)) => prop_assert!(y.drift_b > x.drift_b),
                    (Ok(_), Err(Error::Unstable { .. })) => prop_assert!(2.0 * c * y0 >= 1.0),
                    (Err(Error::Unstable { .. }), _) => prop_assert!(c * y0 >= 1.0),
                    other => prop_assert!(false, "{other:?}"),
                }
            }

            #[test]
            fn generating_function_identities(raw in prop::collection::vec(0.0f64..1.0, 1..8)) {
                let total: f64 = raw.iter().sum();
                prop_assume!(total > 0.0);
                let p: Vec<f64> = raw.iter().map(|x| x / total).collect();
                let m1: f64 = p.iter().enumerate().map(|(i, q)| (i + 1) as f64 * q).sum();
                let m2: f64 = p.iter().enumerate().map(|(i, q)| ((i + 1) * (i + 1)) as f64 * q).sum();
                prop_assert!((g1(&p) - m1).abs() < 1e-12);
                prop_assert!((g2(&p) - (m2 - m1)).abs() < 1e-12);
            }
        }
    }
}
