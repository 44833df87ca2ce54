//! Drift and variance constants of the limit theorems.
//!
//! Every Gaussian limit is a linear functional of two independent white noises
//! `W_H` and `W_I` on time × marks, with intensities `λ_I‖R_I‖·dt·ν_H(du)` and
//! `λ_I·dt·ν_I(du)`. The centered cumulative intensity converges to
//! `σ_Z B_Z = W_H(‖R(·)‖) + W_I(‖R(·)‖)` and the compensated Hawkes measure to
//! `W_H(f) + ν_H(f)·σ_Z B_Z`, so all variances and covariances reduce to
//! mark integrals. Constants are per unit time.

use std::collections::BTreeMap;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{branching_ratio, Mark, ModelSpec, Origin};
use crate::resolvent::ResolventTable;
use crate::rng::{substream, StreamRole};
use crate::scalar::Scalar;

/// One weighted mark with its kernel and resolvent masses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkPoint<S> {
    pub weight: S,
    /// `‖φ(u)‖_{L¹}`.
    pub phi_l1: S,
    /// `‖R(u)‖_{L¹}`.
    pub r_l1: S,
}

/// Mark-space data of the two white noises.
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteNoise<S> {
    pub lambda: S,
    /// `‖φ_H‖_{L¹}`.
    pub m: S,
    /// `‖R_I‖_{L¹}`.
    pub ri_l1: S,
    pub hawkes: Vec<MarkPoint<S>>,
    pub immigration: Vec<MarkPoint<S>>,
}

fn weighted<S: Scalar>(points: &[MarkPoint<S>], f: impl Fn(usize, &MarkPoint<S>) -> S) -> S {
    points.iter().enumerate().map(|(i, p)| p.weight * f(i, p)).sum()
}

impl<S: Scalar> WhiteNoise<S> {
    pub fn new(lambda: S, ri_l1: S, hawkes: Vec<MarkPoint<S>>, immigration: Vec<MarkPoint<S>>) -> Result<Self> {
        if !(lambda > S::zero()) {
            return Err(Error::InvalidSpec(format!("lambda_I = {lambda} must be positive")));
        }
        if hawkes.is_empty() || immigration.is_empty() {
            return Err(Error::InvalidSpec("white noise needs mark points for both streams".into()));
        }
        let m = weighted(&hawkes, |_, p| p.phi_l1);
        if m >= S::one() {
            return Err(Error::Unstable { ratio: m.as_f64() });
        }
        Ok(Self { lambda, m, ri_l1, hawkes, immigration })
    }

    /// Exact inputs: `‖R(u)‖ = ‖φ(u)‖/(1 − m)` and `‖R_I‖ = ν_I(‖φ‖)/(1 − m)`.
    pub fn exact(lambda: S, hawkes: &[(S, S)], immigration: &[(S, S)]) -> Result<Self> {
        let m: S = hawkes.iter().map(|(w, l)| *w * *l).sum();
        if m >= S::one() {
            return Err(Error::Unstable { ratio: m.as_f64() });
        }
        let scale = S::one() / (S::one() - m);
        let points = |xs: &[(S, S)]| -> Vec<MarkPoint<S>> {
            xs.iter().map(|&(weight, phi_l1)| MarkPoint { weight, phi_l1, r_l1: phi_l1 * scale }).collect()
        };
        let ri_l1 = immigration.iter().map(|(w, l)| *w * *l).sum::<S>() * scale;
        Self::new(lambda, ri_l1, points(hawkes), points(immigration))
    }

    /// Intensity factor `λ_I‖R_I‖` of `W_H`.
    pub fn hawkes_intensity(&self) -> S {
        self.lambda * self.ri_l1
    }

    /// `λ_I‖R_I‖`.
    pub fn hawkes_drift(&self) -> S {
        self.hawkes_intensity()
    }

    /// `σ_Z² = λ_I(‖R_I‖ν_H(‖φ‖²) + ν_I(‖φ‖²))/(1 − m)²`.
    pub fn sigma_z2(&self) -> S {
        let sq = |_: usize, p: &MarkPoint<S>| p.phi_l1 * p.phi_l1;
        let one_m = S::one() - self.m;
        self.lambda * (self.ri_l1 * weighted(&self.hawkes, sq) + weighted(&self.immigration, sq)) / (one_m * one_m)
    }

    fn check_len(&self, f: &[S], origin: Origin) -> Result<()> {
        let n = match origin {
            Origin::Hawkes => self.hawkes.len(),
            Origin::Immigration => self.immigration.len(),
        };
        if f.len() != n {
            return Err(Error::InvalidSpec(format!("functional has {} values for {n} mark points", f.len())));
        }
        Ok(())
    }

    /// `ν_H(f)`.
    pub fn nu_h(&self, f_h: &[S]) -> S {
        weighted(&self.hawkes, |i, _| f_h[i])
    }

    /// `ν_I(f)`.
    pub fn nu_i(&self, f_i: &[S]) -> S {
        weighted(&self.immigration, |i, _| f_i[i])
    }

    /// Variance of `W_H(f + ν_H(f)‖R‖) + ν_H(f)·W_I(‖R‖)`, the limit of the
    /// rescaled Hawkes measure error at `t = 1`.
    pub fn hawkes_variance(&self, f_h: &[S]) -> Result<S> {
        self.check_len(f_h, Origin::Hawkes)?;
        let c = self.nu_h(f_h);
        let h = weighted(&self.hawkes, |i, p| {
            let g = f_h[i] + c * p.r_l1;
            g * g
        });
        let r2 = weighted(&self.immigration, |_, p| p.r_l1 * p.r_l1);
        Ok(self.hawkes_intensity() * h + self.lambda * c * c * r2)
    }

    /// `λ_I ν_I(f²)`: variance of `W_I(f)`.
    pub fn immigration_variance(&self, f_i: &[S]) -> Result<S> {
        self.check_len(f_i, Origin::Immigration)?;
        Ok(self.lambda * weighted(&self.immigration, |i, _| f_i[i] * f_i[i]))
    }

    /// Variance of the joint limit `W_H(f_H) + W_I(f_I) + ν_H(f_H)·σ_Z B_Z` of
    /// the summed Hawkes and immigration errors.
    pub fn combined_variance(&self, f_h: &[S], f_i: &[S]) -> Result<S> {
        self.check_len(f_h, Origin::Hawkes)?;
        self.check_len(f_i, Origin::Immigration)?;
        let c = self.nu_h(f_h);
        let h = weighted(&self.hawkes, |i, p| {
            let g = f_h[i] + c * p.r_l1;
            g * g
        });
        let im = weighted(&self.immigration, |i, p| {
            let g = f_i[i] + c * p.r_l1;
            g * g
        });
        Ok(self.hawkes_intensity() * h + self.lambda * im)
    }

    /// `(var_I, var_H, var_total)` for shot totals `ψ(∞, ·)` on each stream.
    pub fn shot_variances(&self, psi_h: &[S], psi_i: &[S]) -> Result<ShotVariances<S>> {
        Ok(ShotVariances {
            var_i: self.immigration_variance(psi_i)?,
            var_h: self.hawkes_variance(psi_h)?,
            var_total: self.combined_variance(psi_h, psi_i)?,
        })
    }

    /// Standard-form decomposition `√λ B_I + √(λ‖R_I‖) B_H + σ_Z B_Z` of the total count.
    pub fn decomposition(&self) -> Decomposition<S> {
        let lambda = self.lambda;
        let sigma_z = self.sigma_z2().sqrt();
        let coef_i = lambda.sqrt();
        let coef_h = self.hawkes_intensity().sqrt();
        let cov_iz = lambda * weighted(&self.immigration, |_, p| p.r_l1);
        let cov_hz = self.hawkes_intensity() * weighted(&self.hawkes, |_, p| p.r_l1);
        let corr = |cov: S, coef: S| {
            if coef > S::zero() && sigma_z > S::zero() {
                cov / (coef * sigma_z)
            } else {
                S::zero()
            }
        };
        let one_m = S::one() - self.m;
        let (closed_iz, closed_hz) = if sigma_z > S::zero() {
            (coef_i / sigma_z / one_m, coef_i / sigma_z * self.m.sqrt() / (one_m * one_m.sqrt()))
        } else {
            (S::zero(), S::zero())
        };
        let two = S::lit(2.0);
        Decomposition {
            coef_i,
            coef_h,
            sigma_z,
            cov_iz,
            cov_hz,
            corr_iz: corr(cov_iz, coef_i),
            corr_hz: corr(cov_hz, coef_h),
            closed_form_corr_iz: closed_iz,
            closed_form_corr_hz: closed_hz,
            total_variance: coef_i * coef_i + coef_h * coef_h + sigma_z * sigma_z + two * cov_iz + two * cov_hz,
        }
    }
}

impl WhiteNoise<f64> {
    /// Mark points of `spec` with `‖R(u)‖` from the per-atom grids of `table`
    /// for discrete marks and `‖φ(u)‖/(1 − m)` otherwise.
    pub fn from_table(spec: &ModelSpec, table: &ResolventTable) -> Result<Self> {
        let m = branching_ratio(spec)?;
        if m >= 1.0 {
            return Err(Error::Unstable { ratio: m });
        }
        let points = |origin: Origin| -> Vec<MarkPoint<f64>> {
            spec.marks(origin)
                .integration_points()
                .iter()
                .map(|(u, w)| {
                    let phi_l1 = spec.kernel().l1(u);
                    let r_l1 = table.mark_l1(u).unwrap_or(phi_l1 / (1.0 - m));
                    MarkPoint { weight: *w, phi_l1, r_l1 }
                })
                .collect()
        };
        Self::new(spec.lambda_i(), table.l1_ri, points(Origin::Hawkes), points(Origin::Immigration))
    }

    /// Monte Carlo estimate of the limit variances by sampling the white
    /// noises atom by atom. Independent of the closed-form algebra above.
    pub fn sampled_variances(&self, functionals: &[(Vec<f64>, Vec<f64>)], draws: usize, seed: u64) -> Vec<f64> {
        let mut rng = substream(seed, 0, StreamRole::Oracle);
        let sd_h: Vec<f64> = self.hawkes.iter().map(|p| (self.hawkes_intensity() * p.weight).sqrt()).collect();
        let sd_i: Vec<f64> = self.immigration.iter().map(|p| (self.lambda * p.weight).sqrt()).collect();
        let mut sums = vec![(0.0, 0.0); functionals.len()];
        let mut wh = vec![0.0; self.hawkes.len()];
        let mut wi = vec![0.0; self.immigration.len()];
        for _ in 0..draws {
            for (w, sd) in wh.iter_mut().zip(&sd_h) {
                let z: f64 = StandardNormal.sample(&mut rng);
                *w = sd * z;
            }
            for (w, sd) in wi.iter_mut().zip(&sd_i) {
                let z: f64 = StandardNormal.sample(&mut rng);
                *w = sd * z;
            }
            let bz: f64 = wh.iter().zip(&self.hawkes).map(|(w, p)| w * p.r_l1).sum::<f64>()
                + wi.iter().zip(&self.immigration).map(|(w, p)| w * p.r_l1).sum::<f64>();
            for ((f_h, f_i), acc) in functionals.iter().zip(sums.iter_mut()) {
                let c = self.nu_h(f_h);
                let v = wh.iter().zip(f_h).map(|(w, f)| w * f).sum::<f64>()
                    + wi.iter().zip(f_i).map(|(w, f)| w * f).sum::<f64>()
                    + c * bz;
                acc.0 += v;
                acc.1 += v * v;
            }
        }
        let n = draws as f64;
        sums.into_iter().map(|(s, s2)| (s2 - s * s / n) / (n - 1.0)).collect()
    }
}

/// Evaluates `f` on the integration points of one stream.
pub fn mark_values(spec: &ModelSpec, origin: Origin, f: impl Fn(&Mark) -> f64) -> Vec<f64> {
    spec.marks(origin).integration_points().iter().map(|(u, _)| f(u)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotVariances<S> {
    /// Variance of the immigration shot error.
    pub var_i: S,
    /// Variance of the Hawkes shot error.
    pub var_h: S,
    /// Variance of the summed shot error.
    pub var_total: S,
}

/// Coefficients of the standard-Hawkes decomposition.
///
/// `corr_*` come from the white-noise representation; `closed_form_corr_*` are the
/// closed forms `(√λ/σ_Z)/(1 − m)` and `(√λ/σ_Z)·m^{1/2}/(1 − m)^{3/2}`, kept
/// for comparison only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decomposition<S> {
    pub coef_i: S,
    pub coef_h: S,
    pub sigma_z: S,
    pub cov_iz: S,
    pub cov_hz: S,
    pub corr_iz: S,
    pub corr_hz: S,
    pub closed_form_corr_iz: S,
    pub closed_form_corr_hz: S,
    pub total_variance: S,
}

/// Standard form: `μ₀ ≡ 0` (the constant base rate is the immigration rate) and `ν_I = ν_H`.
pub fn decomposition(spec: &ModelSpec, table: &ResolventTable) -> Result<Decomposition<f64>> {
    if !spec.mu0().is_zero() {
        return Err(Error::NotStandardForm("exogenous rate must be zero; put the base rate in lambda_I".into()));
    }
    if !spec.marks_coincide() {
        return Err(Error::NotStandardForm("immigration and Hawkes marks must share one law".into()));
    }
    Ok(WhiteNoise::from_table(spec, table)?.decomposition())
}

/// Drift rates of the laws of large numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct Drifts {
    pub hawkes: f64,
    pub immigration: f64,
    pub shot_h: Option<f64>,
    pub shot_i: Option<f64>,
    /// `λ_I‖R_I‖ν_H({k})` per discrete Hawkes atom.
    pub hawkes_atoms: Vec<(Mark, f64)>,
}

pub fn lln_drifts(spec: &ModelSpec, table: &ResolventTable) -> Result<Drifts> {
    let m = branching_ratio(spec)?;
    if m >= 1.0 {
        return Err(Error::Unstable { ratio: m });
    }
    let lambda = spec.lambda_i();
    let hawkes = lambda * table.l1_ri;
    let (shot_h, shot_i) = match spec.shot() {
        Some(shot) => (
            Some(spec.nu_h().expect(|u| shot.psi_inf(u)) * hawkes),
            Some(spec.nu_i().expect(|u| shot.psi_inf(u)) * lambda),
        ),
        None => (None, None),
    };
    let hawkes_atoms = spec.nu_h().atoms().unwrap_or(&[]).iter().map(|(u, p)| (u.clone(), hawkes * p)).collect();
    Ok(Drifts { hawkes, immigration: lambda, shot_h, shot_i, hawkes_atoms })
}

/// `σ_Z²`.
pub fn sigma_z2(spec: &ModelSpec, table: &ResolventTable) -> Result<f64> {
    Ok(WhiteNoise::from_table(spec, table)?.sigma_z2())
}

/// Limit variance of the rescaled Hawkes measure error for the mark functional `f`.
pub fn measure_clt_variance(spec: &ModelSpec, table: &ResolventTable, f: impl Fn(&Mark) -> f64) -> Result<f64> {
    WhiteNoise::from_table(spec, table)?.hawkes_variance(&mark_values(spec, Origin::Hawkes, f))
}

/// Limit variances of the shot-noise errors for the spec's shot shape.
pub fn shot_clt_variances(spec: &ModelSpec, table: &ResolventTable) -> Result<ShotVariances<f64>> {
    let shot = spec.shot().ok_or_else(|| Error::InvalidSpec("model has no shot shape".into()))?;
    let wn = WhiteNoise::from_table(spec, table)?;
    wn.shot_variances(
        &mark_values(spec, Origin::Hawkes, |u| shot.psi_inf(u)),
        &mark_values(spec, Origin::Immigration, |u| shot.psi_inf(u)),
    )
}

/// Every drift and variance, as one flat record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitConstants {
    pub lambda_i: f64,
    pub branching_ratio: f64,
    pub l1_rh: f64,
    pub l1_ri: f64,
    pub hawkes_drift: f64,
    pub immigration_drift: f64,
    pub combined_drift: f64,
    pub sigma_z2: f64,
    pub hawkes_count_variance: f64,
    pub immigration_count_variance: f64,
    pub combined_count_variance: f64,
    pub shot_drift_h: Option<f64>,
    pub shot_drift_i: Option<f64>,
    pub shot_var_i: Option<f64>,
    pub shot_var_h: Option<f64>,
    pub shot_var_total: Option<f64>,
    pub decomp_coef_i: Option<f64>,
    pub decomp_coef_h: Option<f64>,
    pub decomp_sigma_z: Option<f64>,
    pub decomp_cov_iz: Option<f64>,
    pub decomp_cov_hz: Option<f64>,
    pub decomp_corr_iz: Option<f64>,
    pub decomp_corr_hz: Option<f64>,
    pub decomp_closed_form_corr_iz: Option<f64>,
    pub decomp_closed_form_corr_hz: Option<f64>,
    pub decomp_total_variance: Option<f64>,
    /// `atom_<k>_{hawkes,immigration,combined}_{drift,variance}` for label marks.
    #[serde(flatten)]
    pub atoms: BTreeMap<String, f64>,
}

impl LimitConstants {
    pub fn compute(spec: &ModelSpec, table: &ResolventTable) -> Result<Self> {
        let wn = WhiteNoise::from_table(spec, table)?;
        let drifts = lln_drifts(spec, table)?;
        let ones_h = vec![1.0; wn.hawkes.len()];
        let ones_i = vec![1.0; wn.immigration.len()];
        let shot = match spec.shot() {
            Some(_) => Some(shot_clt_variances(spec, table)?),
            None => None,
        };
        let cor = decomposition(spec, table).ok();

        let mut atoms = BTreeMap::new();
        let mut labels: Vec<usize> = [Origin::Hawkes, Origin::Immigration]
            .iter()
            .flat_map(|&o| spec.marks(o).atoms().unwrap_or(&[]).iter().filter_map(|(u, _)| u.label()))
            .collect();
        labels.sort_unstable();
        labels.dedup();
        for k in labels {
            let ind = |o: Origin| mark_values(spec, o, |u| if u.label() == Some(k) { 1.0 } else { 0.0 });
            let (f_h, f_i) = (ind(Origin::Hawkes), ind(Origin::Immigration));
            atoms.insert(format!("atom_{k}_hawkes_drift"), wn.hawkes_drift() * wn.nu_h(&f_h));
            atoms.insert(format!("atom_{k}_immigration_drift"), wn.lambda * wn.nu_i(&f_i));
            atoms.insert(format!("atom_{k}_hawkes_variance"), wn.hawkes_variance(&f_h)?);
            atoms.insert(format!("atom_{k}_immigration_variance"), wn.immigration_variance(&f_i)?);
            atoms.insert(format!("atom_{k}_combined_variance"), wn.combined_variance(&f_h, &f_i)?);
        }

        Ok(Self {
            lambda_i: spec.lambda_i(),
            branching_ratio: wn.m,
            l1_rh: table.l1_rh,
            l1_ri: table.l1_ri,
            hawkes_drift: drifts.hawkes,
            immigration_drift: drifts.immigration,
            combined_drift: drifts.hawkes + drifts.immigration,
            sigma_z2: wn.sigma_z2(),
            hawkes_count_variance: wn.hawkes_variance(&ones_h)?,
            immigration_count_variance: wn.immigration_variance(&ones_i)?,
            combined_count_variance: wn.combined_variance(&ones_h, &ones_i)?,
            shot_drift_h: drifts.shot_h,
            shot_drift_i: drifts.shot_i,
            shot_var_i: shot.map(|s| s.var_i),
            shot_var_h: shot.map(|s| s.var_h),
            shot_var_total: shot.map(|s| s.var_total),
            decomp_coef_i: cor.map(|c| c.coef_i),
            decomp_coef_h: cor.map(|c| c.coef_h),
            decomp_sigma_z: cor.map(|c| c.sigma_z),
            decomp_cov_iz: cor.map(|c| c.cov_iz),
            decomp_cov_hz: cor.map(|c| c.cov_hz),
            decomp_corr_iz: cor.map(|c| c.corr_iz),
            decomp_corr_hz: cor.map(|c| c.corr_hz),
            decomp_closed_form_corr_iz: cor.map(|c| c.closed_form_corr_iz),
            decomp_closed_form_corr_hz: cor.map(|c| c.closed_form_corr_hz),
            decomp_total_variance: cor.map(|c| c.total_variance),
            atoms,
        })
    }

    /// Looks up a constant by its JSON field name.
    pub fn get(&self, name: &str) -> Option<f64> {
        let value = serde_json::to_value(self).ok()?;
        value.get(name)?.as_f64()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Exponential, MarkDistribution, PerLabel, Saturating, UnitJump, Window};
    use crate::resolvent::GridSpec;
    use std::sync::Arc;

    fn unmarked(lambda: f64, m: f64) -> WhiteNoise<f64> {
        WhiteNoise::exact(lambda, &[(1.0, m)], &[(1.0, m)]).unwrap()
    }

    fn two_atom_spec() -> ModelSpec {
        ModelSpec::builder(1.0)
            .kernel(Arc::new(PerLabel {
                kernels: vec![Arc::new(Exponential { a: 0.3, b: 1.0 }), Arc::new(Exponential { a: 0.7, b: 1.0 })],
            }))
            .marks(MarkDistribution::labels(&[0.5, 0.5]).unwrap())
            .build()
            .unwrap()
    }

    #[test]
    fn sigma_z_examples() {
        let zero = unmarked(1.0, 0.0);
        assert_eq!(zero.sigma_z2(), 0.0);
        let wn = unmarked(1.0, 0.5);
        assert!((wn.sigma_z2() - 2.0).abs() < 1e-14);
        // λ m²/(1 − m)³
        let wn = unmarked(1.7, 0.3);
        assert!((wn.sigma_z2() - 1.7 * 0.09 / 0.7f64.powi(3)).abs() < 1e-13);
    }

    #[test]
    fn count_variances() {
        let wn = unmarked(1.0, 0.5);
        assert!((wn.combined_variance(&[1.0], &[1.0]).unwrap() - 8.0).abs() < 1e-12);
        assert_eq!(wn.hawkes_variance(&[0.0]).unwrap(), 0.0);
        let wn = unmarked(2.0, 0.25);
        assert!((wn.decomposition().total_variance - 2.0 / 0.75f64.powi(3)).abs() < 1e-12);
        let poisson = unmarked(1.0, 0.0).decomposition();
        assert_eq!((poisson.coef_i, poisson.coef_h, poisson.sigma_z), (1.0, 0.0, 0.0));
        assert_eq!(poisson.total_variance, 1.0);
    }

    #[test]
    fn closed_form_correlations_are_reported_not_used() {
        let c = unmarked(1.0, 0.5).decomposition();
        let s = 2f64.sqrt();
        assert!((c.closed_form_corr_iz - 2.0 / s).abs() < 1e-12);
        // white-noise route: λ‖R‖/(√λ σ_Z) = 1/√2
        assert!((c.corr_iz - 1.0 / s).abs() < 1e-12);
        assert!(c.corr_iz <= 1.0 && c.corr_hz <= 1.0);
    }

    #[test]
    fn polarization_recovers_sigma_z() {
        let wn = WhiteNoise::<f64>::exact(1.3, &[(0.2, 0.1), (0.5, 0.6), (0.3, 0.9)], &[(0.6, 0.4), (0.4, 0.2)]).unwrap();
        let ones = vec![1.0; 3];
        let cross = wn.hawkes_intensity() * weighted(&wn.hawkes, |_, p| p.r_l1);
        let recovered = wn.hawkes_variance(&ones).unwrap() - wn.hawkes_intensity() - 2.0 * cross;
        assert!((recovered - wn.sigma_z2()).abs() < 1e-9);
    }

    #[test]
    fn centered_functionals_decouple() {
        let wn = WhiteNoise::<f64>::exact(1.0, &[(0.5, 0.3), (0.5, 0.7)], &[(0.5, 0.3), (0.5, 0.7)]).unwrap();
        let f = [1.0, -1.0];
        let expect = wn.hawkes_intensity() * 1.0;
        assert!((wn.hawkes_variance(&f).unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn algebra_agrees_with_sampled_white_noise() {
        let wn = WhiteNoise::exact(1.0, &[(0.5, 0.3), (0.5, 0.7)], &[(0.5, 0.3), (0.5, 0.7)]).unwrap();
        let fs = vec![(vec![1.0, 0.0], vec![0.0, 0.0]), (vec![0.0, 1.0], vec![0.0, 0.0]), (vec![1.0, 1.0], vec![1.0, 1.0])];
        let mc = wn.sampled_variances(&fs, 200_000, 11);
        for ((f_h, f_i), v) in fs.iter().zip(mc) {
            let exact = if f_i.iter().all(|x| *x == 0.0) {
                wn.hawkes_variance(f_h).unwrap()
            } else {
                wn.combined_variance(f_h, f_i).unwrap()
            };
            assert!((v / exact - 1.0).abs() < 0.02, "{v} vs {exact}");
        }
    }

    #[test]
    fn table_route_matches_exact_algebra() {
        let spec = two_atom_spec();
        let table = ResolventTable::solve(&spec, GridSpec { h: 1e-3, horizon: 60.0 }).unwrap();
        let wn = WhiteNoise::from_table(&spec, &table).unwrap();
        let exact = WhiteNoise::exact(1.0, &[(0.5, 0.3), (0.5, 0.7)], &[(0.5, 0.3), (0.5, 0.7)]).unwrap();
        assert!((wn.sigma_z2() - exact.sigma_z2()).abs() < 1e-4);
        let ones = [1.0, 1.0];
        let cross = wn.hawkes_intensity() * weighted(&wn.hawkes, |_, p| p.r_l1);
        let recovered = wn.hawkes_variance(&ones).unwrap() - wn.hawkes_intensity() - 2.0 * cross;
        assert!((recovered - wn.sigma_z2()).abs() < 1e-4);
    }

    #[test]
    fn drifts_examples() {
        let zero = ModelSpec::builder(1.0).build().unwrap();
        let table = ResolventTable::solve(&zero, GridSpec { h: 1e-2, horizon: 40.0 }).unwrap();
        let d = lln_drifts(&zero, &table).unwrap();
        assert_eq!((d.hawkes, d.immigration), (0.0, 1.0));

        let spec = ModelSpec::exponential(1.0, 0.5, 1.0).unwrap().with_shot(Arc::new(Saturating { b: 2.0 }));
        let table = ResolventTable::solve(&spec, GridSpec::default()).unwrap();
        let d = lln_drifts(&spec, &table).unwrap();
        assert!((d.hawkes - 1.0).abs() < 1e-4);
        assert!((d.hawkes + d.immigration - 2.0).abs() < 1e-4);
        assert!((d.shot_h.unwrap() - 1.0).abs() < 1e-4);

        let unstable = ModelSpec::exponential(1.0, 1.0, 1.0).unwrap();
        assert!(matches!(lln_drifts(&unstable, &table), Err(Error::Unstable { .. })));
    }

    #[test]
    fn shot_variances_reduce_to_counts() {
        let spec = ModelSpec::exponential(1.0, 0.5, 1.0).unwrap().with_shot(Arc::new(UnitJump));
        let table = ResolventTable::solve(&spec, GridSpec::default()).unwrap();
        let sv = shot_clt_variances(&spec, &table).unwrap();
        let count = measure_clt_variance(&spec, &table, |_| 1.0).unwrap();
        assert!((sv.var_h - count).abs() < 1e-14);
        assert!((sv.var_i - 1.0).abs() < 1e-14);

        let compact = spec.with_shot(Arc::new(Window { y: 1.0 }));
        let sv = shot_clt_variances(&compact, &table).unwrap();
        assert_eq!((sv.var_i, sv.var_h, sv.var_total), (0.0, 0.0, 0.0));
    }

    #[test]
    fn decomposition_needs_standard_form() {
        let spec = ModelSpec::builder(1.0)
            .kernel(Arc::new(Exponential { a: 0.5, b: 1.0 }))
            .mu0(Arc::new(crate::model::ConstantRate { c: 1.0 }))
            .build()
            .unwrap();
        let table = ResolventTable::solve(&spec, GridSpec { h: 1e-2, horizon: 40.0 }).unwrap();
        assert!(matches!(decomposition(&spec, &table), Err(Error::NotStandardForm(_))));
    }

    #[test]
    fn constants_json_is_flat() {
        let spec = two_atom_spec();
        let table = ResolventTable::solve(&spec, GridSpec { h: 1e-2, horizon: 60.0 }).unwrap();
        let c = LimitConstants::compute(&spec, &table).unwrap();
        let v = serde_json::to_value(&c).unwrap();
        assert!(v.as_object().unwrap().values().all(|x| x.is_number() || x.is_null()));
        assert!(c.get("atom_1_hawkes_variance").unwrap() > 0.0);
        assert!((c.get("sigma_z2").unwrap() - c.sigma_z2).abs() == 0.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_points() -> impl Strategy<Value = Vec<(f64, f64)>> {
            prop::collection::vec((0.05f64..1.0, 0.0f64..0.9), 1..5).prop_map(|raw| {
                let total: f64 = raw.iter().map(|(w, _)| w).sum();
                raw.into_iter().map(|(w, l)| (w / total, l)).collect()
            })
        }

        proptest! {
            #[test]
            fn scaling_lambda_scales_every_constant(
                h in arb_points(), i in arb_points(), lambda in 0.1f64..5.0, c in 0.1f64..10.0,
            ) {
                let a = WhiteNoise::exact(lambda, &h, &i).unwrap();
                let b = WhiteNoise::exact(lambda * c, &h, &i).unwrap();
                let f: Vec<f64> = (0..h.len()).map(|k| k as f64 - 1.0).collect();
                let g: Vec<f64> = (0..i.len()).map(|k| 0.5 * k as f64).collect();
                let pairs = [
                    (a.hawkes_drift(), b.hawkes_drift()),
                    (a.sigma_z2(), b.sigma_z2()),
                    (a.hawkes_variance(&f).unwrap(), b.hawkes_variance(&f).unwrap()),
                    (a.immigration_variance(&g).unwrap(), b.immigration_variance(&g).unwrap()),
                    (a.combined_variance(&f, &g).unwrap(), b.combined_variance(&f, &g).unwrap()),
                ];
                for (x, y) in pairs {
                    prop_assert!((y - c * x).abs() <= 1e-12 * (1.0 + y.abs()));
                }
            }

            #[test]
            fn variances_are_nonnegative(h in arb_points(), i in arb_points(), f0 in -3.0f64..3.0) {
                let wn = WhiteNoise::exact(1.0, &h, &i).unwrap();
                let f: Vec<f64> = (0..h.len()).map(|k| f0 + k as f64).collect();
                prop_assert!(wn.hawkes_variance(&f).unwrap() >= 0.0);
                prop_assert!(wn.sigma_z2() >= 0.0);
            }

            #[test]
            fn polarization_holds(h in arb_points(), i in arb_points(), lambda in 0.1f64..5.0) {
                let wn = WhiteNoise::exact(lambda, &h, &i).unwrap();
                let ones = vec![1.0; h.len()];
                let cross = wn.hawkes_intensity() * weighted(&wn.hawkes, |_, p| p.r_l1);
                let recovered = wn.hawkes_variance(&ones).unwrap() - wn.hawkes_intensity() - 2.0 * cross;
                prop_assert!((recovered - wn.sigma_z2()).abs() <= 1e-9 * (1.0 + wn.sigma_z2()));
            }

            #[test]
            fn unmarked_total_variance(m in 0.0f64..0.95, lambda in 0.1f64..5.0) {
                let wn = WhiteNoise::exact(lambda, &[(1.0, m)], &[(1.0, m)]).unwrap();
                let expect = lambda / (1.0 - m).powi(3);
                prop_assert!((wn.decomposition().total_variance - expect).abs() <= 1e-9 * expect);
            }

            #[test]
            fn single_precision_algebra(m in 0.0f32..0.9) {
                let wn = WhiteNoise::<f32>::exact(1.0, &[(1.0, m)], &[(1.0, m)]).unwrap();
                let expect = 1.0 / (1.0 - m).powi(3);
                prop_assert!((wn.decomposition().total_variance - expect).abs() <= 1e-3 * expect);
            }
        }
    }
}
