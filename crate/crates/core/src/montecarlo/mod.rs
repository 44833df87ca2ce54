//! Rescaled path functionals and Monte Carlo checks of the limit laws.
//!
//! A functional `F` evaluated on a path of horizon `T` is rescaled as
//! `√T·(F(Tt)/T − drift·t)` on a grid of `[0, 1]` for the central limit checks,
//! and as `sup_t |F(Tt)/T − drift·t|` for the laws of large numbers.

pub mod stats;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::limits::LimitConstants;
use crate::model::{Mark, ModelSpec, Origin, ShotShape};
use crate::simulate::{self, PathRecord, SimOptions};

use stats::{covariance, ks_normal, moments, KsResult, Quantiles};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Lln,
    #[default]
    Clt,
}

/// The path functional under test. `label` restricts a measure to one
/// discrete mark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Functional {
    HawkesMeasure {
        #[serde(default)]
        label: Option<usize>,
    },
    ImmigrationMeasure {
        #[serde(default)]
        label: Option<usize>,
    },
    CombinedMeasure {
        #[serde(default)]
        label: Option<usize>,
    },
    CumulativeIntensity,
    ShotHawkes,
    ShotImmigration,
    ShotCombined,
}

/// Drift and limit variance (per unit time) of a functional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub drift: f64,
    pub variance: f64,
}

impl Functional {
    pub fn reference(&self, c: &LimitConstants) -> Result<Reference> {
        let atom = |k: usize, key: &str| {
            c.atoms
                .get(&format!("atom_{k}_{key}"))
                .copied()
                .ok_or_else(|| Error::Config(format!("label {k} is not a discrete mark of the model")))
        };
        let shot = |v: Option<f64>| v.ok_or_else(|| Error::Config("model has no shot shape".into()));
        let (drift, variance) = match *self {
            Functional::HawkesMeasure { label: None } => (c.hawkes_drift, c.hawkes_count_variance),
            Functional::HawkesMeasure { label: Some(k) } => (atom(k, "hawkes_drift")?, atom(k, "hawkes_variance")?),
            Functional::ImmigrationMeasure { label: None } => (c.immigration_drift, c.immigration_count_variance),
            Functional::ImmigrationMeasure { label: Some(k) } => {
                (atom(k, "immigration_drift")?, atom(k, "immigration_variance")?)
            }
            Functional::CombinedMeasure { label: None } => (c.combined_drift, c.combined_count_variance),
            Functional::CombinedMeasure { label: Some(k) } => (
                atom(k, "hawkes_drift")? + atom(k, "immigration_drift")?,
                atom(k, "combined_variance")?,
            ),
            Functional::CumulativeIntensity => (c.hawkes_drift, c.sigma_z2),
            Functional::ShotHawkes => (shot(c.shot_drift_h)?, shot(c.shot_var_h)?),
            Functional::ShotImmigration => (shot(c.shot_drift_i)?, shot(c.shot_var_i)?),
            Functional::ShotCombined => (shot(c.shot_drift_h)? + shot(c.shot_drift_i)?, shot(c.shot_var_total)?),
        };
        Ok(Reference { drift, variance })
    }

    fn origins(&self) -> (bool, bool) {
        match self {
            Functional::HawkesMeasure { .. } | Functional::ShotHawkes => (true, false),
            Functional::ImmigrationMeasure { .. } | Functional::ShotImmigration => (false, true),
            _ => (true, true),
        }
    }

    fn label(&self) -> Option<usize> {
        match *self {
            Functional::HawkesMeasure { label }
            | Functional::ImmigrationMeasure { label }
            | Functional::CombinedMeasure { label } => label,
            _ => None,
        }
    }

    fn is_measure(&self) -> bool {
        matches!(
            self,
            Functional::HawkesMeasure { .. } | Functional::ImmigrationMeasure { .. } | Functional::CombinedMeasure { .. }
        )
    }

    fn relevant(&self, origin: Origin, mark: &Mark) -> bool {
        let (h, i) = self.origins();
        let by_origin = match origin {
            Origin::Hawkes => h,
            Origin::Immigration => i,
        };
        by_origin && self.label().is_none_or(|k| mark.label() == Some(k))
    }
}

/// `k/g` for `k = 1..=g`.
pub fn unit_grid(g: usize) -> Vec<f64> {
    (1..=g).map(|k| k as f64 / g as f64).collect()
}

/// Raw functional values `F(s)` at path times `s`.
fn evaluate(spec: &ModelSpec, path: &PathRecord, f: &Functional, times: &[f64]) -> Result<Vec<f64>> {
    if f.is_measure() {
        let rel: Vec<f64> = path.events.iter().filter(|e| f.relevant(e.origin, &e.mark)).map(|e| e.time).collect();
        return times
            .iter()
            .map(|&s| {
                if !(0.0..=path.horizon).contains(&s) {
                    return Err(Error::OutOfRange { t: s, horizon: path.horizon });
                }
                Ok(rel.partition_point(|&x| x <= s) as f64)
            })
            .collect();
    }
    match f {
        Functional::CumulativeIntensity => simulate::cumulative_intensity_many(spec, path, times),
        _ => {
            let shot = spec.shot().ok_or_else(|| Error::Config("model has no shot shape".into()))?;
            let (h, i) = f.origins();
            times
                .iter()
                .map(|&s| {
                    let (sh, si) = simulate::shot_noise_at(path, shot, s)?;
                    Ok(if h { sh } else { 0.0 } + if i { si } else { 0.0 })
                })
                .collect()
        }
    }
}

/// `√T·(F(Tt)/T − drift·t)` at the grid times `t ∈ [0, 1]`.
pub fn rescale(
    spec: &ModelSpec,
    path: &PathRecord,
    scale: f64,
    grid: &[f64],
    f: &Functional,
    drift: f64,
) -> Result<Vec<f64>> {
    let abs: Vec<f64> = grid.iter().map(|t| t * scale).collect();
    let raw = evaluate(spec, path, f, &abs)?;
    Ok(raw.iter().zip(grid).map(|(v, t)| scale.sqrt() * (v / scale - drift * t)).collect())
}

/// Rescaled Hawkes, immigration or combined counting error.
pub fn rescale_measure(
    path: &PathRecord,
    scale: f64,
    grid: &[f64],
    f: &Functional,
    drift: f64,
) -> Result<Vec<f64>> {
    if !f.is_measure() {
        return Err(Error::Config(format!("{f:?} is not a point-measure functional")));
    }
    let empty = ModelSpec::builder(1.0).build()?;
    rescale(&empty, path, scale, grid, f, drift)
}

/// `√T·(∫_0^{Tt} Z ds / T − drift·t)`.
pub fn rescale_cumulative_intensity(
    spec: &ModelSpec,
    path: &PathRecord,
    scale: f64,
    grid: &[f64],
    drift: f64,
) -> Result<Vec<f64>> {
    rescale(spec, path, scale, grid, &Functional::CumulativeIntensity, drift)
}

/// Rescaled errors of `S_H^ψ` and `S_I^ψ`.
pub fn rescale_shot(
    path: &PathRecord,
    shot: &dyn ShotShape,
    scale: f64,
    grid: &[f64],
    drift_h: f64,
    drift_i: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut h = Vec::with_capacity(grid.len());
    let mut i = Vec::with_capacity(grid.len());
    for &t in grid {
        let (sh, si) = simulate::shot_noise_at(path, shot, t * scale)?;
        h.push(scale.sqrt() * (sh / scale - drift_h * t));
        i.push(scale.sqrt() * (si / scale - drift_i * t));
    }
    Ok((h, i))
}

/// `sup_{t∈[0,1]} |F(Tt)/T − drift·t|` over a uniform grid of `points + 1`
/// times plus every relevant event time, where both one-sided limits are
/// taken. Exact for counting functionals; jumps of ψ at positive ages are not
/// resolved.
pub fn sup_deviation(
    spec: &ModelSpec,
    path: &PathRecord,
    scale: f64,
    f: &Functional,
    drift: f64,
    points: usize,
) -> Result<f64> {
    if scale > path.horizon {
        return Err(Error::OutOfRange { t: scale, horizon: path.horizon });
    }
    let dev = |v: f64, s: f64| (v / scale - drift * s / scale).abs();
    let grid: Vec<f64> = (0..=points).map(|k| scale * k as f64 / points as f64).collect();
    let mut sup = evaluate(spec, path, f, &grid)?.iter().zip(&grid).map(|(v, &s)| dev(*v, s)).fold(0.0, f64::max);

    let events: Vec<(f64, usize)> = path
        .events
        .iter()
        .enumerate()
        .filter(|(_, e)| e.time <= scale && f.relevant(e.origin, &e.mark))
        .map(|(j, e)| (e.time, j))
        .collect();
    if f.is_measure() {
        for (n, &(s, _)) in events.iter().enumerate() {
            sup = sup.max(dev(n as f64, s)).max(dev((n + 1) as f64, s));
        }
        return Ok(sup);
    }
    let times: Vec<f64> = events.iter().map(|e| e.0).collect();
    let right = evaluate(spec, path, f, &times)?;
    for (&s, r) in times.iter().zip(&right) {
        sup = sup.max(dev(*r, s));
    }
    if let Some(shot) = spec.shot() {
        // left limits: drop the jumps of events at s itself
        for (&(s, _), r) in events.iter().zip(&right) {
            let at_s: f64 = path.events[path.before(s)..path.up_to(s)]
                .iter()
                .filter(|e| f.relevant(e.origin, &e.mark))
                .map(|e| shot.psi(0.0, &e.mark))
                .sum();
            sup = sup.max(dev(r - at_s, s));
        }
    }
    Ok(sup)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Relative tolerance on the variance at `t = 1`.
    pub variance_rel: f64,
    /// Relative tolerance on the covariance at `(1/2, 1)`.
    pub covariance_rel: f64,
    /// Smallest acceptable KS p-value.
    pub ks_p_min: f64,
    /// Absolute bound on the variance when the limit variance is zero.
    pub zero_variance_abs: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { variance_rel: 0.10, covariance_rel: 0.15, ks_p_min: 0.01, zero_variance_abs: 0.05 }
    }
}

fn default_grid() -> usize {
    10
}

fn default_sup_points() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Set by the command line subcommand when run from a config file.
    #[serde(default)]
    pub mode: Mode,
    pub functional: Functional,
    /// Path horizons `T`.
    pub scales: Vec<f64>,
    pub replicas: usize,
    /// Number of grid times `k/grid` in `(0, 1]`.
    #[serde(default = "default_grid")]
    pub grid: usize,
    /// Taken from the top level of a config file.
    #[serde(skip)]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Replaces the computed limit variance.
    #[serde(default)]
    pub reference_variance: Option<f64>,
    #[serde(default = "default_sup_points")]
    pub sup_points: usize,
}

impl ExperimentConfig {
    pub fn check(&self) -> Result<()> {
        if self.replicas < 2 {
            return Err(Error::Config(format!("replicas = {} but at least 2 are needed", self.replicas)));
        }
        if self.grid == 0 || self.sup_points == 0 {
            return Err(Error::Config("grid and sup_points must be positive".into()));
        }
        if self.scales.is_empty() || self.scales.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(Error::Config("scales must be a non-empty list of positive horizons".into()));
        }
        if self.scales.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("scales must be strictly increasing".into()));
        }
        if self.scales.len() >= (1 << 20) || self.replicas >= (1 << 32) {
            return Err(Error::Config("too many scales or replicas".into()));
        }
        let t = &self.tolerances;
        if [t.variance_rel, t.covariance_rel, t.ks_p_min, t.zero_variance_abs].iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Config("tolerances must be non-negative".into()));
        }
        if let Some(v) = self.reference_variance {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("reference_variance {v} must be non-negative")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub scale: Option<f64>,
    pub estimate: f64,
    pub reference: f64,
    pub tolerance: f64,
    pub status: Status,
}

impl Verdict {
    fn relative(name: &str, scale: f64, estimate: f64, reference: f64, tolerance: f64) -> Self {
        let pass = ((estimate - reference) / reference).abs() <= tolerance;
        Self::new(name, Some(scale), estimate, reference, tolerance, pass)
    }

    fn new(name: &str, scale: Option<f64>, estimate: f64, reference: f64, tolerance: f64, pass: bool) -> Self {
        Self {
            name: name.into(),
            scale,
            estimate,
            reference,
            tolerance,
            status: if pass { Status::Pass } else { Status::Fail },
        }
    }

    fn skipped(name: &str, scale: Option<f64>, reference: f64) -> Self {
        Self { name: name.into(), scale, estimate: f64::NAN, reference, tolerance: f64::NAN, status: Status::Skipped }
    }
}

/// Replica values of one rescaled functional at one scale.
#[derive(Debug, Clone, PartialEq)]
pub struct RescaledSample {
    pub scale: f64,
    pub grid: Vec<f64>,
    pub functional: Functional,
    /// `values[r][k]` at grid time `k` of replica `r`.
    pub values: Vec<Vec<f64>>,
    pub sup_deviations: Vec<f64>,
}

impl RescaledSample {
    pub fn column(&self, k: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[k]).collect()
    }
}

/// Simulates `replicas` paths of horizon `scale` and rescales them.
/// Replica `r` of scale number `s` uses substream `(s << 32) | r`.
pub fn sample_scale(
    spec: &ModelSpec,
    reference: Reference,
    config: &ExperimentConfig,
    scale_index: usize,
) -> Result<RescaledSample> {
    let scale = config.scales[scale_index];
    let grid = unit_grid(config.grid);
    let f = config.functional;
    let opts = SimOptions::default();
    let records: Vec<Result<(Vec<f64>, f64)>> = (0..config.replicas)
        .into_par_iter()
        .map(|r| {
            let index = ((scale_index as u64) << 32) | r as u64;
            let path = simulate::simulate_replica(spec, scale, config.seed, index, &opts)?;
            let values = rescale(spec, &path, scale, &grid, &f, reference.drift)?;
            let sup = match config.mode {
                Mode::Lln => sup_deviation(spec, &path, scale, &f, reference.drift, config.sup_points)?,
                Mode::Clt => f64::NAN,
            };
            Ok((values, sup))
        })
        .collect();
    let mut values = Vec::with_capacity(records.len());
    let mut sup_deviations = Vec::with_capacity(records.len());
    for rec in records {
        let (v, s) = rec?;
        values.push(v);
        sup_deviations.push(s);
    }
    Ok(RescaledSample { scale, grid, functional: f, values, sup_deviations })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleStats {
    pub scale: f64,
    pub replicas: usize,
    pub grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub se_mean: Vec<f64>,
    pub se_variance: Vec<f64>,
    pub predicted_variance: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub covariance_se: Vec<Vec<f64>>,
    /// At `t = 1` against the predicted normal.
    pub ks: Option<KsResult>,
    pub sup_deviation: Option<Quantiles>,
    pub verdicts: Vec<Verdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub mode: Mode,
    pub functional: Functional,
    pub seed: u64,
    pub spec_hash: String,
    pub drift: f64,
    pub reference_variance: f64,
    pub scales: Vec<ScaleStats>,
    /// Checks across scales.
    pub verdicts: Vec<Verdict>,
    pub pass: bool,
}

impl StatsReport {
    pub fn all_verdicts(&self) -> impl Iterator<Item = &Verdict> {
        self.scales.iter().flat_map(|s| s.verdicts.iter()).chain(self.verdicts.iter())
    }

    /// `scale,t,mean,variance,se_mean,se_variance,predicted_variance` rows.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "scale,t,mean,variance,se_mean,se_variance,predicted_variance")?;
        for s in &self.scales {
            for k in 0..s.grid.len() {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{}",
                    s.scale, s.grid[k], s.mean[k], s.variance[k], s.se_mean[k], s.se_variance[k], s.predicted_variance[k]
                )?;
            }
        }
        Ok(())
    }
}

/// Aggregates one scale, in replica order.
pub fn summarize(sample: &RescaledSample, reference: f64, mode: Mode, tol: &Tolerances) -> Result<ScaleStats> {
    let g = sample.grid.len();
    let columns: Vec<Vec<f64>> = (0..g).map(|k| sample.column(k)).collect();
    let ms = columns.iter().map(|c| moments(c)).collect::<Result<Vec<_>>>()?;
    let mut cov = vec![vec![0.0; g]; g];
    let mut cov_se = vec![vec![0.0; g]; g];
    for a in 0..g {
        for b in a..g {
            let (c, se) = covariance(&columns[a], &columns[b])?;
            cov[a][b] = c;
            cov[b][a] = c;
            cov_se[a][b] = se;
            cov_se[b][a] = se;
        }
    }
    let last = g - 1;
    let n = sample.values.len();
    let ks = if n >= 100 && reference > 0.0 {
        Some(ks_normal(&columns[last], 0.0, reference * sample.grid[last])?)
    } else {
        None
    };
    let sup = (mode == Mode::Lln).then(|| Quantiles::of(&sample.sup_deviations));

    let mut verdicts = Vec::new();
    if mode == Mode::Clt {
        let t1 = sample.grid[last];
        let var = ms[last].variance;
        verdicts.push(if reference > 0.0 {
            Verdict::relative("variance_t1", sample.scale, var, reference * t1, tol.variance_rel)
        } else {
            Verdict::new("variance_t1", Some(sample.scale), var, 0.0, tol.zero_variance_abs, var <= tol.zero_variance_abs)
        });
        if g % 2 == 0 && reference > 0.0 {
            let half = g / 2 - 1;
            verdicts.push(Verdict::relative(
                "covariance_half_one",
                sample.scale,
                cov[half][last],
                reference * sample.grid[half],
                tol.covariance_rel,
            ));
        } else {
            verdicts.push(Verdict::skipped("covariance_half_one", Some(sample.scale), reference * 0.5));
        }
        verdicts.push(match &ks {
            Some(k) => Verdict::new("ks_t1", Some(sample.scale), k.p_value, tol.ks_p_min, tol.ks_p_min, k.p_value > tol.ks_p_min),
            None => Verdict::skipped("ks_t1", Some(sample.scale), tol.ks_p_min),
        });
    }
    Ok(ScaleStats {
        scale: sample.scale,
        replicas: n,
        grid: sample.grid.clone(),
        mean: ms.iter().map(|m| m.mean).collect(),
        variance: ms.iter().map(|m| m.variance).collect(),
        se_mean: ms.iter().map(|m| m.se_mean).collect(),
        se_variance: ms.iter().map(|m| m.se_variance).collect(),
        predicted_variance: sample.grid.iter().map(|t| reference * t).collect(),
        covariance: cov,
        covariance_se: cov_se,
        ks,
        sup_deviation: sup,
        verdicts,
    })
}

/// Runs every scale of the experiment. Deterministic in the config, whatever
/// the size of the thread pool.
pub fn run_experiment(spec: &ModelSpec, constants: &LimitConstants, config: &ExperimentConfig) -> Result<StatsReport> {
    config.check()?;
    let mut reference = config.functional.reference(constants)?;
    if let Some(v) = config.reference_variance {
        reference.variance = v;
    }
    let mut scales = Vec::with_capacity(config.scales.len());
    for s in 0..config.scales.len() {
        let sample = sample_scale(spec, reference, config, s)?;
        scales.push(summarize(&sample, reference.variance, config.mode, &config.tolerances)?);
    }
    let mut verdicts = Vec::new();
    if config.mode == Mode::Lln {
        let medians: Vec<f64> = scales.iter().filter_map(|s| s.sup_deviation.map(|q| q.median)).collect();
        if medians.len() >= 2 {
            for (w, s) in medians.windows(2).zip(&scales[1..]) {
                verdicts.push(Verdict::new("median_sup_decreasing", Some(s.scale), w[1], w[0], 0.0, w[1] < w[0]));
            }
        } else {
            verdicts.push(Verdict::skipped("median_sup_decreasing", None, f64::NAN));
        }
    }
    let pass = scales.iter().flat_map(|s| &s.verdicts).chain(&verdicts).all(|v| v.status != Status::Fail);
    Ok(StatsReport {
        mode: config.mode,
        functional: config.functional,
        seed: config.seed,
        spec_hash: format!("{:016x}", spec.fingerprint()),
        drift: reference.drift,
        reference_variance: reference.variance,
        scales,
        verdicts,
        pass,
    })
}
