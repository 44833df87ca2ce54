//! Volterra resolvent solvers on uniform grids.
//!
//! The resolvent `R_H` of the mark-averaged kernel `φ_H` solves
//! `R_H = φ_H + R_H ∗ φ_H`; the cross resolvents `R_I = φ_I + R_H ∗ φ_I` and
//! `R(·, u) = φ(·, u) + R_H ∗ φ(·, u)` are plain convolutions once `R_H` is
//! known. All convolutions use the trapezoidal rule, so the scheme is second
//! order for kernels that are smooth on `[0, ∞)`.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::model::{branching_ratio, Mark, ModelSpec, Origin};
use crate::scalar::Scalar;

/// Dot product `Σ_k a[k]·b[k]` with four independent accumulators.
#[inline]
fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    let mut acc = [S::zero(); 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let k = 4 * c;
        acc[0] = acc[0] + a[k] * b[k];
        acc[1] = acc[1] + a[k + 1] * b[k + 1];
        acc[2] = acc[2] + a[k + 2] * b[k + 2];
        acc[3] = acc[3] + a[k + 3] * b[k + 3];
    }
    let mut tail = S::zero();
    for k in 4 * chunks..a.len() {
        tail = tail + a[k] * b[k];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Interior sum `Σ_{j=1}^{i−1} a[j]·b[i−j]` using `b_rev[k] = b[n−k]`.
#[inline]
fn interior<S: Scalar>(a: &[S], b_rev: &[S], i: usize) -> S {
    if i < 2 {
        return S::zero();
    }
    let n = b_rev.len() - 1;
    // b[i−j] for j = 1..i−1 is b_rev[n−i+j]
    dot(&a[1..i], &b_rev[n + 1 - i..n])
}

/// Trapezoidal convolution `(a ∗ b)(t_i) = ∫_0^{t_i} a(t_i − s) b(s) ds`.
pub fn convolve<S: Scalar>(a: &GridFunction<S>, b: &GridFunction<S>) -> Result<GridFunction<S>> {
    a.same_grid(b)?;
    let h = a.h();
    let half = S::lit(0.5);
    let av = a.values();
    let bv = b.values();
    let b_rev: Vec<S> = bv.iter().rev().copied().collect();
    let out = (0..av.len())
        .map(|i| {
            if i == 0 {
                return S::zero();
            }
            h * (half * (av[0] * bv[i] + av[i] * bv[0]) + interior(av, &b_rev, i))
        })
        .collect();
    GridFunction::new(h, out)
}

/// Solves `R = φ + R ∗ φ` forward in time.
///
/// At step `i` the unknown `R[i]` enters the trapezoidal convolution with
/// weight `h·φ[0]/2` and is isolated algebraically.
pub fn solve_resolvent<S: Scalar>(phi: &GridFunction<S>) -> Result<GridFunction<S>> {
    let h = phi.h();
    let pv = phi.values();
    if let Some(i) = pv.iter().position(|v| *v < S::zero()) {
        return Err(Error::InvalidKernel(format!("negative kernel value at grid index {i}")));
    }
    let mass = phi.trapezoid();
    if mass >= S::one() {
        return Err(Error::Unstable { ratio: mass.as_f64() });
    }
    let half = S::lit(0.5);
    let diag = h * pv[0] * half;
    if diag >= S::one() {
        return Err(Error::StepTooCoarse(diag.as_f64()));
    }
    let scale = S::one() / (S::one() - diag);
    let phi_rev: Vec<S> = pv.iter().rev().copied().collect();
    let mut r = Vec::with_capacity(pv.len());
    r.push(pv[0]);
    for i in 1..pv.len() {
        let known = half * r[0] * pv[i] + interior(&r, &phi_rev, i);
        r.push((pv[i] + h * known) * scale);
    }
    GridFunction::new(h, r)
}

/// `R_I = φ_I + R_H ∗ φ_I`.
pub fn solve_cross_resolvent<S: Scalar>(phi_i: &GridFunction<S>, rh: &GridFunction<S>) -> Result<GridFunction<S>> {
    let conv = convolve(rh, phi_i)?;
    let values = phi_i.values().iter().zip(conv.values()).map(|(p, c)| *p + *c).collect();
    GridFunction::new(phi_i.h(), values)
}

/// `R(·, u) = φ(·, u) + R_H ∗ φ(·, u)`.
pub fn mark_resolvent<S: Scalar>(phi_u: &GridFunction<S>, rh: &GridFunction<S>) -> Result<GridFunction<S>> {
    solve_cross_resolvent(phi_u, rh)
}

/// `max_i |R[i] − φ[i] − (R ∗ φ)[i]|`.
pub fn resolvent_residual<S: Scalar>(phi: &GridFunction<S>, r: &GridFunction<S>) -> Result<S> {
    let conv = convolve(r, phi)?;
    Ok(r.values()
        .iter()
        .zip(phi.values())
        .zip(conv.values())
        .map(|((r, p), c)| (*r - *p - *c).abs())
        .fold(S::zero(), S::max))
}

/// Total mass and tail behaviour of a nonnegative grid function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailSummary<S> {
    /// Grid mass plus extrapolated mass beyond the horizon.
    pub l1: S,
    /// Extrapolated mass beyond the horizon.
    pub extrapolated: S,
    /// Least-squares slope of `log ∫_t^∞ g` against `log t` over the last
    /// tenth of the grid; `None` when `g` vanishes there.
    pub tail_fit: Option<S>,
    /// Whether `tail_fit <= −θ` for the requested `θ`.
    pub decays_at_rate: Option<bool>,
}

/// Least-squares slope of `y` against `x`.
fn ls_slope<S: Scalar>(xs: &[S], ys: &[S]) -> Option<(S, S)> {
    if xs.len() < 2 {
        return None;
    }
    let n = S::from_usize_lossy(xs.len());
    let mx = xs.iter().copied().sum::<S>() / n;
    let my = ys.iter().copied().sum::<S>() / n;
    let sxx: S = xs.iter().map(|x| (*x - mx) * (*x - mx)).sum();
    let sxy: S = xs.iter().zip(ys).map(|(x, y)| (*x - mx) * (*y - my)).sum();
    if sxx <= S::zero() {
        return None;
    }
    let slope = sxy / sxx;
    let rss: S = xs.iter().zip(ys).map(|(x, y)| {
        let e = *y - my - slope * (*x - mx);
        e * e
    }).sum();
    Some((slope, rss))
}

/// Mass beyond the horizon, from whichever of an exponential or a power-law
/// decay model fits the last tenth of the grid better.
fn extrapolate_tail<S: Scalar>(g: &GridFunction<S>, start: usize) -> Result<S> {
    let n = g.intervals();
    let v = g.values();
    let last = v[n];
    if last == S::zero() {
        return Ok(S::zero());
    }
    let stride = ((n - start) / 200).max(1);
    let idx: Vec<usize> = (start..=n).step_by(stride).filter(|&i| v[i] > S::zero() && i > 0).collect();
    let ts: Vec<S> = idx.iter().map(|&i| g.time(i)).collect();
    let logs: Vec<S> = idx.iter().map(|&i| v[i].ln()).collect();
    let log_ts: Vec<S> = ts.iter().map(|t| t.ln()).collect();
    let horizon = g.horizon();
    let exp_fit = ls_slope(&ts, &logs).filter(|(k, _)| *k < S::zero());
    let pow_fit = ls_slope(&log_ts, &logs).filter(|(q, _)| *q < -S::one());
    let too_short = || Error::HorizonTooShort {
        tail_mass: g.partial_trapezoid(start, n).as_f64(),
        total: g.trapezoid().as_f64(),
    };
    match (exp_fit, pow_fit) {
        (Some((k, rss_e)), Some((q, rss_p))) => {
            if rss_e <= rss_p {
                Ok(last / -k)
            } else {
                Ok(last * horizon / (-q - S::one()))
            }
        }
        (Some((k, _)), None) => Ok(last / -k),
        (None, Some((q, _))) => Ok(last * horizon / (-q - S::one())),
        (None, None) => Err(too_short()),
    }
}

/// Total mass with tail extrapolation, and the fitted tail decay exponent.
pub fn l1_and_tail<S: Scalar>(g: &GridFunction<S>, theta: S) -> Result<TailSummary<S>> {
    let v = g.values();
    if let Some(i) = v.iter().position(|x| *x < -S::lit(1e-8) * g.h()) {
        return Err(Error::InvalidKernel(format!("negative value at grid index {i}")));
    }
    let n = g.intervals();
    let start = n - (n / 10).max(1);
    let total = g.trapezoid();
    if total <= S::zero() {
        return Ok(TailSummary { l1: S::zero(), extrapolated: S::zero(), tail_fit: None, decays_at_rate: None });
    }
    let decade = g.partial_trapezoid(start, n);
    if decade > S::lit(0.1) * total {
        return Err(Error::HorizonTooShort { tail_mass: decade.as_f64(), total: total.as_f64() });
    }
    let extrapolated = extrapolate_tail(g, start)?;

    let stride = ((n - start) / 200).max(1);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in (start.max(1)..=n).step_by(stride) {
        let tail = g.partial_trapezoid(i, n) + extrapolated;
        if tail > S::zero() {
            xs.push(g.time(i).ln());
            ys.push(tail.ln());
        }
    }
    let tail_fit = ls_slope(&xs, &ys).map(|(s, _)| s);
    Ok(TailSummary {
        l1: total + extrapolated,
        extrapolated,
        tail_fit,
        decays_at_rate: tail_fit.map(|s| s <= -theta),
    })
}

/// Step and horizon of the resolvent grids.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub h: f64,
    pub horizon: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { h: 1e-3, horizon: 40.0 }
    }
}

const MAX_AUTO_HORIZON: f64 = 2000.0;
const MAX_AUTO_POINTS: f64 = 50_000.0;

impl GridSpec {
    /// `h = 1e-3` and a horizon of at least 20 resolvent decay times.
    ///
    /// The decay rate of `R_H` is estimated as `(1 − m)/τ` with `τ` the ratio of
    /// the kernel mass to its peak value.
    pub fn auto(spec: &ModelSpec) -> Result<Self> {
        let m = branching_ratio(spec)?;
        if m >= 1.0 {
            return Err(Error::Unstable { ratio: m });
        }
        let peak = (0..=1000)
            .map(|i| spec.mean_kernel(i as f64 * 0.01, Origin::Hawkes))
            .fold(0.0f64, f64::max);
        let horizon = if m == 0.0 || peak == 0.0 {
            40.0
        } else {
            let tau = m / peak;
            (20.0 * tau / (1.0 - m)).clamp(40.0, MAX_AUTO_HORIZON)
        };
        let h = (horizon / MAX_AUTO_POINTS).max(1e-3);
        Ok(Self { h, horizon })
    }
}

/// Per-atom resolvent `R(·, u)` for a discrete mark.
#[derive(Debug, Clone)]
pub struct MarkResolvent {
    pub mark: Mark,
    pub grid: GridFunction<f64>,
    pub l1: f64,
}

/// Grids of `R_H`, `R_I`, `R(·, u)` and `E[Z(t)]` for one model.
#[derive(Debug, Clone)]
pub struct ResolventTable {
    pub grid: GridSpec,
    pub phi_h: GridFunction<f64>,
    pub phi_i: GridFunction<f64>,
    pub rh: GridFunction<f64>,
    pub ri: GridFunction<f64>,
    pub marks: Vec<MarkResolvent>,
    pub mean_z: GridFunction<f64>,
    pub l1_rh: f64,
    pub l1_ri: f64,
}

impl ResolventTable {
    pub fn solve(spec: &ModelSpec, grid: GridSpec) -> Result<Self> {
        let m = branching_ratio(spec)?;
        if m >= 1.0 {
            return Err(Error::Unstable { ratio: m });
        }
        let phi_h = GridFunction::sample(grid.h, grid.horizon, |t| spec.mean_kernel(t, Origin::Hawkes))?;
        let phi_i = GridFunction::sample(grid.h, grid.horizon, |t| spec.mean_kernel(t, Origin::Immigration))?;
        let rh = solve_resolvent(&phi_h)?;
        let ri = solve_cross_resolvent(&phi_i, &rh)?;
        let theta = spec.moments().theta0;
        let l1_rh = l1_and_tail(&rh, theta)?.l1;
        let l1_ri = l1_and_tail(&ri, theta)?.l1;

        let mut atoms: Vec<Mark> = Vec::new();
        for nu in [spec.nu_h(), spec.nu_i()] {
            for (u, _) in nu.atoms().unwrap_or(&[]) {
                if !atoms.contains(u) {
                    atoms.push(u.clone());
                }
            }
        }
        let marks = atoms
            .into_par_iter()
            .map(|u| {
                let phi_u = GridFunction::sample(grid.h, grid.horizon, |t| spec.kernel().phi(t, &u))?;
                let r = mark_resolvent(&phi_u, &rh)?;
                let l1 = l1_and_tail(&r, theta)?.l1;
                Ok(MarkResolvent { mark: u, grid: r, l1 })
            })
            .collect::<Result<Vec<_>>>()?;

        let mut table = Self { grid, phi_h, phi_i, rh, ri, marks, mean_z: GridFunction::new(grid.h, vec![0.0; 2])?, l1_rh, l1_ri };
        table.mean_z = mean_intensity(spec, &table)?;
        Ok(table)
    }

    /// Per-atom `‖R(u)‖_{L¹}` for a discrete mark, if tabulated.
    pub fn mark_l1(&self, mark: &Mark) -> Option<f64> {
        self.marks.iter().find(|r| &r.mark == mark).map(|r| r.l1)
    }

    /// Writes `rh.csv`, `ri.csv`, `mean_z.csv`, one `mark_<k>.csv` per atom and `manifest.json`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let write = |name: &str, g: &GridFunction<f64>| -> Result<()> {
            let f = fs::File::create(dir.join(name))?;
            g.write_csv(std::io::BufWriter::new(f))
        };
        write("rh.csv", &self.rh)?;
        write("ri.csv", &self.ri)?;
        write("mean_z.csv", &self.mean_z)?;
        let mut mark_entries = Vec::new();
        for (k, r) in self.marks.iter().enumerate() {
            let name = format!("mark_{k}.csv");
            write(&name, &r.grid)?;
            mark_entries.push(ManifestMark { file: name, label: r.mark.label(), l1: r.l1 });
        }
        let manifest = Manifest {
            h: self.grid.h,
            horizon: self.rh.horizon(),
            intervals: self.rh.intervals(),
            l1_rh: self.l1_rh,
            l1_ri: self.l1_ri,
            files: vec!["rh.csv".into(), "ri.csv".into(), "mean_z.csv".into()],
            marks: mark_entries,
        };
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub h: f64,
    pub horizon: f64,
    pub intervals: usize,
    pub l1_rh: f64,
    pub l1_ri: f64,
    pub files: Vec<String>,
    pub marks: Vec<ManifestMark>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ManifestMark {
    pub file: String,
    pub label: Option<usize>,
    pub l1: f64,
}

/// `E[Z(t)] = μ₀(t) + (R_H ∗ μ₀)(t) + λ_I ∫_0^t R_I(s) ds`.
pub fn mean_intensity(spec: &ModelSpec, table: &ResolventTable) -> Result<GridFunction<f64>> {
    let rh = &table.rh;
    let mu = GridFunction::sample(rh.h(), rh.horizon(), |t| spec.mu0().rate(t))?;
    mu.same_grid(rh)?;
    table.ri.same_grid(rh)?;
    let lambda = spec.lambda_i();
    let conv = if spec.mu0().is_zero() { GridFunction::zeros_like(&mu) } else { convolve(rh, &mu)? };
    let cum_ri = table.ri.cumulative();
    let values = mu
        .values()
        .iter()
        .zip(conv.values())
        .zip(cum_ri.values())
        .map(|((m, c), r)| m + c + lambda * r)
        .collect();
    GridFunction::new(rh.h(), values)
}
