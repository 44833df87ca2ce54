//! Exact path simulation by thinning, and path functionals.
//!
//! Immigration events form a homogeneous Poisson stream generated up front.
//! Hawkes candidates are proposed under the bound
//! `Z̄(t) = sup_{s>=t} μ₀(s) + Σ_j M(t − t_j, u_j)`, which only decreases between
//! events, and accepted with probability `Z(t−)/Z̄(t)`.

pub mod io;

use rand::Rng;
use rand_distr::{Distribution, Exp, Exp1};

use crate::error::{Error, Result};
use crate::model::{Kernel, Mark, ModelSpec, Origin, ShotShape};
use crate::rng::{substream, StreamRole};

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time: f64,
    pub mark: Mark,
    pub origin: Origin,
}

/// One simulated realization on `[0, horizon]`, events in time order
/// (immigration first at equal times).
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub events: Vec<Event>,
    pub horizon: f64,
    pub spec_hash: u64,
    pub seed: u64,
    pub replica: u64,
    pub accepted: u64,
    pub proposed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    /// Largest admissible thinning bound.
    pub intensity_cap: f64,
    /// Past events leave the bound (and the intensity) once their majorant
    /// drops below `truncation · λ_I`.
    pub truncation: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { intensity_cap: 1e9, truncation: 1e-12 }
    }
}

pub fn simulate_path(spec: &ModelSpec, horizon: f64, seed: u64) -> Result<PathRecord> {
    simulate_replica(spec, horizon, seed, 0, &SimOptions::default())
}

/// Path number `replica` of the family keyed by `seed`.
pub fn simulate_replica(
    spec: &ModelSpec,
    horizon: f64,
    seed: u64,
    replica: u64,
    opts: &SimOptions,
) -> Result<PathRecord> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidSpec(format!("horizon {horizon} must be positive and finite")));
    }
    let mut imm_times = substream(seed, replica, StreamRole::ImmigrationTimes);
    let mut imm_marks = substream(seed, replica, StreamRole::ImmigrationMarks);
    let mut proposals = substream(seed, replica, StreamRole::HawkesProposals);
    let mut hawkes_marks = substream(seed, replica, StreamRole::HawkesMarks);

    let gap = Exp::new(spec.lambda_i()).map_err(|e| Error::InvalidSpec(format!("immigration rate: {e}")))?;
    let mut immigration = Vec::new();
    let mut s = 0.0;
    loop {
        s += gap.sample(&mut imm_times);
        if s > horizon {
            break;
        }
        immigration.push(Event { time: s, mark: spec.nu_i().sample(&mut imm_marks), origin: Origin::Immigration });
    }

    let kernel = spec.kernel();
    let mu0 = spec.mu0();
    let floor = opts.truncation * spec.lambda_i();
    let mut events: Vec<Event> = Vec::with_capacity(2 * immigration.len() + 16);
    let mut active: Vec<usize> = Vec::new();
    let mut pending = immigration.into_iter().peekable();
    let (mut accepted, mut proposed) = (0u64, 0u64);
    let mut t = 0.0;

    loop {
        let mut bound = mu0.majorant(t);
        active.retain(|&j| {
            let e = &events[j];
            let m = kernel.majorant(t - e.time, &e.mark);
            bound += m;
            m >= floor && m > 0.0
        });
        if !(bound <= opts.intensity_cap) {
            return Err(Error::IntensityBlowup { bound, cap: opts.intensity_cap, t });
        }
        let next_imm = pending.peek().map_or(f64::INFINITY, |e| e.time);
        let candidate = if bound > 0.0 {
            let w: f64 = Exp1.sample(&mut proposals);
            t + w / bound
        } else {
            f64::INFINITY
        };
        if next_imm <= candidate && next_imm <= horizon {
            t = next_imm;
            events.push(pending.next().expect("peeked"));
            active.push(events.len() - 1);
            continue;
        }
        if candidate > horizon {
            break;
        }
        t = candidate;
        proposed += 1;
        let z = mu0.rate(t) + active.iter().map(|&j| kernel.phi(t - events[j].time, &events[j].mark)).sum::<f64>();
        if z > bound {
            return Err(Error::MajorantViolated { t, intensity: z, bound });
        }
        let u: f64 = proposals.random();
        if u * bound < z {
            accepted += 1;
            events.push(Event { time: t, mark: spec.nu_h().sample(&mut hawkes_marks), origin: Origin::Hawkes });
            active.push(events.len() - 1);
        }
    }

    Ok(PathRecord { events, horizon, spec_hash: spec.fingerprint(), seed, replica, accepted, proposed })
}

impl PathRecord {
    fn check(&self, t: f64) -> Result<()> {
        if !(t >= 0.0 && t <= self.horizon) {
            return Err(Error::OutOfRange { t, horizon: self.horizon });
        }
        Ok(())
    }

    /// Number of events strictly before `t`.
    pub fn before(&self, t: f64) -> usize {
        self.events.partition_point(|e| e.time < t)
    }

    /// Number of events at or before `t`.
    pub fn up_to(&self, t: f64) -> usize {
        self.events.partition_point(|e| e.time <= t)
    }

    pub fn count(&self, origin: Origin) -> usize {
        self.events.iter().filter(|e| e.origin == origin).count()
    }

    /// Accepted over proposed Hawkes candidates.
    pub fn acceptance_ratio(&self) -> Option<f64> {
        (self.proposed > 0).then(|| self.accepted as f64 / self.proposed as f64)
    }
}

/// Left-limit intensity `Z(t−)`.
pub fn intensity_at(spec: &ModelSpec, path: &PathRecord, t: f64) -> Result<f64> {
    path.check(t)?;
    let kernel = spec.kernel();
    Ok(spec.mu0().rate(t)
        + path.events[..path.before(t)].iter().map(|e| kernel.phi(t - e.time, &e.mark)).sum::<f64>())
}

/// Step of the Riemann fallback for integrals without a closed form.
pub const RIEMANN_STEP: f64 = 0.01;

fn riemann(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let n = ((b - a) / RIEMANN_STEP).ceil().max(1.0) as usize;
    let h = (b - a) / n as f64;
    (0..n).map(|i| f(a + (i as f64 + 0.5) * h)).sum::<f64>() * h
}

fn kernel_integral(kernel: &dyn Kernel, age: f64, mark: &Mark) -> f64 {
    kernel.integral(0.0, age, mark).unwrap_or_else(|| riemann(|s| kernel.phi(s, mark), 0.0, age))
}

/// `∫_0^t Z(s) ds`.
pub fn cumulative_intensity(spec: &ModelSpec, path: &PathRecord, t: f64) -> Result<f64> {
    path.check(t)?;
    let kernel = spec.kernel();
    let mu0 = spec.mu0();
    let base = mu0.integral(0.0, t).unwrap_or_else(|| riemann(|s| mu0.rate(s), 0.0, t));
    Ok(base + path.events[..path.before(t)].iter().map(|e| kernel_integral(kernel, t - e.time, &e.mark)).sum::<f64>())
}

/// `∫_0^t Z(s) ds` at every time of the sorted list `ts`.
pub fn cumulative_intensity_many(spec: &ModelSpec, path: &PathRecord, ts: &[f64]) -> Result<Vec<f64>> {
    ts.iter().map(|&t| cumulative_intensity(spec, path, t)).collect()
}

/// `(S_H^ψ(t), S_I^ψ(t))`, summing `ψ(t − s, u)` over events at or before `t`.
pub fn shot_noise_at(path: &PathRecord, shot: &dyn ShotShape, t: f64) -> Result<(f64, f64)> {
    path.check(t)?;
    let (mut h, mut i) = (0.0, 0.0);
    for e in &path.events[..path.up_to(t)] {
        let v = shot.psi(t - e.time, &e.mark);
        match e.origin {
            Origin::Hawkes => h += v,
            Origin::Immigration => i += v,
        }
    }
    Ok((h, i))
}

/// Hawkes events in `(0, t]` whose mark satisfies `pred`.
pub fn counting(path: &PathRecord, t: f64, pred: impl Fn(&Mark) -> bool) -> Result<usize> {
    counting_origin(path, t, Origin::Hawkes, pred)
}

/// Events of one stream in `(0, t]` whose mark satisfies `pred`.
pub fn counting_origin(path: &PathRecord, t: f64, origin: Origin, pred: impl Fn(&Mark) -> bool) -> Result<usize> {
    path.check(t)?;
    Ok(path.events[..path.up_to(t)].iter().filter(|e| e.origin == origin && pred(&e.mark)).count())
}
