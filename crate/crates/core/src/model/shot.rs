//! Shot shapes `ψ(t, u)` driving shot-noise functionals.

use std::fmt;

use super::marks::Mark;

pub trait ShotShape: Send + Sync + fmt::Debug {
    /// `ψ(t, u)` for event age `t >= 0`.
    fn psi(&self, t: f64, mark: &Mark) -> f64;

    /// `ψ(∞, u)`.
    fn psi_inf(&self, mark: &Mark) -> f64;

    /// `ψᶜ(t, u) = ψ(∞, u) − ψ(t, u)`: impact still to come after age `t`.
    fn tail(&self, t: f64, mark: &Mark) -> f64 {
        self.psi_inf(mark) - self.psi(t, mark)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroShot;

impl ShotShape for ZeroShot {
    fn psi(&self, _t: f64, _mark: &Mark) -> f64 {
        0.0
    }
    fn psi_inf(&self, _mark: &Mark) -> f64 {
        0.0
    }
}

/// `ψ(t) = 1{t >= 0}`: every event counts once, at birth.
#[derive(Debug, Clone, Copy, Default)]
pub struct UnitJump;

impl ShotShape for UnitJump {
    fn psi(&self, t: f64, _mark: &Mark) -> f64 {
        if t >= 0.0 {
            1.0
        } else {
            0.0
        }
    }
    fn psi_inf(&self, _mark: &Mark) -> f64 {
        1.0
    }
}

/// `ψ(t) = 1 − e^{−bt}`.
#[derive(Debug, Clone, Copy)]
pub struct Saturating {
    pub b: f64,
}

impl ShotShape for Saturating {
    fn psi(&self, t: f64, _mark: &Mark) -> f64 {
        -(-self.b * t).exp_m1()
    }
    fn psi_inf(&self, _mark: &Mark) -> f64 {
        1.0
    }
    fn tail(&self, t: f64, _mark: &Mark) -> f64 {
        (-self.b * t).exp()
    }
}

/// `ψ(t) = 1{t < y}`: compact support, so `ψ(∞) = 0`.
#[derive(Debug, Clone, Copy)]
pub struct Window {
    pub y: f64,
}

impl ShotShape for Window {
    fn psi(&self, t: f64, _mark: &Mark) -> f64 {
        if (0.0..self.y).contains(&t) {
            1.0
        } else {
            0.0
        }
    }
    fn psi_inf(&self, _mark: &Mark) -> f64 {
        0.0
    }
}

/// `ψ(t) = t ∧ y`.
#[derive(Debug, Clone, Copy)]
pub struct CappedAge {
    pub y: f64,
}

impl ShotShape for CappedAge {
    fn psi(&self, t: f64, _mark: &Mark) -> f64 {
        t.clamp(0.0, self.y)
    }
    fn psi_inf(&self, _mark: &Mark) -> f64 {
        self.y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tails_vanish() {
        let m = Mark::Label(0);
        let shapes: [&dyn ShotShape; 4] =
            [&UnitJump, &Saturating { b: 1.0 }, &Window { y: 2.0 }, &CappedAge { y: 3.0 }];
        for s in shapes {
            assert!(s.tail(60.0, &m).abs() < 1e-12, "{s:?}");
            assert!(s.psi_inf(&m).is_finite());
        }
        assert_eq!(Window { y: 2.0 }.tail(1.0, &m), -1.0);
    }
}
