//! Deterministic exogenous intensities `μ₀(t)`.

use std::fmt;

pub trait Exogenous: Send + Sync + fmt::Debug {
    fn rate(&self, t: f64) -> f64;

    /// `sup_{s >= t} μ₀(s)`, non-increasing in `t`.
    fn majorant(&self, t: f64) -> f64;

    /// `∫_a^b μ₀(s) ds`, when a closed form exists.
    fn integral(&self, _a: f64, _b: f64) -> Option<f64> {
        None
    }

    fn sup(&self) -> f64 {
        self.majorant(0.0)
    }

    /// `∫_0^∞ μ₀(s)^p ds`; infinite for non-integrable rates.
    fn lp_norm_pow(&self, p: f64) -> f64;

    fn is_zero(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroRate;

impl Exogenous for ZeroRate {
    fn rate(&self, _t: f64) -> f64 {
        0.0
    }
    fn majorant(&self, _t: f64) -> f64 {
        0.0
    }
    fn integral(&self, _a: f64, _b: f64) -> Option<f64> {
        Some(0.0)
    }
    fn lp_norm_pow(&self, _p: f64) -> f64 {
        0.0
    }
    fn is_zero(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantRate {
    pub c: f64,
}

impl Exogenous for ConstantRate {
    fn rate(&self, _t: f64) -> f64 {
        self.c
    }
    fn majorant(&self, _t: f64) -> f64 {
        self.c
    }
    fn integral(&self, a: f64, b: f64) -> Option<f64> {
        Some(self.c * (b - a))
    }
    fn lp_norm_pow(&self, _p: f64) -> f64 {
        if self.c == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
    fn is_zero(&self) -> bool {
        self.c == 0.0
    }
}

/// `μ₀(t) = c·e^{−bt}`.
#[derive(Debug, Clone, Copy)]
pub struct DecayingRate {
    pub c: f64,
    pub b: f64,
}

impl Exogenous for DecayingRate {
    fn rate(&self, t: f64) -> f64 {
        self.c * (-self.b * t).exp()
    }
    fn majorant(&self, t: f64) -> f64 {
        self.rate(t)
    }
    fn integral(&self, a: f64, b: f64) -> Option<f64> {
        Some(self.c / self.b * ((-self.b * a).exp() - (-self.b * b).exp()))
    }
    fn lp_norm_pow(&self, p: f64) -> f64 {
        self.c.powf(p) / (p * self.b)
    }
    fn is_zero(&self) -> bool {
        self.c == 0.0
    }
}

/// `μ₀(t) = c·1{t < y}`.
#[derive(Debug, Clone, Copy)]
pub struct WindowRate {
    pub c: f64,
    pub y: f64,
}

impl Exogenous for WindowRate {
    fn rate(&self, t: f64) -> f64 {
        if t < self.y {
            self.c
        } else {
            0.0
        }
    }
    fn majorant(&self, t: f64) -> f64 {
        self.rate(t)
    }
    fn integral(&self, a: f64, b: f64) -> Option<f64> {
        Some(self.c * (b.min(self.y) - a.min(self.y)).max(0.0))
    }
    fn lp_norm_pow(&self, p: f64) -> f64 {
        self.c.powf(p) * self.y
    }
    fn is_zero(&self) -> bool {
        self.c == 0.0
    }
}
