//! Excitation kernels `φ(t, u)`.

use std::fmt;
use std::sync::Arc;

use super::marks::Mark;

/// Excitation kernel of a marked Hawkes system.
///
/// `majorant(t, u)` must equal (or dominate) `sup_{s >= t} φ(s, u)` and be
/// non-increasing in `t`; the simulator relies on it for exact thinning.
pub trait Kernel: Send + Sync + fmt::Debug {
    fn phi(&self, t: f64, mark: &Mark) -> f64;

    fn majorant(&self, t: f64, mark: &Mark) -> f64;

    /// `‖φ(u)‖_{L¹}`.
    fn l1(&self, mark: &Mark) -> f64;

    /// `‖φ(u)‖_∞`.
    fn sup(&self, mark: &Mark) -> f64;

    /// `∫_a^b φ(s, u) ds` for `0 <= a <= b`, when a closed form exists.
    fn integral(&self, _a: f64, _b: f64, _mark: &Mark) -> Option<f64> {
        None
    }

    /// Whether `φ(·, u)` is identically zero for every mark.
    fn is_zero(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroKernel;

impl Kernel for ZeroKernel {
    fn phi(&self, _t: f64, _mark: &Mark) -> f64 {
        0.0
    }
    fn majorant(&self, _t: f64, _mark: &Mark) -> f64 {
        0.0
    }
    fn l1(&self, _mark: &Mark) -> f64 {
        0.0
    }
    fn sup(&self, _mark: &Mark) -> f64 {
        0.0
    }
    fn integral(&self, _a: f64, _b: f64, _mark: &Mark) -> Option<f64> {
        Some(0.0)
    }
    fn is_zero(&self) -> bool {
        true
    }
}

/// `φ(t) = a·e^{−bt}`.
#[derive(Debug, Clone, Copy)]
pub struct Exponential {
    pub a: f64,
    pub b: f64,
}

impl Kernel for Exponential {
    #[inline]
    fn phi(&self, t: f64, _mark: &Mark) -> f64 {
        self.a * (-self.b * t).exp()
    }
    #[inline]
    fn majorant(&self, t: f64, mark: &Mark) -> f64 {
        self.phi(t, mark)
    }
    fn l1(&self, _mark: &Mark) -> f64 {
        self.a / self.b
    }
    fn sup(&self, _mark: &Mark) -> f64 {
        self.a
    }
    fn integral(&self, a: f64, b: f64, _mark: &Mark) -> Option<f64> {
        // exp_m1 keeps short segments accurate
        Some(self.a / self.b * (-self.b * a).exp() * -(-self.b * (b - a)).exp_m1())
    }
    fn is_zero(&self) -> bool {
        self.a == 0.0
    }
}

/// `φ(t) = a·(1 + bt)^{−p}`, `p > 1`.
#[derive(Debug, Clone, Copy)]
pub struct Power {
    pub a: f64,
    pub b: f64,
    pub p: f64,
}

impl Kernel for Power {
    #[inline]
    fn phi(&self, t: f64, _mark: &Mark) -> f64 {
        self.a * (1.0 + self.b * t).powf(-self.p)
    }
    #[inline]
    fn majorant(&self, t: f64, mark: &Mark) -> f64 {
        self.phi(t, mark)
    }
    fn l1(&self, _mark: &Mark) -> f64 {
        if self.p <= 1.0 {
            return f64::INFINITY;
        }
        self.a / (self.b * (self.p - 1.0))
    }
    fn sup(&self, _mark: &Mark) -> f64 {
        self.a
    }
    fn integral(&self, a: f64, b: f64, _mark: &Mark) -> Option<f64> {
        let q = 1.0 - self.p;
        let upper = |t: f64| (1.0 + self.b * t).powf(q);
        Some(self.a / (self.b * -q) * (upper(a) - upper(b)))
    }
    fn is_zero(&self) -> bool {
        self.a == 0.0
    }
}

/// `φ(t) = a·1{t < y}`.
#[derive(Debug, Clone, Copy)]
pub struct Boxcar {
    pub a: f64,
    pub y: f64,
}

impl Kernel for Boxcar {
    #[inline]
    fn phi(&self, t: f64, _mark: &Mark) -> f64 {
        if t < self.y {
            self.a
        } else {
            0.0
        }
    }
    #[inline]
    fn majorant(&self, t: f64, mark: &Mark) -> f64 {
        self.phi(t, mark)
    }
    fn l1(&self, _mark: &Mark) -> f64 {
        self.a * self.y
    }
    fn sup(&self, _mark: &Mark) -> f64 {
        self.a
    }
    fn integral(&self, a: f64, b: f64, _mark: &Mark) -> Option<f64> {
        Some(self.a * (b.min(self.y) - a.min(self.y)).max(0.0))
    }
    fn is_zero(&self) -> bool {
        self.a == 0.0 || self.y == 0.0
    }
}

/// Dispatches on the discrete label of the mark.
#[derive(Debug, Clone)]
pub struct PerLabel {
    pub kernels: Vec<Arc<dyn Kernel>>,
}

impl PerLabel {
    #[inline]
    fn pick(&self, mark: &Mark) -> &dyn Kernel {
        let k = mark.label().unwrap_or(0);
        self.kernels[k].as_ref()
    }
}

impl Kernel for PerLabel {
    fn phi(&self, t: f64, mark: &Mark) -> f64 {
        self.pick(mark).phi(t, mark)
    }
    fn majorant(&self, t: f64, mark: &Mark) -> f64 {
        self.pick(mark).majorant(t, mark)
    }
    fn l1(&self, mark: &Mark) -> f64 {
        self.pick(mark).l1(mark)
    }
    fn sup(&self, mark: &Mark) -> f64 {
        self.pick(mark).sup(mark)
    }
    fn integral(&self, a: f64, b: f64, mark: &Mark) -> Option<f64> {
        self.pick(mark).integral(a, b, mark)
    }
    fn is_zero(&self) -> bool {
        self.kernels.iter().all(|k| k.is_zero())
    }
}
