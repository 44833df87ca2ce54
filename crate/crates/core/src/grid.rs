//! Uniform-grid discretisations of functions on `[0, horizon]`.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Values `v[i] ≈ f(i·h)` for `i = 0..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction<S> {
    h: S,
    values: Vec<S>,
}

impl<S: Scalar> GridFunction<S> {
    pub fn new(h: S, values: Vec<S>) -> Result<Self> {
        if !(h > S::zero() && h.is_finite()) {
            return Err(Error::GridMismatch(format!("step {h} must be positive")));
        }
        if values.len() < 2 {
            return Err(Error::GridMismatch("grid needs at least two points".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::GridMismatch(format!("non-finite value at index {i}")));
        }
        Ok(Self { h, values })
    }

    /// Samples `f` at `0, h, …, n·h` with `n = round(horizon / h)`.
    pub fn sample(h: S, horizon: S, f: impl Fn(S) -> S) -> Result<Self> {
        let n = (horizon / h).round().to_usize().unwrap_or(0).max(1);
        Self::new(h, (0..=n).map(|i| f(h * S::from_usize_lossy(i))).collect())
    }

    pub fn zeros_like(other: &Self) -> Self {
        Self { h: other.h, values: vec![S::zero(); other.values.len()] }
    }

    pub fn h(&self) -> S {
        self.h
    }

    /// Number of intervals `n`.
    pub fn intervals(&self) -> usize {
        self.values.len() - 1
    }

    pub fn horizon(&self) -> S {
        self.h * S::from_usize_lossy(self.intervals())
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn time(&self, i: usize) -> S {
        self.h * S::from_usize_lossy(i)
    }

    pub fn same_grid(&self, other: &Self) -> Result<()> {
        if self.h != other.h || self.values.len() != other.values.len() {
            return Err(Error::GridMismatch(format!(
                "h = {} / {}, n = {} / {}",
                self.h,
                other.h,
                self.intervals(),
                other.intervals()
            )));
        }
        Ok(())
    }

    /// Linear interpolation at `t`, clamped to the grid.
    pub fn at(&self, t: S) -> S {
        if t <= S::zero() {
            return self.values[0];
        }
        let x = t / self.h;
        let i = x.floor().to_usize().unwrap_or(usize::MAX);
        if i >= self.intervals() {
            return *self.values.last().expect("non-empty grid");
        }
        let frac = x - S::from_usize_lossy(i);
        self.values[i] + (self.values[i + 1] - self.values[i]) * frac
    }

    /// Trapezoidal integral over the whole grid.
    pub fn trapezoid(&self) -> S {
        self.partial_trapezoid(0, self.intervals())
    }

    /// Trapezoidal integral over `[from·h, to·h]`.
    pub fn partial_trapezoid(&self, from: usize, to: usize) -> S {
        if to <= from {
            return S::zero();
        }
        let half = S::lit(0.5);
        let interior: S = self.values[from + 1..to].iter().copied().sum();
        self.h * (half * (self.values[from] + self.values[to]) + interior)
    }

    /// Running trapezoidal integral `∫_0^{i·h}`.
    pub fn cumulative(&self) -> Self {
        let half = S::lit(0.5) * self.h;
        let mut acc = S::zero();
        let mut out = Vec::with_capacity(self.values.len());
        out.push(S::zero());
        for w in self.values.windows(2) {
            acc = acc + half * (w[0] + w[1]);
            out.push(acc);
        }
        Self { h: self.h, values: out }
    }

    pub fn max_abs_diff(&self, other: &Self) -> S {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (*a - *b).abs())
            .fold(S::zero(), S::max)
    }

    /// Writes `t,value` rows after a one-line header.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "t,value")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{},{}", self.time(i), v)?;
        }
        Ok(())
    }
}

impl GridFunction<f64> {
    pub fn read_csv(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines();
        match lines.next() {
            Some(Ok(header)) if header.trim() == "t,value" => {}
            _ => return Err(Error::Format("grid CSV must start with 't,value'".into())),
        }
        let mut times = Vec::new();
        let mut values = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (t, v) = line
                .split_once(',')
                .ok_or_else(|| Error::Format(format!("malformed grid row '{line}'")))?;
            let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Format(format!("{e}: '{s}'")));
            times.push(parse(t)?);
            values.push(parse(v)?);
        }
        if times.len() < 2 {
            return Err(Error::Format("grid CSV needs two rows".into()));
        }
        let h = times[1] - times[0];
        Self::new(h, values)
    }
}
