//! Bounded continuous laws with piecewise-linear densities.
//!
//! Every impact and noise law in the library is a [`BoundedDistribution`]:
//! a density given by knots `(x, f)` and linear interpolation between them.
//! The CDF is exact on each segment (a quadratic), so CDF, survivor and
//! inverse-CDF evaluations carry no quadrature error. Derived quantities that
//! need an integral (mean, the survivor of a sum) use composite Simpson with
//! `grid_resolution` cells, snapped to knots and survivor kinks.
//!
//! Noise laws are wrapped in [`NoiseSpec`], which enforces symmetry about zero.

use serde::{Deserialize, Serialize};

use crate::error::{Result, ScreenError};
use crate::numeric::{bisect, simpson};

/// Default number of quadrature cells for derived quantities.
pub const DEFAULT_GRID_RESOLUTION: usize = 4096;

/// Absolute tolerance on the total mass of a constructed density.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// Tolerance on `v` for [`BoundedDistribution::quantile_upper`].
const QUANTILE_X_TOL: f64 = 1e-13;

/// A continuous law on `[support_lo, support_hi]` with a piecewise-linear density.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundedDistribution {
    xs: Vec<f64>,
    fs: Vec<f64>,
    // CDF at each knot; cum[0] = 0, cum[last] = 1.
    cum: Vec<f64>,
    grid_resolution: usize,
    renormalization: f64,
}

impl BoundedDistribution {
    /// Uniform law on `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
            return Err(ScreenError::invalid(format!(
                "uniform requires finite lo < hi, got lo={lo}, hi={hi}"
            )));
        }
        let h = 1.0 / (hi - lo);
        Self::build(vec![lo, hi], vec![h, h], true)
    }

    /// Piecewise-linear density through `knots`, renormalized to unit mass.
    ///
    /// Interior knots must carry a strictly positive density; endpoints may be
    /// zero. The renormalization factor applied is available from
    /// [`Self::renormalization_factor`].
    pub fn piecewise_linear(knots: &[(f64, f64)]) -> Result<Self> {
        let (xs, fs): (Vec<f64>, Vec<f64>) = knots.iter().copied().unzip();
        Self::build(xs, fs, true)
    }

    /// Like [`Self::piecewise_linear`] but allows zero density at interior
    /// knots. Used for materialized posteriors whose tails underflow.
    pub(crate) fn from_density_samples(xs: Vec<f64>, fs: Vec<f64>) -> Result<Self> {
        Self::build(xs, fs, false)
    }

    fn build(xs: Vec<f64>, fs: Vec<f64>, require_interior_positive: bool) -> Result<Self> {
        if xs.len() < 2 || xs.len() != fs.len() {
            return Err(ScreenError::invalid("density needs at least two knots"));
        }
        if xs.iter().chain(&fs).any(|v| !v.is_finite()) {
            return Err(ScreenError::invalid("density knots must be finite"));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ScreenError::invalid("knot x values must be strictly increasing"));
        }
        if let Some(f) = fs.iter().find(|f| **f < 0.0) {
            return Err(ScreenError::invalid(format!("negative density value {f}")));
        }
        if require_interior_positive {
            if let Some(i) = (1..xs.len() - 1).find(|&i| fs[i] <= 0.0) {
                return Err(ScreenError::invalid(format!(
                    "density must be strictly positive inside the support; zero at x={}",
                    xs[i]
                )));
            }
        }
        let mut cum = Vec::with_capacity(xs.len());
        cum.push(0.0);
        let mut acc = 0.0;
        for i in 1..xs.len() {
            acc += 0.5 * (fs[i - 1] + fs[i]) * (xs[i] - xs[i - 1]);
            cum.push(acc);
        }
        let total = acc;
        if !(total > 0.0) {
            return Err(ScreenError::invalid("density has zero total mass"));
        }
        let fs: Vec<f64> = fs.into_iter().map(|f| f / total).collect();
        for c in cum.iter_mut() {
            *c /= total;
        }
        let last = cum.len() - 1;
        cum[last] = 1.0;
        Ok(BoundedDistribution {
            xs,
            fs,
            cum,
            grid_resolution: DEFAULT_GRID_RESOLUTION,
            renormalization: total,
        })
    }

    /// Replace the number of quadrature cells used for derived quantities.
    pub fn with_grid_resolution(mut self, grid_resolution: usize) -> Self {
        self.grid_resolution = grid_resolution.max(2);
        self
    }

    pub fn grid_resolution(&self) -> usize {
        self.grid_resolution
    }

    /// Mass of the input knots before renormalization (1 for already
    /// normalized input).
    pub fn renormalization_factor(&self) -> f64 {
        self.renormalization
    }

    pub fn support_lo(&self) -> f64 {
        self.xs[0]
    }

    pub fn support_hi(&self) -> f64 {
        self.xs[self.xs.len() - 1]
    }

    pub fn support(&self) -> (f64, f64) {
        (self.support_lo(), self.support_hi())
    }

    /// Knot abscissae.
    pub fn knot_xs(&self) -> &[f64] {
        &self.xs
    }

    /// Normalized density at each knot.
    pub fn knot_densities(&self) -> &[f64] {
        &self.fs
    }

    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs.iter().copied().zip(self.fs.iter().copied())
    }

    // Index i such that xs[i] <= x < xs[i+1], clamped to a valid segment.
    fn segment(&self, x: f64) -> usize {
        let i = self.xs.partition_point(|&k| k <= x);
        i.saturating_sub(1).min(self.xs.len() - 2)
    }

    pub fn density(&self, x: f64) -> f64 {
        if x < self.support_lo() || x > self.support_hi() || x.is_nan() {
            return 0.0;
        }
        let i = self.segment(x);
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let w = (x - x0) / (x1 - x0);
        self.fs[i] + w * (self.fs[i + 1] - self.fs[i])
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.support_lo() {
            return 0.0;
        }
        if x >= self.support_hi() {
            return 1.0;
        }
        let i = self.segment(x);
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let d = x - x0;
        let slope = (self.fs[i + 1] - self.fs[i]) / (x1 - x0);
        (self.cum[i] + d * (self.fs[i] + 0.5 * slope * d)).clamp(0.0, 1.0)
    }

    /// `Pr(X >= x)`.
    pub fn survivor(&self, x: f64) -> f64 {
        if x <= self.support_lo() {
            return 1.0;
        }
        if x >= self.support_hi() {
            return 0.0;
        }
        1.0 - self.cdf(x)
    }

    /// The value `v` with `survivor(v) = p`, located by bisection.
    pub fn quantile_upper(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(ScreenError::invalid(format!(
                "upper quantile needs p in (0,1), got {p}"
            )));
        }
        bisect(
            |v| self.survivor(v) - p,
            self.support_lo(),
            self.support_hi(),
            QUANTILE_X_TOL,
            0.0,
        )
    }

    /// Closed-form inverse CDF, `u` in `[0, 1]`. Used by the sampler.
    pub fn inverse_cdf(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return self.support_lo();
        }
        if u >= 1.0 {
            return self.support_hi();
        }
        let i = self
            .cum
            .partition_point(|&c| c <= u)
            .saturating_sub(1)
            .min(self.xs.len() - 2);
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let h = x1 - x0;
        let r = u - self.cum[i];
        let b = self.fs[i];
        let a = 0.5 * (self.fs[i + 1] - self.fs[i]) / h;
        // Solve a d^2 + b d = r in the cancellation-free form.
        let disc = (b * b + 4.0 * a * r).max(0.0);
        let denom = b + disc.sqrt();
        let d = if denom > 0.0 { 2.0 * r / denom } else { 0.0 };
        (x0 + d.clamp(0.0, h)).min(x1)
    }

    pub fn mean(&self) -> f64 {
        simpson(
            |x| x * self.density(x),
            self.support_lo(),
            self.support_hi(),
            &self.xs,
            self.grid_resolution,
        )
    }

    /// Total mass by quadrature; 1 up to rounding for a valid law.
    pub fn total_mass(&self) -> f64 {
        simpson(
            |x| self.density(x),
            self.support_lo(),
            self.support_hi(),
            &self.xs,
            self.grid_resolution,
        )
    }

    /// The same law translated by `c`.
    pub fn shifted(&self, c: f64) -> Self {
        BoundedDistribution {
            xs: self.xs.iter().map(|x| x + c).collect(),
            ..self.clone()
        }
    }

    /// Law of `X` conditioned on `X >= v` for `v` inside the support.
    pub(crate) fn truncated_below(&self, v: f64) -> Result<Self> {
        if !(v < self.support_hi()) {
            return Err(ScreenError::invalid(format!("truncation point {v} leaves no mass")));
        }
        if v <= self.support_lo() {
            return Ok(self.clone());
        }
        let mut xs = vec![v];
        let mut fs = vec![self.density(v)];
        for (x, f) in self.knots() {
            if x > v + 1e-15 {
                xs.push(x);
                fs.push(f);
            }
        }
        if xs.len() < 2 {
            xs.push(self.support_hi());
            fs.push(self.fs[self.fs.len() - 1]);
        }
        Ok(Self::build(xs, fs, false)?.with_grid_resolution(self.grid_resolution))
    }
}

/// An additive evaluation error: a bounded law symmetric about zero.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    law: BoundedDistribution,
}

impl NoiseSpec {
    /// Validate symmetry (`lo = -hi`, `f(x) = f(-x)`) and wrap the law.
    pub fn new(law: BoundedDistribution) -> Result<Self> {
        let (lo, hi) = law.support();
        let scale = hi.abs().max(1.0);
        if (lo + hi).abs() > 1e-12 * scale {
            return Err(ScreenError::invalid(format!(
                "noise support must be symmetric about zero, got [{lo}, {hi}]"
            )));
        }
        let n = law.grid_resolution();
        let grid = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64);
        for x in law.xs.iter().copied().chain(grid) {
            let (a, b) = (law.density(x), law.density(-x));
            if (a - b).abs() > 1e-9 {
                return Err(ScreenError::invalid(format!(
                    "noise density not symmetric: f({x}) = {a}, f({}) = {b}",
                    -x
                )));
            }
        }
        Ok(NoiseSpec { law })
    }

    /// `U[-half_width, half_width]`.
    pub fn uniform(half_width: f64) -> Result<Self> {
        Self::new(BoundedDistribution::uniform(-half_width, half_width)?)
    }

    pub fn law(&self) -> &BoundedDistribution {
        &self.law
    }

    /// Lower support bound of the noise.
    pub fn lower(&self) -> f64 {
        self.law.support_lo()
    }

    /// Upper support bound of the noise.
    pub fn upper(&self) -> f64 {
        self.law.support_hi()
    }

    pub fn survivor(&self, x: f64) -> f64 {
        self.law.survivor(x)
    }
}

/// Uniform law on `[lo, hi]`.
pub fn make_uniform(lo: f64, hi: f64) -> Result<BoundedDistribution> {
    BoundedDistribution::uniform(lo, hi)
}

/// Piecewise-linear law through `knots`.
pub fn make_piecewise_linear(knots: &[(f64, f64)]) -> Result<BoundedDistribution> {
    BoundedDistribution::piecewise_linear(knots)
}

/// `Pr(V + N >= t)` by quadrature of `f_V(x) * Pr(N >= t - x)`.
pub fn sum_survivor(v: &BoundedDistribution, n: &NoiseSpec, t: f64) -> f64 {
    let (lo, hi) = v.support();
    if t <= lo + n.lower() {
        return 1.0;
    }
    if t >= hi + n.upper() {
        return 0.0;
    }
    let mut breaks: Vec<f64> = v.knot_xs().to_vec();
    breaks.extend(n.law().knot_xs().iter().map(|k| t - k));
    let p = simpson(
        |x| v.density(x) * n.survivor(t - x),
        lo,
        hi,
        &breaks,
        v.grid_resolution(),
    );
    p.clamp(0.0, 1.0)
}

/// Distribution literal as accepted in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DistributionLiteral {
    Uniform { lo: f64, hi: f64 },
    Pwl { knots: Vec<[f64; 2]> },
}

impl DistributionLiteral {
    pub fn build(&self) -> Result<BoundedDistribution> {
        match self {
            DistributionLiteral::Uniform { lo, hi } => BoundedDistribution::uniform(*lo, *hi),
            DistributionLiteral::Pwl { knots } => {
                let knots: Vec<(f64, f64)> = knots.iter().map(|k| (k[0], k[1])).collect();
                BoundedDistribution::piecewise_linear(&knots)
            }
        }
    }

    pub fn build_noise(&self) -> Result<NoiseSpec> {
        NoiseSpec::new(self.build()?)
    }
}
