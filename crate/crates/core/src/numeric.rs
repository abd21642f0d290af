//! Quadrature and root-finding primitives shared by every module.
//!
//! Integrals use composite Simpson on a uniform grid whose cell boundaries are
//! snapped to caller-supplied breakpoints (density knots, survivor kinks), so
//! each Simpson panel sees a smooth integrand. Root finding is bisection only.

use crate::error::{Result, ScreenError};

/// Breakpoints closer than this are merged.
const BREAK_MERGE: f64 = 1e-13;

/// Precomputed Simpson nodes and weights over `[lo, hi]`.
#[derive(Debug, Clone)]
pub struct SimpsonRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl SimpsonRule {
    /// Build a rule with roughly `resolution` cells over `[lo, hi]`, with panel
    /// boundaries at every breakpoint that falls strictly inside the interval.
    pub fn new(lo: f64, hi: f64, breaks: &[f64], resolution: usize) -> Self {
        if !(hi > lo) {
            return SimpsonRule {
                nodes: vec![lo],
                weights: vec![0.0],
            };
        }
        let mut cuts: Vec<f64> = Vec::with_capacity(breaks.len() + 2);
        cuts.push(lo);
        let mut inner: Vec<f64> = breaks
            .iter()
            .copied()
            .filter(|b| b.is_finite() && *b > lo + BREAK_MERGE && *b < hi - BREAK_MERGE)
            .collect();
        inner.sort_by(f64::total_cmp);
        for b in inner {
            if b - cuts[cuts.len() - 1] > BREAK_MERGE {
                cuts.push(b);
            }
        }
        cuts.push(hi);

        let span = hi - lo;
        let resolution = resolution.max(2) as f64;
        let mut nodes = Vec::with_capacity(resolution as usize + 2 * cuts.len() + 1);
        let mut weights = Vec::with_capacity(nodes.capacity());
        nodes.push(lo);
        weights.push(0.0);
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let mut n = ((b - a) / span * resolution).ceil() as usize;
            n = n.max(2);
            if n % 2 == 1 {
                n += 1;
            }
            let h = (b - a) / n as f64;
            let last = weights.len() - 1;
            weights[last] += h / 3.0;
            for i in 1..=n {
                let x = if i == n { b } else { a + i as f64 * h };
                let w = if i == n {
                    h / 3.0
                } else if i % 2 == 1 {
                    4.0 * h / 3.0
                } else {
                    2.0 * h / 3.0
                };
                nodes.push(x);
                weights.push(w);
            }
        }
        SimpsonRule { nodes, weights }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    /// Integrate precomputed integrand values taken at [`Self::nodes`].
    pub fn integrate_values(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.weights.len());
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }
}

/// Composite Simpson of `f` on `[lo, hi]` with kink snapping.
pub fn simpson<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, breaks: &[f64], resolution: usize) -> f64 {
    SimpsonRule::new(lo, hi, breaks, resolution).integrate(f)
}

/// Bisection for a root of `g` on `[lo, hi]`.
///
/// Stops once the bracket is narrower than `x_tol` or `|g(mid)| <= f_tol`.
/// `g(lo)` and `g(hi)` must not share a strict sign.
pub fn bisect<G: Fn(f64) -> f64>(g: G, mut lo: f64, mut hi: f64, x_tol: f64, f_tol: f64) -> Result<f64> {
    let mut g_lo = g(lo);
    let g_hi = g(hi);
    if g_lo == 0.0 {
        return Ok(lo);
    }
    if g_hi == 0.0 {
        return Ok(hi);
    }
    if g_lo.signum() == g_hi.signum() {
        return Err(ScreenError::Bracket(format!(
            "no sign change on [{lo}, {hi}]: g = {g_lo:e}, {g_hi:e}"
        )));
    }
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= x_tol || mid <= lo || mid >= hi {
            return Ok(mid);
        }
        let g_mid = g(mid);
        if g_mid.abs() <= f_tol {
            return Ok(mid);
        }
        if g_mid.signum() == g_lo.signum() {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: KahanSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_exact_on_cubics() {
        let v = simpson(|x| x * x * x - 2.0 * x, 0.0, 2.0, &[], 8);
        assert!((v - 0.0).abs() < 1e-14);
    }

    #[test]
    fn snapping_handles_kinks() {
        // |x - 0.3| has a kink off-grid; snapping makes Simpson exact.
        let v = simpson(|x: f64| (x - 0.3).abs(), 0.0, 1.0, &[0.3], 10);
        let exact = 0.3 * 0.3 / 2.0 + 0.7 * 0.7 / 2.0;
        assert!((v - exact).abs() < 1e-15);
    }

    #[test]
    fn bisect_finds_sqrt2() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14, 0.0).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn bisect_rejects_bad_bracket() {
        assert!(bisect(|x| x * x + 1.0, -1.0, 1.0, 1e-12, 0.0).is_err());
    }

    #[test]
    fn kahan_recovers_small_terms() {
        let mut k = KahanSum::default();
        k.add(1.0);
        for _ in 0..10 {
            k.add(1e-16);
        }
        assert!((k.value() - (1.0 + 1e-15)).abs() < 1e-18);
    }
}
