//! Comparing screening outcomes.
//!
//! All comparisons run on the union of both laws' knots plus a uniform grid.
//! Between consecutive union points both densities are linear, so the CDF gap
//! is a quadratic whose interior extremum (if any) is added to the scan. The
//! reported sup-gaps are therefore exact for piecewise-linear inputs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{BoundedDistribution, NoiseSpec};
use crate::error::{Result, ScreenError};
use crate::numeric::bisect;
use crate::screening::{perfect_screening_target, solve_stationary, ScreeningProblem, StrategyKind};

/// Default tolerance on CDF gaps for dominance verdicts.
pub const DEFAULT_FOSD_TOL: f64 = 1e-6;

/// Bracket width at which crossing points are reported.
const CROSSING_X_TOL: f64 = 1e-10;

/// Relative size below which a density difference counts as zero.
const DENSITY_RESOLUTION: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "A_dominates")]
    ADominates,
    #[serde(rename = "B_dominates")]
    BDominates,
    #[serde(rename = "crossing")]
    Crossing,
    #[serde(rename = "indistinguishable")]
    Indistinguishable,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::ADominates => "A_dominates",
            Verdict::BDominates => "B_dominates",
            Verdict::Crossing => "crossing",
            Verdict::Indistinguishable => "indistinguishable",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// First-order stochastic dominance between two laws `A` and `B`.
///
/// `F_A <= F_B` everywhere means `A` dominates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct DominanceReport {
    pub verdict: Verdict,
    /// `max (F_A - F_B)`; evidence against `A` dominating.
    pub max_gap_A_over_B: f64,
    /// `max (F_B - F_A)`; evidence against `B` dominating.
    pub max_gap_B_over_A: f64,
    pub cdf_crossings: Vec<f64>,
    pub density_crossings: Vec<f64>,
    pub tolerance: f64,
}

impl DominanceReport {
    /// The gap that would have to vanish for `A` to dominate.
    pub fn adverse_gap_for_a(&self) -> f64 {
        self.max_gap_A_over_B.max(0.0)
    }

    pub fn adverse_gap_for_b(&self) -> f64 {
        self.max_gap_B_over_A.max(0.0)
    }
}

/// Sorted union of both knot sets and a uniform grid over the joint support.
fn union_grid(a: &BoundedDistribution, b: &BoundedDistribution) -> Vec<f64> {
    let lo = a.support_lo().min(b.support_lo());
    let hi = a.support_hi().max(b.support_hi());
    let n = a.grid_resolution().max(b.grid_resolution());
    let mut xs: Vec<f64> = Vec::with_capacity(n + a.knot_xs().len() + b.knot_xs().len() + 1);
    xs.extend((0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64));
    xs.extend_from_slice(a.knot_xs());
    xs.extend_from_slice(b.knot_xs());
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs
}

/// Union grid with the interior extrema of `F_A - F_B` inserted.
fn gap_scan_points(a: &BoundedDistribution, b: &BoundedDistribution) -> Vec<f64> {
    let grid = union_grid(a, b);
    let mut pts = Vec::with_capacity(grid.len() * 2);
    for w in grid.windows(2) {
        let (x0, x1) = (w[0], w[1]);
        pts.push(x0);
        // Evaluate just inside the cell so jumps at support edges are seen
        // from the correct side.
        let e0 = a.density(x0 + (x1 - x0) * 1e-12) - b.density(x0 + (x1 - x0) * 1e-12);
        let e1 = a.density(x1 - (x1 - x0) * 1e-12) - b.density(x1 - (x1 - x0) * 1e-12);
        if e0 * e1 < 0.0 {
            let r = x0 + (x1 - x0) * e0 / (e0 - e1);
            if r > x0 && r < x1 {
                pts.push(r);
            }
        }
    }
    if let Some(&last) = grid.last() {
        pts.push(last);
    }
    pts
}

/// Sign changes of `h` over `xs`, ignoring values with `|h| <= tol`, refined
/// by bisection.
fn refined_sign_changes<H: Fn(f64) -> f64>(h: H, xs: &[f64], tol: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    for &x in xs {
        let v = h(x);
        if v.abs() <= tol {
            continue;
        }
        if let Some((px, pv)) = prev {
            if pv.signum() != v.signum() {
                if let Ok(r) = bisect(&h, px, x, CROSSING_X_TOL, 0.0) {
                    out.push(r);
                }
            }
        }
        prev = Some((x, v));
    }
    out
}

/// Dominance verdict with CDF-gap extrema and crossing points.
pub fn check_fosd(a: &BoundedDistribution, b: &BoundedDistribution, tol: f64) -> Result<DominanceReport> {
    if !(tol > 0.0) {
        return Err(ScreenError::invalid(format!("tolerance must be positive, got {tol}")));
    }
    let pts = gap_scan_points(a, b);
    let mut ab = f64::NEG_INFINITY;
    let mut ba = f64::NEG_INFINITY;
    for &x in &pts {
        let d = a.cdf(x) - b.cdf(x);
        ab = ab.max(d);
        ba = ba.max(-d);
    }
    let verdict = match (ab <= tol, ba <= tol) {
        (true, true) => Verdict::Indistinguishable,
        (true, false) => Verdict::ADominates,
        (false, true) => Verdict::BDominates,
        (false, false) => Verdict::Crossing,
    };
    let cdf_crossings = refined_sign_changes(|x| a.cdf(x) - b.cdf(x), &pts, tol);
    Ok(DominanceReport {
        verdict,
        max_gap_A_over_B: ab,
        max_gap_B_over_A: ba,
        cdf_crossings,
        density_crossings: find_density_crossings(a, b),
        tolerance: tol,
    })
}

/// Interior points where the two densities cross.
///
/// Only the common support is scanned, and crossings within one grid cell of
/// its endpoints are dropped (both laws may vanish there).
pub fn find_density_crossings(a: &BoundedDistribution, b: &BoundedDistribution) -> Vec<f64> {
    let lo = a.support_lo().max(b.support_lo());
    let hi = a.support_hi().min(b.support_hi());
    if !(hi > lo) {
        return Vec::new();
    }
    let cell = (hi - lo) / a.grid_resolution().max(b.grid_resolution()) as f64;
    let scale = a
        .knot_densities()
        .iter()
        .chain(b.knot_densities())
        .fold(0.0f64, |m, f| m.max(*f));
    let tol = DENSITY_RESOLUTION * scale.max(1.0);
    let xs: Vec<f64> = union_grid(a, b).into_iter().filter(|x| *x >= lo && *x <= hi).collect();
    refined_sign_changes(|x| a.density(x) - b.density(x), &xs, tol)
        .into_iter()
        .filter(|x| *x > lo + cell && *x < hi - cell)
        .collect()
}

/// `sup_v |F_A(v) - F_B(v)|`.
pub fn kolmogorov_distance(a: &BoundedDistribution, b: &BoundedDistribution) -> f64 {
    gap_scan_points(a, b)
        .into_iter()
        .map(|x| (a.cdf(x) - b.cdf(x)).abs())
        .fold(0.0, f64::max)
}

/// Rows `(v, F_A, F_B, F_A - F_B)` on the union grid.
pub fn cdf_gap_table(a: &BoundedDistribution, b: &BoundedDistribution) -> Vec<[f64; 4]> {
    union_grid(a, b)
        .into_iter()
        .map(|x| {
            let (fa, fb) = (a.cdf(x), b.cdf(x));
            [x, fa, fb, fa - fb]
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distinctness {
    NotDistinct,
    EpsDistinct,
    FullyEpsDistinct,
}

impl Distinctness {
    pub fn is_eps_distinct(&self) -> bool {
        !matches!(self, Distinctness::NotDistinct)
    }
}

/// Classify a two-stage capacity profile `(p_1, p_2)`.
///
/// `eps`-distinct: `max(p_1, p_2) < 1 - eps`. Fully: additionally
/// `eps < p_2 < 1 - eps`.
pub fn classify_distinctness(stage_capacities: (f64, f64), eps: f64) -> Result<Distinctness> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(ScreenError::invalid(format!("eps must lie in (0, 1/2), got {eps}")));
    }
    let (p1, p2) = stage_capacities;
    for p in [p1, p2] {
        if !(p > 0.0 && p <= 1.0) {
            return Err(ScreenError::invalid(format!(
                "stage capacity must lie in (0,1], got {p}"
            )));
        }
    }
    if p1.max(p2) >= 1.0 - eps {
        return Ok(Distinctness::NotDistinct);
    }
    if eps < p2 && p2 < 1.0 - eps {
        Ok(Distinctness::FullyEpsDistinct)
    } else {
        Ok(Distinctness::EpsDistinct)
    }
}

/// Interval length `c = N_upper - N_0` with `Pr(N >= N_0) = eps`.
///
/// Any impact law supported on an interval shorter than `c` satisfies
/// `Pr(V + N >= t) > eps  =>  t < V_lower + N_upper`.
pub fn lemma1_support_bound(noise: &NoiseSpec, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(ScreenError::invalid(format!("eps must lie in (0,1), got {eps}")));
    }
    let n0 = noise.law().quantile_upper(eps)?;
    Ok(noise.upper() - n0)
}

/// Kolmogorov distance to the perfect-screening target as `k` grows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCurve {
    pub stage_counts: Vec<usize>,
    pub distances: Vec<f64>,
    pub strategy_kind: StrategyKind,
    /// Solved thresholds per `k` (all equal for the fixed-threshold kind).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub thresholds: Vec<Vec<f64>>,
}

impl ConvergenceCurve {
    /// CSV with header `k,distance`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,distance\n");
        for (k, d) in self.stage_counts.iter().zip(&self.distances) {
            s.push_str(&format!("{},{}\n", k, crate::cli::fmt_num(*d)));
        }
        s
    }
}

/// For each `k`, solve the stationary strategy of `kind` on `(V, {N}^k, p)`
/// and measure the distance of its posterior to `V | V >= v_p`.
pub fn convergence_curve(
    v: &BoundedDistribution,
    noise: &NoiseSpec,
    p: f64,
    ks: &[usize],
    kind: StrategyKind,
) -> Result<ConvergenceCurve> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(ScreenError::invalid("stage counts must be a nonempty list of k >= 1"));
    }
    let target = perfect_screening_target(v, p)?;
    let rows: Vec<(f64, Vec<f64>)> = ks
        .par_iter()
        .map(|&k| {
            let sp = ScreeningProblem::iid(v.clone(), noise.clone(), k, p)?;
            let (post, strategy) = solve_stationary(&sp, kind)?;
            let d = kolmogorov_distance(&post.to_distribution()?, &target);
            Ok((d, strategy.thresholds))
        })
        .collect::<Result<_>>()?;
    let (distances, thresholds) = rows.into_iter().unzip();
    Ok(ConvergenceCurve {
        stage_counts: ks.to_vec(),
        distances,
        strategy_kind: kind,
        thresholds,
    })
}
