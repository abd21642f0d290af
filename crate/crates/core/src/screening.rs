//! k-stage screening: posterior propagation and threshold solvers.
//!
//! A survivor of stages `1..=k` has impact density proportional to
//! `f_V(v) * prod_i Pr(N_i >= t_i - v)`. [`FactorizedPosterior`] keeps that
//! product in factored form and integrates it on demand, so every stage
//! capacity is a quadrature of the original impact density rather than of an
//! interpolated intermediate.

use serde::{Deserialize, Serialize};

use crate::distributions::{BoundedDistribution, NoiseSpec};
use crate::error::{Result, ScreenError};
use crate::numeric::{bisect, SimpsonRule};

/// Target accuracy of every threshold solver on the realized capacity.
pub const CAPACITY_TOL: f64 = 1e-8;

/// Materialization drift above which the grid is declared too coarse.
pub const DRIFT_LIMIT: f64 = 1e-4;

// Bisection stops a little inside CAPACITY_TOL.
const SOLVER_F_TOL: f64 = 1e-11;
const SOLVER_X_TOL: f64 = 1e-15;

/// `SP = (V, {N_i}, p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScreeningProblem {
    impact: BoundedDistribution,
    noises: Vec<NoiseSpec>,
    capacity: f64,
}

impl ScreeningProblem {
    pub fn new(impact: BoundedDistribution, noises: Vec<NoiseSpec>, capacity: f64) -> Result<Self> {
        if noises.is_empty() {
            return Err(ScreenError::invalid("a screening problem needs at least one stage"));
        }
        if !(capacity > 0.0 && capacity < 1.0) {
            return Err(ScreenError::invalid(format!(
                "capacity must lie in (0,1), got {capacity}"
            )));
        }
        Ok(ScreeningProblem {
            impact,
            noises,
            capacity,
        })
    }

    /// `k` stages of the same noise.
    pub fn iid(impact: BoundedDistribution, noise: NoiseSpec, stages: usize, capacity: f64) -> Result<Self> {
        Self::new(impact, vec![noise; stages], capacity)
    }

    pub fn impact(&self) -> &BoundedDistribution {
        &self.impact
    }

    pub fn noises(&self) -> &[NoiseSpec] {
        &self.noises
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    pub fn stages(&self) -> usize {
        self.noises.len()
    }

    pub fn is_iid(&self) -> bool {
        self.noises.iter().all(|n| n == &self.noises[0])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    FixedThreshold,
    FixedCapacity,
    Explicit,
}

impl StrategyKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            StrategyKind::FixedThreshold => "fixed_threshold",
            StrategyKind::FixedCapacity => "fixed_capacity",
            StrategyKind::Explicit => "explicit",
        }
    }
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = ScreenError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed_threshold" => Ok(StrategyKind::FixedThreshold),
            "fixed_capacity" => Ok(StrategyKind::FixedCapacity),
            "explicit" => Ok(StrategyKind::Explicit),
            other => Err(ScreenError::invalid(format!("unknown strategy kind `{other}`"))),
        }
    }
}

/// Thresholds together with the stage capacities they realize.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdStrategy {
    pub thresholds: Vec<f64>,
    pub stage_capacities: Vec<f64>,
    pub overall_capacity: f64,
    pub kind: StrategyKind,
    /// Stages whose threshold lies below the lowest reachable score (p_i = 1).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub no_op_stages: Vec<usize>,
}

impl ThresholdStrategy {
    fn from_posterior(post: &FactorizedPosterior, kind: StrategyKind) -> Self {
        ThresholdStrategy {
            thresholds: post.factors.iter().map(|(_, t)| *t).collect(),
            stage_capacities: post.stage_capacities.clone(),
            overall_capacity: post.normalization,
            kind,
            no_op_stages: post.no_op_stages.clone(),
        }
    }

    pub fn stages(&self) -> usize {
        self.thresholds.len()
    }
}

/// `f_V(t) * prod_i Pr(N_i >= t_i - t) / prod_i p_i`, kept in factored form.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorizedPosterior {
    base: BoundedDistribution,
    factors: Vec<(NoiseSpec, f64)>,
    normalization: f64,
    stage_capacities: Vec<f64>,
    no_op_stages: Vec<usize>,
    support_lo_effective: f64,
}

impl FactorizedPosterior {
    /// The unscreened prior.
    pub fn new(base: BoundedDistribution) -> Self {
        let lo = base.support_lo();
        FactorizedPosterior {
            base,
            factors: Vec::new(),
            normalization: 1.0,
            stage_capacities: Vec::new(),
            no_op_stages: Vec::new(),
            support_lo_effective: lo,
        }
    }

    pub fn base(&self) -> &BoundedDistribution {
        &self.base
    }

    pub fn factors(&self) -> &[(NoiseSpec, f64)] {
        &self.factors
    }

    /// Product of realized stage capacities so far.
    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    pub fn stage_capacities(&self) -> &[f64] {
        &self.stage_capacities
    }

    pub fn support_lo_effective(&self) -> f64 {
        self.support_lo_effective
    }

    pub fn support_hi(&self) -> f64 {
        self.base.support_hi()
    }

    /// Unnormalized density `f_V(t) * prod_i G_i(t_i - t)`.
    pub fn unnormalized_density(&self, t: f64) -> f64 {
        if t < self.support_lo_effective {
            return 0.0;
        }
        let mut v = self.base.density(t);
        for (n, thr) in &self.factors {
            if v == 0.0 {
                break;
            }
            v *= n.survivor(thr - t);
        }
        v
    }

    pub fn density(&self, t: f64) -> f64 {
        self.unnormalized_density(t) / self.normalization
    }

    /// Kinks of the integrand: impact knots and `t_i - (noise knots)`.
    fn breakpoints(&self, extra: Option<(&NoiseSpec, f64)>) -> Vec<f64> {
        let mut b = self.base.knot_xs().to_vec();
        for (n, t) in self.factors.iter().map(|(n, t)| (n, *t)).chain(extra) {
            b.extend(n.law().knot_xs().iter().map(|k| t - k));
        }
        b
    }

    fn rule(&self, lo: f64, extra: Option<(&NoiseSpec, f64)>) -> SimpsonRule {
        SimpsonRule::new(
            lo,
            self.support_hi(),
            &self.breakpoints(extra),
            self.base.grid_resolution(),
        )
    }

    /// Unnormalized mass after appending `(n, t)`.
    fn mass_with(&self, n: &NoiseSpec, t: f64) -> f64 {
        let lo = self.support_lo_effective.max(t - n.upper());
        if lo >= self.support_hi() {
            return 0.0;
        }
        let rule = self.rule(lo, Some((n, t)));
        rule.integrate(|x| {
            let g = n.survivor(t - x);
            if g == 0.0 {
                0.0
            } else {
                g * self.unnormalized_density(x)
            }
        })
    }

    // Scores below this pass the stage with certainty.
    fn lo_sum(&self, n: &NoiseSpec) -> f64 {
        self.support_lo_effective + n.lower()
    }

    fn hi_sum(&self, n: &NoiseSpec) -> f64 {
        self.support_hi() + n.upper()
    }

    /// `Pr(current + N >= t)` under the current posterior.
    pub fn stage_capacity(&self, n: &NoiseSpec, t: f64) -> f64 {
        if t <= self.lo_sum(n) {
            return 1.0;
        }
        if t >= self.hi_sum(n) {
            return 0.0;
        }
        (self.mass_with(n, t) / self.normalization).clamp(0.0, 1.0)
    }

    /// Condition on `current + N >= t`.
    pub fn apply_stage(&self, n: &NoiseSpec, t: f64) -> Result<Self> {
        if !t.is_finite() {
            return Err(ScreenError::invalid(format!("threshold must be finite, got {t}")));
        }
        if t >= self.hi_sum(n) {
            return Err(ScreenError::ZeroCapacity {
                stage: None,
                threshold: t,
            });
        }
        let stage = self.factors.len();
        let mut next = self.clone();
        next.factors.push((n.clone(), t));
        if t <= self.lo_sum(n) {
            next.stage_capacities.push(1.0);
            next.no_op_stages.push(stage);
            return Ok(next);
        }
        let mass = self.mass_with(n, t);
        if !(mass > 0.0) {
            return Err(ScreenError::ZeroCapacity {
                stage: None,
                threshold: t,
            });
        }
        next.stage_capacities.push((mass / self.normalization).min(1.0));
        next.normalization = mass;
        next.support_lo_effective = self.support_lo_effective.max(t - n.upper());
        Ok(next)
    }

    /// Threshold `t` with `Pr(current + N >= t) = stage_capacity`.
    pub fn solve_stage_threshold(&self, n: &NoiseSpec, stage_capacity: f64) -> Result<f64> {
        if !(stage_capacity > 0.0 && stage_capacity < 1.0) {
            return Err(ScreenError::invalid(format!(
                "stage capacity must lie in (0,1), got {stage_capacity}"
            )));
        }
        bisect(
            |t| self.stage_capacity(n, t) - stage_capacity,
            self.lo_sum(n),
            self.hi_sum(n),
            SOLVER_X_TOL,
            SOLVER_F_TOL,
        )
    }

    /// Sample the normalized density onto a grid over the effective support.
    ///
    /// The grid has `grid_resolution` cells plus every kink of the product, so
    /// piecewise-linear posteriors are reproduced exactly.
    pub fn to_distribution(&self) -> Result<BoundedDistribution> {
        if self.factors.is_empty() {
            return Ok(self.base.clone());
        }
        if !(self.normalization > 0.0) {
            return Err(ScreenError::ZeroCapacity {
                stage: None,
                threshold: f64::NAN,
            });
        }
        let lo = self.support_lo_effective;
        let hi = self.support_hi();
        let n = self.base.grid_resolution();
        let mut xs: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
        xs[n] = hi;
        xs.extend(self.breakpoints(None).into_iter().filter(|b| *b > lo && *b < hi));
        xs.sort_by(f64::total_cmp);
        xs.dedup_by(|a, b| (*a - *b).abs() <= 1e-13 * (1.0 + b.abs()));
        let fs: Vec<f64> = xs.iter().map(|&x| self.density(x)).collect();
        let dist = BoundedDistribution::from_density_samples(xs, fs)?.with_grid_resolution(n);
        let drift = (dist.renormalization_factor() - 1.0).abs();
        if drift >= DRIFT_LIMIT {
            return Err(ScreenError::NormalizationDrift { drift });
        }
        Ok(dist)
    }

    pub fn mean(&self) -> f64 {
        let rule = self.rule(self.support_lo_effective, None);
        rule.integrate(|x| x * self.unnormalized_density(x)) / self.normalization
    }

    /// Quadrature of the normalized density; 1 up to quadrature error.
    pub fn total_mass(&self) -> f64 {
        let rule = self.rule(self.support_lo_effective, None);
        rule.integrate(|x| self.unnormalized_density(x)) / self.normalization
    }
}

/// Fold [`FactorizedPosterior::apply_stage`] over the problem's stages.
pub fn run_strategy(sp: &ScreeningProblem, thresholds: &[f64]) -> Result<(FactorizedPosterior, ThresholdStrategy)> {
    run_with_kind(sp, thresholds, StrategyKind::Explicit)
}

fn run_with_kind(
    sp: &ScreeningProblem,
    thresholds: &[f64],
    kind: StrategyKind,
) -> Result<(FactorizedPosterior, ThresholdStrategy)> {
    if thresholds.len() != sp.stages() {
        return Err(ScreenError::invalid(format!(
            "expected {} thresholds, got {}",
            sp.stages(),
            thresholds.len()
        )));
    }
    let mut post = FactorizedPosterior::new(sp.impact().clone());
    for (i, (n, &t)) in sp.noises().iter().zip(thresholds).enumerate() {
        post = post.apply_stage(n, t).map_err(|e| e.at_stage(i))?;
    }
    let strategy = ThresholdStrategy::from_posterior(&post, kind);
    Ok((post, strategy))
}

/// Solve each stage threshold in turn for the given per-stage capacities.
pub fn solve_stage_capacities(
    sp: &ScreeningProblem,
    stage_capacities: &[f64],
    kind: StrategyKind,
) -> Result<(FactorizedPosterior, ThresholdStrategy)> {
    if stage_capacities.len() != sp.stages() {
        return Err(ScreenError::invalid(format!(
            "expected {} stage capacities, got {}",
            sp.stages(),
            stage_capacities.len()
        )));
    }
    let mut post = FactorizedPosterior::new(sp.impact().clone());
    for (i, (n, &p)) in sp.noises().iter().zip(stage_capacities).enumerate() {
        let t = post.solve_stage_threshold(n, p).map_err(|e| e.at_stage(i))?;
        post = post.apply_stage(n, t).map_err(|e| e.at_stage(i))?;
    }
    let strategy = ThresholdStrategy::from_posterior(&post, kind);
    Ok((post, strategy))
}

/// Fixed-capacity strategy: every stage keeps `p^(1/k)`.
pub fn solve_fixed_capacity_posterior(sp: &ScreeningProblem) -> Result<(FactorizedPosterior, ThresholdStrategy)> {
    let per_stage = sp.capacity().powf(1.0 / sp.stages() as f64);
    solve_stage_capacities(sp, &vec![per_stage; sp.stages()], StrategyKind::FixedCapacity)
}

pub fn solve_fixed_capacity(sp: &ScreeningProblem) -> Result<ThresholdStrategy> {
    solve_fixed_capacity_posterior(sp).map(|(_, s)| s)
}

/// Fixed-threshold strategy: one cutoff `t` shared by all `k` i.i.d. stages
/// with `integral f_V(x) Pr(N >= t - x)^k dx = p`.
pub fn solve_fixed_threshold_posterior(sp: &ScreeningProblem) -> Result<(FactorizedPosterior, ThresholdStrategy)> {
    if !sp.is_iid() {
        return Err(ScreenError::HeterogeneousNoise);
    }
    let v = sp.impact();
    let n = &sp.noises()[0];
    let k = sp.stages() as i32;
    let (lo, hi) = v.support();
    let overall = |t: f64| -> f64 {
        let start = lo.max(t - n.upper());
        if start >= hi {
            return 0.0;
        }
        let mut breaks = v.knot_xs().to_vec();
        breaks.extend(n.law().knot_xs().iter().map(|x| t - x));
        SimpsonRule::new(start, hi, &breaks, v.grid_resolution())
            .integrate(|x| v.density(x) * n.survivor(t - x).powi(k))
    };
    let p = sp.capacity();
    let t = bisect(
        |t| overall(t) - p,
        lo + n.lower(),
        hi + n.upper(),
        SOLVER_X_TOL,
        SOLVER_F_TOL,
    )?;
    run_with_kind(sp, &vec![t; sp.stages()], StrategyKind::FixedThreshold)
}

pub fn solve_fixed_threshold(sp: &ScreeningProblem) -> Result<ThresholdStrategy> {
    solve_fixed_threshold_posterior(sp).map(|(_, s)| s)
}

/// Solve one of the two stationary strategies.
pub fn solve_stationary(sp: &ScreeningProblem, kind: StrategyKind) -> Result<(FactorizedPosterior, ThresholdStrategy)> {
    match kind {
        StrategyKind::FixedThreshold => solve_fixed_threshold_posterior(sp),
        StrategyKind::FixedCapacity => solve_fixed_capacity_posterior(sp),
        StrategyKind::Explicit => Err(ScreenError::invalid("explicit strategies carry their own thresholds")),
    }
}

/// Law of `V` conditioned on `V >= v_p`: noiseless selection of the top `p`.
pub fn perfect_screening_target(v: &BoundedDistribution, p: f64) -> Result<BoundedDistribution> {
    let vp = v.quantile_upper(p)?;
    v.truncated_below(vp)
}

/// Depth-`depth` truncation of the constant increasing strategy at
/// `t = v_p + N_lower`, the limit threshold of any increasing strategy that
/// meets capacity `p`.
pub fn increasing_strategy_truncation(
    v: &BoundedDistribution,
    noise: &NoiseSpec,
    p: f64,
    depth: usize,
) -> Result<(FactorizedPosterior, ThresholdStrategy)> {
    if depth == 0 {
        return Err(ScreenError::invalid("truncation depth must be at least 1"));
    }
    let t = v.quantile_upper(p)? + noise.lower();
    let sp = ScreeningProblem::iid(v.clone(), noise.clone(), depth, p)?;
    run_strategy(&sp, &vec![t; depth])
}
