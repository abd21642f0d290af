//! Monte Carlo oracle for the screening process.
//!
//! Each simulated element draws its impact once and an independent noise per
//! stage, and survives iff every noisy score clears its threshold. Random
//! draws come from a ChaCha stream keyed by `(seed, sample index)` and read in
//! stage order, so results do not depend on how samples are split across
//! threads. Samples are processed in fixed-size chunks whose partial sums are
//! merged in chunk order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::BoundedDistribution;
use crate::error::{Result, ScreenError};
use crate::numeric::KahanSum;
use crate::screening::{run_strategy, ScreeningProblem};

/// Minimum accepted samples for mean and CDF estimates.
pub const MIN_ACCEPTED: u64 = 100;

/// Number of cells of the empirical CDF grid over the impact support.
pub const CDF_GRID_CELLS: usize = 512;

/// Agreement threshold (in standard errors) for acceptance rate and mean.
pub const Z_LIMIT: f64 = 4.0;

/// Confidence level of the DKW band used for the CDF check.
pub const DKW_ALPHA: f64 = 0.01;

const CHUNK: u64 = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MCConfig {
    pub samples: u64,
    pub seed: u64,
}

impl MCConfig {
    pub fn new(samples: u64, seed: u64) -> Result<Self> {
        if samples == 0 {
            return Err(ScreenError::invalid("Monte Carlo needs at least one sample"));
        }
        Ok(MCConfig { samples, seed })
    }
}

/// A point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub samples: u64,
    pub accepted_count: u64,
    pub acceptance_rate: Estimate,
    pub accepted_mean: Estimate,
    /// `(v, F_hat(v))` on a uniform grid over the impact support.
    pub empirical_cdf: Vec<(f64, f64)>,
}

impl MCEstimate {
    /// CSV with header `v,F_hat`.
    pub fn cdf_csv(&self) -> String {
        let mut s = String::from("v,F_hat\n");
        for (v, f) in &self.empirical_cdf {
            s.push_str(&format!("{},{}\n", crate::cli::fmt_num(*v), crate::cli::fmt_num(*f)));
        }
        s
    }
}

#[derive(Debug, Clone, Default)]
struct Partial {
    accepted: u64,
    sum: KahanSum,
    sum_sq: KahanSum,
    bins: Vec<u64>,
}

impl Partial {
    fn merge(&mut self, other: Partial) {
        self.accepted += other.accepted;
        self.sum.merge(other.sum);
        self.sum_sq.merge(other.sum_sq);
        if self.bins.is_empty() {
            self.bins = other.bins;
        } else {
            for (a, b) in self.bins.iter_mut().zip(other.bins) {
                *a += b;
            }
        }
    }
}

fn stream_key(seed: u64) -> <ChaCha8Rng as SeedableRng>::Seed {
    ChaCha8Rng::seed_from_u64(seed).get_seed()
}

fn sample_stream(key: <ChaCha8Rng as SeedableRng>::Seed, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// `n` independent draws from `d` by inverse-CDF sampling.
pub fn sample_distribution(d: &BoundedDistribution, n: u64, seed: u64) -> Vec<f64> {
    let key = stream_key(seed);
    (0..n)
        .into_par_iter()
        .map(|i| d.inverse_cdf(sample_stream(key, i).gen::<f64>()))
        .collect()
}

fn cdf_grid(d: &BoundedDistribution) -> Vec<f64> {
    let (lo, hi) = d.support();
    (0..=CDF_GRID_CELLS)
        .map(|i| lo + (hi - lo) * i as f64 / CDF_GRID_CELLS as f64)
        .collect()
}

/// Simulate the screening process on `cfg.samples` elements.
pub fn simulate(sp: &ScreeningProblem, thresholds: &[f64], cfg: &MCConfig) -> Result<MCEstimate> {
    if thresholds.len() != sp.stages() {
        return Err(ScreenError::invalid(format!(
            "expected {} thresholds, got {}",
            sp.stages(),
            thresholds.len()
        )));
    }
    if cfg.samples == 0 {
        return Err(ScreenError::invalid("Monte Carlo needs at least one sample"));
    }
    let key = stream_key(cfg.seed);
    let impact = sp.impact();
    let noises = sp.noises();
    let grid = cdf_grid(impact);
    let chunks = cfg.samples.div_ceil(CHUNK);

    let partials: Vec<Partial> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut part = Partial {
                bins: vec![0; grid.len()],
                ..Partial::default()
            };
            let end = ((c + 1) * CHUNK).min(cfg.samples);
            for i in c * CHUNK..end {
                let mut rng = sample_stream(key, i);
                let v = impact.inverse_cdf(rng.gen::<f64>());
                let survives = noises
                    .iter()
                    .zip(thresholds)
                    .all(|(n, &t)| v + n.law().inverse_cdf(rng.gen::<f64>()) >= t);
                if survives {
                    part.accepted += 1;
                    part.sum.add(v);
                    part.sum_sq.add(v * v);
                    let j = grid.partition_point(|g| *g < v).min(grid.len() - 1);
                    part.bins[j] += 1;
                }
            }
            part
        })
        .collect();

    let mut total = Partial::default();
    for p in partials {
        total.merge(p);
    }

    if total.accepted < MIN_ACCEPTED {
        return Err(ScreenError::InsufficientAcceptance {
            accepted: total.accepted,
            required: MIN_ACCEPTED,
        });
    }
    let m = cfg.samples as f64;
    let n = total.accepted as f64;
    let rate = n / m;
    let mean = total.sum.value() / n;
    let var = ((total.sum_sq.value() - n * mean * mean) / (n - 1.0)).max(0.0);
    let mut acc = 0u64;
    let empirical_cdf = grid
        .iter()
        .zip(&total.bins)
        .map(|(&g, &b)| {
            acc += b;
            (g, acc as f64 / n)
        })
        .collect();
    Ok(MCEstimate {
        samples: cfg.samples,
        accepted_count: total.accepted,
        acceptance_rate: Estimate {
            value: rate,
            std_error: (rate * (1.0 - rate) / m).sqrt(),
        },
        accepted_mean: Estimate {
            value: mean,
            std_error: (var / n).sqrt(),
        },
        empirical_cdf,
    })
}

/// Quadrature and Monte Carlo results side by side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub mc: MCEstimate,
    pub quadrature_capacity: f64,
    pub quadrature_mean: f64,
    pub z_acceptance: f64,
    pub z_mean: f64,
    /// `sup |F_hat - F|` over the empirical CDF grid.
    pub cdf_sup_gap: f64,
    /// DKW half-width at level [`DKW_ALPHA`] for `accepted_count` samples.
    pub dkw_band: f64,
    pub acceptance_ok: bool,
    pub mean_ok: bool,
    pub cdf_ok: bool,
}

impl CrossValidation {
    pub fn agrees(&self) -> bool {
        self.acceptance_ok && self.mean_ok && self.cdf_ok
    }
}

fn z_score(diff: f64, se: f64) -> f64 {
    if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY.copysign(diff)
    }
}

/// Run both engines on the same strategy and compare.
pub fn cross_validate(sp: &ScreeningProblem, thresholds: &[f64], cfg: &MCConfig) -> Result<CrossValidation> {
    cross_validate_split(sp, thresholds, thresholds, cfg)
}

/// Like [`cross_validate`], but the simulation and the quadrature may be fed
/// different thresholds (sensitivity checks).
pub fn cross_validate_split(
    sp: &ScreeningProblem,
    mc_thresholds: &[f64],
    quadrature_thresholds: &[f64],
    cfg: &MCConfig,
) -> Result<CrossValidation> {
    let mc = simulate(sp, mc_thresholds, cfg)?;
    let (post, strategy) = run_strategy(sp, quadrature_thresholds)?;
    let quad = post.to_distribution()?;
    let quad_mean = post.mean();
    let z_acceptance = z_score(
        mc.acceptance_rate.value - strategy.overall_capacity,
        mc.acceptance_rate.std_error,
    );
    let z_mean = z_score(mc.accepted_mean.value - quad_mean, mc.accepted_mean.std_error);
    let cdf_sup_gap = mc
        .empirical_cdf
        .iter()
        .map(|(v, f)| (f - quad.cdf(*v)).abs())
        .fold(0.0, f64::max);
    let dkw_band = ((2.0 / DKW_ALPHA).ln() / (2.0 * mc.accepted_count as f64)).sqrt();
    Ok(CrossValidation {
        quadrature_capacity: strategy.overall_capacity,
        quadrature_mean: quad_mean,
        z_acceptance,
        z_mean,
        cdf_sup_gap,
        dkw_band,
        acceptance_ok: z_acceptance.abs() <= Z_LIMIT,
        mean_ok: z_mean.abs() <= Z_LIMIT,
        cdf_ok: cdf_sup_gap <= dkw_band,
        mc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{make_piecewise_linear, make_uniform, NoiseSpec};
    use crate::screening::FactorizedPosterior;

    fn intro_one_stage() -> (ScreeningProblem, f64) {
        let v = make_uniform(0.0, 1.0).unwrap();
        let n = NoiseSpec::uniform(0.25).unwrap();
        let t = FactorizedPosterior::new(v.clone())
            .solve_stage_threshold(&n, 0.05)
            .unwrap();
        (ScreeningProblem::new(v, vec![n], 0.05).unwrap(), t)
    }

    #[test]
    fn insufficient_acceptance() {
        let (sp, t) = intro_one_stage();
        let err = simulate(&sp, &[t], &MCConfig::new(1000, 7).unwrap()).unwrap_err();
        assert!(matches!(err, ScreenError::InsufficientAcceptance { required: 100, .. }));
    }

    #[test]
    fn no_screening_accepts_everything() {
        let (sp, _) = intro_one_stage();
        let est = simulate(&sp, &[-0.5], &MCConfig::new(20_000, 3).unwrap()).unwrap();
        assert_eq!(est.acceptance_rate.value, 1.0);
        assert_eq!(est.accepted_count, 20_000);
        assert!((est.accepted_mean.value - 0.5).abs() < 4.0 * est.accepted_mean.std_error);
        assert_eq!(est.empirical_cdf.last().unwrap().1, 1.0);
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let (sp, t) = intro_one_stage();
        let cfg = MCConfig::new(100_000, 42).unwrap();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| simulate(&sp, &[t], &cfg)).unwrap();
        let b = four.install(|| simulate(&sp, &[t], &cfg)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.accepted_mean.value.to_bits(), b.accepted_mean.value.to_bits());
    }

    #[test]
    fn rejects_zero_samples_and_bad_lengths() {
        assert!(MCConfig::new(0, 1).is_err());
        let (sp, t) = intro_one_stage();
        assert!(simulate(&sp, &[t, t], &MCConfig::new(10, 1).unwrap()).is_err());
    }

    #[test]
    fn sampler_matches_cdf_ks() {
        let d = make_piecewise_linear(&[(0.0, 0.5), (0.4, 2.0), (1.0, 0.2)]).unwrap();
        let mut xs = sample_distribution(&d, 100_000, 11);
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let stat = xs
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let f = d.cdf(*x);
                (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
            })
            .fold(0.0, f64::max);
        // Asymptotic 1% critical value of the one-sample KS statistic.
        assert!(stat < 1.6276 / n.sqrt(), "KS statistic {stat}");
    }

    #[test]
    fn estimate_json_roundtrip() {
        let (sp, t) = intro_one_stage();
        let est = simulate(&sp, &[t], &MCConfig::new(10_000, 5).unwrap()).unwrap();
        let back: MCEstimate = serde_json::from_str(&serde_json::to_string(&est).unwrap()).unwrap();
        assert_eq!(back, est);
        assert!(est.cdf_csv().starts_with("v,F_hat\n"));
    }
}
