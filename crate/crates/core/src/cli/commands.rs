//! Subcommand implementations. Each writes its artifacts under an output
//! directory and returns a short human-readable summary.

use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::Experiment;
use super::cost::{cost_accuracy, cost_capacity, CapacityCostSpec, CostSpec};
use super::{csv_table, write_file, write_json, CliError, CliResult};
use crate::analysis::{
    cdf_gap_table, check_fosd, convergence_curve, ConvergenceCurve, DominanceReport, Verdict, DEFAULT_FOSD_TOL,
};
use crate::distributions::{make_uniform, BoundedDistribution, NoiseSpec};
use crate::montecarlo::{cross_validate, CrossValidation, MCConfig};
use crate::screening::{
    solve_fixed_capacity_posterior, solve_fixed_threshold_posterior, solve_stage_capacities, FactorizedPosterior,
    ScreeningProblem, StrategyKind, ThresholdStrategy,
};

/// `(v, F)` at every knot of a materialized law.
pub fn cdf_rows(d: &BoundedDistribution) -> Vec<[f64; 2]> {
    d.knot_xs().iter().map(|&x| [x, d.cdf(x)]).collect()
}

pub fn pdf_rows(d: &BoundedDistribution) -> Vec<[f64; 2]> {
    d.knots().map(|(x, f)| [x, f]).collect()
}

#[derive(Debug, Serialize)]
struct PosteriorSummary<'a> {
    mean: f64,
    requested_capacity: f64,
    overall_capacity: f64,
    stage_capacities: &'a [f64],
    support_lo: f64,
    support_hi: f64,
    grid_resolution: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    monte_carlo: Option<&'a CrossValidation>,
}

/// `screenlab posterior <config.json>`
pub fn cmd_posterior(config: &Path) -> CliResult<String> {
    let exp = Experiment::load(config)?;
    let out = exp.output_dir().to_path_buf();
    let (post, strategy) = exp.solve()?;
    let dist = post.to_distribution()?;
    let mc = match &exp.config.mc {
        Some(cfg) => Some(cross_validate(&exp.problem, &strategy.thresholds, cfg)?),
        None => None,
    };

    write_file(&out, "posterior_cdf.csv", &csv_table(&["v", "F"], cdf_rows(&dist)))?;
    write_file(&out, "posterior_pdf.csv", &csv_table(&["v", "f"], pdf_rows(&dist)))?;
    write_json(&out, "strategy.json", &strategy)?;
    let summary = PosteriorSummary {
        mean: post.mean(),
        requested_capacity: exp.problem.capacity(),
        overall_capacity: strategy.overall_capacity,
        stage_capacities: &strategy.stage_capacities,
        support_lo: dist.support_lo(),
        support_hi: dist.support_hi(),
        grid_resolution: exp.grid_resolution,
        monte_carlo: mc.as_ref(),
    };
    write_json(&out, "summary.json", &summary)?;
    if let Some(cv) = &mc {
        write_json(&out, "mc_estimate.json", &cv.mc)?;
        write_file(&out, "mc_cdf.csv", &cv.mc.cdf_csv())?;
    }

    let mut msg = format!(
        "posterior: mean {:.6}, realized capacity {:.8} ({} stage(s)), support [{:.6}, {:.6}] -> {}",
        summary.mean,
        summary.overall_capacity,
        strategy.stages(),
        summary.support_lo,
        summary.support_hi,
        out.display()
    );
    if let Some(cv) = &mc {
        msg.push_str(&format!(
            "\nmonte carlo: z_acceptance {:.2}, z_mean {:.2}, cdf gap {:.4} (band {:.4}) -> {}",
            cv.z_acceptance,
            cv.z_mean,
            cv.cdf_sup_gap,
            cv.dkw_band,
            if cv.agrees() { "agree" } else { "DISAGREE" }
        ));
    }
    Ok(msg)
}

/// `screenlab compare <a.json> <b.json>`
pub fn cmd_compare(a: &Path, b: &Path, out: Option<&Path>, tol: f64) -> CliResult<String> {
    let ea = Experiment::load(a)?;
    let eb = Experiment::load(b)?;
    if ea.config.impact != eb.config.impact {
        return Err(CliError::Config(format!(
            "{} and {} use different impact distributions",
            a.display(),
            b.display()
        )));
    }
    let out: PathBuf = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| ea.output_dir().to_path_buf());
    let da = ea.solve()?.0.to_distribution()?;
    let db = eb.solve()?.0.to_distribution()?;
    let report = check_fosd(&da, &db, tol)?;
    write_json(&out, "dominance.json", &report)?;
    write_file(
        &out,
        "gap.csv",
        &csv_table(&["v", "F_A", "F_B", "gap"], cdf_gap_table(&da, &db)),
    )?;
    Ok(format!(
        "verdict {} (max F_A-F_B {:.3e}, max F_B-F_A {:.3e}), cdf crossings {:?} -> {}",
        report.verdict,
        report.max_gap_A_over_B,
        report.max_gap_B_over_A,
        report.cdf_crossings,
        out.display()
    ))
}

/// `screenlab converge <config.json> --ks ...`
///
/// Uses the config's impact law, first noise and capacity. With one strategy
/// kind the curve goes to `convergence.csv`; with several, to
/// `convergence_<kind>.csv` each.
pub fn cmd_converge(config: &Path, ks: &[usize], kinds: &[StrategyKind]) -> CliResult<String> {
    let exp = Experiment::load(config)?;
    if ks.is_empty() || ks.contains(&0) {
        return Err(CliError::Config(
            "--ks needs a nonempty list of stage counts >= 1".into(),
        ));
    }
    let noises = exp.problem.noises();
    if noises.iter().any(|n| n != &noises[0]) {
        return Err(CliError::Config(
            "converge requires identical noises in `noises`".into(),
        ));
    }
    let kinds: Vec<StrategyKind> = if kinds.is_empty() {
        vec![exp.config.strategy.kind]
    } else {
        kinds.to_vec()
    };
    if kinds.contains(&StrategyKind::Explicit) {
        return Err(CliError::Config(
            "converge needs a stationary kind (fixed_threshold or fixed_capacity); pass --kinds".into(),
        ));
    }
    let out = exp.output_dir();
    let mut lines = Vec::new();
    for kind in &kinds {
        let curve = convergence_curve(exp.problem.impact(), &noises[0], exp.problem.capacity(), ks, *kind)?;
        let stem = if kinds.len() == 1 {
            "convergence".to_string()
        } else {
            format!("convergence_{kind}")
        };
        write_file(out, &format!("{stem}.csv"), &curve.to_csv())?;
        write_json(out, &format!("{stem}.json"), &curve)?;
        lines.push(describe_curve(&curve));
    }
    lines.push(format!("-> {}", out.display()));
    Ok(lines.join("\n"))
}

fn describe_curve(c: &ConvergenceCurve) -> String {
    let pts: Vec<String> = c
        .stage_counts
        .iter()
        .zip(&c.distances)
        .map(|(k, d)| format!("k={k}: {d:.4}"))
        .collect();
    format!("{}: {}", c.strategy_kind, pts.join(", "))
}

#[derive(Debug, Serialize)]
pub struct IntroCase {
    pub capacity: f64,
    pub two_stage_capacities: [f64; 2],
    pub one_stage: ThresholdStrategy,
    pub two_stage: ThresholdStrategy,
    pub mean_one_stage: f64,
    pub mean_two_stage: f64,
    pub mean_margin: f64,
    pub dominance: DominanceReport,
    pub mc_one_stage: CrossValidation,
    pub mc_two_stage: CrossValidation,
}

#[derive(Debug, Serialize)]
pub struct ReversalCheck {
    pub capacity: f64,
    pub setup: String,
    pub one_stage: ThresholdStrategy,
    pub two_stage: ThresholdStrategy,
    /// A = one-stage, B = two-stage.
    pub dominance: DominanceReport,
    pub asserted: bool,
}

#[derive(Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Serialize)]
pub struct IntroReport {
    pub cases: Vec<IntroCase>,
    pub reversal: ReversalCheck,
    pub iid_fixed_threshold_reversal: ReversalCheck,
    pub checks: Vec<Check>,
}

impl IntroReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn one_stage(v: &BoundedDistribution, n: &NoiseSpec, p: f64) -> CliResult<(FactorizedPosterior, ThresholdStrategy)> {
    let sp = ScreeningProblem::new(v.clone(), vec![n.clone()], p)?;
    Ok(solve_stage_capacities(&sp, &[p], StrategyKind::Explicit)?)
}

/// Run the uniform worked example: `V ~ U[0,1]`, `N_1 ~ U[-1/4,1/4]`,
/// `N_2 ~ U[-1/5,1/5]`, one stage versus two at 5% and 3% capacity, plus the
/// high-capacity reversal.
pub fn reproduce_intro(mc: &MCConfig) -> CliResult<(IntroReport, Vec<(String, String)>)> {
    let v = make_uniform(0.0, 1.0)?;
    let n1 = NoiseSpec::uniform(0.25)?;
    let n2 = NoiseSpec::uniform(0.2)?;
    let mut files = Vec::new();
    let mut checks = Vec::new();
    let mut cases = Vec::new();

    for (p, p1, p2, tag) in [(0.05, 0.1, 0.5, "5pct"), (0.03, 0.06, 0.5, "3pct")] {
        let (post1, s1) = one_stage(&v, &n1, p)?;
        let sp2 = ScreeningProblem::new(v.clone(), vec![n1.clone(), n2.clone()], p)?;
        let (post2, s2) = solve_stage_capacities(&sp2, &[p1, p2], StrategyKind::Explicit)?;
        let (d1, d2) = (post1.to_distribution()?, post2.to_distribution()?);
        let dominance = check_fosd(&d1, &d2, DEFAULT_FOSD_TOL)?;
        let sp1 = ScreeningProblem::new(v.clone(), vec![n1.clone()], p)?;
        let mc1 = cross_validate(&sp1, &s1.thresholds, mc)?;
        let mc2 = cross_validate(&sp2, &s2.thresholds, mc)?;
        let (m1, m2) = (post1.mean(), post2.mean());

        let rows = cdf_gap_table(&d1, &d2).into_iter().map(|r| [r[0], r[1], r[2]]);
        files.push((
            format!("figure1_{tag}.csv"),
            csv_table(&["v", "F_one_stage", "F_two_stage"], rows),
        ));

        for (label, cv) in [("one-stage", &mc1), ("two-stage", &mc2)] {
            checks.push(Check {
                name: format!("{tag}: {label} Monte Carlo agreement"),
                passed: cv.agrees(),
                detail: format!(
                    "z_acceptance {:.3}, z_mean {:.3}, cdf gap {:.5} <= {:.5}",
                    cv.z_acceptance, cv.z_mean, cv.cdf_sup_gap, cv.dkw_band
                ),
            });
        }
        cases.push(IntroCase {
            capacity: p,
            two_stage_capacities: [p1, p2],
            one_stage: s1,
            two_stage: s2,
            mean_one_stage: m1,
            mean_two_stage: m2,
            mean_margin: m1 - m2,
            dominance,
            mc_one_stage: mc1,
            mc_two_stage: mc2,
        });
    }

    let five = &cases[0];
    checks.push(Check {
        name: "5pct: E[V_1] > E[V_2]".into(),
        passed: five.mean_margin > 0.0,
        detail: format!(
            "E[V_1] = {:.6}, E[V_2] = {:.6}, margin {:.6}",
            five.mean_one_stage, five.mean_two_stage, five.mean_margin
        ),
    });
    let three = &cases[1];
    checks.push(Check {
        name: "3pct: one-stage first-order dominates".into(),
        passed: three.dominance.verdict == Verdict::ADominates,
        detail: format!(
            "verdict {}, adverse gap {:.3e}",
            three.dominance.verdict, three.dominance.max_gap_A_over_B
        ),
    });

    // High-capacity reversal on the example's own noise pair.
    let p_hi = 0.75;
    let (r1, rs1) = one_stage(&v, &n1, p_hi)?;
    let sp_hi = ScreeningProblem::new(v.clone(), vec![n1.clone(), n2.clone()], p_hi)?;
    let (r2, rs2) = solve_fixed_capacity_posterior(&sp_hi)?;
    let rev = check_fosd(&r1.to_distribution()?, &r2.to_distribution()?, DEFAULT_FOSD_TOL)?;
    checks.push(Check {
        name: "75pct: two-stage first-order dominates".into(),
        passed: rev.verdict == Verdict::BDominates,
        detail: format!("verdict {}, adverse gap {:.3e}", rev.verdict, rev.max_gap_B_over_A),
    });
    let reversal = ReversalCheck {
        capacity: p_hi,
        setup: "noises U[-1/4,1/4] then U[-1/5,1/5], fixed capacity sqrt(p) per stage".into(),
        one_stage: rs1.clone(),
        two_stage: rs2,
        dominance: rev,
        asserted: true,
    };

    // Same capacity with i.i.d. noise and one shared threshold; reported only.
    let sp_iid = ScreeningProblem::iid(v.clone(), n1.clone(), 2, p_hi)?;
    let (i2, is2) = solve_fixed_threshold_posterior(&sp_iid)?;
    let iid_rev = check_fosd(&r1.to_distribution()?, &i2.to_distribution()?, DEFAULT_FOSD_TOL)?;
    let iid_fixed_threshold_reversal = ReversalCheck {
        capacity: p_hi,
        setup: "i.i.d. noise U[-1/4,1/4], fixed threshold".into(),
        one_stage: rs1,
        two_stage: is2,
        dominance: iid_rev,
        asserted: false,
    };

    let means = cases.iter().map(|c| {
        [
            c.capacity,
            c.two_stage_capacities[0],
            c.two_stage_capacities[1],
            c.mean_one_stage,
            c.mean_two_stage,
            c.mean_margin,
        ]
    });
    files.push((
        "expected_values.csv".into(),
        csv_table(&["capacity", "p1", "p2", "E_one_stage", "E_two_stage", "margin"], means),
    ));

    Ok((
        IntroReport {
            cases,
            reversal,
            iid_fixed_threshold_reversal,
            checks,
        },
        files,
    ))
}

/// `screenlab reproduce-intro`
pub fn cmd_reproduce_intro(mc: &MCConfig, out: &Path) -> CliResult<String> {
    let (report, files) = reproduce_intro(mc)?;
    for (name, body) in &files {
        write_file(out, name, body)?;
    }
    write_json(out, "intro_report.json", &report)?;
    let mut lines: Vec<String> = report
        .checks
        .iter()
        .map(|c| format!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail))
        .collect();
    let iid = &report.iid_fixed_threshold_reversal.dominance;
    lines.push(format!(
        "[info] 75pct, i.i.d. fixed threshold: verdict {}, max F_two-F_one {:.3e}",
        iid.verdict, iid.max_gap_B_over_A
    ));
    lines.push(format!("-> {}", out.display()));
    let text = lines.join("\n");
    if report.all_passed() {
        Ok(text)
    } else {
        let failed: Vec<&str> = report
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect();
        Err(CliError::Reproduction(format!(
            "{}\nfailed: {}",
            text,
            failed.join("; ")
        )))
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

#[derive(Debug, Serialize)]
struct CostOutput {
    cost: f64,
    log_base: &'static str,
}

/// `screenlab cost accuracy <spec.json>`
pub fn cmd_cost_accuracy(spec: &Path) -> CliResult<String> {
    let spec: CostSpec = read_json(spec)?;
    let cost = cost_accuracy(&spec).map_err(|e| CliError::Config(e.to_string()))?;
    Ok(serde_json::to_string(&CostOutput { cost, log_base: "e" }).expect("serializable"))
}

/// `screenlab cost capacity <spec.json>`
pub fn cmd_cost_capacity(spec: &Path) -> CliResult<String> {
    let spec: CapacityCostSpec = read_json(spec)?;
    let cost = cost_capacity(&spec.stage_capacities).map_err(|e| CliError::Config(e.to_string()))?;
    Ok(serde_json::to_string(&CostOutput { cost, log_base: "e" }).expect("serializable"))
}
