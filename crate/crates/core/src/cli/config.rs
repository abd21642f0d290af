//! Experiment config files: one strict JSON document per experiment.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CliError, CliResult};
use crate::distributions::{BoundedDistribution, DistributionLiteral, NoiseSpec};
use crate::montecarlo::MCConfig;
use crate::screening::{
    run_strategy, solve_fixed_capacity_posterior, solve_fixed_threshold_posterior, solve_stage_capacities,
    FactorizedPosterior, ScreeningProblem, StrategyKind, ThresholdStrategy,
};

/// Environment variable overriding every config's grid resolution.
pub const GRID_ENV: &str = "SCREENLAB_GRID";

const PRODUCT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategySpec {
    pub kind: StrategyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage_capacities: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub impact: DistributionLiteral,
    pub noises: Vec<DistributionLiteral>,
    pub capacity: f64,
    pub strategy: StrategySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc: Option<MCConfig>,
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_resolution: Option<usize>,
}

/// A validated config with its distributions built.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub problem: ScreeningProblem,
    pub grid_resolution: usize,
}

fn field_err(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("field `{field}`: {msg}"))
}

fn grid_override() -> CliResult<Option<usize>> {
    match std::env::var(GRID_ENV) {
        Ok(s) => s
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|g| *g >= 2)
            .map(Some)
            .ok_or_else(|| CliError::Config(format!("{GRID_ENV}={s:?} is not an integer >= 2"))),
        Err(_) => Ok(None),
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Check field-level invariants and build the screening problem.
    pub fn into_experiment(self) -> CliResult<Experiment> {
        if !(self.capacity > 0.0 && self.capacity < 1.0) {
            return Err(field_err(
                "capacity",
                format!("must lie in (0,1), got {}", self.capacity),
            ));
        }
        if self.noises.is_empty() {
            return Err(field_err("noises", "at least one stage is required"));
        }
        let k = self.noises.len();
        let grid = match grid_override()? {
            Some(g) => g,
            None => self
                .grid_resolution
                .unwrap_or(crate::distributions::DEFAULT_GRID_RESOLUTION),
        };
        if grid < 2 {
            return Err(field_err("grid_resolution", "must be at least 2"));
        }
        let impact: BoundedDistribution = self
            .impact
            .build()
            .map_err(|e| field_err("impact", e))?
            .with_grid_resolution(grid);
        let noises: Vec<NoiseSpec> = self
            .noises
            .iter()
            .enumerate()
            .map(|(i, n)| n.build_noise().map_err(|e| field_err(&format!("noises[{i}]"), e)))
            .collect::<CliResult<_>>()?;
        if let Some(mc) = &self.mc {
            if mc.samples == 0 {
                return Err(field_err("mc.samples", "must be at least 1"));
            }
        }

        let s = &self.strategy;
        match s.kind {
            StrategyKind::FixedThreshold | StrategyKind::FixedCapacity => {
                if s.thresholds.is_some() || s.stage_capacities.is_some() {
                    return Err(field_err(
                        "strategy",
                        format!("kind {} takes neither thresholds nor stage_capacities", s.kind),
                    ));
                }
            }
            StrategyKind::Explicit => match (&s.thresholds, &s.stage_capacities) {
                (Some(t), None) => {
                    if t.len() != k {
                        return Err(field_err(
                            "strategy.thresholds",
                            format!("expected {k} entries, got {}", t.len()),
                        ));
                    }
                    if let Some(i) = t.iter().position(|x| !x.is_finite()) {
                        return Err(field_err(&format!("strategy.thresholds[{i}]"), "must be finite"));
                    }
                }
                (None, Some(c)) => {
                    if c.len() != k {
                        return Err(field_err(
                            "strategy.stage_capacities",
                            format!("expected {k} entries, got {}", c.len()),
                        ));
                    }
                    if let Some(i) = c.iter().position(|p| !(*p > 0.0 && *p < 1.0)) {
                        return Err(field_err(
                            &format!("strategy.stage_capacities[{i}]"),
                            format!("must lie in (0,1), got {}", c[i]),
                        ));
                    }
                    let prod: f64 = c.iter().product();
                    if (prod - self.capacity).abs() > PRODUCT_TOL {
                        return Err(field_err(
                            "strategy.stage_capacities",
                            format!("product {prod} differs from capacity {}", self.capacity),
                        ));
                    }
                }
                _ => {
                    return Err(field_err(
                        "strategy",
                        "explicit strategies need exactly one of thresholds or stage_capacities",
                    ))
                }
            },
        }
        if s.kind == StrategyKind::FixedThreshold && noises.iter().any(|n| n != &noises[0]) {
            return Err(field_err("noises", "fixed_threshold requires identical noises"));
        }

        let problem = ScreeningProblem::new(impact, noises, self.capacity)?;
        Ok(Experiment {
            config: self,
            problem,
            grid_resolution: grid,
        })
    }
}

impl Experiment {
    pub fn load(path: &Path) -> CliResult<Self> {
        ExperimentConfig::load(path)?.into_experiment()
    }

    pub fn output_dir(&self) -> &Path {
        &self.config.output_dir
    }

    /// Solve (or apply) the configured strategy.
    pub fn solve(&self) -> CliResult<(FactorizedPosterior, ThresholdStrategy)> {
        let s = &self.config.strategy;
        let out = match s.kind {
            StrategyKind::FixedThreshold => solve_fixed_threshold_posterior(&self.problem)?,
            StrategyKind::FixedCapacity => solve_fixed_capacity_posterior(&self.problem)?,
            StrategyKind::Explicit => match (&s.thresholds, &s.stage_capacities) {
                (Some(t), _) => run_strategy(&self.problem, t)?,
                (None, Some(c)) => solve_stage_capacities(&self.problem, c, StrategyKind::Explicit)?,
                (None, None) => unreachable!("validated in into_experiment"),
            },
        };
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const INTRO: &str = r#"{
        "impact": {"kind": "uniform", "lo": 0, "hi": 1},
        "noises": [{"kind": "uniform", "lo": -0.25, "hi": 0.25}, {"kind": "uniform", "lo": -0.2, "hi": 0.2}],
        "capacity": 0.05,
        "strategy": {"kind": "explicit", "stage_capacities": [0.1, 0.5]},
        "output_dir": "out"
    }"#;

    #[test]
    fn parses_intro_config() {
        let exp = ExperimentConfig::from_json(INTRO).unwrap().into_experiment().unwrap();
        assert_eq!(exp.problem.stages(), 2);
        let (_, s) = exp.solve().unwrap();
        assert!((s.overall_capacity - 0.05).abs() < 1e-6);
    }

    #[test]
    fn unknown_field_is_an_error() {
        let text = INTRO.replace("\"capacity\"", "\"bogus\": 1, \"capacity\"");
        let err = ExperimentConfig::from_json(&text).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
        assert!(err.to_string().contains("line"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn capacity_out_of_range() {
        let text = INTRO.replace("0.05,", "1.2,");
        let err = ExperimentConfig::from_json(&text)
            .unwrap()
            .into_experiment()
            .unwrap_err();
        assert!(err.to_string().contains("capacity"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn explicit_needs_exactly_one_form() {
        let both = INTRO.replace(
            "\"stage_capacities\": [0.1, 0.5]",
            "\"stage_capacities\": [0.1, 0.5], \"thresholds\": [0.9, 0.9]",
        );
        assert!(ExperimentConfig::from_json(&both).unwrap().into_experiment().is_err());
        let neither = INTRO.replace(", \"stage_capacities\": [0.1, 0.5]", "");
        assert!(ExperimentConfig::from_json(&neither)
            .unwrap()
            .into_experiment()
            .is_err());
    }

    #[test]
    fn stage_capacity_product_checked() {
        let text = INTRO.replace("[0.1, 0.5]", "[0.1, 0.6]");
        let err = ExperimentConfig::from_json(&text)
            .unwrap()
            .into_experiment()
            .unwrap_err();
        assert!(err.to_string().contains("strategy.stage_capacities"), "{err}");
    }

    #[test]
    fn fixed_threshold_needs_iid() {
        let text = INTRO.replace(
            "{\"kind\": \"explicit\", \"stage_capacities\": [0.1, 0.5]}",
            "{\"kind\": \"fixed_threshold\"}",
        );
        let err = ExperimentConfig::from_json(&text)
            .unwrap()
            .into_experiment()
            .unwrap_err();
        assert!(err.to_string().contains("noises"), "{err}");
    }

    #[test]
    fn asymmetric_noise_names_stage() {
        let text = INTRO.replace("\"lo\": -0.2, \"hi\": 0.2", "\"lo\": -0.1, \"hi\": 0.2");
        let err = ExperimentConfig::from_json(&text)
            .unwrap()
            .into_experiment()
            .unwrap_err();
        assert!(err.to_string().contains("noises[1]"), "{err}");
    }
}
