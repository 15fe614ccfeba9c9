//! Multi-seed experiments: algorithm comparisons, parameter sweeps and
//! dual-stepsize tuning, all scored against the LP optimum.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cmdp::TabularCmdp;
use crate::crpo::{run_crpo, run_npg, CrpoConfig};
use crate::error::{Error, Result};
use crate::eval::{value_iteration, Sense};
use crate::exec::Execution;
use crate::neural::{run_neural_crpo, FeatureEmbedding, NeuralCrpoConfig};
use crate::oracle::solve_optimal;
use crate::pdo::{run_pdo, PdoConfig, DUAL_STEP_GRID};
use crate::record::{Algo, RunRecord, FEASIBILITY_SLACK};

/// Tolerance grid for η-sensitivity sweeps, in units of a cost range of [`ETA_GRID_SCALE`].
pub const ETA_GRID: [f64; 5] = [10.0, 5.0, 2.0, 1.0, 0.5];

/// Cost range in which [`ETA_GRID`] is expressed.
pub const ETA_GRID_SCALE: f64 = 500.0;

/// Seed of the feature embedding used by neural runs.
pub const EMBEDDING_SEED: u64 = 0;

/// Best minus worst achievable `J_channel` from `ξ`.
pub fn return_range(model: &TabularCmdp, channel: usize) -> f64 {
    value_iteration(model, channel, Sense::Maximize).j
        - value_iteration(model, channel, Sense::Minimize).j
}

/// [`ETA_GRID`] rescaled to the largest cost range of `model`.
pub fn scaled_eta_grid(model: &TabularCmdp) -> Vec<f64> {
    let range = (1..model.num_channels())
        .map(|i| return_range(model, i))
        .fold(0.0, f64::max);
    ETA_GRID
        .iter()
        .map(|v| v * range / ETA_GRID_SCALE)
        .collect()
}

/// One algorithm with its configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algo", rename_all = "snake_case")]
pub enum RunSpec {
    Crpo(CrpoConfig),
    Pdo(PdoConfig),
    Npg(CrpoConfig),
    NeuralCrpo { config: NeuralCrpoConfig, d: usize },
}

impl RunSpec {
    pub fn algo(&self) -> Algo {
        match self {
            RunSpec::Crpo(_) => Algo::Crpo,
            RunSpec::Pdo(_) => Algo::Pdo,
            RunSpec::Npg(_) => Algo::Npg,
            RunSpec::NeuralCrpo { .. } => Algo::NeuralCrpo,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            RunSpec::Crpo(c) | RunSpec::Npg(c) => c.seed,
            RunSpec::Pdo(c) => c.seed,
            RunSpec::NeuralCrpo { config, .. } => config.seed,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut spec = self.clone();
        match &mut spec {
            RunSpec::Crpo(c) | RunSpec::Npg(c) => c.seed = seed,
            RunSpec::Pdo(c) => c.seed = seed,
            RunSpec::NeuralCrpo { config, .. } => config.seed = seed,
        }
        spec
    }

    /// The spec with `param` set to `value`.
    pub fn with_param(&self, param: SweepParam, value: f64) -> Result<Self> {
        let mut spec = self.clone();
        match (&mut spec, param) {
            (RunSpec::Crpo(c), SweepParam::Eta) => c.eta = value,
            (RunSpec::NeuralCrpo { config, .. }, SweepParam::Eta) => config.eta = value,
            (RunSpec::Crpo(c) | RunSpec::Npg(c), SweepParam::Alpha) => c.alpha = value,
            (RunSpec::Pdo(c), SweepParam::Alpha) => c.alpha = value,
            (RunSpec::NeuralCrpo { config, .. }, SweepParam::Alpha) => config.alpha = value,
            (RunSpec::Pdo(c), SweepParam::BetaDual) => c.beta_dual = value,
            (s, p) => {
                return Err(Error::InvalidConfig(format!(
                    "{p} cannot be swept for {}",
                    s.algo()
                )));
            }
        }
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            RunSpec::Crpo(c) | RunSpec::Npg(c) => c.validate(),
            RunSpec::Pdo(c) => c.validate(),
            RunSpec::NeuralCrpo { config, .. } => config.validate(),
        }
    }

    pub fn run(&self, model: &TabularCmdp) -> Result<RunRecord> {
        match self {
            RunSpec::Crpo(c) => run_crpo(model, c),
            RunSpec::Npg(c) => run_npg(model, c),
            RunSpec::Pdo(c) => run_pdo(model, c),
            RunSpec::NeuralCrpo { config, d } => {
                let emb = FeatureEmbedding::gaussian(
                    model.num_states,
                    model.num_actions,
                    *d,
                    EMBEDDING_SEED,
                )?;
                Ok(run_neural_crpo(model, &emb, config)?.record)
            }
        }
    }
}

/// Runs `spec` once per seed; records come back in seed order.
pub fn run_seeds(
    model: &TabularCmdp,
    spec: &RunSpec,
    seeds: &[u64],
    exec: Execution,
) -> Result<Vec<RunRecord>> {
    exec.map(seeds, |&s| spec.with_seed(s).run(model))
        .into_iter()
        .collect()
}

/// Largest `J_i − d_i` over the constraints (negative when all are slack).
pub fn violation(limits: &[f64], j: &[f64]) -> f64 {
    j[1..]
        .iter()
        .zip(limits)
        .map(|(j, d)| j - d)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Scores of one finished run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    /// N_0-average returns for CRPO, mean of the last tenth otherwise.
    pub final_j: Vec<f64>,
    pub final_gap: f64,
    pub final_violation: f64,
    pub first_feasible_iter: Option<usize>,
    pub n0_size: usize,
}

impl SeedOutcome {
    pub fn new(record: &RunRecord, j_star_0: f64) -> Self {
        let summary = record.summary();
        Self {
            seed: record.seed,
            final_gap: j_star_0 - summary.final_avg_j[0],
            final_violation: violation(&record.limits, &summary.final_avg_j),
            final_j: summary.final_avg_j,
            first_feasible_iter: summary.first_feasible_iter,
            n0_size: summary.n0_size,
        }
    }
}

/// Median of a non-empty sample; NaN for an empty one.
pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median first-feasible iteration counting never-feasible runs as infinitely late.
/// `None` when that median is infinite.
pub fn median_first_feasible(outcomes: &[SeedOutcome]) -> Option<f64> {
    let xs: Vec<f64> = outcomes
        .iter()
        .map(|o| o.first_feasible_iter.map_or(f64::INFINITY, |t| t as f64))
        .collect();
    Some(median(&xs)).filter(|m| m.is_finite())
}

/// Per-algorithm part of a comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlgoReport {
    pub algo: Algo,
    pub median_first_feasible: Option<f64>,
    pub median_final_gap: f64,
    pub seeds: Vec<SeedOutcome>,
    #[serde(skip)]
    pub runs: Vec<RunRecord>,
}

impl AlgoReport {
    fn new(runs: Vec<RunRecord>, j_star_0: f64) -> Self {
        let seeds: Vec<SeedOutcome> = runs.iter().map(|r| SeedOutcome::new(r, j_star_0)).collect();
        let gaps: Vec<f64> = seeds.iter().map(|o| o.final_gap).collect();
        Self {
            algo: runs[0].algo,
            median_first_feasible: median_first_feasible(&seeds),
            median_final_gap: median(&gaps),
            seeds,
            runs,
        }
    }
}

/// CRPO against the primal-dual baseline on shared seeds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Comparison {
    pub j_star: Vec<f64>,
    pub crpo: AlgoReport,
    pub pdo: AlgoReport,
    /// Median first sustained feasibility of CRPO strictly precedes that of PDO.
    pub crpo_feasible_first: bool,
}

pub fn compare(
    model: &TabularCmdp,
    crpo: &RunSpec,
    pdo: &RunSpec,
    seeds: &[u64],
    exec: Execution,
) -> Result<Comparison> {
    if seeds.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "comparison needs at least 2 seeds, got {}",
            seeds.len()
        )));
    }
    crpo.validate()?;
    pdo.validate()?;
    let j_star = solve_optimal(model)?.j_star;
    let crpo = AlgoReport::new(run_seeds(model, crpo, seeds, exec)?, j_star[0]);
    let pdo = AlgoReport::new(run_seeds(model, pdo, seeds, exec)?, j_star[0]);
    let crpo_feasible_first = match (crpo.median_first_feasible, pdo.median_first_feasible) {
        (Some(c), Some(p)) => c < p,
        (Some(_), None) => true,
        (None, _) => false,
    };
    Ok(Comparison {
        j_star,
        crpo,
        pdo,
        crpo_feasible_first,
    })
}

/// Hyperparameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Eta,
    Alpha,
    BetaDual,
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepParam::Eta => "eta",
            SweepParam::Alpha => "alpha",
            SweepParam::BetaDual => "beta_dual",
        })
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eta" => Ok(SweepParam::Eta),
            "alpha" => Ok(SweepParam::Alpha),
            "beta_dual" => Ok(SweepParam::BetaDual),
            other => Err(Error::InvalidConfig(format!(
                "unknown sweep parameter {other:?}"
            ))),
        }
    }
}

/// One `(value, seed)` cell of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub seed: u64,
    pub final_j0: f64,
    pub final_gap: f64,
    pub final_violation: f64,
}

#[derive(Debug, Clone)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<f64>,
    /// Value-major, seed-minor.
    pub rows: Vec<SweepRow>,
    pub runs: Vec<RunRecord>,
}

impl Sweep {
    fn column(&self, value: f64, f: impl Fn(&SweepRow) -> f64) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.value == value)
            .map(f)
            .collect()
    }

    pub fn median_final_j0(&self, value: f64) -> f64 {
        median(&self.column(value, |r| r.final_j0))
    }

    pub fn median_final_gap(&self, value: f64) -> f64 {
        median(&self.column(value, |r| r.final_gap))
    }

    pub fn median_final_violation(&self, value: f64) -> f64 {
        median(&self.column(value, |r| r.final_violation))
    }

    /// Spread (max − min) over values of the median final `J_0`.
    pub fn robustness(&self) -> f64 {
        let meds: Vec<f64> = self
            .values
            .iter()
            .map(|&v| self.median_final_j0(v))
            .collect();
        meds.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - meds.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Value with the smallest median final gap among those whose median final
    /// violation is within `slack`; the least violating value when none is.
    pub fn best_by_gap(&self, slack: f64) -> f64 {
        let feasible: Vec<f64> = self
            .values
            .iter()
            .copied()
            .filter(|&v| self.median_final_violation(v) <= slack)
            .collect();
        let (pool, key): (Vec<f64>, Box<dyn Fn(f64) -> f64>) = if feasible.is_empty() {
            (
                self.values.clone(),
                Box::new(|v| self.median_final_violation(v)),
            )
        } else {
            (feasible, Box::new(|v| self.median_final_gap(v)))
        };
        pool.into_iter()
            .min_by(|&a, &b| key(a).total_cmp(&key(b)))
            .expect("sweep has values")
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["value", "seed", "final_j0", "final_gap", "final_violation"])?;
        for r in &self.rows {
            w.write_record([
                r.value.to_string(),
                r.seed.to_string(),
                r.final_j0.to_string(),
                r.final_gap.to_string(),
                r.final_violation.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs `base` for every `(value, seed)` pair.
pub fn sweep(
    model: &TabularCmdp,
    base: &RunSpec,
    param: SweepParam,
    values: &[f64],
    seeds: &[u64],
    exec: Execution,
) -> Result<Sweep> {
    if values.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidConfig(
            "sweep needs at least one value and one seed".into(),
        ));
    }
    let mut jobs = Vec::with_capacity(values.len() * seeds.len());
    for &v in values {
        let spec = base.with_param(param, v)?;
        spec.validate()?;
        jobs.extend(seeds.iter().map(|&s| (v, spec.with_seed(s))));
    }
    let j_star_0 = solve_optimal(model)?.j_star[0];
    let runs: Vec<RunRecord> = exec
        .map(&jobs, |(_, spec)| spec.run(model))
        .into_iter()
        .collect::<Result<_>>()?;
    let rows = jobs
        .iter()
        .zip(&runs)
        .map(|((v, _), r)| {
            let o = SeedOutcome::new(r, j_star_0);
            SweepRow {
                value: *v,
                seed: o.seed,
                final_j0: o.final_j[0],
                final_gap: o.final_gap,
                final_violation: o.final_violation,
            }
        })
        .collect();
    Ok(Sweep {
        param,
        values: values.to_vec(),
        rows,
        runs,
    })
}

/// Sweeps the dual stepsize of a primal-dual spec over [`DUAL_STEP_GRID`] and
/// returns the best value by [`Sweep::best_by_gap`] with [`FEASIBILITY_SLACK`].
pub fn tune_dual_step(
    model: &TabularCmdp,
    pdo: &RunSpec,
    seeds: &[u64],
    exec: Execution,
) -> Result<(f64, Sweep)> {
    let grid = sweep(
        model,
        pdo,
        SweepParam::BetaDual,
        &DUAL_STEP_GRID,
        seeds,
        exec,
    )?;
    Ok((grid.best_by_gap(FEASIBILITY_SLACK), grid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crpo::EvalMode;
    use crate::envs::make_twostate;

    fn crpo_spec(t_max: usize) -> RunSpec {
        RunSpec::Crpo(CrpoConfig {
            t_max,
            alpha: 0.1,
            eta: 0.0,
            td: Default::default(),
            tie_break: Default::default(),
            seed: 0,
            eval_mode: EvalMode::Exact,
            eval_epsilon: 0.0,
        })
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn never_feasible_counts_as_late() {
        let o = |t: Option<usize>| SeedOutcome {
            seed: 0,
            final_j: vec![0.0, 0.0],
            final_gap: 0.0,
            final_violation: 0.0,
            first_feasible_iter: t,
            n0_size: 0,
        };
        assert_eq!(
            median_first_feasible(&[o(Some(4)), o(None), o(Some(2))]),
            Some(4.0)
        );
        assert_eq!(median_first_feasible(&[o(Some(4)), o(None), o(None)]), None);
    }

    #[test]
    fn twostate_ranges() {
        let m = make_twostate();
        assert!((return_range(&m, 0) - 10.0).abs() < 1e-9);
        assert!((return_range(&m, 1) - 10.0).abs() < 1e-9);
        let grid = scaled_eta_grid(&m);
        assert!((grid[0] - 0.2).abs() < 1e-9 && (grid[4] - 0.01).abs() < 1e-9);
    }

    #[test]
    fn comparison_needs_two_seeds() {
        let m = make_twostate();
        assert!(matches!(
            compare(
                &m,
                &crpo_spec(5),
                &crpo_spec(5),
                &[0],
                Execution::Sequential
            ),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn self_comparison_has_equal_medians() {
        let m = make_twostate();
        let c = compare(
            &m,
            &crpo_spec(80),
            &crpo_spec(80),
            &[0, 1, 2],
            Execution::Sequential,
        )
        .unwrap();
        assert_eq!(c.crpo.median_final_gap, c.pdo.median_final_gap);
        assert_eq!(c.crpo.median_first_feasible, c.pdo.median_first_feasible);
        assert!(!c.crpo_feasible_first);
    }

    #[test]
    fn single_value_sweep_matches_plain_runs() {
        let m = make_twostate();
        let s = sweep(
            &m,
            &crpo_spec(30),
            SweepParam::Eta,
            &[0.25],
            &[3, 4],
            Execution::Parallel,
        )
        .unwrap();
        let plain = run_seeds(
            &m,
            &crpo_spec(30).with_param(SweepParam::Eta, 0.25).unwrap(),
            &[3, 4],
            Execution::Sequential,
        )
        .unwrap();
        assert_eq!(s.runs, plain);
        assert_eq!(s.robustness(), 0.0);
    }

    #[test]
    fn dual_step_is_not_a_crpo_parameter() {
        assert!(crpo_spec(1).with_param(SweepParam::BetaDual, 0.1).is_err());
        assert_eq!(
            "beta_dual".parse::<SweepParam>().unwrap(),
            SweepParam::BetaDual
        );
        assert!("gamma".parse::<SweepParam>().is_err());
    }

    #[test]
    fn best_by_gap_prefers_feasible_values() {
        let row = |value: f64, gap: f64, viol: f64| SweepRow {
            value,
            seed: 0,
            final_j0: 0.0,
            final_gap: gap,
            final_violation: viol,
        };
        let mut s = Sweep {
            param: SweepParam::BetaDual,
            values: vec![0.1, 0.2, 0.3],
            rows: vec![row(0.1, 0.01, 0.5), row(0.2, 0.3, 0.0), row(0.3, 0.2, 0.04)],
            runs: vec![],
        };
        assert_eq!(s.best_by_gap(0.05), 0.3);
        s.rows[2].final_violation = 0.4;
        s.rows[1].final_violation = 0.45;
        assert_eq!(s.best_by_gap(0.05), 0.3);
    }
}
