//! Per-iteration traces shared by every optimizer, with CSV and JSON export.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Window over which feasibility must persist to count as sustained.
pub const SUSTAIN_WINDOW: usize = 50;

/// Slack on each limit when judging feasibility of an iterate.
pub const FEASIBILITY_SLACK: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    Crpo,
    Pdo,
    Npg,
    NeuralCrpo,
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algo::Crpo => "crpo",
            Algo::Pdo => "pdo",
            Algo::Npg => "npg",
            Algo::NeuralCrpo => "neural_crpo",
        })
    }
}

/// What the policy step of one iteration optimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// Ascent on the reward.
    Objective,
    /// Descent on cost channel `i >= 1`.
    Constraint(usize),
    /// Ascent on the primal-dual Lagrangian.
    Lagrangian,
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Objective => f.write_str("objective"),
            Target::Constraint(i) => write!(f, "constraint_{i}"),
            Target::Lagrangian => f.write_str("lagrangian"),
        }
    }
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "objective" => Ok(Target::Objective),
            "lagrangian" => Ok(Target::Lagrangian),
            _ => s
                .strip_prefix("constraint_")
                .and_then(|i| i.parse().ok())
                .map(Target::Constraint)
                .ok_or_else(|| Error::InvalidConfig(format!("unknown target {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: usize,
    pub target: Target,
    /// Estimated `J̄_i` for channels `0..=p`.
    pub jbar: Vec<f64>,
    pub in_n0: bool,
    /// Exact `J_i(w_t)` for channels `0..=p`.
    pub exact_j: Vec<f64>,
    /// Multipliers `λ_1..λ_p` in force during the step (primal-dual only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    /// Iterations whose estimated constraints passed the gate.
    pub n0: Vec<usize>,
    /// Iteration drawn uniformly from `n0` as the output policy.
    pub selected: Option<usize>,
    /// Action probabilities of the selected policy.
    pub selected_policy: Option<Vec<Vec<f64>>>,
    /// Mean of the exact returns over `n0`.
    pub n0_average_j: Option<Vec<f64>>,
    pub empty_n0: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub algo: Algo,
    pub seed: u64,
    pub limits: Vec<f64>,
    pub iterations: Vec<IterationRecord>,
    pub outcome: RunOutcome,
}

/// Fields of the per-run summary file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub final_avg_j: Vec<f64>,
    pub n0_size: usize,
    pub first_feasible_iter: Option<usize>,
    pub seed: u64,
}

impl RunRecord {
    pub fn num_costs(&self) -> usize {
        self.limits.len()
    }

    /// First `t` from which every exact `J_i ≤ d_i + slack` for `window` consecutive iterations.
    pub fn first_sustained_feasible(&self, window: usize, slack: f64) -> Option<usize> {
        let feasible: Vec<bool> = self
            .iterations
            .iter()
            .map(|it| {
                it.exact_j[1..]
                    .iter()
                    .zip(&self.limits)
                    .all(|(j, d)| *j <= d + slack)
            })
            .collect();
        let mut run = 0;
        for (t, &ok) in feasible.iter().enumerate() {
            run = if ok { run + 1 } else { 0 };
            if run == window {
                return Some(t + 1 - window);
            }
        }
        None
    }

    /// Mean exact returns over the last `fraction` of iterations (at least one).
    pub fn tail_average_j(&self, fraction: f64) -> Vec<f64> {
        let n = self.iterations.len();
        let k = ((n as f64 * fraction).ceil() as usize).clamp(1, n.max(1));
        let tail = &self.iterations[n - k..];
        let channels = tail.first().map_or(0, |it| it.exact_j.len());
        (0..channels)
            .map(|i| tail.iter().map(|it| it.exact_j[i]).sum::<f64>() / k as f64)
            .collect()
    }

    /// The figures reported per run: `N_0` average for CRPO variants, final
    /// 10% window average otherwise.
    pub fn summary(&self) -> RunSummary {
        let final_avg_j = match (self.algo, &self.outcome.n0_average_j) {
            (Algo::Crpo | Algo::NeuralCrpo, Some(avg)) => avg.clone(),
            _ => self.tail_average_j(0.1),
        };
        RunSummary {
            final_avg_j,
            n0_size: self.outcome.n0.len(),
            first_feasible_iter: self.first_sustained_feasible(SUSTAIN_WINDOW, FEASIBILITY_SLACK),
            seed: self.seed,
        }
    }

    pub fn csv_header(&self) -> Vec<String> {
        let channels = self.num_costs() + 1;
        let mut header = vec!["t".to_string(), "target".to_string()];
        header.extend((0..channels).map(|i| format!("jbar_{i}")));
        header.push("in_n0".into());
        header.extend((0..channels).map(|i| format!("exact_j_{i}")));
        if self.has_lambda() {
            header.extend((1..channels).map(|i| format!("lambda_{i}")));
        }
        header
    }

    fn has_lambda(&self) -> bool {
        self.iterations
            .first()
            .is_some_and(|it| it.lambda.is_some())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.csv_header())?;
        for it in &self.iterations {
            let mut row = vec![it.t.to_string(), it.target.to_string()];
            row.extend(it.jbar.iter().map(f64::to_string));
            row.push(if it.in_n0 { "1" } else { "0" }.to_string());
            row.extend(it.exact_j.iter().map(f64::to_string));
            if let Some(lambda) = &it.lambda {
                row.extend(lambda.iter().map(f64::to_string));
            }
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

/// Parses a trace CSV back into iteration records.
pub fn read_trace_csv(text: &str) -> Result<Vec<IterationRecord>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    let count = |prefix: &str| header.iter().filter(|h| h.starts_with(prefix)).count();
    let channels = count("jbar_");
    let lambdas = count("lambda_");
    let expected = 3 + 2 * channels + lambdas;
    if header.len() != expected || &header[0] != "t" || &header[1] != "target" {
        return Err(Error::InvalidConfig(format!(
            "unexpected trace header {header:?}"
        )));
    }
    let num = |s: &str| -> Result<f64> {
        s.parse()
            .map_err(|_| Error::InvalidConfig(format!("bad number {s:?}")))
    };
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row?;
        let jbar = (0..channels)
            .map(|i| num(&row[2 + i]))
            .collect::<Result<_>>()?;
        let exact_j = (0..channels)
            .map(|i| num(&row[3 + channels + i]))
            .collect::<Result<_>>()?;
        let lambda = if lambdas > 0 {
            Some(
                (0..lambdas)
                    .map(|i| num(&row[3 + 2 * channels + i]))
                    .collect::<Result<_>>()?,
            )
        } else {
            None
        };
        out.push(IterationRecord {
            t: row[0]
                .parse()
                .map_err(|_| Error::InvalidConfig("bad t".into()))?,
            target: row[1].parse()?,
            jbar,
            in_n0: &row[2 + channels] == "1",
            exact_j,
            lambda,
        });
    }
    Ok(out)
}
