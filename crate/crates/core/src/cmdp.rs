//! Finite constrained MDP model.
//!
//! Rewards and costs are stored per transition `(s, a, s')`. Channel 0 is the
//! reward being maximized; channels `1..=p` are the constrained costs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, ValidationIssue, ValidationReport};

/// `table[s][a][s']`.
pub type Table3 = Vec<Vec<Vec<f64>>>;

const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularCmdp {
    pub num_states: usize,
    pub num_actions: usize,
    #[serde(rename = "gamma")]
    pub discount: f64,
    #[serde(default = "default_c_max")]
    pub c_max: f64,
    #[serde(rename = "xi")]
    pub initial_dist: Vec<f64>,
    #[serde(rename = "P")]
    pub transition: Table3,
    #[serde(rename = "c0")]
    pub reward: Table3,
    pub costs: Vec<Table3>,
    pub limits: Vec<f64>,
}

fn default_c_max() -> f64 {
    1.0
}

impl TabularCmdp {
    /// Number of cost channels `p`.
    pub fn num_costs(&self) -> usize {
        self.costs.len()
    }

    /// Number of channels including the reward, `p + 1`.
    pub fn num_channels(&self) -> usize {
        self.costs.len() + 1
    }

    pub fn num_pairs(&self) -> usize {
        self.num_states * self.num_actions
    }

    /// Channel 0 is the reward, channel `i >= 1` is cost `i`.
    pub fn channel(&self, i: usize) -> &Table3 {
        if i == 0 {
            &self.reward
        } else {
            &self.costs[i - 1]
        }
    }

    /// Limit `d_i` of cost channel `i >= 1`.
    pub fn limit(&self, i: usize) -> f64 {
        self.limits[i - 1]
    }

    /// Upper bound on any discounted return, `c_max / (1 - gamma)`.
    pub fn value_bound(&self) -> f64 {
        self.c_max / (1.0 - self.discount)
    }

    /// Expected one-step cost `c̄_i(s,a) = Σ_{s'} P(s'|s,a) c_i(s,a,s')`, row-major over `(s,a)`.
    pub fn mean_costs(&self, channel: usize) -> Vec<f64> {
        let table = self.channel(channel);
        let mut out = Vec::with_capacity(self.num_pairs());
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                let p = &self.transition[s][a];
                out.push(p.iter().zip(&table[s][a]).map(|(p, c)| p * c).sum());
            }
        }
        out
    }

    /// Checks every model invariant and reports all violations at once.
    pub fn validate(&self) -> Result<(), ValidationReport> {
        let mut issues = Vec::new();
        let (ns, na) = (self.num_states, self.num_actions);
        if ns == 0 || na == 0 {
            issues.push(ValidationIssue::ShapeMismatch(format!(
                "num_states = {ns}, num_actions = {na} must be positive"
            )));
            return Err(ValidationReport { issues });
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            issues.push(ValidationIssue::BadDiscount(self.discount));
        }
        if !(self.c_max > 0.0 && self.c_max.is_finite()) {
            issues.push(ValidationIssue::BadCmax(self.c_max));
        }

        if self.initial_dist.len() != ns {
            issues.push(ValidationIssue::ShapeMismatch(format!(
                "xi has {} entries, expected {ns}",
                self.initial_dist.len()
            )));
        } else {
            let sum: f64 = self.initial_dist.iter().sum();
            let negative = self.initial_dist.iter().any(|&x| x < 0.0 || !x.is_finite());
            if negative || (sum - 1.0).abs() > STOCHASTIC_TOL {
                issues.push(ValidationIssue::BadInitialDist { sum });
            }
        }

        if self.limits.len() != self.costs.len() {
            issues.push(ValidationIssue::ShapeMismatch(format!(
                "{} limits for {} cost channels",
                self.limits.len(),
                self.costs.len()
            )));
        }
        for (i, d) in self.limits.iter().enumerate() {
            if !d.is_finite() {
                issues.push(ValidationIssue::NonFinite {
                    table: "limits".into(),
                    index: vec![i],
                });
            }
        }

        if check_shape("P", &self.transition, ns, na, &mut issues) {
            for s in 0..ns {
                for a in 0..na {
                    let row = &self.transition[s][a];
                    let mut bad_entry = false;
                    for (s2, &p) in row.iter().enumerate() {
                        if !p.is_finite() {
                            issues.push(ValidationIssue::NonFinite {
                                table: "P".into(),
                                index: vec![s, a, s2],
                            });
                            bad_entry = true;
                        } else if p < 0.0 {
                            issues.push(ValidationIssue::NegativeEntry {
                                table: "P".into(),
                                index: vec![s, a, s2],
                                value: p,
                            });
                            bad_entry = true;
                        }
                    }
                    let sum: f64 = row.iter().sum();
                    if !bad_entry && (sum - 1.0).abs() > STOCHASTIC_TOL {
                        issues.push(ValidationIssue::RowNotStochastic {
                            state: s,
                            action: a,
                            sum,
                        });
                    }
                }
            }
        }

        let mut cost_tables = vec![("c0".to_string(), &self.reward)];
        cost_tables.extend(
            self.costs
                .iter()
                .enumerate()
                .map(|(i, t)| (format!("costs[{i}]"), t)),
        );
        for (name, table) in cost_tables {
            if !check_shape(&name, table, ns, na, &mut issues) {
                continue;
            }
            for s in 0..ns {
                for a in 0..na {
                    for (s2, &c) in table[s][a].iter().enumerate() {
                        let index = vec![s, a, s2];
                        if !c.is_finite() {
                            issues.push(ValidationIssue::NonFinite {
                                table: name.clone(),
                                index,
                            });
                        } else if c < 0.0 {
                            issues.push(ValidationIssue::NegativeEntry {
                                table: name.clone(),
                                index,
                                value: c,
                            });
                        } else if c > self.c_max {
                            issues.push(ValidationIssue::EntryAboveCmax {
                                table: name.clone(),
                                index,
                                value: c,
                            });
                        }
                    }
                }
            }
        }

        if issues.is_empty() {
            Ok(())
        } else {
            Err(ValidationReport { issues })
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Reads a model and validates it.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let model = Self::from_json(&std::fs::read_to_string(path)?)?;
        model.validate()?;
        Ok(model)
    }
}

fn check_shape(
    name: &str,
    table: &Table3,
    ns: usize,
    na: usize,
    issues: &mut Vec<ValidationIssue>,
) -> bool {
    let before = issues.len();
    if table.len() != ns {
        issues.push(ValidationIssue::ShapeMismatch(format!(
            "{name} has {} states, expected {ns}",
            table.len()
        )));
        return false;
    }
    for (s, row) in table.iter().enumerate() {
        if row.len() != na {
            issues.push(ValidationIssue::ShapeMismatch(format!(
                "{name}[{s}] has {} actions, expected {na}",
                row.len()
            )));
            continue;
        }
        for (a, next) in row.iter().enumerate() {
            if next.len() != ns {
                issues.push(ValidationIssue::ShapeMismatch(format!(
                    "{name}[{s}][{a}] has {} successors, expected {ns}",
                    next.len()
                )));
            }
        }
    }
    issues.len() == before
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::make_twostate;

    #[test]
    fn twostate_is_valid() {
        make_twostate().validate().unwrap();
    }

    #[test]
    fn substochastic_row_is_reported() {
        let mut m = make_twostate();
        m.transition[0][0] = vec![0.9, 0.0];
        let report = m.validate().unwrap_err();
        assert_eq!(
            report.issues,
            vec![ValidationIssue::RowNotStochastic {
                state: 0,
                action: 0,
                sum: 0.9
            }]
        );
    }

    #[test]
    fn unit_discount_is_rejected() {
        let mut m = make_twostate();
        m.discount = 1.0;
        let report = m.validate().unwrap_err();
        assert!(matches!(report.issues[..], [ValidationIssue::BadDiscount(g)] if g == 1.0));
    }

    #[test]
    fn every_violation_is_listed() {
        let mut m = make_twostate();
        m.transition[0][1] = vec![-0.5, 1.5];
        m.transition[1][0] = vec![0.5, 0.4];
        m.initial_dist = vec![0.7, 0.7];
        m.costs[0][1][1][1] = 2.0;
        let report = m.validate().unwrap_err();
        assert_eq!(report.issues.len(), 4, "{report}");
        assert!(report.issues.contains(&ValidationIssue::NegativeEntry {
            table: "P".into(),
            index: vec![0, 1, 0],
            value: -0.5
        }));
        assert!(report.issues.iter().any(|i| matches!(
            i,
            ValidationIssue::RowNotStochastic {
                state: 1,
                action: 0,
                ..
            }
        )));
        assert!(report
            .issues
            .iter()
            .any(|i| matches!(i, ValidationIssue::BadInitialDist { .. })));
    }

    #[test]
    fn ragged_table_is_a_shape_error() {
        let mut m = make_twostate();
        m.reward[1].pop();
        let report = m.validate().unwrap_err();
        assert!(matches!(
            report.issues[0],
            ValidationIssue::ShapeMismatch(_)
        ));
    }

    #[test]
    fn json_uses_documented_field_names() {
        let value: serde_json::Value =
            serde_json::from_str(&make_twostate().to_json().unwrap()).unwrap();
        let mut keys: Vec<_> = value.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(
            keys,
            [
                "P",
                "c0",
                "c_max",
                "costs",
                "gamma",
                "limits",
                "num_actions",
                "num_states",
                "xi"
            ]
        );
    }
}
