//! Constrained MDP policy optimization: exact evaluation, TD estimation, an
//! occupancy-measure LP oracle, constraint-rectified NPG, a primal-dual
//! baseline and a two-layer ReLU network variant.

pub mod cmdp;
pub mod crpo;
pub mod envs;
pub mod error;
pub mod eval;
pub mod exec;
pub mod experiment;
pub mod linalg;
pub mod neural;
pub mod oracle;
pub mod pdo;
pub mod policy;
pub mod record;
pub mod sampling;
pub mod simplex;
pub mod td;

pub use cmdp::TabularCmdp;
pub use crpo::{run_crpo, run_npg, theorem_schedule, CrpoConfig, EvalMode, TieBreak};
pub use error::{Error, Result};
pub use exec::Execution;
pub use experiment::{compare, sweep, Comparison, RunSpec, Sweep, SweepParam};
pub use oracle::{solve_occupancy, solve_optimal, LpStatus, OccupancySolution};
pub use pdo::{run_pdo, PdoConfig};
pub use policy::{PolicyTable, SoftmaxPolicy};
pub use record::{Algo, IterationRecord, RunRecord, RunSummary, Target};
pub use td::{td_evaluate, QEstimate, TdConfig};
