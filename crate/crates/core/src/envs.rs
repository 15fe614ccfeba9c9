//! Seeded benchmark models.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::cmdp::{Table3, TabularCmdp};
use crate::error::{Error, Result};
use crate::eval::{exact_returns, value_iteration, Sense};
use crate::oracle::{solve_occupancy, LpStatus};
use crate::policy::PolicyTable;

const GARNET_ATTEMPTS: usize = 10;
const GARNET_LIMIT_FRACTION: f64 = 0.75;
const GARNET_DISCOUNT: f64 = 0.9;
const GRID_DISCOUNT: f64 = 0.95;
const GRID_SLIP: f64 = 0.1;

/// Two states, two actions. `a0` stays put; `a1` moves `s0 → s1` and stays at `s1`.
/// Reward 1 for landing in `s1`, cost 1 for every use of `a1`.
pub fn make_twostate() -> TabularCmdp {
    let transition = vec![
        vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        vec![vec![0.0, 1.0], vec![0.0, 1.0]],
    ];
    let reward = (0..2)
        .map(|_| (0..2).map(|_| vec![0.0, 1.0]).collect())
        .collect();
    let cost = (0..2)
        .map(|_| (0..2).map(|a| vec![a as f64; 2]).collect())
        .collect();
    TabularCmdp {
        num_states: 2,
        num_actions: 2,
        discount: 0.9,
        c_max: 1.0,
        initial_dist: vec![1.0, 0.0],
        transition,
        reward,
        costs: vec![cost],
        limits: vec![0.5],
    }
}

/// Random Garnet-style CMDP with `p_costs` constraints.
///
/// Every `(s,a)` reaches `branching` distinct successors with Dirichlet(1)
/// weights; rewards and costs are i.i.d. uniform on `[0,1]` per transition;
/// `ξ` is uniform. Each limit is 0.75 times the cost the reward-optimal policy
/// incurs, so that policy is infeasible. Models whose constraint set is empty
/// are redrawn from the next stream of the same seed. `γ = 0.9`.
pub fn make_garnet(
    num_states: usize,
    num_actions: usize,
    branching: usize,
    p_costs: usize,
    seed: u64,
) -> Result<TabularCmdp> {
    make_garnet_discounted(
        num_states,
        num_actions,
        branching,
        p_costs,
        seed,
        GARNET_DISCOUNT,
    )
}

/// [`make_garnet`] with an explicit discount factor.
pub fn make_garnet_discounted(
    num_states: usize,
    num_actions: usize,
    branching: usize,
    p_costs: usize,
    seed: u64,
    discount: f64,
) -> Result<TabularCmdp> {
    if branching == 0 || branching > num_states {
        return Err(Error::InvalidConfig(format!(
            "branching {branching} must be in 1..={num_states}"
        )));
    }
    for attempt in 0..GARNET_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(attempt as u64);
        let mut model = draw_garnet(num_states, num_actions, branching, p_costs, &mut rng);
        model.discount = discount;
        let greedy = value_iteration(&model, 0, Sense::Maximize);
        let unconstrained = PolicyTable::deterministic(num_actions, &greedy.actions);
        let returns = exact_returns(&model, &unconstrained)?;
        model.limits = returns[1..]
            .iter()
            .map(|j| GARNET_LIMIT_FRACTION * j)
            .collect();
        if solve_occupancy(&model)?.status == LpStatus::Optimal {
            return Ok(model);
        }
    }
    Err(Error::InfeasibleGenerated {
        attempts: GARNET_ATTEMPTS,
    })
}

fn draw_garnet(
    ns: usize,
    na: usize,
    branching: usize,
    p_costs: usize,
    rng: &mut ChaCha8Rng,
) -> TabularCmdp {
    let mut transition = vec![vec![vec![0.0; ns]; na]; ns];
    for row in transition.iter_mut().flatten() {
        let successors = sample(rng, ns, branching);
        let weights: Vec<f64> = (0..branching).map(|_| rng.sample(Exp1)).collect();
        let total: f64 = weights.iter().sum();
        for (s2, w) in successors.iter().zip(&weights) {
            row[s2] = w / total;
        }
        // exact stochasticity for validation
        let sum: f64 = row.iter().sum();
        let first = successors.index(0);
        row[first] += 1.0 - sum;
    }
    let uniform_table = |rng: &mut ChaCha8Rng| -> Table3 {
        (0..ns)
            .map(|_| {
                (0..na)
                    .map(|_| (0..ns).map(|_| rng.random::<f64>()).collect())
                    .collect()
            })
            .collect()
    };
    let reward = uniform_table(rng);
    let costs = (0..p_costs).map(|_| uniform_table(rng)).collect();
    TabularCmdp {
        num_states: ns,
        num_actions: na,
        discount: GARNET_DISCOUNT,
        c_max: 1.0,
        initial_dist: vec![1.0 / ns as f64; ns],
        transition,
        reward,
        costs,
        limits: vec![0.0; p_costs],
    }
}

/// Which cells of a gridworld charge the constraint cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostCells {
    /// `(x, y)` coordinates.
    Explicit(Vec<(usize, usize)>),
    /// `count` distinct cells drawn with the generator seed, never the start or goal.
    Random { count: usize },
}

pub const UP: usize = 0;
pub const DOWN: usize = 1;
pub const LEFT: usize = 2;
pub const RIGHT: usize = 3;

/// Grid walk with four actions and slippery moves.
///
/// The start is the bottom-left cell `(0,0)` and the goal the bottom-right cell
/// `(width−1, 0)`. A move goes the intended way with probability 0.9 and in a
/// uniformly random direction otherwise; moves off the grid stay put. Landing
/// on the goal pays reward 1, and every action at the goal resets to the start.
/// Cost channel 1 pays 1 for every step that lands on a cost cell. `γ = 0.95`,
/// `ξ` is the start cell.
pub fn make_gridworld(
    width: usize,
    height: usize,
    cost_cells: &CostCells,
    d: f64,
    seed: u64,
) -> Result<TabularCmdp> {
    if width < 2 || height < 2 {
        return Err(Error::InvalidConfig(format!(
            "grid {width}x{height} is smaller than 2x2"
        )));
    }
    let ns = width * height;
    let index = |x: usize, y: usize| y * width + x;
    let start = index(0, 0);
    let goal = index(width - 1, 0);

    let mut is_cost = vec![false; ns];
    match cost_cells {
        CostCells::Explicit(cells) => {
            for &(x, y) in cells {
                if x >= width || y >= height {
                    return Err(Error::InvalidConfig(format!(
                        "cost cell ({x},{y}) is off the grid"
                    )));
                }
                is_cost[index(x, y)] = true;
            }
        }
        CostCells::Random { count } => {
            let candidates: Vec<usize> = (0..ns).filter(|&s| s != start && s != goal).collect();
            if *count > candidates.len() {
                return Err(Error::InvalidConfig(format!(
                    "{count} cost cells do not fit"
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in sample(&mut rng, candidates.len(), *count) {
                is_cost[candidates[i]] = true;
            }
        }
    }

    let step = |s: usize, dir: usize| -> usize {
        let (x, y) = (s % width, s / width);
        match dir {
            UP if y + 1 < height => index(x, y + 1),
            DOWN if y > 0 => index(x, y - 1),
            LEFT if x > 0 => index(x - 1, y),
            RIGHT if x + 1 < width => index(x + 1, y),
            _ => s,
        }
    };

    let mut transition = vec![vec![vec![0.0; ns]; 4]; ns];
    for s in 0..ns {
        for a in 0..4 {
            let row = &mut transition[s][a];
            if s == goal {
                row[start] = 1.0;
                continue;
            }
            row[step(s, a)] += 1.0 - GRID_SLIP;
            for dir in 0..4 {
                row[step(s, dir)] += GRID_SLIP / 4.0;
            }
        }
    }
    let mut reward = vec![vec![vec![0.0; ns]; 4]; ns];
    let mut cost = vec![vec![vec![0.0; ns]; 4]; ns];
    for s in 0..ns {
        for a in 0..4 {
            for s2 in 0..ns {
                if s != goal && s2 == goal {
                    reward[s][a][s2] = 1.0;
                }
                if is_cost[s2] {
                    cost[s][a][s2] = 1.0;
                }
            }
        }
    }
    let mut initial_dist = vec![0.0; ns];
    initial_dist[start] = 1.0;
    Ok(TabularCmdp {
        num_states: ns,
        num_actions: 4,
        discount: GRID_DISCOUNT,
        c_max: 1.0,
        initial_dist,
        transition,
        reward,
        costs: vec![cost],
        limits: vec![d],
    })
}

/// 5×5 grid whose direct route crosses a cost wall in column 2; the gap at the
/// top row allows a longer detour.
pub fn benchmark_gridworld() -> TabularCmdp {
    let wall = CostCells::Explicit((0..4).map(|y| (2, y)).collect());
    make_gridworld(5, 5, &wall, 0.3, 0).expect("benchmark grid is well formed")
}

/// Seed of the 10-state, 5-action benchmark Garnet.
pub const BENCHMARK_GARNET_SEED: u64 = 2021;

/// 10 states, 5 actions, branching 3, one constraint.
pub fn benchmark_garnet() -> TabularCmdp {
    make_garnet(10, 5, 3, 1, BENCHMARK_GARNET_SEED).expect("benchmark garnet is feasible")
}

/// Seed of the 5-state Garnet used for TD convergence checks.
pub const TD_GARNET_SEED: u64 = 5;

/// Discount of the TD convergence Garnet.
pub const TD_GARNET_DISCOUNT: f64 = 0.7;

/// 5 states, 2 actions, branching 3, one constraint, `γ = 0.7`; ergodic under
/// every full-support policy.
pub fn td_garnet() -> TabularCmdp {
    make_garnet_discounted(5, 2, 3, 1, TD_GARNET_SEED, TD_GARNET_DISCOUNT)
        .expect("TD garnet is feasible")
}
