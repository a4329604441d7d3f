//! Moving-horizon robot selection.
//!
//! At each recharge hub the fleet decides which robots stay in the payload
//! formation over the next `k` hubs. The decision is a binary quadratic
//! program: minimize the predicted discharge of the robots active at the
//! horizon's end while maximizing retention (keeping the same robots in
//! place), subject to formation-size, battery-threshold and hub-presence
//! constraints. Instances are tiny, so the program is solved exactly by a
//! pruned depth-first search over per-step assignments; the explicit
//! `P`/`Q` matrix encoding is kept both as the objective evaluator and as
//! the bridge to the algebraic form the formulation is stated in.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ScheduleError {
    #[error("no feasible assignment: waiting for replacement")]
    Infeasible,
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
}

/// One scheduling instance over `horizon_k` future hubs.
///
/// Vectors are indexed by schedulable robot; index `i` is robot `i+1` in
/// display output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleProblem {
    pub n_robots: usize,
    pub horizon_k: usize,
    pub formation_size_f: usize,
    /// Measured accumulated discharge per robot, mAh.
    pub d0: Vec<f64>,
    /// Current assignment X⁰ (1 = in formation).
    pub x0: Vec<u8>,
    /// Hub presence H¹..Hᵏ: robots physically available at each future hub.
    pub hub_presence: Vec<Vec<u8>>,
    /// Discharge recovered over one inter-hub leg while charging, mAh
    /// (negative contribution).
    pub r_c: f64,
    /// Discharge accumulated over one inter-hub leg while active, mAh.
    pub r_d: f64,
    /// Battery threshold: an active robot's predicted discharge must stay
    /// at or below this, mAh.
    pub d_th: f64,
    /// Pack capacity, mAh; used to express remaining fractions.
    pub capacity_mah: f64,
    /// Weight of the discharge objective.
    pub w1: f64,
    /// Weight of the retention objective.
    pub w2: f64,
}

impl ScheduleProblem {
    pub fn validate(&self) -> Result<(), ScheduleError> {
        let n = self.n_robots;
        let err = |m: String| Err(ScheduleError::InvalidProblem(m));
        if self.horizon_k < 1 {
            return err("horizon_k must be >= 1".into());
        }
        if self.formation_size_f > n {
            return err("formation_size_f must be <= n_robots".into());
        }
        if self.d0.len() != n || self.x0.len() != n {
            return err("d0 and x0 must have length n_robots".into());
        }
        if self.hub_presence.len() != self.horizon_k
            || self.hub_presence.iter().any(|h| h.len() != n)
        {
            return err("hub_presence must be horizon_k vectors of length n_robots".into());
        }
        if active_count(&self.x0) != self.formation_size_f {
            return err("x0 must select exactly formation_size_f robots".into());
        }
        if !(self.r_d > self.r_c) {
            return err("r_d must exceed r_c".into());
        }
        if self.hub_presence[0]
            .iter()
            .zip(&self.x0)
            .any(|(&h, &x)| h == 1 && x == 1)
        {
            return err("a robot cannot be both active and at the next hub".into());
        }
        if self.d0.iter().any(|&d| d < 0.0 || d > self.capacity_mah) {
            return err("d0 entries must lie in [0, capacity]".into());
        }
        Ok(())
    }

    pub fn remaining_fraction(&self, robot: usize) -> f64 {
        1.0 - self.d0[robot] / self.capacity_mah
    }
}

/// The solved assignment over the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSolution {
    /// X¹..Xᵏ.
    pub x: Vec<Vec<u8>>,
    pub objective_value: f64,
    /// Predicted discharge after each horizon step (clamped at zero).
    pub predicted_d: Vec<Vec<f64>>,
}

/// The swap a solution implies at one hub.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ReplacementOrder {
    pub leaving: Vec<usize>,
    pub entering: Vec<usize>,
}

impl ReplacementOrder {
    pub fn is_empty(&self) -> bool {
        self.leaving.is_empty()
    }

    /// Leaver/entrant pairs, both sides in ascending order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.leaving.iter().copied().zip(self.entering.iter().copied())
    }
}

/// Outcome of the baseline threshold rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BaselineOutcome {
    pub order: ReplacementOrder,
    /// Set when leavers remain without an eligible entrant.
    pub must_wait: bool,
}

fn active_count(x: &[u8]) -> usize {
    x.iter().filter(|&&b| b == 1).count()
}

/// Predicted discharge after `m` horizon steps (Eq. form:
/// `D⁰ + m·r_c + (r_d − r_c)·Σ_{j≤m} Xʲ`), clamped below at zero since a
/// pack cannot hold more than its full charge.
pub fn predict_discharge(problem: &ScheduleProblem, x_seq: &[Vec<u8>], m: usize) -> Vec<f64> {
    assert!(m >= 1 && m <= x_seq.len());
    (0..problem.n_robots)
        .map(|i| {
            let active_steps: f64 = x_seq[..m].iter().map(|x| x[i] as f64).sum();
            (problem.d0[i] + m as f64 * problem.r_c + (problem.r_d - problem.r_c) * active_steps)
                .max(0.0)
        })
        .collect()
}

/// Raw (unclamped) prediction used by the algebraic objective.
fn predict_discharge_raw(problem: &ScheduleProblem, x_seq: &[Vec<u8>], m: usize) -> Vec<f64> {
    (0..problem.n_robots)
        .map(|i| {
            let active_steps: f64 = x_seq[..m].iter().map(|x| x[i] as f64).sum();
            problem.d0[i] + m as f64 * problem.r_c + (problem.r_d - problem.r_c) * active_steps
        })
        .collect()
}

/// Builds the quadratic objective `½XᵀPX + QᵀX` over the flattened decision
/// vector `X = [X¹; …; Xᵏ]`.
///
/// `P = w1·(r_d − r_c)·P_d − w2·P_r`, `Q = w1·Q_d − w2·Q_r`, with `P_r` the
/// super/sub-diagonal retention pattern, `P_d` ones in the last block row
/// and column with a 2 in the corner, `Q_d` carrying `D⁰ + k·r_c` in the
/// last block and `Q_r` carrying `X⁰` in the first. The `(r_d − r_c)`
/// factor restores the discharge-prediction scale to the quadratic term so
/// the expansion reproduces the discharge objective exactly.
pub fn build_qp(problem: &ScheduleProblem) -> (DMatrix<f64>, DVector<f64>) {
    let n = problem.n_robots;
    let k = problem.horizon_k;
    let dim = k * n;
    let mut p = DMatrix::<f64>::zeros(dim, dim);
    let mut q = DVector::<f64>::zeros(dim);

    let w1s = problem.w1 * (problem.r_d - problem.r_c);
    // P_d ⊗ I: block (a, b) is 1 when a or b is the last step, 2 on the corner.
    for a in 0..k {
        for b in 0..k {
            let pd = if a == k - 1 && b == k - 1 {
                2.0
            } else if a == k - 1 || b == k - 1 {
                1.0
            } else {
                0.0
            };
            // P_r ⊗ I: ones on the super/sub block diagonals.
            let pr = if a.abs_diff(b) == 1 { 1.0 } else { 0.0 };
            let coeff = w1s * pd - problem.w2 * pr;
            if coeff != 0.0 {
                for i in 0..n {
                    p[(a * n + i, b * n + i)] = coeff;
                }
            }
        }
    }
    for i in 0..n {
        // Q_d: (D⁰ + k·r_c) in the last block.
        q[(k - 1) * n + i] += problem.w1 * (problem.d0[i] + k as f64 * problem.r_c);
        // Q_r: X⁰ in the first block.
        q[i] -= problem.w2 * problem.x0[i] as f64;
    }
    (p, q)
}

/// Evaluates `½xᵀPx + Qᵀx`.
pub fn objective_value(p: &DMatrix<f64>, q: &DVector<f64>, x_flat: &[f64]) -> f64 {
    let x = DVector::from_column_slice(x_flat);
    0.5 * (x.transpose() * p * &x)[(0, 0)] + q.dot(&x)
}

fn flatten(x_seq: &[Vec<u8>]) -> Vec<f64> {
    x_seq
        .iter()
        .flat_map(|x| x.iter().map(|&b| b as f64))
        .collect()
}

/// Objective of a candidate sequence in algebraic form:
/// `w1·(Dᵏ)ᵀXᵏ − w2·Σ_j XʲᵀXʲ⁻¹` with the raw discharge prediction.
pub fn sequence_objective(problem: &ScheduleProblem, x_seq: &[Vec<u8>]) -> f64 {
    let k = problem.horizon_k;
    let dk = predict_discharge_raw(problem, x_seq, k);
    let discharge: f64 = dk
        .iter()
        .zip(&x_seq[k - 1])
        .map(|(d, &x)| d * x as f64)
        .sum();
    let mut retention = 0.0;
    let mut prev: &[u8] = &problem.x0;
    for x in x_seq {
        retention += x
            .iter()
            .zip(prev)
            .map(|(&a, &b)| (a * b) as f64)
            .sum::<f64>();
        prev = x;
    }
    problem.w1 * discharge - problem.w2 * retention
}

/// Checks the formation, battery and hub constraints for a full sequence.
pub fn feasible(problem: &ScheduleProblem, x_seq: &[Vec<u8>]) -> bool {
    if x_seq.len() != problem.horizon_k {
        return false;
    }
    let mut prev: &[u8] = &problem.x0;
    for (j, x) in x_seq.iter().enumerate() {
        if x.len() != problem.n_robots || active_count(x) != problem.formation_size_f {
            return false;
        }
        // Hub constraint: (Xʲ⁻¹ + Hʲ)ᵀ Xʲ = F, evaluated literally.
        let hub_sum: usize = x
            .iter()
            .enumerate()
            .map(|(i, &xi)| (prev[i] as usize + problem.hub_presence[j][i] as usize) * xi as usize)
            .sum();
        if hub_sum != problem.formation_size_f {
            return false;
        }
        // Battery constraint at this horizon step: dᵢ·xᵢ ≤ d_th.
        let d = predict_discharge(problem, x_seq, j + 1);
        if x
            .iter()
            .zip(&d)
            .any(|(&xi, &di)| xi == 1 && di > problem.d_th + 1e-9)
        {
            return false;
        }
        prev = x;
    }
    true
}

/// All index combinations of size `f` from `pool`, in lexicographic order
/// of the chosen id list (so lower-numbered robots are preferred first).
fn combinations(pool: &[usize], f: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if f > pool.len() {
        return out;
    }
    let mut idx: Vec<usize> = (0..f).collect();
    loop {
        out.push(idx.iter().map(|&i| pool[i]).collect());
        // Advance the combination odometer.
        let mut i = f;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] != i + pool.len() - f {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        idx[i] += 1;
        for j in (i + 1)..f {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Exact minimizer of the horizon program.
///
/// Depth-first search over horizon steps: at step `j` only sets drawn from
/// the retained robots and the hub-present robots are enumerated, pruned by
/// the battery constraint and by an admissible bound (the best conceivable
/// remaining objective: every remaining retention earned, the lightest
/// robots active at the end regardless of availability). Candidates are
/// visited in ascending-id order and improvements are strict, so ties
/// resolve toward the lowest-numbered active robots.
pub fn solve(problem: &ScheduleProblem) -> Result<ScheduleSolution, ScheduleError> {
    problem.validate()?;
    let k = problem.horizon_k;
    let n = problem.n_robots;
    let f = problem.formation_size_f;
    let (p, q) = build_qp(problem);

    // Lower bound helper: cheapest possible final discharge term from any f
    // robots given each robot's minimum attainable discharge at step k.
    let min_final_discharge = |d_now: &[f64], steps_done: usize| -> f64 {
        let remaining = (k - steps_done) as f64;
        let mut best: Vec<f64> = (0..n)
            .map(|i| {
                // Most optimistic: charge every remaining leg except the
                // final active one.
                d_now[i] + problem.r_c * (remaining - 1.0) + problem.r_d
            })
            .collect();
        best.sort_by(|a, b| a.partial_cmp(b).unwrap());
        best[..f].iter().sum::<f64>() * problem.w1
    };

    struct Search<'a> {
        problem: &'a ScheduleProblem,
        best_obj: f64,
        best_seq: Option<Vec<Vec<u8>>>,
    }

    fn recurse(
        s: &mut Search,
        seq: &mut Vec<Vec<u8>>,
        d_now: Vec<f64>,
        retention_so_far: f64,
        min_final: &dyn Fn(&[f64], usize) -> f64,
    ) {
        let problem = s.problem;
        let j = seq.len();
        let k = problem.horizon_k;
        if j == k {
            let obj = sequence_objective(problem, seq);
            if obj < s.best_obj - 1e-12 {
                s.best_obj = obj;
                s.best_seq = Some(seq.clone());
            }
            return;
        }
        // Admissible bound: all remaining retention earned for free.
        let max_remaining_retention = ((k - j) * problem.formation_size_f) as f64;
        let bound = min_final(&d_now, j) - problem.w2 * (retention_so_far + max_remaining_retention);
        if s.best_seq.is_some() && bound >= s.best_obj - 1e-12 {
            return;
        }
        let prev: Vec<u8> = if j == 0 {
            problem.x0.clone()
        } else {
            seq[j - 1].clone()
        };
        let hub = &problem.hub_presence[j];
        let pool: Vec<usize> = (0..problem.n_robots)
            .filter(|&i| prev[i] == 1 || hub[i] == 1)
            .filter(|&i| {
                // Battery pruning: robot i active this leg must stay under d_th.
                d_now[i] + problem.r_d <= problem.d_th + 1e-9
            })
            .collect();
        for combo in combinations(&pool, problem.formation_size_f) {
            let mut x = vec![0u8; problem.n_robots];
            for &i in &combo {
                x[i] = 1;
            }
            // Literal hub constraint guards the double-membership corner.
            let hub_sum: usize = combo
                .iter()
                .map(|&i| prev[i] as usize + hub[i] as usize)
                .sum();
            if hub_sum != problem.formation_size_f {
                continue;
            }
            let retention: f64 = combo.iter().map(|&i| prev[i] as f64).sum();
            let d_next: Vec<f64> = (0..problem.n_robots)
                .map(|i| {
                    (d_now[i] + if x[i] == 1 { problem.r_d } else { problem.r_c }).max(0.0)
                })
                .collect();
            seq.push(x);
            recurse(s, seq, d_next, retention_so_far + retention, min_final);
            seq.pop();
        }
    }

    let mut search = Search {
        problem,
        best_obj: f64::INFINITY,
        best_seq: None,
    };
    let mut seq = Vec::with_capacity(k);
    recurse(
        &mut search,
        &mut seq,
        problem.d0.clone(),
        0.0,
        &min_final_discharge,
    );

    let best = search.best_seq.ok_or(ScheduleError::Infeasible)?;
    debug_assert!(feasible(problem, &best));
    let objective = objective_value(&p, &q, &flatten(&best));
    let predicted = (1..=k)
        .map(|m| predict_discharge(problem, &best, m))
        .collect();
    Ok(ScheduleSolution {
        x: best,
        objective_value: objective,
        predicted_d: predicted,
    })
}

/// Diffs two consecutive assignments into a replacement order; leavers and
/// entrants are paired in ascending index order.
pub fn diff_solutions(prev_active: &[u8], next_active: &[u8]) -> ReplacementOrder {
    debug_assert_eq!(prev_active.len(), next_active.len());
    let leaving: Vec<usize> = (0..prev_active.len())
        .filter(|&i| prev_active[i] == 1 && next_active[i] == 0)
        .collect();
    let entering: Vec<usize> = (0..prev_active.len())
        .filter(|&i| prev_active[i] == 0 && next_active[i] == 1)
        .collect();
    debug_assert_eq!(leaving.len(), entering.len());
    ReplacementOrder { leaving, entering }
}

/// Threshold rule: every active robot whose remaining fraction fell below
/// the threshold leaves; entrants are the most-charged eligible robots at
/// the current hub (eligible means at or above the threshold themselves,
/// otherwise the entrant would immediately re-trigger the rule). When
/// entrants run out the order is partial and the caller must wait.
pub fn baseline_policy(problem: &ScheduleProblem, threshold_fraction: f64) -> BaselineOutcome {
    assert!(threshold_fraction > 0.0 && threshold_fraction < 1.0);
    let leavers: Vec<usize> = (0..problem.n_robots)
        .filter(|&i| problem.x0[i] == 1 && problem.remaining_fraction(i) < threshold_fraction)
        .collect();
    let mut candidates: Vec<usize> = (0..problem.n_robots)
        .filter(|&i| {
            problem.hub_presence[0][i] == 1
                && problem.remaining_fraction(i) >= threshold_fraction
        })
        .collect();
    // Most charged first; index breaks exact ties deterministically.
    candidates.sort_by(|&a, &b| {
        problem.d0[a]
            .partial_cmp(&problem.d0[b])
            .unwrap()
            .then(a.cmp(&b))
    });
    let n_swaps = leavers.len().min(candidates.len());
    BaselineOutcome {
        must_wait: n_swaps < leavers.len(),
        order: ReplacementOrder {
            leaving: leavers[..n_swaps].to_vec(),
            entering: {
                let mut e = candidates[..n_swaps].to_vec();
                e.sort_unstable();
                e
            },
        },
    }
}
