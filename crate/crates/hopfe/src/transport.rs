//! Optimal matching between attribute heads: entropic-regularized transport
//! via Sinkhorn scaling, and the cheap argmin alternative.
//!
//! Both marginals are uniform 1/H. Gradients are taken through the plan as if
//! it were constant, so only the forward plan is computed here.

use crate::error::{HopfeError, Result};

pub const DEFAULT_EPSILON: f64 = 0.1;
pub const DEFAULT_MAX_ITERS: usize = 1000;

const MARGINAL_TOL: f64 = 1e-9;

/// Coupling between two sets of H attribute heads.
#[derive(Clone, Debug)]
pub struct TransportPlan {
    /// Row-major H x H non-negative weights with uniform 1/H marginals.
    pub weights: Vec<f64>,
    pub h: usize,
    /// Transport cost `sum_ij weights[i][j] * cost[i][j]`.
    pub cost: f64,
}

/// Entropic-regularized plan from alternating row/column scaling of
/// `exp(-cost / epsilon)`. Stops early once both marginals are within 1e-9
/// of uniform.
pub fn sinkhorn_plan(cost: &[f64], h: usize, epsilon: f64, max_iters: usize) -> Result<TransportPlan> {
    assert_eq!(cost.len(), h * h, "cost matrix must be H x H");
    assert!(epsilon > 0.0 && max_iters >= 1);

    let kernel: Vec<f64> = cost.iter().map(|&c| (-c / epsilon).exp()).collect();
    for i in 0..h {
        if kernel[i * h..(i + 1) * h].iter().all(|&k| k == 0.0) {
            return Err(HopfeError::NumericalOverflow);
        }
    }
    for j in 0..h {
        if (0..h).all(|i| kernel[i * h + j] == 0.0) {
            return Err(HopfeError::NumericalOverflow);
        }
    }

    let marginal = 1.0 / h as f64;
    let mut u = vec![1.0f64; h];
    let mut v = vec![1.0f64; h];
    for _ in 0..max_iters {
        for i in 0..h {
            let row_sum: f64 = (0..h).map(|j| kernel[i * h + j] * v[j]).sum();
            u[i] = marginal / row_sum;
        }
        for j in 0..h {
            let col_sum: f64 = (0..h).map(|i| kernel[i * h + j] * u[i]).sum();
            v[j] = marginal / col_sum;
        }
        if u.iter().chain(v.iter()).any(|x| !x.is_finite()) {
            return Err(HopfeError::NumericalOverflow);
        }
        // Row sums are exact right after the u update; check columns.
        let mut err: f64 = 0.0;
        for i in 0..h {
            let row: f64 = (0..h).map(|j| u[i] * kernel[i * h + j] * v[j]).sum();
            err = err.max((row - marginal).abs());
        }
        if err < MARGINAL_TOL {
            break;
        }
    }

    let weights: Vec<f64> = (0..h * h)
        .map(|ij| u[ij / h] * kernel[ij] * v[ij % h])
        .collect();
    let total_cost = weights.iter().zip(cost).map(|(w, c)| w * c).sum();
    Ok(TransportPlan {
        weights,
        h,
        cost: total_cost,
    })
}

/// Sinkhorn with the documented recovery path: on kernel underflow the
/// epsilon is grown tenfold and the solve retried.
pub fn sinkhorn_plan_adaptive(cost: &[f64], h: usize, epsilon: f64, max_iters: usize) -> Result<TransportPlan> {
    let mut eps = epsilon;
    loop {
        match sinkhorn_plan(cost, h, eps, max_iters) {
            Err(HopfeError::NumericalOverflow) if eps < 1e6 => eps *= 10.0,
            other => return other,
        }
    }
}

/// Argmin entry of an H x H cost matrix; ties broken by smallest (i, then j).
pub fn min_match(cost: &[f64], h: usize) -> (usize, usize, f64) {
    assert_eq!(cost.len(), h * h);
    let mut best = (0, 0, cost[0]);
    for i in 0..h {
        for j in 0..h {
            let c = cost[i * h + j];
            if c < best.2 {
                best = (i, j, c);
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn marginal_error(plan: &TransportPlan) -> f64 {
        let h = plan.h;
        let m = 1.0 / h as f64;
        let mut err: f64 = 0.0;
        for i in 0..h {
            let row: f64 = (0..h).map(|j| plan.weights[i * h + j]).sum();
            err = err.max((row - m).abs());
        }
        for j in 0..h {
            let col: f64 = (0..h).map(|i| plan.weights[i * h + j]).sum();
            err = err.max((col - m).abs());
        }
        err
    }

    /// Exact optimal assignment cost by enumerating permutations.
    pub(crate) fn brute_force_assignment(cost: &[f64], h: usize) -> f64 {
        fn recurse(cost: &[f64], h: usize, row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
            if row == h {
                *best = best.min(acc);
                return;
            }
            for j in 0..h {
                if !used[j] {
                    used[j] = true;
                    recurse(cost, h, row + 1, used, acc + cost[row * h + j], best);
                    used[j] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        recurse(cost, h, 0, &mut vec![false; h], 0.0, &mut best);
        best / h as f64 // uniform marginals carry mass 1/H per head
    }

    #[test]
    fn single_head_plan() {
        let plan = sinkhorn_plan(&[0.7], 1, 0.1, 100).unwrap();
        assert!((plan.weights[0] - 1.0).abs() < 1e-12);
        assert!((plan.cost - 0.7).abs() < 1e-12);
    }

    #[test]
    fn two_by_two_picks_the_diagonal() {
        let plan = sinkhorn_plan(&[0.0, 1.0, 1.0, 0.0], 2, 0.01, 200).unwrap();
        assert!((plan.weights[0] - 0.5).abs() < 1e-6);
        assert!(plan.weights[1] < 1e-6);
        assert!(plan.cost < 0.01);
    }

    #[test]
    fn uniform_cost_gives_uniform_plan() {
        let h = 4;
        let plan = sinkhorn_plan(&vec![0.3; h * h], h, 0.1, 100).unwrap();
        for &w in &plan.weights {
            assert!((w - 1.0 / (h * h) as f64).abs() < 1e-6);
        }
    }

    #[test]
    fn marginals_are_uniform_on_random_costs() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..50 {
            let h = rng.gen_range(1..=8);
            let cost: Vec<f64> = (0..h * h).map(|_| rng.gen_range(0.0..2.0)).collect();
            let plan = sinkhorn_plan(&cost, h, 0.1, 20_000).unwrap();
            assert!(marginal_error(&plan) < 1e-6);
            assert!(plan.weights.iter().all(|&w| w >= 0.0));
        }
    }

    #[test]
    fn epsilon_to_zero_approaches_assignment_cost() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for _ in 0..20 {
            let cost: Vec<f64> = (0..16).map(|_| rng.gen_range(0.0..1.0)).collect();
            let exact = brute_force_assignment(&cost, 4);
            let plan = sinkhorn_plan(&cost, 4, 0.002, 10_000).unwrap();
            assert!(
                (plan.cost - exact).abs() <= 0.01 * exact.abs().max(0.01),
                "sinkhorn {} vs exact {exact}",
                plan.cost
            );
        }
    }

    #[test]
    fn underflow_is_reported_and_adaptive_retry_recovers() {
        // Costs huge relative to epsilon: exp underflows to zero rows.
        let cost = vec![1e6, 2e6, 2e6, 1e6];
        assert!(matches!(
            sinkhorn_plan(&cost, 2, 1e-3, 100),
            Err(HopfeError::NumericalOverflow)
        ));
        let plan = sinkhorn_plan_adaptive(&cost, 2, 1e-3, 100).unwrap();
        assert!(marginal_error(&plan) < 1e-6);
    }

    #[test]
    fn min_match_examples_and_brute_force() {
        assert_eq!(min_match(&[0.7], 1), (0, 0, 0.7));
        assert_eq!(min_match(&[3.0, 1.0, 2.0, 4.0], 2), (0, 1, 1.0));

        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..50 {
            let cost: Vec<f64> = (0..64).map(|_| rng.gen_range(0.0..5.0)).collect();
            let (i, j, v) = min_match(&cost, 8);
            let scan = cost
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            assert_eq!(v, scan);
            assert_eq!(cost[i * 8 + j], v);
        }
    }

    #[test]
    fn min_entry_lower_bounds_scaled_plan_cost() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        for _ in 0..20 {
            let h = rng.gen_range(1..=6);
            let cost: Vec<f64> = (0..h * h).map(|_| rng.gen_range(0.0..3.0)).collect();
            let (_, _, min_v) = min_match(&cost, h);
            let plan = sinkhorn_plan(&cost, h, 0.1, 200).unwrap();
            assert!(min_v <= plan.cost * h as f64 + 1e-9);
        }
    }
}
