//! Reach-avoid task satisfaction.
//!
//! Given known object locations the task succeeds with probability
//!
//! ```text
//! P(φ | X, O) = Π_τ Π_i [1 − P_O exp(−‖x_τ − o_i‖² / 2r_O²)] · Π_τ exp(−‖x_τ − d‖² / 2r_D²)
//! ```
//!
//! Products are accumulated in log space. Under a belief the probability is
//! the Monte Carlo mean over sampled object sets.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::belief::{ObjectBelief, StandardDraws};
use crate::dynamics::RobotState;
use crate::{Error, Point, Result};

/// Beyond this scaled squared distance `exp(-q)` is below half an ulp of 1,
/// so the avoid factor is exactly 1 in double precision.
const AVOID_CUTOFF: f64 = 37.0;

/// Which trajectory points pay the reach factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReachMode {
    #[default]
    EveryStep,
    Terminal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReachAvoidTask {
    pub goal: Point,
    /// Acceptance radius `r_D`, m.
    pub reach_radius: f64,
    /// Collision radius `r_O`, m.
    pub collision_radius: f64,
    /// Peak collision probability `P_O` in `(0, 1]`.
    pub peak_collision: f64,
    pub reach_mode: ReachMode,
}

impl ReachAvoidTask {
    pub fn new(goal: Point, reach_radius: f64, collision_radius: f64, peak_collision: f64) -> Result<Self> {
        let t = Self {
            goal,
            reach_radius,
            collision_radius,
            peak_collision,
            reach_mode: ReachMode::EveryStep,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.reach_radius.is_finite() && self.reach_radius > 0.0) {
            return Err(Error::invalid("reach radius must be > 0"));
        }
        if !(self.collision_radius.is_finite() && self.collision_radius > 0.0) {
            return Err(Error::invalid("collision radius must be > 0"));
        }
        if !(self.peak_collision > 0.0 && self.peak_collision <= 1.0) {
            return Err(Error::invalid("peak collision probability must be in (0, 1]"));
        }
        Ok(())
    }

    #[inline]
    pub fn log_avoid_factor(&self, state: &RobotState, object: &Point) -> f64 {
        let dx = state.x - object.x;
        let dy = state.y - object.y;
        let q = (dx * dx + dy * dy) / (2.0 * self.collision_radius * self.collision_radius);
        if q > AVOID_CUTOFF {
            return 0.0;
        }
        (-self.peak_collision * (-q).exp()).ln_1p()
    }

    pub fn avoid_factor(&self, state: &RobotState, object: &Point) -> f64 {
        self.log_avoid_factor(state, object).exp()
    }

    #[inline]
    pub fn log_reach_factor(&self, state: &RobotState) -> f64 {
        let dx = state.x - self.goal.x;
        let dy = state.y - self.goal.y;
        -(dx * dx + dy * dy) / (2.0 * self.reach_radius * self.reach_radius)
    }

    pub fn reach_factor(&self, state: &RobotState) -> f64 {
        self.log_reach_factor(state).exp()
    }

    /// Log of the reach part over one trajectory.
    pub fn log_reach(&self, traj: &[RobotState]) -> f64 {
        match self.reach_mode {
            ReachMode::EveryStep => traj.iter().map(|s| self.log_reach_factor(s)).sum(),
            ReachMode::Terminal => traj.last().map_or(0.0, |s| self.log_reach_factor(s)),
        }
    }

    /// Log of the avoid part for one object over one trajectory.
    #[inline]
    pub fn log_avoid(&self, traj: &[RobotState], object: &Point) -> f64 {
        traj.iter().map(|s| self.log_avoid_factor(s, object)).sum()
    }

    /// `ln P(φ | X, O)` for a set of trajectories (all must succeed).
    pub fn log_satisfaction(&self, trajs: &[&[RobotState]], objects: &[Point]) -> f64 {
        trajs
            .iter()
            .map(|traj| {
                self.log_reach(traj) + objects.iter().map(|o| self.log_avoid(traj, o)).sum::<f64>()
            })
            .sum()
    }
}

pub fn satisfaction_given_objects(traj: &[RobotState], objects: &[Point], task: &ReachAvoidTask) -> f64 {
    task.log_satisfaction(&[traj], objects).exp()
}

/// `ln mean_m exp(a_m)` without underflow.
pub fn log_mean_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if values.is_empty() || max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + (sum / values.len() as f64).ln()
}

/// Per-sample `ln P(φ | X, O_m)` for object sets realized from `draws`.
pub fn log_satisfaction_samples(
    trajs: &[&[RobotState]],
    belief: &ObjectBelief,
    task: &ReachAvoidTask,
    draws: &StandardDraws,
) -> Result<Vec<f64>> {
    Ok(draws
        .realize(belief)?
        .iter()
        .map(|objects| task.log_satisfaction(trajs, objects))
        .collect())
}

/// Monte Carlo `E_{O ~ belief}[P(φ | X, O)]` over fixed draws.
pub fn expected_satisfaction_with(
    trajs: &[&[RobotState]],
    belief: &ObjectBelief,
    task: &ReachAvoidTask,
    draws: &StandardDraws,
) -> Result<f64> {
    let logs = log_satisfaction_samples(trajs, belief, task, draws)?;
    Ok(logs.iter().map(|l| l.exp()).sum::<f64>() / logs.len() as f64)
}

/// Marginal satisfaction `P(φ | X)` under the current belief.
pub fn marginal_satisfaction<R: Rng + ?Sized>(
    traj: &[RobotState],
    belief: &ObjectBelief,
    task: &ReachAvoidTask,
    n_mc: usize,
    rng: &mut R,
) -> Result<f64> {
    if n_mc == 0 {
        return Err(Error::invalid("n_mc must be >= 1"));
    }
    let draws = StandardDraws::sample(n_mc, belief.len(), rng);
    expected_satisfaction_with(&[traj], belief, task, &draws)
}

/// Posterior satisfaction `P(φ | X, Y)`: the same expectation taken under
/// a predicted belief.
pub fn posterior_satisfaction<R: Rng + ?Sized>(
    traj: &[RobotState],
    predicted_belief: &ObjectBelief,
    task: &ReachAvoidTask,
    n_mc: usize,
    rng: &mut R,
) -> Result<f64> {
    marginal_satisfaction(traj, predicted_belief, task, n_mc, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn task() -> ReachAvoidTask {
        ReachAvoidTask::new(Point::new(0.0, 0.0), 10.0, 4.0, 0.9).unwrap()
    }

    fn at(x: f64, y: f64) -> RobotState {
        RobotState::new(x, y, 0.0)
    }

    #[test]
    fn avoid_factor_values() {
        let t = task();
        assert_relative_eq!(t.avoid_factor(&at(5.0, 5.0), &Point::new(5.0, 5.0)), 0.1, epsilon = 1e-12);
        assert_eq!(t.avoid_factor(&at(1e6, 0.0), &Point::zeros()), 1.0);
        let d = 4.0 * (2.0 * 2f64.ln()).sqrt();
        assert_relative_eq!(t.avoid_factor(&at(d, 0.0), &Point::zeros()), 0.55, epsilon = 1e-12);
    }

    #[test]
    fn reach_factor_values() {
        let t = task();
        assert_eq!(t.reach_factor(&at(0.0, 0.0)), 1.0);
        assert_relative_eq!(t.reach_factor(&at(0.0, 10.0)), (-0.5f64).exp(), epsilon = 1e-12);
        assert_relative_eq!(t.reach_factor(&at(0.0, 10.0)), 0.6065, epsilon = 1e-4);
        assert_eq!(t.reach_factor(&at(1e6, 0.0)), 0.0);
    }

    #[test]
    fn pinned_at_goal_without_objects_is_certain() {
        let traj = vec![at(0.0, 0.0); 4];
        assert_eq!(satisfaction_given_objects(&traj, &[], &task()), 1.0);
    }

    #[test]
    fn passing_through_certain_object_annihilates() {
        let mut t = task();
        t.peak_collision = 1.0;
        let traj = vec![at(0.0, 0.0), at(3.0, 0.0), at(6.0, 0.0)];
        let p = satisfaction_given_objects(&traj, &[Point::new(3.0, 0.0)], &t);
        assert_eq!(p, 0.0);
    }

    #[test]
    fn two_step_one_object_factor_product() {
        let t = ReachAvoidTask::new(Point::new(10.0, 0.0), 6.0, 3.0, 0.7).unwrap();
        let traj = vec![at(0.0, 0.0), at(2.0, 1.0)];
        let o = Point::new(1.0, 2.0);
        let avoid = |x: f64, y: f64| 1.0 - 0.7 * (-((x - 1.0).powi(2) + (y - 2.0).powi(2)) / 18.0).exp();
        let reach = |x: f64, y: f64| (-((x - 10.0).powi(2) + y * y) / 72.0).exp();
        let expected = avoid(0.0, 0.0) * reach(0.0, 0.0) * avoid(2.0, 1.0) * reach(2.0, 1.0);
        assert_relative_eq!(satisfaction_given_objects(&traj, &[o], &t), expected, max_relative = 1e-12);
    }

    #[test]
    fn terminal_reach_mode_uses_last_point_only() {
        let mut t = task();
        t.reach_mode = ReachMode::Terminal;
        let traj = vec![at(30.0, 0.0), at(0.0, 0.0)];
        assert_eq!(satisfaction_given_objects(&traj, &[], &t), 1.0);
    }

    #[test]
    fn degenerate_belief_matches_known_objects() {
        let t = task();
        let traj = vec![at(-5.0, 1.0), at(-3.0, 1.0), at(-1.0, 1.0)];
        let means = [Point::new(-3.0, 3.0), Point::new(2.0, 2.0)];
        let b = ObjectBelief::isotropic(&means, 1e-24);
        let p = marginal_satisfaction(&traj, &b, &t, 20, &mut seeded(4)).unwrap();
        assert_relative_eq!(p, satisfaction_given_objects(&traj, &means, &t), max_relative = 1e-9);
    }

    #[test]
    fn empty_object_set_is_reach_only() {
        let t = task();
        let traj = vec![at(3.0, 4.0), at(1.0, 1.0)];
        let b = ObjectBelief::default();
        let p = marginal_satisfaction(&traj, &b, &t, 7, &mut seeded(4)).unwrap();
        assert_relative_eq!(p, (-(25.0 + 2.0) / 200.0f64).exp(), max_relative = 1e-12);
    }

    #[test]
    fn posterior_under_unchanged_belief_is_marginal() {
        let t = task();
        let traj = vec![at(-5.0, 1.0), at(-3.0, 1.0)];
        let b = ObjectBelief::isotropic(&[Point::new(-3.0, 3.0)], 25.0);
        let a = marginal_satisfaction(&traj, &b, &t, 50, &mut seeded(5)).unwrap();
        let p = posterior_satisfaction(&traj, &b, &t, 50, &mut seeded(5)).unwrap();
        assert_eq!(a, p);
    }

    #[test]
    fn zero_mc_samples_rejected() {
        let b = ObjectBelief::default();
        assert!(marginal_satisfaction(&[at(0.0, 0.0)], &b, &task(), 0, &mut seeded(1)).is_err());
    }

    /// Gauss–Hermite nodes and weights for `∫ e^{-x²} f(x) dx` via the
    /// eigen-decomposition of the Jacobi matrix (Golub–Welsch).
    fn gauss_hermite(n: usize) -> Vec<(f64, f64)> {
        let jacobi = nalgebra::DMatrix::from_fn(n, n, |i, j| {
            if i.abs_diff(j) == 1 {
                (i.max(j) as f64 / 2.0).sqrt()
            } else {
                0.0
            }
        });
        let eig = jacobi.symmetric_eigen();
        let sqrt_pi = std::f64::consts::PI.sqrt();
        (0..n)
            .map(|k| (eig.eigenvalues[k], sqrt_pi * eig.eigenvectors[(0, k)].powi(2)))
            .collect()
    }

    #[test]
    fn gauss_hermite_integrates_gaussian_moments() {
        let gh = gauss_hermite(20);
        let pi_sqrt = std::f64::consts::PI.sqrt();
        let m0: f64 = gh.iter().map(|(_, w)| w).sum();
        let m2: f64 = gh.iter().map(|(x, w)| w * x * x).sum();
        assert_relative_eq!(m0, pi_sqrt, max_relative = 1e-12);
        assert_relative_eq!(m2, pi_sqrt / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn monte_carlo_matches_quadrature() {
        let t = ReachAvoidTask::new(Point::new(20.0, 0.0), 10.0, 4.0, 0.9).unwrap();
        let traj = vec![at(2.0, 1.0)];
        let mean = Point::new(0.0, 0.0);
        let var: f64 = 9.0;
        let b = ObjectBelief::isotropic(&[mean], var);
        let gh = gauss_hermite(40);
        let sd = var.sqrt();
        let mut quad = 0.0;
        for &(xi, wi) in &gh {
            for &(yj, wj) in &gh {
                let o = Point::new(mean.x + 2f64.sqrt() * sd * xi, mean.y + 2f64.sqrt() * sd * yj);
                quad += wi * wj * satisfaction_given_objects(&traj, &[o], &t);
            }
        }
        quad /= std::f64::consts::PI;

        let n = 10_000;
        let draws = StandardDraws::sample(n, 1, &mut seeded(11));
        let logs = log_satisfaction_samples(&[&traj], &b, &t, &draws).unwrap();
        let vals: Vec<f64> = logs.iter().map(|l| l.exp()).collect();
        let mc = vals.iter().sum::<f64>() / n as f64;
        let sd_mc = (vals.iter().map(|v| (v - mc).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((mc - quad).abs() < 3.0 * sd_mc / (n as f64).sqrt(), "mc {mc} quad {quad}");
    }

    #[test]
    fn log_mean_exp_handles_tiny_values() {
        let v = [-1000.0, -1000.0 + 2f64.ln()];
        assert_relative_eq!(log_mean_exp(&v), -1000.0 + 1.5f64.ln(), epsilon = 1e-9);
        assert_eq!(log_mean_exp(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
    }

    proptest! {
        #[test]
        fn satisfaction_in_unit_interval(
            pts in prop::collection::vec((-30.0..30.0f64, -30.0..30.0f64), 1..8),
            objs in prop::collection::vec((-30.0..30.0f64, -30.0..30.0f64), 0..6),
            po in 0.01..1.0f64,
        ) {
            let mut t = task();
            t.peak_collision = po;
            let traj: Vec<_> = pts.iter().map(|&(x, y)| at(x, y)).collect();
            let objects: Vec<_> = objs.iter().map(|&(x, y)| Point::new(x, y)).collect();
            let p = satisfaction_given_objects(&traj, &objects, &t);
            prop_assert!((0.0..=1.0).contains(&p));
        }

        #[test]
        fn moving_toward_object_never_helps(
            px in -20.0..20.0f64, py in -20.0..20.0f64,
            ox in -20.0..20.0f64, oy in -20.0..20.0f64,
            frac in 0.0..1.0f64,
        ) {
            let t = task();
            let o = Point::new(ox, oy);
            let other = at(5.0, 5.0);
            let far = at(px, py);
            // the reach part does not depend on the object
            let near = at(px + frac * (ox - px), py + frac * (oy - py));
            let a_far = t.log_avoid(&[other, far], &o);
            let a_near = t.log_avoid(&[other, near], &o);
            prop_assert!(a_near <= a_far + 1e-15);
        }
    }
}
