//! Step reward: goal progress plus three social penalty terms (collision,
//! exponential proximity, discounted future-path obstruction). The two
//! shaping penalties switch off near the goal so they cannot fight the
//! final approach.

use serde::{Deserialize, Serialize};

use crate::math::Vec2;

/// Weights and thresholds of the reward. The cutoff distances have fixed
/// canonical values; the β weights are tuning knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    /// Weight on per-step geodesic progress.
    pub beta_d: f64,
    /// Constant per-step time cost.
    pub r_slack: f64,
    /// Terminal success bonus.
    pub beta_succ: f64,
    /// Static collision penalty weight.
    pub beta_s: f64,
    /// Human collision penalty weight.
    pub beta_h: f64,
    /// Proximity penalty weight.
    pub beta_prox: f64,
    /// Future-obstruction penalty weight.
    pub beta_traj: f64,
    /// Obstruction horizon in steps.
    #[serde(rename = "H")]
    pub h: usize,
    /// Humans farther than this contribute no proximity penalty (m).
    pub d_prox_cutoff: f64,
    /// Robot/human future positions closer than this count as obstruction (m).
    pub d_traj_cutoff: f64,
    /// Inside this goal distance the prox and traj penalties are dropped (m).
    pub d_goal_cancel: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            beta_d: 1.0,
            r_slack: 0.002,
            beta_succ: 2.5,
            beta_s: 0.02,
            beta_h: 0.5,
            beta_prox: 0.05,
            beta_traj: 0.1,
            h: 8,
            d_prox_cutoff: 2.0,
            d_traj_cutoff: 0.05,
            d_goal_cancel: 2.0,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), RewardError> {
        let betas = [
            self.beta_d,
            self.r_slack,
            self.beta_succ,
            self.beta_s,
            self.beta_h,
            self.beta_prox,
            self.beta_traj,
        ];
        if betas.iter().any(|b| !b.is_finite() || *b < 0.0) {
            return Err(RewardError::NegativeWeight);
        }
        if self.h < 1 {
            return Err(RewardError::ZeroHorizon);
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RewardError {
    #[error("reward weights must be finite and non-negative")]
    NegativeWeight,
    #[error("obstruction horizon must be at least 1 step")]
    ZeroHorizon,
    #[error("future-trajectory length mismatch: expected {expected}, got {got}")]
    HorizonMismatch { expected: usize, got: usize },
}

/// Per-step reward terms. `total = pointnav − (coll + prox + traj)` exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub pointnav: f64,
    pub coll: f64,
    pub prox: f64,
    pub traj: f64,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn compose(pointnav: f64, coll: f64, prox: f64, traj: f64) -> RewardBreakdown {
        RewardBreakdown { pointnav, coll, prox, traj, total: pointnav - (coll + prox + traj) }
    }

    pub fn zero() -> RewardBreakdown {
        RewardBreakdown::compose(0.0, 0.0, 0.0, 0.0)
    }
}

/// Goal-directed term: reward geodesic progress (`delta_d` is the signed
/// change in goal distance this step), charge a slack cost, and pay the
/// success bonus once.
pub fn pointnav_reward(delta_d: f64, succeeded: bool, cfg: &RewardConfig) -> f64 {
    -cfg.beta_d * delta_d - cfg.r_slack + if succeeded { cfg.beta_succ } else { 0.0 }
}

/// Flat penalty for static and human contact this step.
pub fn collision_penalty(static_hit: bool, human_hit: bool, cfg: &RewardConfig) -> f64 {
    let s = if static_hit { cfg.beta_s } else { 0.0 };
    let h = if human_hit { cfg.beta_h } else { 0.0 };
    s + h
}

/// Exponential discomfort for each human within the proximity cutoff;
/// dropped entirely within `d_goal_cancel` of the goal.
pub fn proximity_penalty(dists: &[f64], dist_to_goal: f64, cfg: &RewardConfig) -> f64 {
    if dist_to_goal < cfg.d_goal_cancel {
        return 0.0;
    }
    dists
        .iter()
        .filter(|&&d| d < cfg.d_prox_cutoff)
        .map(|&d| cfg.beta_prox * (-d).exp())
        .sum()
}

/// Discounted penalty for sitting on upcoming human paths: for each future
/// step offset j = 1..=H where the robot and a human come within
/// `d_traj_cutoff`, add `beta_traj/(j+1)` — earlier overlaps weigh more.
/// Dropped within `d_goal_cancel` of the goal.
pub fn trajectory_obstruction_penalty(
    robot_future: &[Vec2],
    human_futures: &[Vec<Vec2>],
    dist_to_goal: f64,
    cfg: &RewardConfig,
) -> Result<f64, RewardError> {
    if robot_future.len() != cfg.h {
        return Err(RewardError::HorizonMismatch { expected: cfg.h, got: robot_future.len() });
    }
    for hf in human_futures {
        if hf.len() != cfg.h {
            return Err(RewardError::HorizonMismatch { expected: cfg.h, got: hf.len() });
        }
    }
    if dist_to_goal < cfg.d_goal_cancel {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (j, robot) in robot_future.iter().enumerate() {
        let weight = 1.0 / (j as f64 + 2.0);
        for hf in human_futures {
            if robot.distance(hf[j]) < cfg.d_traj_cutoff {
                total += cfg.beta_traj * weight;
            }
        }
    }
    Ok(total)
}

/// Everything the reward needs to know about one step.
#[derive(Debug, Clone)]
pub struct StepRewardInputs<'a> {
    /// Signed change of goal distance over the step (negative = progress).
    pub delta_d: f64,
    pub succeeded: bool,
    pub static_hit: bool,
    pub human_hit: bool,
    /// Robot-to-human center distances after the step.
    pub human_dists: &'a [f64],
    /// Goal distance after the step.
    pub dist_to_goal: f64,
    /// Robot positions over the next H steps.
    pub robot_future: &'a [Vec2],
    /// Per-human positions over the next H steps.
    pub human_futures: &'a [Vec<Vec2>],
}

/// Full per-step reward.
pub fn socialnav_reward(
    inputs: &StepRewardInputs,
    cfg: &RewardConfig,
) -> Result<RewardBreakdown, RewardError> {
    let pointnav = pointnav_reward(inputs.delta_d, inputs.succeeded, cfg);
    let coll = collision_penalty(inputs.static_hit, inputs.human_hit, cfg);
    let prox = proximity_penalty(inputs.human_dists, inputs.dist_to_goal, cfg);
    let traj = trajectory_obstruction_penalty(
        inputs.robot_future,
        inputs.human_futures,
        inputs.dist_to_goal,
        cfg,
    )?;
    Ok(RewardBreakdown::compose(pointnav, coll, prox, traj))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_rel(actual: f64, expected: f64) {
        let tol = 1e-9 * expected.abs().max(1.0);
        assert!((actual - expected).abs() <= tol, "got {actual}, want {expected}");
    }

    fn unit_cfg() -> RewardConfig {
        // β = 1 for the terms under test keeps the arithmetic readable.
        RewardConfig { beta_prox: 1.0, beta_traj: 1.0, ..RewardConfig::default() }
    }

    #[test]
    fn pointnav_cases() {
        let cfg = RewardConfig::default();
        assert_rel(pointnav_reward(0.0, false, &cfg), -0.002);
        assert_rel(pointnav_reward(-0.1, false, &cfg), 0.098);
        assert_rel(pointnav_reward(0.0, true, &cfg), 2.498);
    }

    #[test]
    fn collision_cases() {
        let cfg = RewardConfig::default();
        assert_rel(collision_penalty(false, false, &cfg), 0.0);
        assert_rel(collision_penalty(true, false, &cfg), 0.02);
        assert_rel(collision_penalty(true, true, &cfg), 0.52);
    }

    #[test]
    fn proximity_cases() {
        let cfg = unit_cfg();
        // The cutoff boundary belongs to the zero branch.
        assert_rel(proximity_penalty(&[2.0, 2.0], 10.0, &cfg), 0.0);
        assert_rel(proximity_penalty(&[0.0], 10.0, &cfg), 1.0);
        assert_rel(proximity_penalty(&[1.0, 1.0], 10.0, &cfg), 2.0 * (-1.0_f64).exp());
        assert_rel(proximity_penalty(&[1.0, 1.0], 10.0, &cfg), 0.7357588823428847);
        // Near the goal the term is cancelled outright.
        assert_rel(proximity_penalty(&[0.1, 0.2], 1.9, &cfg), 0.0);
        assert_rel(proximity_penalty(&[0.1], 2.0, &cfg), (-0.1_f64).exp());
    }

    #[test]
    fn obstruction_cases() {
        let cfg = unit_cfg();
        let far = vec![Vec2::new(100.0, 100.0); 8];
        let robot: Vec<Vec2> = (0..8).map(|k| Vec2::new(k as f64, 0.0)).collect();
        assert_rel(
            trajectory_obstruction_penalty(&robot, &[far.clone()], 10.0, &cfg).unwrap(),
            0.0,
        );
        // Overlap only at the first future step: weight 1/2.
        let mut h1 = far.clone();
        h1[0] = robot[0];
        assert_rel(trajectory_obstruction_penalty(&robot, &[h1], 10.0, &cfg).unwrap(), 0.5);
        // Overlaps at the first two future steps: 1/2 + 1/3.
        let mut h2 = far.clone();
        h2[0] = robot[0];
        h2[1] = robot[1];
        assert_rel(
            trajectory_obstruction_penalty(&robot, &[h2.clone()], 10.0, &cfg).unwrap(),
            0.5 + 1.0 / 3.0,
        );
        // Goal-cancel zeroes it.
        assert_rel(trajectory_obstruction_penalty(&robot, &[h2], 1.0, &cfg).unwrap(), 0.0);
        // Horizon mismatch is a hard error.
        let short = vec![Vec2::ZERO; 7];
        assert_eq!(
            trajectory_obstruction_penalty(&robot, &[short], 10.0, &cfg),
            Err(RewardError::HorizonMismatch { expected: 8, got: 7 })
        );
    }

    #[test]
    fn boundary_exactly_at_cutoff_is_free() {
        let cfg = unit_cfg();
        let robot = vec![Vec2::ZERO; 8];
        let human = vec![vec![Vec2::new(cfg.d_traj_cutoff, 0.0); 8]];
        assert_rel(trajectory_obstruction_penalty(&robot, &human, 10.0, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn total_composition() {
        let cfg = RewardConfig::default();
        let none: Vec<Vec<Vec2>> = vec![];
        let robot = vec![Vec2::new(50.0, 50.0); 8];
        let quiet = StepRewardInputs {
            delta_d: 0.0,
            succeeded: false,
            static_hit: false,
            human_hit: false,
            human_dists: &[],
            dist_to_goal: 10.0,
            robot_future: &robot,
            human_futures: &none,
        };
        let b = socialnav_reward(&quiet, &cfg).unwrap();
        assert_rel(b.total, -cfg.r_slack);

        // pointnav 0.098 against a prox of 0.5: total −0.402.
        let cfg2 = RewardConfig { beta_prox: 0.5, ..cfg };
        let humans = [0.0];
        let step = StepRewardInputs {
            delta_d: -0.1,
            human_dists: &humans,
            ..quiet.clone()
        };
        let b = socialnav_reward(&step, &cfg2).unwrap();
        assert_rel(b.pointnav, 0.098);
        assert_rel(b.prox, 0.5);
        assert_rel(b.total, -0.402);
        assert_eq!(b.total, b.pointnav - (b.coll + b.prox + b.traj));
    }
}
