//! Recurrent actor-critic with socially-aware auxiliary heads, its
//! losses, and the clipped-surrogate policy-gradient trainer.

mod checkpoint;
mod loss;
mod nn;
mod policy;
mod ppo;
mod tape;

pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, CheckpointError, CheckpointParam,
    CHECKPOINT_VERSION,
};
pub use loss::{
    count_loss, pos_loss, total_loss, total_loss_var, traj_loss, LossBreakdown, PROB_FLOOR,
};
pub use nn::{self_attention, Adam, GruCell, Linear, ParamStore};
pub use policy::{
    gaussian_entropy, gaussian_log_prob, sample_action, AuxOracle, AuxOutputs, AuxVars,
    ForwardVars, PolicyController, PolicyFault, PolicyNet, PolicyState, GOAL_DIST_SCALE,
};
pub use ppo::{
    collect_rollout, gae_advantages, gradcheck_total_loss, ppo_surrogate, ppo_update, train,
    Rollout, RolloutError, RolloutStep, TrainProgress, TrainReport, UpdateOutcome, UpdateStats,
};
pub use tape::{Tape, Var};

use serde::{Deserialize, Serialize};

/// Everything the trainer and networks need in one overridable block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnConfig {
    /// Latent width of the state encoder and recurrent core.
    pub d_h: usize,
    /// Width of the per-slot embeddings inside the auxiliary heads.
    pub d_slot: usize,
    /// Future steps predicted per human by the trajectory head.
    pub horizon: usize,
    /// Human slot capacity of the auxiliary heads.
    pub max_slots: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub lr: f64,
    pub beta_main: f64,
    pub beta_aux: f64,
    /// Passes over each freshly collected batch.
    pub epochs: usize,
    /// Episodes per gradient step within an epoch.
    pub minibatch_episodes: usize,
    /// Environment steps collected per update (last episode runs to
    /// completion, so batches overshoot slightly).
    pub steps_per_update: usize,
    pub grad_clip: f64,
    /// Initial log standard deviation of both action channels.
    pub init_log_std: f64,
    pub normalize_advantages: bool,
}

impl Default for LearnConfig {
    fn default() -> Self {
        LearnConfig {
            d_h: 128,
            d_slot: 32,
            horizon: 8,
            max_slots: 6,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip: 0.2,
            entropy_coef: 0.01,
            value_coef: 0.5,
            lr: 2.5e-4,
            beta_main: 1.0,
            beta_aux: 0.3,
            epochs: 4,
            minibatch_episodes: 4,
            steps_per_update: 2048,
            grad_clip: 0.5,
            init_log_std: -0.7,
            normalize_advantages: true,
        }
    }
}
