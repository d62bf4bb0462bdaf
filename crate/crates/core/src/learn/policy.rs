//! Recurrent policy network and the socially-aware auxiliary heads.
//!
//! The encoder folds a depth scan and the goal vector through two dense
//! layers into a gated recurrent core; the core's hidden state doubles
//! as the shared latent consumed by the value head, the action head,
//! and all three auxiliary heads. Auxiliary heads process M fixed
//! slots with shared weights — self-attention is the only place slots
//! exchange information, which is what makes them order-equivariant.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::episode::{ControlView, Controller, ControllerFault, Episode};
use crate::math::Vec2;
use crate::params::{Action, WorldParams};
use crate::rng::stream;
use crate::scene::{DepthScan, Scene};

use super::nn::{self_attention, GruCell, Linear, ParamStore};
use super::tape::{Tape, Var};
use super::LearnConfig;

/// Divisor that maps goal distance into a roughly unit feature.
pub const GOAL_DIST_SCALE: f64 = 10.0;

const LN_2PI: f64 = 1.8378770664093453;

/// Snapshot of one policy evaluation.
#[derive(Debug, Clone)]
pub struct PolicyState {
    /// Shared latent: the recurrent core's fresh hidden state.
    pub delta_r: Vec<f64>,
    /// Identical to `delta_r`; carried forward to the next step.
    pub hidden: Vec<f64>,
    pub value: f64,
    /// Action mean, already squashed into the command envelope.
    pub mean: [f64; 2],
    /// Per-channel standard deviation, always positive.
    pub std: [f64; 2],
}

/// Per-human oracle features fed to the auxiliary heads.
#[derive(Debug, Clone, Default)]
pub struct AuxOracle {
    pub n: usize,
    /// Current human positions in the robot frame, one per human.
    pub positions: Vec<Vec2>,
}

/// Auxiliary head outputs as plain numbers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuxOutputs {
    /// Probability of each human count 0..=M.
    pub count_probs: Vec<f64>,
    /// Predicted current positions, robot frame, one per slot.
    pub positions: Vec<Vec2>,
    /// Predicted future positions per slot, `horizon` steps each.
    pub trajectories: Vec<Vec<Vec2>>,
    /// Slot validity: the first `n` slots are real humans.
    pub mask: Vec<bool>,
}

/// Tape handles for the auxiliary heads, used when losses need gradients.
pub struct AuxVars {
    pub count_logits: Var,
    pub count_log_probs: Var,
    pub count_probs: Var,
    /// M×2 predicted positions.
    pub positions: Var,
    /// One M×2 prediction per future step.
    pub trajectories: Vec<Var>,
    pub mask: Vec<bool>,
}

/// Tape handles for one policy evaluation.
pub struct ForwardVars {
    pub delta_r: Var,
    pub hidden: Var,
    pub value: Var,
    /// 1×2 squashed action mean.
    pub mean: Var,
    /// 1×2 log standard deviation.
    pub log_std: Var,
}

#[derive(Debug, thiserror::Error)]
pub enum PolicyFault {
    #[error("non-finite {0} in policy forward pass")]
    NonFinite(&'static str),
}

pub struct PolicyNet {
    pub obs_dim: usize,
    pub d_h: usize,
    pub d_slot: usize,
    pub max_slots: usize,
    pub horizon: usize,
    v_max: f64,
    omega_max: f64,
    d_scan: f64,
    enc1: Linear,
    enc2: Linear,
    core: GruCell,
    actor: Linear,
    log_std: usize,
    critic: Linear,
    count_in: Linear,
    count_gru: GruCell,
    count_out: Linear,
    pos_in: Linear,
    pos_gru: GruCell,
    pos_out: Linear,
    traj_in: Linear,
    traj_fwd1: GruCell,
    traj_bwd1: GruCell,
    traj_fwd2: GruCell,
    traj_bwd2: GruCell,
    traj_out: Linear,
}

impl PolicyNet {
    /// Registers every parameter into `store` and fixes the layout.
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        cfg: &LearnConfig,
        params: &WorldParams,
    ) -> PolicyNet {
        let obs_dim = params.sensor.n_rays + 3;
        let dh = cfg.d_h;
        let ds = cfg.d_slot;
        let m = cfg.max_slots;
        let enc1 = Linear::new(store, rng, "enc1", obs_dim, dh);
        let enc2 = Linear::new(store, rng, "enc2", dh, dh);
        let core = GruCell::new(store, rng, "core", dh, dh);
        let actor = Linear::new(store, rng, "actor", dh, 2);
        let log_std =
            store.add("log_std", Array2::from_elem((1, 2), cfg.init_log_std));
        let critic = Linear::new(store, rng, "critic", dh, 1);
        let count_in = Linear::new(store, rng, "count.in", dh, ds);
        let count_gru = GruCell::new(store, rng, "count.gru", ds, ds);
        let count_out = Linear::new(store, rng, "count.out", ds, m + 1);
        let pos_in = Linear::new(store, rng, "pos.in", dh + 1, ds);
        let pos_gru = GruCell::new(store, rng, "pos.gru", ds, ds);
        let pos_out = Linear::new(store, rng, "pos.out", ds, 2);
        let traj_in = Linear::new(store, rng, "traj.in", dh + 3, ds);
        let traj_fwd1 = GruCell::new(store, rng, "traj.fwd1", ds, ds);
        let traj_bwd1 = GruCell::new(store, rng, "traj.bwd1", ds, ds);
        let traj_fwd2 = GruCell::new(store, rng, "traj.fwd2", 2 * ds, ds);
        let traj_bwd2 = GruCell::new(store, rng, "traj.bwd2", 2 * ds, ds);
        let traj_out = Linear::new(store, rng, "traj.out", 2 * ds, 2);
        PolicyNet {
            obs_dim,
            d_h: dh,
            d_slot: ds,
            max_slots: m,
            horizon: cfg.horizon,
            v_max: params.v_robot_max,
            omega_max: params.omega_max,
            d_scan: params.sensor.d_max,
            enc1,
            enc2,
            core,
            actor,
            log_std,
            critic,
            count_in,
            count_gru,
            count_out,
            pos_in,
            pos_gru,
            pos_out,
            traj_in,
            traj_fwd1,
            traj_bwd1,
            traj_fwd2,
            traj_bwd2,
            traj_out,
        }
    }

    /// Flattens a scan and robot-frame goal vector into the input row:
    /// normalized ranges, scaled goal distance, goal bearing as cos/sin.
    pub fn obs_features(&self, scan: &DepthScan, goal_rel: Vec2) -> Array2<f64> {
        let mut feat = Vec::with_capacity(self.obs_dim);
        for &r in &scan.ranges {
            feat.push((r / self.d_scan).clamp(0.0, 1.0));
        }
        let dist = goal_rel.norm();
        feat.push(dist / GOAL_DIST_SCALE);
        let dir = goal_rel.normalized_or_zero();
        feat.push(dir.x);
        feat.push(dir.y);
        debug_assert_eq!(feat.len(), self.obs_dim);
        Array2::from_shape_vec((1, self.obs_dim), feat).expect("row shape")
    }

    pub fn zero_hidden(&self) -> Array2<f64> {
        Array2::zeros((1, self.d_h))
    }

    /// Tape-level forward pass: encoder, recurrent core, actor, critic.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, obs: Var, hidden: Var) -> ForwardVars {
        let e = self.enc1.apply(tape, store, obs);
        let e = tape.tanh(e);
        let e = self.enc2.apply(tape, store, e);
        let e = tape.tanh(e);
        let h = self.core.apply(tape, store, e, hidden);
        let raw = self.actor.apply(tape, store, h);
        let raw_lin = tape.slice_cols(raw, 0, 1);
        let lin = tape.sigmoid(raw_lin);
        let lin = tape.scale(lin, self.v_max);
        let raw_ang = tape.slice_cols(raw, 1, 2);
        let ang = tape.tanh(raw_ang);
        let ang = tape.scale(ang, self.omega_max);
        let mean = tape.concat_cols(&[lin, ang]);
        let log_std = tape.param(self.log_std, store.value(self.log_std));
        let value = self.critic.apply(tape, store, h);
        ForwardVars { delta_r: h, hidden: h, value, mean, log_std }
    }

    /// Plain-number forward pass. Fails loudly on any non-finite output
    /// so the trainer can abort with a diagnostic checkpoint.
    pub fn policy_forward(
        &self,
        store: &ParamStore,
        obs: &Array2<f64>,
        hidden: &Array2<f64>,
    ) -> Result<(PolicyState, Array2<f64>), PolicyFault> {
        let mut tape = Tape::new();
        let o = tape.constant(obs.clone());
        let h = tape.constant(hidden.clone());
        let out = self.forward(&mut tape, store, o, h);
        let delta_r: Vec<f64> = tape.value(out.delta_r).iter().cloned().collect();
        if !delta_r.iter().all(|x| x.is_finite()) {
            return Err(PolicyFault::NonFinite("latent"));
        }
        let value = tape.scalar(out.value);
        if !value.is_finite() {
            return Err(PolicyFault::NonFinite("value"));
        }
        let mv = tape.value(out.mean);
        let mean = [mv[[0, 0]], mv[[0, 1]]];
        let lv = tape.value(out.log_std);
        let std = [lv[[0, 0]].exp(), lv[[0, 1]].exp()];
        if !(mean[0].is_finite() && mean[1].is_finite()) {
            return Err(PolicyFault::NonFinite("action mean"));
        }
        if !(std[0] > 0.0 && std[1] > 0.0 && std[0].is_finite() && std[1].is_finite()) {
            return Err(PolicyFault::NonFinite("action std"));
        }
        let next = tape.value(out.hidden).clone();
        let state = PolicyState { delta_r: delta_r.clone(), hidden: delta_r, value, mean, std };
        Ok((state, next))
    }

    fn tile_latent(&self, tape: &mut Tape, delta_r: Var) -> Var {
        let rows = vec![delta_r; self.max_slots];
        tape.concat_rows(&rows)
    }

    /// Two refinement steps of a shared cell: h₂ = g(x, g(x, 0)). Runs
    /// every slot row independently, so slot order cannot leak in.
    fn refine(&self, tape: &mut Tape, store: &ParamStore, cell: &GruCell, x: Var) -> Var {
        let rows = tape.value(x).nrows();
        let h0 = cell.zero_state(tape, rows);
        let h1 = cell.apply(tape, store, x, h0);
        cell.apply(tape, store, x, h1)
    }

    /// Auxiliary heads over M slots. The count head sees only the
    /// latent; the position head adds the slot-validity bit; the
    /// trajectory head adds current positions.
    pub fn aux_forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        delta_r: Var,
        oracle: &AuxOracle,
    ) -> AuxVars {
        assert!(
            oracle.n <= self.max_slots,
            "oracle reports {} humans but the heads have {} slots",
            oracle.n,
            self.max_slots
        );
        assert_eq!(oracle.positions.len(), oracle.n, "one position per reported human");
        let m = self.max_slots;
        let mask: Vec<bool> = (0..m).map(|i| i < oracle.n).collect();

        let tiled = self.tile_latent(tape, delta_r);

        // Count head: latent only.
        let e = self.count_in.apply(tape, store, tiled);
        let e = tape.tanh(e);
        let h = self.refine(tape, store, &self.count_gru, e);
        let a = self_attention(tape, h);
        let pooled = tape.mean_rows(a);
        let count_logits = self.count_out.apply(tape, store, pooled);
        let count_log_probs = tape.log_softmax_rows(count_logits);
        let count_probs = tape.softmax_rows(count_logits);

        // Position head: latent + slot validity.
        let mask_col = tape.constant(Array2::from_shape_fn((m, 1), |(i, _)| {
            if mask[i] { 1.0 } else { 0.0 }
        }));
        let pos_x = tape.concat_cols(&[tiled, mask_col]);
        let e = self.pos_in.apply(tape, store, pos_x);
        let e = tape.tanh(e);
        let h = self.refine(tape, store, &self.pos_gru, e);
        let a = self_attention(tape, h);
        let positions = self.pos_out.apply(tape, store, a);

        // Trajectory head: latent + validity + current positions, then a
        // two-layer forward/backward recurrence over the future steps.
        let pos_feat = tape.constant(Array2::from_shape_fn((m, 2), |(i, j)| {
            if i < oracle.n {
                let p = oracle.positions[i];
                if j == 0 {
                    p.x
                } else {
                    p.y
                }
            } else {
                0.0
            }
        }));
        let traj_x = tape.concat_cols(&[tiled, mask_col, pos_feat]);
        let e = self.traj_in.apply(tape, store, traj_x);
        let e = tape.tanh(e);

        let unroll = |tape: &mut Tape, fwd: &GruCell, bwd: &GruCell, inputs: &[Var]| {
            let rows = m;
            let mut f = fwd.zero_state(tape, rows);
            let mut fs = Vec::with_capacity(inputs.len());
            for &x in inputs {
                f = fwd.apply(tape, store, x, f);
                fs.push(f);
            }
            let mut b = bwd.zero_state(tape, rows);
            let mut bs = Vec::with_capacity(inputs.len());
            for &x in inputs.iter().rev() {
                b = bwd.apply(tape, store, x, b);
                bs.push(b);
            }
            bs.reverse();
            fs.iter()
                .zip(&bs)
                .map(|(&fk, &bk)| tape.concat_cols(&[fk, bk]))
                .collect::<Vec<_>>()
        };

        let steps = vec![e; self.horizon];
        let layer1 = unroll(tape, &self.traj_fwd1, &self.traj_bwd1, &steps);
        let layer2 = unroll(tape, &self.traj_fwd2, &self.traj_bwd2, &layer1);
        let trajectories: Vec<Var> = layer2
            .into_iter()
            .map(|o| {
                let a = self_attention(tape, o);
                self.traj_out.apply(tape, store, a)
            })
            .collect();

        AuxVars { count_logits, count_log_probs, count_probs, positions, trajectories, mask }
    }

    /// Auxiliary predictions as plain numbers.
    pub fn aux_outputs(
        &self,
        store: &ParamStore,
        delta_r: &[f64],
        oracle: &AuxOracle,
    ) -> AuxOutputs {
        let mut tape = Tape::new();
        let d = tape.constant(
            Array2::from_shape_vec((1, delta_r.len()), delta_r.to_vec()).expect("latent row"),
        );
        let vars = self.aux_forward(&mut tape, store, d, oracle);
        let probs = tape.value(vars.count_probs).iter().cloned().collect();
        let pos = tape.value(vars.positions);
        let positions = (0..self.max_slots)
            .map(|i| Vec2::new(pos[[i, 0]], pos[[i, 1]]))
            .collect();
        let trajectories = (0..self.max_slots)
            .map(|i| {
                vars.trajectories
                    .iter()
                    .map(|&v| {
                        let a = tape.value(v);
                        Vec2::new(a[[i, 0]], a[[i, 1]])
                    })
                    .collect()
            })
            .collect();
        AuxOutputs { count_probs: probs, positions, trajectories, mask: vars.mask }
    }
}

/// Log density of a diagonal Gaussian at `action`.
pub fn gaussian_log_prob(mean: [f64; 2], std: [f64; 2], action: [f64; 2]) -> f64 {
    let mut lp = -LN_2PI;
    for i in 0..2 {
        let z = (action[i] - mean[i]) / std[i];
        lp -= 0.5 * z * z + std[i].ln();
    }
    lp
}

/// Differential entropy of a diagonal Gaussian.
pub fn gaussian_entropy(std: [f64; 2]) -> f64 {
    1.0 + LN_2PI + std[0].ln() + std[1].ln()
}

/// Draws an action and returns it with its log probability.
pub fn sample_action(state: &PolicyState, rng: &mut ChaCha8Rng) -> ([f64; 2], f64) {
    let mut action = [0.0; 2];
    for i in 0..2 {
        let z: f64 = rng.sample(StandardNormal);
        action[i] = state.mean[i] + state.std[i] * z;
    }
    (action, gaussian_log_prob(state.mean, state.std, action))
}

/// Runs a trained policy as an episode controller. Acts only on the
/// depth scan and relative goal; the privileged fields of the view are
/// never read.
pub struct PolicyController {
    net: PolicyNet,
    store: ParamStore,
    hidden: Array2<f64>,
    /// Sample actions when true; otherwise act on the mean.
    pub stochastic: bool,
    rng: ChaCha8Rng,
}

impl PolicyController {
    pub fn new(net: PolicyNet, store: ParamStore) -> PolicyController {
        let hidden = net.zero_hidden();
        PolicyController { net, store, hidden, stochastic: false, rng: stream(0, "policy-act") }
    }

    pub fn net(&self) -> &PolicyNet {
        &self.net
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }
}

impl Controller for PolicyController {
    fn begin(&mut self, episode: &Episode, _scene: &Scene) {
        self.hidden = self.net.zero_hidden();
        self.rng = stream(episode.seed, "policy-act");
    }

    fn act(&mut self, view: &ControlView) -> Result<Action, ControllerFault> {
        let obs = self.net.obs_features(view.scan, view.goal_rel);
        let (state, next) = self
            .net
            .policy_forward(&self.store, &obs, &self.hidden)
            .map_err(|e| ControllerFault(e.to_string()))?;
        self.hidden = next;
        let a = if self.stochastic {
            sample_action(&state, &mut self.rng).0
        } else {
            state.mean
        };
        Ok(Action::new(a[0], a[1]))
    }
}
