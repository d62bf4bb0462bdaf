//! Rollout collection, generalized advantage estimation, and the
//! clipped-surrogate policy update with auxiliary losses.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::episode::{
    fill_rewards, Episode, StepEvent, StepEventKind, StepRecord, World,
};
use crate::gen::generate_episode;
use crate::math::Vec2;
use crate::params::{Action, WorldParams};
use crate::rewards::{RewardBreakdown, RewardConfig};
use crate::rng::{indexed_stream, stream};
use crate::scene::Scene;

use super::loss::{count_loss, pos_loss, total_loss, total_loss_var, traj_loss, LossBreakdown};
use super::nn::{Adam, ParamStore};
use super::policy::{sample_action, AuxOracle, PolicyFault, PolicyNet};
use super::tape::{Tape, Var};
use super::LearnConfig;

const LN_2PI: f64 = 1.8378770664093453;

/// One environment transition with everything the update needs.
#[derive(Debug, Clone)]
pub struct RolloutStep {
    pub obs: Array2<f64>,
    pub action: [f64; 2],
    pub log_prob: f64,
    pub value: f64,
    pub reward: f64,
    /// Oracle features at decision time (robot frame).
    pub oracle: AuxOracle,
    /// Realized future positions per human, robot frame at decision
    /// time, clamped at the episode end.
    pub future_truth: Vec<Vec<Vec2>>,
}

/// One completed episode under the current policy.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub steps: Vec<RolloutStep>,
    pub episode_reward: f64,
    pub success: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum RolloutError {
    #[error("episode spawn failed: {0}")]
    Spawn(#[from] crate::episode::EpisodeError),
    #[error(transparent)]
    Policy(#[from] PolicyFault),
}

/// Plays one episode with sampled actions, recording observations,
/// values, log probabilities, rewards, and oracle truths.
pub fn collect_rollout(
    net: &PolicyNet,
    store: &ParamStore,
    scene: &Scene,
    episode: &Episode,
    reward_cfg: &RewardConfig,
    params: &WorldParams,
) -> Result<Rollout, RolloutError> {
    let mut world = World::spawn(scene, episode, params)?;
    let mut act_rng = stream(episode.seed, "policy-act");
    let mut hidden = net.zero_hidden();
    let start_goal_dist = world.goal_distance();

    if world.at_goal() {
        return Ok(Rollout { steps: vec![], episode_reward: 0.0, success: true });
    }

    struct Pending {
        obs: Array2<f64>,
        action: [f64; 2],
        log_prob: f64,
        value: f64,
        oracle: AuxOracle,
        robot_pos: Vec2,
        robot_heading: f64,
    }

    let mut events: Vec<StepEvent> = Vec::new();
    let mut records: Vec<StepRecord> = Vec::new();
    let mut goal_dists: Vec<f64> = Vec::new();
    let mut pending: Vec<Pending> = Vec::new();
    let mut success = false;

    while world.step_count < episode.max_steps {
        let (scan, goal_rel) = world.observe();
        let obs = net.obs_features(&scan, goal_rel);
        let (state, next_hidden) = net.policy_forward(store, &obs, &hidden)?;
        hidden = next_hidden;
        let (action, log_prob) = sample_action(&state, &mut act_rng);

        let robot_pos = world.robot.position;
        let robot_heading = world.robot.heading;
        let oracle_positions: Vec<Vec2> = world
            .humans
            .iter()
            .map(|h| (h.state.position - robot_pos).rotated(-robot_heading))
            .collect();
        let oracle = AuxOracle { n: oracle_positions.len(), positions: oracle_positions };

        let cmd = Action::new(action[0], action[1]);
        let step_events = world.step(cmd);
        let done = step_events.iter().any(|e| e.kind == StepEventKind::GoalReached);
        events.extend(step_events);
        records.push(StepRecord {
            step: world.step_count - 1,
            robot: world.robot,
            humans: world.human_states(),
            action: cmd,
            reward_terms: RewardBreakdown::zero(),
        });
        goal_dists.push(world.goal_distance());
        pending.push(Pending {
            obs,
            action,
            log_prob,
            value: state.value,
            oracle,
            robot_pos,
            robot_heading,
        });
        if done {
            success = true;
            break;
        }
    }
    if !success {
        events.push(StepEvent { kind: StepEventKind::Timeout, step: world.step_count - 1 });
    }
    fill_rewards(&mut records, &events, &goal_dists, start_goal_dist, reward_cfg);

    let last = records.len() - 1;
    let steps = pending
        .into_iter()
        .enumerate()
        .map(|(t, p)| {
            let future_truth = (0..p.oracle.n)
                .map(|i| {
                    (1..=net.horizon)
                        .map(|j| {
                            let idx = (t + j - 1).min(last);
                            (records[idx].humans[i].position - p.robot_pos)
                                .rotated(-p.robot_heading)
                        })
                        .collect()
                })
                .collect();
            RolloutStep {
                obs: p.obs,
                action: p.action,
                log_prob: p.log_prob,
                value: p.value,
                reward: records[t].reward_terms.total,
                oracle: p.oracle,
                future_truth,
            }
        })
        .collect();
    let episode_reward = records.iter().map(|r| r.reward_terms.total).sum();
    Ok(Rollout { steps, episode_reward, success })
}

/// Generalized advantage estimation over one episode that ended
/// terminally (the value beyond the last step is zero). Returns
/// (advantages, value targets).
pub fn gae_advantages(
    rewards: &[f64],
    values: &[f64],
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(rewards.len(), values.len());
    let t = rewards.len();
    let mut adv = vec![0.0; t];
    let mut running = 0.0;
    for i in (0..t).rev() {
        let next_value = if i + 1 < t { values[i + 1] } else { 0.0 };
        let delta = rewards[i] + gamma * next_value - values[i];
        running = delta + gamma * lambda * running;
        adv[i] = running;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Clipped-surrogate loss: −mean(min(r·A, clip(r, 1±ε)·A)) where
/// r = exp(logp_new − logp_old).
pub fn ppo_surrogate(
    tape: &mut Tape,
    logp_new: Var,
    logp_old: Var,
    advantages: Var,
    clip: f64,
) -> Var {
    let n = tape.value(logp_new).nrows() as f64;
    let diff = tape.sub(logp_new, logp_old);
    let ratio = tape.exp(diff);
    let unclipped = tape.mul(ratio, advantages);
    let clipped_ratio = tape.clamp(ratio, 1.0 - clip, 1.0 + clip);
    let clipped = tape.mul(clipped_ratio, advantages);
    let pessimistic = tape.min(unclipped, clipped);
    let s = tape.sum_all(pessimistic);
    tape.scale(s, -1.0 / n)
}

fn gaussian_logp_var(tape: &mut Tape, mean: Var, log_std: Var, action: Var) -> Var {
    let diff = tape.sub(action, mean);
    let neg_ls = tape.scale(log_std, -1.0);
    let inv_std = tape.exp(neg_ls);
    let z = tape.mul(diff, inv_std);
    let zz = tape.mul(z, z);
    let q = tape.sum_all(zz);
    let q = tape.scale(q, -0.5);
    let ls_sum = tape.sum_all(log_std);
    let ls_neg = tape.scale(ls_sum, -1.0);
    let lp = tape.add(q, ls_neg);
    tape.add_scalar(lp, -LN_2PI)
}

/// Loss parts of one episode, already scaled to contribute to a
/// chunk-level mean.
struct EpisodeParts {
    total: Var,
    main: f64,
    count: f64,
    pos: f64,
    traj: f64,
    floor_hits: usize,
}

/// Builds the complete per-episode loss on one tape. Every per-step
/// term carries weight 1/`chunk_steps`; the entropy bonus carries
/// `entropy_weight` (the episode's share of one chunk-wide bonus).
fn episode_loss(
    tape: &mut Tape,
    net: &PolicyNet,
    store: &ParamStore,
    rollout: &Rollout,
    advantages: &[f64],
    returns: &[f64],
    chunk_steps: f64,
    entropy_weight: f64,
    cfg: &LearnConfig,
) -> EpisodeParts {
    let t_ep = rollout.steps.len();
    assert!(t_ep > 0, "episode loss over an empty rollout");
    assert_eq!(advantages.len(), t_ep);
    assert_eq!(returns.len(), t_ep);

    let mut hidden = tape.constant(Array2::zeros((1, net.d_h)));
    let mut logps = Vec::with_capacity(t_ep);
    let mut values = Vec::with_capacity(t_ep);
    let mut count_acc: Option<Var> = None;
    let mut pos_acc: Option<Var> = None;
    let mut traj_acc: Option<Var> = None;
    let mut floor_hits = 0usize;
    let mut log_std_var = None;

    for step in &rollout.steps {
        let obs = tape.constant(step.obs.clone());
        let f = net.forward(tape, store, obs, hidden);
        hidden = f.hidden;
        log_std_var = Some(f.log_std);
        let action = tape.constant(Array2::from_shape_vec(
            (1, 2),
            vec![step.action[0], step.action[1]],
        )
        .expect("action row"));
        logps.push(gaussian_logp_var(tape, f.mean, f.log_std, action));
        values.push(f.value);

        if cfg.beta_aux != 0.0 {
            let aux = net.aux_forward(tape, store, f.delta_r, &step.oracle);
            let (cl, flagged) = count_loss(tape, aux.count_probs, step.oracle.n);
            if flagged {
                floor_hits += 1;
            }
            let mut pos_truth = step.oracle.positions.clone();
            pos_truth.resize(net.max_slots, Vec2::new(0.0, 0.0));
            let pl = pos_loss(tape, aux.positions, &pos_truth, &aux.mask);
            let mut traj_truth = step.future_truth.clone();
            traj_truth.resize(net.max_slots, vec![Vec2::new(0.0, 0.0); net.horizon]);
            let tl = traj_loss(tape, &aux.trajectories, &traj_truth, &aux.mask);
            count_acc = Some(match count_acc {
                None => cl,
                Some(a) => tape.add(a, cl),
            });
            pos_acc = Some(match pos_acc {
                None => pl,
                Some(a) => tape.add(a, pl),
            });
            traj_acc = Some(match traj_acc {
                None => tl,
                Some(a) => tape.add(a, tl),
            });
        }
    }

    // Policy surrogate over the episode, scaled into the chunk mean.
    let logp_new = tape.concat_rows(&logps);
    let logp_old = tape.constant(Array2::from_shape_vec(
        (t_ep, 1),
        rollout.steps.iter().map(|s| s.log_prob).collect(),
    )
    .expect("column"));
    let adv = tape.constant(
        Array2::from_shape_vec((t_ep, 1), advantages.to_vec()).expect("column"),
    );
    let surrogate = ppo_surrogate(tape, logp_new, logp_old, adv, cfg.clip);
    let policy = tape.scale(surrogate, t_ep as f64 / chunk_steps);

    // Value regression.
    let v = tape.concat_rows(&values);
    let ret =
        tape.constant(Array2::from_shape_vec((t_ep, 1), returns.to_vec()).expect("column"));
    let vd = tape.sub(v, ret);
    let vsq = tape.mul(vd, vd);
    let vsum = tape.sum_all(vsq);
    let value = tape.scale(vsum, 1.0 / chunk_steps);

    // Entropy of the diagonal Gaussian: Σ logσ + 1 + ln 2π.
    let ls = log_std_var.expect("at least one step");
    let ls_sum = tape.sum_all(ls);
    let ent = tape.add_scalar(ls_sum, 1.0 + LN_2PI);
    let ent = tape.scale(ent, entropy_weight);

    let vw = tape.scale(value, cfg.value_coef);
    let ew = tape.scale(ent, -cfg.entropy_coef);
    let pv = tape.add(policy, vw);
    let main = tape.add(pv, ew);

    let zero = tape.constant(Array2::zeros((1, 1)));
    let scale_mean = |tape: &mut Tape, acc: Option<Var>| match acc {
        None => zero,
        Some(a) => tape.scale(a, 1.0 / chunk_steps),
    };
    let count = scale_mean(tape, count_acc);
    let pos = scale_mean(tape, pos_acc);
    let traj = scale_mean(tape, traj_acc);

    let total = total_loss_var(tape, main, count, pos, traj, cfg.beta_main, cfg.beta_aux);
    EpisodeParts {
        total,
        main: tape.scalar(main),
        count: tape.scalar(count),
        pos: tape.scalar(pos),
        traj: tape.scalar(traj),
        floor_hits,
    }
}

/// What one optimizer pass over a batch reported.
#[derive(Debug, Clone, Copy)]
pub struct UpdateOutcome {
    pub loss: LossBreakdown,
    pub mean_grad_norm: f64,
    pub skipped_minibatches: usize,
    pub count_floor_hits: usize,
    pub minibatches: usize,
}

/// Runs `cfg.epochs` shuffled passes of minibatch gradient steps over
/// the collected rollouts. Minibatches whose gradients go non-finite
/// are skipped and counted, never applied.
pub fn ppo_update(
    net: &PolicyNet,
    store: &mut ParamStore,
    opt: &mut Adam,
    rollouts: &[Rollout],
    cfg: &LearnConfig,
    seed: u64,
    update_idx: u64,
) -> UpdateOutcome {
    let live: Vec<&Rollout> = rollouts.iter().filter(|r| !r.steps.is_empty()).collect();
    let zero = LossBreakdown { main: 0.0, count: 0.0, pos: 0.0, traj: 0.0, aux: 0.0, total: 0.0 };
    if live.is_empty() {
        return UpdateOutcome {
            loss: zero,
            mean_grad_norm: 0.0,
            skipped_minibatches: 0,
            count_floor_hits: 0,
            minibatches: 0,
        };
    }

    // Advantages and value targets per episode, normalized batch-wide.
    let mut advantages: Vec<Vec<f64>> = Vec::with_capacity(live.len());
    let mut returns: Vec<Vec<f64>> = Vec::with_capacity(live.len());
    for r in &live {
        let rewards: Vec<f64> = r.steps.iter().map(|s| s.reward).collect();
        let values: Vec<f64> = r.steps.iter().map(|s| s.value).collect();
        let (a, ret) = gae_advantages(&rewards, &values, cfg.gamma, cfg.gae_lambda);
        advantages.push(a);
        returns.push(ret);
    }
    if cfg.normalize_advantages {
        let flat: Vec<f64> = advantages.iter().flatten().cloned().collect();
        let n = flat.len() as f64;
        let mean = flat.iter().sum::<f64>() / n;
        let var = flat.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
        let std = var.sqrt().max(1e-8);
        for a in &mut advantages {
            for x in a {
                *x = (*x - mean) / std;
            }
        }
    }

    let mut shuffle_rng = indexed_stream(seed, "ppo-shuffle", update_idx);
    let mut loss_sum = [0.0f64; 4]; // main, count, pos, traj
    let mut grad_norm_sum = 0.0;
    let mut stepped = 0usize;
    let mut skipped = 0usize;
    let mut floor_hits = 0usize;
    let mut minibatches = 0usize;

    for _epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..live.len()).collect();
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(cfg.minibatch_episodes.max(1)) {
            let chunk_steps: usize = chunk.iter().map(|&i| live[i].steps.len()).sum();
            store.zero_grads();
            let mut parts_sum = [0.0f64; 4];
            for &i in chunk {
                let mut tape = Tape::new();
                let ew = live[i].steps.len() as f64 / chunk_steps as f64;
                let parts = episode_loss(
                    &mut tape,
                    net,
                    store,
                    live[i],
                    &advantages[i],
                    &returns[i],
                    chunk_steps as f64,
                    ew,
                    cfg,
                );
                let grads = tape.backward(parts.total);
                store.absorb(&tape, &grads);
                parts_sum[0] += parts.main;
                parts_sum[1] += parts.count;
                parts_sum[2] += parts.pos;
                parts_sum[3] += parts.traj;
                floor_hits += parts.floor_hits;
            }
            minibatches += 1;
            if !store.grads_finite() {
                skipped += 1;
                eprintln!(
                    "update {update_idx}: non-finite gradient, minibatch skipped"
                );
                continue;
            }
            grad_norm_sum += store.clip_grad_norm(cfg.grad_clip);
            opt.step(store);
            stepped += 1;
            for k in 0..4 {
                loss_sum[k] += parts_sum[k];
            }
        }
    }

    let denom = stepped.max(1) as f64;
    let loss = total_loss(
        loss_sum[0] / denom,
        loss_sum[1] / denom,
        loss_sum[2] / denom,
        loss_sum[3] / denom,
        cfg.beta_main,
        cfg.beta_aux,
    );
    UpdateOutcome {
        loss,
        mean_grad_norm: grad_norm_sum / denom,
        skipped_minibatches: skipped,
        count_floor_hits: floor_hits,
        minibatches,
    }
}

/// One row of the training log.
#[derive(Debug, Clone, Copy)]
pub struct UpdateStats {
    pub update: usize,
    /// Cumulative environment steps after this update.
    pub env_steps: u64,
    pub loss: LossBreakdown,
    pub mean_episode_reward: f64,
    pub success_rate: f64,
    pub mean_grad_norm: f64,
    pub skipped_minibatches: usize,
    pub count_floor_hits: usize,
    pub n_episodes: usize,
    pub n_steps: usize,
}

impl UpdateStats {
    pub fn csv_header() -> &'static str {
        "step,main,count,pos,traj,total,mean_episode_reward,success_rate"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.4},{:.4}",
            self.env_steps,
            self.loss.main,
            self.loss.count,
            self.loss.pos,
            self.loss.traj,
            self.loss.total,
            self.mean_episode_reward,
            self.success_rate
        )
    }
}

/// Why a run stopped early, if it did.
pub type TrainAbort = String;

pub struct TrainReport {
    pub stats: Vec<UpdateStats>,
    pub net: PolicyNet,
    pub store: ParamStore,
    pub env_steps: u64,
    /// Present when training aborted (non-finite forward pass or a
    /// generation failure); the store holds the state at abort time.
    pub abort: Option<TrainAbort>,
}

/// Seeded end-to-end training: generates episodes over `scenes`
/// round-robin, collects batches of `cfg.steps_per_update` steps, and
/// applies clipped-surrogate updates until `total_steps` environment
/// steps have been consumed. `on_update` fires once per update with
/// the freshly logged row and the live parameters, so callers can
/// checkpoint mid-run.
pub fn train<F: FnMut(&UpdateStats, &ParamStore)>(
    scenes: &[Scene],
    params: &WorldParams,
    reward_cfg: &RewardConfig,
    cfg: &LearnConfig,
    seed: u64,
    total_steps: u64,
    mut on_update: F,
) -> TrainReport {
    assert!(!scenes.is_empty(), "training needs at least one scene");
    let mut store = ParamStore::new();
    let mut init_rng = stream(seed, "policy-init");
    let net = PolicyNet::new(&mut store, &mut init_rng, cfg, params);
    let mut opt = Adam::new(&store, cfg.lr);

    let mut gen_rng = stream(seed, "train-gen");
    let mut seed_rng = stream(seed, "train-ep-seed");
    let mut episode_counter = 0usize;
    let mut env_steps = 0u64;
    let mut stats = Vec::new();
    let mut abort = None;
    let mut update_idx = 0u64;

    'training: while env_steps < total_steps {
        let mut rollouts = Vec::new();
        let mut batch_steps = 0usize;
        while batch_steps < cfg.steps_per_update {
            let scene = &scenes[episode_counter % scenes.len()];
            let ep_seed: u64 = seed_rng.gen();
            episode_counter += 1;
            let episode = match generate_episode(scene, ep_seed, &mut gen_rng, params) {
                Ok(e) => e,
                Err(e) => {
                    abort = Some(format!("episode generation failed: {e}"));
                    break 'training;
                }
            };
            let rollout =
                match collect_rollout(&net, &store, scene, &episode, reward_cfg, params) {
                    Ok(r) => r,
                    Err(e) => {
                        abort = Some(format!("rollout aborted: {e}"));
                        break 'training;
                    }
                };
            batch_steps += rollout.steps.len();
            rollouts.push(rollout);
        }
        env_steps += batch_steps as u64;

        let n_episodes = rollouts.len();
        let mean_episode_reward =
            rollouts.iter().map(|r| r.episode_reward).sum::<f64>() / n_episodes.max(1) as f64;
        let success_rate = rollouts.iter().filter(|r| r.success).count() as f64
            / n_episodes.max(1) as f64;

        let outcome = ppo_update(&net, &mut store, &mut opt, &rollouts, cfg, seed, update_idx);
        if !store.values_finite() {
            abort = Some("parameters went non-finite after an update".to_string());
            break;
        }
        let row = UpdateStats {
            update: update_idx as usize,
            env_steps,
            loss: outcome.loss,
            mean_episode_reward,
            success_rate,
            mean_grad_norm: outcome.mean_grad_norm,
            skipped_minibatches: outcome.skipped_minibatches,
            count_floor_hits: outcome.count_floor_hits,
            n_episodes,
            n_steps: batch_steps,
        };
        on_update(&row, &store);
        stats.push(row);
        update_idx += 1;
    }

    TrainReport { stats, net, store, env_steps, abort }
}

/// Progress snapshot alias used by callers that stream the log.
pub type TrainProgress = UpdateStats;

/// Full-pipeline gradient check: a small randomized network, a
/// synthetic rollout, the exact `episode_loss` used in training, and
/// central finite differences (h = 1e-5) over every parameter scalar.
/// Returns (max relative error, parameter count). Relative error uses
/// a 1e-4 floor on the denominator so vanishing gradients compare by
/// absolute difference.
pub fn gradcheck_total_loss(seed: u64) -> (f64, usize) {
    let mut params = WorldParams::default();
    params.sensor.n_rays = 8;
    let cfg = LearnConfig {
        d_h: 4,
        d_slot: 3,
        horizon: 2,
        beta_aux: 0.3,
        ..LearnConfig::default()
    };
    let mut store = ParamStore::new();
    let mut rng = stream(seed, "gradcheck-init");
    let net = PolicyNet::new(&mut store, &mut rng, &cfg, &params);

    // Synthetic three-step rollout with two oracle humans.
    let mut data_rng = stream(seed, "gradcheck-data");
    let t_ep = 3;
    let steps: Vec<RolloutStep> = (0..t_ep)
        .map(|_| {
            let obs = Array2::from_shape_fn((1, net.obs_dim), |_| data_rng.gen_range(0.0..1.0));
            let action = [data_rng.gen_range(0.0..1.0), data_rng.gen_range(-1.0..1.0)];
            let positions =
                vec![
                    Vec2::new(data_rng.gen_range(-2.0..2.0), data_rng.gen_range(-2.0..2.0));
                    2
                ];
            let future_truth = (0..2)
                .map(|_| {
                    (0..cfg.horizon)
                        .map(|_| {
                            Vec2::new(
                                data_rng.gen_range(-2.0..2.0),
                                data_rng.gen_range(-2.0..2.0),
                            )
                        })
                        .collect()
                })
                .collect();
            RolloutStep {
                obs,
                action,
                log_prob: data_rng.gen_range(-3.0..0.0),
                value: data_rng.gen_range(-1.0..1.0),
                reward: data_rng.gen_range(-1.0..1.0),
                oracle: AuxOracle { n: 2, positions },
                future_truth,
            }
        })
        .collect();
    let rollout = Rollout { steps, episode_reward: 0.0, success: false };
    let advantages: Vec<f64> = (0..t_ep).map(|_| data_rng.gen_range(-1.0..1.0)).collect();
    let returns: Vec<f64> = (0..t_ep).map(|_| data_rng.gen_range(-1.0..1.0)).collect();

    let eval = |store: &ParamStore| -> f64 {
        let mut tape = Tape::new();
        let parts = episode_loss(
            &mut tape,
            &net,
            store,
            &rollout,
            &advantages,
            &returns,
            t_ep as f64,
            1.0,
            &cfg,
        );
        tape.scalar(parts.total)
    };

    let mut tape = Tape::new();
    let parts = episode_loss(
        &mut tape,
        &net,
        &store,
        &rollout,
        &advantages,
        &returns,
        t_ep as f64,
        1.0,
        &cfg,
    );
    let grads = tape.backward(parts.total);
    store.zero_grads();
    store.absorb(&tape, &grads);

    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut n_params = 0usize;
    for id in 0..store.len() {
        let (rows, cols) = store.value(id).dim();
        for i in 0..rows {
            for j in 0..cols {
                n_params += 1;
                let orig = store.value(id)[[i, j]];
                store.value_mut(id)[[i, j]] = orig + h;
                let up = eval(&store);
                store.value_mut(id)[[i, j]] = orig - h;
                let down = eval(&store);
                store.value_mut(id)[[i, j]] = orig;
                let numeric = (up - down) / (2.0 * h);
                let analytic = store.grad(id)[[i, j]];
                let denom = numeric.abs().max(analytic.abs()).max(1e-4);
                worst = worst.max((numeric - analytic).abs() / denom);
            }
        }
    }
    (worst, n_params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn gae_matches_hand_computation() {
        let (adv, ret) = gae_advantages(&[1.0, 0.0], &[0.5, 0.25], 0.5, 0.5);
        assert!((adv[1] - (-0.25)).abs() < 1e-12);
        assert!((adv[0] - 0.5625).abs() < 1e-12);
        assert!((ret[0] - 1.0625).abs() < 1e-12);
        assert!((ret[1] - 0.0).abs() < 1e-12);

        // γ=λ=1 degenerates to Monte Carlo returns minus the baseline.
        let rewards = [1.0, 2.0, 3.0];
        let values = [0.5, 0.5, 0.5];
        let (adv, ret) = gae_advantages(&rewards, &values, 1.0, 1.0);
        assert!((adv[0] - (6.0 - 0.5)).abs() < 1e-12);
        assert!((adv[2] - (3.0 - 0.5)).abs() < 1e-12);
        assert!((ret[0] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn clip_rule_uses_the_pessimistic_branch() {
        // Single transition, ratio 1.3 > 1+ε, positive advantage → 1.2·A.
        let mut tape = Tape::new();
        let a = 2.0;
        let old = tape.constant(array![[-1.0]]);
        let new = tape.constant(array![[-1.0 + 1.3f64.ln()]]);
        let adv = tape.constant(array![[a]]);
        let loss = ppo_surrogate(&mut tape, new, old, adv, 0.2);
        assert!((tape.scalar(loss) - (-1.2 * a)).abs() < 1e-12);

        // Negative advantage with a shrunken ratio: the clipped branch
        // is the larger penalty and wins.
        let mut tape = Tape::new();
        let old = tape.constant(array![[0.0]]);
        let new = tape.constant(array![[0.5f64.ln()]]);
        let adv = tape.constant(array![[-1.0]]);
        let loss = ppo_surrogate(&mut tape, new, old, adv, 0.2);
        assert!((tape.scalar(loss) - 0.8).abs() < 1e-12);

        // Inside the trust region nothing clips.
        let mut tape = Tape::new();
        let old = tape.constant(array![[0.0]]);
        let new = tape.constant(array![[1.1f64.ln()]]);
        let adv = tape.constant(array![[1.0]]);
        let loss = ppo_surrogate(&mut tape, new, old, adv, 0.2);
        assert!((tape.scalar(loss) - (-1.1)).abs() < 1e-12);
    }

    #[test]
    fn zero_advantages_zero_the_policy_gradient() {
        let mut params = WorldParams::default();
        params.sensor.n_rays = 8;
        let cfg = LearnConfig {
            d_h: 4,
            d_slot: 3,
            horizon: 2,
            beta_aux: 0.0,
            value_coef: 0.0,
            entropy_coef: 0.0,
            ..LearnConfig::default()
        };
        let mut store = ParamStore::new();
        let mut rng = stream(3, "zero-adv");
        let net = PolicyNet::new(&mut store, &mut rng, &cfg, &params);
        let steps: Vec<RolloutStep> = (0..4)
            .map(|k| RolloutStep {
                obs: Array2::from_elem((1, net.obs_dim), 0.1 * k as f64),
                action: [0.4, 0.2],
                log_prob: -1.0,
                value: 0.0,
                reward: 0.0,
                oracle: AuxOracle::default(),
                future_truth: vec![],
            })
            .collect();
        let rollout = Rollout { steps, episode_reward: 0.0, success: false };
        let mut tape = Tape::new();
        let parts = episode_loss(
            &mut tape,
            &net,
            &store,
            &rollout,
            &[0.0; 4],
            &[0.0; 4],
            4.0,
            1.0,
            &cfg,
        );
        let grads = tape.backward(parts.total);
        store.zero_grads();
        store.absorb(&tape, &grads);
        for id in 0..store.len() {
            assert!(
                store.grad(id).iter().all(|&g| g == 0.0),
                "{} moved under zero advantages",
                store.name(id)
            );
        }
    }

    #[test]
    fn full_pipeline_gradients_match_finite_differences() {
        let (err, n_params) = gradcheck_total_loss(17);
        assert!(n_params > 200, "check exercises a real net ({n_params} params)");
        assert!(err < 1e-4, "max relative gradient error {err}");
    }

    #[test]
    fn rollouts_record_aligned_truths() {
        use crate::gen::generate_scene;
        let params = WorldParams::default();
        let reward_cfg = RewardConfig::default();
        let cfg = LearnConfig { d_h: 8, d_slot: 4, ..LearnConfig::default() };
        let mut srng = stream(11, "rollout-test");
        let scene = generate_scene("r", 11, &mut srng, params.r_grid).unwrap();
        let mut grng = stream(12, "rollout-test");
        let episode = generate_episode(&scene, 13, &mut grng, &params).unwrap();
        let mut store = ParamStore::new();
        let mut rng = stream(14, "rollout-test");
        let net = PolicyNet::new(&mut store, &mut rng, &cfg, &params);
        let r = collect_rollout(&net, &store, &scene, &episode, &reward_cfg, &params).unwrap();
        assert!(!r.steps.is_empty());
        let n = episode.humans.len();
        for s in &r.steps {
            assert_eq!(s.oracle.n, n);
            assert_eq!(s.oracle.positions.len(), n);
            assert_eq!(s.future_truth.len(), n);
            assert!(s.future_truth.iter().all(|t| t.len() == net.horizon));
            assert!(s.log_prob.is_finite());
            assert!(s.reward.is_finite());
        }
        // Rewards collected through the rollout path equal a replayed
        // controller run of the same policy? Not in general (sampled
        // actions differ per rng stream), but the totals must be finite
        // and the episode either succeeded or burned the whole budget.
        assert!(r.success || r.steps.len() == episode.max_steps);
        // Determinism: same store, same episode → identical rollout.
        let r2 = collect_rollout(&net, &store, &scene, &episode, &reward_cfg, &params).unwrap();
        assert_eq!(r.steps.len(), r2.steps.len());
        for (a, b) in r.steps.iter().zip(&r2.steps) {
            assert_eq!(a.action, b.action);
            assert_eq!(a.reward, b.reward);
            assert_eq!(a.log_prob, b.log_prob);
        }
    }

    #[test]
    fn training_is_deterministic_and_logs_every_update() {
        let params = WorldParams { max_steps: 60, ..WorldParams::default() };
        let reward_cfg = RewardConfig::default();
        let cfg = LearnConfig {
            d_h: 8,
            d_slot: 4,
            horizon: 2,
            steps_per_update: 40,
            minibatch_episodes: 2,
            epochs: 1,
            ..LearnConfig::default()
        };
        let scene = Scene::empty_room("flat", 10.0, 10.0, params.r_grid);
        let run = || {
            let mut rows = Vec::new();
            let report = train(
                std::slice::from_ref(&scene),
                &params,
                &reward_cfg,
                &cfg,
                99,
                80,
                |s, _| rows.push(s.env_steps),
            );
            (report, rows)
        };
        let (a, rows_a) = run();
        let (b, rows_b) = run();
        assert!(a.abort.is_none(), "{:?}", a.abort);
        assert_eq!(a.stats.len(), rows_a.len());
        assert_eq!(rows_a, rows_b);
        assert_eq!(a.env_steps, b.env_steps);
        assert!(a.env_steps >= 80);
        for id in 0..a.store.len() {
            let va = a.store.value(id);
            let vb = b.store.value(id);
            assert_eq!(va, vb, "parameter {} diverged across runs", a.store.name(id));
        }
        // The log rows carry the loss identity.
        for s in &a.stats {
            assert_eq!(s.loss.aux, s.loss.count + s.loss.pos + s.loss.traj);
            let row = s.csv_row();
            assert_eq!(row.split(',').count(), UpdateStats::csv_header().split(',').count());
        }
    }
}
