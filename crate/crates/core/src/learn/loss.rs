//! Auxiliary-task losses and the weighted loss combination.

use ndarray::Array2;

use crate::math::Vec2;

use super::tape::{Tape, Var};

/// Probability floor inside the count cross-entropy.
pub const PROB_FLOOR: f64 = 1e-12;

/// All loss components of one update, with the definitional identities
/// baked in at construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub main: f64,
    pub count: f64,
    pub pos: f64,
    pub traj: f64,
    pub aux: f64,
    pub total: f64,
}

/// Combines components: aux = count + pos + traj and
/// total = β_main·main + β_aux·aux, both exactly as written.
pub fn total_loss(
    main: f64,
    count: f64,
    pos: f64,
    traj: f64,
    beta_main: f64,
    beta_aux: f64,
) -> LossBreakdown {
    let aux = count + pos + traj;
    LossBreakdown { main, count, pos, traj, aux, total: beta_main * main + beta_aux * aux }
}

/// Tape twin of [`total_loss`] for the backward pass.
pub fn total_loss_var(
    tape: &mut Tape,
    main: Var,
    count: Var,
    pos: Var,
    traj: Var,
    beta_main: f64,
    beta_aux: f64,
) -> Var {
    let cp = tape.add(count, pos);
    let aux = tape.add(cp, traj);
    let m = tape.scale(main, beta_main);
    let a = tape.scale(aux, beta_aux);
    tape.add(m, a)
}

/// Cross-entropy of the predicted count distribution against the true
/// count: −log(probs[true_n]), probability floored at `PROB_FLOOR`.
/// The flag reports whether the floor fired.
pub fn count_loss(tape: &mut Tape, count_probs: Var, true_n: usize) -> (Var, bool) {
    let n_classes = tape.value(count_probs).ncols();
    assert!(
        true_n < n_classes,
        "true count {true_n} outside the {n_classes}-class distribution"
    );
    let picked = tape.slice_cols(count_probs, true_n, true_n + 1);
    let clamped = tape.scalar(picked) < PROB_FLOOR;
    let floored = tape.clamp(picked, PROB_FLOOR, f64::INFINITY);
    let logp = tape.ln(floored);
    (tape.scale(logp, -1.0), clamped)
}

fn mask_matrix(mask: &[bool], cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((mask.len(), cols), |(i, _)| if mask[i] { 1.0 } else { 0.0 })
}

fn truth_matrix(truth: &[Vec2]) -> Array2<f64> {
    Array2::from_shape_fn((truth.len(), 2), |(i, j)| if j == 0 { truth[i].x } else { truth[i].y })
}

/// Mean over masked-in slots of the squared Euclidean position error.
/// An empty mask yields exactly zero.
pub fn pos_loss(tape: &mut Tape, positions: Var, truth: &[Vec2], mask: &[bool]) -> Var {
    let m = tape.value(positions).nrows();
    assert_eq!(truth.len(), m, "one truth position per slot");
    assert_eq!(mask.len(), m, "one mask bit per slot");
    let n_in = mask.iter().filter(|&&b| b).count();
    if n_in == 0 {
        return tape.constant(Array2::zeros((1, 1)));
    }
    let t = tape.constant(truth_matrix(truth));
    let mk = tape.constant(mask_matrix(mask, 2));
    let diff = tape.sub(positions, t);
    let masked = tape.mul(diff, mk);
    let sq = tape.mul(masked, masked);
    let s = tape.sum_all(sq);
    tape.scale(s, 1.0 / n_in as f64)
}

/// Like [`pos_loss`] but averaged over the whole prediction horizon:
/// (1/|𝓜|)·Σ_slots (1/H)·Σ_steps squared error.
pub fn traj_loss(
    tape: &mut Tape,
    trajectories: &[Var],
    truth: &[Vec<Vec2>],
    mask: &[bool],
) -> Var {
    let horizon = trajectories.len();
    assert!(horizon > 0, "trajectory loss needs at least one step");
    let m = tape.value(trajectories[0]).nrows();
    assert_eq!(truth.len(), m, "one truth track per slot");
    assert_eq!(mask.len(), m, "one mask bit per slot");
    let n_in = mask.iter().filter(|&&b| b).count();
    if n_in == 0 {
        return tape.constant(Array2::zeros((1, 1)));
    }
    let mk = tape.constant(mask_matrix(mask, 2));
    let mut acc: Option<Var> = None;
    for (k, &pred) in trajectories.iter().enumerate() {
        let step_truth: Vec<Vec2> = truth
            .iter()
            .enumerate()
            .map(|(i, track)| if mask[i] { track[k] } else { Vec2::new(0.0, 0.0) })
            .collect();
        let t = tape.constant(truth_matrix(&step_truth));
        let diff = tape.sub(pred, t);
        let masked = tape.mul(diff, mk);
        let sq = tape.mul(masked, masked);
        let s = tape.sum_all(sq);
        acc = Some(match acc {
            None => s,
            Some(a) => tape.add(a, s),
        });
    }
    tape.scale(acc.expect("nonzero horizon"), 1.0 / (n_in * horizon) as f64)
}
