//! Per-episode navigation metrics and their cross-seed aggregation.
//!
//! Success weights both efficiency measures: a failed episode scores zero
//! on the path- and time-weighted columns no matter how it moved. Human
//! comfort is tracked two ways — the fraction of steps the robot kept a
//! 1 m personal-space bubble, and a per-episode flag for any contact.

use serde::{Deserialize, Serialize};

use crate::episode::{Episode, Trace};
use crate::params::WorldParams;

/// Steps within this center distance (m) of any human break personal
/// space compliance for that step.
pub const PSC_DISTANCE: f64 = 1.0;

/// How far the recorded path may fall below the cached shortest-path
/// length before we call the trace corrupt. The shortest path is measured
/// on the 8-connected grid, which overshoots free-space straight lines by
/// up to ~8.2%, and a successful robot stops up to d_succ short of the
/// goal — both gaps are legitimate.
pub fn path_tolerance(geodesic: f64, params: &WorldParams) -> f64 {
    0.09 * geodesic + params.d_succ + 2.0 * params.r_grid
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub success: bool,
    pub spl: f64,
    pub stl: f64,
    pub psc: f64,
    pub h_coll: bool,
    pub path_length: f64,
    pub geodesic: f64,
    pub steps: usize,
    pub optimal_steps: usize,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricsError {
    #[error("recorded path {path:.3} m beats the shortest possible {geodesic:.3} m")]
    PathBeatsGeodesic { path: f64, geodesic: f64 },
}

/// Score one completed trace against its episode definition.
pub fn episode_metrics(
    trace: &Trace,
    episode: &Episode,
    params: &WorldParams,
) -> Result<EpisodeMetrics, MetricsError> {
    let p = trace.path_length(episode.robot_start.position);
    let l = episode.geodesic_start;
    let success = trace.success();
    // Only a successful run has actually connected start to goal; a robot
    // that stalled or wandered may legitimately record any path length.
    if success && p < l - path_tolerance(l, params) {
        return Err(MetricsError::PathBeatsGeodesic { path: p, geodesic: l });
    }
    let steps = trace.steps();
    let optimal_steps = ((l / params.v_robot_max) / params.dt).ceil() as usize;

    let spl = match (success, p.max(l) > 0.0) {
        (false, _) => 0.0,
        (true, true) => l / p.max(l),
        (true, false) => 1.0, // goal on the start point
    };
    let stl = match (success, steps.max(optimal_steps) > 0) {
        (false, _) => 0.0,
        (true, true) => optimal_steps as f64 / steps.max(optimal_steps) as f64,
        (true, false) => 1.0,
    };

    let mut compliant = 0usize;
    for r in &trace.records {
        let min_d = r
            .humans
            .iter()
            .map(|h| r.robot.position.distance(h.position))
            .fold(f64::INFINITY, f64::min);
        if min_d >= PSC_DISTANCE {
            compliant += 1;
        }
    }
    let any_humans = trace.records.iter().any(|r| !r.humans.is_empty());
    let psc = if !any_humans || steps == 0 { 1.0 } else { compliant as f64 / steps as f64 };

    Ok(EpisodeMetrics {
        success,
        spl,
        stl,
        psc,
        h_coll: trace.any_human_collision(),
        path_length: p,
        geodesic: l,
        steps,
        optimal_steps,
    })
}

/// Mean ± population standard deviation, in percent, rounded to 2
/// decimals (the precision every report ships with).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricStat {
    pub mean: f64,
    pub std: f64,
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

impl MetricStat {
    /// `values` are per-seed means in [0, 1].
    fn from_fractions(values: &[f64]) -> MetricStat {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        MetricStat { mean: round2(100.0 * mean), std: round2(100.0 * var.sqrt()) }
    }
}

/// One seed's episode-set means for the CSV, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRow {
    pub seed: u64,
    pub suc: f64,
    pub spl: f64,
    pub stl: f64,
    pub psc: f64,
    pub hcoll: f64,
    pub n_episodes: usize,
}

/// Cross-seed aggregate of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodAggregate {
    pub suc: MetricStat,
    pub spl: MetricStat,
    pub stl: MetricStat,
    pub psc: MetricStat,
    pub hcoll: MetricStat,
    pub per_seed: Vec<SeedRow>,
    pub n_episodes: usize,
}

fn mean_of<F: Fn(&EpisodeMetrics) -> f64>(ms: &[EpisodeMetrics], f: F) -> f64 {
    if ms.is_empty() {
        return 0.0;
    }
    ms.iter().map(f).sum::<f64>() / ms.len() as f64
}

/// Collapse per-seed episode metrics: per-seed means first, then the
/// cross-seed mean and population spread.
pub fn aggregate(per_seed: &[(u64, Vec<EpisodeMetrics>)]) -> MethodAggregate {
    assert!(!per_seed.is_empty(), "aggregation needs at least one seed");
    let mut rows = Vec::with_capacity(per_seed.len());
    let (mut suc, mut spl, mut stl, mut psc, mut hc) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (seed, ms) in per_seed {
        let s = mean_of(ms, |m| m.success as u8 as f64);
        let sp = mean_of(ms, |m| m.spl);
        let st = mean_of(ms, |m| m.stl);
        let ps = mean_of(ms, |m| m.psc);
        let h = mean_of(ms, |m| m.h_coll as u8 as f64);
        rows.push(SeedRow {
            seed: *seed,
            suc: round2(100.0 * s),
            spl: round2(100.0 * sp),
            stl: round2(100.0 * st),
            psc: round2(100.0 * ps),
            hcoll: round2(100.0 * h),
            n_episodes: ms.len(),
        });
        suc.push(s);
        spl.push(sp);
        stl.push(st);
        psc.push(ps);
        hc.push(h);
    }
    MethodAggregate {
        suc: MetricStat::from_fractions(&suc),
        spl: MetricStat::from_fractions(&spl),
        stl: MetricStat::from_fractions(&stl),
        psc: MetricStat::from_fractions(&psc),
        hcoll: MetricStat::from_fractions(&hc),
        n_episodes: per_seed.iter().map(|(_, ms)| ms.len()).sum(),
        per_seed: rows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episode::{Outcome, StepEvent, StepEventKind, StepRecord, Trace};
    use crate::math::Vec2;
    use crate::params::Action;
    use crate::rewards::RewardBreakdown;
    use crate::scene::{AgentState, Pose};

    fn stub_episode(l: f64) -> Episode {
        Episode {
            scene_id: "m".into(),
            robot_start: Pose::new(Vec2::ZERO, 0.0),
            robot_goal: Vec2::new(l, 0.0),
            humans: vec![],
            seed: 0,
            max_steps: 500,
            geodesic_start: l,
        }
    }

    fn straight_trace(step_len: f64, n: usize, success: bool) -> Trace {
        let records = (0..n)
            .map(|i| StepRecord {
                step: i,
                robot: AgentState::at_rest(Vec2::new(step_len * (i + 1) as f64, 0.0), 0.0, 0.25),
                humans: vec![],
                action: Action::new(step_len / 0.25, 0.0),
                reward_terms: RewardBreakdown::zero(),
            })
            .collect();
        Trace {
            episode_id: "m-0".into(),
            records,
            events: vec![],
            outcome: if success {
                Outcome::Success
            } else {
                Outcome::Failure(crate::episode::FailureReason::Timeout)
            },
        }
    }

    #[test]
    fn formulas_match_hand_values() {
        let params = WorldParams::default();
        // l = 5, p = 10 → spl 0.5; t = 40 vs t* = 20 → stl 0.5.
        let ep = stub_episode(5.0);
        let tr = straight_trace(0.25, 40, true);
        let m = episode_metrics(&tr, &ep, &params).unwrap();
        assert!(m.success);
        assert!((m.path_length - 10.0).abs() < 1e-9);
        assert!((m.spl - 0.5).abs() < 1e-12);
        assert_eq!(m.optimal_steps, 20);
        assert!((m.stl - 0.5).abs() < 1e-12);
        assert_eq!(m.psc, 1.0); // no humans

        // Perfect run: p == l → spl 1, t == t* → stl 1.
        let tr = straight_trace(0.25, 20, true);
        let m = episode_metrics(&tr, &ep, &params).unwrap();
        assert_eq!(m.spl, 1.0);
        assert_eq!(m.stl, 1.0);
    }

    #[test]
    fn failure_zeroes_the_weighted_scores() {
        let params = WorldParams::default();
        let ep = stub_episode(5.0);
        let tr = straight_trace(0.25, 40, false);
        let m = episode_metrics(&tr, &ep, &params).unwrap();
        assert!(!m.success);
        assert_eq!(m.spl, 0.0);
        assert_eq!(m.stl, 0.0);
    }

    #[test]
    fn impossible_path_is_a_contract_violation() {
        let params = WorldParams::default();
        let ep = stub_episode(10.0);
        // 4 steps of 0.25 m: p = 1, far below l = 10 even with tolerance.
        let tr = straight_trace(0.25, 4, true);
        assert!(matches!(
            episode_metrics(&tr, &ep, &params),
            Err(MetricsError::PathBeatsGeodesic { .. })
        ));
    }

    #[test]
    fn psc_counts_steps_with_any_close_human() {
        let params = WorldParams::default();
        let ep = stub_episode(1.0);
        let mut tr = straight_trace(0.25, 4, true);
        // Steps at x = 0.25, 0.5, 0.75, 1.0; a human parked at x = 1.7
        // violates the bubble on the last two steps only.
        for r in &mut tr.records {
            r.humans = vec![AgentState::at_rest(Vec2::new(1.7, 0.0), 0.0, 0.3)];
        }
        let m = episode_metrics(&tr, &ep, &params).unwrap();
        assert!((m.psc - 0.5).abs() < 1e-12);
        assert!(!m.h_coll);

        tr.events.push(StepEvent { kind: StepEventKind::HumanCollision(0), step: 3 });
        let m = episode_metrics(&tr, &ep, &params).unwrap();
        assert!(m.h_coll);
    }

    #[test]
    fn aggregation_matches_hand_computed_spread() {
        let mk = |success: bool| EpisodeMetrics {
            success,
            spl: if success { 1.0 } else { 0.0 },
            stl: if success { 1.0 } else { 0.0 },
            psc: 1.0,
            h_coll: false,
            path_length: 5.0,
            geodesic: 5.0,
            steps: 20,
            optimal_steps: 20,
        };
        // Seed success rates 50%, 60%, 70% → 60.00 ± 8.16.
        let seed = |rate_pct: usize| -> Vec<EpisodeMetrics> {
            (0..10).map(|i| mk(i * 10 < rate_pct)).collect()
        };
        let agg = aggregate(&[(1, seed(50)), (2, seed(60)), (3, seed(70))]);
        assert_eq!(agg.suc.mean, 60.00);
        assert_eq!(agg.suc.std, 8.16);
        assert_eq!(agg.n_episodes, 30);
        assert_eq!(agg.per_seed[0].suc, 50.00);
        assert_eq!(agg.per_seed[2].suc, 70.00);
        assert_eq!(agg.psc.mean, 100.00);
        assert_eq!(agg.psc.std, 0.00);
    }

    #[test]
    fn weighted_scores_never_exceed_success() {
        let params = WorldParams::default();
        for (n, success) in [(20usize, true), (25, true), (80, true), (30, false)] {
            let ep = stub_episode(5.0);
            let tr = straight_trace(0.25, n, success);
            let m = episode_metrics(&tr, &ep, &params).unwrap();
            let s = m.success as u8 as f64;
            assert!(m.spl <= s && m.stl <= s);
            assert!((0.0..=1.0).contains(&m.spl));
            assert!((0.0..=1.0).contains(&m.stl));
            assert!((0.0..=1.0).contains(&m.psc));
        }
    }
}
