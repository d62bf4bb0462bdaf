//! Paired method comparison: every method replays the exact same episode
//! list under the exact same per-episode crowd seeds, per benchmark seed.
//! Reports carry the config hash and a content hash of the episode set so
//! numbers can never be confused across inputs.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Mutex;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::episode::{run_episode, Controller, Episode};
use crate::metrics::{aggregate, episode_metrics, EpisodeMetrics, MethodAggregate, MetricsError};
use crate::params::WorldParams;
use crate::rewards::RewardConfig;
use crate::rng::indexed_stream;
use crate::scene::Scene;

/// A named controller factory; each worker builds its own instance.
pub struct MethodSpec {
    pub name: String,
    pub make: Box<dyn Fn() -> Box<dyn Controller> + Send + Sync>,
}

impl MethodSpec {
    pub fn new<F>(name: &str, make: F) -> MethodSpec
    where
        F: Fn() -> Box<dyn Controller> + Send + Sync + 'static,
    {
        MethodSpec { name: name.to_string(), make: Box::new(make) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    /// False when the controller panicked on some episode; the aggregate
    /// then covers only what finished.
    pub complete: bool,
    pub aggregate: MethodAggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config_hash: String,
    pub episode_set_hash: String,
    pub seeds: Vec<u64>,
    pub methods: Vec<MethodReport>,
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("episode {episode_id} references unknown scene {scene_id}")]
    UnknownScene { episode_id: String, scene_id: String },
    #[error("metrics contract violated on {episode_id}: {source}")]
    BadTrace {
        episode_id: String,
        #[source]
        source: MetricsError,
    },
    #[error("no methods given")]
    NoMethods,
    #[error("no seeds given")]
    NoSeeds,
}

/// Content hash of an episode list (hex SHA-256 of its canonical JSON).
pub fn episode_set_hash(episodes: &[Episode]) -> String {
    let json = serde_json::to_string(episodes).expect("episodes always serialize");
    let mut h = Sha256::new();
    h.update(json.as_bytes());
    format!("{:x}", h.finalize())
}

/// Crowd seed for episode `index` under benchmark seed `seed` — a pure
/// function, so methods stay paired.
pub fn reseed(seed: u64, index: usize, base: u64) -> u64 {
    indexed_stream(seed, "bench-crowd-seed", index as u64).gen::<u64>() ^ base
}

fn scene_for<'a>(scenes: &'a [Scene], episode: &Episode) -> Option<&'a Scene> {
    scenes.iter().find(|s| s.name == episode.scene_id)
}

/// Run every method over `episodes` × `seeds`. Episode evaluation fans
/// out over `jobs` threads; results are reduced in episode order so the
/// report bytes never depend on scheduling.
pub fn run_benchmark(
    methods: &[MethodSpec],
    scenes: &[Scene],
    episodes: &[Episode],
    seeds: &[u64],
    params: &WorldParams,
    reward_cfg: &RewardConfig,
    config_hash: &str,
    jobs: usize,
) -> Result<BenchReport, BenchError> {
    if methods.is_empty() {
        return Err(BenchError::NoMethods);
    }
    if seeds.is_empty() {
        return Err(BenchError::NoSeeds);
    }
    for ep in episodes {
        if scene_for(scenes, ep).is_none() {
            return Err(BenchError::UnknownScene {
                episode_id: ep.id(),
                scene_id: ep.scene_id.clone(),
            });
        }
    }
    let jobs = jobs.max(1);

    let mut reports = Vec::with_capacity(methods.len());
    for method in methods {
        let mut complete = true;
        let mut per_seed: Vec<(u64, Vec<EpisodeMetrics>)> = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let reseeded: Vec<Episode> = episodes
                .iter()
                .enumerate()
                .map(|(i, ep)| Episode { seed: reseed(seed, i, ep.seed), ..ep.clone() })
                .collect();
            let results: Vec<Mutex<Option<Result<EpisodeMetrics, MetricsError>>>> =
                (0..reseeded.len()).map(|_| Mutex::new(None)).collect();
            let panicked = Mutex::new(false);

            std::thread::scope(|scope| {
                for worker in 0..jobs {
                    let reseeded = &reseeded;
                    let results = &results;
                    let panicked = &panicked;
                    scope.spawn(move || {
                        for (i, ep) in reseeded.iter().enumerate() {
                            if i % jobs != worker {
                                continue;
                            }
                            let scene =
                                scene_for(scenes, ep).expect("scenes were validated upfront");
                            let run = catch_unwind(AssertUnwindSafe(|| {
                                let mut ctrl = (method.make)();
                                let trace = run_episode(
                                    scene,
                                    ep,
                                    ctrl.as_mut(),
                                    reward_cfg,
                                    params,
                                    false,
                                );
                                episode_metrics(&trace, ep, params)
                            }));
                            match run {
                                Ok(metrics) => *results[i].lock().unwrap() = Some(metrics),
                                Err(_) => *panicked.lock().unwrap() = true,
                            }
                        }
                    });
                }
            });

            if *panicked.lock().unwrap() {
                complete = false;
            }
            let mut ms = Vec::with_capacity(reseeded.len());
            for (i, slot) in results.into_iter().enumerate() {
                match slot.into_inner().unwrap() {
                    Some(Ok(m)) => ms.push(m),
                    Some(Err(e)) => {
                        return Err(BenchError::BadTrace {
                            episode_id: reseeded[i].id(),
                            source: e,
                        })
                    }
                    None => {} // panicked episode; method already marked
                }
            }
            per_seed.push((seed, ms));
        }
        reports.push(MethodReport {
            method: method.name.clone(),
            complete,
            aggregate: aggregate(&per_seed),
        });
    }

    Ok(BenchReport {
        config_hash: config_hash.to_string(),
        episode_set_hash: episode_set_hash(episodes),
        seeds: seeds.to_vec(),
        methods: reports,
    })
}

/// CSV rows: one line per (method, seed), percentages at 2 decimals.
pub fn report_csv(report: &BenchReport) -> String {
    let mut out = String::from("method,seed,suc,spl,stl,psc,hcoll,n_episodes\n");
    for m in &report.methods {
        for row in &m.aggregate.per_seed {
            out.push_str(&format!(
                "{},{},{:.2},{:.2},{:.2},{:.2},{:.2},{}\n",
                m.method, row.seed, row.suc, row.spl, row.stl, row.psc, row.hcoll, row.n_episodes
            ));
        }
    }
    out
}

/// JSON mirror of the full report.
pub fn report_json(report: &BenchReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("reports always serialize");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::generate_episode;
    use crate::planners::AstarController;
    use crate::rng::indexed_stream;

    fn tiny_suite() -> (Vec<Scene>, Vec<Episode>) {
        let params = WorldParams::default();
        let scene = Scene::empty_room("bench-room", 10.0, 10.0, params.r_grid);
        let mut eps = Vec::new();
        for i in 0..4u64 {
            let mut rng = indexed_stream(77, "bench-test", i);
            eps.push(generate_episode(&scene, 900 + i, &mut rng, &params).unwrap());
        }
        (vec![scene], eps)
    }

    #[test]
    fn reports_are_reproducible_and_in_range() {
        let (scenes, episodes) = tiny_suite();
        let params = WorldParams::default();
        let rc = RewardConfig::default();
        let methods = || {
            vec![MethodSpec::new("astar", || {
                Box::new(AstarController::default()) as Box<dyn Controller>
            })]
        };
        let run = |jobs| {
            run_benchmark(&methods(), &scenes, &episodes, &[1, 2], &params, &rc, "cfg", jobs)
                .unwrap()
        };
        let a = run(1);
        let b = run(1);
        assert_eq!(report_json(&a), report_json(&b));
        assert_eq!(report_csv(&a), report_csv(&b));
        // Thread count must not leak into the bytes.
        let c = run(3);
        assert_eq!(report_json(&a), report_json(&c));

        for m in &a.methods {
            assert!(m.complete);
            for s in [&m.aggregate.suc, &m.aggregate.spl, &m.aggregate.psc, &m.aggregate.hcoll] {
                assert!((0.0..=100.0).contains(&s.mean));
                assert!(s.std >= 0.0);
            }
        }
        let csv = report_csv(&a);
        assert!(csv.starts_with("method,seed,suc,"));
        assert_eq!(csv.lines().count(), 1 + 2);
    }

    #[test]
    fn crashing_method_is_isolated() {
        struct Bomb;
        impl Controller for Bomb {
            fn act(
                &mut self,
                _: &crate::episode::ControlView,
            ) -> Result<crate::params::Action, crate::episode::ControllerFault> {
                panic!("boom");
            }
        }
        let (scenes, episodes) = tiny_suite();
        let params = WorldParams::default();
        let rc = RewardConfig::default();
        let methods = vec![
            MethodSpec::new("bomb", || Box::new(Bomb) as Box<dyn Controller>),
            MethodSpec::new("astar", || {
                Box::new(AstarController::default()) as Box<dyn Controller>
            }),
        ];
        let report =
            run_benchmark(&methods, &scenes, &episodes, &[5], &params, &rc, "cfg", 1).unwrap();
        assert!(!report.methods[0].complete);
        assert!(report.methods[1].complete);
        assert!(report.methods[1].aggregate.suc.mean > 0.0);
    }

    #[test]
    fn episode_hash_tracks_content() {
        let (_, episodes) = tiny_suite();
        let h1 = episode_set_hash(&episodes);
        let mut altered = episodes.clone();
        altered[0].seed ^= 1;
        assert_ne!(h1, episode_set_hash(&altered));
        assert_eq!(h1, episode_set_hash(&episodes));
        assert_eq!(h1.len(), 64);
    }
}
