//! Trace files: JSON-lines with a header object first, one step record
//! per line after it, and a closing line carrying the outcome and event
//! stream. Step floats are quantized to 1e-4 before writing so identical
//! runs produce identical bytes; the header keeps full precision because
//! replay re-simulates from it.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::episode::{Episode, Outcome, StepEvent, StepEventKind, StepRecord, Trace};
use crate::scene::SceneFile;

pub const TRACE_VERSION: u32 = 1;

/// First line of a trace: everything needed to re-run the episode.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceHeader {
    pub version: u32,
    /// Hash of the run configuration that produced the trace; replay
    /// refuses the file when the live config disagrees.
    pub config_hash: String,
    /// Name the controller factory resolves (`astar`, `orca`, ...).
    pub controller: String,
    pub scene: SceneFile,
    pub episode: Episode,
}

/// Last line of a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceFooter {
    pub outcome: Outcome,
    pub events: Vec<StepEvent>,
}

/// A parsed trace file; step floats carry the file's 1e-4 quantization.
#[derive(Debug, Clone)]
pub struct TraceFile {
    pub header: TraceHeader,
    pub records: Vec<StepRecord>,
    pub footer: TraceFooter,
}

impl TraceFile {
    pub fn into_trace(self) -> Trace {
        Trace {
            episode_id: self.header.episode.id(),
            records: self.records,
            events: self.footer.events,
            outcome: self.footer.outcome,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("trace needs a header line and a footer line")]
    Truncated,
    #[error("line 1 (header): {0}")]
    Header(serde_json::Error),
    #[error("line {line} (step record): {source}")]
    Step {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line} (footer): {source}")]
    Footer {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("unsupported trace version {0}")]
    Version(u32),
    #[error("step records out of order: line {line} carries step {got}, expected {want}")]
    StepOrder { line: usize, got: usize, want: usize },
    #[error("outcome says success but no goal event exists (or vice versa)")]
    OutcomeEventMismatch,
}

fn quantize(value: &mut Value) {
    match value {
        Value::Number(n) => {
            // Only true floats are rounded; integer counters keep their
            // type. The magnitude guard keeps rounding idempotent (so a
            // re-rendered file is byte-identical): above it, scaling by
            // 1e4 would lose integer precision.
            if n.is_f64() {
                let f = n.as_f64().unwrap();
                if f.abs() < 1e9 {
                    let q = (f * 1e4).round() / 1e4 + 0.0;
                    if let Some(rounded) = serde_json::Number::from_f64(q) {
                        *n = rounded;
                    }
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(quantize),
        Value::Object(map) => map.values_mut().for_each(quantize),
        _ => {}
    }
}

/// Round every float in a record the way the file format does.
pub fn quantize_record(record: &StepRecord) -> StepRecord {
    let mut v = serde_json::to_value(record).expect("records always serialize");
    quantize(&mut v);
    serde_json::from_value(v).expect("quantized record still matches the schema")
}

/// Render a full trace file. Output is byte-deterministic in its inputs.
pub fn trace_to_jsonl(header: &TraceHeader, trace: &Trace) -> String {
    let mut out = String::new();
    out.push_str(&serde_json::to_string(header).expect("header always serializes"));
    out.push('\n');
    for record in &trace.records {
        let mut v = serde_json::to_value(record).expect("records always serialize");
        quantize(&mut v);
        out.push_str(&v.to_string());
        out.push('\n');
    }
    let footer = TraceFooter { outcome: trace.outcome, events: trace.events.clone() };
    out.push_str(&serde_json::to_string(&footer).expect("footer always serializes"));
    out.push('\n');
    out
}

/// Parse and structurally validate a trace file.
pub fn parse_trace(text: &str) -> Result<TraceFile, TraceError> {
    let lines: Vec<&str> = text.lines().collect();
    if lines.len() < 2 {
        return Err(TraceError::Truncated);
    }
    let header: TraceHeader = serde_json::from_str(lines[0]).map_err(TraceError::Header)?;
    if header.version != TRACE_VERSION {
        return Err(TraceError::Version(header.version));
    }
    let mut records = Vec::with_capacity(lines.len() - 2);
    for (idx, line) in lines[1..lines.len() - 1].iter().enumerate() {
        let record: StepRecord = serde_json::from_str(line)
            .map_err(|source| TraceError::Step { line: idx + 2, source })?;
        if record.step != idx {
            return Err(TraceError::StepOrder { line: idx + 2, got: record.step, want: idx });
        }
        records.push(record);
    }
    let footer_line = lines.len();
    let footer: TraceFooter = serde_json::from_str(lines[footer_line - 1])
        .map_err(|source| TraceError::Footer { line: footer_line, source })?;

    let goal_event =
        footer.events.iter().any(|e| e.kind == StepEventKind::GoalReached);
    if goal_event != (footer.outcome == Outcome::Success) {
        return Err(TraceError::OutcomeEventMismatch);
    }
    Ok(TraceFile { header, records, footer })
}

/// Per-step CSV for external plotting.
pub fn trace_csv(records: &[StepRecord]) -> String {
    let mut out = String::from(
        "step,robot_x,robot_y,robot_heading,linear,angular,\
         reward_pointnav,reward_coll,reward_prox,reward_traj,reward_total,min_human_dist\n",
    );
    for r in records {
        let min_dist = r
            .humans
            .iter()
            .map(|h| h.position.distance(r.robot.position))
            .fold(f64::INFINITY, f64::min);
        let min_dist = if min_dist.is_finite() { format!("{min_dist:.4}") } else { String::new() };
        out.push_str(&format!(
            "{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{}\n",
            r.step,
            r.robot.position.x,
            r.robot.position.y,
            r.robot.heading,
            r.action.linear,
            r.action.angular,
            r.reward_terms.pointnav,
            r.reward_terms.coll,
            r.reward_terms.prox,
            r.reward_terms.traj,
            r.reward_terms.total,
            min_dist,
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episode::{run_episode, Controller, ControllerFault, ControlView};
    use crate::gen::{generate_episode, generate_scene};
    use crate::params::{Action, WorldParams};
    use crate::rewards::RewardConfig;
    use crate::rng::stream;
    use crate::scene::Scene;

    struct Bee;
    impl Controller for Bee {
        fn begin(&mut self, _e: &Episode, _s: &Scene) {}
        fn act(&mut self, view: &ControlView) -> Result<Action, ControllerFault> {
            let to_goal = view.goal - view.robot.position;
            let turn = crate::math::wrap_angle(to_goal.angle() - view.robot.heading);
            Ok(Action::new(0.8, turn.clamp(-1.0, 1.0)))
        }
    }

    fn sample() -> (Scene, Episode, Trace, WorldParams) {
        let params = WorldParams::default();
        let mut rng = stream(9, "traceio-test");
        let scene = generate_scene("trace-room", 9, &mut rng, params.r_grid).unwrap();
        let episode = generate_episode(&scene, 42, &mut rng, &params).unwrap();
        let trace =
            run_episode(&scene, &episode, &mut Bee, &RewardConfig::default(), &params, true);
        (scene, episode, trace, params)
    }

    fn header_for(scene: &Scene, episode: &Episode) -> TraceHeader {
        TraceHeader {
            version: TRACE_VERSION,
            config_hash: "cafe".into(),
            controller: "bee".into(),
            scene: scene.to_file(),
            episode: episode.clone(),
        }
    }

    #[test]
    fn jsonl_layout_and_round_trip() {
        let (scene, episode, trace, _) = sample();
        let text = trace_to_jsonl(&header_for(&scene, &episode), &trace);

        let n_lines = text.lines().count();
        assert_eq!(n_lines, trace.records.len() + 2);
        assert!(text.ends_with('\n'));

        let parsed = parse_trace(&text).unwrap();
        assert_eq!(parsed.header.episode, episode);
        assert_eq!(parsed.footer.outcome, trace.outcome);
        assert_eq!(parsed.footer.events, trace.events);
        assert_eq!(parsed.records.len(), trace.records.len());

        // Bytes are a fixed point: parse then re-render reproduces them.
        let again = trace_to_jsonl(&parsed.header, &parsed.clone().into_trace());
        assert_eq!(again, text);
    }

    #[test]
    fn step_floats_are_quantized_to_1e4() {
        let (scene, episode, trace, _) = sample();
        let text = trace_to_jsonl(&header_for(&scene, &episode), &trace);
        let parsed = parse_trace(&text).unwrap();
        for (raw, stored) in trace.records.iter().zip(&parsed.records) {
            assert!((raw.robot.position.x - stored.robot.position.x).abs() <= 5e-5 + 1e-12);
            assert!((raw.robot.position.y - stored.robot.position.y).abs() <= 5e-5 + 1e-12);
            assert_eq!(stored, &quantize_record(raw));
        }
        // Quantization is idempotent.
        let r = &parsed.records[0];
        assert_eq!(r, &quantize_record(r));
    }

    #[test]
    fn header_keeps_full_precision() {
        let (scene, episode, trace, _) = sample();
        let text = trace_to_jsonl(&header_for(&scene, &episode), &trace);
        let parsed = parse_trace(&text).unwrap();
        assert_eq!(parsed.header.episode.robot_start, episode.robot_start);
        assert_eq!(parsed.header.episode.geodesic_start, episode.geodesic_start);
    }

    #[test]
    fn malformed_inputs_are_rejected_not_panicked() {
        assert!(matches!(parse_trace(""), Err(TraceError::Truncated)));
        assert!(matches!(parse_trace("{}\n"), Err(TraceError::Truncated)));
        assert!(matches!(parse_trace("nope\n{}\n"), Err(TraceError::Header(_))));

        let (scene, episode, trace, _) = sample();
        let good = trace_to_jsonl(&header_for(&scene, &episode), &trace);
        let lines: Vec<&str> = good.lines().collect();

        // Bad version.
        let mut h = header_for(&scene, &episode);
        h.version = 7;
        let bad = trace_to_jsonl(&h, &trace);
        assert!(matches!(parse_trace(&bad), Err(TraceError::Version(7))));

        // Swap two step lines: ordering check fires.
        if lines.len() >= 5 {
            let mut swapped = lines.clone();
            swapped.swap(1, 2);
            let text = swapped.join("\n") + "\n";
            assert!(matches!(parse_trace(&text), Err(TraceError::StepOrder { .. })));
        }

        // Claiming success without a goal event is inconsistent.
        let mut footer: TraceFooter = serde_json::from_str(*lines.last().unwrap()).unwrap();
        footer.events.retain(|e| e.kind != StepEventKind::GoalReached);
        if trace.outcome == Outcome::Success {
            let mut doctored = lines[..lines.len() - 1].join("\n") + "\n";
            doctored.push_str(&serde_json::to_string(&footer).unwrap());
            doctored.push('\n');
            assert!(matches!(parse_trace(&doctored), Err(TraceError::OutcomeEventMismatch)));
        }
    }

    #[test]
    fn csv_has_one_row_per_step() {
        let (scene, episode, trace, _) = sample();
        let _ = scene;
        let _ = episode;
        let csv = trace_csv(&trace.records);
        assert_eq!(csv.lines().count(), trace.records.len() + 1);
        assert!(csv.starts_with("step,robot_x"));
        let second: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(second.len(), 12);
        assert_eq!(second[0], "0");
    }
}
