//! Property suites over the core invariants: similarity geometry, truncation,
//! predictor delivery order, timeout monotonicity, simulator log validity, and
//! log-format round-tripping.

use proptest::prelude::*;

use turnflow_core::engine::Policy;
use turnflow_core::logfmt::{parse_log, write_log};
use turnflow_core::model::{EngineConfig, TurnShiftEstimate, VapFrame};
use turnflow_core::pipeline::{similarity, truncate_turn};
use turnflow_core::predictors::scripted::{PredictorScript, ScriptedPredictor};
use turnflow_core::predictors::VapSource;
use turnflow_core::sim::run_dialogue;
use turnflow_core::sim::scenario::{
    BoundaryKind, LatencyModel, NoiseModel, RobotScript, Scenario, Segment,
};
use turnflow_core::validate::validate_event_stream;

fn word() -> impl Strategy<Value = String> {
    "[a-z]{1,8}"
}

fn sentence(max_words: usize) -> impl Strategy<Value = String> {
    prop::collection::vec(word(), 0..=max_words).prop_map(|w| w.join(" "))
}

fn small_scenario() -> impl Strategy<Value = (Scenario, Policy)> {
    (
        prop::collection::vec((2usize..=10, prop::bool::ANY), 1..=3),
        3u64..=10,
        0.0..0.5f64,
        0.0..0.2f64,
        any::<u64>(),
        prop::bool::ANY,
    )
        .prop_map(|(turns, gap_units, miss, sigma, seed, proposed)| {
            let mut segments = Vec::new();
            let mut t = 500u64;
            for (n_words, hold) in &turns {
                let words: Vec<String> = (0..*n_words).map(|i| format!("word{i}")).collect();
                let dur = *n_words as u64 * 300;
                segments.push(Segment {
                    t_start: t,
                    t_end: t + dur,
                    transcript: words.join(" "),
                    boundary: if *hold { BoundaryKind::Hold } else { BoundaryKind::Yield },
                });
                t += dur + if *hold { 800 } else { gap_units * 1000 };
            }
            // a trailing hold needs speech after it; force the last boundary
            if let Some(last) = segments.last_mut() {
                last.boundary = BoundaryKind::Yield;
            }
            let scn = Scenario {
                id: "prop".into(),
                segments,
                robot_scripts: vec![RobotScript::new("that sounds good to me")],
                seed,
                noise: NoiseModel {
                    yield_miss_rate: miss,
                    prob_sigma: sigma,
                    vad_jitter_ms: 0,
                    anticipation_lead_ms: 200,
                },
            };
            let policy =
                if proposed { Policy::Proposed } else { Policy::Baseline { silence_ms: 1000 } };
            (scn, policy)
        })
}

proptest! {
    #[test]
    fn similarity_is_bounded_and_symmetric(a in sentence(12), b in sentence(12)) {
        let s = similarity(&a, &b);
        prop_assert!((0.0..=1.0).contains(&s), "out of range: {s}");
        prop_assert_eq!(s.to_bits(), similarity(&b, &a).to_bits());
    }

    #[test]
    fn similarity_identity_is_one(a in sentence(12)) {
        // vacuous identity: two empty transcripts are the same context
        prop_assert_eq!(similarity(&a, &a), 1.0);
    }

    #[test]
    fn truncation_yields_word_prefix(words in prop::collection::vec(word(), 1..=15), cut in -1i64..15) {
        let planned = words.join(" ");
        let n = words.len() as i64;
        match truncate_turn(&planned, cut) {
            Ok(prefix) => {
                prop_assert!(cut < n);
                let expected = words[..(cut + 1) as usize].join(" ");
                prop_assert_eq!(prefix, expected);
            }
            Err(_) => prop_assert!(cut >= n),
        }
    }

    #[test]
    fn scripted_predictor_delivers_each_frame_once_in_order(
        n in 1usize..40,
        step in 1u64..5,
        poll_stride in 1u64..7,
    ) {
        let frames: Vec<VapFrame> = (0..n as u64)
            .map(|i| VapFrame {
                t: i * step * 100,
                p_now: 0.5,
                p_future: 0.5,
                vad_user: false,
                vad_robot: false,
            })
            .collect();
        let script = PredictorScript { frames: frames.clone(), estimates: vec![] };
        let mut pred = ScriptedPredictor::new(script).unwrap();
        let horizon = (n as u64) * step * 100 + 1000;
        let mut seen = Vec::new();
        let mut t = 0;
        while t <= horizon {
            while let Some(f) = pred.next_frame(t) {
                seen.push(f.t);
            }
            t += poll_stride * 100;
        }
        let expected: Vec<u64> = frames.iter().map(|f| f.t).collect();
        prop_assert_eq!(seen, expected);
        prop_assert_eq!(pred.frames_remaining(), 0);
    }

    #[test]
    fn timeout_is_monotone_nonincreasing_in_p_ts(a in 0.0..=1.0f64, b in 0.0..=1.0f64) {
        let cfg = EngineConfig::default();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(cfg.timeout_for(hi) <= cfg.timeout_for(lo));
    }

    #[test]
    fn scripted_estimates_are_exactly_once(n in 0usize..20) {
        let estimates: Vec<TurnShiftEstimate> = (0..n as u64)
            .map(|i| TurnShiftEstimate { t: i * 300, transcript: format!("w{i}"), p_ts: 0.5 })
            .collect();
        let mut pred = ScriptedPredictor::new(PredictorScript {
            frames: vec![],
            estimates: estimates.clone(),
        })
        .unwrap();
        let mut seen = Vec::new();
        for t in (0..=(n as u64 * 300 + 300)).step_by(100) {
            while let Some(e) = pred.poll_estimate(t) {
                seen.push(e.t);
            }
        }
        let expected: Vec<u64> = estimates.iter().map(|e| e.t).collect();
        prop_assert_eq!(seen, expected);
    }

    #[test]
    fn simulated_logs_are_structurally_valid((scn, policy) in small_scenario()) {
        let cfg = EngineConfig::default();
        let log = run_dialogue(&scn, &policy, &cfg, &LatencyModel::default())
            .map_err(|e| TestCaseError::fail(e))?;
        let violations = validate_event_stream(&log, cfg.frame_period_ms);
        prop_assert!(violations.is_empty(), "violations: {violations:?}");
    }

    #[test]
    fn logs_round_trip_through_the_wire_format((scn, policy) in small_scenario()) {
        let cfg = EngineConfig::default();
        let log = run_dialogue(&scn, &policy, &cfg, &LatencyModel::default())
            .map_err(|e| TestCaseError::fail(e))?;
        let text = write_log(&log);
        let parsed = parse_log(&text).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(parsed, log);
    }
}
