//! Synthetic predictor tracks: turns a scenario's scripted timeline into the
//! acoustic projection frames and incremental recognition events the engine
//! would see at runtime.

use super::scenario::{BoundaryKind, LatencyModel, Ms, Scenario};
use crate::model::{InputEvent, TurnShiftEstimate, VapFrame};
use crate::predictors::heuristic::heuristic_p_ts;
use rand::Rng;

const P_USER_FAVOR: f64 = 0.85;
const P_ROBOT_FAVOR: f64 = 0.15;
const P_NEUTRAL: f64 = 0.5;

/// One standard-normal draw (Box-Muller), deterministic given the rng.
fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(1e-12..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn jittered<R: Rng>(base: f64, sigma: f64, rng: &mut R) -> f64 {
    if sigma == 0.0 {
        return base;
    }
    (base + sigma * gaussian(rng)).clamp(0.0, 1.0)
}

/// Synthesizes the acoustic projection track on the frame grid up to
/// `horizon`. Projections favor the user during speech and across planned
/// hold pauses; for each yield boundary that the (simulated) model does not
/// miss, they swing to favor the robot from `anticipation_lead_ms` before
/// speech end until the next scripted segment.
pub fn synth_vap_track<R: Rng>(
    scn: &Scenario,
    frame_period_ms: Ms,
    horizon: Ms,
    rng: &mut R,
) -> Vec<VapFrame> {
    let noise = &scn.noise;
    // draw per-boundary decisions up-front so frame count doesn't shift rng use
    let misses: Vec<bool> = scn
        .segments
        .iter()
        .map(|s| s.boundary == BoundaryKind::Yield && rng.gen_bool(noise.yield_miss_rate))
        .collect();
    let edges: Vec<(i64, i64)> = scn
        .segments
        .iter()
        .map(|s| {
            let j = noise.vad_jitter_ms as i64;
            let (a, b) = if j == 0 {
                (0, 0)
            } else {
                (rng.gen_range(-j..=j), rng.gen_range(-j..=j))
            };
            (s.t_start as i64 + a, s.t_end as i64 + b)
        })
        .collect();

    let mut frames = Vec::with_capacity((horizon / frame_period_ms + 1) as usize);
    let mut t = 0;
    while t <= horizon {
        let ti = t as i64;
        let vad_user = edges.iter().any(|(a, b)| ti >= *a && ti < *b);
        // base probability by scripted region
        let mut base = if scn.segments.first().map(|s| t < s.t_start).unwrap_or(true) {
            P_NEUTRAL
        } else {
            P_USER_FAVOR
        };
        for (i, s) in scn.segments.iter().enumerate() {
            if s.boundary != BoundaryKind::Yield || misses[i] {
                continue;
            }
            let from = s.t_end.saturating_sub(noise.anticipation_lead_ms);
            let until = scn.segments.get(i + 1).map(|n| n.t_start).unwrap_or(u64::MAX);
            if t >= from && t < until {
                base = P_ROBOT_FAVOR;
            }
        }
        frames.push(VapFrame {
            t,
            p_now: jittered(base, noise.prob_sigma, rng),
            p_future: jittered(base, noise.prob_sigma, rng),
            vad_user,
            vad_robot: false, // patched by the event loop
        });
        t += frame_period_ms;
    }
    frames
}

/// Synthesizes incremental recognition events: partial hypotheses on a fixed
/// period (words spread uniformly over the segment), a final shortly after
/// each segment, and a turn-shift estimate paired with every partial. The
/// estimate transcript accumulates across Hold boundaries so mid-turn pauses
/// keep their context.
pub fn synth_asr_track(scn: &Scenario, lat: &LatencyModel) -> Vec<InputEvent> {
    let mut out = Vec::new();
    let mut turn_prefix = String::new();
    for seg in &scn.segments {
        let words: Vec<&str> = seg.transcript.split_whitespace().collect();
        if words.is_empty() {
            // silent placeholder segment: only an empty estimate at the end
            out.push(InputEvent::TurnShiftEstimate(TurnShiftEstimate {
                t: seg.t_end,
                transcript: String::new(),
                p_ts: 0.0,
            }));
            continue;
        }
        let dur = seg.t_end - seg.t_start;
        let mut t = seg.t_start + lat.asr_partial_period_ms;
        let mut emitted_full = false;
        while t <= seg.t_end {
            // words heard by time t, spread uniformly over the segment
            let n = (((t - seg.t_start) as u128 * words.len() as u128) / dur as u128) as usize;
            let n = n.clamp(1, words.len());
            let partial = words[..n].join(" ");
            let acc = join_prefix(&turn_prefix, &partial);
            out.push(InputEvent::AsrPartial { t, transcript: partial });
            out.push(InputEvent::TurnShiftEstimate(TurnShiftEstimate {
                t,
                p_ts: heuristic_p_ts(&acc),
                transcript: acc,
            }));
            if n == words.len() && t == seg.t_end {
                emitted_full = true;
            }
            t += lat.asr_partial_period_ms;
        }
        if !emitted_full {
            let acc = join_prefix(&turn_prefix, &seg.transcript);
            out.push(InputEvent::AsrPartial { t: seg.t_end, transcript: seg.transcript.clone() });
            out.push(InputEvent::TurnShiftEstimate(TurnShiftEstimate {
                t: seg.t_end,
                p_ts: heuristic_p_ts(&acc),
                transcript: acc,
            }));
        }
        out.push(InputEvent::AsrFinal {
            t: seg.t_end + lat.asr_final_lag_ms,
            transcript: seg.transcript.clone(),
        });
        match seg.boundary {
            BoundaryKind::Hold => turn_prefix = join_prefix(&turn_prefix, &seg.transcript),
            BoundaryKind::Yield => turn_prefix.clear(),
        }
    }
    out
}

fn join_prefix(prefix: &str, tail: &str) -> String {
    if prefix.is_empty() {
        tail.to_string()
    } else {
        format!("{prefix} {tail}")
    }
}
