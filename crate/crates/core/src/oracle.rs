//! Straight-line reference interpreter for the turn-taking rules.
//!
//! Implements the same decision semantics as [`crate::engine::Engine`]
//! (documented there) but derives every rule condition by re-scanning the
//! retained event prefix and its own past decisions: favor runs, silence
//! durations, overlap runs, preparation state and latches are recomputed
//! from scratch at every event instead of being carried as incremental
//! clocks. Used by replay verification and the equivalence test suite; it
//! must never share decision logic with the engine.

use crate::engine::Policy;
use crate::model::{EngineConfig, EngineEvent, InputEvent, TimestampMs, YieldPolarity};
use crate::pipeline::similarity;

#[derive(Debug, Clone)]
struct SeenFrame {
    input_idx: usize,
    t: TimestampMs,
    p_now: f64,
    p_future: f64,
    vad_user: bool,
}

#[derive(Debug, Clone)]
struct RobotCtx {
    utterance_id: u32,
    take_input_idx: usize,
    take_t: TimestampMs,
    word_count: usize,
}

/// Runs the reference interpreter over a full input sequence, returning the
/// decision list per input event. Input sequences are assumed valid (as
/// produced by the simulator); invalid word ordering is reported as an error.
pub fn reference_decisions(
    inputs: &[InputEvent],
    cfg: &EngineConfig,
    policy: &Policy,
) -> Result<Vec<Vec<EngineEvent>>, String> {
    let mut frames: Vec<SeenFrame> = Vec::new();
    // (input_idx, decision)
    let mut decisions: Vec<(usize, EngineEvent)> = Vec::new();
    // (input_idx, t, handle_id, response_text) for processed PreparedReady
    let mut readies: Vec<(usize, u32, String)> = Vec::new();
    // (input_idx, t, transcript, is_final, accepted)
    let mut asr: Vec<(usize, TimestampMs, String, bool, bool)> = Vec::new();
    // (input_idx, p_ts)
    let mut estimates: Vec<(usize, f64)> = Vec::new();
    // (input_idx, index, t_start, t_end) for words of the active utterance
    let mut words: Vec<(usize, u32, TimestampMs, TimestampMs)> = Vec::new();

    let mut robot: Option<RobotCtx> = None;
    let mut epoch: TimestampMs = 0; // time the floor last returned to the user
    let mut epoch_user_vad = false; // was the user audible at that moment
    let mut out: Vec<Vec<EngineEvent>> = Vec::with_capacity(inputs.len());
    let mut last_t: TimestampMs = 0;

    let baseline_silence = match policy {
        Policy::Baseline { silence_ms } => Some(*silence_ms),
        Policy::Proposed => None,
    };

    for (idx, input) in inputs.iter().enumerate() {
        let t = input.t();
        if t < last_t {
            return Err(format!("input {idx}: out-of-order timestamp {t} after {last_t}"));
        }
        last_t = t;
        let mut dec: Vec<EngineEvent> = Vec::new();

        // -- derived views over the prefix ---------------------------------

        let last_take = decisions
            .iter()
            .rev()
            .find(|(_, d)| matches!(d, EngineEvent::TakeTurn { .. }))
            .map(|(i, _)| *i);
        let since_take = |i: usize| last_take.map(|lt| i > lt).unwrap_or(true);

        let listening_at = |decs: &[(usize, EngineEvent)]| -> bool {
            for (_, d) in decs.iter().rev() {
                if let EngineEvent::ListeningLight { on, .. } = d {
                    return !on;
                }
            }
            true
        };
        let user_vad_now = frames.last().map(|f| f.vad_user).unwrap_or(false);

        // user spoke since the floor returned: audible at the epoch or any
        // onset frame after it
        let user_spoke = epoch_user_vad
            || frames.iter().rev().take_while(|f| f.t >= epoch).any(|f| f.vad_user);

        // silence start: the offset frame ending the most recent activity
        let silence_since: Option<TimestampMs> = if user_vad_now {
            None
        } else {
            let mut found = None;
            for w in (0..frames.len()).rev() {
                let f = &frames[w];
                if f.t < epoch {
                    break;
                }
                if !f.vad_user {
                    let prev_active = if w == 0 { false } else { frames[w - 1].vad_user };
                    if prev_active {
                        found = Some(f.t);
                        break;
                    }
                } else {
                    break; // most recent frames must all be silent
                }
            }
            found
        };

        let _latest_p_ts = estimates
            .iter()
            .rev()
            .find(|(i, _)| since_take(*i))
            .map(|(_, p)| *p)
            .unwrap_or(0.0);

        let shift_latched = decisions
            .iter()
            .rev()
            .any(|(i, d)| since_take(*i) && matches!(d, EngineEvent::TurnShiftAllowed { .. }));

        // last preparation request for the current user context
        let current_request: Option<(usize, u32, String)> = decisions
            .iter()
            .rev()
            .find_map(|(i, d)| match d {
                EngineEvent::PrepareRequest { handle_id, context, .. } if since_take(*i) => {
                    Some((*i, *handle_id, context.clone()))
                }
                _ => None,
            });
        let prepared: Option<String> = current_request.as_ref().and_then(|(req_idx, id, _)| {
            readies.iter().rev().find(|(i, h, _)| *i > *req_idx && h == id).map(|(_, _, s)| s.clone())
        });

        let transcript_now = || -> String {
            let mut committed = String::new();
            let mut partial: Option<&str> = None;
            for (i, _, text, is_final, accepted) in &asr {
                if !since_take(*i) || !accepted {
                    continue;
                }
                if *is_final {
                    if committed.is_empty() {
                        committed = text.clone();
                    } else {
                        committed.push(' ');
                        committed.push_str(text);
                    }
                    partial = None;
                } else {
                    partial = Some(text);
                }
            }
            match partial {
                None => committed,
                Some(p) if committed.is_empty() => p.to_string(),
                Some(p) => format!("{committed} {p}"),
            }
        };

        // -- robot completion ----------------------------------------------

        if let Some(ctx) = &robot {
            let stop = decisions.iter().rev().find_map(|(i, d)| match d {
                EngineEvent::StopAtWordBoundary { last_spoken_index, .. } if *i > ctx.take_input_idx => {
                    Some((*i, *last_spoken_index))
                }
                _ => None,
            });
            let cur_word = words.last().cloned();
            let end: Option<TimestampMs> = if let Some((stop_idx, _)) = stop {
                let stop_t = inputs[stop_idx].t();
                match cur_word {
                    Some((_, _, _, w_end)) if stop_t < w_end => Some(w_end),
                    _ => Some(stop_t),
                }
            } else if ctx.word_count == 0 {
                Some(ctx.take_t)
            } else {
                cur_word
                    .filter(|(_, i, _, _)| *i as usize + 1 == ctx.word_count)
                    .map(|(_, _, _, w_end)| w_end)
            };
            if let Some(end) = end {
                if t >= end {
                    let averted = gaze_averted(&decisions, ctx.take_input_idx);
                    if averted {
                        dec.push(EngineEvent::GazeReturn { t });
                    }
                    if baseline_silence.is_some() {
                        dec.push(EngineEvent::ListeningLight { t, on: false });
                    }
                    epoch = end;
                    epoch_user_vad = user_vad_now;
                    robot = None;
                    words.clear();
                }
            }
        }

        // the light may have toggled off during the completion block above,
        // so fold this event's own decisions in first
        let listening = baseline_silence.is_none()
            || dec
                .iter()
                .rev()
                .find_map(|d| match d {
                    EngineEvent::ListeningLight { on, .. } => Some(!on),
                    _ => None,
                })
                .unwrap_or_else(|| listening_at(&decisions));

        let robot_active = robot.is_some();
        let user_spoke = if robot.is_none() && !user_spoke {
            epoch_user_vad || frames.iter().rev().take_while(|f| f.t >= epoch).any(|f| f.vad_user)
        } else {
            user_spoke
        };
        let _ = user_spoke;

        // -- per-event rules ------------------------------------------------

        match input {
            InputEvent::VapFrame(f) => {
                let prev_vad = frames.last().map(|x| x.vad_user).unwrap_or(false);
                frames.push(SeenFrame {
                    input_idx: idx,
                    t: f.t,
                    p_now: f.p_now,
                    p_future: f.p_future,
                    vad_user: f.vad_user,
                });
                if robot_active {
                    frame_during_robot(
                        cfg,
                        policy,
                        f,
                        idx,
                        prev_vad,
                        robot.as_ref().unwrap(),
                        &frames,
                        &words,
                        &mut decisions,
                        &mut dec,
                        inputs,
                    );
                } else if baseline_silence.is_none() {
                    // proposed, user floor
                    let epoch_user = if f.t >= epoch {
                        epoch_user_vad
                            || frames.iter().rev().take_while(|x| x.t >= epoch).any(|x| x.vad_user)
                    } else {
                        false
                    };
                    // backchannel edge
                    let bc_now = f.p_now < cfg.favor_threshold && f.p_future > cfg.favor_threshold;
                    let bc_prev = frames
                        .iter()
                        .rev()
                        .nth(1)
                        .filter(|x| x.t >= epoch)
                        .map(|x| x.p_now < cfg.favor_threshold && x.p_future > cfg.favor_threshold)
                        .unwrap_or(false);
                    if bc_now && !bc_prev {
                        dec.push(EngineEvent::BackchannelOpportunity { t: f.t });
                    }
                    // yield + take-turn (recompute views including this frame)
                    let st = recompute_yield(cfg, &frames, epoch, epoch_user, f.t, &estimates, last_take);
                    if st && !shift_latched {
                        dec.push(EngineEvent::TurnShiftAllowed { t: f.t });
                    }
                    if st || shift_latched {
                        try_take_turn(
                            cfg,
                            f.t,
                            &prepared,
                            f.vad_user,
                            &mut robot,
                            &mut words,
                            idx,
                            &decisions,
                            &mut dec,
                            &transcript_now,
                        );
                    }
                } else if let Some(silence_ms) = baseline_silence {
                    if listening {
                        // recompute silence including this frame
                        let s = if f.vad_user {
                            None
                        } else if prev_vad {
                            Some(f.t)
                        } else {
                            silence_since
                        };
                        let spoke = epoch_user_vad
                            || frames.iter().rev().take_while(|x| x.t >= epoch).any(|x| x.vad_user);
                        if spoke {
                            if let Some(s) = s {
                                if f.t.saturating_sub(s) >= silence_ms {
                                    dec.push(EngineEvent::ListeningLight { t: f.t, on: true });
                                    let id = decisions
                                        .iter()
                                        .filter(|(_, d)| matches!(d, EngineEvent::PrepareRequest { .. }))
                                        .count() as u32;
                                    dec.push(EngineEvent::PrepareRequest {
                                        t: f.t,
                                        handle_id: id,
                                        context: transcript_now(),
                                    });
                                }
                            }
                        }
                    }
                }
            }
            InputEvent::AsrPartial { t, transcript } => {
                let accepted = listening;
                asr.push((idx, *t, transcript.clone(), false, accepted));
            }
            InputEvent::AsrFinal { t, transcript } => {
                let accepted = listening;
                asr.push((idx, *t, transcript.clone(), true, accepted));
            }
            InputEvent::TurnShiftEstimate(e) => {
                if baseline_silence.is_none() {
                    estimates.push((idx, e.p_ts));
                    if !e.transcript.is_empty() {
                        // gap between the last two accepted incremental results
                        let recent: Vec<&(usize, TimestampMs, String, bool, bool)> = asr
                            .iter()
                            .rev()
                            .filter(|(i, _, _, _, acc)| since_take(*i) && *acc)
                            .take(2)
                            .collect();
                        let gap = match recent.as_slice() {
                            [a, b] => a.1.saturating_sub(b.1),
                            _ => u64::MAX,
                        };
                        let last_prep_ctx = current_request.as_ref().map(|(_, _, c)| c.clone());
                        let triggered = e.p_ts >= cfg.prep_prob_threshold || gap >= cfg.prep_partial_gap_ms;
                        let dissimilar = match &last_prep_ctx {
                            None => true,
                            Some(prev) => similarity(&e.transcript, prev) < cfg.similarity_threshold,
                        };
                        if triggered && dissimilar {
                            if let Some((req_idx, id, _)) = &current_request {
                                let ready = readies.iter().any(|(i, h, _)| i > req_idx && h == id);
                                if !ready {
                                    dec.push(EngineEvent::PrepareCancel { t: e.t, handle_id: *id });
                                }
                            }
                            let id = decisions
                                .iter()
                                .filter(|(_, d)| matches!(d, EngineEvent::PrepareRequest { .. }))
                                .count() as u32;
                            dec.push(EngineEvent::PrepareRequest {
                                t: e.t,
                                handle_id: id,
                                context: e.transcript.clone(),
                            });
                        }
                    }
                }
            }
            InputEvent::TtsWord(w) => {
                let Some(ctx) = &robot else {
                    return Err(format!("input {idx}: TtsWord with no active utterance"));
                };
                if w.utterance_id != ctx.utterance_id {
                    return Err(format!("input {idx}: TtsWord for wrong utterance"));
                }
                if gaze_averted(&decisions, ctx.take_input_idx) {
                    dec.push(EngineEvent::GazeReturn { t: w.t });
                }
                words.push((idx, w.index, w.t_start, w.t_end));
            }
            InputEvent::PreparedReady { t, handle_id, response_text } => {
                let valid = match &current_request {
                    Some((req_idx, id, _)) => {
                        id == handle_id && !readies.iter().any(|(i, h, _)| i > req_idx && h == id)
                    }
                    None => false,
                };
                if valid {
                    readies.push((idx, *handle_id, response_text.clone()));
                    if baseline_silence.is_some() {
                        do_take_turn(
                            *t,
                            response_text,
                            &mut robot,
                            &mut words,
                            idx,
                            &decisions,
                            &mut dec,
                        );
                    } else if robot.is_none() && shift_latched {
                        try_take_turn(
                            cfg,
                            *t,
                            &Some(response_text.clone()),
                            user_vad_now,
                            &mut robot,
                            &mut words,
                            idx,
                            &decisions,
                            &mut dec,
                            &transcript_now,
                        );
                    }
                }
            }
            InputEvent::Tick { t } => {
                if robot.is_none() {
                    if baseline_silence.is_none() {
                        let epoch_user = epoch_user_vad
                            || frames.iter().rev().take_while(|x| x.t >= epoch).any(|x| x.vad_user);
                        let st = if epoch_user {
                            recompute_yield(cfg, &frames, epoch, epoch_user, *t, &estimates, last_take)
                        } else {
                            false
                        };
                        if st && !shift_latched {
                            dec.push(EngineEvent::TurnShiftAllowed { t: *t });
                        }
                        if st || shift_latched {
                            try_take_turn(
                                cfg,
                                *t,
                                &prepared,
                                user_vad_now,
                                &mut robot,
                                &mut words,
                                idx,
                                &decisions,
                                &mut dec,
                                &transcript_now,
                            );
                        }
                    } else if let Some(silence_ms) = baseline_silence {
                        let spoke = epoch_user_vad
                            || frames.iter().rev().take_while(|x| x.t >= epoch).any(|x| x.vad_user);
                        if listening && spoke {
                            if let Some(s) = silence_since {
                                if t.saturating_sub(s) >= silence_ms {
                                    dec.push(EngineEvent::ListeningLight { t: *t, on: true });
                                    let id = decisions
                                        .iter()
                                        .filter(|(_, d)| matches!(d, EngineEvent::PrepareRequest { .. }))
                                        .count() as u32;
                                    dec.push(EngineEvent::PrepareRequest {
                                        t: *t,
                                        handle_id: id,
                                        context: transcript_now(),
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }

        for d in &dec {
            decisions.push((idx, d.clone()));
        }
        out.push(dec);
    }
    Ok(out)
}

/// Replays a recorded log against both the live engine and the reference
/// interpreter, checking that the logged decisions match each, and that the
/// engine and interpreter agree with one another.
pub fn verify_log(
    records: &[crate::logfmt::LogRecord],
    cfg: &EngineConfig,
    policy: &Policy,
) -> Result<(), String> {
    use crate::logfmt::LogRecord;

    let inputs: Vec<InputEvent> = records
        .iter()
        .filter_map(|r| match r {
            LogRecord::Input(e) => Some(e.clone()),
            _ => None,
        })
        .collect();
    // decisions grouped by the input they followed
    let mut logged: Vec<Vec<EngineEvent>> = Vec::with_capacity(inputs.len());
    for r in records {
        match r {
            LogRecord::Input(_) => logged.push(Vec::new()),
            LogRecord::Decision(d) => match logged.last_mut() {
                Some(v) => v.push(d.clone()),
                None => return Err("decision before any input".into()),
            },
            LogRecord::Meta(_) => {}
        }
    }

    let mut engine = crate::engine::Engine::new(cfg.clone(), policy.clone())
        .map_err(|e| e.to_string())?;
    let reference = reference_decisions(&inputs, cfg, policy)?;
    for (i, input) in inputs.iter().enumerate() {
        let live = engine
            .step(input)
            .map_err(|e| format!("input {i} (t={}): engine: {e}", input.t()))?;
        if live != logged[i] {
            return Err(format!(
                "input {i} (t={}): log has {:?}, engine produced {:?}",
                input.t(),
                logged[i],
                live
            ));
        }
        if live != reference[i] {
            return Err(format!(
                "input {i} (t={}): engine produced {:?}, reference produced {:?}",
                input.t(),
                live,
                reference[i]
            ));
        }
    }
    Ok(())
}

fn gaze_averted(decisions: &[(usize, EngineEvent)], take_idx: usize) -> bool {
    for (i, d) in decisions.iter().rev() {
        if *i <= take_idx {
            break;
        }
        match d {
            EngineEvent::GazeAvert { .. } => return true,
            EngineEvent::GazeReturn { .. } => return false,
            _ => {}
        }
    }
    false
}

fn recompute_yield(
    cfg: &EngineConfig,
    frames: &[SeenFrame],
    epoch: TimestampMs,
    user_spoke: bool,
    now: TimestampMs,
    estimates: &[(usize, f64)],
    last_take: Option<usize>,
) -> bool {
    if !user_spoke {
        return false;
    }
    let user_vad_now = frames.last().map(|f| f.vad_user).unwrap_or(false);
    let silence_since: Option<TimestampMs> = if user_vad_now {
        None
    } else {
        let mut found = None;
        for w in (0..frames.len()).rev() {
            let f = &frames[w];
            if f.t < epoch {
                break;
            }
            if !f.vad_user {
                let prev_active = if w == 0 { false } else { frames[w - 1].vad_user };
                if prev_active {
                    found = Some(f.t);
                    break;
                }
            } else {
                break;
            }
        }
        found
    };
    let mut run_start: Option<TimestampMs> = None;
    for f in frames.iter().rev() {
        if f.t < epoch {
            break;
        }
        let fav = match cfg.yield_polarity {
            YieldPolarity::NonHolder => f.p_now < cfg.favor_threshold && f.p_future < cfg.favor_threshold,
            YieldPolarity::Holder => f.p_now > cfg.favor_threshold && f.p_future > cfg.favor_threshold,
        };
        if fav {
            run_start = Some(f.t);
        } else {
            break;
        }
    }
    if let Some(rs) = run_start {
        let clock = if cfg.take_turn_requires_user_silence {
            silence_since.map(|s| rs.max(s))
        } else {
            Some(rs)
        };
        if let Some(start) = clock {
            if now.saturating_sub(start) >= cfg.dual_favor_min_ms {
                return true;
            }
        }
    }
    let latest_p_ts = estimates
        .iter()
        .rev()
        .find(|(i, _)| last_take.map(|lt| *i > lt).unwrap_or(true))
        .map(|(_, p)| *p)
        .unwrap_or(0.0);
    if let Some(s) = silence_since {
        if now.saturating_sub(s) >= cfg.timeout_for(latest_p_ts) {
            return true;
        }
    }
    false
}

#[allow(clippy::too_many_arguments)]
fn try_take_turn(
    cfg: &EngineConfig,
    t: TimestampMs,
    prepared: &Option<String>,
    user_vad: bool,
    robot: &mut Option<RobotCtx>,
    words: &mut Vec<(usize, u32, TimestampMs, TimestampMs)>,
    idx: usize,
    decisions: &[(usize, EngineEvent)],
    dec: &mut Vec<EngineEvent>,
    _transcript: &dyn Fn() -> String,
) {
    if robot.is_some() {
        return;
    }
    let Some(text) = prepared else { return };
    if cfg.take_turn_requires_user_silence && user_vad {
        return;
    }
    do_take_turn(t, text, robot, words, idx, decisions, dec);
}

fn do_take_turn(
    t: TimestampMs,
    text: &str,
    robot: &mut Option<RobotCtx>,
    words: &mut Vec<(usize, u32, TimestampMs, TimestampMs)>,
    idx: usize,
    decisions: &[(usize, EngineEvent)],
    dec: &mut Vec<EngineEvent>,
) {
    let utterance_id = decisions
        .iter()
        .filter(|(_, d)| matches!(d, EngineEvent::TakeTurn { .. }))
        .count() as u32;
    dec.push(EngineEvent::TakeTurn { t, utterance_id });
    words.clear();
    *robot = Some(RobotCtx {
        utterance_id,
        take_input_idx: idx,
        take_t: t,
        word_count: text.split_whitespace().count(),
    });
}

#[allow(clippy::too_many_arguments)]
fn frame_during_robot(
    cfg: &EngineConfig,
    policy: &Policy,
    f: &crate::model::VapFrame,
    idx: usize,
    prev_vad: bool,
    ctx: &RobotCtx,
    frames: &[SeenFrame],
    words: &[(usize, u32, TimestampMs, TimestampMs)],
    decisions: &mut Vec<(usize, EngineEvent)>,
    dec: &mut Vec<EngineEvent>,
    inputs: &[InputEvent],
) {
    // planned-pause onset: current word finished, utterance not done, and no
    // earlier frame observed this gap
    let stopped = decisions.iter().rev().any(|(i, d)| {
        *i > ctx.take_input_idx && matches!(d, EngineEvent::StopAtWordBoundary { .. })
    });
    if let Some((w_idx, w_index, _, w_end)) = words.last() {
        let finished = *w_index as usize + 1 == ctx.word_count;
        if !finished && !stopped && f.t >= *w_end {
            let gap_seen = frames
                .iter()
                .rev()
                .skip(1)
                .take_while(|x| x.input_idx > *w_idx)
                .any(|x| x.t >= *w_end);
            if !gap_seen {
                let avert = match policy {
                    Policy::Baseline { .. } => true,
                    Policy::Proposed => f.p_now > cfg.favor_threshold,
                };
                if avert && !gaze_averted(decisions, ctx.take_input_idx) {
                    dec.push(EngineEvent::GazeAvert { t: f.t });
                    decisions.push((idx, EngineEvent::GazeAvert { t: f.t }));
                }
            }
        }
    }

    if matches!(policy, Policy::Baseline { .. }) {
        return;
    }

    // overlap: user voice activity that began during robot speech
    if !f.vad_user {
        return;
    }
    // onset frame: walk back over contiguous active frames
    let mut onset: Option<(usize, TimestampMs)> = Some((idx, f.t));
    for x in frames.iter().rev().skip(1) {
        if x.vad_user {
            onset = Some((x.input_idx, x.t));
        } else {
            break;
        }
    }
    let (onset_idx, onset_t) = onset.unwrap();
    if onset_idx <= ctx.take_input_idx {
        return; // user was already speaking when the robot started
    }
    if !prev_vad && onset_idx == idx {
        // onset transition this frame; overlap just began
    }
    let classified = decisions.iter().rev().any(|(i, d)| {
        *i >= onset_idx
            && matches!(d, EngineEvent::StopAtWordBoundary { .. } | EngineEvent::ContinueOverlap { .. })
    });
    if classified {
        return;
    }
    // dual-user-favor run within the overlap
    let mut run_start: Option<TimestampMs> = None;
    for x in frames.iter().rev() {
        if x.input_idx < onset_idx {
            break;
        }
        if x.p_now > cfg.favor_threshold && x.p_future > cfg.favor_threshold {
            run_start = Some(x.t);
        } else {
            break;
        }
    }
    if let Some(rs) = run_start {
        if f.t - rs >= cfg.interrupt_confirm_ms {
            let last = words.last().map(|(_, i, _, _)| *i as i64).unwrap_or(-1);
            dec.push(EngineEvent::StopAtWordBoundary {
                t: f.t,
                utterance_id: ctx.utterance_id,
                last_spoken_index: last,
            });
            let _ = inputs;
            return;
        }
    }
    if f.t - onset_t >= cfg.interrupt_confirm_ms {
        dec.push(EngineEvent::ContinueOverlap { t: f.t });
    }
}
