use std::sync::Arc;
use std::time::{Duration, Instant};

use chainloc::chain::{
    encode_message, prior_message, quantize, run_chain, ChainMessage, InProcessChain, SocketChain,
    SocketOptions, Stage, Trace, Transport,
};
use chainloc::measurement::Synthesizer;
use chainloc::rng::{Purpose, StreamKey};
use chainloc::scenario::{parse_scenario, Scenario};
use chainloc::spa::{AgentInput, PanelFilter, PdaContext};
use chainloc::Error;

fn scenario(j: usize, steps: usize) -> Scenario {
    parse_scenario(&format!(
        r#"{{"n_panels": {j}, "n_steps": {steps}, "model": {{"filter": {{"n_particles": 512}}}}}}"#
    ))
    .unwrap()
}

fn fast_opts() -> SocketOptions {
    SocketOptions {
        step_timeout: Duration::from_secs(20),
        ..SocketOptions::default()
    }
}

#[test]
fn single_panel_chain_is_a_plain_filter() {
    let scn = scenario(1, 8);
    let (seed, run) = (3, 1);
    let mut chain = InProcessChain::new(&scn, seed, run).unwrap();
    let out = run_chain(&mut chain, &scn, seed, run, 8, |_| Ok(())).unwrap();

    let ctx = Arc::new(PdaContext::from_scenario(&scn));
    let synth = Synthesizer::new(&scn);
    let mut f = PanelFilter::new(&scn, 1, seed, run, ctx).unwrap();
    let mut belief = prior_message(&scn, seed, run).unwrap().payload;
    for n in 0..8 {
        let input = if n == 0 {
            AgentInput::Prior(belief.clone())
        } else {
            AgentInput::Previous(belief.clone())
        };
        let step = f.process(input, &synth.panel(seed, run, n, 1)).unwrap();
        belief = quantize(&ChainMessage::new(step.gamma)).unwrap().payload;
        assert_eq!(out[n].state, belief.mean(), "step {n}");
    }
}

#[test]
fn socket_chain_matches_in_process_chain() {
    let scn = scenario(3, 10);
    let mut a = InProcessChain::new(&scn, 11, 0).unwrap();
    let mut b = SocketChain::spawn(&scn, 11, 0, fast_opts(), None).unwrap();
    let ra = run_chain(&mut a, &scn, 11, 0, 10, |_| Ok(())).unwrap();
    let rb = run_chain(&mut b, &scn, 11, 0, 10, |_| Ok(())).unwrap();
    for (x, y) in ra.iter().zip(&rb) {
        assert_eq!(x.time, y.time);
        assert_eq!(x.state, y.state);
        assert_eq!(x.detected, y.detected);
        assert_eq!(x.reports, y.reports);
    }
    assert_eq!(rb.len(), 10);
    assert!(rb.iter().all(|s| s.reports.len() == 3));
}

#[test]
fn estimates_are_written_as_json_lines() {
    let scn = scenario(2, 3);
    let mut chain = InProcessChain::new(&scn, 1, 0).unwrap();
    let mut buf = Vec::new();
    run_chain(&mut chain, &scn, 1, 0, 3, |s| chainloc::chain::write_estimate(&mut buf, s)).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 3);
    for (n, l) in lines.iter().enumerate() {
        assert_eq!(l["time"], n as u64);
        for k in ["x", "y", "vx", "vy"] {
            assert!(l[k].is_f64());
        }
        assert!(l["detected"].is_array());
    }
}

#[test]
fn killed_middle_node_aborts_the_step() {
    let scn = scenario(3, 10);
    let opts = SocketOptions {
        step_timeout: Duration::from_secs(5),
        ..SocketOptions::default()
    };
    let mut chain = SocketChain::spawn(&scn, 2, 0, opts, None).unwrap();
    let prior = prior_message(&scn, 2, 0).unwrap();
    let reply = chain.step(prior).unwrap();
    chain.kill(2);
    let start = Instant::now();
    let err = chain.step(reply.belief).unwrap_err();
    assert!(matches!(err, Error::TimestepAborted { time: 1, .. }), "{err}");
    assert!(start.elapsed() < Duration::from_secs(6));
}

#[test]
fn duplicate_frame_is_rejected_without_side_effects() {
    let scn = scenario(3, 6);
    let mut reference = InProcessChain::new(&scn, 4, 0).unwrap();
    let want = run_chain(&mut reference, &scn, 4, 0, 3, |_| Ok(())).unwrap();

    let mut chain = SocketChain::spawn(&scn, 4, 0, fast_opts(), None).unwrap();
    let prior = prior_message(&scn, 4, 0).unwrap();
    let r0 = chain.step(prior.clone()).unwrap();
    // the time-0 prior again: the head has already moved on
    chain.inject(&encode_message(&prior)).unwrap();
    let r1 = chain.step(r0.belief.clone()).unwrap();
    let r2 = chain.step(r1.belief.clone()).unwrap();
    assert_eq!(r0.belief.payload.mean(), want[0].state);
    assert_eq!(r1.belief.payload.mean(), want[1].state);
    assert_eq!(r2.belief.payload.mean(), want[2].state);
}

#[test]
fn head_rejects_a_frame_from_the_future() {
    let scn = scenario(2, 6);
    let mut chain = InProcessChain::new(&scn, 5, 0).unwrap();
    let mut prior = prior_message(&scn, 5, 0).unwrap();
    prior.time_index = 3;
    prior.payload.time_index = 3;
    let err = chain.step(prior).unwrap_err();
    assert!(matches!(err, Error::TimestepAborted { panel: 1, .. }), "{err}");
}

#[test]
fn trace_follows_the_chain_order() {
    let scn = scenario(3, 5);
    let trace = Trace::default();
    let mut chain = InProcessChain::with_trace(&scn, 6, 0, Some(trace.clone())).unwrap();
    run_chain(&mut chain, &scn, 6, 0, 5, |_| Ok(())).unwrap();
    let ev = trace.events();
    let forwarded: Vec<(u32, u16)> = ev
        .iter()
        .filter(|e| e.stage == Stage::Forwarded)
        .map(|e| (e.time, e.panel))
        .collect();
    let expect: Vec<(u32, u16)> = (0..5).flat_map(|n| (1..=3).map(move |j| (n, j))).collect();
    assert_eq!(forwarded, expect);
    // every panel updates before it forwards, and prefetches the next step
    // only after forwarding the current one
    for j in 1..=3u16 {
        let mine: Vec<_> = ev.iter().filter(|e| e.panel == j).collect();
        for n in 0..5u32 {
            let pos = |s: Stage, t: u32| mine.iter().position(|e| e.stage == s && e.time == t);
            let (r, u, f) = (
                pos(Stage::Received, n).unwrap(),
                pos(Stage::Updated, n).unwrap(),
                pos(Stage::Forwarded, n).unwrap(),
            );
            assert!(r < u && u < f);
            if n + 1 < 5 {
                assert!(pos(Stage::Prefetched, n + 1).unwrap() > f);
            } else {
                assert!(pos(Stage::Prefetched, n + 1).is_none());
            }
        }
    }
}

#[test]
fn panel_streams_are_keyed() {
    // the same key always yields the same stream; different purposes differ
    use rand::Rng;
    let k = StreamKey::new(9, 2, 7, 3);
    let a: u64 = k.rng(Purpose::Resample).random();
    let b: u64 = k.rng(Purpose::Resample).random();
    let c: u64 = k.rng(Purpose::Synthesis).random();
    assert_eq!(a, b);
    assert_ne!(a, c);
}
