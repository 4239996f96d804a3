//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on failure.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config as RunnerConfig, TestRunner};
use qfuzz::agent::{greedy_action, EpsilonSchedule};
use qfuzz::experiments::{compare_baseline, generalization_run, reward_correlation};
use qfuzz::fuzz_loop::{run, run_on_seeds, GenerationRecord, LoopConfig};
use qfuzz::harness::testing::{FakeTimeTarget, RiggedTarget};
use qfuzz::harness::{
    reward_coverage, timing_dispersion, BlockHistory, ExecutionTrace, MiniParser, Outcome, RewardConfig,
    RewardMode, Target,
};
use qfuzz::mdp::{encode_state_with, extract_state, random_offset, Input};
use qfuzz::mutation::{
    apply_action, default_actions, enabled_actions, ActionKind, ActionSpec, Effect, MutationContext,
    TokenDictionary,
};
use qfuzz::qnet::{Activation, LossReduction, Network, NetworkConfig};
use qfuzz::sample::SAMPLE_SEED;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TRIALS: usize = 5;
const DISPERSION_LIMIT: f64 = 1e-2;

type Verdict = Result<String, String>;

fn check(cond: bool, detail: String) -> Verdict {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_state(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| f64::from(rng.gen::<u8>()) / 255.0).collect()
}

fn gradient_correctness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0xc1);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for n in 0..20 {
        let act = Activation::ALL[n % Activation::ALL.len()];
        let cfg = NetworkConfig {
            input_dim: rng.gen_range(1..=8),
            hidden_dims: [rng.gen_range(1..=16), rng.gen_range(1..=16)],
            output_dim: rng.gen_range(1..=4),
            activation: act,
            learning_rate: 0.02,
            weight_init_max: 0.1,
            loss_reduction: LossReduction::Sum,
        };
        let mut net = Network::init(cfg.clone(), &mut rng).map_err(|e| e.to_string())?;
        for layer in net.layers_mut() {
            for w in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *w = rng.gen_range(-1.0..1.0);
            }
        }
        let state = random_state(&mut rng, cfg.input_dim);
        let action = rng.gen_range(0..cfg.output_dim);
        let target = rng.gen_range(-2.0..2.0);
        let (_, grads) = net.gradients(&state, action, target).map_err(|e| e.to_string())?;
        let loss = |n: &Network| (n.forward(&state).unwrap()[action] - target).powi(2);
        for l in 0..3 {
            let sizes = [net.layers()[l].weights.len(), net.layers()[l].bias.len()];
            for (kind, size) in sizes.into_iter().enumerate() {
                for k in 0..size {
                    let mut plus = net.clone();
                    let mut minus = net.clone();
                    let (analytic, p, m) = if kind == 0 {
                        (grads.layers[l].weights[k], &mut plus.layers_mut()[l].weights[k], &mut minus.layers_mut()[l].weights[k])
                    } else {
                        (grads.layers[l].bias[k], &mut plus.layers_mut()[l].bias[k], &mut minus.layers_mut()[l].bias[k])
                    };
                    *p += h;
                    *m -= h;
                    let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
                    let scale = analytic.abs().max(numeric.abs());
                    // gradients below the difference quotient's own rounding noise
                    if scale < 1e-7 {
                        continue;
                    }
                    let rel = (analytic - numeric).abs() / scale;
                    worst = worst.max(rel);
                    if rel > 1e-4 {
                        return Err(format!("net {n} ({act}) layer {l} param {k}: {analytic} vs {numeric}"));
                    }
                }
            }
        }
    }
    Ok(format!("20 networks, worst relative error {worst:.2e}"))
}

fn masked_loss() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0xc2);
    let mut net = Network::init(NetworkConfig::for_state(32, 8), &mut rng).map_err(|e| e.to_string())?;
    for step in 0..200 {
        let state = random_state(&mut rng, 32);
        let action = rng.gen_range(0..8);
        let (_, grads) = net.gradients(&state, action, 1.0).map_err(|e| e.to_string())?;
        let before = net.layers()[2].clone();
        net.train_step(&state, action, 1.0).map_err(|e| e.to_string())?;
        let after = &net.layers()[2];
        let g = &grads.layers[2];
        for j in (0..8).filter(|&j| j != action) {
            let grad_zero = (0..g.fan_in).all(|i| g.weight(i, j) == 0.0) && g.bias[j] == 0.0;
            let unchanged = (0..after.fan_in).all(|i| after.weight(i, j) == before.weight(i, j))
                && after.bias[j] == before.bias[j];
            if !grad_zero || !unchanged {
                return Err(format!("step {step}: output column {j} moved while training action {action}"));
            }
        }
    }
    Ok("200 steps, non-selected output columns untouched".into())
}

fn rigged_config() -> LoopConfig {
    let mut actions = default_actions();
    actions.push(ActionSpec::on(ActionKind::BitFlip { ratio: 0.1 }));
    LoopConfig {
        generations: 1000,
        reward: RewardConfig::new(RewardMode::CoverageR1),
        actions,
        ..LoopConfig::default()
    }
}

fn bandit_convergence() -> Verdict {
    let cfg = rigged_config();
    let actions = enabled_actions(&cfg.actions).map_err(|e| e.to_string())?;
    if actions.len() != 8 {
        return Err(format!("expected 8 actions, found {}", actions.len()));
    }
    let paying = actions
        .iter()
        .position(|a| *a == ActionKind::DeleteWindow)
        .ok_or("delete_window is not enabled")?;
    let seed = Input::new(SAMPLE_SEED).map_err(|e| e.to_string())?;
    let mut target = RiggedTarget { seed_len: seed.len() };
    let out = run_on_seeds(&cfg, std::slice::from_ref(&seed), &mut target, None).map_err(|e| e.to_string())?;
    let net = out.network.ok_or("learned run returned no network")?;

    let mut probe_rng = ChaCha8Rng::seed_from_u64(0xc3);
    let mut hits = 0;
    for _ in 0..100 {
        let offset = random_offset(&mut probe_rng, seed.len(), cfg.state_width).map_err(|e| e.to_string())?;
        let window = extract_state(&seed, offset, cfg.state_width).map_err(|e| e.to_string())?;
        let state = encode_state_with(&window, cfg.encoding, cfg.state_width);
        let q = net.forward(state.values()).map_err(|e| e.to_string())?;
        if greedy_action(&q).map_err(|e| e.to_string())? == paying {
            hits += 1;
        }
    }
    let report = compare_baseline(&cfg, 3, &mut target).map_err(|e| e.to_string())?;
    check(
        hits >= 95 && report.quotient >= 2.0,
        format!("greedy = paying action on {hits}/100 probes, quotient {:.3}", report.quotient),
    )
}

fn direction_of_effect(r2_waived: bool) -> Verdict {
    let mut parts = Vec::new();
    let mut ok = true;
    for mode in [RewardMode::CoverageR1, RewardMode::TimeR2, RewardMode::CombinedR3] {
        let cfg = LoopConfig {
            generations: 1000,
            reward: RewardConfig::new(mode),
            ..LoopConfig::default()
        };
        let report = compare_baseline(&cfg, TRIALS, &mut MiniParser::new()).map_err(|e| e.to_string())?;
        let passed = report.quotient > 1.0 && report.trials.len() == TRIALS;
        let waived = r2_waived && mode == RewardMode::TimeR2;
        if !passed && !waived {
            ok = false;
        }
        let note = if waived { " (waived)" } else { "" };
        parts.push(format!(
            "{} {:.3} [{:.3}, {:.3}]{note}",
            mode.as_str(),
            report.quotient,
            report.min_quotient,
            report.max_quotient
        ));
    }
    check(ok, format!("mean quotients over {TRIALS} trials: {}", parts.join(", ")))
}

fn generalization(r2_waived: bool) -> Verdict {
    let cfg = LoopConfig {
        generations: 1000,
        reward: RewardConfig::new(RewardMode::TimeR2),
        ..LoopConfig::default()
    };
    let report = generalization_run(&cfg, TRIALS, &mut MiniParser::new()).map_err(|e| e.to_string())?;
    let wins = report.wins();
    let detail = format!("frozen policy beat the baseline in {wins}/{TRIALS} trials (mean quotient {:.3})", report.quotient);
    if r2_waived && wins < 3 {
        return Ok(format!("{detail} (waived: timing uncalibrated)"));
    }
    check(wins >= 3, detail)
}

fn correlation_sign() -> Verdict {
    let r = reward_correlation(&LoopConfig::default(), 500, &mut MiniParser::new()).map_err(|e| e.to_string())?;
    check(r > 0.0, format!("Pearson(blocks, wall time) over 500 mutations = {r:.3}"))
}

/// Returns the verdict and whether time-based acceptance is waived.
fn timing_calibration() -> (Verdict, bool) {
    let mut target = MiniParser::new();
    let mut times = Vec::with_capacity(200);
    for _ in 0..200 {
        match target.execute(SAMPLE_SEED, Duration::from_secs(1)) {
            Ok(t) => times.push(t.wall_time),
            Err(e) => return (Err(e.to_string()), true),
        }
    }
    let Some(d) = timing_dispersion(&times) else {
        return (Err("no dispersion (zero mean time)".into()), true);
    };
    let mean = times.iter().sum::<f64>() / times.len() as f64;
    if d <= DISPERSION_LIMIT {
        (Ok(format!("var/mean^2 = {d:.2e} over 200 runs (mean {:.3} ms)", mean * 1e3)), false)
    } else {
        eprintln!("warning: timing calibration failed (var/mean^2 = {d:.2e} > {DISPERSION_LIMIT:e}); r2 acceptance waived");
        (Ok(format!("var/mean^2 = {d:.2e} exceeds the limit; calibration warning emitted, r2 waived")), true)
    }
}

fn runner() -> TestRunner {
    TestRunner::new(RunnerConfig {
        cases: 128,
        failure_persistence: None,
        ..RunnerConfig::default()
    })
}

fn mutation_laws() -> Result<(), String> {
    let kinds = [
        ActionKind::BitFlip { ratio: 0.05 },
        ActionKind::InsertToken,
        ActionKind::ShuffleWindow,
        ActionKind::ShuffleObjectSegments,
        ActionKind::CopyWindowInsert,
        ActionKind::CopyWindowOverwrite,
        ActionKind::DeleteWindow,
    ];
    let dict = TokenDictionary::from_tokens(["obj", "endobj"]).map_err(|e| e.to_string())?;
    let strategy = proptest::collection::vec(any::<u8>(), 2..200)
        .prop_flat_map(|b| {
            let n = b.len();
            (Just(b), 1..n).prop_flat_map(|(b, w)| {
                let n = b.len();
                (Just(b), 0..=n - w, Just(w), 0..7usize, any::<u64>())
            })
        });
    runner()
        .run(&strategy, |(bytes, offset, width, k, seed)| {
            let input = Input::new(bytes.clone()).unwrap();
            let window = extract_state(&input, offset, width).unwrap();
            let apply = |s| {
                apply_action(&input, &window, &kinds[k], &dict, &MutationContext::default(), &mut ChaCha8Rng::seed_from_u64(s))
                    .unwrap()
            };
            let m = apply(seed);
            let again = apply(seed);
            prop_assert_eq!(&m.input, &again.input);
            let out = m.input.as_bytes();
            let n = bytes.len();
            match m.effect {
                Effect::Rewrote { start, end } => {
                    prop_assert_eq!(out.len(), n);
                    prop_assert_eq!(&out[..start], &bytes[..start]);
                    prop_assert_eq!(&out[end..], &bytes[end..]);
                }
                Effect::Inserted { at, len } => {
                    prop_assert_eq!(out.len(), n + len);
                    prop_assert_eq!(&out[..at], &bytes[..at]);
                    prop_assert_eq!(&out[at + len..], &bytes[at..]);
                }
                Effect::Deleted { at, len } => {
                    prop_assert_eq!(out.len(), n - len);
                    prop_assert_eq!(&out[..at], &bytes[..at]);
                    prop_assert_eq!(&out[at..], &bytes[at + len..]);
                }
                Effect::NoOp => prop_assert_eq!(out, &bytes[..]),
                other => prop_assert!(false, "unexpected effect {:?}", other),
            }
            Ok(())
        })
        .map_err(|e| format!("mutation laws: {e}"))
}

fn coverage_laws() -> Result<(), String> {
    let set = || proptest::collection::btree_set(0u32..128, 0..40);
    runner()
        .run(&(set(), set(), set()), |(blocks, small, extra)| {
            let trace = ExecutionTrace::new(blocks.iter().copied(), 0.0, Outcome::Completed);
            prop_assert_eq!(reward_coverage(&trace, &BlockHistory::new()), blocks.len() as f64);
            let small_h = BlockHistory::from_blocks(small.iter().copied());
            let big_h = BlockHistory::from_blocks(small.iter().chain(&extra).copied());
            prop_assert!(reward_coverage(&trace, &big_h) <= reward_coverage(&trace, &small_h));
            Ok(())
        })
        .map_err(|e| format!("coverage laws: {e}"))
}

fn agent_laws() -> Result<(), String> {
    let s = EpsilonSchedule {
        eps_start: 1.0,
        eps_final: 0.1,
        decay_steps: 500,
    };
    if s.epsilon_at(0) != 1.0 || s.epsilon_at(500) != 0.1 || s.epsilon_at(5000) != 0.1 {
        return Err("epsilon schedule endpoints".into());
    }
    let q = proptest::collection::btree_set(-500i32..500, 1..12)
        .prop_map(|v| v.into_iter().map(|x| f64::from(x) / 4.0).collect::<Vec<_>>())
        .prop_shuffle();
    runner()
        .run(&(q, 0.01f64..100.0, -50.0f64..50.0), |(q, a, b)| {
            let mapped: Vec<f64> = q.iter().map(|v| a * v + b).collect();
            prop_assert_eq!(greedy_action(&q).unwrap(), greedy_action(&mapped).unwrap());
            Ok(())
        })
        .map_err(|e| format!("argmax invariance: {e}"))
}

fn timeless(r: &GenerationRecord) -> (u64, usize, usize, u64, Option<u64>, Outcome, usize) {
    (r.generation, r.offset, r.action, r.epsilon.to_bits(), r.loss.map(f64::to_bits), r.outcome, r.blocks)
}

fn replay_law() -> Result<(), String> {
    let cfg = LoopConfig {
        generations: 300,
        rng_seed: 99,
        reward: RewardConfig::new(RewardMode::CoverageR1),
        ..LoopConfig::default()
    };
    let a = run(&cfg, &mut MiniParser::new()).map_err(|e| e.to_string())?;
    let b = run(&cfg, &mut MiniParser::new()).map_err(|e| e.to_string())?;
    let same = a.report.records.iter().map(timeless).eq(b.report.records.iter().map(timeless))
        && a.report.accumulated == b.report.accumulated
        && a.network == b.network;
    if !same {
        return Err("builtin-parser replay diverged".into());
    }
    let fake = LoopConfig {
        reward: RewardConfig::new(RewardMode::TimeR2),
        ..cfg
    };
    let a = run(&fake, &mut FakeTimeTarget::default()).map_err(|e| e.to_string())?;
    let b = run(&fake, &mut FakeTimeTarget::default()).map_err(|e| e.to_string())?;
    if a.report != b.report || a.network != b.network {
        return Err("timing-free replay diverged".into());
    }
    Ok(())
}

fn property_suites() -> Verdict {
    mutation_laws()?;
    coverage_laws()?;
    agent_laws()?;
    replay_law()?;
    Ok("mutation, coverage, agent and replay laws hold".into())
}

fn weight_persistence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0xc9);
    let mut net = Network::init(NetworkConfig::for_state(32, 7), &mut rng).map_err(|e| e.to_string())?;
    for _ in 0..100 {
        let state = random_state(&mut rng, 32);
        net.train_step(&state, rng.gen_range(0..7), rng.gen_range(0.0..1.0)).map_err(|e| e.to_string())?;
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("weights.txt");
    net.save(&path).map_err(|e| e.to_string())?;
    let loaded = Network::load(&path).map_err(|e| e.to_string())?;
    for k in 0..100 {
        let state = random_state(&mut rng, 32);
        let a = net.forward(&state).map_err(|e| e.to_string())?;
        let b = loaded.forward(&state).map_err(|e| e.to_string())?;
        if a.iter().map(|v| v.to_bits()).ne(b.iter().map(|v| v.to_bits())) {
            return Err(format!("state {k}: outputs differ"));
        }
    }
    Ok("100 states, outputs bit-identical".into())
}

fn report(n: usize, name: &str, limit: Duration, f: impl FnOnce() -> Verdict) -> bool {
    let start = Instant::now();
    let verdict = f();
    let elapsed = start.elapsed();
    let (ok, detail) = match verdict {
        Ok(d) if elapsed <= limit => (true, d),
        Ok(d) => (false, format!("{d}; took {elapsed:.1?}, limit {limit:?}")),
        Err(d) => (false, d),
    };
    let tag = if ok { "PASS" } else { "FAIL" };
    println!("{tag} {n} {name}: {detail} [{elapsed:.1?}]");
    ok
}

fn main() -> ExitCode {
    let sec = Duration::from_secs;
    let mut all = true;
    all &= report(1, "gradient correctness", sec(10), gradient_correctness);
    all &= report(2, "masked loss", sec(1), masked_loss);
    all &= report(3, "bandit convergence", sec(60), bandit_convergence);

    // calibration runs first so that the time-based criteria know whether
    // they are waived
    let (calibration, r2_waived) = timing_calibration();

    all &= report(4, "direction of effect", sec(900), || direction_of_effect(r2_waived));
    all &= report(5, "generalization", sec(600), || generalization(r2_waived));
    all &= report(6, "reward correlation", sec(120), correlation_sign);
    all &= report(7, "timing calibration", sec(60), || calibration);
    all &= report(8, "property suites", sec(60), property_suites);
    all &= report(9, "weight persistence", sec(5), weight_persistence);

    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
