//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits non-zero on any failure.
//!
//! Run with `cargo test --test acceptance` (add `--release` for speed).

use std::net::SocketAddr;
use std::panic::{self, AssertUnwindSafe};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use integrator_twin::controller::server::{spawn, ServeOptions};
use integrator_twin::controller::store::{encode, EEPROM_BYTES};
use integrator_twin::controller::{
    parse_line, Command, Controller, ControllerConfig, GainTable, NetConfig, CHANNELS,
};
use integrator_twin::drift::fit_full;
use integrator_twin::harness::{
    fit_reference, measure_common_mode_drift, replay_script, run_shot, CorrectionMode, ShotConfig,
};
use integrator_twin::integrator::{ModeAction, ModeEvent};
use integrator_twin::signal::{gen_pulse_signal, PulseSpec};
use integrator_twin::{compute_cmrr, ideal_integrate, simulate, IntegratorParams, SignalTrace};

const GOLDEN_SCRIPT: &str = include_str!("data/golden_script.txt");
const GOLDEN_TRANSCRIPT: &str = include_str!("data/golden_transcript.txt");

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn cmrr_arithmetic() -> Outcome {
    let db = compute_cmrr(1.5, 4e-3, 100.0, &IntegratorParams::ideal())
        .map_err(|e| e.to_string())?
        .db()
        .ok_or("no finite reading")?;
    check(
        (db - 125.0).abs() <= 1.0,
        format!("{db:.2} dB, want 125 +/- 1"),
    )
}

fn cmrr_round_trip() -> Outcome {
    let mut worst: f64 = 0.0;
    for db in [60.0, 90.0, 125.0] {
        let params = IntegratorParams::fig5().with_cmrr_db(db);
        for v_cm in [0.13, 1.5] {
            let drift = measure_common_mode_drift(v_cm, 100.0, &params, 100.0)
                .map_err(|e| e.to_string())?;
            let got = compute_cmrr(v_cm, drift, 100.0, &params)
                .map_err(|e| e.to_string())?
                .db()
                .ok_or_else(|| format!("{db} dB at {v_cm} V: no drift"))?;
            worst = worst.max((got - db).abs());
        }
    }
    check(
        worst <= 0.5,
        format!("6 cases, worst error {worst:.2e} dB, limit 0.5 dB"),
    )
}

fn drift_correction() -> Outcome {
    let err = |e: integrator_twin::harness::HarnessError| e.to_string();
    let reference = ShotConfig::default();
    let (fit, ref_shot) = fit_reference(&reference).map_err(err)?;
    let slope_ok = (fit.slope - 1.25e-4).abs() <= 1e-9;
    let raw_span = ref_shot.report.raw.span;
    let shot = ShotConfig {
        correction: CorrectionMode::Reference,
        ..reference.clone()
    };
    let clean = run_shot(&shot, Some(&fit))
        .map_err(err)?
        .report
        .corrected
        .ok_or("no corrected trace")?;

    let noisy_ref = ShotConfig {
        noise_rms: 0.5e-3,
        seed: 1,
        ..reference
    };
    let (noisy_fit, _) = fit_reference(&noisy_ref).map_err(err)?;
    let noisy_shot = ShotConfig {
        correction: CorrectionMode::Reference,
        seed: 2,
        ..noisy_ref
    };
    let noisy = run_shot(&noisy_shot, Some(&noisy_fit))
        .map_err(err)?
        .report
        .corrected
        .ok_or("no corrected trace")?;

    let detail = format!(
        "raw {:.1} mV, slope {:.4e} V/s; corrected span {:.2e} V, normalized {:.2e} V*s; \
         with 0.5 mV noise normalized {:.1} uV*s (limit 300)",
        raw_span * 1e3,
        fit.slope,
        clean.span,
        clean.normalized,
        noisy.normalized * 1e6
    );
    check(
        slope_ok && clean.span <= 4e-3 && clean.normalized <= 200e-6 && noisy.normalized <= 300e-6,
        detail,
    )
}

fn pulse_calibration() -> Outcome {
    let mut c = Controller::in_memory(ControllerConfig::default()).map_err(|e| e.to_string())?;
    let resp = c.execute(&Command::StandardSignal);
    let payload = resp
        .payload
        .clone()
        .ok_or_else(|| format!("reply {resp}"))?;
    let mut worst_plateau: f64 = 0.0;
    let mut worst_final: f64 = 0.0;
    let channels: Vec<&str> = payload.split(';').collect();
    for ch in &channels {
        let (p, f) = ch.split_once(',').ok_or("malformed payload")?;
        let p: f64 = p.parse().map_err(|_| "bad plateau")?;
        let f: f64 = f.parse().map_err(|_| "bad final")?;
        worst_plateau = worst_plateau.max(((p - -1.25) / 1.25).abs());
        worst_final = worst_final.max(f.abs());
    }
    check(
        channels.len() == CHANNELS && worst_plateau <= 1e-3 && worst_final <= 1e-3,
        format!(
            "{} channels, plateau error {:.3}% (limit 0.1%), |final| {:.2e} V (limit 1e-3)",
            channels.len(),
            worst_plateau * 100.0,
            worst_final
        ),
    )
}

fn fuzz_line(rng: &mut ChaCha8Rng) -> Vec<u8> {
    const SEEDS: [&str; 12] = [
        "ALL1;2;3;4;5;6;7;0",
        "READAll",
        "RC3;5",
        "INTE7",
        "Initialization",
        "StandardSignal",
        "PulseSignal",
        "IntHold",
        "NET 192.168.1.10;255.255.255.0;192.168.1.1",
        "NET10.0.0.1;255.0.0.0;10.0.0.254",
        "QUIT",
        "RC0;0\r\n",
    ];
    const ALPHABET: &[u8] = b"ALRCINTEQUIteadlHoS0123456789;. \r\n\t-+,x";
    match rng.random_range(0..3) {
        0 => (0..rng.random_range(0..48)).map(|_| rng.random()).collect(),
        1 => (0..rng.random_range(0..48))
            .map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())])
            .collect(),
        _ => {
            let mut line = SEEDS[rng.random_range(0..SEEDS.len())].as_bytes().to_vec();
            for _ in 0..rng.random_range(1..4) {
                let pos = rng.random_range(0..=line.len());
                match rng.random_range(0..3) {
                    0 if pos < line.len() => {
                        line[pos] = ALPHABET[rng.random_range(0..ALPHABET.len())]
                    }
                    1 if pos < line.len() => {
                        line.remove(pos);
                    }
                    _ => line.insert(pos, rng.random()),
                }
            }
            line
        }
    }
}

fn protocol_conformance() -> Outcome {
    let controller =
        Controller::in_memory(ControllerConfig::default()).map_err(|e| e.to_string())?;
    let addr: SocketAddr = "127.0.0.1:0".parse().map_err(|_| "addr")?;
    let server = spawn(
        Arc::new(Mutex::new(controller)),
        addr,
        ServeOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let transcript = replay_script(
        &server.local_addr().to_string(),
        GOLDEN_SCRIPT,
        Duration::from_secs(30),
    )
    .map_err(|e| e.to_string())?;
    server.shutdown();
    let identical = transcript.to_string() == GOLDEN_TRANSCRIPT;
    let commands = transcript.0.len();

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let (mut crashes, mut parsed, mut unstable) = (0usize, 0usize, 0usize);
    let prev_hook = panic::take_hook();
    panic::set_hook(Box::new(|_| {}));
    for _ in 0..1_000_000 {
        let line = fuzz_line(&mut rng);
        match panic::catch_unwind(AssertUnwindSafe(|| parse_line(&line))) {
            Err(_) => crashes += 1,
            Ok(Ok(cmd)) => {
                parsed += 1;
                if parse_line(cmd.to_string().as_bytes()) != Ok(cmd) {
                    unstable += 1;
                }
            }
            Ok(Err(_)) => {}
        }
    }
    panic::set_hook(prev_hook);
    check(
        identical && commands >= 20 && crashes == 0 && unstable == 0,
        format!(
            "golden transcript of {commands} commands {}; 1e6 fuzz lines, {parsed} parsed, \
             {crashes} crashes, {unstable} unstable round trips",
            if identical { "identical" } else { "DIFFERS" }
        ),
    )
}

fn random_mutation(c: &mut Controller, rng: &mut ChaCha8Rng) -> Result<(), String> {
    let code = |rng: &mut ChaCha8Rng| rng.random_range(0..=7u8);
    let cmd = match rng.random_range(0..7) {
        0 => Command::SetAllGains(std::array::from_fn(|_| code(rng))),
        1 => Command::SetModuleGain {
            module: rng.random_range(0..CHANNELS as u8),
            gain: code(rng),
        },
        2 => Command::SetUniformGain(code(rng)),
        3 => Command::NetConfig(NetConfig {
            ip: rng.random::<u32>().into(),
            mask: rng.random::<u32>().into(),
            gateway: rng.random::<u32>().into(),
        }),
        4 => Command::IntHold,
        5 => Command::Initialization,
        _ => {
            let n = rng.random_range(0..=100);
            let table = GainTable(
                (0..n)
                    .map(|_| (rng.random::<u8>(), rng.random_range(0.1..100.0)))
                    .collect(),
            );
            return c.set_gain_table(table).map_err(|e| e.to_string());
        }
    };
    let resp = c.execute(&cmd);
    if resp.is_ok() {
        Ok(())
    } else {
        Err(format!("{cmd} -> {resp}"))
    }
}

fn persistence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut c = Controller::in_memory(ControllerConfig::default()).map_err(|e| e.to_string())?;
    let mut largest = 0;
    for round in 0..100 {
        for _ in 0..rng.random_range(1..5) {
            random_mutation(&mut c, &mut rng)?;
        }
        let before = c.state().clone();
        largest = largest.max(encode(&before).map_err(|e| e.to_string())?.len());
        c = c.power_cycle().map_err(|e| e.to_string())?;
        if *c.state() != before {
            return Err(format!("round {round}: state changed across power cycle"));
        }
    }
    check(
        largest <= EEPROM_BYTES,
        format!("100 rounds preserved; largest image {largest} of {EEPROM_BYTES} bytes"),
    )
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    })
}

fn property_suites() -> Outcome {
    let mut report = Vec::new();
    let mut fail = None;
    let mut record = |name: &str, r: Result<(), String>| match r {
        Ok(()) => report.push(format!("{name} ok")),
        Err(e) => {
            report.push(format!("{name} FAILED"));
            fail.get_or_insert(format!("{name}: {e}"));
        }
    };

    // Fitted line within 1e-12 of the true line, relative to the line's magnitude over the window.
    let lines = (
        -1e3f64..1e3,
        -10.0f64..10.0,
        -100.0f64..100.0,
        2usize..3000,
        1.0f64..1e4,
    );
    record(
        "ols-exact-line",
        runner(512)
            .run(&lines, |(a, b, t0, n, rate)| {
                let samples = (0..n).map(|k| a + b * (t0 + k as f64 / rate)).collect();
                let tr = SignalTrace::new(rate, t0, samples).unwrap();
                let fit = fit_full(&tr).unwrap();
                let scale = tr.samples().iter().fold(0.0f64, |m, v| m.max(v.abs()));
                for t in [tr.t_start(), tr.time_at(n - 1)] {
                    let err = (fit.predict(t) - (a + b * t)).abs();
                    prop_assert!(err <= 1e-12 * scale, "err {err:e} scale {scale:e}");
                }
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );

    let traces = (
        proptest::collection::vec(-1.0f64..1.0, 2..400),
        proptest::collection::vec(-1.0f64..1.0, 2..400),
        -3.0f64..3.0,
        -3.0f64..3.0,
    );
    record(
        "integrator-linearity",
        runner(256)
            .run(&traces, |(x, y, a, b)| {
                let n = x.len().min(y.len());
                let params = IntegratorParams {
                    rail_voltage: 1e3,
                    ..IntegratorParams::ideal().with_cmrr_db(125.0)
                };
                let x = SignalTrace::new(1e4, 0.0, x[..n].to_vec()).unwrap();
                let y = SignalTrace::new(1e4, 0.0, y[..n].to_vec()).unwrap();
                let cm = x.with_samples(vec![0.0; n]).unwrap();
                let run = |s: &SignalTrace| simulate(s, &cm, &params, &[]).unwrap();
                let combo = run(&x.combine(a, &y, b).unwrap());
                let (ox, oy) = (run(&x), run(&y));
                for k in 0..n {
                    let expect = a * ox.samples()[k] + b * oy.samples()[k];
                    prop_assert!(
                        (combo.samples()[k] - expect).abs() <= 1e-12 * (1.0 + expect.abs())
                    );
                }
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );

    let holds = (
        proptest::collection::vec(-5.0f64..5.0, 10..500),
        0.0f64..1.0,
        -2.0f64..2.0,
    );
    record(
        "hold-freeze",
        runner(256)
            .run(&holds, |(x, frac, v_cm)| {
                let n = x.len();
                let v = SignalTrace::new(1e3, 0.0, x).unwrap();
                let cm = v.with_samples(vec![v_cm; n]).unwrap();
                let k = ((n - 1) as f64 * frac) as usize;
                let schedule = [ModeEvent {
                    time: v.time_at(k),
                    action: ModeAction::Hold,
                }];
                let out = simulate(&v, &cm, &IntegratorParams::fig5(), &schedule).unwrap();
                let frozen = out.samples()[k];
                prop_assert!(out.samples()[k..].iter().all(|&s| s == frozen));
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );

    let pulses = (0.1f64..5.0, 1e-3f64..0.05, 1e4f64..5e5);
    record(
        "bipolar-zero-area-and-return",
        runner(128)
            .run(&pulses, |(amp, width, rate)| {
                let spec = PulseSpec {
                    amplitude: amp,
                    width,
                    polarity_sequence: vec![1, -1],
                };
                let sig = gen_pulse_signal(&spec, rate).unwrap();
                prop_assert!(
                    sig.area().abs() <= 1e-12 * amp * width,
                    "area {}",
                    sig.area()
                );
                let params = IntegratorParams::ideal();
                let out = ideal_integrate(&sig, &params).unwrap();
                // One trapezoid step at the leading edge is the only residue.
                let step = amp / rate / params.time_constant();
                let last = out.last().unwrap();
                prop_assert!(
                    last.abs() <= 0.5 * step * (1.0 + 1e-9),
                    "final {last} step {step}"
                );
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );

    match fail {
        None => Ok(report.join(", ")),
        Some(f) => Err(format!("{}; {f}", report.join(", "))),
    }
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("cmrr-arithmetic", cmrr_arithmetic),
        ("cmrr-round-trip", cmrr_round_trip),
        ("drift-correction", drift_correction),
        ("pulse-calibration", pulse_calibration),
        ("protocol-conformance", protocol_conformance),
        ("persistence", persistence),
        ("property-suites", property_suites),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(f).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {} {name} ({secs:.1} s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {} {name} ({secs:.1} s): {detail}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
