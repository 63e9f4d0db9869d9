//! Command-line front end: scripted shots, CMRR tests, the controller server and its client.
//!
//! Every subcommand reads an optional TOML file (`--config`) with `[shot]`, `[cmrr]`,
//! `[serve]` and `[client]` tables; flags override the file.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::{Deserialize, Serialize};

use integrator_twin::controller::server::{self, ServeOptions, DEFAULT_PORT};
use integrator_twin::controller::{
    Controller, ControllerConfig, ControllerMode, FileStore, GainTable, MemoryStore, ParameterStore,
};
use integrator_twin::harness::{
    self, client_send, cmrr_test, export_trace, fit_reference, import_trace, replay_script,
    run_shot, CorrectionMode, HarnessError, ShotConfig, ShotReport, Source, Thresholds,
};
use integrator_twin::{DriftFit, IntegratorParams};

#[derive(Parser)]
#[command(
    name = "integrator-twin",
    version,
    about = "Simulated long-pulse integrator system"
)]
struct Cli {
    /// TOML file with [shot], [cmrr], [serve] and [client] tables.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Acquire one shot, optionally corrected with a reference fit.
    RunShot {
        #[command(flatten)]
        shot: ShotArgs,
        /// Reference fit (JSON from fit-reference); enables correction.
        #[arg(long)]
        fit: Option<PathBuf>,
        /// Directory for raw.csv, corrected.csv and report.json.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Run a reference shot and write its fitted drift line as JSON.
    FitReference {
        #[command(flatten)]
        shot: ShotArgs,
        /// Fit window start and end in seconds, e.g. `0,400`.
        #[arg(long, value_parser = parse_window)]
        window: Option<(f64, f64)>,
        #[arg(long)]
        out: PathBuf,
        /// Also export the reference trace.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Measure common-mode rejection with shorted differential input.
    CmrrTest {
        /// Common-mode voltage (V).
        #[arg(long)]
        vcm: Option<f64>,
        /// Test window (s).
        #[arg(long)]
        window: Option<f64>,
        #[arg(long)]
        rate: Option<f64>,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        cmrr_db: Option<f64>,
    },
    /// Serve the controller protocol over TCP.
    Serve {
        #[arg(long)]
        listen: Option<SocketAddr>,
        /// Parameter image file; in-memory when absent.
        #[arg(long)]
        store: Option<PathBuf>,
        /// JSON map of gain code to multiplier.
        #[arg(long)]
        gain_table: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        /// Generator noise (V RMS).
        #[arg(long)]
        noise_rms: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Re-bind to the stored NET address after the session that changed it.
        #[arg(long)]
        follow_net: bool,
        /// Local selector switch position at power-up.
        #[arg(long, value_enum)]
        local_switch: Option<SwitchPosition>,
    },
    /// Send one request line, or replay a script and print the transcript.
    Send {
        #[arg(long)]
        addr: Option<String>,
        #[arg(long)]
        timeout_ms: Option<u64>,
        /// Script file, one request per line.
        #[arg(long, conflicts_with = "line")]
        script: Option<PathBuf>,
        /// Exit with the protocol error code if any scripted request fails.
        #[arg(long)]
        strict: bool,
        line: Option<String>,
    },
    /// Write a shot trace (source, raw or corrected) to CSV.
    Export {
        #[command(flatten)]
        shot: ShotArgs,
        #[arg(long, value_enum, default_value_t = TraceKind::Raw)]
        trace: TraceKind,
        #[arg(long)]
        fit: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute a shot report from exported CSV traces.
    Report {
        #[arg(long)]
        raw: PathBuf,
        #[arg(long)]
        corrected: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        cmrr_db: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ShotArgs {
    #[arg(long)]
    duration: Option<f64>,
    /// Sample rate (Hz).
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long, value_enum)]
    source: Option<SourceKind>,
    /// Peak flux of the probe-synthetic source (V*s).
    #[arg(long, default_value_t = 0.05)]
    flux_peak: f64,
    /// Width of the pulse source (s).
    #[arg(long, default_value_t = 1.0)]
    pulse_width: f64,
    /// Common-mode voltage (V).
    #[arg(long)]
    common_mode: Option<f64>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    cmrr_db: Option<f64>,
    /// Output noise (V RMS).
    #[arg(long)]
    noise_rms: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// `reference` needs `--fit`; giving `--fit` implies it.
    #[arg(long, value_enum)]
    correction: Option<CorrectionArg>,
    /// Subtract only the fitted slope and keep the trace's offset.
    #[arg(long)]
    keep_offset: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum CorrectionArg {
    None,
    Reference,
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceKind {
    Zero,
    Probe,
    Standard,
    Pulse,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TraceKind {
    Source,
    Raw,
    Corrected,
}

#[derive(Clone, Copy, ValueEnum)]
enum SwitchPosition {
    Normal,
    Hold,
    Standard,
    Pulse,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    shot: ShotConfig,
    cmrr: CmrrSection,
    serve: ServeSection,
    client: ClientSection,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CmrrSection {
    vcm: f64,
    window: f64,
    rate: f64,
    preset: String,
    cmrr_db: Option<f64>,
}

impl Default for CmrrSection {
    fn default() -> Self {
        Self {
            vcm: 1.5,
            window: 100.0,
            rate: 100.0,
            preset: "fig5".into(),
            cmrr_db: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ServeSection {
    listen: SocketAddr,
    store: Option<PathBuf>,
    gain_table: Option<PathBuf>,
    preset: String,
    noise_rms: f64,
    seed: u64,
    follow_net: bool,
}

impl Default for ServeSection {
    fn default() -> Self {
        Self {
            listen: SocketAddr::from(([127, 0, 0, 1], DEFAULT_PORT)),
            store: None,
            gain_table: None,
            preset: "ideal".into(),
            noise_rms: 0.0,
            seed: 0,
            follow_net: false,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ClientSection {
    addr: String,
    timeout_ms: u64,
}

impl Default for ClientSection {
    fn default() -> Self {
        Self {
            addr: format!("127.0.0.1:{DEFAULT_PORT}"),
            timeout_ms: 30_000,
        }
    }
}

fn parse_window(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected START,END")?;
    let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    Ok((parse(a)?, parse(b)?))
}

fn load_config(path: Option<&Path>) -> Result<FileConfig, HarnessError> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    toml::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
}

fn io_err(path: &Path, source: std::io::Error) -> HarnessError {
    HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<(), HarnessError> {
    let text =
        serde_json::to_string_pretty(value).map_err(|e| HarnessError::Config(e.to_string()))?;
    match path {
        Some(p) => fs::write(p, text + "\n").map_err(|e| io_err(p, e)),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn read_fit(path: &Path) -> Result<DriftFit, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
}

impl ShotArgs {
    fn apply(&self, mut cfg: ShotConfig) -> ShotConfig {
        if let Some(v) = self.duration {
            cfg.duration = v;
        }
        if let Some(v) = self.rate {
            cfg.sample_rate = v;
        }
        if let Some(kind) = self.source {
            cfg.source = match kind {
                SourceKind::Zero => Source::ZeroInput,
                SourceKind::Probe => Source::ProbeSynthetic {
                    flux_peak: self.flux_peak,
                },
                SourceKind::Standard => Source::StandardSignal,
                SourceKind::Pulse => Source::Pulse {
                    width: self.pulse_width,
                },
            };
        }
        if let Some(v) = self.common_mode {
            cfg.common_mode = v;
        }
        if let Some(v) = &self.preset {
            cfg.preset = v.clone();
        }
        if self.cmrr_db.is_some() {
            cfg.cmrr_db = self.cmrr_db;
        }
        if let Some(v) = self.noise_rms {
            cfg.noise_rms = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(c) = self.correction {
            cfg.correction = match c {
                CorrectionArg::None => CorrectionMode::None,
                CorrectionArg::Reference => CorrectionMode::Reference,
            };
        }
        cfg
    }
}

fn shot_with_fit(
    cfg: &mut ShotConfig,
    shot: &ShotArgs,
    fit: Option<&Path>,
) -> Result<Option<DriftFit>, HarnessError> {
    let fit = fit.map(read_fit).transpose()?;
    if fit.is_some() {
        cfg.correction = CorrectionMode::Reference;
    }
    Ok(fit.map(|f| if shot.keep_offset { f.without_intercept() } else { f }))
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    let file = load_config(cli.config.as_deref())?;
    match cli.cmd {
        Cmd::RunShot { shot, fit, out_dir } => {
            let mut cfg = shot.apply(file.shot);
            let fit = shot_with_fit(&mut cfg, &shot, fit.as_deref())?;
            let out = run_shot(&cfg, fit.as_ref())?;
            if let Some(dir) = out_dir {
                fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
                export_trace(&out.raw, dir.join("raw.csv"))?;
                if let Some(c) = &out.corrected {
                    export_trace(c, dir.join("corrected.csv"))?;
                }
                write_json(&out.report, Some(&dir.join("report.json")))?;
            }
            write_json(&out.report, None)?;
            if !out.report.pass {
                return Err(HarnessError::Threshold);
            }
        }
        Cmd::FitReference {
            shot,
            window,
            out,
            trace,
        } => {
            let mut cfg = shot.apply(file.shot);
            if window.is_some() {
                cfg.fit_window = window;
            }
            let (fit, ref_shot) = fit_reference(&cfg)?;
            info!(
                "slope {:.6e} V/s, rms residual {:.3e} V",
                fit.slope, fit.rms_residual
            );
            write_json(&fit, Some(&out))?;
            if let Some(p) = trace {
                export_trace(&ref_shot.raw, p)?;
            }
            write_json(&fit, None)?;
        }
        Cmd::CmrrTest {
            vcm,
            window,
            rate,
            preset,
            cmrr_db,
        } => {
            let sec = file.cmrr;
            let mut params = IntegratorParams::preset(preset.as_deref().unwrap_or(&sec.preset))?;
            if let Some(db) = cmrr_db.or(sec.cmrr_db) {
                params = params.with_cmrr_db(db);
            }
            let result = cmrr_test(
                vcm.unwrap_or(sec.vcm),
                window.unwrap_or(sec.window),
                &params,
                rate.unwrap_or(sec.rate),
            )?;
            write_json(&result, None)?;
        }
        Cmd::Serve {
            listen,
            store,
            gain_table,
            preset,
            noise_rms,
            seed,
            follow_net,
            local_switch,
        } => {
            let sec = file.serve;
            let config = ControllerConfig {
                channel_params: IntegratorParams::preset(preset.as_deref().unwrap_or(&sec.preset))?,
                generator_noise_rms: noise_rms.unwrap_or(sec.noise_rms),
                seed: seed.unwrap_or(sec.seed),
                ..ControllerConfig::default()
            };
            let store: Box<dyn ParameterStore> = match store.or(sec.store) {
                Some(p) => Box::new(FileStore::new(p)),
                None => Box::new(MemoryStore::new()),
            };
            let mut controller = Controller::boot(store, config).map_err(controller_err)?;
            if let Some(p) = gain_table.or(sec.gain_table) {
                let text = fs::read_to_string(&p).map_err(|e| io_err(&p, e))?;
                let table: GainTable = serde_json::from_str(&text)
                    .map_err(|e| HarnessError::Config(format!("{}: {e}", p.display())))?;
                controller.set_gain_table(table).map_err(controller_err)?;
            }
            if let Some(pos) = local_switch {
                let mode = match pos {
                    SwitchPosition::Normal => ControllerMode::Normal,
                    SwitchPosition::Hold => ControllerMode::Hold,
                    SwitchPosition::Standard => ControllerMode::StandardSignalTest,
                    SwitchPosition::Pulse => ControllerMode::PulseSignalTest,
                };
                controller.local_switch(mode).map_err(controller_err)?;
            }
            let addr = listen.unwrap_or(sec.listen);
            let options = ServeOptions {
                follow_net_config: follow_net || sec.follow_net,
            };
            let handle = server::spawn(Arc::new(Mutex::new(controller)), addr, options)
                .map_err(|e| io_err(Path::new(&addr.to_string()), e))?;
            println!("listening on {}", handle.local_addr());
            handle.join();
        }
        Cmd::Send {
            addr,
            timeout_ms,
            script,
            strict,
            line,
        } => {
            let sec = file.client;
            let addr = addr.unwrap_or(sec.addr);
            let timeout = Duration::from_millis(timeout_ms.unwrap_or(sec.timeout_ms));
            match (script, line) {
                (Some(path), _) => {
                    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
                    let transcript = replay_script(&addr, &text, timeout)?;
                    print!("{transcript}");
                    if strict && transcript.error_count() > 0 {
                        let code = transcript
                            .0
                            .iter()
                            .find_map(|(_, r)| r.strip_prefix("ERR ")?.parse().ok())
                            .ok_or_else(|| {
                                HarnessError::Config("unparseable error reply".into())
                            })?;
                        return Err(HarnessError::Remote(code));
                    }
                }
                (None, Some(line)) => {
                    let resp = client_send(&addr, &line, timeout)?;
                    println!("{resp}");
                    if let Some(code) = resp.error_code() {
                        return Err(HarnessError::Remote(code));
                    }
                }
                (None, None) => {
                    return Err(HarnessError::Config(
                        "give a request line or --script".into(),
                    ))
                }
            }
        }
        Cmd::Export {
            shot,
            trace,
            fit,
            out,
        } => {
            let mut cfg = shot.apply(file.shot);
            let fit = shot_with_fit(&mut cfg, &shot, fit.as_deref())?;
            let data = match trace {
                TraceKind::Source => cfg.source_trace()?,
                TraceKind::Raw => run_shot(&cfg, fit.as_ref())?.raw,
                TraceKind::Corrected => run_shot(&cfg, fit.as_ref())?
                    .corrected
                    .ok_or(HarnessError::MissingReference)?,
            };
            export_trace(&data, &out)?;
            info!("wrote {} samples to {}", data.len(), out.display());
        }
        Cmd::Report {
            raw,
            corrected,
            preset,
            cmrr_db,
            out,
        } => {
            let shot = ShotConfig {
                preset: preset.unwrap_or(file.shot.preset.clone()),
                cmrr_db: cmrr_db.or(file.shot.cmrr_db),
                ..file.shot
            };
            let params = shot.params()?;
            let thresholds: Thresholds = shot.thresholds;
            let raw = import_trace(&raw)?;
            let corrected = corrected.map(import_trace).transpose()?;
            let report = ShotReport::from_traces(&raw, corrected.as_ref(), &params, thresholds);
            write_json(&report, out.as_deref())?;
            if out.is_some() {
                write_json(&report, None)?;
            }
            if !report.pass {
                return Err(HarnessError::Threshold);
            }
        }
    }
    Ok(())
}

fn controller_err(e: integrator_twin::controller::ControllerError) -> HarnessError {
    match e {
        integrator_twin::controller::ControllerError::Store(s) => HarnessError::Store(s),
        integrator_twin::controller::ControllerError::Integrator(i) => HarnessError::Integrator(i),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::from(harness::exit::SUCCESS as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
