//! Network-facing twin of the eight-channel integrator controller.
//!
//! [`Controller`] owns the persisted [`ControllerState`], a bank of simulated integrator
//! channels and the [`ParameterStore`] the state is written through. Requests arrive as
//! [`Command`]s (see [`command`] for the wire grammar) and every request yields exactly one
//! [`Response`].
//!
//! Besides the network path, the hardware front panel offers two more ways to drive the
//! integrators: an external trigger line used during experiments and a local selector switch
//! used for debugging. They enter through [`Controller::hardware_trigger`] and
//! [`Controller::local_switch`].

pub mod command;
pub mod server;
pub mod state;
pub mod store;

use log::{debug, warn};
use thiserror::Error;

use crate::integrator::{IntegratorChannel, IntegratorError, IntegratorParams, ModeAction};
use crate::signal::{add_noise, gen_pulse_signal, gen_standard_signal, PulseSpec, SignalTrace};

pub use command::{parse_command, parse_line, Command, ErrorCode, NetConfig, Response, Status};
pub use command::{CHANNELS, MAX_GAIN_CODE};
pub use state::{ControllerMode, ControllerState, GainTable};
pub use store::{FileStore, MemoryStore, ParameterStore, StoreError};

#[derive(Debug, Error)]
pub enum ControllerError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
}

/// Runtime settings that are not part of the persisted state.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    /// Parameters of every channel in the bank.
    pub channel_params: IntegratorParams,
    /// Sample rate used to play the bipolar calibration signal (Hz).
    pub standard_rate: f64,
    /// Width of the single positive test pulse (s).
    pub pulse_width: f64,
    /// Sample rate used to play the single pulse (Hz).
    pub pulse_rate: f64,
    /// RMS noise added to the generator output (V); 0 disables it.
    pub generator_noise_rms: f64,
    /// Seed for generator noise. Test run `n` uses `seed + n`.
    pub seed: u64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            channel_params: IntegratorParams::ideal(),
            standard_rate: 1e6,
            pulse_width: 1.0,
            pulse_rate: 1e5,
            generator_noise_rms: 0.0,
            seed: 0,
        }
    }
}

/// Outcome of a generator test on one channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelRun {
    /// Output at the end of the first lobe (V).
    pub plateau: f64,
    /// Output after the trailing zero section (V).
    pub final_value: f64,
}

/// The eight simulated integrator channels behind the controller.
#[derive(Debug, Clone)]
pub struct ChannelBank {
    channels: Vec<IntegratorChannel>,
}

impl ChannelBank {
    pub fn new(params: IntegratorParams) -> Result<Self, IntegratorError> {
        Self::with_params(vec![params; CHANNELS])
    }

    /// Bank with individually specified channels, e.g. resistor tolerance spread.
    pub fn with_params(params: Vec<IntegratorParams>) -> Result<Self, IntegratorError> {
        let channels = params
            .into_iter()
            .map(IntegratorChannel::new)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { channels })
    }

    pub fn outputs(&self) -> Vec<f64> {
        self.channels
            .iter()
            .map(IntegratorChannel::output)
            .collect()
    }

    pub fn channels(&self) -> &[IntegratorChannel] {
        &self.channels
    }

    pub fn apply_all(&mut self, action: ModeAction) {
        for ch in &mut self.channels {
            ch.apply(action);
            ch.disconnect_input();
        }
    }

    /// Lets `duration` seconds pass with the inputs shorted (zero differential and common mode).
    pub fn advance(&mut self, duration: f64, rate: f64) {
        for ch in &mut self.channels {
            ch.run_constant(0.0, 0.0, duration, rate);
        }
    }

    /// Resets every channel and plays `signal` into all of them.
    fn run_test(&mut self, signal: &SignalTrace, plateau_index: usize) -> Vec<ChannelRun> {
        let dt = signal.dt();
        self.channels
            .iter_mut()
            .map(|ch| {
                ch.apply(ModeAction::Reset);
                ch.disconnect_input();
                let mut plateau = 0.0;
                for (k, &v) in signal.samples().iter().enumerate() {
                    let out = ch.step(v, 0.0, dt);
                    if k == plateau_index {
                        plateau = out;
                    }
                }
                ch.disconnect_input();
                ChannelRun {
                    plateau,
                    final_value: ch.output(),
                }
            })
            .collect()
    }
}

/// Edges on the external hardware control line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriggerEdge {
    /// Start of a shot: zero the integrators and integrate.
    Start,
    /// End of a shot: hold the integration value.
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TestSignal {
    Standard,
    Pulse,
}

pub struct Controller {
    state: ControllerState,
    bank: ChannelBank,
    store: Box<dyn ParameterStore>,
    config: ControllerConfig,
    test_runs: u64,
    last_test: Option<Vec<ChannelRun>>,
    net_changed: bool,
}

impl std::fmt::Debug for Controller {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Controller")
            .field("state", &self.state)
            .field("outputs", &self.bank.outputs())
            .finish_non_exhaustive()
    }
}

impl Controller {
    /// Powers up from `store`. A blank store is initialised with the default state.
    pub fn boot(
        mut store: Box<dyn ParameterStore>,
        config: ControllerConfig,
    ) -> Result<Self, ControllerError> {
        let state = match store.load()? {
            Some(image) => store::decode(&image)?,
            None => {
                let state = ControllerState::default();
                store.save(&store::encode(&state)?)?;
                state
            }
        };
        let mut bank = ChannelBank::new(config.channel_params)?;
        if state.mode == ControllerMode::Hold {
            bank.apply_all(ModeAction::Hold);
        }
        Ok(Self {
            state,
            bank,
            store,
            config,
            test_runs: 0,
            last_test: None,
            net_changed: false,
        })
    }

    /// Fresh controller on a blank in-memory store.
    pub fn in_memory(config: ControllerConfig) -> Result<Self, ControllerError> {
        Self::boot(Box::new(MemoryStore::new()), config)
    }

    /// Drops all volatile state and boots again from the same store.
    pub fn power_cycle(self) -> Result<Self, ControllerError> {
        Self::boot(self.store, self.config)
    }

    pub fn into_store(self) -> Box<dyn ParameterStore> {
        self.store
    }

    pub fn state(&self) -> &ControllerState {
        &self.state
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    pub fn bank(&self) -> &ChannelBank {
        &self.bank
    }

    /// Channel outputs after the remote-controlled amplifiers.
    pub fn amplified_outputs(&self) -> Vec<f64> {
        self.bank
            .outputs()
            .iter()
            .zip(self.state.gains)
            .map(|(v, g)| v * self.state.gain_table.multiplier(g))
            .collect()
    }

    /// Per-channel result of the most recent generator test.
    pub fn last_test(&self) -> Option<&[ChannelRun]> {
        self.last_test.as_deref()
    }

    /// Returns and clears the flag set when a `NET` command changed the stored addresses.
    pub fn take_net_changed(&mut self) -> bool {
        std::mem::take(&mut self.net_changed)
    }

    /// Lets simulated time pass with the integrator inputs shorted.
    pub fn advance(&mut self, duration: f64, rate: f64) {
        self.bank.advance(duration, rate);
    }

    /// Replaces the gain table and persists it.
    pub fn set_gain_table(&mut self, table: GainTable) -> Result<(), ControllerError> {
        let mut next = self.state.clone();
        next.gain_table = table;
        self.commit(next)?;
        Ok(())
    }

    pub fn execute_line(&mut self, line: &[u8]) -> (Option<Command>, Response) {
        match parse_line(line) {
            Ok(cmd) => (Some(cmd), self.execute(&cmd)),
            Err(code) => (None, Response::err(code)),
        }
    }

    /// Executes one request and persists any state change before replying.
    ///
    /// If the store rejects the new state, the controller keeps the previous one and replies
    /// `ERR store`.
    pub fn execute(&mut self, cmd: &Command) -> Response {
        let mode = self.state.mode;
        let busy = match cmd {
            Command::ReadAll | Command::Quit | Command::Initialization => false,
            Command::StandardSignal | Command::PulseSignal => mode != ControllerMode::Normal,
            Command::IntHold => mode.is_signal_test(),
            Command::SetAllGains(_)
            | Command::SetModuleGain { .. }
            | Command::SetUniformGain(_)
            | Command::NetConfig(_) => mode.is_signal_test(),
        };
        if busy {
            debug!("{cmd} refused in {mode:?}");
            return Response::err(ErrorCode::Busy);
        }

        let mut next = self.state.clone();
        match *cmd {
            Command::ReadAll => return Response::ok_with(self.state.gains_payload()),
            Command::Quit => return Response::ok(),
            Command::SetAllGains(g) => next.gains = g,
            Command::SetModuleGain { module, gain } => next.gains[usize::from(module)] = gain,
            Command::SetUniformGain(g) => next.gains = [g; CHANNELS],
            Command::NetConfig(net) => next.net = net,
            Command::IntHold => next.mode = ControllerMode::Hold,
            Command::Initialization => next.mode = ControllerMode::Normal,
            Command::StandardSignal => return self.run_signal_test(TestSignal::Standard, true),
            Command::PulseSignal => return self.run_signal_test(TestSignal::Pulse, true),
        }
        if let Err(e) = self.commit(next) {
            warn!("{cmd}: {e}");
            return Response::err(ErrorCode::Store);
        }
        match cmd {
            Command::IntHold => self.bank.apply_all(ModeAction::Hold),
            Command::Initialization => self.bank.apply_all(ModeAction::Reset),
            Command::NetConfig(_) => self.net_changed = true,
            _ => {}
        }
        Response::ok()
    }

    /// External trigger line. Overrides the network hold state the same way the hardware does.
    pub fn hardware_trigger(&mut self, edge: TriggerEdge) -> Result<(), ControllerError> {
        let mut next = self.state.clone();
        next.mode = match edge {
            TriggerEdge::Start => ControllerMode::Normal,
            TriggerEdge::Stop => ControllerMode::Hold,
        };
        self.commit(next)?;
        self.bank.apply_all(match edge {
            TriggerEdge::Start => ModeAction::Reset,
            TriggerEdge::Stop => ModeAction::Hold,
        });
        Ok(())
    }

    /// Local selector switch. The test positions connect the generator, play the signal and
    /// stay in test mode, refusing network changes until the switch returns to normal.
    pub fn local_switch(&mut self, position: ControllerMode) -> Result<Response, ControllerError> {
        match position {
            ControllerMode::Normal | ControllerMode::Hold => {
                let mut next = self.state.clone();
                next.mode = position;
                self.commit(next)?;
                self.bank.apply_all(match position {
                    ControllerMode::Hold => ModeAction::Hold,
                    _ => ModeAction::Integrate,
                });
                Ok(Response::ok())
            }
            ControllerMode::StandardSignalTest => {
                Ok(self.run_signal_test(TestSignal::Standard, false))
            }
            ControllerMode::PulseSignalTest => Ok(self.run_signal_test(TestSignal::Pulse, false)),
        }
    }

    fn commit(&mut self, next: ControllerState) -> Result<(), StoreError> {
        if next != self.state {
            self.store.save(&store::encode(&next)?)?;
            self.state = next;
        }
        Ok(())
    }

    fn test_signal(&mut self, which: TestSignal) -> (SignalTrace, usize) {
        let (trace, lobe) = match which {
            TestSignal::Standard => {
                let rate = self.config.standard_rate;
                let trace = gen_standard_signal(rate).expect("configured standard rate is valid");
                (
                    trace,
                    (crate::signal::STANDARD_LOBE_WIDTH * rate).round() as usize,
                )
            }
            TestSignal::Pulse => {
                let rate = self.config.pulse_rate;
                let spec = PulseSpec::positive(self.config.pulse_width);
                let trace = gen_pulse_signal(&spec, rate).expect("configured pulse is valid");
                (trace, (self.config.pulse_width * rate).round() as usize)
            }
        };
        let seed = self.config.seed.wrapping_add(self.test_runs);
        self.test_runs += 1;
        let trace = add_noise(&trace, self.config.generator_noise_rms, seed)
            .expect("configured noise level is valid");
        (trace, lobe)
    }

    fn run_signal_test(&mut self, which: TestSignal, auto_return: bool) -> Response {
        let test_mode = match which {
            TestSignal::Standard => ControllerMode::StandardSignalTest,
            TestSignal::Pulse => ControllerMode::PulseSignalTest,
        };
        let mut during = self.state.clone();
        during.mode = test_mode;
        if let Err(e) = self.commit(during) {
            warn!("entering {test_mode:?}: {e}");
            return Response::err(ErrorCode::Store);
        }
        let (signal, lobe) = self.test_signal(which);
        let runs = self.bank.run_test(&signal, lobe);
        let payload = runs
            .iter()
            .map(|r| format!("{:.6},{:.6}", r.plateau, r.final_value))
            .collect::<Vec<_>>()
            .join(";");
        self.last_test = Some(runs);
        if auto_return {
            let mut after = self.state.clone();
            after.mode = ControllerMode::Normal;
            if let Err(e) = self.commit(after) {
                warn!("leaving {test_mode:?}: {e}");
                return Response::err(ErrorCode::Store);
            }
        }
        Response::ok_with(payload)
    }
}
