//! Talks to the controller over TCP exactly as the remote PC does.
//!
//! Starts a server on an ephemeral port, plays a short script and prints the transcript.
//! Run with `cargo run --example controller_session`.

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use integrator_twin::controller::server::{spawn, ServeOptions};
use integrator_twin::controller::{Controller, ControllerConfig};
use integrator_twin::harness::{replay_script, Transcript};

const SCRIPT: &str = "\
# read the power-up gains
READAll
ALL1;1;2;2;3;3;4;4
RC7;0
READAll
StandardSignal
IntHold
StandardSignal
Initialization
NET 192.168.10.20;255.255.255.0;192.168.10.1
RC8;1
INTE9
";

pub fn run() -> Result<Transcript, Box<dyn std::error::Error>> {
    let controller = Controller::in_memory(ControllerConfig::default())?;
    let shared = Arc::new(Mutex::new(controller));
    let addr: SocketAddr = "127.0.0.1:0".parse()?;
    let server = spawn(Arc::clone(&shared), addr, ServeOptions::default())?;

    let transcript = replay_script(
        &server.local_addr().to_string(),
        SCRIPT,
        Duration::from_secs(10),
    )?;
    print!("{transcript}");
    println!(
        "{} of {} requests were refused",
        transcript.error_count(),
        transcript.0.len()
    );

    let state = shared
        .lock()
        .map_err(|_| "controller lock poisoned")?
        .state()
        .clone();
    println!("stored gains {:?}, ip {}", state.gains, state.net.ip);
    server.shutdown();
    Ok(transcript)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run().map(|_| ())
}
