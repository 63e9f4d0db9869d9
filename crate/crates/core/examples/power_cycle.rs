//! Parameters survive a power cycle through the EEPROM image.
//!
//! Run with `cargo run --example power_cycle`.

use integrator_twin::controller::store::{encode, EEPROM_BYTES};
use integrator_twin::controller::{Controller, ControllerConfig, FileStore};

pub fn run() -> Result<bool, Box<dyn std::error::Error>> {
    let path = std::env::temp_dir().join(format!("integrator-twin-{}.eeprom", std::process::id()));
    let _ = std::fs::remove_file(&path);

    let mut c = Controller::boot(Box::new(FileStore::new(&path)), ControllerConfig::default())?;
    for line in [
        "ALL7;6;5;4;3;2;1;0",
        "RC2;7",
        "NET 10.0.0.5;255.0.0.0;10.0.0.1",
        "IntHold",
    ] {
        let (_, resp) = c.execute_line(line.as_bytes());
        println!("{line:<34} -> {resp}");
    }
    let before = c.state().clone();
    let image = encode(&before)?;
    println!("image: {} of {EEPROM_BYTES} bytes", image.len());
    drop(c);

    // A new process would do exactly this: boot from the same file.
    let c = Controller::boot(Box::new(FileStore::new(&path)), ControllerConfig::default())?;
    let same = *c.state() == before;
    println!(
        "after reboot: gains {:?}, mode {:?}, ip {}",
        c.state().gains,
        c.state().mode,
        c.state().net.ip
    );
    println!("state preserved: {same}");
    let _ = std::fs::remove_file(&path);
    Ok(same)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run().map(|_| ())
}
