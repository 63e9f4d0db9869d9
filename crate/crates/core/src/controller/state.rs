use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::command::{NetConfig, CHANNELS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ControllerMode {
    #[default]
    Normal,
    Hold,
    StandardSignalTest,
    PulseSignalTest,
}

impl ControllerMode {
    pub(crate) fn to_byte(self) -> u8 {
        match self {
            ControllerMode::Normal => 0,
            ControllerMode::Hold => 1,
            ControllerMode::StandardSignalTest => 2,
            ControllerMode::PulseSignalTest => 3,
        }
    }

    pub(crate) fn from_byte(b: u8) -> Option<Self> {
        Some(match b {
            0 => ControllerMode::Normal,
            1 => ControllerMode::Hold,
            2 => ControllerMode::StandardSignalTest,
            3 => ControllerMode::PulseSignalTest,
            _ => return None,
        })
    }

    pub fn is_signal_test(self) -> bool {
        matches!(
            self,
            ControllerMode::StandardSignalTest | ControllerMode::PulseSignalTest
        )
    }
}

/// Gain code to amplifier multiplier.
///
/// The default set {1, 2, 4, 5, 8, 10, 16, 20} is configuration only; load the real table
/// of a given amplifier from file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GainTable(pub BTreeMap<u8, f64>);

impl Default for GainTable {
    fn default() -> Self {
        let multipliers = [1.0, 2.0, 4.0, 5.0, 8.0, 10.0, 16.0, 20.0];
        Self((0u8..).zip(multipliers).collect())
    }
}

impl GainTable {
    /// Multiplier for `code`; codes missing from the table pass the signal through.
    pub fn multiplier(&self, code: u8) -> f64 {
        self.0.get(&code).copied().unwrap_or(1.0)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Everything the controller keeps in its parameter store.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ControllerState {
    pub gains: [u8; CHANNELS],
    pub mode: ControllerMode,
    pub net: NetConfig,
    pub gain_table: GainTable,
}

impl ControllerState {
    /// `d;d;d;d;d;d;d;d`, the `READAll` payload.
    pub fn gains_payload(&self) -> String {
        let mut s = String::with_capacity(2 * CHANNELS);
        super::command::write_codes(&mut s, &self.gains).expect("writing to a String");
        s
    }
}
