//! Bounded parameter store modelled on an 8 Kbit (1024 byte) serial EEPROM.
//!
//! Image layout, all integers little-endian:
//!
//! ```text
//! offset  size  field
//! 0       2     format version (currently 1)
//! 2       8     gain code per channel
//! 10      1     mode (0 normal, 1 hold, 2 standard-signal test, 3 pulse test)
//! 11      4     IP address
//! 15      4     netmask
//! 19      4     gateway
//! 23      2     gain table entry count N
//! 25      9*N   entries: code (u8), multiplier (f64 bits)
//! ```
//!
//! The whole image, header included, must fit in [`EEPROM_BYTES`].

use std::fs;
use std::io;
use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::command::{NetConfig, CHANNELS, MAX_GAIN_CODE};
use super::state::{ControllerMode, ControllerState, GainTable};

pub const EEPROM_BYTES: usize = 1024;
pub const FORMAT_VERSION: u16 = 1;
const HEADER_BYTES: usize = 2;
const FIXED_BYTES: usize = HEADER_BYTES + CHANNELS + 1 + 12 + 2;
const ENTRY_BYTES: usize = 9;

/// Largest gain table that still fits the store.
pub const MAX_GAIN_TABLE_ENTRIES: usize = (EEPROM_BYTES - FIXED_BYTES) / ENTRY_BYTES;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("parameter image of {0} bytes exceeds the {EEPROM_BYTES}-byte store")]
    Overflow(usize),
    #[error("unsupported parameter format version {0}")]
    Version(u16),
    #[error("corrupt parameter image: {0}")]
    Corrupt(&'static str),
    #[error("parameter store {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

pub fn encode(state: &ControllerState) -> Result<Vec<u8>, StoreError> {
    let size = FIXED_BYTES + ENTRY_BYTES * state.gain_table.len();
    if size > EEPROM_BYTES {
        return Err(StoreError::Overflow(size));
    }
    let mut out = Vec::with_capacity(size);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&state.gains);
    out.push(state.mode.to_byte());
    for addr in [state.net.ip, state.net.mask, state.net.gateway] {
        out.extend_from_slice(&addr.octets());
    }
    out.extend_from_slice(&(state.gain_table.len() as u16).to_le_bytes());
    for (&code, &mult) in &state.gain_table.0 {
        out.push(code);
        out.extend_from_slice(&mult.to_bits().to_le_bytes());
    }
    debug_assert_eq!(out.len(), size);
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], StoreError> {
        if self.bytes.len() < n {
            return Err(StoreError::Corrupt("truncated image"));
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], StoreError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
}

pub fn decode(image: &[u8]) -> Result<ControllerState, StoreError> {
    if image.len() > EEPROM_BYTES {
        return Err(StoreError::Overflow(image.len()));
    }
    let mut cur = Cursor { bytes: image };
    let version = u16::from_le_bytes(cur.array()?);
    if version != FORMAT_VERSION {
        return Err(StoreError::Version(version));
    }
    let gains: [u8; CHANNELS] = cur.array()?;
    if gains.iter().any(|&g| g > MAX_GAIN_CODE) {
        return Err(StoreError::Corrupt("gain code out of range"));
    }
    let mode = ControllerMode::from_byte(cur.array::<1>()?[0])
        .ok_or(StoreError::Corrupt("unknown mode byte"))?;
    let ip = Ipv4Addr::from(cur.array::<4>()?);
    let mask = Ipv4Addr::from(cur.array::<4>()?);
    let gateway = Ipv4Addr::from(cur.array::<4>()?);
    let entries = u16::from_le_bytes(cur.array()?) as usize;
    let mut table = std::collections::BTreeMap::new();
    for _ in 0..entries {
        let code = cur.array::<1>()?[0];
        let mult = f64::from_bits(u64::from_le_bytes(cur.array()?));
        if table.insert(code, mult).is_some() {
            return Err(StoreError::Corrupt("duplicate gain table code"));
        }
    }
    if !cur.bytes.is_empty() {
        return Err(StoreError::Corrupt("trailing bytes"));
    }
    Ok(ControllerState {
        gains,
        mode,
        net: NetConfig { ip, mask, gateway },
        gain_table: GainTable(table),
    })
}

/// Non-volatile backing for the controller parameters.
pub trait ParameterStore: Send {
    /// Last saved image, or `None` for a blank store.
    fn load(&mut self) -> Result<Option<Vec<u8>>, StoreError>;
    fn save(&mut self, image: &[u8]) -> Result<(), StoreError>;
}

/// In-memory store; survives controller power cycles as long as the value is kept.
#[derive(Debug, Default, Clone)]
pub struct MemoryStore {
    image: Option<Vec<u8>>,
    writes: usize,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn image(&self) -> Option<&[u8]> {
        self.image.as_deref()
    }

    pub fn writes(&self) -> usize {
        self.writes
    }
}

impl ParameterStore for MemoryStore {
    fn load(&mut self) -> Result<Option<Vec<u8>>, StoreError> {
        Ok(self.image.clone())
    }

    fn save(&mut self, image: &[u8]) -> Result<(), StoreError> {
        if image.len() > EEPROM_BYTES {
            return Err(StoreError::Overflow(image.len()));
        }
        self.image = Some(image.to_vec());
        self.writes += 1;
        Ok(())
    }
}

/// Single binary file holding the image.
#[derive(Debug, Clone)]
pub struct FileStore {
    path: PathBuf,
}

impl FileStore {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn io_err(&self, source: io::Error) -> StoreError {
        StoreError::Io {
            path: self.path.clone(),
            source,
        }
    }
}

impl ParameterStore for FileStore {
    fn load(&mut self) -> Result<Option<Vec<u8>>, StoreError> {
        match fs::read(&self.path) {
            Ok(bytes) => Ok(Some(bytes)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(self.io_err(e)),
        }
    }

    fn save(&mut self, image: &[u8]) -> Result<(), StoreError> {
        if image.len() > EEPROM_BYTES {
            return Err(StoreError::Overflow(image.len()));
        }
        // Write-then-rename so a crash never leaves a half-written image.
        let tmp = self.path.with_extension("tmp");
        fs::write(&tmp, image).map_err(|e| self.io_err(e))?;
        fs::rename(&tmp, &self.path).map_err(|e| self.io_err(e))
    }
}

/// Serializes `state` into `store`, reloads it, and decodes it again.
pub fn store_roundtrip(
    state: &ControllerState,
    store: &mut dyn ParameterStore,
) -> Result<ControllerState, StoreError> {
    store.save(&encode(state)?)?;
    let image = store
        .load()?
        .ok_or(StoreError::Corrupt("store empty after write"))?;
    decode(&image)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_state_round_trips() {
        let state = ControllerState::default();
        let mut store = MemoryStore::new();
        let back = store_roundtrip(&state, &mut store).unwrap();
        assert_eq!(back, state);
        assert_eq!(store.image().unwrap().len(), FIXED_BYTES + 8 * ENTRY_BYTES);
        assert_eq!(&store.image().unwrap()[..2], &[1, 0]);
    }

    #[test]
    fn every_field_round_trips() {
        let state = ControllerState {
            gains: [0, 1, 2, 3, 4, 5, 6, 7],
            mode: ControllerMode::Hold,
            net: NetConfig {
                ip: Ipv4Addr::new(10, 0, 0, 2),
                mask: Ipv4Addr::new(255, 255, 0, 0),
                gateway: Ipv4Addr::new(10, 0, 0, 1),
            },
            gain_table: GainTable([(0, 1.0), (1, -0.5), (7, 1e300)].into_iter().collect()),
        };
        let dir = tempfile::tempdir().unwrap();
        let mut store = FileStore::new(dir.path().join("params.bin"));
        assert_eq!(store_roundtrip(&state, &mut store).unwrap(), state);
        // A fresh handle on the same file sees the same image.
        let mut again = FileStore::new(dir.path().join("params.bin"));
        assert_eq!(decode(&again.load().unwrap().unwrap()).unwrap(), state);
    }

    #[test]
    fn oversized_gain_table_overflows() {
        let fits = ControllerState {
            gain_table: GainTable(
                (0..MAX_GAIN_TABLE_ENTRIES as u8)
                    .map(|c| (c, 1.0))
                    .collect(),
            ),
            ..Default::default()
        };
        assert!(encode(&fits).unwrap().len() <= EEPROM_BYTES);
        let too_big = ControllerState {
            gain_table: GainTable(
                (0..=MAX_GAIN_TABLE_ENTRIES as u8)
                    .map(|c| (c, 1.0))
                    .collect(),
            ),
            ..Default::default()
        };
        let mut store = MemoryStore::new();
        assert!(matches!(
            store_roundtrip(&too_big, &mut store),
            Err(StoreError::Overflow(n)) if n > EEPROM_BYTES
        ));
        assert_eq!(store.writes(), 0);
    }

    #[test]
    fn decode_rejects_damage() {
        let good = encode(&ControllerState::default()).unwrap();
        assert!(matches!(
            decode(&good[..good.len() - 1]),
            Err(StoreError::Corrupt(_))
        ));
        let mut extra = good.clone();
        extra.push(0);
        assert!(matches!(decode(&extra), Err(StoreError::Corrupt(_))));
        let mut version = good.clone();
        version[0] = 9;
        assert!(matches!(decode(&version), Err(StoreError::Version(9))));
        let mut gain = good.clone();
        gain[2] = 8;
        assert!(matches!(decode(&gain), Err(StoreError::Corrupt(_))));
        let mut mode = good;
        mode[10] = 4;
        assert!(matches!(decode(&mode), Err(StoreError::Corrupt(_))));
        assert!(decode(&[]).is_err());
    }

    #[test]
    fn blank_file_store_loads_none() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = FileStore::new(dir.path().join("missing.bin"));
        assert!(store.load().unwrap().is_none());
    }

    proptest! {
        #[test]
        fn decode_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..200)) {
            let _ = decode(&bytes);
        }

        #[test]
        fn arbitrary_states_round_trip(
            gains in proptest::array::uniform8(0u8..=7),
            mode in 0u8..4,
            net in any::<[u8; 12]>(),
            table in proptest::collection::btree_map(any::<u8>(), any::<f64>(), 0..MAX_GAIN_TABLE_ENTRIES),
        ) {
            let state = ControllerState {
                gains,
                mode: ControllerMode::from_byte(mode).unwrap(),
                net: NetConfig {
                    ip: Ipv4Addr::new(net[0], net[1], net[2], net[3]),
                    mask: Ipv4Addr::new(net[4], net[5], net[6], net[7]),
                    gateway: Ipv4Addr::new(net[8], net[9], net[10], net[11]),
                },
                gain_table: GainTable(table),
            };
            let image = encode(&state).unwrap();
            prop_assert!(image.len() <= EEPROM_BYTES);
            let back = decode(&image).unwrap();
            // Compare multipliers by bits so NaN entries count as equal.
            prop_assert_eq!(back.gains, state.gains);
            prop_assert_eq!(back.mode, state.mode);
            prop_assert_eq!(back.net, state.net);
            let bits = |t: &GainTable| t.0.iter().map(|(k, v)| (*k, v.to_bits())).collect::<Vec<_>>();
            prop_assert_eq!(bits(&back.gain_table), bits(&state.gain_table));
        }
    }
}
