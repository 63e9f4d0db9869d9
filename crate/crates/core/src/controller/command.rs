//! Wire grammar of the controller: newline-terminated ASCII requests and their replies.
//!
//! Requests are matched case-sensitively against fixed keywords:
//!
//! | request                         | meaning                                   |
//! |---------------------------------|-------------------------------------------|
//! | `ALLd;d;d;d;d;d;d;d`            | set the gain code of all eight channels   |
//! | `READAll`                       | read back the eight gain codes            |
//! | `RCm;d`                         | set the gain code of module `m` (0-based) |
//! | `INTEd`                         | set one gain code on every channel        |
//! | `Initialization`                | zero the integrators, normal mode         |
//! | `StandardSignal`                | integrate the bipolar calibration signal  |
//! | `PulseSignal`                   | integrate the single positive pulse       |
//! | `IntHold`                       | hold the integration value                |
//! | `NET a.b.c.d;a.b.c.d;a.b.c.d`   | set IP, mask and gateway                  |
//! | `QUIT`                          | end the session                           |
//!
//! Replies are `OK`, `OK <payload>` or `ERR <code>`.

use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CHANNELS: usize = 8;
pub const MAX_GAIN_CODE: u8 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    pub ip: Ipv4Addr,
    pub mask: Ipv4Addr,
    pub gateway: Ipv4Addr,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            ip: Ipv4Addr::new(192, 168, 1, 10),
            mask: Ipv4Addr::new(255, 255, 255, 0),
            gateway: Ipv4Addr::new(192, 168, 1, 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    SetAllGains([u8; CHANNELS]),
    ReadAll,
    SetModuleGain { module: u8, gain: u8 },
    SetUniformGain(u8),
    Initialization,
    StandardSignal,
    PulseSignal,
    IntHold,
    NetConfig(NetConfig),
    Quit,
}

impl Command {
    /// Whether executing the command can change persisted state.
    pub fn is_mutating(&self) -> bool {
        !matches!(self, Command::ReadAll | Command::Quit)
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Command::SetAllGains(g) => {
                f.write_str("ALL")?;
                write_codes(f, g)
            }
            Command::ReadAll => f.write_str("READAll"),
            Command::SetModuleGain { module, gain } => write!(f, "RC{module};{gain}"),
            Command::SetUniformGain(g) => write!(f, "INTE{g}"),
            Command::Initialization => f.write_str("Initialization"),
            Command::StandardSignal => f.write_str("StandardSignal"),
            Command::PulseSignal => f.write_str("PulseSignal"),
            Command::IntHold => f.write_str("IntHold"),
            Command::NetConfig(n) => write!(f, "NET {};{};{}", n.ip, n.mask, n.gateway),
            Command::Quit => f.write_str("QUIT"),
        }
    }
}

pub(crate) fn write_codes(f: &mut impl fmt::Write, codes: &[u8]) -> fmt::Result {
    for (i, c) in codes.iter().enumerate() {
        if i > 0 {
            f.write_char(';')?;
        }
        write!(f, "{c}")?;
    }
    Ok(())
}

/// Error class carried by an `ERR` reply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Error, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorCode {
    #[error("unknown")]
    Unknown,
    #[error("arity")]
    Arity,
    #[error("range")]
    Range,
    #[error("addr")]
    Addr,
    #[error("syntax")]
    Syntax,
    #[error("busy")]
    Busy,
    #[error("store")]
    Store,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 7] = [
        ErrorCode::Unknown,
        ErrorCode::Arity,
        ErrorCode::Range,
        ErrorCode::Addr,
        ErrorCode::Syntax,
        ErrorCode::Busy,
        ErrorCode::Store,
    ];
}

impl FromStr for ErrorCode {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        ErrorCode::ALL
            .into_iter()
            .find(|c| c.to_string() == s)
            .ok_or(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Status {
    Ok,
    Err(ErrorCode),
}

/// One reply line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Response {
    pub status: Status,
    pub payload: Option<String>,
}

impl Response {
    pub fn ok() -> Self {
        Self {
            status: Status::Ok,
            payload: None,
        }
    }

    pub fn ok_with(payload: impl Into<String>) -> Self {
        Self {
            status: Status::Ok,
            payload: Some(payload.into()),
        }
    }

    pub fn err(code: ErrorCode) -> Self {
        Self {
            status: Status::Err(code),
            payload: None,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == Status::Ok
    }

    pub fn error_code(&self) -> Option<ErrorCode> {
        match self.status {
            Status::Ok => None,
            Status::Err(c) => Some(c),
        }
    }

    /// Parses a reply line as sent by the server (trailing newline optional).
    pub fn parse(line: &str) -> Option<Self> {
        let line = line.trim_end_matches(['\n', '\r']);
        if line == "OK" {
            return Some(Self::ok());
        }
        if let Some(p) = line.strip_prefix("OK ") {
            return Some(Self::ok_with(p));
        }
        let code = line.strip_prefix("ERR ")?.parse().ok()?;
        Some(Self::err(code))
    }
}

impl fmt::Display for Response {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.status, &self.payload) {
            (Status::Ok, None) => f.write_str("OK"),
            (Status::Ok, Some(p)) => write!(f, "OK {p}"),
            (Status::Err(c), _) => write!(f, "ERR {c}"),
        }
    }
}

const BARE_KEYWORDS: [(&str, Command); 6] = [
    ("READAll", Command::ReadAll),
    ("Initialization", Command::Initialization),
    ("StandardSignal", Command::StandardSignal),
    ("PulseSignal", Command::PulseSignal),
    ("IntHold", Command::IntHold),
    ("QUIT", Command::Quit),
];

/// Parses one request line. A single trailing `\n` or `\r\n` is accepted.
pub fn parse_command(line: &str) -> Result<Command, ErrorCode> {
    let line = line
        .strip_suffix('\n')
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .unwrap_or(line);

    for (kw, cmd) in BARE_KEYWORDS {
        if let Some(rest) = line.strip_prefix(kw) {
            return if rest.is_empty() {
                Ok(cmd)
            } else {
                Err(ErrorCode::Arity)
            };
        }
    }
    if let Some(rest) = line.strip_prefix("ALL") {
        let fields = split_args(rest);
        if fields.len() != CHANNELS {
            return Err(ErrorCode::Arity);
        }
        let mut gains = [0u8; CHANNELS];
        for (g, field) in gains.iter_mut().zip(fields) {
            *g = parse_code(field, MAX_GAIN_CODE)?;
        }
        return Ok(Command::SetAllGains(gains));
    }
    if let Some(rest) = line.strip_prefix("RC") {
        let fields = split_args(rest);
        if fields.len() != 2 {
            return Err(ErrorCode::Arity);
        }
        let module = parse_code(fields[0], (CHANNELS - 1) as u8)?;
        let gain = parse_code(fields[1], MAX_GAIN_CODE)?;
        return Ok(Command::SetModuleGain { module, gain });
    }
    if let Some(rest) = line.strip_prefix("INTE") {
        let fields = split_args(rest);
        if fields.len() != 1 {
            return Err(ErrorCode::Arity);
        }
        return Ok(Command::SetUniformGain(parse_code(
            fields[0],
            MAX_GAIN_CODE,
        )?));
    }
    if let Some(rest) = line.strip_prefix("NET") {
        let rest = rest.strip_prefix(' ').unwrap_or(rest);
        let fields = split_args(rest);
        if fields.len() != 3 {
            return Err(ErrorCode::Arity);
        }
        let addr = |s: &str| Ipv4Addr::from_str(s).map_err(|_| ErrorCode::Addr);
        return Ok(Command::NetConfig(NetConfig {
            ip: addr(fields[0])?,
            mask: addr(fields[1])?,
            gateway: addr(fields[2])?,
        }));
    }
    Err(ErrorCode::Unknown)
}

/// Parses raw bytes off the wire. Anything that is not UTF-8 cannot name an instruction.
pub fn parse_line(bytes: &[u8]) -> Result<Command, ErrorCode> {
    match std::str::from_utf8(bytes) {
        Ok(s) => parse_command(s),
        Err(_) => Err(ErrorCode::Unknown),
    }
}

fn split_args(rest: &str) -> Vec<&str> {
    if rest.is_empty() {
        Vec::new()
    } else {
        rest.split(';').collect()
    }
}

fn parse_code(field: &str, max: u8) -> Result<u8, ErrorCode> {
    if field.is_empty() || !field.bytes().all(|b| b.is_ascii_digit()) {
        return Err(ErrorCode::Syntax);
    }
    let digits = field.trim_start_matches('0');
    if digits.len() > 3 {
        return Err(ErrorCode::Range);
    }
    let value: u16 = if digits.is_empty() {
        0
    } else {
        digits.parse().map_err(|_| ErrorCode::Syntax)?
    };
    if value > u16::from(max) {
        return Err(ErrorCode::Range);
    }
    Ok(value as u8)
}
