//! Client side of the controller line protocol.

use std::fmt;
use std::io::{self, BufRead, BufReader, ErrorKind, Write};
use std::net::{SocketAddr, TcpStream, ToSocketAddrs};
use std::time::Duration;

use log::debug;
use thiserror::Error;

use crate::controller::{Command, Response};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("connection to {0} refused")]
    Refused(String),
    #[error("timed out waiting for the controller")]
    Timeout,
    #[error("controller closed the connection")]
    Closed,
    #[error("malformed reply {0:?}")]
    Malformed(String),
    #[error("cannot resolve {0}")]
    Resolve(String),
    #[error(transparent)]
    Io(io::Error),
}

impl From<io::Error> for ClientError {
    fn from(e: io::Error) -> Self {
        match e.kind() {
            ErrorKind::WouldBlock | ErrorKind::TimedOut => ClientError::Timeout,
            ErrorKind::UnexpectedEof | ErrorKind::ConnectionReset | ErrorKind::BrokenPipe => {
                ClientError::Closed
            }
            _ => ClientError::Io(e),
        }
    }
}

/// One open control session.
pub struct Client {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl Client {
    pub fn connect(addr: &str, timeout: Duration) -> Result<Self, ClientError> {
        let target: SocketAddr = addr
            .to_socket_addrs()
            .map_err(|_| ClientError::Resolve(addr.to_string()))?
            .next()
            .ok_or_else(|| ClientError::Resolve(addr.to_string()))?;
        let stream = TcpStream::connect_timeout(&target, timeout).map_err(|e| match e.kind() {
            ErrorKind::ConnectionRefused => ClientError::Refused(addr.to_string()),
            _ => ClientError::from(e),
        })?;
        stream.set_read_timeout(Some(timeout))?;
        stream.set_write_timeout(Some(timeout))?;
        stream.set_nodelay(true)?;
        Ok(Self {
            reader: BufReader::new(stream.try_clone()?),
            writer: stream,
        })
    }

    /// Sends one request line and waits for its reply.
    pub fn request(&mut self, line: &str) -> Result<Response, ClientError> {
        let line = line.trim_end_matches(['\n', '\r']);
        debug!("-> {line}");
        self.writer.write_all(line.as_bytes())?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        let mut reply = String::new();
        if self.reader.read_line(&mut reply)? == 0 {
            return Err(ClientError::Closed);
        }
        debug!("<- {}", reply.trim_end());
        Response::parse(&reply).ok_or_else(|| ClientError::Malformed(reply.trim_end().to_string()))
    }

    /// Ends the session with `QUIT`.
    pub fn quit(mut self) -> Result<(), ClientError> {
        self.request(&Command::Quit.to_string()).map(|_| ())
    }
}

/// Single request/response exchange on a fresh session.
pub fn client_send(addr: &str, line: &str, timeout: Duration) -> Result<Response, ClientError> {
    let mut client = Client::connect(addr, timeout)?;
    let resp = client.request(line)?;
    if line.trim_end() != "QUIT" && resp.error_code() != Some(crate::controller::ErrorCode::Busy) {
        // The busy banner arrives on a connection the server has already closed.
        client.quit()?;
    }
    Ok(resp)
}

/// Request/reply pairs of one session.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Transcript(pub Vec<(String, String)>);

impl Transcript {
    /// Commands of a script file: one per line; blank lines and `#` comments are skipped.
    pub fn script_lines(script: &str) -> impl Iterator<Item = &str> {
        script
            .lines()
            .map(|l| l.trim_end_matches('\r'))
            .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
    }

    pub fn error_count(&self) -> usize {
        self.0.iter().filter(|(_, r)| r.starts_with("ERR")).count()
    }
}

impl fmt::Display for Transcript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (req, resp) in &self.0 {
            writeln!(f, "> {req}")?;
            writeln!(f, "< {resp}")?;
        }
        Ok(())
    }
}

/// Plays a script over one session. A closing `QUIT` is sent (and not recorded) when the
/// script does not end the session itself.
pub fn replay_script(
    addr: &str,
    script: &str,
    timeout: Duration,
) -> Result<Transcript, ClientError> {
    let mut client = Client::connect(addr, timeout)?;
    let mut transcript = Transcript::default();
    for line in Transcript::script_lines(script) {
        let resp = client.request(line)?;
        transcript.0.push((line.to_string(), resp.to_string()));
        if line == "QUIT" {
            return Ok(transcript);
        }
    }
    client.quit()?;
    Ok(transcript)
}
