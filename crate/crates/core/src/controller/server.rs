//! TCP front end: one control session at a time, newline-delimited requests, one reply each.
//!
//! A connection that arrives while a session is active receives the banner `ERR busy` and is
//! closed. When a session ends (`QUIT`, peer close or I/O error) the server goes back to
//! accepting. Stored `NET` changes never affect the running session; with
//! [`ServeOptions::follow_net_config`] set the listener is re-bound to the stored IP (same
//! port) once the session that issued them has ended.

use std::io::{self, BufRead, BufReader, ErrorKind, Read, Write};
use std::net::{IpAddr, Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use log::{debug, info, warn};

use super::command::{Command, ErrorCode, Response};
use super::Controller;

pub const DEFAULT_PORT: u16 = 5025;

/// Longest request line accepted, newline included.
pub const MAX_LINE: usize = 4096;

const POLL: Duration = Duration::from_millis(5);
const READ_TICK: Duration = Duration::from_millis(50);
const REFUSE_GRACE: Duration = Duration::from_millis(100);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionEnd {
    Quit,
    PeerClosed,
    Shutdown,
    LineTooLong,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ServeOptions {
    pub follow_net_config: bool,
}

pub type SharedController = Arc<Mutex<Controller>>;

fn lock(controller: &Mutex<Controller>) -> MutexGuard<'_, Controller> {
    // A panicking session must not take the controller down with it.
    controller.lock().unwrap_or_else(|p| p.into_inner())
}

/// Drives one session over any byte stream until `QUIT`, end of input or `stop()`.
///
/// Read timeouts (`WouldBlock`/`TimedOut`) are treated as idle ticks; a partial line read
/// before the timeout is kept and completed on the next tick.
pub fn run_session<R: BufRead, W: Write>(
    controller: &Mutex<Controller>,
    mut reader: R,
    mut writer: W,
    stop: &dyn Fn() -> bool,
) -> io::Result<SessionEnd> {
    let mut line = Vec::with_capacity(128);
    loop {
        if stop() {
            return Ok(SessionEnd::Shutdown);
        }
        let room = (MAX_LINE - line.len()) as u64;
        match Read::by_ref(&mut reader)
            .take(room)
            .read_until(b'\n', &mut line)
        {
            Ok(0) if line.is_empty() => return Ok(SessionEnd::PeerClosed),
            Ok(_) if line.last() == Some(&b'\n') => {}
            Ok(_) if line.len() >= MAX_LINE => {
                writeln!(writer, "{}", Response::err(ErrorCode::Syntax))?;
                writer.flush()?;
                return Ok(SessionEnd::LineTooLong);
            }
            // Bytes without a terminator and then EOF: the peer went away mid-line.
            Ok(0) => return Ok(SessionEnd::PeerClosed),
            Ok(_) => continue,
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => continue,
            Err(e) if e.kind() == ErrorKind::Interrupted => continue,
            Err(e) => return Err(e),
        }
        let (cmd, resp) = lock(controller).execute_line(&line);
        debug!(
            "<- {:?} -> {resp}",
            String::from_utf8_lossy(&line).trim_end()
        );
        line.clear();
        writeln!(writer, "{resp}")?;
        writer.flush()?;
        if cmd == Some(Command::Quit) {
            return Ok(SessionEnd::Quit);
        }
    }
}

/// Handle to a running server thread.
pub struct ServerHandle {
    local_addr: Arc<Mutex<SocketAddr>>,
    shutdown: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    /// Address the listener is currently bound to.
    pub fn local_addr(&self) -> SocketAddr {
        *self.local_addr.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Blocks until the server stops.
    pub fn join(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    pub fn shutdown(mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn bind(addr: SocketAddr) -> io::Result<TcpListener> {
    let listener = TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    Ok(listener)
}

/// Binds `addr` and serves `controller` on a background thread.
pub fn spawn(
    controller: SharedController,
    addr: SocketAddr,
    options: ServeOptions,
) -> io::Result<ServerHandle> {
    let listener = bind(addr)?;
    let local_addr = Arc::new(Mutex::new(listener.local_addr()?));
    let shutdown = Arc::new(AtomicBool::new(false));
    info!("listening on {}", listener.local_addr()?);
    let thread = {
        let local_addr = Arc::clone(&local_addr);
        let shutdown = Arc::clone(&shutdown);
        thread::Builder::new()
            .name("controller-accept".into())
            .spawn(move || accept_loop(listener, controller, local_addr, shutdown, options))?
    };
    Ok(ServerHandle {
        local_addr,
        shutdown,
        thread: Some(thread),
    })
}

/// Serves until the process ends.
pub fn serve(
    controller: SharedController,
    addr: SocketAddr,
    options: ServeOptions,
) -> io::Result<()> {
    spawn(controller, addr, options)?.join();
    Ok(())
}

fn accept_loop(
    mut listener: TcpListener,
    controller: SharedController,
    local_addr: Arc<Mutex<SocketAddr>>,
    shutdown: Arc<AtomicBool>,
    options: ServeOptions,
) {
    let active = Arc::new(AtomicBool::new(false));
    let rebind = Arc::new(AtomicBool::new(false));
    let mut session: Option<JoinHandle<()>> = None;
    while !shutdown.load(Ordering::SeqCst) {
        if !active.load(Ordering::SeqCst) && rebind.swap(false, Ordering::SeqCst) {
            let ip = IpAddr::V4(lock(&controller).state().net.ip);
            let port = listener
                .local_addr()
                .map(|a| a.port())
                .unwrap_or(DEFAULT_PORT);
            let target = SocketAddr::new(ip, port);
            drop(listener);
            listener = match bind(target) {
                Ok(l) => {
                    info!("re-bound to {target}");
                    l
                }
                Err(e) => {
                    let old = *local_addr.lock().unwrap_or_else(|p| p.into_inner());
                    warn!("cannot bind {target}: {e}; staying on {old}");
                    match bind(old) {
                        Ok(l) => l,
                        Err(e) => {
                            warn!("lost listener: {e}");
                            return;
                        }
                    }
                }
            };
            if let Ok(a) = listener.local_addr() {
                *local_addr.lock().unwrap_or_else(|p| p.into_inner()) = a;
            }
        }
        match listener.accept() {
            Ok((stream, peer)) => {
                if !wait_idle(&active) {
                    debug!("refusing {peer}: session active");
                    refuse(stream);
                    continue;
                }
                if let Some(prev) = session.take() {
                    let _ = prev.join();
                }
                active.store(true, Ordering::SeqCst);
                info!("session from {peer}");
                let controller = Arc::clone(&controller);
                let active = Arc::clone(&active);
                let rebind = Arc::clone(&rebind);
                let shutdown = Arc::clone(&shutdown);
                session = Some(thread::spawn(move || {
                    let end = handle_connection(&controller, stream, &shutdown);
                    debug!("session from {peer} ended: {end:?}");
                    if options.follow_net_config && lock(&controller).take_net_changed() {
                        rebind.store(true, Ordering::SeqCst);
                    }
                    active.store(false, Ordering::SeqCst);
                }));
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(POLL),
            Err(e) => {
                warn!("accept failed: {e}");
                thread::sleep(POLL);
            }
        }
    }
    if let Some(s) = session {
        let _ = s.join();
    }
}

/// Gives a session that is just closing a moment to finish before a newcomer is refused.
fn wait_idle(active: &AtomicBool) -> bool {
    for _ in 0..(REFUSE_GRACE.as_millis() / POLL.as_millis()) {
        if !active.load(Ordering::SeqCst) {
            return true;
        }
        thread::sleep(POLL);
    }
    !active.load(Ordering::SeqCst)
}

fn refuse(mut stream: TcpStream) {
    let _ = stream.set_nonblocking(false);
    let _ = writeln!(stream, "{}", Response::err(ErrorCode::Busy));
    let _ = stream.flush();
    let _ = stream.shutdown(Shutdown::Both);
}

fn handle_connection(
    controller: &Mutex<Controller>,
    stream: TcpStream,
    shutdown: &AtomicBool,
) -> io::Result<SessionEnd> {
    stream.set_nonblocking(false)?;
    stream.set_read_timeout(Some(READ_TICK))?;
    let reader = BufReader::new(stream.try_clone()?);
    let stop = || shutdown.load(Ordering::SeqCst);
    let end = run_session(controller, reader, &stream, &stop);
    let _ = stream.shutdown(Shutdown::Both);
    end
}
