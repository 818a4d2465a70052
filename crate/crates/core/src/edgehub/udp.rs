//! Blocking UDP receive loop feeding a [`Hub`].

use std::io;
use std::net::UdpSocket;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use super::Hub;
use crate::wireproto::MAX_DATAGRAM;

pub struct UdpIngest {
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<io::Result<u64>>>,
    local_addr: std::net::SocketAddr,
}

impl UdpIngest {
    /// Starts receiving on `socket`. Arrival times come from the hub clock.
    pub fn spawn(hub: Arc<Hub>, socket: UdpSocket) -> io::Result<Self> {
        socket.set_read_timeout(Some(Duration::from_millis(50)))?;
        let local_addr = socket.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let handle = std::thread::Builder::new()
            .name("vibesense-udp".into())
            .spawn(move || {
                // one spare byte so oversize datagrams are visible as such
                let mut buf = vec![0u8; MAX_DATAGRAM + 1];
                let mut received = 0u64;
                while !flag.load(Ordering::Relaxed) {
                    match socket.recv_from(&mut buf) {
                        Ok((n, _)) => {
                            received += 1;
                            hub.ingest(&buf[..n], hub.now_us());
                        }
                        Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
                        Err(e) => return Err(e),
                    }
                }
                Ok(received)
            })?;
        Ok(UdpIngest {
            stop,
            handle: Some(handle),
            local_addr,
        })
    }

    pub fn local_addr(&self) -> std::net::SocketAddr {
        self.local_addr
    }

    /// Stops the loop and returns the number of datagrams received.
    pub fn shutdown(mut self) -> io::Result<u64> {
        self.stop.store(true, Ordering::Relaxed);
        self.handle
            .take()
            .expect("joined once")
            .join()
            .unwrap_or_else(|_| Err(io::Error::other("udp thread panicked")))
    }
}

impl Drop for UdpIngest {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}
