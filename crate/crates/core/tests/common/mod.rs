#![allow(dead_code)]

pub mod sites;

use std::net::{SocketAddr, UdpSocket};
use std::sync::mpsc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use vibesense::devicesim::DeviceRun;
use vibesense::edgehub::http::{serve, AppState};

/// Sends the delivered datagrams of `runs` to `to` in delivery order,
/// compressing device time by `speedup`.
pub fn send_paced(runs: &[DeviceRun], to: SocketAddr, speedup: f64) -> usize {
    let socket = UdpSocket::bind("127.0.0.1:0").unwrap();
    let mut all: Vec<(u64, u16, usize, &[u8])> = runs
        .iter()
        .flat_map(|r| r.events.iter().map(move |e| (e.deliver_time_us, r.device_id, e.original_index, e.delivered_bytes.as_slice())))
        .collect();
    all.sort_by_key(|d| (d.0, d.1, d.2));
    let start = Instant::now();
    for (t, _, _, bytes) in &all {
        let due = Duration::from_secs_f64(*t as f64 * 1e-6 / speedup);
        if let Some(wait) = due.checked_sub(start.elapsed()) {
            std::thread::sleep(wait);
        }
        socket.send_to(bytes, to).unwrap();
    }
    all.len()
}

pub struct TestServer {
    pub addr: SocketAddr,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    handle: Option<JoinHandle<()>>,
}

impl TestServer {
    pub fn start(state: AppState) -> Self {
        let (tx, rx) = mpsc::channel();
        let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
        let handle = std::thread::spawn(move || {
            let rt = tokio::runtime::Runtime::new().unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                tx.send(listener.local_addr().unwrap()).unwrap();
                serve(listener, state, async {
                    let _ = stop_rx.await;
                })
                .await
                .unwrap();
            });
        });
        TestServer { addr: rx.recv().unwrap(), stop: Some(stop_tx), handle: Some(handle) }
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }
}

impl Drop for TestServer {
    fn drop(&mut self) {
        if let Some(s) = self.stop.take() {
            let _ = s.send(());
        }
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}
