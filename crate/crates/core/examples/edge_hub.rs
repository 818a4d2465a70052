//! Runs the UDP ingest and HTTP API on loopback, streams two devices, and
//! queries the API. Pass `--hold` to keep the server up afterwards.

use std::net::UdpSocket;
use std::sync::Arc;
use std::time::Duration;

use vibesense::devicesim::{run_device, ActivityKind, ActivityScript, ClockModel, DeviceConfig, Framing, NoiseModel};
use vibesense::edgehub::http::{router, AppState};
use vibesense::edgehub::udp::UdpIngest;
use vibesense::edgehub::{Hub, HubConfig};
use vibesense::netsim::ChannelConfig;

#[tokio::main]
async fn main() {
    let dir = std::env::temp_dir().join("vibesense_edge_hub_example");
    let hub = Arc::new(Hub::new(HubConfig { storage_dir: Some(dir.clone()), ..HubConfig::default() }));
    let ingest = UdpIngest::spawn(hub.clone(), UdpSocket::bind("127.0.0.1:0").unwrap()).unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let http = listener.local_addr().unwrap();
    let app = router(AppState { hub: hub.clone(), recommend: None });
    tokio::spawn(async move { axum::serve(listener, app).await });

    let script = ActivityScript::generate(&[ActivityKind::Footstep, ActivityKind::ObjectPlace], 4, 2.0, 900.0, 1);
    let target = ingest.local_addr();
    tokio::task::spawn_blocking(move || {
        let sock = UdpSocket::bind("127.0.0.1:0").unwrap();
        for id in [1u16, 2] {
            let dev = DeviceConfig { device_id: id, clock: ClockModel::preset("nominal").unwrap(), noise: NoiseModel::white(10.0), framing: Framing::default(), seed: id as u64 };
            for p in run_device(&dev, &script, &ChannelConfig::ideal(), 20.0).unwrap().sent {
                sock.send_to(&p.bytes, target).unwrap();
                std::thread::sleep(Duration::from_micros(200));
            }
        }
    })
    .await
    .unwrap();
    tokio::time::sleep(Duration::from_millis(200)).await;
    hub.flush();

    let client = reqwest::Client::new();
    for path in ["/health", "/devices", "/segments/1"] {
        let body = client.get(format!("http://{http}{path}")).send().await.unwrap().text().await.unwrap();
        println!("GET {path}\n{body}\n");
    }
    if std::env::args().any(|a| a == "--hold") {
        println!("serving http://{http} (udp {target}), ctrl-c to stop");
        tokio::signal::ctrl_c().await.unwrap();
    }
    ingest.shutdown().unwrap();
    println!("segments: {:?}", hub.persist_open_segments().unwrap());
}
