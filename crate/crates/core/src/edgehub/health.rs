//! Health snapshots pushed to the remote status endpoint and served over HTTP.

use std::ffi::CString;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Hub;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceHealth {
    pub device_id: u16,
    pub measured_rate_mean_hz: Option<f64>,
    pub measured_rate_std_hz: Option<f64>,
    pub loss_pct: f64,
    pub recovered_pct: f64,
    pub last_seen_us: Option<u64>,
    pub received: u64,
    pub lost: u64,
    pub recovered: u64,
    pub unrecoverable: u64,
    pub duplicates: u64,
    pub stored_samples: u64,
    pub gap_samples: u64,
    /// Stored volume extrapolated to one day of device time.
    pub stored_gb_per_day: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthReport {
    pub devices: Vec<DeviceHealth>,
    pub disk_bytes_free: u64,
    pub uptime_s: f64,
    pub datagrams: u64,
    pub header_invalid: u64,
    /// Packets from device ids outside the configured set, per id.
    pub quarantined: Vec<(u16, u64)>,
}

pub(super) fn snapshot(hub: &Hub) -> HealthReport {
    let devices = hub.with_sessions(|sessions| {
        sessions
            .values()
            .map(|s| {
                let s = s.lock();
                let c = s.counters();
                let rate = s.estimate_rate().ok();
                DeviceHealth {
                    device_id: s.device_id,
                    measured_rate_mean_hz: rate.map(|r| r.mean_hz),
                    measured_rate_std_hz: rate.map(|r| r.std_hz),
                    loss_pct: c.loss_pct(),
                    recovered_pct: c.recovered_pct(),
                    last_seen_us: s.last_seen_us(),
                    received: c.received,
                    lost: c.lost,
                    recovered: c.recovered,
                    unrecoverable: c.unrecoverable,
                    duplicates: c.duplicates,
                    stored_samples: c.stored_samples,
                    gap_samples: c.gap_samples,
                    stored_gb_per_day: s.gb_per_day(),
                }
            })
            .collect()
    });
    let disk_path = hub.config().storage_dir.clone().unwrap_or_else(|| ".".into());
    HealthReport {
        devices,
        disk_bytes_free: disk_bytes_free(&disk_path).unwrap_or(0),
        uptime_s: hub.started.elapsed().as_secs_f64(),
        datagrams: hub.datagrams(),
        header_invalid: hub.header_invalid(),
        quarantined: hub.quarantined().into_iter().collect(),
    }
}

/// Free bytes available to unprivileged users on the filesystem holding `path`.
pub fn disk_bytes_free(path: &Path) -> Option<u64> {
    use std::os::unix::ffi::OsStrExt;
    let c_path = CString::new(path.as_os_str().as_bytes()).ok()?;
    let mut stat: libc::statvfs = unsafe { std::mem::zeroed() };
    // SAFETY: c_path is NUL-terminated and stat is a valid out-pointer.
    let rc = unsafe { libc::statvfs(c_path.as_ptr(), &mut stat) };
    (rc == 0).then(|| stat.f_bavail as u64 * stat.f_frsize as u64)
}
