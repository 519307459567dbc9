//! Resource monitoring: a background sampler records process memory at a
//! fixed rate (1 Hz for real runs) while training proceeds undisturbed.
//! No accelerator is available in this build, so the accelerator column
//! is recorded as a flagged gap rather than silently zero.

use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResourceSample {
    /// Seconds since monitoring started.
    pub t: f64,
    pub cpu_bytes: u64,
    pub gpu_bytes: Option<u64>,
}

/// The finished time series plus its maxima.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResourceLog {
    pub samples: Vec<ResourceSample>,
    pub peak_cpu_bytes: u64,
    pub peak_gpu_bytes: Option<u64>,
    /// True when accelerator metrics were unavailable and the column is
    /// a recorded gap.
    pub accelerator_missing: bool,
}

impl ResourceLog {
    /// `t,cpu_bytes,gpu_bytes` rows; the accelerator column stays empty
    /// when it was never observed.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("t,cpu_bytes,gpu_bytes\n");
        for s in &self.samples {
            let gpu = s.gpu_bytes.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!("{:.3},{},{}\n", s.t, s.cpu_bytes, gpu));
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Resident set size of this process from /proc/self/status.
pub fn process_memory_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    for line in status.lines() {
        if let Some(rest) = line.strip_prefix("VmRSS:") {
            let kb: u64 = rest.trim().trim_end_matches("kB").trim().parse().ok()?;
            return Some(kb * 1024);
        }
    }
    None
}

/// Background sampler. Start it before the training loop, stop it after;
/// it only reads process metrics and cannot perturb training order.
pub struct ResourceMonitor {
    stop: Arc<AtomicBool>,
    handle: JoinHandle<Vec<ResourceSample>>,
}

impl ResourceMonitor {
    /// Sample every `interval` (1 s for the reported protocol). The first
    /// sample is taken immediately.
    pub fn start(interval: Duration) -> Result<Self> {
        if interval.is_zero() {
            return Err(CoreError::InvalidArgument(
                "sampling interval must be positive".into(),
            ));
        }
        let stop = Arc::new(AtomicBool::new(false));
        let stop_flag = stop.clone();
        let handle = std::thread::spawn(move || {
            let started = Instant::now();
            let mut samples = Vec::new();
            let mut next = Duration::ZERO;
            loop {
                samples.push(ResourceSample {
                    t: started.elapsed().as_secs_f64(),
                    cpu_bytes: process_memory_bytes().unwrap_or(0),
                    gpu_bytes: None,
                });
                next += interval;
                loop {
                    if stop_flag.load(Ordering::Relaxed) {
                        return samples;
                    }
                    let now = started.elapsed();
                    if now >= next {
                        break;
                    }
                    std::thread::sleep((next - now).min(Duration::from_millis(50)));
                }
            }
        });
        Ok(Self { stop, handle })
    }

    pub fn stop(self) -> ResourceLog {
        self.stop.store(true, Ordering::Relaxed);
        let samples = self.handle.join().unwrap_or_default();
        let peak_cpu_bytes = samples.iter().map(|s| s.cpu_bytes).max().unwrap_or(0);
        ResourceLog {
            peak_cpu_bytes,
            peak_gpu_bytes: None,
            accelerator_missing: true,
            samples,
        }
    }
}
