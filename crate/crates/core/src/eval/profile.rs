use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

/// Resource usage of one run, or the mean over several.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ProfileReport {
    pub exec_time_s: f64,
    /// Growth of peak resident memory during the run.
    pub mem_mb: f64,
    /// Process CPU time over wall time, as a percentage of all logical cores.
    pub cpu_pct: f64,
    pub gpu_mem_mb: f64,
    pub avg_tokens: f64,
    pub avg_response_bytes: f64,
}

impl ProfileReport {
    pub const FIELDS: [&'static str; 6] = [
        "Execution Time (s)",
        "Memory Usage (MB)",
        "GPU Memory Used (MB)",
        "CPU Utilization (%)",
        "Avg. number of tokens",
        "Avg. Response size (bytes)",
    ];

    /// Values in [`ProfileReport::FIELDS`] order.
    pub fn values(&self) -> [f64; 6] {
        [
            self.exec_time_s,
            self.mem_mb,
            self.gpu_mem_mb,
            self.cpu_pct,
            self.avg_tokens,
            self.avg_response_bytes,
        ]
    }

    pub fn is_valid(&self) -> bool {
        self.values().iter().all(|v| v.is_finite() && *v >= 0.0)
    }

    pub fn mean(reports: &[ProfileReport]) -> ProfileReport {
        if reports.is_empty() {
            return ProfileReport::default();
        }
        let n = reports.len() as f64;
        let avg = |f: fn(&ProfileReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        ProfileReport {
            exec_time_s: avg(|p| p.exec_time_s),
            mem_mb: avg(|p| p.mem_mb),
            cpu_pct: avg(|p| p.cpu_pct),
            gpu_mem_mb: avg(|p| p.gpu_mem_mb),
            avg_tokens: avg(|p| p.avg_tokens),
            avg_response_bytes: avg(|p| p.avg_response_bytes),
        }
    }
}

/// Optional accelerator memory query, in MB.
pub trait GpuProbe: Send + Sync {
    fn used_mb(&self) -> Option<f64>;
}

#[derive(Debug, Clone, Copy)]
struct Usage {
    cpu: Duration,
    max_rss_kb: u64,
}

#[cfg(target_os = "linux")]
fn usage() -> Usage {
    let mut ru: libc::rusage = unsafe { std::mem::zeroed() };
    let ok = unsafe { libc::getrusage(libc::RUSAGE_SELF, &mut ru) } == 0;
    if !ok {
        return Usage {
            cpu: Duration::ZERO,
            max_rss_kb: 0,
        };
    }
    let tv = |t: libc::timeval| Duration::new(t.tv_sec.max(0) as u64, (t.tv_usec.max(0) as u32) * 1000);
    Usage {
        cpu: tv(ru.ru_utime) + tv(ru.ru_stime),
        max_rss_kb: ru.ru_maxrss.max(0) as u64,
    }
}

#[cfg(not(target_os = "linux"))]
fn usage() -> Usage {
    Usage {
        cpu: Duration::ZERO,
        max_rss_kb: 0,
    }
}

/// Whitespace token count, used when the chat client reports none.
pub fn whitespace_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Measures one run from `start` to `finish`.
pub struct Profiler<'a> {
    wall: Instant,
    start: Usage,
    gpu: Option<&'a dyn GpuProbe>,
    gpu_start: f64,
}

impl<'a> Profiler<'a> {
    pub fn start(gpu: Option<&'a dyn GpuProbe>) -> Self {
        let gpu_start = gpu.and_then(|g| g.used_mb()).unwrap_or(0.0);
        Self {
            wall: Instant::now(),
            start: usage(),
            gpu,
            gpu_start,
        }
    }

    /// Closes the run over the responses it produced.
    pub fn finish(self, responses: &[&str]) -> ProfileReport {
        let elapsed = self.wall.elapsed();
        let end = usage();
        let wall = elapsed.as_secs_f64();
        let cores = std::thread::available_parallelism().map_or(1, |n| n.get()) as f64;
        let cpu = end.cpu.saturating_sub(self.start.cpu).as_secs_f64();
        let cpu_pct = if wall > 0.0 { (100.0 * cpu / (wall * cores)).min(100.0) } else { 0.0 };
        let gpu_mem_mb = self
            .gpu
            .and_then(|g| g.used_mb())
            .map_or(0.0, |now| (now - self.gpu_start).max(0.0));
        let n = responses.len().max(1) as f64;
        ProfileReport {
            exec_time_s: wall,
            mem_mb: end.max_rss_kb.saturating_sub(self.start.max_rss_kb) as f64 / 1024.0,
            cpu_pct,
            gpu_mem_mb,
            avg_tokens: responses.iter().map(|r| whitespace_tokens(r)).sum::<usize>() as f64 / n,
            avg_response_bytes: responses.iter().map(|r| r.len()).sum::<usize>() as f64 / n,
        }
    }
}
