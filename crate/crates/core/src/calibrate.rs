//! Timing-constant calibration.
//!
//! Two anchors pin the model clock and per-dispatch overhead: the basic
//! attack samples at 50 Hz with one active thread, and the fully parallel
//! attack reaches 170 Hz with 24. Both share the same constants, so the
//! pair is a 2x2 linear solve:
//!
//! ```text
//! dispatch + probe_cycles(1)  / clock = 1 / 50
//! dispatch + probe_cycles(24) / clock = 1 / 170
//! ```
//!
//! where `probe_cycles(n) = ceil(lines / n) * hit_latency` is the all-hit
//! probe cost of the slowest thread. The tick scale is set so a full-buffer
//! all-hit probe reads the target tick level (the center of the observed
//! memorygram band).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::CacheGeometry;

#[derive(Debug, Error, PartialEq)]
pub enum CalibrationError {
    #[error("anchor pair infeasible: {0}")]
    Infeasible(String),
}

/// The calibration targets. Defaults: 50 Hz at 1 active thread, 170 Hz at
/// 24, probe ticks centered at 100k (the 80k-120k memorygram band).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationAnchors {
    pub basic_rate_hz: f64,
    pub basic_active_threads: u32,
    pub parallel_rate_hz: f64,
    pub parallel_active_threads: u32,
    pub probe_tick_target: f64,
}

impl Default for CalibrationAnchors {
    fn default() -> Self {
        CalibrationAnchors {
            basic_rate_hz: 50.0,
            basic_active_threads: 1,
            parallel_rate_hz: 170.0,
            parallel_active_threads: 24,
            probe_tick_target: 100_000.0,
        }
    }
}

/// Solved timing constants consumed by the channel simulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub clock_hz: f64,
    pub dispatch_overhead_s: f64,
    pub ticks_per_cycle: f64,
    pub hit_latency_cycles: u64,
    pub miss_latency_cycles: u64,
}

/// Slowest-thread all-hit probe cost in cycles for a buffer split across
/// `active` threads.
pub fn probe_cycles(buffer_lines: u64, active: u32, hit_latency_cycles: u64) -> u64 {
    buffer_lines.div_ceil(active as u64) * hit_latency_cycles
}

/// Solve the anchor system for `geo` probing a `buffer_bytes` buffer.
pub fn solve(
    geo: &CacheGeometry,
    buffer_bytes: u64,
    anchors: &CalibrationAnchors,
) -> Result<Calibration, CalibrationError> {
    if anchors.basic_rate_hz <= 0.0 || anchors.parallel_rate_hz <= anchors.basic_rate_hz {
        return Err(CalibrationError::Infeasible(format!(
            "need 0 < basic rate < parallel rate, got {} and {}",
            anchors.basic_rate_hz, anchors.parallel_rate_hz
        )));
    }
    let lines = buffer_bytes / geo.line_size_bytes;
    let c_basic = probe_cycles(lines, anchors.basic_active_threads, geo.hit_latency_cycles) as f64;
    let c_par = probe_cycles(lines, anchors.parallel_active_threads, geo.hit_latency_cycles) as f64;
    if c_basic <= c_par {
        return Err(CalibrationError::Infeasible(format!(
            "basic probe ({c_basic} cycles) not slower than parallel ({c_par} cycles)"
        )));
    }
    let period_basic = 1.0 / anchors.basic_rate_hz;
    let period_par = 1.0 / anchors.parallel_rate_hz;
    let clock_hz = (c_basic - c_par) / (period_basic - period_par);
    let dispatch_overhead_s = period_basic - c_basic / clock_hz;
    if dispatch_overhead_s <= 0.0 {
        return Err(CalibrationError::Infeasible(format!(
            "solved dispatch overhead {dispatch_overhead_s:.3e} s is not positive"
        )));
    }
    let full_probe_cycles = lines as f64 * geo.hit_latency_cycles as f64;
    Ok(Calibration {
        clock_hz,
        dispatch_overhead_s,
        ticks_per_cycle: anchors.probe_tick_target / full_probe_cycles,
        hit_latency_cycles: geo.hit_latency_cycles,
        miss_latency_cycles: geo.miss_latency_cycles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_solve_hits_both_anchors() {
        let geo = CacheGeometry::default();
        let cal = solve(&geo, geo.capacity_bytes(), &CalibrationAnchors::default()).unwrap();
        let lines = geo.capacity_lines();
        let rate = |active: u32| {
            1.0 / (cal.dispatch_overhead_s
                + probe_cycles(lines, active, geo.hit_latency_cycles) as f64 / cal.clock_hz)
        };
        assert!((rate(1) - 50.0).abs() < 1e-9);
        assert!((rate(24) - 170.0).abs() < 1e-9);
        assert!(cal.dispatch_overhead_s > 0.0 && cal.clock_hz > 0.0);
        // Full all-hit probe converts to the band center.
        let ticks = lines as f64 * 30.0 * cal.ticks_per_cycle;
        assert!((ticks - 100_000.0).abs() < 1e-6);
    }

    #[test]
    fn tiny_buffer_is_infeasible() {
        // Two lines cannot be sped up 24-way enough to pay for the overhead.
        let geo = CacheGeometry { set_bits: 1, sub_bank_bits: 0, bank_bits: 0, ways: 1, ..CacheGeometry::default() };
        let err = solve(&geo, geo.capacity_bytes(), &CalibrationAnchors::default()).unwrap_err();
        assert!(matches!(err, CalibrationError::Infeasible(_)));
    }

    #[test]
    fn bad_rate_ordering_is_infeasible() {
        let geo = CacheGeometry::default();
        let anchors = CalibrationAnchors { parallel_rate_hz: 40.0, ..CalibrationAnchors::default() };
        assert!(solve(&geo, geo.capacity_bytes(), &anchors).is_err());
    }
}
