//! Execution substrate the spy runs on: workgroup layout validation,
//! round-robin workgroup placement, the SLM counting-thread timer, and the
//! send-unit contention model.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Hardware shape of one slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpuConfig {
    pub num_subslices: u32,
    pub eus_per_subslice: u32,
    pub threads_per_wavefront: u32,
    pub max_threads_per_workgroup: u32,
    pub slm_bytes_per_subslice: u32,
}

impl Default for GpuConfig {
    fn default() -> Self {
        GpuGeneration::Gen9.config()
    }
}

/// Named architecture presets, addressable as "gen9" / "gen9.5" / "gen11"
/// in config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GpuGeneration {
    #[serde(rename = "gen9")]
    Gen9,
    #[serde(rename = "gen9.5")]
    Gen9_5,
    #[serde(rename = "gen11")]
    Gen11,
}

impl GpuGeneration {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "gen9" => Some(GpuGeneration::Gen9),
            "gen9.5" => Some(GpuGeneration::Gen9_5),
            "gen11" => Some(GpuGeneration::Gen11),
            _ => None,
        }
    }

    pub fn config(self) -> GpuConfig {
        GpuConfig {
            num_subslices: match self {
                GpuGeneration::Gen9 | GpuGeneration::Gen9_5 => 3,
                GpuGeneration::Gen11 => 8,
            },
            eus_per_subslice: 8,
            threads_per_wavefront: 32,
            max_threads_per_workgroup: 256,
            slm_bytes_per_subslice: 64 * 1024,
        }
    }

    /// Gen11 keeps SLM traffic off the L3 path, so its counter reads are
    /// steadier.
    pub fn timer_jitter_rel(self) -> f64 {
        match self {
            GpuGeneration::Gen11 => 0.01,
            _ => 0.02,
        }
    }
}

/// Spy thread organization inside the dispatched shader.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpyLayout {
    pub num_workgroups: u32,
    pub counting_threads_per_workgroup: u32,
    pub attacker_wavefronts_per_workgroup: u32,
    pub active_threads_per_attacker_wavefront: u32,
}

impl Default for SpyLayout {
    fn default() -> Self {
        SpyLayout::basic()
    }
}

impl SpyLayout {
    /// One workgroup, two counting wavefronts, one attacker wavefront with a
    /// single active thread: the 96-thread baseline shape.
    pub fn basic() -> Self {
        SpyLayout {
            num_workgroups: 1,
            counting_threads_per_workgroup: 64,
            attacker_wavefronts_per_workgroup: 1,
            active_threads_per_attacker_wavefront: 1,
        }
    }

    /// One workgroup per subslice, 8 active threads each: the saturating
    /// layout that stays under the per-subslice EU budget.
    pub fn parallel(gpu: &GpuConfig) -> Self {
        SpyLayout {
            num_workgroups: gpu.num_subslices,
            counting_threads_per_workgroup: 64,
            attacker_wavefronts_per_workgroup: 1,
            active_threads_per_attacker_wavefront: 8,
        }
    }

    pub fn total_active_threads(&self) -> u32 {
        self.num_workgroups
            * self.attacker_wavefronts_per_workgroup
            * self.active_threads_per_attacker_wavefront
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LayoutError {
    #[error("workgroup needs {needed} threads, max is {max}")]
    ThreadBudgetExceeded { needed: u32, max: u32 },
    #[error("{count} counting threads not a multiple of the {wavefront}-thread wavefront")]
    CountingNotWavefrontAligned { count: u32, wavefront: u32 },
    #[error("layout has no active attacker threads")]
    NoAttackerThreads,
    #[error("{active} active threads exceed the {wavefront}-thread wavefront")]
    TooManyActivePerWavefront { active: u32, wavefront: u32 },
    #[error("layout needs at least one workgroup")]
    NoWorkgroups,
}

/// A layout that passed validation, with its placement resolved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidatedLayout {
    pub layout: SpyLayout,
    pub threads_per_workgroup: u32,
    pub total_active_threads: u32,
    /// Subslice index per workgroup (round-robin).
    pub workgroup_subslice: Vec<u32>,
    /// Active spy threads landed on each subslice.
    pub active_per_subslice: Vec<u32>,
    /// True when any subslice holds more active threads than EUs.
    pub contention: bool,
}

impl ValidatedLayout {
    /// Subslice of the `i`-th active thread, threads numbered workgroup-major.
    pub fn thread_subslice(&self, thread: u32) -> u32 {
        let per_wg = self.layout.attacker_wavefronts_per_workgroup
            * self.layout.active_threads_per_attacker_wavefront;
        self.workgroup_subslice[(thread / per_wg) as usize]
    }
}

/// Check a layout against the hardware budget and resolve where its
/// workgroups land.
pub fn validate_layout(layout: &SpyLayout, gpu: &GpuConfig) -> Result<ValidatedLayout, LayoutError> {
    if layout.num_workgroups == 0 {
        return Err(LayoutError::NoWorkgroups);
    }
    if layout.counting_threads_per_workgroup % gpu.threads_per_wavefront != 0 {
        return Err(LayoutError::CountingNotWavefrontAligned {
            count: layout.counting_threads_per_workgroup,
            wavefront: gpu.threads_per_wavefront,
        });
    }
    if layout.attacker_wavefronts_per_workgroup == 0
        || layout.active_threads_per_attacker_wavefront == 0
    {
        return Err(LayoutError::NoAttackerThreads);
    }
    if layout.active_threads_per_attacker_wavefront > gpu.threads_per_wavefront {
        return Err(LayoutError::TooManyActivePerWavefront {
            active: layout.active_threads_per_attacker_wavefront,
            wavefront: gpu.threads_per_wavefront,
        });
    }
    let threads_per_workgroup = layout.counting_threads_per_workgroup
        + layout.attacker_wavefronts_per_workgroup * gpu.threads_per_wavefront;
    if threads_per_workgroup > gpu.max_threads_per_workgroup {
        return Err(LayoutError::ThreadBudgetExceeded {
            needed: threads_per_workgroup,
            max: gpu.max_threads_per_workgroup,
        });
    }

    let workgroup_subslice = assign_workgroups(layout.num_workgroups, gpu);
    let active_per_wg = layout.attacker_wavefronts_per_workgroup
        * layout.active_threads_per_attacker_wavefront;
    let mut active_per_subslice = vec![0u32; gpu.num_subslices as usize];
    for &ss in &workgroup_subslice {
        active_per_subslice[ss as usize] += active_per_wg;
    }
    let contention = active_per_subslice.iter().any(|&a| a > gpu.eus_per_subslice);

    Ok(ValidatedLayout {
        layout: *layout,
        threads_per_workgroup,
        total_active_threads: layout.total_active_threads(),
        workgroup_subslice,
        active_per_subslice,
        contention,
    })
}

/// Workgroup `i` lands on subslice `i mod num_subslices`.
pub fn assign_workgroups(n_workgroups: u32, gpu: &GpuConfig) -> Vec<u32> {
    (0..n_workgroups).map(|i| i % gpu.num_subslices).collect()
}

/// Counting-thread timer: converts simulated cycles to counter ticks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimerModel {
    /// Mean counter increments per simulated GPU cycle.
    pub ticks_per_cycle: f64,
    /// Relative std-dev of the conversion. The draw is a standard normal
    /// clamped to +-3 sigma so tick counts stay positive and bounded.
    pub jitter_rel: f64,
}

impl TimerModel {
    pub const DEFAULT_JITTER_REL: f64 = 0.02;

    pub fn new(ticks_per_cycle: f64, jitter_rel: f64) -> Self {
        TimerModel { ticks_per_cycle, jitter_rel }
    }

    /// Convert a duration to ticks: `round(cycles * ticks_per_cycle * (1 + g))`
    /// with `g ~ jitter_rel * clamp(N(0,1), -3, 3)`. Exactly one normal draw
    /// is consumed per call regardless of parameters.
    pub fn ticks<R: Rng>(&self, duration_cycles: f64, rng: &mut R) -> u64 {
        self.ticks_scaled(duration_cycles, 1.0, rng)
    }

    /// Same with the jitter std-dev scaled (send-unit contention).
    pub fn ticks_scaled<R: Rng>(&self, duration_cycles: f64, jitter_scale: f64, rng: &mut R) -> u64 {
        let g = standard_normal(rng).clamp(-3.0, 3.0) * self.jitter_rel * jitter_scale;
        let ticks = duration_cycles * self.ticks_per_cycle * (1.0 + g);
        ticks.round().max(0.0) as u64
    }
}

/// Box-Muller standard normal; always consumes two uniforms.
fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Latency/noise scaling once active threads exceed the per-subslice send
/// units. `max(1, active / eus)` for both factors: the simplest form with
/// the observed 8-thread knee; a model constant, not a hardware claim.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContentionFactor {
    pub latency_multiplier: f64,
    pub jitter_scale: f64,
}

impl ContentionFactor {
    pub const NONE: ContentionFactor = ContentionFactor { latency_multiplier: 1.0, jitter_scale: 1.0 };
}

pub fn contention_factor(active_threads_in_subslice: u32, gpu: &GpuConfig) -> ContentionFactor {
    let m = (active_threads_in_subslice as f64 / gpu.eus_per_subslice as f64).max(1.0);
    ContentionFactor { latency_multiplier: m, jitter_scale: m }
}
