//! The cache-occupancy channel: prime the whole L3-sized buffer, let the
//! victim render, probe and time. One dispatched probe shader per
//! memorygram sample; parallel layouts split the buffer across active
//! threads, each probing its own disjoint partition.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cache::{AccessDomain, CacheError, CacheGeometry, CacheState};
use crate::calibrate::{self, Calibration, CalibrationAnchors, CalibrationError};
use crate::gpu::{
    contention_factor, validate_layout, ContentionFactor, GpuConfig, GpuGeneration, LayoutError,
    SpyLayout, TimerModel, ValidatedLayout,
};
use crate::seedmix::{stream, stream_rng};
use crate::victim::{generate_trace, RenderEvent, SiteProfile, VictimError};

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("buffer of {bytes} bytes not a multiple of the {line} byte line size")]
    UnalignedBuffer { bytes: u64, line: u64 },
    #[error("probe buffer is empty")]
    EmptyBuffer,
    #[error("attack duration must be positive, got {0}")]
    ZeroDuration(f64),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error(transparent)]
    Victim(#[from] VictimError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
}

/// Order in which the probe walks the buffer.
///
/// `ReverseRecency` walks against the current recency order (most recently
/// primed line first), which under LRU makes per-probe misses exactly equal
/// the lines the victim evicted and leaves the buffer re-primed. A fixed
/// order (prime order or a seeded permutation) self-evicts in cascades under
/// LRU once anything was evicted; the permutation exists to mirror the
/// anti-prefetch measure of real attacks, not for signal quality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ProbeOrder {
    PrimeOrder,
    ReverseRecency,
    RandomPermutation,
}

/// How per-thread tick counts combine into one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// Shader finishes with its slowest lane.
    Max,
    Mean,
}

/// A pointer-chase visiting every line of the buffer exactly once.
#[derive(Debug, Clone)]
pub struct ProbeChain {
    pub buffer_base: u64,
    pub buffer_bytes: u64,
    pub order: ProbeOrder,
    pub seed: u64,
    /// Line indices in prime order.
    lines: Vec<u32>,
}

impl ProbeChain {
    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    /// Byte address of the line at chain position `pos` (prime order).
    pub fn addr_at(&self, pos: usize, geo: &CacheGeometry) -> u64 {
        self.buffer_base + self.lines[pos] as u64 * geo.line_size_bytes
    }

    /// Whether probe pass `pass` walks the chain backward.
    ///
    /// Priming leaves recency equal to the chain order, and every probe
    /// leaves recency equal to its own visit order, so reverse-recency
    /// probing alternates direction: backward on pass 0, forward on pass 1,
    /// and so on. Fixed orders never reverse.
    pub fn backward_on(&self, pass: u64) -> bool {
        self.order == ProbeOrder::ReverseRecency && pass % 2 == 0
    }

    /// Chain positions in the order probe pass `pass` visits them.
    pub fn visit_positions(&self, pass: u64) -> impl Iterator<Item = usize> + '_ {
        let n = self.lines.len();
        let backward = self.backward_on(pass);
        (0..n).map(move |i| if backward { n - 1 - i } else { i })
    }
}

/// Build the probe chain for a buffer. `seed` feeds the Fisher-Yates
/// shuffle of `RANDOM_PERMUTATION` and is ignored by the fixed orders.
pub fn build_probe_chain(
    buffer_base: u64,
    buffer_bytes: u64,
    geo: &CacheGeometry,
    order: ProbeOrder,
    seed: u64,
) -> Result<ProbeChain, ChannelError> {
    if buffer_bytes == 0 {
        return Err(ChannelError::EmptyBuffer);
    }
    if buffer_bytes % geo.line_size_bytes != 0 || buffer_base % geo.line_size_bytes != 0 {
        return Err(ChannelError::UnalignedBuffer { bytes: buffer_bytes, line: geo.line_size_bytes });
    }
    let n = (buffer_bytes / geo.line_size_bytes) as u32;
    let mut lines: Vec<u32> = (0..n).collect();
    if order == ProbeOrder::RandomPermutation {
        let mut rng = stream_rng(seed, &[stream::PROBE_PERM]);
        for i in (1..lines.len()).rev() {
            let j = rand::Rng::gen_range(&mut rng, 0..=i);
            lines.swap(i, j);
        }
    }
    Ok(ProbeChain { buffer_base, buffer_bytes, order, seed, lines })
}

/// Everything one attack run needs. `config_hash` of this struct's
/// canonical JSON (serde_json, fields in declaration order, maps sorted)
/// keys the produced memorygrams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub layout: SpyLayout,
    pub gpu: GpuConfig,
    pub geo: CacheGeometry,
    pub timer: TimerModel,
    pub probe_order: ProbeOrder,
    pub probe_seed: u64,
    pub buffer_base: u64,
    pub buffer_bytes: u64,
    pub dispatch_overhead_s: f64,
    pub clock_hz: f64,
    pub duration_s: f64,
    pub aggregation: Aggregation,
}

impl AttackConfig {
    /// Assemble a config from solved calibration constants.
    pub fn calibrated(
        gen: GpuGeneration,
        geo: CacheGeometry,
        layout: SpyLayout,
        duration_s: f64,
    ) -> Result<Self, ChannelError> {
        let buffer_bytes = geo.capacity_bytes();
        let cal = calibrate::solve(&geo, buffer_bytes, &CalibrationAnchors::default())?;
        Ok(Self::from_calibration(gen, geo, layout, duration_s, &cal))
    }

    pub fn from_calibration(
        gen: GpuGeneration,
        geo: CacheGeometry,
        layout: SpyLayout,
        duration_s: f64,
        cal: &Calibration,
    ) -> Self {
        AttackConfig {
            layout,
            gpu: gen.config(),
            timer: TimerModel::new(cal.ticks_per_cycle, gen.timer_jitter_rel()),
            probe_order: ProbeOrder::ReverseRecency,
            probe_seed: 0,
            buffer_base: 0,
            buffer_bytes: geo.capacity_bytes(),
            dispatch_overhead_s: cal.dispatch_overhead_s,
            clock_hz: cal.clock_hz,
            duration_s,
            aggregation: Aggregation::Max,
            geo,
        }
    }

    /// Single-thread 50 Hz attack, 5 s.
    pub fn basic(gen: GpuGeneration) -> Self {
        Self::calibrated(gen, CacheGeometry::default(), SpyLayout::basic(), 5.0)
            .expect("default calibration is feasible")
    }

    /// Workgroup-per-subslice, 8 active threads each, 3 s.
    pub fn parallel(gen: GpuGeneration) -> Self {
        let layout = SpyLayout::parallel(&gen.config());
        Self::calibrated(gen, CacheGeometry::default(), layout, 3.0)
            .expect("default calibration is feasible")
    }

    pub fn validate(&self) -> Result<ValidatedLayout, ChannelError> {
        self.geo.validate()?;
        Ok(validate_layout(&self.layout, &self.gpu)?)
    }

    /// SHA-256 of the canonical JSON form, lowercase hex.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Nominal sample rate: `1 / (dispatch_overhead + slowest partition probe)`
/// with the all-hit partition probe time `ceil(lines / active) * hit_latency
/// / clock`. Contention inflates measured ticks and their jitter, not the
/// dispatch timeline.
pub fn effective_sampling_rate(config: &AttackConfig) -> Result<f64, ChannelError> {
    let v = config.validate()?;
    let lines = config.buffer_bytes / config.geo.line_size_bytes;
    let cycles = calibrate::probe_cycles(lines, v.total_active_threads, config.geo.hit_latency_cycles);
    Ok(1.0 / (config.dispatch_overhead_s + cycles as f64 / config.clock_hz))
}

/// Fill the cache with the buffer, walking the chain in prime order.
pub fn prime(state: &mut CacheState, chain: &ProbeChain, geo: &CacheGeometry) -> Result<(), ChannelError> {
    for pos in 0..chain.len() {
        state.access(chain.addr_at(pos, geo), AccessDomain::Spy, geo)?;
    }
    Ok(())
}

/// One single-thread probe pass: walk the whole chain, sum latencies, and
/// convert through the timer. `pass` numbers probes since the last prime.
pub fn probe_once(
    state: &mut CacheState,
    chain: &ProbeChain,
    pass: u64,
    geo: &CacheGeometry,
    timer: &TimerModel,
    contention: &ContentionFactor,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<u64, ChannelError> {
    let mut cycles = 0u64;
    let mut walk = |pos: usize| -> Result<(), ChannelError> {
        cycles += state.access(chain.addr_at(pos, geo), AccessDomain::Spy, geo)?.latency_cycles;
        Ok(())
    };
    let n = chain.len();
    if chain.backward_on(pass) {
        for pos in (0..n).rev() {
            walk(pos)?;
        }
    } else {
        for pos in 0..n {
            walk(pos)?;
        }
    }
    Ok(timer.ticks_scaled(cycles as f64 * contention.latency_multiplier, contention.jitter_scale, rng))
}

/// Balanced contiguous partition boundaries: thread `t` owns chain
/// positions `[bounds[t], bounds[t+1])`. Disjoint and covering by
/// construction.
pub fn partition_bounds(n_lines: usize, threads: u32) -> Vec<usize> {
    let t = threads as usize;
    (0..=t).map(|i| i * n_lines / t).collect()
}

/// One probe dispatch across all active threads of the layout; returns
/// per-thread tick counts in thread order.
fn probe_partitioned(
    state: &mut CacheState,
    chain: &ProbeChain,
    pass: u64,
    geo: &CacheGeometry,
    timer: &TimerModel,
    owner: &[u32],
    factors: &[ContentionFactor],
    cycles_scratch: &mut [u64],
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<Vec<u64>, ChannelError> {
    cycles_scratch.fill(0);
    let mut walk = |pos: usize| -> Result<(), ChannelError> {
        let lat = state.access(chain.addr_at(pos, geo), AccessDomain::Spy, geo)?.latency_cycles;
        cycles_scratch[owner[pos] as usize] += lat;
        Ok(())
    };
    let n = chain.len();
    if chain.backward_on(pass) {
        for pos in (0..n).rev() {
            walk(pos)?;
        }
    } else {
        for pos in 0..n {
            walk(pos)?;
        }
    }
    drop(walk);
    Ok(cycles_scratch
        .iter()
        .zip(factors)
        .map(|(&c, f)| timer.ticks_scaled(c as f64 * f.latency_multiplier, f.jitter_scale, rng))
        .collect())
}

/// Probe-latency time series for one (site, trial) visit.
///
/// JSONL persistence: one object per line with exactly these fields:
/// `{"site": int, "trial": int, "rate_hz": real, "config_hash": hex,
/// "samples": [int, ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Memorygram {
    #[serde(rename = "site")]
    pub site_id: u32,
    pub trial: u32,
    #[serde(rename = "rate_hz")]
    pub sampling_rate_hz: f64,
    pub config_hash: String,
    pub samples: Vec<u64>,
}

impl Memorygram {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("memorygram serializes")
    }

    pub fn write_jsonl<W: Write>(grams: &[Memorygram], mut w: W) -> std::io::Result<()> {
        for g in grams {
            writeln!(w, "{}", g.to_json_line())?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> std::io::Result<Vec<Memorygram>> {
        let mut out = Vec::new();
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let g: Memorygram = serde_json::from_str(&line)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
            out.push(g);
        }
        Ok(out)
    }
}

/// Run the full attack against a generated victim trace.
pub fn run_attack(
    config: &AttackConfig,
    profile: &SiteProfile,
    trial: u32,
) -> Result<Memorygram, ChannelError> {
    let events = generate_trace(profile, config.duration_s, trial as u64)?;
    run_attack_with_events(config, profile.corpus_seed, profile.site_id, trial, &events)
}

/// Same, with the victim events supplied by the caller (an empty slice is
/// an idle victim). All RNG streams are keyed by `(corpus_seed, site_id,
/// trial)`, so a run with the same keys and no events is the exact
/// no-victim counterfactual of a normal run.
pub fn run_attack_with_events(
    config: &AttackConfig,
    corpus_seed: u64,
    site_id: u32,
    trial: u32,
    events: &[RenderEvent],
) -> Result<Memorygram, ChannelError> {
    if !(config.duration_s > 0.0) {
        return Err(ChannelError::ZeroDuration(config.duration_s));
    }
    let validated = config.validate()?;
    let rate = effective_sampling_rate(config)?;
    let n_samples = (config.duration_s * rate + 1e-9).floor() as u64;
    let period = 1.0 / rate;

    let chain = build_probe_chain(
        config.buffer_base,
        config.buffer_bytes,
        &config.geo,
        config.probe_order,
        config.probe_seed,
    )?;

    let threads = validated.total_active_threads;
    let bounds = partition_bounds(chain.len(), threads);
    let mut owner = vec![0u32; chain.len()];
    for t in 0..threads as usize {
        owner[bounds[t]..bounds[t + 1]].fill(t as u32);
    }
    let factors: Vec<ContentionFactor> = (0..threads)
        .map(|t| {
            let ss = validated.thread_subslice(t);
            contention_factor(validated.active_per_subslice[ss as usize], &config.gpu)
        })
        .collect();

    let mut state = CacheState::with_seed(
        &config.geo,
        crate::seedmix::derive_seed(corpus_seed, &[stream::STATE, site_id as u64, trial as u64]),
    );
    let mut timer_rng = stream_rng(corpus_seed, &[stream::TIMER, site_id as u64, trial as u64]);

    prime(&mut state, &chain, &config.geo)?;

    let mut samples = Vec::with_capacity(n_samples as usize);
    let mut cursor = 0usize;
    let mut cycles_scratch = vec![0u64; threads as usize];
    for s in 0..n_samples {
        // Victim activity lands at window boundaries: everything up to the
        // end of window `s` is applied before probe `s`.
        let window_end = (s + 1) as f64 * period;
        while cursor < events.len() && events[cursor].time_s < window_end {
            state.access(events[cursor].addr, AccessDomain::Victim, &config.geo)?;
            cursor += 1;
        }
        let ticks = probe_partitioned(
            &mut state,
            &chain,
            s,
            &config.geo,
            &config.timer,
            &owner,
            &factors,
            &mut cycles_scratch,
            &mut timer_rng,
        )?;
        samples.push(match config.aggregation {
            Aggregation::Max => *ticks.iter().max().expect("at least one thread"),
            Aggregation::Mean => {
                (ticks.iter().sum::<u64>() as f64 / ticks.len() as f64).round() as u64
            }
        });
    }

    Ok(Memorygram {
        site_id,
        trial,
        sampling_rate_hz: rate,
        config_hash: config.config_hash(),
        samples,
    })
}
