//! Command-line pipeline: `collect` memorygrams, extract `features`,
//! `evaluate` classifiers, `calibrate` timing constants, and `report` a
//! saved evaluation.
//!
//! One JSON config file drives everything; `--set path=value` flags
//! override individual fields (flag > file > preset default). Exit codes:
//! 0 success, 2 config error, 3 data error, 4 infeasible calibration.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cache::CacheGeometry;
use crate::calibrate::{self, Calibration, CalibrationAnchors, CalibrationError};
use crate::channel::{
    effective_sampling_rate, run_attack, Aggregation, AttackConfig, ChannelError, Memorygram,
    ProbeOrder,
};
use crate::fingerprint::{
    cross_validate, evaluate_open_world, features_from_memorygram, ClassifierSpec, Dataset,
    EvalReport, FingerprintError, Label,
};
use crate::gpu::{GpuGeneration, SpyLayout};
use crate::victim::{make_profile, scale_profile, ParamRanges};

/// Pipeline failure with its process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or usage (exit 2).
    Config(String),
    /// Unreadable, unwritable, or malformed data (exit 3).
    Data(String),
    /// The calibration anchors cannot be satisfied (exit 4).
    Calibration(CalibrationError),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Calibration(e) => write!(f, "calibration error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Calibration(_) => 4,
        }
    }
}

impl From<CalibrationError> for CliError {
    fn from(e: CalibrationError) -> Self {
        CliError::Calibration(e)
    }
}

impl From<ChannelError> for CliError {
    fn from(e: ChannelError) -> Self {
        match e {
            ChannelError::Calibration(c) => CliError::Calibration(c),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<FingerprintError> for CliError {
    fn from(e: FingerprintError) -> Self {
        CliError::Data(e.to_string())
    }
}

fn io_err(context: &str, e: std::io::Error) -> CliError {
    CliError::Data(format!("{context}: {e}"))
}

/// The single config file behind every subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// GPU preset name: "gen9", "gen9.5", or "gen11".
    pub gpu: String,
    pub geometry: CacheGeometry,
    pub attack: AttackBlock,
    pub corpus: CorpusBlock,
    pub pipeline: PipelineBlock,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackBlock {
    pub layout: SpyLayout,
    pub probe_order: ProbeOrder,
    pub probe_seed: u64,
    pub aggregation: Aggregation,
    /// Timing constants; solved from the anchors when absent.
    pub calibration: Option<Calibration>,
}

impl Default for AttackBlock {
    fn default() -> Self {
        AttackBlock {
            layout: SpyLayout::basic(),
            probe_order: ProbeOrder::ReverseRecency,
            probe_seed: 0,
            aggregation: Aggregation::Max,
            calibration: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusBlock {
    pub sites: u32,
    pub trials: u32,
    pub corpus_seed: u64,
    pub duration_s: f64,
    pub viewport_scale: f64,
    pub param_ranges: ParamRanges,
}

impl Default for CorpusBlock {
    fn default() -> Self {
        CorpusBlock {
            sites: 100,
            trials: 100,
            corpus_seed: 1,
            duration_s: 5.0,
            viewport_scale: 1.0,
            param_ranges: ParamRanges::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineBlock {
    pub segments_per_half: usize,
    pub classifier: ClassifierSpec,
    pub folds: usize,
    pub seed: u64,
}

impl Default for PipelineBlock {
    fn default() -> Self {
        PipelineBlock {
            segments_per_half: 4,
            classifier: ClassifierSpec::default_rf(),
            folds: 10,
            seed: 1,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            gpu: "gen9".into(),
            geometry: CacheGeometry::default(),
            attack: AttackBlock::default(),
            corpus: CorpusBlock::default(),
            pipeline: PipelineBlock::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    /// Load the preset, overlay the config file (if any), then apply
    /// `--set path=value` overrides.
    pub fn load(path: Option<&Path>, sets: &[String]) -> Result<RunConfig, CliError> {
        let mut value = match path {
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                serde_json::from_str::<serde_json::Value>(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => serde_json::json!({}),
        };
        for set in sets {
            apply_override(&mut value, set)?;
        }
        let config: RunConfig = serde_json::from_value(value)
            .map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn generation(&self) -> Result<GpuGeneration, CliError> {
        GpuGeneration::parse(&self.gpu)
            .ok_or_else(|| CliError::Config(format!("unknown gpu preset '{}'", self.gpu)))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let gen = self.generation()?;
        self.geometry.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.corpus.param_ranges.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.corpus.sites == 0 || self.corpus.trials == 0 {
            return Err(CliError::Config("corpus needs at least one site and one trial".into()));
        }
        if !(self.corpus.duration_s > 0.0) {
            return Err(CliError::Config("corpus duration must be positive".into()));
        }
        if !(self.corpus.viewport_scale > 0.0 && self.corpus.viewport_scale <= 1.0) {
            return Err(CliError::Config("viewport_scale must be in (0, 1]".into()));
        }
        self.pipeline.classifier.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.pipeline.folds < 2 {
            return Err(CliError::Config("folds must be at least 2".into()));
        }
        if (self.pipeline.folds as u32) > self.corpus.trials {
            return Err(CliError::Config(format!(
                "{} folds need at least that many trials per site, corpus has {}",
                self.pipeline.folds, self.corpus.trials
            )));
        }
        // Cross-field: the segment choice must fit the traces this attack
        // config will produce.
        let attack = self.attack_config(gen)?;
        let rate = effective_sampling_rate(&attack)?;
        let expected = (self.corpus.duration_s * rate + 1e-9).floor() as usize;
        let needed = 2 * self.pipeline.segments_per_half;
        if expected < needed {
            return Err(CliError::Config(format!(
                "expected {expected} samples per trace but segments_per_half {} needs {needed}",
                self.pipeline.segments_per_half
            )));
        }
        Ok(())
    }

    /// Solved calibration: the embedded block if present, else the anchor
    /// solve for this geometry.
    pub fn calibration(&self) -> Result<Calibration, CliError> {
        match self.attack.calibration {
            Some(c) => Ok(c),
            None => Ok(calibrate::solve(
                &self.geometry,
                self.geometry.capacity_bytes(),
                &CalibrationAnchors::default(),
            )?),
        }
    }

    pub fn attack_config(&self, gen: GpuGeneration) -> Result<AttackConfig, CliError> {
        let cal = self.calibration()?;
        let mut config = AttackConfig::from_calibration(
            gen,
            self.geometry.clone(),
            self.attack.layout,
            self.corpus.duration_s,
            &cal,
        );
        config.probe_order = self.attack.probe_order;
        config.probe_seed = self.attack.probe_seed;
        config.aggregation = self.attack.aggregation;
        Ok(config)
    }
}

/// `--set a.b.c=value`: value parses as JSON when possible, else as a string.
fn apply_override(root: &mut serde_json::Value, set: &str) -> Result<(), CliError> {
    let (path, raw) = set
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--set needs path=value, got '{set}'")))?;
    let value = serde_json::from_str(raw).unwrap_or(serde_json::Value::String(raw.to_string()));
    let mut at = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if !at.is_object() {
            *at = serde_json::json!({});
        }
        let map = at.as_object_mut().expect("object");
        if i + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        at = map.entry(part.to_string()).or_insert(serde_json::json!({}));
    }
    Err(CliError::Config(format!("empty --set path in '{set}'")))
}

#[derive(Parser, Debug)]
#[command(name = "occusim", version, about = "iGPU cache-occupancy channel simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct ConfigArgs {
    /// JSON run config; preset defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config field, e.g. --set corpus.sites=20
    #[arg(long = "set", value_name = "PATH=VALUE")]
    pub sets: Vec<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate the corpus and write one memorygram JSONL file per site.
    Collect {
        #[command(flatten)]
        config: ConfigArgs,
        /// Worker threads for the site x trial grid (0 = all cores).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Override the configured output directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Extract feature vectors from memorygram JSONL files into a CSV.
    Features {
        /// Input JSONL files.
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        /// Segments per half (4 -> 60 features, 8 -> 108).
        #[arg(long, default_value_t = 4)]
        segments: usize,
        #[arg(long)]
        output: PathBuf,
    },
    /// Cross-validate a classifier on a feature CSV and write the report.
    Evaluate {
        /// Closed-world feature CSV.
        #[arg(long)]
        features: PathBuf,
        /// closed or open.
        #[arg(long, default_value = "closed")]
        mode: String,
        /// Open-world feature CSV (rows join the NON_SENSITIVE class).
        #[arg(long)]
        open: Option<PathBuf>,
        /// Classifier: knn or rf.
        #[arg(long, default_value = "rf")]
        classifier: String,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 100)]
        trees: usize,
        #[arg(long, default_value_t = 1)]
        min_leaf: usize,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Report JSON path.
        #[arg(long)]
        report: PathBuf,
        /// Prefix for plot-data CSVs (<prefix>_classes.csv, <prefix>_confusion.csv).
        #[arg(long)]
        plot_prefix: Option<PathBuf>,
    },
    /// Solve the timing constants and write them as JSON.
    Calibrate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        output: PathBuf,
    },
    /// Print a saved evaluation report.
    Report {
        #[arg(long)]
        report: PathBuf,
    },
}

/// Manifest written next to collected memorygrams; it embeds the full run
/// config, so it alone regenerates every downstream artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub config: RunConfig,
    pub config_hash: String,
    pub rate_hz: f64,
    pub samples_per_trace: usize,
    pub files: Vec<String>,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Collect { config, jobs, output_dir } => {
            let mut cfg = RunConfig::load(config.config.as_deref(), &config.sets)?;
            if let Some(dir) = output_dir {
                cfg.output_dir = dir;
            }
            cmd_collect(&cfg, jobs)
        }
        Command::Features { input, segments, output } => cmd_features(&input, segments, &output),
        Command::Evaluate {
            features,
            mode,
            open,
            classifier,
            k,
            trees,
            min_leaf,
            folds,
            seed,
            report,
            plot_prefix,
        } => {
            let spec = match classifier.as_str() {
                "knn" => ClassifierSpec::Knn { k },
                "rf" => ClassifierSpec::Rf { trees, min_leaf, seed },
                other => return Err(CliError::Config(format!("unknown classifier '{other}'"))),
            };
            cmd_evaluate(&features, &mode, open.as_deref(), spec, folds, seed, &report, plot_prefix.as_deref())
        }
        Command::Calibrate { config, output } => {
            let cfg = RunConfig::load(config.config.as_deref(), &config.sets)?;
            cmd_calibrate(&cfg, &output)
        }
        Command::Report { report } => cmd_report(&report),
    }
}

/// Simulate `sites x trials` memorygrams into one JSONL file per site.
pub fn cmd_collect(cfg: &RunConfig, jobs: usize) -> Result<(), CliError> {
    let gen = cfg.generation()?;
    let attack = cfg.attack_config(gen)?;
    let corpus = &cfg.corpus;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;

    let mut profiles = Vec::with_capacity(corpus.sites as usize);
    for site in 0..corpus.sites {
        let p = make_profile(site, corpus.corpus_seed, &corpus.param_ranges)
            .map_err(|e| CliError::Config(e.to_string()))?;
        let p = scale_profile(&p, corpus.viewport_scale)
            .map_err(|e| CliError::Config(e.to_string()))?;
        profiles.push(p);
    }

    let runs: Vec<(u32, u32)> = (0..corpus.sites)
        .flat_map(|s| (0..corpus.trials).map(move |t| (s, t)))
        .collect();
    let grams: Vec<Result<Memorygram, ChannelError>> = pool.install(|| {
        runs.par_iter()
            .map(|&(site, trial)| run_attack(&attack, &profiles[site as usize], trial))
            .collect()
    });

    fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| io_err(&format!("creating {}", cfg.output_dir.display()), e))?;

    let mut files = Vec::new();
    let mut iter = grams.into_iter();
    let mut samples_per_trace = 0;
    for site in 0..corpus.sites {
        let name = format!("site_{site:04}.jsonl");
        let path = cfg.output_dir.join(&name);
        let file = fs::File::create(&path)
            .map_err(|e| io_err(&format!("writing {}", path.display()), e))?;
        let mut w = BufWriter::new(file);
        for _ in 0..corpus.trials {
            let gram = iter.next().expect("one result per run").map_err(CliError::from)?;
            samples_per_trace = gram.samples.len();
            writeln!(w, "{}", gram.to_json_line())
                .map_err(|e| io_err(&format!("writing {}", path.display()), e))?;
        }
        w.flush().map_err(|e| io_err(&format!("writing {}", path.display()), e))?;
        files.push(name);
    }

    let manifest = Manifest {
        config: cfg.clone(),
        config_hash: attack.config_hash(),
        rate_hz: effective_sampling_rate(&attack)?,
        samples_per_trace,
        files,
    };
    let path = cfg.output_dir.join("manifest.json");
    write_json(&path, &manifest)?;
    println!(
        "collected {} traces ({} sites x {} trials) at {:.1} Hz into {}",
        corpus.sites * corpus.trials,
        corpus.sites,
        corpus.trials,
        manifest.rate_hz,
        cfg.output_dir.display()
    );
    Ok(())
}

/// Extract one CSV row per trace. Traces too short for the segment choice
/// are reported and skipped; it is an error if nothing survives.
pub fn cmd_features(inputs: &[PathBuf], segments: usize, output: &Path) -> Result<(), CliError> {
    let mut vectors = Vec::new();
    let mut skipped = 0usize;
    for input in inputs {
        let file = fs::File::open(input)
            .map_err(|e| io_err(&format!("reading {}", input.display()), e))?;
        let grams = Memorygram::read_jsonl(BufReader::new(file))
            .map_err(|e| io_err(&format!("parsing {}", input.display()), e))?;
        for gram in grams {
            match features_from_memorygram(&gram, segments) {
                Ok(v) => vectors.push(v),
                Err(FingerprintError::TraceTooShort { samples, needed }) => {
                    eprintln!(
                        "skipping {} trial {}: {samples} samples < {needed}",
                        gram.site_id, gram.trial
                    );
                    skipped += 1;
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
    if vectors.is_empty() {
        return Err(CliError::Data(format!(
            "no usable traces ({skipped} skipped as too short)"
        )));
    }
    let ds = Dataset::new(vectors);
    ds.validate()?;
    let file = fs::File::create(output)
        .map_err(|e| io_err(&format!("writing {}", output.display()), e))?;
    ds.write_csv(BufWriter::new(file))
        .map_err(|e| io_err(&format!("writing {}", output.display()), e))?;
    println!("wrote {} x {} feature matrix to {}", ds.len(), ds.dim(), output.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_evaluate(
    features: &Path,
    mode: &str,
    open: Option<&Path>,
    spec: ClassifierSpec,
    folds: usize,
    seed: u64,
    report_path: &Path,
    plot_prefix: Option<&Path>,
) -> Result<(), CliError> {
    let closed = read_features(features)?;
    let report = match mode {
        "closed" => cross_validate(&closed, &spec, folds, seed)?,
        "open" => {
            let open_path =
                open.ok_or_else(|| CliError::Config("--mode open requires --open".into()))?;
            let mut open_ds = read_features(open_path)?;
            // Open-world rows form the background class regardless of the
            // site ids they were collected under.
            for v in &mut open_ds.vectors {
                v.label = Label::NonSensitive;
            }
            evaluate_open_world(&closed, &open_ds, &spec, folds, seed)?
        }
        other => return Err(CliError::Config(format!("unknown mode '{other}'"))),
    };

    write_json(report_path, &report)?;
    if let Some(prefix) = plot_prefix {
        write_plot_data(prefix, &report)?;
    }
    print_report(&report);
    Ok(())
}

fn read_features(path: &Path) -> Result<Dataset, CliError> {
    let file =
        fs::File::open(path).map_err(|e| io_err(&format!("reading {}", path.display()), e))?;
    Dataset::read_csv(BufReader::new(file)).map_err(CliError::from)
}

/// Solve the anchors for the configured geometry and record the constants
/// plus the realized rates and the no-victim full-probe tick level.
pub fn cmd_calibrate(cfg: &RunConfig, output: &Path) -> Result<(), CliError> {
    let gen = cfg.generation()?;
    let anchors = CalibrationAnchors::default();
    let cal = calibrate::solve(&cfg.geometry, cfg.geometry.capacity_bytes(), &anchors)?;

    let mut basic = AttackConfig::from_calibration(
        gen,
        cfg.geometry.clone(),
        SpyLayout::basic(),
        1.0,
        &cal,
    );
    basic.probe_order = cfg.attack.probe_order;
    let rate_basic = effective_sampling_rate(&basic)?;
    let parallel = AttackConfig::from_calibration(
        gen,
        cfg.geometry.clone(),
        SpyLayout::parallel(&gen.config()),
        1.0,
        &cal,
    );
    let rate_parallel = effective_sampling_rate(&parallel)?;

    // Idle-victim run: the mean sample is the all-hit full-probe tick level.
    let idle = crate::channel::run_attack_with_events(&basic, cfg.corpus.corpus_seed, 0, 0, &[])?;
    let mean_ticks =
        idle.samples.iter().sum::<u64>() as f64 / idle.samples.len().max(1) as f64;

    #[derive(Serialize)]
    struct CalibrationReport {
        calibration: Calibration,
        anchors: CalibrationAnchors,
        rate_basic_hz: f64,
        rate_parallel_hz: f64,
        full_probe_tick_mean: f64,
    }
    write_json(
        output,
        &CalibrationReport {
            calibration: cal,
            anchors,
            rate_basic_hz: rate_basic,
            rate_parallel_hz: rate_parallel,
            full_probe_tick_mean: mean_ticks,
        },
    )?;
    println!(
        "calibration: clock {:.0} Hz, dispatch {:.6} s, {:.1}/{:.1} Hz, idle probe {:.0} ticks",
        cal.clock_hz, cal.dispatch_overhead_s, rate_basic, rate_parallel, mean_ticks
    );
    Ok(())
}

pub fn cmd_report(path: &Path) -> Result<(), CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| io_err(&format!("reading {}", path.display()), e))?;
    let report: EvalReport =
        serde_json::from_str(&text).map_err(|e| CliError::Data(e.to_string()))?;
    print_report(&report);
    Ok(())
}

fn print_report(report: &EvalReport) {
    println!(
        "{:?} | {} folds | accuracy {:.3} | macro P {:.3} R {:.3} F1 {:.3}",
        report.classifier,
        report.folds,
        report.accuracy,
        report.macro_precision,
        report.macro_recall,
        report.macro_f1
    );
    if let Some(s) = &report.sensitive_macro {
        println!("sensitive-only macro: P {:.3} R {:.3} F1 {:.3}", s.precision, s.recall, s.f1);
    }
    println!("label  precision  recall  f1  support");
    for c in &report.per_class {
        println!(
            "{:>5}  {:>9.3}  {:>6.3}  {:.3}  {}",
            c.label.to_string(),
            c.precision,
            c.recall,
            c.f1,
            c.support
        );
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, text + "\n").map_err(|e| io_err(&format!("writing {}", path.display()), e))
}

/// Flat plot data: per-class metrics and the confusion matrix.
fn write_plot_data(prefix: &Path, report: &EvalReport) -> Result<(), CliError> {
    let classes_path = PathBuf::from(format!("{}_classes.csv", prefix.display()));
    let mut out = String::from("label,precision,recall,f1,support\n");
    for c in &report.per_class {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            c.label.to_csv_id(),
            c.precision,
            c.recall,
            c.f1,
            c.support
        ));
    }
    fs::write(&classes_path, out)
        .map_err(|e| io_err(&format!("writing {}", classes_path.display()), e))?;

    let confusion_path = PathBuf::from(format!("{}_confusion.csv", prefix.display()));
    let mut out = String::from("true_label,predicted_label,count\n");
    for (i, row) in report.confusion.iter().enumerate() {
        for (j, &count) in row.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{count}\n",
                report.labels[i].to_csv_id(),
                report.labels[j].to_csv_id()
            ));
        }
    }
    fs::write(&confusion_path, out)
        .map_err(|e| io_err(&format!("writing {}", confusion_path.display()), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_defaults_match_the_closed_world_protocol() {
        let cfg = RunConfig::default();
        assert_eq!((cfg.corpus.sites, cfg.corpus.trials), (100, 100));
        assert_eq!(cfg.corpus.sites * cfg.corpus.trials, 10_000);
        assert_eq!(cfg.corpus.duration_s, 5.0);
        assert_eq!(cfg.pipeline.folds, 10);
        cfg.validate().unwrap();
    }

    #[test]
    fn overrides_apply_with_precedence() {
        let cfg = RunConfig::load(
            None,
            &["corpus.sites=12".into(), "gpu=gen11".into(), "pipeline.folds=5".into()],
        )
        .unwrap();
        assert_eq!(cfg.corpus.sites, 12);
        assert_eq!(cfg.gpu, "gen11");
        assert_eq!(cfg.pipeline.folds, 5);
    }

    #[test]
    fn bad_override_and_bad_preset_are_config_errors() {
        assert!(matches!(
            RunConfig::load(None, &["corpus.sites".into()]),
            Err(CliError::Config(_))
        ));
        let err = RunConfig::load(None, &["gpu=gen13".into()]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn segment_sample_cross_check() {
        // 0.1 s at 50 Hz gives 5 samples; segments=4 needs 8.
        let err = RunConfig::load(None, &["corpus.duration_s=0.1".into()]).unwrap_err();
        assert!(err.to_string().contains("segments_per_half"));
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = RunConfig::default();
        let js = serde_json::to_string_pretty(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&js).unwrap();
        assert_eq!(back, cfg);
    }
}
