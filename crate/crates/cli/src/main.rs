use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use spikesort::datagen::{self, Difficulty, NoiseModel, SynthSpec};
use spikesort::estimator::{auto_sort, estimate_c, EstimateOptions, EstimationReport, GapRule, IndexKind};
use spikesort::evaluation::{
    self, accuracy_labels, bench_csv, bench_scaling, best_cluster_score, render_table, Method, TableRow, TrialStats,
};
use spikesort::io;
use spikesort::signal::{
    design_filter, detect_spikes, extract_waveforms, filtfilt, FilterSpec, Trace, DEFAULT_ALIGN_OFFSET,
    DEFAULT_K_SIGMA, DEFAULT_REFRACTORY_MS, DEFAULT_WINDOW,
};
use spikesort::{fit, sequential_baseline, Partition, Ridge, SolverOptions, SortResult, SpikeMatrix};

// Stdout writes that surface errors instead of panicking on a closed pipe.
macro_rules! outln {
    ($($arg:tt)*) => { writeln!(std::io::stdout().lock(), $($arg)*)? };
}
macro_rules! out {
    ($($arg:tt)*) => { write!(std::io::stdout().lock(), $($arg)*)? };
}

const EXIT_USAGE: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "spikesort", version, about = "Trace-ratio spike sorting toolkit")]
struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Worker threads for trials and candidate counts (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Write runtime fields as 0 so outputs are byte-identical across runs.
    #[arg(long, global = true)]
    no_timing: bool,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Table,
}

#[derive(Clone, Copy, ValueEnum)]
enum IndexArg {
    Ch,
    Gap,
}

impl From<IndexArg> for IndexKind {
    fn from(v: IndexArg) -> Self {
        match v {
            IndexArg::Ch => IndexKind::CalinskiHarabasz,
            IndexArg::Gap => IndexKind::Gap,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseArg {
    White,
    Ar2,
}

#[derive(clap::Args)]
struct TraceIn {
    /// Trace file: raw little-endian f64 with a `.json` sidecar, or a `.csv` column.
    #[arg(long)]
    input: PathBuf,
    /// Sampling rate for CSV traces.
    #[arg(long)]
    fs: Option<f64>,
}

#[derive(clap::Args)]
struct SolverArgs {
    /// K-means++ restarts per partition update.
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    #[arg(long, default_value_t = 100)]
    max_outer: usize,
    #[arg(long, default_value_t = 300)]
    max_km_iters: usize,
    /// Fixed ridge on inverted Gram matrices (default: only when needed).
    #[arg(long)]
    ridge: Option<f64>,
}

impl SolverArgs {
    fn options(&self, c: usize, seed: u64) -> SolverOptions {
        SolverOptions {
            c,
            restarts: self.restarts,
            max_outer: self.max_outer,
            max_km_iters: self.max_km_iters,
            seed,
            ridge: self.ridge.map_or(Ridge::Auto, Ridge::Fixed),
        }
    }
}

#[derive(clap::Args)]
struct EstimateArgs {
    /// PCA dimension used while estimating the count.
    #[arg(long, default_value_t = 3)]
    m0: usize,
    /// Inclusive candidate range (default 2 to min(10, n - 1)).
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    c_range: Option<Vec<usize>>,
    #[arg(long, value_enum, default_value_t = IndexArg::Ch)]
    index: IndexArg,
    /// Pick the gap maximum instead of the first-k rule.
    #[arg(long)]
    gap_argmax: bool,
    #[arg(long, default_value_t = 10)]
    b_refs: usize,
}

impl EstimateArgs {
    fn options(&self, seed: u64) -> EstimateOptions {
        EstimateOptions {
            m0: self.m0,
            c_range: self.c_range.as_ref().map(|r| (r[0], r[1])),
            index: self.index.into(),
            gap_rule: if self.gap_argmax {
                GapRule::Argmax
            } else {
                GapRule::FirstK
            },
            b_refs: self.b_refs,
            seed,
            ..EstimateOptions::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labelled synthetic spike set.
    Synth {
        #[arg(long, default_value_t = 3)]
        units: usize,
        /// Spikes per unit.
        #[arg(long, default_value_t = 300)]
        n: usize,
        /// Noise standard deviation relative to template peak.
        #[arg(long, default_value_t = 0.1, allow_negative_numbers = true)]
        noise: f64,
        #[arg(long, default_value_t = 64)]
        d: usize,
        #[arg(long)]
        difficult: bool,
        #[arg(long, default_value_t = 0.0)]
        overlap: f64,
        #[arg(long, default_value_t = 24_000.0)]
        fs: f64,
        #[arg(long, value_enum, default_value_t = NoiseArg::White)]
        noise_model: NoiseArg,
        #[arg(long, num_args = 2, value_names = ["A1", "A2"], allow_negative_numbers = true, default_values_t = [0.6, -0.2])]
        ar: Vec<f64>,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Also render a continuous trace (raw f64 + sidecar) to this path.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Zero-phase Butterworth filtering of a trace.
    Filter {
        #[command(flatten)]
        trace: TraceIn,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 300.0)]
        low: f64,
        #[arg(long, default_value_t = 6000.0)]
        high: f64,
        #[arg(long, default_value_t = 4)]
        order: usize,
        /// High-pass at `--low` instead of band-pass.
        #[arg(long)]
        highpass: bool,
    },
    /// Threshold detection; writes one sample index per line.
    Detect {
        #[command(flatten)]
        trace: TraceIn,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = DEFAULT_K_SIGMA)]
        k_sigma: f64,
        #[arg(long, default_value_t = DEFAULT_REFRACTORY_MS)]
        refractory_ms: f64,
    },
    /// Cut aligned waveforms around given times.
    Extract {
        #[command(flatten)]
        trace: TraceIn,
        #[arg(long)]
        times: PathBuf,
        #[arg(long)]
        out_spikes: PathBuf,
        /// Times of the spikes actually kept.
        #[arg(long)]
        out_times: PathBuf,
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: usize,
        #[arg(long, default_value_t = DEFAULT_ALIGN_OFFSET)]
        align: usize,
    },
    /// Sort with a known number of units.
    Sort {
        #[arg(long)]
        spikes: PathBuf,
        #[arg(long)]
        c: usize,
        #[arg(long)]
        output: Option<PathBuf>,
        /// PCA followed by K-means instead of the joint solver.
        #[arg(long)]
        baseline: bool,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Estimate the number of units, then sort.
    Auto {
        #[arg(long)]
        spikes: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        estimate: EstimateArgs,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Estimate the number of units only.
    Estimate {
        #[arg(long)]
        spikes: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        estimate: EstimateArgs,
    },
    /// Score predictions against ground truth.
    Eval {
        /// Ground-truth labels CSV.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Predicted labels CSV or result JSON; several files are aggregated.
        #[arg(long, num_args = 1..)]
        pred: Vec<PathBuf>,
        /// Ground-truth spike times of one unit, for FPR/FNR.
        #[arg(long)]
        gt_times: Option<PathBuf>,
        /// Times of the sorted spikes, aligned with the predictions.
        #[arg(long)]
        spike_times: Option<PathBuf>,
        #[arg(long, default_value_t = evaluation::DEFAULT_TOL_MS)]
        tol_ms: f64,
        #[arg(long, default_value_t = 24_000.0)]
        fs: f64,
        /// Run repeated trials on this spikes file instead of reading predictions.
        #[arg(long)]
        spikes: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long)]
        c: Option<usize>,
        #[arg(long)]
        dataset: Option<String>,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
    },
    /// Runtime against number of spikes.
    Bench {
        #[arg(long, num_args = 1.., default_values_t = [1000, 2000, 4000, 8000])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Serialize)]
struct SortJson<'a> {
    c_hat: usize,
    labels: &'a [usize],
    objective_history: &'a [f64],
    iterations: usize,
    converged: bool,
    runtime_ms: f64,
    index_scores: Option<&'a [f64]>,
    index_kind: Option<IndexKind>,
    candidates: Option<&'a [usize]>,
    m0: Option<usize>,
    d: usize,
    m: usize,
    #[serde(rename = "W")]
    w: Vec<f64>,
    monotonicity_violations: &'a [usize],
    max_ridge: f64,
    seed: u64,
}

fn sort_json<'a>(r: &'a SortResult, report: Option<&'a EstimationReport>, seed: u64, timing: bool) -> SortJson<'a> {
    SortJson {
        c_hat: r.partition.c(),
        labels: r.partition.labels(),
        objective_history: &r.objective_history,
        iterations: r.iterations,
        converged: r.converged,
        runtime_ms: if timing { r.runtime_ms } else { 0.0 },
        index_scores: report.map(|e| e.scores.as_slice()),
        index_kind: report.map(|e| e.index_kind),
        candidates: report.map(|e| e.candidates.as_slice()),
        m0: report.map(|e| e.m0),
        d: r.projection.d(),
        m: r.projection.m(),
        w: r.projection.row_major(),
        monotonicity_violations: &r.monotonicity_violations,
        max_ridge: r.max_ridge,
        seed,
    }
}

fn read_trace(t: &TraceIn) -> anyhow::Result<Trace> {
    let is_csv = t.input.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        let fs = t.fs.context("CSV traces need --fs")?;
        Ok(io::read_trace_csv(&t.input, fs)?)
    } else {
        Ok(io::read_trace_raw(&t.input)?)
    }
}

fn write_trace(path: &Path, trace: &Trace) -> anyhow::Result<()> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        io::write_trace_csv(path, trace)?;
    } else {
        io::write_trace_raw(path, trace)?;
    }
    Ok(())
}

fn emit_json<T: Serialize>(value: &T, output: Option<&Path>) -> anyhow::Result<()> {
    match output {
        Some(p) => io::write_json(p, value)?,
        None => outln!("{}", serde_json::to_string_pretty(value)?),
    }
    Ok(())
}

fn require_exists(path: &Path) -> anyhow::Result<()> {
    if !path.exists() {
        bail!(Usage(format!("input file {} does not exist", path.display())));
    }
    Ok(())
}

/// Marks bad invocations that clap cannot catch.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn print_summary(r: &SortResult, report: Option<&EstimationReport>, timing: bool) -> anyhow::Result<()> {
    let sizes = r.partition.sizes();
    if let Some(e) = report {
        let scores: Vec<String> = e
            .candidates
            .iter()
            .zip(&e.scores)
            .map(|(c, s)| format!("{c}:{s:.4}"))
            .collect();
        outln!("index        {:?} (m0 = {})", e.index_kind, e.m0);
        outln!("scores       {}", scores.join(" "));
    }
    outln!("clusters     {}", r.partition.c());
    outln!("sizes        {sizes:?}");
    outln!("iterations   {} (converged: {})", r.iterations, r.converged);
    outln!(
        "objective    {:.6}",
        r.objective_history.last().copied().unwrap_or(f64::NAN)
    );
    if timing {
        outln!("runtime_ms   {:.1}", r.runtime_ms);
    }
    Ok(())
}

fn parse_predictions(path: &Path) -> anyhow::Result<(Vec<usize>, Option<f64>)> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        let v: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(path)?).with_context(|| format!("reading {}", path.display()))?;
        let labels = v["labels"]
            .as_array()
            .with_context(|| format!("{} has no labels array", path.display()))?
            .iter()
            .map(|x| {
                x.as_u64()
                    .map(|u| u as usize)
                    .context("labels must be non-negative integers")
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        Ok((labels, v["runtime_ms"].as_f64()))
    } else {
        Ok((io::read_integers(path)?, None))
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let seed = cli.seed;
    let timing = !cli.no_timing;
    match cli.command {
        Command::Synth {
            units,
            n,
            noise,
            d,
            difficult,
            overlap,
            fs,
            noise_model,
            ar,
            out,
            trace,
        } => {
            let spec = SynthSpec {
                d,
                n_units: units,
                n_spikes: n,
                noise_level: noise,
                difficulty: if difficult {
                    Difficulty::Difficult
                } else {
                    Difficulty::Easy
                },
                overlap_fraction: overlap,
                fs_hz: fs,
                seed,
                amplitude: 1.0,
                noise_model: match noise_model {
                    NoiseArg::White => NoiseModel::White,
                    NoiseArg::Ar2 => NoiseModel::Ar2 { a1: ar[0], a2: ar[1] },
                },
            };
            spec.validate()?;
            let ds = datagen::synthesize_spikes(&spec)?;
            let manifest = io::write_dataset(&out, &spec, &ds)?;
            if let Some(path) = trace {
                let templates = ds.templates.as_ref().expect("synthetic sets carry templates");
                let t = datagen::render_trace(&spec, templates, &ds.events()?)?;
                io::write_trace_raw(&path, &t)?;
            }
            for f in &manifest.files {
                log::info!("wrote {} ({})", out.join(&f.path).display(), f.sha256);
            }
        }
        Command::Filter {
            trace,
            output,
            low,
            high,
            order,
            highpass,
        } => {
            let t = read_trace(&trace)?;
            let spec = if highpass {
                FilterSpec::highpass(low, order)
            } else {
                FilterSpec::bandpass(low, high, order)
            };
            let filter = design_filter(&spec, t.fs_hz)?;
            write_trace(&output, &filtfilt(&filter, &t)?)?;
        }
        Command::Detect {
            trace,
            output,
            k_sigma,
            refractory_ms,
        } => {
            let t = read_trace(&trace)?;
            let times = detect_spikes(&t, k_sigma, t.ms_to_samples(refractory_ms));
            log::info!("{} spikes detected", times.len());
            io::write_integers(&output, &times)?;
        }
        Command::Extract {
            trace,
            times,
            out_spikes,
            out_times,
            window,
            align,
        } => {
            require_exists(&times)?;
            let t = read_trace(&trace)?;
            let ex = extract_waveforms(&t, &io::read_integers(&times)?, window, align)?;
            if ex.dropped > 0 {
                log::warn!("{} spikes too close to the trace edges were dropped", ex.dropped);
            }
            io::write_spikes_csv(&out_spikes, &ex.spikes)?;
            io::write_integers(&out_times, ex.spikes.times())?;
        }
        Command::Sort {
            spikes,
            c,
            output,
            baseline,
            solver,
        } => {
            require_exists(&spikes)?;
            let x = io::read_spikes_csv(&spikes)?;
            let opts = solver.options(c, seed);
            let r = if baseline {
                sequential_baseline(&x, c.saturating_sub(1).max(1), &opts)?
            } else {
                fit(&x, &opts)?
            };
            emit_json(&sort_json(&r, None, seed, timing), output.as_deref())?;
            if cli.format == Format::Table {
                print_summary(&r, None, timing)?;
            }
        }
        Command::Auto {
            spikes,
            output,
            estimate,
            solver,
        } => {
            require_exists(&spikes)?;
            let x = io::read_spikes_csv(&spikes)?;
            let (r, report) = auto_sort(&x, &estimate.options(seed), &solver.options(2, seed))?;
            let json = sort_json(&r, Some(&report), seed, timing);
            match output {
                Some(p) => {
                    io::write_json(&p, &json)?;
                    print_summary(&r, Some(&report), timing)?;
                }
                None => emit_json(&json, None)?,
            }
        }
        Command::Estimate {
            spikes,
            output,
            estimate,
        } => {
            require_exists(&spikes)?;
            let x = io::read_spikes_csv(&spikes)?;
            let report = estimate_c(&x, &estimate.options(seed))?;
            if cli.format == Format::Table && output.is_none() {
                for (c, s) in report.candidates.iter().zip(&report.scores) {
                    let mark = if *c == report.chosen { "*" } else { "" };
                    outln!("{c:>3}  {s:>14.6}{mark}");
                }
            } else {
                emit_json(&report, output.as_deref())?;
            }
        }
        Command::Eval {
            truth,
            pred,
            gt_times,
            spike_times,
            tol_ms,
            fs,
            spikes,
            trials,
            c,
            dataset,
            noise,
        } => eval(EvalArgs {
            truth,
            pred,
            gt_times,
            spike_times,
            tol_ms,
            fs,
            spikes,
            trials,
            c,
            dataset,
            noise,
            seed,
            timing,
            format: cli.format,
        })?,
        Command::Bench { sizes, repeats, output } => {
            let mut rows = bench_scaling(&sizes, repeats, seed)?;
            if !timing {
                rows.iter_mut().for_each(|r| r.ms = 0.0);
            }
            let out = match cli.format {
                Format::Json => serde_json::to_string_pretty(&rows)? + "\n",
                _ => bench_csv(&rows),
            };
            match output {
                Some(p) => fs::write(p, out)?,
                None => out!("{out}"),
            }
        }
    }
    Ok(())
}

struct EvalArgs {
    truth: Option<PathBuf>,
    pred: Vec<PathBuf>,
    gt_times: Option<PathBuf>,
    spike_times: Option<PathBuf>,
    tol_ms: f64,
    fs: f64,
    spikes: Option<PathBuf>,
    trials: usize,
    c: Option<usize>,
    dataset: Option<String>,
    noise: f64,
    seed: u64,
    timing: bool,
    format: Format,
}

#[derive(Serialize)]
struct EvalJson {
    accuracy_pct: Option<f64>,
    stats: Vec<TableRow>,
    detection: Option<DetectionJson>,
}

#[derive(Serialize)]
struct DetectionJson {
    cluster: usize,
    fpr: f64,
    fnr: f64,
    matched: usize,
    tol_samples: usize,
}

fn eval(a: EvalArgs) -> anyhow::Result<()> {
    let dataset = a.dataset.clone().unwrap_or_else(|| "dataset".into());
    let mut out = EvalJson {
        accuracy_pct: None,
        stats: Vec::new(),
        detection: None,
    };

    if let Some(spikes) = &a.spikes {
        require_exists(spikes)?;
        let truth_path = a.truth.as_ref().context("repeated trials need --truth")?;
        let truth = io::read_integers(truth_path)?;
        let x: SpikeMatrix = io::read_spikes_csv(spikes)?;
        let c = a.c.unwrap_or_else(|| 1 + truth.iter().copied().max().unwrap_or(0));
        let opts = SolverOptions::new(c);
        for method in [Method::Proposed, Method::Baseline] {
            let mut rep = evaluation::run_trials(&x, &truth, method, a.trials, a.seed, &opts)?;
            if !a.timing {
                rep.stats.mean_runtime_ms = 0.0;
                rep.stats.std_runtime_ms = 0.0;
            }
            out.stats.push(TableRow {
                dataset: dataset.clone(),
                noise_level: a.noise,
                method,
                stats: rep.stats,
            });
        }
    } else if !a.pred.is_empty() {
        let truth_path = a.truth.as_ref();
        let mut accs = Vec::new();
        let mut times = Vec::new();
        let mut first = None;
        for p in &a.pred {
            require_exists(p)?;
            let (labels, runtime) = parse_predictions(p)?;
            if let Some(t) = truth_path {
                let truth = io::read_integers(t)?;
                if truth.len() != labels.len() {
                    bail!(Usage(format!(
                        "{} has {} labels but the truth has {}",
                        p.display(),
                        labels.len(),
                        truth.len()
                    )));
                }
                accs.push(accuracy_labels(&truth, &labels)?);
                times.push(if a.timing { runtime.unwrap_or(0.0) } else { 0.0 });
            }
            first.get_or_insert(labels);
        }
        if accs.len() == 1 {
            out.accuracy_pct = Some(accs[0]);
        }
        if !accs.is_empty() {
            out.stats.push(TableRow {
                dataset: dataset.clone(),
                noise_level: a.noise,
                method: Method::Proposed,
                stats: TrialStats::from_samples(&accs, &times)?,
            });
        }
        if let (Some(gt), Some(st)) = (&a.gt_times, &a.spike_times) {
            let labels = first.expect("at least one prediction");
            let spike_times = io::read_integers(st)?;
            if spike_times.len() != labels.len() {
                bail!(Usage("spike times and predictions differ in length".into()));
            }
            let tol = (a.tol_ms * 1e-3 * a.fs).round() as usize;
            let g = Partition::from_labels(labels)?;
            let (cluster, s) = best_cluster_score(&io::read_integers(gt)?, &g, &spike_times, tol)?;
            out.detection = Some(DetectionJson {
                cluster,
                fpr: s.fpr,
                fnr: s.fnr,
                matched: s.matched,
                tol_samples: tol,
            });
        }
        if truth_path.is_none() && out.detection.is_none() {
            bail!(Usage("eval needs --truth or --gt-times with --spike-times".into()));
        }
    } else {
        bail!(Usage("eval needs --pred or --spikes".into()));
    }

    match a.format {
        Format::Json => outln!("{}", serde_json::to_string_pretty(&out)?),
        Format::Table => {
            if let Some(acc) = out.accuracy_pct {
                outln!("accuracy {acc:.2}");
            }
            if !out.stats.is_empty() {
                out!("{}", render_table(&out.stats));
            }
            if let Some(d) = &out.detection {
                outln!(
                    "cluster {} fpr {:.4} fnr {:.4} matched {}",
                    d.cluster,
                    d.fpr,
                    d.fnr,
                    d.matched
                );
            }
        }
        Format::Csv => {
            outln!("dataset,noise,method,mean_accuracy_pct,std_accuracy_pct,mean_runtime_ms,std_runtime_ms,n_trials");
            for r in &out.stats {
                let s = &r.stats;
                outln!(
                    "{},{},{:?},{:.4},{:.4},{:.3},{:.3},{}",
                    r.dataset,
                    r.noise_level,
                    r.method,
                    s.mean_accuracy_pct,
                    s.std_accuracy_pct,
                    s.mean_runtime_ms,
                    s.std_runtime_ms,
                    s.n_trials
                );
            }
        }
    }
    Ok(())
}

fn is_broken_pipe(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        e.downcast_ref::<std::io::Error>()
            .is_some_and(|e| e.kind() == std::io::ErrorKind::BrokenPipe)
    })
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.chain().any(|e| e.downcast_ref::<Usage>().is_some()) {
        return EXIT_USAGE;
    }
    match err.downcast_ref::<spikesort::Error>() {
        Some(e) if e.is_numerical() => EXIT_NUMERICAL,
        _ => EXIT_USAGE,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not set thread count: {e}");
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
