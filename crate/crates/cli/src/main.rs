use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use coxcut::bench::{bench_prediction, BenchConfig};
use coxcut::classify::{predict_proba_batch, ClassModel};
use coxcut::cv::{default_grid, kfold_cv_ssl, loo_cv, subsample, CvReport};
use coxcut::data::{gen_concentric_circles, gen_double_helix, partition, Dataset, HelixParams};
use coxcut::expansion::ssl_solve;
use coxcut::kernels::{Kernel, KernelFamily};
use coxcut::mrf::build_energy;
use coxcut::simulate::{sample_gp_field, sample_poisson_points, thin, Window};

type CliResult<T> = std::result::Result<T, Box<dyn std::error::Error>>;

#[derive(Parser)]
#[command(name = "coxcut", version, about = "LGCP classification with graph-cut semi-supervised inference")]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Gen(GenArgs),
    /// Sample an LGCP intensity field and its points.
    Simulate(SimulateArgs),
    /// Choose a length scale by cross-validation.
    Fit(FitArgs),
    /// Supervised class probabilities for test points.
    Predict(PredictArgs),
    /// Label the unlabelled rows of a dataset by MAP inference.
    Ssl(SslArgs),
    /// 0-1 error of predicted labels against true labels.
    Eval(EvalArgs),
    /// Time prediction against training-set size.
    Bench(BenchArgs),
    /// Dump the energy of a semi-supervised dataset as JSON.
    Energy(EnergyArgs),
}

#[derive(Args)]
struct KernelArgs {
    #[arg(long, default_value = "se", value_parser = parse_family)]
    kernel: KernelFamily,
    #[arg(long)]
    lengthscale: f64,
    #[arg(long, default_value_t = 1.0)]
    variance: f64,
    /// Per-class means, comma separated (default all zero).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    means: Option<Vec<f64>>,
}

impl KernelArgs {
    fn models(&self, num_classes: usize) -> CliResult<Vec<ClassModel>> {
        let kernel = Kernel::new(self.kernel, self.variance, self.lengthscale)?;
        match &self.means {
            None => Ok(ClassModel::shared(kernel, num_classes)),
            Some(m) if m.len() == num_classes => Ok(m.iter().map(|&mu| ClassModel::new(mu, kernel)).collect()),
            Some(m) => Err(format!("{} means given for {num_classes} classes", m.len()).into()),
        }
    }
}

fn parse_family(s: &str) -> Result<KernelFamily, String> {
    s.parse().map_err(|e: coxcut::Error| e.to_string())
}

#[derive(Clone, Copy, ValueEnum)]
enum Shape {
    Circles,
    Helix,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    shape: Shape,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    n_per_class: usize,
    /// Circle radii, one class each.
    #[arg(long, value_delimiter = ',', default_value = "1,5")]
    radii: Vec<f64>,
    /// Noise standard deviation (default 0.1).
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    #[arg(long, default_value_t = 1.0)]
    pitch: f64,
    #[arg(long, default_value_t = 2.0)]
    turns: f64,
    /// Keep this many labels per class and blank the rest.
    #[arg(long)]
    labeled_per_class: Option<usize>,
    /// Where to write the fully labelled dataset when labels are blanked.
    #[arg(long, requires = "labeled_per_class")]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Lower corner then upper corner, e.g. -3,-3,3,3.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-3,-3,3,3")]
    window: Vec<f64>,
    /// Cells per axis.
    #[arg(long, default_value_t = 64)]
    grid: usize,
    #[arg(long, default_value = "se", value_parser = parse_family)]
    kernel: KernelFamily,
    #[arg(long, default_value_t = 1.0)]
    lengthscale: f64,
    #[arg(long, default_value_t = 1.0)]
    variance: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    mean: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_field: Option<PathBuf>,
    #[arg(long)]
    out_points: Option<PathBuf>,
    /// Retention probability for an independent thinning of the points.
    #[arg(long)]
    thin: Option<f64>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long, default_value = "se", value_parser = parse_family)]
    kernel: KernelFamily,
    #[arg(long, default_value_t = 1.0)]
    variance: f64,
    /// `auto` or a comma-separated list of length scales.
    #[arg(long, default_value = "auto")]
    grid: String,
    /// Transductive k-fold CV of the semi-supervised solver.
    #[arg(long)]
    ssl: bool,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cross-validate on a random subset of this many labelled rows.
    #[arg(long)]
    cv_subsample: Option<usize>,
    /// Error table CSV (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SslArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// CSV with a `label` column of predictions.
    #[arg(long)]
    pred: PathBuf,
    /// CSV with a `label` column of true labels, same row order.
    #[arg(long)]
    truth: PathBuf,
    /// Score only rows that are unlabelled in this dataset.
    #[arg(long)]
    mask: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "1000,2000,4000,8000")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 200)]
    test_points: usize,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EnergyArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long)]
    dump: PathBuf,
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| format!("cannot create {}: {e}", path.display()).into())
}

fn output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn csv_reader(path: &Path) -> CliResult<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| format!("cannot open {}: {e}", path.display()))?;
    Ok(csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file))
}

/// Covariate rows of a CSV; a `label` column, if present, is skipped.
fn read_points(path: &Path) -> CliResult<Vec<Vec<f64>>> {
    let mut r = csv_reader(path)?;
    let skip = r.headers()?.iter().position(|h| h == "label");
    let mut points = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let x = rec
            .iter()
            .enumerate()
            .filter(|(c, _)| Some(*c) != skip)
            .map(|(_, cell)| cell.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| format!("{} row {}: {e}", path.display(), i + 1))?;
        points.push(x);
    }
    Ok(points)
}

/// One-based `label` column; empty cells are `None`.
fn read_labels(path: &Path) -> CliResult<Vec<Option<usize>>> {
    let mut r = csv_reader(path)?;
    let col = r
        .headers()?
        .iter()
        .position(|h| h == "label")
        .ok_or_else(|| format!("{}: no `label` column", path.display()))?;
    let mut labels = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let cell = rec.get(col).unwrap_or("");
        labels.push(if cell.is_empty() {
            None
        } else {
            Some(
                cell.parse()
                    .map_err(|e| format!("{} row {}: label `{cell}`: {e}", path.display(), i + 1))?,
            )
        });
    }
    Ok(labels)
}

fn point_header(dim: usize) -> Vec<String> {
    (1..=dim).map(|d| format!("x{d}")).collect()
}

fn run_gen(a: GenArgs) -> CliResult<()> {
    let data = match a.shape {
        Shape::Circles => gen_concentric_circles(a.n_per_class, &a.radii, a.noise, a.seed)?,
        Shape::Helix => {
            let params = HelixParams {
                radius: a.radius,
                pitch: a.pitch,
                turns: a.turns,
                noise_std: a.noise,
            };
            gen_double_helix(a.n_per_class, params, a.seed)?
        }
    };
    let Some(k) = a.labeled_per_class else {
        return Ok(data.save_csv(&a.out)?);
    };
    let split = partition(&data, k, a.seed)?;
    let mut labels = data.labels().to_vec();
    for &i in &split.unlabeled_indices {
        labels[i] = None;
    }
    Dataset::new(data.covariates().to_vec(), labels, data.num_classes())?.save_csv(&a.out)?;
    if let Some(t) = &a.truth {
        data.save_csv(t)?;
    }
    Ok(())
}

fn run_simulate(a: SimulateArgs) -> CliResult<()> {
    if a.window.is_empty() || !a.window.len().is_multiple_of(2) {
        return Err("--window needs lower corner then upper corner".into());
    }
    let d = a.window.len() / 2;
    let window = Window::new(a.window[..d].to_vec(), a.window[d..].to_vec(), a.grid)?;
    let kernel = Kernel::new(a.kernel, a.variance, a.lengthscale)?;
    let field = sample_gp_field(a.mean, &kernel, &window, a.seed)?;
    let mut points = sample_poisson_points(&field, a.seed);
    if let Some(g) = a.thin {
        points = thin(&points, g, a.seed)?;
    }

    if let Some(p) = &a.out_field {
        let mut w = csv::Writer::from_writer(create(p)?);
        let mut header = point_header(d);
        header.push("intensity".into());
        w.write_record(&header)?;
        for (c, rho) in field.centers().iter().zip(field.intensity()) {
            let mut rec: Vec<String> = c.iter().map(f64::to_string).collect();
            rec.push(rho.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
    }
    if let Some(p) = &a.out_points {
        let mut w = csv::Writer::from_writer(create(p)?);
        w.write_record(point_header(d))?;
        for x in &points {
            w.write_record(x.iter().map(f64::to_string))?;
        }
        w.flush()?;
    }
    println!(
        "cells={} total_mass={} points={}",
        window.num_cells(),
        field.total_mass(),
        points.len()
    );
    Ok(())
}

fn run_fit(a: FitArgs) -> CliResult<()> {
    let data = Dataset::load_csv(&a.train, "label", None)?;
    let grid = if a.grid == "auto" {
        default_grid(data.covariates())?
    } else {
        a.grid
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|e| format!("grid value `{v}`: {e}")))
            .collect::<Result<Vec<_>, _>>()?
    };
    let template = Kernel::new(a.kernel, a.variance, 1.0)?;
    let (labeled, unlabeled, _) = data.split_labeled();
    let labeled = match a.cv_subsample {
        Some(n) => subsample(&labeled, n, a.seed),
        None => labeled,
    };
    let report: CvReport = if a.ssl {
        kfold_cv_ssl(&labeled, &unlabeled, a.folds, &template, &grid, a.seed)?
    } else {
        loo_cv(&labeled, &template, &grid)?
    };

    let mut w = csv::Writer::from_writer(output(a.out.as_deref())?);
    w.write_record(["lengthscale", "error"])?;
    for g in &report.table {
        w.write_record([g.length_scale.to_string(), g.error.to_string()])?;
    }
    w.flush()?;
    drop(w);
    if a.out.is_some() {
        println!("lengthscale={}", report.best_length_scale);
    } else {
        eprintln!("lengthscale={}", report.best_length_scale);
    }
    Ok(())
}

fn run_predict(a: PredictArgs) -> CliResult<()> {
    let train = Dataset::load_csv(&a.train, "label", None)?;
    let test = read_points(&a.test)?;
    let q = train.num_classes();
    let models = a.kernel.models(q)?;
    let probs = predict_proba_batch(&models, &train, &test)?;

    let mut w = csv::Writer::from_writer(output(a.out.as_deref())?);
    let mut header: Vec<String> = (1..=q).map(|c| format!("p{c}")).collect();
    header.push("label".into());
    w.write_record(&header)?;
    for p in &probs {
        let mut rec: Vec<String> = p.probabilities().iter().map(f64::to_string).collect();
        rec.push((p.label() + 1).to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn run_ssl(a: SslArgs) -> CliResult<()> {
    let data = Dataset::load_csv(&a.data, "label", None)?;
    let q = data.num_classes();
    let models = a.kernel.models(q)?;
    let (labeled, unlabeled, _) = data.split_labeled();
    let solution = ssl_solve(&models, &labeled, &unlabeled)?;

    let mut labels = data.labels().to_vec();
    for (&i, &l) in data.unlabeled_indices().iter().zip(solution.labeling.as_slice()) {
        labels[i] = Some(l);
    }
    let filled = Dataset::new(data.covariates().to_vec(), labels, q)?;
    let mut out = output(a.out.as_deref())?;
    let solver = if solution.exact {
        "exact min-cut"
    } else {
        "alpha-expansion local optimum"
    };
    writeln!(
        out,
        "# solver={solver}; energy={}; ties=first found in ascending label order",
        solution.energy
    )?;
    filled.write_csv(&mut out)?;
    out.flush()?;
    Ok(())
}

fn run_eval(a: EvalArgs) -> CliResult<()> {
    let pred = read_labels(&a.pred)?;
    let truth = read_labels(&a.truth)?;
    if pred.len() != truth.len() {
        return Err(format!("{} predictions but {} true labels", pred.len(), truth.len()).into());
    }
    let mask = match &a.mask {
        Some(m) => {
            let m = read_labels(m)?;
            if m.len() != truth.len() {
                return Err("mask row count differs from truth".into());
            }
            m.iter().map(Option::is_none).collect()
        }
        None => vec![true; truth.len()],
    };
    let (mut wrong, mut total) = (0usize, 0usize);
    for (i, ((p, t), keep)) in pred.iter().zip(&truth).zip(mask).enumerate() {
        let Some(t) = t else { continue };
        if !keep {
            continue;
        }
        let p = p.ok_or_else(|| format!("row {}: missing prediction", i + 1))?;
        total += 1;
        if p != *t {
            wrong += 1;
        }
    }
    if total == 0 {
        return Err("no labelled rows to score".into());
    }
    println!("error={} wrong={wrong} total={total}", wrong as f64 / total as f64);
    Ok(())
}

fn run_bench(a: BenchArgs) -> CliResult<()> {
    let cfg = BenchConfig {
        sizes: a.sizes,
        dim: a.dim,
        test_points: a.test_points,
        repeats: a.repeats,
        seed: a.seed,
        ..BenchConfig::default()
    };
    let report = bench_prediction(&cfg)?;
    if let Some(p) = &a.out {
        let mut w = csv::Writer::from_writer(create(p)?);
        w.write_record(["n", "seconds_per_point"])?;
        for b in &report.points {
            w.write_record([b.train_size.to_string(), b.seconds_per_point.to_string()])?;
        }
        w.flush()?;
    }
    for b in &report.points {
        println!("n={} seconds_per_point={:e}", b.train_size, b.seconds_per_point);
    }
    println!("exponent={}", report.exponent);
    Ok(())
}

#[derive(Serialize)]
struct PairDump {
    j: usize,
    k: usize,
    table: Vec<Vec<f64>>,
}

/// `unary[s][a]` and `table[a][b]` index classes from 0; `sites[s]` is the
/// data row of site `s`.
#[derive(Serialize)]
struct EnergyDump {
    num_sites: usize,
    num_labels: usize,
    constant: f64,
    sites: Vec<usize>,
    unary: Vec<Vec<f64>>,
    pairs: Vec<PairDump>,
}

fn run_energy(a: EnergyArgs) -> CliResult<()> {
    let data = Dataset::load_csv(&a.data, "label", None)?;
    let q = data.num_classes();
    let (labeled, unlabeled, _) = data.split_labeled();
    let e = build_energy(&a.kernel.models(q)?, &labeled, &unlabeled)?;
    let dump = EnergyDump {
        num_sites: e.num_sites(),
        num_labels: q,
        constant: e.constant(),
        sites: data.unlabeled_indices(),
        unary: (0..e.num_sites()).map(|s| e.unary_row(s).to_vec()).collect(),
        pairs: e
            .pairs()
            .iter()
            .map(|p| PairDump {
                j: p.j,
                k: p.k,
                table: (0..q).map(|x| (0..q).map(|y| p.get(q, x, y)).collect()).collect(),
            })
            .collect(),
    };
    let mut w = create(&a.dump)?;
    serde_json::to_writer_pretty(&mut w, &dump)?;
    w.flush()?;
    println!("sites={} pairs={}", dump.num_sites, dump.pairs.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match cli.command {
        Command::Gen(a) => run_gen(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Fit(a) => run_fit(a),
        Command::Predict(a) => run_predict(a),
        Command::Ssl(a) => run_ssl(a),
        Command::Eval(a) => run_eval(a),
        Command::Bench(a) => run_bench(a),
        Command::Energy(a) => run_energy(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
