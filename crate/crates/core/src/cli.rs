//! `moreaugrad` command-line front end.
//!
//! Exit codes: 0 ok, 1 other failure, 2 usage, 3 solver divergence,
//! 4 attack precondition, 5 evaluation mismatch. Every command writes a JSON
//! manifest (`<output>.manifest.json`) holding the resolved configuration.

use crate::attack::{gaussian_attack, topk_attack, AttackConfig};
use crate::baselines::BaselineConfig;
use crate::envelope::{
    moreau_grad, EnvelopeConfig, DEFAULT_GROUP_BLOCK, DEFAULT_GROUP_ETA, DEFAULT_RHO,
    DEFAULT_SPARSE_ETA,
};
use crate::error::{Error, Result};
use crate::functions::ClassScore;
use crate::interpret::Interpreter;
use crate::io::{load_tensor, save_heatmap, save_tensor};
use crate::metrics::{compare_maps, default_k, MetricsReport};
use crate::model::{load_weights, save_weights, train_toy, Architecture, Dataset, ScoreModel, ToyTask};
use crate::numerics::{SeededRng, Tensor};
use crate::prox::grid_partition;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;
pub const EXIT_PRECONDITION: i32 = 4;
pub const EXIT_MISMATCH: i32 = 5;

#[derive(Parser, Debug)]
#[command(name = "moreaugrad", version, about = "Moreau-envelope saliency maps and robustness tooling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a fixture classifier on a built-in synthetic dataset.
    TrainToy(TrainArgs),
    /// Write one synthetic input sample as an MGT1 tensor.
    Sample(SampleArgs),
    /// Compute a saliency map.
    Interpret(InterpretArgs),
    /// Perturb an input to disturb its saliency map.
    Attack(AttackArgs),
    /// Compare clean and perturbed saliency maps.
    Evaluate(EvaluateArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetArg {
    TwoGaussians,
    BlobsBars,
}

impl From<DatasetArg> for Dataset {
    fn from(d: DatasetArg) -> Self {
        match d {
            DatasetArg::TwoGaussians => Dataset::TwoGaussians,
            DatasetArg::BlobsBars => Dataset::BlobsBars,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArchArg {
    Mlp,
    Conv,
}

#[derive(Args, Debug, Serialize)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub dataset: DatasetArg,
    #[arg(long, value_enum)]
    pub arch: ArchArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Override the dataset's default epoch budget.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct SampleArgs {
    #[arg(long, value_enum)]
    pub dataset: DatasetArg,
    /// Sample index; even indices are class 0, odd indices class 1.
    #[arg(long, default_value_t = 0)]
    pub index: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    SimpleGrad,
    IntegratedGrad,
    SmoothGrad,
    Moreau,
    SparseMoreau,
    GroupSparseMoreau,
}

/// Interpreter selection and hyperparameters shared by `interpret` and `attack`.
#[derive(Args, Debug, Clone, Serialize)]
pub struct MethodArgs {
    #[arg(long, value_enum, default_value = "moreau")]
    pub method: Method,
    /// Moreau coefficient ρ.
    #[arg(long, default_value_t = DEFAULT_RHO)]
    pub rho: f64,
    /// Sparsity coefficient η (default 0.005 sparse, 0.05 group-sparse).
    #[arg(long)]
    pub eta: Option<f64>,
    /// Step size γ (default ρ/2).
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, default_value_t = crate::envelope::DEFAULT_ITERATIONS)]
    pub iters: usize,
    /// Early-stop tolerance on the update norm (default 1e-6·√d).
    #[arg(long)]
    pub tol: Option<f64>,
    /// Noise level for smooth-grad and regularized MoreauGrad.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, default_value_t = 10)]
    pub noise_samples: usize,
    /// Use Gaussian-smoothed gradients inside the MoreauGrad solver.
    #[arg(long)]
    pub regularized: bool,
    #[arg(long, default_value_t = DEFAULT_GROUP_BLOCK)]
    pub group_block: usize,
    #[arg(long, default_value_t = 50)]
    pub ig_steps: usize,
    /// Class to explain (default: the predicted class).
    #[arg(long)]
    pub class: Option<usize>,
}

impl MethodArgs {
    pub fn interpreter(&self, input_shape: &[usize]) -> Result<Interpreter> {
        let sigma = self.sigma.unwrap_or(0.1);
        let baseline = BaselineConfig {
            ig_steps: self.ig_steps,
            ig_baseline: None,
            sg_sigma: sigma,
            sg_samples: self.noise_samples,
        };
        let envelope = |mut cfg: EnvelopeConfig| -> Result<Interpreter> {
            cfg.iterations = self.iters;
            cfg.tolerance = self.tol;
            if let Some(g) = self.gamma {
                cfg.gamma = g;
            }
            if self.regularized {
                cfg = cfg.with_smoothing(sigma, self.noise_samples);
            }
            cfg.validate()?;
            Ok(Interpreter::MoreauGrad(cfg))
        };
        match self.method {
            Method::SimpleGrad => Ok(Interpreter::SimpleGradient),
            Method::IntegratedGrad => Ok(Interpreter::IntegratedGradients(baseline)),
            Method::SmoothGrad => Ok(Interpreter::SmoothGrad(baseline)),
            Method::Moreau => envelope(EnvelopeConfig::vanilla(self.rho)),
            Method::SparseMoreau => envelope(EnvelopeConfig::sparse(
                self.rho,
                self.eta.unwrap_or(DEFAULT_SPARSE_ETA),
            )),
            Method::GroupSparseMoreau => {
                let (c, h, w) = match *input_shape {
                    [c, h, w] => (c, h, w),
                    [h, w] => (1, h, w),
                    [n] => (1, 1, n),
                    _ => {
                        return Err(Error::InvalidInput(format!(
                            "cannot tile input of shape {input_shape:?} into groups"
                        )))
                    }
                };
                let partition = grid_partition(h, w, c, self.group_block)?;
                envelope(EnvelopeConfig::group_sparse(
                    self.rho,
                    self.eta.unwrap_or(DEFAULT_GROUP_ETA),
                    partition,
                ))
            }
        }
    }
}

#[derive(Args, Debug, Serialize)]
pub struct InterpretArgs {
    #[command(flatten)]
    pub method: MethodArgs,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Saliency output (MGT1).
    #[arg(long)]
    pub out: PathBuf,
    /// Heatmap output (P5 PGM); defaults to the output path with a `.pgm` extension.
    #[arg(long)]
    pub heatmap: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    Topk,
    Gaussian,
}

#[derive(Args, Debug, Serialize)]
pub struct AttackArgs {
    #[command(flatten)]
    pub method: MethodArgs,
    #[arg(long, value_enum, default_value = "topk")]
    pub kind: AttackKind,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// True label; the attack requires the input to be classified correctly.
    #[arg(long)]
    pub label: Option<usize>,
    /// ℓ₂ budget.
    #[arg(long, default_value_t = 0.5)]
    pub epsilon: f64,
    /// Size of the salient set (default 10% of the spatial positions).
    #[arg(long)]
    pub topk: Option<usize>,
    #[arg(long, default_value_t = 20)]
    pub steps: usize,
    /// Default ε/4.
    #[arg(long)]
    pub step_size: Option<f64>,
    #[arg(long, default_value_t = 20)]
    pub directions: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Adversarial input output (MGT1).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct EvaluateArgs {
    /// Clean saliency maps (MGT1), paired in order with `--adv`.
    #[arg(long, required = true, num_args = 1..)]
    pub clean: Vec<PathBuf>,
    #[arg(long, required = true, num_args = 1..)]
    pub adv: Vec<PathBuf>,
    /// Method label written to the report.
    #[arg(long, default_value = "unknown")]
    pub method: String,
    #[arg(long, default_value_t = 0.0)]
    pub epsilon: f64,
    #[arg(long)]
    pub topk: Option<usize>,
    /// CSV output.
    #[arg(long)]
    pub report: PathBuf,
}

/// Reproducibility record written next to every output.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    fn new(command: &str, seed: Option<u64>, config: serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    fn input(mut self, name: &str, path: &Path) -> Self {
        self.inputs.insert(name.into(), path.display().to_string());
        self
    }

    fn output(mut self, name: &str, path: &Path) -> Self {
        self.outputs.insert(name.into(), path.display().to_string());
        self
    }

    fn write_beside(&self, output: &Path) -> Result<()> {
        let mut name = output.as_os_str().to_owned();
        name.push(".manifest.json");
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Format(format!("manifest serialization: {e}")))?;
        text.push('\n');
        fs::write(PathBuf::from(name), text)?;
        Ok(())
    }
}

fn to_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Divergence { .. } => EXIT_DIVERGENCE,
        Error::Precondition(_) => EXIT_PRECONDITION,
        _ => EXIT_FAILURE,
    }
}

fn resolve_class(model: &ScoreModel, x: &Tensor, requested: Option<usize>) -> Result<usize> {
    match requested {
        Some(c) => {
            ClassScore::new(model, c)?;
            Ok(c)
        }
        None => Ok(model.predict(x)?.class_index),
    }
}

fn cmd_train_toy(args: &TrainArgs) -> Result<i32> {
    let dataset: Dataset = args.dataset.into();
    let mut task = ToyTask::new(dataset);
    if let Some(e) = args.epochs {
        task.epochs = e;
    }
    let arch = match args.arch {
        ArchArg::Mlp => Architecture::mlp(),
        ArchArg::Conv => Architecture::conv(),
    };
    let model = train_toy(&task, &arch, &SeededRng::new(args.seed))?;
    save_weights(&model, &args.out)?;
    RunManifest::new("train-toy", Some(args.seed), json!({ "task": to_json(&task), "arch": to_json(&arch) }))
        .output("weights", &args.out)
        .write_beside(&args.out)?;
    Ok(0)
}

fn cmd_sample(args: &SampleArgs) -> Result<i32> {
    let dataset: Dataset = args.dataset.into();
    let label = (args.index % dataset.classes() as u64) as usize;
    let mut rng = SeededRng::with_stream(args.seed, args.index);
    let x = dataset.sample(label, &mut rng);
    save_tensor(&x, &args.out)?;
    RunManifest::new("sample", Some(args.seed), to_json(args))
        .output("input", &args.out)
        .write_beside(&args.out)?;
    println!("label={label}");
    Ok(0)
}

fn cmd_interpret(args: &InterpretArgs) -> Result<i32> {
    let model = load_weights(&args.model)?;
    let x = load_tensor(&args.input)?;
    let class = resolve_class(&model, &x, args.method.class)?;
    let interpreter = args.method.interpreter(x.shape())?;
    let score = ClassScore::new(&model, class)?;
    let mut rng = SeededRng::new(args.seed);

    let map = match &interpreter {
        Interpreter::MoreauGrad(cfg) => {
            let sol = moreau_grad(&score, &x, cfg, &mut rng)?;
            println!(
                "method={} class={} iterations={} converged={} update_norm={:.3e} envelope={:.6}",
                interpreter.name(),
                class,
                sol.iterations_used,
                sol.converged,
                sol.final_update_norm,
                sol.envelope_value
            );
            sol.saliency
        }
        other => {
            let map = other.interpret(&score, &x, &mut rng)?;
            println!("method={} class={}", other.name(), class);
            map
        }
    };
    if map.count_nonzero() == 0 {
        eprintln!("warning: saliency map is identically zero (eta at or above max |gradient|?)");
    }
    let heatmap = args.heatmap.clone().unwrap_or_else(|| args.out.with_extension("pgm"));
    save_tensor(&map, &args.out)?;
    save_heatmap(&map, &heatmap)?;
    RunManifest::new(
        "interpret",
        Some(args.seed),
        json!({ "method": to_json(&args.method), "class": class, "interpreter": to_json(&interpreter) }),
    )
    .input("model", &args.model)
    .input("input", &args.input)
    .output("saliency", &args.out)
    .output("heatmap", &heatmap)
    .write_beside(&args.out)?;
    Ok(0)
}

fn cmd_attack(args: &AttackArgs) -> Result<i32> {
    let model = load_weights(&args.model)?;
    let x = load_tensor(&args.input)?;
    let prediction = model.predict(&x)?.class_index;
    let label = args.label.unwrap_or(prediction);
    let mut rng = SeededRng::new(args.seed);

    let (x_adv, config) = match args.kind {
        AttackKind::Gaussian => {
            let adv = gaussian_attack(&x, args.epsilon, &mut rng)?;
            let preserved = model.predict(&adv)?.class_index == prediction;
            println!(
                "kind=gaussian delta_norm={:.6} prediction_preserved={preserved}",
                adv.distance(&x)
            );
            (adv, json!({ "kind": "gaussian", "epsilon": args.epsilon }))
        }
        AttackKind::Topk => {
            if prediction != label {
                return Err(Error::Precondition(format!(
                    "input is classified as {prediction}, label is {label}"
                )));
            }
            let interpreter = args.method.interpreter(x.shape())?;
            let k = args.topk.unwrap_or_else(|| default_k(&x));
            let mut cfg = AttackConfig::new(args.epsilon, k);
            cfg.steps = args.steps;
            cfg.directions = args.directions;
            if let Some(s) = args.step_size {
                cfg.step_size = s;
            }
            let res = topk_attack(&model, &interpreter, &x, label, &cfg, &mut rng)?;
            println!(
                "kind=topk method={} delta_norm={:.6} prediction_preserved={} steps={} objective={:.6}->{:.6}",
                interpreter.name(),
                res.delta_norm,
                res.prediction_preserved,
                res.steps_taken,
                res.initial_objective,
                res.final_objective
            );
            (
                res.x_adv,
                json!({ "kind": "topk", "attack": to_json(&cfg), "interpreter": to_json(&interpreter), "label": label }),
            )
        }
    };
    save_tensor(&x_adv, &args.out)?;
    RunManifest::new("attack", Some(args.seed), json!({ "args": to_json(args), "resolved": config }))
        .input("model", &args.model)
        .input("input", &args.input)
        .output("adversarial", &args.out)
        .write_beside(&args.out)?;
    Ok(0)
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<i32> {
    if args.clean.len() != args.adv.len() {
        eprintln!(
            "error: {} clean maps but {} perturbed maps",
            args.clean.len(),
            args.adv.len()
        );
        return Ok(EXIT_MISMATCH);
    }
    let mut report: Option<MetricsReport> = None;
    for (i, (cp, ap)) in args.clean.iter().zip(&args.adv).enumerate() {
        let clean = load_tensor(cp)?;
        let adv = load_tensor(ap)?;
        if !clean.same_shape(&adv) {
            eprintln!(
                "error: pair {i}: shape {:?} vs {:?}",
                clean.shape(),
                adv.shape()
            );
            return Ok(EXIT_MISMATCH);
        }
        let report = report.get_or_insert_with(|| MetricsReport::new(args.topk.unwrap_or_else(|| default_k(&clean))));
        report
            .rows
            .push(compare_maps(&clean, &adv, report.k, i.to_string(), &args.method, args.epsilon)?);
    }
    let report = report.expect("at least one pair is required by the argument parser");
    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    fs::write(&args.report, buf)?;
    let mut manifest = RunManifest::new("evaluate", None, json!({ "k": report.k, "args": to_json(args) }));
    for (i, (c, a)) in args.clean.iter().zip(&args.adv).enumerate() {
        manifest = manifest.input(&format!("clean.{i}"), c).input(&format!("adv.{i}"), a);
    }
    manifest.output("report", &args.report).write_beside(&args.report)?;
    println!(
        "pairs={} k={} median_distance={:.6} median_topk={:.6}",
        report.rows.len(),
        report.k,
        report.distance().median,
        report.topk().median
    );
    Ok(0)
}

pub fn run(cli: &Cli) -> i32 {
    let result = match &cli.command {
        Command::TrainToy(a) => cmd_train_toy(a),
        Command::Sample(a) => cmd_sample(a),
        Command::Interpret(a) => cmd_interpret(a),
        Command::Attack(a) => cmd_attack(a),
        Command::Evaluate(a) => cmd_evaluate(a),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::InvalidInput(_) | Error::InvalidPartition(_)
                    if matches!(cli.command, Command::Interpret(_) | Command::Attack(_)) =>
                {
                    EXIT_USAGE
                }
                ref e => exit_code(e),
            }
        }
    }
}

/// Parses `std::env::args` and runs the command; returns the exit code.
pub fn main() -> i32 {
    match Cli::try_parse() {
        Ok(cli) => run(&cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                EXIT_USAGE
            } else {
                0
            }
        }
    }
}
