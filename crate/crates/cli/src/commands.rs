//! Argument definitions and subcommand implementations.

use std::fmt::Write as _;
use std::path::PathBuf;

use bnncert::certify::{dsafe_all_classes, ClassBounds};
use bnncert::trainer::{cubic_regression, hcas_label, hcas_like, two_blobs};
use bnncert::{
    argmax, decision_robust, dsafe_lower, dsafe_upper, fit_vi, forward, k0_decision_check, max_robust_radius,
    min_unrobust_radius, psafe_lower, psafe_upper, sample_hmc, Activation, AttackConfig, Bonferroni, Certificate,
    CertifyConfig, Dataset, GaussianPosterior, HmcConfig, InputBox, Likelihood, Network, OutputSpec, Posterior,
    RadiusSearchConfig, SamplePosterior, Task, TrainConfig, WeightVector,
};
use bnncert::{posterior::MarginScale, propagate::Method};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::empirical::{hoeffding_slack, mc_psafe, posterior_draws, predictive_extremes};
use crate::files::{
    read_dataset, read_json, read_posterior, to_json, write_output, LabelRule, PosteriorFile, SpecFile, SweepSpec,
};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "bnncert", version, about = "Certify robustness of Bayesian neural networks")]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Bound probabilistic or decision robustness for one specification.
    Certify(CertifyArgs),
    /// Per-class decision bounds with robust/uncertain/0-K verdicts.
    Decide(DecideArgs),
    /// Certify every cell of a state-space grid (CSV with summary footer).
    Sweep(SweepArgs),
    /// MaxRR / MinUR radius search for a set of points (CSV).
    Radius(RadiusArgs),
    /// Fit a diagonal-Gaussian posterior by variational inference.
    Train(TrainArgs),
    /// Draw posterior samples with Hamiltonian Monte Carlo.
    Hmc(HmcArgs),
    /// Check certified bounds against Monte Carlo and attack estimates.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PropertyArg {
    Psafe,
    Dsafe,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BoundArg {
    Lower,
    Upper,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Ibp,
    Lbp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScaleArg {
    Std,
    Var,
}

fn parse_bonferroni(s: &str) -> Result<Bonferroni, String> {
    if s.eq_ignore_ascii_case("off") {
        return Ok(Bonferroni::Off);
    }
    let depth: usize = s.parse().map_err(|_| format!("expected `off` or an even depth, got {s:?}"))?;
    if depth < 2 || !depth.is_multiple_of(2) {
        return Err(format!("Bonferroni depth must be an even integer >= 2, got {depth}"));
    }
    Ok(Bonferroni::On { depth })
}

#[derive(Debug, Clone, Args)]
pub struct EngineArgs {
    #[arg(long, value_enum, default_value = "ibp")]
    pub method: MethodArg,
    /// Number of sampled weight boxes.
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    /// Box half-width in posterior standard deviations.
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, value_enum, default_value = "std")]
    pub margin_scale: ScaleArg,
    /// `off`, or an even inclusion-exclusion depth for overlapping boxes.
    #[arg(long, default_value = "off", value_parser = parse_bonferroni)]
    pub bonferroni: Bonferroni,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 25)]
    pub attack_iters: usize,
    #[arg(long, default_value_t = 3)]
    pub attack_restarts: usize,
}

impl EngineArgs {
    pub fn config(&self) -> CertifyConfig {
        CertifyConfig {
            num_samples: self.samples,
            gamma: self.gamma,
            margin_scale: match self.margin_scale {
                ScaleArg::Std => MarginScale::Std,
                ScaleArg::Var => MarginScale::Var,
            },
            method: match self.method {
                MethodArg::Ibp => Method::Ibp,
                MethodArg::Lbp => Method::Lbp,
            },
            bonferroni: self.bonferroni,
            rng_seed: self.seed,
            attack: AttackConfig {
                iterations: self.attack_iters,
                step_size: None,
                restarts: self.attack_restarts,
                seed: self.seed,
            },
        }
    }
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[arg(long)]
    pub posterior: PathBuf,
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long, value_enum)]
    pub property: PropertyArg,
    #[arg(long, value_enum)]
    pub bound: BoundArg,
    #[command(flatten)]
    pub engine: EngineArgs,
    /// Class for decision bounds (default: the spec's true class).
    #[arg(long)]
    pub class: Option<usize>,
    /// Regression output index for decision bounds.
    #[arg(long)]
    pub regression_index: Option<usize>,
    /// Lower end of the regression output range.
    #[arg(long, allow_hyphen_values = true)]
    pub floor: Option<f64>,
    /// Upper end of the regression output range.
    #[arg(long, allow_hyphen_values = true)]
    pub ceiling: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DecideArgs {
    #[arg(long)]
    pub posterior: PathBuf,
    #[arg(long)]
    pub spec: PathBuf,
    #[command(flatten)]
    pub engine: EngineArgs,
    #[arg(long, default_value_t = 0.4)]
    pub tau_uncertain: f64,
    /// Comma-separated 0-K penalties, one per class.
    #[arg(long, value_delimiter = ',')]
    pub penalties: Option<Vec<f64>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub posterior: PathBuf,
    #[arg(long)]
    pub sweep: PathBuf,
    #[command(flatten)]
    pub engine: EngineArgs,
    /// Overrides the sweep file's threshold.
    #[arg(long)]
    pub tau_safe: Option<f64>,
    #[arg(long)]
    pub tau_unsafe: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RadiusArgs {
    #[arg(long)]
    pub posterior: PathBuf,
    /// Headerless CSV of points, last column the true class.
    #[arg(long, required_unless_present = "spec", conflicts_with = "spec")]
    pub points: Option<PathBuf>,
    /// Single point: the spec's center and true class.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[command(flatten)]
    pub engine: EngineArgs,
    #[arg(long, default_value_t = 0.7)]
    pub tau_safe: f64,
    #[arg(long, default_value_t = 0.7)]
    pub tau_unsafe: f64,
    #[arg(long, default_value_t = 0.01)]
    pub step: f64,
    #[arg(long, default_value_t = 0.0)]
    pub eps_start_safe: f64,
    #[arg(long, default_value_t = 0.5)]
    pub eps_start_unsafe: f64,
    #[arg(long, default_value_t = 0.5)]
    pub eps_cap: f64,
    /// Feature range `lo,hi` the balls are clipped to.
    #[arg(long, value_delimiter = ',', num_args = 2, allow_hyphen_values = true)]
    pub clip: Option<Vec<f64>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Blobs,
    Cubic,
    Hcas,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ActivationArg {
    Relu,
    Tanh,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Built-in synthetic dataset.
    #[arg(long, value_enum, required_unless_present = "data", conflicts_with = "data")]
    pub task: Option<TaskArg>,
    /// Headerless CSV, last column the label.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Treat the CSV label as a regression target.
    #[arg(long)]
    pub regression: bool,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Layer widths, e.g. `4,64,5`.
    #[arg(long, value_delimiter = ',')]
    pub arch: Option<Vec<usize>>,
    #[arg(long, value_enum, default_value = "relu")]
    pub activation: ActivationArg,
    #[arg(long, default_value_t = 1.0)]
    pub prior_variance: f64,
    /// Observation noise variance of the Gaussian likelihood.
    #[arg(long, default_value_t = 1.0)]
    pub noise_var: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl DataArgs {
    fn load(&self) -> Result<(Network, Dataset, Likelihood), CliError> {
        let (data, regression, default_arch) = match (self.task, &self.data) {
            (Some(TaskArg::Blobs), _) => (two_blobs(self.n, self.seed), false, vec![2, 16, 2]),
            (Some(TaskArg::Cubic), _) => (cubic_regression(self.n, self.seed), true, vec![1, 32, 1]),
            (Some(TaskArg::Hcas), _) => (hcas_like(self.n, self.seed), false, vec![4, 64, 5]),
            (None, Some(path)) => {
                let d = read_dataset(path, !self.regression)?;
                let n_in = d.inputs.first().map_or(1, Vec::len);
                let n_out = match &d.labels {
                    bnncert::Labels::Classes(c) => c.iter().max().map_or(2, |m| m + 1).max(2),
                    bnncert::Labels::Values(_) => 1,
                };
                (d, self.regression, vec![n_in, 32, n_out])
            }
            (None, None) => return Err(CliError::Usage("give --task or --data".into())),
        };
        let widths = self.arch.clone().unwrap_or(default_arch);
        let act = match self.activation {
            ActivationArg::Relu => Activation::Relu,
            ActivationArg::Tanh => Activation::Tanh,
        };
        let net = Network::mlp(&widths, act)?;
        let likelihood = if regression {
            Likelihood::Gaussian { noise_var: self.noise_var }
        } else {
            Likelihood::Categorical
        };
        data.check(&net, likelihood)?;
        Ok((net, data, likelihood))
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 1.0)]
    pub kl_weight: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HmcArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 20)]
    pub leapfrog_steps: usize,
    #[arg(long, default_value_t = 0.005)]
    pub step_size: f64,
    #[arg(long, default_value_t = 200)]
    pub num_samples: usize,
    #[arg(long, default_value_t = 100)]
    pub burn_in: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long, default_value_t = 8)]
    pub instances: usize,
    /// Posterior draws per Monte Carlo estimate.
    #[arg(long, default_value_t = 1000)]
    pub draws: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.threads {
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(e.to_string()))?
            .install(|| dispatch(cli.command)),
        None => dispatch(cli.command),
    }
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Certify(a) => cmd_certify(&a),
        Command::Decide(a) => cmd_decide(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Radius(a) => cmd_radius(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Hmc(a) => cmd_hmc(&a),
        Command::Validate(a) => cmd_validate(&a),
    }
}

fn read_spec(path: &std::path::Path) -> Result<SpecFile, CliError> {
    read_json(path)
}

/// Spec parse problems are reported as file errors, shape problems as such.
fn spec_err(path: &std::path::Path, e: bnncert::Error) -> CliError {
    match e {
        bnncert::Error::DimensionMismatch { .. } => CliError::Engine(e),
        other => CliError::Parse {
            path: path.to_path_buf(),
            msg: other.to_string(),
        },
    }
}

pub fn cmd_certify(a: &CertifyArgs) -> Result<(), CliError> {
    let pf = read_posterior(&a.posterior)?;
    let spec = read_spec(&a.spec)?;
    let net = &pf.arch;
    let t = spec.input_box().map_err(|e| spec_err(&a.spec, e))?;
    net.check_input_dim(t.dim())?;
    let cfg = a.engine.config();
    let cert: Certificate = match a.property {
        PropertyArg::Psafe => {
            let s = spec.output_spec(net.output_dim()).map_err(|e| spec_err(&a.spec, e))?;
            match a.bound {
                BoundArg::Lower => psafe_lower(net, &pf.posterior, &t, &s, &cfg)?,
                BoundArg::Upper => psafe_upper(net, &pf.posterior, &t, &s, &cfg)?,
            }
        }
        PropertyArg::Dsafe => {
            let task = match (a.regression_index, a.class, spec.task, spec.true_class) {
                (Some(index), _, _, _) => Task::Regression {
                    index,
                    floor: a.floor,
                    ceiling: a.ceiling,
                },
                (None, Some(class), _, _) => Task::Classification { class },
                (None, None, Some(task), _) => task,
                (None, None, None, Some(class)) => Task::Classification { class },
                _ => {
                    return Err(CliError::Usage(
                        "decision bounds need --class, --regression-index, or a spec with `task`/`true_class`".into(),
                    ))
                }
            };
            match a.bound {
                BoundArg::Lower => dsafe_lower(net, &pf.posterior, &t, task, &cfg)?,
                BoundArg::Upper => dsafe_upper(net, &pf.posterior, &t, task, &cfg)?,
            }
        }
    };
    write_output(a.out.as_ref(), &to_json(&cert))
}

trait InputDim {
    fn check_input_dim(&self, d: usize) -> Result<(), bnncert::Error>;
}

impl InputDim for Network {
    fn check_input_dim(&self, d: usize) -> Result<(), bnncert::Error> {
        if d != self.input_dim() {
            return Err(bnncert::Error::DimensionMismatch {
                context: "spec center".into(),
                expected: self.input_dim(),
                found: d,
            });
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct DecisionReport {
    #[serde(flatten)]
    bounds: ClassBounds,
    true_class: Option<usize>,
    verdict: Option<bnncert::DecisionVerdict>,
    tau_uncertain: f64,
    uncertain: bool,
    k0_class: Option<usize>,
}

pub fn cmd_decide(a: &DecideArgs) -> Result<(), CliError> {
    let pf = read_posterior(&a.posterior)?;
    let spec = read_spec(&a.spec)?;
    let net = &pf.arch;
    let t = spec.input_box().map_err(|e| spec_err(&a.spec, e))?;
    net.check_input_dim(t.dim())?;
    if !(a.tau_uncertain > 0.0 && a.tau_uncertain < 1.0) {
        return Err(CliError::Usage(format!("--tau-uncertain {} must lie in (0, 1)", a.tau_uncertain)));
    }
    let cfg = a.engine.config();
    let bounds = dsafe_all_classes(net, &pf.posterior, &t, &cfg)?;
    let verdict = match spec.true_class {
        Some(c) => Some(decision_robust(net, &pf.posterior, &t, c, &cfg)?),
        None => None,
    };
    let k0_class = match &a.penalties {
        Some(k) => k0_decision_check(&bounds.lower, k)?,
        None => None,
    };
    let report = DecisionReport {
        uncertain: bounds.upper.iter().all(|&u| u < a.tau_uncertain),
        bounds,
        true_class: spec.true_class,
        verdict,
        tau_uncertain: a.tau_uncertain,
        k0_class,
    };
    write_output(a.out.as_ref(), &to_json(&report))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Safe,
    Unsafe,
    Uncertifiable,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Safe => "safe",
            Verdict::Unsafe => "unsafe",
            Verdict::Uncertifiable => "uncertifiable",
        }
    }
}

/// Safe when the lower bound reaches `tau_safe`, unsafe when the upper
/// bound is at most `tau_unsafe`, otherwise uncertifiable.
pub fn verdict(lower: f64, upper: f64, tau_safe: f64, tau_unsafe: f64) -> Verdict {
    if lower >= tau_safe {
        Verdict::Safe
    } else if upper <= tau_unsafe {
        Verdict::Unsafe
    } else {
        Verdict::Uncertifiable
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub cell: usize,
    pub cell_box: InputBox<f64>,
    pub label: usize,
    pub lower: f64,
    pub upper: f64,
    pub verdict: Verdict,
}

/// Certifies every cell; rows come back in cell order.
pub fn run_sweep(pf: &PosteriorFile, sweep: &SweepSpec, cfg: &CertifyConfig) -> Result<Vec<SweepRow>, CliError> {
    sweep.validate()?;
    let net = &pf.arch;
    net.check_input_dim(sweep.grid.len())?;
    let mean = pf.posterior.mean();
    (0..sweep.num_cells())
        .into_par_iter()
        .map(|id| {
            let cell_box = sweep.cell(id);
            let center = cell_box.center();
            let label = match sweep.label {
                LabelRule::MeanPrediction => argmax(&forward(net, &mean, &center)?),
                LabelRule::Hcas => {
                    if center.len() != 4 {
                        return Err(CliError::Usage("the hcas label rule needs a 4-D grid".into()));
                    }
                    hcas_label(&center)
                }
            };
            let s = OutputSpec::argmax(label, net.output_dim())?;
            let run = || -> bnncert::Result<(f64, f64)> {
                let lo = psafe_lower(net, &pf.posterior, &cell_box, &s, cfg)?.value.scalar();
                let hi = psafe_upper(net, &pf.posterior, &cell_box, &s, cfg)?.value.scalar();
                Ok((lo, hi))
            };
            let (lower, upper) = run().map_err(|e| CliError::Validation(format!("cell {id}: {e}")))?;
            Ok(SweepRow {
                cell: id,
                verdict: verdict(lower, upper, sweep.tau_safe, sweep.tau_unsafe),
                cell_box,
                label,
                lower,
                upper,
            })
        })
        .collect()
}

/// CSV body plus a `#`-prefixed footer with thresholds and verdict counts.
pub fn sweep_csv(rows: &[SweepRow], tau_safe: f64, tau_unsafe: f64) -> String {
    let dim = rows.first().map_or(0, |r| r.cell_box.dim());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["cell_id".to_string()];
    header.extend((0..dim).map(|d| format!("lower_{d}")));
    header.extend((0..dim).map(|d| format!("upper_{d}")));
    header.extend(["label", "psafe_lower", "psafe_upper", "verdict"].map(String::from));
    w.write_record(&header).expect("in-memory write");
    for r in rows {
        let mut rec = vec![r.cell.to_string()];
        rec.extend(r.cell_box.lower.iter().map(|v| v.to_string()));
        rec.extend(r.cell_box.upper.iter().map(|v| v.to_string()));
        rec.push(r.label.to_string());
        rec.push(format!("{:.6}", r.lower));
        rec.push(format!("{:.6}", r.upper));
        rec.push(r.verdict.as_str().to_string());
        w.write_record(&rec).expect("in-memory write");
    }
    let mut out = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8 csv");
    let total = rows.len();
    let _ = writeln!(out, "# thresholds,tau_safe={tau_safe},tau_unsafe={tau_unsafe}");
    let _ = writeln!(out, "# summary,verdict,count,proportion");
    for v in [Verdict::Safe, Verdict::Unsafe, Verdict::Uncertifiable] {
        let n = rows.iter().filter(|r| r.verdict == v).count();
        let _ = writeln!(out, "# summary,{},{n},{:.4}", v.as_str(), n as f64 / total.max(1) as f64);
    }
    let _ = writeln!(out, "# summary,total,{total},1.0000");
    out
}

pub fn cmd_sweep(a: &SweepArgs) -> Result<(), CliError> {
    let pf = read_posterior(&a.posterior)?;
    let mut sweep: SweepSpec = read_json(&a.sweep)?;
    if let Some(t) = a.tau_safe {
        sweep.tau_safe = t;
    }
    if let Some(t) = a.tau_unsafe {
        sweep.tau_unsafe = t;
    }
    let rows = run_sweep(&pf, &sweep, &a.engine.config())?;
    write_output(a.out.as_ref(), &sweep_csv(&rows, sweep.tau_safe, sweep.tau_unsafe))
}

pub fn cmd_radius(a: &RadiusArgs) -> Result<(), CliError> {
    let pf = read_posterior(&a.posterior)?;
    let net = &pf.arch;
    let points: Vec<(Vec<f64>, usize)> = match (&a.points, &a.spec) {
        (Some(p), _) => {
            let d = read_dataset(p, true)?;
            let bnncert::Labels::Classes(c) = d.labels else {
                unreachable!("classification dataset")
            };
            d.inputs.into_iter().zip(c).collect()
        }
        (None, Some(p)) => {
            let s = read_spec(p)?;
            let c = s.true_class.ok_or_else(|| CliError::Parse {
                path: p.clone(),
                msg: "radius search needs `true_class`".into(),
            })?;
            vec![(s.center, c)]
        }
        (None, None) => return Err(CliError::Usage("give --points or --spec".into())),
    };
    let rcfg = RadiusSearchConfig {
        tau_safe: a.tau_safe,
        tau_unsafe: a.tau_unsafe,
        eps_start_safe: a.eps_start_safe,
        eps_start_unsafe: a.eps_start_unsafe,
        step: a.step,
        eps_cap: a.eps_cap,
        clip: a.clip.as_ref().map(|c| (c[0], c[1])),
    };
    let cfg = a.engine.config();
    let results = points
        .par_iter()
        .map(|(x, c)| {
            net.check_input_dim(x.len())?;
            let s = OutputSpec::argmax(*c, net.output_dim())?;
            let max_rr = max_robust_radius(net, &pf.posterior, x, &s, &cfg, &rcfg)?;
            let min_ur = min_unrobust_radius(net, &pf.posterior, x, &s, &cfg, &rcfg)?;
            Ok((max_rr, min_ur))
        })
        .collect::<Result<Vec<_>, bnncert::Error>>()?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["instance", "max_rr", "min_ur", "min_ur_vacuous"]).expect("in-memory write");
    for (i, (max_rr, min_ur)) in results.iter().enumerate() {
        w.write_record([
            i.to_string(),
            format!("{max_rr:.6}"),
            format!("{:.6}", min_ur.radius),
            min_ur.vacuous.to_string(),
        ])
        .expect("in-memory write");
    }
    let out = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8 csv");
    write_output(a.out.as_ref(), &out)
}

pub fn cmd_train(a: &TrainArgs) -> Result<(), CliError> {
    let (net, data, likelihood) = a.data.load()?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        learning_rate: a.lr,
        prior_variance: a.data.prior_variance,
        likelihood,
        kl_weight: a.kl_weight,
    };
    let fit = fit_vi(&net, &data, &cfg, a.data.seed)?;
    let acc = data.accuracy(&net, &fit.posterior.mean);
    let elbo = fit.elbo_history.last().copied().unwrap_or(f64::NAN);
    log::info!("final elbo {elbo:.5}, train accuracy of the mean {acc:.4}");
    let mut meta = serde_json::json!({ "trainer": "vi", "final_elbo": elbo, "seed": a.data.seed });
    if acc.is_finite() {
        meta["train_accuracy"] = serde_json::json!(acc);
    }
    let file = PosteriorFile {
        arch: net,
        posterior: fit.posterior.into(),
        metadata: Some(meta),
    };
    write_output(a.out.as_ref(), &to_json(&file))
}

pub fn cmd_hmc(a: &HmcArgs) -> Result<(), CliError> {
    let (net, data, likelihood) = a.data.load()?;
    let cfg = HmcConfig {
        leapfrog_steps: a.leapfrog_steps,
        step_size: a.step_size,
        num_samples: a.num_samples,
        burn_in: a.burn_in,
        prior_variance: a.data.prior_variance,
        likelihood,
    };
    let res = sample_hmc(&net, &data, &cfg, a.data.seed)?;
    if let Some(w) = &res.warning {
        eprintln!("warning: {w}");
    }
    let meta = serde_json::json!({
        "trainer": "hmc",
        "acceptance_rate": res.acceptance_rate,
        "nonfinite_trajectories": res.nonfinite_trajectories,
        "warning": res.warning,
        "seed": a.data.seed,
    });
    let file = PosteriorFile {
        arch: net,
        posterior: res.posterior.into(),
        metadata: Some(meta),
    };
    write_output(a.out.as_ref(), &to_json(&file))
}

/// One randomly generated small certification problem.
pub struct ToyInstance {
    pub net: Network,
    pub posterior: Posterior<f64>,
    pub t: InputBox<f64>,
    pub class: usize,
}

impl ToyInstance {
    pub fn spec(&self) -> OutputSpec<f64> {
        OutputSpec::argmax(self.class, self.net.output_dim()).expect("valid class")
    }
}

/// Single-hidden-layer Gaussian BNN with a small input box; the safe set is
/// the mean network's prediction at the box center.
pub fn toy_instance(seed: u64) -> ToyInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_in = 2;
    let hidden = rng.random_range(2..=4);
    let n_out = rng.random_range(2..=3);
    let act = if seed.is_multiple_of(2) { Activation::Relu } else { Activation::Tanh };
    let net = Network::mlp(&[n_in, hidden, n_out], act).expect("valid widths");
    let mean: Vec<f64> = (0..net.num_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let var_scale = rng.random_range(1e-5..1e-3);
    let variance = (0..net.num_params()).map(|_| var_scale * rng.random_range(0.5..1.5)).collect();
    let center: Vec<f64> = (0..n_in).map(|_| rng.random_range(-1.0..1.0)).collect();
    let eps = rng.random_range(0.01..0.08);
    let t = InputBox::new(center.iter().map(|c| c - eps).collect(), center.iter().map(|c| c + eps).collect())
        .expect("valid box");
    let class = argmax(&forward(&net, &WeightVector(mean.clone()), &center).expect("shapes match"));
    ToyInstance {
        posterior: GaussianPosterior::new(mean, variance).expect("valid posterior").into(),
        net,
        t,
        class,
    }
}

/// Outcome of checking one instance and method.
#[derive(Debug, Clone)]
pub struct SandwichCheck {
    pub psafe: (f64, f64),
    pub mc_interval: (f64, f64),
    pub dsafe: (f64, f64),
    pub mc_extremes: (f64, f64),
    pub slack: f64,
    pub violations: Vec<String>,
}

pub fn check_instance(inst: &ToyInstance, cfg: &CertifyConfig, draws: usize, seed: u64) -> Result<SandwichCheck, CliError> {
    let s = inst.spec();
    let lo = psafe_lower(&inst.net, &inst.posterior, &inst.t, &s, cfg)?.value.scalar();
    let hi = psafe_upper(&inst.net, &inst.posterior, &inst.t, &s, cfg)?.value.scalar();
    let probe_attack = AttackConfig { restarts: 4, seed, ..AttackConfig::default() };
    let mc = mc_psafe(&inst.net, &inst.posterior, &inst.t, &s, draws, 64, seed, &probe_attack)?;
    let (cp_lo, cp_hi) = mc.interval();
    let b = dsafe_all_classes(&inst.net, &inst.posterior, &inst.t, cfg)?;
    let samples = posterior_draws(&inst.posterior, draws, seed);
    let (mn, mx) = predictive_extremes(&inst.net, &samples, &inst.t, inst.class, 32, seed, &probe_attack)?;
    let slack = hoeffding_slack(draws, 0.01);
    let (dl, du) = (b.lower[inst.class], b.upper[inst.class]);
    let mut violations = Vec::new();
    if lo > hi {
        violations.push(format!("psafe lower {lo} exceeds upper {hi}"));
    }
    if lo > cp_hi {
        violations.push(format!("psafe lower {lo} above Monte Carlo interval ({cp_lo}, {cp_hi})"));
    }
    if hi < cp_lo {
        violations.push(format!("psafe upper {hi} below Monte Carlo interval ({cp_lo}, {cp_hi})"));
    }
    if dl > mn + slack {
        violations.push(format!("dsafe lower {dl} above sampled minimum {mn} + {slack}"));
    }
    if du < mx - slack {
        violations.push(format!("dsafe upper {du} below sampled maximum {mx} - {slack}"));
    }
    Ok(SandwichCheck {
        psafe: (lo, hi),
        mc_interval: (cp_lo, cp_hi),
        dsafe: (dl, du),
        mc_extremes: (mn, mx),
        slack,
        violations,
    })
}

/// Degenerate collapse: a point posterior and a point input make every
/// bound equal the deterministic network's value.
fn check_collapse(seed: u64) -> Result<Vec<String>, CliError> {
    let inst = toy_instance(seed);
    let Posterior::Gaussian(g) = &inst.posterior else {
        unreachable!("toy instances are Gaussian")
    };
    let w = WeightVector(g.mean.clone());
    let post: Posterior<f64> = SamplePosterior::uniform(vec![w.clone()])?.into();
    let x = inst.t.center();
    let t = InputBox::point(&x)?;
    let cfg = CertifyConfig { num_samples: 1, gamma: 0.0, ..CertifyConfig::default() };
    let s = inst.spec();
    let safe = if s.satisfied_by(&forward(&inst.net, &w, &x)?) { 1.0 } else { 0.0 };
    let p = bnncert::softmax(&forward(&inst.net, &w, &x)?)?[inst.class];
    let task = Task::Classification { class: inst.class };
    let got = [
        ("psafe lower", psafe_lower(&inst.net, &post, &t, &s, &cfg)?.value.scalar(), safe),
        ("psafe upper", psafe_upper(&inst.net, &post, &t, &s, &cfg)?.value.scalar(), safe),
        ("dsafe lower", dsafe_lower(&inst.net, &post, &t, task, &cfg)?.value.scalar(), p),
        ("dsafe upper", dsafe_upper(&inst.net, &post, &t, task, &cfg)?.value.scalar(), p),
    ];
    Ok(got
        .iter()
        .filter(|(_, v, want)| (v - want).abs() > 1e-9)
        .map(|(name, v, want)| format!("{name} {v} does not collapse to {want}"))
        .collect())
}

pub fn cmd_validate(a: &ValidateArgs) -> Result<(), CliError> {
    if a.draws == 0 {
        return Err(CliError::Usage("--draws must be positive".into()));
    }
    let mut failures = 0usize;
    for i in 0..a.instances {
        let seed = a.seed.wrapping_add(i as u64);
        let inst = toy_instance(seed);
        for method in [Method::Ibp, Method::Lbp] {
            let cfg = CertifyConfig { num_samples: 50, gamma: 3.0, method, rng_seed: seed, ..CertifyConfig::default() };
            let c = check_instance(&inst, &cfg, a.draws, seed)?;
            let status = if c.violations.is_empty() { "ok" } else { "VIOLATION" };
            println!(
                "instance {i} {method:?}: psafe [{:.4}, {:.4}] mc ({:.4}, {:.4}); dsafe [{:.4}, {:.4}] mc [{:.4}, {:.4}] +/- {:.4}: {status}",
                c.psafe.0, c.psafe.1, c.mc_interval.0, c.mc_interval.1, c.dsafe.0, c.dsafe.1, c.mc_extremes.0,
                c.mc_extremes.1, c.slack
            );
            for v in &c.violations {
                println!("  {v}");
            }
            failures += c.violations.len();
        }
        for v in check_collapse(seed)? {
            println!("instance {i} point collapse: {v}");
            failures += 1;
        }
    }
    if failures > 0 {
        return Err(CliError::Validation(format!("{failures} sandwich violation(s)")));
    }
    println!("all {} instances passed", a.instances);
    Ok(())
}
