//! `ethreason`: validate, decide, sample, verify, learn and manage profiles
//! from the command line.
//!
//! Exit codes: 0 on success or a passing verdict, 1 on a failing verdict,
//! validation violations or non-convergence, 2 on usage, input or parse
//! errors. Errors are written to stderr as one JSON object per line.

mod human;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ethreason_core::decision::{decide, sample_many, DecisionReport};
use ethreason_core::error::Error;
use ethreason_core::learning::{run_learning, write_trajectory_csv, LearningConfig};
use ethreason_core::model::{joint_probability, validate_scenario, ScenarioModel};
use ethreason_core::profiles::{
    apply_profile, build_matrix, cluster_collection, normalize_matrix, retrieve_profile,
};
use ethreason_core::scenario_io::{
    apply_weights, kind, read_corpus, read_index, read_profile, read_scenario,
    read_scenario_unchecked, read_weights, serialize_index, serialize_profile, serialize_scenario,
    to_document,
};
use ethreason_core::verifier::{
    check_alignment, check_consistency, check_optimality, check_robustness, PerturbationMode,
    PerturbationSpec, Verdict, VerifierReport,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Human,
    Machine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Context,
    Conditional,
}

impl From<Mode> for PerturbationMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Context => PerturbationMode::Context,
            Mode::Conditional => PerturbationMode::Conditional,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ethreason", version, about = "Probabilistic ethical decision engine")]
struct Cli {
    /// Output format. `machine` emits canonical `.eth` documents.
    #[arg(long, value_enum, global = true, env = "ETHREASON_FORMAT", default_value = "human")]
    format: Format,

    /// Write the report here instead of standard output.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a scenario against every model invariant.
    Validate { file: PathBuf },
    /// Pick the action of maximal expected utility.
    Decide(DecideArgs),
    /// Decision plus joint and marginal probabilities behind it.
    Explain(DecideArgs),
    /// Draw actions from the softmax policy.
    Sample {
        file: PathBuf,
        #[arg(long = "temp", default_value_t = 1.0)]
        temperature: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        n: u64,
    },
    /// Robustness of the action distribution under context perturbation.
    Perturb {
        file: PathBuf,
        #[command(flatten)]
        perturbation: PerturbationArgs,
        #[arg(long)]
        kmax: f64,
        #[arg(long = "temp", default_value_t = 1.0)]
        temperature: f64,
    },
    /// Lipschitz consistency of prescript priorities.
    Consistency {
        file: PathBuf,
        #[command(flatten)]
        perturbation: PerturbationArgs,
        #[arg(long)]
        lmax: f64,
        #[arg(long, value_enum, default_value = "context")]
        mode: Mode,
    },
    /// Compare the decision against an exhaustive independent oracle.
    Optimality { file: PathBuf },
    /// Agreement with one or more reference corpora.
    Align {
        corpora: Vec<PathBuf>,
        #[arg(long = "corpus")]
        corpus: Vec<PathBuf>,
        #[arg(long)]
        theta: f64,
    },
    /// Iterative policy learning with a convergence check.
    Learn(LearnArgs),
    /// Profile matrices: build, normalize, cluster, retrieve, apply.
    #[command(subcommand)]
    Profile(ProfileCommand),
}

#[derive(Debug, Args)]
struct DecideArgs {
    file: PathBuf,
    /// Weight overlay applied before deciding.
    #[arg(long)]
    weights: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PerturbationArgs {
    /// L1 budget of each perturbation.
    #[arg(long)]
    delta: f64,
    #[arg(long, default_value_t = 1000)]
    samples: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct LearnArgs {
    file: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    episodes: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.05)]
    eps: f64,
    #[arg(long, default_value_t = 500)]
    window: u64,
    #[arg(long, default_value_t = 1.0)]
    tau0: f64,
    #[arg(long, default_value_t = 0.05)]
    tau_min: f64,
    /// Half-width of uniform reward noise.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Write the per-episode log as CSV.
    #[arg(long)]
    trajectory: Option<PathBuf>,
    /// Keep every n-th point in the report trajectory.
    #[arg(long, default_value_t = 100)]
    stride: u64,
}

#[derive(Debug, Subcommand)]
enum ProfileCommand {
    /// Profile matrix m = w * P(e|c) of a scenario.
    Build {
        file: PathBuf,
        /// Profile id; defaults to the scenario name.
        #[arg(long)]
        id: Option<String>,
    },
    /// Min-max normalize a profile.
    Normalize { file: PathBuf },
    /// Cluster profiles with k-medoids into a self-contained index.
    Cluster {
        files: Vec<PathBuf>,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Nearest stored profile to a query (normalized first if needed).
    Retrieve {
        query: PathBuf,
        #[arg(long)]
        index: PathBuf,
    },
    /// Scenario with baseline weights w = 1 + m from a profile.
    Apply { file: PathBuf, profile: PathBuf },
}

/// Outcome of a subcommand: the text to emit and whether it signals failure.
struct Outcome {
    text: String,
    failed: bool,
}

impl Outcome {
    fn ok(text: String) -> Self {
        Self { text, failed: false }
    }
}

#[derive(Debug, Serialize)]
struct ErrorRecord<'a> {
    error: &'a str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    violations: Option<&'a ethreason_core::model::ValidationReport>,
}

#[derive(Debug, Serialize, serde::Deserialize, PartialEq)]
pub(crate) struct Explanation {
    pub decision: DecisionReport,
    /// P(E) = Σ_c P(c) P(e|c).
    pub prescript_marginal: BTreeMap<String, f64>,
    /// dictum -> prescript -> P(c) P(e|c).
    pub joint: BTreeMap<String, BTreeMap<String, f64>>,
}

fn report_error(err: &Error) {
    let record = ErrorRecord {
        error: err.kind(),
        message: err.to_string(),
        violations: match err {
            Error::Validation(r) => Some(r),
            _ => None,
        },
    };
    eprintln!("{}", serde_json::to_string(&record).expect("error record serializes"));
}

fn load(path: &Path, weights: Option<&Path>) -> Result<ScenarioModel, Error> {
    let model = read_scenario(path)?.parsed;
    match weights {
        Some(w) => apply_weights(&model, &read_weights(w)?),
        None => Ok(model),
    }
}

fn verdict(format: Format, report: &VerifierReport, scenario: &str) -> Result<Outcome, Error> {
    let text = match format {
        Format::Machine => to_document(kind::VERIFIER, report)?,
        Format::Human => human::verifier(report, scenario),
    };
    Ok(Outcome {
        text,
        failed: report.verdict == Verdict::Fail,
    })
}

fn run(cli: &Cli) -> Result<Outcome, Error> {
    let machine = cli.format == Format::Machine;
    match &cli.command {
        Command::Validate { file } => {
            let model = read_scenario_unchecked(file)?;
            let report = validate_scenario(&model);
            let text = if machine {
                to_document(kind::VALIDATION, &report)?
            } else {
                human::validation(&report, &model.name)
            };
            Ok(Outcome {
                text,
                failed: !report.is_valid(),
            })
        }
        Command::Decide(args) => {
            let model = load(&args.file, args.weights.as_deref())?;
            let report = decide(&model)?;
            Ok(Outcome::ok(if machine {
                to_document(kind::DECISION, &report)?
            } else {
                human::decision(&report)
            }))
        }
        Command::Explain(args) => {
            let model = load(&args.file, args.weights.as_deref())?;
            let mut joint: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
            let mut prescript_marginal: BTreeMap<String, f64> = BTreeMap::new();
            for c in model.dictum_ids() {
                for e in model.prescript_ids() {
                    let p = joint_probability(&model, c, e)?;
                    joint.entry(c.to_owned()).or_default().insert(e.to_owned(), p);
                    *prescript_marginal.entry(e.to_owned()).or_default() += p;
                }
            }
            let explanation = Explanation {
                decision: decide(&model)?,
                prescript_marginal,
                joint,
            };
            Ok(Outcome::ok(if machine {
                to_document("explanation", &explanation)?
            } else {
                human::explanation(&explanation)
            }))
        }
        Command::Sample {
            file,
            temperature,
            seed,
            n,
        } => {
            let model = load(file, None)?;
            let report = sample_many(&model, *temperature, *seed, *n)?;
            Ok(Outcome::ok(if machine {
                to_document(kind::SAMPLE, &report)?
            } else {
                human::sample(&report)
            }))
        }
        Command::Perturb {
            file,
            perturbation,
            kmax,
            temperature,
        } => {
            let model = load(file, None)?;
            let pert = PerturbationSpec::context(perturbation.delta, perturbation.samples, perturbation.seed);
            let report = check_robustness(&model, &pert, *kmax, *temperature)?;
            verdict(cli.format, &report, &model.name)
        }
        Command::Consistency {
            file,
            perturbation,
            lmax,
            mode,
        } => {
            let model = load(file, None)?;
            let pert = PerturbationSpec {
                mode: (*mode).into(),
                magnitude: perturbation.delta,
                samples: perturbation.samples,
                seed: perturbation.seed,
            };
            let report = check_consistency(&model, &pert, *lmax)?;
            verdict(cli.format, &report, &model.name)
        }
        Command::Optimality { file } => {
            let model = load(file, None)?;
            let report = check_optimality(&model)?;
            verdict(cli.format, &report, &model.name)
        }
        Command::Align {
            corpora,
            corpus,
            theta,
        } => {
            let mut reference = Vec::new();
            for path in corpora.iter().chain(corpus) {
                reference.extend(read_corpus(path)?);
            }
            if reference.is_empty() {
                return Err(Error::Empty("reference corpus"));
            }
            let report = check_alignment(&reference, *theta)?;
            verdict(cli.format, &report, "corpus")
        }
        Command::Learn(args) => learn(args, machine),
        Command::Profile(cmd) => profile(cmd, machine),
    }
}

fn learn(args: &LearnArgs, machine: bool) -> Result<Outcome, Error> {
    let model = load(&args.file, None)?;
    let config = LearningConfig {
        episodes: args.episodes,
        seed: args.seed,
        eps_conv: args.eps,
        window: args.window,
        tau0: args.tau0,
        tau_min: args.tau_min,
        noise: args.noise,
        record_every: args.stride,
    };
    let report = run_learning(&model, &config)?;
    if let Some(path) = &args.trajectory {
        let file = File::create(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        write_trajectory_csv(&report.log, BufWriter::new(file))?;
    }
    Ok(Outcome {
        text: if machine {
            to_document(kind::CONVERGENCE, &report)?
        } else {
            human::convergence(&report)
        },
        failed: !report.converged,
    })
}

fn profile(cmd: &ProfileCommand, machine: bool) -> Result<Outcome, Error> {
    let text = match cmd {
        ProfileCommand::Build { file, id } => {
            let model = load(file, None)?;
            let m = build_matrix(&model)?;
            let id = id.clone().unwrap_or_else(|| model.name.clone());
            if machine {
                serialize_profile(&id, &m)?
            } else {
                human::profile(&id, &m)
            }
        }
        ProfileCommand::Normalize { file } => {
            let (id, m) = read_profile(file)?;
            let n = normalize_matrix(&m)?;
            if machine {
                serialize_profile(&id, &n)?
            } else {
                human::profile(&id, &n)
            }
        }
        ProfileCommand::Cluster { files, k, seed } => {
            let mut profiles = Vec::with_capacity(files.len());
            for f in files {
                let (id, m) = read_profile(f)?;
                let m = if m.normalized { m } else { normalize_matrix(&m)? };
                profiles.push((id, m));
            }
            let collection = cluster_collection(profiles, *k, *seed)?;
            if machine {
                serialize_index(&collection)?
            } else {
                human::clusters(&collection)
            }
        }
        ProfileCommand::Retrieve { query, index } => {
            let collection = read_index(index)?;
            let (_, q) = read_profile(query)?;
            let q = if q.normalized { q } else { normalize_matrix(&q)? };
            let r = retrieve_profile(&collection, &q)?;
            if machine {
                to_document(kind::RETRIEVAL, &r)?
            } else {
                format!(
                    "nearest profile: {} (cluster {}, distance {:.6})\n",
                    r.profile_id, r.cluster_id, r.distance
                )
            }
        }
        ProfileCommand::Apply { file, profile } => {
            let model = load(file, None)?;
            let (_, m) = read_profile(profile)?;
            let weighted = apply_profile(&model, &m)?;
            if machine {
                serialize_scenario(&weighted)?
            } else {
                human::decision(&decide(&weighted)?)
            }
        }
    };
    Ok(Outcome::ok(text))
}

fn emit(path: Option<&Path>, text: &str) -> Result<(), Error> {
    let io_err = |source| Error::Io {
        path: path.map_or_else(|| "stdout".into(), |p| p.display().to_string()),
        source,
    };
    match path {
        Some(p) => std::fs::write(p, text).map_err(io_err),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes()).and_then(|_| out.flush()).map_err(io_err)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = e.print();
                return ExitCode::from(if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand { 2 } else { 0 });
            }
            let message = e.render().to_string();
            let first = message.lines().next().unwrap_or("usage error").trim_start_matches("error: ");
            let record = ErrorRecord {
                error: "usage",
                message: first.to_owned(),
                violations: None,
            };
            eprintln!("{}", serde_json::to_string(&record).expect("error record serializes"));
            return ExitCode::from(2);
        }
    };
    match run(&cli).and_then(|outcome| {
        emit(cli.output.as_deref(), &outcome.text)?;
        Ok(outcome.failed)
    }) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(1),
        Err(e) => {
            report_error(&e);
            ExitCode::from(2)
        }
    }
}
