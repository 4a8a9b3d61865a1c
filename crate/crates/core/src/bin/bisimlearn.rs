use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_bigint::BigInt;
use tracing_subscriber::EnvFilter;

use bisimlearn::bench::{run_manifest, strip_comments, summarize, summary_table, to_csv, Manifest};
use bisimlearn::cegis::{initial_template, run_from, CegisConfig, LearnedBisimulation};
use bisimlearn::checker::{check, lift, parse_property_for};
use bisimlearn::model::{parse_system, SymbolicSystem};
use bisimlearn::oracle::{
    check_partition, coarsest_partition, explicit_quotient, ExplicitSystem, PartitionCheck, PartitionDoc,
};
use bisimlearn::quotient::extract;
use bisimlearn::smt::Solver;
use bisimlearn::templates::{ClassifierDoc, ClassifierTemplate, ParamAssignment};

#[derive(Parser)]
#[command(name = "bisimlearn", version, about = "Learn finite bisimulation quotients of integer transition systems")]
struct Cli {
    /// SMT solver command (default: $BISIM_SOLVER or `z3`).
    #[arg(long, global = true)]
    solver_cmd: Option<String>,
    /// Worker threads for parallel solver queries.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Per-query solver timeout in milliseconds.
    #[arg(long, global = true, default_value_t = 30_000)]
    timeout_ms: u64,
    /// More logging (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a classifier for a system.
    Learn {
        system: PathBuf,
        #[command(flatten)]
        opts: LearnOpts,
        /// Write the learned classifier as JSON.
        #[arg(long)]
        save_classifier: Option<PathBuf>,
        /// Also print the quotient in this format.
        #[arg(long)]
        emit: Option<Emit>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Build the quotient of a system.
    Quotient {
        system: PathBuf,
        #[arg(long)]
        load_classifier: Option<PathBuf>,
        #[arg(long, default_value = "dot")]
        emit: Emit,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        opts: LearnOpts,
    },
    /// Check a property on the quotient and print the initial states that
    /// satisfy it. Exit code 0 if it holds, 1 if not, 2 on error.
    Check {
        system: PathBuf,
        #[arg(long)]
        prop: PathBuf,
        #[arg(long)]
        load_classifier: Option<PathBuf>,
        #[command(flatten)]
        opts: LearnOpts,
    },
    /// Explicit-state partitions.
    Oracle {
        action: OracleAction,
        file: PathBuf,
        /// Partition to check, or to use for `coarsest` output naming.
        #[arg(long)]
        partition: Option<PathBuf>,
        #[arg(long)]
        emit: Option<Emit>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run every case of a manifest repeatedly.
    Bench {
        manifest: PathBuf,
        #[arg(long)]
        reps: Option<usize>,
        /// Write per-phase rows as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        opts: LearnOpts,
    },
}

#[derive(Args, Clone)]
struct LearnOpts {
    #[arg(long, default_value_t = 200)]
    max_cegis_iters: usize,
    /// Maximum number of parametric layers in the classifier.
    #[arg(long, default_value_t = 4)]
    max_depth: usize,
    #[arg(long, conflicts_with = "global_rank")]
    piecewise: bool,
    /// One ranking function for all classes.
    #[arg(long)]
    global_rank: bool,
    /// Random sample pairs added before the first round.
    #[arg(long, default_value_t = 0)]
    seed_samples: usize,
    /// Bound on the absolute value of learned coefficients.
    #[arg(long)]
    param_bound: Option<BigInt>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Emit {
    Dot,
    Json,
}

impl Emit {
    fn name(self) -> &'static str {
        match self {
            Emit::Dot => "dot",
            Emit::Json => "json",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleAction {
    Coarsest,
    Check,
}

struct Failure {
    code: u8,
    msg: String,
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Failure {
        Failure { code: 2, msg: e.to_string() }
    }
}

type CliResult = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(level));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();
    if let Some(j) = cli.jobs {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global();
    }
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure { code: 2, msg: format!("cannot read {}: {e}", path.display()) })
}

fn write_out(output: Option<&Path>, text: &str) -> Result<(), Failure> {
    match output {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| Failure { code: 2, msg: format!("cannot write {}: {e}", p.display()) }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_system(path: &Path) -> Result<SymbolicSystem, Failure> {
    parse_system(&read(path)?).map_err(|e| Failure { code: 2, msg: format!("{}: {e}", path.display()) })
}

fn solver(cli: &Cli) -> Solver {
    Solver::from_env(cli.solver_cmd.as_deref(), Duration::from_millis(cli.timeout_ms))
}

fn config(cli: &Cli, opts: &LearnOpts) -> CegisConfig {
    let mut cfg = CegisConfig {
        max_iters: opts.max_cegis_iters,
        timeout: Duration::from_millis(cli.timeout_ms),
        seed: cli.seed,
        piecewise: opts.piecewise || !opts.global_rank,
        seed_samples: opts.seed_samples,
        param_bound: opts.param_bound.clone(),
        ..CegisConfig::default()
    };
    if let Some(j) = cli.jobs {
        cfg.jobs = j;
    }
    cfg
}

fn learn_system(cli: &Cli, opts: &LearnOpts, sys: &SymbolicSystem, solver: &Solver) -> Result<LearnedBisimulation, Failure> {
    let start = std::time::Instant::now();
    let template = initial_template(sys, solver);
    let mut cfg = config(cli, opts);
    cfg.max_refinements = opts.max_depth.saturating_sub(template.param_depth());
    let learned = run_from(sys, template, &cfg, solver, start.elapsed())?;
    eprintln!(
        "learned {} classes in {} iterations ({} counterexamples, {} refinements)",
        learned.template.num_classes(),
        learned.stats.iterations,
        learned.stats.counterexamples,
        learned.stats.refinements
    );
    Ok(learned)
}

fn classifier(
    cli: &Cli,
    opts: &LearnOpts,
    sys: &SymbolicSystem,
    solver: &Solver,
    load: Option<&Path>,
) -> Result<(ClassifierTemplate, ParamAssignment), Failure> {
    match load {
        Some(p) => {
            let doc: ClassifierDoc = serde_json::from_str(&read(p)?)?;
            Ok(doc.resolve(sys)?)
        }
        None => {
            let l = learn_system(cli, opts, sys, solver)?;
            Ok((l.template, l.params))
        }
    }
}

fn dispatch(cli: &Cli) -> CliResult {
    match &cli.cmd {
        Command::Learn { system, opts, save_classifier, emit, output } => {
            let sys = load_system(system)?;
            let solver = solver(cli);
            let learned = learn_system(cli, opts, &sys, &solver)?;
            let doc = ClassifierDoc::new(&sys, &learned.template, &learned.params);
            let json = serde_json::to_string_pretty(&doc)?;
            if let Some(p) = save_classifier {
                write_out(Some(p), &json)?;
            }
            let text = match emit {
                Some(e) => extract(&sys, &learned.template, &learned.params, &solver)?.export(e.name())?,
                None => {
                    let mut s = String::new();
                    for c in learned.template.classes() {
                        let region = learned.template.region(&learned.params.splits, c);
                        s.push_str(&format!("{}: {}\n", bisimlearn::quotient::class_name(c.0), region.display(sys.vars())));
                    }
                    s
                }
            };
            write_out(output.as_deref(), &text)?;
            Ok(0)
        }
        Command::Quotient { system, load_classifier, emit, output, opts } => {
            let sys = load_system(system)?;
            let solver = solver(cli);
            let (t, p) = classifier(cli, opts, &sys, &solver, load_classifier.as_deref())?;
            let q = extract(&sys, &t, &p, &solver)?;
            write_out(output.as_deref(), &q.export(emit.name())?)?;
            Ok(0)
        }
        Command::Check { system, prop, load_classifier, opts } => {
            let sys = load_system(system)?;
            let alphabet = sys.label_names().into_iter().collect();
            let f = parse_property_for(&strip_comments(&read(prop)?), &alphabet)
                .map_err(|e| Failure { code: 2, msg: format!("{}: {e}", prop.display()) })?;
            let solver = solver(cli);
            let (t, p) = classifier(cli, opts, &sys, &solver, load_classifier.as_deref())?;
            let q = extract(&sys, &t, &p, &solver)?;
            let v = check(&q, &f, sys.label_names())?;
            let names = |ids: &std::collections::BTreeSet<usize>| {
                ids.iter().map(|&i| q.class(i).map(|c| c.name.clone()).unwrap_or_default()).collect::<Vec<_>>().join(", ")
            };
            println!("verdict: {}", if v.holds { "holds" } else { "fails" });
            println!("satisfying classes: {{{}}}", names(&v.satisfying));
            if !v.holds {
                println!("failing initial classes: {{{}}}", names(&v.failing_initial()));
            }
            println!("initial condition: {}", lift(&sys, &t, &p, &v).display(sys.vars()));
            Ok(if v.holds { 0 } else { 1 })
        }
        Command::Oracle { action, file, partition, emit, output } => {
            let es = ExplicitSystem::parse(&read(file)?)
                .map_err(|e| Failure { code: 2, msg: format!("{}: {e}", file.display()) })?;
            match action {
                OracleAction::Coarsest => {
                    let p = coarsest_partition(&es);
                    let text = match emit {
                        Some(e) => explicit_quotient(&es, &p, None).export(e.name())?,
                        None => serde_json::to_string_pretty(&PartitionDoc::new(&es, &p))? + "\n",
                    };
                    write_out(output.as_deref(), &text)?;
                    Ok(0)
                }
                OracleAction::Check => {
                    let path = partition
                        .as_ref()
                        .ok_or_else(|| Failure { code: 2, msg: "`oracle check` needs --partition".into() })?;
                    let doc: PartitionDoc = serde_json::from_str(&read(path)?)?;
                    let (p, names) = doc.resolve(&es)?;
                    match check_partition(&es, &p) {
                        PartitionCheck::Valid => {
                            if let Some(e) = emit {
                                write_out(output.as_deref(), &explicit_quotient(&es, &p, Some(&names)).export(e.name())?)?;
                            }
                            println!("valid");
                            Ok(0)
                        }
                        PartitionCheck::Violation(v) => {
                            println!("invalid: {}", v.describe(&es));
                            Ok(1)
                        }
                    }
                }
            }
        }
        Command::Bench { manifest, reps, csv, opts } => {
            let m = Manifest::load(manifest)?;
            let reps = reps.or(m.repetitions).unwrap_or(1);
            let cfg = config(cli, opts);
            let reports = run_manifest(&m, reps, &cfg, &solver(cli));
            print!("{}", summary_table(&summarize(&reports)));
            if let Some(p) = csv {
                write_out(Some(p), &to_csv(&reports))?;
            }
            let mut failed = false;
            for r in &reports {
                if let bisimlearn::bench::RunResult::Failed(msg) = &r.result {
                    eprintln!("{} rep {}: {msg}", r.case, r.rep);
                    failed = true;
                }
            }
            Ok(if failed { 1 } else { 0 })
        }
    }
}
