//! Repeated end-to-end runs over a manifest of cases.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::Deserialize;
use thiserror::Error;

use crate::cegis::{run, CegisConfig};
use crate::checker::{check, parse_property_for};
use crate::model::parse_system;
use crate::quotient::extract;
use crate::smt::Solver;

pub const DEFAULT_BUDGET_SECS: f64 = 500.0;

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Manifest {
    #[serde(default)]
    pub repetitions: Option<usize>,
    #[serde(default)]
    pub budget_secs: Option<f64>,
    #[serde(default, rename = "case")]
    pub cases: Vec<CaseSpec>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct CaseSpec {
    pub name: String,
    pub system: PathBuf,
    #[serde(default)]
    pub property: Option<PathBuf>,
    #[serde(default)]
    pub budget_secs: Option<f64>,
    /// The run fails if the quotient has more classes.
    #[serde(default)]
    pub max_classes: Option<usize>,
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid manifest: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Manifest, ManifestError> {
        Ok(toml::from_str(text)?)
    }

    /// Loads a manifest; relative case paths are resolved against its
    /// directory.
    pub fn load(path: &Path) -> Result<Manifest, ManifestError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ManifestError::Io { path: path.to_path_buf(), source })?;
        let mut m = Manifest::parse(&text)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        for c in &mut m.cases {
            c.system = dir.join(&c.system);
            if let Some(p) = &mut c.property {
                *p = dir.join(&*p);
            }
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTimes {
    pub learn: Duration,
    pub verify: Duration,
    pub extract: Duration,
    pub check: Duration,
}

impl PhaseTimes {
    pub fn total(&self) -> Duration {
        self.learn + self.verify + self.extract + self.check
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunResult {
    /// Learned, extracted and (if given) checked; carries the property
    /// verdict.
    Ok { holds: Option<bool> },
    Failed(String),
}

impl RunResult {
    pub fn is_ok(&self) -> bool {
        matches!(self, RunResult::Ok { .. })
    }

    pub fn tag(&self) -> &'static str {
        match self {
            RunResult::Ok { holds: None } => "ok",
            RunResult::Ok { holds: Some(true) } => "holds",
            RunResult::Ok { holds: Some(false) } => "fails",
            RunResult::Failed(_) => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub case: String,
    pub rep: usize,
    pub seed: u64,
    pub phases: PhaseTimes,
    pub iterations: usize,
    pub counterexamples: usize,
    pub classes: usize,
    pub solver_queries: usize,
    pub solver: String,
    pub result: RunResult,
}

/// Learns, extracts and checks one case.
pub fn run_case(case: &CaseSpec, rep: usize, cfg: &CegisConfig, solver: &Solver, budget: f64) -> RunReport {
    let mut report = RunReport {
        case: case.name.clone(),
        rep,
        seed: cfg.seed,
        phases: PhaseTimes::default(),
        iterations: 0,
        counterexamples: 0,
        classes: 0,
        solver_queries: 0,
        solver: solver.version().unwrap_or_else(|_| solver.command()),
        result: RunResult::Ok { holds: None },
    };
    let fail = |mut r: RunReport, msg: String| {
        r.result = RunResult::Failed(msg);
        r
    };
    let text = match std::fs::read_to_string(&case.system) {
        Ok(t) => t,
        Err(e) => return fail(report, format!("cannot read {}: {e}", case.system.display())),
    };
    let sys = match parse_system(&text) {
        Ok(s) => s,
        Err(e) => return fail(report, format!("{}: {e}", case.system.display())),
    };
    let prop = match &case.property {
        None => None,
        Some(p) => {
            let text = match std::fs::read_to_string(p) {
                Ok(t) => t,
                Err(e) => return fail(report, format!("cannot read {}: {e}", p.display())),
            };
            let alphabet = sys.label_names().into_iter().collect();
            match parse_property_for(&strip_comments(&text), &alphabet) {
                Ok(f) => Some(f),
                Err(e) => return fail(report, format!("{}: {e}", p.display())),
            }
        }
    };
    let queries_before = solver.query_count();
    let learned = run(&sys, cfg, solver);
    let learned = match learned {
        Ok(l) => l,
        Err(f) => {
            report.iterations = f.stats.iterations;
            report.phases.learn = f.stats.learn_time + f.stats.init_time;
            report.phases.verify = f.stats.verify_time;
            return fail(report, f.to_string());
        }
    };
    report.iterations = learned.stats.iterations;
    report.counterexamples = learned.stats.counterexamples;
    report.phases.learn = learned.stats.learn_time + learned.stats.init_time;
    report.phases.verify = learned.stats.verify_time;

    let t0 = Instant::now();
    let q = match extract(&sys, &learned.template, &learned.params, solver) {
        Ok(q) => q,
        Err(e) => return fail(report, e.to_string()),
    };
    report.phases.extract = t0.elapsed();
    report.classes = q.classes.len();

    if let Some(f) = &prop {
        let t0 = Instant::now();
        match check(&q, f, sys.label_names()) {
            Ok(v) => report.result = RunResult::Ok { holds: Some(v.holds) },
            Err(e) => return fail(report, e.to_string()),
        }
        report.phases.check = t0.elapsed();
    }
    report.solver_queries = solver.query_count() - queries_before;

    let secs = report.phases.total().as_secs_f64();
    if secs > budget {
        return fail(report, format!("budget of {budget}s exceeded ({secs:.2}s)"));
    }
    if let Some(max) = case.max_classes {
        if report.classes > max {
            let msg = format!("{} classes, more than the allowed {max}", report.classes);
            return fail(report, msg);
        }
    }
    report
}

/// Drops `#` and `//` comments from property files.
pub fn strip_comments(text: &str) -> String {
    text.lines()
        .map(|l| {
            let l = l.split('#').next().unwrap_or("");
            l.split("//").next().unwrap_or("")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Runs every case `reps` times with seeds `seed, seed + 1, ...`.
pub fn run_manifest(m: &Manifest, reps: usize, cfg: &CegisConfig, solver: &Solver) -> Vec<RunReport> {
    let mut out = Vec::new();
    for case in &m.cases {
        let budget = case.budget_secs.or(m.budget_secs).unwrap_or(DEFAULT_BUDGET_SECS);
        for rep in 0..reps {
            let cfg = CegisConfig { seed: cfg.seed + rep as u64, ..cfg.clone() };
            let solver = solver.with_timeout(cfg.timeout.min(Duration::from_secs_f64(budget)));
            out.push(run_case(case, rep, &cfg, &solver, budget));
        }
    }
    out
}

/// `case,rep,phase,seconds,iters,classes,result`, one row per phase.
pub fn to_csv(reports: &[RunReport]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["case", "rep", "phase", "seconds", "iters", "classes", "result"]).expect("in-memory write");
    for r in reports {
        let phases = [
            ("learn", r.phases.learn),
            ("verify", r.phases.verify),
            ("extract", r.phases.extract),
            ("check", r.phases.check),
            ("total", r.phases.total()),
        ];
        for (name, d) in phases {
            w.write_record([
                r.case.clone(),
                r.rep.to_string(),
                name.to_string(),
                format!("{:.6}", d.as_secs_f64()),
                r.iterations.to_string(),
                r.classes.to_string(),
                r.result.tag().to_string(),
            ])
            .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseSummary {
    pub case: String,
    pub runs: usize,
    pub successes: usize,
    pub mean_secs: f64,
    pub std_secs: f64,
    pub mean_iters: f64,
    pub classes: Vec<usize>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

/// Per-case mean and sample standard deviation of total time.
pub fn summarize(reports: &[RunReport]) -> Vec<CaseSummary> {
    let mut order: Vec<&str> = Vec::new();
    for r in reports {
        if !order.contains(&r.case.as_str()) {
            order.push(&r.case);
        }
    }
    order
        .into_iter()
        .map(|case| {
            let rs: Vec<&RunReport> = reports.iter().filter(|r| r.case == case).collect();
            let secs: Vec<f64> = rs.iter().map(|r| r.phases.total().as_secs_f64()).collect();
            let iters: Vec<f64> = rs.iter().map(|r| r.iterations as f64).collect();
            let (mean_secs, std_secs) = mean_std(&secs);
            let mut classes: Vec<usize> = rs.iter().filter(|r| r.result.is_ok()).map(|r| r.classes).collect();
            classes.sort_unstable();
            classes.dedup();
            CaseSummary {
                case: case.to_string(),
                runs: rs.len(),
                successes: rs.iter().filter(|r| r.result.is_ok()).count(),
                mean_secs,
                std_secs,
                mean_iters: mean_std(&iters).0,
                classes,
            }
        })
        .collect()
}

pub fn summary_table(rows: &[CaseSummary]) -> String {
    let mut out = format!(
        "{:<20} {:>5} {:>5} {:>10} {:>10} {:>8} {:>8}\n",
        "case", "runs", "ok", "mean[s]", "std[s]", "iters", "classes"
    );
    for r in rows {
        let classes = r.classes.iter().map(|c| c.to_string()).collect::<Vec<_>>().join("/");
        let _ = writeln!(
            out,
            "{:<20} {:>5} {:>5} {:>10.3} {:>10.3} {:>8.1} {:>8}",
            r.case, r.runs, r.successes, r.mean_secs, r.std_secs, r.mean_iters, classes
        );
    }
    out
}
