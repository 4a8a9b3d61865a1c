//! One-shot SMT-LIB2 sessions against an external solver process.

use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use thiserror::Error;

use super::ast::{Model, SmtFormula, Sort, Value};

/// Environment variable naming the solver command line.
pub const SOLVER_ENV: &str = "BISIM_SOLVER";
pub const DEFAULT_SOLVER: &str = "z3 -in -smt2";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SmtResult {
    Sat(Model),
    Unsat,
    Unknown(String),
}

impl SmtResult {
    pub fn is_sat(&self) -> bool {
        matches!(self, SmtResult::Sat(_))
    }

    pub fn is_unsat(&self) -> bool {
        matches!(self, SmtResult::Unsat)
    }
}

#[derive(Debug, Error)]
pub enum SmtError {
    #[error("failed to start solver `{cmd}`: {source}")]
    Spawn {
        cmd: String,
        #[source]
        source: std::io::Error,
    },
    #[error("solver i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("solver backend error: {0}")]
    Backend(String),
}

/// Handle on a solver executable. Cheap to clone; every [`Solver::check`]
/// spawns its own process, so concurrent calls share nothing but the
/// query counter.
#[derive(Debug, Clone)]
pub struct Solver {
    argv: Vec<String>,
    timeout: Duration,
    queries: Arc<AtomicUsize>,
}

impl Solver {
    pub fn new(command: &str, timeout: Duration) -> Solver {
        Solver {
            argv: command.split_whitespace().map(str::to_string).collect(),
            timeout,
            queries: Arc::new(AtomicUsize::new(0)),
        }
    }

    /// Uses `cmd` if given, else `$BISIM_SOLVER`, else `z3 -in -smt2`.
    pub fn from_env(cmd: Option<&str>, timeout: Duration) -> Solver {
        match cmd {
            Some(c) => Solver::new(c, timeout),
            None => match std::env::var(SOLVER_ENV) {
                Ok(c) if !c.trim().is_empty() => Solver::new(&c, timeout),
                _ => Solver::new(DEFAULT_SOLVER, timeout),
            },
        }
    }

    pub fn command(&self) -> String {
        self.argv.join(" ")
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    pub fn with_timeout(&self, timeout: Duration) -> Solver {
        Solver { timeout, ..self.clone() }
    }

    pub fn query_count(&self) -> usize {
        self.queries.load(Ordering::Relaxed)
    }

    pub fn check(&self, formula: &SmtFormula) -> Result<SmtResult, SmtError> {
        self.queries.fetch_add(1, Ordering::Relaxed);
        if formula.trivially_unsat() {
            return Ok(SmtResult::Unsat);
        }
        let mut script = formula.to_smtlib();
        script.push_str("(check-sat)\n(get-model)\n(exit)\n");
        let output = match self.run(&script)? {
            Some(out) => out,
            None => return Ok(SmtResult::Unknown("timeout".into())),
        };
        let mut lines = output.lines().map(str::trim).filter(|l| !l.is_empty());
        let status = lines
            .next()
            .ok_or_else(|| SmtError::Backend("solver produced no output".into()))?;
        match status {
            "unsat" => Ok(SmtResult::Unsat),
            "unknown" => Ok(SmtResult::Unknown("solver returned unknown".into())),
            "sat" => {
                let rest = output.splitn(2, "sat").nth(1).unwrap_or("");
                let model = parse_model(rest, formula.decls())?;
                Ok(SmtResult::Sat(model))
            }
            other => Err(SmtError::Backend(format!("unexpected solver response: {other}"))),
        }
    }

    /// Asks the solver for its version string.
    pub fn version(&self) -> Result<String, SmtError> {
        let out = self
            .run("(get-info :version)\n(exit)\n")?
            .ok_or_else(|| SmtError::Backend("timeout while querying version".into()))?;
        let sexp = Sexp::parse_all(&out).map_err(SmtError::Backend)?;
        for s in sexp {
            if let Sexp::List(items) = s {
                if let [Sexp::Atom(k), Sexp::Atom(v)] = items.as_slice() {
                    if k == ":version" {
                        return Ok(v.trim_matches('"').to_string());
                    }
                }
            }
        }
        Ok(out.trim().to_string())
    }

    /// Runs `script`; `None` on timeout.
    fn run(&self, script: &str) -> Result<Option<String>, SmtError> {
        let (prog, args) = self
            .argv
            .split_first()
            .ok_or_else(|| SmtError::Backend("empty solver command".into()))?;
        let mut child = Command::new(prog)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|source| SmtError::Spawn { cmd: self.command(), source })?;

        let mut stdout = child.stdout.take().expect("piped stdout");
        let reader = thread::spawn(move || {
            let mut buf = String::new();
            stdout.read_to_string(&mut buf).map(|_| buf)
        });
        let mut stderr = child.stderr.take().expect("piped stderr");
        let err_reader = thread::spawn(move || {
            let mut buf = String::new();
            let _ = stderr.read_to_string(&mut buf);
            buf
        });
        {
            let mut stdin = child.stdin.take().expect("piped stdin");
            // A solver that exits early closes the pipe; the exit status
            // below reports the real problem.
            let _ = stdin.write_all(script.as_bytes());
        }

        let deadline = Instant::now() + self.timeout;
        let mut sleep = Duration::from_micros(200);
        let status = loop {
            if let Some(status) = child.try_wait()? {
                break status;
            }
            if Instant::now() >= deadline {
                let _ = child.kill();
                let _ = child.wait();
                let _ = reader.join();
                let _ = err_reader.join();
                return Ok(None);
            }
            thread::sleep(sleep);
            sleep = (sleep * 2).min(Duration::from_millis(5));
        };
        let out = reader
            .join()
            .map_err(|_| SmtError::Backend("stdout reader panicked".into()))??;
        let err = err_reader.join().unwrap_or_default();
        if out.trim().is_empty() && !status.success() {
            return Err(SmtError::Backend(format!(
                "solver exited with {status}: {}",
                err.trim()
            )));
        }
        Ok(Some(out))
    }
}

/// Minimal s-expression reader for solver responses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

impl Sexp {
    pub(crate) fn parse_all(text: &str) -> Result<Vec<Sexp>, String> {
        let mut stack: Vec<Vec<Sexp>> = vec![Vec::new()];
        let mut chars = text.chars().peekable();
        while let Some(&c) = chars.peek() {
            match c {
                '(' => {
                    chars.next();
                    stack.push(Vec::new());
                }
                ')' => {
                    chars.next();
                    let done = stack.pop().ok_or("unbalanced `)`")?;
                    stack
                        .last_mut()
                        .ok_or_else(|| "unbalanced `)`".to_string())?
                        .push(Sexp::List(done));
                }
                c if c.is_whitespace() => {
                    chars.next();
                }
                '"' => {
                    chars.next();
                    let mut s = String::from('"');
                    for c in chars.by_ref() {
                        s.push(c);
                        if c == '"' {
                            break;
                        }
                    }
                    stack.last_mut().unwrap().push(Sexp::Atom(s));
                }
                '|' => {
                    chars.next();
                    let mut s = String::new();
                    for c in chars.by_ref() {
                        if c == '|' {
                            break;
                        }
                        s.push(c);
                    }
                    stack.last_mut().unwrap().push(Sexp::Atom(s));
                }
                _ => {
                    let mut s = String::new();
                    while let Some(&c) = chars.peek() {
                        if c.is_whitespace() || c == '(' || c == ')' {
                            break;
                        }
                        s.push(c);
                        chars.next();
                    }
                    stack.last_mut().unwrap().push(Sexp::Atom(s));
                }
            }
        }
        if stack.len() != 1 {
            return Err("unbalanced `(`".into());
        }
        Ok(stack.pop().unwrap())
    }
}

fn parse_int_value(s: &Sexp) -> Option<BigInt> {
    match s {
        Sexp::Atom(a) => a.parse().ok(),
        Sexp::List(items) => match items.as_slice() {
            [Sexp::Atom(op), inner] if op == "-" => parse_int_value(inner).map(|v| -v),
            _ => None,
        },
    }
}

/// Parses a `(get-model)` response. Declared constants the solver left out
/// are unconstrained and default to `0`/`false`.
fn parse_model(text: &str, decls: &[(String, Sort)]) -> Result<Model, SmtError> {
    let exprs = Sexp::parse_all(text).map_err(SmtError::Backend)?;
    let mut model = Model::new();
    let body = exprs
        .into_iter()
        .find_map(|e| match e {
            Sexp::List(items) => Some(items),
            Sexp::Atom(_) => None,
        })
        .ok_or_else(|| SmtError::Backend("missing model".into()))?;
    for item in body {
        let Sexp::List(parts) = item else { continue };
        // (define-fun name () Sort value)
        if let [Sexp::Atom(kw), Sexp::Atom(name), Sexp::List(args), Sexp::Atom(sort), value] =
            parts.as_slice()
        {
            if kw != "define-fun" || !args.is_empty() {
                continue;
            }
            let v = match sort.as_str() {
                "Int" => Value::Int(parse_int_value(value).ok_or_else(|| {
                    SmtError::Backend(format!("cannot parse integer value for {name}"))
                })?),
                "Bool" => match value {
                    Sexp::Atom(a) if a == "true" => Value::Bool(true),
                    Sexp::Atom(a) if a == "false" => Value::Bool(false),
                    _ => return Err(SmtError::Backend(format!("bad boolean value for {name}"))),
                },
                _ => continue,
            };
            model.insert(name.clone(), v);
        }
    }
    for (name, sort) in decls {
        let present = match sort {
            Sort::Int => model.int(name).is_some(),
            Sort::Bool => model.bool(name).is_some(),
        };
        if !present {
            let v = match sort {
                Sort::Int => Value::Int(BigInt::from(0)),
                Sort::Bool => Value::Bool(false),
            };
            model.insert(name.clone(), v);
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_z3_style_model() {
        let text = "(\n  (define-fun y () Int\n    (- 5))\n  (define-fun x () Int\n    3)\n  (define-fun b () Bool true)\n)\n";
        let decls = vec![
            ("x".to_string(), Sort::Int),
            ("y".to_string(), Sort::Int),
            ("z".to_string(), Sort::Int),
            ("b".to_string(), Sort::Bool),
        ];
        let m = parse_model(text, &decls).unwrap();
        assert_eq!(m.int("x"), Some(&BigInt::from(3)));
        assert_eq!(m.int("y"), Some(&BigInt::from(-5)));
        assert_eq!(m.int("z"), Some(&BigInt::from(0)));
        assert_eq!(m.bool("b"), Some(true));
    }

    #[test]
    fn parses_model_keyword_form() {
        let text = "(model (define-fun a () Int 7))";
        let m = parse_model(text, &[("a".to_string(), Sort::Int)]).unwrap();
        assert_eq!(m.int("a"), Some(&BigInt::from(7)));
    }

    #[test]
    fn missing_solver_is_backend_error() {
        let s = Solver::new("definitely-not-a-solver-binary", Duration::from_secs(1));
        let err = s.check(&SmtFormula::new()).unwrap_err();
        assert!(matches!(err, SmtError::Spawn { .. }));
    }
}
