//! `multirole`: batch front end for the proof kernel, the session runtime
//! and the lambda calculus.
//!
//! Exit codes: 0 success, 1 bad input or a negative verdict, 2 deadlock,
//! 3 fault (including a run that hit the step limit).

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use multirole::kernel::{Calculus, Derivation, Kernel, SearchOutcome};
use multirole::logic::{Formula, IFormula};
use multirole::mtlc::{eval_pool, parse_program, typecheck, MtlcError};
use multirole::roles::{RoleSet, Ultrafilter, Universe};
use multirole::runtime::script::parse_script;
use multirole::runtime::{head, normalize, Config, Outcome, Pool, RunReport, TieBreak};
use multirole::session::{coherence_check, next_action, parse_protocol, EndpointType, Protocol, SessionType};
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Parser)]
#[command(name = "multirole", version, about = "Multirole logic proofs, session runs and typed channel programs")]
struct Cli {
    /// Universe size for proofs, and for terms without a `; roles:` header
    #[arg(long, global = true)]
    roles: Option<usize>,

    /// Proof search depth
    #[arg(long, global = true, default_value_t = 6)]
    depth: usize,

    /// How often `repseq` is unrolled when a session is encoded as a formula
    #[arg(long, global = true, default_value_t = 1)]
    unroll: usize,

    /// Seed for scheduling choices and `randbit`; without it the lowest ready thread runs first
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Allow the deadlock-prone two-channel creation primitive
    #[arg(long, global = true)]
    allow_demo: bool,

    /// Human-readable output instead of JSON
    #[arg(long, global = true)]
    pretty: bool,

    /// Typecheck the whole pool again after every evaluation step
    #[arg(long, global = true)]
    retype_every_step: bool,

    /// mrl, lmrl, or mrlj:J for the intuitionistic variant over ultrafilter J
    #[arg(long, global = true, default_value = "lmrl")]
    calculus: String,

    /// Evaluation step bound
    #[arg(long, global = true, default_value_t = 100_000)]
    max_steps: usize,

    /// Write the resulting derivation here instead of standard output
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Derivations: checking, cut elimination and search
    #[command(subcommand)]
    Prove(Prove),
    /// Protocols: validation and simulation of party scripts
    #[command(subcommand)]
    Session(Session),
    /// Channel programs: typechecking and evaluation
    #[command(subcommand)]
    Mtlc(Mtlc),
}

#[derive(Subcommand)]
enum Prove {
    /// Check a derivation
    Check { file: PathBuf },
    /// Cut one derivation on an empty-role formula, or two on complementary ones
    Cut {
        #[arg(required = true, num_args = 1..=2)]
        files: Vec<PathBuf>,
        /// The cut formula
        #[arg(long)]
        on: String,
        /// Role set of the cut formula in each derivation
        #[arg(long, num_args = 1..)]
        at: Vec<String>,
    },
    /// Multiparty cut over derivations whose cut role sets have a partition as complements
    Mpcut {
        #[arg(required = true, num_args = 1..)]
        files: Vec<PathBuf>,
        #[arg(long)]
        on: String,
        #[arg(long, num_args = 1..)]
        at: Vec<String>,
    },
    /// Bounded search for a cut-free derivation of a sequent
    Search {
        /// JSON list of `{"roles": [0], "formula": "a"}` items
        #[arg(long)]
        sequent: PathBuf,
    },
}

#[derive(Subcommand)]
enum Session {
    /// Validate the sessions of a protocol file, and the party roles of a script
    Check {
        protocol: PathBuf,
        #[arg(long)]
        script: Option<PathBuf>,
        /// Session the script's parties play
        #[arg(long)]
        session: Option<String>,
    },
    /// Run a script and print its trace as JSON lines
    Simulate {
        protocol: PathBuf,
        script: PathBuf,
        #[arg(long)]
        session: Option<String>,
    },
}

#[derive(Subcommand)]
enum Mtlc {
    /// Print the type of a program
    Check { file: PathBuf },
    /// Evaluate a program as a thread pool
    Run { file: PathBuf },
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {msg}", path.display())]
    Input { path: PathBuf, msg: String },
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Rejected(String),
}

type Result<T> = std::result::Result<T, CliError>;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn input(path: &Path, e: impl ToString) -> CliError {
    CliError::Input { path: path.to_path_buf(), msg: e.to_string() }
}

fn json_file<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read(path)?).map_err(|e| input(path, e))
}

impl Cli {
    fn universe(&self) -> Result<Universe> {
        Universe::new(self.roles.unwrap_or(2)).map_err(|e| CliError::Usage(e.to_string()))
    }

    fn calculus(&self) -> Result<Calculus> {
        match self.calculus.as_str() {
            "mrl" => Ok(Calculus::Mrl),
            "lmrl" => Ok(Calculus::Lmrl),
            other => other
                .strip_prefix("mrlj:")
                .and_then(|j| j.parse().ok())
                .map(|j| Calculus::Mrlj(Ultrafilter(j)))
                .ok_or_else(|| CliError::Usage(format!("unknown calculus {other:?}"))),
        }
    }

    fn config(&self) -> Config {
        let tie = self.seed.map_or(TieBreak::Lowest, TieBreak::Seeded);
        Config { tie, max_steps: self.max_steps, allow_demo: self.allow_demo, seed: self.seed.unwrap_or(0) }
    }

    fn emit(&self, v: &Value, text: impl FnOnce() -> String) {
        if self.pretty {
            println!("{}", text());
        } else {
            println!("{v}");
        }
    }
}

fn tree(d: &Derivation, depth: usize, out: &mut String) {
    out.push_str(&format!("{}{:?}  {}\n", "  ".repeat(depth), d.rule, d.sequent()));
    for p in &d.premises {
        tree(p, depth + 1, out);
    }
}

fn write_derivation(cli: &Cli, d: &Derivation) -> Result<()> {
    let text = if cli.pretty {
        let mut s = String::new();
        tree(d, 0, &mut s);
        s
    } else {
        serde_json::to_string(d).expect("derivations serialize") + "\n"
    };
    match &cli.output {
        Some(path) => fs::write(path, text).map_err(|source| CliError::Io { path: path.clone(), source }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn roleset(s: &str) -> Result<RoleSet> {
    s.parse().map_err(|e: multirole::roles::RoleError| CliError::Usage(e.to_string()))
}

/// Index of `on` in the conclusion of `d`, at `at` when given.
fn locate(path: &Path, d: &Derivation, on: &Formula, at: Option<RoleSet>) -> Result<usize> {
    d.conclusion
        .iter()
        .position(|i| i.formula.alpha_eq(on) && at.is_none_or(|r| i.roles == r))
        .ok_or_else(|| input(path, format!("no {}{on} in the conclusion", at.map(|r| r.to_string()).unwrap_or_default())))
}

fn premises(files: &[PathBuf], on: &str, at: &[String]) -> Result<Vec<(Derivation, usize)>> {
    let on: Formula = on.parse().map_err(|e: multirole::logic::SyntaxError| CliError::Usage(e.to_string()))?;
    if !at.is_empty() && at.len() != files.len() {
        return Err(CliError::Usage(format!("{} role sets for {} derivations", at.len(), files.len())));
    }
    files
        .iter()
        .enumerate()
        .map(|(k, path)| {
            let d: Derivation = json_file(path)?;
            let r = at.get(k).map(|s| roleset(s)).transpose()?;
            let i = locate(path, &d, &on, r)?;
            Ok((d, i))
        })
        .collect()
}

fn prove(cli: &Cli, cmd: &Prove) -> Result<u8> {
    let kernel = Kernel::new(cli.universe()?, cli.calculus()?);
    let rejected = |e: &dyn std::fmt::Display| CliError::Rejected(e.to_string());
    match cmd {
        Prove::Check { file } => {
            let d: Derivation = json_file(file)?;
            kernel.check(&d).map_err(|e| rejected(&e))?;
            cli.emit(&json!({ "ok": true, "conclusion": d.sequent().to_string() }), || format!("ok: {}", d.sequent()));
            Ok(0)
        }
        Prove::Cut { files, on, at } => {
            let p = premises(files, on, at)?;
            let out = match p.as_slice() {
                [(d, i)] => kernel.cut1(d, *i),
                [(d1, i1), (d2, i2)] => kernel.cut2_residual(d1, *i1, d2, *i2),
                _ => unreachable!("clap bounds the file count"),
            };
            write_derivation(cli, &out.map_err(|e| rejected(&e))?)?;
            Ok(0)
        }
        Prove::Mpcut { files, on, at } => {
            let out = kernel.mp_cut(&premises(files, on, at)?).map_err(|e| rejected(&e))?;
            write_derivation(cli, &out)?;
            Ok(0)
        }
        Prove::Search { sequent } => {
            let items: Vec<IFormula> = json_file(sequent)?;
            match kernel.search(&items, cli.depth) {
                SearchOutcome::Found(d) => {
                    write_derivation(cli, &d)?;
                    Ok(0)
                }
                _ => Err(CliError::Rejected(format!("no derivation within depth {}", cli.depth))),
            }
        }
    }
}

fn pick<'p>(protocol: &'p Protocol, name: Option<&str>, path: &Path) -> Result<&'p SessionType> {
    match name {
        Some(n) => protocol.get(n).map_err(|e| input(path, e)),
        None if protocol.sessions.len() == 1 => Ok(protocol.sessions.values().next().expect("one session")),
        None => Err(input(path, "several sessions; choose one with --session")),
    }
}

fn exit_code(outcome: &Outcome) -> u8 {
    match outcome {
        Outcome::Completed => 0,
        Outcome::Deadlock { .. } => 2,
        Outcome::Fault { .. } | Outcome::StepLimit => 3,
    }
}

fn print_trace(cli: &Cli, report: &RunReport, summary: Value) {
    let mut out = io::stdout().lock();
    for e in &report.trace {
        let line = if cli.pretty {
            let label = e.label.as_deref().unwrap_or("");
            let route = match (e.from, e.to) {
                (Some(f), Some(t)) => format!(" {f}->{t}"),
                (Some(f), None) => format!(" {f}->*"),
                _ => String::new(),
            };
            let payload = match &e.payload {
                None | Some(multirole::runtime::Value::Unit) => String::new(),
                Some(p) => format!(" {}", serde_json::to_string(p).expect("values serialize")),
            };
            format!("{:>4} {:?} {} {label}{route}{payload}", e.step, e.rule, e.action)
        } else {
            serde_json::to_string(e).expect("events serialize")
        };
        let _ = writeln!(out, "{line}");
    }
    let _ = writeln!(out, "{summary}");
}

fn session(cli: &Cli, cmd: &Session) -> Result<u8> {
    match cmd {
        Session::Check { protocol, script, session } => {
            let proto = parse_protocol(&read(protocol)?).map_err(|e| input(protocol, e))?;
            let n = proto.universe.size();
            let mut report = Vec::new();
            for (name, s) in &proto.sessions {
                s.validate(n).map_err(|e| input(protocol, format!("session {name}: {e}")))?;
                let encoding = s.encode_lmrl(cli.unroll);
                let actions: Vec<Value> = (0..n).map(|r| json!({ "role": r, "action": next_action(head(&normalize(s)), RoleSet::singleton(r)) })).collect();
                report.push(json!({ "session": name, "protocol": s.to_string(), "formula": encoding.formula.to_string(), "first": actions }));
            }
            let mut parties = Value::Null;
            if let Some(path) = script {
                let parsed = parse_script(&read(path)?, Some(&proto)).map_err(|e| input(path, e))?;
                if !parsed.parties.is_empty() {
                    let s = pick(&proto, session.as_deref(), protocol)?;
                    let eps: Vec<EndpointType> = parsed.parties.iter().map(|(r, _)| EndpointType { roles: *r, session: s.clone() }).collect();
                    coherence_check(&proto.universe, &eps).map_err(|e| input(path, e))?;
                    parties = json!(eps.iter().map(|e| e.roles.to_string()).collect::<Vec<_>>());
                }
            }
            let v = json!({ "roles": n, "sessions": report, "parties": parties });
            cli.emit(&v, || {
                let mut lines: Vec<String> = proto.sessions.iter().map(|(name, s)| format!("{name}: {s}")).collect();
                lines.push("coherent".into());
                lines.join("\n")
            });
            Ok(0)
        }
        Session::Simulate { protocol, script, session } => {
            let proto = parse_protocol(&read(protocol)?).map_err(|e| input(protocol, e))?;
            let parsed = parse_script(&read(script)?, Some(&proto)).map_err(|e| input(script, e))?;
            let s = if parsed.main.is_some() { None } else { Some(pick(&proto, session.as_deref(), protocol)?) };
            let pool = Pool::from_script(proto.universe, &parsed, s, cli.config()).map_err(|e| input(script, e))?;
            let report = pool.run();
            let code = exit_code(&report.outcome);
            print_trace(cli, &report, json!({ "result": report.outcome, "steps": report.steps }));
            Ok(code)
        }
    }
}

/// The `; roles: N` header of a term file.
fn header_roles(src: &str) -> Option<usize> {
    src.lines().find_map(|l| l.strip_prefix("; roles:")).and_then(|n| n.trim().parse().ok())
}

fn mtlc(cli: &Cli, cmd: &Mtlc) -> Result<u8> {
    let file = match cmd {
        Mtlc::Check { file } | Mtlc::Run { file } => file,
    };
    let src = read(file)?;
    let n = cli.roles.or_else(|| header_roles(&src)).unwrap_or(2);
    let universe = Universe::new(n).map_err(|e| CliError::Usage(e.to_string()))?;
    let program = parse_program(&src).map_err(|e| input(file, e))?;
    match cmd {
        Mtlc::Check { .. } => {
            let t = typecheck(&universe, &program.resources, &program.main).map_err(|e| CliError::Rejected(e.to_string()))?;
            cli.emit(&json!({ "type": t.to_string() }), || t.to_string());
            Ok(0)
        }
        Mtlc::Run { .. } => {
            if !program.resources.is_empty() {
                return Err(input(file, "a program to run cannot declare resources"));
            }
            let report = match eval_pool(&universe, &program.main, cli.config(), cli.retype_every_step) {
                Ok(r) => r,
                Err(MtlcError::Type(e)) => return Err(CliError::Rejected(e.to_string())),
                Err(e) => {
                    eprintln!("{e}");
                    return Ok(3);
                }
            };
            let code = if report.stuck.is_some() { 3 } else { exit_code(&report.run.outcome) };
            let summary = json!({
                "result": report.run.outcome,
                "steps": report.run.steps,
                "type": report.ty.to_string(),
                "value": report.value.as_ref().map(|v| v.to_string()),
                "retyped": report.retyped,
                "stuck": report.stuck,
            });
            print_trace(cli, &report.run, summary);
            Ok(code)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(u8::from(e.use_stderr()));
        }
    };
    let result = match &cli.command {
        Command::Prove(cmd) => prove(&cli, cmd),
        Command::Session(cmd) => session(&cli, cmd),
        Command::Mtlc(cmd) => mtlc(&cli, cmd),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
