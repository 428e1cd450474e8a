use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pilnet::bridge::{sequentialize, sequentialize_greedy, translate_to_conflict_net, translate_to_slice_net};
use pilnet::calculus::{check_derivation, prove_search, CalculusError, Derivation, Search};
use pilnet::coalescence::{check_exhaustive, check_greedy, Exhaustive, Trace, Verdict};
use pilnet::dot::{derivation_to_dot, net_to_dot, trace_to_dot};
use pilnet::equivalence::{canonicity_suite, permute, PermClass, Permutation};
use pilnet::flattening::normalize;
use pilnet::structure::{isomorphic, validate_structure, PreStructure};
use pilnet::syntax::Context;

#[derive(Parser)]
#[command(name = "pilnet", version, about = "Proof nets for first-order MALL with sequential and nominal connectives")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a derivation file.
    CheckDerivation { file: PathBuf },
    /// Search for a derivation of a judgement such as `|- a!b, a?b`.
    Prove {
        judgement: String,
        #[arg(long, default_value_t = 1_000_000)]
        budget: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Translate a derivation into its conflict net, or slice net with --slice.
    Translate {
        derivation: PathBuf,
        #[arg(long)]
        slice: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run coalescence on a net; prints the trace when accepted.
    CheckNet {
        net: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        exhaustive: bool,
        #[arg(long, default_value_t = 1_000_000)]
        budget: u64,
        /// Write the trace here instead of standard output.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Build a derivation from a net, replaying --trace or a greedy run.
    Sequentialize {
        net: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Flatten a net to its slice normal form.
    Flatten {
        net: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Decide whether two nets are isomorphic.
    Iso { first: PathBuf, second: PathBuf },
    /// Apply one rule permutation to a derivation.
    Permute {
        derivation: PathBuf,
        /// Path of the lower rule, e.g. `root/0/1` or `0/1`; empty for the root.
        #[arg(long, default_value = "")]
        at: String,
        #[arg(long)]
        class: String,
        #[arg(long, default_value_t = 0)]
        child: usize,
        #[arg(long)]
        branch: Option<usize>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Random permutation trials over a directory of derivations.
    Canonicity {
        corpus: PathBuf,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the full JSON report here instead of standard output.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Graphviz export of a net, a derivation, or a trace (given with --net).
    Dot {
        input: PathBuf,
        /// The net a trace file runs on.
        #[arg(long)]
        net: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
}

/// An outcome with its exit code: 1 rejected, 2 malformed input, 3 budget exceeded.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn rejected(m: impl Into<String>) -> Failure {
    Failure { code: 1, message: m.into() }
}

fn malformed(m: impl Into<String>) -> Failure {
    Failure { code: 2, message: m.into() }
}

fn budget() -> Failure {
    Failure { code: 3, message: "budget exceeded".into() }
}

type Outcome = Result<(), Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| malformed(format!("{}: {e}", path.display())))
}

fn load_net(path: &Path) -> Result<PreStructure, Failure> {
    PreStructure::from_json_str(&read(path)?).map_err(|e| malformed(format!("{}: {e}", path.display())))
}

fn load_derivation(path: &Path) -> Result<Derivation, Failure> {
    Derivation::from_json_str(&read(path)?).map_err(|e| match e {
        CalculusError::Malformed(m) => malformed(format!("{}: {m}", path.display())),
        CalculusError::Violation(v) => rejected(format!("{}: {v}", path.display())),
    })
}

/// Writes through a temporary file in the target directory, then renames it into place.
fn write_atomic(path: &Path, text: &str) -> anyhow::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(text.as_bytes())?;
    tmp.persist(path)?;
    Ok(())
}

fn emit(output: Option<&Path>, text: &str) -> Outcome {
    match output {
        Some(p) => write_atomic(p, text).map_err(|e| malformed(format!("{}: {e}", p.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn parse_path(s: &str) -> Result<Vec<usize>, Failure> {
    let s = s.trim();
    let s = s.strip_prefix("root").unwrap_or(s).trim_start_matches('/');
    if s.is_empty() {
        return Ok(vec![]);
    }
    s.split(['/', '.']).map(|p| p.parse().map_err(|_| malformed(format!("bad derivation path `{s}`")))).collect()
}

fn run(cmd: Command) -> Outcome {
    match cmd {
        Command::CheckDerivation { file } => {
            let d = load_derivation(&file)?;
            check_derivation(&d).map_err(|v| rejected(format!("{}: {v}", file.display())))?;
            println!("valid: {} rules, height {}", d.root.size(), d.root.height());
            Ok(())
        }
        Command::Prove { judgement, budget: b, output } => {
            let ctx = Context::parse(&judgement).map_err(|e| malformed(e.to_string()))?;
            match prove_search(&std::sync::Arc::new(ctx), b) {
                Search::Proved(d) => emit(output.as_deref(), &d.to_json_string()),
                Search::Unprovable => Err(rejected("unprovable")),
                Search::BudgetExceeded => Err(budget()),
            }
        }
        Command::Translate { derivation, slice, output } => {
            let d = load_derivation(&derivation)?;
            let net = if slice { translate_to_slice_net(&d) } else { translate_to_conflict_net(&d) };
            let net = net.map_err(|e| rejected(e.to_string()))?;
            emit(output.as_deref(), &net.to_json_string())
        }
        Command::CheckNet { net, seed, exhaustive, budget: b, trace } => {
            let p = load_net(&net)?;
            validate_structure(&p).map_err(|e| rejected(format!("{}: not a proof structure: {e}", net.display())))?;
            let t = if exhaustive {
                match check_exhaustive(&p, b) {
                    Exhaustive::Accepted(t) => t,
                    Exhaustive::Rejected => return Err(rejected("rejected: no coalescence order reaches a trivial structure")),
                    Exhaustive::BudgetExceeded => return Err(budget()),
                }
            } else {
                match check_greedy(&p, seed) {
                    Verdict::Accepted(t) => t,
                    Verdict::Stuck(s, t) => {
                        return Err(rejected(format!("stuck after {} steps:\n{s}", t.len())));
                    }
                }
            };
            eprintln!("accepted in {} steps", t.len());
            emit(trace.as_deref(), &t.to_json_string(&p.context))
        }
        Command::Sequentialize { net, seed, trace, output } => {
            let p = load_net(&net)?;
            validate_structure(&p).map_err(|e| rejected(format!("{}: not a proof structure: {e}", net.display())))?;
            let d = match trace {
                Some(tp) => {
                    let t = Trace::from_json_str(&p.context, &read(&tp)?)
                        .map_err(|e| malformed(format!("{}: {e}", tp.display())))?;
                    sequentialize(&p, &t)
                }
                None => sequentialize_greedy(&p, seed),
            };
            let d = d.map_err(|e| rejected(e.to_string()))?;
            emit(output.as_deref(), &d.to_json_string())
        }
        Command::Flatten { net, seed, output } => {
            let p = load_net(&net)?;
            emit(output.as_deref(), &normalize(&p, seed).to_json_string())
        }
        Command::Iso { first, second } => {
            let (a, b) = (load_net(&first)?, load_net(&second)?);
            match isomorphic(&a, &b) {
                Ok(true) => {
                    println!("isomorphic");
                    Ok(())
                }
                Ok(false) => Err(rejected("not isomorphic")),
                Err(e) => Err(rejected(format!("not isomorphic: {e}"))),
            }
        }
        Command::Permute { derivation, at, class, child, branch, output } => {
            let d = load_derivation(&derivation)?;
            let class = PermClass::from_name(&class).ok_or_else(|| malformed(format!("unknown class `{class}`")))?;
            let p = Permutation { class, at: parse_path(&at)?, child, branch };
            let e = permute(&d, &p).map_err(|e| rejected(e.to_string()))?;
            emit(output.as_deref(), &e.to_json_string())
        }
        Command::Canonicity { corpus, trials, seed, report } => {
            let mut files: Vec<PathBuf> = fs::read_dir(&corpus)
                .map_err(|e| malformed(format!("{}: {e}", corpus.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            files.sort();
            let ds = files.iter().map(|f| load_derivation(f)).collect::<Result<Vec<_>, _>>()?;
            let r = canonicity_suite(&ds, trials, seed);
            for (name, s) in [("local", &r.local), ("strong", &r.strong)] {
                eprintln!(
                    "{name}: {} trials, {} preserved, {} up to witnesses, {} mismatches, {} stuck",
                    s.trials, s.preserved, s.preserved_up_to_witnesses, s.mismatches, s.stuck
                );
            }
            let text = serde_json::to_string_pretty(&r).expect("report serializes");
            emit(report.as_deref(), &text)?;
            if r.local.mismatches + r.strong.mismatches > 0 {
                return Err(rejected(format!("{} counterexamples", r.counterexamples.len())));
            }
            Ok(())
        }
        Command::Dot { input, net, output } => {
            let text = read(&input)?;
            let value: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| malformed(format!("{}: {e}", input.display())))?;
            let dot = if value.is_array() {
                let np = net.ok_or_else(|| malformed("a trace needs --net"))?;
                let p = load_net(&np)?;
                let t = Trace::from_json_str(&p.context, &text).map_err(|e| malformed(e.to_string()))?;
                trace_to_dot(&p, &t).map_err(|e| rejected(e.to_string()))?
            } else if value.get("rule").is_some() {
                derivation_to_dot(&load_derivation(&input)?)
            } else {
                net_to_dot(&load_net(&input)?)
            };
            emit(Some(&output), &dot)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.code)
        }
    }
}
