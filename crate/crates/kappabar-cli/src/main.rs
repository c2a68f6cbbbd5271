//! Command line front end: canonicalization, equality decision, derivation
//! traces, language synthesis, semigroup evaluation and separator search.

use std::fs;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use kappabar::canon::{canonicalize, is_canonical, is_circular_canonical, is_semi_canonical};
use kappabar::lang::{build_lang, compute_scheme, to_nfa, Scheme};
use kappabar::rewrite::verify_derivation;
use kappabar::semigroup::{find_separator, load_semigroup, Assignment, Separation, SeparatorBudget};
use kappabar::term::{parse_term, Letter, Mode, Term};

#[derive(Parser)]
#[command(name = "kappabar", about = "Canonical forms for kappa-bar terms", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Term,
    Paren,
    Json,
}

#[derive(Args)]
struct CommonOpts {
    /// Interpretation mode: S (all finite semigroups) or A (aperiodic)
    #[arg(long, default_value = "S")]
    mode: Mode,
    /// Write the derivation trace to this file
    #[arg(long)]
    trace: Option<String>,
    /// Output format
    #[arg(long, value_enum, default_value = "term")]
    format: OutputFormat,
}

#[derive(Subcommand)]
enum Command {
    /// Print the canonical form of a term
    Canon {
        #[command(flatten)]
        opts: CommonOpts,
        term: String,
    },
    /// Decide whether two terms are equal (exit 0: EQUAL, 1: DISTINCT)
    Eq {
        #[command(flatten)]
        opts: CommonOpts,
        lhs: String,
        rhs: String,
    },
    /// Emit and verify the derivation trace of a canonicalization
    Derive {
        #[command(flatten)]
        opts: CommonOpts,
        term: String,
    },
    /// Print the regular expression for L_{n,p}(term)
    Lang {
        /// Override n (must come with --p)
        #[arg(long)]
        n: Option<usize>,
        /// Override p
        #[arg(long)]
        p: Option<usize>,
        /// Also dump the NFA
        #[arg(long)]
        dump_nfa: bool,
        term: String,
    },
    /// Evaluate a term in a semigroup file under an assignment (a=0 b=1 ...)
    Eval {
        term: String,
        semigroup: String,
        assignment: Vec<String>,
    },
    /// Search for a finite semigroup separating two terms
    Separate {
        lhs: String,
        rhs: String,
        /// Exhaustive enumeration bound (at most 3)
        #[arg(long, default_value_t = 3)]
        max_order: usize,
    },
    /// Report the canonicity predicates of a term
    Check {
        #[command(flatten)]
        opts: CommonOpts,
        term: String,
    },
}

fn parse(term: &str) -> Result<Term> {
    parse_term(term).map_err(|e| anyhow!("cannot parse {term:?}: {e}"))
}

fn render(t: &Term, format: OutputFormat) -> String {
    match format {
        OutputFormat::Term | OutputFormat::Json => t.to_string(),
        OutputFormat::Paren => t.to_paren_word().to_string(),
    }
}

fn run() -> Result<i32> {
    let cli = Cli::parse();
    match cli.command {
        Command::Canon { opts, term } => {
            let input = parse(&term)?;
            let report = canonicalize(&input, opts.mode, opts.trace.is_some())?;
            if let (Some(path), Some(trace)) = (&opts.trace, &report.trace) {
                verify_derivation(trace).map_err(|e| anyhow!("emitted trace is invalid: {e}"))?;
                fs::write(path, format!("{trace}\n")).context("writing trace")?;
            }
            match opts.format {
                OutputFormat::Json => {
                    let payload = serde_json::json!({
                        "input": report.input.to_string(),
                        "canonical": report.output.to_string(),
                        "mode": report.mode.to_string(),
                        "trace": report.trace.as_ref().map(|t| t.to_string()),
                    });
                    println!("{payload}");
                }
                f => println!("{}", render(&report.output, f)),
            }
            Ok(0)
        }
        Command::Eq { opts, lhs, rhs } => {
            let (a, b) = (parse(&lhs)?, parse(&rhs)?);
            let ca = canonicalize(&a, opts.mode, false)?.output;
            let cb = canonicalize(&b, opts.mode, false)?.output;
            let equal = ca == cb;
            match opts.format {
                OutputFormat::Json => {
                    let payload = serde_json::json!({
                        "verdict": if equal { "EQUAL" } else { "DISTINCT" },
                        "lhs_canonical": ca.to_string(),
                        "rhs_canonical": cb.to_string(),
                        "mode": opts.mode.to_string(),
                    });
                    println!("{payload}");
                }
                f => {
                    println!("{}", if equal { "EQUAL" } else { "DISTINCT" });
                    println!("{}", render(&ca, f));
                    println!("{}", render(&cb, f));
                }
            }
            Ok(if equal { 0 } else { 1 })
        }
        Command::Derive { opts, term } => {
            let input = parse(&term)?;
            let report = canonicalize(&input, opts.mode, true)?;
            let trace = report.trace.as_ref().expect("trace requested");
            verify_derivation(trace).map_err(|e| anyhow!("emitted trace is invalid: {e}"))?;
            match &opts.trace {
                Some(path) => {
                    fs::write(path, format!("{trace}\n")).context("writing trace")?;
                    println!(
                        "canonical: {}\nsteps: {} (verified, written to {path})",
                        report.output,
                        trace.steps.len()
                    );
                }
                None => {
                    println!("{trace}");
                    eprintln!("steps: {} (verified)", trace.steps.len());
                }
            }
            Ok(0)
        }
        Command::Lang { n, p, dump_nfa, term } => {
            let input = parse(&term)?;
            let scheme = match (n, p) {
                (Some(n), Some(p)) => {
                    let s = Scheme::new(n, p)?;
                    if (s.n as u64) <= input.scale() {
                        bail!(
                            "scheme override rejected: n = {n} must exceed the scale {}",
                            input.scale()
                        );
                    }
                    s
                }
                (None, None) => compute_scheme(std::slice::from_ref(&input), false),
                _ => bail!("--n and --p must be given together"),
            };
            let spec = build_lang(&input, scheme)?;
            println!("{spec}");
            if dump_nfa {
                let nfa = to_nfa(&spec);
                eprintln!("scheme: n = {}, p = {}", scheme.n, scheme.p);
                eprintln!("states: {}", nfa.state_count());
                for (s, row) in nfa.transitions.iter().enumerate() {
                    for (c, t) in row {
                        eprintln!("{s} -{c}-> {t}");
                    }
                }
                eprintln!("initial: {:?}", nfa.initials);
                let finals: Vec<usize> = nfa
                    .accepting
                    .iter()
                    .enumerate()
                    .filter_map(|(i, &a)| a.then_some(i))
                    .collect();
                eprintln!("accepting: {finals:?}");
            }
            Ok(0)
        }
        Command::Eval {
            term,
            semigroup,
            assignment,
        } => {
            let input = parse(&term)?;
            let text = fs::read_to_string(&semigroup)
                .with_context(|| format!("reading semigroup file {semigroup}"))?;
            let sg = load_semigroup(&text)?;
            let mut asg = Assignment::new();
            for pair in &assignment {
                let (k, v) = pair
                    .split_once('=')
                    .ok_or_else(|| anyhow!("assignments look like a=0, got {pair:?}"))?;
                let letter = Letter::new(
                    k.chars()
                        .next()
                        .filter(|_| k.len() == 1)
                        .ok_or_else(|| anyhow!("bad letter {k:?}"))?,
                )?;
                let value: usize = match v.parse() {
                    Ok(idx) => idx,
                    Err(_) => sg
                        .names
                        .as_ref()
                        .and_then(|names| names.iter().position(|n| n == v))
                        .ok_or_else(|| anyhow!("unknown element {v:?}"))?,
                };
                if value >= sg.order {
                    bail!("element {value} out of range for order {}", sg.order);
                }
                asg.insert(letter, value);
            }
            let result = sg.eval(&input, &asg)?;
            match sg.names.as_ref().and_then(|n| n.get(result)) {
                Some(name) => println!("{result} ({name})"),
                None => println!("{result}"),
            }
            Ok(0)
        }
        Command::Separate { lhs, rhs, max_order } => {
            let (a, b) = (parse(&lhs)?, parse(&rhs)?);
            let budget = SeparatorBudget {
                max_enumerated_order: max_order,
                include_curated: true,
                max_checks: None,
            };
            match find_separator(&a, &b, &budget) {
                Separation::Separated {
                    semigroup,
                    assignment,
                    lhs,
                    rhs,
                } => {
                    println!("SEPARATED");
                    if let Some(label) = &semigroup.label {
                        println!("semigroup: {label}");
                    }
                    println!("order: {}", semigroup.order);
                    println!("table: {:?}", semigroup.table);
                    let pairs: Vec<String> = assignment
                        .iter()
                        .map(|(l, v)| format!("{l}={v}"))
                        .collect();
                    println!("assignment: {}", pairs.join(" "));
                    println!("values: {lhs} vs {rhs}");
                    Ok(0)
                }
                Separation::Inconclusive { examined } => {
                    println!("INCONCLUSIVE after {examined} checks");
                    Ok(1)
                }
            }
        }
        Command::Check { opts, term } => {
            let input = parse(&term)?;
            let input = match opts.mode {
                Mode::S => input,
                Mode::A => input.zero_offsets(),
            };
            println!("canonical: {}", is_canonical(&input, opts.mode));
            println!("semi-canonical: {}", is_semi_canonical(&input));
            println!("circular-canonical: {}", is_circular_canonical(&input));
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
