//! Command-line front end: inference, checking, free-variable analysis,
//! tree and flat dumps, mode analysis and differential fuzzing.

use std::fmt::Write as _;
use std::io::Write;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Value};

use telescope::constraints::{Context, MonoType};
use telescope::flatrules::{generate_flat, render_flat};
use telescope::modes::{
    assign_modes, classify_table_modes, firing_order, rules_for, ConstraintModeTable,
    JudgmentMode,
};
use telescope::oracle::corpus::{dump, generate, CorpusConfig};
use telescope::oracle::differential::{compare, DiffReport};
use telescope::solver::{
    check_tree, classify, free_vars, solve_tree_with, FreeVars, Outcome, SolveOptions,
    Verdict,
};
use telescope::syntax::{parse_context, parse_mono, parse_term, Term};
use telescope::treegen::{build_tree, lift_quantifiers, render_dot, render_text, to_json};
use telescope::{Start, System};

const USAGE_EXIT: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "telescope", version, about = "Constraint-based typechecking with telescopic constraint trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the principal type of a term
    Infer {
        term: String,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        solve: SolveArgs,
    },
    /// Check a term against a type
    Check {
        term: String,
        #[arg(long = "type", value_name = "TYPE")]
        ty: String,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        solve: SolveArgs,
    },
    /// Bindings a term needs from its context
    Fv {
        term: String,
        #[arg(long, value_enum, default_value_t = SystemArg::Stlc)]
        system: SystemArg,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Print the constraint tree of a term
    Tree {
        term: String,
        #[command(flatten)]
        common: Common,
        /// Move every quantifier to the front of the root telescope
        #[arg(long)]
        lift: bool,
    },
    /// Print the flat constraint set with its rule trace
    Flat {
        term: String,
        #[arg(long, value_enum, default_value_t = SystemArg::Stlc)]
        system: SystemArg,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Mode analysis of the typing rules
    Modes {
        /// Polarities of context, term and type, e.g. "+ + -"
        #[arg(long, value_name = "PATTERN")]
        mode: Option<String>,
        #[arg(long, value_enum, default_value_t = SystemArg::Stlc)]
        system: SystemArg,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Compare the solver with Algorithm W on random terms
    Fuzz {
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = SystemArg::Stlc)]
        system: SystemArg,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        /// Print the corpus instead of running it
        #[arg(long)]
        dump: bool,
    },
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long, value_enum, default_value_t = SystemArg::Stlc)]
    system: SystemArg,
    /// Root of a let-polymorphic tree (hm only)
    #[arg(long, value_enum, default_value_t = StartArg::Poly)]
    start: StartArg,
    /// Typing context, inline or @file
    #[arg(long, default_value = "")]
    ctx: String,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Args, Debug)]
struct SolveArgs {
    /// Print solver steps to standard error
    #[arg(long)]
    trace: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SystemArg {
    Stlc,
    Hm,
}

impl From<SystemArg> for System {
    fn from(s: SystemArg) -> System {
        match s {
            SystemArg::Stlc => System::Stlc,
            SystemArg::Hm => System::Hm,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum StartArg {
    Mono,
    Poly,
}

impl From<StartArg> for Start {
    fn from(s: StartArg) -> Start {
        match s {
            StartArg::Mono => Start::Mono,
            StartArg::Poly => Start::Poly,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
    Dot,
}

/// What a command prints and how it exits.
struct Report {
    text: String,
    json: Value,
    code: u8,
}

#[derive(Debug)]
struct UsageError(String);

impl<E: std::fmt::Display> From<E> for UsageError {
    fn from(e: E) -> UsageError {
        UsageError(e.to_string())
    }
}

fn envelope(status: impl serde::Serialize, result: Value, diagnostics: Vec<Value>) -> Value {
    json!({ "status": status, "result": result, "diagnostics": diagnostics })
}

fn read_ctx(arg: &str) -> Result<Context, UsageError> {
    let text = match arg.strip_prefix('@') {
        Some(path) => std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read context file {path}: {e}")))?,
        None => arg.to_string(),
    };
    Ok(parse_context(text.trim())?)
}

fn term_arg(text: &str) -> Result<Term, UsageError> {
    Ok(parse_term(text)?)
}

fn no_dot(format: Format) -> Result<(), UsageError> {
    if format == Format::Dot {
        return Err(UsageError("dot output is only available for tree".into()));
    }
    Ok(())
}

fn outcome_report(outcome: &Outcome) -> Report {
    let verdict = classify(outcome);
    let (result, diagnostics) = match outcome {
        Outcome::Solved { result, .. } => (json!(result.to_string()), vec![]),
        Outcome::Ambiguous(a) => (
            json!(a.result.as_ref().map(|r| r.to_string())),
            vec![match &a.stuck {
                Some(s) => json!({
                    "kind": "stuck",
                    "path": s.path,
                    "constraint": s.constraint.to_string(),
                    "message": s.to_string(),
                }),
                None => json!({
                    "kind": "ambiguous",
                    "unsolved": a.unsolved.len(),
                    "message": outcome.to_string(),
                }),
            }],
        ),
        Outcome::Failed(f) => (
            Value::Null,
            vec![json!({
                "kind": f.kind,
                "path": f.path,
                "constraint": f.constraint.to_string(),
                "conflict": f.conflict.as_ref().map(|(l, r)| [l.to_string(), r.to_string()]),
                "origin": f.origin.as_ref().map(|o| json!({ "path": o.path, "constraint": o.constraint })),
                "message": f.to_string(),
            })],
        ),
    };
    Report {
        text: format!("{outcome}\n"),
        json: envelope(verdict, result, diagnostics),
        code: verdict.exit_code() as u8,
    }
}

fn solve(
    tree: &telescope::treegen::Telescope,
    solve: &SolveArgs,
    err: &mut impl Write,
) -> Result<Outcome, UsageError> {
    let run = solve_tree_with(
        tree,
        &SolveOptions {
            trace: solve.trace,
            open_context: false,
        },
    )?;
    for line in &run.trace {
        let _ = writeln!(err, "{line}");
    }
    Ok(run.outcome)
}

fn infer_cmd(term: &str, c: &Common, s: &SolveArgs, err: &mut impl Write) -> Result<Report, UsageError> {
    no_dot(c.format)?;
    let t = term_arg(term)?;
    let tree = build_tree(&t, &read_ctx(&c.ctx)?, c.system.into(), c.start.into())?;
    Ok(outcome_report(&solve(&tree, s, err)?))
}

fn check_cmd(
    term: &str,
    ty: &str,
    c: &Common,
    s: &SolveArgs,
    err: &mut impl Write,
) -> Result<Report, UsageError> {
    no_dot(c.format)?;
    let t = term_arg(term)?;
    let expected: MonoType = parse_mono(ty)?;
    let tree = check_tree(&t, &read_ctx(&c.ctx)?, &expected, c.system.into(), c.start.into())?;
    let outcome = solve(&tree, s, err)?;
    let mut r = outcome_report(&outcome);
    let verdict = classify(&outcome);
    r.text = match outcome {
        Outcome::Solved { .. } => format!("{verdict}\n"),
        _ => format!("{verdict}: {outcome}\n"),
    };
    Ok(r)
}

fn fv_cmd(term: &str, system: SystemArg, format: Format) -> Result<Report, UsageError> {
    no_dot(format)?;
    let t = term_arg(term)?;
    let fv = free_vars(&t, system.into())?;
    let verdict = fv.verdict();
    let (text, result, diagnostics) = match &fv {
        FreeVars::Found {
            result,
            requirements,
        } => {
            let mut text = format!("type {result}\n");
            for (n, ty) in requirements {
                let _ = writeln!(text, "{n} : {ty}");
            }
            let reqs: Vec<Value> = requirements
                .iter()
                .map(|(n, ty)| json!({ "name": n.as_str(), "type": ty.to_string() }))
                .collect();
            (
                text,
                json!({ "type": result.to_string(), "requirements": reqs }),
                vec![],
            )
        }
        FreeVars::Failed(f) => (
            format!("{f}\n"),
            Value::Null,
            vec![json!({ "kind": f.kind, "path": f.path, "message": f.to_string() })],
        ),
        FreeVars::Stuck(s) => (
            format!("{s}\n"),
            Value::Null,
            vec![json!({ "kind": "stuck", "path": s.path, "message": s.to_string() })],
        ),
    };
    Ok(Report {
        text,
        json: envelope(verdict, result, diagnostics),
        code: verdict.exit_code() as u8,
    })
}

fn tree_cmd(term: &str, c: &Common, lift: bool) -> Result<Report, UsageError> {
    let t = term_arg(term)?;
    let mut tree = build_tree(&t, &read_ctx(&c.ctx)?, c.system.into(), c.start.into())?;
    if lift {
        tree = lift_quantifiers(&tree)?;
    }
    let tree = tree.canonicalize();
    let text = match c.format {
        Format::Dot => render_dot(&tree),
        _ => render_text(&tree),
    };
    Ok(Report {
        text,
        json: envelope("ok", to_json(&tree), vec![]),
        code: 0,
    })
}

fn flat_cmd(term: &str, system: SystemArg, format: Format) -> Result<Report, UsageError> {
    no_dot(format)?;
    let t = term_arg(term)?;
    let d = generate_flat(&t, system.into())?;
    let rules: Vec<Value> = d
        .rule_trace
        .iter()
        .map(|r| {
            json!({
                "rule": r.rule.to_string(),
                "context": r.ctx.to_string(),
                "type": r.ty.to_string(),
                "constraints": r.constraints.iter().map(|c| d.constraints[*c].to_string()).collect::<Vec<_>>(),
            })
        })
        .collect();
    Ok(Report {
        text: render_flat(&d),
        json: envelope(
            "ok",
            json!({
                "root_context": d.root_ctx.to_string(),
                "result": d.result_ty.to_string(),
                "rules": rules,
            }),
            vec![],
        ),
        code: 0,
    })
}

fn modes_cmd(mode: Option<&str>, system: SystemArg, format: Format) -> Result<Report, UsageError> {
    no_dot(format)?;
    let table = ConstraintModeTable::default();
    let rules = rules_for(system.into());
    let mut text = format!("table: {}\n", table.label);
    let Some(mode) = mode else {
        let reports = classify_table_modes(&rules, &table);
        let mut rows = Vec::new();
        for r in &reports {
            let _ = writeln!(text, "{r}");
            rows.push(json!({
                "mode": r.named.mode.to_string(),
                "names": [r.named.unidirectional, r.named.bidirectional],
                "moded": r.is_moded(),
                "analysed_as": r.analysed_as.to_string(),
                "final_verify": r.final_verify,
                "reason": r.outcome.as_ref().err().map(|u| u.to_string()),
            }));
        }
        return Ok(Report {
            text,
            json: envelope("ok", json!({ "table": table.label, "modes": rows }), vec![]),
            code: 0,
        });
    };
    let mode: JudgmentMode = mode.parse()?;
    let mut annotated = Vec::new();
    let mut diagnostics = Vec::new();
    for rule in &rules {
        match assign_modes(rule, mode, &table) {
            Ok(m) => {
                let _ = writeln!(text, "\n{m}");
                let order = firing_order(&m);
                let labels = order.as_ref().map(|o| {
                    o.iter()
                        .map(|i| m.schema.premises[*i].label())
                        .collect::<Vec<_>>()
                });
                match &labels {
                    Ok(l) => {
                        let _ = writeln!(text, "  firing: {}", l.join(", "));
                    }
                    Err(e) => {
                        let _ = writeln!(text, "  firing: {e}");
                        diagnostics.push(json!({ "rule": rule.name, "message": e.to_string() }));
                    }
                }
                annotated.push(json!({
                    "rule": rule.name,
                    "premises": (0..m.premises.len()).map(|i| m.premise_text(i)).collect::<Vec<_>>(),
                    "patterns": m.premises.iter().map(|p| p.pattern).collect::<Vec<_>>(),
                    "conclusion": m.conclusion_text(),
                    "firing": labels.ok(),
                }));
            }
            Err(u) => {
                let _ = writeln!(text, "\n{} at {mode}: unmoded: {}", rule.name, u.reason);
                diagnostics.push(json!({ "rule": rule.name, "message": u.reason }));
            }
        }
    }
    let code = if diagnostics.is_empty() { 0 } else { 1 };
    Ok(Report {
        text,
        json: envelope(
            if code == 0 { "moded" } else { "unmoded" },
            json!({ "mode": mode.to_string(), "table": table.label, "rules": annotated }),
            diagnostics,
        ),
        code,
    })
}

fn fuzz_cmd(count: usize, seed: u64, system: SystemArg, format: Format, dump_only: bool) -> Result<Report, UsageError> {
    no_dot(format)?;
    let system: System = system.into();
    let cfg = CorpusConfig::for_system(system);
    let terms = generate(&cfg, seed, count);
    if dump_only {
        let text = dump(seed, &terms);
        let lines: Vec<String> = terms.iter().map(|t| t.to_string()).collect();
        return Ok(Report {
            text,
            json: envelope("ok", json!({ "seed": seed, "terms": lines }), vec![]),
            code: 0,
        });
    }
    let results: Vec<_> = terms
        .par_iter()
        .map(|t| compare(&cfg.context, t, system))
        .collect();
    let report = DiffReport::from_results(
        results
            .into_iter()
            .enumerate()
            .map(|(i, c)| (i, &terms[i], c)),
    );
    let mut text = format!("seed {seed}, {} terms\n", report.total);
    let _ = writeln!(
        text,
        "agreed {}, typed {}, failed {}, malformed {}",
        report.agreed(),
        report.typed,
        report.failed,
        report.errors
    );
    let _ = writeln!(
        text,
        "disagreements: verdict {}, failure kind {}, scheme {}",
        report.verdict_disagreements, report.kind_disagreements, report.scheme_disagreements
    );
    if let Some(c) = report.counterexamples.first() {
        let _ = writeln!(
            text,
            "first counterexample: #{} {}\n  solver: {}\n  oracle: {}",
            c.index, c.term, c.solver, c.oracle
        );
    }
    let clean = report.agreed() == report.total;
    let status = if clean { Verdict::Sat } else { Verdict::Unsat };
    Ok(Report {
        text,
        json: envelope(status, serde_json::to_value(&report)?, vec![]),
        code: if clean { 0 } else { 1 },
    })
}

fn run(argv: impl IntoIterator<Item = String>, out: &mut impl Write, err: &mut impl Write) -> u8 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { USAGE_EXIT } else { 0 };
            let _ = if e.use_stderr() {
                write!(err, "{e}")
            } else {
                write!(out, "{e}")
            };
            return code;
        }
    };
    let (format, result) = match &cli.command {
        Command::Infer {
            term,
            common,
            solve,
        } => (common.format, infer_cmd(term, common, solve, err)),
        Command::Check {
            term,
            ty,
            common,
            solve,
        } => (common.format, check_cmd(term, ty, common, solve, err)),
        Command::Fv {
            term,
            system,
            format,
        } => (*format, fv_cmd(term, *system, *format)),
        Command::Tree { term, common, lift } => (common.format, tree_cmd(term, common, *lift)),
        Command::Flat {
            term,
            system,
            format,
        } => (*format, flat_cmd(term, *system, *format)),
        Command::Modes {
            mode,
            system,
            format,
        } => (*format, modes_cmd(mode.as_deref(), *system, *format)),
        Command::Fuzz {
            count,
            seed,
            system,
            format,
            dump,
        } => (*format, fuzz_cmd(*count, *seed, *system, *format, *dump)),
    };
    match result {
        Ok(r) => {
            let _ = match format {
                Format::Json => writeln!(out, "{}", r.json),
                _ => write!(out, "{}", r.text),
            };
            r.code
        }
        Err(UsageError(msg)) => {
            let _ = match format {
                Format::Json => writeln!(
                    out,
                    "{}",
                    envelope("error", Value::Null, vec![json!({ "kind": "usage", "message": msg })])
                ),
                _ => writeln!(err, "error: {msg}"),
            };
            USAGE_EXIT
        }
    }
}

fn main() -> ExitCode {
    let code = run(std::env::args(), &mut std::io::stdout(), &mut std::io::stderr());
    ExitCode::from(code)
}
