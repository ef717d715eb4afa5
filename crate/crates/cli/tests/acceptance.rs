//! Exit criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::process::Command;
use std::time::{Duration, Instant};

use telescope::constraints::{Context, MonoType};
use telescope::flatrules::{check_linearity, flat_to_tree, generate_flat};
use telescope::modes::{
    assign_modes, classify_table_modes, firing_order, stlc_rules, ConstraintModeTable,
    JudgmentMode,
};
use telescope::oracle::corpus::{generate, CorpusConfig};
use telescope::oracle::differential::{answer, run, same_answer};
use telescope::solver::{check, infer, solve_tree, FailureKind, Outcome};
use telescope::syntax::{parse_context, parse_mono, parse_term};
use telescope::treegen::{build_tree, lift_quantifiers, MetaSort, Solution, TreeNode};
use telescope::{Start, System};

const CORPUS_SEED: u64 = 42;
const CORPUS_SIZE: usize = 1000;
const MAX_TERM_SIZE: usize = 30;
const MAX_TERM_DEPTH: usize = 8;
const GOLDEN_LIMIT: Duration = Duration::from_secs(1);
const DIFFERENTIAL_LIMIT: Duration = Duration::from_secs(10);
/// Fraction of corpus terms on which each comparison must agree.
const REQUIRED_AGREEMENT: f64 = 1.0;

const APPLIED_IDENTITY_TREE: &str = "\
ctx {}
exists t0
exists t1
exists t2
t2 -> t0 ~ t1
|
  exists t3
  exists t4
  t1 ~ t3 -> t4
  tell x : t3
  ask x : t4
|
  ask y : t2
";

type Check = Result<String, String>;

fn telescope(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_telescope"))
        .args(args)
        .output()
        .expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8(out.stdout).expect("utf-8 output"),
    )
}

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn corpus(system: System) -> (CorpusConfig, Vec<telescope::syntax::Term>) {
    let cfg = CorpusConfig::for_system(system);
    assert_eq!((cfg.max_size, cfg.max_depth), (MAX_TERM_SIZE, MAX_TERM_DEPTH));
    let terms = generate(&cfg, CORPUS_SEED, CORPUS_SIZE);
    (cfg, terms)
}

fn shape(nodes: &[TreeNode]) -> String {
    nodes
        .iter()
        .map(|n| match n {
            TreeNode::Quantify { .. } => "Q".to_string(),
            TreeNode::Constr(c) => c.kind().to_string(),
            TreeNode::Branch(cs) => format!(
                "[{}]",
                cs.iter().map(|c| shape(&c.nodes)).collect::<Vec<_>>().join(" | ")
            ),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn golden_tree() -> Check {
    let start = Instant::now();
    let first = telescope(&["tree", "(\\x. x) y", "--system", "stlc", "--format", "text"]);
    let second = telescope(&["tree", "(\\x. x) y", "--system", "stlc", "--format", "text"]);
    let elapsed = start.elapsed() / 2;
    ensure(first.0 == 0, format!("exit {}", first.0))?;
    ensure(first == second, "output differs between runs")?;
    ensure(
        first.1 == APPLIED_IDENTITY_TREE,
        format!("rendering differs:\n{}", first.1),
    )?;
    let t = parse_term("(\\x. x) y").unwrap();
    let tree = build_tree(&t, &Context::empty(), System::Stlc, Start::Mono)
        .unwrap()
        .canonicalize();
    let got = shape(&tree.nodes);
    let want = "Q Q Q EqTy [Q Q EqTy Tell Ask | Ask]";
    ensure(got == want, format!("node kinds {got}"))?;
    ensure(elapsed < GOLDEN_LIMIT, format!("took {elapsed:?}"))?;
    Ok(format!("{want}, byte-stable, {elapsed:?} per run"))
}

fn differential() -> Check {
    let (cfg, terms) = corpus(System::Hm);
    ensure(terms.iter().any(|t| t.contains_let()), "corpus has no let")?;
    ensure(terms.iter().any(|t| t.contains_annotation()), "corpus has no annotation")?;
    let start = Instant::now();
    let r = run(&cfg.context, &terms, System::Hm);
    let elapsed = start.elapsed();
    let n = r.total as f64;
    let verdicts = (r.total - r.verdict_disagreements - r.errors) as f64 / n;
    let failed_both = r.failed - r.verdict_disagreements.min(r.failed);
    let kinds = if failed_both == 0 {
        1.0
    } else {
        (failed_both - r.kind_disagreements) as f64 / failed_both as f64
    };
    let schemes = (r.typed - r.scheme_disagreements) as f64 / r.typed.max(1) as f64;
    let summary = format!(
        "{} terms: verdicts {:.1}%, failure kinds {:.1}% ({} of {} failing terms differ), schemes {:.1}%, {elapsed:?}",
        r.total,
        verdicts * 100.0,
        kinds * 100.0,
        r.kind_disagreements,
        failed_both,
        schemes * 100.0
    );
    let mut problems = Vec::new();
    if verdicts < REQUIRED_AGREEMENT {
        problems.push("verdicts");
    }
    if kinds < REQUIRED_AGREEMENT {
        problems.push("failure kinds");
    }
    if schemes < REQUIRED_AGREEMENT {
        problems.push("schemes");
    }
    if elapsed >= DIFFERENTIAL_LIMIT {
        problems.push("runtime");
    }
    if problems.is_empty() {
        return Ok(summary);
    }
    let example = r
        .counterexamples
        .first()
        .map(|c| format!("; e.g. {} (solver {}, oracle {})", c.term, c.solver, c.oracle))
        .unwrap_or_default();
    Err(format!("{} below target: {summary}{example}", problems.join(", ")))
}

fn linearity() -> Check {
    let (_, terms) = corpus(System::Hm);
    for t in &terms {
        let d = generate_flat(t, System::Hm).map_err(|e| format!("{t}: {e}"))?;
        let report = check_linearity(&d);
        ensure(report.is_ok(), format!("{t}: {report}"))?;
    }
    Ok(format!("{} terms linear", terms.len()))
}

fn correspondence() -> Check {
    let mut n = 0;
    for (system, start) in [(System::Hm, Start::Mono), (System::Stlc, Start::Mono)] {
        let (cfg, terms) = corpus(system);
        for t in &terms {
            let d = generate_flat(t, system).map_err(|e| format!("{t}: {e}"))?;
            let from_flat = flat_to_tree(&d, &cfg.context).map_err(|e| format!("{t}: {e}"))?;
            let direct = build_tree(t, &cfg.context, system, start).map_err(|e| e.to_string())?;
            ensure(from_flat == direct, format!("{t}: trees differ"))?;
            n += 1;
        }
    }
    Ok(format!("{n} terms (hm and stlc corpora) structurally equal"))
}

fn lifting() -> Check {
    let (cfg, terms) = corpus(System::Stlc);
    for t in &terms {
        let tree = build_tree(t, &cfg.context, System::Stlc, Start::Mono).map_err(|e| e.to_string())?;
        let lifted = lift_quantifiers(&tree).map_err(|e| format!("{t}: {e}"))?;
        let before = answer(&cfg.context, solve_tree(&tree).map_err(|e| e.to_string())?);
        let after = answer(&cfg.context, solve_tree(&lifted).map_err(|e| e.to_string())?);
        ensure(same_answer(&before, &after), format!("{t}: {before} vs {after}"))?;
    }
    Ok(format!("{} stlc terms agree before and after lifting", terms.len()))
}

fn mode_golden() -> Check {
    let table = ConstraintModeTable::default();
    let expected: [(&str, &[&str], &str); 3] = [
        ("Var", &["x- : t+ in G-"], "G+ |- x+ : t-"),
        (
            "Lam",
            &["Gf+ := G- , x- : tp+", "Gf- |- T- : tr+", "tf+ ~ tp- ->+ tr-"],
            "G+ |- \\x+ . T+ : tf-",
        ),
        (
            "App",
            &[
                "dup G- -> Gf+ Gp+",
                "Gf- |- Tf- : tf+",
                "Gp- |- Tp- : tp+",
                "tp- ->- tr+ ~ tf-",
            ],
            "G+ |- Tf+ Tp+ : tr-",
        ),
    ];
    for (rule, (name, premises, conclusion)) in stlc_rules().iter().zip(expected) {
        let m = assign_modes(rule, JudgmentMode::SYNTHESIS, &table).map_err(|e| e.to_string())?;
        let got: Vec<String> = (0..m.premises.len()).map(|i| m.premise_text(i)).collect();
        ensure(rule.name == name, format!("rule order: {}", rule.name))?;
        ensure(got == premises, format!("{name}: {got:?}"))?;
        ensure(m.conclusion_text() == conclusion, format!("{name}: {}", m.conclusion_text()))?;
        m.check_duality().map_err(|e| format!("{name}: {e}"))?;
        firing_order(&m).map_err(|e| format!("{name}: {e}"))?;
    }
    let reports = classify_table_modes(&stlc_rules(), &table);
    let moded: Vec<bool> = reports.iter().map(|r| r.is_moded()).collect();
    ensure(
        moded == [true, true, true, true, false],
        format!("moded flags {moded:?}"),
    )?;
    let reason = &reports[4].outcome.as_ref().unwrap_err().reason;
    ensure(
        reason.contains("without search"),
        format!("proof search fails for another reason: {reason}"),
    )?;
    Ok("Var/Lam/App match; four data modes moded, proof search unmoded without search".into())
}

fn hm_spot_checks() -> Check {
    let empty = Context::empty();
    let t = parse_term("let id = \\x. x in id id").unwrap();
    match infer(&t, &empty, System::Hm, Start::Poly).map_err(|e| e.to_string())? {
        Outcome::Solved {
            result: Solution::Poly(p),
            ..
        } => ensure(p.to_string() == "forall a. a -> a", format!("id id : {p}"))?,
        o => return Err(format!("id id: {o}")),
    }
    let t = parse_term("\\x. x x").unwrap();
    match infer(&t, &empty, System::Hm, Start::Poly).map_err(|e| e.to_string())? {
        Outcome::Failed(f) => ensure(f.kind == FailureKind::OccursCheck, format!("x x: {f}"))?,
        o => return Err(format!("x x: {o}")),
    }
    // y's meta escapes the region of f, so f is generalised over x alone
    let t = parse_term("\\y. let f = \\x. y in f").unwrap();
    let tree = build_tree(&t, &empty, System::Hm, Start::Poly).unwrap();
    let Outcome::Solved { result, tree } = solve_tree(&tree).map_err(|e| e.to_string())? else {
        return Err("scoped generalisation: not solved".into());
    };
    ensure(
        result.to_string() == "forall a b. a -> b -> a",
        format!("root : {result}"),
    )?;
    let mut schemes = Vec::new();
    tree.walk(&mut |_, n| {
        if let TreeNode::Quantify {
            sort: MetaSort::Poly,
            solution: Some(Solution::Poly(p)),
            ..
        } = n
        {
            schemes.push(p.clone());
        }
    });
    // the root scheme comes first, then the one f is bound to
    let Some(f_scheme) = schemes.get(1) else {
        return Err(format!("no scheme annotated for f: {schemes:?}"));
    };
    ensure(
        f_scheme.bound.len() == 1 && f_scheme.free_rigids().len() == 1,
        format!("f : {f_scheme}"),
    )?;
    let ctx = parse_context("one : Int").unwrap();
    let t = parse_term("\\y. let f = \\x. y in f (f one)").unwrap();
    let o = infer(&t, &ctx, System::Hm, Start::Poly).map_err(|e| e.to_string())?;
    ensure(o.to_string() == "forall a. a -> a", format!("f (f one): {o}"))?;
    Ok(format!("id id : forall a. a -> a; x x: occurs check; f : {f_scheme}"))
}

fn annotation() -> Check {
    let t = parse_term("\\x : Int. x").unwrap();
    let empty = Context::empty();
    match infer(&t, &empty, System::Stlc, Start::Mono).map_err(|e| e.to_string())? {
        Outcome::Solved { result, .. } => {
            ensure(result.to_string() == "Int -> Int", format!("infer: {result}"))?
        }
        o => return Err(format!("infer: {o}")),
    }
    let expected: MonoType = parse_mono("Bool -> Int").unwrap();
    match check(&t, &empty, &expected, System::Stlc, Start::Mono).map_err(|e| e.to_string())? {
        Outcome::Failed(f) => ensure(f.kind == FailureKind::Mismatch, format!("check: {f}"))?,
        o => return Err(format!("check against Bool -> Int: {o}")),
    }
    Ok("infer Int -> Int; check against Bool -> Int: mismatch".into())
}

fn failure_taxonomy() -> Check {
    let (code, out) = telescope(&["infer", "\\x. x", "--system", "stlc"]);
    ensure(code == 2, format!("\\x. x exits {code}: {out}"))?;
    let (code, out) = telescope(&["infer", "(\\x : Int. x) y", "--ctx", "y : Bool", "--system", "stlc"]);
    ensure(code == 1, format!("annotated application exits {code}: {out}"))?;
    let ctx = parse_context("y : Bool").unwrap();
    let t = parse_term("(\\x : Int. x) y").unwrap();
    let Outcome::Failed(f) = infer(&t, &ctx, System::Stlc, Start::Mono).map_err(|e| e.to_string())? else {
        return Err("annotated application did not fail".into());
    };
    let origin = f.origin.as_ref().ok_or("no originating equality")?;
    ensure(origin.constraint.contains(" ~ "), format!("origin {}", origin.constraint))?;
    ensure(
        out.contains(&telescope::solver::fmt_path(&f.path))
            && out.contains(&telescope::solver::fmt_path(&origin.path))
            && out.contains(&origin.constraint),
        format!("message lacks the path or equality: {out}"),
    )?;
    Ok(format!("exit 2 and exit 1; {}", out.trim()))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 9] = [
        ("golden example tree", golden_tree),
        ("differential agreement with Algorithm W", differential),
        ("linearity of flat derivations", linearity),
        ("flat and tree correspondence", correspondence),
        ("quantifier lifting", lifting),
        ("mode golden and mode table", mode_golden),
        ("let-polymorphism spot checks", hm_spot_checks),
        ("annotated lambda", annotation),
        ("failure taxonomy", failure_taxonomy),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("PASS {}. {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {}. {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
