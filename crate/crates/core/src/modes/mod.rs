//! Mode analysis over rule schemas.
//!
//! Every metavariable of a rule occurs twice. A mode assigns `+` to one
//! occurrence and `-` to the other. In the conclusion `+` means the value
//! is supplied from outside and `-` that the rule hands it back. Premises
//! read the other way round: a constraint consumes its `-` positions and
//! produces its `+` positions, and a sub-derivation does the same with the
//! judgment mode flipped.

mod rules;
mod table;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

pub use rules::{
    alam_rule, annotated_rules, app_rule, hm_rules, hm_var_rule, lam_rule, let_rule, rules_for,
    stlc_rules, var_rule, Conclusion, ConstraintKind, PremiseTemplate, RuleSchema, TermTemplate,
    TypeTemplate,
};
pub use table::{ConstraintModeTable, EqualityModes, Pattern};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarity {
    Plus,
    Minus,
}

impl Polarity {
    pub fn flip(self) -> Polarity {
        match self {
            Polarity::Plus => Polarity::Minus,
            Polarity::Minus => Polarity::Plus,
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarity::Plus => "+",
            Polarity::Minus => "-",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct JudgmentMode {
    pub ctx: Polarity,
    pub term: Polarity,
    pub ty: Polarity,
}

impl JudgmentMode {
    pub const fn new(ctx: Polarity, term: Polarity, ty: Polarity) -> JudgmentMode {
        JudgmentMode { ctx, term, ty }
    }

    pub fn flip(self) -> JudgmentMode {
        JudgmentMode::new(self.ctx.flip(), self.term.flip(), self.ty.flip())
    }

    pub const SYNTHESIS: JudgmentMode =
        JudgmentMode::new(Polarity::Plus, Polarity::Plus, Polarity::Minus);
}

impl fmt::Display for JudgmentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "G{} |- T{} : t{}", self.ctx, self.term, self.ty)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("expected three polarities such as \"+ + -\", got {0:?}")]
pub struct ModeParseError(pub String);

impl FromStr for JudgmentMode {
    type Err = ModeParseError;

    fn from_str(s: &str) -> Result<JudgmentMode, ModeParseError> {
        let ps: Vec<Polarity> = s
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| match c {
                '+' => Ok(Polarity::Plus),
                '-' => Ok(Polarity::Minus),
                _ => Err(ModeParseError(s.to_string())),
            })
            .collect::<Result<_, _>>()?;
        match ps[..] {
            [ctx, term, ty] => Ok(JudgmentMode { ctx, term, ty }),
            _ => Err(ModeParseError(s.to_string())),
        }
    }
}

/// Polarities chosen for one premise.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModedPremise {
    pub polarities: Vec<Polarity>,
    /// For equalities, the arrow constructors in pre-order, left side first.
    pub arrows: Vec<Polarity>,
    pub pattern: &'static str,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModedRule {
    pub schema: RuleSchema,
    pub mode: JudgmentMode,
    pub conclusion: Vec<Polarity>,
    pub premises: Vec<ModedPremise>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{rule}: {reason}")]
pub struct Unmoded {
    pub rule: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum FiringError {
    #[error("dataflow cycle through premises {0:?}")]
    Cycle(Vec<usize>),
    #[error("nothing produces {var} for premise {premise}")]
    Unproduced { var: String, premise: usize },
}

/// Where an occurrence sits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Site {
    Conclusion(usize),
    Premise(usize, usize),
}

struct Occurrences {
    sites: Vec<Site>,
    vars: Vec<String>,
    partner: Vec<Option<usize>>,
    conclusion: Vec<usize>,
    premises: Vec<Vec<usize>>,
}

impl Occurrences {
    fn of(rule: &RuleSchema) -> Occurrences {
        let mut sites = Vec::new();
        let mut vars = Vec::new();
        let mut conclusion = Vec::new();
        for (k, v) in rule.conclusion.positions().into_iter().enumerate() {
            conclusion.push(sites.len());
            sites.push(Site::Conclusion(k));
            vars.push(v.to_string());
        }
        let mut premises = Vec::new();
        for (i, p) in rule.premises.iter().enumerate() {
            let mut ids = Vec::new();
            for (k, v) in p.positions().into_iter().enumerate() {
                ids.push(sites.len());
                sites.push(Site::Premise(i, k));
                vars.push(v.to_string());
            }
            premises.push(ids);
        }
        let mut by_var: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (o, v) in vars.iter().enumerate() {
            by_var.entry(v).or_default().push(o);
        }
        let mut partner = vec![None; sites.len()];
        for os in by_var.values() {
            if let [a, b] = os[..] {
                partner[a] = Some(b);
                partner[b] = Some(a);
            }
        }
        Occurrences {
            sites,
            vars,
            partner,
            conclusion,
            premises,
        }
    }
}

struct Search<'a> {
    rule: &'a RuleSchema,
    table: &'a ConstraintModeTable,
    occ: Occurrences,
    pol: Vec<Option<Polarity>>,
    chosen: Vec<Option<(Vec<Polarity>, Vec<Polarity>, &'static str)>>,
    failure: Option<(usize, Vec<Option<Polarity>>)>,
}

type Candidate = (Vec<Polarity>, Vec<Polarity>, &'static str);

fn all_signs(n: usize, allowed: &[Polarity]) -> Vec<Vec<Polarity>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                allowed.iter().map(move |p| {
                    let mut v = prefix.clone();
                    v.push(*p);
                    v
                })
            })
            .collect();
    }
    out
}

fn equality_candidates(l: &TypeTemplate, r: &TypeTemplate, eq: EqualityModes) -> Vec<Candidate> {
    let mut out: Vec<Candidate> = Vec::new();
    let mut allowed = Vec::new();
    if eq.copy {
        allowed.push(Polarity::Plus);
    }
    if eq.verify {
        allowed.push(Polarity::Minus);
    }
    for source_left in [true, false] {
        let (src, tgt) = if source_left { (l, r) } else { (r, l) };
        if (src.arrow_count() > 0 && !eq.construct) || (tgt.arrow_count() > 0 && !eq.destruct) {
            continue;
        }
        let src_leaves = vec![Polarity::Minus; src.leaves().len()];
        let src_arrows = vec![Polarity::Plus; src.arrow_count()];
        let tgt_arrows = vec![Polarity::Minus; tgt.arrow_count()];
        for tgt_leaves in all_signs(tgt.leaves().len(), &allowed) {
            let name = match (
                src.arrow_count() > 0,
                tgt.arrow_count() > 0,
                tgt_leaves.contains(&Polarity::Plus),
            ) {
                (true, _, true) => "construct",
                (_, true, true) => "destruct",
                (_, _, true) => "copy",
                _ => "verify",
            };
            let (leaves, arrows) = if source_left {
                (
                    [src_leaves.clone(), tgt_leaves].concat(),
                    [src_arrows.clone(), tgt_arrows.clone()].concat(),
                )
            } else {
                (
                    [tgt_leaves, src_leaves.clone()].concat(),
                    [tgt_arrows.clone(), src_arrows.clone()].concat(),
                )
            };
            if !out.iter().any(|(l, _, _)| *l == leaves) {
                out.push((leaves, arrows, name));
            }
        }
    }
    out
}

impl Search<'_> {
    /// Sets occurrence `o` and its partner, recording changes in `log`.
    fn set(&mut self, o: usize, p: Polarity, log: &mut Vec<usize>) -> bool {
        match self.pol[o] {
            Some(q) if q != p => return false,
            Some(_) => {}
            None => {
                self.pol[o] = Some(p);
                log.push(o);
            }
        }
        if let Some(q) = self.occ.partner[o] {
            match self.pol[q] {
                Some(x) if x == p => return false,
                Some(_) => {}
                None => {
                    self.pol[q] = Some(p.flip());
                    log.push(q);
                }
            }
        }
        true
    }

    fn undo(&mut self, log: Vec<usize>) {
        for o in log {
            self.pol[o] = None;
        }
    }

    fn candidates(&self, i: usize) -> Vec<Candidate> {
        match &self.rule.premises[i] {
            PremiseTemplate::Constraint { kind, args } => self
                .table
                .patterns
                .get(kind)
                .into_iter()
                .flatten()
                .filter_map(|p| p.expand(args.len()).map(|ps| (ps, Vec::new(), p.name)))
                .collect(),
            PremiseTemplate::Equality(l, r) => equality_candidates(l, r, self.table.equality),
            PremiseTemplate::Judgment { .. } => Vec::new(),
        }
    }

    fn solve(&mut self, i: usize) -> bool {
        if i == self.rule.premises.len() {
            return true;
        }
        if matches!(self.rule.premises[i], PremiseTemplate::Judgment { .. }) {
            return self.solve(i + 1);
        }
        let ids = self.occ.premises[i].clone();
        for cand in self.candidates(i) {
            let mut log = Vec::new();
            let ok = ids
                .iter()
                .zip(&cand.0)
                .all(|(o, p)| self.set(*o, *p, &mut log));
            if ok {
                self.chosen[i] = Some(cand.clone());
                if self.solve(i + 1) {
                    return true;
                }
                self.chosen[i] = None;
            }
            self.undo(log);
        }
        let forced: Vec<Option<Polarity>> = ids.iter().map(|o| self.pol[*o]).collect();
        if self.failure.as_ref().is_none_or(|(j, _)| i >= *j) {
            self.failure = Some((i, forced));
        }
        false
    }

    fn reason(&self, i: usize, forced: &[Option<Polarity>]) -> String {
        let premise = &self.rule.premises[i];
        let positions = premise.positions();
        if let PremiseTemplate::Constraint {
            kind: ConstraintKind::InCtx,
            ..
        } = premise
        {
            if forced[0] == Some(Polarity::Plus) {
                return format!("InCtx cannot produce {} without search", positions[0]);
            }
        }
        let shown: Vec<String> = positions
            .iter()
            .zip(forced)
            .map(|(v, p)| match p {
                Some(p) => format!("{v}{p}"),
                None => format!("{v}?"),
            })
            .collect();
        format!("{} has no mode for {}", premise.label(), shown.join(" "))
    }
}

/// Assigns polarities to every occurrence in `rule` at `mode`, choosing a
/// supported pattern for each constraint. Sub-derivations take `mode`.
pub fn assign_modes(
    rule: &RuleSchema,
    mode: JudgmentMode,
    table: &ConstraintModeTable,
) -> Result<ModedRule, Unmoded> {
    let unmoded = |reason: String| Unmoded {
        rule: rule.name.clone(),
        reason,
    };
    rule.check_linearity().map_err(unmoded)?;
    let occ = Occurrences::of(rule);
    let n = occ.sites.len();
    let mut s = Search {
        rule,
        table,
        occ,
        pol: vec![None; n],
        chosen: vec![None; rule.premises.len()],
        failure: None,
    };
    let concl = s.occ.conclusion.clone();
    let term_vars = rule.conclusion.term.vars().len();
    let mut fixed: Vec<(usize, Polarity)> = Vec::new();
    for (k, o) in concl.iter().enumerate() {
        let p = if k == 0 {
            mode.ctx
        } else if k <= term_vars {
            mode.term
        } else {
            mode.ty
        };
        fixed.push((*o, p));
    }
    let sub = mode.flip();
    for (i, p) in rule.premises.iter().enumerate() {
        if let PremiseTemplate::Judgment { .. } = p {
            let ids = &s.occ.premises[i];
            fixed.extend([(ids[0], sub.ctx), (ids[1], sub.term), (ids[2], sub.ty)]);
        }
    }
    let mut log = Vec::new();
    for (o, p) in fixed {
        if !s.set(o, p, &mut log) {
            return Err(unmoded(format!(
                "{} is {p} at both of its occurrences",
                s.occ.vars[o]
            )));
        }
    }
    if !s.solve(0) {
        let (i, forced) = s.failure.clone().expect("a failing premise is recorded");
        return Err(unmoded(s.reason(i, &forced)));
    }
    let pol: Vec<Polarity> = s.pol.iter().map(|p| p.expect("every occurrence assigned")).collect();
    let premises = rule
        .premises
        .iter()
        .enumerate()
        .map(|(i, p)| match p {
            PremiseTemplate::Judgment { .. } => ModedPremise {
                polarities: s.occ.premises[i].iter().map(|o| pol[*o]).collect(),
                arrows: Vec::new(),
                pattern: "subderivation",
            },
            _ => {
                let (ps, arrows, name) = s.chosen[i].clone().expect("chosen");
                ModedPremise {
                    polarities: ps,
                    arrows,
                    pattern: name,
                }
            }
        })
        .collect();
    Ok(ModedRule {
        schema: rule.clone(),
        mode,
        conclusion: concl.iter().map(|o| pol[*o]).collect(),
        premises,
    })
}

impl ModedRule {
    /// Each metavariable has one `+` and one `-` occurrence.
    pub fn check_duality(&self) -> Result<(), String> {
        let mut seen: BTreeMap<&str, Vec<Polarity>> = BTreeMap::new();
        for (v, p) in self.schema.conclusion.positions().into_iter().zip(&self.conclusion) {
            seen.entry(v).or_default().push(*p);
        }
        for (t, m) in self.schema.premises.iter().zip(&self.premises) {
            for (v, p) in t.positions().into_iter().zip(&m.polarities) {
                seen.entry(v).or_default().push(*p);
            }
        }
        for (v, ps) in seen {
            let plus = ps.iter().filter(|p| **p == Polarity::Plus).count();
            if ps.len() != 2 || plus != 1 {
                return Err(format!("{v} has polarities {ps:?}"));
            }
        }
        Ok(())
    }

    fn producer(&self, var: &str) -> Option<Site> {
        let concl = self.schema.conclusion.positions();
        if let Some(k) = concl
            .iter()
            .zip(&self.conclusion)
            .position(|(v, p)| *v == var && *p == Polarity::Plus)
        {
            return Some(Site::Conclusion(k));
        }
        for (i, (t, m)) in self.schema.premises.iter().zip(&self.premises).enumerate() {
            for (k, (v, p)) in t.positions().into_iter().zip(&m.polarities).enumerate() {
                if v == var && *p == Polarity::Plus {
                    return Some(Site::Premise(i, k));
                }
            }
        }
        None
    }

    fn dependencies(&self) -> Result<Vec<BTreeSet<usize>>, FiringError> {
        let mut deps = vec![BTreeSet::new(); self.premises.len()];
        for (i, (t, m)) in self.schema.premises.iter().zip(&self.premises).enumerate() {
            for (v, p) in t.positions().into_iter().zip(&m.polarities) {
                if *p == Polarity::Plus {
                    continue;
                }
                match self.producer(v) {
                    Some(Site::Conclusion(_)) => {}
                    Some(Site::Premise(j, _)) => {
                        deps[i].insert(j);
                    }
                    None => {
                        return Err(FiringError::Unproduced {
                            var: v.to_string(),
                            premise: i,
                        })
                    }
                }
            }
        }
        Ok(deps)
    }

    pub fn premise_text(&self, i: usize) -> String {
        let t = &self.schema.premises[i];
        let m = &self.premises[i];
        let tagged: Vec<String> = t
            .positions()
            .into_iter()
            .zip(&m.polarities)
            .map(|(v, p)| format!("{v}{p}"))
            .collect();
        match t {
            PremiseTemplate::Constraint { kind, .. } => match kind {
                ConstraintKind::InCtx => format!("{} : {} in {}", tagged[0], tagged[1], tagged[2]),
                ConstraintKind::ExtendCtx => {
                    format!("{} := {} , {} : {}", tagged[0], tagged[1], tagged[2], tagged[3])
                }
                ConstraintKind::DupCtx | ConstraintKind::DupTy => {
                    format!("dup {} -> {}", tagged[0], tagged[1..].join(" "))
                }
                ConstraintKind::Inst => format!("{} <= {}", tagged[0], tagged[1]),
                ConstraintKind::GenInCtx => {
                    format!("{} gen {} in {}", tagged[0], tagged[1], tagged[2])
                }
            },
            PremiseTemplate::Equality(l, r) => {
                let mut leaves = tagged.into_iter();
                let mut arrows = m.arrows.iter();
                let lhs = render_type(l, &mut leaves, &mut arrows, false);
                let rhs = render_type(r, &mut leaves, &mut arrows, false);
                format!("{lhs} ~ {rhs}")
            }
            PremiseTemplate::Judgment { .. } => {
                format!("{} |- {} : {}", tagged[0], tagged[1], tagged[2])
            }
        }
    }

    pub fn conclusion_text(&self) -> String {
        let tagged: Vec<String> = self
            .schema
            .conclusion
            .positions()
            .into_iter()
            .zip(&self.conclusion)
            .map(|(v, p)| format!("{v}{p}"))
            .collect();
        let term = &tagged[1..tagged.len() - 1];
        let term = match self.schema.conclusion.term {
            TermTemplate::Var(_) => term[0].clone(),
            TermTemplate::Lam(..) => format!("\\{} . {}", term[0], term[1]),
            TermTemplate::ALam(..) => format!("\\{} : {} . {}", term[0], term[1], term[2]),
            TermTemplate::App(..) => format!("{} {}", term[0], term[1]),
            TermTemplate::Let(..) => format!("let {} = {} in {}", term[0], term[1], term[2]),
        };
        format!("{} |- {} : {}", tagged[0], term, tagged[tagged.len() - 1])
    }
}

fn render_type(
    t: &TypeTemplate,
    leaves: &mut impl Iterator<Item = String>,
    arrows: &mut std::slice::Iter<'_, Polarity>,
    nested: bool,
) -> String {
    match t {
        TypeTemplate::Var(_) => leaves.next().unwrap_or_default(),
        TypeTemplate::Arrow(a, b) => {
            let p = arrows.next().copied().unwrap_or(Polarity::Minus);
            let l = render_type(a, leaves, arrows, true);
            let r = render_type(b, leaves, arrows, false);
            if nested {
                format!("({l} ->{p} {r})")
            } else {
                format!("{l} ->{p} {r}")
            }
        }
    }
}

impl fmt::Display for ModedRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} at {}", self.schema.name, self.mode)?;
        let mut width = 0;
        for i in 0..self.premises.len() {
            let line = self.premise_text(i);
            width = width.max(line.len());
            writeln!(f, "  {line}")?;
        }
        let concl = self.conclusion_text();
        writeln!(f, "  {}", "-".repeat(width.max(concl.len())))?;
        write!(f, "  {concl}")
    }
}

/// A dataflow order of the premises: each fires once every premise that
/// produces one of its inputs has fired. Ties go to the earlier premise.
pub fn firing_order(moded: &ModedRule) -> Result<Vec<usize>, FiringError> {
    let deps = moded.dependencies()?;
    let n = deps.len();
    let mut indegree: Vec<usize> = deps.iter().map(|d| d.len()).collect();
    let mut ready: BTreeSet<usize> = (0..n).filter(|i| indegree[*i] == 0).collect();
    let mut order = Vec::new();
    while let Some(i) = ready.pop_first() {
        order.push(i);
        for (j, d) in deps.iter().enumerate() {
            if d.contains(&i) {
                indegree[j] -= 1;
                if indegree[j] == 0 {
                    ready.insert(j);
                }
            }
        }
    }
    if order.len() < n {
        let stuck: Vec<usize> = (0..n).filter(|i| !order.contains(i)).collect();
        return Err(FiringError::Cycle(stuck));
    }
    Ok(order)
}

/// Whether `order` fires every premise after the producers of its inputs.
pub fn is_valid_order(moded: &ModedRule, order: &[usize]) -> bool {
    let Ok(deps) = moded.dependencies() else {
        return false;
    };
    let mut sorted = order.to_vec();
    sorted.sort_unstable();
    if sorted != (0..deps.len()).collect::<Vec<_>>() {
        return false;
    }
    order.iter().enumerate().all(|(pos, i)| {
        deps[*i]
            .iter()
            .all(|j| order.iter().position(|k| k == j).is_some_and(|q| q < pos))
    })
}

/// A judgment mode together with its conventional names.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NamedMode {
    pub mode: JudgmentMode,
    pub unidirectional: &'static str,
    pub bidirectional: &'static str,
}

pub const TABLE_MODES: [NamedMode; 5] = {
    use Polarity::{Minus as M, Plus as P};
    [
        NamedMode {
            mode: JudgmentMode::new(P, P, P),
            unidirectional: "Type Checking",
            bidirectional: "Checking",
        },
        NamedMode {
            mode: JudgmentMode::new(P, P, M),
            unidirectional: "",
            bidirectional: "Synthesis, Inference",
        },
        NamedMode {
            mode: JudgmentMode::new(M, P, P),
            unidirectional: "Free Variable Analysis",
            bidirectional: "with checked types",
        },
        NamedMode {
            mode: JudgmentMode::new(M, P, M),
            unidirectional: "",
            bidirectional: "with synthesised types",
        },
        NamedMode {
            mode: JudgmentMode::new(P, M, P),
            unidirectional: "Proof Search, Program Synthesis",
            bidirectional: "",
        },
    ]
};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModeReport {
    pub named: NamedMode,
    /// The mode the rules were analysed at. A known type with a known term
    /// is analysed as synthesis followed by one verifying equality.
    pub analysed_as: JudgmentMode,
    pub final_verify: bool,
    pub outcome: Result<Vec<(ModedRule, Vec<usize>)>, Unmoded>,
}

impl ModeReport {
    pub fn is_moded(&self) -> bool {
        self.outcome.is_ok()
    }
}

impl fmt::Display for ModeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = [self.named.unidirectional, self.named.bidirectional]
            .into_iter()
            .filter(|s| !s.is_empty())
            .collect::<Vec<_>>()
            .join(" / ");
        write!(f, "{}  {names}: ", self.named.mode)?;
        match &self.outcome {
            Ok(_) if self.final_verify => {
                write!(f, "moded (as {} then verify)", self.analysed_as)
            }
            Ok(_) => write!(f, "moded"),
            Err(u) => write!(f, "unmoded ({u})"),
        }
    }
}

fn analyse(
    rules: &[RuleSchema],
    mode: JudgmentMode,
    table: &ConstraintModeTable,
) -> Result<Vec<(ModedRule, Vec<usize>)>, Unmoded> {
    rules
        .iter()
        .map(|r| {
            let moded = assign_modes(r, mode, table)?;
            let order = firing_order(&moded).map_err(|e| Unmoded {
                rule: r.name.clone(),
                reason: e.to_string(),
            })?;
            Ok((moded, order))
        })
        .collect()
}

/// Reports, for each of the five tabled modes, whether every rule is moded.
pub fn classify_table_modes(rules: &[RuleSchema], table: &ConstraintModeTable) -> Vec<ModeReport> {
    TABLE_MODES
        .iter()
        .map(|named| {
            let m = named.mode;
            let final_verify = m.term == Polarity::Plus && m.ty == Polarity::Plus;
            let analysed_as = if final_verify {
                JudgmentMode::new(m.ctx, m.term, Polarity::Minus)
            } else {
                m
            };
            ModeReport {
                named: *named,
                analysed_as,
                final_verify,
                outcome: analyse(rules, analysed_as, table),
            }
        })
        .collect()
}
