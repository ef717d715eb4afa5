//! Seeded random terms for differential runs.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::constraints::{Context, MonoType};
use crate::syntax::{parse_context, Name, Term};
use crate::System;

#[derive(Clone, Debug)]
pub struct CorpusConfig {
    /// Upper bound on AST nodes per term.
    pub max_size: usize,
    pub max_depth: usize,
    /// Names used for binders.
    pub binders: Vec<Name>,
    pub let_prob: f64,
    pub annotation_prob: f64,
    /// Chance that a variable refers to the context rather than a binder.
    pub context_prob: f64,
    /// Chance that a variable is a name nothing binds.
    pub unbound_prob: f64,
    pub context: Context,
}

const HM_CONTEXT: &str = "one : Int, true : Bool, plus : Int -> Int -> Int, \
    not : Bool -> Bool, id : forall a. a -> a, const : forall a b. a -> b -> a, \
    apply : forall a b. (a -> b) -> a -> b";

const STLC_CONTEXT: &str = "one : Int, true : Bool, plus : Int -> Int -> Int, \
    not : Bool -> Bool, twice : (Int -> Int) -> Int -> Int";

impl CorpusConfig {
    pub fn hm() -> CorpusConfig {
        CorpusConfig {
            max_size: 30,
            max_depth: 8,
            binders: ["x", "y", "z", "f", "g"].into_iter().map(Name::new).collect(),
            let_prob: 0.2,
            annotation_prob: 0.15,
            context_prob: 0.3,
            unbound_prob: 0.02,
            context: parse_context(HM_CONTEXT).expect("preset context parses"),
        }
    }

    pub fn stlc() -> CorpusConfig {
        CorpusConfig {
            let_prob: 0.0,
            context: parse_context(STLC_CONTEXT).expect("preset context parses"),
            ..CorpusConfig::hm()
        }
    }

    pub fn for_system(system: System) -> CorpusConfig {
        match system {
            System::Stlc => CorpusConfig::stlc(),
            System::Hm => CorpusConfig::hm(),
        }
    }
}

struct Gen<'a> {
    rng: ChaCha8Rng,
    cfg: &'a CorpusConfig,
}

impl Gen<'_> {
    fn annotation(&mut self) -> MonoType {
        let base = |g: &mut Self| {
            if g.rng.gen_bool(0.5) {
                MonoType::base("Int")
            } else {
                MonoType::base("Bool")
            }
        };
        if self.rng.gen_bool(0.2) {
            let a = base(self);
            MonoType::arrow(a, base(self))
        } else {
            base(self)
        }
    }

    fn var(&mut self, scope: &[Name]) -> Term {
        if self.rng.gen_bool(self.cfg.unbound_prob) {
            return Term::var("free");
        }
        if scope.is_empty() || self.rng.gen_bool(self.cfg.context_prob) {
            if let Some((n, _)) = self.cfg.context.entries.choose(&mut self.rng) {
                return Term::Var(n.clone());
            }
        }
        match scope.choose(&mut self.rng) {
            Some(n) => Term::Var(n.clone()),
            None => Term::var("free"),
        }
    }

    fn binder(&mut self) -> Name {
        self.cfg
            .binders
            .choose(&mut self.rng)
            .cloned()
            .unwrap_or_else(|| Name::new("x"))
    }

    /// A term of at most `budget` nodes.
    fn term(&mut self, budget: usize, depth: usize, scope: &mut Vec<Name>) -> Term {
        if budget <= 1 || depth + 1 >= self.cfg.max_depth || self.rng.gen_bool(0.15) {
            return self.var(scope);
        }
        let roll: f64 = self.rng.gen();
        if budget >= 3 && roll < self.cfg.let_prob {
            let x = self.binder();
            let left = self.rng.gen_range(1..budget - 1);
            let bound = self.term(left, depth + 1, scope);
            scope.push(x.clone());
            let body = self.term(budget - 1 - left, depth + 1, scope);
            scope.pop();
            return Term::let_in(x.as_str(), bound, body);
        }
        if roll < self.cfg.let_prob + 0.35 {
            let x = self.binder();
            let ann = self
                .rng
                .gen_bool(self.cfg.annotation_prob)
                .then(|| self.annotation());
            scope.push(x.clone());
            let body = self.term(budget - 1, depth + 1, scope);
            scope.pop();
            return match ann {
                Some(a) => Term::alam(x.as_str(), a, body),
                None => Term::lam(x.as_str(), body),
            };
        }
        if budget < 3 {
            return self.var(scope);
        }
        let left = self.rng.gen_range(1..budget - 1);
        let f = self.term(left, depth + 1, scope);
        let a = self.term(budget - 1 - left, depth + 1, scope);
        Term::app(f, a)
    }
}

/// `count` reproducible terms from `seed`.
pub fn generate(cfg: &CorpusConfig, seed: u64, count: usize) -> Vec<Term> {
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(seed),
        cfg,
    };
    (0..count)
        .map(|_| {
            let budget = g.rng.gen_range(1..=cfg.max_size);
            g.term(budget, 0, &mut Vec::new())
        })
        .collect()
}

/// `# seed=N` followed by one term per line.
pub fn dump(seed: u64, terms: &[Term]) -> String {
    let mut out = format!("# seed={seed}\n");
    for t in terms {
        out.push_str(&t.to_string());
        out.push('\n');
    }
    out
}
