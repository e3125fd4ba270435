//! Closed-world theories: facts, single-premise rules, forward chaining.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Ground atom: (entity index, attribute index).
pub type Atom = (usize, usize);

/// Single-premise implication between ground atoms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rule {
    pub premise: Atom,
    pub conclusion: Atom,
}

/// A closed world: derivable = facts plus anything reachable through rules.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Theory {
    pub n_entities: usize,
    pub n_attributes: usize,
    pub facts: Vec<Atom>,
    pub rules: Vec<Rule>,
}

/// A queried atom with its closed-world label and minimal derivation depth
/// (`-1` exactly when the label is false).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Statement {
    pub atom: Atom,
    pub label: bool,
    pub depth: i32,
}

/// Generation knobs for one theory and its statement set.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryConfig {
    pub n_entities: usize,
    pub n_attributes: usize,
    pub n_facts: usize,
    pub n_rules: usize,
    /// Largest derivation depth a true statement may need.
    pub target_depth: usize,
    /// Statements sampled per theory; labels balanced to ±1.
    pub n_statements: usize,
}

impl TheoryConfig {
    pub fn validate(&self) -> Result<()> {
        let space = self.n_entities * self.n_attributes;
        if self.n_entities == 0 || self.n_attributes == 0 {
            return Err(Error::config("theory: entity/attribute counts must be > 0"));
        }
        if self.n_facts == 0 {
            return Err(Error::config("theory: need at least one fact"));
        }
        if self.n_statements < 2 {
            return Err(Error::config("theory: need at least two statements per theory"));
        }
        if self.target_depth > 0 && self.n_rules < self.target_depth {
            return Err(Error::config(format!(
                "theory: target depth {} needs at least that many rules, got {}",
                self.target_depth, self.n_rules
            )));
        }
        if self.n_statements / 2 < self.target_depth + 1 {
            return Err(Error::config(format!(
                "theory: {} statements cannot cover depths 0..={} on the true side",
                self.n_statements, self.target_depth
            )));
        }
        // Facts, one fresh atom per chain level, plus enough left over for
        // negatives and positives.
        let needed = self.n_facts + self.target_depth + self.n_statements;
        if space < needed {
            return Err(Error::data(format!(
                "theory: atom space {space} ({} x {}) too small for {} facts, depth {}, {} statements",
                self.n_entities, self.n_attributes, self.n_facts, self.target_depth, self.n_statements
            )));
        }
        Ok(())
    }
}

impl Theory {
    pub fn validate(&self) -> Result<()> {
        let in_range = |a: &Atom| a.0 < self.n_entities && a.1 < self.n_attributes;
        for f in &self.facts {
            if !in_range(f) {
                return Err(Error::data(format!("theory: fact {f:?} out of symbol range")));
            }
        }
        let distinct: BTreeSet<_> = self.facts.iter().collect();
        if distinct.len() != self.facts.len() {
            return Err(Error::data("theory: duplicate facts"));
        }
        for r in &self.rules {
            if !in_range(&r.premise) || !in_range(&r.conclusion) {
                return Err(Error::data(format!("theory: rule {r:?} out of symbol range")));
            }
            if r.premise == r.conclusion {
                return Err(Error::data(format!("theory: self-loop rule {r:?}")));
            }
        }
        Ok(())
    }
}

/// Minimal derivation depth of every derivable atom.
///
/// Facts have depth 0; applying a rule to an atom of depth d yields depth
/// d+1; the map records the minimum over all derivations (relaxation to a
/// fixpoint, which exists because depths only decrease and are bounded by 0).
pub fn closure_depths(theory: &Theory) -> BTreeMap<Atom, usize> {
    let mut depth: BTreeMap<Atom, usize> = BTreeMap::new();
    for f in &theory.facts {
        depth.insert(*f, 0);
    }
    loop {
        let mut changed = false;
        for r in &theory.rules {
            if let Some(&dp) = depth.get(&r.premise) {
                let cand = dp + 1;
                match depth.get(&r.conclusion) {
                    Some(&dc) if dc <= cand => {}
                    _ => {
                        depth.insert(r.conclusion, cand);
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            return depth;
        }
    }
}

/// Closed-world label and depth for one atom: `(true, depth)` when derivable,
/// `(false, -1)` otherwise.
pub fn infer_label(theory: &Theory, atom: Atom) -> (bool, i32) {
    match closure_depths(theory).get(&atom) {
        Some(&d) => (true, d as i32),
        None => (false, -1),
    }
}

/// Generate one theory plus a balanced statement set.
///
/// Post-conditions: every true statement has depth ≤ `target_depth`; when
/// `target_depth > 0`, at least one true statement exists per depth level;
/// labels are balanced to ±1; output is a pure function of `(cfg, rng)`.
pub fn generate_theory(cfg: &TheoryConfig, rng: &mut ChaCha8Rng) -> Result<(Theory, Vec<Statement>)> {
    cfg.validate()?;
    const MAX_ATTEMPTS: usize = 200;
    for _ in 0..MAX_ATTEMPTS {
        if let Some(out) = try_generate(cfg, rng) {
            return Ok(out);
        }
    }
    Err(Error::data(format!(
        "theory generation failed after {MAX_ATTEMPTS} attempts for config {cfg:?}"
    )))
}

fn try_generate(cfg: &TheoryConfig, rng: &mut ChaCha8Rng) -> Option<(Theory, Vec<Statement>)> {
    let all_atoms: Vec<Atom> = (0..cfg.n_entities)
        .flat_map(|e| (0..cfg.n_attributes).map(move |a| (e, a)))
        .collect();

    // Facts: distinct atoms.
    let mut pool = all_atoms.clone();
    pool.shuffle(rng);
    let facts: Vec<Atom> = pool[..cfg.n_facts].to_vec();
    let fact_set: BTreeSet<Atom> = facts.iter().copied().collect();

    // A deliberate chain guarantees candidates at every depth level; the
    // closure check below keeps it honest against shortcut rules.
    let mut rules: Vec<Rule> = Vec::with_capacity(cfg.n_rules);
    let mut fresh = pool[cfg.n_facts..].to_vec();
    let mut prev = *facts.first()?;
    for _ in 0..cfg.target_depth {
        let next = fresh.pop()?;
        rules.push(Rule {
            premise: prev,
            conclusion: next,
        });
        prev = next;
    }
    while rules.len() < cfg.n_rules {
        let premise = all_atoms[rng.gen_range(0..all_atoms.len())];
        let conclusion = all_atoms[rng.gen_range(0..all_atoms.len())];
        if premise == conclusion {
            continue;
        }
        rules.push(Rule {
            premise,
            conclusion,
        });
    }
    rules.shuffle(rng);

    let theory = Theory {
        n_entities: cfg.n_entities,
        n_attributes: cfg.n_attributes,
        facts,
        rules,
    };

    // Candidate pools by depth, bounded by the target.
    let depths = closure_depths(&theory);
    let mut by_depth: Vec<Vec<Atom>> = vec![Vec::new(); cfg.target_depth + 1];
    for (&atom, &d) in &depths {
        if d <= cfg.target_depth {
            by_depth[d].push(atom);
        }
    }
    if by_depth.iter().any(|v| v.is_empty()) {
        return None;
    }
    let negatives: Vec<Atom> = all_atoms
        .iter()
        .copied()
        .filter(|a| !depths.contains_key(a))
        .collect();

    // For odd counts the extra statement lands on a random side so large
    // collections stay balanced in expectation, not just per theory.
    let extra = cfg.n_statements % 2;
    let extra_true = if extra == 1 && rng.gen_bool(0.5) { 1 } else { 0 };
    let n_true = cfg.n_statements / 2 + extra_true;
    let n_false = cfg.n_statements - n_true;
    if negatives.len() < n_false {
        return None;
    }

    // One true statement per depth level first, then uniform fill.
    let mut trues: Vec<Atom> = Vec::with_capacity(n_true);
    let mut used: BTreeSet<Atom> = BTreeSet::new();
    for level in by_depth.iter() {
        if trues.len() == n_true {
            break;
        }
        let pick = level[rng.gen_range(0..level.len())];
        if used.insert(pick) {
            trues.push(pick);
        } else {
            return None;
        }
    }
    let mut true_pool: Vec<Atom> = by_depth
        .iter()
        .flatten()
        .copied()
        .filter(|a| !used.contains(a))
        .collect();
    true_pool.shuffle(rng);
    while trues.len() < n_true {
        trues.push(true_pool.pop()?);
    }

    let mut neg_pool = negatives;
    neg_pool.shuffle(rng);
    let falses: Vec<Atom> = neg_pool[..n_false].to_vec();
    debug_assert!(falses.iter().all(|a| !fact_set.contains(a)));

    let mut statements: Vec<Statement> = trues
        .into_iter()
        .map(|atom| Statement {
            atom,
            label: true,
            depth: depths[&atom] as i32,
        })
        .chain(falses.into_iter().map(|atom| Statement {
            atom,
            label: false,
            depth: -1,
        }))
        .collect();
    statements.shuffle(rng);
    Some((theory, statements))
}
