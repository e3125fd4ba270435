//! Synthetic languages over a shared interlingua.
//!
//! Every sentence is first built in an interlingua (function words IS/IF/THEN
//! plus entity and attribute symbols), then surfaced into a language by a
//! per-language vocabulary offset (a bijection on token ids) and a word-order
//! transform (identity or reversal within each sentence). Both transforms are
//! length-preserving, which the attention-stability metric relies on.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

use super::theory::{Atom, Rule, Theory};

// Global special tokens, shared by all languages.
pub const PAD: u32 = 0;
pub const CLS: u32 = 1;
pub const SEP: u32 = 2;
pub const MASK: u32 = 3;
pub const NUM_SPECIALS: u32 = 4;

// Interlingua function words.
const IL_IS: u32 = 0;
const IL_IF: u32 = 1;
const IL_THEN: u32 = 2;
const IL_FUNCTION_WORDS: u32 = 3;

/// Token order within a sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WordOrder {
    #[serde(rename = "forward")]
    Forward,
    #[serde(rename = "reversed-within-sentence")]
    Reversed,
}

/// One synthetic language: a disjoint surface-token range plus word order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LanguageSpec {
    pub id: usize,
    pub vocab_offset: u32,
    pub word_order: WordOrder,
}

/// The full language inventory plus the interlingua symbol budget.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LanguageRegistry {
    specs: Vec<LanguageSpec>,
    max_entities: usize,
    max_attributes: usize,
}

/// Parsed form of one verbalized sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SentenceIr {
    Fact(Atom),
    Rule(Rule),
}

impl LanguageRegistry {
    /// Build the default inventory: language l occupies the l-th interlingua
    /// block above the specials; `reversed` lists ids using reversed order.
    pub fn new(
        n_languages: usize,
        max_entities: usize,
        max_attributes: usize,
        reversed: &[usize],
    ) -> Result<Self> {
        if n_languages == 0 {
            return Err(Error::config("registry: need at least one language"));
        }
        for &r in reversed {
            if r >= n_languages {
                return Err(Error::config(format!(
                    "registry: reversed language id {r} out of range for {n_languages} languages"
                )));
            }
        }
        let il = (IL_FUNCTION_WORDS as usize + max_entities + max_attributes) as u32;
        let specs = (0..n_languages)
            .map(|id| LanguageSpec {
                id,
                vocab_offset: NUM_SPECIALS + id as u32 * il,
                word_order: if reversed.contains(&id) {
                    WordOrder::Reversed
                } else {
                    WordOrder::Forward
                },
            })
            .collect();
        let reg = LanguageRegistry {
            specs,
            max_entities,
            max_attributes,
        };
        reg.validate()?;
        Ok(reg)
    }

    /// Adopt externally supplied specs (e.g. a parsed registry file) after
    /// validating the same invariants `new` guarantees by construction.
    pub fn from_specs(
        specs: Vec<LanguageSpec>,
        max_entities: usize,
        max_attributes: usize,
    ) -> Result<Self> {
        let reg = LanguageRegistry {
            specs,
            max_entities,
            max_attributes,
        };
        reg.validate()?;
        Ok(reg)
    }

    fn validate(&self) -> Result<()> {
        if self.max_entities == 0 || self.max_attributes == 0 {
            return Err(Error::config("registry: zero symbol budget"));
        }
        let il = self.il_size();
        for (i, s) in self.specs.iter().enumerate() {
            if s.id != i {
                return Err(Error::config(format!(
                    "registry: language ids must be dense and ordered; slot {i} holds id {}",
                    s.id
                )));
            }
            if s.vocab_offset < NUM_SPECIALS {
                return Err(Error::config(format!(
                    "registry: language {} overlaps the special tokens",
                    s.id
                )));
            }
        }
        for a in &self.specs {
            for b in &self.specs {
                if a.id < b.id {
                    let (a0, a1) = (a.vocab_offset, a.vocab_offset + il);
                    let (b0, b1) = (b.vocab_offset, b.vocab_offset + il);
                    if a0 < b1 && b0 < a1 {
                        return Err(Error::config(format!(
                            "registry: languages {} and {} have overlapping token ranges",
                            a.id, b.id
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn n_languages(&self) -> usize {
        self.specs.len()
    }

    pub fn specs(&self) -> &[LanguageSpec] {
        &self.specs
    }

    pub fn max_entities(&self) -> usize {
        self.max_entities
    }

    pub fn max_attributes(&self) -> usize {
        self.max_attributes
    }

    /// Interlingua vocabulary size (function words + symbol budget).
    pub fn il_size(&self) -> u32 {
        IL_FUNCTION_WORDS + (self.max_entities + self.max_attributes) as u32
    }

    /// Smallest vocabulary covering the specials and every language range.
    pub fn vocab_size(&self) -> usize {
        self.specs
            .iter()
            .map(|s| (s.vocab_offset + self.il_size()) as usize)
            .max()
            .unwrap_or(NUM_SPECIALS as usize)
    }

    pub fn lang(&self, id: usize) -> Result<&LanguageSpec> {
        self.specs.get(id).ok_or_else(|| Error::MissingKey {
            key: id.to_string(),
            available: self.specs.iter().map(|s| s.id.to_string()).collect(),
        })
    }

    // ── interlingua symbols ─────────────────────────────────────────────

    fn il_entity(&self, e: usize) -> Result<u32> {
        if e >= self.max_entities {
            return Err(Error::config(format!(
                "vocab overflow: entity {e} exceeds budget {}",
                self.max_entities
            )));
        }
        Ok(IL_FUNCTION_WORDS + e as u32)
    }

    fn il_attribute(&self, a: usize) -> Result<u32> {
        if a >= self.max_attributes {
            return Err(Error::config(format!(
                "vocab overflow: attribute {a} exceeds budget {}",
                self.max_attributes
            )));
        }
        Ok(IL_FUNCTION_WORDS + (self.max_entities + a) as u32)
    }

    fn il_sentence(&self, ir: &SentenceIr) -> Result<Vec<u32>> {
        Ok(match ir {
            SentenceIr::Fact((e, a)) => {
                vec![self.il_entity(*e)?, IL_IS, self.il_attribute(*a)?]
            }
            SentenceIr::Rule(r) => vec![
                IL_IF,
                self.il_entity(r.premise.0)?,
                self.il_attribute(r.premise.1)?,
                IL_THEN,
                self.il_entity(r.conclusion.0)?,
                self.il_attribute(r.conclusion.1)?,
            ],
        })
    }

    fn parse_il_sentence(&self, il: &[u32]) -> Result<SentenceIr> {
        let ent = |t: u32| -> Result<usize> {
            let v = t
                .checked_sub(IL_FUNCTION_WORDS)
                .ok_or_else(|| Error::data(format!("expected entity symbol, got il token {t}")))?
                as usize;
            if v >= self.max_entities {
                return Err(Error::data(format!("expected entity symbol, got il token {t}")));
            }
            Ok(v)
        };
        let attr = |t: u32| -> Result<usize> {
            let base = IL_FUNCTION_WORDS as usize + self.max_entities;
            let v = (t as usize)
                .checked_sub(base)
                .ok_or_else(|| Error::data(format!("expected attribute symbol, got il token {t}")))?;
            if v >= self.max_attributes {
                return Err(Error::data(format!("expected attribute symbol, got il token {t}")));
            }
            Ok(v)
        };
        match il {
            [e, t, a] if *t == IL_IS => Ok(SentenceIr::Fact((ent(*e)?, attr(*a)?))),
            [t0, pe, pa, t1, ce, ca] if *t0 == IL_IF && *t1 == IL_THEN => Ok(SentenceIr::Rule(Rule {
                premise: (ent(*pe)?, attr(*pa)?),
                conclusion: (ent(*ce)?, attr(*ca)?),
            })),
            _ => Err(Error::data(format!("unparseable interlingua sentence {il:?}"))),
        }
    }

    // ── surfacing ───────────────────────────────────────────────────────

    /// Verbalize one sentence into a language: offset bijection plus word
    /// order. Length always equals the interlingua length.
    pub fn verbalize_sentence(&self, ir: &SentenceIr, lang: usize) -> Result<Vec<u32>> {
        let spec = self.lang(lang)?;
        let mut toks: Vec<u32> = self
            .il_sentence(ir)?
            .into_iter()
            .map(|t| t + spec.vocab_offset)
            .collect();
        if spec.word_order == WordOrder::Reversed {
            toks.reverse();
        }
        Ok(toks)
    }

    /// Statement verbalization (always a fact-shaped sentence).
    pub fn verbalize_statement(&self, atom: Atom, lang: usize) -> Result<Vec<u32>> {
        self.verbalize_sentence(&SentenceIr::Fact(atom), lang)
    }

    /// Theory verbalization: facts in order, then rules in order, one token
    /// vector per sentence.
    pub fn verbalize_theory(&self, theory: &Theory, lang: usize) -> Result<Vec<Vec<u32>>> {
        let mut out = Vec::with_capacity(theory.facts.len() + theory.rules.len());
        for f in &theory.facts {
            out.push(self.verbalize_sentence(&SentenceIr::Fact(*f), lang)?);
        }
        for r in &theory.rules {
            out.push(self.verbalize_sentence(&SentenceIr::Rule(*r), lang)?);
        }
        Ok(out)
    }

    /// Identify the language owning a surface token.
    pub fn lang_of_token(&self, tok: u32) -> Result<usize> {
        let il = self.il_size();
        for s in &self.specs {
            if tok >= s.vocab_offset && tok < s.vocab_offset + il {
                return Ok(s.id);
            }
        }
        Err(Error::data(format!("token {tok} belongs to no language range")))
    }

    /// Invert [`Self::verbalize_sentence`], recovering the language and IR.
    pub fn detokenize_sentence(&self, tokens: &[u32]) -> Result<(usize, SentenceIr)> {
        if tokens.is_empty() {
            return Err(Error::data("empty sentence"));
        }
        let lang = self.lang_of_token(tokens[0])?;
        let spec = self.lang(lang)?;
        let mut il: Vec<u32> = Vec::with_capacity(tokens.len());
        for &t in tokens {
            if self.lang_of_token(t)? != lang {
                return Err(Error::data("sentence mixes language ranges"));
            }
            il.push(t - spec.vocab_offset);
        }
        if spec.word_order == WordOrder::Reversed {
            il.reverse();
        }
        Ok((lang, self.parse_il_sentence(&il)?))
    }
}

// ── registry file format: JSON array of LanguageSpec ────────────────────

/// Parse registry JSON (fuzzed entry point).
pub fn parse_registry_json(text: &str) -> Result<Vec<LanguageSpec>> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        msg: format!("registry: {e}"),
    })
}

pub fn read_registry(path: &Path, max_entities: usize, max_attributes: usize) -> Result<LanguageRegistry> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::data(format!("registry: cannot read {}: {e}", path.display())))?;
    LanguageRegistry::from_specs(parse_registry_json(&text)?, max_entities, max_attributes)
}

pub fn write_registry(path: &Path, reg: &LanguageRegistry) -> Result<()> {
    let text = serde_json::to_string_pretty(reg.specs()).expect("specs serialize");
    fs::write(path, text + "\n")?;
    Ok(())
}
