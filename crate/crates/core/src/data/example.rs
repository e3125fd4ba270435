//! Example assembly: verbalized theories/statements → model input sequences.
//!
//! The classification layout is `[CLS] context [SEP] statement [SEP]`, with a
//! per-token language tag driving mask construction: position 0 is the bridge
//! token, each SEP inherits the language of the segment it terminates, and
//! padding carries a dedicated tag.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

use super::language::{LanguageRegistry, CLS, NUM_SPECIALS, PAD, SEP};
use super::theory::{generate_theory, Statement, Theory, TheoryConfig};

/// Per-position language tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LangTag {
    /// The [CLS] bridge position: attends and is attended everywhere.
    Bridge,
    /// An ordinary token owned by one language (SEP inherits its segment).
    Lang(usize),
    /// Padding: inert except for self-attention.
    Pad,
}

impl LangTag {
    /// Integer encoding used in the parallel-corpus JSONL: language ids are
    /// nonnegative, bridge is -1, padding is -2.
    pub fn to_int(self) -> i32 {
        match self {
            LangTag::Bridge => -1,
            LangTag::Pad => -2,
            LangTag::Lang(l) => l as i32,
        }
    }

    pub fn from_int(v: i32) -> Result<Self> {
        match v {
            -1 => Ok(LangTag::Bridge),
            -2 => Ok(LangTag::Pad),
            l if l >= 0 => Ok(LangTag::Lang(l as usize)),
            _ => Err(Error::data(format!("invalid language tag {v}"))),
        }
    }

    pub fn lang(self) -> Option<usize> {
        match self {
            LangTag::Lang(l) => Some(l),
            _ => None,
        }
    }
}

/// One labeled classification example (JSONL line schema).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReasoningExample {
    pub context: Vec<u32>,
    pub statement: Vec<u32>,
    pub ctx_lang: usize,
    pub stmt_lang: usize,
    pub label: bool,
    pub depth: i32,
}

/// Assembled model input: tokens plus aligned tags and special-token flags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub tokens: Vec<u32>,
    pub tags: Vec<LangTag>,
    /// True where the token is CLS/SEP/PAD — positions exempt from masking
    /// objectives.
    pub special: Vec<bool>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Segment ids: 0 through the first SEP, 1 afterwards.
    pub fn segments(&self) -> Vec<usize> {
        let first_sep = self.tokens.iter().position(|&t| t == SEP);
        self.tokens
            .iter()
            .enumerate()
            .map(|(i, _)| match first_sep {
                Some(s) if i > s => 1,
                _ => 0,
            })
            .collect()
    }

    /// Extend with PAD tokens up to `len`.
    pub fn pad_to(&mut self, len: usize) -> Result<()> {
        if len < self.len() {
            return Err(Error::data(format!(
                "cannot pad length {} down to {len}",
                self.len()
            )));
        }
        self.tokens.resize(len, PAD);
        self.tags.resize(len, LangTag::Pad);
        self.special.resize(len, true);
        Ok(())
    }

    /// Rebuild tags/special flags from raw token+tag integer vectors.
    pub fn from_ints(tokens: Vec<u32>, lang_tags: &[i32]) -> Result<Self> {
        if tokens.len() != lang_tags.len() {
            return Err(Error::data(format!(
                "tokens/lang_tags length mismatch: {} vs {}",
                tokens.len(),
                lang_tags.len()
            )));
        }
        let tags = lang_tags
            .iter()
            .map(|&v| LangTag::from_int(v))
            .collect::<Result<Vec<_>>>()?;
        let special = tokens.iter().map(|&t| t < NUM_SPECIALS).collect();
        Ok(TokenSequence {
            tokens,
            tags,
            special,
        })
    }
}

/// One line of the parallel-corpus JSONL.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParallelItem {
    pub tokens: Vec<u32>,
    pub lang_tags: Vec<i32>,
}

impl ParallelItem {
    pub fn to_sequence(&self) -> Result<TokenSequence> {
        TokenSequence::from_ints(self.tokens.clone(), &self.lang_tags)
    }
}

/// Lay out `[CLS] context [SEP] statement [SEP]` with aligned tags.
pub fn assemble_example(ex: &ReasoningExample) -> TokenSequence {
    assemble_segments(&ex.context, ex.ctx_lang, &ex.statement, ex.stmt_lang)
}

/// Lay out `[CLS] a [SEP] b [SEP]` for a parallel sentence pair.
pub fn assemble_pair(a: &[u32], lang_a: usize, b: &[u32], lang_b: usize) -> TokenSequence {
    assemble_segments(a, lang_a, b, lang_b)
}

fn assemble_segments(a: &[u32], lang_a: usize, b: &[u32], lang_b: usize) -> TokenSequence {
    let n = a.len() + b.len() + 3;
    let mut tokens = Vec::with_capacity(n);
    let mut tags = Vec::with_capacity(n);
    let mut special = Vec::with_capacity(n);

    tokens.push(CLS);
    tags.push(LangTag::Bridge);
    special.push(true);

    for &t in a {
        tokens.push(t);
        tags.push(LangTag::Lang(lang_a));
        special.push(false);
    }
    tokens.push(SEP);
    tags.push(LangTag::Lang(lang_a));
    special.push(true);

    for &t in b {
        tokens.push(t);
        tags.push(LangTag::Lang(lang_b));
        special.push(false);
    }
    tokens.push(SEP);
    tags.push(LangTag::Lang(lang_b));
    special.push(true);

    TokenSequence {
        tokens,
        tags,
        special,
    }
}

/// Verbalize one (theory, statement) pair into a labeled example.
pub fn make_example(
    reg: &LanguageRegistry,
    theory: &Theory,
    statement: &Statement,
    ctx_lang: usize,
    stmt_lang: usize,
) -> Result<ReasoningExample> {
    reg.lang(ctx_lang)?;
    reg.lang(stmt_lang)?;
    let context: Vec<u32> = reg
        .verbalize_theory(theory, ctx_lang)?
        .into_iter()
        .flatten()
        .collect();
    let statement_toks = reg.verbalize_statement(statement.atom, stmt_lang)?;
    Ok(ReasoningExample {
        context,
        statement: statement_toks,
        ctx_lang,
        stmt_lang,
        label: statement.label,
        depth: statement.depth,
    })
}

/// Draw `(theory, statements)` pairs until `n` examples have been emitted,
/// assigning each example's language pair through `pick`.
fn build_examples(
    reg: &LanguageRegistry,
    cfg: &TheoryConfig,
    n: usize,
    rng: &mut ChaCha8Rng,
    mut pick: impl FnMut(usize, &mut ChaCha8Rng) -> (usize, usize),
) -> Result<Vec<ReasoningExample>> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let (theory, statements) = generate_theory(cfg, rng)?;
        for st in &statements {
            if out.len() == n {
                break;
            }
            let (cl, sl) = pick(out.len(), rng);
            out.push(make_example(reg, &theory, st, cl, sl)?);
        }
    }
    Ok(out)
}

/// Monolingual corpus cycling through `langs` (masked-token pretraining and
/// monolingual evaluation data).
pub fn generate_mono_corpus(
    reg: &LanguageRegistry,
    cfg: &TheoryConfig,
    langs: &[usize],
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<ReasoningExample>> {
    if langs.is_empty() {
        return Err(Error::config("mono corpus: empty language list"));
    }
    for &l in langs {
        reg.lang(l)?;
    }
    build_examples(reg, cfg, n, rng, |i, _| {
        let l = langs[i % langs.len()];
        (l, l)
    })
}

/// Cross-lingual dataset: context in `pair.0`, statement in `pair.1`.
pub fn build_pair_dataset(
    reg: &LanguageRegistry,
    cfg: &TheoryConfig,
    pair: (usize, usize),
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<ReasoningExample>> {
    reg.lang(pair.0)?;
    reg.lang(pair.1)?;
    build_examples(reg, cfg, n, rng, |_, _| pair)
}

/// Training mixture: ceil(n/2) monolingual `anchor` examples plus floor(n/2)
/// `(anchor, other)` cross-lingual examples, shuffled.
pub fn build_mix_dataset(
    reg: &LanguageRegistry,
    cfg: &TheoryConfig,
    anchor: usize,
    other: usize,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<ReasoningExample>> {
    reg.lang(anchor)?;
    reg.lang(other)?;
    let n_mono = n.div_ceil(2);
    let mut out = build_examples(reg, cfg, n, rng, |i, _| {
        if i < n_mono {
            (anchor, anchor)
        } else {
            (anchor, other)
        }
    })?;
    out.shuffle(rng);
    Ok(out)
}

/// Parallel pretraining corpus: each item renders one theory sentence in both
/// languages of `pair` as `[CLS] a [SEP] b [SEP]`.
pub fn generate_parallel_corpus(
    reg: &LanguageRegistry,
    cfg: &TheoryConfig,
    pair: (usize, usize),
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<ParallelItem>> {
    if pair.0 == pair.1 {
        return Err(Error::config(format!(
            "parallel corpus: languages must differ, got ({}, {})",
            pair.0, pair.1
        )));
    }
    reg.lang(pair.0)?;
    reg.lang(pair.1)?;
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let (theory, _) = generate_theory(cfg, rng)?;
        let sents_a = reg.verbalize_theory(&theory, pair.0)?;
        let sents_b = reg.verbalize_theory(&theory, pair.1)?;
        for (sa, sb) in sents_a.iter().zip(&sents_b) {
            if out.len() == n {
                break;
            }
            let seq = assemble_pair(sa, pair.0, sb, pair.1);
            out.push(ParallelItem {
                lang_tags: seq.tags.iter().map(|t| t.to_int()).collect(),
                tokens: seq.tokens,
            });
        }
    }
    Ok(out)
}

/// A matched pair for attention-stability measurement: the same theory and
/// statement assembled monolingually (`a`) and code-switched (`b`), plus the
/// position map aligning rows of `a` to rows of `b`.
#[derive(Debug, Clone)]
pub struct StabilityPair {
    pub a: TokenSequence,
    pub b: TokenSequence,
    /// `pos_map[i]` = position in `b` corresponding to position `i` in `a`.
    /// Identity except over the statement span when the two statement
    /// languages use opposite word orders (then the span is reversed).
    pub pos_map: Vec<usize>,
}

/// Build stability pairs: `a` = (lang_a, lang_a), `b` = (lang_a, lang_b) over
/// identical theories and statements. Sequences have equal length because
/// verbalization is length-preserving.
pub fn build_stability_pairs(
    reg: &LanguageRegistry,
    cfg: &TheoryConfig,
    lang_a: usize,
    lang_b: usize,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<StabilityPair>> {
    let order_a = reg.lang(lang_a)?.word_order;
    let order_b = reg.lang(lang_b)?.word_order;
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let (theory, statements) = generate_theory(cfg, rng)?;
        for st in &statements {
            if out.len() == n {
                break;
            }
            let ex_a = make_example(reg, &theory, st, lang_a, lang_a)?;
            let ex_b = make_example(reg, &theory, st, lang_a, lang_b)?;
            let a = assemble_example(&ex_a);
            let b = assemble_example(&ex_b);
            debug_assert_eq!(a.len(), b.len());
            let stmt_start = 1 + ex_a.context.len() + 1;
            let stmt_len = ex_a.statement.len();
            let mut pos_map: Vec<usize> = (0..a.len()).collect();
            if order_a != order_b {
                for (k, slot) in pos_map[stmt_start..stmt_start + stmt_len]
                    .iter_mut()
                    .enumerate()
                {
                    *slot = stmt_start + stmt_len - 1 - k;
                }
            }
            out.push(StabilityPair { a, b, pos_map });
        }
    }
    Ok(out)
}
