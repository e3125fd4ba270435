//! Structured attention masks over language-tagged sequences.
//!
//! Position pairs are classified as bridge (row/column 0), monolingual (equal
//! language tags), cross-lingual (differing tags), or padding. The two-mask
//! schemes route monolingual pairs to the standard query (M1) and
//! cross-lingual pairs to the cross query (M2); the single-mask dropout
//! scheme thins cross-lingual pairs instead. Masks are floats so the
//! deterministic expectation variants reuse the same code path.

use std::rc::Rc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::{LangTag, TokenSequence, CLS};
use crate::{Error, Result};

/// Validated per-position language tags: bridge at 0, padding as a suffix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LanguageTagVector {
    tags: Vec<LangTag>,
}

impl LanguageTagVector {
    pub fn new(tags: Vec<LangTag>) -> Result<Self> {
        if tags.first() != Some(&LangTag::Bridge) {
            return Err(Error::contract("tag vector must start with the bridge position"));
        }
        let mut seen_pad = false;
        for (i, t) in tags.iter().enumerate().skip(1) {
            match t {
                LangTag::Bridge => {
                    return Err(Error::contract(format!(
                        "bridge tag only allowed at position 0, found at {i}"
                    )))
                }
                LangTag::Pad => seen_pad = true,
                LangTag::Lang(_) if seen_pad => {
                    return Err(Error::contract(format!(
                        "padding must form a suffix; content tag at {i} follows padding"
                    )))
                }
                LangTag::Lang(_) => {}
            }
        }
        Ok(LanguageTagVector { tags })
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn tags(&self) -> &[LangTag] {
        &self.tags
    }

    /// Number of non-PAD positions (a prefix, by the suffix invariant).
    pub fn n_real(&self) -> usize {
        self.tags
            .iter()
            .position(|t| *t == LangTag::Pad)
            .unwrap_or(self.tags.len())
    }
}

/// Derive the tag vector from an assembled sequence.
pub fn tag_sequence(seq: &TokenSequence) -> Result<LanguageTagVector> {
    if seq.tokens.first() != Some(&CLS) {
        return Err(Error::contract("sequence must start with [CLS]"));
    }
    LanguageTagVector::new(seq.tags.clone())
}

/// Dense row-major n×n float mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    n: usize,
    data: Vec<f64>,
}

impl Mask {
    pub fn zeros(n: usize) -> Self {
        Mask {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }
}

/// How a mask pair was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MaskScheme {
    #[serde(rename = "non-interfering")]
    NonInterfering,
    #[serde(rename = "interfering")]
    Interfering,
    #[serde(rename = "expected")]
    Expected,
}

/// Masks for the dual-query mixture: M1 gates the standard query scores, M2
/// gates the cross-query scores.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskPair {
    pub m1: Mask,
    pub m2: Mask,
    pub scheme: MaskScheme,
    pub p_mask: f64,
}

/// Pair-role classification used by every builder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PairClass {
    /// PAD self-attention entry — kept in M1 so row normalization is defined.
    PadSelf,
    /// Any other entry touching a PAD position — always zero.
    PadOff,
    /// Row 0 or column 0 between non-PAD positions — always one in all masks.
    Bridge,
    /// Equal language tags (both positions > 0).
    Mono,
    /// Differing language tags (both positions > 0).
    Cross,
}

fn classify(tags: &[LangTag], i: usize, j: usize) -> PairClass {
    let (ti, tj) = (tags[i], tags[j]);
    if ti == LangTag::Pad || tj == LangTag::Pad {
        if i == j {
            return PairClass::PadSelf;
        }
        return PairClass::PadOff;
    }
    if i == 0 || j == 0 {
        return PairClass::Bridge;
    }
    if ti == tj {
        PairClass::Mono
    } else {
        PairClass::Cross
    }
}

fn check_p(p_mask: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p_mask) || !p_mask.is_finite() {
        return Err(Error::contract(format!("p_mask must lie in [0,1], got {p_mask}")));
    }
    Ok(())
}

/// Build a mask pair where monolingual-class M1 entries and cross-class M2
/// entries are 1, and the off-class ("interference") entries are produced by
/// `interference(rng-ish state)`.
fn build_pair_with(
    tags: &LanguageTagVector,
    scheme: MaskScheme,
    p_mask: f64,
    mut interference: impl FnMut() -> f64,
) -> MaskPair {
    let n = tags.len();
    let t = tags.tags();
    let mut m1 = Mask::zeros(n);
    let mut m2 = Mask::zeros(n);
    for i in 0..n {
        for j in 0..n {
            match classify(t, i, j) {
                PairClass::PadSelf => m1.set(i, j, 1.0),
                PairClass::PadOff => {}
                PairClass::Bridge => {
                    m1.set(i, j, 1.0);
                    m2.set(i, j, 1.0);
                }
                PairClass::Mono => {
                    m1.set(i, j, 1.0);
                    m2.set(i, j, interference());
                }
                PairClass::Cross => {
                    m2.set(i, j, 1.0);
                    m1.set(i, j, interference());
                }
            }
        }
    }
    MaskPair {
        m1,
        m2,
        scheme,
        p_mask,
    }
}

/// Deterministic pair: M1 exactly the monolingual+bridge entries, M2 exactly
/// the cross-lingual+bridge entries.
pub fn build_noninterfering(tags: &LanguageTagVector) -> MaskPair {
    build_pair_with(tags, MaskScheme::NonInterfering, 1.0, || 0.0)
}

/// Random pair: core entries 1, interference entries kept with probability
/// `1 − p_mask`. One sample is drawn per sequence and must be shared across
/// every head and layer of a forward pass.
pub fn build_interfering(
    tags: &LanguageTagVector,
    p_mask: f64,
    rng: &mut ChaCha8Rng,
) -> Result<MaskPair> {
    check_p(p_mask)?;
    Ok(build_pair_with(tags, MaskScheme::Interfering, p_mask, || {
        if rng.gen_bool(1.0 - p_mask) {
            1.0
        } else {
            0.0
        }
    }))
}

/// Deterministic stand-in for the interfering pair: each Bernoulli entry is
/// replaced by its expectation `1 − p_mask` (inference-time policy).
pub fn expected_interfering(tags: &LanguageTagVector, p_mask: f64) -> Result<MaskPair> {
    check_p(p_mask)?;
    Ok(build_pair_with(tags, MaskScheme::Expected, p_mask, || 1.0 - p_mask))
}

/// Single-mask builder used by the full-attention paths.
fn build_single_with(tags: &LanguageTagVector, mut cross: impl FnMut() -> f64) -> Mask {
    let n = tags.len();
    let t = tags.tags();
    let mut m = Mask::zeros(n);
    for i in 0..n {
        for j in 0..n {
            match classify(t, i, j) {
                PairClass::PadSelf => m.set(i, j, 1.0),
                PairClass::PadOff => {}
                PairClass::Bridge | PairClass::Mono => m.set(i, j, 1.0),
                PairClass::Cross => m.set(i, j, cross()),
            }
        }
    }
    m
}

/// All-ones attention over non-PAD positions (standard attention, and the
/// dropout baseline's evaluation mode).
pub fn build_full_mask(tags: &LanguageTagVector) -> Mask {
    build_single_with(tags, || 1.0)
}

/// Structured-dropout baseline mask: monolingual and bridge entries 1,
/// cross-lingual entries kept with probability `1 − p_mask`.
pub fn build_dropout_mask(
    tags: &LanguageTagVector,
    p_mask: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Mask> {
    check_p(p_mask)?;
    Ok(build_single_with(tags, || {
        if rng.gen_bool(1.0 - p_mask) {
            1.0
        } else {
            0.0
        }
    }))
}

/// Evaluation-time policy for the dropout baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropoutEvalPolicy {
    /// Evaluate with full attention (default).
    FullAttention,
    /// Replace each Bernoulli entry with its expectation.
    Expectation,
}

/// Deterministic evaluation mask for the dropout baseline.
pub fn expected_dropout(
    tags: &LanguageTagVector,
    p_mask: f64,
    policy: DropoutEvalPolicy,
) -> Result<Mask> {
    check_p(p_mask)?;
    Ok(match policy {
        DropoutEvalPolicy::FullAttention => build_full_mask(tags),
        DropoutEvalPolicy::Expectation => build_single_with(tags, || 1.0 - p_mask),
    })
}

/// The mask object(s) one forward pass attends through. Reference-counted so
/// "all heads and layers see the same masks" is checkable by object identity.
#[derive(Debug, Clone)]
pub enum AttnMasks {
    /// Standard / dropout-baseline attention: a single mask.
    Single(Rc<Mask>),
    /// Dual-query attention: an (M1, M2) pair.
    Pair(Rc<MaskPair>),
}

impl AttnMasks {
    pub fn n(&self) -> usize {
        match self {
            AttnMasks::Single(m) => m.n(),
            AttnMasks::Pair(p) => p.m1.n(),
        }
    }

    /// Stable object identity for sharing checks across heads/layers.
    pub fn id(&self) -> usize {
        match self {
            AttnMasks::Single(m) => Rc::as_ptr(m) as usize,
            AttnMasks::Pair(p) => Rc::as_ptr(p) as usize,
        }
    }
}

#[derive(Serialize)]
struct MaskDump {
    scheme: &'static str,
    p_mask: f64,
    m1: Vec<Vec<f64>>,
    m2: Vec<Vec<f64>>,
}

/// JSON dump for the attention-visualization command:
/// `{"scheme", "p_mask", "m1", "m2"}`; single-mask schemes dump an empty
/// `m2`.
pub fn dump_masks_json(masks: &AttnMasks) -> String {
    let dump = match masks {
        AttnMasks::Single(m) => MaskDump {
            scheme: "single",
            p_mask: 0.0,
            m1: m.to_rows(),
            m2: Vec::new(),
        },
        AttnMasks::Pair(p) => MaskDump {
            scheme: match p.scheme {
                MaskScheme::NonInterfering => "non-interfering",
                MaskScheme::Interfering => "interfering",
                MaskScheme::Expected => "expected",
            },
            p_mask: p.p_mask,
            m1: p.m1.to_rows(),
            m2: p.m2.to_rows(),
        },
    };
    serde_json::to_string(&dump).expect("mask dump serializes")
}
