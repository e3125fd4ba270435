//! Encoder forward passes on the autodiff tape.
//!
//! Attention probabilities are computed as
//! `P = rownorm(M1 ⊙ exp(S − c) + M2 ⊙ exp(S_c − c))` where `S`/`S_c` are the
//! standard and cross-query score matrices and `c` is the per-row maximum
//! over the unmasked entries of both. Subtracting one shared per-row constant
//! before the exponentials leaves `P` unchanged mathematically (the
//! normalization divides it out) while preventing overflow, so `c` is treated
//! as a gradient-free constant. Single-mask schemes use the same machinery
//! with one score matrix.

use std::collections::BTreeMap;
use std::rc::Rc;

use crate::data::TokenSequence;
use crate::masks::{AttnMasks, Mask, MaskPair};
use crate::tensor::{Tape, Tensor, Var};
use crate::{Error, Result};

use super::config::{AttentionScheme, ModelConfig, QcrossKey};
use super::params::ModelParams;

/// Layer-norm variance floor.
pub const LN_EPS: f64 = 1e-12;

/// Per-call record of what a forward pass computed and touched.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Attention probabilities, `attn[layer][head]` of shape n×n.
    pub attn: Vec<Vec<Tensor>>,
    /// Identity of the mask object observed by each (layer, head), in order.
    /// All entries equal ⇔ one mask object was shared across the pass.
    pub mask_ids: Vec<usize>,
    /// Final logits.
    pub logits: Tensor,
}

/// A completed forward pass: the tape (ready for a loss + backward), the
/// output logits, and the parameter leaves for gradient readout.
pub struct ForwardPass {
    pub tape: Tape,
    pub logits: Var,
    /// Parameter name → leaf variable, for every tensor this pass read.
    pub leaves: BTreeMap<String, Var>,
    pub trace: Option<ForwardTrace>,
}

impl ForwardPass {
    /// Names of parameters the pass actually read (the instrumented access
    /// log behind the swap-isolation checks).
    pub fn params_read(&self) -> Vec<String> {
        self.leaves.keys().cloned().collect()
    }
}

/// Per-row maximum of the unmasked score entries across one or two matrices.
fn joint_row_max(
    n: usize,
    s1: &[f64],
    m1: &[f64],
    second: Option<(&[f64], &[f64])>,
) -> Result<Vec<f64>> {
    let mut shift = Vec::with_capacity(n);
    for i in 0..n {
        let mut best = f64::NEG_INFINITY;
        for j in 0..n {
            if m1[i * n + j] != 0.0 {
                best = best.max(s1[i * n + j]);
            }
            if let Some((s2, m2)) = second {
                if m2[i * n + j] != 0.0 {
                    best = best.max(s2[i * n + j]);
                }
            }
        }
        if best == f64::NEG_INFINITY {
            return Err(Error::contract(format!(
                "attention row {i} is fully masked and cannot be normalized"
            )));
        }
        shift.push(best);
    }
    Ok(shift)
}

/// Dual-query attention probabilities for one head.
pub fn mixture_probs(
    tape: &mut Tape,
    s: Var,
    s_cross: Var,
    m1: Rc<Vec<f64>>,
    m2: Rc<Vec<f64>>,
) -> Result<Var> {
    let shape = tape.shape(s).to_vec();
    if shape.len() != 2 || shape[0] != shape[1] {
        return Err(Error::contract(format!(
            "mixture_probs: scores must be square, got {shape:?}"
        )));
    }
    let n = shape[0];
    let shift = joint_row_max(n, tape.data(s), &m1, Some((tape.data(s_cross), &m2)))?;
    let e1 = tape.masked_exp(s, m1, shift.clone())?;
    let e2 = tape.masked_exp(s_cross, m2, shift)?;
    let mix = tape.add(e1, e2)?;
    tape.row_normalize(mix)
}

/// Single-query masked attention probabilities for one head.
pub fn single_mask_probs(tape: &mut Tape, s: Var, m: Rc<Vec<f64>>) -> Result<Var> {
    let shape = tape.shape(s).to_vec();
    if shape.len() != 2 || shape[0] != shape[1] {
        return Err(Error::contract(format!(
            "single_mask_probs: scores must be square, got {shape:?}"
        )));
    }
    let shift = joint_row_max(shape[0], tape.data(s), &m, None)?;
    let e = tape.masked_exp(s, m, shift)?;
    tape.row_normalize(e)
}

/// Mask payloads converted once per pass so every layer and head shares the
/// identical buffers.
enum MaskVars {
    Single(Rc<Vec<f64>>),
    Pair(Rc<Vec<f64>>, Rc<Vec<f64>>),
}

impl MaskVars {
    fn id(&self) -> usize {
        match self {
            MaskVars::Single(m) => Rc::as_ptr(m) as usize,
            MaskVars::Pair(m1, _) => Rc::as_ptr(m1) as usize,
        }
    }
}

/// Immutable view running forward passes over one parameter snapshot.
pub struct Encoder<'a> {
    pub cfg: &'a ModelConfig,
    pub params: &'a ModelParams,
}

struct Ctx<'a> {
    params: &'a ModelParams,
    tape: Tape,
    leaves: BTreeMap<String, Var>,
}

impl Ctx<'_> {
    /// Memoized parameter leaf: one tape node per distinct tensor per pass.
    fn p(&mut self, name: &str) -> Result<Var> {
        if let Some(&v) = self.leaves.get(name) {
            return Ok(v);
        }
        let t = self.params.get(name)?;
        let v = self.tape.leaf(t);
        self.leaves.insert(name.to_string(), v);
        Ok(v)
    }

    /// `x·W + b` with `W`, `b` taken from the store.
    fn dense(&mut self, x: Var, w: &str, b: &str) -> Result<Var> {
        let wv = self.p(w)?;
        let bv = self.p(b)?;
        let xw = self.tape.matmul(x, wv)?;
        self.tape.add_row_bias(xw, bv)
    }

    fn layer_norm(&mut self, x: Var, prefix: &str) -> Result<Var> {
        let g = self.p(&format!("{prefix}/gamma"))?;
        let b = self.p(&format!("{prefix}/beta"))?;
        self.tape.layer_norm(x, g, b, LN_EPS)
    }
}

impl<'a> Encoder<'a> {
    pub fn new(cfg: &'a ModelConfig, params: &'a ModelParams) -> Self {
        Encoder { cfg, params }
    }

    fn check_masks(&self, seq_len: usize, masks: &AttnMasks, qcross: Option<QcrossKey>) -> Result<()> {
        if masks.n() != seq_len {
            return Err(Error::contract(format!(
                "mask dimension {} does not match sequence length {seq_len}",
                masks.n()
            )));
        }
        match (self.cfg.scheme, masks) {
            (AttentionScheme::Standard | AttentionScheme::DropoutBaseline, AttnMasks::Single(_)) => {
                if qcross.is_some() {
                    return Err(Error::contract(
                        "single-query schemes take no cross-query key",
                    ));
                }
                Ok(())
            }
            (AttentionScheme::SharedQcross | AttentionScheme::PairQcross, AttnMasks::Pair(_)) => {
                if qcross.is_none() {
                    return Err(Error::contract(
                        "dual-query schemes require a cross-query key",
                    ));
                }
                Ok(())
            }
            (scheme, _) => Err(Error::contract(format!(
                "mask kind does not match attention scheme {scheme:?}"
            ))),
        }
    }

    /// Token + position + segment embedding, layer-normed.
    fn embed(&self, ctx: &mut Ctx, seq: &TokenSequence) -> Result<Var> {
        let n = seq.len();
        if n == 0 {
            return Err(Error::contract("empty sequence"));
        }
        if n > self.cfg.max_seq_len {
            return Err(Error::contract(format!(
                "sequence length {n} exceeds maximum {}",
                self.cfg.max_seq_len
            )));
        }
        let mut tok_rows = Vec::with_capacity(n);
        for &t in &seq.tokens {
            if (t as usize) >= self.cfg.vocab_size {
                return Err(Error::contract(format!(
                    "token id {t} outside vocabulary of size {}",
                    self.cfg.vocab_size
                )));
            }
            tok_rows.push(t as usize);
        }
        let tok_table = ctx.p("embed/tok")?;
        let pos_table = ctx.p("embed/pos")?;
        let seg_table = ctx.p("embed/seg")?;
        let tok = ctx.tape.gather_rows(tok_table, &tok_rows)?;
        let positions: Vec<usize> = (0..n).collect();
        let pos = ctx.tape.gather_rows(pos_table, &positions)?;
        let seg = ctx.tape.gather_rows(seg_table, &seq.segments())?;
        let sum = ctx.tape.add(tok, pos)?;
        let sum = ctx.tape.add(sum, seg)?;
        ctx.layer_norm(sum, "embed/ln")
    }

    /// Stacked encoder layers; returns final hidden states plus the trace
    /// ingredients.
    fn encode(
        &self,
        ctx: &mut Ctx,
        seq: &TokenSequence,
        masks: &AttnMasks,
        qcross: Option<QcrossKey>,
        want_trace: bool,
    ) -> Result<(Var, Vec<Vec<Tensor>>, Vec<usize>)> {
        let mask_vars = match masks {
            AttnMasks::Single(m) => MaskVars::Single(Rc::new(m.data().to_vec())),
            AttnMasks::Pair(p) => MaskVars::Pair(
                Rc::new(p.m1.data().to_vec()),
                Rc::new(p.m2.data().to_vec()),
            ),
        };
        let mut h = self.embed(ctx, seq)?;
        let dh = self.cfg.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let mut attn_trace: Vec<Vec<Tensor>> = Vec::new();
        let mut mask_ids: Vec<usize> = Vec::new();
        for layer in 0..self.cfg.n_layers {
            let at = format!("layer{layer}/attn");
            let q = ctx.dense(h, &format!("{at}/Wq"), &format!("{at}/bq"))?;
            let k = ctx.dense(h, &format!("{at}/Wk"), &format!("{at}/bk"))?;
            let v = ctx.dense(h, &format!("{at}/Wv"), &format!("{at}/bv"))?;
            // The cross query reuses the layer's query bias: the registry
            // swaps only weight matrices.
            let qc = match (&mask_vars, qcross) {
                (MaskVars::Pair(_, _), Some(key)) => {
                    let name = format!("qcross/{}/layer{layer}", key.name());
                    let w = ctx.p(&name)?;
                    let b = ctx.p(&format!("{at}/bq"))?;
                    let hw = ctx.tape.matmul(h, w)?;
                    Some(ctx.tape.add_row_bias(hw, b)?)
                }
                _ => None,
            };
            let mut heads = Vec::with_capacity(self.cfg.n_heads);
            let mut layer_trace = Vec::new();
            for head in 0..self.cfg.n_heads {
                let start = head * dh;
                let qh = ctx.tape.slice_cols(q, start, dh)?;
                let kh = ctx.tape.slice_cols(k, start, dh)?;
                let vh = ctx.tape.slice_cols(v, start, dh)?;
                let kt = ctx.tape.transpose(kh)?;
                let s = ctx.tape.matmul(qh, kt)?;
                let s = ctx.tape.scale(s, scale);
                let p = match &mask_vars {
                    MaskVars::Single(m) => single_mask_probs(&mut ctx.tape, s, Rc::clone(m))?,
                    MaskVars::Pair(m1, m2) => {
                        let qch = ctx.tape.slice_cols(qc.expect("dual scheme"), start, dh)?;
                        let sc = ctx.tape.matmul(qch, kt)?;
                        let sc = ctx.tape.scale(sc, scale);
                        mixture_probs(&mut ctx.tape, s, sc, Rc::clone(m1), Rc::clone(m2))?
                    }
                };
                if want_trace {
                    layer_trace.push(ctx.tape.value(p));
                }
                mask_ids.push(mask_vars.id());
                heads.push(ctx.tape.matmul(p, vh)?);
            }
            let concat = ctx.tape.concat_cols(&heads)?;
            let proj = ctx.dense(concat, &format!("{at}/Wo"), &format!("{at}/bo"))?;
            let res = ctx.tape.add(h, proj)?;
            h = ctx.layer_norm(res, &format!("{at}/ln"))?;
            let ff = format!("layer{layer}/ffn");
            let f1 = ctx.dense(h, &format!("{ff}/W1"), &format!("{ff}/b1"))?;
            let f1 = ctx.tape.gelu(f1);
            let f2 = ctx.dense(f1, &format!("{ff}/W2"), &format!("{ff}/b2"))?;
            let res = ctx.tape.add(h, f2)?;
            h = ctx.layer_norm(res, &format!("{ff}/ln"))?;
            if want_trace {
                attn_trace.push(layer_trace);
            }
        }
        Ok((h, attn_trace, mask_ids))
    }

    /// Classification pass: pooled bridge position → 2-way logits.
    pub fn classify(
        &self,
        seq: &TokenSequence,
        masks: &AttnMasks,
        qcross: Option<QcrossKey>,
        want_trace: bool,
    ) -> Result<ForwardPass> {
        self.check_masks(seq.len(), masks, qcross)?;
        let mut ctx = Ctx {
            params: self.params,
            tape: Tape::new(),
            leaves: BTreeMap::new(),
        };
        let (h, attn, mask_ids) = self.encode(&mut ctx, seq, masks, qcross, want_trace)?;
        let cls_row = ctx.tape.gather_rows(h, &[0])?;
        let pooled = ctx.dense(cls_row, "pooler/W", "pooler/b")?;
        let pooled = ctx.tape.tanh(pooled);
        let logits = ctx.dense(pooled, "cls/W", "cls/b")?;
        let trace = want_trace.then(|| ForwardTrace {
            attn,
            mask_ids,
            logits: ctx.tape.value(logits),
        });
        Ok(ForwardPass {
            tape: ctx.tape,
            logits,
            leaves: ctx.leaves,
            trace,
        })
    }

    /// Masked-token pass: logits over the vocabulary at each masked position.
    /// `seq` carries the already-masked tokens; `special` flags must describe
    /// the original sequence so masked content positions stay legal.
    pub fn mlm(
        &self,
        seq: &TokenSequence,
        positions: &[usize],
        masks: &AttnMasks,
        qcross: Option<QcrossKey>,
    ) -> Result<ForwardPass> {
        self.check_masks(seq.len(), masks, qcross)?;
        if positions.is_empty() {
            return Err(Error::contract("masked-token pass requires at least one position"));
        }
        for &p in positions {
            if p >= seq.len() {
                return Err(Error::contract(format!(
                    "masked position {p} outside sequence of length {}",
                    seq.len()
                )));
            }
            if seq.special[p] {
                return Err(Error::contract(format!(
                    "masked position {p} is a special token"
                )));
            }
        }
        let mut ctx = Ctx {
            params: self.params,
            tape: Tape::new(),
            leaves: BTreeMap::new(),
        };
        let (h, _, _) = self.encode(&mut ctx, seq, masks, qcross, false)?;
        let rows = ctx.tape.gather_rows(h, positions)?;
        let x = ctx.dense(rows, "mlm/W1", "mlm/b1")?;
        let x = ctx.tape.gelu(x);
        let x = ctx.layer_norm(x, "mlm/ln")?;
        let logits = ctx.dense(x, "mlm/W2", "mlm/b2")?;
        Ok(ForwardPass {
            tape: ctx.tape,
            logits,
            leaves: ctx.leaves,
            trace: None,
        })
    }
}

/// Build the full-attention mask wrapper used by the standard scheme.
pub(crate) fn full_single_mask(mask: Mask) -> AttnMasks {
    AttnMasks::Single(Rc::new(mask))
}

/// Wrap a mask pair for a dual-query pass.
pub(crate) fn pair_masks(pair: MaskPair) -> AttnMasks {
    AttnMasks::Pair(Rc::new(pair))
}
