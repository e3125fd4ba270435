//! Scheme-dependent mask construction for training and evaluation passes.

use rand_chacha::ChaCha8Rng;

use crate::masks::{
    build_dropout_mask, build_full_mask, build_interfering, build_noninterfering,
    expected_dropout, expected_interfering, AttnMasks, DropoutEvalPolicy, LanguageTagVector,
};
use crate::Result;

use super::config::{AttentionScheme, ModelConfig};
use super::encoder::{full_single_mask, pair_masks};

/// Masks for one training-time forward pass. Stochastic schemes draw fresh
/// Bernoulli entries from `rng`, so call once per batch element per step.
pub fn build_train_masks(
    cfg: &ModelConfig,
    tags: &LanguageTagVector,
    rng: &mut ChaCha8Rng,
) -> Result<AttnMasks> {
    Ok(match cfg.scheme {
        AttentionScheme::Standard => full_single_mask(build_full_mask(tags)),
        AttentionScheme::DropoutBaseline => {
            full_single_mask(build_dropout_mask(tags, cfg.p_mask, rng)?)
        }
        AttentionScheme::SharedQcross | AttentionScheme::PairQcross => {
            if cfg.p_mask == 1.0 {
                pair_masks(build_noninterfering(tags))
            } else {
                pair_masks(build_interfering(tags, cfg.p_mask, rng)?)
            }
        }
    })
}

/// Deterministic masks for an evaluation pass, using the given policy for the
/// dropout baseline.
pub fn build_eval_masks_with_policy(
    cfg: &ModelConfig,
    tags: &LanguageTagVector,
    policy: DropoutEvalPolicy,
) -> Result<AttnMasks> {
    Ok(match cfg.scheme {
        AttentionScheme::Standard => full_single_mask(build_full_mask(tags)),
        AttentionScheme::DropoutBaseline => {
            full_single_mask(expected_dropout(tags, cfg.p_mask, policy)?)
        }
        AttentionScheme::SharedQcross | AttentionScheme::PairQcross => {
            if cfg.p_mask == 1.0 {
                pair_masks(build_noninterfering(tags))
            } else {
                pair_masks(expected_interfering(tags, cfg.p_mask)?)
            }
        }
    })
}

/// Evaluation masks under the default dropout policy (full attention).
pub fn build_eval_masks(cfg: &ModelConfig, tags: &LanguageTagVector) -> Result<AttnMasks> {
    build_eval_masks_with_policy(cfg, tags, DropoutEvalPolicy::FullAttention)
}
