//! Synthetic multilingual reasoning data.
//!
//! A [`Theory`] is a closed world of ground facts plus single-premise rules;
//! statements are labeled by forward-chaining derivability (false = not
//! derivable), with depth = minimal number of rule applications. Theories and
//! statements are verbalized through a shared interlingua into K synthetic
//! languages that differ only by a vocabulary offset and optional
//! reversed-within-sentence word order, then assembled into
//! `[CLS] context [SEP] statement [SEP]` sequences with per-token language
//! tags.

mod example;
mod jsonl;
mod language;
mod theory;

pub use example::{
    assemble_example, assemble_pair, build_mix_dataset, build_pair_dataset,
    build_stability_pairs, generate_mono_corpus, generate_parallel_corpus, make_example,
    LangTag, ParallelItem, ReasoningExample, StabilityPair, TokenSequence,
};
pub use jsonl::{parse_jsonl_str, read_jsonl, write_jsonl};
pub use language::{
    parse_registry_json, read_registry, write_registry, LanguageRegistry, LanguageSpec,
    SentenceIr, WordOrder, CLS, MASK, NUM_SPECIALS, PAD, SEP,
};
pub use theory::{closure_depths, generate_theory, infer_label, Atom, Rule, Statement, Theory, TheoryConfig};
