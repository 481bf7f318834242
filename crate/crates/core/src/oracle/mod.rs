//! The model boundary.
//!
//! Everything the bank knows about a model goes through [`Oracle`]:
//! tokenization, teacher-forced scoring and generation. Implementations here
//! are a remote client speaking the JSON wire protocol ([`HttpOracle`]), a
//! closed-form toy model ([`ToyModel`]), a closure-driven mock for tests and
//! calibration ([`ScriptedOracle`]), and two wrappers ([`CachedOracle`],
//! [`CountingOracle`]).

mod cache;
mod http;
mod scripted;
mod toy;

use serde::{Deserialize, Serialize};

pub use cache::{CachedOracle, CountingOracle};
pub use http::HttpOracle;
pub use scripted::ScriptedOracle;
pub use toy::{ToyModel, TOY_MASK, TOY_MAX_CONTEXT, TOY_VOCAB};

use crate::error::{Error, Result};
use crate::types::{PromptLayout, Token, TokenId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleInfo {
    pub vocab_size: u32,
    pub mask_token_id: TokenId,
    pub model_name: String,
    pub max_context: usize,
}

impl OracleInfo {
    pub fn validate(&self) -> Result<()> {
        if self.mask_token_id >= self.vocab_size {
            return Err(Error::ProtocolError(format!(
                "mask token {} outside vocabulary of {}",
                self.mask_token_id, self.vocab_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub context: Vec<TokenId>,
    pub continuation: Vec<TokenId>,
}

impl ScoreRequest {
    pub fn new(context: Vec<TokenId>, continuation: Vec<TokenId>) -> Self {
        ScoreRequest { context, continuation }
    }

    pub fn check(&self, max_context: usize) -> Result<()> {
        if self.continuation.is_empty() {
            return Err(Error::InvalidArgument("empty continuation".into()));
        }
        let len = self.context.len() + self.continuation.len();
        if len > max_context {
            return Err(Error::ContextTooLong { len, max: max_context });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    /// Teacher-forced probability of each continuation token.
    pub probs: Vec<f64>,
}

impl ScoreResponse {
    pub fn check(&self, req: &ScoreRequest) -> Result<()> {
        if self.probs.len() != req.continuation.len() {
            return Err(Error::ProtocolError(format!(
                "expected {} probabilities, got {}",
                req.continuation.len(),
                self.probs.len()
            )));
        }
        if let Some(p) = self.probs.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
            return Err(Error::ProtocolError(format!("probability {p} outside (0, 1]")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub context: Vec<TokenId>,
    pub max_new_tokens: usize,
    pub temperature: f64,
    pub seed: u64,
}

impl GenerateRequest {
    pub fn greedy(context: Vec<TokenId>, max_new_tokens: usize) -> Self {
        GenerateRequest { context, max_new_tokens, temperature: 0.0, seed: 0 }
    }

    pub fn check(&self, max_context: usize) -> Result<()> {
        if self.max_new_tokens == 0 {
            return Err(Error::InvalidArgument("max_new_tokens must be at least 1".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(Error::InvalidArgument("temperature must be non-negative".into()));
        }
        if self.context.len() > max_context {
            return Err(Error::ContextTooLong { len: self.context.len(), max: max_context });
        }
        Ok(())
    }
}

/// A model that can tokenize, score continuations and generate.
///
/// Implementations must be deterministic: identical requests give identical
/// responses, and generation is a pure function of the request (including
/// its seed).
pub trait Oracle: Send + Sync {
    fn info(&self) -> Result<OracleInfo>;
    fn tokenize(&self, text: &str) -> Result<Vec<Token>>;
    fn detokenize(&self, ids: &[TokenId]) -> Result<String>;
    fn score(&self, req: &ScoreRequest) -> Result<ScoreResponse>;
    fn generate(&self, req: &GenerateRequest) -> Result<Vec<Token>>;
}

impl<O: Oracle + ?Sized> Oracle for &O {
    fn info(&self) -> Result<OracleInfo> {
        (**self).info()
    }
    fn tokenize(&self, text: &str) -> Result<Vec<Token>> {
        (**self).tokenize(text)
    }
    fn detokenize(&self, ids: &[TokenId]) -> Result<String> {
        (**self).detokenize(ids)
    }
    fn score(&self, req: &ScoreRequest) -> Result<ScoreResponse> {
        (**self).score(req)
    }
    fn generate(&self, req: &GenerateRequest) -> Result<Vec<Token>> {
        (**self).generate(req)
    }
}

impl<O: Oracle + ?Sized> Oracle for Box<O> {
    fn info(&self) -> Result<OracleInfo> {
        (**self).info()
    }
    fn tokenize(&self, text: &str) -> Result<Vec<Token>> {
        (**self).tokenize(text)
    }
    fn detokenize(&self, ids: &[TokenId]) -> Result<String> {
        (**self).detokenize(ids)
    }
    fn score(&self, req: &ScoreRequest) -> Result<ScoreResponse> {
        (**self).score(req)
    }
    fn generate(&self, req: &GenerateRequest) -> Result<Vec<Token>> {
        (**self).generate(req)
    }
}

/// Replaces every maskable position outside `coalition` with `mask_id`.
///
/// `coalition` holds indices into the layout's maskable list, not raw token
/// positions.
pub fn apply_mask(layout: &PromptLayout, coalition: &[usize], mask_id: TokenId) -> Result<Vec<TokenId>> {
    let p = layout.maskable().len();
    let mut present = vec![false; p];
    for &k in coalition {
        if k >= p {
            return Err(Error::IndexOutOfRange(k));
        }
        present[k] = true;
    }
    Ok(masked_ids(layout, &present, mask_id))
}

pub(crate) fn masked_ids(layout: &PromptLayout, present: &[bool], mask_id: TokenId) -> Vec<TokenId> {
    let mut ids = layout.ids();
    for (k, &pos) in layout.maskable().iter().enumerate() {
        if !present[k] {
            ids[pos] = mask_id;
        }
    }
    ids
}

/// Splits text into word pieces the way byte-level BPE tokenizers usually
/// do: a run of whitespace attaches to the following word or punctuation
/// mark, alphanumeric runs stay together, and every other character stands
/// alone. Trailing whitespace becomes its own piece.
pub(crate) fn split_pieces(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut it = text.char_indices().peekable();
    loop {
        while matches!(it.peek(), Some(&(_, c)) if c.is_whitespace()) {
            it.next();
        }
        let Some((_, c)) = it.next() else {
            if start < text.len() {
                out.push(&text[start..]);
            }
            return out;
        };
        if c.is_alphanumeric() {
            while matches!(it.peek(), Some(&(_, d)) if d.is_alphanumeric()) {
                it.next();
            }
        }
        let end = it.peek().map_or(text.len(), |&(k, _)| k);
        out.push(&text[start..end]);
        start = end;
    }
}
