use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use super::{split_pieces, GenerateRequest, Oracle, OracleInfo, ScoreRequest, ScoreResponse};
use crate::error::{Error, Result};
use crate::types::{Token, TokenId};

const SCRIPT_VOCAB: u32 = 1 << 24;
const SCRIPT_MAX_CONTEXT: usize = 1 << 16;
pub const SCRIPT_MASK: TokenId = 0;
const MASK_TEXT: &str = "<mask>";

type ScoreFn = dyn Fn(&[Token], &Token) -> f64 + Send + Sync;
type GenerateFn = dyn Fn(&[Token], &GenerateRequest) -> String + Send + Sync;

/// An oracle whose behavior is given by closures over token text.
///
/// Pieces are hashed into a 2^24 id space, so every distinct word gets its
/// own id in practice and the closures can read the context back as text.
/// Masked positions appear as tokens with id 0 and text `<mask>`.
///
/// The score closure returns the probability of the next token given the
/// context; it must stay in `(0, 1]`. The generation closure returns text,
/// which is tokenized and cut at `max_new_tokens`.
#[derive(Clone)]
pub struct ScriptedOracle {
    score_fn: Arc<ScoreFn>,
    generate_fn: Arc<GenerateFn>,
    names: Arc<Mutex<HashMap<TokenId, String>>>,
    model_name: String,
}

impl std::fmt::Debug for ScriptedOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScriptedOracle").field("model_name", &self.model_name).finish()
    }
}

impl ScriptedOracle {
    pub fn new<S, G>(score: S, generate: G) -> Self
    where
        S: Fn(&[Token], &Token) -> f64 + Send + Sync + 'static,
        G: Fn(&[Token], &GenerateRequest) -> String + Send + Sync + 'static,
    {
        let mut names = HashMap::new();
        names.insert(SCRIPT_MASK, MASK_TEXT.to_string());
        ScriptedOracle {
            score_fn: Arc::new(score),
            generate_fn: Arc::new(generate),
            names: Arc::new(Mutex::new(names)),
            model_name: "scripted".into(),
        }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.model_name = name.into();
        self
    }

    /// Id a piece of text tokenizes to.
    pub fn piece_id(piece: &str) -> TokenId {
        let mut h: u64 = 0xcbf29ce484222325;
        for b in piece.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        1 + (h % (SCRIPT_VOCAB as u64 - 1)) as TokenId
    }

    fn resolve(&self, ids: &[TokenId]) -> Result<Vec<Token>> {
        let names = self.names.lock().unwrap();
        ids.iter()
            .map(|&id| match names.get(&id) {
                Some(t) => Ok(Token::new(id, t.clone())),
                None => Err(Error::InvalidArgument(format!("unknown token id {id}"))),
            })
            .collect()
    }
}

impl Oracle for ScriptedOracle {
    fn info(&self) -> Result<OracleInfo> {
        Ok(OracleInfo {
            vocab_size: SCRIPT_VOCAB,
            mask_token_id: SCRIPT_MASK,
            model_name: self.model_name.clone(),
            max_context: SCRIPT_MAX_CONTEXT,
        })
    }

    fn tokenize(&self, text: &str) -> Result<Vec<Token>> {
        let pieces = split_pieces(text);
        let mut names = self.names.lock().unwrap();
        Ok(pieces
            .into_iter()
            .map(|p| {
                let id = Self::piece_id(p);
                names.entry(id).or_insert_with(|| p.to_string());
                Token::new(id, p)
            })
            .collect())
    }

    fn detokenize(&self, ids: &[TokenId]) -> Result<String> {
        Ok(self.resolve(ids)?.into_iter().map(|t| t.text).collect())
    }

    fn score(&self, req: &ScoreRequest) -> Result<ScoreResponse> {
        req.check(SCRIPT_MAX_CONTEXT)?;
        let mut ctx = self.resolve(&req.context)?;
        let cont = self.resolve(&req.continuation)?;
        let mut probs = Vec::with_capacity(cont.len());
        for t in cont {
            probs.push((self.score_fn)(&ctx, &t));
            ctx.push(t);
        }
        let resp = ScoreResponse { probs };
        resp.check(req)?;
        Ok(resp)
    }

    fn generate(&self, req: &GenerateRequest) -> Result<Vec<Token>> {
        req.check(SCRIPT_MAX_CONTEXT)?;
        let ctx = self.resolve(&req.context)?;
        let text = (self.generate_fn)(&ctx, req);
        let mut out = self.tokenize(&text)?;
        out.truncate(req.max_new_tokens);
        Ok(out)
    }
}
