use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{GenerateRequest, Oracle, OracleInfo, ScoreRequest, ScoreResponse};
use crate::error::{Error, Result};
use crate::types::{Token, TokenId};

/// Client for the JSON-over-HTTP oracle protocol.
///
/// The client is `Sync`; callers may issue requests from many threads at
/// once and each response is matched to its own request.
pub struct HttpOracle {
    base: String,
    agent: ureq::Agent,
    info: OnceLock<OracleInfo>,
    piece_text: Mutex<HashMap<TokenId, String>>,
}

#[derive(Serialize)]
struct TextBody<'a> {
    text: &'a str,
}

#[derive(Serialize)]
struct IdsBody<'a> {
    ids: &'a [TokenId],
}

#[derive(Deserialize)]
struct TokensReply {
    tokens: Vec<Token>,
}

#[derive(Deserialize)]
struct TextReply {
    text: String,
}

#[derive(Deserialize)]
struct GenerateReply {
    ids: Vec<TokenId>,
    text: String,
}

#[derive(Deserialize)]
struct ErrorReply {
    error: String,
}

impl HttpOracle {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self::with_timeout(base_url, Duration::from_secs(600))
    }

    pub fn with_timeout(base_url: impl Into<String>, timeout: Duration) -> Self {
        let base = base_url.into().trim_end_matches('/').to_string();
        let agent = ureq::AgentBuilder::new()
            .timeout_connect(Duration::from_secs(10))
            .timeout(timeout)
            .build();
        HttpOracle { base, agent, info: OnceLock::new(), piece_text: Mutex::new(HashMap::new()) }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    fn read<T: DeserializeOwned>(resp: ureq::Response) -> Result<T> {
        let body = resp.into_string().map_err(|e| Error::ProtocolError(e.to_string()))?;
        serde_json::from_str(&body).map_err(|e| Error::ProtocolError(format!("{e}: {body}")))
    }

    fn map_err(&self, err: ureq::Error, context_len: usize) -> Error {
        match err {
            ureq::Error::Status(code, resp) => {
                let msg = resp
                    .into_string()
                    .ok()
                    .and_then(|b| serde_json::from_str::<ErrorReply>(&b).ok().map(|e| e.error).or(Some(b)))
                    .unwrap_or_default();
                match code {
                    413 => Error::ContextTooLong {
                        len: context_len,
                        max: self.info.get().map(|i| i.max_context).unwrap_or(0),
                    },
                    400 => Error::InvalidArgument(msg),
                    _ => Error::ProtocolError(format!("HTTP {code}: {msg}")),
                }
            }
            ureq::Error::Transport(t) => Error::OracleUnreachable(format!("{}: {t}", self.base)),
        }
    }

    fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B, context_len: usize) -> Result<T> {
        let resp = self
            .agent
            .post(&self.url(path))
            .send_json(body)
            .map_err(|e| self.map_err(e, context_len))?;
        Self::read(resp)
    }

    fn piece(&self, id: TokenId) -> Result<String> {
        if let Some(t) = self.piece_text.lock().unwrap().get(&id) {
            return Ok(t.clone());
        }
        let text = self.detokenize(&[id])?;
        self.piece_text.lock().unwrap().insert(id, text.clone());
        Ok(text)
    }
}

impl Oracle for HttpOracle {
    fn info(&self) -> Result<OracleInfo> {
        if let Some(i) = self.info.get() {
            return Ok(i.clone());
        }
        let resp = self.agent.get(&self.url("/v1/info")).call().map_err(|e| self.map_err(e, 0))?;
        let info: OracleInfo = Self::read(resp)?;
        info.validate()?;
        Ok(self.info.get_or_init(|| info).clone())
    }

    fn tokenize(&self, text: &str) -> Result<Vec<Token>> {
        let reply: TokensReply = self
            .post("/v1/tokenize", &TextBody { text }, 0)
            .map_err(|e| match e {
                Error::OracleUnreachable(m) => Error::TokenizationUnavailable(m),
                other => other,
            })?;
        Ok(reply.tokens)
    }

    fn detokenize(&self, ids: &[TokenId]) -> Result<String> {
        let reply: TextReply = self.post("/v1/detokenize", &IdsBody { ids }, 0)?;
        Ok(reply.text)
    }

    fn score(&self, req: &ScoreRequest) -> Result<ScoreResponse> {
        let info = self.info()?;
        req.check(info.max_context)?;
        let resp: ScoreResponse = self.post("/v1/score", req, req.context.len() + req.continuation.len())?;
        resp.check(req)?;
        Ok(resp)
    }

    fn generate(&self, req: &GenerateRequest) -> Result<Vec<Token>> {
        let info = self.info()?;
        req.check(info.max_context)?;
        let reply: GenerateReply = self.post("/v1/generate", req, req.context.len())?;
        if reply.ids.len() > req.max_new_tokens {
            return Err(Error::ProtocolError(format!(
                "asked for at most {} tokens, got {}",
                req.max_new_tokens,
                reply.ids.len()
            )));
        }
        // Re-tokenizing the text usually reproduces the ids in one round trip.
        if let Ok(toks) = self.tokenize(&reply.text) {
            if toks.iter().map(|t| t.id).eq(reply.ids.iter().copied()) {
                return Ok(toks);
            }
        }
        reply.ids.iter().map(|&id| Ok(Token::new(id, self.piece(id)?))).collect()
    }
}
