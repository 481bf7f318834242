use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{split_pieces, GenerateRequest, Oracle, OracleInfo, ScoreRequest, ScoreResponse};
use crate::error::{Error, Result};
use crate::types::{Token, TokenId};

pub const TOY_VOCAB: usize = 64;
pub const TOY_MASK: TokenId = 0;
pub const TOY_MAX_CONTEXT: usize = 256;
const DEFAULT_SEED: u64 = 0x70_79_5f_6d_6f_64_65_6c;
const WEIGHT_SCALE: f64 = 0.5;

/// Surface strings of the toy vocabulary. Word entries carry the leading
/// space they take in running text; lookups ignore case and that space.
const SURFACES: [&str; TOY_VOCAB] = [
    "<mask>", "A", "B", "C", "D", "E", ".", ",", "(", ")", ":", "?", "\"", "!", "'", "\n",
    "-", "+", "=", " the", " is", " not", " because", " answer", " best", " sentence", " it",
    " a", " of", " and", " to", " in", " so", " this", " that", " true", " false", " we",
    " know", " think", " first", " then", " therefore", " common", " sense", " against",
    " good", " bad", " more", " less", " yes", " no", " one", " two", " three", " can",
    " live", " ocean", " people", " are", " all", " step", " by", " you",
];

/// Ids below this are labels and punctuation; out-of-vocabulary words hash
/// into `[FIRST_WORD, TOY_VOCAB)`.
const FIRST_WORD: usize = 19;

/// Closed-form model used for exact verification.
///
/// The next-token distribution is a softmax over logits that are linear in
/// the multiset of unmasked context tokens:
/// `logit[k] = bias[k] + sum over context tokens t != mask of weight[t][k]`.
/// Token order does not matter, and the mask token carries no weight, so
/// masking a position is the same as removing it from the multiset.
///
/// Tokenization splits text into word pieces and maps each to its vocabulary
/// entry, hashing unknown words into the word range. Token texts keep the
/// original surface, so layouts built from them are lossless; `detokenize`
/// only knows canonical surfaces.
#[derive(Debug, Clone)]
pub struct ToyModel {
    weights: Vec<[f64; TOY_VOCAB]>,
    bias: [f64; TOY_VOCAB],
    name: String,
}

impl Default for ToyModel {
    fn default() -> Self {
        Self::new()
    }
}

impl ToyModel {
    pub fn new() -> Self {
        Self::with_seed(DEFAULT_SEED)
    }

    /// A toy model whose weight table is drawn uniformly from
    /// `[-0.5, 0.5]` with the given seed.
    pub fn with_seed(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = vec![[0.0; TOY_VOCAB]; TOY_VOCAB];
        for row in weights.iter_mut().skip(1) {
            for w in row.iter_mut() {
                *w = rng.gen_range(-WEIGHT_SCALE..=WEIGHT_SCALE);
            }
        }
        let mut bias = [0.0; TOY_VOCAB];
        for b in bias.iter_mut() {
            *b = rng.gen_range(-WEIGHT_SCALE..=WEIGHT_SCALE);
        }
        // The mask token is never a likely continuation.
        bias[TOY_MASK as usize] = -20.0;
        ToyModel { weights, bias, name: format!("toy-{seed:x}") }
    }

    /// Replaces the weight row of `id`. Row `TOY_MASK` must stay zero.
    pub fn with_row(mut self, id: TokenId, row: [f64; TOY_VOCAB]) -> Self {
        assert!(id != TOY_MASK, "the mask token row is fixed at zero");
        self.weights[id as usize] = row;
        self
    }

    pub fn weights(&self) -> &[[f64; TOY_VOCAB]] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64; TOY_VOCAB] {
        &self.bias
    }

    pub fn surface(id: TokenId) -> &'static str {
        SURFACES[id as usize]
    }

    /// Vocabulary id for a word piece.
    pub fn lookup(piece: &str) -> TokenId {
        let key = piece.trim();
        if key.is_empty() {
            return 15;
        }
        if let Some(i) = SURFACES.iter().position(|s| s.trim() == key) {
            return i as TokenId;
        }
        let lower = key.to_lowercase();
        if let Some(i) = SURFACES.iter().skip(FIRST_WORD).position(|s| s.trim() == lower) {
            return (i + FIRST_WORD) as TokenId;
        }
        // FNV-1a
        let mut h: u64 = 0xcbf29ce484222325;
        for b in lower.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        (FIRST_WORD as u64 + h % (TOY_VOCAB - FIRST_WORD) as u64) as TokenId
    }

    /// Logits for the token after `context`.
    pub fn logits(&self, context: &[TokenId]) -> [f64; TOY_VOCAB] {
        let mut out = self.bias;
        for &t in context {
            let row = &self.weights[t as usize];
            for (o, w) in out.iter_mut().zip(row) {
                *o += w;
            }
        }
        out
    }

    /// Next-token distribution after `context`.
    pub fn distribution(&self, context: &[TokenId]) -> [f64; TOY_VOCAB] {
        softmax(&self.logits(context), 1.0)
    }

    fn check_ids(&self, ids: &[TokenId]) -> Result<()> {
        match ids.iter().find(|&&t| t as usize >= TOY_VOCAB) {
            Some(t) => Err(Error::InvalidArgument(format!("token id {t} outside toy vocabulary"))),
            None => Ok(()),
        }
    }
}

fn softmax(logits: &[f64; TOY_VOCAB], temperature: f64) -> [f64; TOY_VOCAB] {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; TOY_VOCAB];
    let mut z = 0.0;
    for (o, l) in out.iter_mut().zip(logits) {
        *o = ((l - max) / temperature).exp();
        z += *o;
    }
    for o in out.iter_mut() {
        *o /= z;
    }
    out
}

impl Oracle for ToyModel {
    fn info(&self) -> Result<OracleInfo> {
        Ok(OracleInfo {
            vocab_size: TOY_VOCAB as u32,
            mask_token_id: TOY_MASK,
            model_name: self.name.clone(),
            max_context: TOY_MAX_CONTEXT,
        })
    }

    fn tokenize(&self, text: &str) -> Result<Vec<Token>> {
        Ok(split_pieces(text).into_iter().map(|p| Token::new(Self::lookup(p), p)).collect())
    }

    fn detokenize(&self, ids: &[TokenId]) -> Result<String> {
        self.check_ids(ids)?;
        Ok(ids.iter().map(|&t| Self::surface(t)).collect())
    }

    fn score(&self, req: &ScoreRequest) -> Result<ScoreResponse> {
        req.check(TOY_MAX_CONTEXT)?;
        self.check_ids(&req.context)?;
        self.check_ids(&req.continuation)?;
        let mut logits = self.logits(&req.context);
        let mut probs = Vec::with_capacity(req.continuation.len());
        for &t in &req.continuation {
            probs.push(softmax(&logits, 1.0)[t as usize]);
            for (o, w) in logits.iter_mut().zip(&self.weights[t as usize]) {
                *o += w;
            }
        }
        Ok(ScoreResponse { probs })
    }

    fn generate(&self, req: &GenerateRequest) -> Result<Vec<Token>> {
        req.check(TOY_MAX_CONTEXT)?;
        self.check_ids(&req.context)?;
        let room = TOY_MAX_CONTEXT - req.context.len();
        let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
        let mut logits = self.logits(&req.context);
        let mut out = Vec::new();
        for _ in 0..req.max_new_tokens.min(room) {
            let next = if req.temperature == 0.0 {
                // argmax over non-mask tokens, lowest id on ties
                let mut best = 1;
                for k in 2..TOY_VOCAB {
                    if logits[k] > logits[best] {
                        best = k;
                    }
                }
                best
            } else {
                let mut dist = softmax(&logits, req.temperature);
                dist[TOY_MASK as usize] = 0.0;
                let total: f64 = dist.iter().sum();
                let mut u = rng.gen::<f64>() * total;
                let mut pick = TOY_VOCAB - 1;
                for (k, p) in dist.iter().enumerate().skip(1) {
                    if u < *p {
                        pick = k;
                        break;
                    }
                    u -= p;
                }
                pick
            };
            for (o, w) in logits.iter_mut().zip(&self.weights[next]) {
                *o += w;
            }
            out.push(Token::new(next as TokenId, SURFACES[next]));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn info_constants() {
        let info = ToyModel::new().info().unwrap();
        assert_eq!(info.vocab_size, 64);
        assert_eq!(info.mask_token_id, 0);
        assert_eq!(info.max_context, 256);
        info.validate().unwrap();
    }

    #[test]
    fn distribution_sums_to_one() {
        let toy = ToyModel::new();
        for ctx in [vec![], vec![1, 2, 3], vec![0, 0, 40, 63, 19, 19, 7]] {
            let s: f64 = toy.distribution(&ctx).iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn score_matches_closed_form() {
        let toy = ToyModel::new();
        let ctx = vec![20u32, 33, 57];
        let target = 23u32;
        // logit_k = b_k + sum_j w[j][k]
        let logit = |k: usize| toy.bias()[k] + ctx.iter().map(|&j| toy.weights()[j as usize][k]).sum::<f64>();
        let z: f64 = (0..TOY_VOCAB).map(|k| logit(k).exp()).sum();
        let expected = logit(target as usize).exp() / z;
        let got = toy.score(&ScoreRequest::new(ctx.clone(), vec![target])).unwrap();
        assert!((got.probs[0] - expected).abs() < 1e-12);
        assert_eq!(got, toy.score(&ScoreRequest::new(ctx, vec![target])).unwrap());
    }

    #[test]
    fn teacher_forced_two_tokens() {
        let toy = ToyModel::new();
        let r = toy.score(&ScoreRequest::new(vec![20], vec![21, 22])).unwrap();
        assert_eq!(r.probs.len(), 2);
        let second = toy.score(&ScoreRequest::new(vec![20, 21], vec![22])).unwrap();
        assert_eq!(r.probs[1], second.probs[0]);
    }

    #[test]
    fn context_limit() {
        let toy = ToyModel::new();
        let err = toy.score(&ScoreRequest::new(vec![1; 256], vec![2])).unwrap_err();
        assert_eq!(err, Error::ContextTooLong { len: 257, max: 256 });
    }

    #[test]
    fn generation_is_deterministic() {
        let toy = ToyModel::new();
        let greedy = GenerateRequest::greedy(vec![20, 21], 5);
        let a = toy.generate(&greedy).unwrap();
        assert_eq!(a, toy.generate(&greedy).unwrap());
        assert!(a.len() <= 5);
        let sampled = GenerateRequest { context: vec![20], max_new_tokens: 12, temperature: 0.7, seed: 42 };
        assert_eq!(toy.generate(&sampled).unwrap(), toy.generate(&sampled).unwrap());
        assert!(toy.generate(&GenerateRequest::greedy(vec![20], 0)).is_err());
    }

    #[test]
    fn tokenizer_is_lossless_and_labels_are_fixed() {
        let toy = ToyModel::new();
        let text = "Which statement is against common sense? Sentence (A): \"Lobsters live in the ocean\"";
        let toks = toy.tokenize(text).unwrap();
        assert_eq!(crate::types::tokens_text(&toks), text);
        assert!(toks.iter().all(|t| (t.id as usize) < TOY_VOCAB && t.id != TOY_MASK));
        assert_eq!(ToyModel::lookup("A"), 1);
        assert_eq!(ToyModel::lookup("B"), 2);
        assert_eq!(ToyModel::lookup(" Ocean"), ToyModel::lookup(" ocean"));
        assert!(ToyModel::lookup(" lobsters") as usize >= FIRST_WORD);
    }
}
