//! In-process oracle server speaking the HTTP wire protocol, backed by any
//! `Oracle`. Used to exercise the HTTP client without a real model.
#![allow(dead_code)]

use std::sync::Arc;
use std::thread;
use std::time::Duration;

use ccbank::oracle::{GenerateRequest, Oracle, ScoreRequest};
use ccbank::types::TokenId;
use ccbank::Error;
use serde::Deserialize;
use serde_json::{json, Value};
use tiny_http::{Header, Method, Response, Server};

#[derive(Clone, Default)]
pub struct MockOptions {
    /// Score and generate requests whose context contains this id stall.
    pub slow_token: Option<TokenId>,
    pub delay: Duration,
    /// Advertised in /v1/info instead of the backing oracle's limit; the
    /// server still enforces the real one.
    pub advertised_max_context: Option<usize>,
}

pub struct MockServer {
    pub url: String,
    server: Arc<Server>,
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.server.unblock();
    }
}

#[derive(Deserialize)]
struct TextBody {
    text: String,
}

#[derive(Deserialize)]
struct IdsBody {
    ids: Vec<TokenId>,
}

fn status_of(e: &Error) -> u16 {
    match e {
        Error::ContextTooLong { .. } => 413,
        Error::InvalidArgument(_) => 400,
        _ => 500,
    }
}

fn handle(oracle: &dyn Oracle, opts: &MockOptions, method: &Method, path: &str, body: &str) -> (u16, Value) {
    let bad = |e: serde_json::Error| (400, json!({ "error": e.to_string() }));
    let fail = |e: Error| (status_of(&e), json!({ "error": e.to_string() }));
    let stall = |ctx: &[TokenId]| {
        if opts.slow_token.is_some_and(|t| ctx.contains(&t)) {
            thread::sleep(opts.delay);
        }
    };
    match (method, path) {
        (Method::Get, "/v1/info") => match oracle.info() {
            Ok(mut info) => {
                if let Some(m) = opts.advertised_max_context {
                    info.max_context = m;
                }
                (200, serde_json::to_value(info).unwrap())
            }
            Err(e) => fail(e),
        },
        (Method::Post, "/v1/tokenize") => match serde_json::from_str::<TextBody>(body) {
            Ok(b) => match oracle.tokenize(&b.text) {
                Ok(tokens) => (200, json!({ "tokens": tokens })),
                Err(e) => fail(e),
            },
            Err(e) => bad(e),
        },
        (Method::Post, "/v1/detokenize") => match serde_json::from_str::<IdsBody>(body) {
            Ok(b) => match oracle.detokenize(&b.ids) {
                Ok(text) => (200, json!({ "text": text })),
                Err(e) => fail(e),
            },
            Err(e) => bad(e),
        },
        (Method::Post, "/v1/score") => match serde_json::from_str::<ScoreRequest>(body) {
            Ok(req) => {
                stall(&req.context);
                match oracle.score(&req) {
                    Ok(resp) => (200, serde_json::to_value(resp).unwrap()),
                    Err(e) => fail(e),
                }
            }
            Err(e) => bad(e),
        },
        (Method::Post, "/v1/generate") => match serde_json::from_str::<GenerateRequest>(body) {
            Ok(req) => {
                stall(&req.context);
                match oracle.generate(&req) {
                    Ok(toks) => {
                        let ids: Vec<TokenId> = toks.iter().map(|t| t.id).collect();
                        let text: String = toks.iter().map(|t| t.text.as_str()).collect();
                        (200, json!({ "ids": ids, "text": text }))
                    }
                    Err(e) => fail(e),
                }
            }
            Err(e) => bad(e),
        },
        _ => (404, json!({ "error": format!("no route {path}") })),
    }
}

/// Starts a server on an ephemeral port with `threads` request handlers.
pub fn serve(oracle: Arc<dyn Oracle>, opts: MockOptions, threads: usize) -> MockServer {
    let server = Arc::new(Server::http("127.0.0.1:0").expect("bind mock server"));
    let port = server.server_addr().to_ip().expect("tcp listener").port();
    for _ in 0..threads {
        let server = Arc::clone(&server);
        let oracle = Arc::clone(&oracle);
        let opts = opts.clone();
        thread::spawn(move || {
            while let Ok(mut req) = server.recv() {
                let mut body = String::new();
                let _ = req.as_reader().read_to_string(&mut body);
                let (code, value) = handle(oracle.as_ref(), &opts, req.method(), req.url(), &body);
                let header = Header::from_bytes("Content-Type", "application/json").unwrap();
                let resp = Response::from_string(value.to_string()).with_status_code(code).with_header(header);
                let _ = req.respond(resp);
            }
        });
    }
    MockServer { url: format!("http://127.0.0.1:{port}"), server }
}

/// How the explanation's input attributions relate to the prediction's.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Identical,
    Orthogonal,
    Negated,
}

const PRED_WEIGHTS: &[(&str, f64)] = &[("dogs", 0.05), ("drink", 0.03), ("water", -0.02)];
const OTHER_WEIGHTS: &[(&str, f64)] = &[("fish", 0.04), ("climb", -0.01), ("trees", 0.02)];
pub const CALIBRATION_EXPLANATION: &str = " so the odd one is clear";

/// A ComVE instance whose input words carry the calibration weights.
pub fn calibration_instance() -> ccbank::harness::TaskInstance {
    use ccbank::harness::{AnswerOption, InputSegment, TaskInstance, TaskKind};
    TaskInstance {
        id: "calibration".into(),
        task: TaskKind::ComVE,
        segments: vec![
            InputSegment { name: "sentence_a".into(), text: "Dogs drink water.".into() },
            InputSegment { name: "sentence_b".into(), text: "Fish climb trees.".into() },
        ],
        options: vec![
            AnswerOption { label: "A".into(), text: String::new() },
            AnswerOption { label: "B".into(), text: String::new() },
        ],
        gold: "B".into(),
    }
}

/// Scripted model whose scores are additive in the present input words, so
/// Shapley values equal the per-word weights exactly. Label targets use one
/// weight table and every other target uses a second table chosen by
/// `relation`.
pub fn calibration_oracle(relation: Relation) -> ccbank::oracle::ScriptedOracle {
    use ccbank::oracle::ScriptedOracle;
    let table = |w: &[(&'static str, f64)], sign: f64| -> Vec<(&'static str, f64)> {
        w.iter().map(|(k, v)| (*k, v * sign)).collect()
    };
    let pred = table(PRED_WEIGHTS, 1.0);
    let expl = match relation {
        Relation::Identical => table(PRED_WEIGHTS, 1.0),
        Relation::Orthogonal => table(OTHER_WEIGHTS, 1.0),
        Relation::Negated => table(PRED_WEIGHTS, -1.0),
    };
    ScriptedOracle::new(
        move |ctx, target| {
            let t = target.text.trim();
            let w = if t == "A" || t == "B" { &pred } else { &expl };
            let mut p = if t == "B" { 0.5 } else { 0.4 };
            for tok in ctx {
                let key = tok.text.trim().to_lowercase();
                if let Some((_, v)) = w.iter().find(|(k, _)| *k == key) {
                    p += v;
                }
            }
            p
        },
        |_, _| CALIBRATION_EXPLANATION.to_string(),
    )
}

/// Probability of `target` after the toy model reads `present`, from the
/// model's closed form rather than its `score` method.
pub fn toy_value(toy: &ccbank::oracle::ToyModel, present: &[TokenId], target: TokenId) -> f64 {
    use ccbank::oracle::{TOY_MASK, TOY_VOCAB};
    let logit = |k: usize| {
        toy.bias()[k] + present.iter().filter(|&&t| t != TOY_MASK).map(|&t| toy.weights()[t as usize][k]).sum::<f64>()
    };
    let z: f64 = (0..TOY_VOCAB).map(|k| logit(k).exp()).sum();
    logit(target as usize).exp() / z
}

/// Reference Shapley values of the toy game over the maskable positions of
/// `layout`, by the factorial-weighted sum over subsets. Scaffold tokens are
/// always present.
pub fn reference_shapley(toy: &ccbank::oracle::ToyModel, layout: &ccbank::types::PromptLayout, target: TokenId) -> Vec<f64> {
    let players = layout.maskable();
    let p = players.len();
    let fixed: Vec<TokenId> = (0..layout.len())
        .filter(|i| !players.contains(i))
        .map(|i| layout.tokens()[i].id)
        .collect();
    let value = |mask: usize| {
        let mut ids = fixed.clone();
        ids.extend((0..p).filter(|j| mask & (1 << j) != 0).map(|j| layout.tokens()[players[j]].id));
        toy_value(toy, &ids, target)
    };
    let fact = |n: usize| (1..=n).map(|x| x as f64).product::<f64>();
    let mut phi = vec![0.0; p];
    for (i, out) in phi.iter_mut().enumerate() {
        for mask in 0..(1usize << p) {
            if mask & (1 << i) != 0 {
                continue;
            }
            let s = mask.count_ones() as usize;
            let w = fact(s) * fact(p - s - 1) / fact(p);
            *out += w * (value(mask | (1 << i)) - value(mask));
        }
    }
    phi
}
