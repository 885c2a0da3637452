//! Local HTTP stubs for the policy and retrieval services.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use ragtree::data::{load_corpus, load_dataset};
use ragtree_core::retrieval::{LexicalIndex, RetrievalRequest, Retriever};
use ragtree_core::Question;
use serde_json::{json, Value};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn questions() -> Vec<Question> {
    load_dataset(&fixture("questions.jsonl")).unwrap()
}

/// An axum app served on an ephemeral port for the life of the value.
pub struct Server {
    pub url: String,
    _runtime: tokio::runtime::Runtime,
}

impl Server {
    pub fn start(app: Router) -> Server {
        let runtime = tokio::runtime::Builder::new_multi_thread().worker_threads(4).enable_all().build().unwrap();
        let listener = runtime.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        runtime.spawn(async move { axum::serve(listener, app).await.unwrap() });
        Server { url, _runtime: runtime }
    }
}

pub fn chat_reply(text: &str) -> Value {
    json!({
        "choices": [{"index": 0, "message": {"role": "assistant", "content": text}, "finish_reason": "stop"}],
        "usage": {"prompt_tokens": 10, "completion_tokens": 5}
    })
}

/// Plays a model that only knows what its prompt shows: it answers once the
/// gold answer is visible, searches only from an empty history, and never
/// answers sub-questions from memory. Like real services it drops the stop
/// string it halted on.
pub struct OracleModel {
    questions: Vec<Question>,
    pub calls: AtomicUsize,
}

fn section<'a>(prompt: &'a str, header: &str) -> &'a str {
    let Some(at) = prompt.find(header) else { return "" };
    let rest = &prompt[at + header.len()..];
    let end = rest.find("\n### ").unwrap_or(rest.len());
    &rest[..end]
}

fn strip_stop(text: String, stop: &[String]) -> String {
    for s in stop {
        if let Some(t) = text.strip_suffix(s.as_str()) {
            return t.to_string();
        }
    }
    text
}

impl OracleModel {
    pub fn new(questions: Vec<Question>) -> Self {
        OracleModel { questions, calls: AtomicUsize::new(0) }
    }

    pub fn respond(&self, prompt: &str, temperature: f64, seed: u64, stop: &[String]) -> String {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let asked = section(prompt, "### Question\n").trim();
        let Some(q) = self.questions.iter().find(|q| asked.contains(&q.text)) else {
            return "I cannot tell.".into();
        };
        let gold = &q.gold_answers[0];
        let output_at = prompt.rfind("### Your Output").unwrap_or(prompt.len());
        let history_at = prompt.find("### Previous Iteration").unwrap_or(output_at);
        let visible = prompt[history_at..].to_lowercase();
        let knows = visible.contains(&gold.to_lowercase());
        let history = prompt[history_at..output_at].trim_start_matches("### Previous Iteration").trim();
        let continuation = &prompt[output_at..];
        let text = if prompt.contains("Please generate a query for search engines") {
            if seed.is_multiple_of(3) { "unrelated trivia".to_string() } else { q.text.clone() }
        } else if prompt.starts_with("We will provide you with a question, please answer") {
            "<reasoning> I do not remember </reasoning> <answer> unknown </answer>".into()
        } else if prompt.contains("output the next sub-question") {
            format!("<reasoning> start </reasoning> <question> {} (aspect {}) </question>", q.text, seed % 97)
        } else if prompt.contains("call a search engine by <search>") {
            if knows {
                format!("<think> the evidence names it </think> <answer> {gold} </answer>")
            } else if history.is_empty() && !continuation.contains("<information>") {
                format!("<think> I should look this up </think> <search> {} </search>", q.text)
            } else {
                "<think> nothing useful </think> <answer> unknown </answer>".into()
            }
        } else if knows {
            format!("<reasoning> the documents answer it </reasoning> <answer> {gold} </answer>")
        } else if temperature == 0.0 {
            "<reasoning> forced </reasoning> <answer> unknown </answer>".into()
        } else {
            format!("<reasoning> need evidence </reasoning> <question> {} (detail {}) </question>", q.text, seed % 97)
        };
        strip_stop(text, stop)
    }
}

async fn chat(State(model): State<Arc<OracleModel>>, Json(body): Json<Value>) -> (StatusCode, Json<Value>) {
    let prompt = body["messages"][0]["content"].as_str().unwrap_or_default();
    let temperature = body["temperature"].as_f64().unwrap_or(0.0);
    let seed = body["seed"].as_u64().unwrap_or(0);
    let stop: Vec<String> = body["stop"]
        .as_array()
        .map(|a| a.iter().filter_map(|s| s.as_str().map(String::from)).collect())
        .unwrap_or_default();
    let text = model.respond(prompt, temperature, seed, &stop);
    (StatusCode::OK, Json(chat_reply(&text)))
}

pub fn policy_stub(model: Arc<OracleModel>) -> Server {
    Server::start(Router::new().route("/v1/chat/completions", post(chat)).with_state(model))
}

async fn retrieve(State(index): State<Arc<LexicalIndex>>, Json(body): Json<Value>) -> (StatusCode, Json<Value>) {
    let query = body["query"].as_str().unwrap_or_default();
    let top_k = body["top_k"].as_u64().unwrap_or(3) as usize;
    match RetrievalRequest::new(query, top_k) {
        Ok(req) => {
            let docs = index.retrieve(&req).unwrap();
            (StatusCode::OK, Json(json!({ "docs": docs })))
        }
        Err(e) => (StatusCode::BAD_REQUEST, Json(json!({ "error": e.to_string() }))),
    }
}

pub fn retriever_stub() -> Server {
    let index = Arc::new(LexicalIndex::new(load_corpus(&fixture("corpus.jsonl")).unwrap()));
    Server::start(Router::new().route("/retrieve", post(retrieve)).with_state(index))
}
