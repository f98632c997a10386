use serde::{Deserialize, Serialize};

use super::{ExtractionError, QaAnswer, QaBackend};
use crate::corpus::ContextDocument;
use crate::http::JsonClient;

#[derive(Serialize)]
struct QaRequest<'a> {
    question: &'a str,
    context: &'a str,
    top_k: usize,
    handle_impossible_answer: bool,
}

// With top_k = 1 some servers answer with a bare object.
#[derive(Deserialize)]
#[serde(untagged)]
enum QaResponse {
    Many(Vec<QaAnswer>),
    One(QaAnswer),
}

/// Client for a question-answering service speaking the JSON protocol
/// `{"question", "context", "top_k", "handle_impossible_answer"}`.
#[derive(Debug, Clone)]
pub struct HttpQaBackend {
    client: JsonClient,
}

impl HttpQaBackend {
    pub fn new(url: impl Into<String>) -> Self {
        HttpQaBackend {
            client: JsonClient::new(url),
        }
    }

    pub fn with_retries(mut self, retries: u32) -> Self {
        self.client = self.client.with_retries(retries);
        self
    }
}

impl QaBackend for HttpQaBackend {
    fn id(&self) -> String {
        format!("http:{}", self.client.url())
    }

    fn answer(&self, question: &str, ctx: &ContextDocument, top_k: usize) -> Result<Vec<QaAnswer>, ExtractionError> {
        let request = QaRequest {
            question,
            context: &ctx.text,
            top_k,
            handle_impossible_answer: true,
        };
        let response: QaResponse = self.client.post(&request)?;
        Ok(match response {
            QaResponse::Many(list) => list,
            QaResponse::One(a) => vec![a],
        })
    }
}
