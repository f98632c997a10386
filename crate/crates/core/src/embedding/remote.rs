use serde::{Deserialize, Serialize};

use super::{EmbedItem, EmbeddingBackend, EmbeddingError};
use crate::http::JsonClient;

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: Vec<&'a str>,
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f32>>,
}

/// Client for an embedding service (`{"texts": [...]}` → `{"vectors": [[...]]}`).
#[derive(Debug, Clone)]
pub struct HttpEmbedder {
    client: JsonClient,
}

impl HttpEmbedder {
    pub fn new(url: impl Into<String>) -> Self {
        HttpEmbedder {
            client: JsonClient::new(url),
        }
    }
}

impl EmbeddingBackend for HttpEmbedder {
    fn id(&self) -> String {
        format!("http:{}", self.client.url())
    }

    fn embed(&self, items: &[EmbedItem<'_>]) -> Result<Vec<Vec<f32>>, EmbeddingError> {
        let request = EmbedRequest {
            texts: items.iter().map(|i| i.text).collect(),
        };
        let response: EmbedResponse = self.client.post(&request)?;
        Ok(response.vectors)
    }
}
