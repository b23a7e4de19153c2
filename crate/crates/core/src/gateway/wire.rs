//! OpenAI-compatible chat completion wire format.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::{ChatReply, ErrorKind, GatewayError};
use crate::prompting::PromptBundle;
use crate::vision::EncodedImage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub temperature: f32,
    pub messages: Vec<ChatMessage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: MessageContent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MessageContent {
    Text(String),
    Parts(Vec<ContentPart>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ContentPart {
    Text { text: String },
    ImageUrl { image_url: ImageUrl },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageUrl {
    pub url: String,
}

impl ChatRequest {
    pub fn from_bundle(bundle: &PromptBundle) -> Self {
        let user = match &bundle.image_attachment {
            Some(image) => MessageContent::Parts(vec![
                ContentPart::Text {
                    text: bundle.user_text.clone(),
                },
                ContentPart::ImageUrl {
                    image_url: ImageUrl { url: image.data_url() },
                },
            ]),
            None => MessageContent::Text(bundle.user_text.clone()),
        };
        Self {
            model: bundle.decoding.model_id.clone(),
            temperature: bundle.decoding.temperature,
            messages: vec![
                ChatMessage {
                    role: "system".into(),
                    content: MessageContent::Text(bundle.system_instruction.clone()),
                },
                ChatMessage {
                    role: "user".into(),
                    content: user,
                },
            ],
        }
    }

    pub fn describe_image(model: &str, instruction: &str, image: &EncodedImage) -> Self {
        Self {
            model: model.to_string(),
            temperature: 0.0,
            messages: vec![ChatMessage {
                role: "user".into(),
                content: MessageContent::Parts(vec![
                    ContentPart::Text {
                        text: instruction.to_string(),
                    },
                    ContentPart::ImageUrl {
                        image_url: ImageUrl { url: image.data_url() },
                    },
                ]),
            }],
        }
    }

    pub fn image_part_count(&self) -> usize {
        self.messages
            .iter()
            .map(|m| match &m.content {
                MessageContent::Text(_) => 0,
                MessageContent::Parts(parts) => parts
                    .iter()
                    .filter(|p| matches!(p, ContentPart::ImageUrl { .. }))
                    .count(),
            })
            .sum()
    }

    /// Concatenated text of all parts, for logging and mock matching.
    pub fn text(&self) -> String {
        let mut out = Vec::new();
        for m in &self.messages {
            match &m.content {
                MessageContent::Text(t) => out.push(t.as_str()),
                MessageContent::Parts(parts) => {
                    for p in parts {
                        if let ContentPart::Text { text } = p {
                            out.push(text.as_str());
                        }
                    }
                }
            }
        }
        out.join("\n")
    }

    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("chat request serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

fn malformed(detail: impl Into<String>) -> GatewayError {
    GatewayError::new(ErrorKind::MalformedResponse, detail)
}

/// Extracts the first choice of a chat completion response.
pub fn parse_chat_completion(raw: &Value) -> Result<ChatReply, GatewayError> {
    let choice = raw
        .get("choices")
        .and_then(Value::as_array)
        .and_then(|c| c.first())
        .ok_or_else(|| malformed("response has no choices"))?;
    let content = choice
        .pointer("/message/content")
        .ok_or_else(|| malformed("choice has no message content"))?;
    let text = match content {
        Value::String(s) => s.clone(),
        Value::Array(parts) => parts
            .iter()
            .filter_map(|p| p.get("text").and_then(Value::as_str))
            .collect::<Vec<_>>()
            .join(""),
        _ => return Err(malformed("message content is neither text nor parts")),
    };
    Ok(ChatReply {
        text,
        model_id: raw.get("model").and_then(Value::as_str).unwrap_or_default().to_string(),
        finish_reason: choice
            .get("finish_reason")
            .and_then(Value::as_str)
            .unwrap_or("stop")
            .to_string(),
    })
}

/// Minimal chat completion response body carrying `text`.
pub(crate) fn completion_body(model: &str, text: &str) -> Value {
    serde_json::json!({
        "object": "chat.completion",
        "model": model,
        "choices": [{
            "index": 0,
            "message": {"role": "assistant", "content": text},
            "finish_reason": "stop"
        }]
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_string_and_part_content() {
        let r = parse_chat_completion(&completion_body("m", "hello")).unwrap();
        assert_eq!(r.text, "hello");
        assert_eq!(r.model_id, "m");
        assert_eq!(r.finish_reason, "stop");
        let parts = serde_json::json!({
            "model": "m",
            "choices": [{"message": {"content": [{"type": "text", "text": "a"}, {"type": "text", "text": "b"}]}}]
        });
        assert_eq!(parse_chat_completion(&parts).unwrap().text, "ab");
    }

    #[test]
    fn malformed_bodies_are_classified() {
        let err = parse_chat_completion(&serde_json::json!({"error": "x"})).unwrap_err();
        assert_eq!(err.kind, ErrorKind::MalformedResponse);
        assert!(!err.retryable);
    }

    #[test]
    fn image_parts_serialize_openai_style() {
        let img = EncodedImage {
            media_type: "image/jpeg".into(),
            bytes: vec![0xff, 0xd8],
            width: 1,
            height: 1,
        };
        let req = ChatRequest::describe_image("gpt-4o", "Describe.", &img);
        let v = serde_json::to_value(&req).unwrap();
        assert_eq!(v["messages"][0]["content"][0]["type"], "text");
        assert_eq!(v["messages"][0]["content"][1]["type"], "image_url");
        assert_eq!(
            v["messages"][0]["content"][1]["image_url"]["url"],
            "data:image/jpeg;base64,/9g="
        );
        assert_eq!(v["temperature"], 0.0);
    }
}
