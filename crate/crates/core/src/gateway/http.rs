//! OpenAI-compatible HTTP transport.

use std::collections::HashMap;
use std::sync::Mutex;
use std::time::Duration;

use async_trait::async_trait;
use reqwest::{Client, RequestBuilder, StatusCode};
use serde_json::Value;

use super::{AudioClip, ChatCall, ErrorKind, GatewayError, ProviderConfig, Secret, TranscriptSegment, Transport};

/// PCM accepted by the transcription endpoint: 16 kHz, mono, 16-bit.
const PCM_RATE: u32 = 16_000;
const PCM_BYTES_PER_SECOND: usize = PCM_RATE as usize * 2;
/// Buffered audio is force-finalized after this much speech.
const FORCED_FINAL_MS: usize = 5_000;

pub struct HttpTransport {
    client: Client,
    base_url: String,
    api_key: Secret,
    asr_model: String,
    buffers: Mutex<HashMap<String, PcmBuffer>>,
}

#[derive(Default)]
struct PcmBuffer {
    bytes: Vec<u8>,
    /// Milliseconds of audio already transcribed for this stream.
    offset_ms: u64,
}

impl std::fmt::Debug for HttpTransport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpTransport")
            .field("base_url", &self.base_url)
            .finish_non_exhaustive()
    }
}

fn classify(err: reqwest::Error) -> GatewayError {
    let kind = if err.is_timeout() {
        ErrorKind::Timeout
    } else if err.is_decode() {
        ErrorKind::MalformedResponse
    } else {
        ErrorKind::Network
    };
    // strip the URL; it never carries the key, but keeps messages short
    GatewayError::new(kind, err.without_url().to_string())
}

fn status_error(status: StatusCode, body: &str) -> GatewayError {
    let kind = match status {
        StatusCode::TOO_MANY_REQUESTS => ErrorKind::RateLimited,
        StatusCode::REQUEST_TIMEOUT | StatusCode::GATEWAY_TIMEOUT => ErrorKind::Timeout,
        s if s.is_server_error() => ErrorKind::Network,
        _ => ErrorKind::ProviderRejected,
    };
    let snippet: String = body.chars().take(300).collect();
    GatewayError::new(kind, format!("HTTP {status}: {snippet}"))
}

impl HttpTransport {
    pub fn new(config: &ProviderConfig) -> Result<Self, GatewayError> {
        let client = Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| GatewayError::new(ErrorKind::InvalidRequest, e.to_string()))?;
        Ok(Self {
            client,
            base_url: config.base_url.trim_end_matches('/').to_string(),
            api_key: config.api_key.clone(),
            asr_model: config.asr_model_id.clone(),
            buffers: Mutex::new(HashMap::new()),
        })
    }

    fn post(&self, path: &str) -> RequestBuilder {
        self.client
            .post(format!("{}/{path}", self.base_url))
            .bearer_auth(self.api_key.expose())
    }

    async fn send(&self, req: RequestBuilder) -> Result<reqwest::Response, GatewayError> {
        let resp = req.send().await.map_err(classify)?;
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        let body = resp.text().await.unwrap_or_default();
        Err(status_error(status, &body))
    }

    async fn transcribe_pcm(&self, pcm: Vec<u8>, offset_ms: u64) -> Result<Vec<TranscriptSegment>, GatewayError> {
        let duration_ms = (pcm.len() * 1000 / PCM_BYTES_PER_SECOND) as u64;
        let part = reqwest::multipart::Part::bytes(wav_from_pcm(&pcm))
            .file_name("utterance.wav")
            .mime_str("audio/wav")
            .map_err(|e| GatewayError::new(ErrorKind::InvalidRequest, e.to_string()))?;
        let form = reqwest::multipart::Form::new()
            .text("model", self.asr_model.clone())
            .text("response_format", "json")
            .part("file", part);
        let resp = self.send(self.post("audio/transcriptions").multipart(form)).await?;
        let body: Value = resp.json().await.map_err(classify)?;
        let text = body
            .get("text")
            .and_then(Value::as_str)
            .ok_or_else(|| GatewayError::new(ErrorKind::MalformedResponse, "transcription has no text"))?
            .trim()
            .to_string();
        if text.is_empty() {
            return Ok(Vec::new());
        }
        Ok(vec![TranscriptSegment {
            text,
            start_ms: offset_ms,
            end_ms: offset_ms + duration_ms,
            is_final: true,
        }])
    }

    fn take_buffer(&self, stream_id: &str, force: bool) -> Option<(Vec<u8>, u64)> {
        let mut buffers = self.buffers.lock().expect("buffer lock");
        let buf = buffers.get_mut(stream_id)?;
        let threshold = FORCED_FINAL_MS * PCM_BYTES_PER_SECOND / 1000;
        if buf.bytes.is_empty() || (!force && buf.bytes.len() < threshold) {
            return None;
        }
        let pcm = std::mem::take(&mut buf.bytes);
        let offset = buf.offset_ms;
        buf.offset_ms += (pcm.len() * 1000 / PCM_BYTES_PER_SECOND) as u64;
        Some((pcm, offset))
    }
}

/// Wraps raw 16 kHz mono 16-bit PCM in a WAV container.
pub(crate) fn wav_from_pcm(pcm: &[u8]) -> Vec<u8> {
    let data_len = pcm.len() as u32;
    let mut out = Vec::with_capacity(44 + pcm.len());
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&PCM_RATE.to_le_bytes());
    out.extend_from_slice(&(PCM_RATE * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    out.extend_from_slice(pcm);
    out
}

#[async_trait]
impl Transport for HttpTransport {
    async fn chat(&self, call: &ChatCall) -> Result<Value, GatewayError> {
        let resp = self.send(self.post("chat/completions").json(&call.body)).await?;
        resp.json().await.map_err(classify)
    }

    /// The OpenAI transcription endpoint is not streaming: chunks are
    /// buffered and sent once five seconds of audio have accumulated.
    async fn transcribe_chunk(&self, stream_id: &str, chunk: &[u8]) -> Result<Vec<TranscriptSegment>, GatewayError> {
        {
            let mut buffers = self.buffers.lock().expect("buffer lock");
            buffers
                .entry(stream_id.to_string())
                .or_default()
                .bytes
                .extend_from_slice(chunk);
        }
        match self.take_buffer(stream_id, false) {
            Some((pcm, offset)) => self.transcribe_pcm(pcm, offset).await,
            None => Ok(Vec::new()),
        }
    }

    async fn finish_transcription(&self, stream_id: &str) -> Result<Vec<TranscriptSegment>, GatewayError> {
        let taken = self.take_buffer(stream_id, true);
        self.buffers.lock().expect("buffer lock").remove(stream_id);
        match taken {
            Some((pcm, offset)) => self.transcribe_pcm(pcm, offset).await,
            None => Ok(Vec::new()),
        }
    }

    async fn synthesize(&self, text: &str, model_id: &str) -> Result<AudioClip, GatewayError> {
        let body = serde_json::json!({
            "model": model_id,
            "input": text,
            "voice": "alloy",
            "response_format": "wav",
        });
        let resp = self.send(self.post("audio/speech").json(&body)).await?;
        let media_type = resp
            .headers()
            .get(reqwest::header::CONTENT_TYPE)
            .and_then(|v| v.to_str().ok())
            .unwrap_or("audio/wav")
            .to_string();
        let bytes = resp.bytes().await.map_err(classify)?.to_vec();
        Ok(AudioClip { media_type, bytes })
    }
}
