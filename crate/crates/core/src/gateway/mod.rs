//! Provider-agnostic access to translation, captioning, speech recognition
//! and speech synthesis.
//!
//! [`Gateway`] owns the cross-cutting policy: bounded concurrency, retries
//! with exponential backoff, greedy-decoding enforcement and the on-disk
//! response cache. A [`Transport`] only moves bytes: [`HttpTransport`]
//! speaks the OpenAI-compatible dialect, [`MockProvider`] replays a script.

mod cache;
mod http;
mod mock;
mod wire;

use std::collections::VecDeque;
use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use futures::{Stream, StreamExt};
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use crate::clock::{Clock, SystemClock};
use crate::prompting::PromptBundle;
use crate::vision::EncodedImage;

pub use cache::ResponseCache;
pub use http::HttpTransport;
pub use mock::{AsrScript, CallLogEntry, Fault, FaultPlan, MockProvider, MockScript, Responder};
pub use wire::{parse_chat_completion, ChatMessage, ChatRequest, ContentPart, ImageUrl, MessageContent};

pub const ENV_BASE_URL: &str = "VGI_BASE_URL";
pub const ENV_API_KEY: &str = "VGI_API_KEY";
pub const ENV_MODEL: &str = "VGI_MODEL";
pub const ENV_ASR_MODEL: &str = "VGI_ASR_MODEL";
pub const ENV_TTS_MODEL: &str = "VGI_TTS_MODEL";

/// API key wrapper that never prints or serializes its contents.
#[derive(Clone, Default, PartialEq, Eq)]
pub struct Secret(String);

impl Secret {
    pub fn new(value: impl Into<String>) -> Self {
        Self(value.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Debug for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Secret(<redacted>)")
    }
}

impl Serialize for Secret {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("<redacted>")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProviderConfig {
    pub base_url: String,
    pub api_key: Secret,
    pub model_id: String,
    pub asr_model_id: String,
    pub tts_model_id: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub max_inflight: usize,
    pub backoff_base_ms: u64,
    pub backoff_max_ms: u64,
    /// Refuse any chat request whose temperature is not zero.
    pub enforce_greedy: bool,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            api_key: Secret::default(),
            model_id: "gpt-4o".into(),
            asr_model_id: "whisper-1".into(),
            tts_model_id: "tts-1".into(),
            timeout_ms: 60_000,
            max_retries: 3,
            max_inflight: 4,
            backoff_base_ms: 500,
            backoff_max_ms: 8_000,
            enforce_greedy: true,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("environment variable {0} is not set")]
    MissingEnv(&'static str),
    #[error("invalid provider config: {0}")]
    Invalid(String),
}

impl ProviderConfig {
    /// Reads `VGI_*` variables through `lookup` (pass `std::env::var` in
    /// production). Only the API key is mandatory.
    pub fn from_lookup<F>(lookup: F) -> Result<Self, ConfigError>
    where
        F: Fn(&str) -> Option<String>,
    {
        let mut cfg = Self::default();
        let key = lookup(ENV_API_KEY)
            .filter(|k| !k.trim().is_empty())
            .ok_or(ConfigError::MissingEnv(ENV_API_KEY))?;
        cfg.api_key = Secret::new(key);
        if let Some(v) = lookup(ENV_BASE_URL) {
            cfg.base_url = v.trim_end_matches('/').to_string();
        }
        if let Some(v) = lookup(ENV_MODEL) {
            cfg.model_id = v;
        }
        if let Some(v) = lookup(ENV_ASR_MODEL) {
            cfg.asr_model_id = v;
        }
        if let Some(v) = lookup(ENV_TTS_MODEL) {
            cfg.tts_model_id = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_env() -> Result<Self, ConfigError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.max_inflight < 1 {
            return Err(ConfigError::Invalid("max_inflight must be at least 1".into()));
        }
        if self.timeout_ms == 0 {
            return Err(ConfigError::Invalid("timeout_ms must be positive".into()));
        }
        Ok(())
    }

    /// Delay before retry number `retry` (0-based): base * 2^retry, capped.
    pub fn backoff_delay(&self, retry: u32) -> Duration {
        let factor = 1u64.checked_shl(retry.min(32)).unwrap_or(u64::MAX);
        Duration::from_millis(self.backoff_base_ms.saturating_mul(factor).min(self.backoff_max_ms))
    }

    pub fn backoff_schedule(&self) -> Vec<Duration> {
        (0..self.max_retries).map(|r| self.backoff_delay(r)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Timeout,
    RateLimited,
    ProviderRejected,
    Network,
    MalformedResponse,
    /// Local precondition failure; nothing was sent.
    InvalidRequest,
}

impl ErrorKind {
    pub fn retryable(self) -> bool {
        matches!(self, Self::Timeout | Self::RateLimited | Self::Network)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Timeout => "timeout",
            Self::RateLimited => "rate_limited",
            Self::ProviderRejected => "provider_rejected",
            Self::Network => "network",
            Self::MalformedResponse => "malformed_response",
            Self::InvalidRequest => "invalid_request",
        }
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{kind}: {detail} (after {attempts} attempt(s))")]
pub struct GatewayError {
    pub kind: ErrorKind,
    pub retryable: bool,
    pub detail: String,
    /// Attempts made before giving up.
    pub attempts: u32,
}

impl GatewayError {
    pub fn new(kind: ErrorKind, detail: impl Into<String>) -> Self {
        Self {
            kind,
            retryable: kind.retryable(),
            detail: detail.into(),
            attempts: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallPurpose {
    Translate,
    Caption,
}

/// A chat request plus the routing key the gateway derived for it: the
/// prompt digest for translations, the request digest for captions.
#[derive(Debug, Clone)]
pub struct ChatCall {
    pub purpose: CallPurpose,
    pub key: String,
    /// SHA-256 of the attached image, if any.
    pub image_sha256: Option<String>,
    pub body: ChatRequest,
}

/// Parsed chat completion.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatReply {
    pub text: String,
    pub model_id: String,
    pub finish_reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptSegment {
    pub text: String,
    pub start_ms: u64,
    pub end_ms: u64,
    pub is_final: bool,
}

#[derive(Clone, PartialEq, Eq)]
pub struct AudioClip {
    pub media_type: String,
    pub bytes: Vec<u8>,
}

impl fmt::Debug for AudioClip {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AudioClip")
            .field("media_type", &self.media_type)
            .field("bytes", &self.bytes.len())
            .finish()
    }
}

/// Byte mover for one provider dialect.
#[async_trait]
pub trait Transport: Send + Sync {
    /// Sends a chat completion request and returns the raw JSON response.
    async fn chat(&self, call: &ChatCall) -> Result<serde_json::Value, GatewayError>;

    /// Feeds one audio chunk of stream `stream_id`; returns any segments the
    /// recognizer produced for it.
    async fn transcribe_chunk(&self, stream_id: &str, chunk: &[u8]) -> Result<Vec<TranscriptSegment>, GatewayError>;

    /// Flushes stream `stream_id`, forcing finalization of buffered audio.
    async fn finish_transcription(&self, stream_id: &str) -> Result<Vec<TranscriptSegment>, GatewayError>;

    async fn synthesize(&self, text: &str, model_id: &str) -> Result<AudioClip, GatewayError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationResult {
    pub text: String,
    pub model_id: String,
    pub latency_ms: u64,
    pub prompt_digest: String,
    pub finish_reason: String,
    /// Provider attempts spent; zero when served from cache.
    pub attempts: u32,
    pub cached: bool,
}

#[derive(Clone)]
pub struct Gateway {
    transport: Arc<dyn Transport>,
    config: Arc<ProviderConfig>,
    permits: Arc<Semaphore>,
    cache: Option<ResponseCache>,
    clock: Arc<dyn Clock>,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("config", &self.config)
            .field("cache", &self.cache)
            .finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn new(transport: Arc<dyn Transport>, config: ProviderConfig) -> Self {
        let permits = Arc::new(Semaphore::new(config.max_inflight.max(1)));
        Self {
            transport,
            config: Arc::new(config),
            permits,
            cache: None,
            clock: Arc::new(SystemClock),
        }
    }

    pub fn http(config: ProviderConfig) -> Result<Self, GatewayError> {
        let transport = HttpTransport::new(&config)?;
        Ok(Self::new(Arc::new(transport), config))
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    pub fn cache(&self) -> Option<&ResponseCache> {
        self.cache.as_ref()
    }

    /// Runs `op` under an in-flight permit, retrying retryable failures with
    /// exponential backoff up to `max_retries` extra attempts.
    async fn with_retries<T, F, Fut>(&self, mut op: F) -> Result<(T, u32), GatewayError>
    where
        F: FnMut() -> Fut,
        Fut: std::future::Future<Output = Result<T, GatewayError>>,
    {
        let timeout = Duration::from_millis(self.config.timeout_ms);
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            let result = {
                let _permit = self.permits.acquire().await.expect("semaphore never closed");
                match tokio::time::timeout(timeout, op()).await {
                    Ok(r) => r,
                    Err(_) => Err(GatewayError::new(
                        ErrorKind::Timeout,
                        format!("no response within {} ms", self.config.timeout_ms),
                    )),
                }
            };
            match result {
                Ok(v) => return Ok((v, attempt)),
                Err(mut e) => {
                    let retries_used = attempt - 1;
                    if !e.retryable || retries_used >= self.config.max_retries {
                        e.attempts = attempt;
                        return Err(e);
                    }
                    let delay = self.config.backoff_delay(retries_used);
                    tracing::debug!(kind = %e.kind, attempt, ?delay, "retrying provider call");
                    if !delay.is_zero() {
                        tokio::time::sleep(delay).await;
                    }
                }
            }
        }
    }

    async fn chat(&self, call: ChatCall) -> Result<(ChatReply, u32, bool), GatewayError> {
        if self.config.enforce_greedy && call.body.temperature != 0.0 {
            return Err(GatewayError::new(
                ErrorKind::InvalidRequest,
                format!(
                    "temperature {} refused: greedy decoding required",
                    call.body.temperature
                ),
            ));
        }
        if let Some(cache) = &self.cache {
            if let Some(raw) = cache.get(&call.key) {
                if let Ok(reply) = parse_chat_completion(&raw) {
                    return Ok((reply, 0, true));
                }
                tracing::warn!(key = %call.key, "ignoring unparsable cache entry");
            }
        }
        let transport = self.transport.clone();
        let ((raw, reply), attempts) = self
            .with_retries(|| {
                let transport = transport.clone();
                let call = &call;
                async move {
                    let raw = transport.chat(call).await?;
                    let reply = parse_chat_completion(&raw)?;
                    Ok((raw, reply))
                }
            })
            .await?;
        if let Some(cache) = &self.cache {
            if let Err(e) = cache.put(&call.key, &raw) {
                tracing::warn!(key = %call.key, error = %e, "failed to write response cache");
            }
        }
        Ok((reply, attempts, false))
    }

    /// Sends a prompt bundle for translation. The image attachment, when
    /// present, travels as a multimodal message part.
    pub async fn translate(&self, bundle: &PromptBundle) -> Result<TranslationResult, GatewayError> {
        let call = ChatCall {
            purpose: CallPurpose::Translate,
            key: bundle.digest.clone(),
            image_sha256: bundle.image_attachment.as_ref().map(EncodedImage::sha256),
            body: ChatRequest::from_bundle(bundle),
        };
        let started = self.clock.now_ms();
        let (reply, attempts, cached) = self.chat(call).await?;
        let latency_ms = self.clock.now_ms().saturating_sub(started);
        if reply.text.trim().is_empty() {
            return Err(GatewayError::new(ErrorKind::MalformedResponse, "empty translation"));
        }
        Ok(TranslationResult {
            text: reply.text.trim().to_string(),
            model_id: reply.model_id,
            latency_ms,
            prompt_digest: bundle.digest.clone(),
            finish_reason: reply.finish_reason,
            attempts,
            cached,
        })
    }

    /// Asks the vision-language model to describe `image` following
    /// `instruction`.
    pub async fn describe_image(&self, image: &EncodedImage, instruction: &str) -> Result<ChatReply, GatewayError> {
        let body = ChatRequest::describe_image(&self.config.model_id, instruction, image);
        let key = body.digest();
        let call = ChatCall {
            purpose: CallPurpose::Caption,
            key,
            image_sha256: Some(image.sha256()),
            body,
        };
        self.chat(call).await.map(|(reply, _, _)| reply)
    }

    pub async fn transcribe_chunk(
        &self,
        stream_id: &str,
        chunk: &[u8],
    ) -> Result<Vec<TranscriptSegment>, GatewayError> {
        let transport = self.transport.clone();
        self.with_retries(|| {
            let transport = transport.clone();
            async move { transport.transcribe_chunk(stream_id, chunk).await }
        })
        .await
        .map(|(segs, _)| segs)
    }

    pub async fn finish_transcription(&self, stream_id: &str) -> Result<Vec<TranscriptSegment>, GatewayError> {
        let transport = self.transport.clone();
        self.with_retries(|| {
            let transport = transport.clone();
            async move { transport.finish_transcription(stream_id).await }
        })
        .await
        .map(|(segs, _)| segs)
    }

    /// Streams transcript segments for an audio chunk stream, in order. An
    /// error is yielded at most once and ends the stream.
    pub fn transcribe<S>(
        &self,
        stream_id: impl Into<String>,
        chunks: S,
    ) -> impl Stream<Item = Result<TranscriptSegment, GatewayError>> + Send + 'static
    where
        S: Stream<Item = Vec<u8>> + Send + Unpin + 'static,
    {
        enum Phase {
            Running,
            Done,
        }
        struct State<S> {
            gateway: Gateway,
            stream_id: String,
            chunks: S,
            pending: VecDeque<Result<TranscriptSegment, GatewayError>>,
            phase: Phase,
        }
        let state = State {
            gateway: self.clone(),
            stream_id: stream_id.into(),
            chunks,
            pending: VecDeque::new(),
            phase: Phase::Running,
        };
        futures::stream::unfold(state, |mut st| async move {
            loop {
                if let Some(next) = st.pending.pop_front() {
                    if next.is_err() {
                        st.pending.clear();
                        st.phase = Phase::Done;
                    }
                    return Some((next, st));
                }
                match st.phase {
                    Phase::Done => return None,
                    Phase::Running => {
                        let produced = match st.chunks.next().await {
                            Some(chunk) => st.gateway.transcribe_chunk(&st.stream_id, &chunk).await,
                            None => {
                                st.phase = Phase::Done;
                                st.gateway.finish_transcription(&st.stream_id).await
                            }
                        };
                        match produced {
                            Ok(segs) => st.pending.extend(segs.into_iter().map(Ok)),
                            Err(e) => st.pending.push_back(Err(e)),
                        }
                    }
                }
            }
        })
    }

    pub async fn synthesize(&self, text: &str) -> Result<AudioClip, GatewayError> {
        if text.trim().is_empty() {
            let mut e = GatewayError::new(ErrorKind::InvalidRequest, "cannot synthesize empty text");
            e.attempts = 0;
            return Err(e);
        }
        let transport = self.transport.clone();
        let model = self.config.tts_model_id.clone();
        self.with_retries(|| {
            let transport = transport.clone();
            let model = model.clone();
            async move { transport.synthesize(text, &model).await }
        })
        .await
        .map(|(clip, _)| clip)
    }
}
