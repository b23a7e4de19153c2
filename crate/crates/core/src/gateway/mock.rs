//! Deterministic scripted provider used by tests and offline runs.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use async_trait::async_trait;
use serde::Deserialize;
use serde_json::Value;

use super::wire::completion_body;
use super::{AudioClip, CallPurpose, ChatCall, ChatRequest, ErrorKind, GatewayError, TranscriptSegment, Transport};

/// Injected failure for one call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    Timeout,
    RateLimited,
    Rejected,
    Network,
    Malformed,
}

impl FromStr for Fault {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "timeout" => Ok(Self::Timeout),
            "429" | "rate_limited" => Ok(Self::RateLimited),
            "rejected" | "provider_rejected" => Ok(Self::Rejected),
            "network" => Ok(Self::Network),
            "malformed" | "malformed_response" => Ok(Self::Malformed),
            other => Err(format!("unknown fault {other:?}")),
        }
    }
}

/// Faults keyed by 1-based global call index, e.g. `timeout@1,429@3`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FaultPlan(BTreeMap<usize, Fault>);

impl FaultPlan {
    pub fn at(&self, call_index: usize) -> Option<Fault> {
        self.0.get(&call_index).copied()
    }

    pub fn insert(&mut self, call_index: usize, fault: Fault) {
        self.0.insert(call_index, fault);
    }
}

impl FromStr for FaultPlan {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut plan = Self::default();
        for entry in s.split(',').map(str::trim).filter(|e| !e.is_empty()) {
            let (fault, index) = entry
                .split_once('@')
                .ok_or_else(|| format!("fault entry {entry:?} must look like kind@index"))?;
            let index: usize = index
                .trim()
                .parse()
                .map_err(|_| format!("bad call index in {entry:?}"))?;
            if index == 0 {
                return Err("call indices start at 1".into());
            }
            plan.insert(index, fault.parse()?);
        }
        Ok(plan)
    }
}

/// How the mock recognizer turns audio chunks into segments.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum AsrScript {
    /// Each non-empty chunk is read as UTF-8 text and emitted as one final
    /// segment.
    #[default]
    EchoUtf8,
    /// Segments to emit for the n-th chunk of every stream.
    Scripted(Vec<Vec<TranscriptSegment>>),
}

pub type Responder = Arc<dyn Fn(&ChatCall) -> Option<String> + Send + Sync>;

#[derive(Clone, Default)]
pub struct MockScript {
    model_id: Option<String>,
    translations: BTreeMap<String, String>,
    captions: BTreeMap<String, String>,
    default_translation: Option<String>,
    default_caption: Option<String>,
    responder: Option<Responder>,
    faults: FaultPlan,
    asr: AsrScript,
    delay_ms: u64,
}

impl fmt::Debug for MockScript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MockScript")
            .field("translations", &self.translations.len())
            .field("captions", &self.captions.len())
            .field("faults", &self.faults)
            .field("asr", &self.asr)
            .finish_non_exhaustive()
    }
}

/// File form of a script, for command-line runs.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ScriptFile {
    model_id: Option<String>,
    translations: BTreeMap<String, String>,
    captions: BTreeMap<String, String>,
    default_translation: Option<String>,
    default_caption: Option<String>,
    faults: String,
    delay_ms: u64,
}

impl MockScript {
    pub fn model_id(mut self, model: impl Into<String>) -> Self {
        self.model_id = Some(model.into());
        self
    }

    /// Canned translation for a prompt digest.
    pub fn translation(mut self, digest: impl Into<String>, text: impl Into<String>) -> Self {
        self.translations.insert(digest.into(), text.into());
        self
    }

    /// Canned caption for an image, keyed by the SHA-256 of its encoded bytes.
    pub fn caption(mut self, image_sha256: impl Into<String>, text: impl Into<String>) -> Self {
        self.captions.insert(image_sha256.into(), text.into());
        self
    }

    pub fn default_translation(mut self, text: impl Into<String>) -> Self {
        self.default_translation = Some(text.into());
        self
    }

    pub fn default_caption(mut self, text: impl Into<String>) -> Self {
        self.default_caption = Some(text.into());
        self
    }

    /// Fallback consulted for chat calls the tables do not cover.
    pub fn responder(mut self, f: impl Fn(&ChatCall) -> Option<String> + Send + Sync + 'static) -> Self {
        self.responder = Some(Arc::new(f));
        self
    }

    pub fn faults(mut self, plan: FaultPlan) -> Self {
        self.faults = plan;
        self
    }

    pub fn asr(mut self, asr: AsrScript) -> Self {
        self.asr = asr;
        self
    }

    /// Simulated service time per call.
    pub fn delay_ms(mut self, ms: u64) -> Self {
        self.delay_ms = ms;
        self
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let file: ScriptFile = serde_json::from_str(text).map_err(|e| format!("mock script: {e}"))?;
        Ok(Self {
            model_id: file.model_id,
            translations: file.translations,
            captions: file.captions,
            default_translation: file.default_translation,
            default_caption: file.default_caption,
            responder: None,
            faults: file.faults.parse()?,
            asr: AsrScript::EchoUtf8,
            delay_ms: file.delay_ms,
        })
    }
}

#[derive(Debug, Clone)]
pub struct CallLogEntry {
    /// 1-based global call index.
    pub index: usize,
    pub operation: &'static str,
    pub purpose: Option<CallPurpose>,
    pub key: String,
    pub body: Option<ChatRequest>,
    pub started: Instant,
    pub finished: Instant,
    pub fault: Option<Fault>,
}

#[derive(Debug)]
pub struct MockProvider {
    script: MockScript,
    counter: AtomicUsize,
    inflight: AtomicUsize,
    max_inflight: AtomicUsize,
    log: Mutex<Vec<CallLogEntry>>,
    chunk_counters: Mutex<HashMap<String, usize>>,
    /// Latest partial hypothesis per stream, promoted to final on flush.
    partials: Mutex<HashMap<String, TranscriptSegment>>,
}

impl MockProvider {
    pub const MODEL_ID: &'static str = "mock-vlm";
    /// Samples of synthesized tone per input character (8 kHz, 16-bit mono).
    pub const SAMPLES_PER_CHAR: usize = 400;

    pub fn new(script: MockScript) -> Self {
        Self {
            script,
            counter: AtomicUsize::new(0),
            inflight: AtomicUsize::new(0),
            max_inflight: AtomicUsize::new(0),
            log: Mutex::new(Vec::new()),
            chunk_counters: Mutex::new(HashMap::new()),
            partials: Mutex::new(HashMap::new()),
        }
    }

    pub fn model(&self) -> &str {
        self.script.model_id.as_deref().unwrap_or(Self::MODEL_ID)
    }

    pub fn call_count(&self) -> usize {
        self.counter.load(Ordering::SeqCst)
    }

    pub fn calls(&self) -> Vec<CallLogEntry> {
        self.log.lock().expect("log lock").clone()
    }

    /// Highest number of calls observed in flight at once.
    pub fn max_concurrency(&self) -> usize {
        self.max_inflight.load(Ordering::SeqCst)
    }

    async fn enter(&self) -> (usize, Instant, Option<Fault>) {
        let index = self.counter.fetch_add(1, Ordering::SeqCst) + 1;
        let now = self.inflight.fetch_add(1, Ordering::SeqCst) + 1;
        self.max_inflight.fetch_max(now, Ordering::SeqCst);
        let started = Instant::now();
        if self.script.delay_ms > 0 {
            tokio::time::sleep(Duration::from_millis(self.script.delay_ms)).await;
        }
        (index, started, self.script.faults.at(index))
    }

    fn leave(&self, mut entry: CallLogEntry) {
        self.inflight.fetch_sub(1, Ordering::SeqCst);
        entry.finished = Instant::now();
        self.log.lock().expect("log lock").push(entry);
    }

    fn fault_error(fault: Fault) -> Option<GatewayError> {
        let (kind, detail) = match fault {
            Fault::Timeout => (ErrorKind::Timeout, "scripted timeout"),
            Fault::RateLimited => (ErrorKind::RateLimited, "scripted 429"),
            Fault::Rejected => (ErrorKind::ProviderRejected, "scripted rejection"),
            Fault::Network => (ErrorKind::Network, "scripted connection drop"),
            Fault::Malformed => return None,
        };
        Some(GatewayError::new(kind, detail))
    }

    fn chat_reply(&self, call: &ChatCall) -> Result<String, GatewayError> {
        let table = match call.purpose {
            CallPurpose::Translate => self.script.translations.get(&call.key),
            CallPurpose::Caption => call.image_sha256.as_ref().and_then(|sha| self.script.captions.get(sha)),
        };
        if let Some(text) = table {
            return Ok(text.clone());
        }
        if let Some(text) = self.script.responder.as_ref().and_then(|f| f(call)) {
            return Ok(text);
        }
        let fallback = match call.purpose {
            CallPurpose::Translate => &self.script.default_translation,
            CallPurpose::Caption => &self.script.default_caption,
        };
        fallback.clone().ok_or_else(|| {
            GatewayError::new(
                ErrorKind::ProviderRejected,
                match call.purpose {
                    CallPurpose::Translate => format!("unscripted digest {}", call.key),
                    CallPurpose::Caption => "unscripted image".to_string(),
                },
            )
        })
    }

    fn recognize(&self, stream_id: &str, chunk: &[u8]) -> Vec<TranscriptSegment> {
        let segments = self.echo_or_script(stream_id, chunk);
        let mut partials = self.partials.lock().expect("partials lock");
        match segments.last() {
            Some(last) if !last.is_final => {
                partials.insert(stream_id.to_string(), last.clone());
            }
            Some(_) => {
                partials.remove(stream_id);
            }
            None => {}
        }
        segments
    }

    fn echo_or_script(&self, stream_id: &str, chunk: &[u8]) -> Vec<TranscriptSegment> {
        let n = {
            let mut counters = self.chunk_counters.lock().expect("counter lock");
            let c = counters.entry(stream_id.to_string()).or_insert(0);
            *c += 1;
            *c - 1
        };
        match &self.script.asr {
            AsrScript::Scripted(per_chunk) => per_chunk.get(n).cloned().unwrap_or_default(),
            AsrScript::EchoUtf8 => {
                let text = String::from_utf8_lossy(chunk).trim().to_string();
                if text.is_empty() {
                    return Vec::new();
                }
                let start_ms = n as u64 * 1000;
                vec![TranscriptSegment {
                    text,
                    start_ms,
                    end_ms: start_ms + 1000,
                    is_final: true,
                }]
            }
        }
    }
}

fn tone_wav(samples: usize) -> Vec<u8> {
    const RATE: u32 = 8_000;
    let data_len = (samples * 2) as u32;
    let mut out = Vec::with_capacity(44 + samples * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&RATE.to_le_bytes());
    out.extend_from_slice(&(RATE * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    // 500 Hz square wave: 8 samples high, 8 low
    for i in 0..samples {
        let v: i16 = if (i / 8) % 2 == 0 { 8_000 } else { -8_000 };
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

#[async_trait]
impl Transport for MockProvider {
    async fn chat(&self, call: &ChatCall) -> Result<Value, GatewayError> {
        let (index, started, fault) = self.enter().await;
        let result = match fault {
            Some(Fault::Malformed) => Ok(serde_json::json!({"unexpected": true})),
            Some(f) => Err(Self::fault_error(f).expect("non-malformed fault")),
            None => self.chat_reply(call).map(|text| completion_body(self.model(), &text)),
        };
        self.leave(CallLogEntry {
            index,
            operation: "chat",
            purpose: Some(call.purpose),
            key: call.key.clone(),
            body: Some(call.body.clone()),
            started,
            finished: started,
            fault,
        });
        result
    }

    async fn transcribe_chunk(&self, stream_id: &str, chunk: &[u8]) -> Result<Vec<TranscriptSegment>, GatewayError> {
        let (index, started, fault) = self.enter().await;
        let result = match fault.map(|f| {
            Self::fault_error(f).unwrap_or_else(|| GatewayError::new(ErrorKind::MalformedResponse, "scripted garbage"))
        }) {
            Some(e) => Err(e),
            None => Ok(self.recognize(stream_id, chunk)),
        };
        self.leave(CallLogEntry {
            index,
            operation: "transcribe",
            purpose: None,
            key: stream_id.to_string(),
            body: None,
            started,
            finished: started,
            fault,
        });
        result
    }

    async fn finish_transcription(&self, stream_id: &str) -> Result<Vec<TranscriptSegment>, GatewayError> {
        self.chunk_counters.lock().expect("counter lock").remove(stream_id);
        let pending = self.partials.lock().expect("partials lock").remove(stream_id);
        Ok(pending
            .map(|seg| TranscriptSegment { is_final: true, ..seg })
            .into_iter()
            .collect())
    }

    async fn synthesize(&self, text: &str, _model_id: &str) -> Result<AudioClip, GatewayError> {
        let (index, started, fault) = self.enter().await;
        let result = match fault.map(|f| {
            Self::fault_error(f).unwrap_or_else(|| GatewayError::new(ErrorKind::MalformedResponse, "scripted garbage"))
        }) {
            Some(e) => Err(e),
            None => Ok(AudioClip {
                media_type: "audio/wav".into(),
                bytes: tone_wav(Self::SAMPLES_PER_CHAR * text.chars().count()),
            }),
        };
        self.leave(CallLogEntry {
            index,
            operation: "synthesize",
            purpose: None,
            key: String::new(),
            body: None,
            started,
            finished: started,
            fault,
        });
        result
    }
}
