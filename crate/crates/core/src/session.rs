//! Live interpreting sessions.
//!
//! Each session is an actor fed by one ordered command queue, so frames,
//! audio chunks and condition changes are processed in arrival order and
//! every emitted [`SessionEvent`] gets the next sequence number. Events are
//! kept in a per-session log and fanned out to subscribers.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use tokio::sync::{broadcast, mpsc, oneshot};
use tokio::time::Instant;

use crate::clock::Clock;
use crate::gateway::{ErrorKind, Gateway, GatewayError, TranscriptSegment};
use crate::prompting::{build_prompt, Condition, DecodingParams, LangPair};
use crate::vision::{
    caption_scene, encode_dynamic, CaptionError, CaptionStyle, EncodeSettings, EncodedImage, Frame, SampleReason,
    SamplerSettings, SamplerState,
};

/// Audio left without a final segment this long is finalized by force.
pub const FORCE_FINALIZE_AFTER: Duration = Duration::from_secs(5);

const QUEUE_DEPTH: usize = 256;
const BROADCAST_DEPTH: usize = 1024;

fn default_condition() -> Condition {
    Condition::SpeechOnly
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    /// Assigned by the manager when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
    pub source_lang: String,
    pub target_lang: String,
    #[serde(default = "default_condition")]
    pub condition: Condition,
    #[serde(default)]
    pub caption_style: CaptionStyle,
    #[serde(default)]
    pub sampler: SamplerSettings,
    #[serde(default)]
    pub tts_enabled: bool,
}

impl SessionConfig {
    pub fn new(source_lang: impl Into<String>, target_lang: impl Into<String>) -> Self {
        Self {
            session_id: None,
            source_lang: source_lang.into(),
            target_lang: target_lang.into(),
            condition: Condition::SpeechOnly,
            caption_style: CaptionStyle::Generic,
            sampler: SamplerSettings::default(),
            tts_enabled: false,
        }
    }
}

/// Live changes accepted by PATCH.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionUpdate {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<Condition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption_style: Option<CaptionStyle>,
}

/// One applied condition change. `after_seq` is the last event emitted
/// before the change took effect.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionChange {
    pub after_seq: u64,
    pub from: Condition,
    pub to: Condition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub session_id: String,
    pub config: SessionConfig,
    pub condition_log: Vec<ConditionChange>,
    pub last_seq: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum EventBody {
    Transcript {
        text: String,
        start_ms: u64,
        end_ms: u64,
        is_final: bool,
    },
    FrameSampled {
        frame_ts_ms: u64,
        delta_score: f64,
        reason: SampleReason,
        width: u32,
        height: u32,
        image_sha256: String,
    },
    CaptionUpdated {
        text: String,
        frame_seq: u64,
        style: CaptionStyle,
        model_id: String,
        cached: bool,
    },
    Translation {
        text: String,
        condition: Condition,
        transcript_seq: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        caption_seq: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        caption: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        frame_seq: Option<u64>,
        prompt_digest: String,
        model_id: String,
        latency_ms: u64,
    },
    AudioReady {
        translation_seq: u64,
        media_type: String,
        byte_len: usize,
        data_base64: String,
    },
    Metrics {
        translation_seq: u64,
        condition: Condition,
        mt_ms: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tts_ms: Option<u64>,
    },
    Error {
        stage: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        kind: Option<ErrorKind>,
        message: String,
    },
}

impl EventBody {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Transcript { .. } => "transcript",
            Self::FrameSampled { .. } => "frame_sampled",
            Self::CaptionUpdated { .. } => "caption_updated",
            Self::Translation { .. } => "translation",
            Self::AudioReady { .. } => "audio_ready",
            Self::Metrics { .. } => "metrics",
            Self::Error { .. } => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub session_id: String,
    pub seq: u64,
    pub at: String,
    #[serde(flatten)]
    pub body: EventBody,
}

/// Ordered event history of one session plus live fan-out.
pub struct EventLog {
    session_id: String,
    clock: Arc<dyn Clock>,
    history: Mutex<Vec<SessionEvent>>,
    live: broadcast::Sender<SessionEvent>,
}

impl EventLog {
    fn new(session_id: String, clock: Arc<dyn Clock>) -> Self {
        let (live, _) = broadcast::channel(BROADCAST_DEPTH);
        Self {
            session_id,
            clock,
            history: Mutex::new(Vec::new()),
            live,
        }
    }

    fn emit(&self, body: EventBody) -> u64 {
        let mut history = self.history.lock().expect("event log lock");
        let seq = history.last().map_or(1, |e| e.seq + 1);
        let event = SessionEvent {
            session_id: self.session_id.clone(),
            seq,
            at: self.clock.now_rfc3339(),
            body,
        };
        history.push(event.clone());
        let _ = self.live.send(event);
        seq
    }

    pub fn last_seq(&self) -> u64 {
        self.history.lock().expect("event log lock").last().map_or(0, |e| e.seq)
    }

    /// Events with `seq > after`.
    pub fn since(&self, after: u64) -> Vec<SessionEvent> {
        let history = self.history.lock().expect("event log lock");
        history.iter().filter(|e| e.seq > after).cloned().collect()
    }

    /// Backlog after `after` and a receiver for everything emitted later,
    /// taken atomically so nothing is missed or repeated.
    pub fn subscribe(&self, after: u64) -> (Vec<SessionEvent>, broadcast::Receiver<SessionEvent>) {
        let history = self.history.lock().expect("event log lock");
        let backlog = history.iter().filter(|e| e.seq > after).cloned().collect();
        (backlog, self.live.subscribe())
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SessionError {
    #[error("unknown session {0}")]
    NotFound(String),
    #[error("session {0} already exists")]
    Duplicate(String),
    #[error("invalid session config: {0}")]
    InvalidConfig(String),
    #[error("session {0} is closed")]
    Closed(String),
}

enum Command {
    Frame {
        bytes: Vec<u8>,
        timestamp_ms: Option<u64>,
    },
    Audio(Vec<u8>),
    Update {
        update: SessionUpdate,
        reply: oneshot::Sender<SessionSnapshot>,
    },
    Sync(oneshot::Sender<()>),
}

pub struct SessionHandle {
    id: String,
    tx: mpsc::Sender<Command>,
    log: Arc<EventLog>,
    state: Arc<Mutex<SessionSnapshot>>,
}

impl SessionHandle {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn events(&self) -> &Arc<EventLog> {
        &self.log
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        let mut snap = self.state.lock().expect("session state lock").clone();
        snap.last_seq = self.log.last_seq();
        snap
    }

    async fn send(&self, cmd: Command) -> Result<(), SessionError> {
        self.tx
            .send(cmd)
            .await
            .map_err(|_| SessionError::Closed(self.id.clone()))
    }

    /// Queues an encoded video frame. Without a timestamp the session clock
    /// is used.
    pub async fn push_frame(&self, bytes: Vec<u8>, timestamp_ms: Option<u64>) -> Result<(), SessionError> {
        self.send(Command::Frame { bytes, timestamp_ms }).await
    }

    pub async fn push_audio(&self, chunk: Vec<u8>) -> Result<(), SessionError> {
        self.send(Command::Audio(chunk)).await
    }

    /// Applies `update` after everything queued before it.
    pub async fn update(&self, update: SessionUpdate) -> Result<SessionSnapshot, SessionError> {
        let (reply, rx) = oneshot::channel();
        self.send(Command::Update { update, reply }).await?;
        rx.await.map_err(|_| SessionError::Closed(self.id.clone()))
    }

    /// Resolves once every command queued so far has been processed.
    pub async fn sync(&self) -> Result<(), SessionError> {
        let (reply, rx) = oneshot::channel();
        self.send(Command::Sync(reply)).await?;
        rx.await.map_err(|_| SessionError::Closed(self.id.clone()))
    }
}

type CaptionCache = Arc<Mutex<HashMap<(String, CaptionStyle), (String, String)>>>;

/// Owns all live sessions of a service.
pub struct SessionManager {
    gateway: Gateway,
    clock: Arc<dyn Clock>,
    encode: EncodeSettings,
    sessions: RwLock<HashMap<String, Arc<SessionHandle>>>,
    counter: AtomicU64,
    captions: CaptionCache,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

impl SessionManager {
    pub fn new(gateway: Gateway, clock: Arc<dyn Clock>) -> Self {
        Self {
            gateway,
            clock,
            encode: EncodeSettings::default(),
            sessions: RwLock::new(HashMap::new()),
            counter: AtomicU64::new(0),
            captions: Arc::new(Mutex::new(HashMap::new())),
        }
    }

    pub fn with_encode_settings(mut self, encode: EncodeSettings) -> Self {
        self.encode = encode;
        self
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    /// Starts a session actor. Must be called inside a tokio runtime.
    pub fn create(&self, mut config: SessionConfig) -> Result<Arc<SessionHandle>, SessionError> {
        let sampler = SamplerState::new(config.sampler).map_err(|e| SessionError::InvalidConfig(e.to_string()))?;
        for (field, tag) in [
            ("source_lang", &config.source_lang),
            ("target_lang", &config.target_lang),
        ] {
            if tag.trim().is_empty() {
                return Err(SessionError::InvalidConfig(format!("{field} is empty")));
            }
        }
        let mut sessions = self.sessions.write().expect("session table lock");
        let id = match &config.session_id {
            Some(id) if !valid_id(id) => {
                return Err(SessionError::InvalidConfig(format!(
                    "session id {id:?} is not a plain identifier"
                )))
            }
            Some(id) if sessions.contains_key(id) => return Err(SessionError::Duplicate(id.clone())),
            Some(id) => id.clone(),
            None => loop {
                let n = self.counter.fetch_add(1, Ordering::SeqCst) + 1;
                let candidate = format!("s{n:06}");
                if !sessions.contains_key(&candidate) {
                    break candidate;
                }
            },
        };
        config.session_id = Some(id.clone());

        let log = Arc::new(EventLog::new(id.clone(), self.clock.clone()));
        let state = Arc::new(Mutex::new(SessionSnapshot {
            session_id: id.clone(),
            config: config.clone(),
            condition_log: Vec::new(),
            last_seq: 0,
        }));
        let (tx, rx) = mpsc::channel(QUEUE_DEPTH);
        let actor = Actor {
            id: id.clone(),
            gateway: self.gateway.clone(),
            encode: self.encode,
            log: log.clone(),
            state: state.clone(),
            captions: self.captions.clone(),
            sampler,
            started: Instant::now(),
            pending_audio_since: None,
            latest_frame: None,
            latest_caption: None,
            previous_caption: None,
        };
        tokio::spawn(actor.run(rx));
        let handle = Arc::new(SessionHandle {
            id: id.clone(),
            tx,
            log,
            state,
        });
        sessions.insert(id, handle.clone());
        Ok(handle)
    }

    pub fn get(&self, id: &str) -> Result<Arc<SessionHandle>, SessionError> {
        self.sessions
            .read()
            .expect("session table lock")
            .get(id)
            .cloned()
            .ok_or_else(|| SessionError::NotFound(id.to_string()))
    }

    /// Removes the session; its actor stops once queued work is drained.
    pub fn remove(&self, id: &str) -> Result<(), SessionError> {
        self.sessions
            .write()
            .expect("session table lock")
            .remove(id)
            .map(|_| ())
            .ok_or_else(|| SessionError::NotFound(id.to_string()))
    }

    pub fn ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .sessions
            .read()
            .expect("session table lock")
            .keys()
            .cloned()
            .collect();
        ids.sort();
        ids
    }
}

struct Actor {
    id: String,
    gateway: Gateway,
    encode: EncodeSettings,
    log: Arc<EventLog>,
    state: Arc<Mutex<SessionSnapshot>>,
    captions: CaptionCache,
    sampler: SamplerState,
    started: Instant,
    pending_audio_since: Option<Instant>,
    /// (frame_sampled seq, encoded image)
    latest_frame: Option<(u64, EncodedImage)>,
    /// (caption_updated seq, text)
    latest_caption: Option<(u64, String)>,
    previous_caption: Option<(u64, String)>,
}

impl Actor {
    fn config(&self) -> SessionConfig {
        self.state.lock().expect("session state lock").config.clone()
    }

    fn error(&self, stage: &str, kind: Option<ErrorKind>, message: impl Into<String>) {
        let message = message.into();
        tracing::warn!(session = %self.id, stage, %message, "session pipeline error");
        self.log.emit(EventBody::Error {
            stage: stage.into(),
            kind,
            message,
        });
    }

    fn gateway_error(&self, stage: &str, e: GatewayError) {
        self.error(stage, Some(e.kind), e.detail);
    }

    async fn run(mut self, mut rx: mpsc::Receiver<Command>) {
        loop {
            let deadline = self.pending_audio_since.map(|t| t + FORCE_FINALIZE_AFTER);
            let cmd = tokio::select! {
                cmd = rx.recv() => cmd,
                _ = sleep_until_opt(deadline), if deadline.is_some() => {
                    self.force_finalize().await;
                    continue;
                }
            };
            match cmd {
                None => break,
                Some(Command::Frame { bytes, timestamp_ms }) => self.on_frame(bytes, timestamp_ms).await,
                Some(Command::Audio(chunk)) => self.on_audio(chunk).await,
                Some(Command::Update { update, reply }) => {
                    let snap = self.on_update(update);
                    let _ = reply.send(snap);
                }
                Some(Command::Sync(reply)) => {
                    let _ = reply.send(());
                }
            }
        }
        tracing::debug!(session = %self.id, "session actor stopped");
    }

    fn on_update(&mut self, update: SessionUpdate) -> SessionSnapshot {
        let after_seq = self.log.last_seq();
        let mut state = self.state.lock().expect("session state lock");
        if let Some(to) = update.condition {
            let from = state.config.condition;
            if from != to {
                state.config.condition = to;
                state.condition_log.push(ConditionChange { after_seq, from, to });
                tracing::info!(session = %self.id, %from, %to, after_seq, "condition changed");
            }
        }
        if let Some(style) = update.caption_style {
            state.config.caption_style = style;
        }
        state.last_seq = after_seq;
        state.clone()
    }

    async fn on_frame(&mut self, bytes: Vec<u8>, timestamp_ms: Option<u64>) {
        let ts = timestamp_ms.unwrap_or_else(|| self.started.elapsed().as_millis() as u64);
        let image = match image::load_from_memory(&bytes) {
            Ok(img) => img,
            Err(e) => return self.error("frame", None, format!("cannot decode frame: {e}")),
        };
        let frame = match Frame::from_image(&image, ts) {
            Ok(f) => f,
            Err(e) => return self.error("frame", None, e.to_string()),
        };
        let sample = match self.sampler.should_sample(frame) {
            Ok(Some(s)) => s,
            Ok(None) => return,
            Err(e) => return self.error("frame", None, e.to_string()),
        };
        let encoded = match encode_dynamic(&image, self.encode) {
            Ok(e) => e,
            Err(e) => return self.error("frame", None, e.to_string()),
        };
        let sha = encoded.sha256();
        let frame_seq = self.log.emit(EventBody::FrameSampled {
            frame_ts_ms: ts,
            delta_score: sample.delta_score,
            reason: sample.reason,
            width: encoded.width,
            height: encoded.height,
            image_sha256: sha.clone(),
        });
        self.latest_frame = Some((frame_seq, encoded.clone()));

        let style = self.config().caption_style;
        let cached = self
            .captions
            .lock()
            .expect("caption cache lock")
            .get(&(sha.clone(), style))
            .cloned();
        let (text, model_id, was_cached) = match cached {
            Some((text, model)) => (text, model, true),
            None => match caption_scene(&encoded, style, &self.id, &self.gateway).await {
                Ok(c) => {
                    self.captions
                        .lock()
                        .expect("caption cache lock")
                        .insert((sha, style), (c.text.clone(), c.model_id.clone()));
                    (c.text, c.model_id, false)
                }
                Err(CaptionError::Gateway(e)) => return self.gateway_error("caption", e),
                Err(e) => return self.error("caption", None, e.to_string()),
            },
        };
        let caption_seq = self.log.emit(EventBody::CaptionUpdated {
            text: text.clone(),
            frame_seq,
            style,
            model_id,
            cached: was_cached,
        });
        self.previous_caption = self.latest_caption.replace((caption_seq, text));
    }

    async fn on_audio(&mut self, chunk: Vec<u8>) {
        if chunk.is_empty() {
            return;
        }
        match self.gateway.transcribe_chunk(&self.id, &chunk).await {
            Ok(segments) => {
                let finalized = segments.iter().any(|s| s.is_final);
                self.on_segments(segments).await;
                if finalized {
                    self.pending_audio_since = None;
                } else if self.pending_audio_since.is_none() {
                    self.pending_audio_since = Some(Instant::now());
                }
            }
            Err(e) => self.gateway_error("asr", e),
        }
    }

    async fn force_finalize(&mut self) {
        self.pending_audio_since = None;
        match self.gateway.finish_transcription(&self.id).await {
            Ok(segments) => self.on_segments(segments).await,
            Err(e) => self.gateway_error("asr", e),
        }
    }

    async fn on_segments(&mut self, segments: Vec<TranscriptSegment>) {
        for seg in segments {
            let transcript_seq = self.log.emit(EventBody::Transcript {
                text: seg.text.clone(),
                start_ms: seg.start_ms,
                end_ms: seg.end_ms,
                is_final: seg.is_final,
            });
            if seg.is_final && !seg.text.trim().is_empty() {
                self.translate(&seg.text, transcript_seq).await;
            }
        }
    }

    async fn translate(&mut self, text: &str, transcript_seq: u64) {
        let config = self.config();
        let condition = config.condition;
        let langs = LangPair::new(config.source_lang.clone(), config.target_lang.clone());
        let decoding = DecodingParams::greedy(self.gateway.config().model_id.clone());

        let (caption, image) = match condition {
            Condition::SpeechOnly => (None, None),
            Condition::Caption => match &self.latest_caption {
                Some(c) => (Some(c.clone()), None),
                None => return self.error("route", None, "C2 needs a scene caption; none sampled yet"),
            },
            Condition::Adversarial => match &self.previous_caption {
                Some(c) => (Some(c.clone()), None),
                None => return self.error("route", None, "C4 needs an earlier scene caption; none available yet"),
            },
            Condition::Multimodal => match &self.latest_frame {
                Some(f) => (None, Some(f.clone())),
                None => return self.error("route", None, "C3 needs a sampled frame; none yet"),
            },
        };
        let bundle = match build_prompt(
            text,
            condition,
            caption.as_ref().map(|c| c.1.as_str()),
            image.as_ref().map(|f| &f.1),
            &langs,
            &decoding,
        ) {
            Ok(b) => b,
            Err(e) => return self.error("route", None, e.to_string()),
        };

        let started = Instant::now();
        let result = match self.gateway.translate(&bundle).await {
            Ok(r) => r,
            Err(e) => return self.gateway_error("translate", e),
        };
        let mt_ms = started.elapsed().as_millis() as u64;
        let translation_seq = self.log.emit(EventBody::Translation {
            text: result.text.clone(),
            condition,
            transcript_seq,
            caption_seq: caption.as_ref().map(|c| c.0),
            caption: caption.map(|c| c.1),
            frame_seq: image.map(|f| f.0),
            prompt_digest: result.prompt_digest.clone(),
            model_id: result.model_id.clone(),
            latency_ms: result.latency_ms,
        });

        let mut tts_ms = None;
        if config.tts_enabled {
            let t0 = Instant::now();
            match self.gateway.synthesize(&result.text).await {
                Ok(clip) => {
                    tts_ms = Some(t0.elapsed().as_millis() as u64);
                    self.log.emit(EventBody::AudioReady {
                        translation_seq,
                        media_type: clip.media_type.clone(),
                        byte_len: clip.bytes.len(),
                        data_base64: base64::engine::general_purpose::STANDARD.encode(&clip.bytes),
                    });
                }
                Err(e) => self.gateway_error("tts", e),
            }
        }
        self.log.emit(EventBody::Metrics {
            translation_seq,
            condition,
            mt_ms,
            tts_ms,
        });
    }
}

async fn sleep_until_opt(deadline: Option<Instant>) {
    match deadline {
        Some(d) => tokio::time::sleep_until(d).await,
        None => std::future::pending().await,
    }
}
