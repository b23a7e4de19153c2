//! Scene-change frame sampling, image encoding for attachments, and scene
//! captioning through the provider gateway.

use std::fmt;
use std::io::Cursor;
use std::str::FromStr;

use image::codecs::jpeg::JpegEncoder;
use image::imageops::FilterType;
use image::{DynamicImage, GrayImage, ImageReader};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::gateway::{Gateway, GatewayError};
use crate::prompting::fixtures;

/// Longest edge used when comparing frames for scene change.
pub const DELTA_MAX_EDGE: u32 = 64;

#[derive(Debug, thiserror::Error)]
pub enum VisionError {
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("frame dimensions differ: {a_w}x{a_h} vs {b_w}x{b_h}")]
    DimensionMismatch { a_w: u32, a_h: u32, b_w: u32, b_h: u32 },
    #[error("timestamp {got} ms precedes last seen timestamp {last} ms")]
    NonMonotonicTimestamp { last: u64, got: u64 },
    #[error("invalid sampler settings: {0}")]
    InvalidSettings(String),
    #[error("image decode failed: {0}")]
    Decode(String),
    #[error("image has a zero dimension")]
    ZeroDimension,
    #[error("image encode failed: {0}")]
    Encode(String),
}

/// Grayscale frame with intensities normalized to [0, 1], row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: u32,
    height: u32,
    pixels: Vec<f32>,
    pub timestamp_ms: u64,
}

impl Frame {
    pub fn new(width: u32, height: u32, pixels: Vec<f32>, timestamp_ms: u64) -> Result<Self, VisionError> {
        if width == 0 || height == 0 {
            return Err(VisionError::InvalidFrame("zero dimension".into()));
        }
        let expected = width as usize * height as usize;
        if pixels.len() != expected {
            return Err(VisionError::InvalidFrame(format!(
                "expected {expected} pixels, got {}",
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(VisionError::InvalidFrame(format!("intensity {bad} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            pixels,
            timestamp_ms,
        })
    }

    pub fn filled(width: u32, height: u32, value: f32, timestamp_ms: u64) -> Result<Self, VisionError> {
        Self::new(
            width,
            height,
            vec![value; width as usize * height as usize],
            timestamp_ms,
        )
    }

    pub fn from_image(img: &DynamicImage, timestamp_ms: u64) -> Result<Self, VisionError> {
        let gray = img.to_luma8();
        let (w, h) = gray.dimensions();
        if w == 0 || h == 0 {
            return Err(VisionError::ZeroDimension);
        }
        let pixels = gray.into_raw().into_iter().map(|v| v as f32 / 255.0).collect();
        Self::new(w, h, pixels, timestamp_ms)
    }

    /// Decodes PNG or JPEG bytes into a grayscale frame.
    pub fn decode(bytes: &[u8], timestamp_ms: u64) -> Result<Self, VisionError> {
        Self::from_image(&decode_image(bytes)?, timestamp_ms)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn to_gray_image(&self) -> GrayImage {
        let raw = self
            .pixels
            .iter()
            .map(|p| (p * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        GrayImage::from_raw(self.width, self.height, raw).expect("pixel count checked at construction")
    }

    /// Box-averaged copy whose longest edge is at most `max_edge`.
    fn downscaled(&self, max_edge: u32) -> (u32, u32, Vec<f64>) {
        let (w, h) = (self.width, self.height);
        if w <= max_edge && h <= max_edge {
            return (w, h, self.pixels.iter().map(|&p| p as f64).collect());
        }
        let (tw, th) = fit_within(w, h, max_edge);
        let mut out = Vec::with_capacity(tw as usize * th as usize);
        for ty in 0..th {
            let y0 = (ty as u64 * h as u64 / th as u64) as u32;
            let y1 = (((ty + 1) as u64 * h as u64 / th as u64) as u32).max(y0 + 1);
            for tx in 0..tw {
                let x0 = (tx as u64 * w as u64 / tw as u64) as u32;
                let x1 = (((tx + 1) as u64 * w as u64 / tw as u64) as u32).max(x0 + 1);
                let mut sum = 0.0f64;
                for y in y0..y1 {
                    let row = (y * w) as usize;
                    for x in x0..x1 {
                        sum += self.pixels[row + x as usize] as f64;
                    }
                }
                out.push(sum / ((y1 - y0) as f64 * (x1 - x0) as f64));
            }
        }
        (tw, th, out)
    }
}

/// Dimensions scaled proportionally so the longest edge is at most
/// `max_edge`; never upscales.
pub fn fit_within(width: u32, height: u32, max_edge: u32) -> (u32, u32) {
    let longest = width.max(height);
    if longest <= max_edge {
        return (width, height);
    }
    let scale = max_edge as f64 / longest as f64;
    let w = ((width as f64 * scale).round() as u32).clamp(1, max_edge);
    let h = ((height as f64 * scale).round() as u32).clamp(1, max_edge);
    (w, h)
}

/// Mean absolute intensity difference between two equally sized frames,
/// computed after box-downscaling both to at most 64x64.
pub fn frame_delta(a: &Frame, b: &Frame) -> Result<f64, VisionError> {
    if a.width != b.width || a.height != b.height {
        return Err(VisionError::DimensionMismatch {
            a_w: a.width,
            a_h: a.height,
            b_w: b.width,
            b_h: b.height,
        });
    }
    let (_, _, pa) = a.downscaled(DELTA_MAX_EDGE);
    let (_, _, pb) = b.downscaled(DELTA_MAX_EDGE);
    let total: f64 = pa.iter().zip(&pb).map(|(x, y)| (x - y).abs()).sum();
    Ok((total / pa.len() as f64).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerSettings {
    /// Minimum frame delta for a scene change, in (0, 1].
    pub threshold: f64,
    pub min_interval_ms: u64,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        Self {
            threshold: 0.08,
            min_interval_ms: 2000,
        }
    }
}

impl SamplerSettings {
    pub fn validate(&self) -> Result<(), VisionError> {
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(VisionError::InvalidSettings(format!(
                "threshold {} outside (0, 1]",
                self.threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleReason {
    FirstFrame,
    SceneChange,
    Forced,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameSample {
    pub frame: Frame,
    pub delta_score: f64,
    pub reason: SampleReason,
}

/// Scene-change sampler for one frame source. Single owner: one session
/// advances it.
#[derive(Debug, Clone)]
pub struct SamplerState {
    settings: SamplerSettings,
    last_sampled: Option<Frame>,
    last_sample_time: Option<u64>,
    last_seen_time: Option<u64>,
}

impl SamplerState {
    pub fn new(settings: SamplerSettings) -> Result<Self, VisionError> {
        settings.validate()?;
        Ok(Self {
            settings,
            last_sampled: None,
            last_sample_time: None,
            last_seen_time: None,
        })
    }

    pub fn settings(&self) -> SamplerSettings {
        self.settings
    }

    pub fn last_sampled(&self) -> Option<&Frame> {
        self.last_sampled.as_ref()
    }

    pub fn last_sample_time(&self) -> Option<u64> {
        self.last_sample_time
    }

    fn observe(&mut self, ts: u64) -> Result<(), VisionError> {
        if let Some(last) = self.last_seen_time {
            if ts < last {
                return Err(VisionError::NonMonotonicTimestamp { last, got: ts });
            }
        }
        self.last_seen_time = Some(ts);
        Ok(())
    }

    fn accept(&mut self, frame: Frame, delta_score: f64, reason: SampleReason) -> FrameSample {
        self.last_sample_time = Some(frame.timestamp_ms);
        self.last_sampled = Some(frame.clone());
        FrameSample {
            frame,
            delta_score,
            reason,
        }
    }

    /// Feeds one frame. Returns the sample when the frame is taken: always
    /// for the first frame, afterwards only when the delta against the last
    /// sample reaches the threshold and at least `min_interval_ms` has
    /// elapsed since it.
    pub fn should_sample(&mut self, frame: Frame) -> Result<Option<FrameSample>, VisionError> {
        self.observe(frame.timestamp_ms)?;
        let (Some(last), Some(last_time)) = (&self.last_sampled, self.last_sample_time) else {
            return Ok(Some(self.accept(frame, 1.0, SampleReason::FirstFrame)));
        };
        if last.width != frame.width || last.height != frame.height {
            // Resolution change is a scene change by definition.
            if frame.timestamp_ms - last_time >= self.settings.min_interval_ms {
                return Ok(Some(self.accept(frame, 1.0, SampleReason::SceneChange)));
            }
            return Ok(None);
        }
        let delta = frame_delta(last, &frame)?;
        let elapsed = frame.timestamp_ms - last_time;
        if delta >= self.settings.threshold && elapsed >= self.settings.min_interval_ms {
            Ok(Some(self.accept(frame, delta, SampleReason::SceneChange)))
        } else {
            Ok(None)
        }
    }

    /// Takes the frame regardless of delta or interval.
    pub fn force_sample(&mut self, frame: Frame) -> Result<FrameSample, VisionError> {
        self.observe(frame.timestamp_ms)?;
        let delta = match &self.last_sampled {
            Some(last) => frame_delta(last, &frame).unwrap_or(1.0),
            None => 1.0,
        };
        Ok(self.accept(frame, delta, SampleReason::Forced))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodeSettings {
    pub max_edge: u32,
    pub quality: u8,
}

impl Default for EncodeSettings {
    fn default() -> Self {
        Self {
            max_edge: 768,
            quality: 80,
        }
    }
}

/// Compressed image ready to be attached to a request.
#[derive(Clone, PartialEq, Eq)]
pub struct EncodedImage {
    pub media_type: String,
    pub bytes: Vec<u8>,
    pub width: u32,
    pub height: u32,
}

impl fmt::Debug for EncodedImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EncodedImage")
            .field("media_type", &self.media_type)
            .field("bytes", &self.bytes.len())
            .field("width", &self.width)
            .field("height", &self.height)
            .finish()
    }
}

impl EncodedImage {
    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(&self.bytes))
    }

    pub fn data_url(&self) -> String {
        use base64::Engine;
        format!(
            "data:{};base64,{}",
            self.media_type,
            base64::engine::general_purpose::STANDARD.encode(&self.bytes)
        )
    }
}

fn decode_image(bytes: &[u8]) -> Result<DynamicImage, VisionError> {
    let reader = ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| VisionError::Decode(e.to_string()))?;
    let img = reader.decode().map_err(|e| VisionError::Decode(e.to_string()))?;
    if img.width() == 0 || img.height() == 0 {
        return Err(VisionError::ZeroDimension);
    }
    Ok(img)
}

/// Downscales (never upscales) so the longest edge fits `max_edge` and
/// re-encodes as JPEG. Deterministic for fixed input and settings.
pub fn encode_dynamic(img: &DynamicImage, settings: EncodeSettings) -> Result<EncodedImage, VisionError> {
    if img.width() == 0 || img.height() == 0 {
        return Err(VisionError::ZeroDimension);
    }
    if settings.max_edge == 0 || !(1..=100).contains(&settings.quality) {
        return Err(VisionError::Encode(format!(
            "max_edge must be positive and quality within 1..=100 (got {}, {})",
            settings.max_edge, settings.quality
        )));
    }
    let (w, h) = fit_within(img.width(), img.height(), settings.max_edge);
    let resized = if (w, h) == (img.width(), img.height()) {
        img.to_rgb8()
    } else {
        img.resize_exact(w, h, FilterType::Triangle).to_rgb8()
    };
    let mut bytes = Vec::new();
    JpegEncoder::new_with_quality(&mut bytes, settings.quality)
        .encode_image(&resized)
        .map_err(|e| VisionError::Encode(e.to_string()))?;
    Ok(EncodedImage {
        media_type: "image/jpeg".into(),
        bytes,
        width: w,
        height: h,
    })
}

/// Encodes a stored PNG/JPEG file's bytes.
pub fn encode_image(bytes: &[u8], settings: EncodeSettings) -> Result<EncodedImage, VisionError> {
    encode_dynamic(&decode_image(bytes)?, settings)
}

pub fn encode_frame(frame: &Frame, settings: EncodeSettings) -> Result<EncodedImage, VisionError> {
    encode_dynamic(&DynamicImage::ImageLuma8(frame.to_gray_image()), settings)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaptionStyle {
    #[default]
    Generic,
    /// Additionally asks for apparent gender of people, pointed-at objects
    /// and activities.
    Attribute,
}

impl CaptionStyle {
    pub fn request_text(self) -> &'static str {
        match self {
            Self::Generic => fixtures::CAPTION_GENERIC,
            Self::Attribute => fixtures::CAPTION_ATTRIBUTE,
        }
    }
}

impl fmt::Display for CaptionStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Generic => "generic",
            Self::Attribute => "attribute",
        })
    }
}

impl FromStr for CaptionStyle {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "generic" => Ok(Self::Generic),
            "attribute" => Ok(Self::Attribute),
            other => Err(format!(
                "unknown caption style {other:?} (expected generic or attribute)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneCaption {
    pub text: String,
    /// Corpus item id or live session id the image came from.
    pub source_id: String,
    pub model_id: String,
    pub style: CaptionStyle,
}

#[derive(Debug, thiserror::Error)]
pub enum CaptionError {
    #[error("empty caption")]
    Empty,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// Asks the vision-language provider for a concise description of `image`.
pub async fn caption_scene(
    image: &EncodedImage,
    style: CaptionStyle,
    source_id: &str,
    gateway: &Gateway,
) -> Result<SceneCaption, CaptionError> {
    let reply = gateway.describe_image(image, style.request_text()).await?;
    let text = reply.text.trim();
    if text.is_empty() {
        return Err(CaptionError::Empty);
    }
    Ok(SceneCaption {
        text: text.to_string(),
        source_id: source_id.to_string(),
        model_id: reply.model_id,
        style,
    })
}
