//! Prompt formatting for the four grounding conditions.
//!
//! The user turn is either `[Source speech: S]` or, when a scene caption is
//! available as text, `[Image: C] [Source speech: S]`. The direct multimodal
//! condition keeps the plain speech turn and attaches the image itself.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{AdversarialPairing, CorpusItem};
use crate::vision::EncodedImage;

/// Versioned instruction texts. Changing any of these files changes every
/// prompt digest, so bump the directory version alongside.
pub mod fixtures {
    pub const VERSION: &str = "v1";
    pub const SYSTEM_NAIVE: &str = include_str!("../prompts/v1/system_naive.txt");
    pub const POLICY_CAPTION: &str = include_str!("../prompts/v1/policy_caption.txt");
    pub const CAPTION_GENERIC: &str = include_str!("../prompts/v1/caption_generic.txt");
    pub const CAPTION_ATTRIBUTE: &str = include_str!("../prompts/v1/caption_attribute.txt");
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Condition {
    #[serde(rename = "C1", alias = "C1_speech_only")]
    SpeechOnly,
    #[serde(rename = "C2", alias = "C2_caption")]
    Caption,
    #[serde(rename = "C3", alias = "C3_multimodal")]
    Multimodal,
    #[serde(rename = "C4", alias = "C4_adversarial")]
    Adversarial,
}

impl Condition {
    pub const ALL: [Condition; 4] = [Self::SpeechOnly, Self::Caption, Self::Multimodal, Self::Adversarial];

    pub fn code(self) -> &'static str {
        match self {
            Self::SpeechOnly => "C1",
            Self::Caption => "C2",
            Self::Multimodal => "C3",
            Self::Adversarial => "C4",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::SpeechOnly => "Speech-only",
            Self::Caption => "Speech+Scene Description",
            Self::Multimodal => "Direct Multimodal",
            Self::Adversarial => "Adversarial",
        }
    }

    /// Conditions whose user turn embeds a caption.
    pub fn uses_caption(self) -> bool {
        matches!(self, Self::Caption | Self::Adversarial)
    }

    pub fn uses_image(self) -> bool {
        self == Self::Multimodal
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        let code = lower.split('_').next().unwrap_or("");
        match (code, lower.as_str()) {
            ("c1", _) | (_, "speech_only") => Ok(Self::SpeechOnly),
            ("c2", _) | (_, "caption") => Ok(Self::Caption),
            ("c3", _) | (_, "multimodal") => Ok(Self::Multimodal),
            ("c4", _) | (_, "adversarial") => Ok(Self::Adversarial),
            _ => Err(format!("unknown condition {s:?} (expected C1..C4)")),
        }
    }
}

/// Parses a comma-separated condition list such as `C1,C2,C4`.
pub fn parse_conditions(list: &str) -> Result<Vec<Condition>, String> {
    let mut out: Vec<Condition> = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_, _>>()?;
    out.sort();
    out.dedup();
    if out.is_empty() {
        return Err("no conditions given".into());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LangPair {
    pub source: String,
    pub target: String,
}

impl LangPair {
    pub fn new(source: impl Into<String>, target: impl Into<String>) -> Self {
        Self {
            source: source.into(),
            target: target.into(),
        }
    }

    pub fn of(item: &CorpusItem) -> Self {
        Self::new(&item.source_lang, &item.target_lang)
    }
}

/// English display name for a BCP-47 tag; unknown tags are returned as-is.
pub fn language_name(tag: &str) -> String {
    let primary = tag.split('-').next().unwrap_or(tag).to_ascii_lowercase();
    let name = match primary.as_str() {
        "en" => "English",
        "it" => "Italian",
        "de" => "German",
        "fr" => "French",
        "es" => "Spanish",
        "pt" => "Portuguese",
        "nl" => "Dutch",
        "pl" => "Polish",
        "ru" => "Russian",
        "zh" => "Chinese",
        "ja" => "Japanese",
        "ko" => "Korean",
        "ar" => "Arabic",
        _ => return tag.to_string(),
    };
    name.to_string()
}

/// Decoding settings sent with every translation request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodingParams {
    pub model_id: String,
    pub temperature: f32,
}

impl DecodingParams {
    /// Greedy decoding for `model_id`.
    pub fn greedy(model_id: impl Into<String>) -> Self {
        Self {
            model_id: model_id.into(),
            temperature: 0.0,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("{condition} takes an image, not a caption")]
    CaptionNotAllowed { condition: Condition },
    #[error("{condition} takes a caption, not an image")]
    ImageNotAllowed { condition: Condition },
    #[error("{condition} takes no visual context")]
    ContextNotAllowed { condition: Condition },
    #[error("{condition} requires a caption")]
    MissingCaption { condition: Condition },
    #[error("{condition} requires an image")]
    MissingImage { condition: Condition },
    #[error("item {item_id}: no caption for image of {image_owner}")]
    CaptionUnavailable { item_id: String, image_owner: String },
    #[error("item {item_id}: adversarial condition requires a pairing")]
    PairingMissing { item_id: String },
    #[error("item {item_id}: pairing has no donor entry")]
    DonorMissing { item_id: String },
    #[error("item {item_id}: no encoded image available")]
    ImageUnavailable { item_id: String },
}

/// Realized prompt for one condition.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptBundle {
    pub condition: Condition,
    pub system_instruction: String,
    pub user_text: String,
    pub image_attachment: Option<EncodedImage>,
    pub decoding: DecodingParams,
    /// SHA-256 hex over every field that reaches the provider.
    pub digest: String,
}

pub fn system_instruction(condition: Condition, langs: &LangPair) -> String {
    let base = fixtures::SYSTEM_NAIVE
        .trim_end()
        .replace("{source}", &language_name(&langs.source))
        .replace("{target}", &language_name(&langs.target));
    if condition.uses_caption() {
        format!("{base} {}", fixtures::POLICY_CAPTION.trim_end())
    } else {
        base
    }
}

pub fn speech_turn(source_text: &str) -> String {
    format!("[Source speech: {source_text}]")
}

pub fn caption_turn(caption: &str, source_text: &str) -> String {
    format!("[Image: {caption}] [Source speech: {source_text}]")
}

pub fn build_prompt(
    source_text: &str,
    condition: Condition,
    caption: Option<&str>,
    image: Option<&EncodedImage>,
    langs: &LangPair,
    decoding: &DecodingParams,
) -> Result<PromptBundle, PromptError> {
    let user_text = match (condition, caption, image) {
        (Condition::SpeechOnly, None, None) => speech_turn(source_text),
        (Condition::SpeechOnly, _, _) => return Err(PromptError::ContextNotAllowed { condition }),
        (Condition::Multimodal, Some(_), _) => return Err(PromptError::CaptionNotAllowed { condition }),
        (Condition::Multimodal, None, None) => return Err(PromptError::MissingImage { condition }),
        (Condition::Multimodal, None, Some(_)) => speech_turn(source_text),
        (Condition::Caption | Condition::Adversarial, _, Some(_)) => {
            return Err(PromptError::ImageNotAllowed { condition })
        }
        (Condition::Caption | Condition::Adversarial, None, None) => {
            return Err(PromptError::MissingCaption { condition })
        }
        (Condition::Caption | Condition::Adversarial, Some(c), None) => caption_turn(c, source_text),
    };
    let system_instruction = system_instruction(condition, langs);
    let image_attachment = image.cloned();
    let digest = prompt_digest(
        condition,
        &system_instruction,
        &user_text,
        image_attachment.as_ref(),
        decoding,
    );
    Ok(PromptBundle {
        condition,
        system_instruction,
        user_text,
        image_attachment,
        decoding: decoding.clone(),
        digest,
    })
}

fn prompt_digest(
    condition: Condition,
    system: &str,
    user: &str,
    image: Option<&EncodedImage>,
    decoding: &DecodingParams,
) -> String {
    let mut h = Sha256::new();
    let mut field = |bytes: &[u8]| {
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    };
    field(b"vgi-prompt");
    field(fixtures::VERSION.as_bytes());
    field(condition.code().as_bytes());
    field(system.as_bytes());
    field(user.as_bytes());
    match image {
        Some(img) => {
            field(img.media_type.as_bytes());
            field(&img.bytes);
        }
        None => field(b""),
    }
    field(decoding.model_id.as_bytes());
    field(&decoding.temperature.to_le_bytes());
    hex::encode(h.finalize())
}

/// One frozen caption, keyed by the corpus item whose image it describes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub item_id: String,
    pub caption: String,
    pub model_id: String,
    pub created_at: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CaptionStore {
    records: BTreeMap<String, CaptionRecord>,
}

impl CaptionStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, record: CaptionRecord) {
        self.records.insert(record.item_id.clone(), record);
    }

    pub fn get(&self, item_id: &str) -> Option<&CaptionRecord> {
        self.records.get(item_id)
    }

    pub fn caption(&self, item_id: &str) -> Option<&str> {
        self.get(item_id).map(|r| r.caption.as_str())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &CaptionRecord> {
        self.records.values()
    }

    pub fn from_jsonl(text: &str) -> Result<Self, String> {
        let mut store = Self::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: CaptionRecord =
                serde_json::from_str(line).map_err(|e| format!("caption store line {}: {e}", idx + 1))?;
            store.insert(rec);
        }
        Ok(store)
    }

    /// Sorted by item id.
    pub fn to_jsonl(&self) -> String {
        self.records
            .values()
            .map(|r| serde_json::to_string(r).expect("caption record serializes") + "\n")
            .collect()
    }
}

/// Pre-encoded images keyed by corpus item id, used by the multimodal
/// condition.
pub type ImageStore = BTreeMap<String, EncodedImage>;

/// Picks the right visual context for `condition` and builds the bundle:
/// no context (C1), the item's own caption (C2), the item's own image (C3)
/// or the donor item's caption (C4).
pub fn route_condition(
    item: &CorpusItem,
    condition: Condition,
    pairing: Option<&AdversarialPairing>,
    captions: &CaptionStore,
    images: &ImageStore,
    decoding: &DecodingParams,
) -> Result<PromptBundle, PromptError> {
    let langs = LangPair::of(item);
    let caption_for = |owner: &str| {
        captions.caption(owner).ok_or_else(|| PromptError::CaptionUnavailable {
            item_id: item.id.clone(),
            image_owner: owner.to_string(),
        })
    };
    match condition {
        Condition::SpeechOnly => build_prompt(&item.source_text, condition, None, None, &langs, decoding),
        Condition::Caption => {
            let caption = caption_for(&item.id)?;
            build_prompt(&item.source_text, condition, Some(caption), None, &langs, decoding)
        }
        Condition::Multimodal => {
            let image = images.get(&item.id).ok_or_else(|| PromptError::ImageUnavailable {
                item_id: item.id.clone(),
            })?;
            build_prompt(&item.source_text, condition, None, Some(image), &langs, decoding)
        }
        Condition::Adversarial => {
            let pairing = pairing.ok_or_else(|| PromptError::PairingMissing {
                item_id: item.id.clone(),
            })?;
            let donor = pairing.donor(&item.id).ok_or_else(|| PromptError::DonorMissing {
                item_id: item.id.clone(),
            })?;
            let caption = caption_for(donor)?;
            build_prompt(&item.source_text, condition, Some(caption), None, &langs, decoding)
        }
    }
}
