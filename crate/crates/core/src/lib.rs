//! Vision-grounded interpreting.
//!
//! A cascaded speech translation pipeline whose translation step can be
//! conditioned on the visual scene, plus the diagnostic harness that
//! compares four grounding conditions on an ambiguity corpus.

pub mod batch;
pub mod clock;
pub mod corpus;
pub mod evalstats;
pub mod gateway;
pub mod prompting;
pub mod report;
pub mod session;
pub mod vision;

pub use batch::{run_batch, BatchOutcome, RunConfig, RunError, RunManifest, TrialFailure};
pub use clock::{Clock, FixedClock, SystemClock};
pub use corpus::{AdversarialPairing, Corpus, CorpusItem, CorpusStats, SenseSpec, TriggerCategory};
pub use evalstats::{ConditionSummary, Judgement, McNemarResult, TrialRecord, Verdict};
pub use gateway::{Gateway, GatewayError, MockProvider, MockScript, ProviderConfig, TranslationResult};
pub use prompting::{Condition, PromptBundle};
pub use report::{render_text, run_report, RunReport};
pub use session::{EventBody, SessionConfig, SessionEvent, SessionHandle, SessionManager, SessionUpdate};
pub use vision::{CaptionStyle, EncodedImage, Frame, FrameSample, SamplerState, SceneCaption};
