mod common;

use std::fs;
use std::sync::Arc;
use std::time::Duration;

use common::*;
use vgi_core::gateway::{AsrScript, CallPurpose, TranscriptSegment};
use vgi_core::session::{SessionError, FORCE_FINALIZE_AFTER};
use vgi_core::{Condition, EventBody, MockScript, SessionConfig, SessionEvent, SessionManager, SessionUpdate};

fn frame_bytes(name: &str) -> Vec<u8> {
    fs::read(fixture_corpus().parent().unwrap().join("images").join(name)).unwrap()
}

fn manager(script: MockScript) -> SessionManager {
    let (_, gw) = gateway(script, 4);
    SessionManager::new(gw, clock())
}

fn script() -> MockScript {
    MockScript::default()
        .default_caption("A workshop; a person points at a wrench on the bench.")
        .responder(|call| {
            if call.purpose != CallPurpose::Translate {
                return None;
            }
            let text = call.body.text();
            Some(
                if text.contains("wrench") {
                    "Pass me the wrench"
                } else {
                    "Pass me the key"
                }
                .to_string(),
            )
        })
}

fn kinds(events: &[SessionEvent]) -> Vec<&'static str> {
    events.iter().map(|e| e.body.kind()).collect()
}

fn translations(events: &[SessionEvent]) -> Vec<&SessionEvent> {
    events
        .iter()
        .filter(|e| matches!(e.body, EventBody::Translation { .. }))
        .collect()
}

fn config(condition: Condition) -> SessionConfig {
    SessionConfig {
        condition,
        ..SessionConfig::new("it", "en")
    }
}

#[tokio::test]
async fn caption_condition_pipeline_order() {
    let mgr = manager(script());
    let s = mgr.create(config(Condition::Caption)).unwrap();
    s.push_frame(frame_bytes("lex-01-chiave.png"), Some(0)).await.unwrap();
    s.push_audio(b"Passami la chiave".to_vec()).await.unwrap();
    s.sync().await.unwrap();

    let events = s.events().since(0);
    assert_eq!(
        kinds(&events),
        [
            "frame_sampled",
            "caption_updated",
            "transcript",
            "translation",
            "metrics"
        ]
    );
    let seqs: Vec<u64> = events.iter().map(|e| e.seq).collect();
    assert_eq!(seqs, [1, 2, 3, 4, 5]);
    match &events[3].body {
        EventBody::Translation {
            text,
            condition,
            transcript_seq,
            caption_seq,
            caption,
            frame_seq,
            ..
        } => {
            assert_eq!(text, "Pass me the wrench");
            assert_eq!(*condition, Condition::Caption);
            assert_eq!(*transcript_seq, 3);
            assert_eq!(*caption_seq, Some(2));
            assert!(caption.as_deref().unwrap().contains("wrench"));
            assert_eq!(*frame_seq, None);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[tokio::test]
async fn switching_to_speech_only_drops_the_caption() {
    let mgr = manager(script());
    let s = mgr.create(config(Condition::Caption)).unwrap();
    s.push_frame(frame_bytes("lex-01-chiave.png"), Some(0)).await.unwrap();
    s.push_audio(b"Passami la chiave".to_vec()).await.unwrap();
    let snap = s
        .update(SessionUpdate {
            condition: Some(Condition::SpeechOnly),
            caption_style: None,
        })
        .await
        .unwrap();
    assert_eq!(snap.config.condition, Condition::SpeechOnly);
    assert_eq!(snap.condition_log.len(), 1);
    assert_eq!(snap.condition_log[0].after_seq, 5);
    s.push_audio(b"Passami la chiave".to_vec()).await.unwrap();
    s.sync().await.unwrap();

    let events = s.events().since(0);
    let t = translations(&events);
    assert_eq!(t.len(), 2);
    match &t[1].body {
        EventBody::Translation {
            condition,
            caption_seq,
            caption,
            text,
            ..
        } => {
            assert_eq!(*condition, Condition::SpeechOnly);
            assert_eq!(*caption_seq, None);
            assert_eq!(*caption, None);
            assert_eq!(text, "Pass me the key");
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[tokio::test]
async fn sessions_are_isolated() {
    let mgr = manager(script());
    let a = mgr.create(config(Condition::SpeechOnly)).unwrap();
    let b = mgr.create(config(Condition::Caption)).unwrap();
    assert_ne!(a.id(), b.id());
    a.push_audio(b"Passami la chiave".to_vec()).await.unwrap();
    b.push_frame(frame_bytes("lex-04-bank.png"), Some(0)).await.unwrap();
    a.push_audio(b"Passami la chiave".to_vec()).await.unwrap();
    a.sync().await.unwrap();
    b.sync().await.unwrap();

    let ea = a.events().since(0);
    let eb = b.events().since(0);
    assert!(ea.iter().all(|e| e.session_id == a.id()));
    assert!(eb.iter().all(|e| e.session_id == b.id()));
    assert_eq!(
        ea.iter().map(|e| e.seq).collect::<Vec<_>>(),
        (1..=ea.len() as u64).collect::<Vec<_>>()
    );
    assert_eq!(kinds(&eb), ["frame_sampled", "caption_updated"]);
    assert_eq!(translations(&ea).len(), 2);
    assert_eq!(mgr.ids(), vec![a.id().to_string(), b.id().to_string()]);
}

#[tokio::test]
async fn adversarial_uses_the_previous_scene() {
    let mgr = manager(
        MockScript::default()
            .default_caption("unused")
            .default_translation("ok")
            .responder(|call| call.image_sha256.as_ref().map(|sha| format!("scene {}", &sha[..8]))),
    );
    let s = mgr.create(config(Condition::Adversarial)).unwrap();
    s.push_frame(frame_bytes("lex-01-chiave.png"), Some(0)).await.unwrap();
    s.push_audio(b"Passami la chiave".to_vec()).await.unwrap();
    s.sync().await.unwrap();
    let events = s.events().since(0);
    match &events.last().unwrap().body {
        EventBody::Error { stage, .. } => assert_eq!(stage, "route"),
        other => panic!("expected route error, got {other:?}"),
    }

    s.push_frame(frame_bytes("gen-01-doctor.png"), Some(5_000))
        .await
        .unwrap();
    s.push_audio(b"Passami la chiave".to_vec()).await.unwrap();
    s.sync().await.unwrap();
    let events = s.events().since(0);
    let captions: Vec<&SessionEvent> = events
        .iter()
        .filter(|e| matches!(e.body, EventBody::CaptionUpdated { .. }))
        .collect();
    assert_eq!(captions.len(), 2);
    match &translations(&events)[0].body {
        EventBody::Translation { caption_seq, .. } => assert_eq!(*caption_seq, Some(captions[0].seq)),
        other => panic!("unexpected {other:?}"),
    }
}

#[tokio::test]
async fn translations_never_reference_later_captions() {
    let mgr = manager(script());
    let s = mgr.create(config(Condition::Caption)).unwrap();
    for (i, name) in ["lex-01-chiave.png", "lex-04-bank.png", "gen-01-doctor.png"]
        .iter()
        .enumerate()
    {
        s.push_frame(frame_bytes(name), Some(i as u64 * 3_000)).await.unwrap();
        s.push_audio(b"Passami la chiave".to_vec()).await.unwrap();
    }
    s.sync().await.unwrap();
    let events = s.events().since(0);
    assert_eq!(translations(&events).len(), 3);
    for e in translations(&events) {
        if let EventBody::Translation {
            caption_seq: Some(c),
            transcript_seq,
            ..
        } = e.body
        {
            assert!(c < e.seq && transcript_seq < e.seq);
        }
    }
}

#[tokio::test]
async fn speech_synthesis_precedes_metrics() {
    let mgr = manager(script());
    let s = mgr
        .create(SessionConfig {
            tts_enabled: true,
            ..config(Condition::SpeechOnly)
        })
        .unwrap();
    s.push_audio(b"Passami la chiave".to_vec()).await.unwrap();
    s.sync().await.unwrap();
    let events = s.events().since(0);
    assert_eq!(kinds(&events), ["transcript", "translation", "audio_ready", "metrics"]);
    match &events[2].body {
        EventBody::AudioReady {
            translation_seq,
            media_type,
            byte_len,
            ..
        } => {
            assert_eq!(*translation_seq, 2);
            assert_eq!(media_type, "audio/wav");
            assert!(*byte_len > 44);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[tokio::test(start_paused = true)]
async fn unfinished_speech_is_finalized_after_timeout() {
    let partial = TranscriptSegment {
        text: "Passami la".into(),
        start_ms: 0,
        end_ms: 800,
        is_final: false,
    };
    let mgr = manager(script().asr(AsrScript::Scripted(vec![vec![partial]])));
    let s = mgr.create(config(Condition::SpeechOnly)).unwrap();
    s.push_audio(vec![0u8; 320]).await.unwrap();
    s.sync().await.unwrap();
    assert_eq!(kinds(&s.events().since(0)), ["transcript"]);

    tokio::time::sleep(FORCE_FINALIZE_AFTER - Duration::from_millis(100)).await;
    s.sync().await.unwrap();
    assert_eq!(s.events().last_seq(), 1);

    tokio::time::sleep(Duration::from_millis(200)).await;
    s.sync().await.unwrap();
    let events = s.events().since(0);
    assert_eq!(kinds(&events), ["transcript", "transcript", "translation", "metrics"]);
    assert!(matches!(events[1].body, EventBody::Transcript { is_final: true, .. }));
}

#[tokio::test]
async fn bad_frames_become_error_events() {
    let mgr = manager(script());
    let s = mgr.create(config(Condition::Caption)).unwrap();
    s.push_frame(b"not an image".to_vec(), None).await.unwrap();
    s.sync().await.unwrap();
    let events = s.events().since(0);
    assert!(matches!(&events[0].body, EventBody::Error { stage, .. } if stage == "frame"));
}

#[tokio::test]
async fn event_json_round_trips() {
    let mgr = manager(script());
    let s = mgr.create(config(Condition::Caption)).unwrap();
    s.push_frame(frame_bytes("lex-01-chiave.png"), Some(0)).await.unwrap();
    s.push_audio(b"Passami la chiave".to_vec()).await.unwrap();
    s.sync().await.unwrap();
    for e in s.events().since(0) {
        let json = serde_json::to_value(&e).unwrap();
        assert_eq!(json["type"], e.body.kind());
        assert!(json["payload"].is_object());
        assert_eq!(json["seq"], e.seq);
        let back: SessionEvent = serde_json::from_value(json).unwrap();
        assert_eq!(back, e);
    }
}

#[tokio::test]
async fn subscribers_get_backlog_then_live_events() {
    let mgr = manager(script());
    let s = mgr.create(config(Condition::SpeechOnly)).unwrap();
    s.push_audio(b"Passami la chiave".to_vec()).await.unwrap();
    s.sync().await.unwrap();
    let (backlog, mut rx) = s.events().subscribe(1);
    assert_eq!(backlog.first().map(|e| e.seq), Some(2));
    s.push_audio(b"Passami la chiave".to_vec()).await.unwrap();
    let next = rx.recv().await.unwrap();
    assert_eq!(next.seq, backlog.last().unwrap().seq + 1);
}

#[tokio::test]
async fn manager_rejects_bad_configs_and_unknown_ids() {
    let mgr = manager(script());
    let mut cfg = config(Condition::SpeechOnly);
    cfg.session_id = Some("room-1".into());
    let s = mgr.create(cfg.clone()).unwrap();
    assert_eq!(s.id(), "room-1");
    assert!(matches!(mgr.create(cfg), Err(SessionError::Duplicate(_))));
    let mut bad = config(Condition::SpeechOnly);
    bad.session_id = Some("../etc".into());
    assert!(matches!(mgr.create(bad), Err(SessionError::InvalidConfig(_))));
    let mut bad = config(Condition::SpeechOnly);
    bad.source_lang = " ".into();
    assert!(matches!(mgr.create(bad), Err(SessionError::InvalidConfig(_))));
    mgr.remove("room-1").unwrap();
    assert!(matches!(mgr.get("room-1"), Err(SessionError::NotFound(_))));
    let _: Arc<_> = s;
}
