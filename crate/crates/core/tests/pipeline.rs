use std::path::PathBuf;

use approx::assert_abs_diff_eq;
use factguard_core::claims::ClaimValue;
use factguard_core::correction::Strategy;
use factguard_core::evidence::Stance;
use factguard_core::pipeline::{Config, Gate, Pipeline, VerifyRequest};

fn fixture_config() -> Config {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/einstein/config.toml");
    Config::load(&path).unwrap()
}

async fn pipeline() -> Pipeline {
    fixture_config().build().await.unwrap()
}

#[tokio::test]
async fn wrong_year_is_substituted_with_both_publications() {
    let p = pipeline().await;
    let r = p.verify(&VerifyRequest::text("Einstein published relativity in 1920")).await.unwrap();

    assert_eq!(r.verdicts.len(), 1);
    let v = &r.verdicts[0];
    assert_eq!(v.claim.subject.canonical_id, "Q937");
    assert_eq!(v.claim.predicate, "published");
    assert_eq!(v.claim.object, ClaimValue::year(1920));

    let post = &v.report.fused_posterior;
    assert_abs_diff_eq!(post.mass(&ClaimValue::year(1920)), 0.0, epsilon = 1e-12);
    let both = post.mass(&ClaimValue::year(1905)) + post.mass(&ClaimValue::year(1915));
    assert_abs_diff_eq!(both, 1.0, epsilon = 1e-9);
    assert!(v.evidence.iter().all(|e| e.stance != Stance::Supports));

    assert!(v.confidence.combined <= 0.7);
    assert_eq!(v.gate, Gate::Corrected);
    assert_eq!(r.corrections.len(), 1);
    assert_eq!(r.corrections[0].strategy, Strategy::Substitute);
    assert!(r.final_text.contains("1905"));
    assert!(r.final_text.contains("1915"));
    assert!(!r.final_text.contains("1920"));
    assert!(!r.rolled_back);
    assert!(r.e_score >= r.initial_e_score);
}

#[tokio::test]
async fn corrected_text_is_a_fixed_point() {
    let p = pipeline().await;
    let first = p.verify(&VerifyRequest::text("Einstein published relativity in 1920")).await.unwrap();
    let second = p.verify(&VerifyRequest::text(first.final_text.clone())).await.unwrap();
    assert!(second.corrections.is_empty(), "{:?}", second.corrections);
    assert_eq!(second.final_text, first.final_text);
    assert!(second.verdicts.iter().all(|v| v.gate == Gate::Pass));
}

#[tokio::test]
async fn supported_claim_passes_untouched() {
    let p = pipeline().await;
    let text = "Einstein was born in 1879.";
    let r = p.verify(&VerifyRequest::text(text)).await.unwrap();
    assert_eq!(r.verdicts.len(), 1);
    assert_eq!(r.verdicts[0].gate, Gate::Pass);
    assert_eq!(r.final_text, text);
    assert!(r.reverification.is_none());
}

#[tokio::test]
async fn text_without_claims_scores_one() {
    let p = pipeline().await;
    let r = p.verify(&VerifyRequest::text("Hello there!")).await.unwrap();
    assert!(r.verdicts.is_empty());
    assert_eq!(r.e_score, 1.0);
    assert_eq!(r.final_text, "Hello there!");
}

#[tokio::test]
async fn correction_that_lowers_the_score_is_withdrawn() {
    let mut cfg = fixture_config();
    // A hedge that smuggles in a refuted claim drags the evidence score down.
    cfg.correction.hedge_phrases = vec!["Einstein was born in 1850. It is uncertain whether ".into()];
    let p = cfg.build().await.unwrap();
    let text = "Einstein published special relativity in 1905. The drug was approved in 1990.";
    let r = p.verify(&VerifyRequest::text(text)).await.unwrap();
    let rev = r.reverification.as_ref().expect("a correction was attempted");
    assert!(rev.e_score < r.initial_e_score, "{} vs {}", rev.e_score, r.initial_e_score);
    assert!(!rev.accepted);
    assert!(r.rolled_back);
    assert_eq!(r.final_text, text);
    assert_eq!(r.e_score, r.initial_e_score);
    assert!(r.annotation.as_deref().unwrap().contains("low confidence"));
    assert!(r.verdicts.iter().any(|v| v.gate == Gate::RolledBack));
}

#[tokio::test]
async fn output_is_deterministic_without_timings() {
    let a = pipeline().await;
    let b = pipeline().await;
    let req = VerifyRequest::text("Einstein published relativity in 1920. Einstein was born in 1879.");
    let ja = a.verify(&req).await.unwrap().to_json();
    let jb = b.verify(&req).await.unwrap().to_json();
    let jc = a.verify(&req).await.unwrap().to_json();
    assert_eq!(ja, jb);
    assert_eq!(ja, jc);
    assert!(ja.contains("\"total_ms\":0"));
}

#[tokio::test]
async fn unreachable_sources_mark_output_unverified() {
    let mut cfg = fixture_config();
    for s in &mut cfg.sources {
        s.backend = "http".into();
        s.endpoint = Some("http://127.0.0.1:9/search".into());
    }
    let p = cfg.build().await.unwrap();
    let text = "Einstein published relativity in 1920";
    let r = p.verify(&VerifyRequest::text(text)).await.unwrap();
    assert!(r.unverified);
    assert_eq!(r.final_text, text);
    assert!(r.corrections.is_empty());
    assert_eq!(r.degraded_sources, vec!["db", "kg", "web"]);
}
