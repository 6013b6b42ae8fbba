//! Send one prompt to a live chat-completion endpoint.
//!
//! Set `METACOG_API_KEY`, and optionally `METACOG_ENDPOINT` and
//! `METACOG_MODEL`. Without a key the example explains itself and exits.

use metacog_eval::backend::{BackendConfig, BackendKind, Gateway, RequestContext};
use metacog_eval::catalog::{builtin_task, Answer, Instance};
use metacog_eval::parse::{parse_response, AnswerContract};
use metacog_eval::prompt::{PromptEngine, TemplateRegistry};
use metacog_eval::StrategyId;

fn main() -> anyhow::Result<()> {
    if std::env::var("METACOG_API_KEY").map_or(true, |v| v.is_empty()) {
        println!("METACOG_API_KEY is not set; skipping the live call.");
        return Ok(());
    }
    let config = BackendConfig {
        kind: BackendKind::Http,
        endpoint: Some(
            std::env::var("METACOG_ENDPOINT")
                .unwrap_or_else(|_| "https://api.openai.com/v1/chat/completions".into()),
        ),
        auth_ref: Some("METACOG_API_KEY".into()),
        ..BackendConfig::scripted(std::env::var("METACOG_MODEL").unwrap_or_else(|_| "gpt-4".into()))
    };
    let gateway = Gateway::from_config(config)?;

    let spec = builtin_task("qnli")?;
    let instance = Instance {
        instance_id: "qnli-demo".into(),
        slot_values: [
            ("question".to_string(), "Who was the first President to address the NAACP?".to_string()),
            (
                "sentence".to_string(),
                "In front of 10,000 people at the Lincoln Memorial, the president left no doubt where he stood on civil rights.".to_string(),
            ),
        ]
        .into(),
        gold: Answer::single("not_entailment"),
    };
    let bundle = PromptEngine::new(TemplateRegistry::builtin()).render(
        StrategyId::Mp,
        &spec,
        &instance,
        None,
    )?;
    let ctx = RequestContext {
        run_id: "live-demo",
        task_id: "qnli",
        instance_id: "qnli-demo",
    };
    let transcript = gateway.complete(ctx, &bundle, 0)?;
    println!("{}\n", transcript.raw_text);
    let parsed = parse_response(
        &transcript.raw_text,
        &spec,
        &AnswerContract::for_task(&spec),
        &instance,
        0,
    );
    println!(
        "answer {:?}, confidence {:?}, {} ms",
        parsed.labels, parsed.confidence, transcript.latency_ms
    );
    Ok(())
}
