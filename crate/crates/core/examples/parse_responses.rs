//! Extract answers, confidences and stages from free-form model output.

use metacog_eval::catalog::builtin_task;
use metacog_eval::parse::{extract_answer, extract_confidence, segment_stages, AnswerContract};

fn main() -> anyhow::Result<()> {
    let samples = [
        ("wic", include_str!("../tests/fixtures/wic_answer.txt")),
        ("qnli", include_str!("../tests/fixtures/qnli_answer.txt")),
        ("ddi", include_str!("../tests/fixtures/ddi_answer.txt")),
    ];
    for (task, raw) in samples {
        let spec = builtin_task(task)?;
        let contract = AnswerContract::for_task(&spec);
        let ex = extract_answer(raw, &contract)?;
        let confidence = extract_confidence(raw)?;
        let stages = segment_stages(raw).map_or(0, |s| s.len());
        println!(
            "{task:<5} answer {:<15} mode {:?}  confidence {:?}  stages {stages}",
            ex.answer.to_string(),
            ex.mode,
            confidence
        );
    }

    // Without the contract sentence, a lone label mention near the end is
    // still accepted, in lenient mode.
    let spec = builtin_task("qnli")?;
    let contract = AnswerContract::for_task(&spec);
    let ex = extract_answer("After weighing it, I'd say not_entailment.", &contract)?;
    println!("lenient: {} ({:?})", ex.answer, ex.mode);

    // Two labels on a single-label task are ambiguous, not a guess.
    let err = extract_answer("Either entailment or not_entailment.", &contract).unwrap_err();
    println!("ambiguous: {err}");

    // Multi-label answers drop labels outside the label space and say so.
    let unfair = builtin_task("unfair-tos")?;
    let contract = AnswerContract::for_task(&unfair);
    let ex = extract_answer(
        "The unfair term types are: Arbitration; Unilateral termination and Mystery clause.",
        &contract,
    )?;
    println!("multi-label: {} ({} dropped)", ex.answer, ex.dropped);
    Ok(())
}
