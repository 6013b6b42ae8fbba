//! Score a handful of predictions with each metric family.

use metacog_eval::catalog::{builtin_task, Answer};
use metacog_eval::scoring::{score_run, ParseFailureMode, Prediction};
use metacog_eval::StrategyId;

fn pred(id: &str, labels: Option<Answer>) -> Prediction {
    Prediction {
        instance_id: id.into(),
        labels,
        confidence: None,
        vote_detail: None,
    }
}

fn main() -> anyhow::Result<()> {
    // Paraphrase detection: accuracy plus F1 on the positive class. One
    // prediction failed to parse.
    let qqp = builtin_task("qqp")?;
    let golds = vec![
        ("a".to_string(), Answer::single("True")),
        ("b".to_string(), Answer::single("False")),
        ("c".to_string(), Answer::single("True")),
        ("d".to_string(), Answer::single("False")),
    ];
    let preds = vec![
        pred("a", Some(Answer::single("True"))),
        pred("b", Some(Answer::single("True"))),
        pred("c", None),
        pred("d", Some(Answer::single("False"))),
    ];
    for mode in [ParseFailureMode::CountWrong, ParseFailureMode::Exclude] {
        let r = score_run(&qqp, StrategyId::Mp, "demo", &preds, &golds, mode)?;
        println!("qqp {mode:?}: {} ({:?})", r.slash_cell(), r.counts);
    }

    // Multi-label contract classification: micro and macro F1.
    let unfair = builtin_task("unfair-tos")?;
    let set = |xs: &[&str]| Answer::Labels(xs.iter().map(|s| s.to_string()).collect());
    let golds = vec![
        ("x".to_string(), set(&["Arbitration", "Jurisdiction"])),
        ("y".to_string(), set(&["none"])),
    ];
    let preds = vec![
        pred("x", Some(set(&["Arbitration"]))),
        pred("y", Some(set(&["none"]))),
    ];
    let r = score_run(
        &unfair,
        StrategyId::Mp,
        "demo",
        &preds,
        &golds,
        Default::default(),
    )?;
    println!(
        "unfair-tos {}: {} (macro over labels present: {:?})",
        r.slash_heading(),
        r.slash_cell(),
        r.macro_f1_present
    );

    // Token-level BIO F1.
    let chem = builtin_task("bc5cdr-chem")?;
    let tags = |xs: &[&str]| Answer::Tags(xs.iter().map(|s| s.to_string()).collect());
    let golds = vec![("s".to_string(), tags(&["B", "I", "O", "B"]))];
    let preds = vec![pred("s", Some(tags(&["B", "O", "O", "B"])))];
    let r = score_run(
        &chem,
        StrategyId::Mp,
        "demo",
        &preds,
        &golds,
        Default::default(),
    )?;
    println!("bc5cdr-chem: {}", r.slash_cell());
    Ok(())
}
