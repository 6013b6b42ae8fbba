//! Majority vote over ten sampled answers, with a tie.

use metacog_eval::catalog::Answer;
use metacog_eval::parse::ParsedResponse;
use metacog_eval::scoring::majority_vote;

fn sample(index: u32, label: Option<&str>) -> ParsedResponse {
    ParsedResponse {
        instance_id: "q1".into(),
        sample_index: index,
        labels: label.map(Answer::single),
        confidence: None,
        stages: None,
        parse_mode: None,
        dropped_labels: 0,
        error: label.is_none().then(|| "no answer found".into()),
    }
}

fn main() -> anyhow::Result<()> {
    let clear: Vec<_> = (0..10)
        .map(|i| {
            sample(
                i,
                Some(if i < 7 {
                    "entailment"
                } else {
                    "not_entailment"
                }),
            )
        })
        .collect();
    let p = majority_vote(&clear)?;
    println!("7 vs 3: {} {:?}", p.labels.unwrap(), p.vote_detail.unwrap());

    // Four each plus two unparsable samples: the tie goes to the label
    // that sorts first.
    let tied: Vec<_> = (0..10)
        .map(|i| match i {
            0..=3 => sample(i, Some("not_entailment")),
            4..=7 => sample(i, Some("entailment")),
            _ => sample(i, None),
        })
        .collect();
    let p = majority_vote(&tied)?;
    println!("4 vs 4: {} {:?}", p.labels.unwrap(), p.vote_detail.unwrap());

    let silent: Vec<_> = (0..10).map(|i| sample(i, None)).collect();
    println!("all unparsable: {}", majority_vote(&silent).unwrap_err());
    Ok(())
}
