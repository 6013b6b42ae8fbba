//! Error-type distributions from annotation files, per partition.

use metacog_eval::analysis::{
    distribution_tsv, error_distribution, ErrorAnnotation, ErrorPartition,
};

fn main() -> anyhow::Result<()> {
    let files = [
        (
            ErrorPartition::General,
            include_str!("../tests/fixtures/annotations_general.jsonl"),
        ),
        (
            ErrorPartition::Biomedical,
            include_str!("../tests/fixtures/annotations_biomedical.jsonl"),
        ),
        (
            ErrorPartition::Legal,
            include_str!("../tests/fixtures/annotations_legal.jsonl"),
        ),
    ];
    for (partition, text) in files {
        let anns: Vec<ErrorAnnotation> = text
            .lines()
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()?;
        let dist = error_distribution(&anns, partition.categories())?;
        println!("# {partition:?}: {} annotations", anns.len());
        println!("{}", distribution_tsv(&dist));
    }
    Ok(())
}
