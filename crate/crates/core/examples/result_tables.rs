//! Rebuild model-averaged scores and relative improvements from the
//! committed per-model results table.

use indexmap::IndexMap;
use metacog_eval::analysis::{average_across_models, improvement_report};
use metacog_eval::catalog::MetricId;
use metacog_eval::scoring::{ScoreCounts, ScoreReport};

fn load() -> anyhow::Result<Vec<(String, ScoreReport)>> {
    let text = include_str!("../tests/fixtures/table2.tsv");
    let mut lines = text.lines();
    let header: Vec<(&str, MetricId)> = lines
        .next()
        .unwrap_or_default()
        .split('\t')
        .skip(3)
        .map(|col| {
            let (task, metric) = col.split_once(':').expect("task:metric header");
            Ok((task, serde_json::from_value(metric.into())?))
        })
        .collect::<anyhow::Result<_>>()?;
    let mut out = Vec::new();
    for line in lines.filter(|l| !l.is_empty()) {
        let cells: Vec<&str> = line.split('\t').collect();
        let mut per_task: IndexMap<&str, IndexMap<MetricId, f64>> = IndexMap::new();
        for ((task, metric), cell) in header.iter().zip(&cells[3..]) {
            per_task
                .entry(task)
                .or_default()
                .insert(*metric, cell.parse()?);
        }
        for (task, values) in per_task {
            out.push((
                cells[1].to_string(),
                ScoreReport {
                    task_id: task.into(),
                    strategy: cells[2].parse().map_err(anyhow::Error::msg)?,
                    model_name: cells[0].into(),
                    parse_failure_mode: Default::default(),
                    alt_values: values.clone(),
                    values,
                    counts: ScoreCounts::default(),
                    macro_f1_present: None,
                },
            ));
        }
    }
    Ok(out)
}

fn main() -> anyhow::Result<()> {
    let rows = load()?;
    let zero_shot: Vec<ScoreReport> = rows
        .iter()
        .filter(|(setting, _)| setting == "0S")
        .map(|(_, r)| r.clone())
        .collect();
    let table = average_across_models(&zero_shot)?;
    println!("Averaged over {:?}\n{}", table.models, table.to_tsv());

    let all: Vec<ScoreReport> = rows.into_iter().map(|(_, r)| r).collect();
    print!("{}", improvement_report(&all)?.to_tsv());
    Ok(())
}
