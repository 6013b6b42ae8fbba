//! End to end on the scripted backend: lay out a small dataset, record
//! fixtures for every prompt, run MP and CoT, interrupt and resume one of
//! them, then report.

use std::path::Path;

use metacog_eval::backend::{write_fixtures, BackendConfig, Fixture};
use metacog_eval::catalog::{builtin_task, save_instances, Answer, DatasetFormat, Instance};
use metacog_eval::parse::AnswerContract;
use metacog_eval::run::{
    plan_prompts, report, resume, run_eval, run_eval_with, DataSource, ReportMode, ReportOptions,
    RunConfig, RunOptions,
};
use metacog_eval::StrategyId;

fn config(root: &Path, strategy: StrategyId) -> anyhow::Result<RunConfig> {
    let spec = builtin_task("boolq")?;
    let data = root.join("boolq.jsonl");
    if !data.exists() {
        let instances: Vec<Instance> = (0..8)
            .map(|i| Instance {
                instance_id: format!("boolq-{i}"),
                slot_values: [
                    ("passage".to_string(), format!("Passage number {i}.")),
                    ("question".to_string(), format!("Is number {i} even?")),
                ]
                .into(),
                gold: Answer::single(if i % 2 == 0 { "yes" } else { "no" }),
            })
            .collect();
        save_instances(&data, &instances)?;
    }
    let fixtures = root.join(format!("fixtures-{strategy}.jsonl"));
    let mut backend = BackendConfig::scripted("scripted");
    backend.fixtures = Some(fixtures.clone());
    let config = RunConfig {
        run_id: format!("boolq-{strategy}"),
        task_id: "boolq".into(),
        strategy,
        shots: None,
        eval_n: 6,
        seed: 7,
        exemplar_seed: None,
        parse_failure_mode: Default::default(),
        overrides: Default::default(),
        backend,
        dataset: DataSource {
            path: data,
            format: DatasetFormat::Native,
            split: "validation".into(),
        },
        train: None,
        exemplar_answers: None,
        task_file: None,
        templates_dir: None,
        system_prompt: None,
        frozen_clock: Some("2024-01-01T00:00:00Z".parse()?),
        output_dir: Some(root.join(format!("runs/{strategy}"))),
        cache_dir: None,
    };

    // A model that is always right under MP and wrong on odd ids under CoT.
    let contract = AnswerContract::for_task(&spec);
    let mut recorded = Vec::new();
    for planned in plan_prompts(&config)? {
        let odd = planned.instance.instance_id.ends_with(['1', '3', '5', '7']);
        let answer = if strategy == StrategyId::Cot && odd {
            Answer::single("yes")
        } else {
            planned.instance.gold.clone()
        };
        recorded.push(Fixture {
            prompt_hash: planned.bundle.prompt_hash.clone(),
            sample_index: 0,
            text: format!(
                "1. Read it.\n2. First guess.\n3. Re-check.\n4. {}.\n5. I am 80% confident.",
                contract.instantiate(&answer, None)
            ),
        });
    }
    write_fixtures(&fixtures, &recorded)?;
    Ok(config)
}

fn main() -> anyhow::Result<()> {
    let tmp = tempfile::tempdir()?;
    let mp = config(tmp.path(), StrategyId::Mp)?;
    let cot = config(tmp.path(), StrategyId::Cot)?;

    let partial = run_eval_with(
        &mp,
        &RunOptions {
            stop_after: Some(2),
            ..Default::default()
        },
    )?;
    println!(
        "MP interrupted after {} of {} instances",
        partial.manifest.completed(),
        partial.manifest.progress.len()
    );
    let done = resume(&partial.output_dir)?;
    println!(
        "MP resumed: {} more, status {:?}",
        done.executed, done.manifest.status
    );
    run_eval(&cot)?;

    let dirs = vec![done.output_dir, cot.output_dir.clone().expect("set above")];
    print!(
        "\n{}",
        report(&dirs, &ReportOptions::new(ReportMode::Table2))?.main()
    );
    print!(
        "\n{}",
        report(&dirs, &ReportOptions::new(ReportMode::Fig3))?.main()
    );
    print!(
        "\n{}",
        report(&dirs, &ReportOptions::new(ReportMode::Calibration))?.main()
    );
    Ok(())
}
