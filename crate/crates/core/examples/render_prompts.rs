//! Render zero-shot prompts for one WiC instance under each strategy, then
//! a five-shot metacognitive prompt with worked exemplars.

use metacog_eval::catalog::{builtin_task, Answer, Exemplar, ExemplarSet, Instance};
use metacog_eval::prompt::{PromptEngine, TemplateRegistry};
use metacog_eval::StrategyId;

fn wic(id: &str, s1: &str, s2: &str, word: &str, gold: &str) -> Instance {
    Instance {
        instance_id: id.into(),
        slot_values: [
            ("sentence_1".to_string(), s1.to_string()),
            ("sentence_2".to_string(), s2.to_string()),
            ("word".to_string(), word.to_string()),
        ]
        .into(),
        gold: Answer::single(gold),
    }
}

fn main() -> anyhow::Result<()> {
    let spec = builtin_task("wic")?;
    let instance = wic(
        "demo",
        "The washing machine won't go unless it's plugged in.",
        "The day went well until I got your call.",
        "go",
        "False",
    );
    let engine = PromptEngine::new(TemplateRegistry::builtin());
    for strategy in [StrategyId::Mp, StrategyId::Cot, StrategyId::Ps] {
        let bundle = engine.render(strategy, &spec, &instance, None)?;
        println!(
            "=== {strategy} (temperature {}, {} sample) hash {}\n{}\n",
            bundle.decoding.temperature,
            bundle.decoding.sample_count,
            &bundle.prompt_hash[..12],
            bundle.text
        );
    }

    let exemplars = ExemplarSet {
        task_id: "wic".into(),
        exemplars: (0..5)
            .map(|i| Exemplar {
                instance: wic(
                    &format!("train-{i}"),
                    &format!("She will bank the fire number {i}."),
                    "He deposited money at the bank.",
                    "bank",
                    "False",
                ),
                worked_answer: "The senses differ. The target word has the same meaning in both sentences: False.".into(),
            })
            .collect(),
    };
    let few_shot = PromptEngine::new(TemplateRegistry::builtin()).with_shots(5);
    let bundle = few_shot.render(StrategyId::MMp, &spec, &instance, Some(&exemplars))?;
    println!(
        "=== M-MP, {} shots: {} characters",
        bundle.shots,
        bundle.text.len()
    );
    Ok(())
}
