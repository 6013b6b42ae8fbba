//! Walk the built-in task catalog and draw a seeded evaluation subset.

use metacog_eval::catalog::{
    builtin_catalog, builtin_task, catalog_digest, sample_eval_subset, Answer, Instance,
};

fn main() -> anyhow::Result<()> {
    let catalog = builtin_catalog();
    println!(
        "{} tasks, catalog digest {}",
        catalog.len(),
        &catalog_digest(&catalog)[..12]
    );
    for t in &catalog {
        let metrics: Vec<&str> = t.metrics.iter().map(|m| m.as_str()).collect();
        println!(
            "  {:<12} {:<24} {:>3} labels  [{}]  slots {:?}",
            t.task_id,
            t.name,
            t.label_space.labels.len(),
            metrics.join(", "),
            t.template_slots
        );
    }

    // Subsets depend only on the seed and the instance order, so every
    // model sees the same draw.
    let spec = builtin_task("boolq")?;
    let pool: Vec<Instance> = (0..50)
        .map(|i| Instance {
            instance_id: format!("boolq-{i}"),
            slot_values: [
                ("passage".to_string(), format!("Passage {i}.")),
                ("question".to_string(), format!("Is {i} even?")),
            ]
            .into(),
            gold: Answer::single(if i % 2 == 0 { "yes" } else { "no" }),
        })
        .collect();
    let a = sample_eval_subset(&pool, 5, 42)?;
    let b = sample_eval_subset(&pool, 5, 42)?;
    assert_eq!(a, b);
    let ids: Vec<&str> = a.iter().map(|i| i.instance_id.as_str()).collect();
    println!("\n{} subset (seed 42): {ids:?}", spec.task_id);
    Ok(())
}
