//! Seeded draws for evaluation subsets and few-shot exemplars.
//!
//! The generator is ChaCha8 seeded through `SeedableRng::seed_from_u64`
//! (`rand_chacha`), and draws use a partial Fisher-Yates shuffle with
//! rejection-sampled bounded integers. Both are portable, so a given
//! `(input, n, seed)` selects the same instances on every platform.

use std::collections::HashMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CatalogError, Exemplar, ExemplarSet, Instance, Result};

pub struct SeededRng(ChaCha8Rng);

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Uniform integer in `0..bound`. `bound` must be nonzero.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "empty range");
        // Reject the top `2^64 mod bound` values so every residue is equally likely.
        let rejected = (u64::MAX % bound + 1) % bound;
        loop {
            let x = self.0.next_u64();
            if x <= u64::MAX - rejected {
                return x % bound;
            }
        }
    }

    /// Indices of `n` distinct positions out of `len`, in draw order.
    pub fn draw_indices(&mut self, len: usize, n: usize) -> Vec<usize> {
        debug_assert!(n <= len);
        let mut idx: Vec<usize> = (0..len).collect();
        for i in 0..n {
            let j = i + self.below((len - i) as u64) as usize;
            idx.swap(i, j);
        }
        idx.truncate(n);
        idx
    }
}

pub fn sample_eval_subset(instances: &[Instance], n: usize, seed: u64) -> Result<Vec<Instance>> {
    if n > instances.len() {
        return Err(CatalogError::SubsetTooLarge {
            requested: n,
            available: instances.len(),
        });
    }
    Ok(SeededRng::new(seed)
        .draw_indices(instances.len(), n)
        .into_iter()
        .map(|i| instances[i].clone())
        .collect())
}

pub fn select_exemplars(
    task_id: &str,
    train: &[Instance],
    k: usize,
    seed: u64,
    answers: &HashMap<String, String>,
) -> Result<ExemplarSet> {
    let drawn = sample_eval_subset(train, k, seed)?;
    let exemplars = drawn
        .into_iter()
        .map(|instance| match answers.get(&instance.instance_id) {
            Some(answer) if !answer.trim().is_empty() => Ok(Exemplar {
                worked_answer: answer.clone(),
                instance,
            }),
            _ => Err(CatalogError::MissingWorkedAnswer(instance.instance_id)),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExemplarSet {
        task_id: task_id.to_string(),
        exemplars,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Answer;
    use proptest::prelude::*;
    use std::collections::{BTreeMap, HashSet};

    fn instances(n: usize) -> Vec<Instance> {
        (0..n)
            .map(|i| Instance {
                instance_id: format!("i{i}"),
                slot_values: BTreeMap::from([("text".to_string(), format!("text {i}"))]),
                gold: Answer::single("True"),
            })
            .collect()
    }

    fn ids(v: &[Instance]) -> Vec<&str> {
        v.iter().map(|i| i.instance_id.as_str()).collect()
    }

    #[test]
    fn zero_and_exhaustive_draws() {
        let pool = instances(20);
        assert!(sample_eval_subset(&pool, 0, 1).unwrap().is_empty());

        let all = sample_eval_subset(&pool, 20, 1).unwrap();
        let mut got: Vec<_> = ids(&all);
        got.sort();
        let mut want: Vec<_> = ids(&pool);
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn same_seed_same_subset() {
        let pool = instances(1000);
        let a = sample_eval_subset(&pool, 600, 7).unwrap();
        let b = sample_eval_subset(&pool, 600, 7).unwrap();
        assert_eq!(
            serde_json::to_vec(&a).unwrap(),
            serde_json::to_vec(&b).unwrap()
        );
    }

    #[test]
    fn subset_too_large() {
        let err = sample_eval_subset(&instances(3), 4, 0).unwrap_err();
        assert!(matches!(
            err,
            CatalogError::SubsetTooLarge {
                requested: 4,
                available: 3
            }
        ));
    }

    #[test]
    fn distinct_seeds_give_distinct_subsets() {
        let pool = instances(100);
        let mut rng = SeededRng::new(12345);
        for _ in 0..100 {
            let s1 = rng.below(u64::MAX);
            let s2 = loop {
                let s = rng.below(u64::MAX);
                if s != s1 {
                    break s;
                }
            };
            let a = sample_eval_subset(&pool, 50, s1).unwrap();
            let b = sample_eval_subset(&pool, 50, s2).unwrap();
            assert_ne!(
                ids(&a),
                ids(&b),
                "seeds {s1} and {s2} drew identical subsets"
            );
        }
    }

    #[test]
    fn bounded_draw_is_roughly_uniform() {
        let mut rng = SeededRng::new(3);
        let mut counts = [0usize; 6];
        for _ in 0..60_000 {
            counts[rng.below(6) as usize] += 1;
        }
        for c in counts {
            assert!((9_000..11_000).contains(&c), "{counts:?}");
        }
    }

    #[test]
    fn exemplar_selection() {
        let train = instances(100);
        let answers: HashMap<String, String> = train
            .iter()
            .map(|i| (i.instance_id.clone(), format!("worked {}", i.instance_id)))
            .collect();
        let set = select_exemplars("wic", &train, 5, 11, &answers).unwrap();
        assert_eq!(set.len(), 5);
        assert_eq!(
            set,
            select_exemplars("wic", &train, 5, 11, &answers).unwrap()
        );
        for ex in &set.exemplars {
            assert_eq!(
                ex.worked_answer,
                format!("worked {}", ex.instance.instance_id)
            );
        }

        assert!(select_exemplars("wic", &train, 0, 11, &answers)
            .unwrap()
            .is_empty());

        let mut partial = answers.clone();
        let missing = set.exemplars[2].instance.instance_id.clone();
        partial.remove(&missing);
        let err = select_exemplars("wic", &train, 5, 11, &partial).unwrap_err();
        assert!(matches!(err, CatalogError::MissingWorkedAnswer(id) if id == missing));
    }

    proptest! {
        #[test]
        fn subset_is_duplicate_free_subset(len in 0usize..200, frac in 0.0f64..=1.0, seed: u64) {
            let pool = instances(len);
            let n = ((len as f64) * frac).floor() as usize;
            let out = sample_eval_subset(&pool, n, seed).unwrap();
            prop_assert_eq!(out.len(), n);
            let pool_ids: HashSet<_> = ids(&pool).into_iter().collect();
            let mut seen = HashSet::new();
            for id in ids(&out) {
                prop_assert!(pool_ids.contains(id));
                prop_assert!(seen.insert(id));
            }
        }
    }
}
