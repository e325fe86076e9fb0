use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{adam_step, AdamConfig, AdamState, MlpModel, Mode, Standardizer, DEFAULT_DROPOUT, DEFAULT_HIDDEN};
use crate::eval::roc_auc;
use crate::space::FeatureVector;
use crate::{Error, Label, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    /// Train / validation / test fractions.
    pub split: [f64; 3],
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: DEFAULT_HIDDEN.to_vec(),
            dropout: DEFAULT_DROPOUT,
            adam: AdamConfig::default(),
            batch_size: 64,
            max_epochs: 100,
            patience: 5,
            split: [0.6, 0.2, 0.2],
            standardize: true,
        }
    }
}

/// Indices into the combined (positives then negatives) example list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRun {
    pub config: TrainConfig,
    pub seed: u64,
    pub sizes: [usize; 3],
    pub initial_train_loss: f64,
    pub initial_validation_loss: f64,
    pub history: Vec<EpochRecord>,
    /// Epoch (1-based) whose parameters were kept; 0 means the initial model.
    pub best_epoch: usize,
    pub best_validation_loss: f64,
    pub stopped_early: bool,
    pub test_loss: Option<f64>,
    pub test_auc: Option<f64>,
}

/// Shuffled split of `0..n`. Train and validation sizes are rounded, the
/// test partition takes the remainder.
pub fn split_indices(n: usize, fractions: [f64; 3], seed: u64) -> Result<Partition> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(alloc::format!(
            "split fractions must be in [0, 1] and sum to 1, got {fractions:?}"
        )));
    }
    let n_train = libm::round(n as f64 * fractions[0]) as usize;
    let n_val = (libm::round(n as f64 * fractions[1]) as usize).min(n - n_train);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = idx.split_off(n_train + n_val);
    let validation = idx.split_off(n_train);
    Ok(Partition {
        train: idx,
        validation,
        test,
    })
}

fn mean_loss(model: &MlpModel, examples: &[(&[f64], f64)], idx: &[usize]) -> Result<f64> {
    let batch: Vec<(&[f64], f64)> = idx.iter().map(|&i| examples[i]).collect();
    let l = model.loss(&batch)?;
    if l.is_finite() {
        Ok(l)
    } else {
        Err(Error::NonFiniteLoss(0))
    }
}

/// Trains a fresh network on balanced positive and negative examples.
///
/// `seed` initializes the weights, `seed + 1` shuffles the split and
/// `seed + 2` drives batch order and dropout.
pub fn train(
    pos: &[FeatureVector],
    neg: &[FeatureVector],
    config: &TrainConfig,
    seed: u64,
) -> Result<(MlpModel, TrainRun)> {
    if pos.is_empty() || neg.is_empty() || pos.len() != neg.len() {
        return Err(Error::Unbalanced {
            positive: pos.len(),
            negative: neg.len(),
        });
    }
    if config.batch_size == 0 || config.max_epochs == 0 {
        return Err(Error::InvalidParameter("batch_size and max_epochs must be >= 1".into()));
    }
    let dim = pos[0].values.len();
    if let Some(v) = pos.iter().chain(neg).find(|v| v.values.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: v.values.len(),
        });
    }
    let examples: Vec<(&[f64], f64)> = pos
        .iter()
        .map(|v| (v.values.as_slice(), 1.0))
        .chain(neg.iter().map(|v| (v.values.as_slice(), 0.0)))
        .collect();
    let part = split_indices(examples.len(), config.split, seed.wrapping_add(1))?;
    if part.train.is_empty() || part.validation.is_empty() {
        return Err(Error::InvalidParameter(alloc::format!(
            "{} examples leave an empty training or validation partition",
            examples.len()
        )));
    }

    let mut model = MlpModel::new(dim, &config.hidden, config.dropout, seed)?;
    if config.standardize {
        model.scaler = Some(Standardizer::fit(part.train.iter().map(|&i| examples[i].0), dim));
    }
    let mut adam = AdamState::new(model.params().len(), config.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2));

    let initial_train_loss = mean_loss(&model, &examples, &part.train)?;
    let initial_validation_loss = mean_loss(&model, &examples, &part.validation)?;
    let mut best = (model.clone(), 0usize, initial_validation_loss);
    let mut history = Vec::new();
    let mut order = part.train.clone();
    let mut since_best = 0;
    let mut stopped_early = false;
    let mut batch = Vec::with_capacity(config.batch_size);

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| examples[i]));
            let (loss, grads) = model.loss_and_gradient(&batch, Mode::Train(&mut rng))?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss(epoch));
            }
            adam_step(model.params_mut(), &grads, &mut adam)?;
        }
        let train_loss = mean_loss(&model, &examples, &part.train).map_err(|_| Error::NonFiniteLoss(epoch))?;
        let validation_loss =
            mean_loss(&model, &examples, &part.validation).map_err(|_| Error::NonFiniteLoss(epoch))?;
        history.push(EpochRecord {
            epoch,
            train_loss,
            validation_loss,
        });
        if validation_loss < best.2 {
            best = (model.clone(), epoch, validation_loss);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                stopped_early = epoch < config.max_epochs;
                break;
            }
        }
    }

    let (model, best_epoch, best_validation_loss) = best;
    let (test_loss, test_auc) = if part.test.is_empty() {
        (None, None)
    } else {
        let loss = mean_loss(&model, &examples, &part.test)?;
        let mut probs = Vec::with_capacity(part.test.len());
        let mut labels = Vec::with_capacity(part.test.len());
        for &i in &part.test {
            probs.push(model.forward(examples[i].0, Mode::Infer)?);
            labels.push(Label::from(examples[i].1 > 0.5));
        }
        (Some(loss), roc_auc(&probs, &labels).ok())
    };
    let run = TrainRun {
        config: config.clone(),
        seed,
        sizes: [part.train.len(), part.validation.len(), part.test.len()],
        initial_train_loss,
        initial_validation_loss,
        history,
        best_epoch,
        best_validation_loss,
        stopped_early,
        test_loss,
        test_auc,
    };
    Ok((model, run))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeSet;
    use alloc::vec;
    use proptest::prelude::*;
    use rand::Rng;

    fn separable(n: usize, seed: u64) -> (Vec<FeatureVector>, Vec<FeatureVector>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut make = |shift: f64| {
            (0..n)
                .map(|_| {
                    let v: Vec<f64> = (0..4).map(|_| rng.random::<f64>() + shift).collect();
                    FeatureVector::new("x", v)
                })
                .collect::<Vec<_>>()
        };
        let pos = make(1.0);
        let neg = make(-1.0);
        (pos, neg)
    }

    #[test]
    fn forty_thousand_documents_split_60_20_20() {
        let p = split_indices(40_000, [0.6, 0.2, 0.2], 7).unwrap();
        assert_eq!(
            (p.train.len(), p.validation.len(), p.test.len()),
            (24_000, 8_000, 8_000)
        );
    }

    #[test]
    fn separable_data_is_learned() {
        let (pos, neg) = separable(400, 3);
        let cfg = TrainConfig {
            patience: 100,
            ..TrainConfig::default()
        };
        let (model, run) = train(&pos, &neg, &cfg, 1).unwrap();
        let last = run.history.last().unwrap().train_loss;
        assert!(
            last < 0.1 * run.initial_train_loss,
            "{last} vs {}",
            run.initial_train_loss
        );
        assert_eq!(run.sizes, [480, 160, 160]);
        assert_eq!(run.test_auc, Some(1.0));
        assert!(model.scaler.is_some());
        assert!(run.best_epoch >= 1);
    }

    #[test]
    fn training_is_deterministic() {
        let (pos, neg) = separable(30, 4);
        let cfg = TrainConfig {
            max_epochs: 5,
            ..TrainConfig::default()
        };
        let a = train(&pos, &neg, &cfg, 9).unwrap();
        let b = train(&pos, &neg, &cfg, 9).unwrap();
        assert_eq!(a, b);
        let c = train(&pos, &neg, &cfg, 10).unwrap();
        assert_ne!(a.0.params(), c.0.params());
    }

    #[test]
    fn unbalanced_inputs_rejected() {
        let (pos, neg) = separable(5, 1);
        assert_eq!(
            train(&pos, &neg[..4], &TrainConfig::default(), 0).unwrap_err(),
            Error::Unbalanced {
                positive: 5,
                negative: 4
            }
        );
        assert!(train(&[], &[], &TrainConfig::default(), 0).is_err());
    }

    #[test]
    fn early_stopping_keeps_best_model() {
        let (pos, neg) = separable(40, 5);
        let cfg = TrainConfig {
            patience: 2,
            ..TrainConfig::default()
        };
        let (_, run) = train(&pos, &neg, &cfg, 2).unwrap();
        let best = run
            .history
            .iter()
            .map(|r| r.validation_loss)
            .fold(run.initial_validation_loss, f64::min);
        assert_eq!(best, run.best_validation_loss);
        if run.stopped_early {
            assert_eq!(run.history.len(), run.best_epoch + 2);
        }
    }

    #[test]
    fn mismatched_dims_rejected() {
        let pos = vec![FeatureVector::new("a", vec![1.0, 2.0])];
        let neg = vec![FeatureVector::new("b", vec![1.0])];
        assert!(matches!(
            train(&pos, &neg, &TrainConfig::default(), 0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn partitions_are_disjoint_and_exhaustive(n in 0usize..500, seed in any::<u64>()) {
            let p = split_indices(n, [0.6, 0.2, 0.2], seed).unwrap();
            let all: BTreeSet<usize> = p.train.iter().chain(&p.validation).chain(&p.test).copied().collect();
            prop_assert_eq!(all.len(), n);
            prop_assert_eq!(p.train.len() + p.validation.len() + p.test.len(), n);
            for (len, frac) in [(p.train.len(), 0.6), (p.validation.len(), 0.2), (p.test.len(), 0.2)] {
                prop_assert!((len as f64 - frac * n as f64).abs() <= 1.0);
            }
        }
    }
}
