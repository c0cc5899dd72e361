//! Deterministic small-scale trainer for deferral models under any
//! implemented surrogate, with model selection by validation system
//! accuracy and a finite-difference gradient checker for whole-model batch
//! gradients.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::core::CostSpec;
use crate::data::DeferralDataset;
use crate::error::{Error, Result};
use crate::losses::LossKind;
use crate::metrics::{evaluate, MetricsReport, SplitSel};
use crate::model::{DeferralModel, LinearDeferralModel, OneHiddenDeferralModel};

#[derive(Debug, Clone, Copy, Serialize)]
pub enum OptimizerKind {
    Sgd { lr: f64, momentum: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam(lr: f64) -> Self {
        Self::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    fn lr(&self) -> f64 {
        match self {
            Self::Sgd { lr, .. } | Self::Adam { lr, .. } => *lr,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub enum ModelKind {
    Linear,
    OneHidden { width: usize },
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub cost: CostSpec,
    pub optimizer: OptimizerKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub model: ModelKind,
}

impl TrainConfig {
    /// Adam at the default rate on a linear model; 64-example batches.
    pub fn new(loss: LossKind, cost: CostSpec, epochs: usize, seed: u64) -> Self {
        Self {
            loss,
            cost,
            optimizer: OptimizerKind::adam(1e-3),
            epochs,
            batch_size: 64,
            seed,
            model: ModelKind::Linear,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidTrainConfig("epochs must be >= 1".to_string()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidTrainConfig(
                "batch_size must be >= 1".to_string(),
            ));
        }
        if !(self.optimizer.lr() > 0.0) {
            return Err(Error::InvalidTrainConfig(
                "learning rate must be > 0".to_string(),
            ));
        }
        if let ModelKind::OneHidden { width: 0 } = self.model {
            return Err(Error::InvalidTrainConfig("width must be >= 1".to_string()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_system_accuracy: f64,
    pub val_coverage: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_system_accuracy: f64,
}

impl TrainHistory {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "epoch,train_loss,val_system_acc,val_coverage")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{}",
                r.epoch, r.train_loss, r.val_system_accuracy, r.val_coverage
            )?;
        }
        Ok(())
    }
}

struct OptimizerState {
    kind: OptimizerKind,
    m: Vec<f64>,
    v: Vec<f64>,
    t: usize,
}

impl OptimizerState {
    fn new(kind: OptimizerKind, params: usize) -> Self {
        Self {
            kind,
            m: vec![0.0; params],
            v: vec![0.0; params],
            t: 0,
        }
    }

    fn step(&mut self, model: &mut DeferralModel, grad: &[f64]) {
        match self.kind {
            OptimizerKind::Sgd { lr, momentum } => {
                for (i, g) in grad.iter().enumerate() {
                    self.m[i] = momentum * self.m[i] + g;
                    model.set_param(i, model.get_param(i) - lr * self.m[i]);
                }
            }
            OptimizerKind::Adam { lr, beta1, beta2, eps } => {
                self.t += 1;
                let bc1 = 1.0 - beta1.powi(self.t as i32);
                let bc2 = 1.0 - beta2.powi(self.t as i32);
                for (i, g) in grad.iter().enumerate() {
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
                    let m_hat = self.m[i] / bc1;
                    let v_hat = self.v[i] / bc2;
                    model.set_param(i, model.get_param(i) - lr * m_hat / (v_hat.sqrt() + eps));
                }
            }
        }
    }
}

fn init_model(dataset: &DeferralDataset, config: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<DeferralModel> {
    let n = dataset.n();
    let d = dataset.d();
    // Gaussian weights with std 0.01 keep the initial softmax near uniform.
    let mut gauss = |count: usize| -> Vec<f64> {
        (0..count)
            .map(|_| 0.01 * rng.sample::<f64, _>(StandardNormal))
            .collect()
    };
    Ok(match config.model {
        ModelKind::Linear => DeferralModel::Linear(LinearDeferralModel::new(
            n,
            d,
            gauss((n + 1) * d),
            vec![0.0; n + 1],
        )?),
        ModelKind::OneHidden { width } => DeferralModel::OneHidden(OneHiddenDeferralModel::new(
            n,
            d,
            width,
            gauss(width * d),
            vec![0.0; width],
            gauss((n + 1) * width),
            vec![0.0; n + 1],
        )?),
    })
}

/// Mean loss and flat parameter gradient over a set of examples.
fn batch_loss_and_grad(
    model: &DeferralModel,
    dataset: &DeferralDataset,
    indices: &[usize],
    loss: &LossKind,
    costs: &[f64],
    grad: &mut [f64],
) -> Result<f64> {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut total = 0.0;
    for &i in indices {
        let scores = model.scores(dataset.features(i))?;
        let y = dataset.label(i);
        total += loss.value(&scores, y, costs[i])?;
        let dscores = loss.gradient(&scores, y, costs[i])?;
        model.accumulate_param_grad(dataset.features(i), &dscores, grad);
    }
    let scale = 1.0 / indices.len() as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok(total * scale)
}

/// Train on the dataset's train split, selecting the epoch checkpoint with
/// the highest validation system accuracy. Bit-reproducible for a fixed
/// `(dataset, config)`.
pub fn train(dataset: &DeferralDataset, config: &TrainConfig) -> Result<(DeferralModel, TrainHistory)> {
    config.validate()?;
    if dataset.split().train.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    if dataset.split().val.is_empty() {
        return Err(Error::EmptySplit("val"));
    }
    // Binary-only baselines need exact {0,1} costs; surface that before the
    // first epoch rather than mid-batch.
    let mut costs = vec![0.0; dataset.len()];
    for i in 0..dataset.len() {
        let c = dataset.cost_of_example(i, &config.cost)?;
        if config.loss.requires_binary_cost() && c != 0.0 && c != 1.0 {
            return Err(Error::NonBinaryCost("trainer loss", c));
        }
        costs[i] = c;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = init_model(dataset, config, &mut rng)?;
    let mut opt = OptimizerState::new(config.optimizer, model.param_count());
    let mut grad = vec![0.0; model.param_count()];
    let mut order: Vec<usize> = dataset.split().train.to_vec();

    let mut best_model = model.clone();
    let mut best_acc = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut records = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (batch_idx, batch) in order.chunks(config.batch_size).enumerate() {
            let batch_loss =
                batch_loss_and_grad(&model, dataset, batch, &config.loss, &costs, &mut grad)
                    .map_err(|e| match e {
                        // overflowing weights surface as non-finite scores
                        Error::NonFiniteScore(_) => Error::NonFiniteLoss {
                            epoch,
                            batch: batch_idx,
                            example: batch[0],
                        },
                        other => other,
                    })?;
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                    example: batch[0],
                });
            }
            loss_sum += batch_loss * batch.len() as f64;
            opt.step(&mut model, &grad);
        }
        let val = evaluate(&model, dataset, SplitSel::Val, &config.cost)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / order.len() as f64,
            val_system_accuracy: val.system_accuracy,
            val_coverage: val.coverage,
        };
        if record.val_system_accuracy > best_acc {
            best_acc = record.val_system_accuracy;
            best_model = model.clone();
            best_epoch = epoch;
        }
        records.push(record);
    }

    Ok((
        best_model,
        TrainHistory {
            records,
            best_epoch,
            best_val_system_accuracy: best_acc,
        },
    ))
}

/// Convenience: train and evaluate the selected checkpoint on the test split.
pub fn train_and_test(
    dataset: &DeferralDataset,
    config: &TrainConfig,
) -> Result<(DeferralModel, TrainHistory, MetricsReport)> {
    let (model, history) = train(dataset, config)?;
    let report = evaluate(&model, dataset, SplitSel::Test, &config.cost)?
        .with_context(config.seed, config.loss.name(), format!("{:?}", config.optimizer));
    Ok((model, history, report))
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub coords_checked: usize,
    pub max_rel_err: f64,
    pub worst_param: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// Relative error with an absolute floor guarding vanishing denominators.
pub(crate) fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

/// Compare the analytic batch gradient against central finite differences
/// on every parameter coordinate (or a seeded 200-coordinate subset when
/// the model is larger than that).
pub fn grad_check(
    model: &DeferralModel,
    dataset: &DeferralDataset,
    sample: &[usize],
    loss: &LossKind,
    cost: &CostSpec,
    tolerance: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    if sample.is_empty() {
        return Err(Error::EmptySplit("grad-check sample"));
    }
    let costs: Vec<f64> = {
        let mut all = vec![0.0; dataset.len()];
        for &i in sample {
            all[i] = dataset.cost_of_example(i, cost)?;
        }
        all
    };
    let params = model.param_count();
    let mut grad = vec![0.0; params];
    batch_loss_and_grad(model, dataset, sample, loss, &costs, &mut grad)?;

    let coords: Vec<usize> = if params <= 200 {
        (0..params).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::index::sample(&mut rng, params, 200).into_vec()
    };

    let h = 1e-5;
    let mut scratch = model.clone();
    let mut fd_grad = vec![0.0; params];
    let eval = |m: &DeferralModel| -> Result<f64> {
        let mut unused = vec![0.0; params];
        batch_loss_and_grad(m, dataset, sample, loss, &costs, &mut unused)
    };
    let mut max_rel = 0.0;
    let mut worst = 0;
    for &i in &coords {
        let orig = model.get_param(i);
        scratch.set_param(i, orig + h);
        let up = eval(&scratch)?;
        scratch.set_param(i, orig - h);
        let down = eval(&scratch)?;
        scratch.set_param(i, orig);
        fd_grad[i] = (up - down) / (2.0 * h);
        let e = rel_err(grad[i], fd_grad[i]);
        if e > max_rel {
            max_rel = e;
            worst = i;
        }
    }
    Ok(GradCheckReport {
        coords_checked: coords.len(),
        max_rel_err: max_rel,
        worst_param: worst,
        tolerance,
        passed: max_rel <= tolerance,
    })
}
