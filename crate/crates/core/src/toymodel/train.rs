use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::data::{Dataset, Splits};
use super::net::{batch_loss_grad, Cache, Masks, Mlp};
use crate::calibrate::sigma_closed_form_gaussian;
use crate::likelihood::gaussian_density_nll;
use crate::optim::Adam;
use crate::types::{McPredictionSet, McRecord, McSample};
use crate::{Error, Result};

/// Reduce-on-plateau learning-rate schedule driven by validation NLL.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlateauSchedule {
    pub patience: usize,
    pub factor: f64,
}

impl Default for PlateauSchedule {
    fn default() -> Self {
        PlateauSchedule {
            patience: 20,
            factor: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyModelConfig {
    pub hidden: Vec<usize>,
    pub dropout_p: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub step_size: f64,
    pub weight_decay: f64,
    pub mc_passes: usize,
    pub seed: u64,
    /// Stop when validation MSE has not improved for this many epochs and
    /// restore the best weights.
    pub early_stopping: Option<usize>,
    pub plateau: Option<PlateauSchedule>,
}

impl Default for ToyModelConfig {
    fn default() -> Self {
        ToyModelConfig {
            hidden: vec![64, 64],
            dropout_p: 0.2,
            epochs: 500,
            batch_size: 16,
            step_size: 3e-4,
            weight_decay: 1e-7,
            mc_passes: 25,
            seed: 0,
            early_stopping: None,
            plateau: None,
        }
    }
}

impl ToyModelConfig {
    pub fn check(&self) -> Result<()> {
        let ok = !self.hidden.is_empty()
            && self.hidden.iter().all(|&h| h > 0)
            && (0.0..1.0).contains(&self.dropout_p)
            && self.epochs > 0
            && self.batch_size > 0
            && self.step_size >= 0.0
            && self.weight_decay >= 0.0
            && self.mc_passes > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid toy model config {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    pub net: Mlp,
    pub dropout_p: f64,
}

impl ToyModel {
    /// Deterministic pass with dropout off: `(mean, log_var)`.
    pub fn predict(&self, x: f64) -> (f64, f64) {
        let out = self.net.forward(&[x], None, &mut Cache::default());
        (out[0], out[1])
    }
}

/// Metrics of one epoch, evaluated with dropout switched off.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_mse: f64,
    pub test_mse: f64,
    pub train_sigma2: f64,
    pub test_sigma2: f64,
    pub train_nll: f64,
    pub test_nll: f64,
    /// σ scale fitted on validation aleatoric uncertainty, once
    /// [`intra_training_calibrate`] has run.
    pub s: Option<f64>,
    pub test_nll_calibrated: Option<f64>,
}

/// Validation and test predictions `(mean, log_var)` at the end of an epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub val: Vec<(f64, f64)>,
    pub test: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingTrace {
    pub epochs: Vec<EpochStats>,
    pub snapshots: Vec<Snapshot>,
}

impl TrainingTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_mse,test_mse,train_sigma2,test_sigma2,train_nll,test_nll,s\n");
        for e in &self.epochs {
            let s = e.s.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                e.epoch, e.train_mse, e.test_mse, e.train_sigma2, e.test_sigma2, e.train_nll, e.test_nll, s
            );
        }
        out
    }

    /// Epoch with the lowest test MSE.
    pub fn best_test_epoch(&self) -> Option<&EpochStats> {
        self.epochs.iter().min_by(|a, b| a.test_mse.total_cmp(&b.test_mse))
    }
}

fn predictions(model: &ToyModel, data: &Dataset) -> Vec<(f64, f64)> {
    data.x.iter().map(|&x| model.predict(x)).collect()
}

/// (mse, mean σ², mean Gaussian NLL) of deterministic predictions.
fn summarize(preds: &[(f64, f64)], data: &Dataset) -> (f64, f64, f64) {
    let n = preds.len() as f64;
    let (mut mse, mut s2, mut nll) = (0.0, 0.0, 0.0);
    for (&(mu, lv), &y) in preds.iter().zip(&data.y) {
        let e2 = (y - mu) * (y - mu);
        let var = lv.exp();
        mse += e2;
        s2 += var;
        nll += gaussian_density_nll(e2, var);
    }
    (mse / n, s2 / n, nll / n)
}

/// Trains the two-headed network on `splits.train` by minimising the mean
/// heteroscedastic loss plus `λ‖θ‖²` with Adam, dropout active on every step.
/// Train and test metrics are traced after each epoch.
pub fn train(splits: &Splits, cfg: &ToyModelConfig) -> Result<(ToyModel, TrainingTrace)> {
    cfg.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = ToyModel {
        net: Mlp::new(1, &cfg.hidden, &mut rng),
        dropout_p: cfg.dropout_p,
    };
    let mut adam = Adam::new(model.net.num_params(), cfg.step_size);
    let mut grad = vec![0.0; model.net.num_params()];
    let mut trace = TrainingTrace::default();
    let train = &splits.train;
    let mut order: Vec<usize> = (0..train.len()).collect();

    let mut best_val_mse = f64::INFINITY;
    let mut best_params = model.net.params.clone();
    let mut since_best = 0;
    let mut best_val_nll = f64::INFINITY;
    let mut since_plateau = 0;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let xs: Vec<f64> = chunk.iter().map(|&i| train.x[i]).collect();
            let ys: Vec<f64> = chunk.iter().map(|&i| train.y[i]).collect();
            let masks: Vec<Option<Masks>> = chunk
                .iter()
                .map(|_| Some(model.net.sample_masks(cfg.dropout_p, &mut rng)))
                .collect();
            let loss = batch_loss_grad(&model.net, &xs, &ys, &masks, cfg.weight_decay, &mut grad);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            adam.step(&mut model.net.params, &grad);
        }

        let train_preds = predictions(&model, train);
        let val_preds = predictions(&model, &splits.val);
        let test_preds = predictions(&model, &splits.test);
        let (train_mse, train_sigma2, train_nll) = summarize(&train_preds, train);
        let (test_mse, test_sigma2, test_nll) = summarize(&test_preds, &splits.test);
        let (val_mse, _, val_nll) = summarize(&val_preds, &splits.val);
        trace.epochs.push(EpochStats {
            epoch,
            train_mse,
            test_mse,
            train_sigma2,
            test_sigma2,
            train_nll,
            test_nll,
            s: None,
            test_nll_calibrated: None,
        });
        trace.snapshots.push(Snapshot {
            val: val_preds,
            test: test_preds,
        });

        if let Some(sched) = cfg.plateau {
            if val_nll < best_val_nll {
                best_val_nll = val_nll;
                since_plateau = 0;
            } else {
                since_plateau += 1;
                if since_plateau > sched.patience {
                    adam.lr *= sched.factor;
                    since_plateau = 0;
                }
            }
        }
        if let Some(patience) = cfg.early_stopping {
            if val_mse < best_val_mse {
                best_val_mse = val_mse;
                best_params.clone_from(&model.net.params);
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= patience {
                    model.net.params.clone_from(&best_params);
                    break;
                }
            }
        }
    }
    Ok((model, trace))
}

/// Runs `n` stochastic forward passes per input with fresh dropout masks.
///
/// The masks of pass `k` come from a ChaCha stream selected by `k`, so the
/// output depends only on `(model, data, n, seed)`.
pub fn mc_predict(model: &ToyModel, data: &Dataset, n: usize, seed: u64, id_prefix: &str) -> Result<McPredictionSet> {
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one forward pass".into()));
    }
    let mut records: Vec<McRecord> = data
        .x
        .iter()
        .zip(&data.y)
        .enumerate()
        .map(|(i, (_, &y))| McRecord {
            id: format!("{id_prefix}{i:05}"),
            y: vec![y],
            samples: Vec::with_capacity(n),
        })
        .collect();
    let mut cache = Cache::default();
    for pass in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(pass as u64);
        for (rec, &x) in records.iter_mut().zip(&data.x) {
            let masks = model.net.sample_masks(model.dropout_p, &mut rng);
            let out = model.net.forward(&[x], Some(&masks), &mut cache);
            rec.samples.push(McSample {
                mean: vec![out[0]],
                log_var: out[1],
            });
        }
    }
    McPredictionSet::new(1, records)
}

/// For every traced epoch, fits σ scaling in closed form on the validation
/// aleatoric uncertainty and records `s` and the recalibrated test NLL.
/// Model weights are not touched.
pub fn intra_training_calibrate(trace: &mut TrainingTrace, val: &Dataset, test: &Dataset) -> Result<()> {
    for (stats, snap) in trace.epochs.iter_mut().zip(&trace.snapshots) {
        let errors: Vec<f64> = snap.val.iter().zip(&val.y).map(|(p, y)| (y - p.0).powi(2)).collect();
        let vars: Vec<f64> = snap.val.iter().map(|p| p.1.exp()).collect();
        let s = sigma_closed_form_gaussian(&errors, &vars)?;
        let s2 = s * s;
        let nll = snap
            .test
            .iter()
            .zip(&test.y)
            .map(|(&(mu, lv), &y)| gaussian_density_nll((y - mu).powi(2), s2 * lv.exp()))
            .sum::<f64>()
            / test.len() as f64;
        stats.s = Some(s);
        stats.test_nll_calibrated = Some(nll);
    }
    Ok(())
}
