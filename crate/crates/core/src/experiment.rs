//! End-to-end toy experiment: generate data, train the MC-dropout regressor,
//! dump MC predictions, fit recalibrations on the validation split and compare
//! test-set calibration before and after.

use std::path::Path;

use serde::Serialize;

use crate::calibrate::{self, AuxConfig, SigmaFitOptions};
use crate::intervals::{self, CoverageTable};
use crate::io;
use crate::likelihood::LikelihoodKind;
use crate::metrics::{self, DEFAULT_BINS};
use crate::report::{evaluate, Evaluation};
use crate::toymodel::{self, Splits, SyntheticSpec, ToyModelConfig, TrainingTrace};
use crate::types::{CalibrationArtifact, McPredictionSet, Target};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ToyRunConfig {
    pub data: SyntheticSpec,
    pub model: ToyModelConfig,
    pub aux: AuxConfig,
    pub sigma: SigmaFitOptions,
    pub bins: usize,
    pub levels: Vec<f64>,
    pub mc_seed: u64,
}

/// Training epochs of the toy preset.
pub const TOY_EPOCHS: usize = 3000;
/// Step size of the toy preset.
pub const TOY_STEP_SIZE: f64 = 3e-3;
/// Dropout rate of the toy preset.
pub const TOY_DROPOUT: f64 = 0.1;

impl ToyRunConfig {
    /// Toy preset with every random stream derived from `seed`.
    /// Model settings differ from [`ToyModelConfig::default`] in epochs, step
    /// size and dropout rate.
    pub fn with_seed(seed: u64) -> Self {
        ToyRunConfig {
            data: SyntheticSpec { seed, ..Default::default() },
            model: ToyModelConfig {
                seed,
                epochs: TOY_EPOCHS,
                step_size: TOY_STEP_SIZE,
                dropout_p: TOY_DROPOUT,
                ..Default::default()
            },
            aux: AuxConfig { seed, ..Default::default() },
            sigma: SigmaFitOptions::default(),
            bins: DEFAULT_BINS,
            levels: intervals::DEFAULT_LEVELS.to_vec(),
            mc_seed: seed.wrapping_add(0x9e37_79b9_7f4a_7c15),
        }
    }
}

/// Deterministic-pass statistics of the final epoch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinalEpoch {
    pub epoch: usize,
    pub train_mse: f64,
    pub test_mse: f64,
    pub train_sigma2: f64,
    pub test_sigma2: f64,
    pub s_intra: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub evaluation: Evaluation,
    pub coverage: CoverageTable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToySummary {
    pub seed: u64,
    pub s: f64,
    pub s_aleatoric_only: f64,
    pub final_epoch: FinalEpoch,
    pub test_uncalibrated: MethodSummary,
    pub test_sigma: MethodSummary,
    pub test_sigma_aleatoric_only: MethodSummary,
    pub test_aux: MethodSummary,
    pub val_uncalibrated: Evaluation,
    pub val_sigma: Evaluation,
    pub val_aux: Evaluation,
}

#[derive(Debug, Clone)]
pub struct ToyRun {
    pub splits: Splits,
    pub trace: TrainingTrace,
    pub train_dump: McPredictionSet,
    pub val_dump: McPredictionSet,
    pub test_dump: McPredictionSet,
    pub sigma: CalibrationArtifact,
    pub sigma_aleatoric_only: CalibrationArtifact,
    pub aux: CalibrationArtifact,
    pub summary: ToySummary,
}

fn summarize_method(
    records: &[crate::UncertaintyRecord],
    calib: &CalibrationArtifact,
    cfg: &ToyRunConfig,
) -> Result<MethodSummary> {
    let evaluation = evaluate(records, calib, cfg.bins)?;
    let coverage = intervals::coverage(&calibrate::apply(records, calib)?, &cfg.levels)?;
    Ok(MethodSummary { evaluation, coverage })
}

pub fn run_toy(cfg: &ToyRunConfig) -> Result<ToyRun> {
    let splits = toymodel::generate(&cfg.data)?;
    let (model, mut trace) = toymodel::train(&splits, &cfg.model)?;
    toymodel::intra_training_calibrate(&mut trace, &splits.val, &splits.test)?;

    let n = cfg.model.mc_passes;
    let train_dump = toymodel::mc_predict(&model, &splits.train, n, cfg.mc_seed, "train-")?;
    let val_dump = toymodel::mc_predict(&model, &splits.val, n, cfg.mc_seed.wrapping_add(1), "val-")?;
    let test_dump = toymodel::mc_predict(&model, &splits.test, n, cfg.mc_seed.wrapping_add(2), "test-")?;

    let val = metrics::uncertainty_records(&val_dump);
    let test = metrics::uncertainty_records(&test_dump);

    let sigma = calibrate::fit_sigma(&val, LikelihoodKind::Gaussian, Target::Predictive, &cfg.sigma)?;
    let sigma_aleatoric_only =
        calibrate::fit_sigma(&val, LikelihoodKind::Gaussian, Target::AleatoricOnly, &cfg.sigma)?;
    let aux = calibrate::aux_fit_records(&val, &cfg.aux, Target::Predictive)?;
    let identity = CalibrationArtifact::identity();

    let last = trace.epochs.last().ok_or(Error::EmptyInput("training trace"))?;
    let summary = ToySummary {
        seed: cfg.data.seed,
        s: sigma.s.expect("sigma artifact"),
        s_aleatoric_only: sigma_aleatoric_only.s.expect("sigma artifact"),
        final_epoch: FinalEpoch {
            epoch: last.epoch,
            train_mse: last.train_mse,
            test_mse: last.test_mse,
            train_sigma2: last.train_sigma2,
            test_sigma2: last.test_sigma2,
            s_intra: last.s,
        },
        test_uncalibrated: summarize_method(&test, &identity, cfg)?,
        test_sigma: summarize_method(&test, &sigma, cfg)?,
        test_sigma_aleatoric_only: summarize_method(&test, &sigma_aleatoric_only, cfg)?,
        test_aux: summarize_method(&test, &aux, cfg)?,
        val_uncalibrated: evaluate(&val, &identity, cfg.bins)?,
        val_sigma: evaluate(&val, &sigma, cfg.bins)?,
        val_aux: evaluate(&val, &aux, cfg.bins)?,
    };

    Ok(ToyRun {
        splits,
        trace,
        train_dump,
        val_dump,
        test_dump,
        sigma,
        sigma_aleatoric_only,
        aux,
        summary,
    })
}

/// Writes dumps, trace, artifacts, diagrams and the summary into `dir`.
pub fn write_toy(run: &ToyRun, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    io::save_dump(&run.train_dump, &dir.join("train.jsonl"))?;
    io::save_dump(&run.val_dump, &dir.join("val.jsonl"))?;
    io::save_dump(&run.test_dump, &dir.join("test.jsonl"))?;
    io::write_file(&dir.join("trace.csv"), &run.trace.to_csv())?;
    io::write_file(&dir.join("calib_sigma.json"), &run.sigma.to_json()?)?;
    io::write_file(&dir.join("calib_sigma_aleatoric.json"), &run.sigma_aleatoric_only.to_json()?)?;
    io::write_file(&dir.join("calib_aux.json"), &run.aux.to_json()?)?;

    let bins = run.summary.test_uncalibrated.evaluation.uce_predictive.k;
    let test = metrics::uncertainty_records(&run.test_dump);
    for (name, calib) in [
        ("uncalibrated", CalibrationArtifact::identity()),
        ("sigma", run.sigma.clone()),
        ("aux", run.aux.clone()),
    ] {
        let recs = calibrate::apply(&test, &calib)?;
        let points = metrics::calibration_diagram(&recs, bins, Target::Predictive)?;
        io::write_file(&dir.join(format!("test_diagram_{name}.csv")), &io::diagram_csv(&points))?;
    }

    let mut summary = serde_json::to_string_pretty(&run.summary)?;
    summary.push('\n');
    io::write_file(&dir.join("summary.json"), &summary)
}
