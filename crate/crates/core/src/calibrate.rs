//! Post-hoc recalibration of predictive uncertainty.
//!
//! Two recalibration maps are provided: σ scaling, a single positive factor
//! `s` on the standard deviation fitted by maximum likelihood on a held-out
//! set, and an auxiliary one-hidden-layer network acting on log-variances.
//! Both leave the predicted means untouched, so accuracy is preserved.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::likelihood::LikelihoodKind;
use crate::metrics;
use crate::optim::Adam;
use crate::types::{
    AuxWeights, CalibrationArtifact, McPredictionSet, Method, Target, UncertaintyRecord,
};
use crate::{Error, Result};

/// Options for fitting `s` by gradient descent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaFitOptions {
    pub max_iters: usize,
    /// Initial step size; adapted during the descent.
    pub step_size: f64,
    /// Convergence threshold on `|Δs|`.
    pub tolerance: f64,
    pub init_s: f64,
}

impl Default for SigmaFitOptions {
    fn default() -> Self {
        SigmaFitOptions {
            max_iters: 1000,
            step_size: 0.01,
            tolerance: 1e-8,
            init_s: 1.0,
        }
    }
}

impl SigmaFitOptions {
    pub fn check(&self) -> Result<()> {
        let ok = self.max_iters > 0
            && self.step_size > 0.0
            && self.tolerance > 0.0
            && self.init_s > 0.0
            && self.step_size.is_finite()
            && self.init_s.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid sigma fit options {self:?}")))
        }
    }
}

/// Configuration of the auxiliary recalibration network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuxConfig {
    pub hidden_width: usize,
    pub seed: u64,
    pub epochs: usize,
    pub step_size: f64,
    pub batch_size: usize,
}

impl Default for AuxConfig {
    fn default() -> Self {
        AuxConfig {
            hidden_width: 16,
            seed: 0,
            epochs: 500,
            step_size: 3e-4,
            batch_size: 16,
        }
    }
}

impl AuxConfig {
    pub fn check(&self) -> Result<()> {
        if self.hidden_width >= 1
            && self.epochs >= 1
            && self.batch_size >= 1
            && self.step_size > 0.0
            && self.step_size.is_finite()
        {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid aux config {self:?}")))
        }
    }
}

fn check_pairs(a: &[f64], b: &[f64]) -> Result<()> {
    if a.is_empty() {
        return Err(Error::EmptyInput("calibration data"));
    }
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    for (i, &v) in b.iter().enumerate() {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::NonPositiveVariance { index: i, value: v });
        }
    }
    if let Some(e) = a.iter().find(|e| !(**e >= 0.0) || !e.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "errors must be finite and non-negative, got {e}"
        )));
    }
    Ok(())
}

/// Mean of `err / scale`.
fn mean_ratio(errors: &[f64], scales: &[f64]) -> f64 {
    errors.iter().zip(scales).map(|(e, v)| e / v).sum::<f64>() / errors.len() as f64
}

/// `s = sqrt(1/m Σ e²ᵢ / σ²ᵢ)`, the maximiser of the Gaussian likelihood.
pub fn sigma_closed_form_gaussian(errors_sq: &[f64], variances: &[f64]) -> Result<f64> {
    check_pairs(errors_sq, variances)?;
    Ok(mean_ratio(errors_sq, variances).sqrt())
}

/// `s = 1/m Σ |eᵢ| / σᵢ`, the maximiser of the Laplace likelihood.
pub fn sigma_closed_form_laplace(abs_errors: &[f64], sigmas: &[f64]) -> Result<f64> {
    check_pairs(abs_errors, sigmas)?;
    Ok(mean_ratio(abs_errors, sigmas))
}

/// Objective of the σ-scaling fit in terms of `ρ = ln s`, divided by m, plus
/// its derivative in `ρ`. `ratio` is the mean of `e²/σ²` (Gaussian) or `|e|/σ`
/// (Laplace).
fn scaled_objective(kind: LikelihoodKind, ratio: f64, rho: f64) -> (f64, f64) {
    match kind {
        LikelihoodKind::Gaussian => {
            let t = ratio * (-2.0 * rho).exp();
            (rho + 0.5 * t, 1.0 - t)
        }
        LikelihoodKind::Laplace => {
            let t = ratio * (-rho).exp();
            (rho + t, 1.0 - t)
        }
    }
}

/// Fits `s` by gradient descent on `m ln s + ½ s⁻² Σ e²/σ²` (Gaussian) or
/// `m ln s + s⁻¹ Σ |e|/σ` (Laplace).
///
/// For the Gaussian, `errors` are squared errors and `scales` variances; for
/// the Laplace, absolute errors and standard deviations. The descent runs on
/// `ρ = ln s` with a step that grows by 10% after an accepted step and halves
/// after a rejected one.
pub fn sigma_fit_gd(
    errors: &[f64],
    scales: &[f64],
    kind: LikelihoodKind,
    opts: &SigmaFitOptions,
) -> Result<(f64, BTreeMap<String, f64>)> {
    opts.check()?;
    check_pairs(errors, scales)?;
    let m = errors.len() as f64;
    let ratio = mean_ratio(errors, scales);
    if ratio == 0.0 {
        return Err(Error::InvalidArgument(
            "all errors are zero; no positive scale minimises the objective".into(),
        ));
    }

    let mut rho = opts.init_s.ln();
    let (mut f, _) = scaled_objective(kind, ratio, rho);
    let f_init = f;
    if !f.is_finite() {
        return Err(Error::Diverged { iterations: 0 });
    }
    let mut step = opts.step_size;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iters {
        iterations += 1;
        let (_, g) = scaled_objective(kind, ratio, rho);
        let cand = rho - step * g;
        let (fc, _) = scaled_objective(kind, ratio, cand);
        if !fc.is_finite() || !cand.is_finite() {
            return Err(Error::Diverged { iterations });
        }
        let delta_s = (cand.exp() - rho.exp()).abs();
        if fc <= f {
            rho = cand;
            f = fc;
            step *= 1.1;
        } else {
            step *= 0.5;
        }
        if delta_s <= opts.tolerance {
            converged = true;
            break;
        }
    }

    let s = rho.exp();
    let mut meta = BTreeMap::new();
    meta.insert("iterations".into(), iterations as f64);
    meta.insert("converged".into(), if converged { 1.0 } else { 0.0 });
    meta.insert("objective".into(), m * f);
    meta.insert("objective_at_init".into(), m * f_init);
    Ok((s, meta))
}

/// Errors and scales fed to the σ fit for a set of records.
pub fn sigma_inputs(
    records: &[UncertaintyRecord],
    kind: LikelihoodKind,
    target: Target,
) -> (Vec<f64>, Vec<f64>) {
    records
        .iter()
        .map(|r| {
            let var = match target {
                Target::Predictive => r.total,
                Target::AleatoricOnly => r.aleatoric,
            };
            match kind {
                LikelihoodKind::Gaussian => (r.sq_err(), var),
                LikelihoodKind::Laplace => (r.abs_err(), var.sqrt()),
            }
        })
        .unzip()
}

/// Fits a σ-scaling artifact by gradient descent, recording the closed-form
/// value alongside for reference.
pub fn fit_sigma(
    records: &[UncertaintyRecord],
    kind: LikelihoodKind,
    target: Target,
    opts: &SigmaFitOptions,
) -> Result<CalibrationArtifact> {
    let (errors, scales) = sigma_inputs(records, kind, target);
    let (s, mut meta) = sigma_fit_gd(&errors, &scales, kind, opts)?;
    let closed = match kind {
        LikelihoodKind::Gaussian => sigma_closed_form_gaussian(&errors, &scales)?,
        LikelihoodKind::Laplace => sigma_closed_form_laplace(&errors, &scales)?,
    };
    meta.insert("closed_form_s".into(), closed);
    meta.insert("m".into(), records.len() as f64);
    let mut artifact = CalibrationArtifact::sigma(s, kind, target);
    artifact.fit_meta = meta;
    Ok(artifact)
}

/// Fits σ scaling with the closed-form solution.
pub fn fit_sigma_closed_form(
    records: &[UncertaintyRecord],
    kind: LikelihoodKind,
    target: Target,
) -> Result<CalibrationArtifact> {
    let (errors, scales) = sigma_inputs(records, kind, target);
    let s = match kind {
        LikelihoodKind::Gaussian => sigma_closed_form_gaussian(&errors, &scales)?,
        LikelihoodKind::Laplace => sigma_closed_form_laplace(&errors, &scales)?,
    };
    if s == 0.0 {
        return Err(Error::InvalidArgument(
            "all errors are zero; no positive scale minimises the objective".into(),
        ));
    }
    let mut artifact = CalibrationArtifact::sigma(s, kind, target);
    artifact.fit_meta.insert("m".into(), records.len() as f64);
    Ok(artifact)
}

fn aux_training_pairs(records: &[UncertaintyRecord], target: Target) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut xs = Vec::with_capacity(records.len());
    let mut es = Vec::with_capacity(records.len());
    for r in records {
        let u = match target {
            Target::Predictive => r.total,
            Target::AleatoricOnly => r.aleatoric,
        };
        if !(u > 0.0) || !u.is_finite() {
            return Err(Error::DegenerateUncertainty { id: r.id.clone() });
        }
        xs.push(u.ln());
        es.push(r.sq_err());
    }
    Ok((xs, es))
}

/// Mean of `out + e² exp(-out)` with `out = R(ln u)`.
fn aux_loss(w: &AuxWeights, xs: &[f64], es: &[f64]) -> f64 {
    xs.iter()
        .zip(es)
        .map(|(&x, &e)| {
            let out = w.forward(x);
            out + e * (-out).exp()
        })
        .sum::<f64>()
        / xs.len() as f64
}

/// Flattened parameter layout: w1 | b1 | w2 | b2.
fn aux_flatten(w: &AuxWeights) -> Vec<f64> {
    let mut p = Vec::with_capacity(3 * w.h + 1);
    p.extend_from_slice(&w.w1);
    p.extend_from_slice(&w.b1);
    p.extend_from_slice(&w.w2);
    p.push(w.b2);
    p
}

fn aux_unflatten(p: &[f64], h: usize) -> AuxWeights {
    AuxWeights {
        h,
        w1: p[..h].to_vec(),
        b1: p[h..2 * h].to_vec(),
        w2: p[2 * h..3 * h].to_vec(),
        b2: p[3 * h],
    }
}

fn aux_grad(w: &AuxWeights, xs: &[f64], es: &[f64], idx: &[usize], grad: &mut [f64]) -> f64 {
    let h = w.h;
    grad.iter_mut().for_each(|g| *g = 0.0);
    let scale = 1.0 / idx.len() as f64;
    let mut loss = 0.0;
    for &i in idx {
        let x = xs[i];
        let out = w.forward(x);
        let t = es[i] * (-out).exp();
        loss += out + t;
        let g = (1.0 - t) * scale;
        for j in 0..h {
            let a = w.w1[j] * x + w.b1[j];
            if a > 0.0 {
                grad[2 * h + j] += g * a;
                let ga = g * w.w2[j];
                grad[j] += ga * x;
                grad[h + j] += ga;
            }
        }
        grad[3 * h] += g;
    }
    loss * scale
}

/// Fits the auxiliary recalibration network on a calibration set.
///
/// The network starts near the identity map on log-uncertainty (hinges placed
/// at quantiles of the calibration log-uncertainties, output weights small)
/// and is trained with Adam on mini-batches. The returned weights are the
/// best seen on the full calibration set, the initial ones included.
pub fn aux_fit(
    cal_set: &McPredictionSet,
    cfg: &AuxConfig,
    target: Target,
) -> Result<CalibrationArtifact> {
    aux_fit_records(&metrics::uncertainty_records(cal_set), cfg, target)
}

pub fn aux_fit_records(
    records: &[UncertaintyRecord],
    cfg: &AuxConfig,
    target: Target,
) -> Result<CalibrationArtifact> {
    cfg.check()?;
    if records.is_empty() {
        return Err(Error::EmptyInput("calibration records"));
    }
    let (xs, es) = aux_training_pairs(records, target)?;
    let h = cfg.hidden_width;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let small = Normal::new(0.0, 1e-2).expect("valid normal");

    let mut sorted = xs.clone();
    sorted.sort_by(f64::total_cmp);
    let mut init = AuxWeights {
        h,
        w1: vec![0.0; h],
        b1: vec![0.0; h],
        w2: vec![0.0; h],
        b2: 0.0,
    };
    for j in 0..h {
        let q = sorted[((j as f64 + 0.5) / h as f64 * sorted.len() as f64) as usize % sorted.len()];
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        init.w1[j] = sign;
        init.b1[j] = -sign * q;
        init.w2[j] = small.sample(&mut rng);
    }

    let mut params = aux_flatten(&init);
    let mut best = params.clone();
    let mut best_loss = aux_loss(&init, &xs, &es);
    let init_loss = best_loss;
    if !best_loss.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: 0, batch: 0 });
    }

    let mut adam = Adam::new(params.len(), cfg.step_size);
    let mut grad = vec![0.0; params.len()];
    let mut order: Vec<usize> = (0..xs.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let w = aux_unflatten(&params, h);
            let loss = aux_grad(&w, &xs, &es, chunk, &mut grad);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            adam.step(&mut params, &grad);
        }
        let loss = aux_loss(&aux_unflatten(&params, h), &xs, &es);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: usize::MAX });
        }
        if loss < best_loss {
            best_loss = loss;
            best.clone_from(&params);
        }
    }

    let mut meta = BTreeMap::new();
    meta.insert("epochs".into(), cfg.epochs as f64);
    meta.insert("objective".into(), best_loss);
    meta.insert("objective_at_init".into(), init_loss);
    meta.insert("m".into(), records.len() as f64);
    Ok(CalibrationArtifact {
        method: Method::Aux,
        likelihood: LikelihoodKind::Gaussian,
        target,
        s: None,
        aux: Some(aux_unflatten(&best, h)),
        fit_meta: meta,
    })
}

fn rescale(r: &UncertaintyRecord, target: Target, map: impl Fn(f64) -> f64) -> Result<UncertaintyRecord> {
    let mut out = r.clone();
    match target {
        Target::Predictive => {
            if !(r.total > 0.0) {
                return Err(Error::DegenerateUncertainty { id: r.id.clone() });
            }
            let factor = map(r.total) / r.total;
            out.epistemic = r.epistemic * factor;
            out.aleatoric = r.aleatoric * factor;
        }
        Target::AleatoricOnly => {
            if !(r.aleatoric > 0.0) {
                return Err(Error::DegenerateUncertainty { id: r.id.clone() });
            }
            out.aleatoric = map(r.aleatoric);
        }
    }
    out.total = out.epistemic + out.aleatoric;
    Ok(out)
}

/// Applies a calibration to uncertainty records. Means are copied unchanged.
pub fn apply(records: &[UncertaintyRecord], calib: &CalibrationArtifact) -> Result<Vec<UncertaintyRecord>> {
    calib.check()?;
    match calib.method {
        Method::Identity => Ok(records.to_vec()),
        Method::Sigma => {
            let s2 = calib.s.expect("checked").powi(2);
            records
                .iter()
                .map(|r| match calib.target {
                    Target::Predictive => {
                        let mut out = r.clone();
                        out.epistemic = r.epistemic * s2;
                        out.aleatoric = r.aleatoric * s2;
                        out.total = out.epistemic + out.aleatoric;
                        Ok(out)
                    }
                    Target::AleatoricOnly => {
                        let mut out = r.clone();
                        out.aleatoric = r.aleatoric * s2;
                        out.total = out.epistemic + out.aleatoric;
                        Ok(out)
                    }
                })
                .collect()
        }
        Method::Aux => {
            let w = calib.aux.as_ref().expect("checked");
            records
                .iter()
                .map(|r| rescale(r, calib.target, |u| w.forward(u.ln()).exp()))
                .collect()
        }
    }
}

/// Like [`apply`], but first checks that the artifact acts on `target`.
/// The identity artifact is compatible with every target.
pub fn apply_for(
    records: &[UncertaintyRecord],
    calib: &CalibrationArtifact,
    target: Target,
) -> Result<Vec<UncertaintyRecord>> {
    if calib.method != Method::Identity && calib.target != target {
        return Err(Error::CalibrationMismatch(format!(
            "artifact calibrates {} uncertainty, requested {}",
            calib.target, target
        )));
    }
    apply(records, calib)
}

pub fn apply_set(set: &McPredictionSet, calib: &CalibrationArtifact) -> Result<Vec<UncertaintyRecord>> {
    apply(&metrics::uncertainty_records(set), calib)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(total: f64, err: f64) -> UncertaintyRecord {
        UncertaintyRecord {
            id: "r".into(),
            y: vec![0.0],
            y_mean: vec![err],
            epistemic: 0.0,
            aleatoric: total,
            total,
            mc_sq_err: err * err,
        }
    }

    #[test]
    fn gaussian_closed_form_examples() {
        assert_eq!(sigma_closed_form_gaussian(&[0.2, 0.5], &[0.2, 0.5]).unwrap(), 1.0);
        assert_eq!(sigma_closed_form_gaussian(&[4.0; 3], &[1.0; 3]).unwrap(), 2.0);
        let s = sigma_closed_form_gaussian(&[1.0, 1.0], &[1.0, 4.0]).unwrap();
        assert!((s - 0.625f64.sqrt()).abs() < 1e-15);
        assert!((s - 0.79057).abs() < 1e-5);
    }

    #[test]
    fn laplace_closed_form_examples() {
        assert_eq!(sigma_closed_form_laplace(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 1.0);
        assert_eq!(sigma_closed_form_laplace(&[1.0, 3.0], &[1.0, 1.0]).unwrap(), 2.0);
        let s = sigma_closed_form_laplace(&[0.2, 0.4, 0.9], &[1.0, 2.0, 3.0]).unwrap();
        assert!((s - 0.7 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn closed_form_rejects_bad_input() {
        assert!(matches!(
            sigma_closed_form_gaussian(&[1.0], &[0.0]),
            Err(Error::NonPositiveVariance { index: 0, .. })
        ));
        assert!(matches!(sigma_closed_form_gaussian(&[], &[]), Err(Error::EmptyInput(_))));
        assert!(sigma_closed_form_laplace(&[1.0, 2.0], &[1.0]).is_err());
        assert_eq!(sigma_closed_form_gaussian(&[0.0, 0.0], &[1.0, 2.0]).unwrap(), 0.0);
    }

    #[test]
    fn gd_matches_closed_form() {
        let opts = SigmaFitOptions::default();
        let (s, meta) = sigma_fit_gd(&[0.2, 0.5], &[0.2, 0.5], LikelihoodKind::Gaussian, &opts).unwrap();
        assert!((s - 1.0).abs() < 1e-6);
        assert!(meta["objective"] <= meta["objective_at_init"]);

        let (s, _) = sigma_fit_gd(&[1.0, 1.0], &[1.0, 4.0], LikelihoodKind::Gaussian, &opts).unwrap();
        assert!((s - 0.79057).abs() < 1e-4);
        assert!((s - 0.625f64.sqrt()).abs() < 1e-6);

        let (s, meta) =
            sigma_fit_gd(&[0.2, 0.4, 0.9], &[1.0, 2.0, 3.0], LikelihoodKind::Laplace, &opts).unwrap();
        assert!((s - 0.23333).abs() < 1e-4);
        assert_eq!(meta["converged"], 1.0);
    }

    #[test]
    fn gd_far_from_start() {
        let opts = SigmaFitOptions::default();
        for target in [1e-3, 0.05, 30.0, 400.0] {
            let (s, _) = sigma_fit_gd(&[target * target], &[1.0], LikelihoodKind::Gaussian, &opts).unwrap();
            assert!((s - target).abs() <= 1e-6f64.max(10.0 * opts.tolerance) * target.max(1.0), "{s} vs {target}");
        }
    }

    #[test]
    fn gd_all_zero_errors_is_rejected() {
        let r = sigma_fit_gd(&[0.0], &[1.0], LikelihoodKind::Gaussian, &SigmaFitOptions::default());
        assert!(r.is_err());
    }

    #[test]
    fn closed_form_is_stationary() {
        let e = [0.3, 0.01, 0.2, 0.05];
        let v = [0.1, 0.02, 0.5, 0.01];
        let s = sigma_closed_form_gaussian(&e, &v).unwrap();
        let sum: f64 = e.iter().zip(&v).map(|(a, b)| a / b).sum();
        let m = e.len() as f64;
        let obj = |s: f64| m * s.ln() + 0.5 * sum / (s * s);
        let deriv = m / s - sum / s.powi(3);
        assert!(deriv.abs() < 1e-10);
        assert!(obj(s) < obj(s + 1e-4) && obj(s) < obj(s - 1e-4));
    }

    #[test]
    fn sigma_apply_scales_quadratically() {
        let a = CalibrationArtifact::sigma(2.0, LikelihoodKind::Gaussian, Target::Predictive);
        let out = apply(&[rec(0.01, 0.3)], &a).unwrap();
        assert_eq!(out[0].total, 0.04);
        assert_eq!(out[0].y_mean, vec![0.3]);
    }

    #[test]
    fn aleatoric_only_leaves_epistemic() {
        let mut r = rec(0.03, 0.1);
        r.epistemic = 0.01;
        r.aleatoric = 0.02;
        let a = CalibrationArtifact::sigma(3.0, LikelihoodKind::Gaussian, Target::AleatoricOnly);
        let out = apply(&[r], &a).unwrap();
        assert_eq!(out[0].epistemic, 0.01);
        assert!((out[0].aleatoric - 0.18).abs() < 1e-15);
        assert_eq!(out[0].total, out[0].epistemic + out[0].aleatoric);
    }

    #[test]
    fn identity_is_noop_and_target_mismatch_errors() {
        let recs = vec![rec(0.1, 0.2), rec(0.3, 0.1)];
        assert_eq!(apply(&recs, &CalibrationArtifact::identity()).unwrap(), recs);
        let a = CalibrationArtifact::sigma(2.0, LikelihoodKind::Gaussian, Target::AleatoricOnly);
        assert!(matches!(
            apply_for(&recs, &a, Target::Predictive),
            Err(Error::CalibrationMismatch(_))
        ));
        assert!(apply_for(&recs, &CalibrationArtifact::identity(), Target::AleatoricOnly).is_ok());
    }

    fn four_times_too_small(m: usize) -> Vec<UncertaintyRecord> {
        (0..m)
            .map(|i| {
                let err = 0.02 + 0.1 * (i as f64 / m as f64);
                rec(err * err / 4.0, err)
            })
            .collect()
    }

    #[test]
    fn aux_reduces_nll_when_uncertainty_too_small() {
        let recs = four_times_too_small(64);
        let a = aux_fit_records(&recs, &AuxConfig::default(), Target::Predictive).unwrap();
        let before = crate::likelihood::records_nll(&recs, LikelihoodKind::Gaussian).unwrap();
        let after =
            crate::likelihood::records_nll(&apply(&recs, &a).unwrap(), LikelihoodKind::Gaussian).unwrap();
        assert!(after < before, "{after} !< {before}");
        assert!(a.fit_meta["objective"] <= a.fit_meta["objective_at_init"]);
    }

    #[test]
    fn aux_on_calibrated_input_stays_near_identity() {
        let recs: Vec<_> = (0..50)
            .map(|i| {
                let err = 0.01 + 0.2 * (i as f64 / 50.0);
                rec(err * err, err)
            })
            .collect();
        let a = aux_fit_records(&recs, &AuxConfig::default(), Target::Predictive).unwrap();
        let id = crate::likelihood::records_nll(&recs, LikelihoodKind::Gaussian).unwrap();
        let aux =
            crate::likelihood::records_nll(&apply(&recs, &a).unwrap(), LikelihoodKind::Gaussian).unwrap();
        assert!((aux - id).abs() < 1e-3, "{aux} vs {id}");
    }

    #[test]
    fn aux_narrow_width_shape() {
        let recs = four_times_too_small(20);
        let cfg = AuxConfig {
            hidden_width: 2,
            epochs: 20,
            ..AuxConfig::default()
        };
        let a = aux_fit_records(&recs, &cfg, Target::AleatoricOnly).unwrap();
        let w = a.aux.as_ref().unwrap();
        assert_eq!(w.h, 2);
        assert!(w.shape_ok());
        assert!(a.check().is_ok());
    }

    #[test]
    fn aux_gradient_matches_finite_differences() {
        let recs = four_times_too_small(10);
        let (xs, es) = aux_training_pairs(&recs, Target::Predictive).unwrap();
        let w = AuxWeights {
            h: 3,
            w1: vec![0.7, -1.1, 0.4],
            b1: vec![2.0, -3.0, 1.5],
            w2: vec![0.3, -0.2, 0.5],
            b2: 0.1,
        };
        let idx: Vec<usize> = (0..xs.len()).collect();
        let mut grad = vec![0.0; 10];
        aux_grad(&w, &xs, &es, &idx, &mut grad);
        let p = aux_flatten(&w);
        for i in 0..p.len() {
            let eps = 1e-6;
            let mut hi = p.clone();
            hi[i] += eps;
            let mut lo = p.clone();
            lo[i] -= eps;
            let fd = (aux_loss(&aux_unflatten(&hi, 3), &xs, &es) - aux_loss(&aux_unflatten(&lo, 3), &xs, &es))
                / (2.0 * eps);
            assert!((fd - grad[i]).abs() < 1e-6 * (1.0 + fd.abs()), "param {i}: {fd} vs {}", grad[i]);
        }
    }
}
