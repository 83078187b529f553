use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use regcal::calibrate::{self, AuxConfig, SigmaFitOptions};
use regcal::experiment::{self, ToyRunConfig};
use regcal::{analysis, intervals, io, metrics, report};
use regcal::{CalibrationArtifact, Error, LikelihoodKind, Result, Target, UncertaintyRecord};

#[derive(Parser)]
#[command(name = "regcal", version, about = "Recalibrate and evaluate regression uncertainty")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Sigma,
    Aux,
}

#[derive(Clone, Copy, ValueEnum)]
enum LikelihoodArg {
    Gaussian,
    Laplace,
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetArg {
    Predictive,
    Aleatoric,
}

impl From<LikelihoodArg> for LikelihoodKind {
    fn from(v: LikelihoodArg) -> Self {
        match v {
            LikelihoodArg::Gaussian => LikelihoodKind::Gaussian,
            LikelihoodArg::Laplace => LikelihoodKind::Laplace,
        }
    }
}

impl From<TargetArg> for Target {
    fn from(v: TargetArg) -> Self {
        match v {
            TargetArg::Predictive => Target::Predictive,
            TargetArg::Aleatoric => Target::AleatoricOnly,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit a recalibration artifact on a validation dump.
    Calibrate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "sigma")]
        method: MethodArg,
        #[arg(long, value_enum, default_value = "gaussian")]
        likelihood: LikelihoodArg,
        #[arg(long, value_enum, default_value = "predictive")]
        target: TargetArg,
        #[arg(long)]
        out: PathBuf,
        /// Hidden width of the auxiliary network.
        #[arg(long, default_value_t = 16)]
        h: usize,
        /// Descent iterations (sigma) or training epochs (aux).
        #[arg(long)]
        iters: Option<usize>,
        /// Initial step size.
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Report MSE, NLL and UCE of a dump, optionally after recalibration.
    Evaluate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        calib: Option<PathBuf>,
        #[arg(long, default_value_t = metrics::DEFAULT_BINS)]
        bins: usize,
        #[arg(long)]
        out: PathBuf,
        /// Calibration diagram as CSV.
        #[arg(long)]
        diagram: Option<PathBuf>,
        /// Calibration diagram as SVG.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Observed coverage of central prediction intervals.
    Intervals {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        calib: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "0.5,0.9,0.95,0.99")]
        levels: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// MSE of the retained predictions as uncertain ones are rejected.
    Reject {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        calib: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        steps: usize,
        /// Sweep evenly spaced absolute thresholds instead of quantiles.
        #[arg(long)]
        absolute: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare uncertainty histograms of in-distribution and shifted data.
    Ood {
        #[arg(long)]
        in_dist: PathBuf,
        #[arg(long)]
        shifted: PathBuf,
        #[arg(long)]
        calib: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        bins: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the toy MC-dropout regressor and recalibrate it end to end.
    Toy {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn load_calib(path: Option<&Path>) -> Result<CalibrationArtifact> {
    match path {
        Some(p) => CalibrationArtifact::from_json(&io::read_file(p)?),
        None => Ok(CalibrationArtifact::identity()),
    }
}

fn load_records(input: &Path, calib: &CalibrationArtifact) -> Result<Vec<UncertaintyRecord>> {
    let set = io::load_dump(input)?;
    calibrate::apply_set(&set, calib)
}

fn pretty(value: &serde_json::Value) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Calibrate {
            input,
            method,
            likelihood,
            target,
            out,
            h,
            iters,
            lr,
            seed,
        } => {
            let set = io::load_dump(&input)?;
            let records = metrics::uncertainty_records(&set);
            let kind = LikelihoodKind::from(likelihood);
            let target = Target::from(target);
            let artifact = match method {
                MethodArg::Sigma => {
                    let mut opts = SigmaFitOptions::default();
                    if let Some(n) = iters {
                        opts.max_iters = n;
                    }
                    if let Some(lr) = lr {
                        opts.step_size = lr;
                    }
                    calibrate::fit_sigma(&records, kind, target, &opts)?
                }
                MethodArg::Aux => {
                    if kind != LikelihoodKind::Gaussian {
                        return Err(Error::InvalidArgument(
                            "the auxiliary network is trained with the gaussian likelihood only".into(),
                        ));
                    }
                    let mut cfg = AuxConfig { hidden_width: h, seed, ..Default::default() };
                    if let Some(n) = iters {
                        cfg.epochs = n;
                    }
                    if let Some(lr) = lr {
                        cfg.step_size = lr;
                    }
                    calibrate::aux_fit_records(&records, &cfg, target)?
                }
            };
            io::write_file(&out, &artifact.to_json()?)?;
            if let Some(s) = artifact.s {
                println!("s = {s}");
            }
        }
        Command::Evaluate {
            input,
            calib,
            bins,
            out,
            diagram,
            svg,
        } => {
            let artifact = load_calib(calib.as_deref())?;
            let set = io::load_dump(&input)?;
            let records = metrics::uncertainty_records(&set);
            let evaluation = report::evaluate(&records, &artifact, bins)?;
            let doc = json!({
                "flags": { "bins": bins },
                "calibration": artifact,
                "evaluation": evaluation,
            });
            io::write_file(&out, &pretty(&doc)?)?;
            if diagram.is_some() || svg.is_some() {
                let calibrated = calibrate::apply(&records, &artifact)?;
                let points = metrics::calibration_diagram(&calibrated, bins, Target::Predictive)?;
                if let Some(p) = diagram {
                    io::write_file(&p, &io::diagram_csv(&points))?;
                }
                if let Some(p) = svg {
                    io::write_file(&p, &io::diagram_svg(&points))?;
                }
            }
            println!(
                "mse {} nll {} uce {} uce_aleatoric_only {}",
                evaluation.mse,
                evaluation.nll,
                evaluation.uce_predictive.uce,
                evaluation.uce_aleatoric_only.uce
            );
        }
        Command::Intervals {
            input,
            calib,
            levels,
            out,
        } => {
            let artifact = load_calib(calib.as_deref())?;
            let records = load_records(&input, &artifact)?;
            let table = intervals::coverage(&records, &levels)?;
            io::write_file(&out, &io::coverage_csv(&table))?;
        }
        Command::Reject {
            input,
            calib,
            steps,
            absolute,
            out,
        } => {
            let artifact = load_calib(calib.as_deref())?;
            let records = load_records(&input, &artifact)?;
            let curve = if absolute {
                analysis::rejection_curve_absolute(&records, steps)?
            } else {
                analysis::rejection_curve(&records, steps)?
            };
            io::write_file(&out, &io::rejection_csv(&curve))?;
        }
        Command::Ood {
            in_dist,
            shifted,
            calib,
            bins,
            out,
        } => {
            let artifact = load_calib(calib.as_deref())?;
            let a = load_records(&in_dist, &artifact)?;
            let b = load_records(&shifted, &artifact)?;
            let cmp = analysis::ood_compare(&a, &b, bins)?;
            io::write_file(&out, &io::ood_csv(&cmp))?;
            println!(
                "in_dist mean {} median {} | shifted mean {} median {} | mean_difference {} auroc {}",
                cmp.in_dist.summary.mean,
                cmp.in_dist.summary.median,
                cmp.shifted.summary.mean,
                cmp.shifted.summary.median,
                cmp.mean_difference,
                cmp.auroc
            );
        }
        Command::Toy { seed, out_dir } => {
            let run = experiment::run_toy(&ToyRunConfig::with_seed(seed))?;
            experiment::write_toy(&run, &out_dir)?;
            let s = &run.summary;
            println!(
                "s {} test uce {} -> {} (sigma), {} (aux)",
                s.s,
                s.test_uncalibrated.evaluation.uce_predictive.uce,
                s.test_sigma.evaluation.uce_predictive.uce,
                s.test_aux.evaluation.uce_predictive.uce
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("error: usage: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {}: {}", e.code(), msg);
            ExitCode::FAILURE
        }
    }
}
