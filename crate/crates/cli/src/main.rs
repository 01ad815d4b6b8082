use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use afford_core::field::{read_field, read_mask, write_field};
use afford_core::harness::{
    gen_corpus, read_corpus, run_experiment, write_corpus, EvalStudy, ExperimentConfig, Mode, ScbrStudy,
    SyntheticPairConfig,
};
use afford_core::icrf::{refine, train, AccelerationModel, RefineConfig, TrainConfig, V0Policy};
use afford_core::softmask::{intersect_annotation, soft_mask, SoftMaskParams};
use afford_core::tacot::{plan, AttributeOracle, CategoryRegistry, RemoteOracle, ScriptedOracle};
use afford_core::{Error, Result};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "afford", version, about = "Affordance heatmap refinement toolkit")]
struct Cli {
    /// Seed for every random stream of the command.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for generated artifacts.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic fragmented/compact corpus (x0/, x1/, points.csv).
    GenData {
        #[arg(long, default_value_t = 200)]
        n: usize,
    },
    /// Sigmoid soft mask over the signed distance of a binary mask.
    Softmask {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3.0)]
        temperature: f64,
        /// Map the background above 0.5 instead of the foreground.
        #[arg(long)]
        inside_negative: bool,
    },
    /// Zero annotation mass outside an object mask.
    Intersect {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Optimize a heatmap pair under the boundary-refinement loss.
    ScbrOptimize {
        #[arg(long)]
        gt: Option<PathBuf>,
        #[arg(long)]
        init_img: Option<PathBuf>,
        #[arg(long)]
        init_sem: Option<PathBuf>,
    },
    /// Train an acceleration model on a corpus directory.
    IcrfTrain {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Refine a heatmap with a trained model.
    IcrfRefine {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        nt: usize,
        #[arg(long, default_value_t = 10)]
        ntau: usize,
        /// Per-pixel std of the initial velocity (0 = zero velocity).
        #[arg(long, default_value_t = 0.0)]
        v0_sigma: f64,
    },
    /// Plan sub-actions for one object from a scripted or remote oracle.
    Plan {
        /// `key = value` oracle script.
        #[arg(long, conflicts_with = "remote")]
        script: Option<PathBuf>,
        /// host:port of a line-JSON oracle.
        #[arg(long)]
        remote: Option<String>,
        #[arg(long, default_value_t = 10.0)]
        timeout: f64,
        /// Registry document merged over the bundled one.
        #[arg(long)]
        registry: Option<PathBuf>,
    },
    /// Score predictions against ground truth (KLD, SIM, NSS).
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        fix_frac: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a full experiment from a config file.
    Run,
}

fn load_json<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.to_path_buf(),
                source: e,
            })?;
            Ok(serde_json::from_str(&text)?)
        }
        None => Ok(T::default()),
    }
}

fn out_dir(cli: &Cli) -> Result<&Path> {
    cli.out_dir
        .as_deref()
        .ok_or_else(|| Error::InvalidConfig("--out-dir is required".into()))
}

fn print_json(v: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn run_and_report(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    let summary = run_experiment(cfg, dir)?;
    print_json(&summary.report)?;
    log::info!("artifacts written to {}", dir.display());
    Ok(())
}

fn execute(cli: &Cli) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    match &cli.command {
        Command::GenData { n } => {
            let base: SyntheticPairConfig = load_json(cli.config.as_deref())?;
            let pairs = gen_corpus(&base, seed, 0, *n)?;
            write_corpus(out_dir(cli)?, &pairs)?;
        }
        Command::Softmask {
            input,
            out,
            temperature,
            inside_negative,
        } => {
            let params = SoftMaskParams {
                temperature: *temperature,
                inside_positive: !inside_negative,
            };
            params.validate()?;
            write_field(&soft_mask(&read_mask(input)?, &params)?, out)?;
        }
        Command::Intersect { gt, mask, out } => {
            write_field(&intersect_annotation(&read_field(gt)?, &read_mask(mask)?)?, out)?;
        }
        Command::ScbrOptimize { gt, init_img, init_sem } => {
            let mut study: ScbrStudy = load_json(cli.config.as_deref())?;
            study.gt = gt.clone().or(study.gt);
            study.init_img = init_img.clone().or(study.init_img);
            study.init_sem = init_sem.clone().or(study.init_sem);
            let mut cfg = ExperimentConfig::new(Mode::Scbr, seed);
            cfg.scbr = study;
            run_and_report(&cfg, out_dir(cli)?)?;
        }
        Command::IcrfTrain { data, out } => {
            let mut cfg: TrainConfig = load_json(cli.config.as_deref())?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            let pairs: Vec<_> = read_corpus(data)?.into_iter().map(|(_, a, b)| (a, b)).collect();
            let result = train(&pairs, &cfg)?;
            result.model.save(out)?;
            let n = result.losses.len();
            log::info!("trained {n} steps, final loss {:.6}", result.losses[n - 1]);
        }
        Command::IcrfRefine {
            model,
            input,
            out,
            nt,
            ntau,
            v0_sigma,
        } => {
            let cfg = RefineConfig {
                n_t: *nt,
                n_tau: *ntau,
                v0_policy: if *v0_sigma > 0.0 {
                    V0Policy::Gaussian { sigma: *v0_sigma }
                } else {
                    V0Policy::Zero
                },
            };
            cfg.validate()?;
            let m = AccelerationModel::load(model)?;
            write_field(&refine(&m, &read_field(input)?, &cfg, seed)?, out)?;
        }
        Command::Plan {
            script,
            remote,
            timeout,
            registry,
        } => {
            let mut reg = CategoryRegistry::default();
            if let Some(p) = registry {
                let text = std::fs::read_to_string(p).map_err(|e| Error::Io {
                    path: p.clone(),
                    source: e,
                })?;
                reg.extend_from_json(&text)?;
            }
            let mut oracle: Box<dyn AttributeOracle> = match (script, remote) {
                (Some(p), None) => Box::new(ScriptedOracle::from_file(p)?),
                (None, Some(addr)) => {
                    if !(*timeout > 0.0 && timeout.is_finite()) {
                        return Err(Error::InvalidConfig("--timeout must be positive".into()));
                    }
                    Box::new(RemoteOracle::connect(addr.as_str(), Duration::from_secs_f64(*timeout))?)
                }
                _ => return Err(Error::InvalidConfig("give exactly one of --script or --remote".into())),
            };
            let (p, trace) = plan(oracle.as_mut(), &reg)?;
            print_json(&serde_json::json!({
                "category": p.category,
                "plan": p.labels(),
                "actions": p.actions,
                "gate_invariants_hold": trace.check_invariants().is_ok(),
            }))?;
        }
        Command::Eval { pred, gt, fix_frac, out } => {
            let mut cfg = ExperimentConfig::new(Mode::Eval, seed);
            cfg.eval = EvalStudy {
                pred_dir: Some(pred.clone()),
                gt_dir: Some(gt.clone()),
                fix_frac: *fix_frac,
            };
            cfg.validate()?;
            let report = afford_core::harness::eval_study(&cfg.eval)?;
            let text = serde_json::to_string_pretty(&report)? + "\n";
            match out {
                Some(path) => std::fs::write(path, text).map_err(|e| Error::Io {
                    path: path.clone(),
                    source: e,
                })?,
                None => print!("{text}"),
            }
        }
        Command::Run => {
            let path = cli
                .config
                .as_deref()
                .ok_or_else(|| Error::InvalidConfig("run needs --config".into()))?;
            let mut cfg = ExperimentConfig::from_file(path)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            run_and_report(&cfg, out_dir(cli)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
