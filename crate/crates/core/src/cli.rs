//! The `idf` command line.
//!
//! Exit codes: 0 success, 2 usage, 3 I/O failure, 4 validation (shapes,
//! CRC, config, unsupported images).

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::bench::run_bench;
use crate::engine::{denoise, StopMode, TraceLevel};
use crate::error::{IdfError, Result};
use crate::io::{self, RunConfig};
use crate::metrics::{evaluate, MetricReport};
use crate::model::ModelWeights;
use crate::noise::{Noise, Rng};
use crate::tensor::Image;
use crate::train::train;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_VALIDATION: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "idf", version, about = "Iterative dynamic filtering denoiser")]
struct Cli {
    /// Refuse any path that resolves outside the current directory.
    #[arg(long, global = true)]
    sandbox: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct ConfigArgs {
    /// key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` override, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Corrupt a clean PNG with synthetic noise.
    AddNoise {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// e.g. gaussian:25, spatial_gaussian:55, poisson:3.5, salt_pepper:0.02, speckle:0.04, mixture:4
        #[arg(long)]
        noise: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Denoise a PNG with trained weights.
    Denoise {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        /// fixed | kernel-dic | image-dic
        #[arg(long)]
        stop: Option<String>,
        #[arg(long)]
        kappa: Option<f64>,
        /// Maximum number of iterations.
        #[arg(long = "T")]
        max_iterations: Option<usize>,
        /// Directory for per-iteration images and trace.jsonl.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Train weights on a directory of clean PNGs.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Training log CSV; defaults to the output path with a .csv extension.
        #[arg(long)]
        log: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Score predictions against references, paired by file name.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Sweep a noise suite over a clean dataset.
    Bench {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        /// Config file with bench.suite, bench.seed and engine settings.
        #[arg(long)]
        suite: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Print the number of trainable parameters.
    ParamCount {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

/// Maps an error to its exit code.
pub fn exit_code(err: &IdfError) -> i32 {
    match err {
        IdfError::Io { .. } => EXIT_IO,
        _ => EXIT_VALIDATION,
    }
}

struct Ctx<'a> {
    sandbox: Option<PathBuf>,
    out: &'a mut dyn Write,
}

impl Ctx<'_> {
    fn path(&self, p: &Path) -> Result<PathBuf> {
        match &self.sandbox {
            Some(root) => io::confine(root, p),
            None => Ok(p.to_path_buf()),
        }
    }

    fn say(&mut self, text: impl AsRef<str>) -> Result<()> {
        writeln!(self.out, "{}", text.as_ref()).map_err(|e| IdfError::io("<stdout>", e))
    }

    fn print_config(&mut self, cfg: &RunConfig, extra: &[(&str, String)]) -> Result<()> {
        self.say("# resolved config")?;
        for (k, v) in extra {
            self.say(format!("# {k} = {v}"))?;
        }
        let rendered = cfg.render();
        self.say(rendered.trim_end())
    }
}

fn resolve_config(ctx: &Ctx, args: &ConfigArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(&ctx.path(p)?)?,
        None => RunConfig::default(),
    };
    apply_overrides(&mut cfg, &args.overrides)?;
    Ok(cfg)
}

fn apply_overrides(cfg: &mut RunConfig, overrides: &[String]) -> Result<()> {
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| IdfError::Config(format!("override `{o}` is not key=value")))?;
        cfg.set(k, v)?;
    }
    cfg.validate()
}

fn conform(img: Image, channels: usize) -> Result<Image> {
    if img.channels() == channels {
        Ok(img)
    } else if img.channels() == 1 {
        img.replicate_channels(channels)
    } else {
        Err(IdfError::Shape(format!(
            "image has {} channels, model expects {channels}",
            img.channels()
        )))
    }
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| p.display().to_string())
}

fn eval_pairs(pred: &Path, reference: &Path) -> Result<Vec<(String, PathBuf, PathBuf)>> {
    if pred.is_dir() != reference.is_dir() {
        return Err(IdfError::InvalidArgument(
            "--pred and --ref must both be files or both be directories".into(),
        ));
    }
    if !pred.is_dir() {
        return Ok(vec![(
            file_name(pred),
            pred.to_path_buf(),
            reference.to_path_buf(),
        )]);
    }
    let preds = io::list_pngs(pred)?;
    if preds.is_empty() {
        return Err(IdfError::EmptyDataset(pred.to_path_buf()));
    }
    preds
        .into_iter()
        .map(|p| {
            let name = file_name(&p);
            let r = reference.join(&name);
            if !r.is_file() {
                return Err(IdfError::InvalidArgument(format!(
                    "no reference named {name} in {}",
                    reference.display()
                )));
            }
            Ok((name, p, r))
        })
        .collect()
}

fn load_model(
    ctx: &Ctx,
    weights: &Path,
    cfg: &mut RunConfig,
    strict: bool,
) -> Result<ModelWeights> {
    let path = ctx.path(weights)?;
    let w = if strict {
        io::load_weights(&path, &cfg.model)?
    } else {
        io::load_weights_inferred(&path, &cfg.model)?
    };
    cfg.model = *w.config();
    Ok(w)
}

fn execute(cmd: Command, ctx: &mut Ctx) -> Result<()> {
    match cmd {
        Command::AddNoise {
            input,
            out,
            noise,
            seed,
            cfg,
        } => {
            let mut rc = resolve_config(ctx, &cfg)?;
            if let Some(n) = noise {
                rc.noise = n.parse::<Noise>()?;
            }
            if let Some(s) = seed {
                rc.noise_seed = s;
            }
            ctx.print_config(
                &rc,
                &[
                    ("in", input.display().to_string()),
                    ("out", out.display().to_string()),
                ],
            )?;
            let img = io::load_image(&ctx.path(&input)?)?;
            let noisy = rc.noise.apply(&img, &mut Rng::new(rc.noise_seed))?;
            io::save_image(&noisy, &ctx.path(&out)?)?;
            ctx.say(format!("wrote {}", out.display()))
        }
        Command::Denoise {
            input,
            out,
            weights,
            stop,
            kappa,
            max_iterations,
            trace,
            cfg,
        } => {
            let mut rc = resolve_config(ctx, &cfg)?;
            if let Some(s) = stop {
                rc.engine.stop_mode = s.parse::<StopMode>()?;
            }
            if let Some(k) = kappa {
                rc.engine.kappa = k;
            }
            if let Some(t) = max_iterations {
                rc.engine.max_iterations = t;
            }
            if trace.is_some() {
                rc.engine.trace_level = rc.engine.trace_level.max(TraceLevel::Full);
            }
            rc.validate()?;
            let w = load_model(ctx, &weights, &mut rc, cfg.config.is_some())?;
            ctx.print_config(
                &rc,
                &[
                    ("in", input.display().to_string()),
                    ("out", out.display().to_string()),
                    ("weights", weights.display().to_string()),
                ],
            )?;
            let img = conform(io::load_image(&ctx.path(&input)?)?, rc.model.channels)?;
            let res = denoise(&img, &w, &rc.engine)?;
            io::save_image(&res.estimate, &ctx.path(&out)?)?;
            if let Some(dir) = trace {
                io::write_trace(&res, &ctx.path(&dir)?)?;
            }
            ctx.say(format!("iterations_used={}", res.iterations_used))?;
            ctx.say(format!("stop_reason={}", res.stop_reason))?;
            ctx.say(format!(
                "degenerate_kernels={}",
                res.degenerate_kernel_count
            ))
        }
        Command::Train {
            data,
            out,
            log,
            cfg,
        } => {
            let rc = resolve_config(ctx, &cfg)?;
            let log_path = log.unwrap_or_else(|| out.with_extension("csv"));
            ctx.print_config(
                &rc,
                &[
                    ("data", data.display().to_string()),
                    ("out", out.display().to_string()),
                    ("log", log_path.display().to_string()),
                ],
            )?;
            let out_path = ctx.path(&out)?;
            let init = ModelWeights::init(rc.model, rc.train.seed)?;
            let every = rc.train.checkpoint_every;
            let report_every = (rc.train.steps / 20).max(1);
            let mut lines = Vec::new();
            let outcome = train(&ctx.path(&data)?, init, &rc.train, |entry, w| {
                if every > 0 && entry.step % every == 0 {
                    let stem = out_path.with_extension("");
                    let ckpt = PathBuf::from(format!("{}.step{}.idfw", stem.display(), entry.step));
                    io::save_weights(w, &ckpt)?;
                }
                if entry.step % report_every == 0 {
                    lines.push(format!(
                        "step {:>6}  loss {:.6}  {:.1}s",
                        entry.step,
                        entry.loss,
                        entry.wall_ms as f64 / 1000.0
                    ));
                }
                Ok(())
            })?;
            for l in lines {
                ctx.say(l)?;
            }
            io::save_weights(&outcome.weights, &out_path)?;
            io::write_train_log(&outcome.log, &ctx.path(&log_path)?)?;
            ctx.say(format!(
                "wrote {} and {}",
                out.display(),
                log_path.display()
            ))
        }
        Command::Eval {
            pred,
            reference,
            report,
        } => {
            let rc = RunConfig::default();
            let mut extra = vec![
                ("pred", pred.display().to_string()),
                ("ref", reference.display().to_string()),
            ];
            if let Some(r) = &report {
                extra.push(("report", r.display().to_string()));
            }
            ctx.print_config(&rc, &extra)?;
            let pairs = eval_pairs(&ctx.path(&pred)?, &ctx.path(&reference)?)?;
            let loaded = pairs
                .into_iter()
                .map(|(name, p, r)| Ok((name, io::load_image(&p)?, io::load_image(&r)?)))
                .collect::<Result<Vec<_>>>()?;
            let metrics: MetricReport = evaluate(loaded.iter().map(|(n, p, r)| (n.clone(), p, r)))?;
            ctx.say(io::metric_markdown(&metrics).trim_end())?;
            if let Some(r) = report {
                io::write_metric_csv(&metrics, &ctx.path(&r)?)?;
            }
            Ok(())
        }
        Command::Bench {
            data,
            weights,
            suite,
            report,
            overrides,
        } => {
            let mut rc = match &suite {
                Some(p) => RunConfig::load(&ctx.path(p)?)?,
                None => RunConfig::default(),
            };
            apply_overrides(&mut rc, &overrides)?;
            let w = load_model(ctx, &weights, &mut rc, false)?;
            ctx.print_config(
                &rc,
                &[
                    ("data", data.display().to_string()),
                    ("weights", weights.display().to_string()),
                ],
            )?;
            let dir = ctx.path(&data)?;
            let files = io::list_pngs(&dir)?;
            if files.is_empty() {
                return Err(IdfError::EmptyDataset(dir));
            }
            let images = files
                .iter()
                .map(|p| Ok((file_name(p), io::load_image(p)?)))
                .collect::<Result<Vec<_>>>()?;
            let dataset = file_name(&dir);
            let rows = run_bench(
                &images,
                &dataset,
                &w,
                &rc.engine,
                &rc.bench_suite,
                rc.bench_seed,
            )?;
            ctx.say(io::bench_markdown(&rows).trim_end())?;
            for row in &rows {
                let it = &row.iterations;
                ctx.say(format!(
                    "iterations[{}]: mean {:.2} min {} max {} converged {} max_reached {}",
                    row.noise, it.mean, it.min, it.max, it.converged, it.max_reached
                ))?;
            }
            if let Some(r) = report {
                io::write_bench_csv(&rows, &ctx.path(&r)?)?;
            }
            Ok(())
        }
        Command::ParamCount { cfg } => {
            let rc = resolve_config(ctx, &cfg)?;
            ctx.print_config(&rc, &[])?;
            ctx.say(rc.model.param_count().to_string())
        }
    }
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit code. Normal output goes to `out`, errors to stderr.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            if e.use_stderr() {
                eprint!("{e}");
            } else {
                let _ = write!(out, "{e}");
            }
            return code;
        }
    };
    let sandbox = if cli.sandbox {
        match std::env::current_dir() {
            Ok(d) => Some(d),
            Err(e) => {
                eprintln!("error: {}", IdfError::io(".", e));
                return EXIT_IO;
            }
        }
    } else {
        None
    };
    let mut ctx = Ctx { sandbox, out };
    match execute(cli.command, &mut ctx) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
