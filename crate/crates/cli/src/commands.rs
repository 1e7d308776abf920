use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use wvt_core::corpus::{filter_record, load_corpus, read_corpus, take_top_per_query, write_corpus, Denylist};
use wvt_core::dataset::Dataset;
use wvt_core::embedder::{init_model, ModelConfig};
use wvt_core::evalsuite::{
    ablation_run, evaluate_retrieval_all, generate_synthetic, probe_model, write_ablation_report, write_probe_report,
    write_retrieval_report, AblationConfig, ProbeConfig, SyntheticConfig,
};
use wvt_core::features::VideoFeatureFile;
use wvt_core::stats::{stats_by_subset, write_plot_table, write_report, StatsOptions};
use wvt_core::textpool::TokenFile;
use wvt_core::trainer::{load_checkpoint, save_checkpoint, TrainConfig, Trainer};
use wvt_core::{Exec, Source};

use crate::{Cli, Command, DataArgs, EvalCmd, GenCmd, ModelArgs, OptimArgs, ProbeArgs, TrainCmd};

/// Shared settings resolved from the global flags.
struct Ctx {
    seed: u64,
    exec: Exec,
    verbosity: i8,
}

impl Ctx {
    fn info(&self, msg: impl AsRef<str>) {
        if self.verbosity >= 0 {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn detail(&self, msg: impl AsRef<str>) {
        if self.verbosity >= 1 {
            eprintln!("{}", msg.as_ref());
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let ctx = Ctx {
        seed: cli.seed,
        exec: Exec::from_threads(cli.threads),
        verbosity: if cli.quiet { -1 } else { cli.verbose as i8 },
    };
    in_pool(cli.threads, move || dispatch(cli.command, &ctx))
}

#[cfg(feature = "parallel")]
fn in_pool<F: FnOnce() -> Result<()> + Send>(threads: usize, f: F) -> Result<()> {
    if threads <= 1 {
        return f();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .context("starting worker threads")?;
    pool.install(f)
}

#[cfg(not(feature = "parallel"))]
fn in_pool<F: FnOnce() -> Result<()>>(_threads: usize, f: F) -> Result<()> {
    f()
}

fn dispatch(command: Command, ctx: &Ctx) -> Result<()> {
    match command {
        Command::Subset { input, out, per_query } => subset(&input, &out, per_query, ctx),
        Command::Filter { input, out, denylist } => filter(&input, &out, denylist.as_deref(), ctx),
        Command::Stats {
            input,
            out,
            subset_sizes,
            nonmissing_only,
            plot,
        } => stats(&input, &out, &subset_sizes, nonmissing_only, plot.as_deref(), ctx),
        Command::Train(cmd) => train(cmd, ctx),
        Command::Eval(cmd) => eval(cmd, ctx),
        Command::Gen(cmd) => gen(cmd, ctx),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

/// Report writer: a file if given, stdout otherwise.
fn report_sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn subset(input: &Path, out: &Path, per_query: u64, ctx: &Ctx) -> Result<()> {
    let records = load_corpus(input).with_context(|| format!("reading {}", input.display()))?;
    let total = records.len();
    let kept = take_top_per_query(records, per_query)?;
    write_corpus(out, &kept).with_context(|| format!("writing {}", out.display()))?;
    ctx.info(format!("kept {} of {total} records (top {per_query} per query)", kept.len()));
    Ok(())
}

fn filter(input: &Path, out: &Path, denylist: Option<&Path>, ctx: &Ctx) -> Result<()> {
    let deny = match denylist {
        Some(p) => Denylist::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => Denylist::default(),
    };
    let mut writer = create(out)?;
    let mut total = 0u64;
    let mut kept = 0u64;
    for record in read_corpus(input).with_context(|| format!("reading {}", input.display()))? {
        let record = record?;
        total += 1;
        if filter_record(&record, &deny) {
            kept += 1;
            writeln!(writer, "{}", record.to_json_line())?;
        }
    }
    writer.flush()?;
    ctx.info(format!("kept {kept} of {total} records"));
    Ok(())
}

fn stats(
    input: &Path,
    out: &Path,
    sizes: &[u64],
    nonmissing_only: bool,
    plot: Option<&Path>,
    ctx: &Ctx,
) -> Result<()> {
    let records = load_corpus(input).with_context(|| format!("reading {}", input.display()))?;
    if records.is_empty() {
        bail!("{} holds no records", input.display());
    }
    let sizes = if sizes.is_empty() { vec![records.len() as u64] } else { sizes.to_vec() };
    let opts = StatsOptions { nonmissing_only };
    let subsets = stats_by_subset(&records, &sizes, opts, ctx.exec)?;
    for s in subsets.iter().filter(|s| s.truncated) {
        eprintln!(
            "warning: subset size {} exceeds the corpus ({} records); using the full corpus",
            s.size,
            records.len()
        );
    }
    write_report(create(out)?, &subsets)?;
    if let Some(p) = plot {
        write_plot_table(create(p)?, &subsets)?;
    }
    ctx.info(format!("{} subset report(s) written to {}", subsets.len(), out.display()));
    Ok(())
}

fn load_data(args: &DataArgs) -> Result<(Dataset, usize, usize)> {
    let records = load_corpus(&args.corpus).with_context(|| format!("reading {}", args.corpus.display()))?;
    let video = VideoFeatureFile::load(&args.video_feats)
        .with_context(|| format!("reading {}", args.video_feats.display()))?;
    let tokens =
        TokenFile::load(&args.token_embs).with_context(|| format!("reading {}", args.token_embs.display()))?;
    let data = Dataset::assemble(&records, &video, &tokens)?;
    Ok((data, video.width, tokens.width))
}

fn train_config(optim: &OptimArgs, sources: &[Source], seed: u64) -> TrainConfig {
    TrainConfig {
        batch_size: optim.batch,
        chunk_size: optim.chunk,
        momentum: optim.momentum,
        weight_decay: optim.weight_decay,
        decay_biases: !optim.no_bias_decay,
        total_steps: optim.steps,
        warmup_steps: optim.warmup,
        lr_start: optim.lr_start,
        lr_peak: optim.lr_peak,
        negatives: optim.negatives,
        margin: optim.margin,
        dropout: optim.dropout,
        seed,
        sources: sources.to_vec(),
        share_negatives: optim.share_negatives,
    }
}

fn model_config(args: &ModelArgs, input_width: usize, text_width: usize, sources: &[Source], dropout: f64, seed: u64) -> ModelConfig {
    ModelConfig {
        input_width,
        hidden_widths: args.hidden.clone(),
        video_width: args.video_width,
        text_width,
        sources: sources.to_vec(),
        dropout,
        seed,
    }
}

/// Writes via a sibling temporary file so an interrupted save never leaves a
/// truncated checkpoint behind.
fn save_atomic(trainer: &Trainer, path: &Path) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    save_checkpoint(&trainer.model, Some(&trainer.state), &tmp)?;
    fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn train(cmd: TrainCmd, ctx: &Ctx) -> Result<()> {
    let (data, input_width, text_width) = load_data(&cmd.data)?;
    let config = train_config(&cmd.optim, &cmd.sources, ctx.seed);
    let mut trainer = match &cmd.resume {
        Some(path) => {
            let ckpt = load_checkpoint(path).with_context(|| format!("reading {}", path.display()))?;
            let Some(state) = ckpt.state else {
                bail!("{} holds no training state to resume from", path.display());
            };
            let mc = ckpt.model.config();
            if mc.input_width != input_width || mc.text_width != text_width {
                bail!(
                    "checkpoint expects widths {}/{}, data has {input_width}/{text_width}",
                    mc.input_width,
                    mc.text_width
                );
            }
            Trainer::resume(ckpt.model, state, config, ctx.exec)?
        }
        None => {
            let mc = model_config(&cmd.model, input_width, text_width, &cmd.sources, cmd.optim.dropout, ctx.seed);
            Trainer::new(init_model(mc)?, config, ctx.exec)?
        }
    };

    let mut metrics = match &cmd.metrics {
        Some(p) => {
            let f = OpenOptions::new()
                .create(true)
                .write(true)
                .append(cmd.resume.is_some())
                .truncate(cmd.resume.is_none())
                .open(p)
                .with_context(|| format!("opening {}", p.display()))?;
            Some(BufWriter::new(f))
        }
        None => None,
    };
    let started = Instant::now();
    let every = cmd.checkpoint_every;
    let total = trainer.config.total_steps;
    let report_every = (total / 20).max(1);
    let stop = cmd.stop_after.unwrap_or(total).min(total);
    if data.examples.len() < trainer.config.chunk_size {
        bail!(
            "dataset of {} examples is smaller than one chunk ({})",
            data.examples.len(),
            trainer.config.chunk_size
        );
    }
    let mut last = None;
    while trainer.step_count() < stop {
        let mut m = trainer.step(&data.examples)?;
        if cmd.omit_wall_time {
            m.wall_ms = 0.0;
        }
        if let Some(w) = metrics.as_mut() {
            writeln!(w, "{}", m.to_line())?;
        }
        if every > 0 && (m.step + 1) % every == 0 {
            save_atomic(&trainer, &cmd.out)?;
        }
        if (m.step + 1) % report_every == 0 {
            ctx.detail(format!("step {}/{total} lr {:.5} loss {:.6}", m.step + 1, m.lr, m.loss_total));
        }
        last = Some(m);
    }
    if let Some(mut w) = metrics {
        w.flush()?;
    }
    save_atomic(&trainer, &cmd.out)?;
    match last {
        Some(m) => ctx.info(format!(
            "trained to step {} in {:.1}s, last loss {:.6}; checkpoint {}",
            trainer.step_count(),
            started.elapsed().as_secs_f64(),
            m.loss_total,
            cmd.out.display()
        )),
        None => ctx.info(format!("nothing to train; checkpoint {}", cmd.out.display())),
    }
    Ok(())
}

fn probe_config(args: &ProbeArgs, seed: u64) -> Result<ProbeConfig> {
    if !(args.test_fraction > 0.0 && args.test_fraction < 1.0) {
        bail!("test fraction {} outside (0, 1)", args.test_fraction);
    }
    Ok(ProbeConfig {
        steps: args.probe_steps,
        lr: args.probe_lr,
        seed,
        standardize: true,
    })
}

fn parse_subsets(list: &str) -> Result<Vec<Vec<Source>>> {
    list.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| Source::parse_list(s).with_context(|| format!("bad subset `{s}`")))
        .collect()
}

fn eval(cmd: EvalCmd, ctx: &Ctx) -> Result<()> {
    match cmd {
        EvalCmd::Retrieval {
            checkpoint,
            data,
            sources,
            out,
        } => {
            let ckpt = load_checkpoint(&checkpoint).with_context(|| format!("reading {}", checkpoint.display()))?;
            let (data, _, _) = load_data(&data)?;
            let sources = sources.unwrap_or_else(|| ckpt.model.sources().to_vec());
            let report = evaluate_retrieval_all(&ckpt.model, &data.examples, &sources, ctx.exec)?;
            write_retrieval_report(report_sink(out.as_deref())?, &report)?;
            for s in &report.per_source {
                ctx.detail(format!("{}: recall@1 {:.3}, median rank {}", s.source, s.recall_at_1, s.median_rank));
            }
        }
        EvalCmd::Probe {
            checkpoint,
            data,
            probe,
            out,
        } => {
            let ckpt = load_checkpoint(&checkpoint).with_context(|| format!("reading {}", checkpoint.display()))?;
            let (data, _, _) = load_data(&data)?;
            let labels = data.class_labels()?;
            let cfg = AblationConfig {
                model: ckpt.model.config().clone(),
                train: TrainConfig::default(),
                probe: probe_config(&probe, ctx.seed)?,
                test_fraction: probe.test_fraction,
                split_seed: ctx.seed,
            };
            let report = probe_model(&ckpt.model, &data, &labels, &cfg)?;
            write_probe_report(report_sink(out.as_deref())?, &report)?;
            ctx.detail(format!("test accuracy {:.3}", report.test_accuracy));
        }
        EvalCmd::Ablation {
            data,
            subsets,
            model,
            optim,
            probe,
            out,
        } => {
            let subsets = parse_subsets(&subsets)?;
            let (data, input_width, text_width) = load_data(&data)?;
            let cfg = AblationConfig {
                model: model_config(&model, input_width, text_width, &Source::ALL, optim.dropout, ctx.seed),
                train: train_config(&optim, &Source::ALL, ctx.seed),
                probe: probe_config(&probe, ctx.seed)?,
                test_fraction: probe.test_fraction,
                split_seed: ctx.seed,
            };
            let rows = ablation_run(&data, &subsets, &cfg, ctx.exec)?;
            write_ablation_report(report_sink(out.as_deref())?, &rows)?;
            for r in &rows {
                ctx.detail(format!("{}: test accuracy {:.3}", r.label(), r.report.test_accuracy));
            }
        }
    }
    Ok(())
}

fn gen(cmd: GenCmd, ctx: &Ctx) -> Result<()> {
    let [title, description, tags, channel] = cmd.source_noise[..] else {
        bail!("--source-noise needs four values, got {}", cmd.source_noise.len());
    };
    if cmd.classes == 0 || cmd.per_class == 0 || cmd.input_width == 0 || cmd.text_width == 0 {
        bail!("sizes must be at least 1");
    }
    if !(cmd.noise >= 0.0) {
        bail!("noise must be >= 0");
    }
    let config = SyntheticConfig {
        classes: cmd.classes,
        per_class: cmd.per_class,
        input_width: cmd.input_width,
        text_width: cmd.text_width,
        noise: cmd.noise,
        source_noise: [title, description, tags, channel],
        seed: ctx.seed,
        ..SyntheticConfig::default()
    };
    let data = generate_synthetic(&config);
    let paths = data.write_dir(&cmd.out)?;
    ctx.info(format!(
        "wrote {} records: {}, {}, {}",
        data.records.len(),
        paths.corpus.display(),
        paths.video.display(),
        paths.tokens.display()
    ));
    Ok(())
}
