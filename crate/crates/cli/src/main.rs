//! `xpass`: command-line front end for the pass-destination pipeline.

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use xpass_core::attention::{counted, sample_budget, AttentionMode};
use xpass_core::data::{
    build_dataset, infer_attack_directions, load_dataset, merge_tracking, parse_events,
    parse_tracking, save_dataset, split_dataset, synth_generate, Dataset, SequenceSample,
    SynthRule, TeamSide, FEATURE_DIM, SEQ_LEN,
};
use xpass_core::harness::{counterfactual_diff, evaluate, train, EvalReport, TrainConfig};
use xpass_core::model::{
    forward, heatmap, load_checkpoint, sample_features, save_checkpoint, Heatmap, ModelConfig,
};
use xpass_core::{Error, GridScheme, Result, ZoneGrid};

#[derive(Parser)]
#[command(name = "xpass", about = "Pass destination prediction for football tracking data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GridArg {
    Coarse,
    Fine,
}

impl From<GridArg> for GridScheme {
    fn from(g: GridArg) -> Self {
        match g {
            GridArg::Coarse => GridScheme::Coarse,
            GridArg::Fine => GridScheme::Fine,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Canonical,
    Probsparse,
}

impl From<ModeArg> for AttentionMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Canonical => AttentionMode::Canonical,
            ModeArg::Probsparse => AttentionMode::ProbSparse,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SplitArg {
    Val,
    Test,
}

#[derive(Subcommand)]
enum Command {
    /// Build a dataset container from tracking + event files
    Ingest {
        #[arg(long, value_name = "F")]
        tracking_home: PathBuf,
        #[arg(long, value_name = "F")]
        tracking_away: PathBuf,
        #[arg(long, value_name = "F")]
        events: PathBuf,
        #[arg(long, value_enum, default_value = "coarse")]
        grid: GridArg,
        #[arg(long, value_name = "DS")]
        out: PathBuf,
    },
    /// Generate a synthetic dataset with the nearest-teammate rule
    Synth {
        #[arg(long, value_name = "N")]
        n: usize,
        #[arg(long, value_name = "S", default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "coarse")]
        grid: GridArg,
        #[arg(long, value_name = "DS")]
        out: PathBuf,
    },
    /// Train a model on a dataset container
    Train {
        #[arg(long, value_name = "DS")]
        dataset: PathBuf,
        #[arg(long, value_name = "D", default_value_t = 512)]
        d_model: usize,
        #[arg(long, value_name = "H", default_value_t = 8)]
        heads: usize,
        #[arg(long, default_value_t = 2)]
        stacks: usize,
        #[arg(long, default_value_t = 3)]
        blocks: usize,
        #[arg(long, value_enum, default_value = "probsparse")]
        mode: ModeArg,
        #[arg(long, value_name = "C", default_value_t = 5)]
        factor: usize,
        #[arg(long, default_value_t = 1e-4)]
        lr: f64,
        #[arg(long, default_value_t = 32)]
        batch: usize,
        #[arg(long, value_name = "E", default_value_t = 30)]
        epochs: usize,
        #[arg(long, value_name = "P", default_value_t = 5)]
        patience: usize,
        #[arg(long, value_name = "S", default_value_t = 0)]
        seed: u64,
        #[arg(long, value_name = "CKPT")]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on a dataset split
    Eval {
        #[arg(long, value_name = "CKPT")]
        model: PathBuf,
        #[arg(long, value_name = "DS")]
        dataset: PathBuf,
        #[arg(long, value_enum)]
        split: SplitArg,
    },
    /// Write the predicted heatmap for one event as CSV
    Heatmap {
        #[arg(long, value_name = "CKPT")]
        model: PathBuf,
        #[arg(long, value_name = "DS")]
        dataset: PathBuf,
        #[arg(long, value_name = "ID")]
        event: u32,
        #[arg(long, value_name = "CSV")]
        out: PathBuf,
    },
    /// Rigidly displace one entity's trajectory and compare heatmaps
    Counterfactual {
        #[arg(long, value_name = "CKPT")]
        model: PathBuf,
        #[arg(long, value_name = "DS")]
        dataset: PathBuf,
        #[arg(long, value_name = "ID")]
        event: u32,
        #[arg(long, value_name = "I")]
        entity: usize,
        #[arg(long, value_name = "M", allow_hyphen_values = true)]
        dx: f64,
        #[arg(long, value_name = "M", allow_hyphen_values = true)]
        dy: f64,
        #[arg(long, value_name = "CSV")]
        out: PathBuf,
    },
    /// Compare canonical vs sparse attention cost over sequence lengths
    BenchAttention {
        #[arg(long, value_delimiter = ',', default_value = "64,128,256,512,1024")]
        lengths: Vec<usize>,
        #[arg(long, value_name = "C", default_value_t = 5)]
        factor: usize,
        #[arg(long, value_name = "S", default_value_t = 0)]
        seed: u64,
    },
}

fn main() {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}

fn find_sample(ds: &Dataset, event: u32) -> Result<&SequenceSample> {
    ds.find_event(event)
        .ok_or_else(|| Error::Usage(format!("event id {event} not present in dataset")))
}

fn model_config_for(ds: &Dataset, args: &ModelArgs) -> ModelConfig {
    let mut cfg = ModelConfig::new(ds.header.grid);
    cfg.d_model = args.d_model;
    cfg.n_heads = args.heads;
    cfg.n_stacks = args.stacks;
    cfg.blocks_per_stack = args.blocks;
    cfg.input_dim = FEATURE_DIM;
    cfg.seq_len = SEQ_LEN;
    cfg.context_dim = ds.header.context_dim;
    cfg.sampling_factor = args.factor;
    cfg.mode = args.mode;
    cfg.seed = args.seed;
    cfg
}

struct ModelArgs {
    d_model: usize,
    heads: usize,
    stacks: usize,
    blocks: usize,
    factor: usize,
    mode: AttentionMode,
    seed: u64,
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Ingest { tracking_home, tracking_away, events, grid, out } => {
            let home = parse_tracking(&tracking_home, TeamSide::Home)?;
            let away = parse_tracking(&tracking_away, TeamSide::Away)?;
            let frames = merge_tracking(&home, &away)?;
            let (mut passes, stats) = parse_events(&events)?;
            infer_attack_directions(&frames, &mut passes)?;
            let grid = ZoneGrid::new(grid.into());
            let build = build_dataset(&frames, &passes, &grid);
            println!("frames={}", frames.len());
            println!("events_non_pass={}", stats.non_pass);
            println!("passes_parsed={}", passes.len());
            println!("samples_emitted={}", build.samples.len());
            println!("skipped_history={}", build.skipped_history);
            println!("skipped_gaps={}", build.skipped_gaps);
            println!("skipped_missing_end={}", build.skipped_missing_end + stats.missing_end);
            let (tr, va, te) = split_dataset(build.samples, 0)?;
            let ds = Dataset::from_splits(grid.scheme, 0, tr, va, te);
            save_dataset(&out, &ds)?;
            println!("dataset={}", out.display());
            Ok(())
        }
        Command::Synth { n, seed, grid, out } => {
            let zone_grid = ZoneGrid::new(grid.into());
            let samples = synth_generate(n, seed, SynthRule::NearestTeammate, &zone_grid);
            let (tr, va, te) = split_dataset(samples, seed)?;
            let ds = Dataset::from_splits(zone_grid.scheme, seed, tr, va, te);
            println!("samples={n}");
            println!("train={} val={} test={}", ds.header.n_train, ds.header.n_val, ds.header.n_test);
            save_dataset(&out, &ds)?;
            println!("dataset={}", out.display());
            Ok(())
        }
        Command::Train {
            dataset,
            d_model,
            heads,
            stacks,
            blocks,
            mode,
            factor,
            lr,
            batch,
            epochs,
            patience,
            seed,
            out,
        } => {
            let ds = load_dataset(&dataset)?;
            let cfg = model_config_for(
                &ds,
                &ModelArgs {
                    d_model,
                    heads,
                    stacks,
                    blocks,
                    factor,
                    mode: mode.into(),
                    seed,
                },
            );
            let tc = TrainConfig {
                lr,
                batch_size: batch,
                max_epochs: epochs,
                patience,
                seed,
                ..TrainConfig::default()
            };
            let (weights, history) = train(ds.train(), ds.val(), &cfg, &tc)?;
            for e in &history.epochs {
                println!(
                    "epoch={} train_loss={:.6} val_loss={:.6}",
                    e.epoch, e.train_loss, e.val_loss
                );
            }
            println!("best_epoch={}", history.best_epoch);
            println!("best_val_loss={:.6}", history.best_val_loss);
            save_checkpoint(&out, &cfg, &weights)?;
            println!("checkpoint={}", out.display());
            Ok(())
        }
        Command::Eval { model, dataset, split } => {
            let (cfg, weights) = load_checkpoint::<f32>(&model)?;
            let ds = load_dataset(&dataset)?;
            if ds.header.grid != cfg.grid {
                return Err(Error::Config(format!(
                    "dataset grid {:?} does not match checkpoint grid {:?}",
                    ds.header.grid, cfg.grid
                )));
            }
            let samples = match split {
                SplitArg::Val => ds.val(),
                SplitArg::Test => ds.test(),
            };
            let report = evaluate(&weights, &cfg, samples)?;
            print_report(&report, split);
            Ok(())
        }
        Command::Heatmap { model, dataset, event, out } => {
            let (cfg, weights) = load_checkpoint::<f32>(&model)?;
            let ds = load_dataset(&dataset)?;
            let sample = find_sample(&ds, event)?;
            let x = sample_features::<f32>(sample, &cfg)?;
            let (lx, ly) = forward(&x, None, &weights, &cfg)?;
            let h = heatmap(&lx, &ly, &cfg.zone_grid())?;
            write_heatmap_csv(&out, &h)?;
            println!("event={event}");
            let arg = h.argmax();
            println!("argmax_zx={} argmax_zy={}", arg.zx, arg.zy);
            println!("heatmap={}", out.display());
            Ok(())
        }
        Command::Counterfactual { model, dataset, event, entity, dx, dy, out } => {
            let (cfg, weights) = load_checkpoint::<f32>(&model)?;
            let ds = load_dataset(&dataset)?;
            let sample = find_sample(&ds, event)?;
            let (orig, pert, div) = counterfactual_diff(&weights, &cfg, sample, entity, (dx, dy))?;
            let mut csv = String::from("zx,zy,original,perturbed\n");
            for zx in 0..orig.nx {
                for zy in 0..orig.ny {
                    let i = zx * orig.ny + zy;
                    csv.push_str(&format!("{zx},{zy},{},{}\n", orig.probs[i], pert.probs[i]));
                }
            }
            std::fs::write(&out, csv)?;
            let (a, b) = (orig.argmax(), pert.argmax());
            println!("event={event} entity={entity} dx={dx} dy={dy}");
            println!("js_divergence={div}");
            println!("argmax_original={},{} argmax_perturbed={},{}", a.zx, a.zy, b.zx, b.zy);
            println!("csv={}", out.display());
            Ok(())
        }
        Command::BenchAttention { lengths, factor, seed } => {
            bench_attention(&lengths, factor, seed)
        }
    }
}

fn write_heatmap_csv(path: &std::path::Path, h: &Heatmap) -> Result<()> {
    let mut out = String::new();
    for zx in 0..h.nx {
        let row: Vec<String> = (0..h.ny).map(|zy| h.probs[zx * h.ny + zy].to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn print_report(r: &EvalReport, split: SplitArg) {
    let split = match split {
        SplitArg::Val => "val",
        SplitArg::Test => "test",
    };
    println!("evaluation on {split} split ({} samples)", r.n);
    println!("mean cross-entropy: {:.4}", r.mean_cel);
    println!();
    println!("{:<8} {:>8} {:>8} {:>8}", "metric", "x", "y", "joint");
    println!("{:<8} {:>8.4} {:>8.4} {:>8.4}", "top-1", r.top1_x, r.top1_y, r.top1_joint);
    println!("{:<8} {:>8.4} {:>8.4} {:>8.4}", "top-3", r.top3_x, r.top3_y, r.top3_joint);
    println!("{:<8} {:>8.4} {:>8.4} {:>8.4}", "top-5", r.top5_x, r.top5_y, r.top5_joint);
    println!();
    println!("split={split}");
    println!("n={}", r.n);
    println!("mean_cel={}", r.mean_cel);
    println!("top1_x={}", r.top1_x);
    println!("top3_x={}", r.top3_x);
    println!("top5_x={}", r.top5_x);
    println!("top1_y={}", r.top1_y);
    println!("top3_y={}", r.top3_y);
    println!("top5_y={}", r.top5_y);
    println!("top1_joint={}", r.top1_joint);
    println!("top3_joint={}", r.top3_joint);
    println!("top5_joint={}", r.top5_joint);
}

fn bench_attention(lengths: &[usize], factor: usize, seed: u64) -> Result<()> {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::time::Instant;

    if lengths.is_empty() {
        return Err(Error::Usage("no lengths given".into()));
    }
    let d = 64;
    println!("length,canonical_dots,canonical_us,probsparse_dots,probsparse_us,sample_budget");
    for &l in lengths {
        if l < 2 {
            return Err(Error::Usage(format!("length {l} too short")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ l as u64);
        let n = l * d;
        let q: Vec<f32> = (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        let k: Vec<f32> = (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        let v: Vec<f32> = (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect();

        let t0 = Instant::now();
        let can = counted::canonical(&q, &k, &v, l, d);
        let t_can = t0.elapsed().as_micros();
        let t0 = Instant::now();
        let ps = counted::probsparse(&q, &k, &v, l, d, factor, seed);
        let t_ps = t0.elapsed().as_micros();
        println!(
            "{l},{},{t_can},{},{t_ps},{}",
            can.dot_products,
            ps.dot_products,
            sample_budget(l, factor)
        );
    }
    Ok(())
}
