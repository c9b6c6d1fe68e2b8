use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use pcqa_view::config::RunConfig;
use pcqa_view::imaging::{encode_depth, encode_png, ViewRow};
use pcqa_view::manifest::{read_json, read_jsonl, write_json, write_jsonl};
use pcqa_view::pipeline::{
    build_dov_all, distort_all, eval_dataset, evaluate_generated, evaluate_rank_sweep, evaluate_strategy,
    expected_pairs, generate_all_pairs, with_pool,
};
use pcqa_view::ply::{load_ply, save_ply};
use pcqa_view::serve::{serve, AppState};
use pcqa_view::store::{ladders_from_store, list_plys, load_dir};
use pcqa_view_core::cavgn::{train_cavgn, CavgnModel};
use pcqa_view_core::dov::DovRecord;
use pcqa_view_core::eval::{EvalReport, ViewStrategy};
use pcqa_view_core::geometry::{default_viewpoints, sample_candidates};
use pcqa_view_core::render::render;
use pcqa_view_core::ssvrn::{pair_count, train_ssvrn, RankPair, ScoreModel};
use pcqa_view_core::synth::synthetic_cloud;

#[derive(Parser)]
#[command(name = "pcqa-view", version, about = "Content-aware viewpoints for projection-based point cloud quality assessment")]
struct Cli {
    /// Flat key = value config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set resolution=64`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Root seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Random,
    Default,
    Generated,
    RankSweep,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic textured clouds as PLY.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        count: usize,
        #[arg(long, default_value_t = 6000)]
        points: usize,
    },
    /// Build a distortion ladder for every PLY in a directory.
    Distort {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render one face (or its whole candidate grid) to PNG and depth dumps.
    Render {
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u8).range(0..6))]
        face: u8,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate the ranking pair manifest and print pair counts.
    Pairs {
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the pairwise viewpoint ranking network.
    TrainSsvrn {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Build default-optimized viewpoint records.
    BuildDov {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the viewpoint generator on DOV records.
    TrainCavgn {
        #[arg(long)]
        dov: PathBuf,
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Correlate the baseline scorer with (pseudo-)MOS under a viewpoint strategy.
    Evaluate {
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long)]
        store: Option<PathBuf>,
        /// Ranking network, for rank-sweep.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Viewpoint generator, for generated mode.
        #[arg(long)]
        cavgn: Option<PathBuf>,
        /// CSV of `cloud_id,score`; pseudo-MOS is used without it.
        #[arg(long)]
        mos: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the annotation endpoints.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        session: PathBuf,
        #[arg(long)]
        dov: PathBuf,
        #[arg(long)]
        store: Option<PathBuf>,
    },
}

fn store_dir(store: Option<PathBuf>, cfg: &RunConfig) -> anyhow::Result<PathBuf> {
    store
        .or_else(|| cfg.work_dir.as_ref().map(|w| w.join("ladders")))
        .context("no --store given and no work_dir configured")
}

fn print_reports(reports: &[EvalReport]) {
    println!("{:<10} {:>5} {:>8} {:>8} {:>8} {:>7}", "strategy", "rank", "PLCC", "SRCC", "KRCC", "samples");
    for r in reports {
        let strategy = serde_json::to_value(r.strategy).ok().and_then(|v| v.as_str().map(String::from));
        let rank = r.rank.map_or("-".to_string(), |k| k.to_string());
        println!(
            "{:<10} {:>5} {:>8.4} {:>8.4} {:>8.4} {:>7}",
            strategy.unwrap_or_default(),
            rank,
            r.plcc,
            r.srcc,
            r.krcc,
            r.samples
        );
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_overrides(&cli.overrides)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    cfg.validate_paths()?;
    let cfg = cfg;

    match cli.command {
        Command::Synth { out, count, points } => {
            std::fs::create_dir_all(&out)?;
            for i in 0..count {
                let c = synthetic_cloud(i, cfg.seed, points);
                save_ply(&c, &out.join(format!("{}.ply", c.id())))?;
            }
            println!("wrote {count} clouds to {}", out.display());
        }
        Command::Distort { input, out } => {
            let clouds = list_plys(&input)?
                .iter()
                .map(|p| load_ply(p).with_context(|| format!("loading {}", p.display())))
                .collect::<anyhow::Result<Vec<_>>>()?;
            if clouds.is_empty() {
                anyhow::bail!("no PLY files in {}", input.display());
            }
            let ladders = with_pool(&cfg, || distort_all(&clouds, &cfg))??;
            pcqa_view::store::write_ladders(&ladders, &out)?;
            let variants: usize = ladders.iter().map(|l| l.variants.len()).sum();
            println!("wrote {} references and {variants} variants to {}", ladders.len(), out.display());
        }
        Command::Render { cloud, face, grid, out } => {
            let c = load_ply(&cloud)?;
            let base = default_viewpoints(&c.summary(), cfg.margin)?[face as usize];
            let n_v = grid.unwrap_or(1);
            let views = if n_v == 1 {
                vec![base]
            } else {
                sample_candidates(&base, n_v)?.views()
            };
            std::fs::create_dir_all(&out)?;
            let mut rows = Vec::new();
            for (j, v) in views.iter().enumerate() {
                let img = render(&c, v, &cfg.render)?;
                let stem = format!("{}_f{face}_c{j}", c.id());
                std::fs::write(out.join(format!("{stem}.png")), encode_png(&img))?;
                std::fs::write(out.join(format!("{stem}.depth")), encode_depth(&img))?;
                rows.push(ViewRow {
                    cloud_id: c.id().to_string(),
                    face_index: face,
                    candidate_index: j,
                    position: v.viewpoint,
                    direction: v.direction,
                });
            }
            write_jsonl(&out.join("viewpoints.jsonl"), &rows)?;
            println!("rendered {} views to {}", rows.len(), out.display());
        }
        Command::Pairs { store, out } => {
            if cfg.count_only {
                let s = cfg.count;
                println!("{}", pair_count(s.clouds, s.viewpoints, s.kinds, s.levels));
                return Ok(());
            }
            let out = out.context("--out is required unless count_only = true")?;
            let store = load_dir(&store_dir(store, &cfg)?)?;
            let ladders = ladders_from_store(&store, &cfg)?;
            let pairs = with_pool(&cfg, || generate_all_pairs(&ladders, &cfg))??;
            write_jsonl(&out, &pairs)?;
            let expected = expected_pairs(ladders.len(), &cfg);
            println!("expected\t{expected}");
            println!("written\t{}", pairs.len());
            println!("dropped\t{}", expected - pairs.len() as u64);
        }
        Command::TrainSsvrn { pairs, out, history } => {
            let pairs: Vec<RankPair> = read_jsonl(&pairs)?;
            let (model, hist) = train_ssvrn(&pairs, &cfg.ssvrn_hyper())?;
            write_json(&out, &model)?;
            if let Some(h) = history {
                write_json(&h, &hist)?;
            }
            if let Some(last) = hist.last() {
                println!(
                    "epochs {} train_acc {:.4} val_acc {:.4} val_loss {:.4}",
                    hist.len(),
                    last.train_accuracy,
                    last.val_accuracy,
                    last.val_loss
                );
            }
        }
        Command::BuildDov { model, store, out } => {
            let model: ScoreModel = read_json(&model)?;
            let store = load_dir(&store_dir(store, &cfg)?)?;
            let ladders = ladders_from_store(&store, &cfg)?;
            let records = with_pool(&cfg, || build_dov_all(&ladders, &model, &cfg))??;
            write_jsonl(&out, &records)?;
            println!("wrote {} records to {}", records.len(), out.display());
        }
        Command::TrainCavgn { dov, store, out, history } => {
            let records: Vec<DovRecord> = read_jsonl(&dov)?;
            let store = load_dir(&store_dir(store, &cfg)?)?;
            let (model, hist) = train_cavgn(&records, &store, &cfg.cavgn_hyper())?;
            write_json(&out, &model)?;
            if let Some(h) = history {
                write_json(&h, &hist)?;
            }
            if let Some(last) = hist.last() {
                println!("epochs {} train_loss {:.6} val_loss {:?}", hist.len(), last.train_loss, last.val_loss);
            }
        }
        Command::Evaluate { mode, store, model, cavgn, mos, out } => {
            let store = load_dir(&store_dir(store, &cfg)?)?;
            let ladders = ladders_from_store(&store, &cfg)?;
            let mos = mos.as_deref().map(pcqa_view::mos::read_mos).transpose()?;
            let data = eval_dataset(&ladders, mos.as_ref())?;
            let reports = with_pool(&cfg, || -> anyhow::Result<Vec<EvalReport>> {
                Ok(match mode {
                    Mode::Random => vec![evaluate_strategy(&data, ViewStrategy::Random, None, &cfg)?],
                    Mode::Default => vec![evaluate_strategy(&data, ViewStrategy::Default, None, &cfg)?],
                    Mode::Generated => {
                        let path = cavgn.as_deref().context("--cavgn is required for generated mode")?;
                        let m: CavgnModel = read_json(path)?;
                        vec![evaluate_generated(&data, &m, &cfg)?]
                    }
                    Mode::RankSweep => {
                        let path = model.as_deref().context("--model is required for rank-sweep")?;
                        let m: ScoreModel = read_json(path)?;
                        evaluate_rank_sweep(&data, &m, &cfg)?
                    }
                })
            })??;
            if matches!(mode, Mode::RankSweep) {
                write_json(&out, &reports)?;
            } else {
                write_json(&out, &reports[0])?;
            }
            print_reports(&reports);
        }
        Command::Serve { port, session, dov, store } => {
            let records: Vec<DovRecord> = read_jsonl(&dov)?;
            let store = load_dir(&store_dir(store, &cfg)?)?;
            let state = AppState::new(records, store, cfg.render, &session)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(serve(state, port))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

