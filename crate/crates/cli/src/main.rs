use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use asymmap::attack::ObjectiveKind;
use asymmap::oracle::OracleKind;
use asymmap::scene::RoadKind;
use asymmap_cli::config::{RunConfig, Strategy};
use asymmap_cli::error::{CliError, Result};
use asymmap_cli::pipeline::{cmd_attack, cmd_classify, cmd_eval, cmd_gen, cmd_replay, Ctx};

#[derive(Parser)]
#[command(name = "asymmap", version, about = "Asymmetry-targeted attacks on online HD-map construction")]
struct Cli {
    /// Run config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run directory; overrides `out` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Scenes processed in parallel.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    oracle: Option<OracleArg>,
    #[arg(long, global = true, value_enum)]
    vlm: Option<Switch>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleArg {
    Surrogate,
    External,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a labeled scene suite.
    Gen {
        /// Scenes of one road kind, e.g. `fork=10`; replaces the config counts.
        #[arg(long = "count", value_parser = parse_count)]
        counts: Vec<(RoadKind, usize)>,
    },
    /// Classify every scene as symmetric or asymmetric.
    Classify,
    /// Search attack configurations on the selected scenes.
    Attack {
        #[arg(long, value_parser = parse_objective)]
        objective: Option<ObjectiveKind>,
        #[arg(long, value_enum)]
        strategy: Option<Strategy>,
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Plan over clean and attacked predictions and write the report.
    Eval,
    /// Recompute the report of a finished run from its artifacts.
    Replay { run_dir: PathBuf },
}

fn parse_count(s: &str) -> std::result::Result<(RoadKind, usize), String> {
    let (k, n) = s.split_once('=').ok_or("expected KIND=N")?;
    let kind: RoadKind = k.parse().map_err(|e: asymmap::scene::SceneError| e.to_string())?;
    Ok((kind, n.parse().map_err(|_| format!("bad count '{n}'"))?))
}

fn parse_objective(s: &str) -> std::result::Result<ObjectiveKind, String> {
    s.parse().map_err(|e: asymmap::attack::AttackError| e.to_string())
}

fn config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
    }
    if let Some(o) = cli.oracle {
        cfg.oracle.kind = match o {
            OracleArg::Surrogate => OracleKind::Surrogate,
            OracleArg::External => OracleKind::External,
        };
    }
    if let Some(v) = cli.vlm {
        cfg.vlm.enabled = matches!(v, Switch::On);
    }
    match &cli.cmd {
        Cmd::Gen { counts } if !counts.is_empty() => cfg.suite.counts = counts.iter().copied().collect(),
        Cmd::Attack { objective, strategy, budget } => {
            if let Some(o) = objective {
                cfg.objective.kind = *o;
            }
            if let Some(s) = strategy {
                cfg.attack.strategy = *s;
            }
            if let Some(b) = budget {
                cfg.attack.budget = *b;
            }
        }
        _ => {}
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    if let Cmd::Replay { run_dir } = &cli.cmd {
        let out = cmd_replay(run_dir.clone(), cli.jobs)?;
        if !out.identical {
            return Err(CliError::Internal("replayed report differs from the stored one".into()));
        }
        println!("replay: report identical ({})", run_dir.join("replay/report.json").display());
        return Ok(());
    }
    let ctx = Ctx::new(config(&cli)?, cli.jobs)?;
    match cli.cmd {
        Cmd::Gen { .. } => {
            let index = cmd_gen(&ctx)?;
            println!("gen: {} scenes under {}", index.len(), ctx.run.path("scenes").display());
        }
        Cmd::Classify => {
            let s = cmd_classify(&ctx)?;
            let f = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.3}"));
            println!("classify: {} scenes, precision {} recall {}", s.scenes, f(s.precision), f(s.recall));
        }
        Cmd::Attack { .. } => {
            let s = cmd_attack(&ctx)?;
            let q: u64 = s.scenes.iter().map(|r| r.queries).sum();
            println!("attack: {} scenes attacked, {} skipped, {q} queries", s.scenes.len(), s.skipped.len());
        }
        Cmd::Eval => {
            let r = cmd_eval(&ctx)?;
            println!("eval: clean mAP {:.3} UGR {:.3} UPTR {:.3}", r.clean.ap.map, r.clean.ugr, r.clean.uptr);
            if let Some(a) = &r.attack {
                println!(
                    "eval: attacked mAP {:+.1} pp, UGR {:+.1} pp, UPTR {:+.1} pp",
                    a.delta_map_pp, a.delta_ugr_pp, a.delta_uptr_pp
                );
            }
        }
        Cmd::Replay { .. } => unreachable!(),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
