use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sema_adam::diagnostics::LEMMA2_MIN_TRIALS;
use sema_adam::harness::{self, divergence_demo, lemma2_grid, DivergenceConfig, RunConfig};
use sema_adam::optimizer::{scaling_bounds, SecondMomentRule};
use sema_adam::{builtin_problems, Error, Result, RuleKind};

#[derive(Parser)]
#[command(
    name = "sema-adam",
    version,
    about = "Adam-family optimizers with moving-average gradient estimates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a multi-seed experiment from a JSON config.
    Run(RunArgs),
    /// Clipped stochastic linear problem under Adam with small and large momentum.
    DemoDivergence(DivergenceArgs),
    /// Monte Carlo check of the variance recursion over the β × L × noise grid.
    CheckLemma2(Lemma2Args),
    /// Print the built-in problems and their constants.
    ListProblems,
    /// Print the second-moment rules and their defaults.
    ListRules,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Replace the config's seeds (repeatable).
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    /// Write every N-th CSV row.
    #[arg(long)]
    thin: Option<u64>,
    /// Output directory for CSV traces, state snapshots and summary.json.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Count diagnostic failures instead of stopping at the first one.
    #[arg(long)]
    no_strict: bool,
}

#[derive(Args)]
struct DivergenceArgs {
    /// First seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of consecutive seeds.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    #[arg(long, default_value_t = 0.0)]
    momentum_small: f64,
    #[arg(long, default_value_t = 0.99)]
    momentum_large: f64,
    #[arg(long, default_value_t = 50_000)]
    steps: u64,
    /// Write the reports as JSON to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Lemma2Args {
    #[arg(long, default_value_t = 100_000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the grid results as JSON to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::DemoDivergence(a) => cmd_divergence(a),
        Command::CheckLemma2(a) => cmd_lemma2(a),
        Command::ListProblems => cmd_list_problems(),
        Command::ListRules => cmd_list_rules(),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Diagnostic { record, .. } = &e {
                if let Ok(json) = serde_json::to_string(record) {
                    eprintln!("record: {json}");
                }
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn cmd_run(a: RunArgs) -> Result<ExitCode> {
    let text = fs::read_to_string(&a.config)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", a.config.display())))?;
    let mut config = RunConfig::from_json(&text)?;
    if !a.seeds.is_empty() {
        config.seeds = a.seeds;
    }
    if let Some(thin) = a.thin {
        config.thin = thin;
    }
    if a.out.is_some() {
        config.out = a.out;
    }
    let summary = harness::run(&config, !a.no_strict)?;

    println!("T = {}", summary.horizon);
    if let Some(b) = &summary.budget {
        println!("beta = {:e}, eta = {:e}", b.beta, b.eta);
    }
    if let Some(b) = &summary.scaling_bounds {
        println!("c_l = {}, c_u = {}", b.c_l, b.c_u);
    }
    println!(
        "run_avg_grad  = {:.6e} ± {:.2e}",
        summary.run_avg_grad.mean, summary.run_avg_grad.stderr
    );
    println!(
        "run_avg_delta = {:.6e} ± {:.2e}",
        summary.run_avg_delta.mean, summary.run_avg_delta.stderr
    );
    let d = &summary.diagnostics;
    println!(
        "descent check: {} passed, {} skipped, {} failed; scaling witness: {}/{} failed",
        d.lemma3_passed, d.lemma3_skipped, d.lemma3_failed, d.witness_failed, d.witness_checked
    );
    println!("wall time {:.2}s", summary.wall_time_s);
    if let Some(dir) = &config.out {
        println!("wrote {}", dir.display());
    }
    Ok(if summary.diagnostics_passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    })
}

fn cmd_divergence(a: DivergenceArgs) -> Result<ExitCode> {
    let cfg = DivergenceConfig {
        momentum_small: a.momentum_small,
        momentum_large: a.momentum_large,
        steps: a.steps,
        ..Default::default()
    };
    println!(
        "gradient {} w.p. {}, -1 otherwise; expected gradient {:.3}",
        cfg.large,
        cfg.p,
        cfg.expected_gradient()
    );
    println!(
        "seed  x_final(momentum={})  x_final(momentum={})",
        cfg.momentum_small, cfg.momentum_large
    );
    let mut reports = Vec::new();
    for seed in a.seed..a.seed + a.seeds {
        let r = divergence_demo(&cfg, seed)?;
        println!(
            "{:>4}  {:>+22.6}  {:>+22.6}",
            r.seed, r.final_small, r.final_large
        );
        reports.push(r);
    }
    if let Some(path) = a.out {
        fs::write(path, serde_json::to_string_pretty(&reports)?)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_lemma2(a: Lemma2Args) -> Result<ExitCode> {
    if a.trials < LEMMA2_MIN_TRIALS {
        return Err(Error::Config(format!(
            "trials must be >= {LEMMA2_MIN_TRIALS}"
        )));
    }
    let cells = lemma2_grid(a.trials, a.seed)?;
    println!(
        "{:>6} {:>5} {:>6} {:>14} {:>14} {:>10}  ok",
        "beta", "L", "noise", "lhs", "rhs", "se"
    );
    for c in &cells {
        let r = &c.report;
        println!(
            "{:>6} {:>5} {:>6} {:>14.6e} {:>14.6e} {:>10.2e}  {}",
            c.beta,
            c.lipschitz,
            c.noise_var,
            r.lhs,
            r.rhs,
            r.stderr,
            if r.pass { "yes" } else { "NO" }
        );
    }
    if let Some(path) = a.out {
        fs::write(path, serde_json::to_string_pretty(&cells)?)?;
    }
    Ok(if cells.iter().all(|c| c.report.pass) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    })
}

fn cmd_list_problems() -> Result<ExitCode> {
    println!(
        "{:<12} {:>4} {:>10} {:>14} {:>10}",
        "name", "dim", "L_F", "F_*", "|grad|_inf"
    );
    for p in builtin_problems() {
        let bound = p
            .grad_bound_inf()
            .map_or_else(|| "none".to_string(), |g| format!("{g:.4}"));
        println!(
            "{:<12} {:>4} {:>10.4} {:>14.6e} {:>10}",
            p.name(),
            p.dim(),
            p.lipschitz(),
            p.f_star(),
            bound
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_list_rules() -> Result<ExitCode> {
    // Bounds shown for a unit-bounded oracle in 10 dimensions.
    let (g_inf, g_two) = (1.0, 10f64.sqrt());
    println!(
        "{:<10} {:>6} {:>4} {:>16}  (c_l, c_u) at G_inf=1, G_2=sqrt(10)",
        "name", "beta2", "g0", "clip"
    );
    for kind in RuleKind::ALL {
        let r = SecondMomentRule::default_for(kind);
        let clip = if kind == RuleKind::Adabound {
            format!("[{}, {}]", r.clip_lo, r.clip_hi)
        } else {
            "-".to_string()
        };
        let bounds = scaling_bounds(&r, Some(g_inf), Some(g_two)).map_or_else(
            |e| e.to_string(),
            |b| format!("({:.4}, {:.4})", b.c_l, b.c_u),
        );
        println!(
            "{:<10} {:>6} {:>4} {:>16}  {}",
            kind.name(),
            r.beta2,
            r.g0,
            clip,
            bounds
        );
    }
    Ok(ExitCode::SUCCESS)
}
