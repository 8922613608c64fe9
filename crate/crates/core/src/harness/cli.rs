//! Command-line interface.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{compare, simulate, Controller, PolicyController, RbcController, RunRecord};
use crate::baselines::{oracle_solve, OracleOptions, RbcConfig};
use crate::error::{Error, Result};
use crate::plant::PlantParams;
use crate::policy::PolicySet;
use crate::scenario::{build_dataset, generate_profile_with_tail, LoadProfile, SampledContext};
use crate::trainer::{bvr_ablation, train, write_ablation_csv, LossWeights, TrainConfig};

/// Exit status for bad arguments, configuration or I/O.
pub const EXIT_USAGE: i32 = 1;
/// Exit status for numeric faults in simulation or training.
pub const EXIT_NUMERIC: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "chiller-dpc",
    version,
    about = "Learned mixed-integer predictive control for multi-chiller plants"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Seed for data, initialization and load profiles.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML file with optional [plant], [train], [weights], [rbc] and [oracle] tables.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    /// 3000/1000 contexts, batch 1000 (default).
    #[arg(long, global = true, conflicts_with = "paper_scale")]
    pub desk_scale: bool,
    /// 30000/10000 contexts, batch 10000.
    #[arg(long, global = true)]
    pub paper_scale: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a policy and write its checkpoint and training log.
    Train {
        #[arg(long)]
        chillers: Option<usize>,
        #[arg(long, default_value_t = 10)]
        horizon: usize,
    },
    /// Closed-loop run of a checkpoint or of the rule-based controller.
    Simulate {
        /// `rbc` or a checkpoint path.
        #[arg(long)]
        controller: String,
        #[arg(long, default_value_t = 7)]
        days: usize,
        /// Load profile CSV; generated from the seed when absent.
        #[arg(long)]
        profile: Option<PathBuf>,
        #[arg(long)]
        chillers: Option<usize>,
    },
    /// Train and evaluate every plant size and horizon against RBC.
    Benchmark {
        #[arg(long, value_delimiter = ',', default_values_t = [2, 3])]
        chillers: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [5, 10, 15])]
        horizons: Vec<usize>,
        #[arg(long, default_value_t = 7)]
        days: usize,
    },
    /// Energy savings of one saved run relative to another.
    Compare { candidate: PathBuf, baseline: PathBuf },
    /// Exhaustive mixed-integer optimum for one context.
    Oracle {
        /// JSON-encoded context.
        #[arg(long)]
        context: PathBuf,
        #[arg(long, default_value_t = 3)]
        horizon: usize,
        #[arg(long)]
        chillers: Option<usize>,
    },
    /// Train one policy per binary-variance weight and record step responses.
    AblateBvr {
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 200.0])]
        lambdas: Vec<f64>,
        #[arg(long, default_value_t = 20)]
        horizon: usize,
    },
}

/// Tables accepted in the `--config` file. Missing tables and keys keep
/// their defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    plant: Option<toml::Table>,
    train: Option<toml::Table>,
    weights: Option<toml::Table>,
    rbc: Option<toml::Table>,
    oracle: Option<toml::Table>,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numeric() {
                EXIT_NUMERIC
            } else {
                EXIT_USAGE
            }
        }
    }
}

/// Overrides the fields of `base` with the keys present in `patch`.
fn overlay<T: Serialize + DeserializeOwned>(base: &T, patch: Option<&toml::Table>) -> Result<T> {
    let mut table = toml::Table::try_from(base).map_err(|e| Error::Config(e.to_string()))?;
    for (k, v) in patch.into_iter().flatten() {
        table.insert(k.clone(), v.clone());
    }
    Ok(table.try_into()?)
}

struct Context {
    file: ConfigFile,
    seed: u64,
    out_dir: PathBuf,
    paper_scale: bool,
}

impl Context {
    fn new(g: &GlobalArgs) -> Result<Self> {
        let file = match &g.config {
            Some(path) => toml::from_str(
                &std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
            )?,
            None => ConfigFile::default(),
        };
        Ok(Self {
            file,
            seed: g.seed.unwrap_or(0),
            out_dir: g.out_dir.clone(),
            paper_scale: g.paper_scale,
        })
    }

    fn plant(&self, chillers: Option<usize>) -> Result<PlantParams> {
        let mut p = overlay(&PlantParams::default(), self.file.plant.as_ref())?;
        if let Some(m) = chillers {
            p.num_chillers = m;
        }
        p.validate()?;
        Ok(p)
    }

    fn train_config(&self, horizon: usize) -> Result<TrainConfig> {
        let base = if self.paper_scale {
            TrainConfig::paper_scale(horizon)
        } else {
            TrainConfig::desk_scale(horizon)
        };
        let mut cfg = overlay(
            &TrainConfig {
                seed: self.seed,
                ..base
            },
            self.file.train.as_ref(),
        )?;
        cfg.horizon = horizon;
        cfg.validate()?;
        Ok(cfg)
    }

    fn weights(&self) -> Result<LossWeights> {
        let w = overlay(&LossWeights::default(), self.file.weights.as_ref())?;
        w.validate()?;
        Ok(w)
    }

    fn rbc(&self) -> Result<RbcConfig> {
        let c = overlay(&RbcConfig::default(), self.file.rbc.as_ref())?;
        c.validate()?;
        Ok(c)
    }

    fn oracle(&self) -> Result<OracleOptions> {
        overlay(
            &OracleOptions {
                seed: self.seed,
                ..OracleOptions::default()
            },
            self.file.oracle.as_ref(),
        )
    }

    fn out(&self, name: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out_dir)?;
        Ok(self.out_dir.join(name))
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let cx = Context::new(&cli.global)?;
    match &cli.command {
        Command::Train { chillers, horizon } => cmd_train(&cx, *chillers, *horizon),
        Command::Simulate {
            controller,
            days,
            profile,
            chillers,
        } => cmd_simulate(&cx, controller, *days, profile.as_deref(), *chillers),
        Command::Benchmark {
            chillers,
            horizons,
            days,
        } => cmd_benchmark(&cx, chillers, horizons, *days),
        Command::Compare { candidate, baseline } => cmd_compare(&cx, candidate, baseline),
        Command::Oracle {
            context,
            horizon,
            chillers,
        } => cmd_oracle(&cx, context, *horizon, *chillers),
        Command::AblateBvr { lambdas, horizon } => cmd_ablate(&cx, lambdas, *horizon),
    }
}

fn train_policy(cx: &Context, p: &PlantParams, horizon: usize) -> Result<(PolicySet, f64)> {
    let cfg = cx.train_config(horizon)?;
    let data = build_dataset(p, horizon, cfg.n_train, cfg.n_dev, cfg.seed)?;
    let out = train(p, &cfg, &cx.weights()?, &data)?;
    out.write_log_csv(&cx.out(&format!("train_log_m{}_n{horizon}.csv", p.num_chillers))?)?;
    if let Some(e) = out.diverged() {
        eprintln!("warning: {e}; keeping the best checkpoint");
    }
    println!(
        "M={} N={horizon}: dev loss {:.3} -> {:.3} (best epoch {}), {:.1} s",
        p.num_chillers, out.initial_dev_loss, out.best_dev_loss, out.best_epoch, out.wall_time_s
    );
    Ok((out.policy, out.wall_time_s))
}

fn cmd_train(cx: &Context, chillers: Option<usize>, horizon: usize) -> Result<()> {
    let p = cx.plant(chillers)?;
    let (policy, _) = train_policy(cx, &p, horizon)?;
    let path = cx.out(&format!("policy_m{}_n{horizon}.ckpt", p.num_chillers))?;
    policy.save(&path)?;
    println!("checkpoint: {}", path.display());
    Ok(())
}

fn load_profile(cx: &Context, path: Option<&Path>, days: usize, tail: usize, p: &PlantParams) -> Result<LoadProfile> {
    match path {
        Some(path) => LoadProfile::read_csv(path),
        None => generate_profile_with_tail(days, tail, p, cx.seed),
    }
}

fn cmd_simulate(
    cx: &Context,
    controller: &str,
    days: usize,
    profile: Option<&Path>,
    chillers: Option<usize>,
) -> Result<()> {
    let (mut ctrl, p): (Box<dyn Controller>, PlantParams) = if controller == "rbc" {
        (Box::new(RbcController::new(cx.rbc()?)?), cx.plant(chillers)?)
    } else {
        let policy = PolicySet::load(Path::new(controller))?;
        let p = cx.plant(Some(chillers.unwrap_or(policy.num_chillers)))?;
        if policy.plant_hash != p.fingerprint() {
            eprintln!("warning: checkpoint was trained on a different plant");
        }
        (Box::new(PolicyController { policy }), p)
    };
    let profile = load_profile(cx, profile, days, ctrl.horizon(), &p)?;
    let run = simulate(ctrl.as_mut(), &p, &profile, days)?;
    let dir = cx.out(&run_dir_name(&run))?;
    run.save(&dir)?;
    let m = &run.metrics;
    println!(
        "{}: EC {:.3} MWh, EC-COP {:.3}, {} switches, RCE {:.2}% -> {}",
        run.config.controller,
        m.ec_total,
        m.ec_cop,
        m.n_switches,
        m.mean_rce,
        dir.display()
    );
    Ok(())
}

fn run_dir_name(run: &RunRecord) -> String {
    let name: String = run
        .config
        .controller
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    format!("run_{}", name.trim_matches('_'))
}

/// One row of the benchmark table.
#[derive(Debug, Serialize)]
struct BenchRow {
    controller: String,
    m: usize,
    n: Option<usize>,
    ec_mwh: f64,
    savings_pct: f64,
    cop: f64,
    switches: usize,
    rce_pct: f64,
    mit_s: Option<f64>,
    tt_s: Option<f64>,
    ntp: Option<usize>,
}

fn cmd_benchmark(cx: &Context, chillers: &[usize], horizons: &[usize], days: usize) -> Result<()> {
    let mut rows = Vec::new();
    let max_n = horizons.iter().copied().max().unwrap_or(0);
    for &m in chillers {
        let p = cx.plant(Some(m))?;
        let profile = generate_profile_with_tail(days, max_n, &p, cx.seed)?;
        let rbc = simulate(&mut RbcController::new(cx.rbc()?)?, &p, &profile, days)?;
        rows.push(BenchRow {
            controller: "rbc".into(),
            m,
            n: None,
            ec_mwh: rbc.metrics.ec_total,
            savings_pct: 0.0,
            cop: rbc.metrics.ec_cop,
            switches: rbc.metrics.n_switches,
            rce_pct: rbc.metrics.mean_rce,
            mit_s: None,
            tt_s: None,
            ntp: None,
        });
        for &n in horizons {
            let (policy, tt) = train_policy(cx, &p, n)?;
            let ntp = policy.param_count();
            let run = simulate(&mut PolicyController { policy }, &p, &profile, days)?;
            let cmp = compare((&run.config, &run.metrics), (&rbc.config, &rbc.metrics))?;
            rows.push(BenchRow {
                controller: "mi-dpc".into(),
                m,
                n: Some(n),
                ec_mwh: run.metrics.ec_total,
                savings_pct: cmp.savings_pct,
                cop: run.metrics.ec_cop,
                switches: run.metrics.n_switches,
                rce_pct: run.metrics.mean_rce,
                mit_s: run.metrics.mit,
                tt_s: Some(tt),
                ntp: Some(ntp),
            });
        }
    }
    let path = cx.out("benchmark.csv")?;
    write_benchmark_csv(&rows, &path)?;
    println!("benchmark: {}", path.display());
    Ok(())
}

fn write_benchmark_csv(rows: &[BenchRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "Controller",
        "M",
        "N",
        "EC",
        "Savings",
        "COP",
        "switches",
        "RCE",
        "MIT",
        "TT",
        "NTP",
    ])?;
    let opt = |v: Option<String>| v.unwrap_or_default();
    for r in rows {
        w.write_record([
            r.controller.clone(),
            r.m.to_string(),
            opt(r.n.map(|v| v.to_string())),
            format!("{:.4}", r.ec_mwh),
            format!("{:.2}", r.savings_pct),
            format!("{:.3}", r.cop),
            r.switches.to_string(),
            format!("{:.3}", r.rce_pct),
            opt(r.mit_s.map(|v| format!("{v:.3e}"))),
            opt(r.tt_s.map(|v| format!("{v:.1}"))),
            opt(r.ntp.map(|v| v.to_string())),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_compare(cx: &Context, candidate: &Path, baseline: &Path) -> Result<()> {
    let a = RunRecord::load_summary(candidate)?;
    let b = RunRecord::load_summary(baseline)?;
    let cmp = compare((&a.0, &a.1), (&b.0, &b.1))?;
    cmp.write_csv(&cx.out("comparison.csv")?)?;
    cmp.write_json(&cx.out("comparison.json")?)?;
    println!("{} vs {}: savings {:.2}%", cmp.candidate, cmp.baseline, cmp.savings_pct);
    Ok(())
}

fn cmd_oracle(cx: &Context, context: &Path, horizon: usize, chillers: Option<usize>) -> Result<()> {
    let text = std::fs::read_to_string(context).map_err(|e| Error::Config(format!("{}: {e}", context.display())))?;
    let ctx: SampledContext = serde_json::from_str(&text)?;
    let p = cx.plant(Some(chillers.unwrap_or(ctx.t_s0.len())))?;
    let sol = oracle_solve(&ctx, &p, &cx.weights()?, horizon, &cx.oracle()?)?;
    let path = cx.out("oracle.json")?;
    sol.write_json(&path)?;
    println!(
        "oracle: cost {:.4} over {} sequences -> {}",
        sol.cost,
        sol.sequences_evaluated,
        path.display()
    );
    Ok(())
}

fn cmd_ablate(cx: &Context, lambdas: &[f64], horizon: usize) -> Result<()> {
    let p = cx.plant(None)?;
    let cfg = cx.train_config(horizon)?;
    let data = build_dataset(&p, horizon, cfg.n_train, cfg.n_dev, cfg.seed)?;
    let start = Instant::now();
    let runs = bvr_ablation(&p, &cfg, &cx.weights()?, lambdas, &data)?;
    let path = cx.out("bvr_ablation.csv")?;
    write_ablation_csv(&runs, &path)?;
    for r in &runs {
        println!(
            "Lambda={}: polarity distance {:.4}, {} switches",
            r.bvr_weight,
            r.response.mean_polarity_distance(),
            r.response.switches()
        );
    }
    println!("ablation ({:.1} s): {}", start.elapsed().as_secs_f64(), path.display());
    Ok(())
}
