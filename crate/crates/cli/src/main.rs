//! `stocs`: check, explore, solve and simulate StocS models.

mod failure;
mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use stocs_core::bikeshare::{self, BikeShareConfig, Regime};
use stocs_core::ctmc::build_ctmc;
use stocs_core::measure::Measure;
use stocs_core::model::Model;
use stocs_core::rates::RateConfig;
use stocs_core::report;
use stocs_core::semantics::Semantics;
use stocs_core::sim::{replicate, SimOptions, Summary};
use stocs_core::syntax::{check_model, parse_model, Severity};

use failure::Failure;
use manifest::Manifest;

#[derive(Parser)]
#[command(name = "stocs", version, about = "Interpreter and stochastic analysis engine for StocS models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and statically check a model and its rate configuration.
    Check {
        model: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Build the reachable state space and write states.csv and transitions.csv.
    States {
        #[command(flatten)]
        input: ModelArgs,
        #[arg(long, default_value_t = 100_000)]
        max_states: usize,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// State probabilities at time T by uniformization.
    Transient {
        #[command(flatten)]
        input: ModelArgs,
        #[arg(long = "t")]
        time: f64,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 100_000)]
        max_states: usize,
        /// Expected value of a measure under the transient distribution (repeatable).
        #[arg(long = "measure")]
        measures: Vec<String>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Replicated stochastic simulation.
    Simulate {
        #[command(flatten)]
        input: ModelArgs,
        #[arg(long)]
        t_end: f64,
        #[command(flatten)]
        run: RunArgs,
        /// `name=fn(args)`, e.g. `done=count(role == "r")` (repeatable).
        #[arg(long = "measure")]
        measures: Vec<String>,
        /// Number of observation intervals between 0 and t_end.
        #[arg(long, default_value_t = 100)]
        grid: usize,
        /// Also write one trace_<r>.csv per replication.
        #[arg(long)]
        traces: bool,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Generate and simulate the bike-sharing scenario.
    Bikeshare {
        /// Grid size as WIDTHxHEIGHT.
        #[arg(long, default_value = "4x4", value_parser = parse_grid)]
        grid: (usize, usize),
        #[arg(long, default_value_t = 40)]
        users: usize,
        /// Initial available bikes per station.
        #[arg(long, default_value_t = 5)]
        bikes: i64,
        /// Initial free slots per station.
        #[arg(long, default_value_t = 5)]
        slots: i64,
        #[arg(long, default_value = "both", value_parser = ["resource", "constant", "both"])]
        mode: String,
        /// Full scenario as JSON; overrides the size flags.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 100.0)]
        t_end: f64,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 200)]
        steps: usize,
        #[arg(long, default_value = "bikeshare-out")]
        out_dir: PathBuf,
    },
}

#[derive(Args)]
struct ModelArgs {
    model: PathBuf,
    /// Rate configuration; overrides the model's `config` declaration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "act-or")]
    semantics: Semantics,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value_t = 20)]
    replications: usize,
    /// Base seed; replication r uses seed + r.
    #[arg(long, env = "STOCS_SEED", default_value_t = 0)]
    seed: u64,
    /// Worker threads for replications.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or("expected WIDTHxHEIGHT")?;
    let w: usize = w.trim().parse().map_err(|e| format!("width: {e}"))?;
    let h: usize = h.trim().parse().map_err(|e| format!("height: {e}"))?;
    if w == 0 || h == 0 {
        return Err("grid dimensions must be positive".into());
    }
    Ok((w, h))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Check { model, config } => check(&model, config.as_deref()),
        Command::States {
            input,
            max_states,
            out_dir,
        } => states(&input, max_states, &out_dir),
        Command::Transient {
            input,
            time,
            tol,
            max_states,
            measures,
            out_dir,
        } => transient(&input, time, tol, max_states, &measures, &out_dir),
        Command::Simulate {
            input,
            t_end,
            run,
            measures,
            grid,
            traces,
            out_dir,
        } => simulate(&input, t_end, &run, &measures, grid, traces, &out_dir),
        Command::Bikeshare {
            grid,
            users,
            bikes,
            slots,
            mode,
            scenario,
            t_end,
            run,
            steps,
            out_dir,
        } => {
            let base = match scenario {
                Some(p) => read_scenario(&p),
                None => Ok(BikeShareConfig::grid(grid.0, grid.1, users, bikes, slots, Regime::Resource)),
            };
            base.and_then(|base| bikeshare_cmd(base, &mode, t_end, &run, steps, &out_dir))
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            f.exit()
        }
    }
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

struct Loaded {
    model: Model,
    text: String,
    config: Option<PathBuf>,
}

fn read_config(path: &Path) -> Result<RateConfig, Failure> {
    RateConfig::from_file(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn load(path: &Path, config: Option<&Path>) -> Result<Loaded, Failure> {
    let name = display(path);
    let text = fs::read_to_string(path).map_err(|e| Failure::Other(format!("{name}: {e}")))?;
    let file = parse_model(&text).map_err(|e| Failure::parse_error(&name, &e))?;
    let config = config_path(path, config, file.config.as_deref());
    let rates = config.as_deref().map(read_config).transpose()?;
    let model = Model::from_file(file, rates).map_err(|e| Failure::model(&name, e))?;
    Ok(Loaded { model, text, config })
}

fn config_path(model: &Path, flag: Option<&Path>, declared: Option<&str>) -> Option<PathBuf> {
    match (flag, declared) {
        (Some(c), _) => Some(c.to_path_buf()),
        (None, Some(c)) => Some(model.parent().unwrap_or(Path::new(".")).join(c)),
        (None, None) => None,
    }
}

fn start(command: &str, out_dir: &Path, loaded: &Loaded, input: &ModelArgs) -> Manifest {
    let mut m = Manifest::start(command, out_dir);
    m.inputs(
        Some(&display(&input.model)),
        loaded.text.as_bytes(),
        loaded.config.as_deref().map(display).as_deref(),
        &loaded.model.rates.to_json(),
    );
    m.set("semantics", json!(input.semantics.describe()));
    m
}

fn parse_measures(specs: &[String]) -> Result<Vec<Measure>, Failure> {
    specs
        .iter()
        .map(|s| Measure::parse(s).map_err(|e| Failure::Parse(format!("measure `{s}`: {e}"))))
        .collect()
}

fn check(path: &Path, config: Option<&Path>) -> Result<(), Failure> {
    let name = display(path);
    let text = fs::read_to_string(path).map_err(|e| Failure::Other(format!("{name}: {e}")))?;
    let file = parse_model(&text).map_err(|e| Failure::parse_error(&name, &e))?;
    let diags = check_model(&file);
    for d in &diags {
        eprintln!("{}", d.render(&name));
    }
    let errors = diags.iter().filter(|d| d.severity == Severity::Error).count();
    if errors > 0 {
        return Err(Failure::Semantic(format!("{name}: {errors} error(s)")));
    }
    let config = config_path(path, config, file.config.as_deref());
    let rates = config.as_deref().map(read_config).transpose()?;
    let model = Model::from_file(file, rates).map_err(|e| Failure::model(&name, e))?;
    println!(
        "{name}: ok ({} components, {} definitions{})",
        model.initial.len(),
        model.defs.len(),
        match &config {
            Some(c) => format!(", config {}", c.display()),
            None => String::new(),
        }
    );
    Ok(())
}

fn states(input: &ModelArgs, max_states: usize, out_dir: &Path) -> Result<(), Failure> {
    let loaded = load(&input.model, input.config.as_deref())?;
    let mut manifest = start("states", out_dir, &loaded, input);
    manifest.set("max_states", json!(max_states));
    let ctx = loaded.model.context(input.semantics);
    let chain = build_ctmc(&loaded.model.initial, &ctx, max_states)?;
    manifest.write("states.csv", &report::states_csv(&chain))?;
    manifest.write("transitions.csv", &report::transitions_csv(&chain))?;
    manifest.set("states", json!(chain.len()));
    manifest.set("transitions", json!(chain.transition_count()));
    manifest.finish("states.manifest.json")?;
    let absorbing = (0..chain.len()).filter(|&i| chain.is_absorbing(i)).count();
    println!(
        "{} states, {} transitions, {absorbing} absorbing ({})",
        chain.len(),
        chain.transition_count(),
        input.semantics
    );
    Ok(())
}

fn transient(
    input: &ModelArgs,
    time: f64,
    tol: f64,
    max_states: usize,
    measure_specs: &[String],
    out_dir: &Path,
) -> Result<(), Failure> {
    let measures = parse_measures(measure_specs)?;
    let loaded = load(&input.model, input.config.as_deref())?;
    let mut manifest = start("transient", out_dir, &loaded, input);
    manifest.set("t", json!(time)).set("tol", json!(tol)).set("max_states", json!(max_states));
    let ctx = loaded.model.context(input.semantics);
    let chain = build_ctmc(&loaded.model.initial, &ctx, max_states)?;
    let probs = chain.transient(time, tol)?;
    manifest.write("transient.csv", &report::transient_csv(&chain, &probs))?;
    let mut expectations = serde_json::Map::new();
    println!("{} states, total probability {:.12}", chain.len(), probs.iter().sum::<f64>());
    for m in &measures {
        let e: f64 = chain
            .states
            .iter()
            .zip(&probs)
            .map(|(s, p)| p * m.evaluate_system(s))
            .sum();
        println!("E[{}] = {e}", m.name);
        expectations.insert(m.name.clone(), json!(e));
    }
    manifest.set("expectations", expectations.into());
    manifest.finish("transient.manifest.json")?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    input: &ModelArgs,
    t_end: f64,
    run: &RunArgs,
    measure_specs: &[String],
    steps: usize,
    traces: bool,
    out_dir: &Path,
) -> Result<(), Failure> {
    let measures = parse_measures(measure_specs)?;
    let loaded = load(&input.model, input.config.as_deref())?;
    let mut manifest = start("simulate", out_dir, &loaded, input);
    manifest
        .set("seed", json!(run.seed))
        .set("replications", json!(run.replications))
        .set("parallel", json!(run.parallel))
        .set("t_end", json!(t_end))
        .set("grid", json!(steps))
        .set("measures", json!(measures.iter().map(ToString::to_string).collect::<Vec<_>>()));
    let ctx = loaded.model.context(input.semantics);
    let opts = SimOptions::uniform(t_end, steps);
    let (summary, runs) = replicate(
        &loaded.model.initial,
        &ctx,
        &opts,
        &measures,
        run.seed,
        run.replications,
        run.parallel,
    )?;
    manifest.write("summary.csv", &report::summary_csv(&summary))?;
    if traces {
        let names: Vec<String> = measures.iter().map(|m| m.name.clone()).collect();
        for (r, t) in runs.iter().enumerate() {
            manifest.write(&format!("trace_{r}.csv"), &report::trace_csv(&opts.grid, &names, t))?;
        }
    }
    manifest.set("deadlocked", json!(summary.deadlocked));
    manifest.finish("simulate.manifest.json")?;
    print_final(&summary);
    Ok(())
}

fn print_final(summary: &Summary) {
    let last = summary.grid.len() - 1;
    println!(
        "{} replications to t={}; {} deadlocked",
        summary.replications, summary.grid[last], summary.deadlocked
    );
    for (m, name) in summary.measures.iter().enumerate() {
        println!(
            "  {name} = {:.6} +- {:.6}",
            summary.mean[last][m], summary.ci[last][m]
        );
    }
}

fn read_scenario(path: &Path) -> Result<BikeShareConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Other(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

/// Trapezoidal time average over the observation grid.
fn time_average(grid: &[f64], values: impl Iterator<Item = f64>) -> f64 {
    let values: Vec<f64> = values.collect();
    let span = grid[grid.len() - 1] - grid[0];
    if span <= 0.0 {
        return values[0];
    }
    let area: f64 = grid
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| (t[1] - t[0]) * (v[0] + v[1]) / 2.0)
        .sum();
    area / span
}

fn bikeshare_cmd(
    base: BikeShareConfig,
    mode: &str,
    t_end: f64,
    run: &RunArgs,
    steps: usize,
    out_dir: &Path,
) -> Result<(), Failure> {
    let regimes = match mode {
        "resource" => vec![Regime::Resource],
        "constant" => vec![Regime::Constant],
        _ => vec![Regime::Resource, Regime::Constant],
    };
    let mut rows = String::from("regime,time_avg_mean_bikes,time_avg_stddev_bikes,final_mean_bikes,final_stddev_bikes\n");
    let mut top = Manifest::start("bikeshare", out_dir);
    top.set("seed", json!(run.seed))
        .set("replications", json!(run.replications))
        .set("parallel", json!(run.parallel))
        .set("t_end", json!(t_end))
        .set("grid", json!(steps));
    for regime in regimes {
        let cfg = BikeShareConfig { regime, ..base.clone() };
        let (model, rates) = bikeshare::generate(&cfg).map_err(|e| Failure::model("<bikeshare>", e))?;
        let dir = out_dir.join(regime.to_string());
        let text = cfg.model_text();
        let config_json = rates.to_json();
        let mut manifest = Manifest::start("bikeshare", &dir);
        manifest.inputs(Some("model.stocs"), text.as_bytes(), Some("rates.json"), &config_json);
        manifest
            .set("semantics", json!(Semantics::ActOr.describe()))
            .set("regime", json!(regime.to_string()))
            .set("seed", json!(run.seed))
            .set("replications", json!(run.replications))
            .set("parallel", json!(run.parallel))
            .set("t_end", json!(t_end))
            .set("grid", json!(steps));
        manifest.write("model.stocs", &text)?;
        manifest.write("rates.json", &(config_json + "\n"))?;
        let scenario = serde_json::to_string_pretty(&cfg).expect("serializable");
        manifest.write("scenario.json", &(scenario + "\n"))?;
        let measures = bikeshare::imbalance_measures(&cfg);
        let opts = SimOptions::uniform(t_end, steps);
        let ctx = model.context(Semantics::ActOr);
        let (summary, _) = replicate(
            &model.initial,
            &ctx,
            &opts,
            &measures,
            run.seed,
            run.replications,
            run.parallel,
        )?;
        manifest.write("summary.csv", &report::summary_csv(&summary))?;
        manifest.finish("bikeshare.manifest.json")?;

        let column = |name: &str| summary.measures.iter().position(|m| m == name).expect("measure present");
        let (mean, sd) = (column("mean_bikes"), column("stddev_bikes"));
        let last = summary.grid.len() - 1;
        let avg_mean = time_average(&summary.grid, summary.mean.iter().map(|row| row[mean]));
        let avg_sd = time_average(&summary.grid, summary.mean.iter().map(|row| row[sd]));
        rows.push_str(&format!(
            "{regime},{avg_mean},{avg_sd},{},{}\n",
            summary.mean[last][mean], summary.mean[last][sd]
        ));
        println!(
            "{regime}: time-averaged mean bikes {avg_mean:.3}, stddev across stations {avg_sd:.3} ({} replications, t_end {t_end})",
            summary.replications
        );
    }
    top.write("regimes.csv", &rows)?;
    top.finish("bikeshare.manifest.json")?;
    Ok(())
}
