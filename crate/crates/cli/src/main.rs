use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;
use wellclear::env::SimConfig;
use wellclear::eval::{batch_evaluate, export, run_scenario, write_scenario_log};
use wellclear::policy::{load_model, PolicyModel};
use wellclear::ppo::{train, TrainConfig, Trainer};
use wellclear::runner::{generate_trajectory, serve, AvoidanceRequest, RunnerConfig};
use wellclear::scenario::Scenario;
use wellclear::Error;

/// Exit codes for `serve` startup failures.
const EXIT_USAGE: u8 = 2;
const EXIT_MODEL: u8 = 3;
const EXIT_CONFIG: u8 = 4;
const EXIT_IO: u8 = 5;

#[derive(Parser)]
#[command(name = "wellclear", version, about = "Learned remain-well-clear avoidance")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy with PPO.
    Train {
        /// Training config (JSON). Defaults apply to missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Environment config (JSON).
        #[arg(long)]
        sim: Option<PathBuf>,
        /// Start from this model instead of a fresh one.
        #[arg(long)]
        init: Option<PathBuf>,
        /// Receives metrics.csv, checkpoints and model.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte-Carlo evaluation over freshly sampled encounters.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        sim: Option<PathBuf>,
        #[arg(short, long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 1_000_000)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fly scenario files and write per-second logs.
    Scenarios {
        #[arg(long, required_unless_present = "write_canned")]
        model: Option<PathBuf>,
        /// Runner config (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Scenario files; the four canned encounters when omitted.
        files: Vec<PathBuf>,
        /// Write the canned scenario files into `out` and exit.
        #[arg(long)]
        write_canned: bool,
    },
    /// Answer newline-delimited JSON requests.
    Serve {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Request stream; stdin when omitted.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Response stream; stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Generate one trajectory for a request file.
    Generate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        request: PathBuf,
    },
}

fn read_json<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, Error> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            Ok(serde_json::from_str(&text)?)
        }
    }
}

fn runner_config(path: Option<&Path>) -> Result<RunnerConfig, Error> {
    let cfg: RunnerConfig = read_json(path)?;
    cfg.sim.validate()?;
    Ok(cfg)
}

fn run_train(config: Option<&Path>, sim: Option<&Path>, init: Option<&Path>, out: &Path) -> Result<(), Error> {
    let cfg = match config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    let sim: SimConfig = read_json(sim)?;
    let model = match init {
        Some(p) => load_model(p)?,
        None => Trainer::initial_model(&sim, &cfg),
    };
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let path = out.join("train_config.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg)? + "\n").map_err(|e| Error::io(&path, e))?;
    let (_, history) = train(&sim, model, &cfg, Some(out))?;
    if let Some(last) = history.last() {
        eprintln!(
            "{} updates, {} steps, success {:.2}, violation {:.2}",
            last.update, last.timestep, last.success_rate, last.violation_rate
        );
    }
    Ok(())
}

fn run_eval(model: &Path, sim: Option<&Path>, n: usize, seed: u64, out: &Path) -> Result<(), Error> {
    let model = load_model(model)?;
    let sim: SimConfig = read_json(sim)?;
    let report = batch_evaluate(&model, &sim, n, seed)?;
    export(&report.summary, &report.records, out)?;
    let s = &report.summary;
    println!(
        "n={} success={:.3} violation={:.3} timeout={:.3} out_of_bounds={:.3} mean_reward={:.2}",
        s.n, s.success_rate, s.violation_rate, s.timeout_rate, s.out_of_bounds_rate, s.mean_reward
    );
    Ok(())
}

fn run_scenarios(model: Option<&Path>, config: Option<&Path>, out: &Path, files: &[PathBuf], write_canned: bool) -> Result<(), Error> {
    if write_canned {
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        for s in Scenario::canned() {
            s.save(out.join(format!("{}.json", s.name)))?;
        }
        return Ok(());
    }
    let model = load_model(model.expect("required by clap"))?;
    let config = runner_config(config)?;
    let scenarios = if files.is_empty() {
        Scenario::canned()
    } else {
        files.iter().map(Scenario::load).collect::<Result<_, _>>()?
    };
    for s in &scenarios {
        let log = run_scenario(s, &model, &config)?;
        write_scenario_log(&log, out)?;
        println!("{}: {} min_separation={:.1}", log.name, log.outcome.as_str(), log.min_separation);
    }
    Ok(())
}

fn run_generate(model: &Path, config: Option<&Path>, request: &Path) -> Result<(), Error> {
    let model = load_model(model)?;
    let config = runner_config(config)?;
    let text = fs::read_to_string(request).map_err(|e| Error::io(request, e))?;
    let request: AvoidanceRequest = serde_json::from_str(&text)?;
    let trajectory = generate_trajectory(&request, &model, &config)?;
    println!("{}", serde_json::to_string_pretty(&json!({ "request_id": request.request_id, "trajectory": trajectory }))?);
    Ok(())
}

fn run_serve(model: &Path, config: Option<&Path>, input: Option<&Path>, output: Option<&Path>) -> ExitCode {
    let fail = |code: u8, msg: String| {
        eprintln!("wellclear serve: {msg}");
        ExitCode::from(code)
    };
    let model: PolicyModel = match load_model(model) {
        Ok(m) => m,
        Err(e) => return fail(EXIT_MODEL, e.to_string()),
    };
    let config = match runner_config(config) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_CONFIG, e.to_string()),
    };
    let reader: Box<dyn BufRead> = match input {
        None => Box::new(io::stdin().lock()),
        Some(p) => match File::open(p) {
            Ok(f) => Box::new(BufReader::new(f)),
            Err(e) => return fail(EXIT_IO, format!("{}: {e}", p.display())),
        },
    };
    let writer: Box<dyn Write> = match output {
        None => Box::new(io::stdout().lock()),
        Some(p) => match File::create(p) {
            Ok(f) => Box::new(BufWriter::new(f)),
            Err(e) => return fail(EXIT_IO, format!("{}: {e}", p.display())),
        },
    };
    match serve(&model, &config, reader, writer) {
        Ok(stats) => {
            eprintln!("{} requests, {} errors", stats.requests, stats.errors);
            ExitCode::SUCCESS
        }
        Err(e) => fail(EXIT_IO, e.to_string()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Train { config, sim, init, out } => run_train(config.as_deref(), sim.as_deref(), init.as_deref(), out),
        Command::Eval { model, sim, n, seed, out } => run_eval(model, sim.as_deref(), *n, *seed, out),
        Command::Scenarios { model, config, out, files, write_canned } => {
            run_scenarios(model.as_deref(), config.as_deref(), out, files, *write_canned)
        }
        Command::Generate { model, config, request } => run_generate(model, config.as_deref(), request),
        Command::Serve { model, config, input, output } => {
            return run_serve(model, config.as_deref(), input.as_deref(), output.as_deref())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("wellclear: {e}");
            ExitCode::FAILURE
        }
    }
}
