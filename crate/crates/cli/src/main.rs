use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use sciltl::automata::{compile_minimal, Dfa};
use sciltl::formula::parse_formula;
use sciltl::harness::{self, ExperimentConfig};
use sciltl::planner::{Planner, PlannerConfig, SearchResult};
use sciltl::pomdp::{load_model, write_model, DroneProbing, LoadedModel, Pomdp};
use sciltl::product::{Product, TraceRecord};

#[derive(Parser)]
#[command(name = "sciltl", version, about = "Belief-space temporal logic planning for POMDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile the objective to a minimal DFA and report its size.
    Compile {
        #[command(flatten)]
        model: ModelArgs,
        /// Objective to compile instead of the model's own.
        #[arg(long)]
        formula: Option<String>,
        /// Directory for dfa.dot and dfa.json; DOT goes to stdout otherwise.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One search from the initial state, printing root statistics.
    Plan {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        planner: PlannerArgs,
    },
    /// Run one logged episode.
    Episode {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        planner: PlannerArgs,
        #[arg(long, default_value_t = 100)]
        horizon: usize,
        /// Episode index, selects the rng stream under the master seed.
        #[arg(long, default_value_t = 0)]
        run: usize,
        #[arg(long)]
        verbose: bool,
    },
    /// Run a batch of episodes and write CSV statistics.
    Experiment {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        planner: PlannerArgs,
        #[arg(long, default_value_t = 100)]
        horizon: usize,
        #[arg(long, default_value_t = 100)]
        runs: usize,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        #[arg(long)]
        verbose: bool,
    },
    /// Check a model file.
    Validate {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Print a model in the text format.
    Export {
        #[command(flatten)]
        model: ModelArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Builtin {
    DroneProbing,
}

#[derive(Args)]
struct ModelArgs {
    /// Model file.
    #[arg(long, conflicts_with = "builtin", required_unless_present = "builtin")]
    model: Option<PathBuf>,
    #[arg(long, value_enum)]
    builtin: Option<Builtin>,
    #[arg(long, default_value_t = 4)]
    width: usize,
    #[arg(long, default_value_t = 4)]
    height: usize,
    /// Confidence the target must be located with.
    #[arg(long, default_value_t = 0.9)]
    threshold: f64,
    /// Landing cell as x,y; defaults to the far corner.
    #[arg(long, value_parser = parse_cell)]
    goal: Option<(usize, usize)>,
}

fn parse_cell(s: &str) -> Result<(usize, usize), String> {
    let (x, y) = s.split_once(',').ok_or("expected x,y")?;
    let p = |t: &str| t.trim().parse::<usize>().map_err(|e| e.to_string());
    Ok((p(x)?, p(y)?))
}

#[derive(Args)]
struct PlannerArgs {
    #[arg(long, default_value_t = 2000)]
    sims: usize,
    #[arg(long, default_value_t = 20)]
    depth: usize,
    #[arg(long, default_value_t = 1.0)]
    ucb_c: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl PlannerArgs {
    fn config(&self) -> PlannerConfig {
        PlannerConfig {
            simulations: self.sims,
            max_depth: self.depth,
            ucb_c: self.ucb_c,
            seed: self.seed,
            ..PlannerConfig::default()
        }
    }
}

impl ModelArgs {
    fn load(&self) -> Result<LoadedModel> {
        if let Some(path) = &self.model {
            return load_model(path).with_context(|| format!("loading {}", path.display()));
        }
        let gen = DroneProbing {
            width: self.width,
            height: self.height,
            threshold: self.threshold,
            goal: self
                .goal
                .unwrap_or((self.width.saturating_sub(1), self.height.saturating_sub(1))),
        };
        Ok(gen.build()?)
    }

    fn load_with_dfa(&self) -> Result<(LoadedModel, Dfa)> {
        let m = self.load()?;
        let dfa = compile_minimal(&m.validate()?)?;
        Ok((m, dfa))
    }
}

fn print_root(m: &Pomdp, res: &SearchResult) {
    println!("action,visits,value");
    for (a, s) in res.actions.iter().enumerate() {
        println!("{},{},{:.6}", m.action_names()[a], s.visits, s.value);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Compile { model, formula, out } => {
            let m = model.load()?;
            m.validate()?;
            let obj = match &formula {
                Some(f) => parse_formula(f, &m.atoms)?,
                None => m.validate()?,
            };
            let dfa = compile_minimal(&obj)?;
            let live = dfa.live_state_count();
            let dead = dfa.state_count() - live;
            eprintln!("objective: {obj}");
            println!(
                "{live} live states, {dead} dead state{} ({} total)",
                if dead == 1 { "" } else { "s" },
                dfa.state_count()
            );
            match out {
                Some(dir) => {
                    fs::create_dir_all(&dir)?;
                    fs::write(dir.join("dfa.dot"), dfa.export_dot())?;
                    fs::write(dir.join("dfa.json"), serde_json::to_string_pretty(&dfa.to_json())?)?;
                }
                None => print!("{}", dfa.export_dot()),
            }
        }
        Command::Plan { model, planner } => {
            let (m, dfa) = model.load_with_dfa()?;
            let product = Product::new(&m.pomdp, &dfa)?;
            let res = Planner::new(product, planner.config())?.search(&product.init())?;
            print_root(&m.pomdp, &res);
            println!(
                "best {} value {:.6} tree {}",
                m.pomdp.action_names()[res.action],
                res.value(),
                res.tree_size
            );
        }
        Command::Episode {
            model,
            planner,
            horizon,
            run,
            verbose,
        } => {
            let (m, dfa) = model.load_with_dfa()?;
            let cfg = ExperimentConfig {
                runs: 1,
                horizon,
                master_seed: planner.seed,
                planner: planner.config(),
                ..ExperimentConfig::default()
            };
            let names = m.pomdp.action_names().to_vec();
            let ep = harness::run_episode_logged(&m.pomdp, &dfa, &cfg, run, |res| {
                if verbose {
                    let stats: Vec<String> = res
                        .actions
                        .iter()
                        .enumerate()
                        .map(|(a, s)| format!("{}={}/{:.3}", names[a], s.visits, s.value))
                        .collect();
                    eprintln!("search {}", stats.join(" "));
                }
            })?;
            println!("{}", TraceRecord::HEADER);
            for r in &ep.trace {
                println!("{r}");
            }
            eprintln!("{} after {} steps", ep.cause.as_str(), ep.steps);
        }
        Command::Experiment {
            model,
            planner,
            horizon,
            runs,
            out,
            verbose,
        } => {
            let (m, dfa) = model.load_with_dfa()?;
            let cfg = ExperimentConfig {
                runs,
                horizon,
                master_seed: planner.seed,
                planner: planner.config(),
                ..ExperimentConfig::default()
            };
            let exp = harness::run_experiment(&m.pomdp, &dfa, &cfg)?;
            harness::write_csvs(&out, &exp)?;
            let s = &exp.summary;
            if verbose {
                for (i, e) in exp.episodes.iter().enumerate() {
                    eprintln!("run {i}: {} in {} steps", e.cause.as_str(), e.steps);
                }
            }
            println!("success {}/{} ({:.2})", s.successes, s.runs, s.success_rate);
            match s.mean_steps {
                Some(mean) => println!("mean steps among successes {mean:.2}"),
                None => println!("no successful runs"),
            }
            println!(
                "failures: {} horizon-exceeded, {} dead-automaton",
                s.horizon_exceeded, s.dead_automaton
            );
            println!("csv written to {}", out.display());
        }
        Command::Validate { model } => {
            let m = model.load()?;
            let obj = m.validate()?;
            println!(
                "ok: {} states, {} actions, {} observations, {} atoms",
                m.pomdp.state_count(),
                m.pomdp.action_count(),
                m.pomdp.observation_count(),
                m.atoms.len()
            );
            println!("objective: {obj}");
        }
        Command::Export { model } => {
            let m = model.load()?;
            print!("{}", write_model(&m));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    ExitCode::SUCCESS
}
