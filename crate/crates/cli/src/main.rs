use std::io::{self, BufRead, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use worldloop::controller::{
    play_local, replay, run_game, ControllerConfig, DoneReason, ModelBackend, PlannerKind, RunOutcome, REPORT_FILE,
};
use worldloop::env::spec_file::load_spec;
use worldloop::env::{ActionId, GameRegistry, GameStatus};
use worldloop::model::external::serve_model;
use worldloop::model::rules_file::load_rules;
use worldloop::modelers::{seed_from_env, ModelerKind};
use worldloop::plan::{BfsPlanner, SearchBudget};
use worldloop::protocol::client::{Connection, RemoteSession};
use worldloop::protocol::server::{serve, serve_connection};
use worldloop::scoring::{aggregate, parse_fixture, render_report, RunReport};
use worldloop::trace::{Manifest, RunDirectory};
use worldloop::verify::{planner_cases, verify_planner, verify_world_model};

#[derive(Parser)]
#[command(name = "worldloop", version, about = "Verifier-driven world models for grid games")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Serve game sessions over the line protocol.
    Serve {
        #[arg(long, default_value = "127.0.0.1:7878")]
        addr: String,
        /// Serve one connection on stdin/stdout instead of TCP.
        #[arg(long)]
        stdio: bool,
        #[command(flatten)]
        games: GameArgs,
    },
    /// Play games with a scripted modeler.
    Play(PlayArgs),
    /// Check a saved model against a run's trace.
    Verify {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        games: GameArgs,
    },
    /// Replay a run's actions through a fresh session.
    Replay {
        #[arg(long)]
        run: PathBuf,
        #[command(flatten)]
        games: GameArgs,
    },
    /// Aggregate run reports.
    Score {
        /// Run directories, or directories of run directories.
        #[arg(long, num_args = 1..)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        fixture: Option<PathBuf>,
    },
    /// Measure per-level action counts from keyboard play.
    HumanBaseline {
        #[arg(long)]
        game: String,
        #[command(flatten)]
        games: GameArgs,
    },
    /// Serve a .rules model over the world-model ops on stdin/stdout.
    WmServe {
        #[arg(long)]
        rules: PathBuf,
    },
}

#[derive(Args, Clone)]
struct GameArgs {
    /// Extra game spec files to register.
    #[arg(long = "spec")]
    specs: Vec<PathBuf>,
}

impl GameArgs {
    fn registry(&self) -> Result<GameRegistry> {
        let mut reg = GameRegistry::builtin();
        for path in &self.specs {
            reg.insert(load_spec(path).with_context(|| format!("loading {}", path.display()))?);
        }
        Ok(reg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelerArg {
    Oracle,
    Rules,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlannerArg {
    Bfs,
    Astar,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Inproc,
    External,
}

#[derive(Args)]
struct PlayArgs {
    /// Game ids, comma separated. Several games run as separate processes.
    #[arg(long, value_delimiter = ',', required = true)]
    game: Vec<String>,
    #[arg(long, value_enum, default_value = "rules")]
    modeler: ModelerArg,
    #[arg(long, default_value_t = 4000)]
    budget: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "bfs")]
    planner: PlannerArg,
    #[arg(long, value_enum, default_value = "inproc")]
    model_backend: BackendArg,
    /// Command line of the external model process.
    #[arg(long)]
    model_cmd: Option<String>,
    /// Play against a protocol server instead of an in-process session.
    #[arg(long)]
    server: Option<String>,
    #[arg(long, default_value_t = 50)]
    stall_window: usize,
    #[arg(long, default_value_t = 1)]
    run_index: u32,
    #[command(flatten)]
    games: GameArgs,
}

impl PlayArgs {
    fn config(&self) -> Result<ControllerConfig> {
        let backend = match self.model_backend {
            BackendArg::Inproc => ModelBackend::InProcess,
            BackendArg::External => {
                let cmd = self.model_cmd.as_deref().ok_or_else(|| anyhow!("--model-cmd is required"))?;
                ModelBackend::External(cmd.split_whitespace().map(String::from).collect())
            }
        };
        Ok(ControllerConfig {
            action_budget: self.budget,
            stall_window: self.stall_window,
            planner: match self.planner {
                PlannerArg::Bfs => PlannerKind::Bfs,
                PlannerArg::Astar => PlannerKind::AStar,
            },
            backend,
            run_index: self.run_index,
            ..ControllerConfig::default()
        })
    }

    fn modeler(&self) -> ModelerKind {
        match self.modeler {
            ModelerArg::Oracle => ModelerKind::Oracle,
            ModelerArg::Rules => ModelerKind::Rules,
            ModelerArg::Random => ModelerKind::Random,
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Cmd::Serve { addr, stdio, games } => {
            let reg = games.registry()?;
            if stdio {
                serve_connection(&reg, io::stdin().lock(), io::stdout().lock())?;
            } else {
                let listener = TcpListener::bind(&addr).with_context(|| format!("binding {addr}"))?;
                eprintln!("serving on {}", listener.local_addr()?);
                serve(listener, Arc::new(reg))?;
            }
            Ok(0)
        }
        Cmd::Play(args) => play(&args),
        Cmd::Verify { run, model, games } => verify(&run, &model, &games.registry()?),
        Cmd::Replay { run, games } => {
            let dir = RunDirectory::open(&run)?;
            let records = dir.load(None)?;
            match replay(&games.registry()?, &dir.manifest().game_id, &records) {
                Ok(n) => {
                    println!("replayed {n} records: identical");
                    Ok(0)
                }
                Err(e) => {
                    println!("replay failed: {e}");
                    Ok(1)
                }
            }
        }
        Cmd::Score { runs, fixture } => score(&runs, fixture.as_deref()),
        Cmd::HumanBaseline { game, games } => human_baseline(&games.registry()?, &game),
        Cmd::WmServe { rules } => {
            let model = load_rules(&rules).with_context(|| format!("loading {}", rules.display()))?;
            serve_model(&model, io::stdin().lock(), io::stdout().lock())?;
            Ok(0)
        }
    }
}

fn exit_code(done: &DoneReason) -> u8 {
    done.exit_code() as u8
}

fn print_outcome(out: &RunOutcome) {
    print!("{}", out.report.to_line());
    print!("{}", render_report(None, std::slice::from_ref(&out.report)));
}

fn play(args: &PlayArgs) -> Result<u8> {
    let config = args.config()?;
    if args.game.len() > 1 {
        return play_many(args);
    }
    let game = &args.game[0];
    let reg = args.games.registry()?;
    let out = match &args.server {
        None => play_local(&reg, game, args.modeler(), &config, &args.out, seed_from_env())?,
        Some(addr) => {
            let spec = reg.get(game)?.clone();
            let conn = Connection::connect(addr.as_str()).with_context(|| format!("connecting to {addr}"))?;
            let (mut session, initial) = RemoteSession::open(conn, game)?;
            let mut modeler = args.modeler().build(&reg, game, seed_from_env())?;
            let mut run = RunDirectory::create(&args.out, Manifest::new(game, &config.to_line()))?;
            run_game(&spec, &mut session, initial, modeler.as_mut(), &config, &mut run)?
        }
    };
    print_outcome(&out);
    Ok(exit_code(&out.done))
}

/// Runs one child process per game, each into `<out>/<game>`.
fn play_many(args: &PlayArgs) -> Result<u8> {
    let exe = std::env::current_exe()?;
    let passthrough: Vec<String> = std::env::args().skip(2).collect();
    let mut children = Vec::new();
    for game in &args.game {
        let mut cmd = Command::new(&exe);
        cmd.arg("play");
        let mut skip = false;
        for a in &passthrough {
            if skip {
                skip = false;
                continue;
            }
            match a.as_str() {
                "--game" | "--out" => skip = true,
                s if s.starts_with("--game=") || s.starts_with("--out=") => {}
                _ => {
                    cmd.arg(a);
                }
            }
        }
        cmd.arg("--game").arg(game).arg("--out").arg(args.out.join(game));
        children.push((game.clone(), cmd.spawn().with_context(|| format!("starting {game}"))?));
    }
    let mut worst = 0;
    for (game, mut child) in children {
        let status = child.wait()?;
        let code = status.code().unwrap_or(3) as u8;
        if code == 1 {
            bail!("{game} failed");
        }
        worst = worst.max(code);
    }
    Ok(worst)
}

fn verify(run: &Path, model_path: &Path, reg: &GameRegistry) -> Result<u8> {
    let dir = RunDirectory::open(run)?;
    let records = dir.load(None)?;
    let model = load_rules(model_path).with_context(|| format!("loading {}", model_path.display()))?;
    let report = verify_world_model(&model, &records)?;
    println!("{}", report.to_line().trim_end());
    print!("{}", report.summary());
    let actions: Vec<ActionId> = match reg.get(&dir.manifest().game_id) {
        Ok(spec) => spec.legal().iter().copied().filter(|a| !a.is_reset()).collect(),
        Err(_) => vec![ActionId::UP, ActionId::DOWN, ActionId::LEFT, ActionId::RIGHT],
    };
    let planner = BfsPlanner {
        budget: SearchBudget::default(),
        execution: Default::default(),
    };
    let plans = verify_planner(&model, &planner, &planner_cases(&records), &actions);
    println!("{}", plans.to_line().trim_end());
    print!("{}", plans.summary());
    Ok(if report.pass && plans.pass { 0 } else { 1 })
}

fn collect_reports(path: &Path, out: &mut Vec<RunReport>) -> Result<()> {
    let report = path.join(REPORT_FILE);
    if report.is_file() {
        out.push(RunReport::load(&report)?);
        return Ok(());
    }
    let mut subdirs: Vec<PathBuf> = std::fs::read_dir(path)
        .with_context(|| format!("reading {}", path.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(REPORT_FILE).is_file())
        .collect();
    if subdirs.is_empty() {
        bail!("{} holds no run report", path.display());
    }
    subdirs.sort();
    for d in subdirs {
        out.push(RunReport::load(&d.join(REPORT_FILE))?);
    }
    Ok(())
}

fn score(runs: &[PathBuf], fixture: Option<&Path>) -> Result<u8> {
    let mut reports = Vec::new();
    if let Some(f) = fixture {
        let text = std::fs::read_to_string(f).with_context(|| format!("reading {}", f.display()))?;
        reports.extend(parse_fixture(&text)?);
    }
    for r in runs {
        collect_reports(r, &mut reports)?;
    }
    let agg = aggregate(&reports)?;
    print!("{}", render_report(Some(&agg), &reports));
    print!("{}", agg.to_line());
    Ok(0)
}

fn parse_keys(line: &str) -> Vec<Option<ActionId>> {
    line.chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| match c.to_ascii_lowercase() {
            'w' => Some(ActionId::UP),
            's' => Some(ActionId::DOWN),
            'a' => Some(ActionId::LEFT),
            'd' => Some(ActionId::RIGHT),
            'e' | ' ' => Some(ActionId::INTERACT),
            'r' => Some(ActionId::Reset),
            _ => None,
        })
        .collect()
}

/// Keys: w a s d move, e interacts, r resets, q quits. One line may hold
/// several keys.
fn human_baseline(reg: &GameRegistry, game: &str) -> Result<u8> {
    let (mut session, frame) = reg.new_session(game)?;
    let mut out = io::stdout().lock();
    writeln!(out, "{}", frame.canonical_ascii())?;
    let mut counts: Vec<u64> = Vec::new();
    let stdin = io::stdin();
    'input: for line in stdin.lock().lines() {
        let line = line?;
        if line.trim() == "q" {
            break;
        }
        for key in parse_keys(&line) {
            let Some(action) = key else {
                writeln!(out, "keys: w a s d move, e interact, r reset, q quit")?;
                continue;
            };
            if !session.spec().is_legal(action) {
                continue;
            }
            let level = session.level();
            let step = session.step(action)?;
            if step.status.is_win() {
                let n = session.level_actions()[level];
                writeln!(out, "level {level} solved in {n} actions")?;
                counts.push(n);
            }
            if step.status == GameStatus::GameOver {
                writeln!(out, "GAME_OVER, r to reset")?;
            }
            writeln!(out, "{}", step.frame.canonical_ascii())?;
            if session.is_finished() {
                break 'input;
            }
        }
    }
    let list: Vec<String> = counts.iter().map(u64::to_string).collect();
    writeln!(out, "{{\"game_id\":\"{game}\",\"baselines\":[{}]}}", list.join(","))?;
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_map_to_actions() {
        assert_eq!(
            parse_keys("wa sd r?"),
            vec![
                Some(ActionId::UP),
                Some(ActionId::LEFT),
                Some(ActionId::DOWN),
                Some(ActionId::RIGHT),
                Some(ActionId::Reset),
                None
            ]
        );
    }
}
