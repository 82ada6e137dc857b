//! Acceptance gate: one PASS/FAIL line per criterion.

use std::collections::{HashSet, VecDeque};
use std::io::{BufRead, BufReader, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use worldloop::controller::{play_local, ControllerConfig};
use worldloop::env::games::shortest_solution;
use worldloop::env::{ActionId, Environment, Frame, GameRegistry, GameStatus};
use worldloop::exec::{execute_plan, ExecOutcome, Tracker};
use worldloop::model::external::model_response;
use worldloop::model::rules_file::save_rules;
use worldloop::model::{Pattern, Prediction, RewriteRule, RuleModel, WorldModel};
use worldloop::modelers::{oracle_model, InducedRuleSet, ModelerKind, SEED_VAR};
use worldloop::plan::Plan;
use worldloop::protocol::client::{Connection, RemoteSession};
use worldloop::protocol::codec::{encode_frame, to_line};
use worldloop::protocol::encode_response;
use worldloop::protocol::server::{handle_line, SessionTable};
use worldloop::scoring::{RunReport, Termination};
use worldloop::trace::{Manifest, RunDirectory, TransitionRecord};
use worldloop::verify::verify_world_model;

const EXE: &str = env!("CARGO_BIN_EXE_worldloop");
const GAMES: [&str; 3] = ["corridor", "keydoor", "pushblock"];
const SEED: &str = "7";

type Check = fn(&Path) -> Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {{
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    }};
}

fn main() {
    let criteria: [(&str, Check); 9] = [
        ("fixture-aggregation", fixture_aggregation),
        ("oracle-end-to-end", oracle_end_to_end),
        ("oracle-equivalence", oracle_equivalence),
        ("verifier-soundness", verifier_soundness),
        ("executor-verifier-agreement", executor_verifier_agreement),
        ("refactor-mdl", refactor_mdl),
        ("learner-end-to-end", learner_end_to_end),
        ("protocol-golden-and-parity", protocol_golden_and_parity),
        ("budget-exactness", budget_exactness),
    ];
    let scratch = tempfile::tempdir().expect("scratch directory");
    let mut failed = 0;
    for (name, check) in criteria {
        let dir = scratch.path().join(name);
        std::fs::create_dir_all(&dir).unwrap();
        let t = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(|| check(&dir))).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = t.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {name} ({detail}; {secs:.2} s)"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why} ({secs:.2} s)");
            }
        }
    }
    println!("{} of 9 criteria passed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn cli(args: &[&str]) -> Output {
    Command::new(EXE).args(args).env(SEED_VAR, SEED).output().expect("worldloop runs")
}

fn path_arg(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn moves(reg: &GameRegistry, game: &str) -> Vec<ActionId> {
    reg.get(game).unwrap().legal().iter().copied().filter(|a| !a.is_reset()).collect()
}

fn playthrough(reg: &GameRegistry, game: &str, actions: &[ActionId]) -> Vec<TransitionRecord> {
    let (mut session, initial) = reg.new_session(game).unwrap();
    let mut tracker = Tracker::new(game, initial);
    let mut out = Vec::new();
    for &a in actions {
        if tracker.is_finished() {
            break;
        }
        let obs = Environment::step(&mut session, a).unwrap();
        out.push(tracker.observe(a, &obs));
    }
    out
}

fn random_walk(rng: &mut ChaCha8Rng, legal: &[ActionId], len: usize) -> Vec<ActionId> {
    (0..len)
        .map(|_| if rng.gen_ratio(1, 25) { ActionId::Reset } else { legal[rng.gen_range(0..legal.len())] })
        .collect()
}

fn solution(reg: &GameRegistry, game: &str, upto: usize) -> Vec<ActionId> {
    let legal = moves(reg, game);
    reg.get(game).unwrap().levels()[..upto]
        .iter()
        .flat_map(|l| shortest_solution(&l.initial, &legal).unwrap())
        .collect()
}

/// Shortest winning length found by breadth-first search over cloned
/// sessions, independent of the planner and of the stored baselines.
fn session_bfs(reg: &GameRegistry, game: &str, level: usize) -> Option<u64> {
    let (mut session, _) = reg.new_session(game).unwrap();
    for a in solution(reg, game, level) {
        session.step(a).unwrap();
    }
    let legal = moves(reg, game);
    let mut seen = HashSet::from([session.frame().clone()]);
    let mut queue = VecDeque::from([(session, 0u64)]);
    while let Some((s, d)) = queue.pop_front() {
        for &a in &legal {
            let mut next = s.clone();
            let r = next.step(a).unwrap();
            if r.status.is_win() {
                return Some(d + 1);
            }
            if r.status == GameStatus::Running && seen.insert(r.frame.clone()) {
                queue.push_back((next, d + 1));
            }
        }
    }
    None
}

fn fixture_aggregation(_: &Path) -> Result<String, String> {
    let fixture = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/table1.fixture");
    let t = Instant::now();
    let out = cli(&["score", "--fixture", path_arg(&fixture)]);
    let elapsed = t.elapsed();
    ensure!(out.status.success(), "score exited with {}", out.status);
    let stdout = String::from_utf8_lossy(&out.stdout);
    let last = stdout.lines().last().ok_or("no output")?;
    let v: serde_json::Value = serde_json::from_str(last).map_err(|e| e.to_string())?;
    let num = |k: &str| v[k].as_str().and_then(|s| s.parse::<f64>().ok()).unwrap_or(f64::NAN);
    let int = |k: &str| v[k].as_u64().unwrap_or(u64::MAX);
    let mean = num("overall_mean");
    let median = num("median");
    ensure!((mean - 32.58).abs() <= 0.01, "mean {mean}");
    ensure!((median - 14.65).abs() <= 0.01, "median {median}");
    ensure!(int("fully_solved") == 7, "fully solved {}", int("fully_solved"));
    ensure!(int("above_75") == 6, "above 75% {}", int("above_75"));
    ensure!(int("below_5") == 9, "below 5% {}", int("below_5"));
    ensure!(
        int("levels_solved") == 106 && int("levels_attempted") == 209,
        "levels {}/{}",
        int("levels_solved"),
        int("levels_attempted")
    );
    ensure!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    Ok(format!("mean {mean:.2}, median {median:.2}, 7/6/9, 106/209"))
}

fn oracle_end_to_end(dir: &Path) -> Result<String, String> {
    let reg = GameRegistry::builtin();
    let mut detail = Vec::new();
    for game in GAMES {
        let run = dir.join(game);
        let t = Instant::now();
        let out = cli(&["play", "--game", game, "--modeler", "oracle", "--out", path_arg(&run)]);
        let elapsed = t.elapsed();
        ensure!(out.status.success(), "{game}: play exited with {}", out.status);
        ensure!(elapsed < Duration::from_secs(30), "{game}: took {elapsed:?}");
        let report = RunReport::load(&run.join("report")).map_err(|e| e.to_string())?;
        let dir = RunDirectory::open(&run).map_err(|e| e.to_string())?;
        ensure!(dir.artifact_count() == 0, "{game}: {} artifacts", dir.artifact_count());
        ensure!(report.mismatches == 0, "{game}: {} mismatches", report.mismatches);
        ensure!(report.fully_solved(), "{game}: {}/{} levels", report.levels_solved, report.level_count);
        for (l, level) in report.levels.iter().enumerate() {
            let h = session_bfs(&reg, game, l).ok_or(format!("{game} level {l} unsolvable"))?;
            ensure!(level.baseline == h, "{game} level {l}: baseline {} but search gives {h}", level.baseline);
            ensure!(level.actions == h, "{game} level {l}: {} actions, h = {h}", level.actions);
        }
        ensure!(format!("{:.2}", report.rhae) == "100.00", "{game}: RHAE {:.2}", report.rhae);
        detail.push(format!("{game} {:.1} s", elapsed.as_secs_f64()));
    }
    Ok(detail.join(", "))
}

fn oracle_equivalence(_: &Path) -> Result<String, String> {
    let reg = GameRegistry::builtin();
    let t = Instant::now();
    let mut pairs = 0usize;
    for game in GAMES {
        let spec = reg.get(game).unwrap();
        let model = oracle_model(spec);
        let legal = moves(&reg, game);
        for level in 0..spec.level_count() {
            let (mut session, _) = reg.new_session(game).unwrap();
            for a in solution(&reg, game, level) {
                session.step(a).unwrap();
            }
            let mut seen = HashSet::from([session.frame().clone()]);
            let mut queue = VecDeque::from([session]);
            while let Some(s) = queue.pop_front() {
                let state = model.reconstruct(s.frame()).map_err(|e| e.to_string())?;
                for &a in &legal {
                    let mut next = s.clone();
                    let r = next.step(a).unwrap();
                    pairs += 1;
                    match model.predict(&state, a).map_err(|e| e.to_string())? {
                        Prediction::Next { state: p, status } => {
                            ensure!(
                                p.grid() == &r.settled && status.agrees_with(r.status),
                                "{game} level {level}: {a} from\n{}",
                                s.frame().canonical_ascii()
                            );
                        }
                        Prediction::Unknown { reason } => return Err(format!("{game}: unknown prediction: {reason}")),
                    }
                    if r.status == GameStatus::Running && seen.insert(r.frame.clone()) {
                        queue.push_back(next);
                    }
                }
            }
        }
    }
    let elapsed = t.elapsed();
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!("{pairs} reachable (state, action) pairs"))
}

/// Records for soundness checks: a full solution plus random walks.
fn corpus(reg: &GameRegistry, game: &str, seed: u64) -> Vec<TransitionRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = playthrough(reg, game, &solution(reg, game, reg.get(game).unwrap().level_count()));
    let legal = moves(reg, game);
    for prefix_levels in 0..reg.get(game).unwrap().level_count() {
        let mut actions = solution(reg, game, prefix_levels);
        let skip = actions.len();
        actions.extend(random_walk(&mut rng, &legal, 120));
        records.extend(playthrough(reg, game, &actions).into_iter().skip(skip));
    }
    records
}

enum Corruption {
    Delete(usize),
    Flip(usize, u8),
}

fn corrupt(model: &RuleModel, c: &Corruption) -> RuleModel {
    let mut rules = model.rules().to_vec();
    match *c {
        Corruption::Delete(i) => {
            rules.remove(i);
        }
        Corruption::Flip(i, w) => rules[i].write = w,
    }
    RuleModel::new(rules, model.default_dynamics(), model.goal().to_vec(), model.hazard().to_vec()).unwrap()
}

fn fires(model: &RuleModel, rule: usize, rec: &TransitionRecord) -> bool {
    let g = &rec.before;
    (0..g.height()).any(|y| (0..g.width()).any(|x| model.firing_rule(g, rec.action, x, y) == Some(rule)))
}

/// Direct per-record comparison, without the verifier.
fn brute_force_failures(model: &RuleModel, records: &[TransitionRecord]) -> Vec<usize> {
    records
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.action.is_reset())
        .filter(|(_, r)| match model.predict_grid(&r.before, r.action) {
            Prediction::Next { state, status } => {
                state.grid().canonical_ascii() != r.after.canonical_ascii() || !status.agrees_with(r.status)
            }
            Prediction::Unknown { .. } => true,
        })
        .map(|(i, _)| i)
        .collect()
}

fn verifier_soundness(_: &Path) -> Result<String, String> {
    let reg = GameRegistry::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let corpora: Vec<(&str, RuleModel, Vec<TransitionRecord>)> = GAMES
        .iter()
        .enumerate()
        .map(|(i, &g)| (g, oracle_model(reg.get(g).unwrap()), corpus(&reg, g, i as u64)))
        .collect();
    let (mut exercised, mut flips) = (0, 0);
    for trial in 0..100 {
        let (game, oracle, records) = &corpora[trial % corpora.len()];
        ensure!(verify_world_model(oracle, records).unwrap().pass, "{game}: oracle fails its own corpus");
        let i = rng.gen_range(0..oracle.rules().len());
        let c = if rng.gen_bool(0.5) {
            Corruption::Delete(i)
        } else {
            let old = oracle.rules()[i].write;
            Corruption::Flip(i, (old + rng.gen_range(1..13)) % 13)
        };
        let model = corrupt(oracle, &c);
        let fired: Vec<usize> = (0..records.len())
            .filter(|&k| !records[k].action.is_reset() && fires(oracle, i, &records[k]))
            .collect();
        let report = verify_world_model(&model, records).map_err(|e| e.to_string())?;
        let mut reported: Vec<_> = report.failures.iter().map(|f| f.locator).collect();
        let brute = brute_force_failures(&model, records);
        let mut replayed: Vec<_> = brute.iter().map(|&k| records[k].locator()).collect();
        reported.sort();
        replayed.sort();
        ensure!(reported == replayed, "{game} trial {trial}: verifier {reported:?} vs replay {replayed:?}");
        ensure!(brute.iter().all(|k| fired.contains(k)), "{game} trial {trial}: failure where the rule is idle");
        if let Corruption::Flip(..) = c {
            flips += 1;
            ensure!(brute == fired, "{game} trial {trial}: flipped rule fired at {fired:?}, failures {brute:?}");
        }
        ensure!(report.pass == fired.is_empty() || matches!(c, Corruption::Delete(_)), "{game} trial {trial}");
        if !reported.is_empty() {
            exercised += 1;
        }
    }
    Ok(format!("100 corruptions ({flips} flips), {exercised} exercised by the corpus"))
}

fn executor_verifier_agreement(dir: &Path) -> Result<String, String> {
    let reg = GameRegistry::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut mismatches, mut clean) = (0, 0);
    for trial in 0..240 {
        let game = GAMES[trial % 3];
        let oracle = oracle_model(reg.get(game).unwrap());
        let i = rng.gen_range(0..oracle.rules().len());
        let model = if trial % 4 == 0 {
            oracle.clone()
        } else if rng.gen_bool(0.5) {
            corrupt(&oracle, &Corruption::Delete(i))
        } else {
            corrupt(&oracle, &Corruption::Flip(i, (oracle.rules()[i].write + 1) % 13))
        };
        let legal = moves(&reg, game);
        let run_root = dir.join(format!("t{trial}"));
        let mut run = RunDirectory::create(&run_root, Manifest::new(game, "{}")).map_err(|e| e.to_string())?;
        let (mut session, initial) = reg.new_session(game).unwrap();
        let mut tracker = Tracker::new(game, initial);
        let prefix = rng.gen_range(0..20);
        for a in random_walk(&mut rng, &legal, prefix) {
            if tracker.is_finished() {
                break;
            }
            let obs = Environment::step(&mut session, a).unwrap();
            run.append(&tracker.observe(a, &obs)).unwrap();
        }
        if tracker.is_finished() {
            continue;
        }
        let len = rng.gen_range(1..15);
        let plan = Plan::new((0..len).map(|_| legal[rng.gen_range(0..legal.len())]).collect()).unwrap();
        let report = execute_plan(&plan, &model, &mut session, &mut run, &mut tracker).map_err(|e| e.to_string())?;
        let verdict = verify_world_model(&model, &report.records).map_err(|e| e.to_string())?;
        let full = verify_world_model(&model, &run.load(None).unwrap()).map_err(|e| e.to_string())?;
        if report.outcome == ExecOutcome::Mismatch {
            mismatches += 1;
            ensure!(!verdict.pass && !full.pass, "trial {trial}: mismatch but the verifier passes");
            let last = report.records.last().unwrap().locator();
            ensure!(verdict.failures.iter().map(|f| f.locator).eq([last]), "trial {trial}: failure not at the mismatch");
            ensure!(run.artifact_count() == 1, "trial {trial}: no artifact");
        } else {
            clean += 1;
            ensure!(verdict.pass, "trial {trial}: verifier fails a clean execution");
        }
    }
    for game in GAMES {
        let root = dir.join(format!("oracle-{game}"));
        let out = play_local(&reg, game, ModelerKind::Oracle, &ControllerConfig::default(), &root, 0)
            .map_err(|e| e.to_string())?;
        ensure!(out.report.mismatches == 0, "{game}: oracle run mismatched");
        let records = RunDirectory::open(&root).unwrap().load(None).unwrap();
        ensure!(verify_world_model(&oracle_model(reg.get(game).unwrap()), &records).unwrap().pass, "{game}");
        let cli_verify = cli(&["verify", "--run", path_arg(&root), "--model", path_arg(&out.model_path)]);
        ensure!(cli_verify.status.success(), "{game}: verify subcommand failed on a clean run");
    }
    ensure!(mismatches > 0 && clean > 0, "{mismatches} mismatches, {clean} clean executions");
    Ok(format!("{mismatches} mismatching and {clean} clean executions, 3 clean runs"))
}

fn refactor_mdl(_: &Path) -> Result<String, String> {
    let reg = GameRegistry::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut shrunk = 0;
    for trial in 0..200 {
        let game = if trial % 2 == 0 { "corridor" } else { "keydoor" };
        let levels = rng.gen_range(0..reg.get(game).unwrap().level_count());
        let mut actions = solution(&reg, game, levels);
        let len = rng.gen_range(1..160);
        actions.extend(random_walk(&mut rng, &moves(&reg, game), len));
        let records = playthrough(&reg, game, &actions);
        let set = InducedRuleSet::new().induce_update(&records).map_err(|e| format!("trial {trial}: {e}"))?;
        let before = set.description_length();
        let after = set.refactor();
        ensure!(after.description_length() <= before, "trial {trial}: {before} -> {}", after.description_length());
        ensure!(verify_world_model(after.model(), &records).unwrap().pass, "trial {trial}: refactor broke verification");
        if after.description_length() < before {
            shrunk += 1;
        }
    }

    // two 3-literal rules that differ in one cell merge into one 2-literal rule
    let a = Pattern::centered(3, &[((0, 0), 2), ((1, 0), 0), ((0, 1), 1)]).unwrap();
    let b = Pattern::centered(3, &[((0, 0), 2), ((1, 0), 0), ((0, 1), 0)]).unwrap();
    let merged = a.merge(&b).ok_or("patterns do not merge")?;
    let two = RuleModel::new(
        vec![RewriteRule::new(ActionId::RIGHT, a, 0, 0), RewriteRule::new(ActionId::RIGHT, b, 0, 1)],
        true,
        vec![],
        vec![],
    )
    .unwrap();
    let one = RuleModel::new(vec![RewriteRule::new(ActionId::RIGHT, merged, 0, 0)], true, vec![], vec![]).unwrap();
    ensure!(
        two.description_length() == 8 && one.description_length() == 3,
        "formula gives {} -> {}",
        two.description_length(),
        one.description_length()
    );

    // the same shape through the learner
    let frame = |s: &str| Frame::from_ascii(0, s).unwrap();
    let rec = |before: &str, after: &str| TransitionRecord {
        game_id: "canonical".into(),
        level: 0,
        attempt: 1,
        step: 0,
        before: frame(before),
        action: ActionId::RIGHT,
        after: frame(after),
        status: GameStatus::Running,
    };
    let records = [
        rec("#####\n#@..#\n#####", "#####\n#.@.#\n#####"),
        rec("#####\n#@..#\n#.###", "#####\n#.@.#\n#.###"),
    ];
    let set = InducedRuleSet::new().induce_update(&records).map_err(|e| e.to_string())?;
    let refactored = set.refactor();
    ensure!(
        refactored.description_length() < set.description_length(),
        "learner did not merge: {} -> {}",
        set.description_length(),
        refactored.description_length()
    );
    ensure!(verify_world_model(refactored.model(), &records).unwrap().pass, "canonical merge broke verification");
    Ok(format!(
        "200 traces, {shrunk} shrunk; canonical 8 -> 3 and {} -> {}",
        set.description_length(),
        refactored.description_length()
    ))
}

fn learner_end_to_end(dir: &Path) -> Result<String, String> {
    let run = dir.join("corridor");
    let out = cli(&["play", "--game", "corridor", "--modeler", "rules", "--budget", "4000", "--out", path_arg(&run)]);
    let report = RunReport::load(&run.join("report")).map_err(|e| format!("no report ({}): {e}", out.status))?;
    ensure!(
        report.fully_solved(),
        "{}/{} levels, {}",
        report.levels_solved,
        report.level_count,
        report.termination.label()
    );
    ensure!(out.status.success(), "play exited with {}", out.status);
    let verify = cli(&["verify", "--run", path_arg(&run), "--model", path_arg(&run.join("model.rules"))]);
    let text = String::from_utf8_lossy(&verify.stdout);
    ensure!(verify.status.success(), "verifiers failed:\n{text}");
    let actions: Vec<String> = report.levels.iter().map(|l| l.actions.to_string()).collect();
    Ok(format!(
        "4/4 levels in {} actions ({}), {} mismatches, RHAE {:.2}%",
        report.total_actions,
        actions.join("/"),
        report.mismatches,
        report.rhae
    ))
}

fn golden(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden").join(name);
    std::fs::read_to_string(path).unwrap()
}

/// Feeds a transcript's requests to a child on stdio and returns the
/// transcript rebuilt from its answers.
fn replay_through(args: &[&str], transcript: &str) -> String {
    let reqs: Vec<&str> = transcript.lines().filter_map(|l| l.strip_prefix("> ")).collect();
    let mut child = Command::new(EXE)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut stdin = child.stdin.take().unwrap();
    let mut stdout = BufReader::new(child.stdout.take().unwrap());
    let mut out = String::new();
    for req in reqs {
        writeln!(stdin, "{req}").unwrap();
        stdin.flush().unwrap();
        let mut line = String::new();
        stdout.read_line(&mut line).unwrap();
        out.push_str(&format!("> {req}\n< {line}"));
    }
    drop(stdin);
    let _ = child.wait();
    out
}

fn protocol_golden_and_parity(dir: &Path) -> Result<String, String> {
    let reg = GameRegistry::builtin();
    let session = golden("session.transcript");
    let mut table = SessionTable::new();
    let mut in_process = String::new();
    for req in session.lines().filter_map(|l| l.strip_prefix("> ")) {
        in_process.push_str(&format!("> {req}\n< {}", encode_response(&handle_line(&reg, &mut table, req))));
    }
    ensure!(in_process == session, "in-process server drifted from the session golden file");
    ensure!(replay_through(&["serve", "--stdio"], &session) == session, "serve --stdio drifted from the golden file");

    let wm = golden("wm.transcript");
    let rules = dir.join("corridor.rules");
    let model = oracle_model(reg.get("corridor").unwrap());
    save_rules(&model, &rules).unwrap();
    let mut in_process = String::new();
    for req in wm.lines().filter_map(|l| l.strip_prefix("> ")) {
        let resp = match worldloop::protocol::decode_request(req) {
            Ok(r) => model_response(&model, r),
            Err(e) => worldloop::protocol::Response::error(e.code(), e.to_string()),
        };
        in_process.push_str(&format!("> {req}\n< {}", encode_response(&resp)));
    }
    ensure!(in_process == wm, "in-process model drifted from the model golden file");
    ensure!(
        replay_through(&["wm-serve", "--rules", path_arg(&rules)], &wm) == wm,
        "wm-serve drifted from the golden file"
    );

    let mut child = Command::new(EXE)
        .args(["serve", "--stdio"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let conn = Connection::new(
        BufReader::new(child.stdout.take().unwrap()),
        child.stdin.take().unwrap(),
    );
    let parity = parity_over_stdio(&reg, conn);
    let _ = child.kill();
    let _ = child.wait();
    let steps = parity?;
    Ok(format!("2 golden transcripts byte-exact, 1000 sequences ({steps} steps) identical"))
}

/// Plays 1000 random sequences both in process and through `conn`.
fn parity_over_stdio(reg: &GameRegistry, conn: Connection) -> Result<usize, String> {
    let mut conn = Some(conn);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut steps = 0;
    for seq in 0..1000 {
        let game = GAMES[seq % 3];
        let (mut local, f0) = reg.new_session(game).unwrap();
        let (mut remote, r0) = RemoteSession::open(conn.take().unwrap(), game).map_err(|e| e.to_string())?;
        ensure!(f0 == r0, "sequence {seq}: initial frames differ");
        let len = rng.gen_range(1..40);
        for a in random_walk(&mut rng, &moves(reg, game), len) {
            let here = Environment::step(&mut local, a);
            let there = remote.step(a);
            let line = |o: &worldloop::env::Observation| {
                format!(
                    "{}{}{}{:?}",
                    to_line(&encode_frame(&o.step.frame)),
                    to_line(&encode_frame(&o.step.settled)),
                    o.step.status.as_str(),
                    o.counters
                )
            };
            match (here, there) {
                (Ok(a), Ok(b)) => ensure!(line(&a) == line(&b), "sequence {seq}: transcripts differ"),
                (Err(a), Err(b)) => ensure!(a == b, "sequence {seq}: errors differ"),
                _ => return Err(format!("sequence {seq}: one side failed")),
            }
            steps += 1;
        }
        conn = Some(remote.close().map_err(|e| e.to_string())?);
    }
    Ok(steps)
}

fn budget_exactness(dir: &Path) -> Result<String, String> {
    let mut detail = Vec::new();
    for budget in [1u64, 10, 100] {
        let b = budget.to_string();
        let run = dir.join(format!("b{budget}"));
        let out = cli(&["play", "--game", "pushblock", "--modeler", "random", "--budget", &b, "--out", path_arg(&run)]);
        let report = RunReport::load(&run.join("report")).map_err(|e| format!("budget {budget}: {e}"))?;
        ensure!(
            report.termination == Termination::BudgetExhausted,
            "budget {budget}: run ended with {}",
            report.termination.label()
        );
        ensure!(out.status.code() == Some(2), "budget {budget}: exit {}", out.status);
        let records = RunDirectory::open(&run).unwrap().load(None).unwrap();
        let resets = records.iter().filter(|r| r.action.is_reset()).count();
        ensure!(records.len() as u64 == budget, "budget {budget}: {} records", records.len());
        ensure!(report.total_actions == budget, "budget {budget}: report counts {}", report.total_actions);
        detail.push(format!("{budget} ({resets} resets)"));
    }
    Ok(format!("recorded exactly {}", detail.join(", ")))
}
