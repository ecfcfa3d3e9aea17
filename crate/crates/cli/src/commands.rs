use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use prunevolve_core::evolve::{
    combine_fitness, derive_seed, read_checkpoint, run_evolution_from, write_checkpoint,
    Checkpoint, EvolutionConfig, Objective, RunResult, Scheme, LOG_HEADER,
};
use prunevolve_core::ir::{infer_kind, parse_fn_file, probe, validity_test, ExprTree, MAX_DEPTH};
use prunevolve_core::library::{self, build_soap};
use prunevolve_core::net::{decode_pnet, encode_pnet, tiny_cnn, write_pnet, Mode};
use prunevolve_core::tasks::{
    prune_and_retrain, read_task_file, run_feature_selection, write_score_map, ChannelScorer,
    PruneError, Task,
};
use prunevolve_core::Kind;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::manifest::RunManifest;
use crate::settings::RunConfig;
use crate::CliError;

const HOLDOUT_STREAM: u64 = 0x401D;

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn make_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

/// Trains pruning baselines up front so a broken task fails loudly instead
/// of scoring every function zero.
fn preflight(task: &Task) -> Result<(), CliError> {
    if let Task::Pruning(t) = task {
        t.baseline()
            .map_err(|e| CliError::Task(format!("{}: {e}", t.id)))?;
    }
    Ok(())
}

fn objective<'a>(run: &'a RunConfig, cfg: &EvolutionConfig) -> Objective<'a> {
    match &run.task_b {
        Some(b) => Objective::pair(&run.task_a, b, cfg.alpha, cfg.scheme),
        None => Objective::single(&run.task_a),
    }
}

fn checkpoint_path(dir: &Path, generation: usize) -> PathBuf {
    dir.join("checkpoints")
        .join(format!("gen_{generation:04}.txt"))
}

fn newest_checkpoint(dir: &Path) -> Result<PathBuf, CliError> {
    let cdir = dir.join("checkpoints");
    let entries = fs::read_dir(&cdir).map_err(|e| io_err(&cdir, e))?;
    entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("gen_") && n.ends_with(".txt"))
        })
        .max()
        .ok_or_else(|| CliError::Runtime(format!("no checkpoint in {}", cdir.display())))
}

/// Keeps the header and the rows of generations up to `generation`.
fn truncate_log(path: &Path, generation: usize) -> Result<String, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut out = String::new();
    for (i, line) in text.lines().enumerate() {
        let keep = i == 0
            || line
                .split(',')
                .next()
                .and_then(|g| g.parse::<usize>().ok())
                .is_some_and(|g| g <= generation);
        if keep {
            out.push_str(line);
            out.push('\n');
        }
    }
    if !out.starts_with(LOG_HEADER) {
        return Err(CliError::Runtime(format!(
            "{} is not an evolution log",
            path.display()
        )));
    }
    Ok(out)
}

/// Runs one evolution writing `log.csv` and checkpoints into `out`.
fn evolve_into(
    run: &RunConfig,
    cfg: &EvolutionConfig,
    out: &Path,
    resume: Option<Checkpoint>,
) -> Result<RunResult, CliError> {
    make_dir(&out.join("checkpoints"))?;
    let log_path = out.join("log.csv");
    let start = match &resume {
        Some(cp) => truncate_log(&log_path, cp.generation)?,
        None => format!("{LOG_HEADER}\n"),
    };
    write(&log_path, &start)?;
    let mut log = fs::OpenOptions::new()
        .append(true)
        .open(&log_path)
        .map_err(|e| io_err(&log_path, e))?;
    let mut failure: Option<CliError> = None;
    let result = run_evolution_from(
        cfg,
        &objective(run, cfg),
        &build_soap(),
        resume,
        |row, cp| {
            if failure.is_some() {
                return;
            }
            if let Err(e) = writeln!(log, "{}", row.csv_row()) {
                failure = Some(io_err(&log_path, e));
            }
            let path = checkpoint_path(out, cp.generation);
            if let Err(e) = write_checkpoint(&path, cp) {
                failure = Some(io_err(&path, e));
            }
        },
    )
    .map_err(|e| CliError::Runtime(e.to_string()))?;
    match failure {
        Some(e) => Err(e),
        None => Ok(result),
    }
}

fn best_fn_text(result: &RunResult) -> String {
    format!(
        "# fitness {}\n{}\n",
        result.best.fitness.unwrap_or(0.0),
        result.best.tree
    )
}

pub fn evolve(
    config: &Path,
    out: &Path,
    resume: bool,
    workers: Option<usize>,
    seed: Option<u64>,
) -> Result<(), CliError> {
    let mut run = RunConfig::load(config, seed)?;
    if let Some(w) = workers {
        run.evolution.workers = w.max(1);
    }
    let cfg = run.evolution.clone();
    make_dir(out)?;
    let checkpoint = if resume {
        let path = newest_checkpoint(out)?;
        Some(read_checkpoint(&path).map_err(|e| io_err(&path, e))?)
    } else {
        None
    };
    preflight(&run.task_a)?;
    if cfg.alpha < 1.0 {
        if let Some(b) = &run.task_b {
            preflight(b)?;
        }
    }
    let mut manifest = RunManifest::new("evolve", cfg.seed);
    manifest
        .inputs
        .push(("config".into(), config.display().to_string()));
    manifest
        .inputs
        .push(("workers".into(), cfg.workers.to_string()));
    if let Some(cp) = &checkpoint {
        manifest
            .inputs
            .push(("resumed_after".into(), cp.generation.to_string()));
    }
    write(&out.join("config.used"), &run.resolved())?;
    let result = evolve_into(&run, &cfg, out, checkpoint)?;
    write(&out.join("best.fn"), &best_fn_text(&result))?;
    manifest.outputs = ["config.used", "log.csv", "checkpoints", "best.fn"]
        .iter()
        .map(|p| out.join(p))
        .collect();
    manifest.replay = format!(
        "prunevolve evolve --config {} --out <dir>",
        out.join("config.used").display()
    );
    manifest.write(out)?;
    println!(
        "best {} {}",
        result.best.fitness.unwrap_or(0.0),
        result.best.tree
    );
    Ok(())
}

/// Reads a single-function `.fn` file and checks it against the probe.
fn load_function(path: &Path) -> Result<ExprTree, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Function(format!("{}: {e}", path.display())))?;
    let mut trees = parse_fn_file(&text)
        .map_err(|(line, e)| CliError::Function(format!("{}:{line}: {e}", path.display())))?;
    if trees.len() != 1 {
        return Err(CliError::Function(format!(
            "{}: expected one function, found {}",
            path.display(),
            trees.len()
        )));
    }
    let tree = trees.remove(0);
    if !validity_test(&tree, probe(), MAX_DEPTH) {
        let mut report = format!(
            "{}: invalid function\n  depth {}",
            path.display(),
            tree.depth()
        );
        if tree.depth() > MAX_DEPTH {
            write!(report, " (limit {MAX_DEPTH})").unwrap();
        }
        write!(report, "\n  result kind {:?}", infer_kind(&tree)).unwrap();
        if infer_kind(&tree) != Kind::Scalar {
            report.push_str(" (must be Scalar)");
        }
        match tree.evaluate(probe()) {
            Ok(v) => write!(report, "\n  probe value {v}").unwrap(),
            Err(e) => write!(report, "\n  probe evaluation failed: {e}").unwrap(),
        }
        return Err(CliError::Function(report));
    }
    Ok(tree)
}

fn load_task(path: &Path) -> Result<Task, CliError> {
    read_task_file(path).map_err(|e| CliError::Task(format!("{}: {e}", path.display())))
}

pub fn eval_fn(function: &Path, task: &Path, seed: u64) -> Result<(), CliError> {
    let tree = load_function(function)?;
    let task = load_task(task)?;
    let fitness = task
        .run(&tree, seed)
        .map_err(|e| CliError::Task(e.to_string()))?;
    println!("{} {fitness}", task.id());
    Ok(())
}

pub fn prune(function: &Path, task_path: &Path, out: &Path, seed: u64) -> Result<(), CliError> {
    let tree = load_function(function)?;
    let task = load_task(task_path)?;
    make_dir(out)?;
    let mut manifest = RunManifest::new("prune", seed);
    manifest
        .inputs
        .push(("function".into(), function.display().to_string()));
    manifest
        .inputs
        .push(("task".into(), task_path.display().to_string()));
    manifest.replay = format!(
        "prunevolve prune {} {} --seed {seed} --out <dir>",
        function.display(),
        task_path.display()
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match &task {
        Task::Pruning(t) => {
            let base = t.baseline().map_err(|e| CliError::Task(e.to_string()))?;
            let outcome = match prune_and_retrain(t, ChannelScorer::Tree(&tree), &mut rng) {
                Ok(o) => o,
                Err(e @ PruneError::Eval { .. }) => return Err(CliError::Function(e.to_string())),
                Err(PruneError::Diverged) => {
                    return Err(CliError::Runtime("retraining diverged".into()))
                }
                Err(PruneError::Task(e)) => return Err(CliError::Task(e.to_string())),
            };
            let mut csv = String::from("layer,channel,score,kept\n");
            for plan in &outcome.plans {
                for (c, kept) in plan.keep.iter().enumerate() {
                    let score = plan.scores.as_ref().map(|s| s[c]).unwrap_or(f64::NAN);
                    writeln!(csv, "{},{c},{score},{}", plan.layer, u8::from(*kept)).unwrap();
                }
            }
            let paths = [
                out.join("baseline.pnet"),
                out.join("pruned.pnet"),
                out.join("channels.csv"),
            ];
            write_pnet(&paths[0], &base.net).map_err(|e| io_err(&paths[0], e))?;
            write_pnet(&paths[1], &outcome.net).map_err(|e| io_err(&paths[1], e))?;
            write(&paths[2], &csv)?;
            manifest.outputs = paths.to_vec();
            println!(
                "{} baseline {} pruned {} params {} -> {}",
                t.id,
                base.accuracy,
                outcome.accuracy,
                base.net.param_count(),
                outcome.net.param_count()
            );
        }
        Task::Features(t) => {
            let sel = run_feature_selection(&tree, t, &mut rng)
                .map_err(|e| CliError::Task(e.to_string()))?;
            if sel.scores.is_empty() {
                return Err(CliError::Function(
                    "function failed on at least one feature".into(),
                ));
            }
            let mut paths = write_score_map(out, &sel.scores).map_err(|e| io_err(out, e))?;
            let selected = out.join("selected.txt");
            let list: Vec<String> = sel.selected.iter().map(usize::to_string).collect();
            write(&selected, &format!("{}\n", list.join("\n")))?;
            paths.push(selected);
            manifest.outputs = paths;
            println!("{} {}", t.id, sel.accuracy);
        }
        Task::Ranking(_) => {
            return Err(CliError::Task(
                "prune needs a pruning or features task".into(),
            ))
        }
    }
    manifest.write(out)
}

pub fn soap_list() -> Result<(), CliError> {
    for f in library::library() {
        println!("{}", f.name);
    }
    Ok(())
}

pub fn soap_export(dir: &Path) -> Result<(), CliError> {
    let paths = library::export(dir).map_err(|e| io_err(dir, e))?;
    for p in paths {
        println!("{}", p.display());
    }
    Ok(())
}

fn cell_value(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn alpha_grid(
    config: &Path,
    out: &Path,
    workers: Option<usize>,
    seed: Option<u64>,
) -> Result<(), CliError> {
    let mut run = RunConfig::load(config, seed)?;
    if let Some(w) = workers {
        run.evolution.workers = w.max(1);
    }
    if run.task_b.is_none() {
        return Err(CliError::Config("alpha-grid needs [task_b]".into()));
    }
    let Some(held_out) = run.task_c.clone() else {
        return Err(CliError::Config("alpha-grid needs [task_c]".into()));
    };
    for t in [Some(&run.task_a), run.task_b.as_ref(), Some(&held_out)]
        .into_iter()
        .flatten()
    {
        preflight(t)?;
    }
    make_dir(out)?;
    write(&out.join("config.used"), &run.resolved())?;
    let mut manifest = RunManifest::new("alpha-grid", run.evolution.seed);
    manifest
        .inputs
        .push(("config".into(), config.display().to_string()));
    let holdout_seed = derive_seed(run.evolution.seed, &[HOLDOUT_STREAM]);
    let mut csv = String::from("alpha,scheme,fitness,task_a,task_b,held_out,best_fn\n");
    let cells: Vec<(Scheme, f64)> = run
        .grid
        .schemes
        .iter()
        .flat_map(|&s| run.grid.alphas.iter().map(move |&a| (s, a)))
        .collect();
    for (scheme, alpha) in cells {
        let cfg = EvolutionConfig {
            alpha,
            scheme,
            generations: run.grid.generations,
            ..run.evolution.clone()
        };
        let cell_dir = out.join(format!("cell_{}_{alpha}", scheme.name()));
        let result = evolve_into(&run, &cfg, &cell_dir, None)?;
        let best = &result.best;
        let transfer = held_out
            .run(&best.tree, holdout_seed)
            .map_err(|e| CliError::Task(e.to_string()))?;
        let acc = |i: usize| best.accuracies.get(i).copied().flatten();
        writeln!(
            csv,
            "{alpha},{},{},{},{},{transfer},{}",
            scheme.name(),
            best.fitness.unwrap_or(0.0),
            cell_value(acc(0)),
            cell_value(acc(1)),
            best.tree
        )
        .unwrap();
        manifest.outputs.push(cell_dir);
    }
    let grid = out.join("grid.csv");
    write(&grid, &csv)?;
    manifest.outputs.push(grid);
    manifest.replay = format!(
        "prunevolve alpha-grid --config {} --out <dir>",
        out.join("config.used").display()
    );
    manifest.write(out)?;
    print!("{csv}");
    Ok(())
}

fn check(name: &str, ok: bool, detail: String, failures: &mut Vec<String>) {
    if ok {
        println!("ok   {name}");
    } else {
        println!("FAIL {name}: {detail}");
        failures.push(name.to_string());
    }
}

pub fn selftest() -> Result<(), CliError> {
    let mut failures = vec![];
    let lib = library::library();
    let invalid: Vec<&str> = lib
        .iter()
        .filter(|f| !validity_test(&f.tree, probe(), MAX_DEPTH))
        .map(|f| f.name)
        .collect();
    check(
        "library functions valid",
        lib.len() == 15 && invalid.is_empty(),
        format!("{} functions, invalid {invalid:?}", lib.len()),
        &mut failures,
    );

    let perm: Vec<usize> = (1..=probe().classes()).rev().collect();
    let moved: Vec<&str> = lib
        .iter()
        .filter(|f| f.tree.is_label_aware())
        .filter(|f| {
            f.tree.evaluate(probe()).ok() != f.tree.evaluate(&probe().relabeled(&perm)).ok()
        })
        .map(|f| f.name)
        .collect();
    check(
        "label permutation invariance",
        moved.is_empty(),
        format!("{moved:?}"),
        &mut failures,
    );

    let arith = combine_fitness(0.99, 0.94, 0.3, Scheme::Arithmetic);
    let geo = combine_fitness(0.99, 0.94, 0.5, Scheme::Geometric);
    check(
        "fitness combination",
        (arith - 0.955).abs() < 1e-12 && (geo - 0.964676).abs() < 1e-6,
        format!("{arith} {geo}"),
        &mut failures,
    );

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let net = tiny_cnn(&[1, 8, 8], 4, 8, true, &mut rng);
    let round = decode_pnet(&encode_pnet(&net)).map(|n| n == net);
    check(
        "PNET1 round trip",
        matches!(round, Ok(true)),
        format!("{round:?}"),
        &mut failures,
    );

    let keep: Vec<bool> = (0..8).map(|c| c % 3 != 0).collect();
    let x: Vec<f64> = (0..64).map(|_| rng.random::<f64>()).collect();
    let diff = net.prune_channels(0, &keep).ok().and_then(|p| {
        let a = p.forward(&x, 1, Mode::Eval).ok()?;
        let b = net.forward_masked(&x, 1, Mode::Eval, 0, &keep).ok()?;
        Some(
            a.logits()
                .iter()
                .zip(b.logits())
                .map(|(u, v)| (u - v).abs())
                .fold(0.0, f64::max),
        )
    });
    check(
        "pruning equals masking",
        diff.is_some_and(|d| d <= 1e-10),
        format!("{diff:?}"),
        &mut failures,
    );

    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Runtime(format!(
            "{} self-test check(s) failed",
            failures.len()
        )))
    }
}
