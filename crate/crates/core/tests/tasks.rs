mod support;

use std::fs;
use std::sync::Arc;

use prunevolve_core::config::Ini;
use prunevolve_core::ir::parse;
use prunevolve_core::library::by_name;
use prunevolve_core::net::{accuracy, train, TrainConfig};
use prunevolve_core::tasks::*;
use prunevolve_core::ChannelContext;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::oracles::{self, Raw};

fn raw(ctx: &ChannelContext) -> Raw {
    Raw {
        filters: vec![ctx.w_i().data().to_vec()],
        w_shape: [1, 2, 3, 3],
        bn: [0.0; 4],
        maps: ctx.maps().iter().map(<[f64]>::to_vec).collect(),
        side: ctx.maps().map_shape()[0],
        labels: ctx.labels().to_vec(),
        classes: ctx.classes(),
    }
}

/// Pairwise-count AUC, ties one half.
fn auc_oracle(scores: &[f64], flags: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &p) in flags.iter().enumerate() {
        for (j, &q) in flags.iter().enumerate() {
            if p && !q {
                pairs += 1.0;
                wins += if scores[i] > scores[j] {
                    1.0
                } else if scores[i] == scores[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    wins / pairs
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[test]
fn fisher_separates_informative_channels() {
    let spec = SyntheticSpec::default();
    let tree = by_name("fisher_ratio").unwrap().tree;
    for seed in 0..100 {
        let (ctx, flags) = synth_channels(&spec, &mut ChaCha8Rng::seed_from_u64(seed));
        let scores: Vec<f64> = ctx.iter().map(|c| tree.evaluate(c).unwrap()).collect();
        for (s, c) in scores.iter().zip(&ctx) {
            assert!(oracles::rel_err(*s, oracles::fisher(&raw(c))) < 1e-9);
        }
        let pick = |want: bool| -> Vec<f64> {
            scores
                .iter()
                .zip(&flags)
                .filter(|(_, &f)| f == want)
                .map(|(s, _)| *s)
                .collect()
        };
        assert!(mean(&pick(true)) > mean(&pick(false)), "seed {seed}");
    }
}

/// AUC of each tree per seed, checked against the pairwise oracle applied to
/// oracle scores.
fn ranking_aucs(name: &str, oracle: fn(&Raw) -> f64) -> Vec<f64> {
    let spec = SyntheticSpec::default();
    let tree = by_name(name).unwrap().tree;
    (0..5)
        .map(|seed| {
            let got = run_ranking_task(&tree, &spec, &mut ChaCha8Rng::seed_from_u64(seed));
            let (ctx, flags) = synth_channels(&spec, &mut ChaCha8Rng::seed_from_u64(seed));
            let scores: Vec<f64> = ctx.iter().map(|c| oracle(&raw(c))).collect();
            let want = auc_oracle(&scores, &flags);
            assert!((got - want).abs() < 1e-12, "{name} seed {seed}");
            got
        })
        .collect()
}

#[test]
fn xi_2_and_fisher_rank_informative_channels() {
    let xi2 = ranking_aucs("xi_2", oracles::xi_2);
    let fisher = ranking_aucs("fisher_ratio", oracles::fisher);
    assert!(
        xi2.iter().chain(&fisher).all(|&a| a > 0.9),
        "{xi2:?} {fisher:?}"
    );
    // both rank every informative channel first on seeds 0..5
    assert_eq!(xi2, [1.0; 5]);
    assert_eq!(fisher, [1.0; 5]);
}

#[test]
fn labelless_trees_rank_at_chance() {
    let spec = SyntheticSpec {
        label_only: true,
        ..Default::default()
    };
    for name in ["l1_norm", "xi_3"] {
        let tree = by_name(name).unwrap().tree;
        let aucs: Vec<f64> = (0..200)
            .map(|s| run_ranking_task(&tree, &spec, &mut ChaCha8Rng::seed_from_u64(s)))
            .collect();
        let m = mean(&aucs);
        assert!((0.45..=0.55).contains(&m), "{name}: {m}");
    }
    // a labelless tree reading the maps sees the same distribution in both groups
    let tree = parse("(var_g F)").unwrap();
    let aucs: Vec<f64> = (0..200)
        .map(|s| run_ranking_task(&tree, &spec, &mut ChaCha8Rng::seed_from_u64(s)))
        .collect();
    assert!((0.45..=0.55).contains(&mean(&aucs)), "{}", mean(&aucs));
}

#[test]
fn auc_ignores_positive_scaling() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let n = rng.random_range(4..30);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..5) as f64).collect();
        let mut flags: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        flags[0] = true;
        flags[1] = false;
        let c = rng.random_range(0.01..100.0);
        let scaled: Vec<f64> = scores.iter().map(|s| s * c).collect();
        assert_eq!(auc(&scores, &flags), auc(&scaled, &flags));
        assert!((auc(&scores, &flags) - auc_oracle(&scores, &flags)).abs() < 1e-12);
    }
}

#[test]
fn zero_separation_makes_groups_identical() {
    let spec = SyntheticSpec {
        separation: 0.0,
        noise: 0.0,
        ..Default::default()
    };
    let (ctx, _) = synth_channels(&spec, &mut ChaCha8Rng::seed_from_u64(1));
    let first = ctx[0].maps().data();
    assert!(ctx.iter().all(|c| c.maps().data() == first));
    assert!(first.iter().all(|&v| v == spec.base));
}

fn desk_task(seed: u64) -> PruningTask {
    let mut task = PruningTask {
        id: format!("desk-{seed}"),
        init_seed: seed,
        ..Default::default()
    };
    if let DataSource::Synthetic { seed: ds, .. } = &mut task.data {
        *ds = seed;
    }
    task
}

#[test]
fn keeping_everything_matches_retrained_baseline() {
    let task = PruningTask {
        ratio: 0.0,
        ..desk_task(0)
    };
    let base = task.baseline().unwrap();
    let tree = by_name("l1_norm").unwrap().tree;
    let got = run_pruning_task(&tree, &task, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let retrain_seed: u64 = ChaCha8Rng::seed_from_u64(3).random();
    let cfg = TrainConfig {
        seed: retrain_seed,
        ..task.retrain.clone()
    };
    let (net, _) = train(&base.net, &base.train, &base.val, &cfg).unwrap();
    assert_eq!(got, accuracy(&net, &base.val).unwrap());
}

#[test]
fn l1_beats_random_masks() {
    let l1 = by_name("l1_norm").unwrap().tree;
    let (mut tree_acc, mut rand_acc) = (vec![], vec![]);
    for seed in 0..5 {
        let task = desk_task(seed);
        tree_acc.push(run_pruning_task(&l1, &task, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap());
        let r: Vec<f64> = (0..10)
            .map(|m| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed * 1000 + m);
                run_pruning(&task, ChannelScorer::Random, &mut rng).unwrap()
            })
            .collect();
        rand_acc.push(mean(&r));
    }
    let margin = mean(&tree_acc) - mean(&rand_acc);
    assert!(margin >= 0.0, "{tree_acc:?} {rand_acc:?}");
    assert!((margin - 0.0322).abs() < 1e-9, "margin {margin}");
}

#[test]
fn pruning_is_deterministic() {
    let task = desk_task(1);
    let tree = by_name("xi_star").unwrap().tree;
    let a = run_pruning_task(&tree, &task, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let b = run_pruning_task(&tree, &task, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    assert_eq!(a, b);
    let t = Task::Pruning(task);
    assert_eq!(t.run(&tree, 8).unwrap(), t.run(&tree, 8).unwrap());
}

#[test]
fn baseline_is_trained_once_per_task() {
    let task = desk_task(2);
    let a = task.baseline().unwrap();
    let b = task.baseline().unwrap();
    assert!(Arc::ptr_eq(&a, &b));
    for name in ["l1_norm", "fisher_ratio"] {
        let tree = by_name(name).unwrap().tree;
        run_pruning_task(&tree, &task, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(task.baseline().unwrap().fingerprint, a.fingerprint);
    }
    let other = PruningTask {
        init_seed: 99,
        ..desk_task(2)
    };
    assert_ne!(other.baseline().unwrap().fingerprint, a.fingerprint);
}

#[test]
fn fixed_masks_ignore_the_tree() {
    let task = desk_task(3);
    let base = task.baseline().unwrap();
    let layers = task.target_layers(&base.net).unwrap();
    let masks: Vec<Vec<bool>> = layers
        .iter()
        .map(|&l| {
            (0..base.net.channels(l).unwrap())
                .map(|c| c % 2 == 0)
                .collect()
        })
        .collect();
    let run = || {
        run_pruning(
            &task,
            ChannelScorer::Fixed(&masks),
            &mut ChaCha8Rng::seed_from_u64(4),
        )
        .unwrap()
    };
    let first = run();
    assert_eq!(first, run());
    assert!(run_pruning(
        &task,
        ChannelScorer::Fixed(&masks[..0]),
        &mut ChaCha8Rng::seed_from_u64(4)
    )
    .is_err());
}

#[test]
fn failing_tree_scores_zero() {
    let task = desk_task(0);
    // a filter-block operand against the maps never conforms
    let tree = parse("(sum_g (dot W F))").unwrap();
    assert_eq!(
        run_pruning_task(&tree, &task, &mut ChaCha8Rng::seed_from_u64(0)).unwrap(),
        0.0
    );
}

fn feature_task(seed: u64, k: usize) -> (FeatureSelectionTask, Vec<bool>) {
    let (train, val, flags) =
        SyntheticFeatures::default().generate(&mut ChaCha8Rng::seed_from_u64(seed));
    let task = FeatureSelectionTask {
        id: "features".into(),
        train,
        val,
        k,
        classifier: TrainConfig {
            epochs: 30,
            learning_rate: 0.05,
            lr_drops: vec![],
            ..TrainConfig::default()
        },
        sample_limit: 2000,
    };
    (task, flags)
}

#[test]
fn fisher_finds_the_informative_features() {
    let tree = by_name("fisher_ratio").unwrap().tree;
    let mut hits = 0;
    for seed in 0..5 {
        let (task, flags) = feature_task(seed, 5);
        let sel =
            run_feature_selection(&tree, &task, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let truth: Vec<usize> = (0..flags.len()).filter(|&j| flags[j]).collect();
        hits += usize::from(sel.selected == truth);
        assert_eq!(sel.scores.len(), 50);
    }
    assert!(hits >= 4, "{hits}/5");
}

#[test]
fn keeping_every_feature_is_the_full_baseline() {
    let (task, _) = feature_task(1, 50);
    let tree = by_name("xi_2").unwrap().tree;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let sel = run_feature_selection(&tree, &task, &mut rng).unwrap();
    let seed: u64 = ChaCha8Rng::seed_from_u64(2).random();
    let all: Vec<usize> = (0..50).collect();
    assert_eq!(sel.selected, all);
    assert_eq!(
        sel.accuracy,
        classifier_accuracy(&task, &all, seed).unwrap()
    );
}

#[test]
fn score_map_has_a_row_per_feature() {
    let (task, _) = feature_task(2, 5);
    let tree = by_name("xi_star").unwrap().tree;
    let sel = run_feature_selection(&tree, &task, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let paths = write_score_map(dir.path(), &sel.scores).unwrap();
    let csv = fs::read_to_string(&paths[0]).unwrap();
    assert_eq!(csv.lines().count(), 1 + 50);
    assert_eq!(paths.len(), 1);
}

fn idx_images(images: &[Vec<u8>], side: u32) -> Vec<u8> {
    let mut b = vec![0, 0, 8, 3];
    b.extend((images.len() as u32).to_be_bytes());
    b.extend(side.to_be_bytes());
    b.extend(side.to_be_bytes());
    for im in images {
        b.extend(im);
    }
    b
}

fn idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut b = vec![0, 0, 8, 1];
    b.extend((labels.len() as u32).to_be_bytes());
    b.extend(labels);
    b
}

#[test]
fn idx_pairs_decode_exactly() {
    let d = decode_idx(
        &idx_images(&[vec![0, 255, 51, 102], vec![255, 0, 0, 204]], 2),
        &idx_labels(&[7, 0]),
    )
    .unwrap();
    assert_eq!(d.len(), 2);
    assert_eq!(d.sample_shape, vec![1, 2, 2]);
    assert_eq!(d.sample(0), &[0.0, 1.0, 0.2, 0.4]);
    assert_eq!(d.sample(1), &[1.0, 0.0, 0.0, 0.8]);
    assert_eq!(d.labels, vec![8, 1]);
    assert_eq!(d.classes, 8);

    let mut bad = idx_images(&[vec![0; 4]], 2);
    bad[..4].copy_from_slice(&0xDEAD_BEEFu32.to_be_bytes());
    assert!(matches!(
        decode_idx(&bad, &idx_labels(&[0])),
        Err(IdxError::BadMagic { .. })
    ));
    assert!(matches!(
        decode_idx(&idx_images(&vec![vec![0; 4]; 3], 2), &idx_labels(&[0, 1])),
        Err(IdxError::CountMismatch { .. })
    ));
}

/// Oriented bars as 8x8 IDX images: label 0 horizontal, 1 vertical.
fn bars(n: usize, rng: &mut ChaCha8Rng) -> (Vec<Vec<u8>>, Vec<u8>) {
    let mut images = vec![];
    let mut labels = vec![];
    for i in 0..n {
        let y = (i % 2) as u8;
        let at = rng.random_range(2..6);
        let im = (0..64)
            .map(|p| {
                let (r, c) = (p / 8, p % 8);
                let on = if y == 0 { r == at } else { c == at };
                if on {
                    230
                } else {
                    rng.random_range(0..40)
                }
            })
            .collect();
        images.push(im);
        labels.push(y);
    }
    (images, labels)
}

#[test]
fn task_file_with_idx_data_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for (stem, n) in [("train", 80), ("val", 40)] {
        let (im, lb) = bars(n, &mut rng);
        fs::write(
            dir.path().join(format!("{stem}-images")),
            idx_images(&im, 8),
        )
        .unwrap();
        fs::write(dir.path().join(format!("{stem}-labels")), idx_labels(&lb)).unwrap();
    }
    let text = "[task]\nkind = pruning\nid = idx-bars\nratio = 0.25\n\n\
                [task.data]\nsource = idx\ntrain_images = train-images\n\
                train_labels = train-labels\nval_images = val-images\nval_labels = val-labels\n\n\
                [task.baseline]\nepochs = 5\n\n[task.retrain]\nepochs = 1\n";
    let path = dir.path().join("task.cfg");
    fs::write(&path, text).unwrap();
    let task = read_task_file(&path).unwrap();
    assert_eq!((task.id(), task.kind()), ("idx-bars", "pruning"));
    let tree = by_name("l1_norm").unwrap().tree;
    let acc = task.run(&tree, 1).unwrap();
    assert!(acc > 0.9, "{acc}");
    assert_eq!(acc, task.run(&tree, 1).unwrap());
}

#[test]
fn task_files_reject_unknown_keys() {
    let ini = Ini::parse("[task]\nkind = ranking\nspeed = 3\n").unwrap();
    assert!(parse_task(&ini, "task", std::path::Path::new(".")).is_err());
    let ini = Ini::parse("[task]\nkind = pruning\nratio = 1.0\n").unwrap();
    assert!(parse_task(&ini, "task", std::path::Path::new(".")).is_err());
    let ini = Ini::parse("[task]\nkind = features\nk = 3\n[task.data]\nfeatures = 9\n").unwrap();
    match parse_task(&ini, "task", std::path::Path::new(".")).unwrap() {
        Task::Features(t) => assert_eq!((t.k, t.train.sample_len()), (3, 9)),
        other => panic!("{}", other.kind()),
    }
}
