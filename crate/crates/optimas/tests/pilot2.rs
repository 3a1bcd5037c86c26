//! Training diagnosis pilot (temporary).

use optimas::bench::checks::anchor_config;
use optimas::bench::{make_system, sample_inputs, SyntheticSystemId};
use optimas::preference::{build_preferences, PreferenceOptions};
use optimas::reward::{
    pairwise_accuracy, ranking_loss, train_offline, PreferenceDataset, RewardNet, TrainOptions,
};

#[test]
#[ignore]
fn pilot_training_quality() {
    let sys = make_system(SyntheticSystemId::S1, false);
    let config = anchor_config(SyntheticSystemId::S1, &sys.graph);
    let train_inputs = sample_inputs(&sys.doc, 167, 1);
    let mut dataset = PreferenceDataset::new(Vec::new(), config.snapshot_id());
    for k in [1usize, 2, 3] {
        let ds = build_preferences(
            &sys.graph,
            &config,
            &train_inputs,
            k,
            &PreferenceOptions {
                mc_rollouts: 50,
                seed: k as u64,
                ..PreferenceOptions::default()
            },
        )
        .unwrap();
        println!(
            "component {k}: {} records, mean |gap| {:.4}",
            ds.len(),
            ds.records.iter().map(|r| r.gap.abs()).sum::<f64>() / ds.len() as f64
        );
        dataset.extend(ds);
    }
    for lr in [0.1, 0.3, 1.0, 3.0] {
        for epochs in [400usize, 1500] {
            let mut net = RewardNet::for_graph(&sys.graph, 7);
            let report = train_offline(
                &mut net,
                &dataset,
                &TrainOptions {
                    learning_rate: lr,
                    epochs,
                    seed: 3,
                    ..TrainOptions::default()
                },
            )
            .unwrap();
            let acc = pairwise_accuracy(&net, &dataset.records).unwrap();
            let loss = ranking_loss(&net, &dataset.records).unwrap();
            println!(
                "lr={lr} epochs={epochs}: steps={} stopped_early={} best_val={:?} val_acc={:?} train_acc={acc:.4} train_loss={loss:.4} first_train={:.4} last_train={:.4}",
                report.steps,
                report.stopped_early,
                report.best_val_loss,
                report.val_accuracy,
                report.train_curve.first().unwrap(),
                report.train_curve.last().unwrap(),
            );
        }
    }
}

#[test]
#[ignore]
fn pilot_replicate_check_seeds() {
    use optimas::seed::{indexed_seed, named_seed};
    let seed = 42u64;
    let sys = make_system(SyntheticSystemId::S1, false);
    let config = anchor_config(SyntheticSystemId::S1, &sys.graph);
    let train_inputs = sample_inputs(&sys.doc, 167, named_seed(seed, "align_train_inputs"));
    let mut dataset = PreferenceDataset::new(Vec::new(), config.snapshot_id());
    for k in [1usize, 2, 3] {
        let ds = build_preferences(
            &sys.graph,
            &config,
            &train_inputs,
            k,
            &PreferenceOptions {
                mc_rollouts: 50,
                seed: indexed_seed(named_seed(seed, "align_prefs"), k as u64),
                ..PreferenceOptions::default()
            },
        )
        .unwrap();
        dataset.extend(ds);
    }
    let mut net = RewardNet::for_graph(&sys.graph, named_seed(seed, "align_net"));
    let report = train_offline(
        &mut net,
        &dataset,
        &TrainOptions {
            epochs: 400,
            seed: named_seed(seed, "align_train"),
            ..TrainOptions::default()
        },
    )
    .unwrap();
    let acc = pairwise_accuracy(&net, &dataset.records).unwrap();
    println!(
        "steps={} early={} best_val={:?} val_acc={:?} train_acc={acc:.4} lr={}",
        report.steps, report.stopped_early, report.best_val_loss, report.val_accuracy,
        report.options.learning_rate,
    );
}

#[test]
#[ignore]
fn pilot_long_training() {
    use optimas::bench::checks::CHECK_QUAD_POINTS;
    use optimas::bench::verify::{verify_alignment_theorem, AlignmentOptions};
    use optimas::seed::{indexed_seed, named_seed};
    let seed = 42u64;
    let sys = make_system(SyntheticSystemId::S1, false);
    let config = anchor_config(SyntheticSystemId::S1, &sys.graph);
    let train_inputs = sample_inputs(&sys.doc, 167, named_seed(seed, "align_train_inputs"));
    let mut dataset = PreferenceDataset::new(Vec::new(), config.snapshot_id());
    for k in [1usize, 2, 3] {
        dataset.extend(
            build_preferences(
                &sys.graph,
                &config,
                &train_inputs,
                k,
                &PreferenceOptions {
                    mc_rollouts: 50,
                    seed: indexed_seed(named_seed(seed, "align_prefs"), k as u64),
                    ..PreferenceOptions::default()
                },
            )
            .unwrap(),
        );
    }
    for (epochs, patience) in [(800usize, 2048usize), (2000, 6000)] {
        let mut net = RewardNet::for_graph(&sys.graph, named_seed(seed, "align_net"));
        let report = train_offline(
            &mut net,
            &dataset,
            &TrainOptions {
                epochs,
                patience,
                seed: named_seed(seed, "align_train"),
                ..TrainOptions::default()
            },
        )
        .unwrap();
        let eval_inputs = sample_inputs(&sys.doc, 25, named_seed(seed, "align_eval"));
        let rep = verify_alignment_theorem(
            &sys.graph,
            &config,
            &net,
            &eval_inputs,
            &AlignmentOptions {
                quad_points: CHECK_QUAD_POINTS,
                seed: named_seed(seed, "align_opts"),
                ..AlignmentOptions::default()
            },
        )
        .unwrap();
        println!(
            "epochs={epochs} patience={patience}: steps={} early={} val_acc={:?} pooled_spearman={:.4} pooled_sign={:.4}",
            report.steps, report.stopped_early, report.val_accuracy, rep.pooled_spearman, rep.pooled_sign_agreement
        );
        for c in &rep.per_component {
            println!("  comp {}: spearman={:.4} sign={:.4}", c.component, c.spearman, c.sign_agreement);
        }
    }
}

#[test]
#[ignore]
fn pilot_probe_component_two() {
    use optimas::bench::checks::CHECK_QUAD_POINTS;
    use optimas::bench::oracle::exact_conditional_reward;
    use optimas::seed::{indexed_seed, named_seed};
    use optimas::system::exec::partial_execute;
    use optimas::ValueVec;
    let seed = 42u64;
    let sys = make_system(SyntheticSystemId::S1, false);
    let config = anchor_config(SyntheticSystemId::S1, &sys.graph);
    let train_inputs = sample_inputs(&sys.doc, 167, named_seed(seed, "align_train_inputs"));
    let mut dataset = PreferenceDataset::new(Vec::new(), config.snapshot_id());
    for k in [1usize, 2, 3] {
        dataset.extend(
            build_preferences(
                &sys.graph, &config, &train_inputs, k,
                &PreferenceOptions {
                    mc_rollouts: 50,
                    seed: indexed_seed(named_seed(seed, "align_prefs"), k as u64),
                    ..PreferenceOptions::default()
                },
            ).unwrap(),
        );
    }
    // Training-pair sanity for component 2: labels vs exact conditional.
    let mut label_ok = 0;
    let mut label_n = 0;
    for r in dataset.records.iter().filter(|r| r.component == 2) {
        label_n += 1;
        if r.gap >= 0.0 {
            label_ok += 1;
        }
    }
    println!("comp2 training: {label_n} records, non-negative gaps {label_ok}");
    let mut net = RewardNet::for_graph(&sys.graph, named_seed(seed, "align_net"));
    train_offline(
        &mut net,
        &dataset,
        &TrainOptions { epochs: 400, seed: named_seed(seed, "align_train"), ..TrainOptions::default() },
    )
    .unwrap();
    // Per-component training accuracy.
    for k in [1usize, 2, 3] {
        let recs: Vec<_> = dataset.records.iter().filter(|r| r.component == k).cloned().collect();
        let acc = pairwise_accuracy(&net, &recs).unwrap();
        println!("comp{k} train accuracy {acc:.4}");
    }
    // Probe score vs exact over a y2 grid at two contexts.
    for x in [0.6f64, -0.6] {
        let partial = partial_execute(&sys.graph, &config, &ValueVec::from(vec![x]), 9, 2).unwrap();
        let y1 = partial.target_input[0];
        println!("context x={x} y1={y1:.4}");
        for dy in [-0.2f64, -0.1, -0.03, 0.0, 0.03, 0.1, 0.2] {
            let y2 = ValueVec::from(vec![y1 + dy]);
            let s = net.score(2, &partial.target_input, &y2).unwrap();
            let e = exact_conditional_reward(&sys.graph, &config, &partial, &y2, CHECK_QUAD_POINTS).unwrap();
            println!("  y2={:.4} score={s:+.4} exact={e:.4}", y1 + dy);
        }
    }
}

#[test]
#[ignore]
fn pilot_component_two_alone() {
    use optimas::reward::NetArchitecture;
    use optimas::seed::{indexed_seed, named_seed};
    let seed = 42u64;
    let sys = make_system(SyntheticSystemId::S1, false);
    let config = anchor_config(SyntheticSystemId::S1, &sys.graph);
    let train_inputs = sample_inputs(&sys.doc, 167, named_seed(seed, "align_train_inputs"));
    let ds = build_preferences(
        &sys.graph, &config, &train_inputs, 2,
        &PreferenceOptions {
            mc_rollouts: 50,
            seed: indexed_seed(named_seed(seed, "align_prefs"), 2),
            ..PreferenceOptions::default()
        },
    ).unwrap();
    // Direct label sanity: preferred output closer to x + 0.05.
    let mut closer = 0;
    for (r, x) in ds.records.iter().zip(train_inputs.iter()) {
        let t = x[0] + 0.05;
        if (r.y_plus[0] - t).abs() <= (r.y_minus[0] - t).abs() {
            closer += 1;
        }
    }
    println!("labels where y_plus is closer to target: {closer}/{}", ds.len());
    let arch = NetArchitecture {
        heads: vec![2],
        ..NetArchitecture::for_graph(&sys.graph)
    };
    let mut net = RewardNet::init(arch, 5);
    let report = train_offline(
        &mut net,
        &PreferenceDataset::new(ds.records.clone(), ds.snapshot_id),
        &TrainOptions { epochs: 400, seed: 11, ..TrainOptions::default() },
    ).unwrap();
    let acc = pairwise_accuracy(&net, &ds.records).unwrap();
    println!("comp2 alone: steps={} val_acc={:?} train_acc={acc:.4}", report.steps, report.val_accuracy);
}

#[test]
#[ignore]
fn pilot_alpha_sweep() {
    use optimas::bench::checks::{check_alignment, AlignmentBudget};
    for alpha in [32.0f64, 48.0, 64.0, 96.0, f64::INFINITY] {
        let budget = AlignmentBudget {
            label_alpha: alpha,
            ..AlignmentBudget::default()
        };
        let r = check_alignment(SyntheticSystemId::S1, 42, &budget).unwrap();
        let per: Vec<String> = r
            .learned
            .per_component
            .iter()
            .map(|c| format!("{}:{:.3}/{:.3}", c.component, c.spearman, c.sign_agreement))
            .collect();
        println!(
            "alpha={alpha}: pooled_spearman={:.4} pooled_sign={:.4} per=[{}]",
            r.learned.pooled_spearman,
            r.learned.pooled_sign_agreement,
            per.join(" ")
        );
    }
}
