//! Temporary calibration pilots (deleted before release).

use optimas::bench::checks::*;
use optimas::bench::SyntheticSystemId;

#[test]
#[ignore]
fn pilot_convergence() {
    for id in [SyntheticSystemId::S1, SyntheticSystemId::S2] {
        let t0 = std::time::Instant::now();
        let report = check_convergence(id, 42, 10, 50).unwrap();
        println!(
            "{id}: pass={} certified={} monotone={} optimum={:.6} ({:?})",
            report.pass,
            report.all_certified,
            report.all_monotone,
            report.optimum_value,
            t0.elapsed()
        );
        for run in &report.runs {
            println!(
                "  seed={} ratio={:.6} cert={} snapped={} violations={} final={:.6}",
                run.seed,
                run.ratio_to_optimum,
                run.certificate_pass,
                run.certificate_snapped,
                run.violations,
                run.final_value
            );
        }
    }
}

#[test]
#[ignore]
fn pilot_alignment() {
    let t0 = std::time::Instant::now();
    let report = check_alignment(SyntheticSystemId::S1, 42, &AlignmentBudget::default()).unwrap();
    println!(
        "alignment: pass={} pairs={} pooled_spearman={:.4} pooled_sign={:.4} oracle={:.4} anti={:.4} ({:?})",
        report.pass,
        report.training_pairs,
        report.learned.pooled_spearman,
        report.learned.pooled_sign_agreement,
        report.oracle_spearman,
        report.anti_oracle_spearman,
        t0.elapsed()
    );
    for c in &report.learned.per_component {
        println!(
            "  component {}: n={} spearman={:.4} sign={:.4}",
            c.component, c.n_pairs, c.spearman, c.sign_agreement
        );
    }
}

#[test]
#[ignore]
fn pilot_shift() {
    let t0 = std::time::Instant::now();
    let report = check_shift(SyntheticSystemId::S2, 42).unwrap();
    println!(
        "shift: pass={} pre={:.4} post={:.4} drop={:.1} recovered_within={} ({:?})",
        report.pass,
        report.pre_accuracy,
        report.post_accuracy,
        report.drop_points,
        report.recovered_within_calls,
        t0.elapsed()
    );
    println!("  recovery: {:?}", report.adaptive.recovery);
    println!("  control:  {:?}", report.control.recovery);
}

#[test]
#[ignore]
fn pilot_learned_loop() {
    use optimas::bench::oracle::{brute_force_objective, exact_objective};
    use optimas::bench::{grid_inputs, make_system, sample_inputs};
    use optimas::optimizer::{run_optimization, LoopOptions};
    let sys = make_system(SyntheticSystemId::S1, false);
    let grid = grid_inputs(&sys.doc, 16);
    let oracle = brute_force_objective(&sys.graph, &grid, 21, 5).unwrap();
    let mut ok = 0;
    let t0 = std::time::Instant::now();
    for seed in 0..10u64 {
        let inputs = sample_inputs(&sys.doc, 90, 1000 + seed);
        let opts = LoopOptions {
            iterations: 40,
            seed,
            mc_rollouts: 10,
            ..LoopOptions::default()
        };
        let out = run_optimization(&sys.graph, &inputs, &opts).unwrap();
        let value = exact_objective(&sys.graph, &out.state.config, &grid, 5).unwrap();
        let ratio = value / oracle.argmax_value;
        println!("  seed={seed} ratio={ratio:.5} config={:?}", out.state.config);
        if ratio >= 0.99 {
            ok += 1;
        }
    }
    println!("learned loop: {ok}/10 reach 0.99x optimum ({:?})", t0.elapsed());
}
