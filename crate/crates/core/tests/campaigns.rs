use popdyn::engine::{rng_from_seed, ProtocolKind, TerminalClass};
use popdyn::experiments::{
    aggregate, equivalence_campaign, figure2_campaign, figure3_campaign, margin_threshold_campaign,
    read_csv, run_campaign, write_csv, AggregateRecord, BetaSpec, ExperimentConfig, Figure2Options,
    TrajectoryRow, TrialRecord, AGGREGATE_HEADER, FIGURE2_BETAS,
};
use popdyn::oracle::{binomial_tail_exact, sample_majority_trial};

#[test]
fn dbamc_converges_at_auto_margin() {
    let mut cfg = ExperimentConfig::new(ProtocolKind::Dbamc, 300, 300);
    cfg.trials = 200;
    cfg.base_seed = 1;
    let res = run_campaign(&cfg).unwrap();
    let cell = &res.cells[0];
    assert!(
        cell.aggregate.conv_rate >= 0.97,
        "rate {}",
        cell.aggregate.conv_rate
    );
    // without faults a converged run is an absorbed all-X population
    for t in &cell.trials {
        if t.converged {
            assert_eq!(t.terminal_class, TerminalClass::AllX);
            assert_eq!(t.sample_error, 0.0);
        }
    }
}

#[test]
fn csv_output_is_reproducible_and_reaggregates_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::new(ProtocolKind::Dbamc, 80, 80);
    cfg.fault.leak_model = popdyn::engine::LeakModel::Adversarial;
    cfg.fault.beta = vec![BetaSpec::Value(0.0), BetaSpec::LnNOverN].into();
    cfg.trials = 12;
    cfg.samples_per_trial = 7;
    cfg.base_seed = 2;

    let write = |tag: &str| {
        let res = run_campaign(&cfg).unwrap();
        let trials = dir.path().join(format!("trials_{tag}.csv"));
        let aggs = dir.path().join(format!("aggregate_{tag}.csv"));
        write_csv(&res.trials(), &trials).unwrap();
        write_csv(&res.aggregates(), &aggs).unwrap();
        (std::fs::read(trials).unwrap(), std::fs::read(aggs).unwrap())
    };
    let first = write("a");
    assert_eq!(first, write("b"));

    let parsed: Vec<TrialRecord> = read_csv(&dir.path().join("trials_a.csv")).unwrap();
    let emitted: Vec<AggregateRecord> = read_csv(&dir.path().join("aggregate_a.csv")).unwrap();
    assert_eq!(parsed.len(), 24);
    let recomputed: Vec<AggregateRecord> = parsed
        .chunks(12)
        .zip(&emitted)
        .map(|(rows, agg)| aggregate(&agg.group_key, rows, 7))
        .collect();
    let path = dir.path().join("aggregate_re.csv");
    write_csv(&recomputed, &path).unwrap();
    assert_eq!(std::fs::read(path).unwrap(), first.1);
}

#[test]
fn empty_record_list_is_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    write_csv::<AggregateRecord>(&[], &path).unwrap();
    assert_eq!(
        std::fs::read_to_string(&path).unwrap(),
        format!("{}\n", AGGREGATE_HEADER.join(","))
    );
}

#[test]
fn unwritable_path_reports_the_path() {
    let err = write_csv::<AggregateRecord>(&[], std::path::Path::new("/no/such/dir/out.csv"))
        .unwrap_err();
    assert!(err.to_string().contains("/no/such/dir/out.csv"));
}

#[test]
fn json_config_file_runs() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    std::fs::write(
        &path,
        r#"{"protocol": "dbam", "n_inputs": [40, 60], "margin": 6, "trials": 3, "base_seed": 4}"#,
    )
    .unwrap();
    let cfg = ExperimentConfig::from_path(&path).unwrap();
    let res = run_campaign(&cfg).unwrap();
    assert_eq!(res.cells.len(), 2);
    assert_eq!(res.trials().len(), 6);
}

#[test]
fn figure2_grid_and_absorbing_zero_error() {
    let cells = figure2_campaign(&Figure2Options::default()).unwrap();
    assert_eq!(cells.len(), 12);
    let dir = tempfile::tempdir().unwrap();
    for c in &cells {
        let snaps = &c.result.trajectories[0];
        assert_eq!(snaps.first().unwrap().step, 0);
        assert_eq!(snaps.last().unwrap().step, c.result.cell.horizon);
        if c.beta == BetaSpec::Value(0.0) {
            let hit = snaps
                .iter()
                .position(|s| s.sample_error == 0.0)
                .expect("beta = 0 run reaches zero sample error");
            assert!(snaps[hit..].iter().all(|s| s.sample_error == 0.0));
        }
        let rows: Vec<TrajectoryRow> = snaps.iter().map(TrajectoryRow::from).collect();
        let path = dir.path().join(c.file_name());
        write_csv(&rows, &path).unwrap();
        let back: Vec<TrajectoryRow> = read_csv(&path).unwrap();
        assert_eq!(back, rows);
    }
}

#[test]
fn larger_populations_sample_better_under_scaled_leaks() {
    let beta = FIGURE2_BETAS[3];
    let reps = 50u64;
    let mut wins = 0;
    for r in 0..reps {
        let opts = Figure2Options {
            sizes: vec![300, 5000],
            betas: vec![beta],
            base_seed: 1000 + r,
            ..Figure2Options::default()
        };
        let cells = figure2_campaign(&opts).unwrap();
        let small = cells[0].result.trials[0].sample_error;
        let large = cells[1].result.trials[0].sample_error;
        if large < small {
            wins += 1;
        }
    }
    assert!(wins as f64 >= 0.8 * reps as f64, "{wins}/{reps}");
}

#[test]
fn figure3_rows_carry_wilson_intervals() {
    let res = figure3_campaign(20, 5).unwrap();
    assert_eq!(res.cells.len(), 7);
    for c in &res.cells {
        let a = &c.aggregate;
        assert!(a.wilson_lo <= a.mean_sample_success && a.mean_sample_success <= a.wilson_hi);
        assert_eq!(a.trials, 20);
    }
}

#[test]
fn unanimous_margin_always_converges() {
    let res = margin_threshold_campaign(100, 100, &[100], 100, 6).unwrap();
    assert_eq!(res.cells[0].aggregate.conv_rate, 1.0);
}

#[test]
fn convergence_rate_rises_with_margin() {
    let margins = [2, 10, 20, 40, 60];
    let res = margin_threshold_campaign(200, 200, &margins, 200, 7).unwrap();
    let rates: Vec<(f64, f64)> = res
        .cells
        .iter()
        .map(|c| {
            let k = c.trials.len() as u64;
            let hits = c.trials.iter().filter(|t| t.converged).count() as u64;
            popdyn::experiments::wilson_interval(hits, k)
        })
        .collect();
    for i in 0..rates.len() {
        for j in i + 1..rates.len() {
            assert!(
                rates[j].1 >= rates[i].0,
                "margin {} rate interval {:?} below margin {} interval {:?}",
                margins[j],
                rates[j],
                margins[i],
                rates[i]
            );
        }
    }
}

#[test]
fn more_byzantine_agents_mean_more_error() {
    let res = equivalence_campaign(400, 0.005, &[1.0, 2.0, 4.0], 300, 8).unwrap();
    let counts: Vec<u64> = res.byzantine.iter().map(|s| s.byz_count).collect();
    assert_eq!(counts, vec![2, 4, 8]);
    let errs: Vec<f64> = res.byzantine.iter().map(|s| s.mean_sample_error).collect();
    assert!(errs[0] < errs[1] && errs[1] < errs[2], "{errs:?}");
    let rows = res.rows();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0].side, "leak");
}

#[test]
fn sample_majority_matches_exact_tail() {
    let trials = 100_000u64;
    for (n, margin, s) in [(9u64, 1u64, 15u64), (9, 1, 16), (21, 3, 40)] {
        let p = (n + margin) as f64 / (2 * n) as f64;
        // ties count as errors, so the error event is X <= S/2
        let expected = binomial_tail_exact(s, p, s / 2).unwrap();
        let mut rng = rng_from_seed(n * 1000 + s);
        let errors = (0..trials)
            .filter(|_| !sample_majority_trial(n, margin, s, &mut rng).unwrap())
            .count() as f64;
        let rate = errors / trials as f64;
        let se = (expected * (1.0 - expected) / trials as f64).sqrt();
        assert!(
            (rate - expected).abs() < 3.0 * se,
            "n={n} S={s}: {rate} vs {expected}"
        );
    }
}
