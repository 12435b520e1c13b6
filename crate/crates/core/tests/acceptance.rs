//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs without the libtest harness so every line is printed as the
//! criterion finishes; the process exits nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::time::Instant;

use popdyn::engine::{
    apply_rule, derive_seed, leak, make_protocol, protocol_for, rng_from_seed, run,
    sample_interaction, step, AgentState, ByzMode, Configuration, FaultSpec, LeakModel,
    ProtocolKind, ProtocolSpec, StepClass, StopRule, TerminalClass, NUM_SLOTS,
};
use popdyn::experiments::{
    equivalence_campaign, figure3_campaign, leak_robustness_config, margin_threshold_campaign,
    mean_sample_error, median_sample_error, run_campaign, write_rows, BetaSpec, ExperimentConfig,
    MarginSpec, Sweep, FIGURE3_TRIALS, FIGURE3_WORKERS,
};
use popdyn::oracle::{
    absorption_probabilities, binomial_tail_exact, min_samples, tail_lower_bound,
};
use statrs::distribution::{ChiSquared, ContinuousCDF};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn check(name: &str, f: impl FnOnce() -> Verdict) -> bool {
    let start = Instant::now();
    let v = f();
    println!(
        "{} {name}: {} [{:.1}s]",
        if v.pass { "PASS" } else { "FAIL" },
        v.detail,
        start.elapsed().as_secs_f64()
    );
    v.pass
}

fn no_fault_dbam() -> Verdict {
    let mut cfg = ExperimentConfig::new(ProtocolKind::Dbam, 1000, 0);
    cfg.trials = 200;
    cfg.base_seed = 101;
    let res = run_campaign(&cfg).unwrap();
    let cell = &res.cells[0];
    let wins = cell
        .trials
        .iter()
        .filter(|t| t.terminal_class == TerminalClass::AllX)
        .count();
    let rate = wins as f64 / cell.trials.len() as f64;
    verdict(
        cell.cell.margin == 84 && cell.cell.horizon == 27_632 && rate >= 0.97,
        format!(
            "n=1000 margin={} horizon={} majority consensus {wins}/200 = {rate:.3} (need >= 0.97)",
            cell.cell.margin, cell.cell.horizon
        ),
    )
}

fn dbamc_convergence() -> Verdict {
    let mut cfg = ExperimentConfig::new(ProtocolKind::Dbamc, 500, 500);
    cfg.trials = 200;
    cfg.base_seed = 102;
    let res = run_campaign(&cfg).unwrap();
    let cell = &res.cells[0];
    let wins = cell.trials.iter().filter(|t| t.final_x == 500).count();
    let rate = wins as f64 / cell.trials.len() as f64;
    verdict(
        rate >= 0.97,
        format!(
            "m=n=500 margin={} horizon={} x=m in {wins}/200 = {rate:.3} (need >= 0.97)",
            cell.cell.margin, cell.cell.horizon
        ),
    )
}

fn leak_robustness() -> Verdict {
    let n = 1000;
    let cfg = leak_robustness_config(
        n,
        vec![BetaSpec::Value(0.0), BetaSpec::InvN, BetaSpec::LnNOverN],
        500,
        1000,
        103,
    );
    let res = run_campaign(&cfg).unwrap();
    let [zero, inv, ln] = [&res.cells[0], &res.cells[1], &res.cells[2]];
    let means: Vec<f64> = [zero, inv, ln]
        .iter()
        .map(|c| mean_sample_error(c))
        .collect();
    let median = median_sample_error(ln);
    // success intervals must separate in the opposite order of the errors
    let gap = |lo: &popdyn::experiments::CellResult, hi: &popdyn::experiments::CellResult| {
        hi.aggregate.wilson_hi < lo.aggregate.wilson_lo
    };
    let trend = means[2] > means[1] && means[1] > means[0] && gap(zero, inv) && gap(inv, ln);
    let level = means[2] <= 0.2 && median <= 0.1;
    verdict(
        trend && level,
        format!(
            "mean error beta=0: {:.5}, 1/n: {:.5}, ln n/n: {:.5} (median {:.5}); success wilson \
             [{:.5},{:.5}] [{:.5},{:.5}] [{:.5},{:.5}]",
            means[0],
            means[1],
            means[2],
            median,
            zero.aggregate.wilson_lo,
            zero.aggregate.wilson_hi,
            inv.aggregate.wilson_lo,
            inv.aggregate.wilson_hi,
            ln.aggregate.wilson_lo,
            ln.aggregate.wilson_hi
        ),
    )
}

fn figure3() -> Verdict {
    let res = figure3_campaign(FIGURE3_TRIALS, 104).unwrap();
    let aggs: Vec<_> = res.cells.iter().map(|c| &c.aggregate).collect();
    let at_600 = res
        .cells
        .iter()
        .find(|c| c.cell.m_workers == 600)
        .map(|c| c.aggregate.mean_sample_success)
        .unwrap_or(0.0);
    let mut monotone = true;
    for i in 0..aggs.len() {
        for j in i + 1..aggs.len() {
            if aggs[j].wilson_hi < aggs[i].wilson_lo {
                monotone = false;
            }
        }
    }
    let curve: Vec<String> = res
        .cells
        .iter()
        .map(|c| {
            format!(
                "m={}:{:.4}",
                c.cell.m_workers, c.aggregate.mean_sample_success
            )
        })
        .collect();
    verdict(
        res.cells.len() == FIGURE3_WORKERS.len() && at_600 >= 0.9 && monotone,
        format!(
            "{} trials per point; success at m=600 {at_600:.4} (need >= 0.9); nondecreasing up to \
             overlap: {monotone}; {}",
            FIGURE3_TRIALS,
            curve.join(" ")
        ),
    )
}

fn absorption_frequencies(
    init: &Configuration,
    spec: &ProtocolSpec,
    trials: u64,
    base: u64,
) -> BTreeMap<TerminalClass, u64> {
    let fault = FaultSpec::none();
    let mut counts = BTreeMap::new();
    for i in 0..trials {
        let mut rng = rng_from_seed(derive_seed(base, i));
        let out = run(
            init.clone(),
            spec,
            &fault,
            &mut rng,
            u64::MAX,
            StopRule::AtConvergence,
            0,
        );
        assert!(
            spec.is_absorbing(&out.record.final_config),
            "run ended before absorption"
        );
        *counts.entry(out.record.terminal).or_insert(0) += 1;
    }
    counts
}

fn oracle_equivalence() -> Verdict {
    let spec = make_protocol(ProtocolKind::Dbam);
    let trials = 20_000u64;
    let mut pass = true;
    let mut parts = Vec::new();
    for (k, init) in [
        Configuration::standard(3, 2, 1),
        Configuration::standard(4, 2, 0),
        Configuration::standard(2, 2, 2),
    ]
    .iter()
    .enumerate()
    {
        let exact = absorption_probabilities(init, &spec, &FaultSpec::none()).unwrap();
        let seen = absorption_frequencies(init, &spec, trials, 105 + k as u64);
        let mut worst = 0.0f64;
        for class in [
            TerminalClass::AllX,
            TerminalClass::AllY,
            TerminalClass::AllBlankDeadlock,
        ] {
            let p = exact.get(&class).copied().unwrap_or(0.0);
            let f = seen.get(&class).copied().unwrap_or(0) as f64 / trials as f64;
            let se = (p * (1.0 - p) / trials as f64).sqrt();
            let z = if se > 0.0 {
                (f - p).abs() / se
            } else if f == p {
                0.0
            } else {
                f64::INFINITY
            };
            worst = worst.max(z);
        }
        pass &= worst <= 3.0;
        parts.push(format!(
            "{init}: P(ALL_X)={:.4} P(ALL_Y)={:.4} worst |z|={worst:.2}",
            exact.get(&TerminalClass::AllX).copied().unwrap_or(0.0),
            exact.get(&TerminalClass::AllY).copied().unwrap_or(0.0)
        ));
    }
    verdict(pass, format!("{trials} trials each; {}", parts.join("; ")))
}

fn deadlock_edge() -> Verdict {
    let spec = make_protocol(ProtocolKind::Dbam);
    let init = Configuration::standard(1, 1, 0);
    let exact = absorption_probabilities(&init, &spec, &FaultSpec::none()).unwrap();
    let seen = absorption_frequencies(&init, &spec, 1000, 106);
    let freq = seen
        .get(&TerminalClass::AllBlankDeadlock)
        .copied()
        .unwrap_or(0) as f64
        / 1000.0;
    let p = exact
        .get(&TerminalClass::AllBlankDeadlock)
        .copied()
        .unwrap_or(0.0);
    verdict(
        freq == 1.0 && (p - 1.0).abs() < 1e-12,
        format!("observed ALL_BLANK_DEADLOCK frequency {freq} over 1000 trials, exact {p}"),
    )
}

fn lower_bound_numerics() -> Verdict {
    // sample counts across 10..10^4, all even so that the tail event
    // X <= floor(S/2) is exactly X <= S/2
    let mut sizes: Vec<u64> = (10..=200).step_by(2).collect();
    let mut s = 200.0f64;
    while s < 10_000.0 {
        s *= 1.05;
        sizes.push((s as u64).min(10_000) & !1);
    }
    sizes.dedup();
    let deltas: Vec<f64> = (1..=30).map(|i| i as f64 / 100.0).collect();
    let mut violations = 0;
    let mut points = 0;
    for &s in &sizes {
        for &d in &deltas {
            let bound = tail_lower_bound(s, d).unwrap();
            let exact = binomial_tail_exact(s, 0.5 + d, s / 2).unwrap();
            points += 1;
            if bound > exact {
                violations += 1;
            }
        }
    }
    let mut ratios = Vec::new();
    for n in [8u64, 16, 32] {
        let a = min_samples(n, 2).unwrap();
        let b = min_samples(2 * n, 2).unwrap();
        ratios.push((n, a, b, b as f64 / a as f64));
    }
    let growth = ratios.iter().all(|r| r.3 >= 3.0);
    let text: Vec<String> = ratios
        .iter()
        .map(|(n, a, b, r)| format!("S({})/S({n}) = {b}/{a} = {r:.2}", 2 * n))
        .collect();
    verdict(
        violations == 0 && growth,
        format!(
            "bound <= exact tail at {}/{points} grid points (S in 10..=10000, delta in 0.01..=0.30); {}",
            points - violations,
            text.join(", ")
        ),
    )
}

fn margin_contrast() -> Verdict {
    let n = 400u64;
    let pop = 2.0 * n as f64;
    let mut wide = (pop * pop.ln()).sqrt().ceil() as i64;
    if wide % 2 != 0 {
        wide += 1;
    }
    let res = margin_threshold_campaign(n, n, &[2, wide], 300, 107).unwrap();
    let r2 = res.cells[0].aggregate.conv_rate;
    let rw = res.cells[1].aggregate.conv_rate;
    verdict(
        res.failures.is_empty() && rw - r2 >= 0.3,
        format!("n=m=400, 300 trials: rate(margin=2) = {r2:.3}, rate(margin={wide}) = {rw:.3}, gap {:.3} (need >= 0.3)", rw - r2),
    )
}

fn leak_byzantine_equivalence() -> Verdict {
    let res = equivalence_campaign(1000, 0.002, &[2.0], 500, 108).unwrap();
    let leak = res.leak.mean_sample_error;
    let byz = &res.byzantine[0];
    let ratio = res.ratio(byz);
    let in_band = ratio.is_some_and(|r| (0.2..=5.0).contains(&r));
    verdict(
        byz.byz_count == 4 && in_band && leak < 0.1 && byz.mean_sample_error < 0.1,
        format!(
            "N=1000 weak beta=0.002: mean error {leak:.5}; B={} stubborn: mean error {:.5}; ratio {} (need in [0.2, 5], both < 0.1)",
            byz.byz_count,
            byz.mean_sample_error,
            ratio.map_or("undefined".into(), |r| format!("{r:.3}"))
        ),
    )
}

fn conservation() -> Result<(), String> {
    let cases: Vec<(ProtocolKind, Configuration, FaultSpec)> = vec![
        (
            ProtocolKind::Triam,
            Configuration::standard(9, 7, 0),
            FaultSpec::leaks(LeakModel::Adversarial, 0.05),
        ),
        (
            ProtocolKind::Dbam,
            Configuration::standard(6, 5, 3),
            FaultSpec::leaks(LeakModel::Weak, 0.1),
        ),
        (
            ProtocolKind::Dbam,
            Configuration::standard(6, 5, 3).with_stubborn_y(2),
            FaultSpec::leaks(LeakModel::Adversarial, 0.1).with_byzantine(ByzMode::StubbornY, 2),
        ),
        (
            ProtocolKind::Dbamc,
            Configuration::catalytic(5, 3, 2, 2, 6),
            FaultSpec::leaks(LeakModel::Adversarial, 0.2),
        ),
        (
            ProtocolKind::Dbamc,
            Configuration::catalytic(5, 3, 2, 2, 6).with(AgentState::T, 2),
            FaultSpec::leaks(LeakModel::Weak, 0.2).with_byzantine(ByzMode::SuperAdversarial, 2),
        ),
    ];
    for (kind, init, fault) in cases {
        let spec = protocol_for(kind, &fault).unwrap();
        for seed in 0..50 {
            let mut rng = rng_from_seed(seed);
            let mut cfg = init.clone();
            for _ in 0..2000 {
                step(&mut cfg, &spec, &fault, &mut rng);
                let same = cfg.total() == init.total()
                    && cfg.workers() == init.workers()
                    && cfg.count(AgentState::Ix) == init.count(AgentState::Ix)
                    && cfg.count(AgentState::Iy) == init.count(AgentState::Iy)
                    && cfg.count(AgentState::T) == init.count(AgentState::T)
                    && cfg.byz_stubborn_y() == init.byz_stubborn_y();
                if !same {
                    return Err(format!("{kind} from {init} reached {cfg}"));
                }
            }
        }
    }
    Ok(())
}

fn all_tuples(arity: usize) -> Vec<Vec<AgentState>> {
    let mut out = vec![vec![]];
    for _ in 0..arity {
        out = out
            .into_iter()
            .flat_map(|t| {
                AgentState::ALL.iter().map(move |&s| {
                    let mut t = t.clone();
                    t.push(s);
                    t
                })
            })
            .collect();
    }
    out
}

fn null_closure() -> Result<(), String> {
    for kind in [ProtocolKind::Triam, ProtocolKind::Dbam, ProtocolKind::Dbamc] {
        let spec = make_protocol(kind);
        for t in all_tuples(spec.arity()) {
            let catalysts = t.iter().filter(|s| s.is_catalyst()).count();
            let (out, class) = apply_rule(&spec, &t);
            let inert = catalysts >= 2 || spec.lookup(&t).is_none();
            if inert && (out != t || class != StepClass::Null) {
                return Err(format!("{kind}: {t:?} changed to {out:?}"));
            }
        }
    }
    Ok(())
}

fn absorption_scan() -> Result<(), String> {
    let dbamc = make_protocol(ProtocolKind::Dbamc);
    let dbam = make_protocol(ProtocolKind::Dbam);
    for (ix, iy, x) in [(3, 1, 4), (1, 3, 4), (2, 2, 1)] {
        let cfg = Configuration::catalytic(ix, iy, x, 0, 0);
        if !dbamc.is_absorbing(&cfg) {
            return Err(format!("DBAMC {cfg} not absorbing"));
        }
    }
    for cfg in [
        Configuration::standard(5, 0, 0),
        Configuration::standard(0, 5, 0),
        Configuration::standard(0, 0, 5),
    ] {
        if !dbam.is_absorbing(&cfg) {
            return Err(format!("DBAM {cfg} not absorbing"));
        }
    }
    Ok(())
}

/// Doubled `ŷ` of a configuration.
fn y_hat2(cfg: &Configuration) -> i64 {
    2 * cfg.y() as i64 + cfg.b() as i64
}

fn y_hat_algebra() -> Result<(), String> {
    use AgentState::*;
    let base = Configuration::catalytic(4, 4, 4, 4, 4);
    for kind in [ProtocolKind::Dbam, ProtocolKind::Dbamc] {
        let spec = make_protocol(kind);
        let base = if kind == ProtocolKind::Dbam {
            Configuration::standard(4, 4, 4)
        } else {
            base.clone()
        };
        for (before, after) in spec.rules() {
            let mut cfg = base.clone();
            for s in &before {
                cfg = cfg.clone().with(*s, cfg.count(*s) - 1);
            }
            for s in &after {
                cfg = cfg.clone().with(*s, cfg.count(*s) + 1);
            }
            let d = y_hat2(&cfg) - y_hat2(&base);
            let xy = before.contains(&X) && before.contains(&Y);
            let blank = before.contains(&B);
            let ok = if xy {
                d == 0
            } else if blank {
                d.abs() == 1
            } else {
                true
            };
            if !ok {
                return Err(format!(
                    "{kind} rule {before:?} -> {after:?} moved 2*y_hat by {d}"
                ));
            }
        }
    }
    let cfg = Configuration::standard(4, 4, 4);
    let moved = |model: LeakModel, s: AgentState| {
        let out = leak(model, s);
        let next = cfg.clone().with(s, cfg.count(s) - 1);
        let next = next.clone().with(out, next.count(out) + 1);
        y_hat2(&next) - y_hat2(&cfg)
    };
    if moved(LeakModel::Adversarial, X) != 2
        || moved(LeakModel::Weak, X) != 1
        || moved(LeakModel::Weak, B) != 1
    {
        return Err("leak moved y_hat by the wrong amount".into());
    }
    Ok(())
}

fn scheduler_fidelity() -> Result<(), String> {
    let cfg = Configuration::catalytic(5, 3, 7, 4, 6)
        .with(AgentState::T, 2)
        .with_stubborn_y(3);
    let total = cfg.total() as f64;
    for arity in [2usize, 3] {
        let mut rng = rng_from_seed(109 + arity as u64);
        let draws = 100_000u64;
        let mut seen = [0u64; NUM_SLOTS];
        for _ in 0..draws {
            let t = sample_interaction(&cfg, arity, &mut rng).map_err(|e| e.to_string())?;
            seen[t.as_slice()[0].index()] += 1;
        }
        let mut stat = 0.0;
        let mut cats = 0;
        for (&c, &hits) in cfg.slots().iter().zip(&seen) {
            if c == 0 {
                continue;
            }
            cats += 1;
            let expected = draws as f64 * c as f64 / total;
            stat += (hits as f64 - expected).powi(2) / expected;
        }
        let p = 1.0 - ChiSquared::new((cats - 1) as f64).unwrap().cdf(stat);
        if p <= 0.001 {
            return Err(format!("arity {arity}: chi-square {stat:.2}, p = {p:.5}"));
        }
    }
    Ok(())
}

fn determinism() -> Result<(), String> {
    let mut cfg = ExperimentConfig::new(ProtocolKind::Dbamc, 100, 100);
    cfg.fault.leak_model = LeakModel::Adversarial;
    cfg.fault.beta = Sweep(vec![BetaSpec::Value(0.0), BetaSpec::InvN]);
    cfg.margin = Sweep::one(MarginSpec::Auto(1.0));
    cfg.trials = 8;
    let bytes = |cfg: &ExperimentConfig| {
        let mut buf = Vec::new();
        write_rows(&run_campaign(cfg).unwrap().trials(), &mut buf).unwrap();
        buf
    };
    if bytes(&cfg) != bytes(&cfg) {
        return Err("campaign rerun changed its CSV".into());
    }
    let spec = make_protocol(ProtocolKind::Dbam);
    let fault = FaultSpec::leaks(LeakModel::Weak, 0.01);
    let traj = |seed| {
        run(
            Configuration::standard(30, 20, 0),
            &spec,
            &fault,
            &mut rng_from_seed(seed),
            3000,
            StopRule::AtHorizon,
            50,
        )
        .trajectory
    };
    if traj(derive_seed(5, 0)) != traj(derive_seed(5, 0)) {
        return Err("identical seeds gave different trajectories".into());
    }
    if traj(derive_seed(5, 0)) == traj(derive_seed(5, 1)) {
        return Err("different trial streams gave identical trajectories".into());
    }
    Ok(())
}

fn invariant_suite() -> Verdict {
    type Check = fn() -> Result<(), String>;
    let checks: [(&str, Check); 6] = [
        ("conservation", conservation),
        ("null closure", null_closure),
        ("absorption scan", absorption_scan),
        ("y_hat step algebra", y_hat_algebra),
        ("scheduler chi-square", scheduler_fidelity),
        ("seeded determinism", determinism),
    ];
    let mut failed = Vec::new();
    for (name, f) in checks {
        if let Err(e) = f() {
            failed.push(format!("{name}: {e}"));
        }
    }
    verdict(
        failed.is_empty(),
        if failed.is_empty() {
            format!("{} checks passed", checks.len())
        } else {
            failed.join("; ")
        },
    )
}

fn main() {
    let results = [
        check("no-fault DBAM convergence", no_fault_dbam),
        check("DBAMC convergence", dbamc_convergence),
        check("leak robustness (DBAM)", leak_robustness),
        check("success-rate sweep over workers", figure3),
        check("oracle equivalence", oracle_equivalence),
        check("deadlock edge case", deadlock_edge),
        check("lower-bound numerics", lower_bound_numerics),
        check("margin contrast", margin_contrast),
        check("leak/byzantine equivalence", leak_byzantine_equivalence),
        check("invariant suite", invariant_suite),
    ];
    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
