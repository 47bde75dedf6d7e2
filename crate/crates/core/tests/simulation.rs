use std::f64::consts::{FRAC_PI_3, PI};

use qsv::certbank::{certify, CertificateQuery, Protocol};
use qsv::oracle::{exact_stats, random_mixture};
use qsv::rng::SeedPlan;
use qsv::sim::{run_experiment, simulate_rounds, summarize, StoppingRule};
use qsv::sources::{honest_iid, rho1, rho2, NoiseSpec, ProductSequenceMixture};
use qsv::strategy::build_singlet_strategy;

fn test_set(n: usize) -> Vec<(String, ProductSequenceMixture)> {
    let noise = |f: f64| NoiseSpec::new(f).unwrap();
    let mut v = vec![
        (
            "honest(0.9)".to_string(),
            honest_iid(n + 1, noise(0.9)).unwrap(),
        ),
        ("rho1(0.98)".into(), rho1(n, noise(0.98)).unwrap()),
        ("rho2(pi)".into(), rho2(n, PI, NoiseSpec::IDEAL).unwrap()),
        (
            "rho2(pi/3,0.95)".into(),
            rho2(n, FRAC_PI_3, noise(0.95)).unwrap(),
        ),
    ];
    for t in 0..2u64 {
        let d = random_mixture(n + 1, &mut SeedPlan::new(t, 9).child(n as u64).stream(0));
        v.push((format!("random#{t}"), d.build().unwrap()));
    }
    v
}

#[test]
fn simulation_agrees_with_exact_oracle() {
    let strat = build_singlet_strategy();
    let rounds = 100_000;
    for n in [2usize, 5, 10] {
        for (i, (name, m)) in test_set(n).into_iter().enumerate() {
            let seeds = SeedPlan::new(2024, 1).child((n * 16 + i) as u64);
            let out = simulate_rounds(
                &m,
                n,
                0,
                &strat,
                Protocol::Dqsv,
                StoppingRule::FixedRounds { rounds },
                seeds,
            )
            .unwrap();
            for k in 0..=2u64 {
                let s = summarize(&out, n as u64, k, Protocol::Dqsv, &strat).unwrap();
                let exact = exact_stats(&m, k, &strat).unwrap();
                let se = (exact.p_k * (1.0 - exact.p_k) / rounds as f64).sqrt();
                assert!(
                    (s.p_hat - exact.p_k).abs() <= 4.0 * se + 1e-12,
                    "{name} N={n} k={k}: p̂ {} vs {}",
                    s.p_hat,
                    exact.p_k
                );
                let (Some(t), Some(me)) = (
                    s.conditional_fidelity_truth,
                    s.conditional_fidelity_measured,
                ) else {
                    continue;
                };
                if t.samples < 100 {
                    continue;
                }
                let comb = (t.std_error.powi(2) + me.std_error.powi(2)).sqrt();
                assert!(
                    (t.mean - me.mean).abs() <= 4.0 * comb + 1e-12,
                    "{name} N={n} k={k}: truth {} vs measured {}",
                    t.mean,
                    me.mean
                );
                let f = exact.conditional_fidelity.unwrap();
                assert!(
                    (t.mean - f).abs() <= 4.0 * t.std_error + 1e-12,
                    "{name} N={n} k={k}"
                );
                if k < n as u64 && s.p_hat_ci[0] > 0.0 {
                    let cert = certify(
                        &CertificateQuery::dqsv(n as u64, k, s.p_hat_ci[0], strat.lambda())
                            .unwrap(),
                    )
                    .unwrap()
                    .fidelity_bound;
                    assert!(t.mean >= cert - 4.0 * t.std_error, "{name} N={n} k={k}");
                }
            }
        }
    }
}

#[test]
fn rho2_two_tests_conditional_fidelity() {
    let strat = build_singlet_strategy();
    let m = rho2(2, PI, NoiseSpec::IDEAL).unwrap();
    let exact = exact_stats(&m, 0, &strat).unwrap();
    let e = run_experiment(
        &m,
        2,
        0,
        &strat,
        Protocol::Dqsv,
        StoppingRule::FixedRounds { rounds: 1_000_000 },
        SeedPlan::new(3, 3),
    )
    .unwrap();
    let t = e.summary.conditional_fidelity_truth.unwrap();
    let f = exact.conditional_fidelity.unwrap();
    assert!((t.mean - f).abs() <= 4.0 * t.std_error, "{} vs {f}", t.mean);
}

#[test]
fn leftover_index_is_uniform() {
    let strat = build_singlet_strategy();
    let m = honest_iid(6, NoiseSpec::new(0.9).unwrap()).unwrap();
    let out = simulate_rounds(
        &m,
        5,
        0,
        &strat,
        Protocol::Dqsv,
        StoppingRule::FixedRounds { rounds: 100_000 },
        SeedPlan::new(8, 8),
    )
    .unwrap();
    let mut counts = [0f64; 6];
    for o in &out {
        counts[o.leftover_index.unwrap()] += 1.0;
    }
    let expected = out.len() as f64 / 6.0;
    let chi2: f64 = counts
        .iter()
        .map(|c| (c - expected).powi(2) / expected)
        .sum();
    // 99% quantile of χ² with 5 degrees of freedom.
    assert!(chi2 < 15.086, "χ² = {chi2}");
}

#[test]
fn rho1_at_one_hundred_tests() {
    let strat = build_singlet_strategy();
    let m = rho1(100, NoiseSpec::IDEAL).unwrap();
    let e = run_experiment(
        &m,
        100,
        0,
        &strat,
        Protocol::Dqsv,
        StoppingRule::FixedRounds { rounds: 10_000 },
        SeedPlan::new(1, 1),
    )
    .unwrap();
    let s = &e.summary;
    assert!(s.p_hat_ci[0] <= 2.0 / 3.0 && 2.0 / 3.0 <= s.p_hat_ci[1]);
    assert!(s.conditional_fidelity_truth.unwrap().mean > 0.999);
    for k in 1..=3 {
        let s = summarize(&e.outcomes, 100, k, Protocol::Dqsv, &strat).unwrap();
        assert!(s.conditional_fidelity_truth.unwrap().mean > 0.999);
    }
}

#[test]
fn until_accepted_stops_at_target() {
    let strat = build_singlet_strategy();
    let m = rho2(5, PI, NoiseSpec::IDEAL).unwrap();
    let stop = StoppingRule::UntilAccepted {
        target: 1000,
        max_rounds: 100_000,
    };
    let e = run_experiment(&m, 5, 1, &strat, Protocol::Dqsv, stop, SeedPlan::new(4, 4)).unwrap();
    assert_eq!(e.summary.accepted, 1000);
    assert!(e.outcomes.last().unwrap().accepted(1));
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let strat = build_singlet_strategy();
    let m = rho1(20, NoiseSpec::new(0.98).unwrap()).unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                run_experiment(
                    &m,
                    20,
                    2,
                    &strat,
                    Protocol::Dqsv,
                    StoppingRule::UntilAccepted {
                        target: 3000,
                        max_rounds: 50_000,
                    },
                    SeedPlan::new(99, 1),
                )
                .unwrap()
            })
    };
    let a = run(1);
    let b = run(4);
    assert_eq!(a.outcomes, b.outcomes);
    assert_eq!(
        serde_json::to_vec(&a.summary).unwrap(),
        serde_json::to_vec(&b.summary).unwrap()
    );
    let c = run(3);
    assert_eq!(a.summary, c.summary);
}
