use frl_core::ddp::{policy_search, SearchConfig};
use frl_core::frl::{run_frl, FrlConfig, FrlRun, Problem};
use frl_core::ode::PolicyTable;
use frl_core::systems::{build_lqr, SystemModel};

fn lqr_chain(eta: f64) -> FrlRun {
    let mut cfg = FrlConfig::new(Problem::Lqr, 2, 10, 1e-12);
    cfg.search = SearchConfig::new(eta, 50).unwrap();
    run_frl(&cfg).unwrap()
}

#[test]
fn converged_costs_grow_with_the_order() {
    // ‖m(0)‖² itself grows with N, so the truncated optima rise toward the
    // limit instead of falling; the increments shrink geometrically
    let run = lqr_chain(f64::INFINITY);
    let costs = run.costs();
    assert_eq!(costs.len(), 9);
    for pair in costs.windows(2) {
        assert!(pair[1] >= pair[0] - 1e-9, "{} -> {}", pair[0], pair[1]);
    }
    let head = costs[1] - costs[0];
    let tail = costs[8] - costs[7];
    assert!(tail < 0.05 * head, "increments {head:e} then {tail:e}");
    let spread = (costs[8] - costs[4]) / costs[8];
    assert!(spread < 1e-3, "relative change N=6..10 {spread:e}");
}

#[test]
fn projection_errors_decay_along_each_parity() {
    let run = lqr_chain(f64::INFINITY);
    let p: Vec<(usize, f64)> = run
        .reports
        .iter()
        .map(|r| (r.order, r.projection_error))
        .collect();
    for parity in 0..2 {
        let seq: Vec<f64> = p[1..]
            .iter()
            .filter(|(n, _)| n % 2 == parity)
            .map(|&(_, e)| e)
            .collect();
        assert!(
            seq.windows(2).all(|w| w[1] < w[0]),
            "parity {parity}: {seq:?}"
        );
    }
    assert!(
        p.iter().filter(|(n, _)| *n >= 7).all(|&(_, e)| e < 1e-2),
        "{p:?}"
    );

    let early = lqr_chain(1.0);
    let q: Vec<(usize, f64)> = early
        .reports
        .iter()
        .map(|r| (r.order, r.projection_error))
        .collect();
    assert!(
        q.iter().filter(|(n, _)| *n >= 7).all(|&(_, e)| e < 1e-2),
        "{q:?}"
    );
}

#[test]
fn warm_start_matches_cold_start() {
    let run = lqr_chain(f64::INFINITY);
    let search = SearchConfig::new(f64::INFINITY, 50).unwrap();
    for report in &run.reports {
        let model = build_lqr(report.order);
        let cold = policy_search(
            &model,
            &PolicyTable::zeros(report.policy.grid().to_owned(), 1),
            model.initial_moments(),
            &search,
        )
        .unwrap();
        assert!(
            report.cost <= cold.cost + 1e-6,
            "N={}: {} vs {}",
            report.order,
            report.cost,
            cold.cost
        );
    }
}

#[test]
fn early_stopped_chain_reaches_the_optimum_in_four_hierarchies() {
    let run = lqr_chain(1.0);
    let iters: Vec<usize> = run.reports.iter().map(|r| r.iterations).collect();
    assert_eq!(&iters[..4], &[1, 1, 1, 1]);
    assert!(iters[4..].iter().all(|&k| k == 50));
    let reference = lqr_chain(f64::INFINITY);
    for (a, b) in run.reports[4..].iter().zip(&reference.reports[4..]) {
        assert!((a.cost - b.cost).abs() <= 1e-9 * b.cost);
    }
}

#[test]
fn epsilon_ends_the_chain() {
    let mut cfg = FrlConfig::new(Problem::Lqr, 2, 10, 1e-2);
    cfg.search = SearchConfig::new(f64::INFINITY, 50).unwrap();
    let run = run_frl(&cfg).unwrap();
    assert!(run.converged);
    assert_eq!(run.final_report().order, 5);
    assert!(run.final_report().projection_error <= 1e-2);
}
