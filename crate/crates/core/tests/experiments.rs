use lowrank_tomo::bounds::theorem2_bound;
use lowrank_tomo::experiments::*;
use lowrank_tomo::qubit::FisherElement;

fn config(kind: ExperimentKind) -> ExperimentConfig {
    ExperimentConfig { experiment: kind, seed: 0, ..ExperimentConfig::default() }
}

#[test]
fn fisher_eigenvalues_concentrate_at_large_k() {
    let c = ExperimentConfig { lambda2_values: vec![0.5], k_values: vec![2000], ..config(ExperimentKind::FisherConcentration) };
    let rows = run_fisher_concentration(&c).unwrap();
    let trials_in_band = (0..c.n_states)
        .filter(|&t| rows.iter().filter(|r| r.trial == t).all(|r| r.in_band()))
        .count();
    assert!(trials_in_band as f64 >= 0.9 * c.n_states as f64, "{trials_in_band}");
    assert!(rows.iter().all(|r| (r.mean_eigenvalue - 2.0 / 3.0).abs() < 1e-12));
}

#[test]
fn largest_eigenvalue_fails_to_concentrate_near_pure() {
    let c = ExperimentConfig { lambda2_values: vec![0.005], k_values: vec![100], ..config(ExperimentKind::FisherConcentration) };
    let rows = run_fisher_concentration(&c).unwrap();
    let top: Vec<_> = rows.iter().filter(|r| r.eig_index == 2).collect();
    let outside = top.iter().filter(|r| !r.in_band()).count();
    assert!(2 * outside > top.len(), "{outside}/{}", top.len());
}

#[test]
fn mse_trace_concentrates_at_large_k() {
    let c = ExperimentConfig { lambda2_values: vec![0.5], k_values: vec![500], ..config(ExperimentKind::MseConcentration) };
    let rows = run_mse_concentration(&c).unwrap();
    let inside = rows.iter().filter(|r| r.in_band()).count();
    assert!(inside as f64 >= 0.9 * rows.len() as f64);
    // G = 2I for qubits, so the normalized run halves every trace.
    let half = run_mse_concentration(&ExperimentConfig { fig2_normalize: true, ..c.clone() }).unwrap();
    for (a, b) in rows.iter().zip(&half) {
        assert!((a.mse_trace.unwrap() - 2.0 * b.mse_trace.unwrap()).abs() < 1e-12);
    }
}

#[test]
fn settings_needed_for_mse_concentration_plateaus() {
    let ks = vec![20, 30, 40, 50, 70, 100, 150, 200, 300];
    let c = ExperimentConfig {
        lambda2_values: vec![0.25, 0.05, 0.005],
        k_values: ks.clone(),
        ..config(ExperimentKind::MseConcentration)
    };
    let rows = run_mse_concentration(&c).unwrap();
    // Smallest k from which every larger k keeps >= 90% of trials in band.
    let k_star = |l2: f64| {
        let ok: Vec<bool> = ks
            .iter()
            .map(|&k| {
                let sel: Vec<_> = rows.iter().filter(|r| r.lambda2 == l2 && r.k == k).collect();
                sel.iter().filter(|r| r.in_band()).count() as f64 >= 0.9 * sel.len() as f64
            })
            .collect();
        let first = (0..ks.len()).find(|&i| ok[i..].iter().all(|&b| b)).expect("concentrates within the grid");
        ks[first]
    };
    let (a, b, c) = (k_star(0.25), k_star(0.05), k_star(0.005));
    assert!(a <= c && b <= c, "{a} {b} {c}");
    // A k growing like 1/lambda2 would need 10x more settings here.
    assert!(c <= 4 * b, "{b} {c}");
}

#[test]
fn bound_check_holds_for_pure_states_in_dimension_eight() {
    let c = ExperimentConfig { rank: 1, dim: 8, n_design_draws: 200, ..config(ExperimentKind::BoundCheck) };
    let rows = run_bound_check(&c).unwrap();
    let allowed = c.delta + 3.0 * (c.delta * (1.0 - c.delta) / 200.0).sqrt();
    assert!(exceedance_fraction(&rows) <= allowed);
    assert!(rows.iter().all(|r| r.bound == theorem2_bound(1, 8, c.epsilon)));
}

#[test]
fn table1_rows_pass_and_ranges_fill() {
    let c = ExperimentConfig {
        lambda2_values: vec![0.5, 0.25, 0.1],
        n_mc_samples: 1_000_000,
        ..config(ExperimentKind::Table1Validate)
    };
    let rows = run_table1_validate(&c).unwrap();
    assert_eq!(rows.len(), 18);
    assert!(rows.iter().all(|r| r.pass));
    for r in &rows {
        match r.element {
            FisherElement::Rr | FisherElement::Ii => assert!(r.observed_max >= 3.9, "{r:?}"),
            FisherElement::Dd => assert!(r.observed_max <= 1.0 / (r.lambda2 * (1.0 - r.lambda2))),
            _ => {}
        }
    }
}
