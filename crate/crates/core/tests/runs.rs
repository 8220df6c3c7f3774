use congestion::pressure::PressureLaw;
use congestion::runner::{run_in_memory, run_sweep, RunConfig, SweepPlan};

#[test]
fn traffic_reference_run_stays_below_barrier() {
    let cfg = RunConfig::scenario("traffic_1d").unwrap().with_member(congestion::runner::SweepMember::Eps(1e-2));
    let out = run_in_memory(&cfg).unwrap();
    assert!(out.summary.ok);
    assert!(out.records.len() > 2);
    assert!(out.records.iter().all(|r| r.max_ratio < 1.0));
    assert_eq!(out.records.last().unwrap().t, 0.5);
}

#[test]
fn sweep_rows_match_independent_runs() {
    let mut cfg = RunConfig::scenario("lane_narrowing_1d").unwrap();
    cfg.grid.cells[0] = 50;
    cfg.solver.t_end = 0.1;
    cfg.sweep = Some(SweepPlan {
        eps: Some(vec![1e-3, 1e-2, 1e-4]),
        kappa_delta: None,
    });
    let sweep = run_sweep(&cfg, None).unwrap();
    for row in &sweep.rows {
        let single = run_in_memory(&cfg.with_member(congestion::runner::SweepMember::Eps(row.eps.unwrap())))
            .unwrap()
            .summary;
        let mut a = row.summary.clone();
        a.wall_time = 0.0;
        let mut b = single;
        b.wall_time = 0.0;
        assert_eq!(a, b);
    }
}

#[test]
fn truncated_sweep_records_growing_peak_pressure() {
    let mut cfg = RunConfig::scenario("traffic_1d").unwrap();
    cfg.grid.cells[0] = 100;
    cfg.pressure = PressureLaw::Truncated {
        eps: 1e-3,
        alpha: 2.0,
        beta: 1.0,
        kappa: 1e-3,
        cap_k: 5.0,
        delta: 0.1,
    };
    cfg.sweep = Some(SweepPlan {
        eps: None,
        kappa_delta: Some(vec![[1e-3, 0.1], [1e-3, 0.05], [1e-3, 0.025]]),
    });
    let sweep = run_sweep(&cfg, None).unwrap();
    let deltas: Vec<f64> = sweep.rows.iter().map(|r| r.delta.unwrap()).collect();
    assert_eq!(deltas, [0.1, 0.05, 0.025]);
    assert_eq!(sweep.checks.failed_members, 0);
    assert_eq!(sweep.checks.max_pi_increasing, Some(true), "{:?}", sweep.rows);
}
