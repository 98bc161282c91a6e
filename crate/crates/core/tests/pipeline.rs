use biharmonic_core::asymptotics::{analyze, AsymptoticsReport};
use biharmonic_core::io::{
    from_json, read_trajectory_csv, to_json, write_json_file, write_trajectory_csv,
};
use biharmonic_core::oracles::{entire_q7_threshold_beta, exact_entire_q7};
use biharmonic_core::phase_space::{phase_trajectory, P2};
use biharmonic_core::radial_ode::{integrate, Controls, ProblemParams};
use biharmonic_core::shooting::{find_beta_star_cached, BetaStarCache, ShootingOptions};

#[test]
fn trajectory_file_round_trip() {
    let params = ProblemParams::new(1.5, 4.0).unwrap().with_r_stop(1e4);
    let traj = integrate(&params, &Controls::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    write_trajectory_csv(std::fs::File::create(&path).unwrap(), &traj.samples).unwrap();
    let back = read_trajectory_csv(std::fs::File::open(&path).unwrap()).unwrap();
    assert_eq!(back, traj.samples);
}

#[test]
fn report_file_round_trip() {
    let params = ProblemParams::new(2.0, 4.0).unwrap().with_r_stop(1e5);
    let traj = integrate(&params, &Controls::default()).unwrap();
    let report = analyze(&traj).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested/report.json");
    write_json_file(&path, &report).unwrap();
    let back: AsymptoticsReport = from_json(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(back, report);
    assert_eq!(to_json(&back).unwrap(), to_json(&report).unwrap());
}

#[test]
fn cache_survives_reopen() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cache.json");
    let opts = ShootingOptions::default();
    let mut cache = BetaStarCache::open(&path).unwrap();
    let (entry, hit) = find_beta_star_cached(7.0, 1e-5, &opts, &mut cache).unwrap();
    assert!(!hit);
    assert!((entry.beta_star() - entire_q7_threshold_beta()).abs() < 1e-4);

    let mut reopened = BetaStarCache::open(&path).unwrap();
    let (again, hit) = find_beta_star_cached(7.0, 1e-5, &opts, &mut reopened).unwrap();
    assert!(hit);
    assert_eq!(again, entry);
    // a looser request is served by the tighter entry
    assert!(
        find_beta_star_cached(7.0, 1e-3, &opts, &mut reopened)
            .unwrap()
            .1
    );
}

#[test]
fn exact_q7_solution_end_to_end() {
    // u(0) = 1, Δu(0) = 3/√15 is the threshold solution itself: it grows linearly.
    let params = ProblemParams::new(7.0, entire_q7_threshold_beta())
        .unwrap()
        .with_r_stop(1e2);
    let traj = integrate(&params, &Controls::default()).unwrap();
    for s in traj.samples.iter().step_by(7) {
        let e = exact_entire_q7(s.r, true);
        assert!(
            (s.u - e.u).abs() <= 1e-7 * e.u,
            "r = {}: {} vs {}",
            s.r,
            s.u,
            e.u
        );
    }
}

#[test]
fn global_solution_approaches_p2() {
    let params = ProblemParams::new(3.0, 3.0).unwrap().with_r_stop(1e6);
    let traj = integrate(&params, &Controls::default()).unwrap();
    assert!(traj.is_global());
    let path = phase_trajectory(&traj, 3.0).unwrap();
    assert!(path.points.last().unwrap().distance_to(&P2) < 1e-3);
}
