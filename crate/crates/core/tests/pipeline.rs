//! Cross-module integration checks: the solve → reduce → synthesize →
//! simulate pipeline, agreement between the three coordinate systems, and
//! the randomized solver property suites.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use xfermax::linalg::{dot, norm2, spectral_decompose, trace_inner, SymMatrix};
use xfermax::lowrank::{numerical_rank, rank_reduce, RANK_REL_TOL};
use xfermax::oracles::{analytic_2x2, analytic_3chain};
use xfermax::problem::{random_spec, ProblemSpec, RadialState};
use xfermax::sdp::{certify, solve, SolveStatus, SolverConfig};
use xfermax::simulate::{
    radial_projection, simulate_p, simulate_r, simulate_xy, IntegratorConfig, StopReason,
    Trajectory,
};
use xfermax::synthesis::{
    aligned_xy_state, epsilon_kick, schedule_from_solution, ControlSchedule, FeedbackLaw,
};

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

/// solve → rank-reduce → schedule for a validated instance.
fn pipeline(spec: &ProblemSpec, gap_tol: f64) -> (f64, SymMatrix, ControlSchedule) {
    let sdp = spec.build_constraints().sdp_problem();
    let cfg = SolverConfig {
        gap_tol,
        ..SolverConfig::default()
    };
    let sol = solve(&sdp, &cfg);
    assert_eq!(sol.status, SolveStatus::Optimal);
    let reduced = rank_reduce(&sdp, &sol.m).unwrap();
    let schedule = schedule_from_solution(&reduced, 1).unwrap();
    (sol.objective_value, reduced, schedule)
}

#[test]
fn solver_agrees_with_the_two_state_closed_form() {
    for k in 0..20 {
        let xi = 0.1 + (5.0 - 0.1) * k as f64 / 19.0;
        let spec = ProblemSpec::chain(2, xi, vec![1.0, 0.0]).unwrap();
        let sdp = spec.build_constraints().sdp_problem();
        let sol = solve(&sdp, &SolverConfig::default());
        assert_eq!(sol.status, SolveStatus::Optimal, "xi={xi}");
        let expect = analytic_2x2(xi).unwrap().p_gain;
        assert!(
            close(sol.objective_value, expect, 1e-6),
            "xi={xi}: {} vs {expect}",
            sol.objective_value
        );
    }
}

#[test]
fn limiting_chain_converges_from_finite_seeds() {
    let form = analytic_3chain(1.0).unwrap();
    let mut errors = Vec::new();
    for delta in [1e-2, 1e-3] {
        let spec = ProblemSpec::chain(3, 1.0, vec![1.0, delta * delta, delta * delta]).unwrap();
        let sdp = spec.build_constraints().sdp_problem();
        let sol = solve(&sdp, &SolverConfig::default());
        assert_eq!(sol.status, SolveStatus::Optimal, "delta={delta}");
        let efficiency = (sol.objective_value + delta * delta).sqrt();
        errors.push((efficiency - form.efficiency).abs());
    }
    assert!(errors[0] <= 1e-2, "delta=1e-2 error {}", errors[0]);
    assert!(errors[1] <= 3e-3, "delta=1e-3 error {}", errors[1]);
    // monotone approach
    assert!(errors[1] <= errors[0]);
}

#[test]
fn random_instances_solve_with_certificates() {
    let mut rng = StdRng::seed_from_u64(2024);
    let cfg = SolverConfig::default();
    for trial in 0..100 {
        let n = 2 + trial % 5; // 2..=6
        let spec = random_spec(n, &mut rng);
        assert!(spec.validate().pass());
        let sdp = spec.build_constraints().sdp_problem();
        let sol = solve(&sdp, &cfg);
        assert_eq!(sol.status, SolveStatus::Optimal, "trial {trial} n {n}");

        // dissipation bound and seed dominance
        let supplied: f64 = spec.p0()[..n - 1].iter().sum();
        assert!(sol.objective_value <= supplied + 1e-7, "trial {trial}");
        let seed = spec.feasible_seed();
        let seed_obj = trace_inner(&sdp.objective, &seed).unwrap();
        assert!(sol.objective_value >= seed_obj - 1e-9, "trial {trial}");

        // residuals and certificate
        assert!(sol.primal_residual <= 1e-8);
        let cert = certify(&sdp, &sol, &cfg);
        assert!(cert.pass, "trial {trial}: {:?}", cert.failed);
        assert!(cert.gap <= 1e-7);
    }
}

#[test]
fn objective_is_invariant_under_coupling_rescaling() {
    let mut rng = StdRng::seed_from_u64(55);
    for _ in 0..10 {
        let n = rng.gen_range(2..=5);
        let spec = random_spec(n, &mut rng);
        let base = solve(
            &spec.build_constraints().sdp_problem(),
            &SolverConfig::default(),
        );
        assert_eq!(base.status, SolveStatus::Optimal);
        for c in [0.5, 2.0] {
            let mut a = spec.coupling().clone();
            for i in 0..n {
                for j in 0..n {
                    a.set(i, j, c * a.get(i, j));
                }
            }
            let scaled = ProblemSpec::new(a, spec.p0().to_vec(), None, None).unwrap();
            let sol = solve(
                &scaled.build_constraints().sdp_problem(),
                &SolverConfig::default(),
            );
            assert_eq!(sol.status, SolveStatus::Optimal);
            assert!(
                close(sol.objective_value, base.objective_value, 1e-7),
                "c={c}: {} vs {}",
                sol.objective_value,
                base.objective_value
            );
        }
    }
}

#[test]
fn squared_amplitude_bound_from_the_dissipation_operator() {
    // trace of any optimal solution obeys tr(M)·λ_min(−(A+Aᵀ)) ≤ Σ p0 − gain
    let mut rng = StdRng::seed_from_u64(77);
    for _ in 0..20 {
        let n = rng.gen_range(2..=5);
        let spec = random_spec(n, &mut rng);
        let sdp = spec.build_constraints().sdp_problem();
        let sol = solve(&sdp, &SolverConfig::default());
        assert_eq!(sol.status, SolveStatus::Optimal);
        let mut b = SymMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                if j >= i {
                    b.set_sym(
                        i,
                        j,
                        -(spec.coupling().get(i, j) + spec.coupling().get(j, i)),
                    );
                }
            }
        }
        let lam_min = spectral_decompose(&b).unwrap().min_eigenvalue();
        assert!(lam_min > 0.0);
        let supplied: f64 = spec.p0()[..n - 1].iter().sum();
        let budget = (supplied - sol.objective_value) / lam_min;
        assert!(sol.m.trace() <= budget + 1e-6);
    }
}

#[test]
fn radial_and_squared_walks_agree_on_the_optimal_line() {
    // rank-1 case: squaring the radial closed loop and reparameterizing by
    // the rescaled clock reproduces the straight squared-amplitude line
    let spec = ProblemSpec::chain(2, 1.0, vec![1.0, 0.0]).unwrap();
    let (_, _, schedule) = pipeline(&spec, 1e-10);
    let p_line = simulate_p(spec.coupling(), &schedule, spec.p0());

    let law = FeedbackLaw::from_direction(&schedule.segments[0].direction).unwrap();
    let r0 = epsilon_kick(&RadialState::new(vec![1.0, 0.0]).unwrap(), &law, 1e-3);
    // dense recording keeps the trapezoid clock well below the tolerance
    let cfg = IntegratorConfig {
        tprime_target: Some((1.0 - 1e-4) * schedule.total_duration),
        max_step: Some(40.0 / 8000.0),
        ..IntegratorConfig::default()
    };
    let traj = simulate_r(spec.coupling(), &schedule, &r0, 40.0, &cfg).unwrap();
    assert_eq!(traj.stop, StopReason::TargetReached);

    let tprimes = traj.tprime.as_ref().unwrap();
    let kick_sq = 1e-6; // the kick enters the squared start of coordinate 2
    for (row, tp) in traj.states.iter().zip(tprimes.iter()) {
        let line = p_line.sample(*tp);
        let p_sim: Vec<f64> = row.iter().map(|r| r * r).collect();
        assert!(
            close(p_sim[0], line[0], 1e-4),
            "p1 {} vs {}",
            p_sim[0],
            line[0]
        );
        assert!(
            close(p_sim[1], line[1] + kick_sq, 1e-4),
            "p2 {} vs {}",
            p_sim[1],
            line[1]
        );
    }
}

#[test]
fn bilinear_loop_reproduces_the_radial_loop() {
    // the central cross-system check, on both worked instances
    for (spec, kick) in [
        (ProblemSpec::chain(2, 1.0, vec![1.0, 0.0]).unwrap(), 1e-3),
        (
            ProblemSpec::chain(3, 1.0, vec![1.0, 1.0, 0.0]).unwrap(),
            1e-3,
        ),
    ] {
        let (_, _, schedule) = pipeline(&spec, 1e-10);
        let law = FeedbackLaw::from_direction(&schedule.segments[0].direction).unwrap();
        let r0 = epsilon_kick(
            &RadialState::new(spec.p0().iter().map(|p| p.sqrt()).collect()).unwrap(),
            &law,
            kick,
        );
        // the radial run is the interpolated reference, so record it densely
        let ref_cfg = IntegratorConfig {
            tprime_target: Some((1.0 - 1e-4) * schedule.total_duration),
            max_step: Some(40.0 / 8000.0),
            ..IntegratorConfig::default()
        };
        let cfg = IntegratorConfig {
            tprime_target: Some((1.0 - 1e-4) * schedule.total_duration),
            ..IntegratorConfig::default()
        };
        let r_traj = simulate_r(spec.coupling(), &schedule, &r0, 40.0, &ref_cfg).unwrap();
        assert_eq!(r_traj.stop, StopReason::TargetReached);

        let s0 = aligned_xy_state(&law, &r0);
        let xy_traj = simulate_xy(spec.coupling(), &schedule, &s0, 40.0, &cfg).unwrap();
        assert_eq!(
            xy_traj.stop,
            StopReason::TargetReached,
            "n={} floor {}",
            spec.n(),
            xy_traj.floor_steps
        );

        // sup-norm agreement of the radial projections over time
        let radial = radial_projection(&xy_traj);
        let mut sup = 0.0f64;
        for (t, r_xy) in xy_traj.times.iter().zip(radial.iter()) {
            if *t > *r_traj.times.last().unwrap() {
                break;
            }
            let r_ref = r_traj.sample(*t);
            for (a, b) in r_xy.iter().zip(r_ref.iter()) {
                sup = sup.max((a - b).abs());
            }
        }
        assert!(sup <= 1e-4, "n={}: sup deviation {sup}", spec.n());

        // norm dissipation along the bilinear flow
        for w in 1..xy_traj.len() {
            assert!(
                norm2(&xy_traj.states[w]) <= norm2(&xy_traj.states[w - 1]) + 1e-9,
                "norm increased at step {w}"
            );
        }
    }
}

#[test]
fn bilinear_loop_attains_the_two_state_efficiency() {
    let spec = ProblemSpec::chain(2, 1.0, vec![1.0, 0.0]).unwrap();
    let (gain, reduced, schedule) = pipeline(&spec, 1e-10);
    let law = FeedbackLaw::from_direction(&schedule.segments[0].direction).unwrap();
    let r0 = epsilon_kick(&RadialState::new(vec![1.0, 0.0]).unwrap(), &law, 1e-3);
    let s0 = aligned_xy_state(&law, &r0);
    let cfg = IntegratorConfig {
        tprime_target: Some((1.0 - 1e-4) * schedule.total_duration),
        ..IntegratorConfig::default()
    };
    let traj = simulate_xy(spec.coupling(), &schedule, &s0, 40.0, &cfg).unwrap();
    let end = traj.endpoint();
    let r2_final = end[1].hypot(end[3]);
    let x0 = 2f64.sqrt() - 1.0;
    assert!(close(r2_final, x0, 2e-3), "{} vs {}", r2_final, x0);

    // a final phase rotation moves the whole amplitude into the first
    // component pair with no loss: the amplitude already is the efficiency
    assert!(close(gain, x0 * x0, 1e-6));
    assert_eq!(numerical_rank(&reduced, RANK_REL_TOL), 1);

    // the rescaled clock converges to the schedule duration
    let tp = traj.final_tprime().unwrap();
    assert!(close(tp, schedule.total_duration, 1e-3));

    // a fast rotation through the residual phase angle parks the whole
    // amplitude in the in-phase component with negligible loss
    let final_state =
        xfermax::problem::BilinearState::new(vec![end[0], end[1]], vec![end[2], end[3]]).unwrap();
    let residual_angle = final_state.y[1].atan2(final_state.x[1]);
    assert!(residual_angle > 0.0);
    let speed = 1e4;
    let rot = xfermax::simulate::simulate_xy_with(
        spec.coupling(),
        |_, _| vec![0.0, -speed],
        &final_state,
        residual_angle / speed,
        &IntegratorConfig {
            max_step: Some(1e-7),
            ..IntegratorConfig::default()
        },
    )
    .unwrap();
    let rot_end = rot.endpoint();
    assert!(rot_end[1] >= x0 - 2e-3, "x2 after rotation {}", rot_end[1]);
    assert!(rot_end[3].abs() <= 1e-3, "y2 residue {}", rot_end[3]);
}

#[test]
fn three_state_loop_holds_the_amplitude_ratio() {
    // equal starting amplitudes stay equal along the optimal closed loop
    let spec = ProblemSpec::chain(3, 1.0, vec![1.0, 1.0, 0.0]).unwrap();
    let (_, _, schedule) = pipeline(&spec, 1e-10);
    let law = FeedbackLaw::from_direction(&schedule.segments[0].direction).unwrap();
    let r0 = epsilon_kick(&RadialState::new(vec![1.0, 1.0, 0.0]).unwrap(), &law, 1e-3);
    let cfg = IntegratorConfig {
        rel_tol: 1e-10,
        abs_tol: 1e-12,
        tprime_target: Some((1.0 - 1e-3) * schedule.total_duration),
        ..IntegratorConfig::default()
    };
    let traj = simulate_r(spec.coupling(), &schedule, &r0, 60.0, &cfg).unwrap();
    assert_eq!(traj.stop, StopReason::TargetReached);
    for s in &traj.states {
        assert!(s[0] > 0.0);
        let ratio = s[1] / s[0];
        assert!(close(ratio, 1.0, 1e-6), "ratio {ratio}");
    }
    // the peak amplitude approaches the reported transfer value
    let end = traj.endpoint();
    assert!(close(end[2], 0.5311, 1e-3), "r3 {}", end[2]);
}

#[test]
fn radial_peak_never_exceeds_the_program_bound() {
    let mut rng = StdRng::seed_from_u64(4242);
    for _ in 0..5 {
        let spec = random_spec(3, &mut rng);
        let (gain, _, schedule) = pipeline(&spec, 1e-9);
        if schedule.is_empty() {
            continue;
        }
        let law = FeedbackLaw::from_direction(&schedule.segments[0].direction).unwrap();
        let r0 = epsilon_kick(
            &RadialState::new(spec.p0().iter().map(|p| p.sqrt()).collect()).unwrap(),
            &law,
            1e-3,
        );
        let cfg = IntegratorConfig {
            tprime_target: Some((1.0 - 1e-4) * schedule.total_duration),
            ..IntegratorConfig::default()
        };
        let traj = simulate_r(spec.coupling(), &schedule, &r0, 60.0, &cfg).unwrap();
        let bound = (spec.p0()[2] + gain).sqrt() + 2e-3; // kick allowance
        for s in &traj.states {
            assert!(s[2] <= bound + 1e-6, "r_n {} above bound {bound}", s[2]);
        }
    }
}

#[test]
fn reach_slices_dominate_toward_the_start() {
    // shrinking the demanded drain never loses feasibility
    let spec = ProblemSpec::chain(2, 1.0, vec![1.0, 0.2]).unwrap();
    let cfg = SolverConfig::default();
    let mut last = f64::NEG_INFINITY;
    for k in 0..=4 {
        let p1 = k as f64 * 0.25;
        let slice = xfermax::reachable::reach_slice(&spec, &[p1], &cfg).unwrap();
        assert!(slice.feasible(), "p1={p1}");
        let _ = last; // peak is not monotone in general; feasibility is the claim
        last = slice.p_n_max.unwrap();
    }
    // the stay-put slice retains at least the starting value
    let stay = xfermax::reachable::reach_slice(&spec, &[1.0], &cfg).unwrap();
    assert!(stay.p_n_max.unwrap() >= 0.2 - 1e-8);
}

#[test]
fn schedule_reconstruction_matches_solver_output() {
    let mut rng = StdRng::seed_from_u64(11);
    for _ in 0..10 {
        let n = rng.gen_range(2..=5);
        let spec = random_spec(n, &mut rng);
        let (_, reduced, schedule) = pipeline(&spec, 1e-9);
        let acc = schedule.accumulate();
        for i in 0..n {
            for j in 0..n {
                assert!(close(acc.get(i, j), reduced.get(i, j), 1e-9));
            }
        }
        assert!(close(schedule.total_duration, reduced.trace(), 1e-9));
    }
}

#[test]
fn realized_amplitude_velocity_is_parallel_to_the_direction() {
    // along the closed loop, (u_i r_i) stays parallel to the active direction
    let spec = ProblemSpec::chain(3, 1.0, vec![1.0, 1.0, 0.0]).unwrap();
    let (_, _, schedule) = pipeline(&spec, 1e-9);
    let m = &schedule.segments[0].direction;
    let law = FeedbackLaw::from_direction(m).unwrap();
    let r0 = epsilon_kick(&RadialState::new(vec![1.0, 1.0, 0.0]).unwrap(), &law, 1e-3);
    let cfg = IntegratorConfig {
        tprime_target: Some(0.9 * schedule.total_duration),
        ..IntegratorConfig::default()
    };
    let traj: Trajectory = simulate_r(spec.coupling(), &schedule, &r0, 40.0, &cfg).unwrap();
    let controls = traj.controls.as_ref().unwrap();
    for (state, u) in traj.states.iter().zip(controls.iter()) {
        let ur: Vec<f64> = u.iter().zip(state.iter()).map(|(a, b)| a * b).collect();
        let ur_norm = norm2(&ur);
        if ur_norm < 1e-12 {
            continue;
        }
        let alignment = dot(&ur, m) / ur_norm;
        assert!(close(alignment.abs(), 1.0, 1e-9), "alignment {alignment}");
    }
}
