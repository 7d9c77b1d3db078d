//! From an optimal matrix to executable controls: the piecewise-constant
//! direction schedule in rescaled time, the state feedback law realizing a
//! direction on the radial system, and the physical control signals for the
//! bilinear system.

use crate::linalg::{norm2, spectral_decompose, Mat, SymMatrix};
use crate::problem::{BilinearState, RadialState};
use crate::{Error, Result};
use serde::Serialize;

/// Clamp margin keeping |u| strictly below one where square roots of 1 − u²
/// are differentiated.
pub const U_CLAMP: f64 = 1e-12;

/// One leg of the schedule: hold the unit direction for `duration` in
/// rescaled time.
#[derive(Debug, Clone, Serialize)]
pub struct Segment {
    pub duration: f64,
    pub direction: Vec<f64>,
}

/// Piecewise-constant direction schedule. The stored segments form one cycle
/// with durations λ_k/N; the executed schedule repeats the cycle N times, so
/// the accumulated outer products reproduce the source matrix exactly.
#[derive(Debug, Clone, Serialize)]
pub struct ControlSchedule {
    pub segments: Vec<Segment>,
    pub repetitions: usize,
    pub total_duration: f64,
}

impl ControlSchedule {
    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.segments.first().map_or(0, |s| s.direction.len())
    }

    /// Segments of the executed schedule, cycle repeated `repetitions` times.
    pub fn expanded(&self) -> impl Iterator<Item = &Segment> + '_ {
        std::iter::repeat_n(self.segments.iter(), self.repetitions).flatten()
    }

    /// Cumulative rescaled-time boundaries of the executed schedule.
    pub fn boundaries(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.segments.len() * self.repetitions);
        let mut acc = 0.0;
        for seg in self.expanded() {
            acc += seg.duration;
            out.push(acc);
        }
        out
    }

    /// Σ duration · m mᵀ over the executed schedule.
    pub fn accumulate(&self) -> SymMatrix {
        let n = self.dim();
        let mut m = SymMatrix::zeros(n);
        for seg in self.expanded() {
            m.add_outer(&seg.direction, seg.duration);
        }
        m
    }
}

/// Decomposes a positive semidefinite matrix into its schedule: one segment
/// per positive eigenpair with duration λ_k/n_reps, cycled n_reps times.
/// A zero matrix yields an empty schedule (no motion).
pub fn schedule_from_solution(m_opt: &SymMatrix, n_reps: usize) -> Result<ControlSchedule> {
    if n_reps == 0 {
        return Err(Error::InvalidInput(
            "repetition count must be at least 1".into(),
        ));
    }
    let dec = spectral_decompose(m_opt)?;
    let floor = 1e-12 * dec.max_eigenvalue().max(1.0);
    let mut segments = Vec::new();
    let mut total = 0.0;
    for (lam, vec) in dec.eigenvalues.iter().zip(dec.eigenvectors.iter()) {
        if *lam <= floor {
            continue;
        }
        // Deterministic sign: largest-magnitude component positive.
        let pivot = argmax_abs(vec);
        let sign = if vec[pivot] >= 0.0 { 1.0 } else { -1.0 };
        let direction: Vec<f64> = vec.iter().map(|v| sign * v).collect();
        segments.push(Segment {
            duration: lam / n_reps as f64,
            direction,
        });
        total += lam;
    }
    Ok(ControlSchedule {
        segments,
        repetitions: n_reps,
        total_duration: total,
    })
}

/// Rate of change of the squared amplitudes under a constant unit direction:
/// dp_i/dt′ = 2 m_i (A m)_i.
pub fn p_rates(a: &Mat, m: &[f64]) -> Vec<f64> {
    let am = a.mul_vec(m);
    m.iter()
        .zip(am.iter())
        .map(|(mi, ami)| 2.0 * mi * ami)
        .collect()
}

/// Outcome of the repetition search.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RepetitionChoice {
    pub n_reps: usize,
    /// False when even the cap leaves a negative excursion.
    pub satisfied: bool,
}

/// Smallest power-of-two repetition count whose exact piecewise-linear
/// squared-amplitude trajectory stays nonnegative (within 1e-9). Rank ≤ 1
/// solutions need no repetition: their trajectory is the straight line.
pub fn choose_repetitions(a: &Mat, m_opt: &SymMatrix, p0: &[f64], cap: usize) -> RepetitionChoice {
    if crate::lowrank::numerical_rank(m_opt, crate::lowrank::RANK_REL_TOL) <= 1 {
        return RepetitionChoice {
            n_reps: 1,
            satisfied: true,
        };
    }
    let mut n_reps = 1usize;
    loop {
        if let Ok(schedule) = schedule_from_solution(m_opt, n_reps) {
            if min_vertex_value(a, &schedule, p0) >= -1e-9 {
                return RepetitionChoice {
                    n_reps,
                    satisfied: true,
                };
            }
        }
        if n_reps >= cap {
            return RepetitionChoice {
                n_reps: cap,
                satisfied: false,
            };
        }
        n_reps = (n_reps * 2).min(cap);
    }
}

/// Minimum coordinate value over all vertices of the exact piecewise-linear
/// trajectory (per-segment rates are constant, so vertices are extremal).
fn min_vertex_value(a: &Mat, schedule: &ControlSchedule, p0: &[f64]) -> f64 {
    let mut p = p0.to_vec();
    let mut low = p.iter().copied().fold(f64::INFINITY, f64::min);
    for seg in schedule.expanded() {
        let rates = p_rates(a, &seg.direction);
        for (pi, rate) in p.iter_mut().zip(rates.iter()) {
            *pi += seg.duration * rate;
        }
        low = low.min(p.iter().copied().fold(f64::INFINITY, f64::min));
    }
    low
}

/// Feedback realization of one direction: the pivot is the largest-magnitude
/// component, ratios are s_i = m_i/m_pivot. The normalizer max_i |s_i r_p/r_i|
/// keeps every control in [−1, 1] by construction.
#[derive(Debug, Clone, Serialize)]
pub struct FeedbackLaw {
    pub pivot: usize,
    pub ratios: Vec<f64>,
}

impl FeedbackLaw {
    pub fn from_direction(m: &[f64]) -> Result<Self> {
        let norm = norm2(m);
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidInput(
                "direction must be a nonzero vector".into(),
            ));
        }
        let pivot = argmax_abs(m);
        let ratios = m.iter().map(|v| v / m[pivot]).collect();
        Ok(FeedbackLaw { pivot, ratios })
    }
}

fn argmax_abs(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    best
}

/// The controls realizing the law at radial state r. Any vanishing amplitude
/// that the law needs makes the state stationary: all controls are zero
/// (the caller escapes such points with [`epsilon_kick`]).
pub fn feedback_controls(law: &FeedbackLaw, r: &RadialState) -> Vec<f64> {
    let n = law.ratios.len();
    debug_assert_eq!(n, r.r.len());
    let stationary = law
        .ratios
        .iter()
        .zip(r.r.iter())
        .any(|(s, ri)| *s != 0.0 && *ri == 0.0);
    if stationary {
        return vec![0.0; n];
    }
    let rp = r.r[law.pivot];
    let q: Vec<f64> = law
        .ratios
        .iter()
        .zip(r.r.iter())
        .map(|(s, ri)| if *s == 0.0 { 0.0 } else { s * rp / ri })
        .collect();
    let normalizer = q.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    debug_assert!(normalizer >= 1.0);
    q.iter().map(|qi| qi / normalizer).collect()
}

/// Controls and their exact time derivatives along the closed loop, obtained
/// by differentiating the feedback formula through the radial dynamics
/// (chain rule), never by finite differences.
pub fn feedback_rates(law: &FeedbackLaw, r: &RadialState, a: &Mat) -> (Vec<f64>, Vec<f64>) {
    let n = law.ratios.len();
    let u = feedback_controls(law, r);
    if u.iter().all(|&v| v == 0.0) {
        return (u, vec![0.0; n]);
    }
    // radial velocities under the current controls
    let ur: Vec<f64> = u.iter().zip(r.r.iter()).map(|(ui, ri)| ui * ri).collect();
    let g = a.mul_vec(&ur);
    let rdot: Vec<f64> = u.iter().zip(g.iter()).map(|(ui, gi)| ui * gi).collect();

    let rp = r.r[law.pivot];
    let rp_dot = rdot[law.pivot];
    let q: Vec<f64> = law
        .ratios
        .iter()
        .zip(r.r.iter())
        .map(|(s, ri)| if *s == 0.0 { 0.0 } else { s * rp / ri })
        .collect();
    let q_dot: Vec<f64> = (0..n)
        .map(|i| {
            let s = law.ratios[i];
            if s == 0.0 {
                0.0
            } else {
                s * (rp_dot * r.r[i] - rp * rdot[i]) / (r.r[i] * r.r[i])
            }
        })
        .collect();
    let k_star = argmax_abs(&q);
    let normalizer = q[k_star].abs();
    let normalizer_dot = q_dot[k_star] * q[k_star].signum();
    let u_dot: Vec<f64> = (0..n)
        .map(|i| (q_dot[i] * normalizer - q[i] * normalizer_dot) / (normalizer * normalizer))
        .collect();
    (u, u_dot)
}

/// Replaces every vanishing amplitude the law depends on by `eps`, escaping
/// the stationary point of the feedback at exact zeros.
pub fn epsilon_kick(r0: &RadialState, law: &FeedbackLaw, eps: f64) -> RadialState {
    debug_assert!(eps > 0.0);
    let r =
        r0.r.iter()
            .zip(law.ratios.iter())
            .map(|(ri, s)| if *ri == 0.0 && *s != 0.0 { eps } else { *ri })
            .collect();
    RadialState { r }
}

/// Physical control signals maintaining a prescribed control trajectory on
/// the bilinear system:
///
/// ```text
/// v_i = u̇_i/√(1−u_i²) − g_i·√(1−u_i²)/r_i ,   g_i = Σ_j a_ij u_j r_j
/// ```
///
/// which is −φ̇ − (ṙ/r)·tan φ for the phase φ = arccos u, written so that
/// u_i = 0 stays finite. The controls are clamped away from |u| = 1.
pub fn physical_controls(u: &[f64], r: &RadialState, u_dot: &[f64], a: &Mat) -> Result<Vec<f64>> {
    let n = u.len();
    let ur: Vec<f64> = u.iter().zip(r.r.iter()).map(|(ui, ri)| ui * ri).collect();
    let g = a.mul_vec(&ur);
    let mut v = vec![0.0; n];
    for i in 0..n {
        if r.r[i] == 0.0 {
            if u_dot[i] != 0.0 {
                return Err(Error::SingularControl(format!(
                    "cannot steer the phase of vanished amplitude {}",
                    i + 1
                )));
            }
            continue;
        }
        let ui = u[i].clamp(-(1.0 - U_CLAMP), 1.0 - U_CLAMP);
        let s_phi = (1.0 - ui * ui).sqrt();
        v[i] = u_dot[i] / s_phi - g[i] * s_phi / r.r[i];
    }
    Ok(v)
}

/// Bilinear state consistent with the commanded controls at radial state r:
/// y_i = u_i r_i with the rest of the amplitude in x_i ≥ 0.
pub fn aligned_xy_state(law: &FeedbackLaw, r: &RadialState) -> BilinearState {
    let u = feedback_controls(law, r);
    let x = u
        .iter()
        .zip(r.r.iter())
        .map(|(ui, ri)| {
            let c = ui.clamp(-(1.0 - U_CLAMP), 1.0 - U_CLAMP);
            ri * (1.0 - c * c).sqrt()
        })
        .collect();
    let y = u
        .iter()
        .zip(r.r.iter())
        .map(|(ui, ri)| ri * ui.clamp(-(1.0 - U_CLAMP), 1.0 - U_CLAMP))
        .collect();
    BilinearState { x, y }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::spectral_synthesis;
    use crate::problem::ProblemSpec;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn rank_one_schedule_is_a_single_direction() {
        let raw = [0.4546, 0.8257, 0.3339];
        let scale = norm2(&raw);
        let unit: Vec<f64> = raw.iter().map(|v| v / scale).collect();
        let m = spectral_synthesis(&[0.8589], &[unit]);
        for reps in [1, 4] {
            let schedule = schedule_from_solution(&m, reps).unwrap();
            assert_eq!(schedule.segments.len(), 1);
            assert!(close(schedule.total_duration, 0.8589, 1e-9));
            assert!(close(
                schedule.segments[0].duration * reps as f64,
                0.8589,
                1e-9
            ));
            assert!(close(schedule.segments[0].direction[1], 0.8257, 1e-3));
        }
    }

    #[test]
    fn zero_matrix_gives_empty_schedule() {
        let schedule = schedule_from_solution(&SymMatrix::zeros(3), 1).unwrap();
        assert!(schedule.is_empty());
        assert_eq!(schedule.total_duration, 0.0);
    }

    #[test]
    fn rank_two_schedule_reconstructs_and_cycles() {
        let mut rng = StdRng::seed_from_u64(8);
        let mut m = SymMatrix::zeros(3);
        for _ in 0..2 {
            let v: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            m.add_outer(&v, rng.gen_range(0.2..1.0));
        }
        let schedule = schedule_from_solution(&m, 4).unwrap();
        assert_eq!(schedule.segments.len(), 2);
        assert_eq!(schedule.expanded().count(), 8);
        let acc = schedule.accumulate();
        for i in 0..3 {
            for j in 0..3 {
                assert!(close(acc.get(i, j), m.get(i, j), 1e-9));
            }
        }
        assert!(close(schedule.total_duration, m.trace(), 1e-9));
        // unit directions
        for seg in &schedule.segments {
            assert!(close(norm2(&seg.direction), 1.0, 1e-12));
        }
    }

    #[test]
    fn repetitions_rank_one_short_circuits() {
        let spec = ProblemSpec::chain(2, 1.0, vec![1.0, 0.0]).unwrap();
        let m = spectral_synthesis(&[0.8], &[vec![0.92387953, 0.38268343]]);
        let choice = choose_repetitions(spec.coupling(), &m, spec.p0(), 4096);
        assert_eq!(choice.n_reps, 1);
        assert!(choice.satisfied);
    }

    #[test]
    fn repetitions_remove_negative_excursion() {
        // Orthonormal drain/refill pair on the middle coordinate of a
        // 3-chain. The drain leg carries the larger weight so it runs first;
        // a single repetition digs the middle coordinate below zero while
        // many short cycles keep every excursion inside the budget.
        let spec = ProblemSpec::chain(3, 1.0, vec![1.0, 0.02, 0.0]).unwrap();
        let drain = vec![0.6, -0.8, 0.0]; // squared-amplitude rate −2.24 on p₂
        let refill = vec![0.8, 0.6, 0.0]; // rate +0.24 on p₂
        let mut m = SymMatrix::zeros(3);
        m.add_outer(&drain, 0.0099);
        m.add_outer(&refill, 0.0095);
        let one = schedule_from_solution(&m, 1).unwrap();
        assert!(min_vertex_value(spec.coupling(), &one, spec.p0()) < -1e-9);
        let choice = choose_repetitions(spec.coupling(), &m, spec.p0(), 4096);
        assert!(choice.satisfied);
        assert!(choice.n_reps >= 2, "chose {}", choice.n_reps);
        let fixed = schedule_from_solution(&m, choice.n_reps).unwrap();
        assert!(min_vertex_value(spec.coupling(), &fixed, spec.p0()) >= -1e-9);
    }

    #[test]
    fn repetitions_large_amplitudes_need_one_cycle() {
        let spec = ProblemSpec::chain(3, 1.0, vec![10.0, 10.0, 10.0]).unwrap();
        let mut rng = StdRng::seed_from_u64(2);
        let mut m = SymMatrix::zeros(3);
        for _ in 0..2 {
            let v: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            m.add_outer(&v, 0.1);
        }
        let choice = choose_repetitions(spec.coupling(), &m, spec.p0(), 4096);
        assert_eq!(choice.n_reps, 1);
    }

    #[test]
    fn feedback_on_the_optimal_ray() {
        // Direction ∝ (1, √2−1) at state (1, √2−1): the normalizer is exactly
        // one and both controls sit at full drive.
        let x0 = 2f64.sqrt() - 1.0;
        let law = FeedbackLaw::from_direction(&[1.0, x0]).unwrap();
        assert_eq!(law.pivot, 0);
        let r = RadialState::new(vec![1.0, x0]).unwrap();
        let u = feedback_controls(&law, &r);
        assert!(close(u[0], 1.0, 1e-12));
        assert!(close(u[1], 1.0, 1e-12));
    }

    #[test]
    fn feedback_stationary_at_vanished_amplitude() {
        let law = FeedbackLaw::from_direction(&[1.0, 0.5]).unwrap();
        let r = RadialState::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(feedback_controls(&law, &r), vec![0.0, 0.0]);
    }

    #[test]
    fn feedback_single_axis_direction() {
        let law = FeedbackLaw::from_direction(&[1.0, 0.0, 0.0]).unwrap();
        let r = RadialState::new(vec![0.7, 0.2, 0.0]).unwrap();
        let u = feedback_controls(&law, &r);
        assert_eq!(u, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn realized_amplitudes_parallel_direction() {
        let mut rng = StdRng::seed_from_u64(14);
        for _ in 0..50 {
            let m: Vec<f64> = (0..3).map(|_| rng.gen_range(0.1..1.0)).collect();
            let law = FeedbackLaw::from_direction(&m).unwrap();
            let r = RadialState::new((0..3).map(|_| rng.gen_range(0.05..2.0)).collect()).unwrap();
            let u = feedback_controls(&law, &r);
            assert!(u.iter().all(|v| v.abs() <= 1.0 + 1e-12));
            let ur: Vec<f64> = u.iter().zip(r.r.iter()).map(|(a, b)| a * b).collect();
            // cross products with the direction vanish
            for i in 0..3 {
                for j in (i + 1)..3 {
                    let cross = ur[i] * m[j] - ur[j] * m[i];
                    assert!(
                        cross.abs() <= 1e-9 * norm2(&ur) * norm2(&m),
                        "cross {cross}"
                    );
                }
            }
        }
    }

    #[test]
    fn kick_examples() {
        let law2 = FeedbackLaw::from_direction(&[1.0, 0.4]).unwrap();
        let r = RadialState::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(epsilon_kick(&r, &law2, 1e-3).r, vec![1.0, 1e-3]);

        let full = RadialState::new(vec![0.5, 0.5]).unwrap();
        assert_eq!(epsilon_kick(&full, &law2, 1e-3).r, vec![0.5, 0.5]);

        let law3 = FeedbackLaw::from_direction(&[1.0, 0.7, 0.3]).unwrap();
        let eps = 1e-2;
        let start = RadialState::new(vec![1.0, eps, 0.0]).unwrap();
        assert_eq!(epsilon_kick(&start, &law3, eps).r, vec![1.0, eps, eps]);
    }

    #[test]
    fn physical_controls_idle_when_nothing_moves() {
        // constant u with zero radial velocity: nothing to maintain
        let spec = ProblemSpec::chain(2, 1.0, vec![1.0, 0.0]).unwrap();
        let r = RadialState::new(vec![1.0, 0.5]).unwrap();
        let u = vec![0.0, 0.0];
        let v = physical_controls(&u, &r, &[0.0, 0.0], spec.coupling()).unwrap();
        assert_eq!(v, vec![0.0, 0.0]);
    }

    #[test]
    fn physical_controls_single_phasor_rotation() {
        // One amplitude, no dissipation flow at u = 0: the control is exactly
        // the requested phase rate.
        let a = Mat::from_rows(&[vec![-1.0]]).unwrap();
        let r = RadialState::new(vec![1.0]).unwrap();
        let v = physical_controls(&[0.0], &r, &[1.0], &a).unwrap();
        assert!(close(v[0], 1.0, 1e-12));
    }

    #[test]
    fn physical_controls_singular_at_zero_amplitude() {
        let a = Mat::from_rows(&[vec![-1.0, -1.0], vec![1.0, -1.0]]).unwrap();
        let r = RadialState::new(vec![1.0, 0.0]).unwrap();
        let err = physical_controls(&[0.5, 0.5], &r, &[0.0, 1.0], &a);
        assert!(matches!(err, Err(Error::SingularControl(_))));
        let ok = physical_controls(&[0.5, 0.0], &r, &[0.1, 0.0], &a).unwrap();
        assert_eq!(ok[1], 0.0);
    }

    #[test]
    fn aligned_state_matches_commanded_controls() {
        let law = FeedbackLaw::from_direction(&[1.0, 0.41421356]).unwrap();
        let r = RadialState::new(vec![1.0, 1e-3]).unwrap();
        let s = aligned_xy_state(&law, &r);
        let u = feedback_controls(&law, &r);
        for i in 0..2 {
            assert!(close(s.x[i].hypot(s.y[i]), r.r[i], 1e-12));
            assert!(close(
                s.y[i] / r.r[i],
                u[i].clamp(-1.0 + U_CLAMP, 1.0 - U_CLAMP),
                1e-9
            ));
            assert!(s.x[i] > 0.0);
        }
    }
}
