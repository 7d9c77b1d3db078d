//! Trajectory integration in the three coordinate systems.
//!
//! The squared-amplitude system is exactly piecewise linear under a direction
//! schedule, so it is walked vertex to vertex with no integrator. The radial
//! and bilinear systems run under the synthesized feedback through an
//! embedded Dormand–Prince 5(4) pair with adaptive steps, accumulating the
//! rescaled clock t′ = ∫U²dt by the trapezoid rule and switching schedule
//! segments when t′ crosses a boundary (located by linear interpolation
//! inside the step, then re-stepped).

use crate::linalg::{norm2, Mat};
use crate::problem::{BilinearState, RadialState};
use crate::synthesis::{feedback_controls, feedback_rates, p_rates, ControlSchedule, FeedbackLaw};
use crate::{Error, Result};
use std::io::{self, Write};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceTag {
    /// Squared amplitudes p, parameterized by rescaled time.
    P,
    /// Radial amplitudes r with controls u, parameterized by physical time.
    R,
    /// Bilinear state (x, y) with physical controls v.
    Xy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Ran to the requested horizon.
    Horizon,
    /// Accumulated rescaled time reached the requested target.
    TargetReached,
    /// State velocity dropped below the stall tolerance.
    Stalled,
    /// Step budget exhausted before any other stop condition.
    StepBudget,
    /// Exact schedule walk finished (squared-amplitude space only).
    ScheduleEnd,
}

/// A recorded trajectory: one row per accepted step.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub space: SpaceTag,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// u (radial space) or v (bilinear space) at each sample.
    pub controls: Option<Vec<Vec<f64>>>,
    /// Control magnitude U at each sample (radial/bilinear spaces).
    pub u_magnitude: Option<Vec<f64>>,
    /// Accumulated t′ at each sample (radial/bilinear spaces).
    pub tprime: Option<Vec<f64>>,
    pub stop: StopReason,
    /// Accepted steps forced through at the step-size floor.
    pub floor_steps: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn endpoint(&self) -> &[f64] {
        self.states.last().expect("non-empty trajectory")
    }

    pub fn final_tprime(&self) -> Option<f64> {
        self.tprime.as_ref().and_then(|t| t.last().copied())
    }

    pub fn min_component(&self) -> f64 {
        self.states
            .iter()
            .flat_map(|s| s.iter().copied())
            .fold(f64::INFINITY, f64::min)
    }

    /// Linear interpolation of the state at time `t` (clamped to the range).
    pub fn sample(&self, t: f64) -> Vec<f64> {
        let times = &self.times;
        if t <= times[0] {
            return self.states[0].clone();
        }
        if t >= *times.last().unwrap() {
            return self.endpoint().to_vec();
        }
        let idx = times.partition_point(|&x| x <= t).min(times.len() - 1);
        let (t0, t1) = (times[idx - 1], times[idx]);
        let w = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
        self.states[idx - 1]
            .iter()
            .zip(self.states[idx].iter())
            .map(|(a, b)| a + w * (b - a))
            .collect()
    }

    /// CSV emission: `t,tprime,<state cols>,<control cols>,U`, one row per
    /// accepted step, 12 significant digits.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        let n = self.states.first().map_or(0, |s| s.len());
        let mut header = String::from("t,tprime");
        match self.space {
            SpaceTag::P => {
                for i in 1..=n {
                    header.push_str(&format!(",p_{i}"));
                }
            }
            SpaceTag::R => {
                for i in 1..=n {
                    header.push_str(&format!(",r_{i}"));
                }
                for i in 1..=n {
                    header.push_str(&format!(",u_{i}"));
                }
                header.push_str(",U");
            }
            SpaceTag::Xy => {
                let half = n / 2;
                for i in 1..=half {
                    header.push_str(&format!(",x_{i}"));
                }
                for i in 1..=half {
                    header.push_str(&format!(",y_{i}"));
                }
                for i in 1..=half {
                    header.push_str(&format!(",v_{i}"));
                }
                header.push_str(",U");
            }
        }
        writeln!(out, "{header}")?;
        for row in 0..self.len() {
            let mut line = String::new();
            line.push_str(&fmt12(self.times[row]));
            let tp = self.tprime.as_ref().map_or(self.times[row], |t| t[row]);
            line.push(',');
            line.push_str(&fmt12(tp));
            for v in &self.states[row] {
                line.push(',');
                line.push_str(&fmt12(*v));
            }
            if let Some(controls) = &self.controls {
                for v in &controls[row] {
                    line.push(',');
                    line.push_str(&fmt12(*v));
                }
            }
            if let Some(u) = &self.u_magnitude {
                line.push(',');
                line.push_str(&fmt12(u[row]));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// Rounds to 12 significant digits (fixed formatting for reproducible files).
pub fn sig12(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { 0.0 } else { x };
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

fn fmt12(x: f64) -> String {
    format!("{}", sig12(x))
}

/// Integrator knobs. `max_step` defaults to horizon/1000 so the control
/// magnitude is sampled densely enough for the trapezoid clock.
#[derive(Debug, Clone)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: Option<f64>,
    /// Stop once accumulated t′ reaches this value.
    pub tprime_target: Option<f64>,
    /// Stop when the state velocity falls below this.
    pub stall_tol: f64,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_step: None,
            tprime_target: None,
            stall_tol: 1e-12,
            max_steps: 2_000_000,
        }
    }
}

/// Exact walk of the squared amplitudes under the schedule: rates are
/// constant inside a segment, so the trajectory is the polygon through the
/// segment vertices. Times are rescaled time t′.
pub fn simulate_p(a: &Mat, schedule: &ControlSchedule, p0: &[f64]) -> Trajectory {
    let mut times = vec![0.0];
    let mut states = vec![p0.to_vec()];
    let mut t = 0.0;
    let mut p = p0.to_vec();
    for seg in schedule.expanded() {
        let rates = p_rates(a, &seg.direction);
        for (pi, rate) in p.iter_mut().zip(rates.iter()) {
            *pi += seg.duration * rate;
        }
        t += seg.duration;
        times.push(t);
        states.push(p.clone());
    }
    Trajectory {
        space: SpaceTag::P,
        times,
        states,
        controls: None,
        u_magnitude: None,
        tprime: None,
        stop: StopReason::ScheduleEnd,
        floor_steps: 0,
    }
}

// Dormand–Prince 5(4) coefficients (time-invariant dynamics: stage times
// are not needed).
const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [
    19372.0 / 6561.0,
    -25360.0 / 2187.0,
    64448.0 / 6561.0,
    -212.0 / 729.0,
];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
const B5: [f64; 6] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One embedded step. Returns the 5th-order solution, the end-point
/// derivative (first-same-as-last), and the scaled error norm.
fn dopri5_step<F: Fn(&[f64], &mut [f64])>(
    rhs: &F,
    y: &[f64],
    k1: &[f64],
    h: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> (Vec<f64>, Vec<f64>, f64) {
    let dim = y.len();
    let mut k = vec![vec![0.0; dim]; 7];
    k[0].copy_from_slice(k1);
    let stage = |coeffs: &[f64], k: &[Vec<f64>]| -> Vec<f64> {
        let mut out = y.to_vec();
        for (c, ki) in coeffs.iter().zip(k.iter()) {
            for (o, kv) in out.iter_mut().zip(ki.iter()) {
                *o += h * c * kv;
            }
        }
        out
    };
    let mut buf = vec![0.0; dim];
    for (idx, coeffs) in [&A2[..], &A3[..], &A4[..], &A5[..], &A6[..]]
        .iter()
        .enumerate()
    {
        let ys = stage(coeffs, &k);
        rhs(&ys, &mut buf);
        k[idx + 1].copy_from_slice(&buf);
    }
    let y5 = stage(&B5, &k);
    rhs(&y5, &mut buf);
    k[6].copy_from_slice(&buf);

    let mut err_acc = 0.0;
    for i in 0..dim {
        let mut e = 0.0;
        for (s, ks) in k.iter().enumerate() {
            let diff = if s < 6 { B5[s] - B4[s] } else { -B4[6] };
            e += diff * ks[i];
        }
        e *= h;
        let scale = abs_tol + rel_tol * y[i].abs().max(y5[i].abs());
        err_acc += (e / scale) * (e / scale);
    }
    let err = (err_acc / dim as f64).sqrt();
    (y5, k[6].clone(), err)
}

/// Shared adaptive loop for the radial and bilinear closed-loop runs.
struct ClosedLoopRun<'a> {
    boundaries: Vec<f64>,
    laws: Vec<FeedbackLaw>,
    horizon: f64,
    cfg: &'a IntegratorConfig,
}

impl<'a> ClosedLoopRun<'a> {
    fn new(schedule: &ControlSchedule, horizon: f64, cfg: &'a IntegratorConfig) -> Result<Self> {
        let laws = schedule
            .segments
            .iter()
            .map(|s| FeedbackLaw::from_direction(&s.direction))
            .collect::<Result<Vec<_>>>()?;
        Ok(ClosedLoopRun {
            boundaries: schedule.boundaries(),
            laws,
            horizon,
            cfg,
        })
    }

    fn law_for(&self, segment: usize) -> Option<&FeedbackLaw> {
        if self.laws.is_empty() || segment >= self.boundaries.len() {
            None
        } else {
            Some(&self.laws[segment % self.laws.len()])
        }
    }

    /// Integrates, recording one row per accepted step. The rescaled clock
    /// advances by the trapezoid rule on U²; crossing a segment boundary
    /// re-steps onto the crossing located by linear interpolation.
    fn run<FRhs, FObs>(
        &self,
        y0: Vec<f64>,
        rhs_for: FRhs,
        observe: FObs,
        space: SpaceTag,
    ) -> Trajectory
    where
        FRhs: Fn(Option<&FeedbackLaw>, &[f64], &mut [f64]),
        FObs: Fn(Option<&FeedbackLaw>, &[f64]) -> (Vec<f64>, f64),
    {
        let cfg = self.cfg;
        let max_step = cfg.max_step.unwrap_or(self.horizon / 1000.0);
        let min_step = (self.horizon * 1e-14).max(f64::MIN_POSITIVE * 1e16);

        let mut segment = 0usize;
        let mut t = 0.0;
        let mut y = y0;
        let mut tprime = 0.0;

        let mut times = Vec::new();
        let mut states = Vec::new();
        let mut controls = Vec::new();
        let mut magnitudes = Vec::new();
        let mut tprimes = Vec::new();
        let mut floor_steps = 0usize;

        let (ctrl0, mut u_mag) = observe(self.law_for(segment), &y);
        times.push(t);
        states.push(y.clone());
        controls.push(ctrl0);
        magnitudes.push(u_mag);
        tprimes.push(tprime);

        let mut k1 = vec![0.0; y.len()];
        rhs_for(self.law_for(segment), &y, &mut k1);

        let mut h = max_step * 0.1;
        let mut stop = StopReason::Horizon;
        let mut steps = 0usize;

        while t < self.horizon {
            if steps >= cfg.max_steps {
                stop = StopReason::StepBudget;
                break;
            }
            steps += 1;
            h = h.min(max_step).min(self.horizon - t).max(min_step);

            let law = self.law_for(segment);
            let rhs = |s: &[f64], out: &mut [f64]| rhs_for(law, s, out);
            let (mut y_new, mut k_new, err) =
                dopri5_step(&rhs, &y, &k1, h, cfg.rel_tol, cfg.abs_tol);

            if err > 1.0 && h > min_step * 1.0001 {
                h = (h * (0.9 * err.powf(-0.2)).clamp(0.2, 1.0)).max(min_step);
                continue;
            }
            if err > 1.0 {
                floor_steps += 1;
            }

            // trapezoid advance of the rescaled clock
            let (_, u_end) = observe(law, &y_new);
            let mut dt_prime = 0.5 * h * (u_mag * u_mag + u_end * u_end);
            let mut h_used = h;

            // segment boundary crossing: shrink the step onto the crossing,
            // re-interpolating the clock until it lands on the boundary
            if segment < self.boundaries.len() && tprime + dt_prime >= self.boundaries[segment] {
                let need = self.boundaries[segment] - tprime;
                for _ in 0..3 {
                    if dt_prime <= 0.0 || (dt_prime - need).abs() <= 1e-10 * (1.0 + need) {
                        break;
                    }
                    let theta = (need / dt_prime).clamp(0.0, 1.0);
                    if theta >= 1.0 - 1e-12 {
                        break;
                    }
                    h_used = (h_used * theta).max(min_step);
                    let redo = dopri5_step(&rhs, &y, &k1, h_used, cfg.rel_tol, cfg.abs_tol);
                    y_new = redo.0;
                    let (_, u_cut) = observe(law, &y_new);
                    dt_prime = 0.5 * h_used * (u_mag * u_mag + u_cut * u_cut);
                }
                segment += 1;
                // derivative restarts under the new law
                k_new = vec![0.0; y_new.len()];
                rhs_for(self.law_for(segment), &y_new, &mut k_new);
            }

            t += h_used;
            y = y_new;
            k1 = k_new;
            tprime += dt_prime;

            let (ctrl, mag) = observe(self.law_for(segment), &y);
            u_mag = mag;
            times.push(t);
            states.push(y.clone());
            controls.push(ctrl);
            magnitudes.push(u_mag);
            tprimes.push(tprime);

            if let Some(target) = cfg.tprime_target {
                if tprime >= target {
                    stop = StopReason::TargetReached;
                    break;
                }
            }
            if norm2(&k1) < cfg.stall_tol {
                stop = StopReason::Stalled;
                break;
            }
            if err > 0.0 {
                h *= (0.9 * err.powf(-0.2)).clamp(0.2, 5.0);
            } else {
                h *= 5.0;
            }
        }

        Trajectory {
            space,
            times,
            states,
            controls: Some(controls),
            u_magnitude: Some(magnitudes),
            tprime: Some(tprimes),
            stop,
            floor_steps,
        }
    }
}

fn clamp_nonneg(r: &[f64]) -> RadialState {
    RadialState {
        r: r.iter().map(|v| v.max(0.0)).collect(),
    }
}

/// Closed-loop radial simulation: controls from the per-segment feedback law,
/// segment switching on the rescaled clock.
pub fn simulate_r(
    a: &Mat,
    schedule: &ControlSchedule,
    r0: &RadialState,
    horizon: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    if !schedule.is_empty() && schedule.dim() != r0.r.len() {
        return Err(Error::DimensionMismatch {
            expected: schedule.dim(),
            found: r0.r.len(),
        });
    }
    if horizon <= 0.0 {
        return Err(Error::InvalidInput("horizon must be positive".into()));
    }
    let run = ClosedLoopRun::new(schedule, horizon, cfg)?;

    let rhs = |law: Option<&FeedbackLaw>, s: &[f64], out: &mut [f64]| {
        let state = clamp_nonneg(s);
        let u = match law {
            Some(law) => feedback_controls(law, &state),
            None => vec![0.0; s.len()],
        };
        let ur: Vec<f64> = u.iter().zip(state.r.iter()).map(|(a, b)| a * b).collect();
        let g = a.mul_vec(&ur);
        for i in 0..s.len() {
            out[i] = u[i] * g[i];
        }
    };
    let observe = |law: Option<&FeedbackLaw>, s: &[f64]| -> (Vec<f64>, f64) {
        let state = clamp_nonneg(s);
        let u = match law {
            Some(law) => feedback_controls(law, &state),
            None => vec![0.0; s.len()],
        };
        let u_mag = u
            .iter()
            .zip(state.r.iter())
            .map(|(ui, ri)| (ui * ri) * (ui * ri))
            .sum::<f64>()
            .sqrt();
        (u, u_mag)
    };

    Ok(run.run(r0.r.clone(), rhs, observe, SpaceTag::R))
}

/// Saturation margin below which a commanded control counts as pegged at
/// full drive.
const PEG_MARGIN: f64 = 1e-7;

/// Physical controls for the bilinear state under the active law: exact
/// tracking of the commanded control derivative from the realized state.
///
/// A component commanded to full drive is parked with zero control: its
/// commanded derivative vanishes there and the free drift of the realized
/// control is O(1 − u²), far below integration tolerance, while active
/// tracking of the saturation manifold would force the step size to collapse.
fn tracking_controls(a: &Mat, law: &FeedbackLaw, x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let r: Vec<f64> = x
        .iter()
        .zip(y.iter())
        .map(|(xi, yi)| xi.hypot(*yi))
        .collect();
    let state = RadialState { r: r.clone() };
    let (u_cmd, u_dot_cmd) = feedback_rates(law, &state, a);
    let g = a.mul_vec(y);
    let mut v = vec![0.0; n];
    for i in 0..n {
        if r[i] == 0.0 || x[i] == 0.0 || u_cmd[i].abs() >= 1.0 - PEG_MARGIN {
            continue;
        }
        let u_real = y[i] / r[i];
        // v_i = (r u̇ + (u²−1)g)/x keeps the realized control derivative
        // equal to the commanded one.
        v[i] = (r[i] * u_dot_cmd[i] + (u_real * u_real - 1.0) * g[i]) / x[i];
    }
    v
}

/// Closed-loop bilinear simulation driven by the physical controls realizing
/// the schedule's feedback law.
pub fn simulate_xy(
    a: &Mat,
    schedule: &ControlSchedule,
    s0: &BilinearState,
    horizon: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let n = s0.x.len();
    if !schedule.is_empty() && schedule.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: schedule.dim(),
            found: n,
        });
    }
    if horizon <= 0.0 {
        return Err(Error::InvalidInput("horizon must be positive".into()));
    }
    let run = ClosedLoopRun::new(schedule, horizon, cfg)?;

    let rhs = |law: Option<&FeedbackLaw>, s: &[f64], out: &mut [f64]| {
        let (x, y) = s.split_at(n);
        let v = match law {
            Some(law) => tracking_controls(a, law, x, y),
            None => vec![0.0; n],
        };
        let ay = a.mul_vec(y);
        for i in 0..n {
            out[i] = -v[i] * y[i];
            out[n + i] = v[i] * x[i] + ay[i];
        }
    };
    let observe = |law: Option<&FeedbackLaw>, s: &[f64]| -> (Vec<f64>, f64) {
        let (x, y) = s.split_at(n);
        let v = match law {
            Some(law) => tracking_controls(a, law, x, y),
            None => vec![0.0; n],
        };
        // u_i r_i = y_i, so U = ‖y‖
        (v, norm2(y))
    };

    let mut y0 = s0.x.clone();
    y0.extend_from_slice(&s0.y);
    Ok(run.run(y0, rhs, observe, SpaceTag::Xy))
}

/// Open-loop bilinear simulation under an arbitrary control source
/// (used for validation against hand-computable signals).
pub fn simulate_xy_with<F>(
    a: &Mat,
    v_source: F,
    s0: &BilinearState,
    horizon: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory>
where
    F: Fn(f64, &BilinearState) -> Vec<f64>,
{
    let n = s0.x.len();
    if horizon <= 0.0 {
        return Err(Error::InvalidInput("horizon must be positive".into()));
    }
    let max_step = cfg.max_step.unwrap_or(horizon / 1000.0);
    let min_step = (horizon * 1e-14).max(f64::MIN_POSITIVE * 1e16);

    let state_of = |s: &[f64]| {
        let (x, y) = s.split_at(n);
        BilinearState {
            x: x.to_vec(),
            y: y.to_vec(),
        }
    };

    let mut t = 0.0;
    let mut y: Vec<f64> = s0.x.iter().chain(s0.y.iter()).copied().collect();
    let mut tprime = 0.0;

    let mut times = vec![t];
    let mut states = vec![y.clone()];
    let mut controls = vec![v_source(t, &state_of(&y))];
    let mut magnitudes = vec![norm2(&y[n..])];
    let mut tprimes = vec![0.0];
    let mut floor_steps = 0usize;

    let mut stop = StopReason::Horizon;
    let mut steps = 0usize;
    let mut h = max_step * 0.1;

    while t < horizon {
        if steps >= cfg.max_steps {
            stop = StopReason::StepBudget;
            break;
        }
        steps += 1;
        h = h.min(max_step).min(horizon - t).max(min_step);

        let t_now = t;
        let rhs = |s: &[f64], out: &mut [f64]| {
            let st = state_of(s);
            let v = v_source(t_now, &st);
            let ay = a.mul_vec(&st.y);
            for i in 0..n {
                out[i] = -v[i] * st.y[i];
                out[n + i] = v[i] * st.x[i] + ay[i];
            }
        };
        let mut k1 = vec![0.0; 2 * n];
        rhs(&y, &mut k1);
        let (y_new, k_end, err) = dopri5_step(&rhs, &y, &k1, h, cfg.rel_tol, cfg.abs_tol);
        if err > 1.0 && h > min_step * 1.0001 {
            h = (h * (0.9 * err.powf(-0.2)).clamp(0.2, 1.0)).max(min_step);
            continue;
        }
        if err > 1.0 {
            floor_steps += 1;
        }

        let u_old = norm2(&y[n..]);
        let u_new = norm2(&y_new[n..]);
        tprime += 0.5 * h * (u_old * u_old + u_new * u_new);
        t += h;
        y = y_new;

        times.push(t);
        states.push(y.clone());
        controls.push(v_source(t, &state_of(&y)));
        magnitudes.push(u_new);
        tprimes.push(tprime);

        if norm2(&k_end) < cfg.stall_tol {
            stop = StopReason::Stalled;
            break;
        }
        if err > 0.0 {
            h *= (0.9 * err.powf(-0.2)).clamp(0.2, 5.0);
        } else {
            h *= 5.0;
        }
    }

    Ok(Trajectory {
        space: SpaceTag::Xy,
        times,
        states,
        controls: Some(controls),
        u_magnitude: Some(magnitudes),
        tprime: Some(tprimes),
        stop,
        floor_steps,
    })
}

/// Cumulative ∫U²dt by the trapezoid rule over the recorded samples.
pub fn rescaled_time(traj: &Trajectory) -> Vec<f64> {
    let u = traj
        .u_magnitude
        .as_ref()
        .expect("trajectory carries control magnitudes");
    let mut out = Vec::with_capacity(u.len());
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..u.len() {
        let h = traj.times[i] - traj.times[i - 1];
        acc += 0.5 * h * (u[i - 1] * u[i - 1] + u[i] * u[i]);
        out.push(acc);
    }
    out
}

/// Radial projection of a bilinear trajectory.
pub fn radial_projection(traj: &Trajectory) -> Vec<Vec<f64>> {
    assert_eq!(traj.space, SpaceTag::Xy);
    traj.states
        .iter()
        .map(|s| {
            let n = s.len() / 2;
            (0..n).map(|i| s[i].hypot(s[n + i])).collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SymMatrix;
    use crate::problem::ProblemSpec;
    use crate::synthesis::schedule_from_solution;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn optimal_2x2() -> (ProblemSpec, ControlSchedule) {
        let spec = ProblemSpec::chain(2, 1.0, vec![1.0, 0.0]).unwrap();
        let sdp = spec.build_constraints().sdp_problem();
        let sol = crate::sdp::solve(&sdp, &crate::sdp::SolverConfig::default());
        assert_eq!(sol.status, crate::sdp::SolveStatus::Optimal);
        let reduced = crate::lowrank::rank_reduce(&sdp, &sol.m).unwrap();
        let schedule = schedule_from_solution(&reduced, 1).unwrap();
        (spec, schedule)
    }

    #[test]
    fn empty_schedule_is_a_point() {
        let spec = ProblemSpec::chain(2, 1.0, vec![1.0, 0.0]).unwrap();
        let schedule = schedule_from_solution(&SymMatrix::zeros(2), 1).unwrap();
        let traj = simulate_p(spec.coupling(), &schedule, spec.p0());
        assert_eq!(traj.len(), 1);
        assert_eq!(traj.states[0], vec![1.0, 0.0]);
    }

    #[test]
    fn squared_walk_follows_the_straight_line() {
        let (spec, schedule) = optimal_2x2();
        let traj = simulate_p(spec.coupling(), &schedule, spec.p0());
        let expect = 3.0 - 2.0 * 2f64.sqrt();
        let end = traj.endpoint();
        assert!(close(end[0], 0.0, 1e-7), "p1 end {}", end[0]);
        assert!(close(end[1], expect, 1e-7), "p2 end {}", end[1]);
        assert!(traj.min_component() >= -1e-9);
    }

    #[test]
    fn repetition_refinement_shrinks_deviation_exactly() {
        // two-direction schedule: deviation from the chord scales as 1/N
        let mut rng = StdRng::seed_from_u64(5);
        let spec = ProblemSpec::chain(3, 1.0, vec![2.0, 2.0, 1.0]).unwrap();
        let mut m = SymMatrix::zeros(3);
        for _ in 0..2 {
            let v: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            m.add_outer(&v, rng.gen_range(0.1..0.4));
        }
        let s1 = schedule_from_solution(&m, 1).unwrap();
        let s64 = schedule_from_solution(&m, 64).unwrap();
        let t1 = simulate_p(spec.coupling(), &s1, spec.p0());
        let t64 = simulate_p(spec.coupling(), &s64, spec.p0());

        let end1 = t1.endpoint().to_vec();
        let end64 = t64.endpoint().to_vec();
        for (a, b) in end1.iter().zip(end64.iter()) {
            assert!(close(*a, *b, 1e-9), "endpoints differ: {a} vs {b}");
        }

        let chord_dev = |traj: &Trajectory| -> f64 {
            let start = &traj.states[0];
            let end = traj.endpoint();
            let d: Vec<f64> = end.iter().zip(start.iter()).map(|(a, b)| a - b).collect();
            let dn = norm2(&d);
            traj.states
                .iter()
                .map(|p| {
                    let w: Vec<f64> = p.iter().zip(start.iter()).map(|(a, b)| a - b).collect();
                    let along = crate::linalg::dot(&w, &d) / dn;
                    (crate::linalg::dot(&w, &w) - along * along).max(0.0).sqrt()
                })
                .fold(0.0f64, f64::max)
        };
        let d1 = chord_dev(&t1);
        let d64 = chord_dev(&t64);
        assert!(d1 > 0.0);
        assert!(close(d1 / d64, 64.0, 1e-6 * 64.0), "ratio {}", d1 / d64);
    }

    #[test]
    fn unkicked_start_is_stationary() {
        let (spec, schedule) = optimal_2x2();
        let r0 = RadialState::new(vec![1.0, 0.0]).unwrap();
        let traj = simulate_r(
            spec.coupling(),
            &schedule,
            &r0,
            10.0,
            &IntegratorConfig::default(),
        )
        .unwrap();
        assert_eq!(traj.stop, StopReason::Stalled);
        let end = traj.endpoint();
        assert_eq!(end[0], 1.0);
        assert_eq!(end[1], 0.0);
    }

    #[test]
    fn kicked_closed_loop_reaches_the_transfer_bound() {
        let (spec, schedule) = optimal_2x2();
        let r0 = RadialState::new(vec![1.0, 1e-3]).unwrap();
        let cfg = IntegratorConfig {
            tprime_target: Some((1.0 - 1e-4) * schedule.total_duration),
            ..IntegratorConfig::default()
        };
        let traj = simulate_r(spec.coupling(), &schedule, &r0, 40.0, &cfg).unwrap();
        assert_eq!(
            traj.stop,
            StopReason::TargetReached,
            "floor steps {}",
            traj.floor_steps
        );
        let x0 = 2f64.sqrt() - 1.0;
        let end = traj.endpoint();
        assert!(close(end[1], x0, 1e-3), "r2 end {} vs {}", end[1], x0);
        // never exceeds the operator bound
        let bound = (3.0f64 - 2.0 * 2f64.sqrt()).sqrt();
        for s in &traj.states {
            assert!(s[1] <= bound + 1e-6);
        }
        // the rescaled clock lands on the schedule duration
        let tp = traj.final_tprime().unwrap();
        assert!(close(tp, schedule.total_duration, 1e-3));
        // independent clock recomputation agrees
        let recomputed = rescaled_time(&traj);
        assert!(close(*recomputed.last().unwrap(), tp, 1e-9));
    }

    #[test]
    fn held_middle_amplitude_in_the_limiting_chain() {
        // analytic limiting law for the 3-chain: middle amplitude pinned at ε
        let spec = ProblemSpec::chain(3, 1.0, vec![1.0, 1e-4, 1e-4]).unwrap();
        let form = crate::oracles::analytic_3chain(1.0).unwrap();
        let dir = form.direction();
        let eps = 1e-2;
        // duration from the first-coordinate drain rate
        let drain = -crate::synthesis::p_rates(spec.coupling(), &dir)[0];
        let schedule = ControlSchedule {
            segments: vec![crate::synthesis::Segment {
                duration: 1.0 / drain,
                direction: dir.to_vec(),
            }],
            repetitions: 1,
            total_duration: 1.0 / drain,
        };
        let r0 = RadialState::new(vec![1.0, eps, eps]).unwrap();
        let cfg = IntegratorConfig {
            tprime_target: Some((1.0 - 1e-4) / drain),
            ..IntegratorConfig::default()
        };
        let traj = simulate_r(spec.coupling(), &schedule, &r0, 20_000.0, &cfg).unwrap();
        assert_eq!(traj.stop, StopReason::TargetReached);
        let end = traj.endpoint();
        let target = 2.0 - 3f64.sqrt();
        assert!(close(end[2], target, 1e-2), "r3 {} vs {}", end[2], target);
        // middle amplitude held at ε throughout
        for s in &traj.states {
            assert!((s[1] - eps).abs() <= 0.1 * eps, "r2 drifted to {}", s[1]);
        }
    }

    #[test]
    fn multi_segment_loop_tracks_the_zigzag_walk() {
        // rank-two schedule cycled several times: the closed radial loop
        // must switch segments on the rescaled clock and its squared
        // amplitudes must follow the exact vertex walk. The middle amplitude
        // keeps a healthy margin above zero: the clock slows to a crawl when
        // a needed amplitude vanishes mid-schedule.
        let spec = ProblemSpec::chain(3, 1.0, vec![1.0, 0.08, 0.0]).unwrap();
        let mut m = SymMatrix::zeros(3);
        m.add_outer(&[0.6, -0.8, 0.0], 0.0099);
        m.add_outer(&[0.8, 0.6, 0.0], 0.0095);
        let schedule = schedule_from_solution(&m, 8).unwrap();
        assert_eq!(schedule.expanded().count(), 16);
        let walk = simulate_p(spec.coupling(), &schedule, spec.p0());
        let mid_floor = walk
            .states
            .iter()
            .map(|s| s[1])
            .fold(f64::INFINITY, f64::min);
        assert!(
            mid_floor > 0.05,
            "construction keeps a margin, floor {mid_floor}"
        );

        let r0 = RadialState::new(spec.p0().iter().map(|p| p.sqrt()).collect()).unwrap();
        let cfg = IntegratorConfig {
            tprime_target: Some(0.95 * schedule.total_duration),
            ..IntegratorConfig::default()
        };
        let traj = simulate_r(spec.coupling(), &schedule, &r0, 40.0, &cfg).unwrap();
        assert_eq!(traj.stop, StopReason::TargetReached);

        let tprimes = traj.tprime.as_ref().unwrap();
        assert!(
            *tprimes.last().unwrap() > schedule.boundaries()[0],
            "no segment was crossed"
        );
        let mut worst = 0.0f64;
        for (state, tp) in traj.states.iter().zip(tprimes.iter()) {
            let expect = walk.sample(*tp);
            for (r, p) in state.iter().zip(expect.iter()) {
                worst = worst.max((r * r - p).abs());
            }
        }
        assert!(worst <= 1e-3, "worst squared-amplitude deviation {worst}");
        // amplitudes stay admissible throughout
        assert!(traj.min_component() >= -1e-9);
    }

    #[test]
    fn free_bilinear_state_is_constant() {
        let spec = ProblemSpec::chain(2, 1.0, vec![1.0, 0.0]).unwrap();
        let s0 = BilinearState::new(vec![1.0, 0.0], vec![0.0, 0.0]).unwrap();
        let traj = simulate_xy_with(
            spec.coupling(),
            |_, _| vec![0.0, 0.0],
            &s0,
            5.0,
            &IntegratorConfig::default(),
        )
        .unwrap();
        let end = traj.endpoint();
        assert!(close(end[0], 1.0, 1e-12));
        assert!(close(norm2(end), 1.0, 1e-12));
    }

    #[test]
    fn constant_control_rotates_amplitude_between_quadratures() {
        // a single phasor under constant drive moves from the in-phase
        // component to the quadrature component: u = y/r climbs toward 1
        // over the quarter turn
        let a = Mat::from_rows(&[vec![-0.1]]).unwrap();
        let s0 = BilinearState::new(vec![1.0], vec![0.0]).unwrap();
        let traj = simulate_xy_with(
            &a,
            |_, _| vec![1.0],
            &s0,
            std::f64::consts::FRAC_PI_2,
            &IntegratorConfig::default(),
        )
        .unwrap();
        let mut last_u = 0.0;
        for s in &traj.states {
            let u = s[1] / s[0].hypot(s[1]);
            assert!(u >= last_u - 1e-9, "u must not retreat");
            last_u = u;
        }
        assert!(
            last_u > 0.98,
            "drive saturates the quadrature, u = {last_u}"
        );
        // and the in-phase component has been depleted
        assert!(traj.endpoint()[0].abs() < 0.2);
    }

    #[test]
    fn constant_drive_dissipates_at_the_predicted_rate() {
        let spec = ProblemSpec::chain(2, 1.0, vec![1.0, 0.0]).unwrap();
        let s0 = BilinearState::new(vec![0.8, 0.1], vec![0.3, 0.2]).unwrap();
        let traj = simulate_xy_with(
            spec.coupling(),
            |_, _| vec![0.7, -0.4],
            &s0,
            2.0,
            &IntegratorConfig::default(),
        )
        .unwrap();
        // d/dt ‖(x,y)‖² = yᵀ(A+Aᵀ)y, checked against finite differences of
        // the recorded norms at interior samples
        let a = spec.coupling();
        for w in (1..traj.len() - 1).step_by(7) {
            let h = traj.times[w + 1] - traj.times[w - 1];
            let n2 = |s: &[f64]| crate::linalg::dot(s, s);
            let deriv = (n2(&traj.states[w + 1]) - n2(&traj.states[w - 1])) / h;
            let y = &traj.states[w][2..];
            let ay = a.mul_vec(y);
            let expect = 2.0 * crate::linalg::dot(y, &ay);
            assert!(
                close(deriv, expect, 1e-4 * (1.0 + expect.abs())),
                "step {w}: {deriv} vs {expect}"
            );
        }
        // norms never increase
        for w in 1..traj.len() {
            assert!(norm2(&traj.states[w]) <= norm2(&traj.states[w - 1]) + 1e-9);
        }
    }

    #[test]
    fn clock_with_unit_magnitude_is_time() {
        // U ≡ 1 run: t′(2) = 2, recomputed from samples
        let traj = Trajectory {
            space: SpaceTag::R,
            times: (0..=20).map(|i| i as f64 * 0.1).collect(),
            states: vec![vec![1.0]; 21],
            controls: None,
            u_magnitude: Some(vec![1.0; 21]),
            tprime: None,
            stop: StopReason::Horizon,
            floor_steps: 0,
        };
        let tp = rescaled_time(&traj);
        assert!(close(*tp.last().unwrap(), 2.0, 1e-12));

        let idle = Trajectory {
            u_magnitude: Some(vec![0.0; 21]),
            ..traj
        };
        assert!(rescaled_time(&idle).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn csv_round_trip_shape() {
        let (spec, schedule) = optimal_2x2();
        let r0 = RadialState::new(vec![1.0, 1e-3]).unwrap();
        let cfg = IntegratorConfig {
            tprime_target: Some(0.5 * schedule.total_duration),
            ..IntegratorConfig::default()
        };
        let traj = simulate_r(spec.coupling(), &schedule, &r0, 40.0, &cfg).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,tprime,r_1,r_2,u_1,u_2,U");
        let first = lines.next().unwrap();
        assert_eq!(first.split(',').count(), 7);
        assert!(text.ends_with('\n'));
        assert!(!text.contains('\r'));
    }
}
