//! Primal-dual interior-point solver for small dense semidefinite programs.
//!
//! Solves, in maximization form,
//!
//! ```text
//! maximize   ⟨C, X⟩
//! subject to ⟨A_i, X⟩ = b_i   (i = 1..m)
//!            X ⪰ 0
//! ```
//!
//! with the dual `minimize bᵀy subject to Z = Σ y_i A_i − C ⪰ 0`. The method
//! is infeasible-start path following with Mehrotra predictor-corrector steps
//! in the Nesterov–Todd scaling, and the normal-equations (Schur complement)
//! system solved densely by Cholesky. Problem sizes here are tiny — at most a
//! handful of constraints on matrices of dimension ≲ 10 — so the
//! implementation favors transparency and robustness over speed.

use crate::linalg::{
    dot, norm2, norm_inf, spectral_decompose, trace_inner, Cholesky, Mat, SpectralDecomposition,
    SymMatrix,
};
use crate::{Error, Result};

/// The program data: objective matrix and equality constraints.
#[derive(Debug, Clone)]
pub struct SdpProblem {
    /// Objective matrix C (maximized).
    pub objective: SymMatrix,
    /// Pairs (A_i, b_i) of constraint matrix and right-hand side.
    pub constraints: Vec<(SymMatrix, f64)>,
}

impl SdpProblem {
    pub fn new(objective: SymMatrix, constraints: Vec<(SymMatrix, f64)>) -> Result<Self> {
        let n = objective.n();
        for (a, _) in &constraints {
            if a.n() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: a.n(),
                });
            }
        }
        Ok(SdpProblem {
            objective,
            constraints,
        })
    }

    pub fn dim(&self) -> usize {
        self.objective.n()
    }

    pub fn rhs(&self) -> Vec<f64> {
        self.constraints.iter().map(|(_, b)| *b).collect()
    }

    /// ⟨A_i, X⟩ for every constraint.
    pub fn apply(&self, x: &SymMatrix) -> Vec<f64> {
        self.constraints
            .iter()
            .map(|(a, _)| trace_inner(a, x).expect("conforming dimensions"))
            .collect()
    }

    /// Σ y_i A_i.
    pub fn combine(&self, y: &[f64]) -> SymMatrix {
        let mut out = SymMatrix::zeros(self.dim());
        for ((a, _), &yi) in self.constraints.iter().zip(y.iter()) {
            out.add_scaled(a, yi);
        }
        out
    }

    /// Upper bound on the objective implied by a positive definite
    /// dissipation matrix B = −(C + Σ A_i), when one exists: since
    /// ⟨B, X⟩ ≥ 0 over the PSD cone, ⟨C, X⟩ ≤ −Σ b_i on the feasible set.
    pub fn dissipation_bound(&self) -> Option<f64> {
        let mut b = self.objective.clone();
        for (a, _) in &self.constraints {
            b.add_scaled(a, 1.0);
        }
        b.scale(-1.0);
        let dec = spectral_decompose(&b).ok()?;
        if dec.min_eigenvalue() > 1e-12 * (1.0 + b.max_abs()) {
            Some(-self.rhs().iter().sum::<f64>())
        } else {
            None
        }
    }
}

/// Solver knobs. All fields have spec'd defaults; the CLI maps flags onto
/// this struct directly.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Relative duality-gap target.
    pub gap_tol: f64,
    /// Primal/dual feasibility target (relative).
    pub feas_tol: f64,
    pub max_iter: usize,
    pub verbose: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            gap_tol: 1e-8,
            feas_tol: 1e-8,
            max_iter: 200,
            verbose: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    MaxIterations,
    NumericFailure,
    InfeasibleDetected,
    UnboundedDetected,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::MaxIterations => "max-iterations",
            SolveStatus::NumericFailure => "numeric-failure",
            SolveStatus::InfeasibleDetected => "infeasible-detected",
            SolveStatus::UnboundedDetected => "unbounded-detected",
        };
        f.write_str(s)
    }
}

/// Solver output: primal/dual iterates, objective, and diagnostics.
/// Non-optimal terminations are reported through `status`, never as errors.
#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub m: SymMatrix,
    pub dual_y: Vec<f64>,
    pub dual_slack: SymMatrix,
    pub objective_value: f64,
    /// Relative duality gap at exit.
    pub gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    /// True when the stall fallback re-solved with zero right-hand sides
    /// nudged to −1e-10.
    pub perturbed: bool,
}

struct Iterate {
    x: SymMatrix,
    y: Vec<f64>,
    z: SymMatrix,
}

struct Residuals {
    r_p: Vec<f64>,
    r_d: SymMatrix,
    p_norm: f64,
    d_norm: f64,
    gap: f64,
    pobj: f64,
    dobj: f64,
}

fn residuals(problem: &SdpProblem, it: &Iterate, b_norm: f64, c_norm: f64) -> Residuals {
    let ax = problem.apply(&it.x);
    let r_p: Vec<f64> = problem
        .constraints
        .iter()
        .zip(ax.iter())
        .map(|((_, b), a)| b - a)
        .collect();
    let mut r_d = problem.combine(&it.y);
    r_d.add_scaled(&problem.objective, -1.0);
    r_d.add_scaled(&it.z, -1.0);
    let pobj = trace_inner(&problem.objective, &it.x).unwrap();
    let dobj = dot(&problem.rhs(), &it.y);
    Residuals {
        p_norm: norm2(&r_p) / (1.0 + b_norm),
        d_norm: r_d.frobenius_norm() / (1.0 + c_norm),
        gap: (dobj - pobj).abs() / (1.0 + pobj.abs() + dobj.abs()),
        r_p,
        r_d,
        pobj,
        dobj,
    }
}

/// Nesterov–Todd scaling data at the current iterate.
struct NtScaling {
    /// W = G Gᵀ, the unique positive definite matrix with W Z W = X.
    w: SymMatrix,
    g: Mat,
    g_inv: Mat,
    /// V = Gᵀ Z G = G⁻¹ X G⁻ᵀ, the scaled variable shared by both sides.
    v_dec: SpectralDecomposition,
    v: SymMatrix,
}

fn nt_scaling(x: &SymMatrix, z: &SymMatrix) -> Result<NtScaling> {
    let z_dec = spectral_decompose(z)?;
    if z_dec.min_eigenvalue() <= 0.0 {
        return Err(Error::NumericFailure(
            "dual iterate lost definiteness".into(),
        ));
    }
    let z_half = z_dec.map_eigenvalues(|l| l.sqrt());
    let z_minus_half = z_dec.map_eigenvalues(|l| 1.0 / l.sqrt());

    let inner = x.sandwich(&z_half.as_mat()); // Z^{1/2} X Z^{1/2}
    let inner_dec = spectral_decompose(&inner)?;
    if inner_dec.min_eigenvalue() <= 0.0 {
        return Err(Error::NumericFailure(
            "primal iterate lost definiteness".into(),
        ));
    }
    let quarter = inner_dec.map_eigenvalues(|l| l.powf(0.25));
    let quarter_inv = inner_dec.map_eigenvalues(|l| l.powf(-0.25));

    let g = z_minus_half.as_mat().mat_mul(&quarter.as_mat());
    let g_inv = quarter_inv.as_mat().mat_mul(&z_half.as_mat());
    let w = SymMatrix::symmetrize(&g.mat_mul(&g.transpose()));
    let v = z.sandwich(&g.transpose());
    let v_dec = spectral_decompose(&v)?;
    Ok(NtScaling {
        w,
        g,
        g_inv,
        v_dec,
        v,
    })
}

impl NtScaling {
    /// Inverse of the Lyapunov operator U ↦ (UV + VU)/2 in V's eigenbasis.
    fn lyapunov_solve(&self, u: &SymMatrix) -> SymMatrix {
        let q = self.v_dec.basis();
        let u_bar = u.sandwich(&q.transpose());
        let k = u_bar.n();
        let mut r_bar = SymMatrix::zeros(k);
        for i in 0..k {
            for j in i..k {
                let denom = self.v_dec.eigenvalues[i] + self.v_dec.eigenvalues[j];
                r_bar.set_sym(i, j, 2.0 * u_bar.get(i, j) / denom);
            }
        }
        r_bar.sandwich(&q)
    }
}

struct Direction {
    dx: SymMatrix,
    dy: Vec<f64>,
    dz: SymMatrix,
}

/// Solves the scaled Newton system for a given complementarity target `r_c`:
///   ⟨A_i, ΔX⟩ = r_p,   ΣΔy_i A_i + ΔZ = −R_d (as residual),   ΔX + WΔZW = R_c.
fn solve_direction(
    problem: &SdpProblem,
    nt: &NtScaling,
    res: &Residuals,
    r_c: &SymMatrix,
) -> Result<Direction> {
    let m = problem.constraints.len();

    // Schur complement S_ij = ⟨A_i, W A_j W⟩ (symmetric positive definite).
    let wawt: Vec<SymMatrix> = problem
        .constraints
        .iter()
        .map(|(a, _)| a.sandwich(&nt.w.as_mat()))
        .collect();
    let mut schur = SymMatrix::zeros(m);
    for i in 0..m {
        for j in i..m {
            schur.set_sym(
                i,
                j,
                trace_inner(&problem.constraints[i].0, &wawt[j]).unwrap(),
            );
        }
    }

    // rhs_i = ⟨A_i, R_c − W R_d W⟩ − r_p_i
    // (sign convention R_d = Σy_iA_i − C − Z throughout)
    let mut carry = r_c.clone();
    carry.add_scaled(&res.r_d.sandwich(&nt.w.as_mat()), -1.0);
    let rhs: Vec<f64> = problem
        .constraints
        .iter()
        .zip(res.r_p.iter())
        .map(|((a, _), rp)| trace_inner(a, &carry).unwrap() - rp)
        .collect();

    let dy = if m == 0 {
        Vec::new()
    } else {
        // Escalating ridge fallback for nearly dependent constraints.
        let mut ridge = 0.0;
        let base = schur.trace().abs().max(1e-300) / m as f64;
        loop {
            let mut s = schur.clone();
            if ridge > 0.0 {
                for i in 0..m {
                    s.set_sym(i, i, s.get(i, i) + ridge * base);
                }
            }
            match Cholesky::new(&s) {
                Ok(ch) => break ch.solve(&rhs),
                Err(_) if ridge < 1e-6 => {
                    ridge = if ridge == 0.0 { 1e-14 } else { ridge * 100.0 };
                }
                Err(_) => {
                    return Err(Error::NumericFailure(
                        "Schur complement is numerically singular".into(),
                    ))
                }
            }
        }
    };

    // ΔZ restores the dual equation exactly after a unit step:
    // Σ(y+Δy)_i A_i − C − (Z+ΔZ) = 0  ⟹  ΔZ = ΣΔy_i A_i + R_d.
    let mut dz = problem.combine(&dy);
    dz.add_scaled(&res.r_d, 1.0);

    // ΔX = R_c − W ΔZ W
    let mut dx = r_c.clone();
    dx.add_scaled(&dz.sandwich(&nt.w.as_mat()), -1.0);

    Ok(Direction { dx, dy, dz })
}

/// Largest step in [0, 1] keeping `s + α·d` inside the cone, damped by the
/// fraction-to-boundary factor 0.98.
fn step_length(s: &SymMatrix, d: &SymMatrix) -> Result<f64> {
    match crate::linalg::max_step_to_boundary(s, d)? {
        None => Ok(1.0),
        Some(alpha) => Ok((0.98 * alpha).min(1.0)),
    }
}

/// Solves the program. Non-optimal outcomes are reported in the returned
/// status; `Err` is reserved for malformed input (dimension mismatches).
pub fn solve(problem: &SdpProblem, cfg: &SolverConfig) -> SdpSolution {
    let first = solve_once(problem, cfg);
    if first.status == SolveStatus::Optimal {
        return first;
    }
    // Stall fallback: strict feasibility can fail when some right-hand sides
    // are exactly zero. Retry once with those nudged to −1e-10.
    let has_zero_rhs = problem.constraints.iter().any(|(_, b)| *b == 0.0);
    if has_zero_rhs
        && matches!(
            first.status,
            SolveStatus::MaxIterations | SolveStatus::NumericFailure
        )
    {
        let nudged = SdpProblem {
            objective: problem.objective.clone(),
            constraints: problem
                .constraints
                .iter()
                .map(|(a, b)| (a.clone(), if *b == 0.0 { -1e-10 } else { *b }))
                .collect(),
        };
        let mut second = solve_once(&nudged, cfg);
        if second.status == SolveStatus::Optimal {
            second.perturbed = true;
            return second;
        }
    }
    first
}

fn solve_once(problem: &SdpProblem, cfg: &SolverConfig) -> SdpSolution {
    let n = problem.dim();
    let b = problem.rhs();
    let b_norm = norm2(&b);
    let c_norm = problem.objective.frobenius_norm();
    let bound = problem.dissipation_bound();

    let tau = 1.0 + norm_inf(&b);
    let mut it = Iterate {
        x: SymMatrix::identity(n).scaled(tau),
        y: vec![0.0; problem.constraints.len()],
        z: SymMatrix::identity(n).scaled(tau),
    };

    let fail =
        |iterations: usize, it: &Iterate, status: SolveStatus, res: &Residuals| SdpSolution {
            m: it.x.clone(),
            dual_y: it.y.clone(),
            dual_slack: it.z.clone(),
            objective_value: res.pobj,
            gap: res.gap,
            primal_residual: res.p_norm,
            dual_residual: res.d_norm,
            iterations,
            status,
            perturbed: false,
        };

    let mut gap_history: Vec<f64> = Vec::new();
    let mut iterations = 0;

    loop {
        let res = residuals(problem, &it, b_norm, c_norm);

        // Weak duality (adjusted for infeasibility of the iterates):
        // dobj − pobj = ⟨X,Z⟩ + yᵀr_p + ⟨R_d,X⟩ with ⟨X,Z⟩ ≥ 0.
        debug_assert!(
            res.dobj - res.pobj
                >= -(norm2(&it.y) * norm2(&res.r_p)
                    + res.r_d.frobenius_norm() * it.x.frobenius_norm())
                    - 1e-7 * (1.0 + res.pobj.abs() + res.dobj.abs())
        );

        if cfg.verbose {
            eprintln!(
                "iter {iterations:3}  pobj {:+.9e}  dobj {:+.9e}  gap {:.2e}  pres {:.2e}  dres {:.2e}",
                res.pobj, res.dobj, res.gap, res.p_norm, res.d_norm
            );
        }

        if res.gap <= cfg.gap_tol && res.p_norm <= cfg.feas_tol && res.d_norm <= cfg.feas_tol {
            return SdpSolution {
                m: it.x.clone(),
                dual_y: it.y.clone(),
                dual_slack: it.z.clone(),
                objective_value: res.pobj,
                gap: res.gap,
                primal_residual: res.p_norm,
                dual_residual: res.d_norm,
                iterations,
                status: SolveStatus::Optimal,
                perturbed: false,
            };
        }

        if let Some(bd) = bound {
            if res.pobj > bd + 1e3 * (1.0 + bd.abs()) {
                return fail(iterations, &it, SolveStatus::UnboundedDetected, &res);
            }
        }
        if it.x.max_abs() > 1e14 * tau || norm_inf(&it.y) > 1e14 * tau {
            // Diverging iterates with unresolved primal infeasibility point at
            // an inconsistent constraint set.
            let status = if res.p_norm > cfg.feas_tol {
                SolveStatus::InfeasibleDetected
            } else {
                SolveStatus::NumericFailure
            };
            return fail(iterations, &it, status, &res);
        }
        if iterations >= cfg.max_iter {
            return fail(iterations, &it, SolveStatus::MaxIterations, &res);
        }
        // Gap plateau over 20 iterations: bail out and let the caller's
        // perturbation fallback take over.
        gap_history.push(res.gap.max(res.p_norm).max(res.d_norm));
        if gap_history.len() > 20 {
            let prev = gap_history[gap_history.len() - 21];
            let now = *gap_history.last().unwrap();
            if now > 0.5 * prev {
                return fail(iterations, &it, SolveStatus::MaxIterations, &res);
            }
        }

        let mu = trace_inner(&it.x, &it.z).unwrap() / n as f64;
        let nt = match nt_scaling(&it.x, &it.z) {
            Ok(nt) => nt,
            Err(_) => return fail(iterations, &it, SolveStatus::NumericFailure, &res),
        };

        // Predictor: affine direction aiming at zero complementarity.
        // In the scaled space the target reduces to R_c = −X.
        let r_c_aff = it.x.scaled(-1.0);
        let aff = match solve_direction(problem, &nt, &res, &r_c_aff) {
            Ok(d) => d,
            Err(_) => return fail(iterations, &it, SolveStatus::NumericFailure, &res),
        };
        let (ap_aff, ad_aff) = match (step_length(&it.x, &aff.dx), step_length(&it.z, &aff.dz)) {
            (Ok(a), Ok(b)) => (a, b),
            _ => return fail(iterations, &it, SolveStatus::NumericFailure, &res),
        };

        // Mehrotra centering weight.
        let mut x_aff = it.x.clone();
        x_aff.add_scaled(&aff.dx, ap_aff);
        let mut z_aff = it.z.clone();
        z_aff.add_scaled(&aff.dz, ad_aff);
        let mu_aff = trace_inner(&x_aff, &z_aff).unwrap() / n as f64;
        let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);

        // Corrector: second-order term in the scaled space.
        let dx_hat = aff.dx.sandwich(&nt.g_inv);
        let dz_hat = aff.dz.sandwich(&nt.g.transpose());
        let cross = SymMatrix::symmetrize(&dx_hat.as_mat().mat_mul(&dz_hat.as_mat()));
        let mut target = SymMatrix::identity(n).scaled(sigma * mu);
        target.add_scaled(
            &SymMatrix::symmetrize(&nt.v.as_mat().mat_mul(&nt.v.as_mat())),
            -1.0,
        );
        target.add_scaled(&cross, -1.0);
        let r_c = nt.lyapunov_solve(&target).sandwich(&nt.g);

        let dir = match solve_direction(problem, &nt, &res, &r_c) {
            Ok(d) => d,
            Err(_) => return fail(iterations, &it, SolveStatus::NumericFailure, &res),
        };
        let (ap, ad) = match (step_length(&it.x, &dir.dx), step_length(&it.z, &dir.dz)) {
            (Ok(a), Ok(b)) => (a, b),
            _ => return fail(iterations, &it, SolveStatus::NumericFailure, &res),
        };

        it.x.add_scaled(&dir.dx, ap);
        for (yi, dyi) in it.y.iter_mut().zip(dir.dy.iter()) {
            *yi += ad * dyi;
        }
        it.z.add_scaled(&dir.dz, ad);
        iterations += 1;
    }
}

/// Optimality certificate for a solved program.
#[derive(Debug, Clone)]
pub struct CertReport {
    pub min_eig_primal: f64,
    pub min_eig_dual: f64,
    pub constraint_residuals: Vec<f64>,
    /// ⟨M, Z⟩ at the reported solution.
    pub complementarity: f64,
    /// Recomputed relative duality gap.
    pub gap: f64,
    /// Objective headroom under the dissipation bound, when the bound applies.
    pub bound_slack: Option<f64>,
    /// Human-readable names of failed checks.
    pub failed: Vec<String>,
    pub feasibility_pass: bool,
    pub optimality_pass: bool,
    pub pass: bool,
}

/// Re-derives feasibility and optimality evidence from the solution matrices
/// themselves rather than trusting the solver's reported diagnostics.
pub fn certify(problem: &SdpProblem, sol: &SdpSolution, cfg: &SolverConfig) -> CertReport {
    let b = problem.rhs();
    let b_scale = 1.0 + norm2(&b);
    let mut failed = Vec::new();

    let x_dec = spectral_decompose(&sol.m).expect("finite solution matrix");
    let min_eig_primal = x_dec.min_eigenvalue();
    let eig_floor = -1e-9 * (1.0 + x_dec.max_eigenvalue().abs());
    if min_eig_primal < eig_floor {
        failed.push("primal positive semidefiniteness".into());
    }

    let ax = problem.apply(&sol.m);
    let constraint_residuals: Vec<f64> = ax
        .iter()
        .zip(b.iter())
        .map(|(a, bi)| (a - bi).abs())
        .collect();
    for (i, r) in constraint_residuals.iter().enumerate() {
        if *r > cfg.feas_tol * b_scale {
            failed.push(format!("constraint {} residual {:.3e}", i + 1, r));
        }
    }
    let feasibility_pass = failed.is_empty();

    // Dual side: Z must be PSD and must equal Σ y_i A_i − C.
    let mut z_model = problem.combine(&sol.dual_y);
    z_model.add_scaled(&problem.objective, -1.0);
    let z_dec = spectral_decompose(&z_model).expect("finite dual matrix");
    let min_eig_dual = z_dec.min_eigenvalue();
    let z_floor = -1e-9 * (1.0 + z_dec.max_eigenvalue().abs());
    let mut opt_failed = Vec::new();
    if min_eig_dual < z_floor {
        opt_failed.push("dual positive semidefiniteness".to_string());
    }

    let pobj = trace_inner(&problem.objective, &sol.m).unwrap();
    let dobj = dot(&b, &sol.dual_y);
    let gap = (dobj - pobj).abs() / (1.0 + pobj.abs() + dobj.abs());
    let gap_limit = cfg.gap_tol.max(1e-7);
    if gap > gap_limit {
        opt_failed.push(format!("duality gap {gap:.3e}"));
    }

    let complementarity = trace_inner(&sol.m, &z_model).unwrap();
    if complementarity.abs() > gap_limit * (1.0 + pobj.abs() + dobj.abs()) {
        opt_failed.push(format!("complementarity {complementarity:.3e}"));
    }

    let bound_slack = problem.dissipation_bound().map(|bd| bd - pobj);
    if let Some(slack) = bound_slack {
        if slack < -1e-7 * (1.0 + b_scale) {
            opt_failed.push(format!("dissipation bound violated by {:.3e}", -slack));
        }
    }

    let optimality_pass = opt_failed.is_empty();
    failed.extend(opt_failed);

    CertReport {
        min_eig_primal,
        min_eig_dual,
        constraint_residuals,
        complementarity,
        gap,
        bound_slack,
        pass: feasibility_pass && optimality_pass,
        feasibility_pass,
        optimality_pass,
        failed,
    }
}
