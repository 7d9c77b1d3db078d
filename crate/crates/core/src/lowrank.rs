//! Numerical rank, a-priori rank bounds for optimal solutions, constructive
//! rank reduction inside the optimal face, and a randomized probe of how
//! often rank one is attained.

use crate::linalg::{spectral_decompose, trace_inner, Mat, SymMatrix};
use crate::problem::{random_spec, ProblemSpec};
use crate::sdp::{solve, SdpProblem, SolveStatus, SolverConfig};
use crate::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;
use std::ops::RangeInclusive;

/// Default relative eigenvalue cutoff for rank decisions.
pub const RANK_REL_TOL: f64 = 1e-8;

/// Number of eigenvalues at least `rel_tol · max(λ_max, tiny)`.
pub fn numerical_rank(m: &SymMatrix, rel_tol: f64) -> usize {
    let dec = spectral_decompose(m).expect("finite symmetric matrix");
    let cutoff = rel_tol * dec.max_eigenvalue().max(1e-300);
    dec.eigenvalues.iter().filter(|&&l| l >= cutoff).count()
}

/// Which structural fact produced the sharper bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RankRule {
    /// Only the generic bound ⌊(√(8n+1)−1)/2⌋ applies.
    General,
    /// Dimensions 2 and 3 admit rank-one optimal solutions.
    LowDimension,
    /// Banded coupling: bandwidth-r systems admit solutions of rank ≤ r.
    Banded,
}

#[derive(Debug, Clone, Serialize)]
pub struct RankBoundReport {
    pub n: usize,
    pub general_bound: usize,
    pub special_bound: Option<usize>,
    pub rule: RankRule,
}

impl RankBoundReport {
    /// The tightest applicable bound.
    pub fn effective(&self) -> usize {
        self.special_bound
            .map_or(self.general_bound, |s| s.min(self.general_bound))
    }
}

/// A-priori upper bound on the rank of some optimal solution of the transfer
/// program for this instance.
pub fn rank_bound(spec: &ProblemSpec) -> RankBoundReport {
    let n = spec.n();
    let general_bound = ((8.0 * n as f64 + 1.0).sqrt() - 1.0) as usize / 2;

    let mut special: Option<(usize, RankRule)> = None;
    if n <= 3 {
        special = Some((1, RankRule::LowDimension));
    }
    // bandwidth = 1 + widest nonzero offset
    let a = spec.coupling();
    let mut offset = 0usize;
    for i in 0..n {
        for j in 0..n {
            if a.get(i, j) != 0.0 {
                offset = offset.max(i.abs_diff(j));
            }
        }
    }
    let bandwidth = offset + 1;
    if bandwidth <= general_bound && special.is_none_or(|(s, _)| bandwidth < s) {
        special = Some((bandwidth, RankRule::Banded));
    }

    let (special_bound, rule) = match special {
        Some((s, rule)) => (Some(s), rule),
        None => (None, RankRule::General),
    };
    RankBoundReport {
        n,
        general_bound,
        special_bound,
        rule,
    }
}

/// Symmetric-matrix vectorization with √2 off-diagonal weights, so Euclidean
/// inner products of the vectors equal trace inner products of the matrices.
fn svec(s: &SymMatrix) -> Vec<f64> {
    let r = s.n();
    let mut out = Vec::with_capacity(r * (r + 1) / 2);
    let sqrt2 = std::f64::consts::SQRT_2;
    for i in 0..r {
        out.push(s.get(i, i));
        for j in (i + 1)..r {
            out.push(sqrt2 * s.get(i, j));
        }
    }
    out
}

fn unsvec(v: &[f64], r: usize) -> SymMatrix {
    let mut s = SymMatrix::zeros(r);
    let sqrt2 = std::f64::consts::SQRT_2;
    let mut idx = 0;
    for i in 0..r {
        s.set_sym(i, i, v[idx]);
        idx += 1;
        for j in (i + 1)..r {
            s.set_sym(i, j, v[idx] / sqrt2);
            idx += 1;
        }
    }
    s
}

/// Moves an optimal solution along null directions of the active constraints
/// (with the objective pinned as an extra equality) until no rank-decreasing
/// two-sided feasible direction remains.
///
/// The input must satisfy the constraints and carry the optimal objective
/// value; both are preserved to within 1e-7. The returned matrix never has
/// larger rank than the input.
pub fn rank_reduce(problem: &SdpProblem, m: &SymMatrix) -> Result<SymMatrix> {
    let n = problem.dim();
    if m.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: m.n(),
        });
    }
    // Pinned data: every constraint matrix plus the objective.
    let pinned: Vec<&SymMatrix> = problem
        .constraints
        .iter()
        .map(|(a, _)| a)
        .chain(std::iter::once(&problem.objective))
        .collect();
    let k = pinned.len();
    let reference: Vec<f64> = pinned
        .iter()
        .map(|a| trace_inner(a, m).expect("conforming"))
        .collect();
    let drift_budget = 1e-7;

    let ref_scale = reference.iter().fold(1.0f64, |s, v| s.max(v.abs()));

    let mut current = m.clone();
    for _ in 0..=n {
        let dec = spectral_decompose(&current)?;
        let lam_max = dec.max_eigenvalue().max(0.0);
        let cutoff = RANK_REL_TOL * lam_max.max(1e-300);
        let mut kept: Vec<usize> = (0..dec.eigenvalues.len())
            .filter(|&i| dec.eigenvalues[i] > cutoff)
            .collect();

        // Justified drops: an eigenpair may be floored outright when removing
        // it provably moves every pinned value by less than a small slice of
        // the drift budget. This cleans solver-noise eigenvalues that sit
        // just above the relative cutoff.
        let mut drop_allowance = 0.2 * drift_budget * ref_scale;
        while kept.len() > 1 {
            let &i = kept.last().expect("nonempty");
            let lam = dec.eigenvalues[i];
            let vec = &dec.eigenvectors[i];
            let impact = pinned
                .iter()
                .map(|a| (lam * a.quad_form(vec)).abs())
                .fold(0.0f64, f64::max);
            if impact <= drop_allowance {
                drop_allowance -= impact;
                kept.pop();
            } else {
                break;
            }
        }
        let r = kept.len();

        // Floor the spectrum: drop noise eigenvalues exactly to zero.
        let mut floored = SymMatrix::zeros(n);
        for &i in &kept {
            floored.add_outer(&dec.eigenvectors[i], dec.eigenvalues[i]);
        }
        current = floored;
        if r == 0 {
            return Ok(current);
        }

        // Restrict to the range of the current solution.
        let mut v = Mat::zeros(n, r);
        for (col, &i) in kept.iter().enumerate() {
            for row in 0..n {
                v.set(row, col, dec.eigenvectors[i][row]);
            }
        }
        let vt = v.transpose();
        let reduced: Vec<SymMatrix> = pinned.iter().map(|a| a.sandwich(&vt)).collect();

        // Null direction of S ↦ (⟨VᵀA_iV, S⟩)_i via the smallest eigenpair of
        // the normal matrix.
        let d = r * (r + 1) / 2;
        let rows: Vec<Vec<f64>> = reduced.iter().map(svec).collect();
        let mut normal = SymMatrix::zeros(d);
        for row in &rows {
            normal.add_outer(row, 1.0);
        }
        let ndec = spectral_decompose(&normal)?;
        let n_max = ndec.max_eigenvalue().max(1e-300);
        let n_min = ndec.min_eigenvalue();
        if n_min > 1e-13 * n_max {
            // No null direction: fixpoint. When the restricted system is
            // underdetermined a kernel must exist, so reaching this point
            // certifies r(r+1)/2 ≤ k.
            debug_assert!(r * (r + 1) / 2 <= k);
            return Ok(current);
        }
        let direction = unsvec(ndec.eigenvectors.last().expect("nonempty spectrum"), r);

        // Diagonal restriction of the current solution in its own eigenbasis.
        let p: Vec<f64> = kept.iter().map(|&i| dec.eigenvalues[i]).collect();
        let mut scaled = SymMatrix::zeros(r);
        for i in 0..r {
            for j in i..r {
                scaled.set_sym(i, j, direction.get(i, j) / (p[i] * p[j]).sqrt());
            }
        }
        let kdec = spectral_decompose(&scaled)?;
        let kappa_max = kdec.max_eigenvalue();
        let kappa_min = kdec.min_eigenvalue();
        let t_pos = if kappa_min < 0.0 {
            Some(-1.0 / kappa_min)
        } else {
            None
        };
        let t_neg = if kappa_max > 0.0 {
            Some(-1.0 / kappa_max)
        } else {
            None
        };
        let t = match (t_pos, t_neg) {
            (Some(p_), Some(n_)) => {
                if p_.abs() <= n_.abs() {
                    p_
                } else {
                    n_
                }
            }
            (Some(p_), None) => p_,
            (None, Some(n_)) => n_,
            (None, None) => {
                return Err(Error::NumericFailure(
                    "null direction produced no boundary step".into(),
                ))
            }
        };
        if !t.is_finite() || t.abs() > 1e12 * (1.0 + lam_max) {
            return Err(Error::NumericFailure(
                "boundary step is ill-conditioned".into(),
            ));
        }

        // Candidate update M + t·V S Vᵀ; roll back if the pinned values moved
        // beyond budget (can only happen if the kernel direction was bogus).
        let step = direction.sandwich(&v);
        let mut candidate = current.clone();
        candidate.add_scaled(&step, t);
        let drift = pinned
            .iter()
            .zip(reference.iter())
            .map(|(a, b)| (trace_inner(a, &candidate).unwrap() - b).abs())
            .fold(0.0f64, f64::max);
        if drift > 0.5 * drift_budget {
            return Ok(current);
        }
        current = candidate;
    }
    Ok(current)
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeEntry {
    pub n: usize,
    pub count: usize,
    /// Final rank → number of instances.
    pub rank_histogram: BTreeMap<usize, usize>,
    pub fraction_rank_le_1: f64,
    pub max_objective_drift: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeReport {
    pub seed: u64,
    pub count_per_n: usize,
    pub entries: Vec<ProbeEntry>,
}

impl ProbeReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable report")
    }
}

struct ProbeOutcome {
    rank: Option<usize>,
    drift: f64,
}

fn probe_one(n: usize, seed: u64, index: usize) -> ProbeOutcome {
    // Per-instance stream: reproducible regardless of execution order.
    let stream = seed ^ ((n as u64) << 40) ^ (index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(stream);
    let spec = random_spec(n, &mut rng);
    let sdp = spec.build_constraints().sdp_problem();
    // Tighter gap than the general default so complementarity noise in the
    // spectrum sits well below the rank cutoff.
    let cfg = SolverConfig {
        gap_tol: 1e-10,
        ..SolverConfig::default()
    };
    let sol = solve(&sdp, &cfg);
    if sol.status != SolveStatus::Optimal {
        return ProbeOutcome {
            rank: None,
            drift: f64::NAN,
        };
    }
    match rank_reduce(&sdp, &sol.m) {
        Ok(reduced) => {
            let drift =
                (trace_inner(&sdp.objective, &reduced).unwrap() - sol.objective_value).abs();
            let rank = numerical_rank(&reduced, RANK_REL_TOL);
            // guaranteed in dimensions two and three; a violation means a
            // numerical defect, not an open question
            debug_assert!(n > 3 || rank <= 1, "n={n}: reduced rank {rank}");
            ProbeOutcome { rank: Some(rank), drift }
        }
        Err(_) => ProbeOutcome {
            rank: None,
            drift: f64::NAN,
        },
    }
}

/// Solves `count` random instances per dimension, reduces each optimum, and
/// reports the distribution of final ranks. Nothing is asserted here; rank-1
/// frequency for n ≥ 4 is an empirical observation, not a guarantee.
pub fn conjecture_probe(
    count: usize,
    n_range: RangeInclusive<usize>,
    seed: u64,
    workers: usize,
) -> ProbeReport {
    let run = |n: usize| -> ProbeEntry {
        let outcomes: Vec<ProbeOutcome> = if workers > 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .expect("worker pool");
            pool.install(|| {
                (0..count)
                    .into_par_iter()
                    .map(|i| probe_one(n, seed, i))
                    .collect()
            })
        } else {
            (0..count).map(|i| probe_one(n, seed, i)).collect()
        };

        let mut hist = BTreeMap::new();
        let mut failures = 0;
        let mut max_drift = 0.0f64;
        let mut le_one = 0usize;
        for o in &outcomes {
            match o.rank {
                Some(r) => {
                    *hist.entry(r).or_insert(0) += 1;
                    if r <= 1 {
                        le_one += 1;
                    }
                    max_drift = max_drift.max(o.drift);
                }
                None => failures += 1,
            }
        }
        let solved = count - failures;
        ProbeEntry {
            n,
            count,
            rank_histogram: hist,
            fraction_rank_le_1: if solved == 0 {
                0.0
            } else {
                le_one as f64 / solved as f64
            },
            max_objective_drift: max_drift,
            failures,
        }
    };

    ProbeReport {
        seed,
        count_per_n: count,
        entries: n_range.map(run).collect(),
    }
}
