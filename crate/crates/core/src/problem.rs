//! Problem instances: the coupling matrix, the nonnegative starting point in
//! squared-amplitude space, structural validation, constraint-matrix
//! construction, and conversions between the three coordinate systems
//! (bilinear (x, y), radial r, squared p = r²).

use crate::linalg::{trace_inner, Mat, SymMatrix};
use crate::sdp::SdpProblem;
use crate::{Error, Result};
use serde::Deserialize;

/// An instance: coupling matrix `A` (square, generally non-symmetric) and the
/// starting point `p0` with `p0_i = r_i(0)²`. The coordinate being maximized
/// is always stored last; construction permutes the instance when a different
/// target index is requested.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    a: Mat,
    p0: Vec<f64>,
    /// Internal-to-original index map: `permutation[i]` is the original
    /// (0-based) label of internal coordinate `i`. Identity for the default
    /// target.
    permutation: Vec<usize>,
    pub label: Option<String>,
}

impl ProblemSpec {
    /// Builds an instance. `target_index` is 1-based; `None` targets the last
    /// coordinate. No structural validation happens here — call
    /// [`ProblemSpec::validate`].
    pub fn new(
        a: Mat,
        p0: Vec<f64>,
        target_index: Option<usize>,
        label: Option<String>,
    ) -> Result<Self> {
        if a.rows() != a.cols() {
            return Err(Error::DimensionMismatch {
                expected: a.rows(),
                found: a.cols(),
            });
        }
        let n = a.rows();
        if p0.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: p0.len(),
            });
        }
        if n == 0 {
            return Err(Error::InvalidInput("empty system".into()));
        }
        let target = match target_index {
            None => n - 1,
            Some(t) if t >= 1 && t <= n => t - 1,
            Some(t) => {
                return Err(Error::InvalidInput(format!(
                    "target index {t} out of range 1..={n}"
                )))
            }
        };
        // Swap the target to the last slot; everything downstream maximizes
        // the final coordinate.
        let mut permutation: Vec<usize> = (0..n).collect();
        permutation.swap(target, n - 1);
        let a = a.permute_square(&permutation);
        let p0 = permutation.iter().map(|&i| p0[i]).collect();
        Ok(ProblemSpec {
            a,
            p0,
            permutation,
            label,
        })
    }

    /// The tridiagonal chain family: −ξ on the diagonal, −1 above, +1 below.
    pub fn chain(n: usize, xi: f64, p0: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("empty system".into()));
        }
        let mut a = Mat::zeros(n, n);
        for i in 0..n {
            a.set(i, i, -xi);
            if i + 1 < n {
                a.set(i, i + 1, -1.0);
                a.set(i + 1, i, 1.0);
            }
        }
        ProblemSpec::new(a, p0, None, None)
    }

    pub fn n(&self) -> usize {
        self.a.rows()
    }

    pub fn coupling(&self) -> &Mat {
        &self.a
    }

    pub fn p0(&self) -> &[f64] {
        &self.p0
    }

    /// Original (0-based) label of internal coordinate `i`.
    pub fn original_index(&self, i: usize) -> usize {
        self.permutation[i]
    }

    /// Structural checks of the model hypotheses. Failures are reported, not
    /// raised.
    pub fn validate(&self) -> ValidationReport {
        let sym_part = {
            let n = self.n();
            SymMatrix::from_fn(n, |i, j| self.a.get(i, j) + self.a.get(j, i))
        };
        let neg_definite = crate::linalg::is_negative_definite(&sym_part, 1e-12).unwrap_or(false);
        let irreducible = strongly_connected(&self.a);
        let p0_nonnegative = self.p0.iter().all(|&p| p >= 0.0 && p.is_finite());
        ValidationReport {
            neg_definite,
            irreducible,
            p0_nonnegative,
        }
    }

    /// The constraint matrices: `A_i` carries `2a_ii` at (i, i) and `a_ij`
    /// symmetrically on row/column i, zero elsewhere. Their sum is A + Aᵀ.
    pub fn build_constraints(&self) -> ConstraintSet {
        let n = self.n();
        let matrices: Vec<SymMatrix> = (0..n)
            .map(|i| {
                let mut m = SymMatrix::zeros(n);
                for j in 0..n {
                    if j == i {
                        m.set_sym(i, i, 2.0 * self.a.get(i, i));
                    } else {
                        m.set_sym(i, j, self.a.get(i, j));
                    }
                }
                m
            })
            .collect();
        let rhs = self.p0.iter().map(|&p| -p).collect();
        ConstraintSet { matrices, rhs }
    }

    /// The diagonal feasible point diag(−p0_i / 2a_ii). For a validated
    /// instance it is positive semidefinite and meets every constraint,
    /// including the target coordinate's.
    pub fn feasible_seed(&self) -> SymMatrix {
        let d: Vec<f64> = (0..self.n())
            .map(|i| {
                if self.p0[i] == 0.0 {
                    0.0
                } else {
                    -self.p0[i] / (2.0 * self.a.get(i, i))
                }
            })
            .collect();
        SymMatrix::from_diag(&d)
    }

    /// Parses the instance file format: either an explicit matrix
    /// `{"A": [[...]], "p0": [...]}` or the chain shorthand
    /// `{"chain": {"n": 3, "xi": 1.0}, "p0": [...]}`, optionally with
    /// `target_index` (1-based) and `label`.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ProblemFile = serde_json::from_str(text)
            .map_err(|e| Error::InvalidInput(format!("problem file: {e}")))?;
        let spec = match (file.a, file.chain) {
            (Some(rows), None) => {
                let a = Mat::from_rows(&rows)?;
                ProblemSpec::new(a, file.p0, file.target_index, file.label)?
            }
            (None, Some(chain)) => {
                let mut spec = ProblemSpec::chain(chain.n, chain.xi, file.p0)?;
                if let Some(t) = file.target_index {
                    spec = ProblemSpec::new(spec.a, spec.p0, Some(t), file.label)?;
                } else {
                    spec.label = file.label;
                }
                spec
            }
            _ => {
                return Err(Error::InvalidInput(
                    "problem file must give exactly one of \"A\" or \"chain\"".into(),
                ))
            }
        };
        Ok(spec)
    }
}

#[derive(Deserialize)]
struct ProblemFile {
    #[serde(rename = "A")]
    a: Option<Vec<Vec<f64>>>,
    chain: Option<ChainShorthand>,
    p0: Vec<f64>,
    target_index: Option<usize>,
    label: Option<String>,
}

#[derive(Deserialize)]
struct ChainShorthand {
    n: usize,
    xi: f64,
}

/// Strong connectivity of the directed graph with an edge (i → j) whenever
/// a_ij ≠ 0, i ≠ j. This is the standard irreducibility test.
fn strongly_connected(a: &Mat) -> bool {
    let n = a.rows();
    if n <= 1 {
        return true;
    }
    let reach = |transpose: bool| -> bool {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if seen[j] || i == j {
                    continue;
                }
                let edge = if transpose { a.get(j, i) } else { a.get(i, j) };
                if edge != 0.0 {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.iter().all(|&s| s)
    };
    reach(false) && reach(true)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationReport {
    /// A + Aᵀ negative definite.
    pub neg_definite: bool,
    /// Nonzero pattern strongly connected.
    pub irreducible: bool,
    pub p0_nonnegative: bool,
}

impl ValidationReport {
    pub fn pass(&self) -> bool {
        self.neg_definite && self.irreducible && self.p0_nonnegative
    }

    pub fn failures(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !self.neg_definite {
            out.push("symmetric part of A is not negative definite");
        }
        if !self.irreducible {
            out.push("A is not irreducible (coupling graph not strongly connected)");
        }
        if !self.p0_nonnegative {
            out.push("p0 has a negative or non-finite entry");
        }
        out
    }
}

/// All n constraint matrices with right-hand sides b_i = −p0_i. The transfer
/// program uses the first n−1 as equalities and the last as objective.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    pub matrices: Vec<SymMatrix>,
    pub rhs: Vec<f64>,
}

impl ConstraintSet {
    /// The transfer program: maximize ⟨A_n, M⟩ subject to
    /// ⟨A_i, M⟩ = −p0_i for i < n and M ⪰ 0.
    pub fn sdp_problem(&self) -> SdpProblem {
        let n = self.matrices.len();
        let constraints = self.matrices[..n - 1]
            .iter()
            .cloned()
            .zip(self.rhs[..n - 1].iter().copied())
            .collect();
        SdpProblem::new(self.matrices[n - 1].clone(), constraints)
            .expect("constraint matrices share one dimension")
    }

    /// Verifies ⟨A_i, m⟩ = rhs_i for all i within `tol`.
    pub fn check_all(&self, m: &SymMatrix, tol: f64) -> bool {
        self.matrices
            .iter()
            .zip(self.rhs.iter())
            .all(|(a, b)| (trace_inner(a, m).unwrap() - b).abs() <= tol)
    }
}

/// State of the bilinear system, split into the two n-vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct BilinearState {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl BilinearState {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                found: y.len(),
            });
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite state entry".into()));
        }
        Ok(BilinearState { x, y })
    }

    pub fn norm(&self) -> f64 {
        self.x
            .iter()
            .chain(self.y.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

/// Radial amplitudes r_i ≥ 0.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialState {
    pub r: Vec<f64>,
}

impl RadialState {
    pub fn new(r: Vec<f64>) -> Result<Self> {
        if r.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::InvalidInput(
                "radial amplitudes must be nonnegative".into(),
            ));
        }
        Ok(RadialState { r })
    }
}

/// r_i = √(x_i² + y_i²).
pub fn xy_to_r(s: &BilinearState) -> RadialState {
    RadialState {
        r: s.x
            .iter()
            .zip(s.y.iter())
            .map(|(x, y)| x.hypot(*y))
            .collect(),
    }
}

/// p_i = r_i².
pub fn r_to_p(s: &RadialState) -> Vec<f64> {
    s.r.iter().map(|r| r * r).collect()
}

/// Nonnegative square root, rejecting negative entries.
pub fn p_to_r(p: &[f64]) -> Result<RadialState> {
    if p.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidInput("negative squared amplitude".into()));
    }
    Ok(RadialState {
        r: p.iter().map(|v| v.sqrt()).collect(),
    })
}

/// Random instance with a negative definite symmetric part and a dense
/// (hence irreducible) coupling pattern. Used by the rank probe and tests.
pub fn random_spec<R: rand::Rng>(n: usize, rng: &mut R) -> ProblemSpec {
    let mut a = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            a.set(i, j, rng.gen_range(-1.0..1.0));
        }
    }
    shift_to_dissipative(&mut a, rng.gen_range(0.1..1.0));
    let p0: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
    ProblemSpec::new(a, p0, None, None).expect("square matrix")
}

/// Random tridiagonal instance (banded coupling with nonzero sub- and
/// super-diagonals).
pub fn random_tridiagonal_spec<R: rand::Rng>(n: usize, rng: &mut R) -> ProblemSpec {
    let mut a = Mat::zeros(n, n);
    for i in 0..n {
        a.set(i, i, rng.gen_range(-1.0..1.0));
        if i + 1 < n {
            // Keep the off-diagonal pair bounded away from zero so the
            // chain stays irreducible.
            let up = rng.gen_range(0.2..1.5) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let dn = rng.gen_range(0.2..1.5) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            a.set(i, i + 1, up);
            a.set(i + 1, i, dn);
        }
    }
    shift_to_dissipative(&mut a, rng.gen_range(0.1..1.0));
    let p0: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
    ProblemSpec::new(a, p0, None, None).expect("square matrix")
}

/// Shifts the diagonal so the symmetric part has its largest eigenvalue at
/// −margin.
fn shift_to_dissipative(a: &mut Mat, margin: f64) {
    let n = a.rows();
    let sym = SymMatrix::from_fn(n, |i, j| 0.5 * (a.get(i, j) + a.get(j, i)));
    let top = crate::linalg::spectral_decompose(&sym)
        .expect("finite entries")
        .max_eigenvalue();
    let shift = top + margin;
    for i in 0..n {
        a.set(i, i, a.get(i, i) - shift);
    }
}
