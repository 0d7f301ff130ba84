//! Discrete-time linear systems `x+ = A x + B u + eta`, LQR stabilization
//! and the closed-loop form `x+ = A_cl x + B u' + eta` with `u = -K x + u'`.

use std::fmt;

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::geometry::{HalfspacePolytope, HyperRectangle};
use crate::noise::NoiseSource;

const RANK_TOL: f64 = 1e-9;
const DARE_TOL: f64 = 1e-10;
const DARE_MAX_ITER: usize = 100_000;

#[derive(Debug, Clone)]
pub struct LinearSystem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    input_set: HalfspacePolytope,
    noise: NoiseSource,
}

impl LinearSystem {
    /// Validates shapes, non-singular `A` and controllability of `(A, B)`.
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        input_set: HalfspacePolytope,
        noise: NoiseSource,
    ) -> Result<Self> {
        let n = a.nrows();
        check_dim("A columns", n, a.ncols())?;
        check_dim("B rows", n, b.nrows())?;
        check_dim("input set dimension", b.ncols(), input_set.dim())?;
        check_dim("noise dimension", n, noise.dim())?;
        if is_singular(&a) {
            return Err(Error::Assumption {
                assumption: "1",
                detail: "state matrix A is singular".into(),
            });
        }
        if !check_controllability(&a, &b)? {
            return Err(Error::Assumption {
                assumption: "1",
                detail: "pair (A, B) is not controllable".into(),
            });
        }
        Ok(Self {
            a,
            b,
            input_set,
            noise,
        })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn input_set(&self) -> &HalfspacePolytope {
        &self.input_set
    }

    pub fn noise(&self) -> &NoiseSource {
        &self.noise
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn with_noise(mut self, noise: NoiseSource) -> Result<Self> {
        check_dim("noise dimension", self.state_dim(), noise.dim())?;
        self.noise = noise;
        Ok(self)
    }

    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>, eta: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u + eta
    }

    /// `B^-1`; requires a square, invertible input matrix.
    pub fn b_inverse(&self) -> Result<DMatrix<f64>> {
        if self.b.nrows() != self.b.ncols() {
            return Err(Error::Singular(format!(
                "input matrix B is {}x{}, not square; group time steps first",
                self.b.nrows(),
                self.b.ncols()
            )));
        }
        if is_singular(&self.b) {
            return Err(Error::Singular("input matrix B is not invertible".into()));
        }
        self.b
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Singular("input matrix B is not invertible".into()))
    }
}

#[derive(Debug, Clone)]
pub struct LqrWeights {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl LqrWeights {
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        for (name, m) in [("Q", &q), ("R", &r)] {
            if m.nrows() != m.ncols() {
                return Err(Error::InvalidArgument(format!("{name} is not square")));
            }
            if (m - m.transpose()).abs().max() > 1e-12 * (1.0 + m.abs().max()) {
                return Err(Error::InvalidArgument(format!("{name} is not symmetric")));
            }
        }
        if r.clone().cholesky().is_none() {
            return Err(Error::InvalidArgument("R is not positive definite".into()));
        }
        let tol = 1e-12 * (1.0 + q.abs().max());
        if q.clone().symmetric_eigen().eigenvalues.iter().any(|&l| l < -tol) {
            return Err(Error::InvalidArgument("Q is not positive semidefinite".into()));
        }
        Ok(Self { q, r })
    }

    pub fn identity(n: usize, p: usize) -> Self {
        Self {
            q: DMatrix::identity(n, n),
            r: DMatrix::identity(p, p),
        }
    }
}

/// rank `[B AB ... A^(n-1) B] == n`.
pub fn check_controllability(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<bool> {
    let n = a.nrows();
    check_dim("A columns", n, a.ncols())?;
    check_dim("B rows", n, b.nrows())?;
    let p = b.ncols();
    let mut ctrb = DMatrix::zeros(n, n * p);
    let mut block = b.clone();
    for i in 0..n {
        ctrb.view_mut((0, i * p), (n, p)).copy_from(&block);
        block = a * block;
    }
    Ok(numerical_rank(&ctrb) == n)
}

pub(crate) fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    let max = sv.max();
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * max).count()
}

fn is_singular(m: &DMatrix<f64>) -> bool {
    m.nrows() != m.ncols() || numerical_rank(m) < m.nrows()
}

/// Fixed-point iteration of the discrete algebraic Riccati equation from
/// `P = Q`; returns `(P, K)` with `K = (R + B'PB)^-1 B'PA`.
pub fn solve_dare(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    weights: &LqrWeights,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    check_dim("A columns", n, a.ncols())?;
    check_dim("B rows", n, b.nrows())?;
    check_dim("Q size", n, weights.q.nrows())?;
    check_dim("R size", b.ncols(), weights.r.nrows())?;

    let at = a.transpose();
    let bt = b.transpose();
    let gain_of = |p: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        let s = &weights.r + &bt * p * b;
        let s_inv = s
            .try_inverse()
            .ok_or_else(|| Error::Singular("R + B'PB is singular".into()))?;
        Ok(s_inv * &bt * p * a)
    };

    let mut p = weights.q.clone();
    let mut last_step = f64::INFINITY;
    for _ in 0..DARE_MAX_ITER {
        let k = gain_of(&p)?;
        let next = &weights.q + &at * &p * a - &at * &p * b * k;
        last_step = (&next - &p).abs().max();
        p = next;
        if last_step < DARE_TOL {
            let k = gain_of(&p)?;
            let rho = spectral_radius(&(a - b * &k));
            if rho >= 1.0 {
                return Err(Error::InvalidArgument(format!(
                    "LQR gain is not stabilizing (spectral radius {rho})"
                )));
            }
            return Ok((p, k));
        }
        if !last_step.is_finite() {
            break;
        }
    }
    Err(Error::NonConvergence {
        iterations: DARE_MAX_ITER,
        last_step,
    })
}

/// Diagnostic eigenvalues: closed form for `n <= 2`, Schur (shifted QR)
/// iteration otherwise.
pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<Complex<f64>> {
    match m.nrows() {
        0 => Vec::new(),
        1 => vec![Complex::new(m[(0, 0)], 0.0)],
        2 => {
            let tr = m[(0, 0)] + m[(1, 1)];
            let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
            let disc = tr * tr / 4.0 - det;
            if disc >= 0.0 {
                let s = disc.sqrt();
                vec![Complex::new(tr / 2.0 + s, 0.0), Complex::new(tr / 2.0 - s, 0.0)]
            } else {
                let s = (-disc).sqrt();
                vec![Complex::new(tr / 2.0, s), Complex::new(tr / 2.0, -s)]
            }
        }
        _ => m.clone().complex_eigenvalues().iter().copied().collect(),
    }
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    eigenvalues(m)
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Why a feedback gain fails the admissibility or invertibility assumption.
#[derive(Debug, Clone, PartialEq)]
pub enum GainViolation {
    InputOutsideU { vertex: Vec<f64>, input: Vec<f64> },
    SingularClosedLoop,
}

impl fmt::Display for GainViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GainViolation::InputOutsideU { vertex, input } => {
                write!(f, "-K x = {input:?} leaves U at vertex x = {vertex:?}")
            }
            GainViolation::SingularClosedLoop => write!(f, "A - B K is singular"),
        }
    }
}

/// Checks `-K v in U` at every vertex `v` of `region` and `det(A - BK) != 0`.
pub fn validate_gain(
    sys: &LinearSystem,
    gain: &DMatrix<f64>,
    region: &HyperRectangle,
) -> Result<(), GainViolation> {
    assert_eq!(gain.nrows(), sys.input_dim(), "gain rows must match input dimension");
    assert_eq!(gain.ncols(), sys.state_dim(), "gain columns must match state dimension");
    assert_eq!(region.dim(), sys.state_dim(), "region dimension must match state");
    for v in region.vertices() {
        let input = -(gain * DVector::from_column_slice(&v));
        if !sys.input_set.contains_unchecked(input.as_slice()) {
            return Err(GainViolation::InputOutsideU {
                vertex: v,
                input: input.iter().copied().collect(),
            });
        }
    }
    if is_singular(&(&sys.a - &sys.b * gain)) {
        return Err(GainViolation::SingularClosedLoop);
    }
    Ok(())
}

/// The `m`-step system with stacked inputs `(u_k, ..., u_{k+m-1})`.
///
/// `x_{k+m} = A^m x_k + [A^(m-1) B ... A B  B] U + sum_j A^(m-1-j) eta_{k+j}`.
pub fn group_dynamics(sys: &LinearSystem, m: usize) -> Result<LinearSystem> {
    if m == 0 {
        return Err(Error::InvalidArgument("grouping factor must be at least 1".into()));
    }
    if m == 1 {
        return Ok(sys.clone());
    }
    let n = sys.state_dim();
    let p = sys.input_dim();
    if m * p != n {
        return Err(Error::InvalidArgument(format!(
            "grouping {m} steps of {p} inputs does not give a square input matrix for n = {n}"
        )));
    }
    let mut powers = vec![DMatrix::identity(n, n)];
    for j in 1..=m {
        let next = &sys.a * &powers[j - 1];
        powers.push(next);
    }
    let mut b_hat = DMatrix::zeros(n, n);
    for j in 0..m {
        let block = &powers[m - 1 - j] * &sys.b;
        b_hat.view_mut((0, j * p), (n, p)).copy_from(&block);
    }
    if is_singular(&b_hat) {
        return Err(Error::Singular(format!(
            "grouped input matrix for {m} steps is singular"
        )));
    }

    let q = sys.input_set.num_constraints();
    let mut g = DMatrix::zeros(q * m, p * m);
    let mut h = DVector::zeros(q * m);
    let base_g = sys.input_set.constraint_matrix();
    for j in 0..m {
        g.view_mut((j * q, j * p), (q, p)).copy_from(&base_g);
        h.rows_mut(j * q, q).copy_from(&sys.input_set.offset_vector());
    }
    let input_set = if q == 0 {
        HalfspacePolytope::unconstrained(p * m)
    } else {
        HalfspacePolytope::new(&g, &h)?
    };

    let noise = NoiseSource::Lumped {
        base: Box::new(sys.noise.clone()),
        weights: (0..m).map(|j| powers[m - 1 - j].clone()).collect(),
    };
    LinearSystem::new(powers[m].clone(), b_hat, input_set, noise)
}

/// Horizon in grouped steps.
pub fn grouped_horizon(horizon: usize, m: usize) -> Result<usize> {
    if m == 0 || !horizon.is_multiple_of(m) {
        return Err(Error::InvalidArgument(format!(
            "horizon {horizon} is not divisible by grouping factor {m}"
        )));
    }
    Ok(horizon / m)
}

/// System under `u = -K x + u'`.
#[derive(Debug, Clone)]
pub struct StabilizedSystem {
    base: LinearSystem,
    gain: DMatrix<f64>,
    closed_loop: DMatrix<f64>,
    abstract_input_set: HalfspacePolytope,
}

/// Validates the gain against `region` and requires `0 in U'`.
pub fn make_stabilized(
    sys: &LinearSystem,
    gain: DMatrix<f64>,
    abstract_input_set: HalfspacePolytope,
    region: &HyperRectangle,
) -> Result<StabilizedSystem> {
    check_dim("gain rows", sys.input_dim(), gain.nrows())?;
    check_dim("gain columns", sys.state_dim(), gain.ncols())?;
    check_dim("region dimension", sys.state_dim(), region.dim())?;
    check_dim("U' dimension", sys.input_dim(), abstract_input_set.dim())?;
    validate_gain(sys, &gain, region).map_err(|v| Error::Assumption {
        assumption: "3",
        detail: v.to_string(),
    })?;
    if !abstract_input_set.contains_unchecked(&vec![0.0; sys.input_dim()]) {
        return Err(Error::Assumption {
            assumption: "4",
            detail: "U' does not contain the origin".into(),
        });
    }
    let closed_loop = &sys.a - &sys.b * &gain;
    Ok(StabilizedSystem {
        base: sys.clone(),
        gain,
        closed_loop,
        abstract_input_set,
    })
}

impl StabilizedSystem {
    pub fn base(&self) -> &LinearSystem {
        &self.base
    }

    pub fn gain(&self) -> &DMatrix<f64> {
        &self.gain
    }

    pub fn closed_loop(&self) -> &DMatrix<f64> {
        &self.closed_loop
    }

    pub fn abstract_input_set(&self) -> &HalfspacePolytope {
        &self.abstract_input_set
    }
}
