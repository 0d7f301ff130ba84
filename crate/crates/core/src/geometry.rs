//! Convex polytopes in halfspace form and axis-aligned boxes.
//!
//! Every backward reachable set in this crate is an H-representation
//! `{x : C x <= d}` obtained as an affine preimage of an input polytope, so
//! the only vertex enumeration ever needed is that of hyperrectangles.
//! Membership tests are inclusive with an absolute slack of
//! [`BOUNDARY_TOL`] on each halfspace.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};

/// Absolute slack allowed on each halfspace by membership tests.
pub const BOUNDARY_TOL: f64 = 1e-9;

/// `{x in R^n : C x <= d}`, with `C` stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfspacePolytope {
    dim: usize,
    rows: Vec<f64>,
    offset: Vec<f64>,
}

impl HalfspacePolytope {
    pub fn new(constraint_matrix: &DMatrix<f64>, offset: &DVector<f64>) -> Result<Self> {
        check_dim("polytope offset", constraint_matrix.nrows(), offset.len())?;
        let dim = constraint_matrix.ncols();
        let mut rows = Vec::with_capacity(constraint_matrix.nrows() * dim);
        for (i, row) in constraint_matrix.row_iter().enumerate() {
            if row.iter().all(|&c| c == 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "constraint row {i} has no nonzero entry"
                )));
            }
            rows.extend(row.iter().copied());
        }
        if offset.iter().any(|v| v.is_nan()) || rows.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite polytope data".into()));
        }
        Ok(Self {
            dim,
            rows,
            offset: offset.iter().copied().collect(),
        })
    }

    /// All of `R^dim` (no constraint rows).
    pub fn unconstrained(dim: usize) -> Self {
        Self {
            dim,
            rows: Vec::new(),
            offset: Vec::new(),
        }
    }

    /// The box as `2n` rows `x_i <= upper_i`, `-x_i <= -lower_i`.
    pub fn from_box(rect: &HyperRectangle) -> Self {
        let n = rect.dim();
        let mut rows = Vec::with_capacity(2 * n * n);
        let mut offset = Vec::with_capacity(2 * n);
        for i in 0..n {
            for sign in [1.0, -1.0] {
                rows.extend((0..n).map(|j| if j == i { sign } else { 0.0 }));
                offset.push(if sign > 0.0 {
                    rect.upper[i]
                } else {
                    -rect.lower[i]
                });
            }
        }
        Self {
            dim: n,
            rows,
            offset,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_constraints(&self) -> usize {
        self.offset.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    pub fn constraint_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.num_constraints(), self.dim, &self.rows)
    }

    pub fn offset_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.offset)
    }

    /// Row-wise `C x <= d + BOUNDARY_TOL`.
    pub fn contains_point(&self, x: &[f64]) -> Result<bool> {
        check_dim("contains_point", self.dim, x.len())?;
        Ok(self.contains_unchecked(x))
    }

    pub(crate) fn contains_unchecked(&self, x: &[f64]) -> bool {
        self.offset
            .iter()
            .enumerate()
            .all(|(i, &d)| dot(self.row(i), x) <= d + BOUNDARY_TOL)
    }

    /// `{x : C (M x + b) <= d}` = `(C M, d - C b)`.
    ///
    /// Rows of `C M` that vanish are dropped when trivially satisfied; a
    /// vanishing row that can never be satisfied makes the result empty.
    pub fn affine_preimage(&self, map: &DMatrix<f64>, shift: &DVector<f64>) -> Result<Self> {
        check_dim("affine_preimage map rows", self.dim, map.nrows())?;
        check_dim("affine_preimage shift", self.dim, shift.len())?;
        let out_dim = map.ncols();
        let mut rows = Vec::with_capacity(self.num_constraints() * out_dim);
        let mut offset = Vec::with_capacity(self.num_constraints());
        let mut infeasible = false;
        for i in 0..self.num_constraints() {
            let c = self.row(i);
            let new_row: Vec<f64> = (0..out_dim)
                .map(|j| (0..self.dim).map(|k| c[k] * map[(k, j)]).sum())
                .collect();
            let new_offset = self.offset[i] - dot(c, shift.as_slice());
            if new_row.iter().all(|&v| v == 0.0) {
                infeasible |= new_offset < -BOUNDARY_TOL;
                continue;
            }
            rows.extend(new_row);
            offset.push(new_offset);
        }
        if infeasible {
            return Ok(Self::empty(out_dim));
        }
        Ok(Self {
            dim: out_dim,
            rows,
            offset,
        })
    }

    /// Conjunction of both constraint sets.
    pub fn intersect(&self, other: &Self) -> Result<Self> {
        check_dim("intersect", self.dim, other.dim)?;
        let mut out = self.clone();
        out.rows.extend_from_slice(&other.rows);
        out.offset.extend_from_slice(&other.offset);
        Ok(out)
    }

    /// Copy without constraint row `i`.
    pub fn without_row(&self, i: usize) -> Self {
        let mut out = self.clone();
        out.rows.drain(i * self.dim..(i + 1) * self.dim);
        out.offset.remove(i);
        out
    }

    /// Canonical empty set `{x_0 <= -1, -x_0 <= -1}`.
    fn empty(dim: usize) -> Self {
        let mut rows = vec![0.0; 2 * dim];
        rows[0] = 1.0;
        rows[dim] = -1.0;
        Self {
            dim,
            rows,
            offset: vec![-1.0, -1.0],
        }
    }
}

/// Closed axis-aligned box `[lower, upper]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperRectangle {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl HyperRectangle {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_dim("hyperrectangle bounds", lower.len(), upper.len())?;
        if lower.is_empty() {
            return Err(Error::InvalidArgument("zero-dimensional box".into()));
        }
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !(l.is_finite() && u.is_finite()) || l > u {
                return Err(Error::InvalidArgument(format!(
                    "box bounds [{l}, {u}] invalid in dimension {i}"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// `[-r, r]^dim`.
    pub fn symmetric(dim: usize, radius: f64) -> Result<Self> {
        Self::new(vec![-radius; dim], vec![radius; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }

    /// Vertex selected by the bits of `mask`: bit `i` set picks `upper_i`.
    pub fn vertex(&self, mask: usize) -> Vec<f64> {
        (0..self.dim())
            .map(|i| {
                if mask >> i & 1 == 1 {
                    self.upper[i]
                } else {
                    self.lower[i]
                }
            })
            .collect()
    }

    /// All `2^n` vertices (duplicates included for degenerate boxes).
    pub fn vertices(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..1usize << self.dim()).map(move |mask| self.vertex(mask))
    }

    /// Closed-set membership, no tolerance.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| l <= v && v <= u)
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.dim() == other.dim()
            && (0..self.dim())
                .all(|i| other.lower[i] <= self.lower[i] && self.upper[i] <= other.upper[i])
    }

    /// Intersection with positive volume in every dimension.
    pub fn interiors_overlap(&self, other: &Self) -> bool {
        self.dim() == other.dim()
            && (0..self.dim()).all(|i| {
                self.lower[i].max(other.lower[i]) < self.upper[i].min(other.upper[i])
            })
    }
}

/// Exact containment of `rect` in `poly`.
///
/// For each row the vertex maximizing `c . v` (upper bound where `c_i > 0`,
/// lower bound otherwise) is tested; this is the same verdict as testing
/// all `2^n` vertices.
pub fn rect_inside_polytope(rect: &HyperRectangle, poly: &HalfspacePolytope) -> Result<bool> {
    check_dim("rect_inside_polytope", poly.dim(), rect.dim())?;
    Ok(rect_inside_unchecked(rect.lower(), rect.upper(), poly))
}

pub(crate) fn rect_inside_unchecked(lower: &[f64], upper: &[f64], poly: &HalfspacePolytope) -> bool {
    (0..poly.num_constraints()).all(|i| {
        let row = poly.row(i);
        let worst: f64 = row
            .iter()
            .zip(lower.iter().zip(upper))
            .map(|(&c, (&l, &u))| if c > 0.0 { c * u } else { c * l })
            .sum();
        worst <= poly.offset[i] + BOUNDARY_TOL
    })
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
