//! The reflected Brownian motion data `(b, A, R)`, its validity checks, the
//! dual reflection matrix and the product-form invariant density.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::ModelError;
use crate::linalg::{symmetric_eigen, Matrix};
use crate::MAX_DIM;

/// Absolute tolerance for symmetry and skew-symmetry detection.
pub const SYMMETRY_TOL: f64 = 1e-9;

/// An RBM in the nonnegative orthant: drift `b`, covariance `A`, reflection `R`.
#[derive(Clone, Debug, PartialEq)]
pub struct RbmSpec {
    b: Vec<f64>,
    a: Matrix,
    r: Matrix,
}

impl RbmSpec {
    /// Structural checks only: shapes agree and `A` is symmetric. Use
    /// [`validate_assumption`] for the admissibility conditions.
    pub fn new(b: Vec<f64>, a: Matrix, r: Matrix) -> Result<Self, ModelError> {
        let d = b.len();
        if d == 0 {
            return Err(ModelError::Dimension("drift vector is empty".into()));
        }
        if d > MAX_DIM {
            return Err(ModelError::TooManyDimensions(d));
        }
        if a.rows() != d || a.cols() != d {
            return Err(ModelError::Dimension(format!("A is {}x{}, expected {d}x{d}", a.rows(), a.cols())));
        }
        if r.rows() != d || r.cols() != d {
            return Err(ModelError::Dimension(format!("R is {}x{}, expected {d}x{d}", r.rows(), r.cols())));
        }
        let asym = (0..d)
            .flat_map(|i| (0..d).map(move |j| (i, j)))
            .map(|(i, j)| (a[(i, j)] - a[(j, i)]).abs())
            .fold(0.0, f64::max);
        if asym > SYMMETRY_TOL {
            return Err(ModelError::NotSymmetric(asym));
        }
        Ok(Self { b, a, r })
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn drift(&self) -> &[f64] {
        &self.b
    }

    pub fn covariance(&self) -> &Matrix {
        &self.a
    }

    pub fn reflection(&self) -> &Matrix {
        &self.r
    }

    /// Same covariance, new drift and reflection matrix.
    pub fn with_drift_and_reflection(&self, b: Vec<f64>, r: Matrix) -> Result<Self, ModelError> {
        Self::new(b, self.a.clone(), r)
    }

    /// `ζ_i = 2 a_ii / (a_ii − Σ_{j≠i} |a_ij|)`; infinite if the row is not
    /// strictly diagonally dominant.
    pub fn zeta(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|i| {
                let margin = self.a[(i, i)] - self.off_diagonal_abs_sum(i);
                if margin > 0.0 {
                    2.0 * self.a[(i, i)] / margin
                } else {
                    f64::INFINITY
                }
            })
            .collect()
    }

    fn off_diagonal_abs_sum(&self, i: usize) -> f64 {
        (0..self.dim()).filter(|&j| j != i).map(|j| self.a[(i, j)].abs()).sum()
    }
}

/// `R*`: each column reflected about the inward normal of its face, so the
/// diagonal is kept and off-diagonal entries change sign.
pub fn dual_reflection(r: &Matrix) -> Matrix {
    let mut out = r.scale(-1.0);
    for j in 0..r.rows().min(r.cols()) {
        out[(j, j)] = r[(j, j)];
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionCheck {
    pub name: &'static str,
    pub passed: bool,
    pub witness: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<ConditionCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&ConditionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ConditionCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Iterates nonempty index subsets of `0..d` as sorted index lists.
pub fn nonempty_subsets(d: usize) -> impl Iterator<Item = Vec<usize>> {
    (1u32..(1u32 << d)).map(move |mask| (0..d).filter(|&i| mask & (1 << i) != 0).collect())
}

fn first_nonpositive_row_sum(m: &Matrix) -> Option<(Vec<usize>, usize, f64)> {
    for idx in nonempty_subsets(m.rows()) {
        let sub = m.principal(&idx);
        for (a, &i) in idx.iter().enumerate() {
            let s: f64 = sub.row(a).iter().sum();
            if s <= 0.0 {
                return Some((idx.clone(), i, s));
            }
        }
    }
    None
}

/// Checks diagonal dominance of `A`, invertibility of `R`, `R⁻¹b < 0` and
/// positive row sums for every principal submatrix of `R` and `R*`.
pub fn validate_assumption(spec: &RbmSpec) -> ValidationReport {
    let d = spec.dim();
    let a = spec.covariance();
    let r = spec.reflection();
    let mut checks = Vec::new();

    let dominance = (0..d).find_map(|i| {
        let off = spec.off_diagonal_abs_sum(i);
        (a[(i, i)] <= off).then_some((i, a[(i, i)], off))
    });
    checks.push(ConditionCheck {
        name: "diagonal_dominance",
        passed: dominance.is_none(),
        witness: match dominance {
            Some((i, aii, off)) => format!("row {i}: a_ii = {aii:.17e} <= sum |a_ij| = {off:.17e}"),
            None => String::from("a_ii > sum_{j != i} |a_ij| for all rows"),
        },
    });

    let det = r.determinant();
    let det_tol = 1e-12 * libm::pow(r.norm_inf(), d as f64);
    let invertible = det.abs() > det_tol;
    checks.push(ConditionCheck {
        name: "r_invertible",
        passed: invertible,
        witness: format!("det(R) = {det:.17e}, threshold {det_tol:.17e}"),
    });

    let (passed, witness) = if invertible {
        match r.solve(spec.drift()) {
            Ok(v) => {
                let bad = v.iter().position(|x| *x >= 0.0);
                (bad.is_none(), format!("R^-1 b = {}", fmt_vec(&v)))
            }
            Err(_) => (false, String::from("R is numerically singular")),
        }
    } else {
        (false, String::from("R is not invertible"))
    };
    checks.push(ConditionCheck { name: "r_inv_b_negative", passed, witness });

    for (name, m) in [("r_row_sums", r.clone()), ("rstar_row_sums", dual_reflection(r))] {
        let bad = first_nonpositive_row_sum(&m);
        checks.push(ConditionCheck {
            name,
            passed: bad.is_none(),
            witness: match bad {
                Some((idx, i, s)) => format!("subset {idx:?}, row {i}: sum = {s:.17e}"),
                None => format!("all {} principal submatrices have positive row sums", (1usize << d) - 1),
            },
        });
    }
    ValidationReport { checks }
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.17e}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Symmetric positive-definite square root.
pub fn sym_sqrt(a: &Matrix) -> Result<Matrix, ModelError> {
    if !a.is_square() {
        return Err(ModelError::Dimension(format!("{}x{} is not square", a.rows(), a.cols())));
    }
    let (vals, u) = symmetric_eigen(a);
    if let Some(bad) = vals.iter().copied().find(|v| *v <= 0.0) {
        return Err(ModelError::NotPositiveDefinite(bad));
    }
    let roots: Vec<f64> = vals.iter().map(|v| libm::sqrt(*v)).collect();
    let m = u.matmul(&Matrix::diag(&roots)).matmul(&u.transpose());
    // Symmetrise away rounding noise.
    Ok(m.add(&m.transpose()).scale(0.5))
}

/// Quantities attached to the dual process.
#[derive(Clone, Debug)]
pub struct DualData {
    pub rstar: Matrix,
    pub ahalf: Matrix,
    pub eigenvectors: Matrix,
    pub eigenvalues: Vec<f64>,
}

impl DualData {
    pub fn new(spec: &RbmSpec) -> Result<Self, ModelError> {
        let (eigenvalues, eigenvectors) = symmetric_eigen(spec.covariance());
        Ok(Self {
            rstar: dual_reflection(spec.reflection()),
            ahalf: sym_sqrt(spec.covariance())?,
            eigenvectors,
            eigenvalues,
        })
    }
}

/// Axis-aligned histogram grid, identical on every axis: cell `j` covers
/// `[lo + j·width, lo + (j+1)·width)` intersected with `[0, hi]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AxisGrid {
    pub lo: f64,
    pub width: f64,
    pub cells: usize,
    pub hi: f64,
}

impl AxisGrid {
    pub fn cell_of(&self, x: f64) -> Option<usize> {
        if x < self.lo || x > self.hi {
            return None;
        }
        let j = libm::floor((x - self.lo) / self.width);
        (j >= 0.0 && (j as usize) < self.cells).then_some(j as usize)
    }

    /// Length of cell `j` inside `[0, hi]`.
    pub fn cell_length(&self, j: usize) -> f64 {
        let (a, b) = self.cell_bounds(j);
        (b - a).max(0.0)
    }

    /// Cell bounds clipped to `[0, hi]`.
    pub fn cell_bounds(&self, j: usize) -> (f64, f64) {
        let a = self.lo + j as f64 * self.width;
        ((a).max(0.0), (a + self.width).min(self.hi))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HistogramDensity {
    pub dim: usize,
    pub grid: AxisGrid,
    /// Normalised density per cell, row-major over axes.
    pub values: Vec<f64>,
    /// Raw occupation time per cell.
    pub occupation: Vec<f64>,
}

impl HistogramDensity {
    pub fn cell_index(&self, x: &[f64]) -> Option<usize> {
        x.iter().try_fold(0usize, |acc, &xi| Some(acc * self.grid.cells + self.grid.cell_of(xi)?))
    }

    pub fn cell_volume(&self, flat: usize) -> f64 {
        let mut rest = flat;
        let mut vol = 1.0;
        for _ in 0..self.dim {
            vol *= self.grid.cell_length(rest % self.grid.cells);
            rest /= self.grid.cells;
        }
        vol
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum InvariantDensity {
    /// `p(x) = C exp(−η·x)` with `C = Π η_i`.
    ProductExponential {
        eta: Vec<f64>,
        d_diag: Vec<f64>,
        normalizer: f64,
    },
    Histogram(HistogramDensity),
}

impl InvariantDensity {
    pub fn density(&self, x: &[f64]) -> f64 {
        match self {
            Self::ProductExponential { eta, normalizer, .. } => {
                if x.iter().any(|v| *v < 0.0) {
                    return 0.0;
                }
                let s: f64 = eta.iter().zip(x).map(|(e, v)| e * v).sum();
                normalizer * libm::exp(-s)
            }
            Self::Histogram(h) => h.cell_index(x).map_or(0.0, |c| h.values[c]),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::ProductExponential { eta, .. } => eta.len(),
            Self::Histogram(h) => h.dim,
        }
    }
}

/// Max-abs entry of `2A − RD − DRᵀ`.
pub fn skew_defect(spec: &RbmSpec) -> f64 {
    let a = spec.covariance();
    let dm = Matrix::diag(&a.diagonal());
    let rd = spec.reflection().matmul(&dm);
    a.scale(2.0).sub(&rd).sub(&rd.transpose()).max_abs()
}

/// Product-form density when `2A = RD + DRᵀ` (within [`SYMMETRY_TOL`]).
pub fn skew_check(spec: &RbmSpec) -> Result<Option<InvariantDensity>, ModelError> {
    if skew_defect(spec) > SYMMETRY_TOL {
        return Ok(None);
    }
    let d_diag = spec.covariance().diagonal();
    let rd = spec.reflection().matmul(&Matrix::diag(&d_diag));
    let sol = rd.solve(spec.drift())?;
    let eta: Vec<f64> = sol.iter().map(|v| -2.0 * v).collect();
    if let Some((index, &value)) = eta.iter().enumerate().find(|(_, v)| **v <= 0.0) {
        return Err(ModelError::InvalidDensity { index, value });
    }
    let normalizer = eta.iter().product();
    Ok(Some(InvariantDensity::ProductExponential { eta, d_diag, normalizer }))
}

/// `−b ± 2·A^{1/2}(RD)⁻¹b`, the two candidate drifts of the reversed RBM,
/// returned as `(plus, minus)`.
pub fn reversed_drift_candidates(spec: &RbmSpec) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
    let d_diag = spec.covariance().diagonal();
    let rd = spec.reflection().matmul(&Matrix::diag(&d_diag));
    let w = rd.solve(spec.drift())?;
    let corr = sym_sqrt(spec.covariance())?.matvec(&w);
    let b = spec.drift();
    let plus = b.iter().zip(&corr).map(|(bi, ci)| -bi + 2.0 * ci).collect();
    let minus = b.iter().zip(&corr).map(|(bi, ci)| -bi - 2.0 * ci).collect();
    Ok((plus, minus))
}

/// Continuum boundary weight rates: `exp(Σ_i κ_i L̃_i)` with
/// `κ_i = −2 b_i r_ii / a_ii`.
pub fn local_time_exponents(spec: &RbmSpec) -> Vec<f64> {
    let a = spec.covariance();
    let r = spec.reflection();
    spec.drift().iter().enumerate().map(|(i, bi)| -2.0 * bi * r[(i, i)] / a[(i, i)]).collect()
}

/// Convenience constructor from nested rows.
pub fn spec_from_rows(b: &[f64], a: &[Vec<f64>], r: &[Vec<f64>]) -> Result<RbmSpec, ModelError> {
    let am = Matrix::from_rows(a).ok_or_else(|| ModelError::Dimension("A has ragged rows".into()))?;
    let rm = Matrix::from_rows(r).ok_or_else(|| ModelError::Dimension("R has ragged rows".into()))?;
    RbmSpec::new(b.to_vec(), am, rm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn skew() -> RbmSpec {
        spec_from_rows(&[-1.0, -1.0], &[vec![1.0, 0.0], vec![0.0, 1.0]], &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap()
    }

    fn general() -> RbmSpec {
        spec_from_rows(&[-1.0, -1.0], &[vec![1.0, 0.2], vec![0.2, 1.0]], &[vec![1.0, 0.5], vec![-0.3, 1.0]]).unwrap()
    }

    #[test]
    fn identity_case_validates() {
        let rep = validate_assumption(&skew());
        assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn general_case_validates_with_cofactor_inverse() {
        let s = general();
        let rep = validate_assumption(&s);
        assert!(rep.passed(), "{rep:?}");
        // cofactor inverse: (1/1.15)·[[1,-0.5],[0.3,1]]·(-1,-1)
        let v = s.reflection().solve(s.drift()).unwrap();
        assert!((v[0] - (-0.5 / 1.15)).abs() < 1e-15);
        assert!((v[1] - (-1.3 / 1.15)).abs() < 1e-15);
    }

    #[test]
    fn dominance_failure_is_witnessed() {
        let s = spec_from_rows(&[-1.0, -1.0], &[vec![1.0, 1.5], vec![1.5, 4.0]], &[vec![1.0, 0.0], vec![0.0, 1.0]])
            .unwrap();
        let rep = validate_assumption(&s);
        assert!(!rep.passed());
        let c = rep.check("diagonal_dominance").unwrap();
        assert!(!c.passed);
        assert!(c.witness.starts_with("row 0"));
    }

    #[test]
    fn zero_drift_fails_stationarity() {
        let s =
            spec_from_rows(&[0.0, 0.0], &[vec![1.0, 0.0], vec![0.0, 1.0]], &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(!validate_assumption(&s).check("r_inv_b_negative").unwrap().passed);
    }

    #[test]
    fn structural_errors() {
        let e = spec_from_rows(&[-1.0], &[vec![1.0, 0.0], vec![0.0, 1.0]], &[vec![1.0]]).unwrap_err();
        assert!(matches!(e, ModelError::Dimension(_)));
        let e = spec_from_rows(&[-1.0, -1.0], &[vec![1.0, 0.3], vec![0.2, 1.0]], &[vec![1.0, 0.0], vec![0.0, 1.0]])
            .unwrap_err();
        assert!(matches!(e, ModelError::NotSymmetric(_)));
    }

    #[test]
    fn reflection_examples() {
        assert_eq!(dual_reflection(&Matrix::identity(2)), Matrix::identity(2));
        let r = Matrix::from_rows(&[vec![1.0, 0.5], vec![-0.3, 1.0]]).unwrap();
        let expect = Matrix::from_rows(&[vec![1.0, -0.5], vec![0.3, 1.0]]).unwrap();
        assert_eq!(dual_reflection(&r), expect);
    }

    #[test]
    fn skew_density_examples() {
        match skew_check(&skew()).unwrap().unwrap() {
            InvariantDensity::ProductExponential { eta, normalizer, .. } => {
                assert_eq!(eta, vec![2.0, 2.0]);
                assert_eq!(normalizer, 4.0);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(skew_check(&general()).unwrap().is_none());
        let one = spec_from_rows(&[-1.0], &[vec![1.0]], &[vec![1.0]]).unwrap();
        let p = skew_check(&one).unwrap().unwrap();
        assert!((p.density(&[0.3]) - 2.0 * libm::exp(-0.6)).abs() < 1e-15);
    }

    #[test]
    fn positive_eta_required() {
        let s = spec_from_rows(&[1.0], &[vec![1.0]], &[vec![1.0]]).unwrap();
        assert!(matches!(skew_check(&s), Err(ModelError::InvalidDensity { index: 0, .. })));
    }

    #[test]
    fn sqrt_examples() {
        assert!(sym_sqrt(&Matrix::identity(2)).unwrap().sub(&Matrix::identity(2)).max_abs() < 1e-15);
        let m = sym_sqrt(&Matrix::diag(&[4.0, 9.0])).unwrap();
        assert!(m.sub(&Matrix::diag(&[2.0, 3.0])).max_abs() < 1e-15);
        let a = Matrix::from_rows(&[vec![1.0, 0.2], vec![0.2, 1.0]]).unwrap();
        let m = sym_sqrt(&a).unwrap();
        assert!(m.matmul(&m).sub(&a).norm_frobenius() <= 1e-10 * a.norm_frobenius());
        let (vals, _) = symmetric_eigen(&a);
        let mut v = vals.clone();
        v.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert!((v[0] - 0.8).abs() < 1e-14 && (v[1] - 1.2).abs() < 1e-14);
        let bad = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(sym_sqrt(&bad), Err(ModelError::NotPositiveDefinite(_))));
    }

    #[test]
    fn reversed_drift_candidates_identity_case() {
        let (plus, minus) = reversed_drift_candidates(&skew()).unwrap();
        assert_eq!(plus, vec![-1.0, -1.0]);
        assert_eq!(minus, vec![3.0, 3.0]);
    }

    #[test]
    fn local_time_exponent_signs() {
        assert_eq!(local_time_exponents(&skew()), vec![2.0, 2.0]);
    }

    #[test]
    fn histogram_lookup() {
        let grid = AxisGrid { lo: -0.25, width: 0.5, cells: 4, hi: 1.5 };
        let h = HistogramDensity { dim: 1, grid, values: vec![1.0, 2.0, 3.0, 4.0], occupation: vec![0.0; 4] };
        assert_eq!(h.cell_index(&[0.0]), Some(0));
        assert_eq!(h.cell_index(&[0.3]), Some(1));
        assert!((h.cell_volume(0) - 0.25).abs() < 1e-15);
        assert!((h.cell_volume(3) - 0.25).abs() < 1e-15);
        let d = InvariantDensity::Histogram(h);
        assert_eq!(d.density(&[2.0]), 0.0);
    }
}
