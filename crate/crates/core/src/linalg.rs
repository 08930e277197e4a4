//! Dense complex linear algebra shared by every module.
//!
//! Matrices are `nalgebra` column-major matrices, so the column-stacking
//! vectorization `vec(|i⟩⟨j|) = e_j ⊗ e_i` is the storage order itself. The
//! map `X ↦ A X B` has superoperator `Bᵀ ⊗ A`.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const IM: C64 = C64::new(0.0, 1.0);

#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// `|i⟩⟨j|` on `ℂⁿ`.
pub fn unit(n: usize, i: usize, j: usize) -> CMatrix {
    let mut m = CMatrix::zeros(n, n);
    m[(i, j)] = ONE;
    m
}

/// Column-stacking vectorization.
pub fn vec(m: &CMatrix) -> CVector {
    CVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec`] for an `n × n` matrix.
pub fn unvec(v: &CVector, n: usize) -> CMatrix {
    assert_eq!(v.len(), n * n, "unvec: length {} is not {}²", v.len(), n);
    CMatrix::from_column_slice(n, n, v.as_slice())
}

/// Superoperator of `X ↦ A X B`.
pub fn sandwich_superop(a: &CMatrix, b: &CMatrix) -> CMatrix {
    b.transpose().kronecker(a)
}

/// Apply an `n² × n²` superoperator to an `n × n` matrix.
pub fn apply_superop(s: &CMatrix, x: &CMatrix) -> CMatrix {
    let n = x.nrows();
    unvec(&(s * vec(x)), n)
}

pub fn frob(m: &CMatrix) -> f64 {
    m.norm()
}

pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * c64(0.5, 0.0)
}

pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    (m - m.adjoint()).norm()
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

pub fn all_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Square root of an integer if it is a perfect square.
pub fn exact_sqrt(n: usize) -> Option<usize> {
    let r = (n as f64).sqrt().round() as usize;
    (r * r == n).then_some(r)
}

/// Hermitian eigendecomposition with eigenvalues in ascending order.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl HermitianEigen {
    pub fn min(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    /// Columns whose eigenvalues satisfy `keep`.
    pub fn columns_where(&self, keep: impl Fn(f64) -> bool) -> CMatrix {
        let idx: Vec<usize> = (0..self.values.len())
            .filter(|&k| keep(self.values[k]))
            .collect();
        select_columns(&self.vectors, &idx)
    }
}

pub fn eigh(m: &CMatrix) -> HermitianEigen {
    let n = m.nrows();
    if n == 0 {
        return HermitianEigen {
            values: vec![],
            vectors: CMatrix::zeros(0, 0),
        };
    }
    let eig = to_faer(&hermitian_part(m))
        .self_adjoint_eigen(faer::Side::Lower)
        .expect("Hermitian eigensolver did not converge");
    let vals: Vec<f64> = eig.S().column_vector().iter().map(|z| z.re).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
    HermitianEigen {
        values: order.iter().map(|&k| vals[k]).collect(),
        vectors: select_columns(&from_faer(eig.U()), &order),
    }
}

pub fn select_columns(m: &CMatrix, idx: &[usize]) -> CMatrix {
    CMatrix::from_fn(m.nrows(), idx.len(), |r, c| m[(r, idx[c])])
}

/// Singular value decomposition with descending singular values and a full
/// set of right singular vectors (as columns of `v`).
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: CMatrix,
    pub values: Vec<f64>,
    pub v: CMatrix,
}

pub fn svd(m: &CMatrix) -> Svd {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Svd {
            u: CMatrix::zeros(rows, 0),
            values: vec![],
            v: identity(cols),
        };
    }
    let s = to_faer(m).svd().expect("SVD iteration did not converge");
    let sv = s.S().column_vector();
    let k = rows.min(cols);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| sv[y].re.total_cmp(&sv[x].re));
    // Right singular vectors beyond min(rows, cols) span the kernel.
    let v_order: Vec<usize> = order.iter().copied().chain(k..cols).collect();
    Svd {
        u: select_columns(&from_faer(s.U()), &order),
        values: order.iter().map(|&i| sv[i].re).collect(),
        v: select_columns(&from_faer(s.V()), &v_order),
    }
}

fn to_faer<T: Copy>(m: &DMatrix<T>) -> faer::Mat<T> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer<T: Copy + nalgebra::Scalar>(m: faer::MatRef<'_, T>) -> DMatrix<T> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Orthonormal basis (columns) of the numerical nullspace of `m`.
///
/// Singular values at or below `rel_tol · max(σ_max, 1)` count as zero.
pub fn nullspace(m: &CMatrix, rel_tol: f64) -> CMatrix {
    let cols = m.ncols();
    if cols == 0 {
        return CMatrix::zeros(0, 0);
    }
    let s = svd(m);
    let smax = s.values.first().copied().unwrap_or(0.0);
    let thr = rel_tol * smax.max(1.0);
    let rank = s.values.iter().filter(|&&x| x > thr).count();
    s.v.columns(rank, cols - rank).into_owned()
}

/// Orthonormal basis of the column range of `m`, dropping singular values
/// below `rel_tol · σ_max`.
pub fn range_basis(m: &CMatrix, rel_tol: f64) -> CMatrix {
    if m.ncols() == 0 || m.nrows() == 0 {
        return CMatrix::zeros(m.nrows(), 0);
    }
    let s = svd(m);
    let smax = s.values.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return CMatrix::zeros(m.nrows(), 0);
    }
    let rank = s.values.iter().filter(|&&x| x > rel_tol * smax).count();
    s.u.columns(0, rank).into_owned()
}

/// Orthonormal basis of the orthogonal complement of the span of the
/// (orthonormal) columns of `basis`.
pub fn orthogonal_complement(basis: &CMatrix) -> CMatrix {
    let n = basis.nrows();
    if basis.ncols() == 0 {
        return identity(n);
    }
    let proj = basis * basis.adjoint();
    let eig = eigh(&(identity(n) - proj));
    eig.columns_where(|v| v > 0.5)
}

/// Principal square root of a Hermitian PSD matrix (negative eigenvalues are
/// clamped to zero).
pub fn psd_sqrt(m: &CMatrix) -> CMatrix {
    let eig = eigh(m);
    spectral_fn(&eig, |x| x.max(0.0).sqrt())
}

/// Inverse square root of a Hermitian positive definite matrix.
pub fn inv_sqrt(m: &CMatrix) -> Result<CMatrix> {
    let eig = eigh(m);
    if eig.min() <= 0.0 {
        return Err(Error::Numerical(format!(
            "inverse square root of a matrix with eigenvalue {:.3e}",
            eig.min()
        )));
    }
    Ok(spectral_fn(&eig, |x| 1.0 / x.sqrt()))
}

pub fn spectral_fn(eig: &HermitianEigen, f: impl Fn(f64) -> f64) -> CMatrix {
    let d = CMatrix::from_diagonal(&CVector::from_iterator(
        eig.values.len(),
        eig.values.iter().map(|&x| c64(f(x), 0.0)),
    ));
    &eig.vectors * d * eig.vectors.adjoint()
}

/// Matrix exponential (Padé scaling and squaring).
pub fn expm(m: &CMatrix) -> CMatrix {
    m.exp()
}

/// Orthonormal basis of Hermitian matrices for the complex span of `mats`.
///
/// The span is assumed closed under the adjoint: the Hermitian and
/// anti-Hermitian parts of every element are collected, orthonormalized in
/// the real inner product `Tr(AB)`, and the leading `keep` directions are
/// returned (or every direction above `rel_tol · σ_max` when `keep` is
/// `None`). The second value is the first discarded singular value relative
/// to the largest, a diagnostic for how well the span was adjoint-closed.
pub fn hermitian_basis(
    mats: &[CMatrix],
    keep: Option<usize>,
    rel_tol: f64,
) -> (Vec<CMatrix>, f64) {
    let Some(first) = mats.first() else {
        return (vec![], 0.0);
    };
    let (r, c) = first.shape();
    let len = 2 * r * c;
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(2 * mats.len());
    for m in mats {
        let h = hermitian_part(m);
        let a = (m - m.adjoint()) * c64(0.0, -0.5);
        for part in [h, a] {
            let mut v = DVector::<f64>::zeros(len);
            for (k, z) in part.iter().enumerate() {
                v[2 * k] = z.re;
                v[2 * k + 1] = z.im;
            }
            cols.push(v);
        }
    }
    let a = DMatrix::<f64>::from_columns(&cols);
    let s = to_faer(&a).thin_svd().expect("SVD iteration did not converge");
    let u = from_faer(s.U());
    let singular: Vec<f64> = s.S().column_vector().iter().copied().collect();
    let mut order: Vec<usize> = (0..singular.len()).collect();
    order.sort_by(|&x, &y| singular[y].total_cmp(&singular[x]));
    let smax = order.first().map(|&k| singular[k]).unwrap_or(0.0);
    if smax == 0.0 {
        return (vec![], 0.0);
    }
    let count = match keep {
        Some(k) => k.min(order.len()),
        None => order
            .iter()
            .filter(|&&k| singular[k] > rel_tol * smax)
            .count(),
    };
    let next = order
        .get(count)
        .map(|&k| singular[k] / smax)
        .unwrap_or(0.0);
    let basis = order[..count]
        .iter()
        .map(|&k| {
            let col = u.column(k);
            let mut m = CMatrix::from_fn(r, c, |i, j| {
                let idx = j * r + i;
                c64(col[2 * idx], col[2 * idx + 1])
            });
            // Remove rounding asymmetry.
            m = hermitian_part(&m);
            let n = m.norm();
            m / c64(n, 0.0)
        })
        .collect();
    (basis, next)
}

/// One eigenvalue with a unit-norm right eigenvector.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: C64,
    pub vector: CVector,
    pub residual: f64,
}

/// Group indices whose values lie within `tol` of each other (single linkage).
pub fn cluster_complex(values: &[C64], tol: f64) -> Vec<Vec<usize>> {
    let n = values.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for a in 0..n {
        for b in (a + 1)..n {
            if (values[a] - values[b]).norm() <= tol {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for k in 0..n {
        let r = find(&mut parent, k);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(k);
    }
    groups
}

/// Sorted real values grouped into runs whose neighbours differ by at most `tol`.
pub fn cluster_sorted(values: &[f64], tol: f64) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (k, &v) in values.iter().enumerate() {
        match groups.last_mut() {
            Some(g) if (v - values[*g.last().unwrap()]).abs() <= tol => g.push(k),
            _ => groups.push(vec![k]),
        }
    }
    groups
}

/// Eigendecomposition of a general complex matrix.
///
/// Isolated eigenvalues keep the eigenvectors of the dense solver;
/// eigenvalues within `cluster_tol` of each other are treated as one
/// cluster whose eigenvectors span the numerical nullspace of `M − λ̄`. A
/// defective cluster therefore contributes fewer vectors than its size.
pub fn eig_general(m: &CMatrix, cluster_tol: f64) -> Result<Vec<EigenPair>> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::dim("eigendecomposition of a non-square matrix"));
    }
    if n == 0 {
        return Ok(vec![]);
    }
    let evd = to_faer(m)
        .eigen()
        .map_err(|e| Error::Numerical(format!("eigenvalue iteration failed: {e:?}")))?;
    let lambdas: Vec<C64> = evd.S().column_vector().iter().copied().collect();
    let vectors = from_faer(evd.U());
    let mut out = Vec::with_capacity(n);
    for group in cluster_complex(&lambdas, cluster_tol) {
        if group.len() == 1 {
            let mut v = vectors.column(group[0]).into_owned();
            let nv = v.norm();
            v /= c64(nv, 0.0);
            out.push(finish_pair(m, v));
        } else {
            let mean = group.iter().map(|&k| lambdas[k]).sum::<C64>() / c64(group.len() as f64, 0.0);
            let shifted = m - CMatrix::identity(n, n) * mean;
            let s = svd(&shifted);
            let thr = 1e-6 * s.values[0].max(1.0);
            let small = s.values.iter().filter(|&&x| x <= thr).count();
            let take = small.clamp(1, group.len());
            for k in (n - take)..n {
                let v = s.v.column(k).into_owned();
                out.push(finish_pair(m, v));
            }
        }
    }
    Ok(out)
}

fn finish_pair(m: &CMatrix, v: CVector) -> EigenPair {
    let mv = m * &v;
    let value = v.dotc(&mv);
    let residual = (mv - &v * value).norm();
    EigenPair {
        value,
        vector: v,
        residual,
    }
}

/// Eigenvalues of a square matrix, unordered.
pub fn eigenvalues(m: &CMatrix) -> Result<Vec<C64>> {
    if m.nrows() == 0 {
        return Ok(vec![]);
    }
    to_faer(m)
        .eigenvalues()
        .map_err(|e| Error::Numerical(format!("eigenvalue iteration failed: {e:?}")))
}

/// Polar factor `U` of `A = U |A|` for a square matrix, with the singular
/// values of `A`.
pub fn polar_unitary(a: &CMatrix) -> (CMatrix, Vec<f64>) {
    let s = svd(a);
    (&s.u * s.v.adjoint(), s.values)
}
