//! Small dense matrix primitives: centering projectors, padded blocks,
//! Kronecker products, symmetric eigendecomposition, Moore–Penrose
//! pseudo-inverse and orthogonal-complement projection.
//!
//! Everything here is dense. The largest matrices built anywhere in the crate
//! are of order `n * p`, a few hundred at most.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Default relative rank tolerance for pseudo-inverses.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// A real symmetric matrix. Construction symmetrizes the input, so
/// `m[(i, j)] == m[(j, i)]` holds bit-for-bit.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Wraps `m` after replacing it by `(m + m') / 2`.
    pub fn from_matrix(mut m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::invalid(format!(
                "symmetric matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let k = m.nrows();
        for i in 0..k {
            for j in (i + 1)..k {
                let v = 0.5 * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Ok(SymMatrix(m))
    }

    /// Symmetrizes a matrix already known to be square.
    pub(crate) fn symmetrize(m: DMatrix<f64>) -> Self {
        SymMatrix::from_matrix(m).expect("square by construction")
    }

    pub fn zeros(k: usize) -> Self {
        SymMatrix(DMatrix::zeros(k, k))
    }

    pub fn identity(k: usize) -> Self {
        SymMatrix(DMatrix::identity(k, k))
    }

    pub fn order(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    /// Eigenvalues sorted ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.eigen().0
    }

    /// Eigenvalues (ascending) and matching unit eigenvectors as columns.
    pub fn eigen(&self) -> (Vec<f64>, DMatrix<f64>) {
        let k = self.order();
        if k == 0 {
            return (Vec::new(), DMatrix::zeros(0, 0));
        }
        let eig = SymmetricEigen::new(self.0.clone());
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = DMatrix::from_fn(k, k, |r, c| eig.eigenvectors[(r, order[c])]);
        (values, vectors)
    }

    /// Moore–Penrose inverse. Eigenvalues with `|λ| <= tol * max|λ|` are
    /// treated as zero.
    pub fn pinv(&self, tol: f64) -> SymMatrix {
        let k = self.order();
        let (values, vectors) = self.eigen();
        let scale = values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        let mut out = DMatrix::zeros(k, k);
        if scale == 0.0 {
            return SymMatrix(out);
        }
        for (idx, &lambda) in values.iter().enumerate() {
            if lambda.abs() <= tol * scale {
                continue;
            }
            let v = vectors.column(idx);
            out += (v * v.transpose()) / lambda;
        }
        SymMatrix::symmetrize(out)
    }

    /// Smallest eigenvalue.
    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }
}

impl std::ops::Deref for SymMatrix {
    type Target = DMatrix<f64>;

    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// `B_k = I_k - J_k / k`.
pub fn centering(k: usize) -> Result<SymMatrix> {
    if k == 0 {
        return Err(Error::invalid("centering matrix order must be at least 1"));
    }
    let inv = 1.0 / k as f64;
    Ok(SymMatrix(DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            1.0 - inv
        } else {
            -inv
        }
    })))
}

/// `p x p` matrix whose upper-left `k x k` block is `B_k`, zero elsewhere.
pub fn padded_centering(k: usize, p: usize) -> Result<SymMatrix> {
    if k == 0 || k > p {
        return Err(Error::invalid(format!(
            "padded centering needs 1 <= k <= p, got k={k}, p={p}"
        )));
    }
    let b = centering(k)?;
    let mut out = DMatrix::zeros(p, p);
    out.view_mut((0, 0), (k, k)).copy_from(b.as_matrix());
    Ok(SymMatrix(out))
}

/// Kronecker product.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Pseudo-inverse with the default rank tolerance.
pub fn pinv(g: &SymMatrix) -> SymMatrix {
    g.pinv(DEFAULT_RANK_TOL)
}

/// `I - G (G'G)^+ G'`: projector onto the orthogonal complement of the
/// column span of `g`.
pub fn proj_complement(g: &DMatrix<f64>) -> SymMatrix {
    let rows = g.nrows();
    if g.ncols() == 0 {
        return SymMatrix::identity(rows);
    }
    let gram = SymMatrix::symmetrize(g.transpose() * g);
    let hat = g * gram.pinv(DEFAULT_RANK_TOL).as_matrix() * g.transpose();
    SymMatrix::symmetrize(DMatrix::identity(rows, rows) - hat)
}

/// Numerical rank using the same relative tolerance as [`pinv`].
pub fn rank(g: &SymMatrix, tol: f64) -> usize {
    let values = g.eigenvalues();
    let scale = values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        return 0;
    }
    values.iter().filter(|v| v.abs() > tol * scale).count()
}

/// Max absolute entry of `a - b`.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape(), "shape mismatch");
    a.iter()
        .zip(b.iter())
        .fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs()))
}

/// Column-major vectorization.
pub fn vec_of(m: &DMatrix<f64>) -> Vec<f64> {
    m.iter().copied().collect()
}
