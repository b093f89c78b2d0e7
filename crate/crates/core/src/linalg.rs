//! Dense matrix utilities around `vec`, Kronecker products and symmetric
//! eigen-decompositions.
//!
//! All vectorisation is column-major, so entry `(i, j)` of a `K x K` matrix
//! sits at position `j * K + i` of its `vec`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative tolerance used for numerical rank decisions, scaled by the largest
/// absolute eigenvalue of the matrix under inspection.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

/// Row-major `Vec<Vec<f64>>` conversion.
pub fn to_rows(a: &Mat) -> Vec<Vec<f64>> {
    a.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Builds a matrix from equally long rows; `cols` is used when `rows` is empty.
pub fn from_rows(rows: &[Vec<f64>], cols: usize) -> Result<Mat> {
    let c = rows.first().map_or(cols, Vec::len);
    if let Some(bad) = rows.iter().position(|r| r.len() != c) {
        return Err(Error::Dimension(format!(
            "row {} has {} entries, expected {c}",
            bad + 1,
            rows[bad].len()
        )));
    }
    Ok(Mat::from_fn(rows.len(), c, |i, j| rows[i][j]))
}

/// Serde adapter writing matrices as row-major nested arrays. Non-finite
/// entries become `null` and read back as `NaN`.
pub mod serde_rows {
    use super::Mat;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    fn rows(a: &Mat) -> Vec<Vec<Option<f64>>> {
        a.row_iter()
            .map(|r| r.iter().map(|&x| x.is_finite().then_some(x)).collect())
            .collect()
    }

    fn build<E: serde::de::Error>(rows: Vec<Vec<Option<f64>>>) -> Result<Mat, E> {
        let filled: Vec<Vec<f64>> = rows
            .into_iter()
            .map(|r| r.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect())
            .collect();
        super::from_rows(&filled, 0).map_err(E::custom)
    }

    pub fn serialize<S: Serializer>(a: &Mat, s: S) -> Result<S::Ok, S::Error> {
        rows(a).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Mat, D::Error> {
        build(Vec::deserialize(d)?)
    }

    pub mod option {
        use super::Mat;
        use serde::{Deserialize, Deserializer, Serialize, Serializer};

        pub fn serialize<S: Serializer>(a: &Option<Mat>, s: S) -> Result<S::Ok, S::Error> {
            a.as_ref().map(super::rows).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Mat>, D::Error> {
            Option::<Vec<Vec<Option<f64>>>>::deserialize(d)?
                .map(super::build)
                .transpose()
        }
    }
}

/// Partition of a matrix into `outer_rows x outer_cols` blocks of size
/// `block_rows x block_cols`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockPartition {
    pub block_rows: usize,
    pub block_cols: usize,
    pub outer_rows: usize,
    pub outer_cols: usize,
}

impl BlockPartition {
    pub fn new(block_rows: usize, block_cols: usize, outer_rows: usize, outer_cols: usize) -> Self {
        Self {
            block_rows,
            block_cols,
            outer_rows,
            outer_cols,
        }
    }

    /// Square `m x m` grid of square `r x r` blocks.
    pub fn square(block: usize, outer: usize) -> Self {
        Self::new(block, block, outer, outer)
    }

    fn check(&self, a: &Mat) -> Result<()> {
        if self.block_rows == 0 || self.block_cols == 0 || self.outer_rows == 0 || self.outer_cols == 0 {
            return Err(Error::Dimension("block partition with a zero extent".into()));
        }
        if self.block_rows * self.outer_rows != a.nrows() || self.block_cols * self.outer_cols != a.ncols() {
            return Err(Error::Dimension(format!(
                "partition {}x{} blocks of {}x{} does not tile a {}x{} matrix",
                self.outer_rows,
                self.outer_cols,
                self.block_rows,
                self.block_cols,
                a.nrows(),
                a.ncols()
            )));
        }
        Ok(())
    }

    fn block(&self, a: &Mat, i: usize, j: usize) -> Mat {
        a.view(
            (i * self.block_rows, j * self.block_cols),
            (self.block_rows, self.block_cols),
        )
        .into_owned()
    }
}

pub fn vec(a: &Mat) -> Vector {
    Vector::from_column_slice(a.as_slice())
}

pub fn unvec(v: &Vector, rows: usize, cols: usize) -> Result<Mat> {
    if v.len() != rows * cols {
        return Err(Error::Dimension(format!(
            "cannot reshape a vector of length {} into {}x{}",
            v.len(),
            rows,
            cols
        )));
    }
    Ok(Mat::from_column_slice(rows, cols, v.as_slice()))
}

pub fn kron(a: &Mat, b: &Mat) -> Mat {
    let (p, q) = a.shape();
    let (m, n) = b.shape();
    let mut out = Mat::zeros(p * m, q * n);
    for j in 0..q {
        for i in 0..p {
            let aij = a[(i, j)];
            if aij == 0.0 {
                continue;
            }
            let mut blk = out.view_mut((i * m, j * n), (m, n));
            blk.zip_apply(b, |o, bv| *o = aij * bv);
        }
    }
    out
}

/// The `KD x KD` permutation matrix with `K_{KD} vec(A) = vec(A^T)` for every
/// `K x D` matrix `A`.
pub fn commutation_matrix(k: usize, d: usize) -> Mat {
    let mut out = Mat::zeros(k * d, k * d);
    for i in 0..k {
        for j in 0..d {
            // vec(A)[j*k + i] = A[i,j] = vec(A^T)[i*d + j]
            out[(i * d + j, j * k + i)] = 1.0;
        }
    }
    out
}

/// Blockwise Kronecker product. `part` describes the blocks of `a`; the blocks
/// of `b` follow from the shared outer grid.
pub fn khatri_rao(a: &Mat, b: &Mat, part: BlockPartition) -> Result<Mat> {
    part.check(a)?;
    let (m, n) = (part.outer_rows, part.outer_cols);
    if !b.nrows().is_multiple_of(m) || !b.ncols().is_multiple_of(n) {
        return Err(Error::Dimension(format!(
            "a {}x{} matrix cannot share a {}x{} outer block grid",
            b.nrows(),
            b.ncols(),
            m,
            n
        )));
    }
    let bpart = BlockPartition::new(b.nrows() / m, b.ncols() / n, m, n);
    let (br, bc) = (
        part.block_rows * bpart.block_rows,
        part.block_cols * bpart.block_cols,
    );
    let mut out = Mat::zeros(m * br, n * bc);
    for i in 0..m {
        for j in 0..n {
            let blk = kron(&part.block(a, i, j), &bpart.block(b, i, j));
            out.view_mut((i * br, j * bc), (br, bc)).copy_from(&blk);
        }
    }
    Ok(out)
}

/// Sum of all blocks of a partitioned matrix.
pub fn box_plus(a: &Mat, part: BlockPartition) -> Result<Mat> {
    part.check(a)?;
    let mut out = Mat::zeros(part.block_rows, part.block_cols);
    for i in 0..part.outer_rows {
        for j in 0..part.outer_cols {
            out += a.view(
                (i * part.block_rows, j * part.block_cols),
                (part.block_rows, part.block_cols),
            );
        }
    }
    Ok(out)
}

/// Entrywise reciprocal with the convention `0 -> 0`.
pub fn hadamard_inverse(a: &Mat) -> Mat {
    a.map(|x| if x == 0.0 { 0.0 } else { 1.0 / x })
}

/// `H_K = I_K - (1/K) 1 1^T`.
pub fn centering_matrix(k: usize) -> Mat {
    let kf = k as f64;
    Mat::from_fn(k, k, |i, j| if i == j { 1.0 - 1.0 / kf } else { -1.0 / kf })
}

pub fn max_asymmetry(a: &Mat) -> f64 {
    if !a.is_square() {
        return f64::INFINITY;
    }
    let mut worst = 0.0_f64;
    for j in 0..a.ncols() {
        for i in 0..j {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

pub fn check_symmetric(a: &Mat) -> Result<()> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let asym = max_asymmetry(a);
    let scale = a.amax().max(1.0);
    if asym > 1e-9 * scale {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

pub fn symmetrize(a: &Mat) -> Mat {
    (a + a.transpose()) * 0.5
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted in
/// descending order and eigenvectors as matching columns.
pub fn sorted_symmetric_eigen(a: &Mat) -> (Vector, Mat) {
    let eig = SymmetricEigen::new(symmetrize(a));
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
    let values = Vector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = Mat::zeros(a.nrows(), n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

fn absolute_tol(values: &Vector, rank_tol: f64) -> f64 {
    rank_tol * values.amax().max(f64::MIN_POSITIVE)
}

/// Moore-Penrose pseudoinverse of a symmetric matrix. Eigenvalues with
/// magnitude at or below `rank_tol * max|eigenvalue|` are treated as zero.
pub fn sym_ginverse(a: &Mat, rank_tol: f64) -> Result<Mat> {
    check_symmetric(a)?;
    let (values, vectors) = sorted_symmetric_eigen(a);
    let tol = absolute_tol(&values, rank_tol);
    let n = a.nrows();
    let mut out = Mat::zeros(n, n);
    for (idx, &lambda) in values.iter().enumerate() {
        if lambda.abs() > tol {
            let v = vectors.column(idx);
            out += (v * v.transpose()) / lambda;
        }
    }
    Ok(symmetrize(&out))
}

/// Nonsingular part of the spectral decomposition of a PSD matrix.
#[derive(Debug, Clone)]
pub struct SpectralPart {
    /// `K x q` semi-orthogonal basis.
    pub vectors: Mat,
    /// The `q` positive eigenvalues, descending.
    pub values: Vector,
    /// Negative eigenvalues whose magnitude fell within tolerance.
    pub clipped: Vec<f64>,
}

/// `A = V1 diag(L) V1^T` restricted to eigenvalues above `rank_tol` (relative).
/// Negative eigenvalues within tolerance are clipped to zero; larger ones are
/// an error.
pub fn spectral_nonsingular(a: &Mat, rank_tol: f64) -> Result<SpectralPart> {
    check_symmetric(a)?;
    let (values, vectors) = sorted_symmetric_eigen(a);
    let tol = absolute_tol(&values, rank_tol);
    let mut clipped = Vec::new();
    for &lambda in values.iter() {
        if lambda < -tol {
            return Err(Error::NotPsd {
                eigenvalue: lambda,
                tol,
            });
        }
        if lambda < 0.0 {
            clipped.push(lambda);
        }
    }
    let q = values.iter().filter(|&&l| l > tol).count();
    Ok(SpectralPart {
        vectors: vectors.columns(0, q).into_owned(),
        values: values.rows(0, q).into_owned(),
        clipped,
    })
}

/// Frobenius norm `sqrt(tr(A A^T))`.
pub fn frobenius(a: &Mat) -> f64 {
    a.norm()
}

/// Unit basis vector `e_i` of length `n`.
pub fn unit(n: usize, i: usize) -> Vector {
    let mut e = Vector::zeros(n);
    e[i] = 1.0;
    e
}

/// Symmetric PSD square root through the eigen-decomposition. Eigenvalues
/// at or below rounding level relative to the largest are treated as zero.
pub fn psd_sqrt(a: &Mat) -> Mat {
    let (values, vectors) = sorted_symmetric_eigen(a);
    // eigenvalues within rounding of zero would otherwise leave ~1e-8 roots
    let floor = values.len() as f64 * f64::EPSILON * values.amax();
    let root = Vector::from_iterator(
        values.len(),
        values.iter().map(|&l| if l > floor { l.sqrt() } else { 0.0 }),
    );
    &vectors * Mat::from_diagonal(&root) * vectors.transpose()
}
