//! Row-major dense matrices and a packed, blocked matrix-multiply kernel.

use serde::{Deserialize, Serialize};

use crate::{AdepError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(AdepError::dim(
                "Matrix::from_vec",
                format!("{} elements ({rows}x{cols})", rows * cols),
                data.len(),
            ));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(AdepError::dim(
                    format!("Matrix::from_rows row {i}"),
                    cols,
                    r.len(),
                ));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics, so empty-width matrices yield empty rows explicitly.
        let cols = self.cols.max(1);
        let n = self.rows;
        self.data
            .chunks_exact(cols)
            .chain(std::iter::repeat(&[][..]))
            .take(n)
    }

    /// Copies the listed rows, in order, into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// Stacks `other` below `self`.
    pub fn vstack(&self, other: &Matrix) -> Result<Matrix> {
        self.expect_cols("vstack", other.cols)?;
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Ok(Matrix {
            rows: self.rows + other.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    /// `self += other`, elementwise.
    pub fn add_assign(&mut self, other: &Matrix) -> Result<()> {
        self.expect_shape("add_assign", other.shape())?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn expect_shape(&self, context: &str, shape: (usize, usize)) -> Result<()> {
        if self.shape() != shape {
            return Err(AdepError::dim(
                context,
                format!("{}x{}", shape.0, shape.1),
                format!("{}x{}", self.rows, self.cols),
            ));
        }
        Ok(())
    }

    pub fn expect_cols(&self, context: &str, cols: usize) -> Result<()> {
        if self.cols != cols {
            return Err(AdepError::dim(
                context,
                format!("{cols} columns"),
                format!("{} columns", self.cols),
            ));
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Index of the largest entry in each row; ties resolve to the lowest index.
    pub fn argmax_rows(&self) -> Vec<usize> {
        self.iter_rows()
            .map(|row| {
                let mut best = 0;
                for (j, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(AdepError::dim(
                "matmul",
                format!("{} rows on the right", self.cols),
                other.rows,
            ));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        gemm(
            self.rows,
            other.cols,
            self.cols,
            MatRef::normal(self),
            MatRef::normal(other),
            &mut out.data,
        );
        Ok(out)
    }

    /// `self · otherᵀ`.
    pub fn matmul_nt(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(AdepError::dim(
                "matmul_nt",
                format!("{} columns on the right", self.cols),
                other.cols,
            ));
        }
        let mut out = Matrix::zeros(self.rows, other.rows);
        gemm(
            self.rows,
            other.rows,
            self.cols,
            MatRef::normal(self),
            MatRef::transposed(other),
            &mut out.data,
        );
        Ok(out)
    }

    /// `out += selfᵀ · other`, used for weight gradients.
    pub fn matmul_tn_acc(&self, other: &Matrix, out: &mut [f64]) -> Result<()> {
        if self.rows != other.rows {
            return Err(AdepError::dim(
                "matmul_tn",
                format!("{} rows", self.rows),
                other.rows,
            ));
        }
        if out.len() != self.cols * other.cols {
            return Err(AdepError::dim(
                "matmul_tn output",
                self.cols * other.cols,
                out.len(),
            ));
        }
        gemm(
            self.cols,
            other.cols,
            self.rows,
            MatRef::transposed(self),
            MatRef::normal(other),
            out,
        );
        Ok(())
    }
}

/// Strided read-only view used by the kernel.
#[derive(Clone, Copy)]
struct MatRef<'a> {
    data: &'a [f64],
    row_stride: usize,
    col_stride: usize,
}

impl<'a> MatRef<'a> {
    fn normal(m: &'a Matrix) -> Self {
        MatRef {
            data: &m.data,
            row_stride: m.cols,
            col_stride: 1,
        }
    }

    fn transposed(m: &'a Matrix) -> Self {
        MatRef {
            data: &m.data,
            row_stride: 1,
            col_stride: m.cols,
        }
    }

    #[inline(always)]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.row_stride + j * self.col_stride]
    }
}

const MR: usize = 4;
const NR: usize = 16;
const KC: usize = 256;
const MC: usize = 128;
const NC: usize = 2048;

/// `c[m×n] += a[m×k] · b[k×n]` with `c` row-major and contiguous.
///
/// Operands are packed into MR-row and NR-column panels per (KC, MC, NC)
/// block. The reduction order depends only on the shapes, so results are
/// bit-reproducible.
fn gemm(m: usize, n: usize, k: usize, a: MatRef<'_>, b: MatRef<'_>, c: &mut [f64]) {
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    let kc_max = KC.min(k);
    let mut packed_a = vec![0.0; MC.min(m).div_ceil(MR) * MR * kc_max];
    let mut packed_b = vec![0.0; NC.min(n).div_ceil(NR) * NR * kc_max];
    for jc in (0..n).step_by(NC) {
        let nc = NC.min(n - jc);
        let n_panels = nc.div_ceil(NR);
        for pc in (0..k).step_by(KC) {
            let kc = KC.min(k - pc);
            for jp in 0..n_panels {
                let j0 = jc + jp * NR;
                let width = NR.min(jc + nc - j0);
                let dst = &mut packed_b[jp * NR * kc..(jp + 1) * NR * kc];
                for p in 0..kc {
                    let row = &mut dst[p * NR..(p + 1) * NR];
                    for (jj, slot) in row.iter_mut().enumerate() {
                        *slot = if jj < width {
                            b.at(pc + p, j0 + jj)
                        } else {
                            0.0
                        };
                    }
                }
            }
            for ic in (0..m).step_by(MC) {
                let mc = MC.min(m - ic);
                let m_panels = mc.div_ceil(MR);
                for ip in 0..m_panels {
                    let i0 = ic + ip * MR;
                    let height = MR.min(ic + mc - i0);
                    let dst = &mut packed_a[ip * MR * kc..(ip + 1) * MR * kc];
                    for p in 0..kc {
                        for ii in 0..MR {
                            dst[p * MR + ii] = if ii < height {
                                a.at(i0 + ii, pc + p)
                            } else {
                                0.0
                            };
                        }
                    }
                }
                for jp in 0..n_panels {
                    let j0 = jc + jp * NR;
                    let width = NR.min(jc + nc - j0);
                    let bp = &packed_b[jp * NR * kc..(jp + 1) * NR * kc];
                    for ip in 0..m_panels {
                        let i0 = ic + ip * MR;
                        let height = MR.min(ic + mc - i0);
                        let ap = &packed_a[ip * MR * kc..(ip + 1) * MR * kc];
                        let acc = microkernel(ap, bp);
                        for (ii, acc_row) in acc.iter().enumerate().take(height) {
                            let start = (i0 + ii) * n + j0;
                            for (dst, v) in c[start..start + width].iter_mut().zip(acc_row) {
                                *dst += v;
                            }
                        }
                    }
                }
            }
        }
    }
}

#[inline(always)]
fn microkernel(ap: &[f64], bp: &[f64]) -> [[f64; NR]; MR] {
    let mut acc = [[0.0f64; NR]; MR];
    for (av, bv) in ap.chunks_exact(MR).zip(bp.chunks_exact(NR)) {
        for ii in 0..MR {
            let x = av[ii];
            for jj in 0..NR {
                acc[ii][jj] = x.mul_add(bv[jj], acc[ii][jj]);
            }
        }
    }
    acc
}
