use rand::Rng;

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
///
/// Vectors are carried as `1×n` rows; a sequence of frames is a `T×F` matrix
/// with one frame per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor2 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor2 {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Tensor2 {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "tensor data",
                format!("{} values for {rows}x{cols}", rows * cols),
                format!("{} values", data.len()),
            ));
        }
        Ok(Tensor2 { rows, cols, data })
    }

    pub fn row_vector(data: Vec<f64>) -> Self {
        Tensor2 {
            rows: 1,
            cols: data.len(),
            data,
        }
    }

    /// Stacks equally sized rows into a matrix.
    pub fn from_rows(rows: &[Vec<f64>], cols: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::shape(format!("row {i}"), cols, r.len()));
            }
            data.extend_from_slice(r);
        }
        Ok(Tensor2 {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// Uniform entries in `[-bound, bound)`.
    pub fn uniform<R: Rng + ?Sized>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
        Tensor2 { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn scale(&mut self, k: f64) {
        self.data.iter_mut().for_each(|x| *x *= k);
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor2 {
        Tensor2 {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn check_shape(&self, name: &str, rows: usize, cols: usize) -> Result<()> {
        if self.rows != rows || self.cols != cols {
            return Err(Error::shape(
                name,
                format!("{rows}x{cols}"),
                format!("{}x{}", self.rows, self.cols),
            ));
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &Tensor2) -> Result<()> {
        other.check_shape("addend", self.rows, self.cols)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// Adds `row` to every row.
    pub fn add_row_broadcast(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.cols {
            return Err(Error::shape("broadcast row", self.cols, row.len()));
        }
        for chunk in self.data.chunks_exact_mut(self.cols.max(1)) {
            for (a, b) in chunk.iter_mut().zip(row) {
                *a += b;
            }
        }
        Ok(())
    }

    /// Column sums as a row vector.
    pub fn sum_rows(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for chunk in self.data.chunks_exact(self.cols.max(1)) {
            for (o, v) in out.iter_mut().zip(chunk) {
                *o += v;
            }
        }
        out
    }

    /// Columns `start..end` as a new matrix.
    pub fn columns(&self, start: usize, end: usize) -> Tensor2 {
        let mut out = Tensor2::zeros(self.rows, end - start);
        for r in 0..self.rows {
            out.row_mut(r).copy_from_slice(&self.row(r)[start..end]);
        }
        out
    }

    /// Rows `start..end` as a new matrix.
    pub fn row_range(&self, start: usize, end: usize) -> Tensor2 {
        Tensor2 {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    /// Horizontal concatenation `[self | other]`.
    pub fn hconcat(&self, other: &Tensor2) -> Result<Tensor2> {
        if self.rows != other.rows {
            return Err(Error::shape("hconcat right operand rows", self.rows, other.rows));
        }
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for r in 0..self.rows {
            data.extend_from_slice(self.row(r));
            data.extend_from_slice(other.row(r));
        }
        Ok(Tensor2 {
            rows: self.rows,
            cols,
            data,
        })
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Tensor2) -> Result<Tensor2> {
        let mut out = Tensor2::zeros(self.rows, other.cols);
        gemm(1.0, self, false, other, false, 0.0, &mut out)?;
        Ok(out)
    }

    /// `selfᵀ · other`.
    pub fn matmul_tn(&self, other: &Tensor2) -> Result<Tensor2> {
        let mut out = Tensor2::zeros(self.cols, other.cols);
        gemm(1.0, self, true, other, false, 0.0, &mut out)?;
        Ok(out)
    }

    /// `self · otherᵀ`.
    pub fn matmul_nt(&self, other: &Tensor2) -> Result<Tensor2> {
        let mut out = Tensor2::zeros(self.rows, other.rows);
        gemm(1.0, self, false, other, true, 0.0, &mut out)?;
        Ok(out)
    }

    /// Rounds every entry to the nearest `f32`, so the tensor survives a
    /// 32-bit checkpoint unchanged.
    pub fn round_to_f32(&mut self) {
        self.data.iter_mut().for_each(|v| *v = *v as f32 as f64);
    }
}

/// `c = alpha · op(a) · op(b) + beta · c`.
pub fn gemm(
    alpha: f64,
    a: &Tensor2,
    trans_a: bool,
    b: &Tensor2,
    trans_b: bool,
    beta: f64,
    c: &mut Tensor2,
) -> Result<()> {
    let (m, k) = if trans_a { (a.cols, a.rows) } else { (a.rows, a.cols) };
    let (kb, n) = if trans_b { (b.cols, b.rows) } else { (b.rows, b.cols) };
    if k != kb {
        return Err(Error::shape(
            "matmul right operand",
            format!("{k} rows"),
            format!("{kb} rows"),
        ));
    }
    c.check_shape("matmul output", m, n)?;
    if m == 0 || n == 0 {
        return Ok(());
    }
    if k == 0 {
        c.scale(beta);
        return Ok(());
    }
    let (rsa, csa) = if trans_a {
        (1, a.cols as isize)
    } else {
        (a.cols as isize, 1)
    };
    let (rsb, csb) = if trans_b {
        (1, b.cols as isize)
    } else {
        (b.cols as isize, 1)
    };
    // SAFETY: the strides above describe exactly the row-major buffers of
    // `a`, `b` and `c`, whose shapes were checked against m, k and n.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.data.as_mut_ptr(),
            c.cols as isize,
            1,
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &Tensor2, b: &Tensor2) -> Tensor2 {
        let mut out = Tensor2::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a.get(i, k) * b.get(k, j);
                }
                out.set(i, j, s);
            }
        }
        out
    }

    fn transpose(a: &Tensor2) -> Tensor2 {
        let mut out = Tensor2::zeros(a.cols(), a.rows());
        for i in 0..a.rows() {
            for j in 0..a.cols() {
                out.set(j, i, a.get(i, j));
            }
        }
        out
    }

    #[test]
    fn matmul_variants_match_naive_loops() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let a = Tensor2::uniform(5, 3, 1.0, &mut rng);
        let b = Tensor2::uniform(3, 4, 1.0, &mut rng);
        let expect = naive(&a, &b);
        let close = |x: &Tensor2, y: &Tensor2| x.data().iter().zip(y.data()).all(|(p, q)| (p - q).abs() < 1e-12);
        assert!(close(&a.matmul(&b).unwrap(), &expect));
        assert!(close(&transpose(&a).matmul_tn(&b).unwrap(), &expect));
        assert!(close(&a.matmul_nt(&transpose(&b)).unwrap(), &expect));
    }

    #[test]
    fn matmul_rejects_inner_dimension_mismatch() {
        let a = Tensor2::zeros(2, 3);
        let b = Tensor2::zeros(4, 2);
        assert!(matches!(a.matmul(&b), Err(Error::Shape { .. })));
    }

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor2::from_vec(2, 2, vec![1.0; 3]).is_err());
        assert_eq!(Tensor2::from_vec(2, 2, vec![1.0; 4]).unwrap().shape(), (2, 2));
    }
}
