//! Dense row-major matrices and mode products on row-major tensors.

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Mat { rows, cols, data }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        let n = rows.len();
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        assert_eq!(data.len(), n * cols, "ragged rows");
        Mat { rows: n, cols, data }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    /// Scale row `r` by `s[r]`.
    pub fn scale_rows(&self, s: &[f64]) -> Mat {
        assert_eq!(s.len(), self.rows);
        let mut out = self.clone();
        for (r, sr) in s.iter().enumerate() {
            out.data[r * self.cols..(r + 1) * self.cols].iter_mut().for_each(|v| *v *= sr);
        }
        out
    }

    /// Keep only the columns listed.
    pub fn select_cols(&self, cols: &[usize]) -> Mat {
        Mat::from_fn(self.rows, cols.len(), |r, c| self.get(r, cols[c]))
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|r| self.row(r).iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }

    /// `self^T x`
    pub fn tmatvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (r, xr) in x.iter().enumerate() {
            if *xr == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(r)) {
                *o += xr * a;
            }
        }
        out
    }
}

/// Multiply `data` (row-major, shape `shape`) by `m` along `axis`.
///
/// `m.cols` must equal `shape[axis]`; the result has `shape[axis]` replaced by `m.rows`.
pub fn mode_product(data: &[f64], shape: &[usize], axis: usize, m: &Mat) -> (Vec<f64>, Vec<usize>) {
    assert_eq!(m.cols, shape[axis], "mode product dimension mismatch on axis {axis}");
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let n = shape[axis];
    let mut out = vec![0.0; outer * m.rows * inner];
    for o in 0..outer {
        let src = &data[o * n * inner..(o + 1) * n * inner];
        let dst = &mut out[o * m.rows * inner..(o + 1) * m.rows * inner];
        for r in 0..m.rows {
            let d = &mut dst[r * inner..(r + 1) * inner];
            for c in 0..n {
                let coef = m.get(r, c);
                if coef == 0.0 {
                    continue;
                }
                for (dv, sv) in d.iter_mut().zip(&src[c * inner..(c + 1) * inner]) {
                    *dv += coef * sv;
                }
            }
        }
    }
    let mut new_shape = shape.to_vec();
    new_shape[axis] = m.rows;
    (out, new_shape)
}

/// Apply one matrix per axis.
pub fn multi_mode_product(data: &[f64], shape: &[usize], mats: &[&Mat]) -> (Vec<f64>, Vec<usize>) {
    assert_eq!(mats.len(), shape.len());
    let mut cur = data.to_vec();
    let mut cur_shape = shape.to_vec();
    for (axis, m) in mats.iter().enumerate() {
        let (next, s) = mode_product(&cur, &cur_shape, axis, m);
        cur = next;
        cur_shape = s;
    }
    (cur, cur_shape)
}

/// Row-major flat index of a multi-index.
pub fn flat_index(idx: &[usize], shape: &[usize]) -> usize {
    idx.iter().zip(shape).fold(0, |acc, (&i, &n)| acc * n + i)
}

/// Inverse of [`flat_index`].
pub fn unflatten(mut flat: usize, shape: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; shape.len()];
    for a in (0..shape.len()).rev() {
        idx[a] = flat % shape[a];
        flat /= shape[a];
    }
    idx
}
