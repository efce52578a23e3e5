use crate::error::{Error, Result};

/// Dense row-major matrix of finite `f64` values.
///
/// Everything that flows through the tape is one of these: network weights,
/// per-timestep activations, minibatch slices. Vectors are `1 x n` rows and
/// scalars are `1 x 1`. Constructors reject NaN and infinity so no
/// non-finite value can enter a computation silently.
#[derive(Clone, Debug, PartialEq)]
pub struct RealArray {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealArray {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "array dimensions must be positive");
        RealArray { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::shape("RealArray::from_vec", format!("dimensions {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::shape(
                "RealArray::from_vec",
                format!("data length {} != {}x{}", data.len(), rows, cols),
            ));
        }
        let arr = RealArray { rows, cols, data };
        arr.check_finite("RealArray::from_vec")?;
        Ok(arr)
    }

    /// 1 x n row vector.
    pub fn row(values: &[f64]) -> Result<Self> {
        Self::from_vec(1, values.len(), values.to_vec())
    }

    /// 1 x 1 scalar.
    pub fn scalar(value: f64) -> Result<Self> {
        Self::from_vec(1, 1, vec![value])
    }

    /// Stack equal-length rows into a `rows.len() x width` matrix.
    pub fn stack_rows(rows: &[&[f64]]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::shape("RealArray::stack_rows", "no rows"));
        }
        let width = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * width);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != width {
                return Err(Error::shape(
                    "RealArray::stack_rows",
                    format!("row {i} has length {} != {width}", r.len()),
                ));
            }
            data.extend_from_slice(r);
        }
        Self::from_vec(rows.len(), width, data)
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
        false // dimensions are always positive
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// The single element of a 1 x 1 array.
    pub fn as_scalar(&self) -> Result<f64> {
        if self.rows == 1 && self.cols == 1 {
            Ok(self.data[0])
        } else {
            Err(Error::shape("RealArray::as_scalar", format!("shape {}x{}", self.rows, self.cols)))
        }
    }

    pub fn check_finite(&self, context: &'static str) -> Result<()> {
        for (i, v) in self.data.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::non_finite(
                    context,
                    format!("element {i} of {}x{} array is {v}", self.rows, self.cols),
                ));
            }
        }
        Ok(())
    }

    /// Maximum absolute difference against another array of the same shape.
    pub fn max_abs_diff(&self, other: &RealArray) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Dot product with four-way accumulation; fixed order, so results are
/// reproducible while still giving the optimizer room to vectorize.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let chunks = a.len() / 4;
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..chunks {
        let j = i * 4;
        s0 += a[j] * b[j];
        s1 += a[j + 1] * b[j + 1];
        s2 += a[j + 2] * b[j + 2];
        s3 += a[j + 3] * b[j + 3];
    }
    let mut tail = 0.0;
    for j in chunks * 4..a.len() {
        tail += a[j] * b[j];
    }
    ((s0 + s1) + (s2 + s3)) + tail
}

/// y += alpha * x.
#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x.iter()) {
        *yi += alpha * xi;
    }
}
