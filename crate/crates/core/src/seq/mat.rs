use rand::Rng;

use crate::scalar::Scalar;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn uniform<R: Rng>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols)
            .map(|_| T::of(rng.random_range(-bound..bound)))
            .collect();
        Mat { rows, cols, data }
    }

    /// Glorot-uniform initialization.
    pub fn glorot<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        Self::uniform(rows, cols, bound, rng)
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `y = W x`
    pub fn mv(&self, x: &[T], y: &mut [T]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(y.len(), self.rows);
        for (r, out) in y.iter_mut().enumerate() {
            *out = crate::embed::dot(self.row(r), x);
        }
    }

    pub fn mv_new(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.rows];
        self.mv(x, &mut y);
        y
    }

    /// `dx += Wᵀ dy`
    pub fn mtv_acc(&self, dy: &[T], dx: &mut [T]) {
        debug_assert_eq!(dy.len(), self.rows);
        debug_assert_eq!(dx.len(), self.cols);
        for (r, &g) in dy.iter().enumerate() {
            if g == T::zero() {
                continue;
            }
            for (d, &w) in dx.iter_mut().zip(self.row(r)) {
                *d += g * w;
            }
        }
    }

    /// `W += dy xᵀ`
    pub fn outer_acc(&mut self, dy: &[T], x: &[T]) {
        debug_assert_eq!(dy.len(), self.rows);
        debug_assert_eq!(x.len(), self.cols);
        for (r, &g) in dy.iter().enumerate() {
            if g == T::zero() {
                continue;
            }
            for (w, &xv) in self.row_mut(r).iter_mut().zip(x) {
                *w += g * xv;
            }
        }
    }
}
