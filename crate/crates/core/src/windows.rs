//! Whitened length-`(p+1)` windows.
//!
//! For `L L' = Σ` and windows `Z_t = (Y_{t-p}, ..., Y_t)'`, every quadratic form
//! the model needs is a squared distance between `u_t = L^{-1}(Z_t - c)`
//! vectors: `W'Σ^{-1}W = |u_i - u_{i-j}|^2`. Because `L` is lower triangular,
//! the first `r` entries of `u_t` are the whitened first `r` entries of `Z_t`
//! under the leading `r x r` block of `Σ`, so the same bank serves the
//! `V' Σ11^{-1} V` terms and every `k`-step partition.

use nalgebra::DMatrix;

/// Whitened windows ending at storage positions `p..len`.
#[derive(Debug, Clone)]
pub(crate) struct WindowBank {
    dim: usize,
    center: f64,
    /// Row-major copy of `L`.
    chol: Vec<f64>,
    u: Vec<f64>,
    count: usize,
}

impl WindowBank {
    pub fn new(chol: &DMatrix<f64>, center: f64) -> Self {
        let dim = chol.nrows();
        let mut flat = vec![0.0; dim * dim];
        for r in 0..dim {
            for c in 0..=r {
                flat[r * dim + c] = chol[(r, c)];
            }
        }
        Self {
            dim,
            center,
            chol: flat,
            u: Vec::new(),
            count: 0,
        }
    }

    /// Bank covering every complete window of `values`.
    pub fn from_values(chol: &DMatrix<f64>, values: &[f64], center: f64) -> Self {
        let mut bank = Self::new(chol, center);
        bank.extend(values);
        bank
    }

    /// Whitens any windows of `values` not yet in the bank. `values` must
    /// extend the slice used previously.
    pub fn extend(&mut self, values: &[f64]) {
        let dim = self.dim;
        let p = dim - 1;
        if values.len() < dim {
            return;
        }
        let total = values.len() - p;
        self.u.reserve((total.saturating_sub(self.count)) * dim);
        let mut z = vec![0.0; dim];
        for w in self.count..total {
            for (l, zl) in z.iter_mut().enumerate() {
                *zl = values[w + l] - self.center;
            }
            // forward substitution L u = z
            for r in 0..dim {
                let row = &self.chol[r * dim..r * dim + r];
                let acc: f64 = row.iter().zip(&self.u[w * dim..w * dim + r]).map(|(a, b)| a * b).sum::<f64>();
                let v = (z[r] - acc) / self.chol[r * dim + r];
                self.u.push(v);
            }
        }
        self.count = total;
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    /// Number of whitened windows; window `w` ends at storage position `w + p`.
    #[cfg(test)]
    pub fn len(&self) -> usize {
        self.count
    }

    /// `u` for the window ending at storage position `end`.
    #[inline]
    pub fn window(&self, end: usize) -> &[f64] {
        let w = end + 1 - self.dim;
        &self.u[w * self.dim..(w + 1) * self.dim]
    }

    /// `(L^{-1} (Z_a - Z_b))[..r]` squared norm, split into the first `dim-1`
    /// entries and the last one.
    #[inline]
    pub fn split_distance(&self, a_end: usize, b_end: usize) -> (f64, f64) {
        let a = self.window(a_end);
        let b = self.window(b_end);
        let p = self.dim - 1;
        let mut head = 0.0;
        for l in 0..p {
            let d = a[l] - b[l];
            head += d * d;
        }
        (head, a[p] - b[p])
    }

    /// Squared whitened distance over the first `r` components.
    #[inline]
    pub fn prefix_distance(&self, a_end: usize, b_end: usize, r: usize) -> f64 {
        let a = self.window(a_end);
        let b = self.window(b_end);
        a[..r]
            .iter()
            .zip(&b[..r])
            .map(|(x, y)| (x - y) * (x - y))
            .sum()
    }

    /// `g . (u_a - u_b)[..r]`.
    #[inline]
    pub fn prefix_dot(&self, a_end: usize, b_end: usize, g: &[f64]) -> f64 {
        let a = self.window(a_end);
        let b = self.window(b_end);
        g.iter()
            .enumerate()
            .map(|(l, gl)| gl * (a[l] - b[l]))
            .sum()
    }
}
