//! Small dense symmetric linear algebra for the mixed-model solver.

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Mat {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Mat {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Mat {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            debug_assert_eq!(row.len(), c);
            data.extend_from_slice(row);
        }
        Mat { rows: r, cols: c, data }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn add_at(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] += v;
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.at(i, j)).collect()
    }

    /// self^T * self, accumulated symmetrically.
    pub fn gram(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.cols);
        for i in 0..self.rows {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            for a in 0..self.cols {
                if row[a] == 0.0 {
                    continue;
                }
                for b in a..self.cols {
                    out.data[a * self.cols + b] += row[a] * row[b];
                }
            }
        }
        for a in 0..self.cols {
            for b in 0..a {
                out.data[a * self.cols + b] = out.data[b * self.cols + a];
            }
        }
        out
    }

    /// self^T * v for a length-rows vector.
    pub fn t_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            for (o, r) in out.iter_mut().zip(row) {
                *o += r * vi;
            }
        }
        out
    }

    /// self * v for a length-cols vector.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| {
                self.data[i * self.cols..(i + 1) * self.cols]
                    .iter()
                    .zip(v)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }
}

/// Cholesky factor (lower triangular) of a symmetric positive-definite
/// matrix. Fails with a rank-deficiency message when a pivot loses
/// positivity.
#[derive(Debug)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    pub fn factor(m: &Mat) -> Result<Cholesky> {
        if m.rows != m.cols {
            return Err(Error::contract("cholesky: matrix not square"));
        }
        let n = m.rows;
        let mut l = vec![0.0; n * n];
        let scale = (0..n)
            .map(|i| m.at(i, i).abs())
            .fold(0.0f64, f64::max)
            .max(1.0);
        for j in 0..n {
            let mut d = m.at(j, j);
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if d <= 1e-12 * scale {
                return Err(Error::numeric(format!(
                    "rank-deficient system: non-positive pivot {d:.3e} at column {j}"
                )));
            }
            let dj = d.sqrt();
            l[j * n + j] = dj;
            for i in j + 1..n {
                let mut s = m.at(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / dj;
            }
        }
        Ok(Cholesky { n, l })
    }

    /// log(det(M)) of the factored matrix.
    pub fn log_det(&self) -> f64 {
        (0..self.n)
            .map(|i| self.l[i * self.n + i].ln())
            .sum::<f64>()
            * 2.0
    }

    /// Solve M x = b.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        debug_assert_eq!(b.len(), self.n);
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                y[i] -= self.l[i * n + k] * y[k];
            }
            y[i] /= self.l[i * n + i];
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                y[i] -= self.l[k * n + i] * y[k];
            }
            y[i] /= self.l[i * n + i];
        }
        y
    }

    /// Full inverse, column by column.
    pub fn inverse(&self) -> Mat {
        let n = self.n;
        let mut inv = Mat::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = self.solve(&e);
            for (i, v) in col.iter().enumerate() {
                inv.set(i, j, *v);
            }
            e[j] = 0.0;
        }
        inv
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Rng;

    fn random_spd(rng: &mut Rng, n: usize) -> Mat {
        // A^T A + n I is comfortably positive definite.
        let a = Mat {
            rows: n,
            cols: n,
            data: (0..n * n).map(|_| rng.uniform(-1.0, 1.0)).collect(),
        };
        let mut g = a.gram();
        for i in 0..n {
            g.add_at(i, i, n as f64);
        }
        g
    }

    #[test]
    fn solve_recovers_known_solution() {
        let mut rng = Rng::new(1);
        for _ in 0..10 {
            let n = 2 + rng.below(8);
            let m = random_spd(&mut rng, n);
            let x_true: Vec<f64> = (0..n).map(|_| rng.uniform(-2.0, 2.0)).collect();
            let b = m.mul_vec(&x_true);
            let chol = Cholesky::factor(&m).unwrap();
            let x = chol.solve(&b);
            for (a, t) in x.iter().zip(&x_true) {
                assert!((a - t).abs() < 1e-9, "{a} vs {t}");
            }
        }
    }

    #[test]
    fn inverse_times_matrix_is_identity() {
        let mut rng = Rng::new(2);
        let m = random_spd(&mut rng, 6);
        let inv = Cholesky::factor(&m).unwrap().inverse();
        for i in 0..6 {
            for j in 0..6 {
                let mut acc = 0.0;
                for k in 0..6 {
                    acc += m.at(i, k) * inv.at(k, j);
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((acc - expect).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn log_det_matches_diagonal_product_on_diagonal_matrix() {
        let mut m = Mat::zeros(3, 3);
        m.set(0, 0, 2.0);
        m.set(1, 1, 5.0);
        m.set(2, 2, 0.5);
        let chol = Cholesky::factor(&m).unwrap();
        assert!((chol.log_det() - (2.0f64 * 5.0 * 0.5).ln()).abs() < 1e-12);
    }

    #[test]
    fn singular_matrix_reports_rank_deficiency() {
        // Second column is a copy of the first.
        let m = Mat::from_rows(&[
            vec![1.0, 1.0, 0.0],
            vec![1.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ]);
        match Cholesky::factor(&m) {
            Err(Error::Numeric(msg)) => assert!(msg.contains("rank-deficient")),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }
}
