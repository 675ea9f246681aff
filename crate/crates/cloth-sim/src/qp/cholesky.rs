//! Dense Cholesky factorization of the reduced constraint system with
//! O(k²) row addition and removal.
//!
//! Rows are appended at the border of the factor (bordering scheme), so an
//! add costs one triangular solve. Removing row i drops the corresponding
//! row and column of L and repairs the trailing block with a single
//! rank-one update, which is always numerically safe because the update is
//! additive.

/// Signalled when a row to be added is linearly dependent on the rows
/// already in the factor. Carries the rejected pivot square and the
/// diagonal scale it was tested against.
#[derive(Debug, Clone, Copy)]
pub struct DependenceSignal {
    pub pivot_sq: f64,
    pub diag_scale: f64,
}

/// Relative pivot threshold: a new row is rejected as dependent when
/// pivot² < threshold × its diagonal entry.
pub const DEPENDENCE_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, Default)]
pub struct UpdatableCholesky {
    /// Lower-triangular rows; row k has k+1 entries.
    rows: Vec<Vec<f64>>,
}

impl UpdatableCholesky {
    pub fn new() -> Self {
        UpdatableCholesky { rows: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    /// Factor a dense symmetric positive definite matrix given as
    /// lower-triangular rows (`a[i][j]` for j ≤ i). Returns the index of
    /// the first row whose pivot fails the dependence test.
    pub fn try_from_matrix(a: &[Vec<f64>]) -> Result<Self, usize> {
        Self::try_from_matrix_with_threshold(a, DEPENDENCE_THRESHOLD)
    }

    /// Like [`try_from_matrix`](Self::try_from_matrix) with an explicit
    /// relative pivot threshold. Pass 0.0 to accept any positive pivot
    /// (used by solvers that regularize instead of exchanging rows).
    pub fn try_from_matrix_with_threshold(a: &[Vec<f64>], threshold: f64) -> Result<Self, usize> {
        let mut f = UpdatableCholesky::new();
        for (i, row) in a.iter().enumerate() {
            debug_assert_eq!(row.len(), i + 1);
            f.add_row_with_threshold(row, threshold).map_err(|_| i)?;
        }
        Ok(f)
    }

    /// Append one row: `col` holds the new matrix row (a_k0 .. a_kk),
    /// length dim + 1.
    pub fn add_row(&mut self, col: &[f64]) -> Result<(), DependenceSignal> {
        self.add_row_with_threshold(col, DEPENDENCE_THRESHOLD)
    }

    pub fn add_row_with_threshold(
        &mut self,
        col: &[f64],
        threshold: f64,
    ) -> Result<(), DependenceSignal> {
        let k = self.dim();
        assert_eq!(col.len(), k + 1);
        let mut w = col[..k].to_vec();
        // Forward substitution L w = col.
        for i in 0..k {
            let mut s = w[i];
            let row = &self.rows[i];
            for j in 0..i {
                s -= row[j] * w[j];
            }
            w[i] = s / row[i];
        }
        let diag = col[k];
        let pivot_sq = diag - w.iter().map(|v| v * v).sum::<f64>();
        if !(pivot_sq > threshold * diag.abs().max(f64::MIN_POSITIVE)) {
            return Err(DependenceSignal {
                pivot_sq,
                diag_scale: diag,
            });
        }
        w.push(pivot_sq.sqrt());
        self.rows.push(w);
        Ok(())
    }

    /// Remove row/column `i` from the factored matrix.
    pub fn remove_row(&mut self, i: usize) {
        let n = self.dim();
        assert!(i < n);
        // Column i below the diagonal, needed for the rank-one repair.
        let mut w: Vec<f64> = (i + 1..n).map(|j| self.rows[j][i]).collect();
        self.rows.remove(i);
        for row in self.rows[i..].iter_mut() {
            row.remove(i);
        }
        // Trailing block T satisfied T T' = L22 L22' ; the deleted column
        // contributes w w' that must be folded back in.
        let start = i;
        let m = w.len();
        for k in 0..m {
            let lkk = self.rows[start + k][start + k];
            let wk = w[k];
            let r = lkk.hypot(wk);
            let c = r / lkk;
            let s = wk / lkk;
            self.rows[start + k][start + k] = r;
            for j in k + 1..m {
                let v = self.rows[start + j][start + k];
                let vn = (v + s * w[j]) / c;
                self.rows[start + j][start + k] = vn;
                w[j] = c * w[j] - s * vn;
            }
        }
    }

    /// Solve (L L') x = b in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.dim();
        assert_eq!(b.len(), n);
        for i in 0..n {
            let row = &self.rows[i];
            let mut s = b[i];
            for j in 0..i {
                s -= row[j] * b[j];
            }
            b[i] = s / row[i];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in i + 1..n {
                s -= self.rows[j][i] * b[j];
            }
            b[i] = s / self.rows[i][i];
        }
    }

    /// Reconstruct L L' (lower-triangular rows), for verification.
    pub fn reconstruct(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        let mut a = vec![Vec::new(); n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = 0.0;
                for k in 0..=j.min(i) {
                    s += self.rows[i][k] * self.rows[j][k];
                }
                a[i].push(s);
            }
        }
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_spd_rows(rng: &mut impl Rng, n: usize, extra: usize) -> Vec<Vec<f64>> {
        // Gram matrix of n random vectors of dimension n + extra.
        let vecs: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n + extra).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        (0..n)
            .map(|i| {
                (0..=i)
                    .map(|j| vecs[i].iter().zip(&vecs[j]).map(|(a, b)| a * b).sum::<f64>()
                        + if i == j { 0.1 } else { 0.0 })
                    .collect()
            })
            .collect()
    }

    fn max_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
        let mut m: f64 = 0.0;
        for (ra, rb) in a.iter().zip(b) {
            for (x, y) in ra.iter().zip(rb) {
                m = m.max((x - y).abs());
            }
        }
        m
    }

    #[test]
    fn add_then_remove_recovers_original() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_spd_rows(&mut rng, 6, 3);
        let mut f = UpdatableCholesky::try_from_matrix(&a).unwrap();
        let before = f.reconstruct();
        let new_row: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut col: Vec<f64> = new_row.clone();
        col.push(new_row.iter().map(|v| v * v).sum::<f64>() + 1.0);
        f.add_row(&col).unwrap();
        f.remove_row(6);
        assert!(max_diff(&before, &f.reconstruct()) < 1e-12);
    }

    #[test]
    fn duplicate_row_raises_dependence() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_spd_rows(&mut rng, 4, 2);
        let mut f = UpdatableCholesky::try_from_matrix(&a).unwrap();
        // Duplicate last matrix row: the bordered matrix is exactly singular.
        let mut col: Vec<f64> = (0..4).map(|j| a[3][j.min(3)].min(f64::MAX)).collect();
        // Row 3 of A has entries a[3][0..=3]; the duplicate's diagonal is a33.
        col[..4].copy_from_slice(&[a[3][0], a[3][1], a[3][2], a[3][3]]);
        col.push(a[3][3]);
        assert!(f.add_row(&col).is_err());
    }

    #[test]
    fn random_update_sequence_matches_from_scratch() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dim_v = 40;
        let mut vecs: Vec<Vec<f64>> = (0..8)
            .map(|_| (0..dim_v).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let gram = |vs: &[Vec<f64>]| -> Vec<Vec<f64>> {
            (0..vs.len())
                .map(|i| {
                    (0..=i)
                        .map(|j| {
                            vs[i].iter().zip(&vs[j]).map(|(a, b)| a * b).sum::<f64>()
                                + if i == j { 0.05 } else { 0.0 }
                        })
                        .collect()
                })
                .collect()
        };
        let mut f = UpdatableCholesky::try_from_matrix(&gram(&vecs)).unwrap();
        for _ in 0..100 {
            if vecs.len() > 2 && rng.gen_bool(0.5) {
                let i = rng.gen_range(0..vecs.len());
                vecs.remove(i);
                f.remove_row(i);
            } else {
                let v: Vec<f64> = (0..dim_v).map(|_| rng.gen_range(-1.0..1.0)).collect();
                vecs.push(v);
                let g = gram(&vecs);
                let col = g.last().unwrap().clone();
                f.add_row(&col).unwrap();
            }
            let expect = gram(&vecs);
            let scale = expect
                .iter()
                .flat_map(|r| r.iter())
                .fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(
                max_diff(&expect, &f.reconstruct()) < 1e-10 * scale.max(1.0),
                "factor drifted from from-scratch reconstruction"
            );
        }
    }

    #[test]
    fn solve_matches_direct_substitution() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_spd_rows(&mut rng, 10, 5);
        let f = UpdatableCholesky::try_from_matrix(&a).unwrap();
        let x_true: Vec<f64> = (0..10).map(|_| rng.gen_range(-2.0..2.0)).collect();
        // b = A x with A from the lower rows.
        let full = |i: usize, j: usize| if j <= i { a[i][j] } else { a[j][i] };
        let mut b: Vec<f64> = (0..10)
            .map(|i| (0..10).map(|j| full(i, j) * x_true[j]).sum())
            .collect();
        f.solve_in_place(&mut b);
        for (xi, bi) in x_true.iter().zip(&b) {
            assert!((xi - bi).abs() < 1e-9);
        }
    }
}
