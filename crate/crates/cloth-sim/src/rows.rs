//! Sparse constraint rows over the 3N position vector.

use crate::math::Vec3;

/// One sparse gradient row. Column indices are sorted and unique.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRow {
    pub cols: Vec<u32>,
    pub vals: Vec<f64>,
}

impl SparseRow {
    /// Build a row from per-node 3-vector gradients. Entries with zero
    /// vectors are kept so sparsity patterns stay stable across iterations.
    pub fn from_nodes(entries: &[(usize, Vec3)]) -> Self {
        let mut pairs: Vec<(u32, f64)> = Vec::with_capacity(entries.len() * 3);
        for &(n, g) in entries {
            let base = 3 * n as u32;
            pairs.push((base, g.x));
            pairs.push((base + 1, g.y));
            pairs.push((base + 2, g.z));
        }
        pairs.sort_unstable_by_key(|p| p.0);
        SparseRow {
            cols: pairs.iter().map(|p| p.0).collect(),
            vals: pairs.iter().map(|p| p.1).collect(),
        }
    }

    pub fn dot_dense(&self, x: &[f64]) -> f64 {
        self.cols
            .iter()
            .zip(&self.vals)
            .map(|(&c, &v)| v * x[c as usize])
            .sum()
    }

    /// y += s * row
    pub fn axpy_into(&self, s: f64, y: &mut [f64]) {
        for (&c, &v) in self.cols.iter().zip(&self.vals) {
            y[c as usize] += s * v;
        }
    }

    /// sum_k a_k b_k w_k over the shared sparsity pattern.
    pub fn weighted_dot(&self, other: &SparseRow, w: &[f64]) -> f64 {
        let mut i = 0;
        let mut j = 0;
        let mut acc = 0.0;
        while i < self.cols.len() && j < other.cols.len() {
            match self.cols[i].cmp(&other.cols[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += self.vals[i] * other.vals[j] * w[self.cols[i] as usize];
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    pub fn norm(&self) -> f64 {
        self.vals.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// What a constraint group represents. Used for reporting and for
/// per-kind friction coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ConstraintKind {
    Inextensibility,
    Pin,
    Obstacle,
    SelfCollision,
    Cusp,
    Stick,
}

/// A differentiable constraint group: values with matching gradient rows.
#[derive(Debug, Clone)]
pub struct ConstraintBlock {
    pub kind: ConstraintKind,
    pub values: Vec<f64>,
    pub rows: Vec<SparseRow>,
}

impl ConstraintBlock {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weighted_dot_matches_dense() {
        let a = SparseRow::from_nodes(&[(0, Vec3::new(1.0, 2.0, 0.0)), (2, Vec3::new(0.0, 0.0, 3.0))]);
        let b = SparseRow::from_nodes(&[(2, Vec3::new(1.0, 1.0, 2.0)), (1, Vec3::new(5.0, 0.0, 0.0))]);
        let w: Vec<f64> = (0..9).map(|i| 1.0 + i as f64).collect();
        let mut da = vec![0.0; 9];
        let mut db = vec![0.0; 9];
        a.axpy_into(1.0, &mut da);
        b.axpy_into(1.0, &mut db);
        let dense: f64 = (0..9).map(|i| da[i] * db[i] * w[i]).sum();
        assert!((a.weighted_dot(&b, &w) - dense).abs() < 1e-14);
    }
}
