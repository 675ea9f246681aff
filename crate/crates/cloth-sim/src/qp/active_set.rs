//! Infeasible-start active-set solver.
//!
//! The working set holds the inequality rows currently treated as
//! equalities; everything else sits in the observation set. Each exchange
//! moves a single row: the most negative working multiplier leaves, the
//! most violated observed row enters, and the Cholesky factor of the
//! reduced system J M⁻¹ J' is updated incrementally instead of being
//! rebuilt. Unlike classical active-set methods the iteration may start
//! from an arbitrary (infeasible) point, so no phase-one problem is needed.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashSet;
use std::hash::{Hash, Hasher};

use crate::error::{Error, Result};
use crate::qp::cholesky::UpdatableCholesky;
use crate::qp::{QpProblem, QpSolution, SolveStats};
use crate::rows::SparseRow;

#[derive(Debug, Clone, Copy)]
pub struct ActiveSetOptions {
    /// A working multiplier below -dual_tolerance triggers removal.
    pub dual_tolerance: f64,
    /// An observed row below -primal_tolerance triggers addition.
    pub primal_tolerance: f64,
    /// Exchange cap; defaults to 50 + 10 × (number of inequality rows).
    pub max_exchanges: Option<usize>,
}

impl Default for ActiveSetOptions {
    fn default() -> Self {
        ActiveSetOptions {
            dual_tolerance: 1e-12,
            primal_tolerance: 1e-10,
            max_exchanges: None,
        }
    }
}

/// Reference to a row in factor order: all equality rows first, then the
/// working inequality rows in insertion order.
#[derive(Clone, Copy)]
enum RowRef {
    Eq(usize),
    Ineq(usize),
}

struct Reduced<'a> {
    p: &'a QpProblem,
    factor: UpdatableCholesky,
    refs: Vec<RowRef>,
    /// M⁻¹ f, reused across solves.
    mif: Vec<f64>,
}

impl<'a> Reduced<'a> {
    fn row(&self, r: RowRef) -> &SparseRow {
        match r {
            RowRef::Eq(i) => &self.p.eq_rows[i],
            RowRef::Ineq(i) => &self.p.ineq_rows[i],
        }
    }

    fn value(&self, r: RowRef) -> f64 {
        match r {
            RowRef::Eq(i) => self.p.eq_values[i],
            RowRef::Ineq(i) => self.p.ineq_values[i],
        }
    }

    fn border_column(&self, new_row: &SparseRow) -> Vec<f64> {
        let mut col: Vec<f64> = self
            .refs
            .iter()
            .map(|&r| new_row.weighted_dot(self.row(r), &self.p.inv_mass))
            .collect();
        col.push(new_row.weighted_dot(new_row, &self.p.inv_mass));
        col
    }

    fn try_push(&mut self, r: RowRef) -> std::result::Result<(), crate::qp::DependenceSignal> {
        let col = self.border_column(self.row(r));
        self.factor.add_row(&col)?;
        self.refs.push(r);
        Ok(())
    }

    fn remove(&mut self, pos: usize) {
        self.factor.remove_row(pos);
        self.refs.remove(pos);
    }

    /// Solve for multipliers and the increment; returns (zeta, dx, residual).
    fn solve(&self) -> (Vec<f64>, Vec<f64>, f64) {
        let rhs: Vec<f64> = self
            .refs
            .iter()
            .map(|&r| -self.value(r) - self.row(r).dot_dense(&self.mif))
            .collect();
        let mut zeta = rhs.clone();
        self.factor.solve_in_place(&mut zeta);
        let mut dx = self.increment(&zeta);
        // The residual of the reduced system equals the violation of the
        // factor rows at dx, so it is cheap to measure and to refine.
        let scale = 1.0 + rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut residual = self.factor_row_violation(&dx);
        for _ in 0..2 {
            if residual <= 1e-11 * scale {
                break;
            }
            let mut corr: Vec<f64> = self
                .refs
                .iter()
                .map(|&r| -(self.value(r) + self.row(r).dot_dense(&dx)))
                .collect();
            self.factor.solve_in_place(&mut corr);
            for (z, c) in zeta.iter_mut().zip(&corr) {
                *z += c;
            }
            dx = self.increment(&zeta);
            residual = self.factor_row_violation(&dx);
        }
        (zeta, dx, residual / scale)
    }

    fn increment(&self, zeta: &[f64]) -> Vec<f64> {
        let n = self.p.n();
        let mut acc = vec![0.0; n];
        for (&r, &z) in self.refs.iter().zip(zeta) {
            self.row(r).axpy_into(z, &mut acc);
        }
        let mut dx = vec![0.0; n];
        for i in 0..n {
            dx[i] = acc[i] * self.p.inv_mass[i] + self.mif[i];
        }
        dx
    }

    fn factor_row_violation(&self, dx: &[f64]) -> f64 {
        self.refs
            .iter()
            .map(|&r| (self.value(r) + self.row(r).dot_dense(dx)).abs())
            .fold(0.0f64, f64::max)
    }
}

fn build_reduced<'a>(p: &'a QpProblem, warm: Option<&[usize]>) -> Result<(Reduced<'a>, SolveStats)> {
    let mut stats = SolveStats::default();
    let mif: Vec<f64> = p
        .force_offset
        .iter()
        .zip(&p.inv_mass)
        .map(|(&f, &im)| f * im)
        .collect();
    let mut red = Reduced {
        p,
        factor: UpdatableCholesky::new(),
        refs: Vec::new(),
        mif,
    };
    for i in 0..p.eq_rows.len() {
        red.try_push(RowRef::Eq(i)).map_err(|sig| Error::LinearDependence {
            row: i,
            detail: format!(
                "equality row is dependent on earlier equality rows (pivot² = {:.3e})",
                sig.pivot_sq
            ),
        })?;
        stats.factor_updates += 1;
    }
    if let Some(warm) = warm {
        let mut seen = HashSet::new();
        for &i in warm {
            if i < p.ineq_rows.len() && seen.insert(i) {
                // Dependent warm rows are silently dropped; the exchange
                // loop will re-add them if they matter.
                if red.try_push(RowRef::Ineq(i)).is_ok() {
                    stats.factor_updates += 1;
                }
            }
        }
    }
    stats.refactorizations = 1;
    Ok((red, stats))
}

fn working_hash(refs: &[RowRef]) -> u64 {
    let mut ids: Vec<usize> = refs
        .iter()
        .filter_map(|r| match r {
            RowRef::Ineq(i) => Some(*i),
            RowRef::Eq(_) => None,
        })
        .collect();
    ids.sort_unstable();
    let mut h = DefaultHasher::new();
    ids.hash(&mut h);
    h.finish()
}

/// Solve the equality-constrained program defined by the equality rows
/// plus the inequality rows listed in `working`, all treated as equalities.
pub fn solve_equality_system(p: &QpProblem, working: &[usize]) -> Result<QpSolution> {
    let (mut red, mut stats) = build_reduced(p, None)?;
    for &i in working {
        red.try_push(RowRef::Ineq(i)).map_err(|sig| Error::LinearDependence {
            row: i,
            detail: format!(
                "working inequality row is dependent on the current system (pivot² = {:.3e})",
                sig.pivot_sq
            ),
        })?;
        stats.factor_updates += 1;
    }
    let (zeta, dx, residual) = red.solve();
    stats.residual = residual;
    stats.iterations = 1;
    if residual > 1e-6 {
        return Err(Error::LinearDependence {
            row: usize::MAX,
            detail: format!("reduced system is numerically singular (residual {residual:.3e})"),
        });
    }
    Ok(assemble_solution(p, &red, zeta, dx, stats))
}

fn assemble_solution(
    p: &QpProblem,
    red: &Reduced,
    zeta: Vec<f64>,
    dx: Vec<f64>,
    stats: SolveStats,
) -> QpSolution {
    let m_e = p.eq_rows.len();
    let mut eq_multipliers = vec![0.0; m_e];
    let mut ineq_multipliers = vec![0.0; p.ineq_rows.len()];
    let mut working_set = Vec::new();
    for (&r, &z) in red.refs.iter().zip(&zeta) {
        match r {
            RowRef::Eq(i) => eq_multipliers[i] = -z,
            RowRef::Ineq(i) => {
                ineq_multipliers[i] = z;
                working_set.push(i);
            }
        }
    }
    working_set.sort_unstable();
    QpSolution {
        dx,
        eq_multipliers,
        ineq_multipliers,
        working_set,
        stats,
    }
}

/// Full active-set iteration, optionally warm-started with a previous
/// working set. Returns a KKT point: working multipliers are nonnegative
/// and every observed row is satisfied up to the primal tolerance.
pub fn active_set_solve(
    p: &QpProblem,
    warm: Option<&[usize]>,
    opts: &ActiveSetOptions,
) -> Result<QpSolution> {
    let m_i = p.ineq_rows.len();
    let cap = opts.max_exchanges.unwrap_or(50 + 10 * m_i);
    let (mut red, mut stats) = build_reduced(p, warm)?;
    let mut visited: HashSet<u64> = HashSet::new();
    visited.insert(working_hash(&red.refs));
    let mut bland = false;
    let m_e = p.eq_rows.len();

    loop {
        stats.iterations += 1;
        let (zeta, dx, residual) = red.solve();
        stats.residual = residual;
        if residual > 1e-6 {
            return Err(Error::LinearDependence {
                row: usize::MAX,
                detail: format!("reduced system is numerically singular (residual {residual:.3e})"),
            });
        }

        // 1) Most negative working multiplier leaves the working set.
        let mut out: Option<(usize, usize, f64)> = None; // (factor pos, row idx, multiplier)
        for (pos, &r) in red.refs.iter().enumerate().skip(m_e) {
            if let RowRef::Ineq(i) = r {
                let g = zeta[pos];
                if g < -opts.dual_tolerance {
                    let better = match out {
                        None => true,
                        Some((_, bi, bg)) => {
                            if bland {
                                i < bi
                            } else {
                                g < bg || (g == bg && i < bi)
                            }
                        }
                    };
                    if better {
                        out = Some((pos, i, g));
                    }
                }
            }
        }
        if let Some((pos, _, _)) = out {
            red.remove(pos);
            stats.exchanges += 1;
            stats.factor_updates += 1;
            if stats.exchanges > cap {
                return Err(Error::ExchangeCap { cap });
            }
            if !visited.insert(working_hash(&red.refs)) && !bland {
                bland = true;
            }
            continue;
        }

        // 2) All multipliers are nonnegative; check the observation set.
        let in_working: HashSet<usize> = red
            .refs
            .iter()
            .filter_map(|r| match r {
                RowRef::Ineq(i) => Some(*i),
                _ => None,
            })
            .collect();
        let mut entry: Option<(usize, f64)> = None;
        for i in 0..m_i {
            if in_working.contains(&i) {
                continue;
            }
            let v = p.ineq_values[i] + p.ineq_rows[i].dot_dense(&dx);
            if v < -opts.primal_tolerance {
                let better = match entry {
                    None => true,
                    Some((bi, bv)) => {
                        if bland {
                            i < bi
                        } else {
                            v < bv || (v == bv && i < bi)
                        }
                    }
                };
                if better {
                    entry = Some((i, v));
                }
            }
        }
        let Some((enter, _)) = entry else {
            return Ok(assemble_solution(p, &red, zeta, dx, stats));
        };

        // 3) Bring the most violated observed row into the working set.
        if let Err(_sig) = red.try_push(RowRef::Ineq(enter)) {
            // Degenerate exchange: the new gradient is a combination of the
            // current rows. Express it in the row basis and evict the
            // working inequality row with the largest coefficient.
            let mut coeffs = red.border_column(&p.ineq_rows[enter]);
            coeffs.pop();
            red.factor.solve_in_place(&mut coeffs);
            let mut victim: Option<(usize, usize, f64)> = None;
            for (pos, &r) in red.refs.iter().enumerate().skip(m_e) {
                if let RowRef::Ineq(i) = r {
                    let a = coeffs[pos].abs();
                    let better = match victim {
                        None => a > 1e-10,
                        Some((_, bi, ba)) => a > ba || (a == ba && i < bi),
                    };
                    if better {
                        victim = Some((pos, i, a));
                    }
                }
            }
            let Some((pos, _, _)) = victim else {
                return Err(Error::LinearDependence {
                    row: enter,
                    detail: "violated row depends only on equality rows".into(),
                });
            };
            red.remove(pos);
            stats.factor_updates += 1;
            red.try_push(RowRef::Ineq(enter)).map_err(|sig| Error::LinearDependence {
                row: enter,
                detail: format!(
                    "row still dependent after degenerate exchange (pivot² = {:.3e})",
                    sig.pivot_sq
                ),
            })?;
        }
        stats.exchanges += 1;
        stats.factor_updates += 1;
        if stats.exchanges > cap {
            return Err(Error::ExchangeCap { cap });
        }
        if !visited.insert(working_hash(&red.refs)) && !bland {
            bland = true;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Vec3;
    use crate::qp::KktReport;

    fn unit_row(col: usize, v: f64) -> SparseRow {
        SparseRow {
            cols: vec![col as u32],
            vals: vec![v],
        }
    }

    #[test]
    fn halfspace_projection() {
        // min ½||x − (−1, 2)||² s.t. x₁ ≥ 0  →  x = (0, 2), multiplier 1.
        let p = QpProblem {
            inv_mass: vec![1.0, 1.0],
            eq_rows: vec![],
            eq_values: vec![],
            ineq_rows: vec![unit_row(0, 1.0)],
            ineq_values: vec![0.0],
            force_offset: vec![-1.0, 2.0],
        };
        let sol = active_set_solve(&p, None, &ActiveSetOptions::default()).unwrap();
        assert!((sol.dx[0] - 0.0).abs() < 1e-12);
        assert!((sol.dx[1] - 2.0).abs() < 1e-12);
        assert!((sol.ineq_multipliers[0] - 1.0).abs() < 1e-12);
        let kkt = KktReport::of(&p, &sol);
        assert!(kkt.stationarity < 1e-10 && kkt.ineq_violation < 1e-10);
    }

    #[test]
    fn no_inequalities_is_a_single_equality_solve() {
        // Single violated equality row x₁ = 1 with M = I: the increment
        // moves along the gradient scaled by 1/||row||².
        let p = QpProblem {
            inv_mass: vec![1.0, 1.0, 1.0],
            eq_rows: vec![SparseRow {
                cols: vec![0, 1],
                vals: vec![2.0, 1.0],
            }],
            eq_values: vec![-1.0],
            ineq_rows: vec![],
            ineq_values: vec![],
            force_offset: vec![0.0; 3],
        };
        let sol = active_set_solve(&p, None, &ActiveSetOptions::default()).unwrap();
        // dx = row' * (1 / ||row||²) = (2, 1, 0) / 5
        assert!((sol.dx[0] - 0.4).abs() < 1e-12);
        assert!((sol.dx[1] - 0.2).abs() < 1e-12);
        assert!(sol.dx[2].abs() < 1e-15);
        assert_eq!(sol.stats.exchanges, 0);
    }

    #[test]
    fn feasible_stationary_point_returns_zero() {
        let p = QpProblem {
            inv_mass: vec![0.5, 0.5],
            eq_rows: vec![unit_row(0, 1.0)],
            eq_values: vec![0.0],
            ineq_rows: vec![unit_row(1, 1.0)],
            ineq_values: vec![3.0],
            force_offset: vec![0.0, 0.0],
        };
        let sol = active_set_solve(&p, None, &ActiveSetOptions::default()).unwrap();
        assert!(sol.dx.iter().all(|v| v.abs() < 1e-14));
        assert!(sol.eq_multipliers[0].abs() < 1e-14);
    }

    #[test]
    fn warm_start_returns_same_optimum() {
        let row = |entries: &[(usize, Vec3)]| SparseRow::from_nodes(entries);
        let p = QpProblem {
            inv_mass: vec![1.0; 6],
            eq_rows: vec![row(&[(0, Vec3::new(1.0, 1.0, 0.0))])],
            eq_values: vec![-0.5],
            ineq_rows: vec![
                row(&[(1, Vec3::new(1.0, 0.0, 0.0))]),
                row(&[(1, Vec3::new(0.0, 1.0, 0.0))]),
                row(&[(0, Vec3::new(0.0, 0.0, 1.0)), (1, Vec3::new(0.0, 0.0, -1.0))]),
            ],
            ineq_values: vec![-0.25, 0.5, -0.1],
            force_offset: vec![0.1, -0.2, 0.3, 0.0, 0.05, -0.4],
        };
        let cold = active_set_solve(&p, None, &ActiveSetOptions::default()).unwrap();
        let warm = active_set_solve(&p, Some(&cold.working_set), &ActiveSetOptions::default()).unwrap();
        for (a, b) in cold.dx.iter().zip(&warm.dx) {
            assert!((a - b).abs() < 1e-8);
        }
        assert_eq!(warm.stats.exchanges, 0);
    }
}
