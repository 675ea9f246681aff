//! Primal-dual interior-point solver (Mehrotra predictor-corrector),
//! used as the reference baseline the active-set method is benchmarked
//! against. Solves the same programs as `active_set_solve` but refactors
//! the full Newton system at every iteration, with no warm starting.

use crate::error::{Error, Result};
use crate::qp::cholesky::UpdatableCholesky;
use crate::qp::{QpProblem, QpSolution, SolveStats};

const MAX_ITERATIONS: usize = 200;

struct Workspace {
    n: usize,
    m_i: usize,
    /// Normalized mass diagonal and force offset.
    mass: Vec<f64>,
    f: Vec<f64>,
    mass_scale: f64,
}

/// Solve one program to high accuracy. Returns multipliers in the same
/// sign convention as the active-set solver.
pub fn interior_point_solve(p: &QpProblem) -> Result<QpSolution> {
    let n = p.n();
    let m_e = p.eq_rows.len();
    let m_i = p.ineq_rows.len();

    // Normalize the mass scale so tolerances act on displacement units.
    let mass_raw: Vec<f64> = p.inv_mass.iter().map(|&im| 1.0 / im).collect();
    let mass_scale = mass_raw.iter().copied().fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
    let ws = Workspace {
        n,
        m_i,
        mass: mass_raw.iter().map(|&m| m / mass_scale).collect(),
        f: p.force_offset.iter().map(|&f| f / mass_scale).collect(),
        mass_scale,
    };

    let mut x = vec![0.0; n];
    let mut lam = vec![0.0; m_e];
    let s_base: f64 = p
        .ineq_values
        .iter()
        .fold(1e-3f64, |m, v| m.max(v.abs()))
        .max(1e-3);
    let g_base = ws.f.iter().fold(1e-4f64, |m, v| m.max(v.abs()));
    let mut s: Vec<f64> = p
        .ineq_values
        .iter()
        .map(|&h| h.abs().max(0.1 * s_base))
        .collect();
    let mut gam = vec![g_base; m_i];

    let feas_scale = 1.0
        + p.eq_values
            .iter()
            .chain(p.ineq_values.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()));
    let dual_scale = 1.0 + ws.f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mu0 = if m_i > 0 {
        dot(&gam, &s) / m_i as f64
    } else {
        0.0
    };

    let mut stats = SolveStats::default();
    let mut best_err = f64::INFINITY;
    let mut stalled = 0;

    for iter in 0..MAX_ITERATIONS {
        stats.iterations = iter + 1;
        let (r_d, r_e, r_i) = residuals(p, &ws, &x, &lam, &gam, &s);
        let mu = if m_i > 0 { dot(&gam, &s) / m_i as f64 } else { 0.0 };
        let err_d = inf_norm(&r_d) / dual_scale;
        let err_p = inf_norm(&r_e).max(inf_norm(&r_i)) / feas_scale;
        let err = err_d.max(err_p).max(if m_i > 0 { mu / (1.0 + mu0) } else { 0.0 });

        if err_d < 1e-12 && err_p < 1e-12 && (m_i == 0 || mu < 1e-14 * (1.0 + mu0)) {
            break;
        }
        if err < best_err {
            best_err = err;
            stalled = 0;
        } else {
            stalled += 1;
            if stalled > 15 {
                if best_err < 1e-9 {
                    break; // numerically converged as far as f64 allows
                }
                return Err(Error::IpNoConvergence { iterations: iter });
            }
        }

        // Assemble and factor K = M + A' S⁻¹ Γ A, then the Schur
        // complement over the equality rows.
        let mut k_rows: Vec<Vec<f64>> = (0..n).map(|i| {
            let mut r = vec![0.0; i + 1];
            r[i] = ws.mass[i];
            r
        }).collect();
        for (ri, row) in p.ineq_rows.iter().enumerate() {
            let d = gam[ri] / s[ri];
            for a in 0..row.cols.len() {
                let (ca, va) = (row.cols[a] as usize, row.vals[a]);
                for b in 0..=a {
                    let (cb, vb) = (row.cols[b] as usize, row.vals[b]);
                    let (hi, lo) = if ca >= cb { (ca, cb) } else { (cb, ca) };
                    k_rows[hi][lo] += d * va * vb;
                }
            }
        }
        let k_factor = match UpdatableCholesky::try_from_matrix_with_threshold(&k_rows, 0.0) {
            Ok(f) => f,
            Err(_) => {
                // K is positive definite in exact arithmetic; regularize the
                // diagonal when the barrier scaling has degraded it.
                let trace: f64 = (0..n).map(|i| k_rows[i][i]).sum();
                let reg = 1e-12 * trace / n as f64;
                for (i, row) in k_rows.iter_mut().enumerate() {
                    row[i] += reg;
                }
                UpdatableCholesky::try_from_matrix_with_threshold(&k_rows, 0.0)
                    .map_err(|_| Error::IpNoConvergence { iterations: iter })?
            }
        };
        stats.refactorizations += 1;

        // Schur complement E K⁻¹ E' (dense, m_e x m_e).
        let mut kinv_et: Vec<Vec<f64>> = Vec::with_capacity(m_e);
        for row in &p.eq_rows {
            let mut col = vec![0.0; n];
            row.axpy_into(1.0, &mut col);
            k_factor.solve_in_place(&mut col);
            kinv_et.push(col);
        }
        let schur_factor = if m_e > 0 {
            let rows: Vec<Vec<f64>> = (0..m_e)
                .map(|i| (0..=i).map(|j| p.eq_rows[j].dot_dense(&kinv_et[i])).collect())
                .collect();
            Some(
                UpdatableCholesky::try_from_matrix_with_threshold(&rows, 1e-14)
                    .map_err(|_| Error::IpNoConvergence { iterations: iter })?,
            )
        } else {
            None
        };

        let solve_direction = |rc: &[f64]| -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
            // b = −r_d + A' S⁻¹ rc − A' S⁻¹ Γ r_i
            let mut b: Vec<f64> = r_d.iter().map(|v| -v).collect();
            for (ri, row) in p.ineq_rows.iter().enumerate() {
                let coeff = (rc[ri] - gam[ri] * r_i[ri]) / s[ri];
                row.axpy_into(coeff, &mut b);
            }
            let mut kinv_b = b.clone();
            k_factor.solve_in_place(&mut kinv_b);
            let mut dlam = vec![0.0; m_e];
            if let Some(schur) = &schur_factor {
                let mut rhs: Vec<f64> = (0..m_e)
                    .map(|i| -r_e[i] - p.eq_rows[i].dot_dense(&kinv_b))
                    .collect();
                schur.solve_in_place(&mut rhs);
                dlam = rhs;
            }
            let mut dx = b;
            for (i, row) in p.eq_rows.iter().enumerate() {
                row.axpy_into(dlam[i], &mut dx);
            }
            k_factor.solve_in_place(&mut dx);
            let mut ds = vec![0.0; m_i];
            let mut dgam = vec![0.0; m_i];
            for (ri, row) in p.ineq_rows.iter().enumerate() {
                ds[ri] = row.dot_dense(&dx) + r_i[ri];
                dgam[ri] = (rc[ri] - gam[ri] * ds[ri]) / s[ri];
            }
            (dx, dlam, ds, dgam)
        };

        // Predictor (affine scaling) step.
        let rc_aff: Vec<f64> = (0..m_i).map(|i| -gam[i] * s[i]).collect();
        let (dx_a, dlam_a, ds_a, dgam_a) = solve_direction(&rc_aff);
        let (dx, dlam, ds, dgam) = if m_i > 0 {
            let alpha_aff = step_len(&s, &ds_a).min(step_len(&gam, &dgam_a));
            let mu_aff: f64 = (0..m_i)
                .map(|i| (gam[i] + alpha_aff * dgam_a[i]) * (s[i] + alpha_aff * ds_a[i]))
                .sum::<f64>()
                / m_i as f64;
            let sigma = if mu > 0.0 { (mu_aff / mu).powi(3).min(1.0) } else { 0.0 };
            let rc: Vec<f64> = (0..m_i)
                .map(|i| sigma * mu - gam[i] * s[i] - dgam_a[i] * ds_a[i])
                .collect();
            solve_direction(&rc)
        } else {
            (dx_a, dlam_a, ds_a, dgam_a)
        };

        let tau = 0.9995;
        let alpha_p = (tau * step_len(&s, &ds)).min(1.0);
        let alpha_d = (tau * step_len(&gam, &dgam)).min(1.0);
        if m_i > 0 && alpha_p < 1e-13 && alpha_d < 1e-13 {
            if err < 1e-9 {
                break;
            }
            return Err(Error::IpNoConvergence { iterations: iter });
        }
        for i in 0..n {
            x[i] += alpha_p * dx[i];
        }
        for i in 0..m_e {
            lam[i] += alpha_d * dlam[i];
        }
        // The fraction-to-boundary step keeps s and γ strictly positive.
        for i in 0..m_i {
            s[i] += alpha_p * ds[i];
            gam[i] += alpha_d * dgam[i];
        }
        if iter + 1 == MAX_ITERATIONS {
            let (r_d, r_e, r_i) = residuals(p, &ws, &x, &lam, &gam, &s);
            let err = inf_norm(&r_d) / dual_scale
                + (inf_norm(&r_e).max(inf_norm(&r_i))) / feas_scale;
            if err > 1e-9 {
                return Err(Error::IpNoConvergence {
                    iterations: MAX_ITERATIONS,
                });
            }
        }
    }

    // Undo the mass normalization on the multipliers and flip the equality
    // multiplier sign to the shared convention.
    let working_set: Vec<usize> = (0..m_i)
        .filter(|&i| gam[i] * ws.mass_scale > 1e-10 * (1.0 + g_base) * ws.mass_scale && s[i] < 1e-6 * s_base)
        .collect();
    Ok(QpSolution {
        dx: x,
        eq_multipliers: lam.iter().map(|&l| -l * ws.mass_scale).collect(),
        ineq_multipliers: gam.iter().map(|&g| g * ws.mass_scale).collect(),
        working_set,
        stats,
    })
}

fn residuals(
    p: &QpProblem,
    ws: &Workspace,
    x: &[f64],
    lam: &[f64],
    gam: &[f64],
    s: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut r_d: Vec<f64> = (0..ws.n).map(|i| ws.mass[i] * x[i] - ws.f[i]).collect();
    for (row, &l) in p.eq_rows.iter().zip(lam) {
        row.axpy_into(-l, &mut r_d);
    }
    for (row, &g) in p.ineq_rows.iter().zip(gam) {
        row.axpy_into(-g, &mut r_d);
    }
    let r_e: Vec<f64> = p
        .eq_rows
        .iter()
        .zip(&p.eq_values)
        .map(|(row, &c)| c + row.dot_dense(x))
        .collect();
    let r_i: Vec<f64> = (0..ws.m_i)
        .map(|i| p.ineq_values[i] + p.ineq_rows[i].dot_dense(x) - s[i])
        .collect();
    (r_d, r_e, r_i)
}

fn step_len(v: &[f64], dv: &[f64]) -> f64 {
    let mut a = 1.0f64 / 0.9995; // allows a full unit step after scaling
    for (&x, &d) in v.iter().zip(dv) {
        if d < 0.0 {
            a = a.min(-x / d);
        }
    }
    a
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qp::active_set::{active_set_solve, ActiveSetOptions};
    use crate::rows::SparseRow;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn unit_row(col: usize, v: f64) -> SparseRow {
        SparseRow {
            cols: vec![col as u32],
            vals: vec![v],
        }
    }

    #[test]
    fn halfspace_matches_active_set() {
        let p = QpProblem {
            inv_mass: vec![1.0, 1.0],
            eq_rows: vec![],
            eq_values: vec![],
            ineq_rows: vec![unit_row(0, 1.0)],
            ineq_values: vec![0.0],
            force_offset: vec![-1.0, 2.0],
        };
        let ip = interior_point_solve(&p).unwrap();
        let asol = active_set_solve(&p, None, &ActiveSetOptions::default()).unwrap();
        for (a, b) in ip.dx.iter().zip(&asol.dx) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!((ip.ineq_multipliers[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn random_instances_agree_on_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for case in 0..25 {
            let n = rng.gen_range(2..12);
            let m_i = rng.gen_range(1..8);
            let m_e = rng.gen_range(0..3.min(n));
            let sparse = |rng: &mut ChaCha8Rng| {
                let mut cols: Vec<u32> = (0..n as u32).collect();
                cols.shuffle(rng);
                let k = rng.gen_range(1..=n.min(4));
                let mut cols: Vec<u32> = cols[..k].to_vec();
                cols.sort_unstable();
                let vals = (0..k).map(|_| rng.gen_range(-1.0..1.0f64)).collect();
                SparseRow { cols, vals }
            };
            let p = QpProblem {
                inv_mass: (0..n).map(|_| rng.gen_range(0.5..2.0)).collect(),
                eq_rows: (0..m_e).map(|_| sparse(&mut rng)).collect(),
                eq_values: (0..m_e).map(|_| rng.gen_range(-0.5..0.5)).collect(),
                ineq_rows: (0..m_i).map(|_| sparse(&mut rng)).collect(),
                ineq_values: (0..m_i).map(|_| rng.gen_range(-0.5..0.5)).collect(),
                force_offset: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            };
            let Ok(asol) = active_set_solve(&p, None, &ActiveSetOptions::default()) else {
                continue; // dependent random rows, skip
            };
            let ip = interior_point_solve(&p).unwrap_or_else(|e| panic!("case {case}: {e}"));
            let oa = p.objective(&asol.dx);
            let oi = p.objective(&ip.dx);
            assert!(
                (oa - oi).abs() <= 1e-6 * (1.0 + oa.abs()),
                "case {case}: objectives {oa} vs {oi}"
            );
        }
    }

    #[test]
    fn contradictory_equalities_fail() {
        let p = QpProblem {
            inv_mass: vec![1.0, 1.0],
            eq_rows: vec![unit_row(0, 1.0), unit_row(0, 1.0)],
            eq_values: vec![0.0, -1.0], // x₀ = 0 and x₀ = 1
            ineq_rows: vec![],
            ineq_values: vec![],
            force_offset: vec![0.0, 0.0],
        };
        assert!(matches!(
            interior_point_solve(&p),
            Err(Error::IpNoConvergence { .. })
        ));
    }
}
