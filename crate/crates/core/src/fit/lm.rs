//! Damped Gauss-Newton (Levenberg-Marquardt) on a weighted residual vector.
//!
//! Damping starts at `initial_damping`, is multiplied by 10 after a rejected
//! step and divided by 10 after an accepted one. Bounds are enforced by
//! projecting each trial point onto the box.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fit::params::FitOptions;

/// Weighted residuals `r(x)` of a least-squares problem in its free variables.
pub(crate) trait Objective {
    fn residuals(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// Forward-difference Jacobian; implementors may override with a cheaper
    /// evaluation of the same differences.
    fn jacobian(&self, x: &[f64], r0: &[f64], steps: &[f64]) -> Result<DMatrix<f64>> {
        forward_difference(x, r0, steps, |xp| self.residuals(xp))
    }
}

pub(crate) fn forward_difference(
    x: &[f64],
    r0: &[f64],
    steps: &[f64],
    mut f: impl FnMut(&[f64]) -> Result<Vec<f64>>,
) -> Result<DMatrix<f64>> {
    let mut jac = DMatrix::zeros(r0.len(), x.len());
    let mut xp = x.to_vec();
    for j in 0..x.len() {
        xp[j] = x[j] + steps[j];
        let h = xp[j] - x[j];
        let rp = f(&xp)?;
        for i in 0..r0.len() {
            jac[(i, j)] = (rp[i] - r0[i]) / h;
        }
        xp[j] = x[j];
    }
    Ok(jac)
}

pub(crate) struct Outcome {
    pub x: Vec<f64>,
    pub residuals: Vec<f64>,
    pub jacobian: DMatrix<f64>,
    pub chi_square: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn chi2(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Relative forward step on `max(|x|, scale)`, flipped backward when it
/// would leave the box.
pub(crate) fn jacobian_steps(x: &[f64], lo: &[f64], hi: &[f64], scales: &[f64], rel: f64) -> Vec<f64> {
    x.iter()
        .zip(lo.iter().zip(hi))
        .zip(scales)
        .map(|((&v, (&l, &h)), &s)| {
            let size = v.abs().max(s);
            let step = if size > 0.0 { rel * size } else { rel };
            if v + step > h && v - step >= l {
                -step
            } else {
                step
            }
        })
        .collect()
}

/// Checks the column-scaled Jacobian for rank deficiency and names the
/// offending combination of parameters.
pub(crate) fn check_rank(jac: &DMatrix<f64>, names: &[String], tol: f64) -> Result<()> {
    let p = jac.ncols();
    if p == 0 {
        return Ok(());
    }
    let norms: Vec<f64> = (0..p).map(|j| jac.column(j).norm()).collect();
    if let Some(j) = norms.iter().position(|n| *n == 0.0 || !n.is_finite()) {
        return Err(Error::RankDeficient { combination: format!("{} (model does not depend on it)", names[j]) });
    }
    if jac.nrows() < p {
        return Err(Error::RankDeficient {
            combination: format!("{} parameters but only {} residuals", p, jac.nrows()),
        });
    }
    let mut scaled = jac.clone();
    for (j, n) in norms.iter().enumerate() {
        scaled.column_mut(j).scale_mut(1.0 / n);
    }
    let svd = scaled.svd(false, true);
    let s = &svd.singular_values;
    let (imin, smin) = s.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).map(|(i, v)| (i, *v)).unwrap();
    let smax = s.max();
    if smin <= tol * smax {
        let v_t = svd.v_t.as_ref().expect("requested V^T");
        let row = v_t.row(imin);
        let terms: Vec<String> =
            (0..p).filter(|&j| row[j].abs() > 0.1).map(|j| format!("{:+.3}*{}", row[j], names[j])).collect();
        return Err(Error::RankDeficient { combination: terms.join(" ") });
    }
    Ok(())
}

/// `(J^T J)^-1` via SVD; zero matrix if it cannot be inverted.
pub(crate) fn inverse_normal_matrix(jac: &DMatrix<f64>) -> DMatrix<f64> {
    let p = jac.ncols();
    let a = jac.transpose() * jac;
    match a.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => a.pseudo_inverse(1e-300).unwrap_or_else(|_| DMatrix::zeros(p, p)),
    }
}

pub(crate) fn minimize(
    obj: &impl Objective,
    x0: Vec<f64>,
    lo: &[f64],
    hi: &[f64],
    scales: &[f64],
    names: &[String],
    opts: &FitOptions,
) -> Result<Outcome> {
    let project = |x: &mut [f64]| {
        for ((v, l), h) in x.iter_mut().zip(lo).zip(hi) {
            *v = v.clamp(*l, *h);
        }
    };
    let mut x = x0;
    let mut r = obj.residuals(&x)?;
    if r.is_empty() {
        return Err(Error::Data("no residuals to fit".into()));
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("model produced non-finite values at the initial parameters".into()));
    }
    let mut c = chi2(&r);
    let mut jac = obj.jacobian(&x, &r, &jacobian_steps(&x, lo, hi, scales, opts.jacobian_rel_step))?;
    check_rank(&jac, names, opts.rank_tol)?;
    let mut lambda = opts.initial_damping;
    let mut iterations = 0;
    let mut converged = x.is_empty() || c == 0.0;

    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        let jt = jac.transpose();
        let a = &jt * &jac;
        let g = &jt * DVector::from_column_slice(&r);
        let diag: Vec<f64> = (0..a.nrows()).map(|i| a[(i, i)].max(1e-300)).collect();
        // Parameters resting on a bound with the descent direction pointing
        // out of the box are held for this iteration.
        let held: Vec<bool> =
            (0..x.len()).map(|i| (x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0)).collect();
        let mut accepted = None;
        while lambda < 1e16 {
            let mut damped = a.clone();
            for (i, d) in diag.iter().enumerate() {
                damped[(i, i)] += lambda * d;
            }
            let mut rhs = -&g;
            for i in (0..x.len()).filter(|&i| held[i]) {
                damped.row_mut(i).fill(0.0);
                damped.column_mut(i).fill(0.0);
                damped[(i, i)] = 1.0;
                rhs[i] = 0.0;
            }
            let delta = match damped.clone().cholesky() {
                Some(ch) => ch.solve(&rhs),
                None => match damped.lu().solve(&rhs) {
                    Some(d) => d,
                    None => {
                        lambda *= 10.0;
                        continue;
                    }
                },
            };
            let mut trial: Vec<f64> = x.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
            project(&mut trial);
            match obj.residuals(&trial) {
                Ok(rt) if rt.iter().all(|v| v.is_finite()) && chi2(&rt) <= c => {
                    accepted = Some((trial, rt));
                    break;
                }
                _ => lambda *= 10.0,
            }
        }
        let Some((trial, rt)) = accepted else {
            // No descent direction left at machine precision.
            converged = true;
            break;
        };
        let ct = chi2(&rt);
        let step_norm = trial.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let x_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let rel_change = if c > 0.0 { (c - ct) / c } else { 0.0 };
        x = trial;
        r = rt;
        c = ct;
        lambda = (lambda / 10.0).max(1e-12);
        jac = obj.jacobian(&x, &r, &jacobian_steps(&x, lo, hi, scales, opts.jacobian_rel_step))?;
        if c == 0.0 || rel_change < opts.rel_chi2_tol || step_norm <= opts.step_tol * (x_norm + opts.step_tol) {
            converged = true;
        }
    }
    Ok(Outcome { x, residuals: r, jacobian: jac, chi_square: c, iterations, converged })
}
