//! Damped least squares with shared and per-dataset parameters.

mod lm;
mod params;

use nalgebra::DMatrix;

pub use params::{index_of, parameter_uncertainties, FitOptions, FitResult, FittedParameter, Parameter, Role};

use crate::error::{Error, Result};
use crate::spectrum::SpectrumScan;
use lm::Objective;

/// A model `y(x; p)` evaluated on a whole grid. `params` holds every
/// parameter value (free and fixed) in declaration order.
pub trait Model {
    fn eval(&self, params: &[f64], x: &[f64]) -> Result<Vec<f64>>;
}

impl<F> Model for F
where
    F: Fn(&[f64], &[f64]) -> Result<Vec<f64>>,
{
    fn eval(&self, params: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        self(params, x)
    }
}

/// Wraps a scalar `f(p, x)` as a [`Model`].
pub fn pointwise<F: Fn(&[f64], f64) -> f64>(f: F) -> impl Model {
    move |p: &[f64], x: &[f64]| Ok(x.iter().map(|&xi| f(p, xi)).collect())
}

/// Line shape shared by several datasets; each dataset is fitted as
/// `scale[k] * shape + offset[k]`.
pub trait ModelFamily {
    fn shape(&self, params: &[f64], dataset: usize, x: &[f64]) -> Result<Vec<f64>>;

    /// Whether parameter `param` can change the shape of `dataset`.
    /// Returning `true` is always safe; `false` skips needless evaluations.
    fn depends_on(&self, _param: usize, _dataset: usize) -> bool {
        true
    }
}

fn check_params(params: &[Parameter], n_datasets: usize) -> Result<()> {
    for (i, p) in params.iter().enumerate() {
        p.validate()?;
        if let Role::Local(k) = p.role {
            if k >= n_datasets {
                return Err(Error::Data(format!("parameter `{}` refers to missing dataset {k}", p.name)));
            }
        }
        if params[..i].iter().any(|q| q.name == p.name) {
            return Err(Error::Data(format!("duplicate parameter name `{}`", p.name)));
        }
    }
    Ok(())
}

fn check_scan(scan: &SpectrumScan) -> Result<()> {
    scan.validate()?;
    if scan.is_empty() {
        return Err(Error::Data("dataset is empty".into()));
    }
    Ok(())
}

struct Layout {
    free: Vec<usize>,
    base: Vec<f64>,
}

impl Layout {
    fn new(params: &[Parameter]) -> Self {
        Self {
            free: (0..params.len()).filter(|&i| params[i].is_free()).collect(),
            base: params.iter().map(|p| p.value).collect(),
        }
    }

    fn expand(&self, x: &[f64]) -> Vec<f64> {
        let mut full = self.base.clone();
        for (&i, &v) in self.free.iter().zip(x) {
            full[i] = v;
        }
        full
    }

    fn pick<T>(&self, all: impl Fn(usize) -> T) -> Vec<T> {
        self.free.iter().map(|&i| all(i)).collect()
    }
}

fn weighted(scan: &SpectrumScan, model: &[f64], out: &mut Vec<f64>) -> Result<()> {
    if model.len() != scan.len() {
        return Err(Error::Data(format!("model returned {} values for {} points", model.len(), scan.len())));
    }
    out.extend(model.iter().enumerate().map(|(i, m)| (scan.signal[i] - m) / scan.sigma_at(i)));
    Ok(())
}

fn assemble(
    params: &[Parameter],
    layout: &Layout,
    outcome: lm::Outcome,
    models: Vec<Vec<f64>>,
    scans: &[&SpectrumScan],
) -> FitResult {
    let n_res = outcome.residuals.len();
    let n_free = layout.free.len();
    let dof = n_res.saturating_sub(n_free);
    let inv = lm::inverse_normal_matrix(&outcome.jacobian);
    let s2 = if dof > 0 { outcome.chi_square / dof as f64 } else { outcome.chi_square };
    let cov_free = inv * s2;
    let full = layout.expand(&outcome.x);
    let n = params.len();
    let mut covariance = vec![vec![0.0; n]; n];
    for (a, &i) in layout.free.iter().enumerate() {
        for (b, &j) in layout.free.iter().enumerate() {
            covariance[i][j] = cov_free[(a, b)];
        }
    }
    let parameters = params
        .iter()
        .enumerate()
        .map(|(i, p)| FittedParameter {
            name: p.name.clone(),
            value: full[i],
            sigma: covariance[i][i].max(0.0).sqrt(),
            role: p.role,
        })
        .collect();
    let residuals =
        models.iter().zip(scans).map(|(m, s)| s.signal.iter().zip(m).map(|(y, v)| y - v).collect()).collect();
    FitResult {
        parameters,
        chi_square: outcome.chi_square,
        dof,
        model: models,
        residuals,
        converged: outcome.converged,
        iterations: outcome.iterations,
        covariance,
    }
}

struct Single<'a, M: Model> {
    model: &'a M,
    scan: &'a SpectrumScan,
    layout: &'a Layout,
}

impl<M: Model> Objective for Single<'_, M> {
    fn residuals(&self, x: &[f64]) -> Result<Vec<f64>> {
        let y = self.model.eval(&self.layout.expand(x), &self.scan.detuning_mhz)?;
        let mut r = Vec::with_capacity(self.scan.len());
        weighted(self.scan, &y, &mut r)?;
        Ok(r)
    }
}

/// Fits `model` to one dataset, weighting residuals by the scan's sigma
/// (unit weights when absent).
pub fn least_squares(
    model: &impl Model,
    data: &SpectrumScan,
    params: &[Parameter],
    opts: &FitOptions,
) -> Result<FitResult> {
    check_scan(data)?;
    check_params(params, 1)?;
    let layout = Layout::new(params);
    let obj = Single { model, scan: data, layout: &layout };
    let names = layout.pick(|i| params[i].name.clone());
    let outcome = lm::minimize(
        &obj,
        layout.pick(|i| params[i].value),
        &layout.pick(|i| params[i].lo),
        &layout.pick(|i| params[i].hi),
        &layout.pick(|i| params[i].step_scale()),
        &names,
        opts,
    )?;
    let y = model.eval(&layout.expand(&outcome.x), &data.detuning_mhz)?;
    Ok(assemble(params, &layout, outcome, vec![y], &[data]))
}

struct Global<'a, F: ModelFamily> {
    family: &'a F,
    scans: &'a [&'a SpectrumScan],
    layout: &'a Layout,
    /// Number of shape parameters; scale/offset pairs follow them.
    n_shape: usize,
    roles: Vec<Role>,
}

impl<F: ModelFamily> Global<'_, F> {
    fn shapes(&self, full: &[f64]) -> Result<Vec<Vec<f64>>> {
        let shape_params = &full[..self.n_shape];
        self.scans.iter().enumerate().map(|(k, s)| self.family.shape(shape_params, k, &s.detuning_mhz)).collect()
    }

    fn models(&self, full: &[f64], shapes: &[Vec<f64>]) -> Vec<Vec<f64>> {
        shapes
            .iter()
            .enumerate()
            .map(|(k, sh)| {
                let (a, b) = (full[self.n_shape + 2 * k], full[self.n_shape + 2 * k + 1]);
                sh.iter().map(|v| a * v + b).collect()
            })
            .collect()
    }

    fn offsets(&self) -> Vec<usize> {
        let mut start = vec![0];
        for s in self.scans {
            start.push(start.last().unwrap() + s.len());
        }
        start
    }
}

impl<F: ModelFamily> Objective for Global<'_, F> {
    fn residuals(&self, x: &[f64]) -> Result<Vec<f64>> {
        let full = self.layout.expand(x);
        let shapes = self.shapes(&full)?;
        let models = self.models(&full, &shapes);
        let mut r = Vec::new();
        for (s, m) in self.scans.iter().zip(&models) {
            weighted(s, m, &mut r)?;
        }
        Ok(r)
    }

    // Scale and offset enter linearly, so their columns are exact from the
    // cached shapes; a shape parameter only re-evaluates the datasets it
    // touches.
    fn jacobian(&self, x: &[f64], r0: &[f64], steps: &[f64]) -> Result<DMatrix<f64>> {
        let full = self.layout.expand(x);
        let shapes = self.shapes(&full)?;
        let starts = self.offsets();
        let mut jac = DMatrix::zeros(r0.len(), x.len());
        for (col, &pi) in self.layout.free.iter().enumerate() {
            if pi >= self.n_shape {
                let k = (pi - self.n_shape) / 2;
                let is_scale = (pi - self.n_shape).is_multiple_of(2);
                for (i, v) in shapes[k].iter().enumerate() {
                    let d = if is_scale { *v } else { 1.0 };
                    jac[(starts[k] + i, col)] = -d / self.scans[k].sigma_at(i);
                }
                continue;
            }
            let mut xp = full.clone();
            xp[pi] = full[pi] + steps[col];
            let h = xp[pi] - full[pi];
            let shape_params = &xp[..self.n_shape];
            for (k, s) in self.scans.iter().enumerate() {
                let applies = match self.roles[pi] {
                    Role::Local(d) => d == k,
                    _ => true,
                } && self.family.depends_on(pi, k);
                if !applies {
                    continue;
                }
                let sp = self.family.shape(shape_params, k, &s.detuning_mhz)?;
                let a = full[self.n_shape + 2 * k];
                for (i, (v1, v0)) in sp.iter().zip(&shapes[k]).enumerate() {
                    jac[(starts[k] + i, col)] = -a * (v1 - v0) / h / s.sigma_at(i);
                }
            }
        }
        Ok(jac)
    }
}

/// Weighted linear regression `y ~ a * s + b`; falls back to `a = 1` when the
/// shape is flat.
fn regress(scan: &SpectrumScan, shape: &[f64]) -> (f64, f64) {
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, (&s, &y)) in shape.iter().zip(&scan.signal).enumerate() {
        let w = scan.sigma_at(i).powi(-2);
        sw += w;
        sx += w * s;
        sy += w * y;
        sxx += w * s * s;
        sxy += w * s * y;
    }
    let det = sw * sxx - sx * sx;
    if det.abs() <= 1e-12 * sw * sxx.max(f64::MIN_POSITIVE) {
        return (1.0, (sy - sx) / sw);
    }
    let a = (sw * sxy - sx * sy) / det;
    (a, (sy - a * sx) / sw)
}

/// Simultaneous fit of several datasets sharing a line-shape family. Each
/// dataset `k` gets free parameters `scale[k]` and `offset[k]`, appended
/// after `params` and initialized by linear regression at the starting
/// shape.
pub fn global_fit(
    family: &impl ModelFamily,
    datasets: &[SpectrumScan],
    params: &[Parameter],
    opts: &FitOptions,
) -> Result<FitResult> {
    if datasets.is_empty() {
        return Err(Error::Data("no datasets".into()));
    }
    for d in datasets {
        check_scan(d)?;
    }
    check_params(params, datasets.len())?;
    let scans: Vec<&SpectrumScan> = datasets.iter().collect();
    let start: Vec<f64> = params.iter().map(|p| p.value).collect();
    let mut all = params.to_vec();
    for (k, d) in datasets.iter().enumerate() {
        let shape = family.shape(&start, k, &d.detuning_mhz)?;
        let (a, b) = regress(d, &shape);
        all.push(Parameter::new(format!("scale[{k}]"), a).local(k));
        all.push(Parameter::new(format!("offset[{k}]"), b).local(k));
    }
    check_params(&all, datasets.len())?;
    let layout = Layout::new(&all);
    let roles: Vec<Role> = all.iter().map(|p| p.role).collect();
    let obj = Global { family, scans: &scans, layout: &layout, n_shape: params.len(), roles };
    let names = layout.pick(|i| all[i].name.clone());
    let outcome = lm::minimize(
        &obj,
        layout.pick(|i| all[i].value),
        &layout.pick(|i| all[i].lo),
        &layout.pick(|i| all[i].hi),
        &layout.pick(|i| all[i].step_scale()),
        &names,
        opts,
    )?;
    let full = layout.expand(&outcome.x);
    let shapes = obj.shapes(&full)?;
    let models = obj.models(&full, &shapes);
    Ok(assemble(&all, &layout, outcome, models, &scans))
}
