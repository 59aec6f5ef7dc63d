use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lineshape::lorentzian_peak_normalized;
use crate::rate::scheme::{LevelScheme, MAX_LEVELS};

/// Rates above this (1/us) would force sub-picosecond steps.
pub const MAX_RATE_PER_US: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriveRole {
    Pump,
    Probe,
}

/// One laser. `power` is in units of the saturation power, so `power = 1`
/// drives a resonant transition at the saturation rate `1/(2 tau)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveField {
    pub detuning_mhz: f64,
    pub power: f64,
    pub role: DriveRole,
}

impl DriveField {
    pub fn new(role: DriveRole, detuning_mhz: f64, power: f64) -> Result<Self> {
        if !(power >= 0.0) || !power.is_finite() {
            return Err(Error::param("power", format!("must be non-negative, got {power}")));
        }
        if !detuning_mhz.is_finite() {
            return Err(Error::param("detuning", "must be finite"));
        }
        Ok(Self { detuning_mhz, power, role })
    }

    pub fn pump(detuning_mhz: f64, power: f64) -> Result<Self> {
        Self::new(DriveRole::Pump, detuning_mhz, power)
    }

    pub fn probe(detuning_mhz: f64, power: f64) -> Result<Self> {
        Self::new(DriveRole::Probe, detuning_mhz, power)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Populations {
    pub values: Vec<f64>,
    /// Set when the rate matrix was singular (nothing driven) and the
    /// degeneracy-weighted ground distribution was returned instead.
    pub undriven: bool,
}

impl Populations {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values, undriven: false }
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn excited(&self, scheme: &LevelScheme) -> f64 {
        self.values.iter().enumerate().filter(|(i, _)| scheme.is_excited(*i)).map(|(_, v)| v).sum()
    }

    pub fn validate(&self, n_levels: usize) -> Result<()> {
        if self.values.len() != n_levels {
            return Err(Error::Data(format!("{} populations for {n_levels} levels", self.values.len())));
        }
        if self.values.iter().any(|v| *v < -1e-10 || !v.is_finite()) {
            return Err(Error::Data("populations must be non-negative".into()));
        }
        if (self.total() - 1.0).abs() > 1e-9 {
            return Err(Error::Data(format!("populations sum to {}, expected 1", self.total())));
        }
        Ok(())
    }
}

/// `dN/dt = M N` on the stack. Column sums of `M` vanish.
#[derive(Debug, Clone, Copy)]
pub struct RateMatrix {
    n: usize,
    m: [[f64; MAX_LEVELS]; MAX_LEVELS],
}

impl RateMatrix {
    pub fn zeros(n: usize) -> Self {
        assert!(n <= MAX_LEVELS);
        Self { n, m: [[0.0; MAX_LEVELS]; MAX_LEVELS] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.m[row][col]
    }

    /// Adds a transfer `from -> to` at `rate`.
    #[inline]
    pub fn add_transfer(&mut self, from: usize, to: usize, rate: f64) {
        self.m[to][from] += rate;
        self.m[from][from] -= rate;
    }

    pub fn max_outflow(&self) -> f64 {
        (0..self.n).map(|i| -self.m[i][i]).fold(0.0, f64::max)
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.m[i][j] * x[j]).sum()).collect()
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.m[i][j])
    }

    /// Solves `M N = 0` with `sum N = 1`. Returns `None` if the system is singular.
    pub fn steady_state(&self, out: &mut [f64; MAX_LEVELS]) -> Option<()> {
        let n = self.n;
        let mut a = self.m;
        let mut b = [0.0; MAX_LEVELS];
        let scale = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| a[i][j].abs()).fold(1.0, f64::max);
        // Replace the first balance row by the closure condition.
        a[0][..n].fill(1.0);
        b[0] = 1.0;
        for col in 0..n {
            let pivot = (col..n).max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))?;
            if a[pivot][col].abs() <= 1e-14 * scale {
                return None;
            }
            a.swap(col, pivot);
            b.swap(col, pivot);
            let inv = 1.0 / a[col][col];
            for row in (col + 1)..n {
                let factor = a[row][col] * inv;
                if factor != 0.0 {
                    let pivot_row = a[col];
                    for (x, p) in a[row][col..n].iter_mut().zip(&pivot_row[col..n]) {
                        *x -= factor * p;
                    }
                    b[row] -= factor * b[col];
                }
            }
        }
        for row in (0..n).rev() {
            let mut acc = b[row];
            for k in (row + 1)..n {
                acc -= a[row][k] * out[k];
            }
            out[row] = acc / a[row][row];
        }
        Some(())
    }
}

/// Assembles the rate matrix for `scheme` under `drives` for the sub-ensemble
/// at `f_inhom` MHz. `ground_relaxation` (1/us) adds exchange between ground
/// levels toward the degeneracy-weighted distribution.
pub fn rate_matrix(scheme: &LevelScheme, drives: &[DriveField], f_inhom: f64, ground_relaxation: f64) -> RateMatrix {
    let mut m = RateMatrix::zeros(scheme.n_levels());
    let levels = scheme.levels();
    let w_sat = scheme.saturation_rate();
    let fwhm = scheme.homogeneous_fwhm_mhz();
    for t in scheme.transitions() {
        let freq = scheme.transition_frequency(t, f_inhom);
        let mut up = 0.0;
        for d in drives {
            if d.power > 0.0 {
                up += d.power * w_sat * lorentzian_peak_normalized(d.detuning_mhz - freq, fwhm);
            }
        }
        // W_down = (n_ground / n_excited) W_up
        let down = up * levels[t.ground].degeneracy as f64 / levels[t.excited].degeneracy as f64;
        m.add_transfer(t.ground, t.excited, up);
        m.add_transfer(t.excited, t.ground, down + t.decay_rate);
    }
    if ground_relaxation > 0.0 {
        let grounds: Vec<usize> = scheme.ground_indices().collect();
        let total: f64 = grounds.iter().map(|&g| levels[g].degeneracy as f64).sum();
        for &from in &grounds {
            for &to in &grounds {
                if from != to {
                    m.add_transfer(from, to, ground_relaxation * levels[to].degeneracy as f64 / total);
                }
            }
        }
    }
    m
}

/// Steady-state populations of `scheme` for the sub-ensemble at `f_inhom`.
pub fn steady_state(scheme: &LevelScheme, drives: &[DriveField], f_inhom: f64) -> Result<Populations> {
    if drives.is_empty() {
        return Err(Error::param("drives", "at least one drive is required"));
    }
    let m = rate_matrix(scheme, drives, f_inhom, 0.0);
    let mut out = [0.0; MAX_LEVELS];
    Ok(match m.steady_state(&mut out) {
        Some(()) => Populations::new(out[..scheme.n_levels()].to_vec()),
        None => Populations { values: scheme.degeneracy_equilibrium(), undriven: true },
    })
}

/// Total steady excited population without allocating; undriven systems give 0.
#[inline]
pub(crate) fn steady_excited(scheme: &LevelScheme, drives: &[DriveField], f_inhom: f64) -> f64 {
    if let Some(e) = scheme.sole_excited() {
        return star_excited(scheme, e, drives, f_inhom);
    }
    let m = rate_matrix(scheme, drives, f_inhom, 0.0);
    let mut out = [0.0; MAX_LEVELS];
    match m.steady_state(&mut out) {
        Some(()) => (0..scheme.n_levels()).filter(|&i| scheme.is_excited(i)).map(|i| out[i]).sum(),
        None => 0.0,
    }
}

/// Schemes with a single excited level: each ground level exchanges only
/// with it, so `u_g N_g = d_g N_e` and `N_e = 1 / (1 + sum d_g / u_g)`.
fn star_excited(scheme: &LevelScheme, excited: usize, drives: &[DriveField], f_inhom: f64) -> f64 {
    let levels = scheme.levels();
    let w_sat = scheme.saturation_rate();
    let fwhm = scheme.homogeneous_fwhm_mhz();
    let mut up = [0.0; MAX_LEVELS];
    let mut down = [0.0; MAX_LEVELS];
    for t in scheme.transitions() {
        let freq = scheme.transition_frequency(t, f_inhom);
        let mut u = 0.0;
        for d in drives {
            if d.power > 0.0 {
                u += d.power * w_sat * lorentzian_peak_normalized(d.detuning_mhz - freq, fwhm);
            }
        }
        up[t.ground] += u;
        down[t.ground] += u * levels[t.ground].degeneracy as f64 / levels[excited].degeneracy as f64 + t.decay_rate;
    }
    let mut ratio = 0.0;
    for g in scheme.ground_indices() {
        if up[g] > 0.0 {
            ratio += down[g] / up[g];
        } else if down[g] > 0.0 {
            // a dark ground level collects everything
            return 0.0;
        }
    }
    if ratio == 0.0 {
        0.0
    } else {
        1.0 / (1.0 + ratio)
    }
}

/// Fixed-step RK4 propagator for a constant rate matrix.
///
/// For a linear autonomous system one RK4 step is the matrix
/// `P = I + hM + (hM)^2/2 + (hM)^3/6 + (hM)^4/24`, so `n` steps are `P^n`,
/// evaluated by repeated squaring.
#[derive(Debug, Clone)]
pub struct Propagator {
    step: DMatrix<f64>,
    step_size: f64,
}

impl Propagator {
    /// Largest allowed step: `min(0.01/omega, 0.01/W_max)`.
    pub fn max_step(m: &RateMatrix, decay_rate: f64) -> Result<f64> {
        let max_rate = m.max_outflow().max(decay_rate);
        if max_rate > MAX_RATE_PER_US {
            return Err(Error::StepUnderflow { max_rate });
        }
        Ok(0.01 / max_rate)
    }

    pub fn new(m: &RateMatrix, step_size: f64) -> Self {
        let hm = m.to_dmatrix() * step_size;
        let n = m.dim();
        let mut p = DMatrix::identity(n, n);
        let mut term = DMatrix::identity(n, n);
        for k in 1..=4 {
            term = &term * &hm / k as f64;
            p += &term;
        }
        Self { step: p, step_size }
    }

    pub fn step_size(&self) -> f64 {
        self.step_size
    }

    /// Advances `state` by `n_steps` RK4 steps.
    pub fn advance(&self, state: &DVector<f64>, mut n_steps: u64) -> DVector<f64> {
        let mut result = state.clone();
        let mut power = self.step.clone();
        while n_steps > 0 {
            if n_steps & 1 == 1 {
                result = &power * result;
            }
            n_steps >>= 1;
            if n_steps > 0 {
                power = &power * &power;
            }
        }
        result
    }

    /// Propagator over an interval of `n_steps` steps.
    pub fn compose(&self, mut n_steps: u64) -> Self {
        let n = self.step.nrows();
        let mut acc = DMatrix::identity(n, n);
        let mut power = self.step.clone();
        let total = self.step_size * n_steps as f64;
        while n_steps > 0 {
            if n_steps & 1 == 1 {
                acc = &power * acc;
            }
            n_steps >>= 1;
            if n_steps > 0 {
                power = &power * &power;
            }
        }
        Self { step: acc, step_size: total }
    }

    pub fn apply(&self, state: &DVector<f64>) -> DVector<f64> {
        &self.step * state
    }
}

/// Propagator covering exactly `duration` us with RK4 substeps no larger than
/// the stability limit.
pub fn interval_propagator(m: &RateMatrix, decay_rate: f64, duration: f64) -> Result<Propagator> {
    let h_max = Propagator::max_step(m, decay_rate)?;
    let n_steps = (duration / h_max).ceil().max(1.0);
    if n_steps > 1e18 {
        return Err(Error::StepUnderflow { max_rate: m.max_outflow() });
    }
    let base = Propagator::new(m, duration / n_steps);
    Ok(base.compose(n_steps as u64))
}

/// Integrates the rate equations from `init` for `t_us` microseconds.
pub fn time_evolve(
    scheme: &LevelScheme,
    drives: &[DriveField],
    f_inhom: f64,
    init: &Populations,
    t_us: f64,
) -> Result<Populations> {
    init.validate(scheme.n_levels())?;
    if !(t_us >= 0.0) || !t_us.is_finite() {
        return Err(Error::param("t", format!("must be non-negative, got {t_us}")));
    }
    if t_us == 0.0 {
        return Ok(init.clone());
    }
    let m = rate_matrix(scheme, drives, f_inhom, 0.0);
    let p = interval_propagator(&m, scheme.decay_rate(), t_us)?;
    let out = p.apply(&DVector::from_column_slice(&init.values));
    Ok(Populations::new(out.iter().copied().collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lineshape::ZeemanConfig;
    use crate::rate::scheme::{build_four_level, build_three_level};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Independent explicit-Euler-free oracle: classical RK4 on the ODE
    /// written out from the transition list, stepping in plain vectors.
    fn rk4_oracle(scheme: &LevelScheme, drives: &[DriveField], f: f64, init: &[f64], t: f64, h: f64) -> Vec<f64> {
        let deriv = |n: &[f64]| -> Vec<f64> {
            let mut d = vec![0.0; n.len()];
            let lv = scheme.levels();
            for tr in scheme.transitions() {
                let freq = f + lv[tr.excited].offset_mhz - lv[tr.ground].offset_mhz;
                let up: f64 = drives
                    .iter()
                    .map(|dr| {
                        let x = 2.0 * (dr.detuning_mhz - freq) / scheme.homogeneous_fwhm_mhz();
                        dr.power * 0.5 / scheme.excited_lifetime_us() / (1.0 + x * x)
                    })
                    .sum();
                let down = up * lv[tr.ground].degeneracy as f64 / lv[tr.excited].degeneracy as f64;
                let flow = up * n[tr.ground] - (down + tr.decay_rate) * n[tr.excited];
                d[tr.excited] += flow;
                d[tr.ground] -= flow;
            }
            d
        };
        let steps = (t / h).ceil() as usize;
        let h = t / steps as f64;
        let mut n = init.to_vec();
        for _ in 0..steps {
            let k1 = deriv(&n);
            let y2: Vec<f64> = n.iter().zip(&k1).map(|(a, k)| a + 0.5 * h * k).collect();
            let k2 = deriv(&y2);
            let y3: Vec<f64> = n.iter().zip(&k2).map(|(a, k)| a + 0.5 * h * k).collect();
            let k3 = deriv(&y3);
            let y4: Vec<f64> = n.iter().zip(&k3).map(|(a, k)| a + h * k).collect();
            let k4 = deriv(&y4);
            for i in 0..n.len() {
                n[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        n
    }

    fn residual_ok(scheme: &LevelScheme, drives: &[DriveField], f: f64, pops: &Populations) -> bool {
        let m = rate_matrix(scheme, drives, f, 0.0);
        m.apply(&pops.values).iter().all(|r| r.abs() < 1e-9)
    }

    #[test]
    fn single_transition_driven_hyperpolarizes() {
        let s = build_three_level((1, 4, 3), 3848.0, 0.69, 0.94).unwrap();
        // pump resonant with ground 1 -> excited at f_inhom = 0
        let freq = s.transition_frequency(&s.transitions()[0], 0.0);
        let p = steady_state(&s, &[DriveField::pump(freq, 1.0).unwrap()], 0.0).unwrap();
        assert!(p.values[1] < 1e-4, "{:?}", p.values);
        assert!(p.values[2] > 1.0 - 1e-4, "{:?}", p.values);
        assert!(residual_ok(&s, &[DriveField::pump(freq, 1.0).unwrap()], 0.0, &p));
    }

    #[test]
    fn strong_drive_on_both_transitions_saturates_at_half() {
        let s = build_three_level((1, 2, 1), 0.0, 0.69, 0.94).unwrap();
        let drives = [DriveField::pump(0.0, 1e4).unwrap()];
        let p = steady_state(&s, &drives, 0.0).unwrap();
        let oracle = rk4_oracle(&s, &drives, 0.0, &[0.5, 0.0, 0.5], 30.0, 1e-5);
        assert!((oracle[1] - 0.5).abs() < 1e-3, "oracle {oracle:?}");
        assert!((p.values[1] - oracle[1]).abs() < 1e-8, "{:?} vs {oracle:?}", p.values);
        let limit = steady_state(&s, &[DriveField::pump(0.0, 1e9).unwrap()], 0.0).unwrap();
        assert!((limit.values[1] - 0.5).abs() < 1e-8, "{:?}", limit.values);
    }

    #[test]
    fn undriven_four_level_falls_back_to_degeneracy_weights() {
        let z = ZeemanConfig::new(2.005, 0.91, 213.8).unwrap();
        let s = build_four_level(&z, 600.0, 0.94).unwrap();
        let p = steady_state(&s, &[DriveField::probe(0.0, 0.0).unwrap()], 0.0).unwrap();
        assert!(p.undriven);
        assert_eq!(p.values, vec![0.5, 0.0, 0.5, 0.0]);
        assert!(steady_state(&s, &[], 0.0).is_err());
    }

    #[test]
    fn time_zero_returns_init() {
        let s = build_three_level((1, 4, 3), 3.848, 0.69, 0.94).unwrap();
        let init = Populations::new(vec![0.2, 0.3, 0.5]);
        let out = time_evolve(&s, &[DriveField::pump(0.0, 1.0).unwrap()], 0.0, &init, 0.0).unwrap();
        assert_eq!(out, init);
    }

    #[test]
    fn free_decay_is_single_exponential() {
        let s = build_three_level((1, 4, 3), 3.848, 0.69, 0.94).unwrap();
        let init = Populations::new(vec![0.0, 1.0, 0.0]);
        let drives = [DriveField::pump(0.0, 0.0).unwrap()];
        let t = 1.3;
        let out = time_evolve(&s, &drives, 0.0, &init, t).unwrap();
        let excited = (-t / 0.94f64).exp();
        assert_relative_eq!(out.values[1], excited, max_relative = 1e-9);
        // ground levels fill in proportion to branching 1:3
        assert_relative_eq!(out.values[0], 0.25 * (1.0 - excited), max_relative = 1e-9);
        assert_relative_eq!(out.values[2], 0.75 * (1.0 - excited), max_relative = 1e-9);
    }

    #[test]
    fn propagator_matches_stepwise_rk4() {
        let s = build_three_level((1, 4, 3), 3.848, 0.69, 0.94).unwrap();
        let drives = [DriveField::pump(1.0, 2.0).unwrap(), DriveField::probe(-2.0, 0.3).unwrap()];
        let init = [0.25, 0.0, 0.75];
        let out = time_evolve(&s, &drives, 0.3, &Populations::new(init.to_vec()), 3.0).unwrap();
        let oracle = rk4_oracle(&s, &drives, 0.3, &init, 3.0, 1e-4);
        for (a, b) in out.values.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn refuses_absurd_rates() {
        let s = build_three_level((1, 2, 1), 0.0, 0.69, 0.94).unwrap();
        let init = Populations::new(vec![0.5, 0.0, 0.5]);
        let err = time_evolve(&s, &[DriveField::pump(0.0, 1e12).unwrap()], 0.0, &init, 1.0).unwrap_err();
        assert!(matches!(err, Error::StepUnderflow { .. }));
    }

    #[test]
    fn ground_relaxation_relaxes_at_one_over_t1() {
        let s = build_three_level((1, 4, 3), 3.848, 0.69, 0.94).unwrap();
        let rate = 0.01;
        let m = rate_matrix(&s, &[], 0.0, rate);
        let p = interval_propagator(&m, s.decay_rate(), 50.0).unwrap();
        let out = p.apply(&DVector::from_vec(vec![1.0, 0.0, 0.0]));
        // deviation from 1/4 decays as exp(-rate t)
        let expected = 0.25 + 0.75 * (-rate * 50.0f64).exp();
        assert_relative_eq!(out[0], expected, max_relative = 1e-9);
    }

    fn arb_scheme() -> impl Strategy<Value = LevelScheme> {
        prop_oneof![
            (1u32..5, 1u32..5, 1u32..5, 0.0f64..20.0, 0.1f64..5.0, 0.2f64..3.0)
                .prop_map(|(a, b, c, split, fwhm, tau)| build_three_level((a, b, c), split, fwhm, tau).unwrap()),
            (0.5f64..3.0, 0.5f64..3.0, 0.0f64..1.0, 0.1f64..5.0, 0.2f64..3.0).prop_map(|(ge, gh, b, fwhm, tau)| {
                build_four_level(&ZeemanConfig::new(ge, gh, b).unwrap(), fwhm, tau).unwrap()
            }),
        ]
    }

    fn arb_drives() -> impl Strategy<Value = Vec<DriveField>> {
        prop::collection::vec((-10.0f64..10.0, 0.01f64..20.0), 1..3)
            .prop_map(|v| v.into_iter().map(|(d, p)| DriveField::pump(d, p).unwrap()).collect())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn steady_state_satisfies_balance(s in arb_scheme(), d in arb_drives(), f in -5.0f64..5.0) {
            let p = steady_state(&s, &d, f).unwrap();
            prop_assert!(!p.undriven);
            prop_assert!(residual_ok(&s, &d, f, &p));
            prop_assert!((p.total() - 1.0).abs() < 1e-9);
            prop_assert!(p.values.iter().all(|v| *v >= -1e-10));
        }

        #[test]
        fn closed_form_excited_matches_solver(s in arb_scheme(), d in arb_drives(), f in -5.0f64..5.0) {
            let full = steady_state(&s, &d, f).unwrap().excited(&s);
            prop_assert!((steady_excited(&s, &d, f) - full).abs() <= 1e-12);
        }

        #[test]
        fn doubling_degeneracies_is_invariant(s in arb_scheme(), d in arb_drives(), f in -5.0f64..5.0) {
            let a = steady_state(&s, &d, f).unwrap();
            let b = steady_state(&s.with_scaled_degeneracies(2), &d, f).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
