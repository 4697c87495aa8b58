//! Threshold-crossing delay kernel.
//!
//! Given the recent mature-concentration history `psi`, maturation progress
//! is traced back from the upper threshold by the auxiliary problem
//!
//! ```text
//! y'(s) = -g(y(s), psi(-s)),            y(0) = x2,
//! E'(s) = (d - D1 g)(y(s), psi(-s)),    E(0) = 0,
//! ```
//!
//! and the state-dependent delay `tau` is the first `s` at which `y` reaches
//! the lower threshold `x1`. The certified speed band confines `tau` to
//! `[(x2 - x1)/K_g, (x2 - x1)/eps_g]`, strictly below the horizon `h`, so a
//! history of span `h` always suffices. The accumulated exponent `E(tau)`
//! carries dilution and loss along the maturation path into the recruitment
//! functional
//!
//! ```text
//! j(phi, psi) = gamma(psi(-tau)) * g(x2, psi(0)) / g(x1, psi(-tau))
//!               * exp(E(tau)) * phi(-tau),
//! ```
//!
//! which is linear in the stem history `phi`.
//!
//! The auxiliary problem is integrated with classical fixed-step RK4
//! ([`KernelConfig::substeps_per_h`] substeps per horizon), and the crossing
//! is localized inside the final substep by bisection over partial RK4 steps
//! until the threshold residual drops below [`KernelConfig::threshold_tol`]
//! (or the bracket collapses to rounding width).

use alloc::vec::Vec;
use core::fmt;

use crate::ingredients::{IngredientSet, IngredientsError};
use crate::math;
use crate::segments::{hermite_eval, HistorySegment, SegmentError, StatePair};

/// Fixed-step configuration for the auxiliary maturation integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig {
    /// RK4 substeps per horizon length `h`.
    pub substeps_per_h: usize,
    /// Residual tolerance `|y(tau) - x1|` for the crossing localization.
    pub threshold_tol: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig { substeps_per_h: 64, threshold_tol: 1e-12 }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<(), KernelError> {
        if self.substeps_per_h < 4 {
            return Err(KernelError::InvalidConfig { what: "substeps_per_h must be at least 4" });
        }
        if !(self.threshold_tol > 0.0) || !self.threshold_tol.is_finite() {
            return Err(KernelError::InvalidConfig { what: "threshold_tol must be positive" });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelError {
    /// The maturation path never reached the lower threshold within the
    /// searchable span (the shorter of the horizon and the history span).
    NoCrossing { y_end: f64, s_end: f64 },
    /// The maturation path left the open maturity interval before crossing.
    PathEscape { y: f64, s: f64 },
    InvalidConfig { what: &'static str },
    Ingredients(IngredientsError),
    Segment(SegmentError),
}

impl fmt::Display for KernelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            KernelError::NoCrossing { y_end, s_end } => write!(
                f,
                "maturation path did not reach the lower threshold: y = {y_end} at s = {s_end}"
            ),
            KernelError::PathEscape { y, s } => {
                write!(f, "maturation path left the maturity interval: y = {y} at s = {s}")
            }
            KernelError::InvalidConfig { what } => write!(f, "invalid kernel config: {what}"),
            KernelError::Ingredients(ref e) => write!(f, "ingredient evaluation failed: {e}"),
            KernelError::Segment(ref e) => write!(f, "history evaluation failed: {e}"),
        }
    }
}

impl core::error::Error for KernelError {}

impl From<IngredientsError> for KernelError {
    fn from(e: IngredientsError) -> Self {
        KernelError::Ingredients(e)
    }
}

impl From<SegmentError> for KernelError {
    fn from(e: SegmentError) -> Self {
        KernelError::Segment(e)
    }
}

/// Sampled curve `s -> y(s)` on `[0, tau]` with cubic Hermite dense output.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampledPath {
    times: Vec<f64>,
    values: Vec<f64>,
    derivs: Vec<f64>,
}

impl SampledPath {
    fn push(&mut self, t: f64, v: f64, d: f64) {
        self.times.push(t);
        self.values.push(v);
        self.derivs.push(d);
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn derivs(&self) -> &[f64] {
        &self.derivs
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().expect("non-empty path")
    }

    /// Value and slope at `s` in `[0, end_time]` (knots are exact).
    pub fn eval(&self, s: f64) -> Result<(f64, f64), KernelError> {
        let end = self.end_time();
        let snap = 1e-11 * end.max(1.0);
        let s = if s < 0.0 && s >= -snap {
            0.0
        } else if s > end && s <= end + snap {
            end
        } else {
            s
        };
        if !(0.0..=end).contains(&s) {
            return Err(KernelError::InvalidConfig { what: "path evaluated outside [0, tau]" });
        }
        match self.times.binary_search_by(|t| t.partial_cmp(&s).expect("finite times")) {
            Ok(i) => Ok((self.values[i], self.derivs[i])),
            Err(i) => {
                let (a, b) = (i - 1, i);
                Ok(hermite_eval(
                    self.times[a],
                    self.values[a],
                    self.derivs[a],
                    self.times[b],
                    self.values[b],
                    self.derivs[b],
                    s,
                ))
            }
        }
    }
}

/// Output of [`solve_maturation`]: the delay, the accumulated exponent, and
/// the maturation path itself.
#[derive(Debug, Clone, PartialEq)]
pub struct DelaySolution {
    pub tau: f64,
    pub exponent: f64,
    pub y_path: SampledPath,
    pub substeps_used: usize,
}

/// One classical RK4 step of the coupled `(y, E)` system. `k1` is the slope
/// at the start point, supplied by the caller so partial steps taken during
/// crossing localization reuse it.
fn rk4_step(
    deriv: &impl Fn(f64, f64) -> Result<(f64, f64), KernelError>,
    s: f64,
    y: f64,
    e: f64,
    h: f64,
    k1: (f64, f64),
) -> Result<(f64, f64), KernelError> {
    let (k1y, k1e) = k1;
    let (k2y, k2e) = deriv(s + 0.5 * h, y + 0.5 * h * k1y)?;
    let (k3y, k3e) = deriv(s + 0.5 * h, y + 0.5 * h * k2y)?;
    let (k4y, k4e) = deriv(s + h, y + h * k3y)?;
    Ok((
        y + (h / 6.0) * (k1y + 2.0 * k2y + 2.0 * k3y + k4y),
        e + (h / 6.0) * (k1e + 2.0 * k2e + 2.0 * k3e + k4e),
    ))
}

/// Solve the auxiliary maturation problem for the history `psi`.
///
/// Marches `y` down from `x2` with fixed RK4 substeps until it crosses `x1`,
/// then localizes the crossing by bisection over partial RK4 steps. Errors
/// with [`KernelError::NoCrossing`] if the path stays above `x1` over the
/// searchable span, and with [`KernelError::PathEscape`] if it leaves the
/// maturity interval (possible only for inconsistent hand-built geometry).
pub fn solve_maturation(
    set: &IngredientSet,
    psi: &HistorySegment,
    cfg: &KernelConfig,
) -> Result<DelaySolution, KernelError> {
    cfg.validate()?;
    let geom = *set.geometry();
    let h_sub = geom.h / cfg.substeps_per_h as f64;
    let s_end = geom.h.min(psi.h());
    let deriv = |s: f64, y: f64| -> Result<(f64, f64), KernelError> {
        let z = psi.eval(-s)?.0;
        // A maturity-domain failure mid-stage means the path escaped.
        let map_escape = |e: IngredientsError| match e {
            IngredientsError::DomainY { .. } => KernelError::PathEscape { y, s },
            other => KernelError::Ingredients(other),
        };
        let g = set.g(y, z).map_err(map_escape)?;
        let rate = set.d(y, z).map_err(map_escape)? - set.d1g(y, z).map_err(map_escape)?;
        Ok((-g, rate))
    };

    let mut s = 0.0_f64;
    let mut y = geom.x2;
    let mut e_acc = 0.0_f64;
    let mut slope = deriv(0.0, y)?;
    let mut path = SampledPath::default();
    path.push(0.0, y, slope.0);
    let mut substeps_used = 0usize;

    loop {
        if s >= s_end {
            return Err(KernelError::NoCrossing { y_end: y, s_end });
        }
        let step = h_sub.min(s_end - s);
        let (y_new, e_new) = rk4_step(&deriv, s, y, e_acc, step, slope)?;
        substeps_used += 1;

        if y_new <= geom.x1 {
            // Crossing within (s, s + step]: bisect the partial-step map.
            let mut lo = 0.0_f64;
            let mut hi = step;
            let mut t_cross = step;
            let mut y_cross = y_new;
            let mut e_cross = e_new;
            for _ in 0..200 {
                if (y_cross - geom.x1).abs() <= cfg.threshold_tol
                    || hi - lo <= f64::EPSILON * geom.h
                {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                let (ym, em) = rk4_step(&deriv, s, y, e_acc, mid, slope)?;
                t_cross = mid;
                y_cross = ym;
                e_cross = em;
                if ym > geom.x1 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let tau = s + t_cross;
            let end_slope = deriv(tau, y_cross)?;
            path.push(tau, y_cross, end_slope.0);
            return Ok(DelaySolution { tau, exponent: e_cross, y_path: path, substeps_used });
        }

        if !(y_new > geom.j_lo && y_new < geom.j_hi) {
            return Err(KernelError::PathEscape { y: y_new, s: s + step });
        }
        let new_slope = deriv(s + step, y_new)?;
        path.push(s + step, y_new, new_slope.0);
        s += step;
        y = y_new;
        e_acc = e_new;
        slope = new_slope;
    }
}

/// Recruitment into the mature compartment: solves for the delay on `psi`
/// and evaluates the functional at the delayed stem value `phi(-tau)`.
pub fn recruitment(
    set: &IngredientSet,
    phi: &HistorySegment,
    psi: &HistorySegment,
    cfg: &KernelConfig,
) -> Result<(f64, DelaySolution), KernelError> {
    let sol = solve_maturation(set, psi, cfg)?;
    let geom = set.geometry();
    let z0 = psi.eval(0.0)?.0;
    let z_tau = psi.eval(-sol.tau)?.0;
    let coeff = set.gamma(z_tau)? * set.g(geom.x2, z0)? / set.g(geom.x1, z_tau)?
        * math::exp(sol.exponent);
    let w_tau = phi.eval(-sol.tau)?.0;
    Ok((coeff * w_tau, sol))
}

/// Right-hand side of the model at the head of a state pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldValue {
    /// Stem rate `q(v(0)) w(0)`.
    pub dw: f64,
    /// Mature rate `j(w_t, v_t) - mu v(0)`.
    pub dv: f64,
    /// State-dependent delay realized by the mature history.
    pub tau: f64,
    /// Recruitment value `j(w_t, v_t)`.
    pub j: f64,
}

/// Evaluate the full right-hand side for the current history pair.
pub fn vector_field(
    set: &IngredientSet,
    pair: &StatePair,
    cfg: &KernelConfig,
) -> Result<FieldValue, KernelError> {
    let w0 = pair.w().eval(0.0)?.0;
    let v0 = pair.v().eval(0.0)?.0;
    let (j, sol) = recruitment(set, pair.w(), pair.v(), cfg)?;
    Ok(FieldValue {
        dw: set.q(v0)? * w0,
        dv: j - set.params().mu * v0,
        tau: sol.tau,
        j,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingredients::{
        derive_geometry, Func1, Geometry, GridPlan, LossField, MaturationSpec, StemParams, X1Spec,
    };

    fn persistence_params() -> StemParams {
        StemParams::new(0.8, 1.0, 0.3, 1.0, 0.0, 1.0).unwrap()
    }

    fn unit_set(x1: f64) -> IngredientSet {
        let params = persistence_params();
        let spec = MaturationSpec::unit(LossField::zero());
        let grid = GridPlan::auto(&params, &spec);
        let geom =
            derive_geometry(&params, &spec, 1.0, 0.5, (0.0, 2.0), &grid, X1Spec::Given(x1))
                .unwrap();
        IngredientSet::new(params, spec, geom).unwrap()
    }

    /// Hill speed with y-dependent coefficients plus a regulated loss field;
    /// exercises every term of the auxiliary system.
    fn wiggly_set() -> IngredientSet {
        let params = persistence_params();
        let spec = MaturationSpec::hill(
            Func1::constant(0.3),
            Func1::new(|y| 1.0 + 0.1 * y, |_| 0.1),
            1.0,
            LossField {
                a_d: Func1::new(|y| 0.1 + 0.02 * y, |_| 0.02),
                mu_d: Func1::constant(0.03),
                k_d: 0.5,
            },
        );
        let grid = GridPlan::auto(&params, &spec);
        let geom =
            derive_geometry(&params, &spec, 1.0, 0.5, (0.0, 2.0), &grid, X1Spec::Given(0.9))
                .unwrap();
        IngredientSet::new(params, spec, geom).unwrap()
    }

    fn wiggly_history(h: f64) -> HistorySegment {
        HistorySegment::from_function(
            |t| 0.5 + 0.3 * (2.0 * t + 0.7).sin(),
            |t| 0.6 * (2.0 * t + 0.7).cos(),
            h,
            33,
        )
        .unwrap()
    }

    #[test]
    fn unit_speed_delay_and_exponent_are_exact() {
        let set = unit_set(0.8);
        let cfg = KernelConfig::default();
        for psi in [
            HistorySegment::constant(0.7, set.geometry().h).unwrap(),
            wiggly_history(set.geometry().h),
        ] {
            let sol = solve_maturation(&set, &psi, &cfg).unwrap();
            assert!((sol.tau - 0.2).abs() <= 1e-12);
            assert!(sol.exponent.abs() <= 1e-14);
            // The path is the straight line y(s) = x2 - s.
            let (y_mid, dy_mid) = sol.y_path.eval(0.5 * sol.tau).unwrap();
            assert!((y_mid - 0.9).abs() <= 1e-12);
            assert!((dy_mid + 1.0).abs() <= 1e-12);
            assert_eq!(sol.y_path.values()[0], 1.0);
        }
    }

    #[test]
    fn invalid_config_is_rejected() {
        let set = unit_set(0.8);
        let psi = HistorySegment::constant(0.7, set.geometry().h).unwrap();
        let bad = KernelConfig { substeps_per_h: 2, threshold_tol: 1e-12 };
        assert!(matches!(
            solve_maturation(&set, &psi, &bad),
            Err(KernelError::InvalidConfig { .. })
        ));
        let bad_tol = KernelConfig { substeps_per_h: 64, threshold_tol: 0.0 };
        assert!(matches!(
            solve_maturation(&set, &psi, &bad_tol),
            Err(KernelError::InvalidConfig { .. })
        ));
    }

    #[test]
    fn constant_hill_delay_matches_the_closed_form_and_euler_oracle() {
        // Constant coefficients and a constant history make the speed a
        // constant: g = 2 (1 - 0.3/1.5) * 1 = 1.6, tau = 0.1/1.6 = 0.0625,
        // and the loss term integrates to 0.08 * tau exactly.
        let params = persistence_params();
        let spec = MaturationSpec::hill(
            Func1::constant(0.3),
            Func1::constant(1.0),
            1.0,
            LossField { a_d: Func1::constant(0.08), mu_d: Func1::constant(0.0), k_d: 0.0 },
        );
        let grid = GridPlan::auto(&params, &spec);
        let geom =
            derive_geometry(&params, &spec, 1.0, 0.5, (0.0, 2.0), &grid, X1Spec::Given(0.9))
                .unwrap();
        let set = IngredientSet::new(params, spec, geom).unwrap();
        let psi = HistorySegment::constant(0.5, geom.h).unwrap();
        let sol = solve_maturation(&set, &psi, &KernelConfig::default()).unwrap();
        let tau_exact = 0.1 / 1.6;
        assert!((sol.tau - tau_exact).abs() <= 1e-10);
        assert!((sol.exponent - 0.08 * tau_exact).abs() <= 1e-10);

        // Forward-Euler oracle with 4096 fixed steps (exact here because the
        // slope is constant; retained as an independent arithmetic check).
        let n = 4096usize;
        let h = geom.h / n as f64;
        let mut y = 1.0_f64;
        let mut s = 0.0_f64;
        let g_const = 1.6_f64;
        let tau_euler = loop {
            let y_next = y - h * g_const;
            if y_next <= 0.9 {
                break s + (y - 0.9) / g_const;
            }
            y = y_next;
            s += h;
        };
        assert!((sol.tau - tau_euler).abs() <= 1e-8);
    }

    /// Midpoint (RK2) oracle with a very fine fixed grid; independent of the
    /// production path in both scheme and step size.
    fn rk2_oracle(set: &IngredientSet, psi: &HistorySegment, n: usize) -> (f64, f64) {
        let geom = set.geometry();
        let h = geom.h / n as f64;
        let f = |s: f64, y: f64| -set.g(y, psi.eval(-s).unwrap().0).unwrap();
        let e_rate =
            |s: f64, y: f64| set.d(y, psi.eval(-s).unwrap().0).unwrap()
                - set.d1g(y, psi.eval(-s).unwrap().0).unwrap();
        let mut y = geom.x2;
        let mut e = 0.0_f64;
        let mut s = 0.0_f64;
        loop {
            let k1 = f(s, y);
            let y_mid = y + 0.5 * h * k1;
            let k2 = f(s + 0.5 * h, y_mid);
            let y_next = y + h * k2;
            let e_next = e + h * e_rate(s + 0.5 * h, y_mid);
            if y_next <= geom.x1 {
                // Linear interpolation inside the final fine step.
                let frac = (y - geom.x1) / (y - y_next);
                let tau = s + frac * h;
                let e_tau = e + frac * (e_next - e);
                return (tau, e_tau);
            }
            y = y_next;
            e = e_next;
            s += h;
        }
    }

    #[test]
    fn state_dependent_delay_matches_a_fine_independent_oracle() {
        let set = wiggly_set();
        let psi = wiggly_history(set.geometry().h);
        let sol = solve_maturation(&set, &psi, &KernelConfig::default()).unwrap();
        let (tau_oracle, e_oracle) = rk2_oracle(&set, &psi, 200_000);
        assert!(
            (sol.tau - tau_oracle).abs() <= 1e-8,
            "tau {} vs oracle {}",
            sol.tau,
            tau_oracle
        );
        assert!(
            (sol.exponent - e_oracle).abs() <= 1e-8,
            "exponent {} vs oracle {}",
            sol.exponent,
            e_oracle
        );
    }

    #[test]
    fn delay_respects_the_certified_bounds() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let cfg = KernelConfig::default();
        for _ in 0..40 {
            let a_g = rng.gen_range(0.0..0.45);
            let p_g = rng.gen_range(0.5..2.0);
            let k_g = if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(0.2..3.0) };
            let params = persistence_params();
            let spec = MaturationSpec::hill(
                Func1::constant(a_g),
                Func1::constant(p_g),
                k_g,
                LossField::zero(),
            );
            let grid = GridPlan::auto(&params, &spec);
            let geom =
                derive_geometry(&params, &spec, 1.0, 0.5, (0.0, 2.0), &grid, X1Spec::Auto)
                    .unwrap();
            let set = IngredientSet::new(params, spec, geom).unwrap();
            let c0: f64 = rng.gen_range(0.3..1.5);
            let c1 = rng.gen_range(0.0..c0.min(0.5));
            let om = rng.gen_range(0.5..4.0);
            let ph = rng.gen_range(0.0..core::f64::consts::TAU);
            let psi = HistorySegment::from_function(
                move |t| c0 + c1 * (om * t + ph).sin(),
                move |t| c1 * om * (om * t + ph).cos(),
                geom.h,
                33,
            )
            .unwrap();
            let sol = solve_maturation(&set, &psi, &cfg).unwrap();
            assert!(sol.tau >= geom.tau_min() - 1e-9);
            assert!(sol.tau <= geom.tau_max() + 1e-9);
            assert_eq!(sol.y_path.values()[0], geom.x2);
            let y_end = *sol.y_path.values().last().unwrap();
            assert!((y_end - geom.x1).abs() <= 1e-9);
            // Monotone descent.
            for w in sol.y_path.values().windows(2) {
                assert!(w[1] < w[0]);
            }
        }
    }

    #[test]
    fn recruitment_is_linear_in_the_stem_history() {
        let set = wiggly_set();
        let h = set.geometry().h;
        let psi = wiggly_history(h);
        let phi = HistorySegment::from_function(
            |t| 1.0 + 0.4 * (3.0 * t).cos(),
            |t| -1.2 * (3.0 * t).sin(),
            h,
            33,
        )
        .unwrap();
        let cfg = KernelConfig::default();
        let (j1, _) = recruitment(&set, &phi, &psi, &cfg).unwrap();
        for lambda in [0.5_f64, 3.0, -2.0] {
            let scaled = HistorySegment::from_function(
                |t| lambda * (1.0 + 0.4 * (3.0 * t).cos()),
                |t| lambda * (-1.2 * (3.0 * t).sin()),
                h,
                33,
            )
            .unwrap();
            let (jl, _) = recruitment(&set, &scaled, &psi, &cfg).unwrap();
            assert!((jl - lambda * j1).abs() <= 1e-13 * (1.0 + (lambda * j1).abs()));
        }
        let zero = HistorySegment::constant(0.0, h).unwrap();
        let (j0, _) = recruitment(&set, &zero, &psi, &cfg).unwrap();
        assert_eq!(j0, 0.0);
    }

    #[test]
    fn delay_solution_ignores_the_stem_history() {
        let set = wiggly_set();
        let h = set.geometry().h;
        let psi = wiggly_history(h);
        let cfg = KernelConfig::default();
        let phi_a = HistorySegment::constant(1.0, h).unwrap();
        let phi_b = HistorySegment::from_function(|t| (5.0 * t).sin(), |t| 5.0 * (5.0 * t).cos(), h, 17)
            .unwrap();
        let (_, sol_a) = recruitment(&set, &phi_a, &psi, &cfg).unwrap();
        let (_, sol_b) = recruitment(&set, &phi_b, &psi, &cfg).unwrap();
        assert_eq!(sol_a.tau.to_bits(), sol_b.tau.to_bits());
        assert_eq!(sol_a.exponent.to_bits(), sol_b.exponent.to_bits());
    }

    #[test]
    fn substep_refinement_converges_at_fourth_order() {
        let set = wiggly_set();
        let psi = wiggly_history(set.geometry().h);
        let tau_at = |n: usize| {
            solve_maturation(
                &set,
                &psi,
                &KernelConfig { substeps_per_h: n, threshold_tol: 1e-14 },
            )
            .unwrap()
            .tau
        };
        let reference = tau_at(512);
        let e16 = (tau_at(16) - reference).abs();
        let e32 = (tau_at(32) - reference).abs();
        assert!(e16 > 0.0 && e32 > 0.0, "errors vanished; oracle too coarse");
        let order = (e16 / e32).log2();
        assert!(order >= 3.5, "observed order {order}, errors {e16} {e32}");
    }

    #[test]
    fn equilibrium_recruitment_balances_clearance() {
        // Persistence fixture with unit speed: the positive equilibrium is
        // v = 3/13 (zero of q) and w = mu v / gamma(v).
        let set = unit_set(0.8);
        let v_bar = 3.0 / 13.0;
        let gamma_bar = 0.7;
        let w_bar = set.params().mu * v_bar / gamma_bar;
        let h = set.geometry().h;
        let pair = StatePair::constant(w_bar, v_bar, h).unwrap();
        let cfg = KernelConfig::default();
        let (j, _) = recruitment(&set, pair.w(), pair.v(), &cfg).unwrap();
        assert!((j - set.params().mu * v_bar).abs() <= 1e-12);
        let field = vector_field(&set, &pair, &cfg).unwrap();
        assert!(field.dw.abs() <= 1e-12);
        assert!(field.dv.abs() <= 1e-12);
        assert!((field.tau - 0.2).abs() <= 1e-12);
    }

    #[test]
    fn vector_field_matches_the_frozen_fixture() {
        // Decay fixture (q(0) = -0.2, gamma(0) = 1.1) with unit speed, zero
        // loss, constant histories w = 1, v = 0.
        let params = StemParams::new(0.45, 1.0, 0.1, 1.0, 0.0, 1.0).unwrap();
        let spec = MaturationSpec::unit(LossField::zero());
        let grid = GridPlan::auto(&params, &spec);
        let geom =
            derive_geometry(&params, &spec, 1.0, 0.5, (0.0, 2.0), &grid, X1Spec::Given(0.8))
                .unwrap();
        let set = IngredientSet::new(params, spec, geom).unwrap();
        let pair = StatePair::constant(1.0, 0.0, geom.h).unwrap();
        let field = vector_field(&set, &pair, &KernelConfig::default()).unwrap();
        assert!((field.dw + 0.2).abs() <= 1e-12);
        assert!((field.dv - 1.1).abs() <= 1e-12);
        assert!((field.j - 1.1).abs() <= 1e-12);
    }

    #[test]
    fn short_history_reports_no_crossing() {
        let set = unit_set(0.8); // needs tau = 0.2
        let psi = HistorySegment::constant(0.7, 0.1).unwrap();
        match solve_maturation(&set, &psi, &KernelConfig::default()) {
            Err(KernelError::NoCrossing { y_end, s_end }) => {
                assert!((s_end - 0.1).abs() <= 1e-15);
                assert!((y_end - 0.9).abs() <= 1e-12);
            }
            other => panic!("expected NoCrossing, got {other:?}"),
        }
    }

    #[test]
    fn short_stem_history_surfaces_a_segment_error() {
        let set = unit_set(0.8);
        let h = set.geometry().h;
        let psi = HistorySegment::constant(0.7, h).unwrap();
        let phi = HistorySegment::constant(1.0, 0.05).unwrap(); // shorter than tau = 0.2
        assert!(matches!(
            recruitment(&set, &phi, &psi, &KernelConfig::default()),
            Err(KernelError::Segment(SegmentError::OutOfRange { .. }))
        ));
    }

    #[test]
    fn inconsistent_geometry_escapes_the_interval() {
        // Hand-built geometry with a speed that is negative near z = 0, so
        // the path runs upward and out of the interval.
        let params = persistence_params();
        let spec = MaturationSpec::exp_decay(0.5, Func1::constant(-2.0), LossField::zero());
        let geom = Geometry {
            x1: 0.8,
            x2: 1.0,
            b: 0.5,
            eps_g: 0.5,
            k_g: 1.0,
            h: 0.5,
            j_lo: 0.0,
            j_hi: 1.2,
            r_minus: -0.5,
        };
        let set = IngredientSet::new(params, spec, geom).unwrap();
        let psi = HistorySegment::constant(0.0, geom.h).unwrap();
        assert!(matches!(
            solve_maturation(&set, &psi, &KernelConfig::default()),
            Err(KernelError::PathEscape { .. })
        ));
    }

    #[test]
    fn path_dense_output_is_consistent() {
        let set = wiggly_set();
        let psi = wiggly_history(set.geometry().h);
        let sol = solve_maturation(&set, &psi, &KernelConfig::default()).unwrap();
        // Knots reproduce exactly.
        for i in 0..sol.y_path.times().len() {
            let (v, d) = sol.y_path.eval(sol.y_path.times()[i]).unwrap();
            assert_eq!(v.to_bits(), sol.y_path.values()[i].to_bits());
            assert_eq!(d.to_bits(), sol.y_path.derivs()[i].to_bits());
        }
        // Dense output stays within the bracket of neighbouring knots by a
        // margin and matches a finer solve at an off-knot point.
        let fine = solve_maturation(
            &set,
            &psi,
            &KernelConfig { substeps_per_h: 256, threshold_tol: 1e-13 },
        )
        .unwrap();
        let s_probe = 0.4 * sol.tau;
        let coarse_val = sol.y_path.eval(s_probe).unwrap().0;
        let fine_val = fine.y_path.eval(s_probe).unwrap().0;
        assert!((coarse_val - fine_val).abs() <= 1e-9);
    }
}
