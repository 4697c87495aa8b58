//! Method-of-steps integrator for the two-component model
//!
//! ```text
//! w'(t) = q(v(t)) w(t)
//! v'(t) = j(w_t, v_t) - mu v(t)
//! ```
//!
//! where `w_t`, `v_t` are the sliding histories over the look-back horizon
//! and `j` is the threshold-crossing recruitment functional from
//! [`crate::delay_kernel`].
//!
//! Stepping is classical RK4 over a fixed grid with step `dt <= tau_min / 2`.
//! That bound keeps every delayed argument inside the already-committed part
//! of the history: a stage at `t* <= t_n + dt` reads the stem history at
//! `t* - tau <= t_n - dt`. Only the head interval `(t_n, t*]` of the mature
//! history is undetermined at stage time; it is covered by an overlay cubic
//! — an extrapolation of the last committed interval on the first pass, and
//! the previous pass's step cubic on later passes. Each step runs
//! [`SolverConfig::passes`] such passes (two by default) and commits the
//! final one; the largest end-state movement between the final two passes is
//! reported as [`Trajectory::corrector_delta`].
//!
//! Initial histories must sit on the solution manifold: the history slope at
//! time zero has to equal the model right-hand side there. [`make_admissible`]
//! enforces this by adding a short exponential bump `alpha * theta *
//! exp(theta / sigma)` near the head of each component, which changes the
//! head slope by `alpha` while leaving head values (and effectively the deep
//! past) untouched.

use alloc::vec::Vec;
use core::fmt;

use crate::delay_kernel::{recruitment, KernelConfig, KernelError};
use crate::ingredients::{Geometry, IngredientSet, IngredientsError};
use crate::math;
use crate::segments::{HermiteCubic, HistorySegment, SegmentError, StatePair};

/// Relative slack for grid/edge comparisons.
const EDGE_SNAP: f64 = 1e-11;

/// Target head-slope residual for [`make_admissible`].
const ADMISSIBLE_TOL: f64 = 1e-9;
const ADMISSIBLE_MAX_ITERS: usize = 50;
const ADMISSIBLE_DAMPING: f64 = 0.5;
/// Bump decay length as a fraction of the horizon.
const BUMP_SIGMA_FRACTION: f64 = 1.0 / 16.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IntegratorError {
    InvalidConfig { what: &'static str },
    /// Step too large for the shortest certified delay.
    StepTooLarge { dt: f64, max: f64 },
    /// History span shorter than the look-back horizon.
    BadHistorySpan { got: f64, need: f64 },
    /// The admissibility iteration did not reach its tolerance.
    NoConvergence { residual: f64 },
    /// Adjusting a nonnegative history made it dip below zero.
    NegativityIntroduced { min_value: f64 },
    /// State stopped being finite during integration.
    NonFiniteState { t: f64 },
    Kernel(KernelError),
    Segment(SegmentError),
    Ingredients(IngredientsError),
}

impl fmt::Display for IntegratorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            IntegratorError::InvalidConfig { what } => write!(f, "invalid solver config: {what}"),
            IntegratorError::StepTooLarge { dt, max } => {
                write!(f, "dt = {dt} exceeds half the shortest delay ({max})")
            }
            IntegratorError::BadHistorySpan { got, need } => {
                write!(f, "history spans {got} but the horizon needs {need}")
            }
            IntegratorError::NoConvergence { residual } => {
                write!(f, "admissibility iteration stalled at residual {residual}")
            }
            IntegratorError::NegativityIntroduced { min_value } => write!(
                f,
                "admissibility adjustment drove a nonnegative history to {min_value}"
            ),
            IntegratorError::NonFiniteState { t } => {
                write!(f, "state became non-finite at t = {t}")
            }
            IntegratorError::Kernel(ref e) => write!(f, "delay kernel failed: {e}"),
            IntegratorError::Segment(ref e) => write!(f, "history evaluation failed: {e}"),
            IntegratorError::Ingredients(ref e) => write!(f, "ingredient evaluation failed: {e}"),
        }
    }
}

impl core::error::Error for IntegratorError {}

impl From<KernelError> for IntegratorError {
    fn from(e: KernelError) -> Self {
        IntegratorError::Kernel(e)
    }
}

impl From<SegmentError> for IntegratorError {
    fn from(e: SegmentError) -> Self {
        IntegratorError::Segment(e)
    }
}

impl From<IngredientsError> for IntegratorError {
    fn from(e: IngredientsError) -> Self {
        IntegratorError::Ingredients(e)
    }
}

/// Fixed-step solver configuration, validated against a geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    dt: f64,
    passes: usize,
    kernel: KernelConfig,
}

impl SolverConfig {
    /// `dt` must be positive and at most half the shortest certified delay,
    /// so delayed arguments always land in committed history.
    pub fn new(
        geom: &Geometry,
        dt: f64,
        passes: usize,
        kernel: KernelConfig,
    ) -> Result<Self, IntegratorError> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(IntegratorError::InvalidConfig { what: "dt must be positive and finite" });
        }
        let max = geom.tau_min() / 2.0;
        if dt > max {
            return Err(IntegratorError::StepTooLarge { dt, max });
        }
        if passes == 0 {
            return Err(IntegratorError::InvalidConfig { what: "passes must be at least 1" });
        }
        kernel.validate().map_err(IntegratorError::Kernel)?;
        Ok(SolverConfig { dt, passes, kernel })
    }

    /// Default step: a quarter of the shortest certified delay, two passes.
    pub fn auto(geom: &Geometry, kernel: KernelConfig) -> Result<Self, IntegratorError> {
        SolverConfig::new(geom, geom.tau_min() / 4.0, 2, kernel)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn passes(&self) -> usize {
        self.passes
    }

    pub fn kernel(&self) -> &KernelConfig {
        &self.kernel
    }

    pub fn with_dt(&self, geom: &Geometry, dt: f64) -> Result<Self, IntegratorError> {
        SolverConfig::new(geom, dt, self.passes, self.kernel)
    }

    pub fn with_passes(&self, geom: &Geometry, passes: usize) -> Result<Self, IntegratorError> {
        SolverConfig::new(geom, self.dt, passes, self.kernel)
    }
}

/// An initial history pair certified (or at least measured) against the
/// solution-manifold condition `history'(0) = rhs(history)`.
#[derive(Debug, Clone)]
pub struct InitialCondition {
    pair: StatePair,
    compat_residual: f64,
}

impl InitialCondition {
    pub fn pair(&self) -> &StatePair {
        &self.pair
    }

    /// Largest head-slope defect `|history'(0) - rhs|` across components.
    pub fn compat_residual(&self) -> f64 {
        self.compat_residual
    }

    /// Wrap a history without adjusting it; the residual is measured and
    /// recorded as-is. Prefer [`make_admissible`] for anything that will be
    /// compared against smooth-solution identities.
    pub fn as_is(
        set: &IngredientSet,
        pair: StatePair,
        kernel: &KernelConfig,
    ) -> Result<Self, IntegratorError> {
        check_span(&pair, set.geometry())?;
        let residual = manifold_residual(set, &pair, kernel)?;
        Ok(InitialCondition { pair, compat_residual: residual })
    }
}

fn check_span(pair: &StatePair, geom: &Geometry) -> Result<(), IntegratorError> {
    let got = pair.h();
    let need = geom.h;
    if got + EDGE_SNAP * need.max(1.0) < need {
        return Err(IntegratorError::BadHistorySpan { got, need });
    }
    Ok(())
}

/// Head-slope defect of a pair against the model right-hand side.
fn manifold_residual(
    set: &IngredientSet,
    pair: &StatePair,
    kernel: &KernelConfig,
) -> Result<f64, IntegratorError> {
    let (w0, dw0) = pair.w().eval(0.0)?;
    let (v0, dv0) = pair.v().eval(0.0)?;
    let (j, _) = recruitment(set, pair.w(), pair.v(), kernel)?;
    let rw = dw0 - set.q(v0)? * w0;
    let rv = dv0 - (j - set.params().mu * v0);
    Ok(rw.abs().max(rv.abs()))
}

/// Rebuild a segment with the head-slope bump `alpha * theta * exp(theta/sigma)`
/// added to its sampled values and derivatives.
fn bump_segment(seg: &HistorySegment, alpha: f64, sigma: f64) -> Result<HistorySegment, SegmentError> {
    let knots = seg.knots();
    let mut values = Vec::with_capacity(knots.len());
    let mut derivs = Vec::with_capacity(knots.len());
    for ((&th, &value), &deriv) in knots.iter().zip(seg.values()).zip(seg.derivs()) {
        let e = math::exp(th / sigma);
        values.push(value + alpha * th * e);
        derivs.push(deriv + alpha * (1.0 + th / sigma) * e);
    }
    HistorySegment::new(knots.to_vec(), values, derivs)
}

/// Project a history pair onto the solution manifold.
///
/// Iteratively corrects the head slopes with damped exponential bumps until
/// the defect `|history'(0) - rhs|` falls below 1e-9 (at most 50 rounds).
/// Head values are never moved. If the input pair is nonnegative and the
/// adjustment makes it dip below zero, the construction is rejected rather
/// than silently returning a sign-flipped history.
pub fn make_admissible(
    set: &IngredientSet,
    pair: StatePair,
    kernel: &KernelConfig,
) -> Result<InitialCondition, IntegratorError> {
    check_span(&pair, set.geometry())?;
    let was_nonnegative = pair.min_value() >= 0.0;
    let sigma = pair.h() * BUMP_SIGMA_FRACTION;
    let mut current = pair;
    let mut residual = f64::INFINITY;
    for _ in 0..ADMISSIBLE_MAX_ITERS {
        let (w0, dw0) = current.w().eval(0.0)?;
        let (v0, dv0) = current.v().eval(0.0)?;
        let (j, _) = recruitment(set, current.w(), current.v(), kernel)?;
        let rw = dw0 - set.q(v0)? * w0;
        let rv = dv0 - (j - set.params().mu * v0);
        residual = rw.abs().max(rv.abs());
        if residual <= ADMISSIBLE_TOL {
            if was_nonnegative && current.min_value() < 0.0 {
                return Err(IntegratorError::NegativityIntroduced {
                    min_value: current.min_value(),
                });
            }
            return Ok(InitialCondition { pair: current, compat_residual: residual });
        }
        if !residual.is_finite() {
            return Err(IntegratorError::NoConvergence { residual });
        }
        let w_new = bump_segment(current.w(), -ADMISSIBLE_DAMPING * rw, sigma)?;
        let v_new = bump_segment(current.v(), -ADMISSIBLE_DAMPING * rv, sigma)?;
        current = StatePair::new(w_new, v_new)?;
    }
    Err(IntegratorError::NoConvergence { residual })
}

/// Combined history timeline: initial-history knots followed by grid knots.
#[derive(Debug, Clone)]
struct Hist {
    t: Vec<f64>,
    w: Vec<f64>,
    v: Vec<f64>,
    dw: Vec<f64>,
    dv: Vec<f64>,
}

impl Hist {
    fn from_ic(pair: &StatePair) -> Hist {
        let w_seg = pair.w();
        let v_seg = pair.v();
        Hist {
            t: w_seg.knots().to_vec(),
            w: w_seg.values().to_vec(),
            v: v_seg.values().to_vec(),
            dw: w_seg.derivs().to_vec(),
            dv: v_seg.derivs().to_vec(),
        }
    }

    fn push(&mut self, t: f64, w: f64, v: f64, dw: f64, dv: f64) {
        self.t.push(t);
        self.w.push(w);
        self.v.push(v);
        self.dw.push(dw);
        self.dv.push(dv);
    }

    fn last_index(&self) -> usize {
        self.t.len() - 1
    }

    /// Histories of span (at least) `span` ending at `t_star`, with the head
    /// knot overridden to the supplied stage values and slope estimates.
    /// Committed knots strictly before `t_star` are copied verbatim, so the
    /// delayed argument (always at least two steps back) reads exact
    /// committed data.
    fn assemble(
        &self,
        t_star: f64,
        span: f64,
        head: HeadState,
    ) -> Result<(HistorySegment, HistorySegment), SegmentError> {
        let lo_t = t_star - span;
        let mut start = self.t.partition_point(|&u| u < lo_t);
        if start > 0 && self.t.get(start).is_none_or(|&u| u > lo_t) {
            start -= 1;
        }
        let mut kn = Vec::with_capacity(self.t.len() - start + 1);
        let mut wv = Vec::with_capacity(kn.capacity());
        let mut wd = Vec::with_capacity(kn.capacity());
        let mut vv = Vec::with_capacity(kn.capacity());
        let mut vd = Vec::with_capacity(kn.capacity());
        for i in start..self.t.len() {
            if self.t[i] >= t_star {
                break;
            }
            kn.push(self.t[i] - t_star);
            wv.push(self.w[i]);
            wd.push(self.dw[i]);
            vv.push(self.v[i]);
            vd.push(self.dv[i]);
        }
        kn.push(0.0);
        wv.push(head.w);
        wd.push(head.dw);
        vv.push(head.v);
        vd.push(head.dv);
        let phi = HistorySegment::new(kn.clone(), wv, wd)?;
        let psi = HistorySegment::new(kn, vv, vd)?;
        Ok((phi, psi))
    }
}

#[derive(Debug, Clone, Copy)]
struct HeadState {
    w: f64,
    dw: f64,
    v: f64,
    dv: f64,
}

#[derive(Debug, Clone, Copy)]
struct RhsOut {
    dw: f64,
    dv: f64,
    tau: f64,
    j: f64,
}

/// Right-hand side at `t_star` for stage values `(w_star, v_star)`. The
/// mature head slope is only an estimate (it feeds the shape of the head
/// interval, an O(dt^4) effect); the stem head slope is exact by structure.
fn eval_rhs(
    set: &IngredientSet,
    hist: &Hist,
    t_star: f64,
    w_star: f64,
    v_star: f64,
    dv_head: f64,
    kernel: &KernelConfig,
) -> Result<RhsOut, IntegratorError> {
    if !w_star.is_finite() || !v_star.is_finite() {
        return Err(IntegratorError::NonFiniteState { t: t_star });
    }
    let dw_head = set.q(v_star)? * w_star;
    let head = HeadState { w: w_star, dw: dw_head, v: v_star, dv: dv_head };
    let (phi, psi) = hist.assemble(t_star, set.geometry().h, head)?;
    let (j, sol) = recruitment(set, &phi, &psi, kernel)?;
    Ok(RhsOut { dw: dw_head, dv: j - set.params().mu * v_star, tau: sol.tau, j })
}

/// A computed trajectory on `[0, t_end]`, carrying the initial history and
/// per-knot diagnostics.
#[derive(Debug, Clone)]
pub struct Trajectory {
    hist: Hist,
    /// Index of the `t = 0` knot in the combined timeline.
    grid_start: usize,
    tau: Vec<f64>,
    j: Vec<f64>,
    ic: InitialCondition,
    geom: Geometry,
    kernel: KernelConfig,
    corrector_delta: f64,
}

impl Trajectory {
    /// Grid times, from 0 to `t_end`.
    pub fn times(&self) -> &[f64] {
        &self.hist.t[self.grid_start..]
    }

    pub fn w(&self) -> &[f64] {
        &self.hist.w[self.grid_start..]
    }

    pub fn v(&self) -> &[f64] {
        &self.hist.v[self.grid_start..]
    }

    pub fn dw(&self) -> &[f64] {
        &self.hist.dw[self.grid_start..]
    }

    pub fn dv(&self) -> &[f64] {
        &self.hist.dv[self.grid_start..]
    }

    /// Realized delay at each grid time.
    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    /// Recruitment value at each grid time.
    pub fn j(&self) -> &[f64] {
        &self.j
    }

    pub fn ic(&self) -> &InitialCondition {
        &self.ic
    }

    pub fn t_end(&self) -> f64 {
        *self.hist.t.last().expect("non-empty")
    }

    /// Largest end-state movement between the final two passes of any step
    /// (NaN when the solver ran a single pass).
    pub fn corrector_delta(&self) -> f64 {
        self.corrector_delta
    }

    fn eval_component(
        &self,
        t: f64,
        vals: &[f64],
        ders: &[f64],
    ) -> Result<(f64, f64), IntegratorError> {
        let ts = &self.hist.t;
        let (first, last) = (ts[0], *ts.last().unwrap());
        let snap = EDGE_SNAP * (last - first).max(1.0);
        let t = if t < first && t >= first - snap {
            first
        } else if t > last && t <= last + snap {
            last
        } else {
            t
        };
        if !(first..=last).contains(&t) {
            return Err(IntegratorError::Segment(SegmentError::OutOfRange { theta: t, h: last }));
        }
        match ts.binary_search_by(|u| u.partial_cmp(&t).expect("finite grid")) {
            Ok(i) => Ok((vals[i], ders[i])),
            Err(i) => {
                let (a, b) = (i - 1, i);
                Ok(crate::segments::hermite_eval(
                    ts[a], vals[a], ders[a], ts[b], vals[b], ders[b], t,
                ))
            }
        }
    }

    /// Stem value and slope at any `t` in `[-h, t_end]`.
    pub fn eval_w(&self, t: f64) -> Result<(f64, f64), IntegratorError> {
        self.eval_component(t, &self.hist.w, &self.hist.dw)
    }

    /// Mature value and slope at any `t` in `[-h, t_end]`.
    pub fn eval_v(&self, t: f64) -> Result<(f64, f64), IntegratorError> {
        self.eval_component(t, &self.hist.v, &self.hist.dv)
    }

    /// The history pair ending at `t` (span = horizon), suitable for feeding
    /// back into the delay kernel or measuring norms along the trajectory.
    pub fn segment_pair_at(&self, t: f64) -> Result<StatePair, IntegratorError> {
        if t < 0.0 || t > self.t_end() + EDGE_SNAP * self.t_end().max(1.0) {
            return Err(IntegratorError::Segment(SegmentError::OutOfRange {
                theta: t,
                h: self.t_end(),
            }));
        }
        let (w, dw) = self.eval_w(t)?;
        let (v, dv) = self.eval_v(t)?;
        let head = HeadState { w, dw, v, dv };
        // Reuse the stage assembly; committed knots beyond t are excluded by
        // restricting the timeline prefix.
        let n = self.hist.t.partition_point(|&u| u < t);
        let prefix = Hist {
            t: self.hist.t[..n].to_vec(),
            w: self.hist.w[..n].to_vec(),
            v: self.hist.v[..n].to_vec(),
            dw: self.hist.dw[..n].to_vec(),
            dv: self.hist.dv[..n].to_vec(),
        };
        let (phi, psi) = prefix.assemble(t, self.geom.h, head)?;
        Ok(StatePair::new(phi, psi)?)
    }

    /// C1 norm of the history pair ending at `t`.
    pub fn norm_c1_at(&self, t: f64) -> Result<f64, IntegratorError> {
        Ok(self.segment_pair_at(t)?.c1_norm())
    }

    pub fn kernel_config(&self) -> &KernelConfig {
        &self.kernel
    }
}

/// Integrate the model from an admissible initial history to `t_end`.
pub fn integrate(
    set: &IngredientSet,
    ic: &InitialCondition,
    t_end: f64,
    cfg: &SolverConfig,
) -> Result<Trajectory, IntegratorError> {
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(IntegratorError::InvalidConfig { what: "t_end must be positive and finite" });
    }
    let geom = *set.geometry();
    let max_dt = geom.tau_min() / 2.0;
    if cfg.dt > max_dt {
        return Err(IntegratorError::StepTooLarge { dt: cfg.dt, max: max_dt });
    }
    check_span(ic.pair(), &geom)?;

    let mut hist = Hist::from_ic(ic.pair());
    let grid_start = hist.last_index();
    let mut tau_rec = Vec::new();
    let mut j_rec = Vec::new();
    let mut corrector_delta: f64 = if cfg.passes >= 2 { 0.0 } else { f64::NAN };

    let mut step_index = 0usize;
    loop {
        let idx_n = hist.last_index();
        let t_n = hist.t[idx_n];
        let (w_n, v_n) = (hist.w[idx_n], hist.v[idx_n]);

        // Fresh right-hand side at the committed grid point; its mature
        // slope replaces the estimate stored at commit time.
        let k1 = eval_rhs(set, &hist, t_n, w_n, v_n, hist.dv[idx_n], &cfg.kernel)?;
        hist.dw[idx_n] = k1.dw;
        hist.dv[idx_n] = k1.dv;
        tau_rec.push(k1.tau);
        j_rec.push(k1.j);

        let remaining = t_end - t_n;
        if remaining <= EDGE_SNAP * t_end.max(1.0) {
            break;
        }
        let t_next = if remaining <= cfg.dt * (1.0 + EDGE_SNAP) {
            t_end
        } else {
            // Uniform interior grid: avoids accumulation drift.
            step_index += 1;
            step_index as f64 * cfg.dt
        };
        let dt_n = t_next - t_n;

        // Pass-1 overlay: the last committed interval's cubic, extrapolated.
        let base_overlay = {
            let a = idx_n - 1;
            HermiteCubic {
                t0: hist.t[a],
                v0: hist.v[a],
                d0: hist.dv[a],
                t1: hist.t[idx_n],
                v1: hist.v[idx_n],
                d1: hist.dv[idx_n],
            }
        };

        let mut end_w = f64::NAN;
        let mut end_v = f64::NAN;
        let mut end_dv_est = f64::NAN;
        let mut last_delta = f64::NAN;
        let mut prev_end: Option<(f64, f64)> = None;
        let mut prev_cubic: Option<HermiteCubic> = None;

        for _pass in 0..cfg.passes {
            let overlay = prev_cubic.as_ref().unwrap_or(&base_overlay);
            let t_half = t_n + 0.5 * dt_n;
            let ov_half = overlay.eval(t_half).1;
            let ov_end = overlay.eval(t_n + dt_n).1;
            let k2 = eval_rhs(
                set,
                &hist,
                t_half,
                w_n + 0.5 * dt_n * k1.dw,
                v_n + 0.5 * dt_n * k1.dv,
                ov_half,
                &cfg.kernel,
            )?;
            let k3 = eval_rhs(
                set,
                &hist,
                t_half,
                w_n + 0.5 * dt_n * k2.dw,
                v_n + 0.5 * dt_n * k2.dv,
                ov_half,
                &cfg.kernel,
            )?;
            let k4 = eval_rhs(
                set,
                &hist,
                t_n + dt_n,
                w_n + dt_n * k3.dw,
                v_n + dt_n * k3.dv,
                ov_end,
                &cfg.kernel,
            )?;
            end_w = w_n + (dt_n / 6.0) * (k1.dw + 2.0 * k2.dw + 2.0 * k3.dw + k4.dw);
            end_v = v_n + (dt_n / 6.0) * (k1.dv + 2.0 * k2.dv + 2.0 * k3.dv + k4.dv);
            end_dv_est = k4.dv;
            if let Some((pw, pv)) = prev_end {
                last_delta = (end_w - pw).abs().max((end_v - pv).abs());
            }
            prev_end = Some((end_w, end_v));
            prev_cubic = Some(HermiteCubic {
                t0: t_n,
                v0: v_n,
                d0: k1.dv,
                t1: t_next,
                v1: end_v,
                d1: k4.dv,
            });
        }

        if !end_w.is_finite() || !end_v.is_finite() {
            return Err(IntegratorError::NonFiniteState { t: t_next });
        }
        if cfg.passes >= 2 {
            corrector_delta = corrector_delta.max(last_delta);
        }

        // Stem slope is exact by structure; the mature slope estimate is
        // replaced by the fresh evaluation at the top of the next step.
        let end_dw = set.q(end_v)? * end_w;
        hist.push(t_next, end_w, end_v, end_dw, end_dv_est);
    }

    Ok(Trajectory {
        hist,
        grid_start,
        tau: tau_rec,
        j: j_rec,
        ic: ic.clone(),
        geom,
        kernel: cfg.kernel,
        corrector_delta,
    })
}

/// Verify the multiplicative closed form of the stem component:
/// `w(t) = w(0) * exp( integral of q(v) over [0, t] )`.
///
/// The exponent is accumulated per interval with Simpson's rule on the
/// trajectory's cubic dense output. Returns the largest mixed
/// absolute/relative defect `|w - pred| / (1 + |pred|)` over grid points.
pub fn verify_w_closed_form(
    traj: &Trajectory,
    set: &IngredientSet,
) -> Result<f64, IntegratorError> {
    let times = traj.times();
    let w = traj.w();
    let v = traj.v();
    let w0 = w[0];
    let mut acc = 0.0_f64;
    let mut worst = 0.0_f64;
    for i in 1..times.len() {
        let dt = times[i] - times[i - 1];
        let t_mid = times[i - 1] + 0.5 * dt;
        let v_mid = traj.eval_v(t_mid)?.0;
        acc += (dt / 6.0) * (set.q(v[i - 1])? + 4.0 * set.q(v_mid)? + set.q(v[i])?);
        let pred = w0 * math::exp(acc);
        let defect = (w[i] - pred).abs() / (1.0 + pred.abs());
        worst = worst.max(defect);
    }
    Ok(worst)
}

/// Verify the variation-of-constants form of the mature component:
/// `v(t) = v(0) e^{-mu t} + integral of e^{-mu (t-s)} j(s) ds`.
///
/// The convolution is carried by the stable recurrence
/// `C_{k+1} = e^{-mu dt} C_k + Simpson(e^{-mu (t_{k+1}-s)} j(s))`, with the
/// midpoint recruitment recomputed by a fresh kernel solve on the
/// trajectory's own history. Returns the largest mixed defect
/// `|v - pred| / (1 + |pred|)` over grid points.
pub fn verify_voc(traj: &Trajectory, set: &IngredientSet) -> Result<f64, IntegratorError> {
    let times = traj.times();
    let v = traj.v();
    let j = traj.j();
    let mu = set.params().mu;
    let v0 = v[0];
    let mut conv = 0.0_f64;
    let mut worst = 0.0_f64;
    for i in 1..times.len() {
        let dt = times[i] - times[i - 1];
        let t_mid = times[i - 1] + 0.5 * dt;
        let pair = traj.segment_pair_at(t_mid)?;
        let (j_mid, _) = recruitment(set, pair.w(), pair.v(), traj.kernel_config())?;
        let decay_full = math::exp(-mu * dt);
        let decay_half = math::exp(-mu * 0.5 * dt);
        conv = decay_full * conv
            + (dt / 6.0) * (decay_full * j[i - 1] + 4.0 * decay_half * j_mid + j[i]);
        let pred = v0 * math::exp(-mu * times[i]) + conv;
        let defect = (v[i] - pred).abs() / (1.0 + pred.abs());
        worst = worst.max(defect);
    }
    Ok(worst)
}
