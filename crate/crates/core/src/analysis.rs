//! Equilibria, regime classification, and trajectory-ensemble estimators.
//!
//! Everything here is diagnostic instrumentation over the integrator: the
//! claims it produces are sampled evidence at a fixed resolution, never
//! proofs. Reports carry the constants and witnesses they were computed
//! from so runs can be compared and reproduced exactly.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::delay_kernel::{solve_maturation, KernelConfig, KernelError};
use crate::ingredients::{
    GridPlan, HypId, HypothesisReport, IngredientSet, IngredientsError, StemParams,
};
use crate::integrator::{integrate, IntegratorError, InitialCondition, SolverConfig};
use crate::math;
use crate::segments::{HistorySegment, SegmentError};

/// Norm ceiling past which a trajectory is reported as unbounded.
const UNBOUNDED_CEILING: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnalysisError {
    /// The recruitment coefficient at the candidate equilibrium is zero or
    /// non-finite, so no stem level can balance clearance.
    DegenerateCoefficient { c: f64 },
    /// A trajectory norm crossed the unbounded-detection ceiling.
    Unbounded { t: f64, norm: f64 },
    EmptyEnsemble,
    /// The sampling window must fit inside `(0, t_end]` and contain at
    /// least one grid point.
    BadWindow { window: f64, t_end: f64 },
    InvalidInput { what: &'static str },
    Integrator(IntegratorError),
    Ingredients(IngredientsError),
    Kernel(KernelError),
    Segment(SegmentError),
}

impl core::fmt::Display for AnalysisError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match *self {
            AnalysisError::DegenerateCoefficient { c } => {
                write!(f, "degenerate recruitment coefficient c = {c} at equilibrium")
            }
            AnalysisError::Unbounded { t, norm } => {
                write!(f, "trajectory norm {norm} crossed the ceiling at t = {t}")
            }
            AnalysisError::EmptyEnsemble => write!(f, "ensemble is empty"),
            AnalysisError::BadWindow { window, t_end } => {
                write!(f, "window {window} does not fit into (0, {t_end}]")
            }
            AnalysisError::InvalidInput { what } => write!(f, "invalid input: {what}"),
            AnalysisError::Integrator(ref e) => write!(f, "integration failed: {e}"),
            AnalysisError::Ingredients(ref e) => write!(f, "ingredient evaluation failed: {e}"),
            AnalysisError::Kernel(ref e) => write!(f, "delay kernel failed: {e}"),
            AnalysisError::Segment(ref e) => write!(f, "history evaluation failed: {e}"),
        }
    }
}

impl core::error::Error for AnalysisError {}

impl From<IntegratorError> for AnalysisError {
    fn from(e: IntegratorError) -> Self {
        AnalysisError::Integrator(e)
    }
}

impl From<IngredientsError> for AnalysisError {
    fn from(e: IngredientsError) -> Self {
        AnalysisError::Ingredients(e)
    }
}

impl From<KernelError> for AnalysisError {
    fn from(e: KernelError) -> Self {
        AnalysisError::Kernel(e)
    }
}

impl From<SegmentError> for AnalysisError {
    fn from(e: SegmentError) -> Self {
        AnalysisError::Segment(e)
    }
}

fn bisect_root(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let flo = f(lo);
    // Run until the interval cannot be split further: the function is a
    // cheap rational, so full floating-point precision costs ~60 evals.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Zeros of the net stem growth rate `q` on `(0, z_hi]`, located by bracket
/// scanning and bisection. When the rate is known to be monotone (division
/// rate unregulated, renewal fraction regulated) and the scan still finds
/// several brackets, the scan is repeated on an eight-fold finer grid.
pub fn find_q_zeros(params: &StemParams, grid: &GridPlan) -> Result<Vec<f64>, AnalysisError> {
    params.validate()?;
    // The domain floor of a validated parameter set is strictly negative,
    // so evaluation cannot fail on [0, z_hi].
    let q = |z: f64| crate::ingredients::q_eval(params, z).expect("z >= 0 is in the domain");
    let scan = |samples: usize| -> Vec<f64> {
        let mut roots = Vec::new();
        let step = grid.z_hi / (samples - 1) as f64;
        let mut prev_z = 0.0_f64;
        let mut prev_q = q(0.0);
        for i in 1..samples {
            let z = if i == samples - 1 { grid.z_hi } else { step * i as f64 };
            let qv = q(z);
            if qv == 0.0 {
                roots.push(z);
            } else if prev_q == 0.0 {
                // Root recorded at the previous sample (or it is z = 0,
                // which is outside the open interval).
            } else if (qv > 0.0) != (prev_q > 0.0) {
                roots.push(bisect_root(prev_z, z, q));
            }
            prev_z = z;
            prev_q = qv;
        }
        roots.retain(|&r| r > 0.0);
        roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-10 * (1.0 + b.abs()));
        roots
    };
    let mut roots = scan(grid.z_samples);
    let monotone_hint = params.kappa == 0.0 && params.k > 0.0;
    if monotone_hint && roots.len() > 1 {
        roots = scan((grid.z_samples - 1) * 8 + 1);
    }
    Ok(roots)
}

/// A constant steady state of the full model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equilibrium {
    pub w: f64,
    pub v: f64,
    /// Delay realized at the constant mature history.
    pub tau: f64,
}

/// The trivial steady state plus the positive one when it exists.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumSet {
    pub trivial: Equilibrium,
    pub positive: Option<Equilibrium>,
}

/// Find the positive equilibrium: the smallest positive zero `v` of `q`,
/// with the stem level balancing clearance through the recruitment
/// coefficient at the constant history,
/// `w = mu v / [gamma(v) g(x2, v)/g(x1, v) exp(E(v))]`.
pub fn positive_equilibrium(
    set: &IngredientSet,
    grid: &GridPlan,
    kernel: &KernelConfig,
) -> Result<Option<Equilibrium>, AnalysisError> {
    let roots = find_q_zeros(set.params(), grid)?;
    let v_bar = match roots.first() {
        Some(&r) => r,
        None => return Ok(None),
    };
    let geom = set.geometry();
    let psi = HistorySegment::constant(v_bar, geom.h)?;
    let sol = solve_maturation(set, &psi, kernel)?;
    let c = set.gamma(v_bar)? * set.g(geom.x2, v_bar)? / set.g(geom.x1, v_bar)?
        * math::exp(sol.exponent);
    if !c.is_finite() || c.abs() < 1e-300 {
        return Err(AnalysisError::DegenerateCoefficient { c });
    }
    Ok(Some(Equilibrium { w: set.params().mu * v_bar / c, v: v_bar, tau: sol.tau }))
}

/// Both steady states.
pub fn equilibria(
    set: &IngredientSet,
    grid: &GridPlan,
    kernel: &KernelConfig,
) -> Result<EquilibriumSet, AnalysisError> {
    let trivial_tau = {
        let psi = HistorySegment::constant(0.0, set.geometry().h)?;
        solve_maturation(set, &psi, kernel)?.tau
    };
    Ok(EquilibriumSet {
        trivial: Equilibrium { w: 0.0, v: 0.0, tau: trivial_tau },
        positive: positive_equilibrium(set, grid, kernel)?,
    })
}

/// Long-run behaviour classes distinguished by the checked hypotheses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Trivial state attracts everything: net growth is negative at all
    /// positive concentrations.
    ZeroGas,
    /// Uniform persistence with a certified margin: positive growth at zero,
    /// certified negative tail, and a uniform recruitment-yield floor.
    PersistentStrong,
    /// Regulated division with unregulated renewal and no yield floor:
    /// persistence machinery applies but boundedness is not asserted.
    OpenCase,
    /// Positive growth at zero and a sign change, but no uniform yield
    /// floor; only the weaker persistence statement is supported.
    PersistentWeakOnly,
    Indeterminate,
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::ZeroGas => "zero_gas",
            Regime::PersistentStrong => "persistent_strong",
            Regime::OpenCase => "open_case",
            Regime::PersistentWeakOnly => "persistent_weak_only",
            Regime::Indeterminate => "indeterminate",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeClassification {
    pub regime: Regime,
    /// Whether ultimate boundedness is asserted for this ingredient set.
    pub dissipative: bool,
    pub justification: String,
    pub q0: f64,
    pub gamma0: f64,
    /// Smallest positive zero of `q`, when one exists.
    pub first_root: Option<f64>,
}

/// Classify the long-run regime from a hypothesis report. The decision is
/// taken on grid verdicts, in a fixed precedence order; the open case is
/// recognized before the weak fallback so it is never mislabelled.
pub fn classify_regime(
    set: &IngredientSet,
    report: &HypothesisReport,
    grid: &GridPlan,
) -> Result<RegimeClassification, AnalysisError> {
    let params = set.params();
    let q0 = crate::ingredients::q_eval(params, 0.0)?;
    let gamma0 = crate::ingredients::gamma_eval(params, 0.0)?;
    let roots = find_q_zeros(params, grid)?;
    let first_root = roots.first().copied();

    let q_negative = report.holds(HypId::QNegative);
    let q_pos_zero = report.holds(HypId::QPositiveAtZero);
    let tail = report.holds(HypId::QNegativeTail);
    let floor = report.holds(HypId::GammaFloor);

    let (regime, dissipative, justification) = if q_negative && (q0 < 0.0 || gamma0 > 0.0) {
        (
            Regime::ZeroGas,
            true,
            format!(
                "net growth negative at all sampled positive concentrations (q0 = {q0}, gamma0 = {gamma0})"
            ),
        )
    } else if q_pos_zero && tail && floor {
        (
            Regime::PersistentStrong,
            true,
            format!(
                "positive growth at zero with certified negative tail and uniform yield floor (q0 = {q0})"
            ),
        )
    } else if q_pos_zero && params.kappa > 0.0 && params.k == 0.0 && !floor {
        (
            Regime::OpenCase,
            false,
            String::from(
                "regulated division rate with unregulated renewal: yield floor vanishes in the tail, boundedness not asserted",
            ),
        )
    } else if q_pos_zero && first_root.is_some() {
        (
            Regime::PersistentWeakOnly,
            tail,
            format!(
                "growth changes sign (first root {}), but no uniform yield floor",
                first_root.unwrap()
            ),
        )
    } else {
        (
            Regime::Indeterminate,
            false,
            String::from("no checked hypothesis pattern matches this ingredient set"),
        )
    };

    Ok(RegimeClassification { regime, dissipative, justification, q0, gamma0, first_root })
}

/// An initial condition tagged with the seed that generated it, so ensemble
/// reports stay reproducible.
#[derive(Debug, Clone)]
pub struct EnsembleMember {
    pub seed: u64,
    pub ic: InitialCondition,
}

/// Evidence for attraction to the trivial state: the largest tail C1 norm
/// across a family of trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct GasReport {
    /// Max over trajectories of the tail-window sup of the C1 pair norm.
    pub max_tail_norm: f64,
    pub per_trajectory: Vec<f64>,
    pub window: f64,
    pub t_end: f64,
}

fn window_start(t_end: f64, window: f64) -> Result<f64, AnalysisError> {
    if !(window > 0.0) || !window.is_finite() || window > t_end {
        return Err(AnalysisError::BadWindow { window, t_end });
    }
    Ok(t_end - window)
}

/// Integrate each initial condition and measure the tail C1 norms.
pub fn estimate_gas(
    set: &IngredientSet,
    ics: &[InitialCondition],
    t_end: f64,
    window: f64,
    cfg: &SolverConfig,
) -> Result<GasReport, AnalysisError> {
    if ics.is_empty() {
        return Err(AnalysisError::EmptyEnsemble);
    }
    let start = window_start(t_end, window)?;
    let mut per = Vec::with_capacity(ics.len());
    for ic in ics {
        let traj = integrate(set, ic, t_end, cfg)?;
        let mut tail = 0.0_f64;
        for &t in traj.times().iter().filter(|&&t| t >= start) {
            tail = tail.max(traj.norm_c1_at(t)?);
        }
        per.push(tail);
    }
    let max_tail = per.iter().copied().fold(0.0_f64, f64::max);
    Ok(GasReport { max_tail_norm: max_tail, per_trajectory: per, window, t_end })
}

/// Which scalar is tracked by the persistence estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PersistenceMeasure {
    /// The stem head value `w(t)`.
    StemHead,
    /// The smaller of the two head values, `min(w(t), v(t))`.
    PairMin,
}

impl PersistenceMeasure {
    pub fn name(&self) -> &'static str {
        match self {
            PersistenceMeasure::StemHead => "stem_head",
            PersistenceMeasure::PairMin => "pair_min",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersistenceEntry {
    pub seed: u64,
    /// Infimum of the tracked measure over the tail window.
    pub tail_inf: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersistenceReport {
    pub measure: PersistenceMeasure,
    /// Smallest tail infimum across the ensemble: the empirical uniform
    /// persistence margin.
    pub eps_hat: f64,
    pub per_trajectory: Vec<PersistenceEntry>,
    pub window: f64,
    pub t_end: f64,
}

/// Estimate a uniform persistence margin over an ensemble: integrate each
/// member and take the worst tail infimum of the chosen measure.
pub fn estimate_persistence(
    set: &IngredientSet,
    members: &[EnsembleMember],
    measure: PersistenceMeasure,
    t_end: f64,
    window: f64,
    cfg: &SolverConfig,
) -> Result<PersistenceReport, AnalysisError> {
    if members.is_empty() {
        return Err(AnalysisError::EmptyEnsemble);
    }
    let start = window_start(t_end, window)?;
    let mut per = Vec::with_capacity(members.len());
    for member in members {
        let traj = integrate(set, &member.ic, t_end, cfg)?;
        let mut inf = f64::INFINITY;
        for (i, &t) in traj.times().iter().enumerate() {
            if t < start {
                continue;
            }
            let m = match measure {
                PersistenceMeasure::StemHead => traj.w()[i],
                PersistenceMeasure::PairMin => traj.w()[i].min(traj.v()[i]),
            };
            inf = inf.min(m);
        }
        per.push(PersistenceEntry { seed: member.seed, tail_inf: inf });
    }
    let eps_hat = per.iter().map(|e| e.tail_inf).fold(f64::INFINITY, f64::min);
    Ok(PersistenceReport { measure, eps_hat, per_trajectory: per, window, t_end })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundEntry {
    pub seed: u64,
    /// First grid time after which the C pair norm never exceeds the
    /// ensemble bound again.
    pub entry_time: f64,
    /// Tail-window sup of the C pair norm for this trajectory.
    pub tail_bound: f64,
}

/// Evidence for ultimate boundedness: an empirical absorbing radius.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    /// Max over the ensemble of the tail C-norm sup: the empirical
    /// absorbing-ball radius.
    pub k_hat: f64,
    /// Same radius measured in the C1 norm (adds derivative sups).
    pub k1_candidate: f64,
    pub entries: Vec<BoundEntry>,
    /// Lead time `ln(1 + z_star) / mu` implied by the certified tail margin
    /// (NaN when no margin is certified).
    pub t_d: f64,
    pub window: f64,
    pub t_end: f64,
}

/// Measure an empirical absorbing ball over an ensemble. Errors with
/// [`AnalysisError::Unbounded`] if any trajectory norm crosses 1e6.
pub fn detect_ultimate_bound(
    set: &IngredientSet,
    members: &[EnsembleMember],
    report: &HypothesisReport,
    t_end: f64,
    window: f64,
    cfg: &SolverConfig,
) -> Result<BoundReport, AnalysisError> {
    if members.is_empty() {
        return Err(AnalysisError::EmptyEnsemble);
    }
    let start = window_start(t_end, window)?;
    let mut norms_per: Vec<(u64, Vec<f64>, Vec<f64>, f64)> = Vec::with_capacity(members.len());
    let mut k_hat = 0.0_f64;
    let mut k1 = 0.0_f64;
    for member in members {
        let traj = integrate(set, &member.ic, t_end, cfg)?;
        let times = traj.times().to_vec();
        let mut c_norms = Vec::with_capacity(times.len());
        let mut tail = 0.0_f64;
        for &t in &times {
            let pair = traj.segment_pair_at(t)?;
            let c = pair.c_norm();
            if c > UNBOUNDED_CEILING {
                return Err(AnalysisError::Unbounded { t, norm: c });
            }
            c_norms.push(c);
            if t >= start {
                tail = tail.max(c);
                k1 = k1.max(pair.c1_norm());
            }
        }
        k_hat = k_hat.max(tail);
        norms_per.push((member.seed, times, c_norms, tail));
    }
    let mut entries = Vec::with_capacity(members.len());
    for (seed, times, c_norms, tail) in &norms_per {
        // Last excursion above the ensemble radius; entry is just after it.
        let mut entry_idx = 0usize;
        for (i, &c) in c_norms.iter().enumerate() {
            if c > k_hat * (1.0 + 1e-12) {
                entry_idx = i + 1;
            }
        }
        let entry_time = if entry_idx >= times.len() {
            *times.last().unwrap()
        } else {
            times[entry_idx]
        };
        entries.push(BoundEntry { seed: *seed, entry_time, tail_bound: *tail });
    }
    let t_d = match (
        report.constant(HypId::QNegativeTail, "z_star"),
        report.holds(HypId::QNegativeTail),
    ) {
        (Some(z_star), true) => math::ln(1.0 + z_star) / set.params().mu,
        _ => f64::NAN,
    };
    Ok(BoundReport { k_hat, k1_candidate: k1, entries, t_d, window, t_end })
}

/// One vanishing-delay comparison run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeLimitEntry {
    /// Geometry scale: thresholds and box shrunk by this factor.
    pub eps: f64,
    /// Horizon of the scaled geometry.
    pub h: f64,
    /// Certified delay range of the scaled geometry.
    pub tau_range: (f64, f64),
    /// Sup over the comparison span of the component-wise distance between
    /// the delayed trajectory and the limiting ODE flow.
    pub sup_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeLimitReport {
    pub entries: Vec<OdeLimitEntry>,
    /// Distance of the ODE flow at the long horizon from its own positive
    /// equilibrium `(mu v / gamma(v), v)`.
    pub ode_equilibrium_gap: f64,
}

/// Knot count for internally built constant histories: fine enough to
/// resolve the admissibility head bump (which decays on the scale `h/16`).
const CONSTANT_IC_KNOTS: usize = 65;

/// A constant history pair sampled finely enough that the admissibility
/// correction is well represented by the piecewise cubics.
pub fn constant_history(w0: f64, v0: f64, h: f64) -> Result<crate::segments::StatePair, AnalysisError> {
    let w = HistorySegment::from_function(|_| w0, |_| 0.0, h, CONSTANT_IC_KNOTS)?;
    let v = HistorySegment::from_function(|_| v0, |_| 0.0, h, CONSTANT_IC_KNOTS)?;
    Ok(crate::segments::StatePair::new(w, v)?)
}

/// Time grid and the two state components of the reference ODE solve.
type OdePath = (Vec<f64>, Vec<f64>, Vec<f64>);

/// Fixed-step RK4 on the limiting ODE `w' = q(v) w, v' = gamma(v) w - mu v`.
fn solve_limit_ode(
    params: &StemParams,
    w0: f64,
    v0: f64,
    t_end: f64,
    n_steps: usize,
) -> Result<OdePath, AnalysisError> {
    let rhs = |w: f64, v: f64| -> Result<(f64, f64), AnalysisError> {
        let q = crate::ingredients::q_eval(params, v)?;
        let g = crate::ingredients::gamma_eval(params, v)?;
        Ok((q * w, g * w - params.mu * v))
    };
    let dt = t_end / n_steps as f64;
    let mut ts = Vec::with_capacity(n_steps + 1);
    let mut ws = Vec::with_capacity(n_steps + 1);
    let mut vs = Vec::with_capacity(n_steps + 1);
    let (mut w, mut v) = (w0, v0);
    ts.push(0.0);
    ws.push(w);
    vs.push(v);
    for i in 0..n_steps {
        let (k1w, k1v) = rhs(w, v)?;
        let (k2w, k2v) = rhs(w + 0.5 * dt * k1w, v + 0.5 * dt * k1v)?;
        let (k3w, k3v) = rhs(w + 0.5 * dt * k2w, v + 0.5 * dt * k2v)?;
        let (k4w, k4v) = rhs(w + dt * k3w, v + dt * k3v)?;
        w += (dt / 6.0) * (k1w + 2.0 * k2w + 2.0 * k3w + k4w);
        v += (dt / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        ts.push(dt * (i + 1) as f64);
        ws.push(w);
        vs.push(v);
    }
    Ok((ts, ws, vs))
}

fn interp_linear(ts: &[f64], ys: &[f64], t: f64) -> f64 {
    let i = ts.partition_point(|&u| u < t).clamp(1, ts.len() - 1);
    let (a, b) = (i - 1, i);
    let frac = (t - ts[a]) / (ts[b] - ts[a]);
    ys[a] + frac * (ys[b] - ys[a])
}

/// Compare the delayed model against its vanishing-delay ODE limit.
///
/// For each scale in `eps_list`, the maturity box and thresholds are shrunk
/// by that factor around the upper threshold (the delay shrinks with them),
/// the model is integrated from the constant history `(w0, v0)`, and the
/// sup distance to the ODE flow over `[0, t_span]` is recorded. With unit
/// speed and zero loss the recruitment collapses to `gamma(v(t)) w(t -
/// tau)`, so the gap should shrink roughly linearly with the scale.
pub fn ode_limit_compare(
    set: &IngredientSet,
    eps_list: &[f64],
    w0: f64,
    v0: f64,
    t_span: f64,
    ode_t_end: f64,
    kernel: &KernelConfig,
) -> Result<OdeLimitReport, AnalysisError> {
    if eps_list.is_empty() {
        return Err(AnalysisError::InvalidInput { what: "eps_list is empty" });
    }
    if !(t_span > 0.0) || !(ode_t_end >= t_span) {
        return Err(AnalysisError::InvalidInput { what: "need 0 < t_span <= ode_t_end" });
    }
    let params = *set.params();
    let base = *set.geometry();
    // Fine ODE reference over the full horizon.
    let n_ode = 1 << 16;
    let (ode_t, ode_w, ode_v) = solve_limit_ode(&params, w0, v0, ode_t_end, n_ode)?;

    let mut entries = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(AnalysisError::InvalidInput { what: "eps must lie in (0, 1]" });
        }
        let b_eps = base.b * eps;
        let x1_eps = base.x2 - eps * (base.x2 - base.x1);
        let grid = GridPlan::auto(&params, set.spec());
        let geom_eps = crate::ingredients::derive_geometry(
            &params,
            set.spec(),
            base.x2,
            b_eps,
            (base.j_lo, base.j_hi),
            &grid,
            crate::ingredients::X1Spec::Given(x1_eps),
        )?;
        let scaled = set.with_geometry(geom_eps);
        let pair = constant_history(w0, v0, geom_eps.h)?;
        let ic = crate::integrator::make_admissible(&scaled, pair, kernel)?;
        let cfg = SolverConfig::auto(&geom_eps, *kernel)?;
        let traj = integrate(&scaled, &ic, t_span, &cfg)?;
        let mut sup_gap = 0.0_f64;
        for (i, &t) in traj.times().iter().enumerate() {
            let gw = (traj.w()[i] - interp_linear(&ode_t, &ode_w, t)).abs();
            let gv = (traj.v()[i] - interp_linear(&ode_t, &ode_v, t)).abs();
            sup_gap = sup_gap.max(gw.max(gv));
        }
        entries.push(OdeLimitEntry {
            eps,
            h: geom_eps.h,
            tau_range: (geom_eps.tau_min(), geom_eps.tau_max()),
            sup_gap,
        });
    }

    // How settled the ODE itself is at the long horizon.
    let ode_equilibrium_gap = {
        let grid = GridPlan::auto(&params, set.spec());
        match find_q_zeros(&params, &grid)?.first() {
            Some(&v_bar) => {
                let g = crate::ingredients::gamma_eval(&params, v_bar)?;
                if g.abs() < 1e-300 {
                    f64::NAN
                } else {
                    let w_bar = params.mu * v_bar / g;
                    let we = *ode_w.last().unwrap();
                    let ve = *ode_v.last().unwrap();
                    (we - w_bar).abs().max((ve - v_bar).abs())
                }
            }
            None => {
                // No positive equilibrium: measure distance to the origin.
                ode_w.last().unwrap().abs().max(ode_v.last().unwrap().abs())
            }
        }
    };

    Ok(OdeLimitReport { entries, ode_equilibrium_gap })
}
