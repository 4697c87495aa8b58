//! Model ingredients and their sanity checks.
//!
//! The stem compartment is governed by two scalar rate functions of the
//! mature concentration `z`:
//!
//! ```text
//! s(z)     = a / (1 + k z)          fraction of symmetric self-renewal
//! d_w(z)   = p / (1 + kappa z)      stem division rate
//! q(z)     = (2 s(z) - 1) d_w(z) - m
//! gamma(z) = 2 (1 - s(z)) d_w(z)
//! ```
//!
//! Maturation is described by a speed field `g(y, z)` and a loss field
//! `d(y, z)` on maturity levels `y` in an interval `J`, regulated by `z`.
//! Three speed families are built in: a Hill-type regulation, an
//! exponentially decaying regulation, and the constant speed `g = 1`. Their
//! `y`-dependent coefficients are caller-supplied C1 functions ([`Func1`]),
//! so the families double as the hook for custom ingredients.
//!
//! [`derive_geometry`] turns a speed family into certified working bounds:
//! a band `eps_g <= g <= K_g` on the maturity box, the horizon `h = b/K_g`,
//! and the admissible window for the lower threshold `x1`. All denominators
//! of the rational regulations stay above 1/2 because arguments are confined
//! to `z > R_minus` with `R_minus = max(-1/(2 alpha))` over the positive
//! regulation scales.
//!
//! [`check_hypotheses`] evaluates the standing structural assumptions on a
//! sampling grid (plus analytic tail limits of the built-in families) and
//! reports per-predicate verdicts. Verdicts are deliberately labelled
//! "holds on grid": these are numerical checks, not proofs.

use alloc::boxed::Box;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::math;

/// Fallback left endpoint of the concentration domain when no regulation
/// scale is positive.
const R_MINUS_FALLBACK: f64 = -0.5;

/// Declared speed band for the constant-speed family: `g = 1` is certified
/// against the floor 0.5 so that the band stays strict (`eps_g < K_g`).
const UNIT_SPEED_BAND: (f64, f64) = (0.5, 1.0);

/// Geometric tail probes appended to the `z` sampling grid: `z_hi * 2^i`.
const TAIL_PROBE_DOUBLINGS: u32 = 10;

/// Bisection tolerance (in `z`) for certified constants such as the tail
/// margin point `z_star`.
const ROOT_TOL_Z: f64 = 1e-12;

/// Errors from parameter validation, domain checks, and geometry derivation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IngredientsError {
    /// A scalar parameter violates its documented constraint.
    BadParam { name: &'static str, value: f64, constraint: &'static str },
    /// Concentration argument at or below the domain floor `R_minus`.
    DomainZ { z: f64, floor: f64 },
    /// Maturity argument outside the open interval `J`.
    DomainY { y: f64, j_lo: f64, j_hi: f64 },
    /// The maturity box `[x2 - b, x2 + b]` must sit strictly inside `J`.
    BoxOutsideRange { lo: f64, hi: f64, j_lo: f64, j_hi: f64 },
    /// Derived or declared speed floor is not positive.
    SpeedFloorNotPositive { eps_g: f64 },
    /// Speed band degenerates (`eps_g >= K_g`).
    SpeedBandEmpty { eps_g: f64, k_g: f64 },
    /// Hill asymmetry coefficient reaches 1/2 on the box, so no positive
    /// speed floor exists.
    AsymmetryTooLarge { a_bar: f64 },
    /// Sampled sup of `|D1 g|` reaches the admissible bound `K_g / b`.
    SlopeBoundViolated { sup_d1g: f64, bound: f64 },
    /// Lower threshold outside its admissible window.
    X1OutsideWindow { x1: f64, lo: f64, hi: f64 },
    /// Malformed sampling grid.
    BadGrid { what: &'static str },
}

impl fmt::Display for IngredientsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            IngredientsError::BadParam { name, value, constraint } => {
                write!(f, "parameter {name} = {value} violates {constraint}")
            }
            IngredientsError::DomainZ { z, floor } => {
                write!(f, "concentration z = {z} outside domain (R_minus, inf) with R_minus = {floor}")
            }
            IngredientsError::DomainY { y, j_lo, j_hi } => {
                write!(f, "maturity y = {y} outside open interval ({j_lo}, {j_hi})")
            }
            IngredientsError::BoxOutsideRange { lo, hi, j_lo, j_hi } => write!(
                f,
                "maturity box [{lo}, {hi}] must lie strictly inside ({j_lo}, {j_hi})"
            ),
            IngredientsError::SpeedFloorNotPositive { eps_g } => {
                write!(f, "speed floor eps_g = {eps_g} must be positive")
            }
            IngredientsError::SpeedBandEmpty { eps_g, k_g } => {
                write!(f, "speed band is empty: eps_g = {eps_g} >= K_g = {k_g}")
            }
            IngredientsError::AsymmetryTooLarge { a_bar } => write!(
                f,
                "Hill asymmetry sup a_g = {a_bar} >= 0.5 leaves no positive speed floor"
            ),
            IngredientsError::SlopeBoundViolated { sup_d1g, bound } => write!(
                f,
                "sampled sup |D1 g| = {sup_d1g} reaches the bound K_g/b = {bound}"
            ),
            IngredientsError::X1OutsideWindow { x1, lo, hi } => write!(
                f,
                "x1 not in (x2 - b*eps_g/K_g, x2) = ({lo}, {hi}): got {x1}"
            ),
            IngredientsError::BadGrid { what } => write!(f, "bad sampling grid: {what}"),
        }
    }
}

impl core::error::Error for IngredientsError {}

/// Stem compartment parameters. Fields are public for plain-data ergonomics;
/// [`StemParams::new`] and [`StemParams::validate`] are the checked paths and
/// every consumer in this crate revalidates on construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StemParams {
    /// Self-renewal fraction at zero concentration, in `[0, 1)`.
    pub a: f64,
    /// Division rate scale, `>= 0`.
    pub p: f64,
    /// Stem mortality, `>= 0`.
    pub m: f64,
    /// Regulation scale of the renewal fraction, `>= 0`.
    pub k: f64,
    /// Regulation scale of the division rate, `>= 0`.
    pub kappa: f64,
    /// Mature compartment clearance rate, `> 0`.
    pub mu: f64,
}

impl StemParams {
    pub fn new(a: f64, p: f64, m: f64, k: f64, kappa: f64, mu: f64) -> Result<Self, IngredientsError> {
        let params = StemParams { a, p, m, k, kappa, mu };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), IngredientsError> {
        let checks: [(&'static str, f64, bool, &'static str); 6] = [
            ("a", self.a, self.a.is_finite() && (0.0..1.0).contains(&self.a), "0 <= a < 1"),
            ("p", self.p, self.p.is_finite() && self.p >= 0.0, "p >= 0"),
            ("m", self.m, self.m.is_finite() && self.m >= 0.0, "m >= 0"),
            ("k", self.k, self.k.is_finite() && self.k >= 0.0, "k >= 0"),
            ("kappa", self.kappa, self.kappa.is_finite() && self.kappa >= 0.0, "kappa >= 0"),
            ("mu", self.mu, self.mu.is_finite() && self.mu > 0.0, "mu > 0"),
        ];
        for (name, value, ok, constraint) in checks {
            if !ok {
                return Err(IngredientsError::BadParam { name, value, constraint });
            }
        }
        Ok(())
    }

    fn s_frac(&self, z: f64) -> f64 {
        self.a / (1.0 + self.k * z)
    }

    fn d_w(&self, z: f64) -> f64 {
        self.p / (1.0 + self.kappa * z)
    }

    fn q_raw(&self, z: f64) -> f64 {
        (2.0 * self.s_frac(z) - 1.0) * self.d_w(z) - self.m
    }

    fn gamma_raw(&self, z: f64) -> f64 {
        2.0 * (1.0 - self.s_frac(z)) * self.d_w(z)
    }

    /// Limit of `q(z)` as `z -> infinity`.
    pub fn q_limit(&self) -> f64 {
        if self.kappa > 0.0 {
            -self.m
        } else if self.k > 0.0 {
            -self.p - self.m
        } else {
            (2.0 * self.a - 1.0) * self.p - self.m
        }
    }

    /// Limit of `gamma(z)` as `z -> infinity`.
    pub fn gamma_limit(&self) -> f64 {
        if self.kappa > 0.0 {
            0.0
        } else if self.k > 0.0 {
            2.0 * self.p
        } else {
            2.0 * (1.0 - self.a) * self.p
        }
    }

    /// Domain floor induced by the stem regulation scales alone.
    fn own_floor(&self) -> f64 {
        pole_floor([self.k, self.kappa].into_iter())
    }
}

fn pole_floor(alphas: impl Iterator<Item = f64>) -> f64 {
    let mut floor = f64::NEG_INFINITY;
    let mut any = false;
    for alpha in alphas {
        if alpha > 0.0 {
            any = true;
            floor = floor.max(-1.0 / (2.0 * alpha));
        }
    }
    if any {
        floor
    } else {
        R_MINUS_FALLBACK
    }
}

/// Net per-capita stem growth rate `q(z)`, guarded by the params-only domain
/// floor (the full ingredient set applies the tighter floor that also covers
/// the maturation regulation scales).
pub fn q_eval(params: &StemParams, z: f64) -> Result<f64, IngredientsError> {
    let floor = params.own_floor();
    if !(z > floor) || !z.is_finite() {
        return Err(IngredientsError::DomainZ { z, floor });
    }
    Ok(params.q_raw(z))
}

/// Recruitment yield `gamma(z)`, same domain guard as [`q_eval`].
pub fn gamma_eval(params: &StemParams, z: f64) -> Result<f64, IngredientsError> {
    let floor = params.own_floor();
    if !(z > floor) || !z.is_finite() {
        return Err(IngredientsError::DomainZ { z, floor });
    }
    Ok(params.gamma_raw(z))
}

/// A caller-supplied C1 scalar function: value and exact derivative.
pub struct Func1 {
    f: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    df: Box<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl Func1 {
    pub fn new(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Func1 { f: Box::new(f), df: Box::new(df) }
    }

    pub fn constant(c: f64) -> Self {
        Func1::new(move |_| c, |_| 0.0)
    }

    pub fn eval(&self, y: f64) -> f64 {
        (self.f)(y)
    }

    pub fn deriv(&self, y: f64) -> f64 {
        (self.df)(y)
    }
}

impl fmt::Debug for Func1 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Func1 {..}")
    }
}

/// Built-in maturation speed families.
#[derive(Debug)]
pub enum SpeedFamily {
    /// `g(y, z) = 2 [1 - a_g(y) / (1 + k_g z)] p_g(y)`.
    Hill { a_g: Func1, p_g: Func1, k_g: f64 },
    /// `g(y, z) = eps_g + exp(-z) gamma_g(y)`.
    ExpDecay { eps_g: f64, gamma_g: Func1 },
    /// `g = 1`.
    Unit,
}

/// Maturity loss field `d(y, z) = a_d(y) / (1 + k_d z) - mu_d(y)`.
#[derive(Debug)]
pub struct LossField {
    pub a_d: Func1,
    pub mu_d: Func1,
    pub k_d: f64,
}

impl LossField {
    /// The zero loss field (`d = 0`).
    pub fn zero() -> Self {
        LossField { a_d: Func1::constant(0.0), mu_d: Func1::constant(0.0), k_d: 0.0 }
    }
}

/// Maturation side of the model: a speed family plus a loss field.
#[derive(Debug)]
pub struct MaturationSpec {
    pub speed: SpeedFamily,
    pub loss: LossField,
}

impl MaturationSpec {
    pub fn unit(loss: LossField) -> Self {
        MaturationSpec { speed: SpeedFamily::Unit, loss }
    }

    pub fn hill(a_g: Func1, p_g: Func1, k_g: f64, loss: LossField) -> Self {
        MaturationSpec { speed: SpeedFamily::Hill { a_g, p_g, k_g }, loss }
    }

    pub fn exp_decay(eps_g: f64, gamma_g: Func1, loss: LossField) -> Self {
        MaturationSpec { speed: SpeedFamily::ExpDecay { eps_g, gamma_g }, loss }
    }

    fn k_g(&self) -> f64 {
        match self.speed {
            SpeedFamily::Hill { k_g, .. } => k_g,
            _ => 0.0,
        }
    }
}

/// Left endpoint of the admissible concentration interval: the largest
/// `-1/(2 alpha)` over the positive regulation scales `{k, kappa, k_g, k_d}`,
/// or -1/2 when none is positive. Rational denominators then stay above 1/2
/// for all admissible `z`.
pub fn compute_r_minus(params: &StemParams, spec: &MaturationSpec) -> f64 {
    pole_floor([params.k, params.kappa, spec.k_g(), spec.loss.k_d].into_iter())
}

/// Sampling plan for grid-based checks: concentrations on `[0, z_hi]` and
/// maturities across the box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPlan {
    pub z_hi: f64,
    pub z_samples: usize,
    pub y_samples: usize,
}

impl GridPlan {
    pub const DEFAULT_Z_SAMPLES: usize = 2048;
    pub const DEFAULT_Y_SAMPLES: usize = 257;

    pub fn new(z_hi: f64, z_samples: usize, y_samples: usize) -> Result<Self, IngredientsError> {
        if !(z_hi > 0.0) || !z_hi.is_finite() {
            return Err(IngredientsError::BadGrid { what: "z_hi must be positive and finite" });
        }
        if z_samples < 2 || y_samples < 2 {
            return Err(IngredientsError::BadGrid { what: "need at least 2 samples per axis" });
        }
        Ok(GridPlan { z_hi, z_samples, y_samples })
    }

    /// Default plan: `z_hi` is ten times the largest regulation length scale
    /// `1/alpha` (or 10 when no scale is positive).
    pub fn auto(params: &StemParams, spec: &MaturationSpec) -> Self {
        let mut scale = 0.0_f64;
        for alpha in [params.k, params.kappa, spec.k_g(), spec.loss.k_d] {
            if alpha > 0.0 {
                scale = scale.max(1.0 / alpha);
            }
        }
        let z_hi = if scale > 0.0 { 10.0 * scale } else { 10.0 };
        GridPlan { z_hi, z_samples: Self::DEFAULT_Z_SAMPLES, y_samples: Self::DEFAULT_Y_SAMPLES }
    }

    /// Refine by splitting every interval `factor` ways. The refined grid
    /// contains the coarse grid points, so failures can only persist.
    pub fn refine(&self, factor: usize) -> Self {
        GridPlan {
            z_hi: self.z_hi,
            z_samples: (self.z_samples - 1) * factor + 1,
            y_samples: (self.y_samples - 1) * factor + 1,
        }
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let step = (hi - lo) / (n - 1) as f64;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let x = if i == 0 {
            lo
        } else if i == n - 1 {
            hi
        } else {
            lo + step * i as f64
        };
        out.push(x);
    }
    out
}

/// Derived maturation geometry: thresholds, box, certified speed band, and
/// the induced horizon `h = b / K_g`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    /// Lower maturity threshold (maturation finishes here).
    pub x1: f64,
    /// Upper maturity threshold (maturation starts here).
    pub x2: f64,
    /// Box half-width around `x2`.
    pub b: f64,
    /// Certified speed floor on the box.
    pub eps_g: f64,
    /// Certified speed ceiling on the box.
    pub k_g: f64,
    /// Look-back horizon `b / K_g`; every admissible delay is below it.
    pub h: f64,
    /// Open maturity interval containing the box.
    pub j_lo: f64,
    pub j_hi: f64,
    /// Domain floor for concentration arguments.
    pub r_minus: f64,
}

impl Geometry {
    /// Shortest admissible delay `(x2 - x1) / K_g`.
    pub fn tau_min(&self) -> f64 {
        (self.x2 - self.x1) / self.k_g
    }

    /// Longest admissible delay `(x2 - x1) / eps_g`.
    pub fn tau_max(&self) -> f64 {
        (self.x2 - self.x1) / self.eps_g
    }

    /// Open admissible window for `x1`.
    pub fn x1_window(&self) -> (f64, f64) {
        (self.x2 - self.b * self.eps_g / self.k_g, self.x2)
    }

    pub fn box_lo(&self) -> f64 {
        self.x2 - self.b
    }

    pub fn box_hi(&self) -> f64 {
        self.x2 + self.b
    }

    /// Same geometry with a different lower threshold (revalidated).
    pub fn with_x1(&self, x1: f64) -> Result<Geometry, IngredientsError> {
        let (lo, hi) = self.x1_window();
        if !(x1 > lo && x1 < hi) || !x1.is_finite() {
            return Err(IngredientsError::X1OutsideWindow { x1, lo, hi });
        }
        let mut g = *self;
        g.x1 = x1;
        Ok(g)
    }
}

/// Choice of the lower threshold for [`derive_geometry`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum X1Spec {
    /// Midpoint of the admissible window.
    Auto,
    Given(f64),
}

struct SpeedSamples {
    eps_g: f64,
    k_g: f64,
    sup_d1g: f64,
}

/// Sample the speed family over the box and `z` grid (plus tail limits) and
/// certify the band and slope statistics.
fn sample_speed(
    spec: &MaturationSpec,
    ys: &[f64],
    zs: &[f64],
) -> Result<SpeedSamples, IngredientsError> {
    match &spec.speed {
        SpeedFamily::Unit => Ok(SpeedSamples {
            eps_g: UNIT_SPEED_BAND.0,
            k_g: UNIT_SPEED_BAND.1,
            sup_d1g: 0.0,
        }),
        SpeedFamily::Hill { a_g, p_g, k_g } => {
            if !(*k_g >= 0.0) || !k_g.is_finite() {
                return Err(IngredientsError::BadParam {
                    name: "k_g",
                    value: *k_g,
                    constraint: "k_g >= 0",
                });
            }
            let mut a_bar = f64::NEG_INFINITY;
            let mut p_lo = f64::INFINITY;
            let mut sup_g = f64::NEG_INFINITY;
            let mut sup_d1g = 0.0_f64;
            for &y in ys {
                let (a, da) = (a_g.eval(y), a_g.deriv(y));
                let (p, dp) = (p_g.eval(y), p_g.deriv(y));
                if !a.is_finite() || !p.is_finite() || !da.is_finite() || !dp.is_finite() {
                    return Err(IngredientsError::BadParam {
                        name: "a_g/p_g",
                        value: y,
                        constraint: "finite on the box",
                    });
                }
                if a < 0.0 {
                    return Err(IngredientsError::BadParam {
                        name: "a_g",
                        value: a,
                        constraint: "a_g >= 0 on the box",
                    });
                }
                a_bar = a_bar.max(a);
                p_lo = p_lo.min(p);
                // z sweep plus the z -> infinity limit (u -> 0 when k_g > 0).
                let mut us: Vec<f64> = zs.iter().map(|&z| 1.0 / (1.0 + k_g * z)).collect();
                us.push(if *k_g > 0.0 { 0.0 } else { 1.0 });
                for u in us {
                    sup_g = sup_g.max(2.0 * (1.0 - a * u) * p);
                    sup_d1g = sup_d1g.max((2.0 * (1.0 - a * u) * dp - 2.0 * da * u * p).abs());
                }
            }
            if a_bar >= 0.5 {
                return Err(IngredientsError::AsymmetryTooLarge { a_bar });
            }
            let eps_g = 2.0 * (1.0 - 2.0 * a_bar) * p_lo;
            if !(eps_g > 0.0) {
                return Err(IngredientsError::SpeedFloorNotPositive { eps_g });
            }
            Ok(SpeedSamples { eps_g, k_g: sup_g, sup_d1g })
        }
        SpeedFamily::ExpDecay { eps_g, gamma_g } => {
            if !(*eps_g > 0.0) || !eps_g.is_finite() {
                return Err(IngredientsError::SpeedFloorNotPositive { eps_g: *eps_g });
            }
            let mut sup_gamma = f64::NEG_INFINITY;
            let mut sup_dgamma = 0.0_f64;
            for &y in ys {
                let (c, dc) = (gamma_g.eval(y), gamma_g.deriv(y));
                if !c.is_finite() || !dc.is_finite() {
                    return Err(IngredientsError::BadParam {
                        name: "gamma_g",
                        value: y,
                        constraint: "finite on the box",
                    });
                }
                if c < 0.0 {
                    return Err(IngredientsError::BadParam {
                        name: "gamma_g",
                        value: c,
                        constraint: "gamma_g >= 0 on the box",
                    });
                }
                sup_gamma = sup_gamma.max(c);
                sup_dgamma = sup_dgamma.max(dc.abs());
            }
            // For z >= 0 the modulation exp(-z) peaks at z = 0.
            Ok(SpeedSamples { eps_g: *eps_g, k_g: eps_g + sup_gamma, sup_d1g: sup_dgamma })
        }
    }
}

/// Derive the maturation geometry for a speed family.
///
/// Samples the box with `grid.y_samples` maturities and `[0, z_hi]` with
/// `grid.z_samples` concentrations (plus the analytic tail limit of the
/// family), certifies the speed band and the slope bound
/// `sup |D1 g| < K_g / b`, and resolves the lower threshold.
pub fn derive_geometry(
    params: &StemParams,
    spec: &MaturationSpec,
    x2: f64,
    b: f64,
    j_bounds: (f64, f64),
    grid: &GridPlan,
    x1: X1Spec,
) -> Result<Geometry, IngredientsError> {
    params.validate()?;
    if !(b > 0.0) || !b.is_finite() || !x2.is_finite() {
        return Err(IngredientsError::BadParam { name: "b", value: b, constraint: "b > 0" });
    }
    let (j_lo, j_hi) = j_bounds;
    if !(j_lo < x2 - b && x2 + b < j_hi) {
        return Err(IngredientsError::BoxOutsideRange { lo: x2 - b, hi: x2 + b, j_lo, j_hi });
    }
    let ys = linspace(x2 - b, x2 + b, grid.y_samples);
    let zs = linspace(0.0, grid.z_hi, grid.z_samples);
    let samples = sample_speed(spec, &ys, &zs)?;
    if !(samples.eps_g < samples.k_g) {
        return Err(IngredientsError::SpeedBandEmpty { eps_g: samples.eps_g, k_g: samples.k_g });
    }
    let bound = samples.k_g / b;
    if samples.sup_d1g >= bound {
        return Err(IngredientsError::SlopeBoundViolated { sup_d1g: samples.sup_d1g, bound });
    }
    let h = b / samples.k_g;
    let window_lo = x2 - b * samples.eps_g / samples.k_g;
    let x1 = match x1 {
        X1Spec::Auto => x2 - 0.5 * b * samples.eps_g / samples.k_g,
        X1Spec::Given(v) => {
            if !(v > window_lo && v < x2) || !v.is_finite() {
                return Err(IngredientsError::X1OutsideWindow { x1: v, lo: window_lo, hi: x2 });
            }
            v
        }
    };
    Ok(Geometry {
        x1,
        x2,
        b,
        eps_g: samples.eps_g,
        k_g: samples.k_g,
        h,
        j_lo,
        j_hi,
        r_minus: compute_r_minus(params, spec),
    })
}

/// The complete, validated model: stem rates, maturation fields, geometry.
/// Cheap to re-target at a different geometry (the maturation spec is
/// shared), and safe to use from concurrent trajectory evaluations.
#[derive(Debug, Clone)]
pub struct IngredientSet {
    params: StemParams,
    spec: Arc<MaturationSpec>,
    geom: Geometry,
}

impl IngredientSet {
    pub fn new(
        params: StemParams,
        spec: MaturationSpec,
        geom: Geometry,
    ) -> Result<Self, IngredientsError> {
        params.validate()?;
        Ok(IngredientSet { params, spec: Arc::new(spec), geom })
    }

    pub fn params(&self) -> &StemParams {
        &self.params
    }

    pub fn spec(&self) -> &MaturationSpec {
        &self.spec
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geom
    }

    /// Same ingredients over different geometry (shares the maturation spec).
    pub fn with_geometry(&self, geom: Geometry) -> IngredientSet {
        IngredientSet { params: self.params, spec: Arc::clone(&self.spec), geom }
    }

    fn check_z(&self, z: f64) -> Result<(), IngredientsError> {
        if !(z > self.geom.r_minus) || !z.is_finite() {
            return Err(IngredientsError::DomainZ { z, floor: self.geom.r_minus });
        }
        Ok(())
    }

    fn check_y(&self, y: f64) -> Result<(), IngredientsError> {
        if !(y > self.geom.j_lo && y < self.geom.j_hi) {
            return Err(IngredientsError::DomainY { y, j_lo: self.geom.j_lo, j_hi: self.geom.j_hi });
        }
        Ok(())
    }

    /// Net per-capita stem growth rate.
    pub fn q(&self, z: f64) -> Result<f64, IngredientsError> {
        self.check_z(z)?;
        Ok(self.params.q_raw(z))
    }

    /// Recruitment yield.
    pub fn gamma(&self, z: f64) -> Result<f64, IngredientsError> {
        self.check_z(z)?;
        Ok(self.params.gamma_raw(z))
    }

    /// Maturation speed `g(y, z)`.
    pub fn g(&self, y: f64, z: f64) -> Result<f64, IngredientsError> {
        self.check_y(y)?;
        self.check_z(z)?;
        Ok(match &self.spec.speed {
            SpeedFamily::Unit => 1.0,
            SpeedFamily::Hill { a_g, p_g, k_g } => {
                let u = 1.0 / (1.0 + k_g * z);
                2.0 * (1.0 - a_g.eval(y) * u) * p_g.eval(y)
            }
            SpeedFamily::ExpDecay { eps_g, gamma_g } => eps_g + math::exp(-z) * gamma_g.eval(y),
        })
    }

    /// Partial derivative of the speed in the maturity direction.
    pub fn d1g(&self, y: f64, z: f64) -> Result<f64, IngredientsError> {
        self.check_y(y)?;
        self.check_z(z)?;
        Ok(match &self.spec.speed {
            SpeedFamily::Unit => 0.0,
            SpeedFamily::Hill { a_g, p_g, k_g } => {
                let u = 1.0 / (1.0 + k_g * z);
                2.0 * (1.0 - a_g.eval(y) * u) * p_g.deriv(y) - 2.0 * a_g.deriv(y) * u * p_g.eval(y)
            }
            SpeedFamily::ExpDecay { gamma_g, .. } => math::exp(-z) * gamma_g.deriv(y),
        })
    }

    /// Maturity loss rate `d(y, z)`.
    pub fn d(&self, y: f64, z: f64) -> Result<f64, IngredientsError> {
        self.check_y(y)?;
        self.check_z(z)?;
        let loss = &self.spec.loss;
        Ok(loss.a_d.eval(y) / (1.0 + loss.k_d * z) - loss.mu_d.eval(y))
    }
}

/// Structural assumptions checked on a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HypId {
    /// `q` bounded (and C1) on the domain.
    QBounded,
    /// `q(z) < 0` for every positive concentration.
    QNegative,
    /// `q(0) > 0`.
    QPositiveAtZero,
    /// A certified margin in the tail: `q(z) <= -delta` for `z >= z_star`.
    QNegativeTail,
    /// Speed band `eps_g <= g <= K_g` on the box.
    SpeedBand,
    /// Loss field bounded on the box.
    LossBounded,
    /// `gamma` bounded and nonnegative.
    GammaBounded,
    /// Slope bound `sup |D1 g| < K_g / b`.
    SlopeBound,
    /// Lower threshold inside its admissible window.
    ThresholdWindow,
    /// Recruitment is linearly bounded in the stem history (structural),
    /// with a sampled coefficient bound.
    RecruitmentBound,
    /// Uniform positive floor for `gamma` on `[0, infinity)`.
    GammaFloor,
}

impl HypId {
    pub const ALL: [HypId; 11] = [
        HypId::QBounded,
        HypId::QNegative,
        HypId::QPositiveAtZero,
        HypId::QNegativeTail,
        HypId::SpeedBand,
        HypId::LossBounded,
        HypId::GammaBounded,
        HypId::SlopeBound,
        HypId::ThresholdWindow,
        HypId::RecruitmentBound,
        HypId::GammaFloor,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            HypId::QBounded => "q_bounded",
            HypId::QNegative => "q_negative",
            HypId::QPositiveAtZero => "q_positive_at_zero",
            HypId::QNegativeTail => "q_negative_tail",
            HypId::SpeedBand => "speed_band",
            HypId::LossBounded => "loss_bounded",
            HypId::GammaBounded => "gamma_bounded",
            HypId::SlopeBound => "slope_bound",
            HypId::ThresholdWindow => "threshold_window",
            HypId::RecruitmentBound => "recruitment_bound",
            HypId::GammaFloor => "gamma_floor",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// Held at every sampled point (and analytic tail limit).
    HoldsOnGrid,
    /// Violated at a sampled point or in the limit; see the witness.
    Fails,
    /// Not meaningful for this ingredient set.
    NotApplicable,
}

/// A sampled point demonstrating a failure: `value` of the offending
/// quantity at concentration `z` (and maturity `y` for field checks).
/// `z = infinity` marks a violation in the analytic tail limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Witness {
    pub y: Option<f64>,
    pub z: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypEntry {
    pub id: HypId,
    pub verdict: Verdict,
    pub witness: Option<Witness>,
    /// Named extremal values and certified constants backing the verdict.
    pub constants: Vec<(&'static str, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisReport {
    pub entries: Vec<HypEntry>,
}

impl HypothesisReport {
    pub fn get(&self, id: HypId) -> &HypEntry {
        self.entries.iter().find(|e| e.id == id).expect("all hypotheses present")
    }

    pub fn holds(&self, id: HypId) -> bool {
        self.get(id).verdict == Verdict::HoldsOnGrid
    }

    pub fn constant(&self, id: HypId, name: &str) -> Option<f64> {
        self.get(id).constants.iter().find(|(n, _)| *n == name).map(|&(_, v)| v)
    }
}

fn tail_probes(z_hi: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(TAIL_PROBE_DOUBLINGS as usize);
    let mut z = z_hi;
    for _ in 0..TAIL_PROBE_DOUBLINGS {
        z *= 2.0;
        out.push(z);
    }
    out
}

/// Bisect `f` for a sign change on `[lo, hi]` (`f(lo)` and `f(hi)` of
/// opposite sign) until the bracket is shorter than `tol`.
fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64, tol: f64) -> f64 {
    let flo = f(lo);
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let fmid = f(mid);
        if fmid == 0.0 {
            return mid;
        }
        if (fmid > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Evaluate the structural assumptions on the sampling grid, folding in the
/// analytic tail limits of the built-in families. Deterministic: identical
/// inputs produce identical reports. Refining the grid keeps every sampled
/// point, so a failure can never flip back to a pass.
pub fn check_hypotheses(
    set: &IngredientSet,
    grid: &GridPlan,
) -> Result<HypothesisReport, IngredientsError> {
    let params = set.params();
    let geom = *set.geometry();
    let zs = linspace(0.0, grid.z_hi, grid.z_samples);
    let probes = tail_probes(grid.z_hi);
    let ys = linspace(geom.box_lo(), geom.box_hi(), grid.y_samples);
    let mut entries = Vec::with_capacity(HypId::ALL.len());

    // Stem rate scans over the grid and tail probes.
    let mut sup_abs_q = 0.0_f64;
    let mut q_nonneg_witness: Option<(f64, f64)> = None;
    let mut gamma_min = (f64::INFINITY, 0.0_f64);
    let mut gamma_max = f64::NEG_INFINITY;
    let mut gamma_neg_witness: Option<(f64, f64)> = None;
    for &z in zs.iter().chain(probes.iter()) {
        let qv = params.q_raw(z);
        let gv = params.gamma_raw(z);
        sup_abs_q = sup_abs_q.max(qv.abs());
        if z > 0.0 && qv >= 0.0 && q_nonneg_witness.is_none() {
            q_nonneg_witness = Some((z, qv));
        }
        if gv < gamma_min.0 {
            gamma_min = (gv, z);
        }
        gamma_max = gamma_max.max(gv);
        if gv < 0.0 && gamma_neg_witness.is_none() {
            gamma_neg_witness = Some((z, gv));
        }
    }
    let q_inf = params.q_limit();
    let gamma_inf = params.gamma_limit();
    sup_abs_q = sup_abs_q.max(q_inf.abs());
    gamma_max = gamma_max.max(gamma_inf);

    // q bounded: structurally true for the rational family; report the
    // sampled sup and the certain coarse bound.
    entries.push(HypEntry {
        id: HypId::QBounded,
        verdict: Verdict::HoldsOnGrid,
        witness: None,
        constants: alloc::vec![
            ("sup_abs_q", sup_abs_q),
            ("q_limit", q_inf),
            ("coarse_bound", (2.0 * params.a + 1.0) * 2.0 * params.p + params.m),
        ],
    });

    // q negative at all positive concentrations.
    {
        let mut witness = q_nonneg_witness;
        if witness.is_none() && q_inf > 0.0 {
            witness = Some((f64::INFINITY, q_inf));
        }
        entries.push(HypEntry {
            id: HypId::QNegative,
            verdict: if witness.is_none() { Verdict::HoldsOnGrid } else { Verdict::Fails },
            witness: witness.map(|(z, value)| Witness { y: None, z, value }),
            constants: alloc::vec![("q_limit", q_inf)],
        });
    }

    // q positive at zero.
    {
        let q0 = params.q_raw(0.0);
        let holds = q0 > 0.0;
        entries.push(HypEntry {
            id: HypId::QPositiveAtZero,
            verdict: if holds { Verdict::HoldsOnGrid } else { Verdict::Fails },
            witness: if holds { None } else { Some(Witness { y: None, z: 0.0, value: q0 }) },
            constants: alloc::vec![("q0", q0)],
        });
    }

    // Certified negative tail: delta = m/2 when m > 0 (the limit is <= -m in
    // every case of the family), capped by |q_limit|/2 so flat profiles stay
    // covered; z_star is the last sampled crossing of the level -delta.
    {
        if q_inf >= 0.0 {
            entries.push(HypEntry {
                id: HypId::QNegativeTail,
                verdict: Verdict::Fails,
                witness: Some(Witness { y: None, z: f64::INFINITY, value: q_inf }),
                constants: alloc::vec![("q_limit", q_inf)],
            });
        } else {
            let delta = if params.m > 0.0 {
                (params.m / 2.0).min(q_inf.abs() / 2.0)
            } else {
                q_inf.abs() / 2.0
            };
            // Find the last sampled point where q + delta > 0.
            let all: Vec<f64> = zs.iter().chain(probes.iter()).copied().collect();
            let mut last_above: Option<usize> = None;
            for (i, &z) in all.iter().enumerate() {
                if params.q_raw(z) + delta > 0.0 {
                    last_above = Some(i);
                }
            }
            let z_star = match last_above {
                None => 0.0,
                Some(i) if i + 1 >= all.len() => all[i] * 2.0, // margin starts past the probes
                Some(i) => bisect(all[i], all[i + 1], |z| params.q_raw(z) + delta, ROOT_TOL_Z),
            };
            entries.push(HypEntry {
                id: HypId::QNegativeTail,
                verdict: Verdict::HoldsOnGrid,
                witness: None,
                constants: alloc::vec![("delta", delta), ("z_star", z_star), ("q_limit", q_inf)],
            });
        }
    }

    // Speed band, loss bound, slope bound: field scans over box x grid with
    // per-family tail limits.
    let mut inf_g = f64::INFINITY;
    let mut sup_g = f64::NEG_INFINITY;
    let mut band_witness: Option<Witness> = None;
    let mut sup_abs_d = 0.0_f64;
    let mut sup_d1g = 0.0_f64;
    let mut sup_d_minus_d1g = f64::NEG_INFINITY;
    {
        let spec = set.spec();
        let loss = &spec.loss;
        for &y in ys.iter() {
            // Tail limits of each field at this maturity.
            let (g_lim, d1g_lim) = match &spec.speed {
                SpeedFamily::Unit => (1.0, 0.0),
                SpeedFamily::Hill { a_g, p_g, k_g } => {
                    let u = if *k_g > 0.0 { 0.0 } else { 1.0 };
                    (
                        2.0 * (1.0 - a_g.eval(y) * u) * p_g.eval(y),
                        2.0 * (1.0 - a_g.eval(y) * u) * p_g.deriv(y)
                            - 2.0 * a_g.deriv(y) * u * p_g.eval(y),
                    )
                }
                SpeedFamily::ExpDecay { eps_g, .. } => (*eps_g, 0.0),
            };
            let d_lim = if loss.k_d > 0.0 {
                -loss.mu_d.eval(y)
            } else {
                loss.a_d.eval(y) - loss.mu_d.eval(y)
            };
            let mut scan = |z: f64, gv: f64, d1gv: f64, dv: f64| {
                if gv < inf_g {
                    inf_g = gv;
                }
                if gv > sup_g {
                    sup_g = gv;
                }
                let band_tol = 1e-12 * (1.0 + geom.k_g.abs());
                if (gv < geom.eps_g - band_tol || gv > geom.k_g + band_tol) && band_witness.is_none()
                {
                    band_witness = Some(Witness { y: Some(y), z, value: gv });
                }
                sup_abs_d = sup_abs_d.max(dv.abs());
                sup_d1g = sup_d1g.max(d1gv.abs());
                sup_d_minus_d1g = sup_d_minus_d1g.max(dv - d1gv);
            };
            for &z in zs.iter() {
                // In-domain by construction: z >= 0 > r_minus, y inside J.
                let gv = set.g(y, z)?;
                let d1gv = set.d1g(y, z)?;
                let dv = set.d(y, z)?;
                scan(z, gv, d1gv, dv);
            }
            scan(f64::INFINITY, g_lim, d1g_lim, d_lim);
        }
    }

    entries.push(HypEntry {
        id: HypId::SpeedBand,
        verdict: if band_witness.is_none() { Verdict::HoldsOnGrid } else { Verdict::Fails },
        witness: band_witness,
        constants: alloc::vec![
            ("inf_g", inf_g),
            ("sup_g", sup_g),
            ("eps_g", geom.eps_g),
            ("k_g", geom.k_g),
        ],
    });

    entries.push(HypEntry {
        id: HypId::LossBounded,
        verdict: if sup_abs_d.is_finite() { Verdict::HoldsOnGrid } else { Verdict::Fails },
        witness: None,
        constants: alloc::vec![("sup_abs_d", sup_abs_d)],
    });

    entries.push(HypEntry {
        id: HypId::GammaBounded,
        verdict: if gamma_neg_witness.is_none() && gamma_max.is_finite() {
            Verdict::HoldsOnGrid
        } else {
            Verdict::Fails
        },
        witness: gamma_neg_witness.map(|(z, value)| Witness { y: None, z, value }),
        constants: alloc::vec![("sup_gamma", gamma_max)],
    });

    {
        let bound = geom.k_g / geom.b;
        let holds = sup_d1g < bound;
        entries.push(HypEntry {
            id: HypId::SlopeBound,
            verdict: if holds { Verdict::HoldsOnGrid } else { Verdict::Fails },
            witness: None,
            constants: alloc::vec![("sup_abs_d1g", sup_d1g), ("bound", bound)],
        });
    }

    {
        let (lo, hi) = geom.x1_window();
        let holds = geom.x1 > lo && geom.x1 < hi;
        entries.push(HypEntry {
            id: HypId::ThresholdWindow,
            verdict: if holds { Verdict::HoldsOnGrid } else { Verdict::Fails },
            witness: if holds {
                None
            } else {
                Some(Witness { y: None, z: geom.x1, value: geom.x1 })
            },
            constants: alloc::vec![("x1", geom.x1), ("window_lo", lo), ("window_hi", hi)],
        });
    }

    // Recruitment bound: the functional is linear in the delayed stem value
    // with coefficient gamma * g(x2,.)/g(x1,.) * exp(exponent), so a sampled
    // coefficient bound certifies smallness for small stem histories.
    {
        let exp_bound = math::exp(sup_d_minus_d1g.max(0.0) * geom.tau_max());
        let coeff = gamma_max.max(0.0) * (geom.k_g / geom.eps_g) * exp_bound;
        entries.push(HypEntry {
            id: HypId::RecruitmentBound,
            verdict: Verdict::HoldsOnGrid,
            witness: None,
            constants: alloc::vec![
                ("j_coeff_bound", coeff),
                ("exp_bound", exp_bound),
                ("sup_d_minus_d1g", sup_d_minus_d1g),
            ],
        });
    }

    // Uniform gamma floor on [0, inf): sampled infimum and the tail limit.
    {
        let floor = gamma_min.0.min(gamma_inf);
        if floor > 0.0 {
            entries.push(HypEntry {
                id: HypId::GammaFloor,
                verdict: Verdict::HoldsOnGrid,
                witness: None,
                constants: alloc::vec![("eps_gamma", floor)],
            });
        } else {
            // Witness: the sampled point closest to the violation. When only
            // the limit vanishes, the farthest probe is the natural witness.
            let (wv, wz) = if gamma_min.0 <= gamma_inf {
                gamma_min
            } else {
                (params.gamma_raw(*probes.last().expect("probes")), *probes.last().unwrap())
            };
            entries.push(HypEntry {
                id: HypId::GammaFloor,
                verdict: Verdict::Fails,
                witness: Some(Witness { y: None, z: wz, value: wv }),
                constants: alloc::vec![("inf_gamma_sampled", gamma_min.0), ("gamma_limit", gamma_inf)],
            });
        }
    }

    Ok(HypothesisReport { entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gas_params() -> StemParams {
        StemParams::new(0.45, 1.0, 0.1, 1.0, 0.0, 1.0).unwrap()
    }

    fn persistence_params() -> StemParams {
        StemParams::new(0.8, 1.0, 0.3, 1.0, 0.0, 1.0).unwrap()
    }

    fn unit_set(params: StemParams) -> IngredientSet {
        let spec = MaturationSpec::unit(LossField::zero());
        let grid = GridPlan::auto(&params, &spec);
        let geom = derive_geometry(
            &params,
            &spec,
            1.0,
            0.5,
            (0.0, 2.0),
            &grid,
            X1Spec::Given(0.8),
        )
        .unwrap();
        IngredientSet::new(params, spec, geom).unwrap()
    }

    #[test]
    fn q_matches_the_frozen_fixture_values() {
        let p = persistence_params();
        assert!((q_eval(&p, 0.0).unwrap() - 0.3).abs() <= 1e-15);
        // Closed-form zero (2 a p / (p + m) - 1) / k = 3/13.
        let z_bar = 3.0 / 13.0;
        assert!(q_eval(&p, z_bar).unwrap().abs() <= 1e-15);
        let g = gas_params();
        assert!((q_eval(&g, 0.0).unwrap() + 0.2).abs() <= 1e-15);
    }

    #[test]
    fn q_zero_agrees_with_an_independent_bisection() {
        let p = persistence_params();
        // Test-local bisection oracle on [0, 1].
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if q_eval(&p, mid).unwrap() > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((0.5 * (lo + hi) - 3.0 / 13.0).abs() <= 1e-12);
    }

    #[test]
    fn gamma_values_and_limits() {
        let p = persistence_params();
        assert!((gamma_eval(&p, 0.0).unwrap() - 0.4).abs() <= 1e-15);
        // At the equilibrium concentration the yield is 0.7.
        assert!((gamma_eval(&p, 3.0 / 13.0).unwrap() - 0.7).abs() <= 1e-15);
        let a0 = StemParams::new(0.0, 1.3, 0.0, 2.0, 0.0, 1.0).unwrap();
        assert!((gamma_eval(&a0, 0.7).unwrap() - 2.0 * 1.3).abs() <= 1e-15);
        assert!((p.gamma_limit() - 2.0).abs() <= 1e-15);
        let kp = StemParams::new(0.8, 1.0, 0.3, 0.0, 1.0, 1.0).unwrap();
        assert_eq!(kp.gamma_limit(), 0.0);
        assert_eq!(kp.q_limit(), -0.3);
        assert_eq!(p.q_limit(), -1.3);
        let flat = StemParams::new(0.8, 1.0, 0.3, 0.0, 0.0, 1.0).unwrap();
        assert!((flat.q_limit() - ((2.0 * 0.8 - 1.0) * 1.0 - 0.3)).abs() <= 1e-15);
    }

    #[test]
    fn rate_identity_q_plus_m_plus_gamma_equals_division_rate() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let params = StemParams::new(
                rng.gen_range(0.0..0.999),
                rng.gen_range(0.0..2.0),
                rng.gen_range(0.0..2.0),
                rng.gen_range(0.0..3.0),
                rng.gen_range(0.0..3.0),
                rng.gen_range(0.1..2.0),
            )
            .unwrap();
            for _ in 0..20 {
                let z = rng.gen_range(0.0..20.0);
                let lhs = q_eval(&params, z).unwrap() + params.m + gamma_eval(&params, z).unwrap();
                let rhs = params.p / (1.0 + params.kappa * z);
                assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
            }
        }
    }

    #[test]
    fn domain_floor_is_enforced() {
        let p = persistence_params(); // k = 1 -> floor -0.5
        assert!(matches!(q_eval(&p, -0.5), Err(IngredientsError::DomainZ { .. })));
        assert!(q_eval(&p, -0.49).is_ok());
        assert!(matches!(gamma_eval(&p, f64::NAN), Err(IngredientsError::DomainZ { .. })));
    }

    #[test]
    fn r_minus_examples() {
        let p0 = StemParams::new(0.5, 1.0, 0.1, 0.0, 0.0, 1.0).unwrap();
        let spec0 = MaturationSpec::unit(LossField::zero());
        assert_eq!(compute_r_minus(&p0, &spec0), -0.5);
        let p1 = StemParams::new(0.5, 1.0, 0.1, 2.0, 0.0, 1.0).unwrap();
        assert_eq!(compute_r_minus(&p1, &spec0), -0.25);
        let p2 = StemParams::new(0.5, 1.0, 0.1, 1.0, 4.0, 1.0).unwrap();
        assert_eq!(compute_r_minus(&p2, &spec0), -0.125);
        // Maturation scales participate.
        let spec_hill = MaturationSpec::hill(
            Func1::constant(0.4),
            Func1::constant(1.0),
            8.0,
            LossField::zero(),
        );
        assert_eq!(compute_r_minus(&p1, &spec_hill), -0.0625);
    }

    #[test]
    fn unit_speed_geometry() {
        let params = gas_params();
        let spec = MaturationSpec::unit(LossField::zero());
        let grid = GridPlan::auto(&params, &spec);
        let geom =
            derive_geometry(&params, &spec, 1.0, 0.5, (0.0, 2.0), &grid, X1Spec::Auto).unwrap();
        assert_eq!(geom.eps_g, 0.5);
        assert_eq!(geom.k_g, 1.0);
        assert_eq!(geom.h, 0.5);
        let (lo, hi) = geom.x1_window();
        assert!((lo - 0.75).abs() <= 1e-15 && hi == 1.0);
        assert!((geom.x1 - 0.875).abs() <= 1e-15); // midpoint
        let fixed = geom.with_x1(0.8).unwrap();
        assert!((fixed.tau_min() - 0.2).abs() <= 1e-15);
        assert!((fixed.tau_max() - 0.4).abs() <= 1e-15);
        assert!(fixed.tau_max() < fixed.h + 1e-15);
        assert!(matches!(geom.with_x1(0.75), Err(IngredientsError::X1OutsideWindow { .. })));
        assert!(matches!(geom.with_x1(1.0), Err(IngredientsError::X1OutsideWindow { .. })));
    }

    #[test]
    fn hill_speed_floor_matches_the_closed_form() {
        let params = persistence_params();
        let spec = MaturationSpec::hill(
            Func1::constant(0.4),
            Func1::constant(1.0),
            1.0,
            LossField::zero(),
        );
        let grid = GridPlan::auto(&params, &spec);
        let geom =
            derive_geometry(&params, &spec, 1.0, 0.5, (0.0, 2.0), &grid, X1Spec::Auto).unwrap();
        // eps_g = 2 (1 - 2 * 0.4) * 1 = 0.4; ceiling is the tail limit 2 p_g.
        assert!((geom.eps_g - 0.4).abs() <= 1e-15);
        assert!((geom.k_g - 2.0).abs() <= 1e-15);
        assert!((geom.h - 0.25).abs() <= 1e-15);
    }

    #[test]
    fn hill_asymmetry_at_half_is_rejected() {
        let params = persistence_params();
        let spec = MaturationSpec::hill(
            Func1::constant(0.5),
            Func1::constant(1.0),
            1.0,
            LossField::zero(),
        );
        let grid = GridPlan::auto(&params, &spec);
        assert!(matches!(
            derive_geometry(&params, &spec, 1.0, 0.5, (0.0, 2.0), &grid, X1Spec::Auto),
            Err(IngredientsError::AsymmetryTooLarge { .. })
        ));
    }

    #[test]
    fn steep_speed_slope_is_rejected() {
        let params = persistence_params();
        // a_g oscillates fast in y: sampled sup |D1 g| blows past K_g / b.
        let spec = MaturationSpec::hill(
            Func1::new(|y| 0.2 + 0.2 * (50.0 * y).sin(), |y| 10.0 * (50.0 * y).cos()),
            Func1::constant(1.0),
            1.0,
            LossField::zero(),
        );
        let grid = GridPlan::auto(&params, &spec);
        assert!(matches!(
            derive_geometry(&params, &spec, 1.0, 0.5, (0.0, 2.0), &grid, X1Spec::Auto),
            Err(IngredientsError::SlopeBoundViolated { .. })
        ));
    }

    #[test]
    fn box_must_sit_inside_the_maturity_interval() {
        let params = gas_params();
        let spec = MaturationSpec::unit(LossField::zero());
        let grid = GridPlan::auto(&params, &spec);
        assert!(matches!(
            derive_geometry(&params, &spec, 1.0, 0.5, (0.5, 2.0), &grid, X1Spec::Auto),
            Err(IngredientsError::BoxOutsideRange { .. })
        ));
    }

    #[test]
    fn exp_decay_band() {
        let params = gas_params();
        let spec = MaturationSpec::exp_decay(0.5, Func1::constant(1.0), LossField::zero());
        let grid = GridPlan::auto(&params, &spec);
        let geom =
            derive_geometry(&params, &spec, 1.0, 0.5, (0.0, 2.0), &grid, X1Spec::Auto).unwrap();
        assert_eq!(geom.eps_g, 0.5);
        assert_eq!(geom.k_g, 1.5);
        let set = IngredientSet::new(params, spec, geom).unwrap();
        assert!((set.g(1.0, 0.0).unwrap() - 1.5).abs() <= 1e-15);
        assert!(set.g(1.0, 50.0).unwrap() >= 0.5);
        assert_eq!(set.d1g(1.0, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn unit_speed_fields() {
        let set = unit_set(gas_params());
        assert_eq!(set.g(0.9, 5.0).unwrap(), 1.0);
        assert_eq!(set.d1g(0.9, 5.0).unwrap(), 0.0);
        assert_eq!(set.d(0.9, 5.0).unwrap(), 0.0);
        assert!(matches!(set.g(2.5, 0.0), Err(IngredientsError::DomainY { .. })));
        assert!(matches!(set.g(0.9, -0.6), Err(IngredientsError::DomainZ { .. })));
    }

    #[test]
    fn hill_fields_reduce_to_closed_forms() {
        let params = persistence_params();
        // a_g = 0 makes g independent of z: g = 2 p_g(y).
        let spec = MaturationSpec::hill(
            Func1::constant(0.0),
            Func1::new(|y| 1.0 + 0.1 * y, |_| 0.1),
            1.0,
            LossField::zero(),
        );
        let grid = GridPlan::auto(&params, &spec);
        let geom =
            derive_geometry(&params, &spec, 1.0, 0.5, (0.0, 2.0), &grid, X1Spec::Auto).unwrap();
        let set = IngredientSet::new(params, spec, geom).unwrap();
        for &z in &[0.0, 1.0, 7.5] {
            assert!((set.g(1.2, z).unwrap() - 2.0 * 1.12).abs() <= 1e-14);
            assert!((set.d1g(1.2, z).unwrap() - 0.2).abs() <= 1e-14);
        }
    }

    #[test]
    fn loss_field_evaluates_the_rational_form() {
        let params = persistence_params();
        let spec = MaturationSpec {
            speed: SpeedFamily::Unit,
            loss: LossField {
                a_d: Func1::constant(0.2),
                mu_d: Func1::constant(0.05),
                k_d: 2.0,
            },
        };
        let grid = GridPlan::auto(&params, &spec);
        let geom =
            derive_geometry(&params, &spec, 1.0, 0.5, (0.0, 2.0), &grid, X1Spec::Auto).unwrap();
        let set = IngredientSet::new(params, spec, geom).unwrap();
        let want = 0.2 / (1.0 + 2.0 * 1.5) - 0.05;
        assert!((set.d(0.9, 1.5).unwrap() - want).abs() <= 1e-15);
    }

    #[test]
    fn gas_fixture_report() {
        let set = unit_set(gas_params());
        let grid = GridPlan::auto(set.params(), set.spec());
        let report = check_hypotheses(&set, &grid).unwrap();
        assert!(report.holds(HypId::QNegative));
        let h16 = report.get(HypId::QPositiveAtZero);
        assert_eq!(h16.verdict, Verdict::Fails);
        let w = h16.witness.unwrap();
        assert_eq!(w.z, 0.0);
        assert!((w.value + 0.2).abs() <= 1e-15);
        // m/2 margin starts at zero: q(0) = -0.2 is already below -0.05.
        let tail = report.get(HypId::QNegativeTail);
        assert_eq!(tail.verdict, Verdict::HoldsOnGrid);
        assert_eq!(report.constant(HypId::QNegativeTail, "delta"), Some(0.05));
        assert_eq!(report.constant(HypId::QNegativeTail, "z_star"), Some(0.0));
        assert!(report.holds(HypId::SpeedBand));
        assert!(report.holds(HypId::GammaFloor));
        assert!(report.holds(HypId::RecruitmentBound));
        assert!(report.holds(HypId::ThresholdWindow));
    }

    #[test]
    fn persistence_fixture_report() {
        let set = unit_set(persistence_params());
        let grid = GridPlan::auto(set.params(), set.spec());
        let report = check_hypotheses(&set, &grid).unwrap();
        assert!(!report.holds(HypId::QNegative));
        assert!(report.holds(HypId::QPositiveAtZero));
        assert!((report.constant(HypId::QPositiveAtZero, "q0").unwrap() - 0.3).abs() <= 1e-15);
        let tail = report.get(HypId::QNegativeTail);
        assert_eq!(tail.verdict, Verdict::HoldsOnGrid);
        assert_eq!(report.constant(HypId::QNegativeTail, "delta"), Some(0.15));
        // q(z) = 1.6/(1+z) - 1.3 crosses -0.15 at z = 1.6/1.15 - 1.
        let z_star = report.constant(HypId::QNegativeTail, "z_star").unwrap();
        assert!((z_star - (1.6 / 1.15 - 1.0)).abs() <= 1e-9);
        assert!(report.holds(HypId::GammaFloor));
        assert!((report.constant(HypId::GammaFloor, "eps_gamma").unwrap() - 0.4).abs() <= 1e-15);
    }

    #[test]
    fn gamma_floor_fails_when_division_is_regulated() {
        // kappa > 0, k = 0: gamma tends to zero at infinity.
        let params = StemParams::new(0.8, 1.0, 0.3, 0.0, 1.0, 1.0).unwrap();
        let spec = MaturationSpec::unit(LossField::zero());
        let grid = GridPlan::auto(&params, &spec);
        let geom =
            derive_geometry(&params, &spec, 1.0, 0.5, (0.0, 2.0), &grid, X1Spec::Given(0.8)).unwrap();
        let set = IngredientSet::new(params, spec, geom).unwrap();
        let report = check_hypotheses(&set, &grid).unwrap();
        let entry = report.get(HypId::GammaFloor);
        assert_eq!(entry.verdict, Verdict::Fails);
        let w = entry.witness.unwrap();
        assert!(w.z >= grid.z_hi); // witness sits at the far end of the scan
        assert!(w.value > 0.0 && w.value < 1e-2);
        assert!(report.holds(HypId::QPositiveAtZero));
        assert!(report.holds(HypId::QNegativeTail));
    }

    #[test]
    fn refining_the_grid_never_unfails() {
        let params = StemParams::new(0.8, 1.0, 0.3, 0.0, 1.0, 1.0).unwrap();
        let spec = MaturationSpec::unit(LossField::zero());
        let coarse = GridPlan::new(10.0, 33, 17).unwrap();
        let geom =
            derive_geometry(&params, &spec, 1.0, 0.5, (0.0, 2.0), &coarse, X1Spec::Given(0.8))
                .unwrap();
        let set = IngredientSet::new(params, spec, geom).unwrap();
        let report_coarse = check_hypotheses(&set, &coarse).unwrap();
        let report_fine = check_hypotheses(&set, &coarse.refine(8)).unwrap();
        for entry in &report_coarse.entries {
            if entry.verdict == Verdict::Fails {
                assert_eq!(report_fine.get(entry.id).verdict, Verdict::Fails, "{:?}", entry.id);
            }
        }
    }

    #[test]
    fn reports_are_deterministic() {
        let set = unit_set(persistence_params());
        let grid = GridPlan::auto(set.params(), set.spec());
        let r1 = check_hypotheses(&set, &grid).unwrap();
        let r2 = check_hypotheses(&set, &grid).unwrap();
        assert_eq!(r1, r2);
    }

    #[test]
    fn param_validation() {
        assert!(StemParams::new(1.0, 1.0, 0.1, 1.0, 0.0, 1.0).is_err());
        assert!(StemParams::new(-0.1, 1.0, 0.1, 1.0, 0.0, 1.0).is_err());
        assert!(StemParams::new(0.5, -1.0, 0.1, 1.0, 0.0, 1.0).is_err());
        assert!(StemParams::new(0.5, 1.0, 0.1, 1.0, 0.0, 0.0).is_err());
        assert!(StemParams::new(0.5, 1.0, f64::NAN, 1.0, 0.0, 1.0).is_err());
        assert!(StemParams::new(0.5, 1.0, 0.1, 1.0, 0.0, 1.0).is_ok());
    }
}
