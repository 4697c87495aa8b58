//! Sectioned key-value configuration: parsing, overrides, canonical
//! serialization (hashed into every output file), and model construction.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use stemflow_core::analysis::PersistenceMeasure;
use stemflow_core::delay_kernel::KernelConfig;
use stemflow_core::ingredients::{
    derive_geometry, Func1, GridPlan, IngredientSet, LossField, MaturationSpec, StemParams,
    X1Spec,
};
use stemflow_core::integrator::SolverConfig;

#[derive(Debug)]
pub enum ConfigError {
    Io { path: PathBuf, err: std::io::Error },
    Parse { line: usize, msg: String },
    Validation { msg: String },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io { path, err } => write!(f, "cannot read {}: {err}", path.display()),
            ConfigError::Parse { line, msg } => write!(f, "config line {line}: {msg}"),
            ConfigError::Validation { msg } => write!(f, "invalid configuration: {msg}"),
        }
    }
}

impl std::error::Error for ConfigError {}

/// A numeric setting that may be derived from the model instead of given.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AutoOr {
    Auto,
    Given(f64),
}

impl AutoOr {
    pub fn resolve(self, auto_value: f64) -> f64 {
        match self {
            AutoOr::Auto => auto_value,
            AutoOr::Given(v) => v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Unit,
    Hill,
    ExpDecay,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Unit => "unit",
            Family::Hill => "hill",
            Family::ExpDecay => "exp_decay",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Measure {
    Stem,
    Pair,
}

impl Measure {
    pub fn name(self) -> &'static str {
        match self {
            Measure::Stem => "stem",
            Measure::Pair => "pair",
        }
    }

    pub fn to_core(self) -> PersistenceMeasure {
        match self {
            Measure::Stem => PersistenceMeasure::StemHead,
            Measure::Pair => PersistenceMeasure::PairMin,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub param: String,
    pub values: Vec<f64>,
    pub param2: Option<String>,
    pub values2: Vec<f64>,
}

/// The complete scenario: every knob the tool accepts, with defaults for
/// everything except what a specific run wants to pin down.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    // [stem]
    pub a: f64,
    pub p: f64,
    pub m: f64,
    pub k: f64,
    pub kappa: f64,
    pub mu: f64,
    // [maturation] (per-maturity coefficients are constants in config files)
    pub family: Family,
    pub a_g: f64,
    pub p_g: f64,
    pub k_g: f64,
    pub eps_g: f64,
    pub gamma_g: f64,
    pub loss_a: f64,
    pub loss_mu: f64,
    pub loss_k: f64,
    // [geometry]
    pub x2: f64,
    pub b: f64,
    pub x1: AutoOr,
    pub j_lo: AutoOr,
    pub j_hi: AutoOr,
    pub z_hi: AutoOr,
    pub z_samples: usize,
    pub y_samples: usize,
    // [solver]
    pub dt: AutoOr,
    pub horizon: f64,
    pub passes: usize,
    pub substeps: usize,
    pub tol: f64,
    pub ic_knots: usize,
    // [analysis]
    pub ensemble: usize,
    pub seed: Option<u64>,
    pub window: f64,
    pub atol: f64,
    pub ic_lo: f64,
    pub ic_hi: f64,
    pub ic_w: f64,
    pub ic_v: f64,
    pub measure: Measure,
    // [output]
    pub dir: PathBuf,
    // [sweep]
    pub sweep_param: Option<String>,
    pub sweep_values: Vec<f64>,
    pub sweep_param2: Option<String>,
    pub sweep_values2: Vec<f64>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            a: 0.8,
            p: 1.0,
            m: 0.3,
            k: 1.0,
            kappa: 0.0,
            mu: 1.0,
            family: Family::Unit,
            a_g: 0.4,
            p_g: 1.0,
            k_g: 1.0,
            eps_g: 0.5,
            gamma_g: 0.5,
            loss_a: 0.0,
            loss_mu: 0.0,
            loss_k: 0.0,
            x2: 1.0,
            b: 0.5,
            x1: AutoOr::Auto,
            j_lo: AutoOr::Auto,
            j_hi: AutoOr::Auto,
            z_hi: AutoOr::Auto,
            z_samples: 2048,
            y_samples: 257,
            dt: AutoOr::Auto,
            horizon: 200.0,
            passes: 2,
            substeps: 64,
            tol: 1e-12,
            ic_knots: 65,
            ensemble: 20,
            seed: None,
            window: 50.0,
            atol: 1e-6,
            ic_lo: 0.01,
            ic_hi: 10.0,
            ic_w: 1.0,
            ic_v: 1.0,
            measure: Measure::Stem,
            dir: PathBuf::from("out"),
            sweep_param: None,
            sweep_values: Vec::new(),
            sweep_param2: None,
            sweep_values2: Vec::new(),
        }
    }
}

fn parse_f64(value: &str, line: usize, key: &str) -> Result<f64, ConfigError> {
    let v: f64 = value.parse().map_err(|_| ConfigError::Parse {
        line,
        msg: format!("`{key}` expects a number, got `{value}`"),
    })?;
    if !v.is_finite() {
        return Err(ConfigError::Parse { line, msg: format!("`{key}` must be finite") });
    }
    Ok(v)
}

fn parse_auto(value: &str, line: usize, key: &str) -> Result<AutoOr, ConfigError> {
    if value == "auto" {
        Ok(AutoOr::Auto)
    } else {
        Ok(AutoOr::Given(parse_f64(value, line, key)?))
    }
}

fn parse_usize(value: &str, line: usize, key: &str) -> Result<usize, ConfigError> {
    value.parse().map_err(|_| ConfigError::Parse {
        line,
        msg: format!("`{key}` expects a nonnegative integer, got `{value}`"),
    })
}

fn parse_u64(value: &str, line: usize, key: &str) -> Result<u64, ConfigError> {
    value.parse().map_err(|_| ConfigError::Parse {
        line,
        msg: format!("`{key}` expects a nonnegative integer, got `{value}`"),
    })
}

/// `start:step:stop` (inclusive) or a single number.
fn parse_values(value: &str, line: usize, key: &str) -> Result<Vec<f64>, ConfigError> {
    let parts: Vec<&str> = value.split(':').collect();
    match parts.len() {
        1 => Ok(vec![parse_f64(parts[0], line, key)?]),
        3 => {
            let start = parse_f64(parts[0], line, key)?;
            let step = parse_f64(parts[1], line, key)?;
            let stop = parse_f64(parts[2], line, key)?;
            if step == 0.0 {
                return Err(ConfigError::Parse { line, msg: format!("`{key}`: step must be nonzero") });
            }
            let span = (stop - start) / step;
            if span < -1e-9 {
                return Err(ConfigError::Parse {
                    line,
                    msg: format!("`{key}`: stop is not reachable from start with this step"),
                });
            }
            let n = span.round();
            if (span - n).abs() > 1e-6 {
                return Err(ConfigError::Parse {
                    line,
                    msg: format!("`{key}`: stop is not start + whole steps"),
                });
            }
            let n = n.max(0.0) as usize;
            Ok((0..=n).map(|i| start + step * i as f64).collect())
        }
        _ => Err(ConfigError::Parse {
            line,
            msg: format!("`{key}` expects a number or start:step:stop"),
        }),
    }
}

pub fn parse_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = fs::read_to_string(path)
        .map_err(|err| ConfigError::Io { path: path.to_path_buf(), err })?;
    parse_str(&text)
}

pub fn parse_str(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let mut cfg = ScenarioConfig::default();
    let mut section: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let stripped = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if stripped.is_empty() {
            continue;
        }
        if let Some(rest) = stripped.strip_prefix('[') {
            let Some(name) = rest.strip_suffix(']') else {
                return Err(ConfigError::Parse {
                    line,
                    msg: format!("malformed section header `{stripped}`"),
                });
            };
            let name = name.trim();
            match name {
                "stem" | "maturation" | "geometry" | "solver" | "analysis" | "output"
                | "sweep" => section = Some(name.to_string()),
                _ => {
                    return Err(ConfigError::Parse {
                        line,
                        msg: format!("unknown section `[{name}]`"),
                    })
                }
            }
            continue;
        }
        let Some(eq) = stripped.find('=') else {
            return Err(ConfigError::Parse {
                line,
                msg: format!("expected `key = value`, got `{stripped}`"),
            });
        };
        let key = stripped[..eq].trim();
        let value = stripped[eq + 1..].trim();
        if key.is_empty() || value.is_empty() {
            return Err(ConfigError::Parse {
                line,
                msg: "empty key or value".to_string(),
            });
        }
        let Some(sec) = section.clone() else {
            return Err(ConfigError::Parse {
                line,
                msg: format!("key `{key}` appears before any [section] header"),
            });
        };
        cfg.set_value(&sec, key, value, line)?;
    }
    Ok(cfg)
}

impl ScenarioConfig {
    pub fn set_value(
        &mut self,
        section: &str,
        key: &str,
        value: &str,
        line: usize,
    ) -> Result<(), ConfigError> {
        match (section, key) {
            ("stem", "a") => self.a = parse_f64(value, line, key)?,
            ("stem", "p") => self.p = parse_f64(value, line, key)?,
            ("stem", "m") => self.m = parse_f64(value, line, key)?,
            ("stem", "k") => self.k = parse_f64(value, line, key)?,
            ("stem", "kappa") => self.kappa = parse_f64(value, line, key)?,
            ("stem", "mu") => self.mu = parse_f64(value, line, key)?,
            ("maturation", "family") => {
                self.family = match value {
                    "unit" => Family::Unit,
                    "hill" => Family::Hill,
                    "exp_decay" => Family::ExpDecay,
                    _ => {
                        return Err(ConfigError::Parse {
                            line,
                            msg: format!(
                                "unknown family `{value}` (expected unit, hill, or exp_decay)"
                            ),
                        })
                    }
                }
            }
            ("maturation", "a_g") => self.a_g = parse_f64(value, line, key)?,
            ("maturation", "p_g") => self.p_g = parse_f64(value, line, key)?,
            ("maturation", "k_g") => self.k_g = parse_f64(value, line, key)?,
            ("maturation", "eps_g") => self.eps_g = parse_f64(value, line, key)?,
            ("maturation", "gamma_g") => self.gamma_g = parse_f64(value, line, key)?,
            ("maturation", "loss_a") => self.loss_a = parse_f64(value, line, key)?,
            ("maturation", "loss_mu") => self.loss_mu = parse_f64(value, line, key)?,
            ("maturation", "loss_k") => self.loss_k = parse_f64(value, line, key)?,
            ("geometry", "x2") => self.x2 = parse_f64(value, line, key)?,
            ("geometry", "b") => self.b = parse_f64(value, line, key)?,
            ("geometry", "x1") => self.x1 = parse_auto(value, line, key)?,
            ("geometry", "j_lo") => self.j_lo = parse_auto(value, line, key)?,
            ("geometry", "j_hi") => self.j_hi = parse_auto(value, line, key)?,
            ("geometry", "z_hi") => self.z_hi = parse_auto(value, line, key)?,
            ("geometry", "z_samples") => self.z_samples = parse_usize(value, line, key)?,
            ("geometry", "y_samples") => self.y_samples = parse_usize(value, line, key)?,
            ("solver", "dt") => self.dt = parse_auto(value, line, key)?,
            ("solver", "horizon") => self.horizon = parse_f64(value, line, key)?,
            ("solver", "passes") => self.passes = parse_usize(value, line, key)?,
            ("solver", "substeps") => self.substeps = parse_usize(value, line, key)?,
            ("solver", "tol") => self.tol = parse_f64(value, line, key)?,
            ("solver", "ic_knots") => self.ic_knots = parse_usize(value, line, key)?,
            ("analysis", "ensemble") => self.ensemble = parse_usize(value, line, key)?,
            ("analysis", "seed") => self.seed = Some(parse_u64(value, line, key)?),
            ("analysis", "window") => self.window = parse_f64(value, line, key)?,
            ("analysis", "tol") => self.atol = parse_f64(value, line, key)?,
            ("analysis", "ic_lo") => self.ic_lo = parse_f64(value, line, key)?,
            ("analysis", "ic_hi") => self.ic_hi = parse_f64(value, line, key)?,
            ("analysis", "ic_w") => self.ic_w = parse_f64(value, line, key)?,
            ("analysis", "ic_v") => self.ic_v = parse_f64(value, line, key)?,
            ("analysis", "measure") => {
                self.measure = match value {
                    "stem" => Measure::Stem,
                    "pair" => Measure::Pair,
                    _ => {
                        return Err(ConfigError::Parse {
                            line,
                            msg: format!("unknown measure `{value}` (expected stem or pair)"),
                        })
                    }
                }
            }
            ("output", "dir") => self.dir = PathBuf::from(value),
            ("sweep", "param") => self.sweep_param = Some(value.to_string()),
            ("sweep", "values") => self.sweep_values = parse_values(value, line, key)?,
            ("sweep", "param2") => self.sweep_param2 = Some(value.to_string()),
            ("sweep", "values2") => self.sweep_values2 = parse_values(value, line, key)?,
            _ => {
                return Err(ConfigError::Parse {
                    line,
                    msg: format!("unknown key `{key}` in [{section}]"),
                })
            }
        }
        Ok(())
    }

    /// Apply one `--set section.key=value` override.
    pub fn apply_set(&mut self, spec: &str) -> Result<(), ConfigError> {
        let bad = || ConfigError::Parse {
            line: 0,
            msg: format!("override `{spec}` must look like section.key=value"),
        };
        let eq = spec.find('=').ok_or_else(bad)?;
        let target = spec[..eq].trim();
        let value = spec[eq + 1..].trim();
        let dot = target.find('.').ok_or_else(bad)?;
        let section = &target[..dot];
        let key = &target[dot + 1..];
        if section.is_empty() || key.is_empty() || value.is_empty() {
            return Err(bad());
        }
        self.set_value(section, key, value, 0)
    }

    /// Validated sweep request, if the config has one.
    pub fn sweep(&self) -> Result<Option<SweepSpec>, ConfigError> {
        match (&self.sweep_param, self.sweep_values.is_empty()) {
            (None, true) => {
                if self.sweep_param2.is_some() || !self.sweep_values2.is_empty() {
                    Err(ConfigError::Validation {
                        msg: "[sweep] param2/values2 given without param/values".to_string(),
                    })
                } else {
                    Ok(None)
                }
            }
            (Some(param), false) => {
                let second = match (&self.sweep_param2, self.sweep_values2.is_empty()) {
                    (None, true) => None,
                    (Some(p2), false) => Some(p2.clone()),
                    _ => {
                        return Err(ConfigError::Validation {
                            msg: "[sweep] param2 and values2 must be given together".to_string(),
                        })
                    }
                };
                Ok(Some(SweepSpec {
                    param: param.clone(),
                    values: self.sweep_values.clone(),
                    param2: second,
                    values2: self.sweep_values2.clone(),
                }))
            }
            _ => Err(ConfigError::Validation {
                msg: "[sweep] param and values must be given together".to_string(),
            }),
        }
    }

    /// Canonical serialization: every scenario setting in a fixed order,
    /// floats at 17 significant digits. The config hash recorded in output
    /// files is the SHA-256 of this string, so it covers `--set`/`--seed`
    /// overrides. The output directory is deliberately excluded: it does not
    /// affect results, and the same scenario written to two directories
    /// should produce byte-identical files.
    pub fn canonical_string(&self) -> String {
        fn fx(v: f64) -> String {
            format!("{v:.16e}")
        }
        fn fa(v: AutoOr) -> String {
            match v {
                AutoOr::Auto => "auto".to_string(),
                AutoOr::Given(x) => fx(x),
            }
        }
        let mut s = String::new();
        s.push_str("[stem]\n");
        for (k, v) in [
            ("a", self.a),
            ("p", self.p),
            ("m", self.m),
            ("k", self.k),
            ("kappa", self.kappa),
            ("mu", self.mu),
        ] {
            s.push_str(&format!("{k} = {}\n", fx(v)));
        }
        s.push_str("[maturation]\n");
        s.push_str(&format!("family = {}\n", self.family.name()));
        for (k, v) in [
            ("a_g", self.a_g),
            ("p_g", self.p_g),
            ("k_g", self.k_g),
            ("eps_g", self.eps_g),
            ("gamma_g", self.gamma_g),
            ("loss_a", self.loss_a),
            ("loss_mu", self.loss_mu),
            ("loss_k", self.loss_k),
        ] {
            s.push_str(&format!("{k} = {}\n", fx(v)));
        }
        s.push_str("[geometry]\n");
        s.push_str(&format!("x2 = {}\n", fx(self.x2)));
        s.push_str(&format!("b = {}\n", fx(self.b)));
        s.push_str(&format!("x1 = {}\n", fa(self.x1)));
        s.push_str(&format!("j_lo = {}\n", fa(self.j_lo)));
        s.push_str(&format!("j_hi = {}\n", fa(self.j_hi)));
        s.push_str(&format!("z_hi = {}\n", fa(self.z_hi)));
        s.push_str(&format!("z_samples = {}\n", self.z_samples));
        s.push_str(&format!("y_samples = {}\n", self.y_samples));
        s.push_str("[solver]\n");
        s.push_str(&format!("dt = {}\n", fa(self.dt)));
        s.push_str(&format!("horizon = {}\n", fx(self.horizon)));
        s.push_str(&format!("passes = {}\n", self.passes));
        s.push_str(&format!("substeps = {}\n", self.substeps));
        s.push_str(&format!("tol = {}\n", fx(self.tol)));
        s.push_str(&format!("ic_knots = {}\n", self.ic_knots));
        s.push_str("[analysis]\n");
        s.push_str(&format!("ensemble = {}\n", self.ensemble));
        s.push_str(&format!(
            "seed = {}\n",
            self.seed.map_or("none".to_string(), |v| v.to_string())
        ));
        s.push_str(&format!("window = {}\n", fx(self.window)));
        s.push_str(&format!("tol = {}\n", fx(self.atol)));
        s.push_str(&format!("ic_lo = {}\n", fx(self.ic_lo)));
        s.push_str(&format!("ic_hi = {}\n", fx(self.ic_hi)));
        s.push_str(&format!("ic_w = {}\n", fx(self.ic_w)));
        s.push_str(&format!("ic_v = {}\n", fx(self.ic_v)));
        s.push_str(&format!("measure = {}\n", self.measure.name()));
        s.push_str("[sweep]\n");
        s.push_str(&format!(
            "param = {}\n",
            self.sweep_param.as_deref().unwrap_or("none")
        ));
        s.push_str(&format!(
            "values = {}\n",
            self.sweep_values.iter().map(|&v| fx(v)).collect::<Vec<_>>().join(",")
        ));
        s.push_str(&format!(
            "param2 = {}\n",
            self.sweep_param2.as_deref().unwrap_or("none")
        ));
        s.push_str(&format!(
            "values2 = {}\n",
            self.sweep_values2.iter().map(|&v| fx(v)).collect::<Vec<_>>().join(",")
        ));
        s
    }

    pub fn sha256_hex(&self) -> String {
        let digest = Sha256::digest(self.canonical_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Everything the commands need, constructed and validated once.
#[derive(Debug)]
pub struct BuiltModel {
    pub set: IngredientSet,
    pub solver: SolverConfig,
    pub grid: GridPlan,
    pub kernel: KernelConfig,
}

pub fn build(cfg: &ScenarioConfig) -> Result<BuiltModel, ConfigError> {
    let validation = |e: &dyn fmt::Display| ConfigError::Validation { msg: e.to_string() };

    let params = StemParams::new(cfg.a, cfg.p, cfg.m, cfg.k, cfg.kappa, cfg.mu)
        .map_err(|e| validation(&e))?;
    let loss = LossField {
        a_d: Func1::constant(cfg.loss_a),
        mu_d: Func1::constant(cfg.loss_mu),
        k_d: cfg.loss_k,
    };
    let spec = match cfg.family {
        Family::Unit => MaturationSpec::unit(loss),
        Family::Hill => MaturationSpec::hill(
            Func1::constant(cfg.a_g),
            Func1::constant(cfg.p_g),
            cfg.k_g,
            loss,
        ),
        Family::ExpDecay => {
            MaturationSpec::exp_decay(cfg.eps_g, Func1::constant(cfg.gamma_g), loss)
        }
    };
    let auto_grid = GridPlan::auto(&params, &spec);
    let z_hi = cfg.z_hi.resolve(auto_grid.z_hi);
    let grid =
        GridPlan::new(z_hi, cfg.z_samples, cfg.y_samples).map_err(|e| validation(&e))?;
    let j_lo = cfg.j_lo.resolve(cfg.x2 - 1.5 * cfg.b);
    let j_hi = cfg.j_hi.resolve(cfg.x2 + 1.5 * cfg.b);
    let x1 = match cfg.x1 {
        AutoOr::Auto => X1Spec::Auto,
        AutoOr::Given(v) => X1Spec::Given(v),
    };
    let geom = derive_geometry(&params, &spec, cfg.x2, cfg.b, (j_lo, j_hi), &grid, x1)
        .map_err(|e| validation(&e))?;
    let set = IngredientSet::new(params, spec, geom).map_err(|e| validation(&e))?;
    let kernel = KernelConfig { substeps_per_h: cfg.substeps, threshold_tol: cfg.tol };
    let dt = cfg.dt.resolve(geom.tau_min() / 4.0);
    let solver = SolverConfig::new(&geom, dt, cfg.passes, kernel).map_err(|e| validation(&e))?;
    if !(cfg.horizon > 0.0) || !cfg.horizon.is_finite() {
        return Err(ConfigError::Validation {
            msg: format!("horizon must be positive and finite, got {}", cfg.horizon),
        });
    }
    Ok(BuiltModel { set, solver, grid, kernel })
}
