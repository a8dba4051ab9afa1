//! Run configuration: one TOML file with a section per subcommand.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use lienard::{Expr, Interval, LienardSystem, Perturbation};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub system: SystemConfig,
    pub integrator: IntegratorConfig,
    pub check: CheckConfig,
    pub simulate: SimulateConfig,
    pub roa: RoaConfig,
    pub probe: ProbeConfig,
    pub attract: AttractConfig,
    pub periodic: PeriodicConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            output_dir: PathBuf::from("lienard-out"),
            system: SystemConfig::default(),
            integrator: IntegratorConfig::default(),
            check: CheckConfig::default(),
            simulate: SimulateConfig::default(),
            roa: RoaConfig::default(),
            probe: ProbeConfig::default(),
            attract: AttractConfig::default(),
            periodic: PeriodicConfig::default(),
        }
    }
}

/// Either `builtin = "squares"` or an inline definition with `f`, `g`
/// and `domain` (one `[lo, hi]` pair per coordinate).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub f: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub g: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub domain: Vec<[f64; 2]>,
    /// Closed damping box; defaults to the domain.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub omega: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckConfig {
    pub grid_density: usize,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig { grid_density: 201 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    /// `(x1..xn, y1..yn)`; empty means `x = 0.5`, `y = 0`.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub z0: Vec<f64>,
    pub t_max: f64,
    /// Stop early once `|z|` stays below this radius.
    pub convergence_radius: f64,
    /// Coordinate pair for the phase portrait, e.g. `["x1", "y1"]`.
    pub plot: [String; 2],
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            z0: Vec::new(),
            t_max: 100.0,
            convergence_radius: 1e-9,
            plot: ["x1".into(), "y1".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoaConfig {
    pub resolution: usize,
    /// Positions then velocities; empty means the damping box for positions
    /// and the same half-widths for velocities.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub bounds: Vec<[f64; 2]>,
}

impl Default for RoaConfig {
    fn default() -> Self {
        RoaConfig {
            resolution: 33,
            bounds: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    /// `case_a`, `case_b`, `case_c` or `all`.
    pub stratum: String,
    /// One-based members of `S` for `case_b`; empty cycles every subset.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub subset: Vec<usize>,
    pub count: usize,
    pub horizon: f64,
    pub threshold: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            stratum: "all".into(),
            subset: Vec::new(),
            count: 20,
            horizon: 1.0,
            threshold: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttractConfig {
    pub level: f64,
    pub samples: usize,
    pub t_max: f64,
    pub convergence_radius: f64,
    /// Run even when the hypothesis check does not pass.
    pub allow_failed_check: bool,
}

impl Default for AttractConfig {
    fn default() -> Self {
        AttractConfig {
            level: 1.0,
            samples: 100,
            t_max: 500.0,
            convergence_radius: 1e-3,
            allow_failed_check: false,
        }
    }
}

/// Forcing `h_i = eps c_i cos(2 pi t / T + phi_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PeriodicConfig {
    pub period: f64,
    /// Empty means `c = (1, 0, ..., 0)`.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub amplitudes: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub phases: Vec<f64>,
    pub eps: Vec<f64>,
    /// Initial Newton guess; empty means the origin.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub guess: Vec<f64>,
}

impl Default for PeriodicConfig {
    fn default() -> Self {
        PeriodicConfig {
            period: PI,
            amplitudes: Vec::new(),
            phases: Vec::new(),
            eps: vec![0.2, 0.1, 0.05, 0.025],
            guess: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn build_system(&self) -> Result<LienardSystem, CliError> {
        let s = &self.system;
        let inline = !s.f.is_empty() || !s.g.is_empty();
        let sys = match (&s.builtin, inline) {
            (Some(_), true) => {
                return Err(CliError::Config(
                    "system: give either `builtin` or inline `f`/`g`, not both".into(),
                ))
            }
            (Some(name), false) => LienardSystem::builtin(name).map_err(|e| CliError::Config(e.to_string()))?,
            (None, false) => return Err(CliError::Config("system: no builtin name or inline definition".into())),
            (None, true) => {
                let parse = |v: &[String]| {
                    v.iter()
                        .map(|e| Expr::parse(e))
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|e| CliError::Config(format!("system: {e}")))
                };
                let f = parse(&s.f)?;
                let g = parse(&s.g)?;
                if s.domain.is_empty() {
                    return Err(CliError::Config("system: inline definition needs `domain`".into()));
                }
                let domain: Vec<Interval> = s.domain.iter().map(|[lo, hi]| Interval::new(*lo, *hi)).collect();
                let omega = if s.omega.is_empty() {
                    domain.clone()
                } else {
                    s.omega.iter().map(|[lo, hi]| Interval::new(*lo, *hi)).collect()
                };
                let name = s.name.clone().unwrap_or_else(|| "inline".into());
                LienardSystem::new(name, f, g, omega, domain).map_err(|e| CliError::Config(e.to_string()))?
            }
        };
        if let Some(n) = s.n {
            if n != sys.n {
                return Err(CliError::Config(format!("system: n = {n} but {} equations given", sys.n)));
            }
        }
        Ok(sys)
    }

    pub fn perturbation(&self, n: usize) -> Result<Perturbation, CliError> {
        let p = &self.periodic;
        let amplitudes = if p.amplitudes.is_empty() {
            (0..n).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect()
        } else {
            p.amplitudes.clone()
        };
        let phases = if p.phases.is_empty() { vec![0.0; n] } else { p.phases.clone() };
        Perturbation::cosine(p.period, &amplitudes, &phases).map_err(|e| CliError::Config(format!("periodic: {e}")))
    }

    /// Resolve `"x2"`/`"y1"` style names to flat state indices.
    pub fn plot_axes(&self, n: usize) -> Result<(usize, usize), CliError> {
        let idx = |name: &str| -> Result<usize, CliError> {
            let bad = || CliError::Config(format!("simulate.plot: unknown coordinate {name:?}"));
            let (kind, k) = name.split_at(1.min(name.len()));
            let k: usize = k.parse().map_err(|_| bad())?;
            if k == 0 || k > n {
                return Err(bad());
            }
            match kind {
                "x" => Ok(k - 1),
                "y" => Ok(n + k - 1),
                _ => Err(bad()),
            }
        };
        Ok((idx(&self.simulate.plot[0])?, idx(&self.simulate.plot[1])?))
    }
}
