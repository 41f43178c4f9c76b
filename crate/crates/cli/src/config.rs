//! TOML scenario files.
//!
//! ```toml
//! name = "annulus_linear"          # optional, defaults to the file stem
//!
//! [fluid]
//! domain = [0.0, 0.0, 1.0, 1.0]    # xmin, ymin, xmax, ymax
//! nx = 32
//! ny = 32
//! density = 1.0
//! viscosity = 0.1
//! bc_left = "slip"                 # no-slip | slip | free
//! bc_right = "no-slip"
//! bc_bottom = "slip"
//! bc_top = "no-slip"
//!
//! [solid]
//! shape = "annulus"                # annulus (nr, ntheta) | rectangle (domain, nx, ny)
//! nr = 48
//! ntheta = 96
//! stretch = [0.7142857142857143, 1.4]
//!
//! [model]
//! law = "linear"                   # linear (kappa) | exponential (gamma, eta)
//! kappa = 10.0
//!
//! [time]
//! dt = 0.01
//! t_end = 2.0
//!
//! [solver]                         # optional, every key optional
//! precond = "tri"
//! gmres_tol = 1e-8
//! gmres_restart = 200
//! gmres_maxit = 2000
//! newton_tol = 1e-6
//! newton_maxit = 20
//! quad_degree = 6
//! snapshot_every = 25
//!
//! [force]                          # optional point load on the solid
//! target = [0.4, 0.5]
//! direction = [0.0, -1.0]
//! magnitude = 0.2
//! t_start = 0.0
//! t_end = 1.0
//! ```

use std::fs;
use std::path::Path;

use fsi_core::coupling::DEFAULT_DEGREE;
use fsi_core::fem::{BcSpec, VelocityBc};
use fsi_core::geometry::{BoundingBox, Point};
use fsi_core::simulator::{InitialStretch, PointForce, Scenario, SolidShape};
use fsi_core::solid::SolidModel;
use fsi_core::solver::{GmresParams, NewtonParams, PrecondKind};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid value for `{key}`{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Invalid {
        key: String,
        line: Option<usize>,
        message: String,
    },
    #[error("missing key `{key}`{}", line.map(|l| format!(" in section starting at line {l}")).unwrap_or_default())]
    Missing { key: String, line: Option<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    fluid: FluidSection,
    solid: SolidSection,
    model: ModelSection,
    time: TimeSection,
    #[serde(default)]
    solver: SolverSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    force: Option<ForceSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FluidSection {
    domain: [f64; 4],
    nx: usize,
    ny: usize,
    density: f64,
    viscosity: f64,
    bc_left: String,
    bc_right: String,
    bc_bottom: String,
    bc_top: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolidSection {
    shape: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    nr: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ntheta: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    domain: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    nx: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ny: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stretch: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSection {
    law: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    eta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TimeSection {
    dt: f64,
    t_end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SolverSection {
    precond: String,
    gmres_tol: f64,
    gmres_restart: usize,
    gmres_maxit: usize,
    newton_tol: f64,
    newton_maxit: usize,
    quad_degree: usize,
    snapshot_every: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let g = GmresParams::default();
        let n = NewtonParams::default();
        Self {
            precond: PrecondKind::default().to_string(),
            gmres_tol: g.tol,
            gmres_restart: g.restart,
            gmres_maxit: g.maxit,
            newton_tol: n.tol,
            newton_maxit: n.maxit,
            quad_degree: DEFAULT_DEGREE,
            snapshot_every: 25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ForceSection {
    target: [f64; 2],
    direction: [f64; 2],
    magnitude: f64,
    t_start: f64,
    t_end: f64,
}

/// 1-based line of `key` inside `[section]`, or of the section header when
/// `key` is absent.
fn locate(text: &str, section: &str, key: Option<&str>) -> Option<usize> {
    let header = format!("[{section}]");
    let mut in_section = false;
    let mut header_line = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            in_section = line.starts_with(&header);
            if in_section {
                header_line = Some(i + 1);
            }
            continue;
        }
        if in_section {
            if let Some(k) = key {
                let name = line.split('=').next().unwrap_or("").trim();
                if name == k {
                    return Some(i + 1);
                }
            }
        }
    }
    header_line
}

struct Ctx<'a> {
    text: &'a str,
}

impl Ctx<'_> {
    fn invalid(&self, section: &str, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError::Invalid {
            key: format!("{section}.{key}"),
            line: locate(self.text, section, Some(key)),
            message: message.into(),
        }
    }

    fn require<T: Copy>(&self, section: &str, key: &str, v: Option<T>) -> Result<T, ConfigError> {
        v.ok_or_else(|| ConfigError::Missing {
            key: format!("{section}.{key}"),
            line: locate(self.text, section, None),
        })
    }

    fn bc(&self, key: &str, v: &str) -> Result<VelocityBc, ConfigError> {
        v.parse().map_err(|_| self.invalid("fluid", key, format!("unknown boundary condition {v:?}")))
    }

    fn positive(&self, section: &str, key: &str, v: f64) -> Result<f64, ConfigError> {
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(self.invalid(section, key, format!("{v} must be positive")))
        }
    }

    fn count(&self, section: &str, key: &str, v: usize) -> Result<usize, ConfigError> {
        if v > 0 {
            Ok(v)
        } else {
            Err(self.invalid(section, key, "must be at least 1"))
        }
    }
}

fn bbox(d: [f64; 4]) -> Option<BoundingBox> {
    (d[2] > d[0] && d[3] > d[1]).then(|| BoundingBox::new(Point::new(d[0], d[1]), Point::new(d[2], d[3])))
}

fn to_scenario(cfg: FileConfig, text: &str, default_name: &str) -> Result<Scenario, ConfigError> {
    let c = Ctx { text };
    let f = &cfg.fluid;
    let fluid_domain = bbox(f.domain).ok_or_else(|| c.invalid("fluid", "domain", "expected xmin < xmax and ymin < ymax"))?;
    let bc = BcSpec {
        left: c.bc("bc_left", &f.bc_left)?,
        right: c.bc("bc_right", &f.bc_right)?,
        bottom: c.bc("bc_bottom", &f.bc_bottom)?,
        top: c.bc("bc_top", &f.bc_top)?,
    };

    let s = &cfg.solid;
    let solid = match s.shape.as_str() {
        "annulus" => {
            for (k, v) in [("domain", s.domain.is_some()), ("nx", s.nx.is_some()), ("ny", s.ny.is_some())] {
                if v {
                    return Err(c.invalid("solid", k, "not used by shape \"annulus\""));
                }
            }
            SolidShape::Annulus {
                nr: c.count("solid", "nr", c.require("solid", "nr", s.nr)?)?,
                ntheta: c.count("solid", "ntheta", c.require("solid", "ntheta", s.ntheta)?)?,
            }
        }
        "rectangle" => {
            for (k, v) in [("nr", s.nr.is_some()), ("ntheta", s.ntheta.is_some())] {
                if v {
                    return Err(c.invalid("solid", k, "not used by shape \"rectangle\""));
                }
            }
            let d = c.require("solid", "domain", s.domain)?;
            SolidShape::Rectangle {
                domain: bbox(d).ok_or_else(|| c.invalid("solid", "domain", "expected xmin < xmax and ymin < ymax"))?,
                nx: c.count("solid", "nx", c.require("solid", "nx", s.nx)?)?,
                ny: c.count("solid", "ny", c.require("solid", "ny", s.ny)?)?,
            }
        }
        other => return Err(c.invalid("solid", "shape", format!("unknown shape {other:?}"))),
    };
    let [sx, sy] = s.stretch.unwrap_or([1.0, 1.0]);
    let initial = InitialStretch {
        sx: c.positive("solid", "stretch", sx)?,
        sy: c.positive("solid", "stretch", sy)?,
    };

    let m = &cfg.model;
    let model = match m.law.as_str() {
        "linear" => {
            if m.gamma.is_some() || m.eta.is_some() {
                return Err(c.invalid("model", if m.gamma.is_some() { "gamma" } else { "eta" }, "not used by law \"linear\""));
            }
            let kappa = c.require("model", "kappa", m.kappa)?;
            SolidModel::linear(kappa).map_err(|e| c.invalid("model", "kappa", e.to_string()))?
        }
        "exponential" => {
            if m.kappa.is_some() {
                return Err(c.invalid("model", "kappa", "not used by law \"exponential\""));
            }
            let gamma = c.require("model", "gamma", m.gamma)?;
            let eta = c.require("model", "eta", m.eta)?;
            SolidModel::exponential(gamma, eta).map_err(|e| c.invalid("model", "gamma", e.to_string()))?
        }
        other => return Err(c.invalid("model", "law", format!("unknown law {other:?}"))),
    };

    let t = &cfg.time;
    let dt = c.positive("time", "dt", t.dt)?;
    if !(t.t_end >= dt) {
        return Err(c.invalid("time", "t_end", format!("{} must be at least dt = {dt}", t.t_end)));
    }

    let sv = &cfg.solver;
    let precond = sv
        .precond
        .parse()
        .map_err(|_| c.invalid("solver", "precond", format!("unknown preconditioner {:?}", sv.precond)))?;
    let gmres = GmresParams {
        tol: c.positive("solver", "gmres_tol", sv.gmres_tol)?,
        restart: c.count("solver", "gmres_restart", sv.gmres_restart)?,
        maxit: c.count("solver", "gmres_maxit", sv.gmres_maxit)?,
    };
    let newton = NewtonParams {
        tol: c.positive("solver", "newton_tol", sv.newton_tol)?,
        maxit: c.count("solver", "newton_maxit", sv.newton_maxit)?,
    };

    let force = match &cfg.force {
        None => None,
        Some(fc) => {
            let dir = Point::new(fc.direction[0], fc.direction[1]);
            let len = dir.x.hypot(dir.y);
            if !(len > 0.0) {
                return Err(c.invalid("force", "direction", "must be a nonzero vector"));
            }
            if !(fc.t_end >= fc.t_start) {
                return Err(c.invalid("force", "t_end", "must not precede t_start"));
            }
            Some(PointForce {
                target: Point::new(fc.target[0], fc.target[1]),
                direction: Point::new(dir.x / len, dir.y / len),
                magnitude: fc.magnitude,
                t_start: fc.t_start,
                t_end: fc.t_end,
            })
        }
    };

    let scenario = Scenario {
        name: cfg.name.clone().unwrap_or_else(|| default_name.to_string()),
        fluid_domain,
        fluid_nx: c.count("fluid", "nx", f.nx)?,
        fluid_ny: c.count("fluid", "ny", f.ny)?,
        bc,
        solid,
        initial,
        model,
        density: c.positive("fluid", "density", f.density)?,
        viscosity: c.positive("fluid", "viscosity", f.viscosity)?,
        dt,
        t_end: t.t_end,
        force,
        precond,
        gmres,
        newton,
        quad_degree: c.count("solver", "quad_degree", sv.quad_degree)?,
        snapshot_every: c.count("solver", "snapshot_every", sv.snapshot_every)?,
    };
    scenario.validate().map_err(|e| ConfigError::Invalid {
        key: "scenario".into(),
        line: None,
        message: e.to_string(),
    })?;
    Ok(scenario)
}

/// Parse a scenario from TOML text; `default_name` is used when the file has
/// no `name` key.
pub fn parse_config_str(text: &str, default_name: &str) -> Result<Scenario, ConfigError> {
    let cfg: FileConfig = toml::from_str(text)?;
    to_scenario(cfg, text, default_name)
}

pub fn parse_config(path: &Path) -> Result<Scenario, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
    parse_config_str(&text, stem)
}

fn from_scenario(s: &Scenario) -> FileConfig {
    let d = |b: &BoundingBox| [b.min.x, b.min.y, b.max.x, b.max.y];
    let solid = match s.solid {
        SolidShape::Annulus { nr, ntheta } => SolidSection {
            shape: "annulus".into(),
            nr: Some(nr),
            ntheta: Some(ntheta),
            domain: None,
            nx: None,
            ny: None,
            stretch: Some([s.initial.sx, s.initial.sy]),
        },
        SolidShape::Rectangle { domain, nx, ny } => SolidSection {
            shape: "rectangle".into(),
            nr: None,
            ntheta: None,
            domain: Some(d(&domain)),
            nx: Some(nx),
            ny: Some(ny),
            stretch: Some([s.initial.sx, s.initial.sy]),
        },
    };
    let model = match s.model {
        SolidModel::Linear { kappa } => ModelSection {
            law: "linear".into(),
            kappa: Some(kappa),
            gamma: None,
            eta: None,
        },
        SolidModel::Exponential { gamma, eta } => ModelSection {
            law: "exponential".into(),
            kappa: None,
            gamma: Some(gamma),
            eta: Some(eta),
        },
    };
    FileConfig {
        name: Some(s.name.clone()),
        fluid: FluidSection {
            domain: d(&s.fluid_domain),
            nx: s.fluid_nx,
            ny: s.fluid_ny,
            density: s.density,
            viscosity: s.viscosity,
            bc_left: s.bc.left.to_string(),
            bc_right: s.bc.right.to_string(),
            bc_bottom: s.bc.bottom.to_string(),
            bc_top: s.bc.top.to_string(),
        },
        solid,
        model,
        time: TimeSection { dt: s.dt, t_end: s.t_end },
        solver: SolverSection {
            precond: s.precond.to_string(),
            gmres_tol: s.gmres.tol,
            gmres_restart: s.gmres.restart,
            gmres_maxit: s.gmres.maxit,
            newton_tol: s.newton.tol,
            newton_maxit: s.newton.maxit,
            quad_degree: s.quad_degree,
            snapshot_every: s.snapshot_every,
        },
        force: s.force.map(|f| ForceSection {
            target: [f.target.x, f.target.y],
            direction: [f.direction.x, f.direction.y],
            magnitude: f.magnitude,
            t_start: f.t_start,
            t_end: f.t_end,
        }),
    }
}

/// Serialize a scenario in the config format.
pub fn write_config(s: &Scenario) -> String {
    toml::to_string(&from_scenario(s)).expect("scenario serializes")
}
