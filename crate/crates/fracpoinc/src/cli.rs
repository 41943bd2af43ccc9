//! Command-line front end.
//!
//! Settings come from built-in defaults, then an optional `--config` file of
//! `section.key = value` lines, then `--section.key value` flags, then the
//! global flags.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use crate::assembly::{assemble, AssemblyConfig, FarFieldRule, NonlocalOperator, SeminormKind};
use crate::domain::{build_grid, DomainSpec, GridFunction, Interval};
use crate::eigensolver::{solve, SolverMethod};
use crate::error::{Error, Result};
use crate::experiments::{
    run_angle_certificate, run_cylinder_limit, run_dilation, run_gradient_check, run_identities, run_jobs,
    run_loss_sloan, run_monotonicity, run_oracle, run_picone, run_regional_strip, run_sandwich,
    sweep_cylinders, CylinderGrid, IdentityGrid, Numerics,
};
use crate::report::{fmt_f64, ExperimentReport, CSV_HEADER};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum CommandKind {
    /// Solve for one discrete Poincaré constant and export the eigenfunction.
    Constant,
    /// Cylinder sweep: monotonicity, sandwich bounds and the limit ℓ → ∞.
    Sweep,
    /// Dilation, solver oracle, gradient, regional strip, angle certificate and
    /// directional decomposition checks.
    Verify,
    /// Random checks of the discrete Picone inequality.
    Picone,
    /// Constant, reduction-integral and normalization identities.
    Identities,
}

#[derive(Debug, Parser)]
#[command(name = "fracpoinc", version, about = "Discrete best constants of fractional p-Poincaré inequalities")]
struct Cli {
    /// Configuration file of `section.key = value` lines.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Worker threads [default: all cores].
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Random seed, same as run.seed [default: 7].
    #[arg(long, global = true, value_name = "K")]
    seed: Option<u64>,
    /// Output directory, same as output.dir [default: results].
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Write into a non-empty output directory.
    #[arg(long, global = true)]
    overwrite: bool,
    #[command(subcommand)]
    command: CommandKind,
}

struct Key {
    name: &'static str,
    default: &'static str,
    help: &'static str,
}

const KEYS: &[Key] = &[
    Key { name: "run.seed", default: "7", help: "seed for restarts and random samples" },
    Key { name: "output.dir", default: "results", help: "output directory" },
    Key { name: "output.overwrite", default: "false", help: "allow a non-empty output directory" },
    Key { name: "domain.factors", default: "-1:1", help: "box factors a:b for `constant`" },
    Key { name: "domain.omega1", default: "-1:1", help: "free factors of the cylinder" },
    Key { name: "domain.omega", default: "-1:1", help: "cross-section factors of the cylinder" },
    Key { name: "params.s", default: "0.5", help: "fractional order s in (0,1)" },
    Key { name: "params.p", default: "2", help: "integrability exponent p" },
    Key { name: "params.kind", default: "dirichlet", help: "dirichlet or regional" },
    Key { name: "params.h", default: "1/128", help: "grid spacing for `constant`" },
    Key { name: "sweep.ells", default: "2,4,8,16", help: "increasing cylinder lengths (at least 3)" },
    Key { name: "sweep.h", default: "1/32", help: "grid spacing of the sweep" },
    Key { name: "sweep.p_values", default: "1.5,2,3", help: "exponents swept" },
    Key {
        name: "verify.experiments",
        default: "dilation,oracle,gradient,regional_strip,angle_certificate,loss_sloan",
        help: "checks run by `verify`",
    },
    Key { name: "verify.t_values", default: "0.5,2", help: "dilation factors" },
    Key { name: "verify.dilation_h", default: "1/32", help: "spacing of the dilation check on (-1,1)" },
    Key { name: "verify.dilation_h2", default: "1/8", help: "spacing of the dilation check on (0,1)x(0,2)" },
    Key { name: "verify.oracle_s", default: "0.25,0.5,0.75", help: "orders for the p=2 solver cross-check" },
    Key { name: "verify.oracle_h", default: "1/128", help: "spacing of the p=2 solver cross-check" },
    Key { name: "verify.gradient_trials", default: "50", help: "random (u, direction) pairs per case" },
    Key { name: "verify.strip_s", default: "0.4,0.75", help: "orders of the regional strip runs" },
    Key { name: "verify.strip_p", default: "2", help: "exponent of the regional strip runs" },
    Key { name: "verify.strip_h_list", default: "1/32,1/64,1/128,1/256", help: "refinement levels on (-1,1)" },
    Key { name: "verify.strip_widths", default: "1,2", help: "half-widths W of (-1,1)x(-W,W)" },
    Key { name: "verify.strip_h", default: "1/16", help: "spacing of the strip solves" },
    Key { name: "verify.certificate_s", default: "0.75", help: "order of the angle certificate" },
    Key { name: "verify.angular_nodes", default: "256", help: "directions of the decomposition check" },
    Key { name: "verify.line_nodes", default: "256", help: "line and grid nodes of the decomposition check" },
    Key { name: "picone.trials", default: "10000", help: "random (f, g) pairs per exponent" },
    Key { name: "picone.points", default: "32", help: "points per sample" },
    Key { name: "picone.p_values", default: "1.5,2,3", help: "exponents checked" },
    Key { name: "identities.max_n", default: "6", help: "largest dimension" },
    Key { name: "identities.s_values", default: "0.1,0.25,0.5,0.75,0.9", help: "orders" },
    Key { name: "identities.p_values", default: "1,1.5,2,3,5", help: "exponents" },
    Key { name: "identities.a_values", default: "0.5,1,3", help: "scales of the reduction integral" },
    Key { name: "solver.method", default: "auto", help: "auto, linear or descent" },
    Key { name: "solver.max_iterations", default: "20000", help: "descent iteration cap" },
    Key { name: "solver.tolerance", default: "1e-12", help: "relative decrease counted as a stall" },
    Key { name: "solver.stall_limit", default: "10", help: "consecutive stalls that stop a run" },
    Key { name: "solver.residual_tolerance", default: "1e-3", help: "weak-form residual for convergence" },
    Key { name: "solver.restarts", default: "1", help: "independent seeded starts" },
    Key { name: "solver.memory", default: "10", help: "quasi-Newton correction pairs" },
    Key { name: "solver.dense_threshold", default: "4096", help: "largest dense p=2 solve" },
    Key { name: "solver.initial_step", default: "0.1", help: "first trial step" },
    Key { name: "solver.shrink", default: "0.5", help: "backtracking factor" },
    Key { name: "solver.sufficient_decrease", default: "1e-4", help: "Armijo constant" },
    Key { name: "solver.max_backtracks", default: "40", help: "backtracking steps per iteration" },
    Key { name: "solver.boundary_layer", default: "true", help: "regional kind: zero the boundary cells" },
    Key { name: "assembly.near_field_radius", default: "4", help: "offsets integrated exactly" },
    Key { name: "assembly.subdivision_order", default: "8", help: "initial panels of the near-field rule" },
    Key { name: "assembly.far_field_rule", default: "midpoint", help: "midpoint or exact" },
    Key { name: "assembly.max_nodes", default: "262144", help: "largest grid assembled" },
    Key { name: "assembly.cache_read", default: "", help: "FPNL weight file loaded by `constant`" },
    Key { name: "assembly.cache_write", default: "false", help: "`constant` writes weights.fpnl" },
    Key { name: "experiments.cylinder_grid", default: "stretched", help: "stretched or isotropic" },
    Key { name: "experiments.cutoff_h", default: "1/128", help: "spacing of the cutoff seminorm" },
];

/// Every setting of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub overwrite: bool,
    pub factors: Vec<Interval>,
    pub omega1: Vec<Interval>,
    pub omega: Vec<Interval>,
    pub s: f64,
    pub p: f64,
    pub kind: SeminormKind,
    pub h: f64,
    pub ells: Vec<f64>,
    pub sweep_h: f64,
    pub sweep_p: Vec<f64>,
    pub verify: Vec<String>,
    pub t_values: Vec<f64>,
    pub dilation_h: f64,
    pub dilation_h2: f64,
    pub oracle_s: Vec<f64>,
    pub oracle_h: f64,
    pub gradient_trials: usize,
    pub strip_s: Vec<f64>,
    pub strip_p: f64,
    pub strip_h_list: Vec<f64>,
    pub strip_widths: Vec<f64>,
    pub strip_h: f64,
    pub certificate_s: f64,
    pub angular_nodes: usize,
    pub line_nodes: usize,
    pub picone_trials: usize,
    pub picone_points: usize,
    pub picone_p: Vec<f64>,
    pub identities: IdentityGrid,
    pub cache_read: Option<PathBuf>,
    pub cache_write: bool,
    pub numerics: Numerics,
}

const VERIFY_NAMES: [&str; 6] = ["dilation", "oracle", "gradient", "regional_strip", "angle_certificate", "loss_sloan"];

fn parse_f64(v: &str) -> std::result::Result<f64, String> {
    let v = v.trim();
    let out = match v.split_once('/') {
        Some((a, b)) => {
            let (a, b): (f64, f64) =
                (a.trim().parse().map_err(|_| format!("bad number '{v}'"))?, b.trim().parse().map_err(|_| format!("bad number '{v}'"))?);
            a / b
        }
        None => v.parse().map_err(|_| format!("bad number '{v}'"))?,
    };
    if out.is_finite() {
        Ok(out)
    } else {
        Err(format!("'{v}' is not a finite number"))
    }
}

fn parse_list(v: &str) -> std::result::Result<Vec<f64>, String> {
    v.split(',').filter(|t| !t.trim().is_empty()).map(parse_f64).collect()
}

fn parse_usize(v: &str) -> std::result::Result<usize, String> {
    v.trim().parse().map_err(|_| format!("bad integer '{v}'"))
}

fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(format!("bad boolean '{other}'")),
    }
}

fn parse_factors(v: &str) -> std::result::Result<Vec<Interval>, String> {
    let out: Vec<Interval> = v
        .split(',')
        .map(|t| {
            let (a, b) = t.split_once(':').ok_or_else(|| format!("factor '{t}' is not of the form a:b"))?;
            Interval::new(parse_f64(a)?, parse_f64(b)?).map_err(|e| e.to_string())
        })
        .collect::<std::result::Result<_, _>>()?;
    if out.is_empty() {
        return Err("no factors given".into());
    }
    Ok(out)
}

fn show_factors(f: &[Interval]) -> String {
    f.iter().map(|i| format!("{}:{}", i.a, i.b)).collect::<Vec<_>>().join(",")
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut cfg = RunConfig {
            seed: 0,
            out_dir: PathBuf::new(),
            overwrite: false,
            factors: Vec::new(),
            omega1: Vec::new(),
            omega: Vec::new(),
            s: 0.0,
            p: 0.0,
            kind: SeminormKind::Dirichlet,
            h: 0.0,
            ells: Vec::new(),
            sweep_h: 0.0,
            sweep_p: Vec::new(),
            verify: Vec::new(),
            t_values: Vec::new(),
            dilation_h: 0.0,
            dilation_h2: 0.0,
            oracle_s: Vec::new(),
            oracle_h: 0.0,
            gradient_trials: 0,
            strip_s: Vec::new(),
            strip_p: 0.0,
            strip_h_list: Vec::new(),
            strip_widths: Vec::new(),
            strip_h: 0.0,
            certificate_s: 0.0,
            angular_nodes: 0,
            line_nodes: 0,
            picone_trials: 0,
            picone_points: 0,
            picone_p: Vec::new(),
            identities: IdentityGrid::default(),
            cache_read: None,
            cache_write: false,
            numerics: Numerics::default(),
        };
        for key in KEYS {
            cfg.set(key.name, key.default).expect("built-in default must parse");
        }
        cfg
    }
}

impl RunConfig {
    /// Apply one `section.key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let v = value.trim();
        let solver = &mut self.numerics.solver;
        match key {
            "run.seed" => {
                self.seed = v.parse().map_err(|_| format!("bad seed '{v}'"))?;
                solver.rng_seed = self.seed;
            }
            "output.dir" => self.out_dir = PathBuf::from(v),
            "output.overwrite" => self.overwrite = parse_bool(v)?,
            "domain.factors" => self.factors = parse_factors(v)?,
            "domain.omega1" => self.omega1 = parse_factors(v)?,
            "domain.omega" => self.omega = parse_factors(v)?,
            "params.s" => self.s = parse_f64(v)?,
            "params.p" => self.p = parse_f64(v)?,
            "params.kind" => {
                self.kind = match v {
                    "dirichlet" => SeminormKind::Dirichlet,
                    "regional" => SeminormKind::Regional,
                    _ => return Err(format!("kind must be dirichlet or regional, got '{v}'")),
                }
            }
            "params.h" => self.h = parse_f64(v)?,
            "sweep.ells" => self.ells = parse_list(v)?,
            "sweep.h" => self.sweep_h = parse_f64(v)?,
            "sweep.p_values" => self.sweep_p = parse_list(v)?,
            "verify.experiments" => {
                let names: Vec<String> = v.split(',').map(|t| t.trim().to_string()).filter(|t| !t.is_empty()).collect();
                if let Some(bad) = names.iter().find(|n| !VERIFY_NAMES.contains(&n.as_str())) {
                    return Err(format!("unknown verify experiment '{bad}' (known: {})", VERIFY_NAMES.join(", ")));
                }
                self.verify = names;
            }
            "verify.t_values" => self.t_values = parse_list(v)?,
            "verify.dilation_h" => self.dilation_h = parse_f64(v)?,
            "verify.dilation_h2" => self.dilation_h2 = parse_f64(v)?,
            "verify.oracle_s" => self.oracle_s = parse_list(v)?,
            "verify.oracle_h" => self.oracle_h = parse_f64(v)?,
            "verify.gradient_trials" => self.gradient_trials = parse_usize(v)?,
            "verify.strip_s" => self.strip_s = parse_list(v)?,
            "verify.strip_p" => self.strip_p = parse_f64(v)?,
            "verify.strip_h_list" => self.strip_h_list = parse_list(v)?,
            "verify.strip_widths" => self.strip_widths = parse_list(v)?,
            "verify.strip_h" => self.strip_h = parse_f64(v)?,
            "verify.certificate_s" => self.certificate_s = parse_f64(v)?,
            "verify.angular_nodes" => self.angular_nodes = parse_usize(v)?,
            "verify.line_nodes" => self.line_nodes = parse_usize(v)?,
            "picone.trials" => self.picone_trials = parse_usize(v)?,
            "picone.points" => self.picone_points = parse_usize(v)?,
            "picone.p_values" => self.picone_p = parse_list(v)?,
            "identities.max_n" => self.identities.max_n = parse_usize(v)?,
            "identities.s_values" => self.identities.s_values = parse_list(v)?,
            "identities.p_values" => self.identities.p_values = parse_list(v)?,
            "identities.a_values" => self.identities.a_values = parse_list(v)?,
            "solver.method" => {
                solver.method = match v {
                    "auto" => SolverMethod::Auto,
                    "linear" => SolverMethod::Linear,
                    "descent" => SolverMethod::Descent,
                    _ => return Err(format!("method must be auto, linear or descent, got '{v}'")),
                }
            }
            "solver.max_iterations" => solver.max_iterations = parse_usize(v)?,
            "solver.tolerance" => solver.tolerance = parse_f64(v)?,
            "solver.stall_limit" => solver.stall_limit = parse_usize(v)?,
            "solver.residual_tolerance" => solver.residual_tolerance = parse_f64(v)?,
            "solver.restarts" => solver.restarts = parse_usize(v)?,
            "solver.memory" => solver.memory = parse_usize(v)?,
            "solver.dense_threshold" => solver.dense_threshold = parse_usize(v)?,
            "solver.initial_step" => solver.step.initial_step = parse_f64(v)?,
            "solver.shrink" => solver.step.shrink = parse_f64(v)?,
            "solver.sufficient_decrease" => solver.step.sufficient_decrease = parse_f64(v)?,
            "solver.max_backtracks" => solver.step.max_backtracks = parse_usize(v)?,
            "solver.boundary_layer" => solver.boundary_layer = parse_bool(v)?,
            "assembly.near_field_radius" => self.numerics.assembly.near_field_radius = parse_usize(v)?,
            "assembly.subdivision_order" => self.numerics.assembly.subdivision_order = parse_usize(v)?,
            "assembly.far_field_rule" => {
                self.numerics.assembly.far_field_rule = match v {
                    "midpoint" => FarFieldRule::Midpoint,
                    "exact" => FarFieldRule::Exact,
                    _ => return Err(format!("far-field rule must be midpoint or exact, got '{v}'")),
                }
            }
            "assembly.max_nodes" => self.numerics.assembly.max_nodes = parse_usize(v)?,
            "assembly.cache_read" => self.cache_read = if v.is_empty() { None } else { Some(PathBuf::from(v)) },
            "assembly.cache_write" => self.cache_write = parse_bool(v)?,
            "experiments.cylinder_grid" => {
                self.numerics.cylinder_grid = match v {
                    "stretched" => CylinderGrid::Stretched,
                    "isotropic" => CylinderGrid::Isotropic,
                    _ => return Err(format!("cylinder grid must be stretched or isotropic, got '{v}'")),
                }
            }
            "experiments.cutoff_h" => self.numerics.cutoff_h = parse_f64(v)?,
            _ => match key.strip_prefix("tol.") {
                Some(name) => self.numerics.tolerances.set(name, parse_f64(v)?).map_err(|e| match e {
                    Error::Config { msg, .. } => msg,
                    other => other.to_string(),
                })?,
                None => return Err(format!("unknown key '{key}'")),
            },
        }
        Ok(())
    }

    /// Apply a config file's text; errors carry the 1-based line number.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |msg: String| Error::Config { line: Some(i + 1), msg };
            let (key, value) = line.split_once('=').ok_or_else(|| at(format!("expected `section.key = value`, got '{line}'")))?;
            self.set(key.trim(), value).map_err(at)?;
        }
        Ok(())
    }

    pub fn validate(&self, command: CommandKind) -> Result<()> {
        let need = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(Error::config(msg.to_string())) };
        self.numerics.solver.validate()?;
        self.numerics.assembly.validate()?;
        match command {
            CommandKind::Constant => {
                need(self.h > 0.0, "params.h must be positive")?;
                crate::special_fn::FracParams::new(self.factors.len(), self.s, self.p).map_err(as_config)?;
            }
            CommandKind::Sweep => {
                need(self.ells.len() >= 3, "sweep.ells needs at least 3 lengths")?;
                need(!self.sweep_p.is_empty(), "sweep.p_values is empty")?;
                crate::experiments::validate_ells(&self.ells, &self.omega1)?;
                for &p in &self.sweep_p {
                    crate::special_fn::FracParams::new(self.omega1.len() + self.omega.len(), self.s, p).map_err(as_config)?;
                    need(p > 1.0, "sweep.p_values must exceed 1")?;
                }
            }
            CommandKind::Verify => {
                need(!self.verify.is_empty(), "verify.experiments is empty")?;
                crate::special_fn::FracParams::new(2, self.s, self.p).map_err(as_config)?;
            }
            CommandKind::Picone => {
                need(self.picone_p.iter().all(|&p| p > 1.0), "picone.p_values must exceed 1")?;
                need(self.picone_points >= 2, "picone.points must be at least 2")?;
            }
            CommandKind::Identities => need(self.identities.max_n >= 2, "identities.max_n must be at least 2")?,
        }
        Ok(())
    }

    /// Current values of every key, in `section.key = value` form.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let _ = writeln!(out, "{} = {}", key.name, self.value_of(key.name));
        }
        for (k, v) in self.numerics.tolerances.entries() {
            let _ = writeln!(out, "tol.{k} = {v}");
        }
        out
    }

    fn value_of(&self, key: &str) -> String {
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let solver = &self.numerics.solver;
        let asm = &self.numerics.assembly;
        match key {
            "run.seed" => self.seed.to_string(),
            "output.dir" => self.out_dir.display().to_string(),
            "output.overwrite" => self.overwrite.to_string(),
            "domain.factors" => show_factors(&self.factors),
            "domain.omega1" => show_factors(&self.omega1),
            "domain.omega" => show_factors(&self.omega),
            "params.s" => self.s.to_string(),
            "params.p" => self.p.to_string(),
            "params.kind" => kind_name(self.kind).into(),
            "params.h" => self.h.to_string(),
            "sweep.ells" => list(&self.ells),
            "sweep.h" => self.sweep_h.to_string(),
            "sweep.p_values" => list(&self.sweep_p),
            "verify.experiments" => self.verify.join(","),
            "verify.t_values" => list(&self.t_values),
            "verify.dilation_h" => self.dilation_h.to_string(),
            "verify.dilation_h2" => self.dilation_h2.to_string(),
            "verify.oracle_s" => list(&self.oracle_s),
            "verify.oracle_h" => self.oracle_h.to_string(),
            "verify.gradient_trials" => self.gradient_trials.to_string(),
            "verify.strip_s" => list(&self.strip_s),
            "verify.strip_p" => self.strip_p.to_string(),
            "verify.strip_h_list" => list(&self.strip_h_list),
            "verify.strip_widths" => list(&self.strip_widths),
            "verify.strip_h" => self.strip_h.to_string(),
            "verify.certificate_s" => self.certificate_s.to_string(),
            "verify.angular_nodes" => self.angular_nodes.to_string(),
            "verify.line_nodes" => self.line_nodes.to_string(),
            "picone.trials" => self.picone_trials.to_string(),
            "picone.points" => self.picone_points.to_string(),
            "picone.p_values" => list(&self.picone_p),
            "identities.max_n" => self.identities.max_n.to_string(),
            "identities.s_values" => list(&self.identities.s_values),
            "identities.p_values" => list(&self.identities.p_values),
            "identities.a_values" => list(&self.identities.a_values),
            "solver.method" => format!("{:?}", solver.method).to_lowercase(),
            "solver.max_iterations" => solver.max_iterations.to_string(),
            "solver.tolerance" => solver.tolerance.to_string(),
            "solver.stall_limit" => solver.stall_limit.to_string(),
            "solver.residual_tolerance" => solver.residual_tolerance.to_string(),
            "solver.restarts" => solver.restarts.to_string(),
            "solver.memory" => solver.memory.to_string(),
            "solver.dense_threshold" => solver.dense_threshold.to_string(),
            "solver.initial_step" => solver.step.initial_step.to_string(),
            "solver.shrink" => solver.step.shrink.to_string(),
            "solver.sufficient_decrease" => solver.step.sufficient_decrease.to_string(),
            "solver.max_backtracks" => solver.step.max_backtracks.to_string(),
            "solver.boundary_layer" => solver.boundary_layer.to_string(),
            "assembly.near_field_radius" => asm.near_field_radius.to_string(),
            "assembly.subdivision_order" => asm.subdivision_order.to_string(),
            "assembly.far_field_rule" => format!("{:?}", asm.far_field_rule).to_lowercase(),
            "assembly.max_nodes" => asm.max_nodes.to_string(),
            "assembly.cache_read" => self.cache_read.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            "assembly.cache_write" => self.cache_write.to_string(),
            "experiments.cylinder_grid" => format!("{:?}", self.numerics.cylinder_grid).to_lowercase(),
            "experiments.cutoff_h" => self.numerics.cutoff_h.to_string(),
            _ => String::new(),
        }
    }
}

fn as_config(e: Error) -> Error {
    match e {
        Error::Domain(msg) => Error::config(msg),
        other => other,
    }
}

fn kind_name(kind: SeminormKind) -> &'static str {
    match kind {
        SeminormKind::Dirichlet => "dirichlet",
        SeminormKind::Regional => "regional",
    }
}

fn key_help() -> String {
    let mut s = String::from(
        "Configuration keys (`section.key = value` in --config files, or `--section.key value` flags):\n",
    );
    for k in KEYS {
        let _ = writeln!(s, "  {:<30} {} [default: {}]", k.name, k.help, if k.default.is_empty() { "none" } else { k.default });
    }
    for (k, v) in Numerics::default().tolerances.entries() {
        let _ = writeln!(s, "  {:<30} pass/fail threshold [default: {}]", format!("tol.{k}"), v);
    }
    s.push_str(
        "\nExit codes: 0 pass, 1 configuration error, 2 non-convergence or failed check, 3 internal error.\n",
    );
    s
}

/// Split `--section.key value` and `--section.key=value` overrides off the
/// argument list.
type Overrides = Vec<(String, String)>;

fn split_overrides(args: Vec<String>) -> Result<(Vec<String>, Overrides)> {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    if let Some(prog) = it.next() {
        rest.push(prog);
    }
    while let Some(a) = it.next() {
        let Some(body) = a.strip_prefix("--") else {
            rest.push(a);
            continue;
        };
        let name = body.split('=').next().unwrap_or("");
        if !name.contains('.') {
            rest.push(a);
            continue;
        }
        match body.split_once('=') {
            Some((k, v)) => overrides.push((k.to_string(), v.to_string())),
            None => {
                let v = it.next().ok_or_else(|| Error::config(format!("flag --{body} needs a value")))?;
                overrides.push((body.to_string(), v));
            }
        }
    }
    Ok((rest, overrides))
}

struct Session {
    command: CommandKind,
    cfg: RunConfig,
    threads: Option<usize>,
}

fn configure(args: Vec<String>) -> std::result::Result<Session, (i32, String)> {
    let (rest, overrides) = split_overrides(args).map_err(|e| (EXIT_CONFIG, e.to_string()))?;
    let matches = Cli::command().after_help(key_help()).try_get_matches_from(rest).map_err(|e| {
        let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        (code, e.render().to_string())
    })?;
    let cli = Cli::from_arg_matches(&matches).map_err(|e| (EXIT_CONFIG, e.to_string()))?;
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        let text = fs::read_to_string(path).map_err(|e| (EXIT_CONFIG, format!("cannot read {}: {e}", path.display())))?;
        cfg.apply_text(&text).map_err(|e| (EXIT_CONFIG, format!("{}: {e}", path.display())))?;
    }
    for (k, v) in &overrides {
        cfg.set(k, v).map_err(|msg| (EXIT_CONFIG, format!("configuration error in --{k}: {msg}")))?;
    }
    if let Some(seed) = cli.seed {
        cfg.set("run.seed", &seed.to_string()).map_err(|m| (EXIT_CONFIG, m))?;
    }
    if let Some(out) = cli.out {
        cfg.out_dir = out;
    }
    if cli.overwrite {
        cfg.overwrite = true;
    }
    if cli.threads == Some(0) {
        return Err((EXIT_CONFIG, "configuration error: --threads must be at least 1".into()));
    }
    cfg.validate(cli.command).map_err(|e| (code_for(&e), e.to_string()))?;
    Ok(Session { command: cli.command, cfg, threads: cli.threads })
}

fn code_for(e: &Error) -> i32 {
    match e {
        Error::Config { .. }
        | Error::Usage(_)
        | Error::Domain(_)
        | Error::Resource { .. }
        | Error::Unsupported(_)
        | Error::WeightFile { .. } => EXIT_CONFIG,
        Error::ZeroNorm | Error::Io(_) | Error::Csv(_) => EXIT_INTERNAL,
    }
}

/// Create the output directory; refuse a non-empty one unless overwriting.
fn prepare_output(dir: &Path, overwrite: bool) -> Result<()> {
    if dir.exists() {
        let occupied = fs::read_dir(dir)?.next().is_some();
        if occupied && !overwrite {
            return Err(Error::config(format!(
                "output directory {} is not empty (pass --overwrite to reuse it)",
                dir.display()
            )));
        }
    } else {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

/// Entry point of the binary; returns the process exit code.
pub fn run(args: Vec<String>) -> i32 {
    let session = match configure(args) {
        Ok(s) => s,
        Err((code, msg)) => {
            if code == EXIT_OK {
                print!("{msg}");
            } else {
                eprintln!("{}", msg.trim_end());
            }
            return code;
        }
    };
    if let Some(n) = session.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("internal error: {e}");
            return EXIT_INTERNAL;
        }
    }
    match execute(&session) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{e}");
            code_for(&e)
        }
    }
}

fn execute(session: &Session) -> Result<i32> {
    let cfg = &session.cfg;
    prepare_output(&cfg.out_dir, cfg.overwrite)?;
    fs::write(cfg.out_dir.join("config.txt"), cfg.dump())?;
    match session.command {
        CommandKind::Constant => cmd_constant(cfg),
        CommandKind::Sweep => cmd_sweep(cfg),
        CommandKind::Verify => cmd_verify(cfg),
        CommandKind::Picone => cmd_picone(cfg),
        CommandKind::Identities => cmd_identities(cfg),
    }
}

/// `value` with 12 significant digits in plain notation when reasonable.
pub fn format_significant(value: f64, digits: usize) -> String {
    if value == 0.0 || !value.is_finite() {
        return format!("{value}");
    }
    let exp = value.abs().log10().floor() as i32;
    if (-5..15).contains(&exp) {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        format!("{value:.decimals$}")
    } else {
        format!("{value:.prec$e}", prec = digits - 1)
    }
}

fn constant_operator(cfg: &RunConfig) -> Result<NonlocalOperator> {
    let domain = DomainSpec::boxed(cfg.factors.clone())?;
    let grid = Arc::new(build_grid(&domain, cfg.h)?);
    let asm: &AssemblyConfig = &cfg.numerics.assembly;
    let op = match &cfg.cache_read {
        Some(path) => NonlocalOperator::read_fpnl(path, grid, cfg.s, cfg.p, cfg.kind, asm)?,
        None => assemble(grid, cfg.s, cfg.p, cfg.kind, asm)?,
    };
    if cfg.cache_write {
        op.write_fpnl(&cfg.out_dir.join("weights.fpnl"))?;
    }
    Ok(op)
}

fn cmd_constant(cfg: &RunConfig) -> Result<i32> {
    let started = Instant::now();
    let op = constant_operator(cfg)?;
    let res = solve(&op, &cfg.numerics.solver)?;
    let mut w = csv::Writer::from_path(cfg.out_dir.join("constant.csv"))?;
    w.write_record(["name", "value"])?;
    w.write_record(["lambda", &fmt_f64(res.lambda)])?;
    w.write_record(["residual", &fmt_f64(res.residual)])?;
    w.write_record(["iterations", &res.iterations.to_string()])?;
    w.write_record(["restart_spread", &fmt_f64(res.restart_spread)])?;
    w.write_record(["converged", if res.converged { "true" } else { "false" }])?;
    w.write_record(["nodes", &op.node_count().to_string()])?;
    w.flush()?;
    write_eigenfunction(&cfg.out_dir.join("eigenfunction.csv"), &res.eigenfunction)?;
    let mut summary = String::new();
    let _ = writeln!(summary, "lambda = {}", format_significant(res.lambda, 12));
    let _ = writeln!(summary, "residual = {:.3e}", res.residual);
    let _ = writeln!(summary, "iterations = {}", res.iterations);
    let _ = writeln!(summary, "converged = {}", res.converged);
    let _ = writeln!(summary, "wall time {:.3} s", started.elapsed().as_secs_f64());
    fs::write(cfg.out_dir.join("summary.txt"), summary)?;
    println!("{}", format_significant(res.lambda, 12));
    Ok(if res.converged { EXIT_OK } else { EXIT_NUMERIC })
}

fn write_eigenfunction(path: &Path, u: &GridFunction) -> Result<()> {
    let grid = u.grid();
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..grid.dim()).map(|d| format!("x{d}")).collect();
    header.push("u".into());
    w.write_record(&header)?;
    for (i, v) in u.values().iter().enumerate() {
        let mut row: Vec<String> = grid.node(i).iter().map(|&x| fmt_f64(x)).collect();
        row.push(fmt_f64(*v));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Write one CSV per experiment id plus `summary.txt`; returns the exit code.
fn publish(cfg: &RunConfig, reports: Vec<ExperimentReport>) -> Result<i32> {
    let mut ids: Vec<&str> = Vec::new();
    for r in &reports {
        if !ids.contains(&r.experiment_id.as_str()) {
            ids.push(&r.experiment_id);
        }
    }
    for id in &ids {
        let mut w = csv::Writer::from_path(cfg.out_dir.join(format!("{id}.csv")))?;
        w.write_record(CSV_HEADER)?;
        for r in reports.iter().filter(|r| r.experiment_id == *id) {
            r.write_csv_rows(&mut w)?;
        }
        w.flush()?;
    }
    let mut summary = String::new();
    for r in &reports {
        summary.push_str(&r.summary());
    }
    let pass = reports.iter().all(|r| r.pass);
    let converged = reports.iter().all(|r| r.converged);
    let _ = writeln!(summary, "overall: {}", if pass && converged { "PASS" } else { "FAIL" });
    fs::write(cfg.out_dir.join("summary.txt"), &summary)?;
    for r in &reports {
        println!(
            "{:<18} {}{}",
            r.experiment_id,
            if r.pass { "PASS" } else { "FAIL" },
            if r.converged { "" } else { " (not converged)" }
        );
    }
    Ok(if pass && converged { EXIT_OK } else { EXIT_NUMERIC })
}

fn collect(results: Vec<Result<ExperimentReport>>) -> Result<Vec<ExperimentReport>> {
    results.into_iter().collect()
}

fn cmd_sweep(cfg: &RunConfig) -> Result<i32> {
    let num = &cfg.numerics;
    let mut reports = Vec::new();
    for &p in &cfg.sweep_p {
        let sweep = sweep_cylinders(&cfg.ells, &cfg.omega1, &cfg.omega, cfg.s, p, cfg.sweep_h, num)?;
        reports.push(run_monotonicity(&sweep, num)?);
        reports.push(run_sandwich(&sweep, num)?);
        reports.push(run_cylinder_limit(&sweep, num)?);
    }
    publish(cfg, reports)
}

type Job<'a> = Box<dyn FnOnce() -> Result<ExperimentReport> + Send + 'a>;

fn cmd_verify(cfg: &RunConfig) -> Result<i32> {
    let num = &cfg.numerics;
    let mut jobs: Vec<Job> = Vec::new();
    for name in &cfg.verify {
        match name.as_str() {
            "dilation" => {
                for &t in &cfg.t_values {
                    jobs.push(Box::new(move || {
                        run_dilation(&DomainSpec::interval(-1.0, 1.0)?, t, cfg.s, cfg.p, cfg.dilation_h, num)
                    }));
                    jobs.push(Box::new(move || {
                        let d = DomainSpec::boxed(vec![Interval::new(0.0, 1.0)?, Interval::new(0.0, 2.0)?])?;
                        run_dilation(&d, t, cfg.s, cfg.p, cfg.dilation_h2, num)
                    }));
                }
            }
            "oracle" => {
                for &s in &cfg.oracle_s {
                    jobs.push(Box::new(move || run_oracle(s, cfg.oracle_h, num)));
                }
            }
            "gradient" => jobs.push(Box::new(move || run_gradient_check(cfg.gradient_trials, cfg.seed, num))),
            "regional_strip" => {
                for &s in &cfg.strip_s {
                    jobs.push(Box::new(move || {
                        run_regional_strip(s, cfg.strip_p, &cfg.strip_h_list, &cfg.strip_widths, cfg.strip_h, num)
                    }));
                }
            }
            "angle_certificate" => {
                jobs.push(Box::new(move || certificate_job(cfg, true)));
                jobs.push(Box::new(move || certificate_job(cfg, false)));
            }
            "loss_sloan" => jobs.push(Box::new(move || run_loss_sloan(cfg.s, cfg.p, cfg.angular_nodes, cfg.line_nodes, num))),
            other => return Err(Error::config(format!("unknown verify experiment '{other}'"))),
        }
    }
    let reports = collect(run_jobs(jobs))?;
    publish(cfg, reports)
}

/// Angle certificate on the square strip section, for the tensor bump or the
/// constant with zero boundary cells.
fn certificate_job(cfg: &RunConfig, bump: bool) -> Result<ExperimentReport> {
    let d = DomainSpec::boxed(vec![Interval::new(-1.0, 1.0)?, Interval::new(-1.0, 1.0)?])?;
    let grid = Arc::new(build_grid(&d, cfg.strip_h)?);
    let u = if bump {
        GridFunction::from_fn(grid.clone(), |x| x.iter().map(|&c| (std::f64::consts::PI * c / 2.0).cos().powi(2)).product())
    } else {
        let layer = grid.boundary_layer();
        GridFunction::new(grid.clone(), layer.iter().map(|&b| if b { 0.0 } else { 1.0 }).collect())?
    };
    let mut r = run_angle_certificate(grid, cfg.certificate_s, cfg.strip_p, &u, &cfg.numerics)?;
    r.param("test_function", if bump { "tensor bump" } else { "constant with zero boundary cells" });
    Ok(r)
}

fn cmd_picone(cfg: &RunConfig) -> Result<i32> {
    let num = &cfg.numerics;
    let jobs: Vec<Job> = cfg
        .picone_p
        .iter()
        .map(|&p| Box::new(move || run_picone(cfg.picone_trials, cfg.picone_points, p, cfg.seed, num)) as Job)
        .collect();
    publish(cfg, collect(run_jobs(jobs))?)
}

fn cmd_identities(cfg: &RunConfig) -> Result<i32> {
    let report = run_identities(&cfg.identities, &cfg.numerics)?;
    publish(cfg, vec![report])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_dump() {
        let cfg = RunConfig::default();
        let mut again = RunConfig::default();
        again.apply_text(&cfg.dump()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.h, 1.0 / 128.0);
        assert_eq!(cfg.ells, vec![2.0, 4.0, 8.0, 16.0]);
    }

    #[test]
    fn config_errors_carry_line_numbers() {
        let mut cfg = RunConfig::default();
        let err = cfg.apply_text("# comment\nparams.s = 0.5\nparams.q = 3\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: Some(3), .. }), "{err}");
        let err = cfg.apply_text("params.s 0.5").unwrap_err();
        assert!(matches!(err, Error::Config { line: Some(1), .. }));
    }

    #[test]
    fn overrides_are_split_off() {
        let args = ["fracpoinc", "constant", "--params.s", "0.25", "--solver.method=descent", "--overwrite"];
        let (rest, ov) = split_overrides(args.iter().map(|s| s.to_string()).collect()).unwrap();
        assert_eq!(rest, vec!["fracpoinc", "constant", "--overwrite"]);
        assert_eq!(ov, vec![("params.s".into(), "0.25".into()), ("solver.method".into(), "descent".into())]);
    }

    #[test]
    fn fractions_and_lists_parse() {
        assert_eq!(parse_f64("1/128").unwrap(), 0.0078125);
        assert_eq!(parse_list("0.5, 2,1/4").unwrap(), vec![0.5, 2.0, 0.25]);
        assert!(parse_f64("1/0").is_err());
        assert_eq!(parse_factors("-1:1,0:2").unwrap().len(), 2);
    }

    #[test]
    fn significant_digits() {
        assert_eq!(format_significant(1.155274678906123, 12), "1.15527467891");
        assert_eq!(format_significant(0.0123456789012345, 12), "0.0123456789012");
    }

    #[test]
    fn sweep_rejects_short_lists() {
        let mut cfg = RunConfig::default();
        cfg.set("sweep.ells", "2,4").unwrap();
        assert!(matches!(cfg.validate(CommandKind::Sweep), Err(Error::Config { .. })));
        cfg.set("sweep.ells", "4,2,8").unwrap();
        assert!(cfg.validate(CommandKind::Sweep).is_err());
    }

    #[test]
    fn help_lists_every_key() {
        let help = key_help();
        for k in KEYS {
            assert!(help.contains(k.name), "{}", k.name);
        }
    }
}
