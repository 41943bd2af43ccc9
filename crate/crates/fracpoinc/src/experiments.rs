//! Reproducible numerical experiments, each producing an [`ExperimentReport`].

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::assembly::{
    abs_power, assemble, directional_decomposition, rayleigh, signed_power, AssemblyConfig, FarFieldRule,
    NonlocalOperator, SeminormKind,
};
use crate::domain::{build_cylinder_grid, build_grid, cylinder, dilate, DomainSpec, Grid, GridFunction, Interval};
use crate::eigensolver::{
    check_first_eigen_properties, cutoff_seminorm, separable_upper_bound, solve, EigenResult, SolverConfig,
    SolverMethod,
};
use crate::error::{Error, Result};
use crate::quadrature::{integrate, QuadTol};
use crate::report::{ExperimentReport, Fit, Relation};
use crate::special_fn::{c_flap, cos_power_integral, sphere_area, theta, FracParams};

/// Every pass/fail threshold used by the experiments.
#[derive(Debug, Clone, PartialEq)]
pub struct Tolerances {
    /// Relative error of λ(tΩ, th)·t^{sp} against λ(Ω, h).
    pub dilation: f64,
    /// Allowed increase of λ(Ω_ℓ) as ℓ grows.
    pub monotone_slack: f64,
    /// Slack on both sides of the cylinder sandwich.
    pub sandwich: f64,
    /// Relative gap between the extrapolated cylinder constant and P²(ω).
    pub cylinder_limit: f64,
    /// Relative gap between the linear and descent solvers at p = 2.
    pub oracle: f64,
    /// Largest λ(h/2)/λ(h) when the regional constant degenerates.
    pub degeneracy_step: f64,
    /// Largest λ(h_last)/λ(h_first) when the regional constant degenerates.
    pub degeneracy_total: f64,
    /// Largest successive relative change of a nondegenerate regional constant.
    pub refinement_change: f64,
    pub picone: f64,
    pub constant_identity: f64,
    pub reduction_quadrature: f64,
    pub cos_integral: f64,
    pub normalization: f64,
    pub loss_sloan_gap: f64,
    /// Required gap ratio when the directional node counts double.
    pub loss_sloan_ratio: f64,
    pub gradient_order: f64,
    /// Relative central-difference error of the energy gradient.
    pub gradient_fd: f64,
    /// Relative weak-form residual accepted by the eigenfunction check.
    pub weak_form: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            dilation: 1e-8,
            monotone_slack: 1e-6,
            sandwich: 1e-6,
            cylinder_limit: 0.05,
            oracle: 1e-5,
            degeneracy_step: 0.9,
            degeneracy_total: 0.5,
            refinement_change: 0.05,
            picone: 1e-12,
            constant_identity: 1e-10,
            reduction_quadrature: 1e-5,
            cos_integral: 1e-6,
            normalization: 1e-10,
            loss_sloan_gap: 1e-2,
            loss_sloan_ratio: 0.5,
            gradient_order: 1.9,
            gradient_fd: 1e-6,
            weak_form: 1e-3,
        }
    }
}

impl Tolerances {
    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("dilation", self.dilation),
            ("monotone_slack", self.monotone_slack),
            ("sandwich", self.sandwich),
            ("cylinder_limit", self.cylinder_limit),
            ("oracle", self.oracle),
            ("degeneracy_step", self.degeneracy_step),
            ("degeneracy_total", self.degeneracy_total),
            ("refinement_change", self.refinement_change),
            ("picone", self.picone),
            ("constant_identity", self.constant_identity),
            ("reduction_quadrature", self.reduction_quadrature),
            ("cos_integral", self.cos_integral),
            ("normalization", self.normalization),
            ("loss_sloan_gap", self.loss_sloan_gap),
            ("loss_sloan_ratio", self.loss_sloan_ratio),
            ("gradient_order", self.gradient_order),
            ("gradient_fd", self.gradient_fd),
            ("weak_form", self.weak_form),
        ]
    }

    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        let slot = match key {
            "dilation" => &mut self.dilation,
            "monotone_slack" => &mut self.monotone_slack,
            "sandwich" => &mut self.sandwich,
            "cylinder_limit" => &mut self.cylinder_limit,
            "oracle" => &mut self.oracle,
            "degeneracy_step" => &mut self.degeneracy_step,
            "degeneracy_total" => &mut self.degeneracy_total,
            "refinement_change" => &mut self.refinement_change,
            "picone" => &mut self.picone,
            "constant_identity" => &mut self.constant_identity,
            "reduction_quadrature" => &mut self.reduction_quadrature,
            "cos_integral" => &mut self.cos_integral,
            "normalization" => &mut self.normalization,
            "loss_sloan_gap" => &mut self.loss_sloan_gap,
            "loss_sloan_ratio" => &mut self.loss_sloan_ratio,
            "gradient_order" => &mut self.gradient_order,
            "gradient_fd" => &mut self.gradient_fd,
            "weak_form" => &mut self.weak_form,
            _ => return Err(Error::config(format!("unknown tolerance '{key}'"))),
        };
        if !(value >= 0.0) || !value.is_finite() {
            return Err(Error::config(format!("tolerance {key} = {value} must be finite and nonnegative")));
        }
        *slot = value;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CylinderGrid {
    /// Free axes keep the cell count of ω₁ (spacing ℓh).
    Stretched,
    /// Spacing h on every axis.
    Isotropic,
}

/// Numerical settings shared by all experiments.
#[derive(Debug, Clone, PartialEq)]
pub struct Numerics {
    pub solver: SolverConfig,
    pub assembly: AssemblyConfig,
    pub cylinder_grid: CylinderGrid,
    /// Grid spacing for the cutoff seminorm in the separable bound.
    pub cutoff_h: f64,
    pub tolerances: Tolerances,
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics {
            solver: SolverConfig::default(),
            assembly: AssemblyConfig::default(),
            cylinder_grid: CylinderGrid::Stretched,
            cutoff_h: 1.0 / 128.0,
            tolerances: Tolerances::default(),
        }
    }
}

fn start_report(id: &str, num: &Numerics) -> ExperimentReport {
    let mut r = ExperimentReport::new(id);
    for (k, v) in num.tolerances.entries() {
        r.param(&format!("tol.{k}"), v);
    }
    r
}

fn finish(mut r: ExperimentReport, started: Instant) -> ExperimentReport {
    r.refresh();
    r.wall_time = started.elapsed().as_secs_f64();
    r
}

fn kind_name(kind: SeminormKind) -> &'static str {
    match kind {
        SeminormKind::Regional => "regional",
        SeminormKind::Dirichlet => "dirichlet",
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn solve_grid(grid: Grid, s: f64, p: f64, kind: SeminormKind, num: &Numerics) -> Result<(NonlocalOperator, EigenResult)> {
    let op = assemble(Arc::new(grid), s, p, kind, &num.assembly)?;
    let res = solve(&op, &num.solver)?;
    Ok((op, res))
}

fn track(r: &mut ExperimentReport, label: &str, res: &EigenResult) {
    if !res.converged {
        r.converged = false;
        r.note(format!("{label}: solver did not converge (residual {:.3e})", res.residual));
    }
}

/// λ(tΩ, th)·t^{sp} against λ(Ω, h) for both kinds.
pub fn run_dilation(domain: &DomainSpec, t: f64, s: f64, p: f64, h: f64, num: &Numerics) -> Result<ExperimentReport> {
    let started = Instant::now();
    let scaled = dilate(domain, t)?;
    let mut r = start_report("dilation", num);
    r.param("domain", describe_box(domain.factors()))
        .param("t", t)
        .param("s", s)
        .param("p", p)
        .param("h", h);
    let sp = s * p;
    for kind in [SeminormKind::Dirichlet, SeminormKind::Regional] {
        let name = kind_name(kind);
        let (_, base) = solve_grid(build_grid(domain, h)?, s, p, kind, num)?;
        let (_, dil) = solve_grid(build_grid(&scaled, t * h)?, s, p, kind, num)?;
        track(&mut r, &format!("{name} base"), &base);
        track(&mut r, &format!("{name} dilated"), &dil);
        let rescaled = dil.lambda * t.powf(sp);
        r.measure(&format!("{name}.lambda"), base.lambda);
        r.measure(&format!("{name}.lambda_dilated"), dil.lambda);
        r.check(
            format!("{name}: |lambda(t*Omega)*t^sp - lambda(Omega)|/lambda(Omega)"),
            rel_err(rescaled, base.lambda),
            Relation::Le,
            num.tolerances.dilation,
        );
    }
    Ok(finish(r, started))
}

fn describe_box(factors: &[Interval]) -> String {
    factors.iter().map(|f| format!("({},{})", f.a, f.b)).collect::<Vec<_>>().join("x")
}

/// Solves of P²(Ω_ℓ) over a list of lengths plus the cross-section constant.
#[derive(Debug, Clone)]
pub struct CylinderSweep {
    pub ells: Vec<f64>,
    pub omega1: Vec<Interval>,
    pub omega: Vec<Interval>,
    pub s: f64,
    pub p: f64,
    pub h: f64,
    pub results: Vec<EigenResult>,
    pub cross: EigenResult,
}

impl CylinderSweep {
    pub fn lambdas(&self) -> Vec<f64> {
        self.results.iter().map(|r| r.lambda).collect()
    }

    fn annotate(&self, r: &mut ExperimentReport) {
        r.param("ells", join(&self.ells))
            .param("omega1", describe_box(&self.omega1))
            .param("omega", describe_box(&self.omega))
            .param("s", self.s)
            .param("p", self.p)
            .param("h", self.h);
        track(r, "cross-section", &self.cross);
        for (ell, res) in self.ells.iter().zip(&self.results) {
            track(r, &format!("ell={ell}"), res);
        }
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

pub fn validate_ells(ells: &[f64], omega1: &[Interval]) -> Result<()> {
    if ells.is_empty() {
        return Err(Error::config("the list of cylinder lengths is empty"));
    }
    if ells.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
        return Err(Error::config("cylinder lengths must be positive"));
    }
    if ells.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::config("cylinder lengths must be strictly increasing"));
    }
    if omega1.iter().any(|f| !(f.a < 0.0 && f.b > 0.0)) {
        return Err(Error::config("0 must lie inside omega1 so that the cylinders are nested"));
    }
    Ok(())
}

pub fn cylinder_grid(ell: f64, omega1: &[Interval], omega: &[Interval], h: f64, num: &Numerics) -> Result<Grid> {
    let c = cylinder(ell, omega1, omega)?;
    match num.cylinder_grid {
        CylinderGrid::Stretched => build_cylinder_grid(&c, h),
        CylinderGrid::Isotropic => build_grid(&c, h),
    }
}

/// Dirichlet solves on ℓω₁ × ω for each ℓ and on ω itself.
pub fn sweep_cylinders(
    ells: &[f64],
    omega1: &[Interval],
    omega: &[Interval],
    s: f64,
    p: f64,
    h: f64,
    num: &Numerics,
) -> Result<CylinderSweep> {
    validate_ells(ells, omega1)?;
    let cross_grid = build_grid(&DomainSpec::boxed(omega.to_vec())?, h)?;
    let (_, cross) = solve_grid(cross_grid, s, p, SeminormKind::Dirichlet, num)?;
    let mut results = Vec::with_capacity(ells.len());
    for &ell in ells {
        let grid = cylinder_grid(ell, omega1, omega, h, num)?;
        results.push(solve_grid(grid, s, p, SeminormKind::Dirichlet, num)?.1);
    }
    Ok(CylinderSweep { ells: ells.to_vec(), omega1: omega1.to_vec(), omega: omega.to_vec(), s, p, h, results, cross })
}

/// λ(Ω_ℓ) non-increasing in ℓ and bounded below by P²(ω).
pub fn run_monotonicity(sweep: &CylinderSweep, num: &Numerics) -> Result<ExperimentReport> {
    let started = Instant::now();
    let mut r = start_report("monotonicity", num);
    sweep.annotate(&mut r);
    let lambdas = sweep.lambdas();
    let slack = num.tolerances.monotone_slack;
    r.measure("cross_section.lambda", sweep.cross.lambda);
    for (ell, l) in sweep.ells.iter().zip(&lambdas) {
        r.measure(&format!("lambda.ell={ell}"), *l);
    }
    for k in 1..lambdas.len() {
        r.check(
            format!("lambda(ell={}) <= lambda(ell={}) + slack", sweep.ells[k], sweep.ells[k - 1]),
            lambdas[k],
            Relation::Le,
            lambdas[k - 1] + slack,
        );
    }
    for (ell, l) in sweep.ells.iter().zip(&lambdas) {
        r.check(format!("lambda(ell={ell}) >= P(omega) - slack"), *l, Relation::Ge, sweep.cross.lambda - slack);
    }
    Ok(finish(r, started))
}

/// Least-squares a, b in d(ℓ) ≈ a ℓ^{-s} + b ℓ^{-sp}.
fn fit_two_term(ells: &[f64], d: &[f64], s: f64, p: f64) -> Option<(f64, f64, f64)> {
    let (mut a11, mut a12, mut a22, mut r1, mut r2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&l, &y) in ells.iter().zip(d) {
        let (x1, x2) = (l.powf(-s), l.powf(-s * p));
        a11 += x1 * x1;
        a12 += x1 * x2;
        a22 += x2 * x2;
        r1 += x1 * y;
        r2 += x2 * y;
    }
    let det = a11 * a22 - a12 * a12;
    if ells.len() < 2 || det.abs() <= 1e-14 * a11 * a22 {
        return None;
    }
    let a = (r1 * a22 - r2 * a12) / det;
    let b = (a11 * r2 - a12 * r1) / det;
    let res = ells
        .iter()
        .zip(d)
        .map(|(&l, &y)| (a * l.powf(-s) + b * l.powf(-s * p) - y).powi(2))
        .sum::<f64>()
        .sqrt();
    Some((a, b, res))
}

/// P²(ω) ≤ P²(Ω_ℓ) ≤ P²(ω) + C₁/ℓ^s + C₂/ℓ^{sp}, plus the decay fit.
pub fn run_sandwich(sweep: &CylinderSweep, num: &Numerics) -> Result<ExperimentReport> {
    let started = Instant::now();
    let mut r = start_report("sandwich", num);
    sweep.annotate(&mut r);
    r.param("cutoff_h", num.cutoff_h);
    let (s, p) = (sweep.s, sweep.p);
    let seminorm = cutoff_seminorm(sweep.omega1.len(), s, p, num.cutoff_h)?.value;
    let cross = sweep.cross.lambda;
    let tol = num.tolerances.sandwich;
    r.measure("cross_section.lambda", cross).measure("cutoff_seminorm", seminorm);
    let mut c = (0.0, 0.0);
    for (&ell, res) in sweep.ells.iter().zip(&sweep.results) {
        let bound = separable_upper_bound(ell, &sweep.cross, seminorm, true, s, p)?;
        c = (bound.c1, bound.c2);
        r.measure(&format!("lambda.ell={ell}"), res.lambda);
        r.measure(&format!("upper_bound.ell={ell}"), bound.expanded);
        r.check(format!("lambda(ell={ell}) >= P(omega) - tol"), res.lambda, Relation::Ge, cross - tol);
        r.check(format!("lambda(ell={ell}) <= P(omega) + C1/ell^s + C2/ell^sp + tol"), res.lambda, Relation::Le, bound.expanded + tol);
    }
    r.measure("C1", c.0).measure("C2", c.1);
    let excess: Vec<f64> = sweep.results.iter().map(|res| res.lambda - cross).collect();
    if let Some((a, b, res)) = fit_two_term(&sweep.ells, &excess, s, p) {
        r.fit = Some(Fit {
            model: "lambda - P(omega) = a*ell^-s + b*ell^-sp".into(),
            coefficients: vec![("a".into(), a), ("b".into(), b)],
            residual: res,
        });
    }
    let k = sweep.ells.len();
    if k >= 2 && excess[k - 1] > 0.0 && excess[k - 2] > 0.0 {
        let slope = -(excess[k - 1] / excess[k - 2]).ln() / (sweep.ells[k - 1] / sweep.ells[k - 2]).ln();
        r.measure("decay_exponent", slope);
    } else {
        r.note("decay exponent not measured: need two lengths with lambda above P(omega)");
    }
    Ok(finish(r, started))
}

/// Fraction of the L^p mass in the outer half of the free directions.
fn outer_mass_fraction(u: &GridFunction, omega1: &[Interval], ell: f64, p: f64) -> f64 {
    let grid = u.grid();
    let (mut outer, mut total) = (0.0, 0.0);
    for (i, &v) in u.values().iter().enumerate() {
        let x = grid.node(i);
        let w = abs_power(v, p);
        total += w;
        let far = omega1.iter().enumerate().any(|(d, f)| {
            let centre = ell * (f.a + f.b) / 2.0;
            (x[d] - centre).abs() > ell * f.len() / 4.0
        });
        if far {
            outer += w;
        }
    }
    if total > 0.0 {
        outer / total
    } else {
        0.0
    }
}

/// λ(Ω_ℓ) extrapolated in ℓ^{-s} against the directly solved P²(ω).
pub fn run_cylinder_limit(sweep: &CylinderSweep, num: &Numerics) -> Result<ExperimentReport> {
    let started = Instant::now();
    let k = sweep.ells.len();
    if k < 3 {
        return Err(Error::config(format!("cylinder limit needs at least 3 lengths, got {k}")));
    }
    let mut r = start_report("cylinder_limit", num);
    sweep.annotate(&mut r);
    let (s, p) = (sweep.s, sweep.p);
    let cross = sweep.cross.lambda;
    let lambdas = sweep.lambdas();
    let (x1, x2) = (sweep.ells[k - 2].powf(-s), sweep.ells[k - 1].powf(-s));
    let extrapolated = (lambdas[k - 1] * x1 - lambdas[k - 2] * x2) / (x1 - x2);
    r.measure("cross_section.lambda", cross).measure("extrapolated", extrapolated);
    r.check("|extrapolated - P(omega)|/P(omega)", rel_err(extrapolated, cross), Relation::Le, num.tolerances.cylinder_limit);
    for (ell, res) in sweep.ells.iter().zip(&sweep.results) {
        r.measure(&format!("outer_mass.ell={ell}"), outer_mass_fraction(&res.eigenfunction, &sweep.omega1, *ell, p));
    }
    if p == 2.0 {
        let grid = build_grid(&DomainSpec::boxed(sweep.omega.clone())?, sweep.h)?;
        let op = assemble(Arc::new(grid), s, p, SeminormKind::Dirichlet, &num.assembly)?;
        let descent = solve(&op, &SolverConfig { method: SolverMethod::Descent, ..num.solver.clone() })?;
        track(&mut r, "cross-section descent", &descent);
        r.measure("cross_section.lambda_descent", descent.lambda);
        r.check("cross-section |descent - linear|/linear", rel_err(descent.lambda, cross), Relation::Le, num.tolerances.oracle);
    }
    r.note("outer_mass values are a spreading diagnostic only");
    Ok(finish(r, started))
}

fn interval_grid(h: f64) -> Result<Grid> {
    build_grid(&DomainSpec::interval(-1.0, 1.0)?, h)
}

/// Regional constant of (−1,1) under refinement and on strips
/// (−1,1) × (−W,W).
#[allow(clippy::too_many_arguments)]
pub fn run_regional_strip(
    s: f64,
    p: f64,
    h_list: &[f64],
    widths: &[f64],
    strip_h: f64,
    num: &Numerics,
) -> Result<ExperimentReport> {
    let started = Instant::now();
    if h_list.is_empty() {
        return Err(Error::config("regional strip needs at least one grid spacing"));
    }
    let mut r = start_report("regional_strip", num);
    r.param("s", s).param("p", p).param("h_list", join(h_list)).param("widths", join(widths)).param("strip_h", strip_h);
    let tol = &num.tolerances;
    if p <= 1.0 {
        // no solve: evaluate the energy of a fixed profile only
        for &h in h_list {
            let g = Arc::new(interval_grid(h)?);
            let op = assemble(g.clone(), s, p, SeminormKind::Regional, &num.assembly)?;
            let u = GridFunction::from_fn(g, |x| (PI * x[0] / 2.0).cos());
            let q = rayleigh(&op, &u)?;
            r.measure(&format!("rayleigh.h={h}"), q);
            r.check(format!("energy(h={h}) >= 0"), op.energy_values(u.values()), Relation::Ge, 0.0);
        }
        r.note("p <= 1: energy evaluation only");
        return Ok(finish(r, started));
    }
    let mut lambdas = Vec::with_capacity(h_list.len());
    for &h in h_list {
        let (_, res) = solve_grid(interval_grid(h)?, s, p, SeminormKind::Regional, num)?;
        track(&mut r, &format!("h={h}"), &res);
        r.measure(&format!("lambda.h={h}"), res.lambda);
        lambdas.push(res.lambda);
    }
    let sp = s * p;
    if sp <= 1.0 {
        for k in 1..lambdas.len() {
            r.check(
                format!("lambda(h={})/lambda(h={})", h_list[k], h_list[k - 1]),
                lambdas[k] / lambdas[k - 1],
                Relation::Le,
                tol.degeneracy_step,
            );
        }
        if lambdas.len() > 1 {
            r.check(
                format!("lambda(h={})/lambda(h={})", h_list[lambdas.len() - 1], h_list[0]),
                lambdas[lambdas.len() - 1] / lambdas[0],
                Relation::Le,
                tol.degeneracy_total,
            );
        }
        r.note("sp <= 1: the regional constant tends to 0 under refinement");
        return Ok(finish(r, started));
    }
    for k in 1..lambdas.len() {
        r.check(
            format!("|lambda(h={}) - lambda(h={})|/lambda(h={})", h_list[k], h_list[k - 1], h_list[k - 1]),
            rel_err(lambdas[k], lambdas[k - 1]),
            Relation::Le,
            tol.refinement_change,
        );
    }
    let (_, line) = solve_grid(interval_grid(strip_h)?, s, p, SeminormKind::Regional, num)?;
    track(&mut r, "interval at strip spacing", &line);
    r.measure("interval.lambda", line.lambda);
    let mut gaps = Vec::new();
    for &w in widths {
        let d = DomainSpec::boxed(vec![Interval::new(-1.0, 1.0)?, Interval::new(-w, w)?])?;
        let (op, res) = solve_grid(build_grid(&d, strip_h)?, s, p, SeminormKind::Regional, num)?;
        track(&mut r, &format!("strip W={w}"), &res);
        r.measure(&format!("strip.lambda.W={w}"), res.lambda);
        gaps.push((res.lambda - line.lambda).abs());
        let cert = certificate_ratio(&op, &res.eigenfunction)?;
        r.check(format!("strip W={w}: energy/norm >= P_1D"), cert, Relation::Ge, line.lambda);
    }
    for k in 1..gaps.len() {
        r.check(
            format!("|strip(W={}) - P_1D| <= |strip(W={}) - P_1D|", widths[k], widths[k - 1]),
            gaps[k],
            Relation::Le,
            gaps[k - 1],
        );
    }
    Ok(finish(r, started))
}

fn certificate_ratio(op: &NonlocalOperator, u: &GridFunction) -> Result<f64> {
    let n = op.grid().dim();
    let (s, p) = (op.s(), op.p());
    Ok(rayleigh(op, u)? / normalization_prefactor(n, s, p)?)
}

/// (C_{n,s,p}/2C_{1,s,p}) · ∫|cos σ₁|^{sp} g(σ) dσ, which equals 1.
pub fn normalization_prefactor(n: usize, s: f64, p: f64) -> Result<f64> {
    let cn = c_flap(&FracParams::new(n, s, p)?)?;
    let c1 = c_flap(&FracParams::new(1, s, p)?)?;
    Ok(cn / (2.0 * c1) * cos_power_integral(n, s, p)?)
}

/// Certificate energy(u)/‖u‖^p ≥ prefactor · P¹_{1D} for u on a strip grid.
pub fn run_angle_certificate(grid: Arc<Grid>, s: f64, p: f64, u: &GridFunction, num: &Numerics) -> Result<ExperimentReport> {
    let started = Instant::now();
    let mut r = start_report("angle_certificate", num);
    let n = grid.dim();
    r.param("domain", describe_box(grid.domain().factors())).param("s", s).param("p", p).param("counts", format!("{:?}", grid.counts()));
    if n < 2 {
        return Err(Error::config("angle certificate needs a strip of dimension at least 2"));
    }
    let prefactor = normalization_prefactor(n, s, p)?;
    r.measure("prefactor", prefactor);
    r.check("|prefactor - 1|", (prefactor - 1.0).abs(), Relation::Le, num.tolerances.normalization);
    if s * p <= 1.0 {
        r.note("sp <= 1: the one-dimensional constant is 0 and the certificate is vacuous");
        return Ok(finish(r, started));
    }
    let width = grid.domain().factors()[0];
    let h = grid.spacing()[0];
    let line_grid = build_grid(&DomainSpec::boxed(vec![width])?, h)?;
    let (_, line) = solve_grid(line_grid, s, p, SeminormKind::Regional, num)?;
    track(&mut r, "interval", &line);
    let op = assemble(grid, s, p, SeminormKind::Regional, &num.assembly)?;
    let q = rayleigh(&op, u)?;
    r.measure("interval.lambda", line.lambda).measure("rayleigh", q).measure("slack", q - prefactor * line.lambda);
    r.check("energy(u)/|u|^p >= prefactor * P_1D", q, Relation::Ge, prefactor * line.lambda);
    Ok(finish(r, started))
}

/// L(f,g)(x,y) of the discrete Picone inequality.
pub fn picone_value(fx: f64, fy: f64, gx: f64, gy: f64, p: f64) -> f64 {
    abs_power(fx - fy, p) - signed_power(gx - gy, p) * (fx.powf(p) / gx.powf(p - 1.0) - fy.powf(p) / gy.powf(p - 1.0))
}

fn picone_min(f: &[f64], g: &[f64], p: f64) -> (f64, f64) {
    let (mut lo, mut big) = (f64::INFINITY, 0.0f64);
    for i in 0..f.len() {
        for j in i + 1..f.len() {
            let l = picone_value(f[i], f[j], g[i], g[j], p);
            lo = lo.min(l);
            big = big.max(l.abs());
        }
    }
    (lo, big)
}

/// Random pairs (f ≥ 0, g > 0) and proportional pairs f = αg.
pub fn run_picone(trials: usize, grid_size: usize, p: f64, seed: u64, num: &Numerics) -> Result<ExperimentReport> {
    let started = Instant::now();
    if !(p > 1.0) {
        return Err(Error::domain(format!("Picone inequality needs p > 1, got {p}")));
    }
    if grid_size < 2 {
        return Err(Error::config("Picone check needs at least two points"));
    }
    let mut r = start_report("picone", num);
    r.param("trials", trials).param("grid_size", grid_size).param("p", p).param("seed", seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<(Vec<f64>, Vec<f64>, f64)> = (0..trials)
        .map(|_| {
            let g: Vec<f64> = (0..grid_size).map(|_| 1.0 - 0.95 * rng.random::<f64>()).collect();
            let f: Vec<f64> = (0..grid_size).map(|_| rng.random::<f64>()).collect();
            let alpha = 0.1 + 1.9 * rng.random::<f64>();
            (f, g, alpha)
        })
        .collect();
    let stats: Vec<(f64, f64)> = samples
        .par_iter()
        .map(|(f, g, alpha)| {
            let (lo, _) = picone_min(f, g, p);
            let scaled: Vec<f64> = g.iter().map(|v| alpha * v).collect();
            let (_, big) = picone_min(&scaled, g, p);
            (lo, big)
        })
        .collect();
    let min_l = stats.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let max_prop = stats.iter().map(|s| s.1).fold(0.0, f64::max);
    let g = &samples.first().map(|s| s.1.clone()).unwrap_or_else(|| vec![1.0; grid_size]);
    let (_, identical) = picone_min(g, g, p);
    r.measure("min_L", min_l).measure("max_abs_L_proportional", max_prop).measure("max_abs_L_identical", identical);
    r.check("min L over random pairs", min_l, Relation::Ge, -num.tolerances.picone);
    r.check("max |L| over proportional pairs", max_prop, Relation::Le, num.tolerances.picone);
    r.check("max |L| for f = g", identical, Relation::Le, num.tolerances.picone);
    Ok(finish(r, started))
}

/// Parameter grid for [`run_identities`].
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityGrid {
    pub max_n: usize,
    pub s_values: Vec<f64>,
    pub p_values: Vec<f64>,
    pub a_values: Vec<f64>,
}

impl Default for IdentityGrid {
    fn default() -> Self {
        IdentityGrid {
            max_n: 6,
            s_values: vec![0.1, 0.25, 0.5, 0.75, 0.9],
            p_values: vec![1.0, 1.5, 2.0, 3.0, 5.0],
            a_values: vec![0.5, 1.0, 3.0],
        }
    }
}

const TAIL_RADIUS: f64 = 1e4;

/// ∫_{R^m} (1 + |x − z|²/a²)^{-q} dx by panel quadrature out to radius 10⁴a plus
/// an asymptotic tail, for m ∈ {1, 2}.
pub fn reduction_integral(m: usize, q: f64, a: f64, z: f64) -> Result<f64> {
    let tol = QuadTol { rel: 1e-13, abs: 0.0, panels: 4 };
    // panels [0,1], [1,10], ... in units of a, out to the truncation radius
    let panels = |g: &dyn Fn(f64) -> f64, sign: f64, origin: f64| {
        let mut total = 0.0;
        let mut lo = 0.0;
        let mut hi = 1.0;
        while lo < TAIL_RADIUS {
            let (x0, x1) = (origin + sign * a * lo, origin + sign * a * hi);
            total += integrate(g, x0.min(x1), x0.max(x1), tol);
            lo = hi;
            hi *= 10.0;
        }
        total
    };
    let y = TAIL_RADIUS;
    match m {
        1 => {
            let f = |x: f64| (1.0 + ((x - z) / a).powi(2)).powf(-q);
            let tail = y.powf(1.0 - 2.0 * q) / (2.0 * q - 1.0) - q * y.powf(-1.0 - 2.0 * q) / (2.0 * q + 1.0)
                + q * (q + 1.0) / 2.0 * y.powf(-3.0 - 2.0 * q) / (2.0 * q + 3.0);
            Ok(panels(&f, -1.0, z) + panels(&f, 1.0, z) + 2.0 * a * tail)
        }
        2 => {
            if q <= 1.0 {
                return Err(Error::domain("reduction integral diverges for m = 2 unless n + sp > 2"));
            }
            // polar coordinates about z
            let f = |r: f64| r * (1.0 + (r / a).powi(2)).powf(-q);
            let tail = y.powf(2.0 - 2.0 * q) / (2.0 * q - 2.0) - q * y.powf(-2.0 * q) / (2.0 * q)
                + q * (q + 1.0) / 2.0 * y.powf(-2.0 - 2.0 * q) / (2.0 * q + 2.0);
            Ok(2.0 * PI * (panels(&f, 1.0, 0.0) + a * a * tail))
        }
        _ => Err(Error::Unsupported(format!("reduction quadrature for m = {m}"))),
    }
}

/// ∫|cos σ₁|^{sp} g(σ) dσ by quadrature in σ₁ times the area of S^{n−2}.
///
/// With v = π/2 − σ₁ the half-range integrand behaves like v^{sp} at 0; the
/// substitution v = w^{1/(1+sp)} makes it bounded and smooth enough for the
/// adaptive rule.
pub fn cos_integral_quadrature(n: usize, s: f64, p: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::domain("cos power integral needs n >= 2"));
    }
    let sp = s * p;
    let e = 1.0 / (1.0 + sp);
    let tol = QuadTol { rel: 1e-12, abs: 0.0, panels: 8 };
    let k = (n - 2) as i32;
    let f = |w: f64| {
        if w == 0.0 {
            return e;
        }
        let v = w.powf(e);
        let sinc = v.sin() / v;
        e * sinc.powf(sp) * v.cos().powi(k)
    };
    let half = integrate(f, 0.0, (PI / 2.0).powf(1.0 + sp), tol);
    Ok(sphere_area(n - 1)? * 2.0 * half)
}

/// Constant identities, the reduction integral and the normalization identity.
pub fn run_identities(grid: &IdentityGrid, num: &Numerics) -> Result<ExperimentReport> {
    let started = Instant::now();
    let tol = &num.tolerances;
    let mut r = start_report("identities", num);
    r.param("max_n", grid.max_n)
        .param("s_values", join(&grid.s_values))
        .param("p_values", join(&grid.p_values))
        .param("a_values", join(&grid.a_values));
    let (mut worst_c, mut worst_norm, mut worst_cos) = (0.0f64, 0.0f64, 0.0f64);
    for &s in &grid.s_values {
        for &p in &grid.p_values {
            for n in 2..=grid.max_n {
                let cn = c_flap(&FracParams::new(n, s, p)?)?;
                for m in 1..n {
                    let th = theta(&FracParams::new(n, s, p)?.with_free_dims(m)?)?;
                    let cnm = c_flap(&FracParams::new(n - m, s, p)?)?;
                    worst_c = worst_c.max(rel_err(cn * th, cnm));
                }
                worst_norm = worst_norm.max((normalization_prefactor(n, s, p)? - 1.0).abs());
                worst_cos = worst_cos.max(rel_err(cos_integral_quadrature(n, s, p)?, cos_power_integral(n, s, p)?));
            }
        }
    }
    r.check("max rel err C(n)*Theta(m,n) vs C(n-m)", worst_c, Relation::Le, tol.constant_identity);
    r.check("max |prefactor - 1|", worst_norm, Relation::Le, tol.normalization);
    r.check("max rel err cos integral quadrature vs closed form", worst_cos, Relation::Le, tol.cos_integral);
    let mut worst_q = 0.0f64;
    for m in [1usize, 2] {
        for n in [m + 1, m + 2] {
            for (s, p) in [(0.5, 2.0), (0.25, 1.5), (0.75, 3.0)] {
                let params = FracParams::new(n, s, p)?.with_free_dims(m)?;
                let th = theta(&params)?;
                let q = (n as f64 + s * p) / 2.0;
                for &a in &grid.a_values {
                    let z = 0.7;
                    let quad = reduction_integral(m, q, a, z)?;
                    worst_q = worst_q.max(rel_err(quad, a.powi(m as i32) * th));
                }
            }
        }
    }
    let base = reduction_integral(1, 1.5, 1.0, 0.0)?;
    r.measure("reduction_integral.m=1.n=2.s=0.5.p=2.a=1", base);
    r.check("max rel err reduction quadrature vs a^m Theta", worst_q, Relation::Le, tol.reduction_quadrature);
    Ok(finish(r, started))
}

/// sin²(πx)sin²(πy) on the unit square.
pub fn smooth_bump(x: &[f64]) -> f64 {
    x.iter().map(|&c| (PI * c).sin().powi(2)).product()
}

/// Both sides of the directional decomposition at (A/2, L/2) and (A, L). The
/// bump is sampled with `line_nodes` cells per side; far-field weights are
/// integrated exactly so both sides converge at the same order.
pub fn run_loss_sloan(s: f64, p: f64, angular_nodes: usize, line_nodes: usize, num: &Numerics) -> Result<ExperimentReport> {
    let started = Instant::now();
    if line_nodes < 4 || angular_nodes < 2 {
        return Err(Error::config("directional check needs at least 2 angles and 4 line nodes"));
    }
    let mut r = start_report("loss_sloan", num);
    r.param("s", s).param("p", p).param("angular_nodes", angular_nodes).param("line_nodes", line_nodes);
    let cfg = AssemblyConfig { far_field_rule: FarFieldRule::Exact, ..num.assembly.clone() };
    let square = DomainSpec::boxed(vec![Interval::new(0.0, 1.0)?; 2])?;
    let mut gaps = Vec::new();
    for (a, l) in [(angular_nodes / 2, line_nodes / 2), (angular_nodes, line_nodes)] {
        let grid = Arc::new(build_grid(&square, 1.0 / l as f64)?);
        let u = GridFunction::from_fn(grid, smooth_bump);
        let (lhs, rhs) = directional_decomposition(&u, s, p, a, l, &cfg)?;
        let gap = (lhs - rhs).abs() / lhs;
        r.measure(&format!("lhs.{a}x{l}"), lhs).measure(&format!("rhs.{a}x{l}"), rhs);
        r.measure(&format!("gap.{a}x{l}"), gap);
        gaps.push(gap);
    }
    r.check(format!("relative gap at {angular_nodes}x{line_nodes}"), gaps[1], Relation::Le, num.tolerances.loss_sloan_gap);
    r.check("gap ratio on doubling", gaps[1] / gaps[0], Relation::Le, num.tolerances.loss_sloan_ratio);
    Ok(finish(r, started))
}

/// Finite differences of the energy against the gradient on random (u, δ).
///
/// The order is read from the first-order Taylor remainder
/// E(u+εδ) − E(u) − ε⟨∇E, δ⟩, which is O(ε²) exactly when the gradient is
/// right; a central difference at p = 2 is exact and has no observable order.
/// Node values are a random permutation of jittered levels, so no pair
/// difference sits at the kink of |t|^p.
pub fn run_gradient_check(trials: usize, seed: u64, num: &Numerics) -> Result<ExperimentReport> {
    let started = Instant::now();
    let mut r = start_report("gradient", num);
    r.param("trials", trials).param("seed", seed);
    let eps = 1e-4;
    for (case, p) in [1.5, 2.0, 3.0].into_iter().enumerate() {
        for n in [1usize, 2] {
            let d = DomainSpec::boxed(vec![Interval::new(0.0, 1.0)?; n])?;
            let h = if n == 1 { 1.0 / 12.0 } else { 0.25 };
            let grid = Arc::new(build_grid(&d, h)?);
            let op = assemble(grid.clone(), 0.5, p, SeminormKind::Dirichlet, &num.assembly)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add((case * 2 + n) as u64));
            let size = grid.node_count();
            let (mut worst_order, mut worst_central) = (f64::INFINITY, 0.0f64);
            for _ in 0..trials {
                let mut levels: Vec<usize> = (0..size).collect();
                for i in (1..size).rev() {
                    levels.swap(i, rng.random_range(0..=i));
                }
                let u: Vec<f64> = levels.iter().map(|&k| (k as f64 + rng.random_range(0.2..0.8)) / size as f64).collect();
                let dir: Vec<f64> = (0..size).map(|_| rng.random_range(-1.0..1.0)).collect();
                let mut g = vec![0.0; size];
                let e0 = op.energy_gradient_values(&u, &mut g)?;
                let slope: f64 = g.iter().zip(&dir).map(|(a, b)| a * b).sum();
                let at = |e: f64| {
                    let v: Vec<f64> = u.iter().zip(&dir).map(|(a, b)| a + e * b).collect();
                    op.energy_values(&v)
                };
                let remainder = |e: f64| (at(e) - e0 - e * slope).abs();
                worst_order = worst_order.min((remainder(eps) / remainder(eps / 2.0)).log2());
                let central = (at(eps) - at(-eps)) / (2.0 * eps);
                worst_central = worst_central.max((central - slope).abs() / slope.abs().max(e0));
            }
            r.measure(&format!("max_central_error.p={p}.n={n}"), worst_central);
            r.check(format!("central difference error p={p} n={n}"), worst_central, Relation::Le, num.tolerances.gradient_fd);
            r.check(format!("remainder order p={p} n={n}"), worst_order, Relation::Ge, num.tolerances.gradient_order);
        }
    }
    Ok(finish(r, started))
}

/// p = 2 on (−1,1): the quasi-Newton descent against the dense linear solve.
pub fn run_oracle(s: f64, h: f64, num: &Numerics) -> Result<ExperimentReport> {
    let started = Instant::now();
    let mut r = start_report("oracle", num);
    r.param("s", s).param("h", h);
    let op = assemble(Arc::new(interval_grid(h)?), s, 2.0, SeminormKind::Dirichlet, &num.assembly)?;
    let linear = solve(&op, &SolverConfig { method: SolverMethod::Linear, ..num.solver.clone() })?;
    let descent = solve(&op, &SolverConfig { method: SolverMethod::Descent, ..num.solver.clone() })?;
    track(&mut r, "linear", &linear);
    track(&mut r, "descent", &descent);
    r.measure("lambda.linear", linear.lambda).measure("lambda.descent", descent.lambda);
    r.check("|descent - linear|/linear", rel_err(descent.lambda, linear.lambda), Relation::Le, num.tolerances.oracle);
    let check = check_first_eigen_properties(&descent, &op, num.tolerances.weak_form, f64::INFINITY)?;
    r.measure("descent.weak_form_error", check.weak_form_error);
    r.check("descent eigenfunction nonnegative and positive", if check.nonnegative && check.positive { 1.0 } else { 0.0 }, Relation::Ge, 1.0);
    Ok(finish(r, started))
}

/// Runs independent experiments on the current rayon pool; results keep the
/// order of `jobs`.
pub fn run_jobs<F>(jobs: Vec<F>) -> Vec<Result<ExperimentReport>>
where
    F: FnOnce() -> Result<ExperimentReport> + Send,
{
    jobs.into_par_iter().map(|job| job()).collect()
}
