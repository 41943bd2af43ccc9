//! Minimization of the nonlocal Rayleigh quotient.
//!
//! `p = 2` goes through the symmetric matrix of the quadratic form: a dense
//! eigenvalue solve followed by shifted inverse iteration for the vector, or
//! matrix-free inverse iteration with conjugate gradients on large grids.
//! Other `p > 1` use limited-memory quasi-Newton steps on the unit L^p sphere
//! with a monotone backtracking line search and the |u| projection.

use std::collections::{HashMap, VecDeque};
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use faer::linalg::solvers::Solve;
use faer::{Col, Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::{abs_power, assemble, signed_power, AssemblyConfig, NonlocalOperator, SeminormKind};
use crate::domain::{build_grid, DomainSpec, GridFunction, Interval};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct StepRule {
    /// First trial step as a fraction of ‖u‖/‖∇R‖.
    pub initial_step: f64,
    pub shrink: f64,
    /// Sufficient-decrease constant of the Armijo test.
    pub sufficient_decrease: f64,
    pub max_backtracks: usize,
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule { initial_step: 0.1, shrink: 0.5, sufficient_decrease: 1e-4, max_backtracks: 40 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverMethod {
    /// Linear path for p = 2, descent otherwise.
    Auto,
    Linear,
    Descent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Relative Rayleigh decrease counted as a stall.
    pub tolerance: f64,
    /// Consecutive stalls that stop the descent.
    pub stall_limit: usize,
    /// Relative weak-form residual required to call a run converged.
    pub residual_tolerance: f64,
    pub restarts: usize,
    pub rng_seed: u64,
    pub step: StepRule,
    /// Number of correction pairs kept by the quasi-Newton update.
    pub memory: usize,
    /// Largest free-node count solved with dense linear algebra.
    pub dense_threshold: usize,
    pub method: SolverMethod,
    /// Regional kind: hold the nodes whose cells touch the boundary at zero.
    pub boundary_layer: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: 20_000,
            tolerance: 1e-12,
            stall_limit: 10,
            residual_tolerance: 1e-3,
            restarts: 1,
            rng_seed: 7,
            step: StepRule::default(),
            memory: 10,
            dense_threshold: 4096,
            method: SolverMethod::Auto,
            boundary_layer: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::config("solver tolerance must be positive"));
        }
        if self.restarts == 0 {
            return Err(Error::config("solver needs at least one restart"));
        }
        if !(self.step.shrink > 0.0 && self.step.shrink < 1.0) {
            return Err(Error::config("step shrink factor must lie in (0,1)"));
        }
        if !(self.step.initial_step > 0.0) {
            return Err(Error::config("initial step must be positive"));
        }
        if !(self.step.sufficient_decrease > 0.0 && self.step.sufficient_decrease < 1.0) {
            return Err(Error::config("sufficient decrease constant must lie in (0,1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct EigenResult {
    pub lambda: f64,
    /// Nonnegative, with unit discrete L^p norm.
    pub eigenfunction: GridFunction,
    /// ‖∇E/p − λ·vol·φ(u)‖₂, which is ‖Ku − λMu‖ for p = 2.
    pub residual: f64,
    pub iterations: usize,
    /// Max − min of λ over restarts.
    pub restart_spread: f64,
    pub converged: bool,
    /// Nodes held at zero.
    pub constrained: Vec<bool>,
    /// Accepted Rayleigh values of the reported run.
    pub history: Vec<f64>,
    pub restart_lambdas: Vec<f64>,
    pub restart_functions: Vec<GridFunction>,
}

fn constrained_nodes(op: &NonlocalOperator, cfg: &SolverConfig) -> Vec<bool> {
    if op.kind() == SeminormKind::Regional && cfg.boundary_layer {
        op.grid().boundary_layer()
    } else {
        vec![false; op.node_count()]
    }
}

fn initial_guess(op: &NonlocalOperator, fixed: &[bool]) -> Vec<f64> {
    let grid = op.grid();
    let factors = grid.domain().factors().to_vec();
    (0..grid.node_count())
        .map(|i| {
            if fixed[i] {
                return 0.0;
            }
            grid.node(i)
                .iter()
                .zip(&factors)
                .map(|(x, f)| (PI * (x - 0.5 * (f.a + f.b)) / f.len()).cos())
                .product()
        })
        .collect()
}

fn lp_norm_values(u: &[f64], p: f64, vol: f64) -> f64 {
    vol * u.iter().map(|v| abs_power(*v, p)).sum::<f64>()
}

fn normalize(u: &mut [f64], p: f64, vol: f64) {
    let scale = lp_norm_values(u, p, vol).powf(-1.0 / p);
    u.iter_mut().for_each(|v| *v *= scale);
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// ‖g/p − λ vol φ(u)‖₂ over free nodes, and the same divided by ‖λ vol φ(u)‖₂.
fn weak_residual(op: &NonlocalOperator, u: &[f64], lambda: f64, fixed: &[bool]) -> Result<(f64, f64)> {
    let p = op.p();
    let vol = op.grid().cell_volume();
    let mut g = vec![0.0; u.len()];
    op.energy_gradient_values(u, &mut g)?;
    let (mut r2, mut s2) = (0.0, 0.0);
    for i in 0..u.len() {
        if fixed[i] {
            continue;
        }
        let rhs = lambda * vol * signed_power(u[i], p);
        r2 += (g[i] / p - rhs).powi(2);
        s2 += rhs * rhs;
    }
    let r = r2.sqrt();
    Ok((r, if s2 > 0.0 { r / s2.sqrt() } else { r }))
}

struct RunOutcome {
    lambda: f64,
    u: Vec<f64>,
    iterations: usize,
    stalled: bool,
    history: Vec<f64>,
}

/// Rayleigh quotient and its gradient at a normalized point.
fn rayleigh_gradient(op: &NonlocalOperator, u: &[f64], fixed: &[bool], grad: &mut [f64]) -> Result<f64> {
    let p = op.p();
    let vol = op.grid().cell_volume();
    let e = op.energy_gradient_values(u, grad)?;
    let norm = lp_norm_values(u, p, vol);
    let r = e / norm;
    for i in 0..u.len() {
        grad[i] = if fixed[i] { 0.0 } else { (grad[i] - r * p * vol * signed_power(u[i], p)) / norm };
    }
    Ok(r)
}

fn descent_run(op: &NonlocalOperator, cfg: &SolverConfig, start: Vec<f64>, fixed: &[bool], precond: &[f64]) -> Result<RunOutcome> {
    let p = op.p();
    let vol = op.grid().cell_volume();
    let n = start.len();
    let mut x = start;
    normalize(&mut x, p, vol);
    let mut g = vec![0.0; n];
    let mut r = rayleigh_gradient(op, &x, fixed, &mut g)?;
    let mut history = vec![r];
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut stalls = 0;
    let mut iterations = 0;
    let mut xn = vec![0.0; n];
    let mut gn = vec![0.0; n];
    let mut stalled = false;

    while iterations < cfg.max_iterations {
        iterations += 1;
        // two-loop recursion with a diagonally scaled initial matrix
        let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut alphas = Vec::with_capacity(memory.len());
        for (s, y, rho) in memory.iter().rev() {
            let a = rho * dot(s, &d);
            d.iter_mut().zip(y).for_each(|(di, yi)| *di -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = memory.back() {
            let ydy: f64 = y.iter().zip(precond).map(|(v, pc)| v * v / pc).sum();
            let gamma = dot(s, y) / ydy;
            d.iter_mut().zip(precond).for_each(|(di, pc)| *di *= gamma / pc);
        } else {
            let gnorm = dot(&g, &g).sqrt();
            if gnorm == 0.0 {
                stalled = true;
                break;
            }
            let scale = cfg.step.initial_step * dot(&x, &x).sqrt() / gnorm;
            d.iter_mut().for_each(|di| *di *= scale);
        }
        for ((s, y, rho), a) in memory.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &d);
            d.iter_mut().zip(s).for_each(|(di, si)| *di += (a - b) * si);
        }
        let mut slope = dot(&d, &g);
        if !(slope < 0.0) {
            memory.clear();
            let scale = cfg.step.initial_step * dot(&x, &x).sqrt() / dot(&g, &g).sqrt();
            d = g.iter().map(|v| -scale * v).collect();
            slope = dot(&d, &g);
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=cfg.step.max_backtracks {
            for i in 0..n {
                xn[i] = if fixed[i] { 0.0 } else { (x[i] + t * d[i]).abs() };
            }
            normalize(&mut xn, p, vol);
            let rn = rayleigh_gradient(op, &xn, fixed, &mut gn)?;
            if rn.is_finite() && rn <= r + cfg.step.sufficient_decrease * t * slope {
                accepted = Some(rn);
                break;
            }
            t *= cfg.step.shrink;
        }
        let Some(rn) = accepted else {
            if memory.is_empty() {
                stalled = true;
                break;
            }
            memory.clear();
            stalls += 1;
            if stalls >= cfg.stall_limit {
                stalled = true;
                break;
            }
            continue;
        };

        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if memory.len() == cfg.memory.max(1) {
                memory.pop_front();
            }
            memory.push_back((s, y, 1.0 / sy));
        }
        let rel = (r - rn) / r.abs().max(f64::MIN_POSITIVE);
        std::mem::swap(&mut x, &mut xn);
        std::mem::swap(&mut g, &mut gn);
        r = rn;
        history.push(r);
        if rel < cfg.tolerance {
            stalls += 1;
            if stalls >= cfg.stall_limit {
                stalled = true;
                break;
            }
        } else {
            stalls = 0;
        }
    }
    Ok(RunOutcome { lambda: r, u: x, iterations, stalled, history })
}

fn solve_descent(op: &NonlocalOperator, cfg: &SolverConfig, fixed: &[bool]) -> Result<EigenResult> {
    let base = initial_guess(op, fixed);
    let precond: Vec<f64> = op.quadratic_diagonal().iter().map(|v| v.max(f64::MIN_POSITIVE)).collect();
    let mut outcomes = Vec::with_capacity(cfg.restarts);
    for r in 0..cfg.restarts {
        let mut start = base.clone();
        if r > 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed.wrapping_add(r as u64));
            start.iter_mut().for_each(|v| *v *= 1.0 + 0.25 * rng.random_range(-1.0..1.0));
        }
        outcomes.push(descent_run(op, cfg, start, fixed, &precond)?);
    }
    finish(op, cfg, fixed, outcomes)
}

fn finish(op: &NonlocalOperator, cfg: &SolverConfig, fixed: &[bool], outcomes: Vec<RunOutcome>) -> Result<EigenResult> {
    let lambdas: Vec<f64> = outcomes.iter().map(|o| o.lambda).collect();
    let lo = lambdas.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = lambdas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let best = lambdas.iter().position(|&l| l == lo).unwrap_or(0);
    let functions: Vec<GridFunction> =
        outcomes.iter().map(|o| GridFunction::new(op.grid().clone(), o.u.clone())).collect::<Result<_>>()?;
    let run = &outcomes[best];
    let (residual, relative) = weak_residual(op, &run.u, run.lambda, fixed)?;
    let converged = run.stalled && (relative <= cfg.residual_tolerance || run.lambda == 0.0);
    Ok(EigenResult {
        lambda: run.lambda,
        eigenfunction: functions[best].clone(),
        residual,
        iterations: run.iterations,
        restart_spread: hi - lo,
        converged,
        constrained: fixed.to_vec(),
        history: run.history.clone(),
        restart_lambdas: lambdas,
        restart_functions: functions,
    })
}

/// Orient, normalize to unit L^2 mass and report λ for a vector on the free nodes.
fn linear_outcome(op: &NonlocalOperator, free: &[usize], v: &[f64], iterations: usize, stalled: bool) -> RunOutcome {
    let vol = op.grid().cell_volume();
    let sign = if v.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
    let mut u = vec![0.0; op.node_count()];
    for (k, &i) in free.iter().enumerate() {
        u[i] = sign * v[k];
    }
    normalize(&mut u, 2.0, vol);
    let lambda = op.energy_values(&u) / lp_norm_values(&u, 2.0, vol);
    RunOutcome { lambda, u, iterations, stalled, history: vec![lambda] }
}

fn solve_linear_dense(op: &NonlocalOperator, free: &[usize], start: &[f64]) -> Result<RunOutcome> {
    let m = free.len();
    let k = op.quadratic_dense(Some(free));
    let mat = Mat::<f64>::from_fn(m, m, |i, j| k[i * m + j]);
    let eig = mat
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Unsupported(format!("symmetric eigensolve failed: {e:?}")))?;
    let l1 = eig[0];
    let gap = if m > 1 { eig[1] - l1 } else { 1.0 };
    let shift = l1 - 1e-2 * gap.max(1e-12 * l1.abs().max(1.0));
    let shifted = Mat::<f64>::from_fn(m, m, |i, j| k[i * m + j] - if i == j { shift } else { 0.0 });
    let llt = shifted.llt(Side::Lower).map_err(|e| Error::Unsupported(format!("cholesky failed: {e:?}")))?;
    let mut v = Col::<f64>::from_fn(m, |i| start[i]);
    let mut iterations = 0;
    for _ in 0..100 {
        iterations += 1;
        let w = llt.solve(&v);
        let norm = w.norm_l2();
        let next = Col::<f64>::from_fn(m, |i| w[i] / norm);
        let change = (0..m).map(|i| (next[i] - v[i]).powi(2)).sum::<f64>().sqrt();
        v = next;
        if change <= 1e-14 {
            break;
        }
    }
    let vals: Vec<f64> = (0..m).map(|i| v[i]).collect();
    Ok(linear_outcome(op, free, &vals, iterations, true))
}

/// K restricted to the free nodes, applied to a free-node vector.
fn restricted_apply(op: &NonlocalOperator, free: &[usize], v: &[f64], shift: f64) -> Vec<f64> {
    let mut full = vec![0.0; op.node_count()];
    for (k, &i) in free.iter().enumerate() {
        full[i] = v[k];
    }
    let kv = op.quadratic_apply(&full);
    free.iter().enumerate().map(|(k, &i)| kv[i] + shift * v[k]).collect()
}

fn conjugate_gradient(op: &NonlocalOperator, free: &[usize], diag: &[f64], b: &[f64], shift: f64, x0: &[f64]) -> Vec<f64> {
    let mut x = x0.to_vec();
    let ax = restricted_apply(op, free, &x, shift);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(a, c)| a - c).collect();
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(a, d)| a / d).collect();
    let mut d = z.clone();
    let mut rz = dot(&r, &z);
    let bnorm = dot(b, b).sqrt();
    for _ in 0..10 * free.len().max(10) {
        if dot(&r, &r).sqrt() <= 1e-13 * bnorm {
            break;
        }
        let ad = restricted_apply(op, free, &d, shift);
        let alpha = rz / dot(&d, &ad);
        x.iter_mut().zip(&d).for_each(|(xi, di)| *xi += alpha * di);
        r.iter_mut().zip(&ad).for_each(|(ri, ai)| *ri -= alpha * ai);
        z = r.iter().zip(diag).map(|(a, dg)| a / dg).collect();
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        d.iter_mut().zip(&z).for_each(|(di, zi)| *di = zi + beta * *di);
    }
    x
}

fn solve_linear_iterative(op: &NonlocalOperator, cfg: &SolverConfig, free: &[usize], start: &[f64]) -> Result<RunOutcome> {
    let full_diag = op.quadratic_diagonal();
    let mean = full_diag.iter().sum::<f64>() / full_diag.len() as f64;
    // a tiny positive shift keeps the singular regional form invertible
    let shift = if op.kind() == SeminormKind::Regional { 1e-10 * mean } else { 0.0 };
    let diag: Vec<f64> = free.iter().map(|&i| full_diag[i] + shift).collect();
    let mut v: Vec<f64> = start.to_vec();
    let nv = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= nv);
    let mut prev = f64::INFINITY;
    let mut iterations = 0;
    let mut stalled = false;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let w = conjugate_gradient(op, free, &diag, &v, shift, &v);
        let nw = dot(&w, &w).sqrt();
        v = w.iter().map(|x| x / nw).collect();
        let kv = dot(&v, &restricted_apply(op, free, &v, 0.0));
        if (prev - kv).abs() <= cfg.tolerance * kv.abs() {
            stalled = true;
            break;
        }
        prev = kv;
    }
    Ok(linear_outcome(op, free, &v, iterations, stalled))
}

fn solve_linear(op: &NonlocalOperator, cfg: &SolverConfig, fixed: &[bool]) -> Result<EigenResult> {
    if op.p() != 2.0 {
        return Err(Error::Unsupported(format!("linear path needs p = 2, got {}", op.p())));
    }
    let free: Vec<usize> = (0..op.node_count()).filter(|&i| !fixed[i]).collect();
    if free.is_empty() {
        return Err(Error::config("every node is constrained; refine the grid"));
    }
    let guess = initial_guess(op, fixed);
    let start: Vec<f64> = free.iter().map(|&i| guess[i]).collect();
    let outcome = if free.len() <= cfg.dense_threshold {
        solve_linear_dense(op, &free, &start)?
    } else {
        solve_linear_iterative(op, cfg, &free, &start)?
    };
    finish(op, cfg, fixed, vec![outcome])
}

/// Estimate the first eigenvalue, i.e. the discrete Poincaré constant.
pub fn solve(op: &NonlocalOperator, cfg: &SolverConfig) -> Result<EigenResult> {
    cfg.validate()?;
    if op.p() <= 1.0 {
        return Err(Error::Unsupported("solving needs p > 1".into()));
    }
    let fixed = constrained_nodes(op, cfg);
    let linear = match cfg.method {
        SolverMethod::Auto => op.p() == 2.0,
        SolverMethod::Linear => true,
        SolverMethod::Descent => false,
    };
    if linear {
        solve_linear(op, cfg, &fixed)
    } else {
        solve_descent(op, cfg, &fixed)
    }
}

/// Upper bounds for a cylinder of length ℓ from a separable test function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparableBound {
    /// (P^{1/p} + [v]/ℓ^s)^p.
    pub product: f64,
    /// P + C₁/ℓ^s + C₂/ℓ^{sp}.
    pub expanded: f64,
    pub c1: f64,
    pub c2: f64,
}

/// Bound on the cylinder constant from the cross-section constant and the
/// seminorm `[v]` of a unit-norm cutoff in the free directions.
pub fn separable_upper_bound(
    ell: f64,
    cross_result: &EigenResult,
    cutoff_seminorm: f64,
    cutoff_norm_is_one: bool,
    s: f64,
    p: f64,
) -> Result<SeparableBound> {
    if !(ell > 0.0) {
        return Err(Error::domain(format!("cylinder length {ell} must be positive")));
    }
    if !cutoff_norm_is_one {
        return Err(Error::domain("the cutoff must have unit L^p norm"));
    }
    separable_bound_from_lambda(ell, cross_result.lambda, cutoff_seminorm, s, p)
}

pub fn separable_bound_from_lambda(ell: f64, cross: f64, seminorm: f64, s: f64, p: f64) -> Result<SeparableBound> {
    if !(ell > 0.0) {
        return Err(Error::domain(format!("cylinder length {ell} must be positive")));
    }
    let k = p * 2f64.powf(p - 1.0);
    let c1 = k * cross.powf((p - 1.0) / p) * seminorm;
    let c2 = k * seminorm.powf(p);
    Ok(SeparableBound {
        product: (cross.powf(1.0 / p) + seminorm / ell.powf(s)).powf(p),
        expanded: cross + c1 / ell.powf(s) + c2 / ell.powf(s * p),
        c1,
        c2,
    })
}

/// [v]_{s,p} of the cutoff ∏ cos(π x_d / 2) on (−1,1)^m, normalized to unit
/// discrete L^p norm and evaluated on a grid of spacing `h` over (−3,3)^m.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffSeminorm {
    pub value: f64,
    pub h: f64,
}

pub fn cutoff_seminorm(m: usize, s: f64, p: f64, h: f64) -> Result<CutoffSeminorm> {
    type Key = (usize, u64, u64, u64);
    static CACHE: OnceLock<Mutex<HashMap<Key, f64>>> = OnceLock::new();
    let key = (m, s.to_bits(), p.to_bits(), h.to_bits());
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(v) = cache.lock().expect("cache poisoned").get(&key) {
        return Ok(CutoffSeminorm { value: *v, h });
    }
    if m == 0 {
        return Err(Error::domain("cutoff needs at least one free dimension"));
    }
    let domain = DomainSpec::boxed(vec![Interval::new(-3.0, 3.0)?; m])?;
    let grid = Arc::new(build_grid(&domain, h)?);
    let op = assemble(grid.clone(), s, p, SeminormKind::Dirichlet, &AssemblyConfig::default())?;
    let mut v: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|x| x.iter().map(|&c| if c.abs() < 1.0 { (PI * c / 2.0).cos() } else { 0.0 }).product())
        .collect();
    normalize(&mut v, p, grid.cell_volume());
    let value = op.energy_values(&v).powf(1.0 / p);
    cache.lock().expect("cache poisoned").insert(key, value);
    Ok(CutoffSeminorm { value, h })
}

/// Outcome of [`check_first_eigen_properties`].
#[derive(Debug, Clone, PartialEq)]
pub struct EigenCheck {
    pub nonnegative: bool,
    /// Smallest value over unconstrained nodes.
    pub min_free_value: f64,
    pub positive: bool,
    /// max_i |g_i/p − λ vol φ(u_i)| / max_i |λ vol φ(u_i)| over free nodes.
    pub weak_form_error: f64,
    pub weak_form_ok: bool,
    pub spread_ok: bool,
    pub pass: bool,
}

/// Check nonnegativity, positivity, stationarity against the unit test vectors
/// on free nodes and agreement of all restarts.
pub fn check_first_eigen_properties(result: &EigenResult, op: &NonlocalOperator, weak_tol: f64, spread_tol: f64) -> Result<EigenCheck> {
    let u = result.eigenfunction.values();
    let p = op.p();
    let vol = op.grid().cell_volume();
    let mut g = vec![0.0; u.len()];
    op.energy_gradient_values(u, &mut g)?;
    let nonnegative = u.iter().all(|&v| v >= 0.0);
    let min_free_value =
        u.iter().zip(&result.constrained).filter(|(_, &c)| !c).map(|(v, _)| *v).fold(f64::INFINITY, f64::min);
    let positive = min_free_value > 0.0;
    let (mut err, mut scale) = (0.0f64, 0.0f64);
    for i in 0..u.len() {
        if result.constrained[i] {
            continue;
        }
        let rhs = result.lambda * vol * signed_power(u[i], p);
        err = err.max((g[i] / p - rhs).abs());
        scale = scale.max(rhs.abs());
    }
    let weak_form_error = if scale > 0.0 { err / scale } else { err };
    let weak_form_ok = weak_form_error <= weak_tol;
    let spread_ok = result.restart_spread <= spread_tol * result.lambda.abs().max(f64::MIN_POSITIVE);
    let positive_required = op.kind() == SeminormKind::Dirichlet || result.constrained.iter().any(|&c| c);
    let pass = nonnegative && (positive || !positive_required) && weak_form_ok && spread_ok;
    Ok(EigenCheck { nonnegative, min_free_value, positive, weak_form_error, weak_form_ok, spread_ok, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::rayleigh;

    fn interval_op(h: f64, s: f64, p: f64, kind: SeminormKind) -> NonlocalOperator {
        let g = Arc::new(build_grid(&DomainSpec::interval(-1.0, 1.0).unwrap(), h).unwrap());
        assemble(g, s, p, kind, &AssemblyConfig::default()).unwrap()
    }

    #[test]
    fn linear_and_descent_agree() {
        let op = interval_op(1.0 / 32.0, 0.5, 2.0, SeminormKind::Dirichlet);
        let lin = solve(&op, &SolverConfig::default()).unwrap();
        let des = solve(&op, &SolverConfig { method: SolverMethod::Descent, ..Default::default() }).unwrap();
        assert!(lin.converged && des.converged);
        assert!(((lin.lambda - des.lambda) / lin.lambda).abs() < 1e-8, "{} {}", lin.lambda, des.lambda);
        let check = check_first_eigen_properties(&lin, &op, 1e-10, 1e-12).unwrap();
        assert!(check.pass, "{check:?}");
    }

    #[test]
    fn iterative_linear_matches_dense() {
        let op = interval_op(1.0 / 32.0, 0.3, 2.0, SeminormKind::Dirichlet);
        let dense = solve(&op, &SolverConfig::default()).unwrap();
        let it = solve(&op, &SolverConfig { dense_threshold: 8, ..Default::default() }).unwrap();
        assert!(((dense.lambda - it.lambda) / dense.lambda).abs() < 1e-10);
    }

    #[test]
    fn descent_is_monotone_and_positive() {
        let op = interval_op(1.0 / 16.0, 0.6, 3.0, SeminormKind::Dirichlet);
        let r = solve(&op, &SolverConfig { restarts: 3, ..Default::default() }).unwrap();
        assert!(r.history.windows(2).all(|w| w[1] <= w[0] + 1e-14));
        assert!(r.eigenfunction.values().iter().all(|&v| v > 0.0));
        assert!((crate::assembly::lp_norm_p(&r.eigenfunction, 3.0) - 1.0).abs() < 1e-12);
        let check = check_first_eigen_properties(&r, &op, 1e-3, 1e-6).unwrap();
        assert!(check.pass, "{check:?}");
        let again = rayleigh(&op, &r.eigenfunction.scaled(-2.0)).unwrap();
        assert!((again - r.lambda).abs() < 1e-12 * r.lambda);
    }

    #[test]
    fn regional_unconstrained_finds_constants() {
        let op = interval_op(1.0 / 16.0, 0.5, 2.0, SeminormKind::Regional);
        let r = solve(&op, &SolverConfig { boundary_layer: false, ..Default::default() }).unwrap();
        assert!(r.lambda.abs() < 1e-10, "{}", r.lambda);
    }

    #[test]
    fn p_one_rejected() {
        let op = interval_op(0.25, 0.5, 1.0, SeminormKind::Dirichlet);
        assert!(matches!(solve(&op, &SolverConfig::default()), Err(Error::Unsupported(_))));
    }

    #[test]
    fn separable_bound_limits() {
        let b1 = separable_bound_from_lambda(1.0, 1.2, 0.8, 0.5, 2.0).unwrap();
        let b2 = separable_bound_from_lambda(2.0, 1.2, 0.8, 0.5, 2.0).unwrap();
        let far = separable_bound_from_lambda(1e16, 1.2, 0.8, 0.5, 2.0).unwrap();
        assert!(b1.expanded >= b2.expanded && b1.product >= b2.product);
        assert!(b1.product <= b1.expanded);
        assert!((far.expanded - 1.2).abs() < 1e-6);
        assert!(separable_bound_from_lambda(0.0, 1.2, 0.8, 0.5, 2.0).is_err());
    }
}
