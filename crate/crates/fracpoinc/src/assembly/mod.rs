//! Discrete Gagliardo energies on cell-centred grids.
//!
//! The pair weight between nodes i and j is
//! `w_ij = (C/2) · vol · ∫_{cell_j} |x_i − y|^{-n-sp} dy`, collocated at the
//! centre of cell i and integrated over cell j. It only depends on the lattice
//! offset j − i, so a single offset table serves every pair. The Dirichlet kind
//! adds `e_i = C · κ(x_i) · vol`, which is exactly the same collocated integral
//! taken over the complement of the domain.

mod directional;
mod fpnl;
pub mod weights;

use std::sync::{Arc, OnceLock};

use rayon::prelude::*;

pub use directional::directional_decomposition;

use crate::domain::{box_exterior_integral, Grid, GridFunction};
use crate::error::{Error, Result};
use crate::special_fn::{c_flap, FracParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SeminormKind {
    /// Ω × Ω only.
    Regional,
    /// R^n × R^n with zero extension outside Ω.
    Dirichlet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FarFieldRule {
    /// Kernel value at the offset times the cell volume.
    Midpoint,
    /// The same surface-integral evaluation as the near field, for every offset.
    Exact,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssemblyConfig {
    /// Offsets with `max_d |k_d| h_d <= radius · max_d h_d` use exact cell integrals.
    pub near_field_radius: usize,
    /// Initial panel count of the adaptive face quadratures.
    pub subdivision_order: usize,
    pub far_field_rule: FarFieldRule,
    pub max_nodes: usize,
}

impl Default for AssemblyConfig {
    fn default() -> Self {
        AssemblyConfig {
            near_field_radius: 4,
            subdivision_order: 8,
            far_field_rule: FarFieldRule::Midpoint,
            max_nodes: 1 << 18,
        }
    }
}

impl AssemblyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.subdivision_order == 0 {
            return Err(Error::config("subdivision_order must be at least 1"));
        }
        Ok(())
    }
}

/// Pair and exterior weights for one (grid, s, p, kind).
#[derive(Debug)]
pub struct NonlocalOperator {
    grid: Arc<Grid>,
    s: f64,
    p: f64,
    kind: SeminormKind,
    cfg: AssemblyConfig,
    constant: f64,
    /// Weight per lattice offset, row-major over `(2N_d − 1)` per axis.
    table: Vec<f64>,
    exterior: Vec<f64>,
    row_sums: OnceLock<Vec<f64>>,
}

fn table_dims(counts: &[usize]) -> Vec<usize> {
    counts.iter().map(|c| 2 * c - 1).collect()
}

fn offset_value(q: &[i64], h: &[f64], sp: f64, cfg: &AssemblyConfig) -> f64 {
    let hmax = h.iter().cloned().fold(0.0, f64::max);
    let reach = q.iter().zip(h).map(|(&k, hd)| k as f64 * hd).fold(0.0, f64::max);
    let near = reach <= cfg.near_field_radius as f64 * hmax * (1.0 + 1e-12);
    if near || cfg.far_field_rule == FarFieldRule::Exact {
        weights::box_kernel_integral(q, h, sp, cfg.subdivision_order)
    } else {
        weights::midpoint_kernel_integral(q, h, sp)
    }
}

/// Build the operator. Cost is one kernel integral per nonnegative offset plus,
/// for the Dirichlet kind, one exterior integral per node.
pub fn assemble(grid: Arc<Grid>, s: f64, p: f64, kind: SeminormKind, cfg: &AssemblyConfig) -> Result<NonlocalOperator> {
    cfg.validate()?;
    let params = FracParams::new(grid.dim(), s, p)?;
    let nodes = grid.node_count();
    if nodes > cfg.max_nodes {
        return Err(Error::Resource { nodes, limit: cfg.max_nodes });
    }
    let constant = c_flap(&params)?;
    let sp = s * p;
    let counts = grid.counts().to_vec();
    let h = grid.spacing().to_vec();
    let vol = grid.cell_volume();
    let n = grid.dim();

    // one value per nonnegative offset, mirrored into all sign patterns
    let quadrant: usize = counts.iter().product();
    let values: Vec<f64> = (0..quadrant)
        .into_par_iter()
        .map(|lin| {
            let q: Vec<i64> = grid.multi_index(lin).into_iter().map(|v| v as i64).collect();
            if q.iter().all(|&v| v == 0) {
                0.0
            } else {
                0.5 * constant * vol * offset_value(&q, &h, sp, cfg)
            }
        })
        .collect();
    let tdims = table_dims(&counts);
    let mut table = vec![0.0; tdims.iter().product()];
    for (t, slot) in table.iter_mut().enumerate() {
        let mut rem = t;
        let mut lin = 0;
        let mut idx = vec![0usize; n];
        for d in (0..n).rev() {
            idx[d] = rem % tdims[d];
            rem /= tdims[d];
        }
        for d in 0..n {
            let k = idx[d] as i64 - (counts[d] as i64 - 1);
            lin = lin * counts[d] + k.unsigned_abs() as usize;
        }
        *slot = values[lin];
    }

    let exterior = match kind {
        SeminormKind::Regional => vec![0.0; nodes],
        SeminormKind::Dirichlet => {
            let factors = grid.domain().factors().to_vec();
            (0..nodes)
                .into_par_iter()
                .map(|i| {
                    let x = grid.node(i);
                    constant * vol * box_exterior_integral(&x, &factors, sp, h[0], cfg.subdivision_order)
                })
                .collect()
        }
    };

    Ok(NonlocalOperator { grid, s, p, kind, cfg: cfg.clone(), constant, table, exterior, row_sums: OnceLock::new() })
}

/// |d|^p and |d|^{p-2} d for the exponents that have cheap forms.
trait PowerLaw: Sync {
    fn value(&self, a: f64) -> f64;
    fn slope(&self, d: f64) -> f64;
}

struct Square;
struct Cube;
struct ThreeHalves;
struct Linear;
struct General(f64);

impl PowerLaw for Square {
    #[inline(always)]
    fn value(&self, a: f64) -> f64 {
        a * a
    }
    #[inline(always)]
    fn slope(&self, d: f64) -> f64 {
        d
    }
}

impl PowerLaw for Cube {
    #[inline(always)]
    fn value(&self, a: f64) -> f64 {
        a * a * a
    }
    #[inline(always)]
    fn slope(&self, d: f64) -> f64 {
        d * d.abs()
    }
}

impl PowerLaw for ThreeHalves {
    #[inline(always)]
    fn value(&self, a: f64) -> f64 {
        a * a.sqrt()
    }
    #[inline(always)]
    fn slope(&self, d: f64) -> f64 {
        let a = d.abs();
        if a > 0.0 {
            d / a.sqrt()
        } else {
            0.0
        }
    }
}

impl PowerLaw for Linear {
    #[inline(always)]
    fn value(&self, a: f64) -> f64 {
        a
    }
    #[inline(always)]
    fn slope(&self, d: f64) -> f64 {
        if d > 0.0 {
            1.0
        } else if d < 0.0 {
            -1.0
        } else {
            0.0
        }
    }
}

impl PowerLaw for General {
    #[inline(always)]
    fn value(&self, a: f64) -> f64 {
        a.powf(self.0)
    }
    #[inline(always)]
    fn slope(&self, d: f64) -> f64 {
        let a = d.abs();
        if a > 0.0 {
            a.powf(self.0 - 2.0) * d
        } else {
            0.0
        }
    }
}

/// Apply `body` with the power law matching `p`.
macro_rules! with_law {
    ($p:expr, $law:ident => $body:expr) => {{
        let p = $p;
        if p == 2.0 {
            let $law = Square;
            $body
        } else if p == 3.0 {
            let $law = Cube;
            $body
        } else if p == 1.5 {
            let $law = ThreeHalves;
            $body
        } else if p == 1.0 {
            let $law = Linear;
            $body
        } else {
            let $law = General(p);
            $body
        }
    }};
}

pub(crate) use with_law;

/// φ(t) = |t|^{p−2} t.
pub fn signed_power(t: f64, p: f64) -> f64 {
    with_law!(p, law => law.slope(t))
}

/// |t|^p.
pub fn abs_power(t: f64, p: f64) -> f64 {
    with_law!(p, law => law.value(t.abs()))
}

const PAR_MIN_ROWS: usize = 256;

impl NonlocalOperator {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn kind(&self) -> SeminormKind {
        self.kind
    }

    pub fn config(&self) -> &AssemblyConfig {
        &self.cfg
    }

    /// C_{n,s,p} used in the weights.
    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn exterior_weights(&self) -> &[f64] {
        &self.exterior
    }

    pub fn node_count(&self) -> usize {
        self.grid.node_count()
    }

    fn table_index(&self, offset: &[i64]) -> Option<usize> {
        let counts = self.grid.counts();
        let mut t = 0usize;
        for (d, &k) in offset.iter().enumerate() {
            let c = counts[d] as i64;
            if k.abs() >= c {
                return None;
            }
            t = t * (2 * counts[d] - 1) + (k + c - 1) as usize;
        }
        Some(t)
    }

    /// Weight for the lattice offset j − i (0 on the diagonal or out of range).
    pub fn offset_weight(&self, offset: &[i64]) -> f64 {
        self.table_index(offset).map_or(0.0, |t| self.table[t])
    }

    /// w_ij.
    pub fn pair_weight(&self, i: usize, j: usize) -> f64 {
        let a = self.grid.multi_index(i);
        let b = self.grid.multi_index(j);
        let off: Vec<i64> = a.iter().zip(&b).map(|(&x, &y)| y as i64 - x as i64).collect();
        self.offset_weight(&off)
    }

    /// Calls `f(u_start, table_start)` once per contiguous run of partners of
    /// row `i` along the last axis; the run has `counts[last]` entries.
    #[inline]
    fn for_each_segment(&self, i: usize, mut f: impl FnMut(usize, usize)) {
        let counts = self.grid.counts();
        let n = counts.len();
        let last = counts[n - 1];
        let idx = self.grid.multi_index(i);
        let tdims = table_dims(counts);
        let outer: usize = counts[..n - 1].iter().product();
        let mut prefix = vec![0usize; n - 1];
        for block in 0..outer {
            let mut t = 0usize;
            for d in 0..n - 1 {
                t = t * tdims[d] + (prefix[d] + counts[d] - 1 - idx[d]);
            }
            t = t * tdims[n - 1] + (last - 1 - idx[n - 1]);
            f(block * last, t);
            for d in (0..n - 1).rev() {
                prefix[d] += 1;
                if prefix[d] < counts[d] {
                    break;
                }
                prefix[d] = 0;
            }
        }
    }

    fn row_energy<L: PowerLaw>(&self, law: &L, u: &[f64], i: usize) -> f64 {
        let last = *self.grid.counts().last().unwrap();
        let ui = u[i];
        let mut acc = 0.0;
        self.for_each_segment(i, |us, ts| {
            let w = &self.table[ts..ts + last];
            let v = &u[us..us + last];
            let mut part = 0.0;
            for (wk, vk) in w.iter().zip(v) {
                part += wk * law.value((ui - vk).abs());
            }
            acc += part;
        });
        acc
    }

    fn row_energy_grad<L: PowerLaw>(&self, law: &L, u: &[f64], i: usize) -> (f64, f64) {
        let last = *self.grid.counts().last().unwrap();
        let ui = u[i];
        let (mut e, mut g) = (0.0, 0.0);
        self.for_each_segment(i, |us, ts| {
            let w = &self.table[ts..ts + last];
            let v = &u[us..us + last];
            let (mut pe, mut pg) = (0.0, 0.0);
            for (wk, vk) in w.iter().zip(v) {
                let d = ui - vk;
                pe += wk * law.value(d.abs());
                pg += wk * law.slope(d);
            }
            e += pe;
            g += pg;
        });
        (e, g)
    }

    fn rows<T: Send>(&self, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
        let n = self.node_count();
        if n < PAR_MIN_ROWS {
            (0..n).map(f).collect()
        } else {
            (0..n).into_par_iter().map(f).collect()
        }
    }

    /// Energy of raw node values. Row sums are reduced in node order, so the
    /// result does not depend on the number of threads.
    pub fn energy_values(&self, u: &[f64]) -> f64 {
        let p = self.p;
        let rows: Vec<f64> = with_law!(p, law => self.rows(|i| self.row_energy(&law, u, i)));
        let pair: f64 = rows.iter().sum();
        let ext: f64 = with_law!(p, law => self.exterior.iter().zip(u).map(|(e, v)| e * law.value(v.abs())).sum::<f64>());
        pair + ext
    }

    /// Energy and its gradient for raw node values; `grad` is overwritten.
    pub fn energy_gradient_values(&self, u: &[f64], grad: &mut [f64]) -> Result<f64> {
        let p = self.p;
        if p <= 1.0 {
            return Err(Error::Unsupported("energy gradient needs p > 1".into()));
        }
        let rows: Vec<(f64, f64)> = with_law!(p, law => self.rows(|i| self.row_energy_grad(&law, u, i)));
        let mut total = 0.0;
        for (i, (e, g)) in rows.into_iter().enumerate() {
            total += e;
            grad[i] = 2.0 * p * g;
        }
        with_law!(p, law => {
            for (i, (ei, ui)) in self.exterior.iter().zip(u).enumerate() {
                total += ei * law.value(ui.abs());
                grad[i] += p * ei * law.slope(*ui);
            }
        });
        Ok(total)
    }

    /// R_i = Σ_j w_ij.
    pub fn row_sums(&self) -> &[f64] {
        self.row_sums.get_or_init(|| {
            let last = *self.grid.counts().last().unwrap();
            self.rows(|i| {
                let mut acc = 0.0;
                self.for_each_segment(i, |_, ts| acc += self.table[ts..ts + last].iter().sum::<f64>());
                acc
            })
        })
    }

    /// Diagonal of the quadratic form K with energy_{p=2}(u) = uᵀKu.
    pub fn quadratic_diagonal(&self) -> Vec<f64> {
        self.row_sums().iter().zip(&self.exterior).map(|(r, e)| 2.0 * r + e).collect()
    }

    /// K u for the p = 2 quadratic form, whatever `p` the operator was built with.
    pub fn quadratic_apply(&self, u: &[f64]) -> Vec<f64> {
        let last = *self.grid.counts().last().unwrap();
        let diag = self.quadratic_diagonal();
        self.rows(|i| {
            let mut acc = 0.0;
            self.for_each_segment(i, |us, ts| {
                let w = &self.table[ts..ts + last];
                acc += w.iter().zip(&u[us..us + last]).map(|(a, b)| a * b).sum::<f64>();
            });
            diag[i] * u[i] - 2.0 * acc
        })
    }

    /// Dense row-major K restricted to `keep` (all nodes when `None`).
    pub fn quadratic_dense(&self, keep: Option<&[usize]>) -> Vec<f64> {
        let all: Vec<usize>;
        let nodes = match keep {
            Some(k) => k,
            None => {
                all = (0..self.node_count()).collect();
                &all
            }
        };
        let m = nodes.len();
        let diag = self.quadratic_diagonal();
        let idx: Vec<Vec<usize>> = nodes.iter().map(|&i| self.grid.multi_index(i)).collect();
        let mut k = vec![0.0; m * m];
        for (r, &i) in nodes.iter().enumerate() {
            for c in 0..m {
                let val = if c == r {
                    diag[i]
                } else {
                    let off: Vec<i64> = idx[r].iter().zip(&idx[c]).map(|(&a, &b)| b as i64 - a as i64).collect();
                    -2.0 * self.offset_weight(&off)
                };
                k[r * m + c] = val;
            }
        }
        k
    }

    fn check(&self, u: &GridFunction) -> Result<()> {
        if u.grid().as_ref() != self.grid.as_ref() {
            return Err(Error::Usage("grid function lives on a different grid".into()));
        }
        Ok(())
    }
}

/// Σ_{i<j} 2 w_ij |u_i − u_j|^p + Σ_i e_i |u_i|^p.
pub fn energy(op: &NonlocalOperator, u: &GridFunction) -> Result<f64> {
    op.check(u)?;
    Ok(op.energy_values(u.values()))
}

/// Σ_i vol |u_i|^p.
pub fn lp_norm_p(u: &GridFunction, p: f64) -> f64 {
    let vol = u.grid().cell_volume();
    with_law!(p, law => u.values().iter().map(|v| law.value(v.abs())).sum::<f64>()) * vol
}

/// energy / lp_norm_p.
pub fn rayleigh(op: &NonlocalOperator, u: &GridFunction) -> Result<f64> {
    op.check(u)?;
    let norm = lp_norm_p(u, op.p);
    if norm == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(op.energy_values(u.values()) / norm)
}

/// g_i = 2p Σ_j w_ij φ(u_i − u_j) + p e_i φ(u_i), the exact gradient of `energy`.
pub fn energy_gradient(op: &NonlocalOperator, u: &GridFunction) -> Result<GridFunction> {
    op.check(u)?;
    let mut g = vec![0.0; op.node_count()];
    op.energy_gradient_values(u.values(), &mut g)?;
    GridFunction::new(u.grid().clone(), g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_grid, DomainSpec, Interval};

    fn op1(h: f64, kind: SeminormKind, p: f64) -> NonlocalOperator {
        let g = Arc::new(build_grid(&DomainSpec::interval(-1.0, 1.0).unwrap(), h).unwrap());
        assemble(g, 0.5, p, kind, &AssemblyConfig::default()).unwrap()
    }

    #[test]
    fn two_node_far_field_weight() {
        let g = Arc::new(build_grid(&DomainSpec::interval(0.0, 1.0).unwrap(), 0.5).unwrap());
        let cfg = AssemblyConfig { near_field_radius: 0, ..Default::default() };
        let op = assemble(g, 0.5, 2.0, SeminormKind::Regional, &cfg).unwrap();
        let c = c_flap(&FracParams::new(1, 0.5, 2.0).unwrap()).unwrap();
        let expected = 0.5 * c * 0.25 * 0.5f64.powf(-2.0);
        assert!((op.pair_weight(0, 1) - expected).abs() < 1e-15);
    }

    #[test]
    fn constants() {
        let op = op1(1.0 / 16.0, SeminormKind::Regional, 2.0);
        let one = GridFunction::from_fn(op.grid().clone(), |_| 1.0);
        assert_eq!(energy(&op, &one).unwrap(), 0.0);
        let g = energy_gradient(&op, &one).unwrap();
        assert!(g.values().iter().all(|v| *v == 0.0));
        let dir = op1(1.0 / 16.0, SeminormKind::Dirichlet, 2.0);
        let e = energy(&dir, &one).unwrap();
        let ext: f64 = dir.exterior_weights().iter().sum();
        assert!((e - ext).abs() < 1e-12 * ext);
        assert!((lp_norm_p(&one, 2.0) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn zero_norm_is_an_error() {
        let op = op1(0.25, SeminormKind::Dirichlet, 2.0);
        let z = GridFunction::zeros(op.grid().clone());
        assert!(matches!(rayleigh(&op, &z), Err(Error::ZeroNorm)));
        assert_eq!(energy(&op, &z).unwrap(), 0.0);
    }

    #[test]
    fn gradient_unsupported_for_p_one() {
        let op = op1(0.25, SeminormKind::Dirichlet, 1.0);
        let u = GridFunction::from_fn(op.grid().clone(), |x| 1.0 - x[0] * x[0]);
        assert!(energy(&op, &u).unwrap() > 0.0);
        assert!(matches!(energy_gradient(&op, &u), Err(Error::Unsupported(_))));
    }

    #[test]
    fn quadratic_gradient_is_twice_k_u() {
        let d = DomainSpec::boxed(vec![Interval::new(0.0, 1.0).unwrap(), Interval::new(0.0, 2.0).unwrap()]).unwrap();
        let g = Arc::new(build_grid(&d, 0.25).unwrap());
        let op = assemble(g.clone(), 0.3, 2.0, SeminormKind::Dirichlet, &AssemblyConfig::default()).unwrap();
        let u = GridFunction::from_fn(g, |x| (x[0] * 3.0).sin() + x[1]);
        let grad = energy_gradient(&op, &u).unwrap();
        let ku = op.quadratic_apply(u.values());
        for (a, b) in grad.values().iter().zip(&ku) {
            assert!((a - 2.0 * b).abs() < 1e-12 * (1.0 + b.abs()));
        }
        let e = energy(&op, &u).unwrap();
        let quad: f64 = u.values().iter().zip(&ku).map(|(a, b)| a * b).sum();
        assert!((e - quad).abs() < 1e-12 * e);
        let dense = op.quadratic_dense(None);
        let m = op.node_count();
        for r in 0..m {
            let row: f64 = (0..m).map(|c| dense[r * m + c] * u.values()[c]).sum();
            assert!((row - ku[r]).abs() < 1e-11 * (1.0 + row.abs()));
        }
    }

    #[test]
    fn weights_symmetric_and_positive() {
        let d = DomainSpec::boxed(vec![Interval::new(0.0, 1.0).unwrap(), Interval::new(0.0, 0.75).unwrap()]).unwrap();
        let g = Arc::new(build_grid(&d, 0.25).unwrap());
        let op = assemble(g, 0.6, 1.5, SeminormKind::Dirichlet, &AssemblyConfig::default()).unwrap();
        let n = op.node_count();
        for i in 0..n {
            assert!(op.exterior_weights()[i] > 0.0);
            for j in 0..n {
                if i != j {
                    assert!(op.pair_weight(i, j) > 0.0);
                    assert_eq!(op.pair_weight(i, j), op.pair_weight(j, i));
                }
            }
        }
    }

    #[test]
    fn exterior_matches_lattice_sum_in_one_dim() {
        // κ(x_i)·vol·C equals Σ over exterior lattice cells of 2 w_ij when all
        // cells use exact integrals
        let h = 1.0 / 8.0;
        let cfg = AssemblyConfig { far_field_rule: FarFieldRule::Exact, ..Default::default() };
        let inner = Arc::new(build_grid(&DomainSpec::interval(-1.0, 1.0).unwrap(), h).unwrap());
        let outer = Arc::new(build_grid(&DomainSpec::interval(-3.0, 3.0).unwrap(), h).unwrap());
        let a = assemble(inner.clone(), 0.5, 2.0, SeminormKind::Dirichlet, &cfg).unwrap();
        let b = assemble(outer.clone(), 0.5, 2.0, SeminormKind::Dirichlet, &cfg).unwrap();
        let shift = 16;
        for i in 0..inner.node_count() {
            let bi = i + shift;
            let mut lattice = b.exterior_weights()[bi];
            for j in 0..outer.node_count() {
                if j < shift || j >= shift + inner.node_count() {
                    lattice += 2.0 * b.pair_weight(bi, j);
                }
            }
            let e = a.exterior_weights()[i];
            assert!(((lattice - e) / e).abs() < 1e-11);
        }
    }
}
