//! Product domains, cell-centred tensor grids and grid functions.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quadrature::{integrate, QuadTol};

/// Half-open axis interval `[a, b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub a: f64,
    pub b: f64,
}

impl Interval {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::domain(format!("empty or non-finite interval [{a}, {b})")));
        }
        Ok(Interval { a, b })
    }

    pub fn len(&self) -> f64 {
        self.b - self.a
    }

    pub fn scaled(&self, t: f64) -> Interval {
        Interval { a: t * self.a, b: t * self.b }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DomainTag {
    Box,
    Cylinder {
        ell: f64,
        free_dims: usize,
        omega1: Vec<Interval>,
        cross_section: Vec<Interval>,
    },
    Dilation {
        base: Box<DomainSpec>,
        t: f64,
    },
}

/// Axis-aligned product domain.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    factors: Vec<Interval>,
    tag: DomainTag,
}

impl DomainSpec {
    pub fn boxed(factors: Vec<Interval>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::domain("a domain needs at least one factor"));
        }
        for f in &factors {
            Interval::new(f.a, f.b)?;
        }
        Ok(DomainSpec { factors, tag: DomainTag::Box })
    }

    pub fn interval(a: f64, b: f64) -> Result<Self> {
        DomainSpec::boxed(vec![Interval::new(a, b)?])
    }

    pub fn factors(&self) -> &[Interval] {
        &self.factors
    }

    pub fn tag(&self) -> &DomainTag {
        &self.tag
    }

    pub fn dim(&self) -> usize {
        self.factors.len()
    }

    pub fn volume(&self) -> f64 {
        self.factors.iter().map(Interval::len).product()
    }

    /// True when `x` lies in the open box.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && self.factors.iter().zip(x).all(|(f, &v)| f.a < v && v < f.b)
    }

    /// Shift every factor by `shift`; the result is a plain box.
    pub fn translate(&self, shift: &[f64]) -> Result<DomainSpec> {
        if shift.len() != self.dim() {
            return Err(Error::domain("shift has the wrong dimension"));
        }
        let factors = self.factors.iter().zip(shift).map(|(f, d)| Interval { a: f.a + d, b: f.b + d }).collect();
        DomainSpec::boxed(factors)
    }

    /// Free dimensions and ℓ when this is a cylinder.
    pub fn cylinder_params(&self) -> Option<(f64, usize)> {
        match &self.tag {
            DomainTag::Cylinder { ell, free_dims, .. } => Some((*ell, *free_dims)),
            _ => None,
        }
    }
}

/// tΩ: every factor `[a, b)` becomes `[ta, tb)`. Dilating a dilation composes the
/// factors, and a composite factor of exactly 1 returns the base domain.
pub fn dilate(domain: &DomainSpec, t: f64) -> Result<DomainSpec> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::domain(format!("dilation factor {t} must be positive")));
    }
    if t == 1.0 {
        return Ok(domain.clone());
    }
    let (base, total) = match &domain.tag {
        DomainTag::Dilation { base, t: t0 } => ((**base).clone(), t0 * t),
        _ => (domain.clone(), t),
    };
    if total == 1.0 {
        return Ok(base);
    }
    let factors = base.factors.iter().map(|f| f.scaled(total)).collect();
    Ok(DomainSpec { factors, tag: DomainTag::Dilation { base: Box::new(base), t: total } })
}

/// ℓω₁ × ω.
pub fn cylinder(ell: f64, omega1: &[Interval], omega: &[Interval]) -> Result<DomainSpec> {
    if !(ell > 0.0) || !ell.is_finite() {
        return Err(Error::domain(format!("cylinder length {ell} must be positive")));
    }
    if omega1.is_empty() || omega.is_empty() {
        return Err(Error::domain("cylinder needs nonempty free and cross-section factors"));
    }
    let mut factors: Vec<Interval> = omega1.iter().map(|f| f.scaled(ell)).collect();
    factors.extend_from_slice(omega);
    for f in &factors {
        Interval::new(f.a, f.b)?;
    }
    Ok(DomainSpec {
        factors,
        tag: DomainTag::Cylinder {
            ell,
            free_dims: omega1.len(),
            omega1: omega1.to_vec(),
            cross_section: omega.to_vec(),
        },
    })
}

fn cells_for(len: f64, h: f64) -> usize {
    // the small shrink keeps exact multiples from gaining a cell to rounding
    (len / h * (1.0 - 1e-12)).ceil() as usize
}

/// Uniform cell-centred lattice. Nodes sit at `a_d + (k + 1/2) h_d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    domain: DomainSpec,
    counts: Vec<usize>,
    h: Vec<f64>,
}

impl Grid {
    fn from_counts(domain: DomainSpec, counts: Vec<usize>) -> Result<Grid> {
        for (d, &c) in counts.iter().enumerate() {
            if c < 2 {
                return Err(Error::config(format!("axis {d} would have {c} cells; need at least 2")));
            }
        }
        let h = domain.factors.iter().zip(&counts).map(|(f, &c)| f.len() / c as f64).collect();
        Ok(Grid { domain, counts, h })
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn spacing(&self) -> &[f64] {
        &self.h
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.iter().product()
    }

    pub fn node_count(&self) -> usize {
        self.counts.iter().product()
    }

    /// Row-major multi-index of node `i` (last axis fastest).
    pub fn multi_index(&self, mut i: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for d in (0..self.dim()).rev() {
            idx[d] = i % self.counts[d];
            i /= self.counts[d];
        }
        idx
    }

    pub fn linear_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.counts).fold(0, |acc, (&k, &c)| acc * c + k)
    }

    pub fn axis_coord(&self, d: usize, k: usize) -> f64 {
        self.domain.factors[d].a + (k as f64 + 0.5) * self.h[d]
    }

    pub fn node(&self, i: usize) -> Vec<f64> {
        self.multi_index(i).iter().enumerate().map(|(d, &k)| self.axis_coord(d, k)).collect()
    }

    pub fn nodes(&self) -> Vec<Vec<f64>> {
        (0..self.node_count()).map(|i| self.node(i)).collect()
    }

    /// Nodes whose cell touches the boundary of the domain.
    pub fn boundary_layer(&self) -> Vec<bool> {
        (0..self.node_count())
            .map(|i| self.multi_index(i).iter().zip(&self.counts).any(|(&k, &c)| k == 0 || k + 1 == c))
            .collect()
    }
}

/// Cell-centred grid with the largest spacing not above `target_h` that divides
/// every factor into an integer number of cells.
pub fn build_grid(domain: &DomainSpec, target_h: f64) -> Result<Grid> {
    if !(target_h > 0.0) || !target_h.is_finite() {
        return Err(Error::config(format!("grid spacing {target_h} must be positive")));
    }
    let shortest = domain.factors.iter().map(Interval::len).fold(f64::INFINITY, f64::min);
    if target_h * (1.0 - 1e-12) > 0.5 * shortest {
        return Err(Error::config(format!(
            "grid spacing {target_h} exceeds half the shortest factor length {shortest}"
        )));
    }
    let counts = domain.factors.iter().map(|f| cells_for(f.len(), target_h)).collect();
    Grid::from_counts(domain.clone(), counts)
}

/// Grid for a cylinder ℓω₁ × ω: the cross-section axes get spacing `target_h`,
/// each free axis gets as many cells as ω₁ would at `target_h` (so its spacing
/// grows with ℓ and the node count does not).
pub fn build_cylinder_grid(domain: &DomainSpec, target_h: f64) -> Result<Grid> {
    let DomainTag::Cylinder { omega1, .. } = &domain.tag else {
        return Err(Error::config("stretched cylinder grid needs a cylinder domain"));
    };
    if !(target_h > 0.0) || !target_h.is_finite() {
        return Err(Error::config(format!("grid spacing {target_h} must be positive")));
    }
    let m = omega1.len();
    let mut counts = Vec::with_capacity(domain.dim());
    for (d, f) in domain.factors.iter().enumerate() {
        let len = if d < m { omega1[d].len() } else { f.len() };
        if target_h * (1.0 - 1e-12) > 0.5 * len {
            return Err(Error::config(format!("grid spacing {target_h} exceeds half of factor {d}")));
        }
        counts.push(cells_for(len, target_h));
    }
    Grid::from_counts(domain.clone(), counts)
}

/// Node values on a grid; the function is zero outside the open domain.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::Usage(format!(
                "{} values for a grid with {} nodes",
                values.len(),
                grid.node_count()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Usage("grid function values must be finite".into()));
        }
        Ok(GridFunction { grid, values })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.node_count();
        GridFunction { grid, values: vec![0.0; n] }
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.node_count()).map(|i| f(&grid.node(i))).collect();
        GridFunction { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn scaled(&self, c: f64) -> Self {
        GridFunction { grid: self.grid.clone(), values: self.values.iter().map(|v| c * v).collect() }
    }

    pub fn abs(&self) -> Self {
        GridFunction { grid: self.grid.clone(), values: self.values.iter().map(|v| v.abs()).collect() }
    }
}

/// ∫_rect (c2 + |t|²)^{-alpha} dt over an axis-aligned rectangle, one axis at a
/// time with t = √c2·tan φ so every level integrates a bounded smooth function.
pub(crate) fn face_integral(c2: f64, rect: &[(f64, f64)], alpha: f64, tol: QuadTol) -> f64 {
    let Some((&(lo, hi), rest)) = rect.split_first() else {
        return c2.powf(-alpha);
    };
    let c = c2.sqrt();
    let (phi0, phi1) = ((lo / c).atan(), (hi / c).atan());
    if rest.is_empty() {
        // closed form base level: c^{1-2α} ∫ cos^{2α-2} φ dφ
        let pw = 2.0 * alpha - 2.0;
        return c.powf(1.0 - 2.0 * alpha) * integrate(|phi: f64| phi.cos().powf(pw), phi0, phi1, tol);
    }
    integrate(
        |phi: f64| {
            let sec2 = 1.0 / (phi.cos() * phi.cos());
            face_integral(c2 * sec2, rest, alpha, tol) * c * sec2
        },
        phi0,
        phi1,
        tol,
    )
}

pub(crate) fn face_tol(panels: usize) -> QuadTol {
    QuadTol { rel: 1e-13, abs: 0.0, panels: panels.max(1) }
}

/// κ(x) for a box written as surface integrals: with K(z) = |z|^{-n-sp},
/// div(zK) = -sp·K, so the exterior integral equals (1/sp) Σ_faces dist·∫_face K.
/// Lengths are measured in units of `scale` and the result is returned in the
/// caller's units.
pub(crate) fn box_exterior_integral(x: &[f64], factors: &[Interval], sp: f64, scale: f64, panels: usize) -> f64 {
    let n = x.len();
    let lo: Vec<f64> = x.iter().zip(factors).map(|(xv, f)| (xv - f.a) / scale).collect();
    let hi: Vec<f64> = x.iter().zip(factors).map(|(xv, f)| (f.b - xv) / scale).collect();
    let value = if n == 1 {
        (lo[0].powf(-sp) + hi[0].powf(-sp)) / sp
    } else {
        let alpha = (n as f64 + sp) / 2.0;
        let tol = face_tol(panels);
        let mut total = 0.0;
        for d in 0..n {
            let rect: Vec<(f64, f64)> = (0..n).filter(|&j| j != d).map(|j| (-lo[j], hi[j])).collect();
            for c in [lo[d], hi[d]] {
                total += c * face_integral(c * c, &rect, alpha, tol);
            }
        }
        total / sp
    };
    value * scale.powf(-sp)
}

/// κ(x) = ∫_{R^n \ Ω} |x − y|^{-n-sp} dy for x inside a box domain.
pub fn exterior_kernel_weight(x: &[f64], domain: &DomainSpec, s: f64, p: f64) -> Result<f64> {
    if x.len() != domain.dim() {
        return Err(Error::domain("point dimension does not match the domain"));
    }
    if !domain.contains(x) {
        return Err(Error::domain("κ is only finite strictly inside the domain"));
    }
    let sp = s * p;
    if !(sp > 0.0) {
        return Err(Error::domain("sp must be positive"));
    }
    Ok(box_exterior_integral(x, domain.factors(), sp, 1.0, 8))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> DomainSpec {
        DomainSpec::interval(-1.0, 1.0).unwrap()
    }

    #[test]
    fn interval_grid_centres() {
        let g = build_grid(&unit(), 0.5).unwrap();
        let xs: Vec<f64> = g.nodes().into_iter().map(|v| v[0]).collect();
        assert_eq!(xs, vec![-0.75, -0.25, 0.25, 0.75]);
    }

    #[test]
    fn box_grid_counts() {
        let d = DomainSpec::boxed(vec![Interval::new(-1.0, 1.0).unwrap(), Interval::new(0.0, 1.0).unwrap()]).unwrap();
        let g = build_grid(&d, 0.5).unwrap();
        assert_eq!(g.counts(), &[4, 2]);
        assert!(build_grid(&d, 0.6).is_err());
    }

    #[test]
    fn dilated_grid() {
        let d = dilate(&unit(), 2.0).unwrap();
        let g = build_grid(&d, 0.5).unwrap();
        assert_eq!(g.node_count(), 8);
        assert_eq!(g.node(0)[0], -1.75);
        assert_eq!(g.node(7)[0], 1.75);
    }

    #[test]
    fn two_cells_survive_rounding() {
        // t*b − t*a comes out one ulp below t*(b − a) here
        let d = DomainSpec::interval(1.606, 2.182).unwrap();
        let h = d.factors()[0].len() / 2.0;
        let g = build_grid(&dilate(&d, 0.35).unwrap(), 0.35 * h).unwrap();
        assert_eq!(g.counts(), &[2]);
        assert!(build_grid(&d, h * 1.001).is_err());
    }

    #[test]
    fn dilation_group() {
        let d = unit();
        assert_eq!(dilate(&d, 1.0).unwrap(), d);
        let there = dilate(&d, 2.0).unwrap();
        assert_eq!(there.factors()[0], Interval { a: -2.0, b: 2.0 });
        assert_eq!(dilate(&there, 0.5).unwrap(), d);
        assert!(dilate(&d, 0.0).is_err());
        assert!((there.volume() - 2.0 * d.volume()).abs() < 1e-15);
    }

    #[test]
    fn cylinder_factors() {
        let w1 = [Interval::new(-1.0, 1.0).unwrap()];
        let w = [Interval::new(0.0, 1.0).unwrap()];
        let c = cylinder(2.0, &w1, &w).unwrap();
        assert_eq!(c.factors(), &[Interval { a: -2.0, b: 2.0 }, Interval { a: 0.0, b: 1.0 }]);
        assert!(cylinder(1.0, &[], &w).is_err());
        assert!(cylinder(-1.0, &w1, &w).is_err());
    }

    #[test]
    fn stretched_cylinder_grid_keeps_node_count() {
        let w1 = [Interval::new(-1.0, 1.0).unwrap()];
        for ell in [2.0, 16.0] {
            let c = cylinder(ell, &w1, &w1).unwrap();
            let g = build_cylinder_grid(&c, 1.0 / 8.0).unwrap();
            assert_eq!(g.counts(), &[16, 16]);
            assert_eq!(g.spacing()[0], ell / 8.0);
        }
    }

    #[test]
    fn kappa_interval_centre() {
        let k = exterior_kernel_weight(&[0.0], &unit(), 0.5, 2.0).unwrap();
        assert!((k - 2.0).abs() < 1e-14);
        assert!(exterior_kernel_weight(&[1.0], &unit(), 0.5, 2.0).is_err());
    }

    #[test]
    fn kappa_square_matches_polar_quadrature() {
        // κ at the centre of (-1,1)^2: ∫_0^{2π} ∫_{r(θ)}^∞ r^{-1-sp} dr dθ = (1/sp)∫ r(θ)^{-sp} dθ
        let sq = DomainSpec::boxed(vec![Interval::new(-1.0, 1.0).unwrap(); 2]).unwrap();
        let sp = 0.8;
        let k = exterior_kernel_weight(&[0.0, 0.0], &sq, 0.4, 2.0).unwrap();
        let oracle = 8.0
            * integrate(
                |t: f64| (1.0 / t.cos()).powf(-sp),
                0.0,
                std::f64::consts::FRAC_PI_4,
                QuadTol::default(),
            )
            / sp;
        assert!(((k - oracle) / oracle).abs() < 1e-12, "{k} {oracle}");
    }
}
