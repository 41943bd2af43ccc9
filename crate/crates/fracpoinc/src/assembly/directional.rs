//! Directional (line-by-line) evaluation of the regional double integral.

use std::f64::consts::PI;

use rayon::prelude::*;

use super::{assemble, offset_value, with_law, AssemblyConfig, PowerLaw, SeminormKind};
use super::{Cube, General, Linear, Square, ThreeHalves};
use crate::domain::{Grid, GridFunction};
use crate::error::{Error, Result};

/// Multilinear interpolation of node values; points between the outermost node
/// and the boundary take the value of the clamped coordinate.
struct Interpolant<'a> {
    grid: &'a Grid,
    values: &'a [f64],
}

impl Interpolant<'_> {
    fn axis(&self, d: usize, x: f64) -> (usize, f64) {
        let f = &self.grid.domain().factors()[d];
        let c = self.grid.counts()[d];
        let t = ((x - f.a) / self.grid.spacing()[d] - 0.5).clamp(0.0, (c - 1) as f64);
        let k = (t.floor() as usize).min(c - 2);
        (k, t - k as f64)
    }

    fn eval(&self, x: &[f64]) -> f64 {
        let n = x.len();
        let cells: Vec<(usize, f64)> = (0..n).map(|d| self.axis(d, x[d])).collect();
        let mut total = 0.0;
        for corner in 0..(1usize << n) {
            let mut weight = 1.0;
            let mut idx = vec![0usize; n];
            for d in 0..n {
                let (k, t) = cells[d];
                if corner >> d & 1 == 1 {
                    idx[d] = k + 1;
                    weight *= t;
                } else {
                    idx[d] = k;
                    weight *= 1.0 - t;
                }
            }
            if weight != 0.0 {
                total += weight * self.values[self.grid.linear_index(&idx)];
            }
        }
        total
    }
}

/// ∫∫ |f(a) − f(b)|^p |a − b|^{-1-sp} over a segment sampled at `f.len()` cell
/// centres of spacing `delta`, with the same cell rule as the assembly.
fn line_energy<L: PowerLaw>(law: &L, f: &[f64], unit_weights: &[f64], delta: f64, sp: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..f.len() {
        let fi = f[i];
        let mut part = 0.0;
        for (w, fj) in unit_weights[1..f.len() - i].iter().zip(&f[i + 1..]) {
            part += w * law.value((fi - fj).abs());
        }
        acc += part;
    }
    2.0 * acc * delta.powf(1.0 - sp)
}

/// Both sides of the directional decomposition
/// `2∬_{Ω×Ω} |u(x)−u(y)|^p |x−y|^{-n-sp} = ∫_{S^{n-1}} ∫_{w⊥} ∫∫ |u(x+aw)−u(x+bw)|^p |a−b|^{-1-sp}`.
///
/// The left side uses the assembled regional weights; the right side uses
/// midpoint rules in angle and hyperplane offset and `line_nodes` cells along
/// each chord, with `u` interpolated multilinearly.
pub fn directional_decomposition(
    u: &GridFunction,
    s: f64,
    p: f64,
    angular_nodes: usize,
    line_nodes: usize,
    cfg: &AssemblyConfig,
) -> Result<(f64, f64)> {
    let grid = u.grid().clone();
    let n = grid.dim();
    if n > 2 {
        return Err(Error::Unsupported(format!("directional decomposition in dimension {n}")));
    }
    if angular_nodes == 0 || line_nodes < 2 {
        return Err(Error::config("need at least one angle and two line nodes"));
    }
    if u.values().iter().all(|&v| v == u.values()[0]) {
        return Ok((0.0, 0.0));
    }
    let op = assemble(grid.clone(), s, p, SeminormKind::Regional, cfg)?;
    let lhs = 4.0 * op.energy_values(u.values()) / op.constant();

    let sp = s * p;
    let unit_weights: Vec<f64> =
        (0..line_nodes).map(|k| if k == 0 { 0.0 } else { offset_value(&[k as i64], &[1.0], sp, cfg) }).collect();
    let interp = Interpolant { grid: &grid, values: u.values() };
    let factors = grid.domain().factors();

    let rhs = if n == 1 {
        let f = &factors[0];
        let delta = f.len() / line_nodes as f64;
        let samples: Vec<f64> = (0..line_nodes).map(|k| interp.eval(&[f.a + (k as f64 + 0.5) * delta])).collect();
        2.0 * with_law!(p, law => line_energy(&law, &samples, &unit_weights, delta, sp))
    } else {
        let dtheta = PI / angular_nodes as f64;
        let per_angle: Vec<f64> = (0..angular_nodes)
            .into_par_iter()
            .map(|k| {
                let theta = (k as f64 + 0.5) * dtheta;
                let w = [theta.cos(), theta.sin()];
                let normal = [-theta.sin(), theta.cos()];
                let corners = [
                    [factors[0].a, factors[1].a],
                    [factors[0].a, factors[1].b],
                    [factors[0].b, factors[1].a],
                    [factors[0].b, factors[1].b],
                ];
                let proj: Vec<f64> = corners.iter().map(|c| c[0] * normal[0] + c[1] * normal[1]).collect();
                let tmin = proj.iter().cloned().fold(f64::INFINITY, f64::min);
                let tmax = proj.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let dtau = (tmax - tmin) / line_nodes as f64;
                let mut samples = vec![0.0; line_nodes];
                let mut acc = 0.0;
                for j in 0..line_nodes {
                    let tau = tmin + (j as f64 + 0.5) * dtau;
                    let base = [tau * normal[0], tau * normal[1]];
                    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
                    for d in 0..2 {
                        if w[d].abs() < 1e-300 {
                            continue;
                        }
                        let a = (factors[d].a - base[d]) / w[d];
                        let b = (factors[d].b - base[d]) / w[d];
                        lo = lo.max(a.min(b));
                        hi = hi.min(a.max(b));
                    }
                    if !(hi > lo) {
                        continue;
                    }
                    let delta = (hi - lo) / line_nodes as f64;
                    for (i, slot) in samples.iter_mut().enumerate() {
                        let t = lo + (i as f64 + 0.5) * delta;
                        *slot = interp.eval(&[base[0] + t * w[0], base[1] + t * w[1]]);
                    }
                    acc += dtau * with_law!(p, law => line_energy(&law, &samples, &unit_weights, delta, sp));
                }
                acc
            })
            .collect();
        2.0 * dtheta * per_angle.iter().sum::<f64>()
    };
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_grid, DomainSpec};
    use std::sync::Arc;

    #[test]
    fn zero_function() {
        let g = Arc::new(build_grid(&DomainSpec::interval(0.0, 1.0).unwrap(), 0.125).unwrap());
        let u = GridFunction::zeros(g);
        let (l, r) = directional_decomposition(&u, 0.5, 2.0, 4, 8, &AssemblyConfig::default()).unwrap();
        assert_eq!((l, r), (0.0, 0.0));
    }

    #[test]
    fn one_dim_is_an_identity() {
        let g = Arc::new(build_grid(&DomainSpec::interval(0.0, 1.0).unwrap(), 1.0 / 64.0).unwrap());
        let u = GridFunction::from_fn(g.clone(), |x| (PI * x[0]).sin().powi(2));
        let (l, r) = directional_decomposition(&u, 0.5, 2.0, 1, 64, &AssemblyConfig::default()).unwrap();
        assert!(((l - r) / l).abs() < 1e-6, "{l} {r}");
    }

    #[test]
    fn interpolation_reproduces_bilinear() {
        let d = DomainSpec::boxed(vec![crate::domain::Interval::new(0.0, 1.0).unwrap(); 2]).unwrap();
        let g = build_grid(&d, 0.125).unwrap();
        let vals: Vec<f64> = g.nodes().iter().map(|x| 1.0 + 2.0 * x[0] - x[1] + 3.0 * x[0] * x[1]).collect();
        let it = Interpolant { grid: &g, values: &vals };
        for x in [[0.3, 0.41], [0.0625, 0.9375], [0.5, 0.5]] {
            let exact = 1.0 + 2.0 * x[0] - x[1] + 3.0 * x[0] * x[1];
            assert!((it.eval(&x) - exact).abs() < 1e-13);
        }
    }
}
