//! Kernel integrals over lattice cells.

use crate::domain::{face_integral, face_tol};

fn face(c: f64, rect: &[(f64, f64)], alpha: f64, panels: usize) -> f64 {
    face_integral(c * c, rect, alpha, face_tol(panels))
}

/// ∫_B |z|^{-n-sp} dz over the box B = ∏ [(k_d − 1/2) h_d, (k_d + 1/2) h_d],
/// which must not contain the origin. Uses div(zK) = −sp·K, turning the volume
/// integral into (1/sp) Σ_d [a_d F(a_d) − b_d F(b_d)] with F a face integral.
/// Lengths are rescaled by `h[0]` so the result is exactly covariant under
/// power-of-two dilations.
pub fn box_kernel_integral(k: &[i64], h: &[f64], sp: f64, panels: usize) -> f64 {
    let n = k.len();
    let scale = h[0];
    let lo: Vec<f64> = k.iter().zip(h).map(|(&kd, hd)| (kd as f64 - 0.5) * hd / scale).collect();
    let hi: Vec<f64> = k.iter().zip(h).map(|(&kd, hd)| (kd as f64 + 0.5) * hd / scale).collect();
    let alpha = (n as f64 + sp) / 2.0;
    let mut total = 0.0;
    for d in 0..n {
        let rect: Vec<(f64, f64)> = (0..n).filter(|&j| j != d).map(|j| (lo[j], hi[j])).collect();
        if lo[d] != 0.0 {
            total += lo[d] * face(lo[d].abs(), &rect, alpha, panels);
        }
        if hi[d] != 0.0 {
            total -= hi[d] * face(hi[d].abs(), &rect, alpha, panels);
        }
    }
    total / sp * scale.powf(-sp)
}

/// Midpoint value of the same integral.
pub fn midpoint_kernel_integral(k: &[i64], h: &[f64], sp: f64) -> f64 {
    let n = k.len() as f64;
    let scale = h[0];
    let r2: f64 = k.iter().zip(h).map(|(&kd, hd)| (kd as f64 * hd / scale).powi(2)).sum();
    let vol: f64 = h.iter().map(|hd| hd / scale).product();
    vol * r2.powf(-(n + sp) / 2.0) * scale.powf(-sp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate, QuadTol};

    #[test]
    fn one_dim_closed_form() {
        let sp = 0.7;
        let h = [0.25];
        for k in 1..6i64 {
            let exact = (((k as f64 - 0.5) * 0.25).powf(-sp) - ((k as f64 + 0.5) * 0.25).powf(-sp)) / sp;
            let v = box_kernel_integral(&[k], &h, sp, 4);
            assert!(((v - exact) / exact).abs() < 1e-13);
            assert_eq!(box_kernel_integral(&[-k], &h, sp, 4), v);
        }
    }

    #[test]
    fn two_dim_against_iterated_quadrature() {
        let sp = 1.0;
        let h = [0.5, 0.125];
        for k in [[1i64, 0], [0, 1], [1, 1], [2, -3], [0, 5]] {
            let tol = QuadTol { rel: 1e-12, abs: 0.0, panels: 4 };
            let (x0, x1) = ((k[0] as f64 - 0.5) * h[0], (k[0] as f64 + 0.5) * h[0]);
            let (y0, y1) = ((k[1] as f64 - 0.5) * h[1], (k[1] as f64 + 0.5) * h[1]);
            let oracle = integrate(
                |x| integrate(|y| (x * x + y * y).powf(-(2.0 + sp) / 2.0), y0, y1, tol),
                x0,
                x1,
                tol,
            );
            let v = box_kernel_integral(&k, &h, sp, 8);
            assert!(((v - oracle) / oracle).abs() < 1e-9, "{k:?}: {v} vs {oracle}");
        }
    }

    #[test]
    fn far_cells_approach_midpoint() {
        let sp = 0.5;
        let h = [0.1, 0.1];
        let err = |k: i64| {
            let exact = box_kernel_integral(&[k, k], &h, sp, 8);
            ((exact - midpoint_kernel_integral(&[k, k], &h, sp)) / exact).abs()
        };
        assert!(err(10) < 1e-2, "{}", err(10));
        let ratio = err(10) / err(20);
        assert!((ratio - 4.0).abs() < 0.2, "{ratio}");
    }
}
