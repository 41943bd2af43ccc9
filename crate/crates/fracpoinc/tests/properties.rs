use std::sync::Arc;

use fracpoinc::assembly::{abs_power, assemble, energy, rayleigh, AssemblyConfig, NonlocalOperator, SeminormKind};
use fracpoinc::domain::{build_grid, dilate, DomainSpec, Grid, GridFunction, Interval};
use fracpoinc::experiments::picone_value;
use fracpoinc::special_fn::beta;
use proptest::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// A box of dimension 1 or 2 with corners in [-2, 2] and sides in [0.5, 3].
fn domains() -> impl Strategy<Value = DomainSpec> {
    prop::collection::vec((-2.0..2.0f64, 0.5..3.0f64), 1..=2).prop_map(|sides| {
        DomainSpec::boxed(sides.into_iter().map(|(a, len)| Interval::new(a, a + len).unwrap()).collect()).unwrap()
    })
}

/// Grid spacing giving between 4 and 8 cells along the shortest side.
fn spacing(d: &DomainSpec, cells: usize) -> f64 {
    d.factors().iter().map(|f| f.len()).fold(f64::INFINITY, f64::min) / cells as f64
}

fn grid_with_values(d: &DomainSpec, cells: usize, seed: &[f64]) -> (Arc<Grid>, Vec<f64>) {
    let grid = Arc::new(build_grid(d, spacing(d, cells)).unwrap());
    let values = (0..grid.node_count()).map(|i| seed[i % seed.len()]).collect();
    (grid, values)
}

fn operator(grid: Arc<Grid>, s: f64, p: f64, kind: SeminormKind) -> NonlocalOperator {
    assemble(grid, s, p, kind, &AssemblyConfig::default()).unwrap()
}

fn kinds() -> impl Strategy<Value = SeminormKind> {
    prop_oneof![Just(SeminormKind::Regional), Just(SeminormKind::Dirichlet)]
}

fn values() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, 7)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn beta_is_symmetric(x in 0.05..20.0f64, y in 0.05..20.0f64) {
        prop_assert!(rel(beta(x, y).unwrap(), beta(y, x).unwrap()) <= 1e-13);
        prop_assert!(rel(beta(x, 1.0).unwrap(), 1.0 / x) <= 1e-13);
    }

    #[test]
    fn energy_is_homogeneous(
        d in domains(), cells in 4usize..8, s in 0.05..0.95f64, p in 1.0..4.0f64,
        kind in kinds(), seed in values(),
    ) {
        let (grid, u) = grid_with_values(&d, cells, &seed);
        let op = operator(grid, s, p, kind);
        let e = op.energy_values(&u);
        for c in [-2.0, 0.5, 10.0] {
            let scaled: Vec<f64> = u.iter().map(|v| c * v).collect();
            prop_assert!(rel(op.energy_values(&scaled), abs_power(c, p) * e) <= 1e-12);
        }
    }

    #[test]
    fn rayleigh_ignores_scaling(d in domains(), s in 0.1..0.9f64, p in 1.2..3.5f64, seed in values(), c in 0.01..100.0f64) {
        let (grid, u) = grid_with_values(&d, 4, &seed);
        prop_assume!(u.iter().any(|v| v.abs() > 1e-3));
        let op = operator(grid.clone(), s, p, SeminormKind::Dirichlet);
        let f = GridFunction::new(grid, u).unwrap();
        let base = rayleigh(&op, &f).unwrap();
        prop_assert!(rel(rayleigh(&op, &f.scaled(-c)).unwrap(), base) <= 1e-12);
    }

    #[test]
    fn pair_weights_are_symmetric_and_positive(d in domains(), cells in 3usize..6, s in 0.05..0.95f64, p in 1.0..4.0f64, kind in kinds()) {
        let grid = Arc::new(build_grid(&d, spacing(&d, cells)).unwrap());
        let op = operator(grid, s, p, kind);
        let n = op.node_count();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let w = op.pair_weight(i, j);
                    prop_assert_eq!(w, op.pair_weight(j, i));
                    prop_assert!(w > 0.0 && w.is_finite());
                }
            }
        }
        let dirichlet = kind == SeminormKind::Dirichlet;
        prop_assert!(op.exterior_weights().iter().all(|&e| (e > 0.0) == dirichlet && e.is_finite()));
    }

    #[test]
    fn dirichlet_energy_dominates_regional(d in domains(), cells in 4usize..8, s in 0.05..0.95f64, p in 1.0..4.0f64, seed in values()) {
        let (grid, u) = grid_with_values(&d, cells, &seed);
        let regional = operator(grid.clone(), s, p, SeminormKind::Regional);
        let dirichlet = operator(grid, s, p, SeminormKind::Dirichlet);
        let (er, ed) = (regional.energy_values(&u), dirichlet.energy_values(&u));
        prop_assert!(ed >= er);
        let exterior: f64 = dirichlet.exterior_weights().iter().zip(&u).map(|(e, v)| e * abs_power(*v, p)).sum();
        prop_assert!((ed - er - exterior).abs() <= 1e-12 * ed);
    }

    #[test]
    fn absolute_value_never_raises_energy(d in domains(), cells in 4usize..8, s in 0.05..0.95f64, p in 1.0..4.0f64, kind in kinds(), seed in values()) {
        let (grid, u) = grid_with_values(&d, cells, &seed);
        let op = operator(grid, s, p, kind);
        let abs: Vec<f64> = u.iter().map(|v| v.abs()).collect();
        prop_assert!(op.energy_values(&abs) <= op.energy_values(&u) * (1.0 + 1e-12));
    }

    #[test]
    fn energy_is_translation_invariant(
        d in domains(), shift in prop::collection::vec(-5.0..5.0f64, 2), s in 0.05..0.95f64,
        p in 1.0..4.0f64, kind in kinds(), seed in values(),
    ) {
        let moved = d.translate(&shift[..d.dim()]).unwrap();
        let (grid, u) = grid_with_values(&d, 5, &seed);
        let moved_grid = Arc::new(build_grid(&moved, spacing(&d, 5)).unwrap());
        prop_assert_eq!(grid.counts(), moved_grid.counts());
        let a = energy(&operator(grid.clone(), s, p, kind), &GridFunction::new(grid, u.clone()).unwrap()).unwrap();
        let b = energy(&operator(moved_grid.clone(), s, p, kind), &GridFunction::new(moved_grid, u).unwrap()).unwrap();
        prop_assert!(rel(b, a) <= 1e-12);
    }

    #[test]
    fn energy_scales_under_dilation(
        d in domains(), t in 0.25..4.0f64, s in 0.05..0.95f64, p in 1.0..4.0f64,
        kind in kinds(), seed in values(),
    ) {
        let (grid, u) = grid_with_values(&d, 4, &seed);
        let h = spacing(&d, 4);
        let big = Arc::new(build_grid(&dilate(&d, t).unwrap(), t * h).unwrap());
        prop_assert_eq!(grid.counts(), big.counts());
        let n = d.dim() as f64;
        let a = operator(grid, s, p, kind).energy_values(&u);
        let b = operator(big, s, p, kind).energy_values(&u);
        prop_assert!(rel(b, t.powf(n - s * p) * a) <= 1e-12);
    }

    #[test]
    fn dilated_grid_nodes_scale(d in domains(), t in 0.25..4.0f64, cells in 2usize..9) {
        let h = spacing(&d, cells);
        let g = build_grid(&d, h).unwrap();
        let big = build_grid(&dilate(&d, t).unwrap(), t * h).unwrap();
        prop_assert_eq!(g.counts(), big.counts());
        for i in 0..g.node_count() {
            for (x, y) in g.node(i).iter().zip(big.node(i)) {
                prop_assert!((t * x - y).abs() <= 1e-14 * (1.0 + y.abs()));
            }
        }
        prop_assert!(rel(g.cell_volume() * g.node_count() as f64, d.volume()) <= 1e-12);
    }

    #[test]
    fn picone_is_nonnegative(
        f in prop::array::uniform2(0.0..3.0f64), g in prop::array::uniform2(0.01..3.0f64),
        p in 1.05..5.0f64, c in 0.01..10.0f64,
    ) {
        let l = picone_value(f[0], f[1], g[0], g[1], p);
        prop_assert!(l >= -1e-12 * (1.0 + abs_power(f[0] - f[1], p)));
        let prop_l = picone_value(c * g[0], c * g[1], g[0], g[1], p);
        prop_assert!(prop_l.abs() <= 1e-12 * (1.0 + abs_power(c * (g[0] - g[1]), p)));
    }
}
