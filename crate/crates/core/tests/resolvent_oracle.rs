use canopy_core::disorder::{sample_disorder, DensitySpec};
use canopy_core::hamiltonian::Geometry;
use canopy_core::resolvent::{
    diagonal_green, green_dense_matrix, BlockResolvent, SpectralParameter,
};
use proptest::prelude::*;

/// Strict Bethe geometries with at most ~200 vertices.
fn strict_geometry() -> impl Strategy<Value = (usize, usize, usize)> {
    prop_oneof![
        (2usize..=3, Just(0usize), 1usize..=4),
        (Just(2usize), Just(1usize), prop_oneof![Just(1usize), Just(3), Just(5)]),
        (Just(3usize), Just(1usize), prop_oneof![Just(1usize), Just(3)]),
        (Just(2usize), Just(2usize), prop_oneof![Just(2usize), Just(5)]),
    ]
    .prop_filter("small", |&(k, m0, l)| Geometry::bethe(k, m0, l).map(|g| g.n_vertices() <= 200).unwrap_or(false))
}

fn rel_err(a: canopy_core::Complex64, b: canopy_core::Complex64) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn block_and_path_values_match_dense(
        (k, m0, l) in strict_geometry(),
        energy in -4.0f64..6.0,
        log_eps in -3.0f64..0.0,
        lambda in 0.1f64..20.0,
        seed in any::<u64>(),
    ) {
        let g = Geometry::bethe(k, m0, l).unwrap();
        let d = sample_disorder(&DensitySpec::default(), g.tiling.n_blocks(), seed, 0).unwrap();
        let op = g.operator(lambda, &d).unwrap();
        let z = SpectralParameter::new(energy, 10f64.powf(log_eps)).unwrap();
        let dense = green_dense_matrix(&op, z).unwrap();
        let r = BlockResolvent::new(&g.tree, &g.tiling, &op, z).unwrap();
        for &h in g.tiling.heads() {
            let bg = r.block_green(h).unwrap();
            for &x in &bg.members {
                for &y in &bg.members {
                    prop_assert!(rel_err(bg.entry(x, y).unwrap(), dense[(x, y)]) < 1e-9);
                }
            }
            prop_assert!(bg.min_imaginary_eigenvalue().unwrap() >= -1e-12);
        }
        let n = g.n_vertices();
        for x in (0..n).step_by(1 + n / 12) {
            for y in (0..n).step_by(1 + n / 9) {
                let p = r.path_green_product(x, y).unwrap();
                prop_assert!(rel_err(p.value, dense[(x, y)]) < 1e-9, "pair ({x},{y})");
            }
        }
        let diag = diagonal_green(&op, z).unwrap();
        for v in 0..n {
            prop_assert!(rel_err(diag[v], dense[(v, v)]) < 1e-9);
        }
    }

    #[test]
    fn green_function_is_symmetric_and_herglotz(
        (k, m0, l) in strict_geometry(),
        energy in -4.0f64..6.0,
        seed in any::<u64>(),
    ) {
        let g = Geometry::bethe(k, m0, l).unwrap();
        let op = g.realize(3.0, &DensitySpec::default(), seed, 1).unwrap();
        let z = SpectralParameter::new(energy, 0.01).unwrap();
        let r = BlockResolvent::new(&g.tree, &g.tiling, &op, z).unwrap();
        let n = g.n_vertices();
        let (x, y) = (n - 1, n / 2);
        let a = r.path_green_product(x, y).unwrap().value;
        let b = r.path_green_product(y, x).unwrap().value;
        prop_assert!(rel_err(a, b) < 1e-9);
        for v in [0, x, y] {
            prop_assert!(r.path_green_product(v, v).unwrap().value.im > 0.0);
        }
    }
}

#[test]
fn path_product_has_one_factor_per_block_crossed() {
    let g = Geometry::bethe(2, 1, 5).unwrap();
    let op = g.realize(2.0, &DensitySpec::default(), 3, 0).unwrap();
    let z = SpectralParameter::new(0.5, 0.1).unwrap();
    let r = BlockResolvent::new(&g.tree, &g.tiling, &op, z).unwrap();
    let leaf = g.n_vertices() - 1;
    let p = r.path_green_product(0, leaf).unwrap();
    // root block, depth-2 block, depth-4 block
    assert_eq!(p.factors.len(), 3);
    let blocks: Vec<usize> = p.factors.iter().map(|f| f.block).collect();
    assert!(blocks.windows(2).all(|w| w[0] < w[1]));
    let prod = p.factors.iter().fold(canopy_core::Complex64::new(1.0, 0.0), |acc, f| acc * f.value);
    assert!((p.value - prod).norm() < 1e-14 * prod.norm());
}
