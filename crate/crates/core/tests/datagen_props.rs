mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use structrobust::datagen::{
    gen_dataset, gen_latents, gen_structure, population_covariance, true_mean, LatentKind, LatentSpec,
    StructureSpec,
};

const LATENTS: [LatentKind; 3] = [LatentKind::Gaussian, LatentKind::Uniform, LatentKind::Exponential];

fn bits(m: &DMatrix<f64>) -> Vec<u64> {
    m.iter().map(|v| v.to_bits()).collect()
}

fn block_spec() -> impl Strategy<Value = StructureSpec> {
    (prop::collection::vec((1usize..5, 1usize..4), 1..4), any::<u64>()).prop_map(|(blocks, seed)| {
        let blocks = blocks.into_iter().map(|(extra, c)| (c + extra - 1, c)).collect();
        StructureSpec::block_diagonal(blocks, seed)
    })
}

fn empirical_covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows() as f64;
    let mean = x.row_mean();
    let centred = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] - mean[j]);
    centred.transpose() * centred / n
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn same_spec_and_seed_give_identical_bytes(spec in block_spec(), seed: u64, kind in 0usize..3, big_n in 1usize..50) {
        let (a1, a2) = (gen_structure(&spec).unwrap(), gen_structure(&spec).unwrap());
        prop_assert_eq!(bits(a1.entries()), bits(a2.entries()));
        let lat = LatentSpec::standard(LATENTS[kind], spec.r);
        let z1 = gen_latents(&lat, big_n, &mut rng(seed)).unwrap();
        let z2 = gen_latents(&lat, big_n, &mut rng(seed)).unwrap();
        prop_assert_eq!(bits(&z1), bits(&z2));
        let (d1, d2) = (gen_dataset(&a1, &z1).unwrap(), gen_dataset(&a2, &z2).unwrap());
        prop_assert_eq!(bits(d1.values()), bits(d2.values()));
    }

    #[test]
    fn block_structure_is_zero_off_the_blocks(spec in block_spec()) {
        let a = gen_structure(&spec).unwrap();
        let blocks = spec.blocks.clone().unwrap();
        prop_assert_eq!((a.n(), a.r()), (spec.n, spec.r));
        let (mut i0, mut j0) = (0, 0);
        let mut owner_row = vec![0; spec.n];
        let mut owner_col = vec![0; spec.r];
        for (b, &(br, bc)) in blocks.iter().enumerate() {
            owner_row[i0..i0 + br].fill(b);
            owner_col[j0..j0 + bc].fill(b);
            i0 += br;
            j0 += bc;
        }
        for i in 0..spec.n {
            for j in 0..spec.r {
                if owner_row[i] != owner_col[j] {
                    prop_assert_eq!(a.entries()[(i, j)], 0.0);
                } else {
                    prop_assert!(a.entries()[(i, j)] != 0.0);
                }
            }
        }
    }

    #[test]
    fn samples_lie_in_the_range(seed: u64, n in 1usize..10, r in 1usize..5, kind in 0usize..3, big_n in 1usize..40) {
        prop_assume!(r <= n);
        let a = gen_structure(&StructureSpec::dense(n, r, seed)).unwrap();
        let mut lat = LatentSpec::standard(LATENTS[kind], r);
        lat.mean = gaussian_vec(r, &mut rng(seed)).iter().copied().collect();
        let z = gen_latents(&lat, big_n, &mut rng(!seed)).unwrap();
        let ds = gen_dataset(&a, &z).unwrap();
        let pinv = a.entries().clone().pseudo_inverse(1e-12).unwrap();
        for i in 0..big_n {
            let x = ds.dense_row(i);
            let resid = (&x - a.entries() * (&pinv * &x)).amax();
            prop_assert!(resid <= 1e-9 * x.amax().max(1.0));
        }
    }

    #[test]
    fn mismatched_blocks_are_rejected(spec in block_spec()) {
        let bad = StructureSpec { n: spec.n + 1, ..spec };
        prop_assert!(gen_structure(&bad).is_err());
    }
}

#[test]
fn empirical_covariance_tracks_the_population_covariance() {
    let a = gen_structure(&StructureSpec::two_blocks(11)).unwrap();
    for kind in LATENTS {
        let mut lat = LatentSpec::standard(kind, 8);
        lat.scale = (1..=8).map(|k| 0.5 + k as f64 / 4.0).collect();
        lat.mean = (0..8).map(|k| k as f64 - 3.0).collect();
        let z = gen_latents(&lat, 100_000, &mut rng(5)).unwrap();
        let ds = gen_dataset(&a, &z).unwrap();
        let pop = population_covariance(&a, &lat).unwrap();
        let rel = (empirical_covariance(ds.values()) - &pop).norm() / pop.norm();
        assert!(rel <= 0.05, "{kind:?}: relative error {rel}");
        let mean = DVector::from_iterator(16, ds.values().row_mean().iter().copied());
        let target = true_mean(&a, &lat).unwrap();
        assert!((mean - &target).amax() <= 0.05 * target.amax().max(1.0), "{kind:?}: mean off");
    }
}

#[test]
fn latent_spec_rejects_bad_scales() {
    let mut lat = LatentSpec::standard(LatentKind::Gaussian, 2);
    lat.scale[1] = 0.0;
    assert!(lat.validate().is_err());
    lat.scale = vec![1.0];
    assert!(lat.validate().is_err());
}
