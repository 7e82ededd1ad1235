mod oracles;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reconsal_core::metrics::{map_mse, max_distance_best_match, top_k_agreement, top_k_select};
use reconsal_core::saliency::{channel_reduce_max, scale_unit_max, square_map};
use reconsal_core::{PixelMap, Tensor};

/// 8×8 map; every other map draws from eight levels so ties are common.
fn random_map(rng: &mut ChaCha8Rng, coarse: bool) -> PixelMap {
    let values = (0..64)
        .map(|_| if coarse { rng.random_range(0..8) as f64 / 7.0 } else { rng.random_range(0.0..1.0) })
        .collect();
    PixelMap::new(8, 8, values).unwrap()
}

#[test]
fn top_k_metrics_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for trial in 0..300 {
        let a = random_map(&mut rng, trial % 2 == 0);
        let b = random_map(&mut rng, trial % 3 == 0);
        for k in [1, 5, 10] {
            let (ta, tb) = (top_k_select(&a, k).unwrap(), top_k_select(&b, k).unwrap());
            assert_eq!(ta.coords(), oracles::top_k(a.values(), 8, k).as_slice());
            assert_eq!(tb.coords(), oracles::top_k(b.values(), 8, k).as_slice());
            assert_eq!(top_k_agreement(&ta, &tb).unwrap(), oracles::agreement(ta.coords(), tb.coords()));
            assert_eq!(
                max_distance_best_match(&ta, &tb).unwrap(),
                oracles::max_distance(ta.coords(), tb.coords())
            );
        }
    }
}

#[test]
fn map_mse_matches_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..50 {
        let (a, b) = (scale_unit_max(&random_map(&mut rng, false)), scale_unit_max(&random_map(&mut rng, true)));
        let got = map_mse(&a, &b).unwrap();
        assert!((got - oracles::mse(a.values(), b.values())).abs() < 1e-15);
    }
}

#[test]
fn channel_max_matches_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let grad = Tensor::from_fn(&[3, 4, 5], |_| rng.random_range(0.0..2.0));
    let map = channel_reduce_max(&grad).unwrap();
    assert_eq!(map.values(), oracles::channel_max(grad.data(), 3, 20).as_slice());
}

#[test]
fn single_pixel_peak() {
    let mut values = vec![0.0; 64];
    values[8 * 3 + 5] = 1.0;
    let map = PixelMap::new(8, 8, values).unwrap();
    assert_eq!(top_k_select(&map, 1).unwrap().coords(), &[(3, 5)]);
    // The remaining four come from the zero pixels in row-major order.
    assert_eq!(top_k_select(&map, 5).unwrap().coords(), &[(3, 5), (0, 0), (0, 1), (0, 2), (0, 3)]);
}

#[test]
fn scaling_and_squaring_preserve_rankings() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for trial in 0..100 {
        let (a, b) = (random_map(&mut rng, trial % 2 == 1), random_map(&mut rng, false));
        let (sa, sb) = (scale_unit_max(&a), scale_unit_max(&b));
        let (qa, qb) = (square_map(&sa), square_map(&sb));
        for k in [1, 5, 10] {
            let base = top_k_select(&a, k).unwrap();
            assert_eq!(top_k_select(sa.map(), k).unwrap(), base);
            assert_eq!(top_k_select(qa.map(), k).unwrap(), base);
            let other = top_k_select(&b, k).unwrap();
            let agree = top_k_agreement(&base, &other).unwrap();
            assert_eq!(top_k_agreement(&top_k_select(qa.map(), k).unwrap(), &top_k_select(qb.map(), k).unwrap()).unwrap(), agree);
        }
    }
}

#[test]
fn top_ten_count_never_below_top_five() {
    // The top-5 set is a prefix of the top-10 set under one ranking, so the
    // shared count can only grow with K.
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    for trial in 0..500 {
        let (a, b) = (random_map(&mut rng, trial % 2 == 0), random_map(&mut rng, trial % 3 == 0));
        let agree = |k| top_k_agreement(&top_k_select(&a, k).unwrap(), &top_k_select(&b, k).unwrap()).unwrap();
        assert!(agree(10) >= agree(5));
    }
}

#[test]
fn agreement_fraction_can_drop_from_top_five_to_top_ten() {
    // Same five peaks in both maps, then disjoint runners-up: 5/5 vs 5/10.
    let mut a = vec![0.0; 64];
    let mut b = vec![0.0; 64];
    for i in 0..5 {
        a[i] = 1.0;
        b[i] = 1.0;
        a[10 + i] = 0.5;
        b[20 + i] = 0.5;
    }
    let (a, b) = (PixelMap::new(8, 8, a).unwrap(), PixelMap::new(8, 8, b).unwrap());
    let agree = |k| top_k_agreement(&top_k_select(&a, k).unwrap(), &top_k_select(&b, k).unwrap()).unwrap();
    assert_eq!((agree(5), agree(10)), (5, 5));
    assert!((agree(10) as f64 / 10.0) < (agree(5) as f64 / 5.0));
}
