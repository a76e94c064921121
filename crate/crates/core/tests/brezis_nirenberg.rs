//! Counting and bounds for the Brezis-Nirenberg branch on the unit-pi cube.

use std::f64::consts::PI;

use curlvar_core::brezis_nirenberg::{
    compute_c_lambda, eigen_bound, existence_window, multiplicity_count_with_threshold, BnConfig,
};
use curlvar_core::groundstate::{minimize_sphere, GroundStateConfig};
use curlvar_core::spectrum::curl_curl_eigs;
use curlvar_core::GridSpec;

/// Cavity eigenvalues `a^2 + b^2 + c^2` of the unit-pi cube with
/// multiplicity: two polarisations when all indices are positive, one when
/// exactly one vanishes.
fn cube_ladder(max: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for a in 0..=max {
        for b in 0..=max {
            for c in 0..=max {
                let zeros = [a, b, c].iter().filter(|&&x| x == 0).count();
                let m = match zeros {
                    0 => 2,
                    1 => 1,
                    _ => 0,
                };
                for _ in 0..m {
                    out.push((a * a + b * b + c * c) as f64);
                }
            }
        }
    }
    out.sort_by(f64::total_cmp);
    out.retain(|&l| l <= (max * max) as f64);
    out
}

#[test]
fn cube_ladder_starts_with_the_known_clusters() {
    let l = cube_ladder(4);
    assert_eq!(&l[..5], &[2.0, 2.0, 2.0, 3.0, 3.0]);
    assert_eq!(l.iter().filter(|&&x| x == 5.0).count(), 6);
}

#[test]
fn lowest_cluster_is_counted_near_its_edge() {
    let l = cube_ladder(4);
    assert_eq!(multiplicity_count_with_threshold(-1.9, &l, 0.5).unwrap(), 3);
    assert_eq!(multiplicity_count_with_threshold(-2.9, &l, 0.5).unwrap(), 2);
    assert_eq!(multiplicity_count_with_threshold(-1.4, &l, 0.5).unwrap(), 0);
    assert_eq!(multiplicity_count_with_threshold(-30.0, &l, 0.5).unwrap(), 0);
}

#[test]
fn first_window_on_the_cube() {
    let w = existence_window(1, 2.0, 0.0, 6.0, PI.powi(3));
    assert!((w.upper - (-2.0 + 6.0 / (PI * PI))).abs() <= 1e-14);
    assert!(w.contains(-1.5));
}

#[test]
fn levels_decrease_towards_the_first_eigenvalue() {
    let g = GridSpec::cube(PI, 12).unwrap();
    let pairs = curl_curl_eigs(&g, 6, 1e-9).unwrap();
    let cfg = BnConfig { sphere: GroundStateConfig { max_iter: 100, ..Default::default() }, ..Default::default() };
    let gs = minimize_sphere(&g, &cfg.sphere).unwrap();
    let c0 = gs.point.j_value;
    let mut prev = 0.0;
    for lambda in [-1.95, -1.7, -1.2] {
        let r = compute_c_lambda(lambda, &pairs, &g, &cfg, c0, Some(&gs.point.witness_v)).unwrap();
        assert!(r.c_lambda > prev, "{lambda}: {} after {prev}", r.c_lambda);
        assert!(r.c_lambda <= eigen_bound(lambda, r.lambda_nu, PI.powi(3)) + 1e-6);
        assert!(r.existence_predicted);
        prev = r.c_lambda;
    }
}

#[test]
fn under_resolved_spectrum_is_an_error() {
    let g = GridSpec::cube(PI, 8).unwrap();
    let pairs = curl_curl_eigs(&g, 3, 1e-8).unwrap();
    let r = compute_c_lambda(-2.5, &pairs[..3], &g, &BnConfig::default(), 1.0, None);
    assert!(matches!(r, Err(curlvar_core::Error::UnderResolved(_))), "{r:?}");
}
