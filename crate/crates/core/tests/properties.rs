mod common;

use common::{example_belief, example_model, weights};
use ibc_core::bounds::{check_data_processing, check_theorem2, LinearGain, ScalarChannel};
use ibc_core::dp_oracle::{r0, DpConfig};
use ibc_core::ibc_analytic::psi;
use ibc_core::linalg::{is_psd, min_eigenvalue};
use ibc_core::lingauss::{kf_predict, kf_update, GaussianBelief};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn psd2() -> impl Strategy<Value = DMatrix<f64>> {
    (0.0..3.0f64, -2.0..2.0f64, 0.0..3.0f64).prop_map(|(a, b, c)| {
        let l = DMatrix::from_row_slice(2, 2, &[a, 0.0, b, c]);
        &l * l.transpose()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn filter_keeps_covariances_psd_and_contracts(
        cov in psd2(),
        m0 in -3.0..3.0f64,
        m1 in -3.0..3.0f64,
        u in -6.0..6.0f64,
        y in -5.0..5.0f64,
    ) {
        let model = example_model();
        let b = GaussianBelief::new(DVector::from_vec(vec![m0, m1]), cov);
        let pred = kf_predict(&b, &model, u);
        prop_assert!(is_psd(&pred.cov));
        let post = kf_update(&pred, &model, y).unwrap();
        prop_assert!(is_psd(&post.cov));
        // filtered covariance lies below the predicted one in the Loewner order
        let gap = &pred.cov - &post.cov;
        prop_assert!(min_eigenvalue(&gap) >= -1e-10 * (1.0 + pred.cov.norm()));
    }

    #[test]
    fn diffusion_is_psd(u in -10.0..10.0f64) {
        prop_assert!(is_psd(&example_model().diffusion(u)));
    }

    #[test]
    fn psi_is_even(u in 0.0..6.0f64, nu in 0.0..2.0f64) {
        let (m, b, w) = (example_model(), example_belief(), weights());
        let (a, c) = (psi(&m, &b, u, nu, &w), psi(&m, &b, -u, nu, &w));
        prop_assert!((a - c).abs() <= 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn entropy_bound_and_data_processing_hold(sx in 0.01..20.0f64, sv in 0.01..20.0f64, k in -3.0..2.0f64) {
        let ch = ScalarChannel::new(sx, sv).unwrap();
        prop_assert!(check_theorem2(&ch, LinearGain(k)).holds);
        prop_assert!(check_data_processing(&ch, LinearGain(k)).holds);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dp_value_is_even(u in 0.0..6.0f64) {
        let (m, b, w) = (example_model(), example_belief(), weights());
        let cfg = DpConfig::default();
        let (a, c) = (r0(&m, &b, u, &w, &cfg).unwrap(), r0(&m, &b, -u, &w, &cfg).unwrap());
        prop_assert!((a - c).abs() <= 1e-10 * a.abs(), "{} vs {}", a, c);
    }
}
