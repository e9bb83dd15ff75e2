use pestov_core::frame_bundle::{
    frame_distance, frame_flow, frame_from_group_matrix, group_matrix, recharted, vertical_flow,
};
use pestov_core::linalg::{expm, Mat};
use pestov_core::measure::{haar_so, sample_frame, stream_rng};
use pestov_core::operators::testfn::{InvarianceClass, TestFunctionFamily, TestFunctionKind};
use pestov_core::operators::{structural_residual, Structural};
use pestov_core::pestov::{invariance_defects, pointwise_pestov_terms, r_sm_crosscheck, IdentityCheck};
use pestov_core::*;
use proptest::prelude::*;

fn models() -> Vec<MetricModel> {
    vec![
        MetricModel::flat_torus(2),
        MetricModel::flat_torus(3),
        MetricModel::round_sphere(2, 1.0),
        MetricModel::round_sphere(3, 1.0),
        MetricModel::hyperbolic_ball(3),
        MetricModel::perturbed_hyperbolic(3, 0.05),
    ]
}

fn random_frame(model: &MetricModel, seed: u64) -> FramePoint {
    sample_frame(model, &mut stream_rng(seed, 0))
}

fn test_function(model: &MetricModel, seed: u64) -> TestFunctionFamily {
    TestFunctionFamily::random(TestFunctionKind::for_model(model), model.dim, 2, seed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn skew_coefficients_round_trip(c in prop::collection::vec(-5.0f64..5.0, 6)) {
        let xi = SkewForm::from_coeffs(4, &c);
        prop_assert_eq!(xi.coeffs(), c);
        let back = SkewForm::from_matrix(xi.matrix()).unwrap();
        prop_assert_eq!(back, xi);
    }

    #[test]
    fn bracket_is_a_lie_bracket(
        a in prop::collection::vec(-2.0f64..2.0, 3),
        b in prop::collection::vec(-2.0f64..2.0, 3),
        c in prop::collection::vec(-2.0f64..2.0, 3),
    ) {
        let (x, y, z) = (SkewForm::from_coeffs(3, &a), SkewForm::from_coeffs(3, &b), SkewForm::from_coeffs(3, &c));
        prop_assert!(x.bracket(&y).add(&y.bracket(&x)).norm() < 1e-14);
        let jacobi = x.bracket(&y.bracket(&z))
            .add(&y.bracket(&z.bracket(&x)))
            .add(&z.bracket(&x.bracket(&y)));
        prop_assert!(jacobi.norm() < 1e-12);
    }

    #[test]
    fn haar_samples_are_special_orthogonal(seed in any::<u64>(), n in 2usize..6) {
        let q = haar_so(n, &mut stream_rng(seed, 0));
        prop_assert!(q.orthonormality_defect() < 1e-13);
        prop_assert!((q.det() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sampled_frames_are_orthonormal(seed in any::<u64>(), m in 0usize..6) {
        let model = &models()[m];
        let w = random_frame(model, seed);
        prop_assert!(w.invariant_defect(model).unwrap() < 1e-12);
        prop_assert!(model.check_domain(w.x.chart, &w.x.coords).is_ok());
    }

    #[test]
    fn vertical_flow_is_a_group_action(seed in any::<u64>(), s in -2.0f64..2.0, t in -2.0f64..2.0) {
        let model = MetricModel::round_sphere(3, 1.0);
        let w = random_frame(&model, seed);
        let xi = SkewForm::from_coeffs(3, &[0.3, -1.1, 0.7]);
        let two = vertical_flow(&vertical_flow(&w, &xi, s), &xi, t);
        let one = vertical_flow(&w, &xi, s + t);
        prop_assert!(two.a.sub(&one.a).max_abs() < 1e-12);
    }

    #[test]
    fn sphere_recharting_preserves_the_group_matrix(seed in any::<u64>()) {
        let model = MetricModel::round_sphere(3, 1.0);
        let w = random_frame(&model, seed);
        // both charts must contain the point
        prop_assume!(w.x.norm() > 0.5);
        let r = recharted(&model, &w).unwrap();
        let (q, qr) = (group_matrix(&model, &w).unwrap(), group_matrix(&model, &r).unwrap());
        prop_assert!(q.sub(&qr).max_abs() < 1e-12);
        let back = frame_from_group_matrix(&model, &q).unwrap();
        prop_assert!(frame_distance(&model, &back, &w).unwrap() < 1e-12);
    }

    #[test]
    fn identity_check_rule(lhs in -10.0f64..10.0, rhs in -10.0f64..10.0, se in 0.0f64..1.0, tol in 1e-12f64..1.0) {
        let model = MetricModel::flat_torus(2);
        let c = IdentityCheck::new("p", &model, "f", lhs, rhs, se, tol);
        prop_assert_eq!(c.residual, (lhs - rhs).abs());
        prop_assert_eq!(c.pass, c.residual <= tol.max(4.0 * se));
    }

    #[test]
    fn invariant_lifts_are_invariant(seed in any::<u64>(), so2 in any::<bool>()) {
        let class = if so2 { InvarianceClass::SOn2 } else { InvarianceClass::SOn1 };
        let model = MetricModel::flat_torus(4);
        let f = TestFunctionFamily::invariant(TestFunctionKind::TorusTrigPoly, 4, 2, seed, class);
        let (inv, equi, block) = invariance_defects(&model, class, &f, seed).unwrap();
        prop_assert!(inv <= 1e-10 && equi <= 1e-10 && block <= 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn flows_stay_on_the_bundle(seed in any::<u64>(), m in 0usize..4) {
        let model = &models()[m];
        let w = random_frame(model, seed);
        let v = frame_flow(model, &w, 1.0, 1e-2).unwrap();
        prop_assert!(v.invariant_defect(model).unwrap() < 1e-9);
        let back = frame_flow(model, &v, -1.0, 1e-2).unwrap();
        prop_assert!(frame_distance(model, &back, &w).unwrap() < 1e-8);
    }

    #[test]
    fn structure_equations_hold(seed in any::<u64>(), m in 0usize..6, k in 0usize..6) {
        let model = &models()[m];
        let w = random_frame(model, seed);
        let f = test_function(model, seed ^ 0x55);
        let r = structural_residual(model, &f, &w, Structural::ALL[k], DeriveMethod::Jet).unwrap();
        prop_assert!(r.relative < 1e-9, "{} {}: {:?}", model.label(), Structural::ALL[k].name(), r);
    }

    #[test]
    fn pointwise_pestov_holds(seed in any::<u64>(), m in 0usize..6) {
        let model = &models()[m];
        let w = random_frame(model, seed);
        let f = test_function(model, seed.rotate_left(7));
        let t = pointwise_pestov_terms(model, &f, &w, DeriveMethod::Jet).unwrap();
        prop_assert!(t.relative() < 1e-9, "{}: {:?}", model.label(), t);
        if model.is_flat() {
            prop_assert_eq!(t.t4, 0.0);
        }
    }

    #[test]
    fn r_sm_paths_agree(seed in any::<u64>(), m in 2usize..6) {
        let model = &models()[m];
        let w = random_frame(model, seed);
        let mut rng = stream_rng(seed, 1);
        let n = model.dim;
        let t1: Vec<f64> = (0..n).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
        let t2: Vec<f64> = (0..n).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
        prop_assert!(r_sm_crosscheck(model, &w, &t1, &t2).unwrap() < 1e-8);
    }
}

#[test]
fn jet_and_fd_derivatives_agree_on_the_perturbed_ball() {
    let model = MetricModel::perturbed_hyperbolic(3, 0.05);
    let w = FramePoint::new(
        ChartPoint::new(0, vec![0.1, -0.2, 0.3]),
        expm(SkewForm::from_coeffs(3, &[0.4, -0.3, 0.8]).matrix()),
    );
    let f = test_function(&model, 4);
    let chain = [FieldSpec::x(3), FieldSpec::y(3, 0, 2)];
    let jet = pestov_core::jets::derive(&model, &f, &w, &chain, DeriveMethod::Jet).unwrap();
    let fd = pestov_core::jets::derive(&model, &f, &w, &chain, DeriveMethod::Fd(Default::default())).unwrap();
    assert!((jet - fd).abs() < 1e-6 * jet.abs().max(1.0), "{jet} vs {fd}");
}

#[test]
fn identity_matrix_is_a_frame_on_the_torus() {
    let model = MetricModel::flat_torus(3);
    let w = FramePoint::new(ChartPoint::origin(3), Mat::identity(3));
    assert_eq!(w.invariant_defect(&model).unwrap(), 0.0);
}
