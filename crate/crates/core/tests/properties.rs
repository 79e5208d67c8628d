use std::sync::OnceLock;

use proptest::prelude::*;

use parahedge::diffusion_models::{symmetrize_a, DiffusionModel};
use parahedge::geometry::{project_pi, project_pi_perp, HalfSpaceDomain, PayoffFunction};
use parahedge::kernels::KernelEval;
use parahedge::linalg::Mat;

fn domain(d: usize) -> impl Strategy<Value = HalfSpaceDomain> {
    (prop::collection::vec(-1.0f64..1.0, d), -1.0f64..1.0)
        .prop_filter("non-degenerate normal", |(g, _)| g.iter().map(|v| v * v).sum::<f64>() > 0.05)
        .prop_map(|(g, k)| HalfSpaceDomain::normalized(g, k).unwrap().0)
}

fn point(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, d)
}

/// SPD matrix `LLᵀ + 0.3 I` from a random lower factor.
fn spd(d: usize) -> impl Strategy<Value = Mat> {
    prop::collection::vec(-1.0f64..1.0, d * d).prop_map(move |l| {
        let mut rows = vec![vec![0.0; d]; d];
        for i in 0..d {
            for j in 0..d {
                let mut s = if i == j { 0.3 } else { 0.0 };
                for k in 0..=i.min(j) {
                    s += l[i * d + k] * l[j * d + k];
                }
                rows[i][j] = s;
            }
        }
        Mat::from_rows(&rows).unwrap()
    })
}

fn tanh_model() -> &'static DiffusionModel {
    static M: OnceLock<DiffusionModel> = OnceLock::new();
    M.get_or_init(|| DiffusionModel::tanh1d(1.0, 0.3, 0.2).unwrap())
}

fn sine_model() -> &'static DiffusionModel {
    static M: OnceLock<DiffusionModel> = OnceLock::new();
    M.get_or_init(|| DiffusionModel::diagonal_sine(2, 0.4, &[0.1, -0.2]).unwrap())
}

fn case(d: usize) -> impl Strategy<Value = (HalfSpaceDomain, Vec<f64>, Vec<f64>)> {
    (domain(d), point(d), point(d))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn reflection_is_an_involution((dom, x, _) in (1usize..=3).prop_flat_map(case)) {
        let tx = dom.reflect(&x).unwrap();
        let ttx = dom.reflect(&tx).unwrap();
        for (a, b) in x.iter().zip(&ttx) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
        prop_assert!((dom.signed_distance(&tx) + dom.signed_distance(&x)).abs() <= 1e-12);
    }

    #[test]
    fn psi_is_an_orthogonal_reflection(dom in (1usize..=3).prop_flat_map(domain)) {
        let p = dom.psi_matrix();
        let d = dom.d;
        prop_assert!(p.mul(&p).sub(&Mat::identity(d)).max_abs() <= 1e-14);
        let ev = p.sym_eigenvalues();
        let det: f64 = ev.iter().product();
        prop_assert!((det + 1.0).abs() <= 1e-12);
    }

    #[test]
    fn projections_sum_to_payoff((dom, x, _) in (1usize..=3).prop_flat_map(case), strike in -1.0f64..1.0) {
        prop_assume!(!dom.on_boundary(&x));
        let f = PayoffFunction::capped_call(&dom, strike, 1.5).unwrap();
        let s = project_pi(&f, &dom, &x) + project_pi_perp(&f, &dom, &x);
        prop_assert!((s - f.eval(&x)).abs() <= 1e-12);
    }

    #[test]
    fn pi_is_odd_under_reflection((dom, x, _) in (1usize..=3).prop_flat_map(case), level in -1.0f64..2.0) {
        prop_assume!(dom.signed_distance(&x).abs() > 1e-9);
        let f = PayoffFunction::digital(&dom, level);
        let tx = dom.reflect(&x).unwrap();
        prop_assert!((project_pi(&f, &dom, &x) + project_pi(&f, &dom, &tx)).abs() <= 1e-12);
        prop_assert_eq!(project_pi_perp(&f, &dom, &x) == 0.0 || !dom.contains(&x), true);
    }

    #[test]
    fn projections_are_linear(
        (dom, x, _) in (1usize..=3).prop_flat_map(case),
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
    ) {
        let f = PayoffFunction::capped_call(&dom, 0.2, 1.0).unwrap();
        let g = PayoffFunction::digital(&dom, 0.5);
        let h = PayoffFunction::linear_combination(a, &f, b, &g);
        let lhs = project_pi(&h, &dom, &x);
        let rhs = a * project_pi(&f, &dom, &x) + b * project_pi(&g, &dom, &x);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn h_is_antisymmetric_under_reflection(
        (dom, x, y) in (1usize..=2).prop_flat_map(case),
        t in 0.01f64..1.0,
    ) {
        prop_assume!(!dom.on_boundary(&y));
        let model = if dom.d == 1 { tanh_model() } else { sine_model() };
        let kern = KernelEval::new(model, &dom).unwrap();
        let ty = dom.reflect(&y).unwrap();
        let h = kern.h_sym(t, &x, &y).unwrap();
        let hr = kern.h_sym(t, &x, &ty).unwrap();
        prop_assert!((h + hr).abs() <= 1e-10 * (1.0 + h.abs()));
    }

    #[test]
    fn symmetrized_matrix_is_reflection_invariant(
        (dom, _, y) in (2usize..=2).prop_flat_map(case),
    ) {
        prop_assume!(!dom.on_boundary(&y));
        let ty = dom.reflect(&y).unwrap();
        let p = dom.psi_matrix();
        let lhs = symmetrize_a(sine_model(), &dom, &ty);
        let rhs = p.mul(&symmetrize_a(sine_model(), &dom, &y)).mul(&p);
        prop_assert!(lhs.sub(&rhs).max_abs() <= 1e-12);
    }

    #[test]
    fn h0_vanishes_for_brownian_motion(
        (dom, x, y) in (1usize..=3).prop_flat_map(case),
        t in 1e-4f64..2.0,
    ) {
        let kern = KernelEval::new(&DiffusionModel::brownian(dom.d), &dom).unwrap();
        prop_assert_eq!(kern.h0(t, &x, &y).unwrap(), 0.0);
    }
}

proptest! {
    // each case calibrates a fresh model
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn kernel_is_symmetric_on_the_boundary(
        ((dom, x, y), a) in (2usize..=3).prop_flat_map(|d| (case(d), spd(d))),
        t in 0.01f64..2.0,
    ) {
        let d = dom.d;
        let model = DiffusionModel::constant(a, &vec![0.0; d]).unwrap();
        let kern = KernelEval::new(&model, &dom).unwrap();
        // project x onto ∂D
        let s = dom.signed_distance(&x);
        let xb: Vec<f64> = x.iter().zip(&dom.gamma).map(|(xi, g)| xi - s * g).collect();
        let ty = dom.reflect(&y).unwrap();
        let p = kern.p_kernel(t, &xb, &y).unwrap();
        let pr = kern.p_kernel(t, &xb, &ty).unwrap();
        prop_assert!((p - pr).abs() <= 1e-11 * p.max(1e-300), "{} vs {}", p, pr);
    }
}
