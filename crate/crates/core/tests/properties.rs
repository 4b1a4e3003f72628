//! Cross-module properties checked against independent oracles.

mod common;

use common::{random_even_diffusion_model, random_spd, rng, Family, Mat};
use nalgebra::DVector;
use proptest::prelude::*;
use qbm_core::meqdsl::{check_cp, lower_to_fp, parse, render, standard_text, Hamiltonian, METerm, TermKind};
use qbm_core::steadystate::stationarity_residual;
use qbm_core::{
    build_model, check_detailed_balance, entropy_flux_rate, entropy_production_rate, entropy_rate, epr_quadrature,
    evolve_covariance, irreversible_current_matrix, solve_lyapunov, thermo_sample, Execution, GaussianState, ModelKind,
    SystemParams,
};
use rand::Rng;

fn p0() -> SystemParams {
    SystemParams::new(1.0, 1.0, 1.0, 0.5, 1.0, 0.0).unwrap()
}

#[test]
fn trace_formula_matches_quadrature_on_random_pairs() {
    let mut r = rng(11);
    for case in 0..100 {
        let model = random_even_diffusion_model(&mut r, 1, Family::Generic, 0.0);
        let cov = random_spd(&mut r, 2, 0.1);
        let mean = DVector::from_fn(2, |_, _| r.random_range(-1.0..1.0));
        let state = GaussianState::proper(mean, cov).unwrap();
        let trace = entropy_production_rate(&model, &state).unwrap();
        let quad = epr_quadrature(&model, &state, 40, Execution::Parallel).unwrap();
        assert!((trace - quad).abs() <= 1e-8 * trace.abs().max(1e-300), "case {case}: {trace} vs {quad}");
    }
    for case in 0..4 {
        let model = random_even_diffusion_model(&mut r, 2, Family::Generic, 0.0);
        let state = GaussianState::centered(random_spd(&mut r, 4, 0.2)).unwrap();
        let trace = entropy_production_rate(&model, &state).unwrap();
        let quad = epr_quadrature(&model, &state, 10, Execution::Parallel).unwrap();
        assert!((trace - quad).abs() <= 1e-8 * trace, "4d case {case}: {trace} vs {quad}");
    }
}

#[test]
fn production_rate_is_nonnegative() {
    let mut r = rng(12);
    for _ in 0..300 {
        let dof = if r.random::<bool>() { 1 } else { 2 };
        let model = random_even_diffusion_model(&mut r, dof, Family::Generic, 0.3);
        let state = GaussianState::centered(random_spd(&mut r, 2 * dof, 0.05)).unwrap();
        let pi = entropy_production_rate(&model, &state).unwrap();
        assert!(pi >= -1e-12, "{pi}");
    }
}

#[test]
fn balance_identity_along_random_transients() {
    let mut r = rng(13);
    for _ in 0..20 {
        let model = random_even_diffusion_model(&mut r, 1, Family::Generic, 0.0);
        let init = GaussianState::centered(random_spd(&mut r, 2, 0.5)).unwrap();
        for (t, state) in evolve_covariance(&model, &init, 2.0, 0.01).unwrap() {
            let s = thermo_sample(&model, t, &state).unwrap();
            assert!(s.balance_error().unwrap() <= 1e-8, "{s:?}");
        }
    }
}

#[test]
fn zero_production_iff_zero_current_at_steady_state() {
    // Π is quadratic in M, so a current of size ~1e-6 gives Π ~ 1e-12: the two
    // thresholds only agree away from that band, hence perturbations ≥ 1e-3.
    let mut r = rng(14);
    let (mut zero, mut positive) = (0, 0);
    for k in 0..200 {
        let family = match k % 3 {
            0 => Family::DetailedBalance,
            1 => Family::Perturbed(10f64.powf(r.random_range(-3.0..-1.0))),
            _ => Family::Generic,
        };
        let model = random_even_diffusion_model(&mut r, 1 + k % 2, family, 0.25);
        let v = solve_lyapunov(&model).unwrap();
        let pi = entropy_production_rate(&model, &v).unwrap();
        let m = irreversible_current_matrix(&model, &v).unwrap().matrix.norm();
        assert_eq!(pi <= 1e-10, m <= 1e-9, "pi = {pi}, |M| = {m}, {family:?}");
        if pi <= 1e-10 {
            zero += 1;
        } else {
            positive += 1;
        }
    }
    assert!(zero > 50 && positive > 50);
}

#[test]
fn flux_and_rate_vanish_at_detailed_balance() {
    let mut r = rng(15);
    for _ in 0..50 {
        let model = random_even_diffusion_model(&mut r, 1, Family::DetailedBalance, 0.0);
        let v = solve_lyapunov(&model).unwrap();
        assert!(stationarity_residual(&model, &v) < 1e-10);
        assert!(check_detailed_balance(&model, &v).unwrap().holds);
        assert!(entropy_flux_rate(&model, &v).unwrap().abs() < 1e-10);
        assert!(entropy_rate(&model, &v).unwrap().abs() < 1e-10);
    }
}

fn bracket_kind() -> impl Strategy<Value = TermKind> {
    prop_oneof![
        Just(TermKind::CommQAnticommP),
        Just(TermKind::CommPAnticommQ),
        Just(TermKind::DcommQQ),
        Just(TermKind::DcommPP),
        Just(TermKind::DcommQP),
        Just(TermKind::DcommPQ),
    ]
}

fn coefficient() -> impl Strategy<Value = f64> {
    prop_oneof![-1e3..1e3f64, -1e-3..1e-3f64, Just(0.5), Just(-2.0)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn render_then_parse_is_identity(
        kinds in proptest::sample::subsequence(
            vec![TermKind::CommQAnticommP, TermKind::CommPAnticommQ, TermKind::DcommQQ,
                 TermKind::DcommPP, TermKind::DcommQP, TermKind::DcommPQ], 0..=6),
        coeffs in proptest::collection::vec(coefficient(), 6),
        with_h in any::<bool>(),
        h in proptest::collection::vec(coefficient(), 5),
        hc in coefficient(),
    ) {
        let mut terms = Vec::new();
        if with_h {
            terms.push(METerm { kind: TermKind::HamiltonianQuadratic, coeff: num_complex::Complex64::new(0.0, -hc) });
        }
        for (k, c) in kinds.iter().zip(&coeffs) {
            // Hermiticity-preserving: real for double commutators, imaginary for the others.
            let coeff = match k {
                TermKind::CommQAnticommP | TermKind::CommPAnticommQ => num_complex::Complex64::new(0.0, *c),
                _ => num_complex::Complex64::new(*c, 0.0),
            };
            terms.push(METerm { kind: *k, coeff });
        }
        prop_assume!(!terms.is_empty());
        let hamiltonian = with_h.then(|| Hamiltonian {
            quadratic: [[2.0 * h[0], h[1]], [h[1], 2.0 * h[2]]],
            linear: [h[3], h[4]],
        });
        let spec = qbm_core::meqdsl::MasterEquationSpec { terms, hamiltonian, params: p0(), source_text: String::new() };
        let text = render(&spec);
        let back = parse(&text, &p0()).unwrap();
        prop_assert_eq!(&back.terms, &spec.terms);
        prop_assert_eq!(&back.hamiltonian, &spec.hamiltonian);
        let (a, b) = (lower_to_fp(&spec).unwrap(), lower_to_fp(&back).unwrap());
        prop_assert_eq!(a.drift(), b.drift());
        prop_assert_eq!(a.diffusion(), b.diffusion());
        prop_assert_eq!(render(&back), text);
    }

    #[test]
    fn real_coefficients_on_anticommutator_rows_are_rejected(kind in bracket_kind(), c in 0.1..10.0f64) {
        let name = match kind {
            TermKind::CommQAnticommP => "comm_anticomm(q,p)",
            TermKind::CommPAnticommQ => "comm_anticomm(p,q)",
            TermKind::DcommQQ => "dcomm(q,q)",
            TermKind::DcommPP => "dcomm(p,p)",
            TermKind::DcommQP => "dcomm(q,p)",
            _ => "dcomm(p,q)",
        };
        let anticomm = matches!(kind, TermKind::CommQAnticommP | TermKind::CommPAnticommQ);
        let good = if anticomm { format!("(i*{c:?})*{name}") } else { format!("{c:?}*{name}") };
        let bad = if anticomm { format!("{c:?}*{name}") } else { format!("(i*{c:?})*{name}") };
        prop_assert!(lower_to_fp(&parse(&good, &p0()).unwrap()).is_ok());
        prop_assert!(lower_to_fp(&parse(&bad, &p0()).unwrap()).is_err());
    }

    #[test]
    fn extra_position_diffusion_never_breaks_complete_positivity(extra in 0.0..5.0f64, eta in 0.05..3.0f64, beta in 0.1..10.0f64) {
        let p = SystemParams::new(1.0, 1.0, 1.0, eta, beta, 0.0).unwrap();
        let base = check_cp(&parse(standard_text(ModelKind::CpCorrected), &p).unwrap()).unwrap();
        let text = format!("{}; -{extra:?}*dcomm(p,p)", standard_text(ModelKind::CpCorrected));
        let more = check_cp(&parse(&text, &p).unwrap()).unwrap();
        prop_assert!(base.is_cptp && more.is_cptp);
        prop_assert!(more.dekker_margin >= base.dekker_margin);
        prop_assert!(more.min_eig >= base.min_eig - 1e-12);
    }

    #[test]
    fn cp_verdict_agrees_with_the_margin(dqq in 0.0..1.0f64, dpp in 0.0..1.0f64, dqp in -0.5..0.5f64, eta in 0.0..2.0f64) {
        // With ħ = 1 these coefficients give D_qq = dqq, D_pp = dpp, D_qp = dqp and friction η.
        let text = format!(
            "-({dqq:?})*dcomm(p,p) - ({dpp:?})*dcomm(q,q) + ({dqp:?})*dcomm(q,p) + ({dqp:?})*dcomm(p,q) - (i*{eta:?}/2)*comm_anticomm(q,p)"
        );
        let r = check_cp(&parse(&text, &p0()).unwrap()).unwrap();
        let scale = dqq.max(dpp).max(dqp.abs()).max(eta).powi(2).max(1e-300);
        if r.dekker_margin > 1e-9 * scale {
            prop_assert!(r.is_cptp);
        }
        if r.dekker_margin < -1e-9 * scale {
            prop_assert!(!r.is_cptp);
        }
    }
}

#[test]
fn every_table_row_lowers_as_tabulated() {
    let p = SystemParams::new(0.7, 1.0, 1.0, 0.5, 1.0, 0.0).unwrap();
    let h2 = 0.7 * 0.7;
    let lower = |s: &str| lower_to_fp(&parse(s, &p).unwrap()).unwrap();
    let m = lower("1.5*dcomm(q,q)");
    assert_eq!(m.diffusion()[(1, 1)], -2.0 * 1.5 * h2);
    let m = lower("1.5*dcomm(p,p)");
    assert_eq!(m.diffusion()[(0, 0)], -2.0 * 1.5 * h2);
    let m = lower("1.5*dcomm(q,p)");
    assert_eq!((m.diffusion()[(0, 1)], m.diffusion()[(1, 0)]), (1.5 * h2, 1.5 * h2));
    let m = lower("1.5*dcomm(p,q)");
    assert_eq!(m.diffusion()[(0, 1)], 1.5 * h2);
    // [q,{p,ρ}] ↦ 2iħ ∂_p(pW): drift −2iħc on p.
    let m = lower("(-1.5*i)*comm_anticomm(q,p)");
    assert!((m.drift()[(1, 1)] + 2.0 * 0.7 * 1.5).abs() < 1e-15);
    // [p,{q,ρ}] ↦ −2iħ ∂_q(qW): drift +2iħc on q.
    let m = lower("(-1.5*i)*comm_anticomm(p,q)");
    assert!((m.drift()[(0, 0)] - 2.0 * 0.7 * 1.5).abs() < 1e-15);
    // −(i/ħ)[H, ρ] ↦ Liouville flow.
    let m = lower("-(i/hbar)*comm(H, rho); H = p^2/(2*m) + (1/2)*m*omega^2*q^2");
    assert!((m.drift() - Mat::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])).amax() < 1e-15);
}

#[test]
fn lowered_standard_models_match_builders_for_random_parameters() {
    let mut r = rng(16);
    for _ in 0..50 {
        let p = SystemParams::new(
            r.random_range(0.1..2.0),
            r.random_range(0.1..5.0),
            r.random_range(0.1..3.0),
            r.random_range(0.01..2.0),
            r.random_range(0.1..10.0),
            r.random_range(-1.0..1.0),
        )
        .unwrap();
        let free = SystemParams { omega: 0.0, ..p };
        for (kind, p) in [
            (ModelKind::CaldeiraLeggett, p),
            (ModelKind::CpCorrected, p),
            (ModelKind::TranslationCovariantFree, free),
        ] {
            let lowered = lower_to_fp(&parse(standard_text(kind), &p).unwrap()).unwrap();
            let built = build_model(kind, &p).unwrap();
            let scale = built.drift().amax().max(built.diffusion().amax());
            assert!((lowered.drift() - built.drift()).amax() <= 1e-13 * scale, "{kind:?}");
            assert!((lowered.diffusion() - built.diffusion()).amax() <= 1e-13 * scale, "{kind:?}");
        }
    }
}
