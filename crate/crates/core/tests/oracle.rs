use gaussmetric::channel::{self, ChannelPoint};
use gaussmetric::gaussian::{embed, squeezer, two_mode_squeezer, GaussianState};
use gaussmetric::linalg::rel_frobenius;
use gaussmetric::oracle::{
    fidelity_fock, lindblad_apply, residual_below, oracle_qfi, qfi_from_fidelity_fd, regression_grid, sld_form_operator, state_to_fock,
    TruncatedOps,
};
use gaussmetric::qfi::{self, DEFAULT_EPSILON};
use nalgebra::DMatrix;
use num_complex::Complex64;

fn max_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

#[test]
fn coherent_amplitude() {
    let rho = state_to_fock(&GaussianState::coherent(Complex64::new(0.4, 0.0)), 20).unwrap();
    let a = rho.expect(&TruncatedOps::new(rho.space).a[0]);
    assert!((a - Complex64::new(0.4, 0.0)).norm() < 1e-9);
}

#[test]
fn prepared_moments_match() {
    let extra = GaussianState::thermal(&[1.3, 1.0])
        .unwrap()
        .transformed(&embed(&two_mode_squeezer(0.3), &[0, 1], 2))
        .transformed(&embed(&squeezer(-0.2), &[1], 2));
    let states = regression_grid().into_iter().map(|c| c.probe).chain([extra]);
    for st in states {
        let rho = state_to_fock(&st, 20).unwrap();
        let (mean, cov) = rho.moments();
        assert!(max_diff(&DMatrix::from_column_slice(4, 1, mean.as_slice()), &DMatrix::from_column_slice(4, 1, st.mean().as_slice())) < 1e-7);
        assert!(max_diff(&cov, st.cov()) < 1e-7, "{}", max_diff(&cov, st.cov()));
        assert!(rho.hermiticity_defect() < 1e-12);
        assert!(rho.min_eigenvalue() > -1e-10);
    }
}

#[test]
fn lindblad_matches_covariance_model() {
    for case in regression_grid().iter().step_by(3) {
        let rho = state_to_fock(&case.probe, 20).unwrap();
        let out = lindblad_apply(&case.x, &rho).unwrap();
        let expect = channel::apply(&case.x, &case.probe).unwrap();
        let (mean, cov) = out.moments();
        let dm = (mean - expect.mean()).amax();
        let dc = max_diff(&cov, expect.cov());
        assert!(dm < 1e-7 && dc < 1e-7, "{}: mean {dm:e} cov {dc:e}", case.name);
        assert!(out.trace_deficit.abs() < 1e-9 + rho.trace_deficit.abs());
        assert!(out.min_eigenvalue() > -1e-8);
    }
}

#[test]
fn thermal_probe_headline() {
    let x = ChannelPoint::single(0.2, 0.5, 0.0, 0.0, 0).unwrap();
    let probe = GaussianState::thermal(&[2.0]).unwrap();
    let t = std::time::Instant::now();
    let o = oracle_qfi(&x, &probe, 30).unwrap();
    eprintln!("oracle single mode: {:?}", t.elapsed());
    let e = qfi::qfi(&x, &probe).unwrap();
    let err = rel_frobenius(&o.matrix, &e.matrix, 0.0);
    assert!(err < 1e-4, "{err:e}\n{}\n{}", o.matrix, e.matrix);
}

#[test]
fn grid_qfi_agreement() {
    for case in regression_grid() {
        let t = std::time::Instant::now();
        let o = oracle_qfi(&case.x, &case.probe, 20).unwrap();
        let el = t.elapsed();
        let (e, _) = qfi::qfi_auto(&case.x, &case.probe, DEFAULT_EPSILON).unwrap();
        let err = rel_frobenius(&o.matrix, &e.matrix, 0.0);
        eprintln!("{}: {err:e} in {el:?}", case.name);
        assert!(err < 1e-4, "{}: {err:e}\n{}\n{}", case.name, o.matrix, e.matrix);
    }
}

#[test]
fn fidelity_hessian_agreement() {
    let case = &regression_grid()[2];
    let labels = case.x.parameters();
    let t = std::time::Instant::now();
    let j = qfi_from_fidelity_fd(&case.x, &case.probe, &labels, 20, 2e-2).unwrap();
    eprintln!("fidelity hessian: {:?}", t.elapsed());
    let (e, _) = qfi::qfi_auto(&case.x, &case.probe, DEFAULT_EPSILON).unwrap();
    let err = rel_frobenius(&j, &e.matrix, 0.0);
    assert!(err < 1e-3, "{err:e}\n{j}\n{}", e.matrix);
}

#[test]
fn bures_distance_of_thermal_pair() {
    let a = state_to_fock(&GaussianState::thermal(&[2.0]).unwrap(), 40).unwrap();
    let b = state_to_fock(&GaussianState::thermal(&[2.1]).unwrap(), 40).unwrap();
    let f = fidelity_fock(&a, &b);
    // thermal family in ν: J_νν = 1 / (4 n̄(n̄+1)) at n̄ = 1/2
    let predicted = 0.25 * (1.0 / 3.0) * 0.01;
    assert!((2.0 * (1.0 - f) - predicted).abs() < 1e-4 * predicted.max(1.0));
}

#[test]
fn engine_sld_solves_defining_equation() {
    for case in regression_grid().iter().take(6) {
        let (forms, eps) = qfi::sld_auto(&case.x, &case.probe, DEFAULT_EPSILON).unwrap();
        // both sides see the probe the engine actually used
        let probe = match eps {
            Some(e) => qfi::regularize_pure(&case.probe, e).unwrap(),
            None => case.probe.clone(),
        };
        let o = oracle_qfi(&case.x, &probe, 20).unwrap();
        let out = channel::apply(&case.x, &probe).unwrap();
        let solver = o.solver();
        for (f, d) in forms.iter().zip(&o.derivatives) {
            let lam = sld_form_operator(f, out.mean(), o.output.space);
            let own = solver.solve(d);
            let res = residual_below(&o.output, d, &lam, 10);
            let zero = o.output.expect(&lam).re;
            assert!(res < 1e-6, "{}: residual {res:e}", case.name);
            assert!(zero.abs() < 1e-8, "{}: ⟨Λ⟩ = {zero:e}", case.name);
            assert!(own.residual < 1e-6);
        }
    }
}
