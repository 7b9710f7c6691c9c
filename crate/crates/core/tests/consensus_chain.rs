use nalgebra::DVector;
use robust_mss::cert::{
    consensus_certificate, consensus_check, decomposed_vertex_test, default_margin, theorem1_fixed_tpm,
    verify_certificate, Certificate, Subspace,
};
use robust_mss::geometry::Interval;
use robust_mss::graph::Graph;
use robust_mss::mjls::{
    exact_moment_sequence, monte_carlo, sample_tpm_in_hull, AgentDynamics, InitialMode, ModeSystem, Observable,
};

#[test]
fn path_consensus_certificate_holds_downstream() {
    let g = Graph::path(4).unwrap();
    let (lambda2, lambda_n) = g.spectrum().require_connected().unwrap();
    let kappa = 0.8 / lambda_n;
    let rho_l = 0.3;
    let dynamics = AgentDynamics::consensus(kappa);
    let margin = default_margin(&dynamics);

    let res = consensus_check(&g, kappa, rho_l, margin).unwrap();
    assert!(res.outcome.is_feasible(), "{:?}", res.outcome.status);
    let cert = res.certificate.unwrap();
    assert!(cert.nominal_dropped);
    assert!(verify_certificate(&cert, &dynamics, &[lambda2, lambda_n], margin / 2.0).passed);

    // the closed-form witness passes the same checks
    let (xtilde, multiplier) = consensus_certificate(kappa, lambda_n, rho_l, 0.01).unwrap();
    let closed = Certificate { xtilde, multiplier, ..cert.clone() };
    assert!(verify_certificate(&closed, &dynamics, &[lambda2, lambda_n], 1e-6).passed);

    let iv = Interval::new(rho_l, 1.0).unwrap();
    let dec = decomposed_vertex_test(&g, &dynamics, &iv, 1e-7, Subspace::Disagreement).unwrap();
    assert!(dec.is_feasible());

    let ms = ModeSystem::assemble(&g, &dynamics).unwrap();
    let reduced = ms.disagreement().unwrap();
    let tpm = sample_tpm_in_hull(g.m(), &iv, 11).unwrap();
    assert!(theorem1_fixed_tpm(&reduced, &tpm, 1e-7).unwrap().is_feasible());

    let x0 = DVector::from_fn(ms.state_dim(), |i, _| (i + 1) as f64);
    let obs = Observable::Disagreement { agents: g.n() };
    let exact = exact_moment_sequence(&ms, &tpm, &x0, &InitialMode::Uniform, 60, obs).unwrap();
    assert!(exact[60] < 1e-3 * exact[0]);
    let stats = monte_carlo(&ms, &tpm, &x0, &InitialMode::Uniform, 60, 400, 3, obs).unwrap();
    assert_eq!(stats.mean[0], exact[0]);
    assert!(!stats.unstable);
    assert!(stats.mean[60] < 1e-3 * stats.mean[0]);
}

#[test]
fn agreement_start_stays_in_agreement() {
    let g = Graph::cycle(4).unwrap();
    let ms = ModeSystem::assemble(&g, &AgentDynamics::consensus(0.3)).unwrap();
    let iv = Interval::new(0.2, 0.9).unwrap();
    let tpm = sample_tpm_in_hull(g.m(), &iv, 5).unwrap();
    let ones = DVector::from_element(4, 1.0);
    let obs = Observable::Disagreement { agents: 4 };
    let stats = monte_carlo(&ms, &tpm, &ones, &InitialMode::Uniform, 20, 50, 1, obs).unwrap();
    assert!(stats.mean.iter().all(|&v| v.abs() < 1e-24));
    let exact = exact_moment_sequence(&ms, &tpm, &ones, &InitialMode::Uniform, 20, Observable::State).unwrap();
    assert!(exact.iter().all(|&v| (v - 4.0).abs() < 1e-12));
}
