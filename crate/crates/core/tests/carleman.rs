use grushin::carleman::{
    alpha_eval, build_weight, caccioppoli_check, extract_constants, integrated_check, pointwise_check, verify_hypotheses,
    Regime,
};
use grushin::grid::seeded_vector;
use grushin::{assemble_mode_operator, ground_eigenpair, make_grid, ProblemConfig};

#[test]
fn regular_profile_hypotheses() {
    let g = make_grid(801).unwrap();
    let p = build_weight(0.75, 0.4, 0.7, &g).unwrap();
    assert_eq!(p.gamma_regime, Regime::Regular);
    verify_hypotheses(&p).unwrap();
    let min = p.beta.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(min >= 1.0);
}

#[test]
fn singular_identities_near_zero() {
    let g = make_grid(2001).unwrap();
    let gamma = 0.25;
    let p = build_weight(gamma, 0.4, 0.7, &g).unwrap();
    assert_eq!(p.gamma_regime, Regime::Singular);
    verify_hypotheses(&p).unwrap();
    let mut seen = 0;
    for i in 0..p.x.len() {
        let x = p.x[i];
        if x.abs() >= p.epsilon_nbhd || x == 0.0 {
            continue;
        }
        seen += 1;
        let target = x.signum() * x.abs().powf(2.0 * gamma) + p.c1;
        assert!((p.beta1[i].powi(2) - target).abs() <= 1e-14 * target, "x = {x}");
        let prod = gamma * x.abs().powf(2.0 * gamma - 1.0);
        assert!((p.beta2[i] * p.beta1[i] - prod).abs() <= 1e-13 * prod, "x = {x}");
    }
    assert!(seen > 10);
}

#[test]
fn gamma_above_one_rejected() {
    let g = make_grid(101).unwrap();
    assert!(build_weight(1.5, 0.4, 0.7, &g).is_err());
}

#[test]
fn alpha_examples() {
    let g = make_grid(401).unwrap();
    let p = build_weight(1.0, 0.4, 0.7, &g).unwrap();
    let (m, t_end) = (3.0, 2.0);
    for x in [-0.9, 0.0, 0.5] {
        let beta = p.eval(x).0;
        let mid = alpha_eval(&p, m, t_end, t_end / 2.0, x).unwrap();
        assert!((mid - 4.0 * m * beta / (t_end * t_end)).abs() < 1e-13 * mid);
        let (a, b) = (alpha_eval(&p, m, t_end, 0.3, x).unwrap(), alpha_eval(&p, m, t_end, t_end - 0.3, x).unwrap());
        assert!((a - b).abs() < 1e-13 * a);
    }
    // M = 1, beta = 1, T = 1 at t = 1/2: alpha = 4
    assert!(((-2.0 * 4.0f64).exp() - (-8.0f64).exp()).abs() == 0.0);
    assert!(alpha_eval(&p, 1.0, 1.0, 0.0, 0.0).is_err());
}

#[test]
fn constants_examples() {
    let cfg = |n_max| ProblemConfig::new(1.0, 0.3, 0.8, 1.0, 801, 200, n_max).unwrap();
    let g = make_grid(801).unwrap();
    let c = cfg(32);
    let p = build_weight(1.0, c.a_prime, c.b_prime, &g).unwrap();
    let k16 = extract_constants(&p, &c, 16).unwrap();
    let k32 = extract_constants(&p, &c, 32).unwrap();
    assert!(k16.c1 > 0.0 && k16.c2 >= 0.0);
    assert!((k32.m2 / k16.m2 - 2.0).abs() < 1e-14);

    let s = ProblemConfig::new(0.25, 0.3, 0.8, 1.0, 1001, 200, 16).unwrap();
    let gs = make_grid(1001).unwrap();
    let ps = build_weight(0.25, s.a_prime, s.b_prime, &gs).unwrap();
    let ks = extract_constants(&ps, &s, 16).unwrap();
    let pw = pointwise_check(&ps, &ks);
    assert!(pw.passed());
    assert!(pw.lambda_reduced_gap.unwrap() <= 0.0);
    assert!(ks.lambda_small.is_some());

    let other = build_weight(0.75, s.a_prime, s.b_prime, &gs).unwrap();
    assert!(extract_constants(&other, &s, 16).is_err());
}

#[test]
fn integrated_and_caccioppoli_on_ground_state() {
    let cfg = ProblemConfig::new(0.75, 0.3, 0.8, 1.0, 1001, 1000, 16).unwrap();
    let g = cfg.grid().unwrap();
    let tg = cfg.time_grid().unwrap();
    let p = build_weight(0.75, cfg.a_prime, cfg.b_prime, &g).unwrap();
    let k = extract_constants(&p, &cfg, 16).unwrap();
    let v = ground_eigenpair(&assemble_mode_operator(16, 0.75, &g), 1e-14).unwrap().v;
    let r = integrated_check(&p, &k, &v, &cfg, tg).unwrap();
    assert!(r.integrated_pass && r.pointwise_pass);
    assert!(r.tail < 1e-12);
    let c = caccioppoli_check(16, &v, &cfg, tg).unwrap();
    assert!(c.pass && c.margin > 0.0);
}

#[test]
fn zero_datum_passes_trivially() {
    let cfg = ProblemConfig::new(1.0, 0.3, 0.8, 1.0, 401, 200, 8).unwrap();
    let g = cfg.grid().unwrap();
    let tg = cfg.time_grid().unwrap();
    let p = build_weight(1.0, cfg.a_prime, cfg.b_prime, &g).unwrap();
    let k = extract_constants(&p, &cfg, 8).unwrap();
    let z = vec![0.0; 401];
    let r = integrated_check(&p, &k, &z, &cfg, tg).unwrap();
    assert!(r.lhs == 0.0 && r.rhs == 0.0 && r.integrated_pass);
    let c = caccioppoli_check(8, &z, &cfg, tg).unwrap();
    assert!(c.lhs == 0.0 && c.rhs == 0.0 && c.pass);
}

#[test]
fn random_datum_beyond_sharp_time() {
    let g = make_grid(401).unwrap();
    let probe = ProblemConfig::new(1.0, 0.3, 0.8, 1.0, 401, 200, 8).unwrap();
    let p = build_weight(1.0, probe.a_prime, probe.b_prime, &g).unwrap();
    let t_sharp = extract_constants(&p, &probe, 8).unwrap().t_sharp.expect("defined for gamma = 1");
    let horizon = 1.1 * t_sharp;
    let cfg = ProblemConfig::new(1.0, 0.3, 0.8, horizon, 401, 4000, 8).unwrap();
    let k = extract_constants(&p, &cfg, 8).unwrap();
    let r = integrated_check(&p, &k, &seeded_vector(401, 77, 0), &cfg, cfg.time_grid().unwrap()).unwrap();
    assert!(r.integrated_pass, "{} vs {}", r.log_lhs, r.log_rhs);
}

#[test]
fn caccioppoli_margin_stable_under_refinement() {
    let margin = |nx| {
        let cfg = ProblemConfig::new(1.0, 0.3, 0.8, 1.0, nx, 400, 8).unwrap();
        let g = cfg.grid().unwrap();
        let v = ground_eigenpair(&assemble_mode_operator(8, 1.0, &g), 1e-14).unwrap().v;
        caccioppoli_check(8, &v, &cfg, cfg.time_grid().unwrap()).unwrap().margin
    };
    let (a, b) = (margin(401), margin(801));
    assert!((0.5..=2.0).contains(&(b / a)), "{a} {b}");
}
