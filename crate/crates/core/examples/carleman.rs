//! Carleman weights, constants and the integrated inequality on v_16.

use grushin::carleman::{build_weight, caccioppoli_check, extract_constants, integrated_check, pointwise_check};
use grushin::{assemble_mode_operator, ground_eigenpair, ProblemConfig};

fn main() -> grushin::Result<()> {
    let n = 16;
    for gamma in [0.25, 0.75, 1.0] {
        let cfg = ProblemConfig::new(gamma, 0.3, 0.8, 1.0, 1001, 1000, n)?;
        let grid = cfg.grid()?;
        let tg = cfg.time_grid()?;
        let w = build_weight(gamma, cfg.a_prime, cfg.b_prime, &grid)?;
        let k = extract_constants(&w, &cfg, n)?;
        let v = ground_eigenpair(&assemble_mode_operator(n, gamma, &grid), 1e-14)?.v;
        let ic = integrated_check(&w, &k, &v, &cfg, tg)?;
        let cc = caccioppoli_check(n, &v, &cfg, tg)?;
        println!("gamma = {gamma} ({:?})", w.gamma_regime);
        println!("  C1 = {:.4}, C2 = {:.4}, C3 = {:.4}, M1 = {}, M = {:.4e}", k.c1, k.c2, k.c3, k.m1, k.m);
        if let Some(t) = k.t_sharp {
            println!("  T_sharp = {t:.2}");
        }
        println!(
            "  pointwise {}, ln LHS = {:.2}, ln RHS = {:.2}, Caccioppoli margin {:.3e}",
            pointwise_check(&w, &k).passed(),
            ic.log_lhs,
            ic.log_rhs,
            cc.margin
        );
    }
    Ok(())
}
