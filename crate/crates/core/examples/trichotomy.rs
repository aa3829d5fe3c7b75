//! The three regimes side by side: gamma = 1/2, 1 and 2.

use grushin::cli::trichotomy;
use grushin::ProblemConfig;

fn main() -> grushin::Result<()> {
    let cfg = ProblemConfig::new(1.0, 0.3, 0.8, 1.0, 2001, 100, 256)?;
    let rep = trichotomy(&cfg)?;
    for r in &rep.rows {
        println!(
            "gamma = {:3}  T = {:5}  ln growth of cost lower bound {:9.3}  measured {:9} expected {:9} ({})",
            r.gamma, r.horizon, r.log_envelope_growth, r.measured, r.expected, r.theorem
        );
    }
    for n in &rep.notes {
        println!("note: {n}");
    }
    Ok(())
}
