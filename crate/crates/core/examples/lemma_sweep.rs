//! Sums of the scale profile over a generated family, against the bounds
//! `16K³/ε` (monotone) and `4K²/ε` (efficient) computed from each trace's
//! estimated constants.

use sol_coarse::coarse::{delta_profile, Mode, ScaleLadder};
use sol_coarse::qgen::adversarial_sol_family;
use sol_coarse::sol::SolParams;

fn main() -> sol_coarse::Result<()> {
    let params = SolParams::STANDARD;
    let eps = 0.1;
    let fam = adversarial_sol_family(40, 5, 3.0, 2.0, 160.0, 0.5, params)?;
    for mode in [Mode::Monotone, Mode::Efficient] {
        let mut worst: f64 = 0.0;
        for g in &fam {
            let ladder = ScaleLadder::fitting(20.0, 2.0, g.trace.span())?;
            let total = delta_profile(&params, &g.trace, &ladder, eps, mode)?.total();
            let bound = match mode {
                Mode::Monotone => g.constants.monotone_bound(eps),
                Mode::Efficient => g.constants.efficient_bound(eps),
            };
            worst = worst.max(total / bound);
        }
        println!("{mode:?}: largest Σδ / bound over {} traces is {worst:.4}", fam.len());
    }
    Ok(())
}
