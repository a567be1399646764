//! Boundary-to-volume ratios of SOL boxes and of DL boxes both decay like
//! `1/L`: the boxes form Følner sequences.

use sol_coarse::dl::{DlBox, DlGraph};
use sol_coarse::sol::{sol_box_measures, SolParams};

fn main() -> sol_coarse::Result<()> {
    println!("SOL boxes");
    for l in [2.0, 4.0, 8.0, 16.0] {
        let m = sol_box_measures(l, SolParams::STANDARD)?;
        println!("  L = {l:>4}: ratio {:.5}, L·ratio {:.4}", m.ratio(), l * m.ratio());
    }
    for (m, n) in [(2, 2), (3, 2)] {
        println!("DL({m},{n}) boxes");
        for l in 1..=6 {
            let bx = DlBox::centered(DlGraph::new(m, n)?, l)?;
            println!("  L = {l}: |B| = {}, |∂B| = {}, ratio {:.4}", bx.size(), bx.boundary_size(), bx.folner_ratio());
        }
    }
    Ok(())
}
