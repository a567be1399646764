//! Runs the three-step detector on seeded standard maps with growing noise
//! and prints the recovered orientation and sup distance per run.

use sol_coarse::qilab::{
    detect_sol, make_bilipschitz_1d, make_standard_map, perturb_map_with, spearman, NoiseModel, SampledMap,
    StepConfig,
};
use sol_coarse::sol::{SolBox, SolParams};

fn main() -> sol_coarse::Result<()> {
    let params = SolParams::STANDARD;
    let bx = SolBox::at_identity(8.0)?;
    let cfg = StepConfig::default();
    let (mut cs, mut sups) = (Vec::new(), Vec::new());
    for seed in 0..20u64 {
        let f = make_bilipschitz_1d(2 * seed, 2.0, 10)?;
        let g = make_bilipschitz_1d(2 * seed + 1, 2.0, 10)?;
        let flip = seed % 2 == 1;
        let base = SampledMap::new(make_standard_map(f, g, flip), 0.1, params)?;
        for c in [0.5, 1.0, 2.0] {
            let map = perturb_map_with(&base, c, 100 + seed, NoiseModel::Smooth)?;
            let det = detect_sol(&map, &bx, &cfg)?;
            let fit = det.fit.as_ref();
            let sup = fit.map_or(f64::NAN, |f| f.sup_distance);
            println!(
                "seed {seed:2} C {c:3}: flip {flip:5} -> {:?} consistency {:.3} sup {sup:.3}",
                fit.map(|f| f.map.flip),
                det.reconciliation.consistency
            );
            cs.push(c);
            sups.push(sup);
        }
    }
    println!("spearman(C, sup) = {:.4}", spearman(&cs, &sups)?);
    Ok(())
}
