//! Coarse differentiation of the images of vertical geodesics under a noisy
//! standard map: finds a scale at which most pieces are ε-efficient.

use sol_coarse::coarse::{coarse_differentiate, Mode, ScaleLadder};
use sol_coarse::qilab::{make_bilipschitz_1d, make_standard_map, perturb_map_with, NoiseModel, SampledMap};
use sol_coarse::sol::{sol_box_vertical_family, SolBox, SolParams};

fn main() -> sol_coarse::Result<()> {
    let params = SolParams::STANDARD;
    let bx = SolBox::at_identity(8.0)?;
    let f = make_bilipschitz_1d(1, 2.0, 10)?;
    let g = make_bilipschitz_1d(2, 2.0, 10)?;
    let map = SampledMap::new(make_standard_map(f, g, false), 0.1, params)?;
    let map = perturb_map_with(&map, 1.0, 3, NoiseModel::Smooth)?;
    let family = sol_box_vertical_family(&bx, 200, 4, params)?
        .iter()
        .map(|seg| Ok(seg.trace(321)?.map_points(|p| map.eval(*p))))
        .collect::<sol_coarse::Result<Vec<_>>>()?;
    let ladder = ScaleLadder::geometric(2.0, 2.0, 3)?;
    for mode in [Mode::Efficient, Mode::Monotone] {
        let cd = coarse_differentiate(&params, &family, &ladder, 0.1, 0.1, mode)?;
        println!(
            "{mode:?}: m* = {} (R = {}, r = {}), fraction {:.3}, profile {:?}, K_max {}, guaranteed {}",
            cd.m_star, cd.big_r, cd.small_r, cd.fraction, cd.profile, cd.k_max, cd.guaranteed
        );
    }
    Ok(())
}
