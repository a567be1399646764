//! Quadrilaterals of vertical geodesics pair upward or downward, and the
//! flip exchanges the two cases.

use sol_coarse::sol::{sol_classify_quadrilateral, SolParams, SolPoint};
use sol_coarse::trace::PathTrace;

fn vertical(base: SolPoint, height: f64) -> sol_coarse::Result<PathTrace<SolPoint>> {
    PathTrace::sample(0.0, height, 201, |t| SolPoint::new(base.x, base.y, base.z + t))
}

fn main() -> sol_coarse::Result<()> {
    let params = SolParams::STANDARD;
    let (h, dx, dy) = (12.0, 4.0, 0.3);
    let corners = [
        SolPoint::new(0.0, 0.0, 0.0),
        SolPoint::new(dx, 0.0, 0.0),
        SolPoint::new(0.0, 0.0, h),
        SolPoint::new(0.0, dy, h),
    ];
    let segs = [
        vertical(SolPoint::new(0.0, 0.0, 0.0), h)?,
        vertical(SolPoint::new(0.0, dy, 0.0), h)?,
        vertical(SolPoint::new(dx, 0.0, 0.0), h)?,
        vertical(SolPoint::new(dx, dy, 0.0), h)?,
    ];
    let v = sol_classify_quadrilateral(corners, [&segs[0], &segs[1], &segs[2], &segs[3]], 1.0, params)?;
    println!("{:?}, deviation {:.3e}", v.case, v.deviation);
    let fc = corners.map(|p| p.flipped());
    let fs: Vec<_> = segs.iter().map(|s| s.map_points(|p| p.flipped())).collect();
    let w = sol_classify_quadrilateral(fc, [&fs[0], &fs[1], &fs[2], &fs[3]], 1.0, params)?;
    println!("flipped: {:?}, deviation {:.3e}", w.case, w.deviation);
    Ok(())
}
