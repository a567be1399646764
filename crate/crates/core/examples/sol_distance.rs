//! Certified SOL distance bounds, and the shooting refinement on top of them.

use sol_coarse::sol::{sol_compose, sol_distance_bounds, sol_distance_refine, SolParams, SolPoint};

fn main() -> sol_coarse::Result<()> {
    let params = SolParams::STANDARD;
    let o = SolPoint::new(0.0, 0.0, 0.0);
    for q in [
        SolPoint::new(0.0, 0.0, 7.0),
        SolPoint::new(1.0, 2.0, 3.0),
        SolPoint::new(20.0, 0.0, 0.0),
        SolPoint::new(5.0, -5.0, 1.0),
    ] {
        let b = sol_distance_bounds(o, q, params);
        let r = sol_distance_refine(o, q, params, 200)?;
        println!("d(0, {q:?}) in [{:.6}, {:.6}], shooting gives {:.6} (converged {})", b.lower, b.upper, r.value, r.converged);
    }
    // left translation preserves both bounds
    let g = SolPoint::new(3.0, -1.0, 0.7);
    let (p, q) = (SolPoint::new(1.0, 1.0, 0.0), SolPoint::new(-2.0, 4.0, 2.5));
    let before = sol_distance_bounds(p, q, params);
    let after = sol_distance_bounds(sol_compose(g, p, params), sol_compose(g, q, params), params);
    println!("before translation {before:?}\nafter translation  {after:?}");
    Ok(())
}
