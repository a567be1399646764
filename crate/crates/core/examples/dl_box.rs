//! A box in DL(3,2): slice counts, the vertical geodesics through it, and
//! the height weights that equalize its top and bottom.

use sol_coarse::dl::{dl_box_enumerate, dl_distance_bfs, dl_distance_formula, dl_height_weight, DlBox, DlGraph};

fn main() -> sol_coarse::Result<()> {
    let g = DlGraph::new(3, 2)?;
    let bx = DlBox::centered(g, 2)?;
    let contents = dl_box_enumerate(&bx)?;
    println!("|B| = {} ({} enumerated), |∂B| = {}", bx.size(), contents.vertices.len(), bx.boundary_size());
    println!("{} vertical geodesics cross the box", bx.geodesic_count());
    for h in bx.bottom()..=bx.top() {
        let w = dl_height_weight(h, 3, 2);
        println!(
            "  h = {h:>2}: {:>3} vertices, {:>4} incidences, weight {w:.4}, weighted {:.2}",
            bx.slice_count(h),
            bx.incidences(h),
            w * bx.incidences(h) as f64
        );
    }
    let (p, q) = (&contents.vertices[0], &contents.vertices[contents.vertices.len() - 1]);
    println!("d({p}, {q}) = {} by formula, {} by search", dl_distance_formula(p, q), dl_distance_bfs(&g, p, q)?);
    Ok(())
}
