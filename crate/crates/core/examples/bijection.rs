//! The lamplighter Cayley graph over walk-and-light generators is DL(q,q):
//! the bijection round-trips and carries balls onto balls edge by edge.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sol_coarse::lamplighter::{dl_to_ll, ll_dl_ball_check, ll_to_dl, LampElement};

fn main() -> sol_coarse::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..4 {
        let g = LampElement::random(&mut rng, 3, 4, 3);
        let p = ll_to_dl(&g, 3)?;
        println!("{g} -> {p} -> {}", dl_to_ll(&p, 3)?);
    }
    for (q, r) in [(2, 6), (3, 4)] {
        let c = ll_dl_ball_check(q, r)?;
        println!(
            "q = {q}, radius {r}: {} vertices, {} edges, isomorphic {}",
            c.lamp_vertices,
            c.lamp_edges,
            c.isomorphic()
        );
    }
    Ok(())
}
