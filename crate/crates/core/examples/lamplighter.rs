//! Word lengths in the lamplighter group over two generating sets.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sol_coarse::lamplighter::{ll_ball, ll_word_length_bfs, ll_word_length_formula, GenSet, LampElement};

fn main() -> sol_coarse::Result<()> {
    let q = 2;
    for gens in [GenSet::PaperSet, GenSet::WalkAndLight] {
        let ball = ll_ball(q, gens, 6)?;
        let mut spheres = [0usize; 7];
        for (_, d) in &ball {
            spheres[*d as usize] += 1;
        }
        println!("{gens:?}: sphere sizes {spheres:?}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..5 {
        let g = LampElement::random(&mut rng, q, 3, 3);
        let f = ll_word_length_formula(&g, q, GenSet::PaperSet)?;
        let b = ll_word_length_bfs(&g, q, GenSet::PaperSet)?;
        println!("|{g}| = {f} (search {b})");
    }
    Ok(())
}
