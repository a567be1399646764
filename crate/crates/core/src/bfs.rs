//! Breadth-first search over implicit undirected graphs.

use std::collections::{HashMap, HashSet};
use std::hash::Hash;

/// Distance between `a` and `b`, or `None` if it exceeds `cap`. The graph
/// must be undirected: both searches use the same neighbor function.
pub fn bidirectional_distance<P, F>(a: &P, b: &P, cap: u32, neighbors: F) -> Option<u32>
where
    P: Clone + Eq + Hash,
    F: Fn(&P) -> Vec<P>,
{
    if a == b {
        return Some(0);
    }
    let mut seen = [HashSet::from([a.clone()]), HashSet::from([b.clone()])];
    let mut frontier = [vec![a.clone()], vec![b.clone()]];
    let mut radius = [0u32, 0u32];
    while radius[0] + radius[1] < cap {
        let side = usize::from(frontier[1].len() < frontier[0].len());
        if frontier[side].is_empty() {
            return None;
        }
        let mut next = Vec::new();
        for x in &frontier[side] {
            for y in neighbors(x) {
                if seen[1 - side].contains(&y) {
                    return Some(radius[0] + radius[1] + 1);
                }
                if seen[side].insert(y.clone()) {
                    next.push(y);
                }
            }
        }
        frontier[side] = next;
        radius[side] += 1;
    }
    None
}

/// Every vertex within `radius` of `center` with its distance, in BFS order.
pub fn ball<P, F>(center: &P, radius: u32, neighbors: F) -> Vec<(P, u32)>
where
    P: Clone + Eq + Hash,
    F: Fn(&P) -> Vec<P>,
{
    let mut dist = HashMap::from([(center.clone(), 0u32)]);
    let mut order = vec![(center.clone(), 0u32)];
    let mut i = 0;
    while i < order.len() {
        let d = order[i].1;
        if d < radius {
            for y in neighbors(&order[i].0) {
                if !dist.contains_key(&y) {
                    dist.insert(y.clone(), d + 1);
                    order.push((y, d + 1));
                }
            }
        }
        i += 1;
    }
    order
}
