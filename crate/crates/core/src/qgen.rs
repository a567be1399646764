//! Random sampled quasi-geodesics for exercising the bound checks.
//!
//! Each generator is deterministic in its seed. The adversarial families are
//! filtered by the estimator: a trace is kept only when its estimated
//! `(K, C)` is within the requested limits, so every member is a measured
//! quasi-geodesic rather than a nominal one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coarse::{estimate_qi_constants, QiConstants};
use crate::dl::{dl_neighbors, DlGraph, DlVertex};
use crate::error::{Error, Result};
use crate::hplane::{leaf_distance, leaf_geodesic_point, HPoint};
use crate::sol::{sol_staircase, SolParams, SolPoint, StaircaseOrder};
use crate::trace::PathTrace;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QgKind {
    /// Vertical with speed changes and short backtracks.
    Wiggle,
    /// `Wiggle` with per-sample jitter in every direction.
    Noisy,
    /// A two-leg staircase.
    Staircase,
    /// Vertical climbs alternating with horizontal leaf excursions.
    Zigzag,
}

impl QgKind {
    pub const ALL: [QgKind; 4] = [QgKind::Wiggle, QgKind::Noisy, QgKind::Staircase, QgKind::Zigzag];
}

type PieceFn = Box<dyn Fn(f64) -> SolPoint>;

/// A path glued from pieces, each with a parameter duration and a map from
/// `[0, 1]` to SOL.
struct Polyline {
    pieces: Vec<(f64, PieceFn)>,
}

impl Polyline {
    fn new() -> Self {
        Self { pieces: Vec::new() }
    }

    fn end(&self, start: SolPoint) -> SolPoint {
        self.pieces.last().map_or(start, |(_, f)| f(1.0))
    }

    fn duration(&self) -> f64 {
        self.pieces.iter().map(|p| p.0).sum()
    }

    fn at(&self, t: f64) -> SolPoint {
        let mut acc = 0.0;
        for (d, f) in &self.pieces {
            if t <= acc + d {
                return f(((t - acc) / d).clamp(0.0, 1.0));
            }
            acc += d;
        }
        let (_, f) = self.pieces.last().expect("nonempty polyline");
        f(1.0)
    }

    fn sample(&self, spacing: f64) -> Result<PathTrace<SolPoint>> {
        let total = self.duration();
        let count = ((total / spacing).round() as usize).max(1) + 1;
        PathTrace::sample(0.0, total, count, |t| self.at(t))
    }
}

fn vertical_piece(from: SolPoint, dz: f64, speed: f64) -> (f64, PieceFn) {
    (dz.abs() / speed, Box::new(move |s| SolPoint::new(from.x, from.y, from.z + s * dz)))
}

/// Geodesic in the x-leaf (or y-leaf) through `from` to a point at the same
/// height and horocyclic distance `delta`.
fn leaf_piece(from: SolPoint, delta: f64, along_x: bool, params: SolParams) -> (f64, PieceFn) {
    if along_x {
        let rate = params.a();
        let p = HPoint::new(from.x, from.z);
        let q = HPoint::new(from.x + delta * (rate * from.z).exp(), from.z);
        let len = leaf_distance(p, q, rate);
        (len, Box::new(move |s| {
            let h = leaf_geodesic_point(p, q, s, rate);
            SolPoint::new(h.x, from.y, h.z)
        }))
    } else {
        let rate = params.b();
        let p = HPoint::new(from.y, -from.z);
        let q = HPoint::new(from.y + delta * (-rate * from.z).exp(), -from.z);
        let len = leaf_distance(p, q, rate);
        (len, Box::new(move |s| {
            let h = leaf_geodesic_point(p, q, s, rate);
            SolPoint::new(from.x, h.x, -h.z)
        }))
    }
}

fn wiggle(rng: &mut ChaCha8Rng, span: f64, wild: f64) -> Polyline {
    let start = SolPoint::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.0);
    let mut line = Polyline::new();
    while line.duration() < span {
        let here = line.end(start);
        let up = !rng.gen_bool(0.2 * wild);
        let len = if up { rng.gen_range(1.0..4.0) } else { rng.gen_range(0.2..0.2 + 1.3 * wild) };
        let speed = rng.gen_range(1.0 - 0.5 * wild..=1.0);
        line.pieces.push(vertical_piece(here, if up { len } else { -len }, speed));
    }
    line
}

fn zigzag(rng: &mut ChaCha8Rng, span: f64, params: SolParams, wild: f64) -> Polyline {
    let start = SolPoint::new(0.0, 0.0, rng.gen_range(-2.0..2.0));
    let mut line = Polyline::new();
    let mut along_x = rng.gen_bool(0.5);
    while line.duration() < span {
        let here = line.end(start);
        line.pieces.push(vertical_piece(here, rng.gen_range(1.0..4.0), 1.0));
        let here = line.end(start);
        let delta = rng.gen_range(0.1..0.1 + 2.9 * wild) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        line.pieces.push(leaf_piece(here, delta, along_x, params));
        along_x = !along_x;
    }
    line
}

/// One trace of the given kind; `span` is the approximate parameter length
/// (exact for everything but staircases, whose length is their arclength).
pub fn sol_quasi_geodesic(
    kind: QgKind,
    seed: u64,
    span: f64,
    spacing: f64,
    params: SolParams,
) -> Result<PathTrace<SolPoint>> {
    sol_quasi_geodesic_tamed(kind, seed, span, spacing, params, 1.0)
}

/// [`sol_quasi_geodesic`] with the backtracks, speed changes, jitter and
/// excursions scaled by `wild ∈ (0, 1]`.
pub fn sol_quasi_geodesic_tamed(
    kind: QgKind,
    seed: u64,
    span: f64,
    spacing: f64,
    params: SolParams,
    wild: f64,
) -> Result<PathTrace<SolPoint>> {
    if !(span > 0.0 && spacing > 0.0 && spacing < span) {
        return Err(Error::Range { name: "span", detail: format!("need 0 < spacing {spacing} < span {span}") });
    }
    if !(wild > 0.0 && wild <= 1.0) {
        return Err(Error::Range { name: "wild", detail: format!("{wild} not in (0, 1]") });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        QgKind::Wiggle => wiggle(&mut rng, span, wild).sample(spacing),
        QgKind::Noisy => {
            let base = wiggle(&mut rng, span, wild).sample(spacing)?;
            let j = rng.gen_range(0.0..1.5 * wild);
            let pts = base
                .points()
                .iter()
                .map(|p| {
                    let dz = rng.gen_range(-j..=j);
                    let dx = rng.gen_range(-j..=j) * (params.a() * p.z).exp();
                    let dy = rng.gen_range(-j..=j) * (-params.b() * p.z).exp();
                    SolPoint::new(p.x + dx, p.y + dy, p.z + dz)
                })
                .collect();
            PathTrace::new(base.params().to_vec(), pts)
        }
        QgKind::Staircase => {
            let p = SolPoint::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-2.0..2.0));
            let sgn = |r: &mut ChaCha8Rng| if r.gen_bool(0.5) { 1.0 } else { -1.0 };
            // redraw, adjusting the reach, until the arclength is near `span`
            let mut reach = (span / 4.0).max(0.5);
            let mut best = None;
            for _ in 0..64 {
                let q = SolPoint::new(
                    p.x + sgn(&mut rng) * rng.gen_range(0.0..reach).exp(),
                    p.y + sgn(&mut rng) * rng.gen_range(0.0..reach).exp(),
                    p.z + rng.gen_range(-reach..reach),
                );
                let order = StaircaseOrder::ALL[rng.gen_range(0..4)];
                let len = sol_staircase(p, q, order, 2, params)?.span();
                let miss = (len / span).ln().abs();
                if best.as_ref().is_none_or(|b: &(f64, SolPoint, StaircaseOrder, f64)| miss < b.0) {
                    best = Some((miss, q, order, len));
                }
                if (0.9 * span..=1.5 * span).contains(&len) {
                    break;
                }
                reach *= if len < span { 1.1 } else { 0.9 };
            }
            let (_, q, order, len) = best.expect("at least one draw");
            let count = ((len / spacing).round() as usize).max(2);
            sol_staircase(p, q, order, count, params)
        }
        QgKind::Zigzag => zigzag(&mut rng, span, params, wild).sample(spacing),
    }
}

/// A walk from the base vertex stepping up with probability `up_prob` and
/// down otherwise, choosing children uniformly.
pub fn dl_quasi_geodesic(graph: DlGraph, seed: u64, steps: usize, up_prob: f64) -> Result<PathTrace<DlVertex>> {
    if steps == 0 || !(0.0..=1.0).contains(&up_prob) {
        return Err(Error::Range { name: "steps", detail: "need steps ≥ 1 and up_prob in [0, 1]".into() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = graph.base();
    let mut pts = vec![p.clone()];
    for _ in 0..steps {
        let ns = dl_neighbors(&graph, &p);
        let (n, m) = (graph.n() as usize, graph.m() as usize);
        p = if rng.gen_bool(up_prob) {
            ns[rng.gen_range(0..n)].clone()
        } else {
            ns[n + rng.gen_range(0..m)].clone()
        };
        pts.push(p.clone());
    }
    PathTrace::new((0..=steps).map(|k| k as f64).collect(), pts)
}

#[derive(Clone, Debug)]
pub struct Generated<P> {
    pub kind: QgKind,
    pub seed: u64,
    /// Taming factor the trace was drawn with.
    pub wild: f64,
    pub trace: PathTrace<P>,
    pub constants: QiConstants,
}

/// `count` SOL traces cycling through every kind, each with estimated
/// `K ≤ k_max` and `C ≤ c_max`. Each slot starts fully wild; a rejected draw
/// is replaced by a fresh seed tamed by a further factor 0.85. Gives up
/// after `64·count` draws.
pub fn adversarial_sol_family(
    count: usize,
    seed: u64,
    k_max: f64,
    c_max: f64,
    span: f64,
    spacing: f64,
    params: SolParams,
) -> Result<Vec<Generated<SolPoint>>> {
    let mut out = Vec::with_capacity(count);
    let mut draw = 0u64;
    let mut wild = 1.0;
    while out.len() < count {
        if draw > 64 * count as u64 {
            return Err(Error::Degenerate(format!(
                "only {} of {count} draws met K ≤ {k_max}, C ≤ {c_max}",
                out.len()
            )));
        }
        let kind = QgKind::ALL[out.len() % QgKind::ALL.len()];
        let s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(draw);
        draw += 1;
        let trace = sol_quasi_geodesic_tamed(kind, s, span, spacing, params, wild)?;
        match estimate_qi_constants(&params, &trace) {
            Ok(q) if q.k <= k_max && q.c <= c_max => {
                out.push(Generated { kind, seed: s, wild, trace, constants: q });
                wild = 1.0;
            }
            _ => wild *= 0.85,
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const S: SolParams = SolParams::STANDARD;

    #[test]
    fn generators_are_deterministic() {
        for kind in QgKind::ALL {
            let a = sol_quasi_geodesic(kind, 11, 30.0, 0.25, S).unwrap();
            let b = sol_quasi_geodesic(kind, 11, 30.0, 0.25, S).unwrap();
            assert_eq!(a, b);
            assert!(a.len() >= 2);
        }
        let g = DlGraph::new(2, 3).unwrap();
        let w = dl_quasi_geodesic(g, 5, 40, 0.8).unwrap();
        assert_eq!(w, dl_quasi_geodesic(g, 5, 40, 0.8).unwrap());
        assert_eq!(w.len(), 41);
    }

    #[test]
    fn adversarial_members_meet_limits() {
        let fam = adversarial_sol_family(12, 3, 3.0, 5.0, 40.0, 0.25, S).unwrap();
        assert_eq!(fam.len(), 12);
        for g in &fam {
            assert!(g.constants.k <= 3.0 && g.constants.c <= 5.0);
        }
    }
}
