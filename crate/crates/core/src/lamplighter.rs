//! Lamplighter groups `ℤ ≀ F` with `|F| = q`.
//!
//! An element `(f, t)` is a finitely supported lamp configuration
//! `f: ℤ → ℤ/q` and a walker position `t`, multiplied by
//! `(f₁, t₁)·(f₂, t₂) = (f₁ + f₂(· − t₁), t₁ + t₂)`. Only `|F|` matters for the
//! geometry, so `F` is taken to be `ℤ/q`.
//!
//! Text format: `pos:{i:v,…}`, e.g. `0:{}` or `1:{0:1,2:1}`.
//!
//! # The identification with `DL(q, q)`
//!
//! `(f, t)` goes to `(u, v)` with `h(u) = t`:
//! `u` descends from the spine through the digits `f(M), f(M−1), …, f(t)` and
//! `v` descends through `f(μ), f(μ+1), …, f(t−1)`, where `M` and `μ` bound the
//! support. Right multiplication by `(c·δ₀, +1)` changes `f(t)` by `c` and
//! steps right, which is exactly an up-move: `u` drops its last digit and `v`
//! gains the digit `f(t) + c`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bfs;
use crate::dl::{dl_ball, dl_distance_formula, dl_neighbors, DlGraph, DlVertex, TreeVertex, MAX_BRANCHING};
use crate::error::{Error, Result};

pub const DEFAULT_WORD_CAP: u32 = 16;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct LampElement {
    lamps: BTreeMap<i64, u32>,
    pos: i64,
}

impl LampElement {
    pub fn identity() -> Self {
        Self::default()
    }

    /// Builds an element, dropping zero lamps; values must be below `q`.
    pub fn new(lamps: impl IntoIterator<Item = (i64, u32)>, pos: i64, q: u32) -> Result<Self> {
        check_q(q)?;
        let mut map = BTreeMap::new();
        for (i, v) in lamps {
            if v >= q {
                return Err(Error::Validation(format!("lamp value {v} at {i} not below {q}")));
            }
            if v != 0 {
                map.insert(i, v);
            }
        }
        Ok(Self { lamps: map, pos })
    }

    pub fn pos(&self) -> i64 {
        self.pos
    }

    pub fn lamps(&self) -> &BTreeMap<i64, u32> {
        &self.lamps
    }

    pub fn lamp(&self, i: i64) -> u32 {
        self.lamps.get(&i).copied().unwrap_or(0)
    }

    pub fn lit_count(&self) -> usize {
        self.lamps.len()
    }

    pub fn validate(&self, q: u32) -> Result<()> {
        check_q(q)?;
        match self.lamps.iter().find(|(_, &v)| v == 0 || v >= q) {
            Some((i, v)) => Err(Error::Validation(format!("lamp value {v} at {i} invalid for q = {q}"))),
            None => Ok(()),
        }
    }

    fn add_lamp(&mut self, i: i64, c: u32, q: u32) {
        let v = (self.lamp(i) + c) % q;
        if v == 0 {
            self.lamps.remove(&i);
        } else {
            self.lamps.insert(i, v);
        }
    }

    pub fn random<R: Rng>(rng: &mut R, q: u32, spread: i64, lit: usize) -> Self {
        let mut g = Self::identity();
        for _ in 0..lit {
            let i = rng.gen_range(-spread..=spread);
            g.add_lamp(i, rng.gen_range(1..q), q);
        }
        g.pos = rng.gen_range(-spread..=spread);
        g
    }
}

fn check_q(q: u32) -> Result<()> {
    if (2..=MAX_BRANCHING).contains(&q) {
        Ok(())
    } else {
        Err(Error::Range { name: "q", detail: format!("{q} not in 2..={MAX_BRANCHING}") })
    }
}

impl fmt::Display for LampElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{{", self.pos)?;
        for (k, (i, v)) in self.lamps.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{i}:{v}")?;
        }
        write!(f, "}}")
    }
}

impl FromStr for LampElement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("lamplighter element {s:?}, expected pos:{{i:v,...}}"));
        let (pos, rest) = s.trim().split_once(':').ok_or_else(bad)?;
        let pos: i64 = pos.trim().parse().map_err(|_| bad())?;
        let body = rest
            .trim()
            .strip_prefix('{')
            .and_then(|r| r.strip_suffix('}'))
            .ok_or_else(bad)?;
        let mut lamps = BTreeMap::new();
        for entry in body.split(',').map(str::trim).filter(|e| !e.is_empty()) {
            let (i, v) = entry.split_once(':').ok_or_else(bad)?;
            let i: i64 = i.trim().parse().map_err(|_| bad())?;
            let v: u32 = v.trim().parse().map_err(|_| bad())?;
            if lamps.insert(i, v).is_some() {
                return Err(Error::Parse(format!("lamp {i} repeated in {s:?}")));
            }
        }
        lamps.retain(|_, v| *v != 0);
        Ok(Self { lamps, pos })
    }
}

pub fn ll_multiply(g: &LampElement, h: &LampElement, q: u32) -> LampElement {
    let mut out = g.clone();
    for (&i, &v) in &h.lamps {
        out.add_lamp(i + g.pos, v, q);
    }
    out.pos = g.pos + h.pos;
    out
}

pub fn ll_inverse(g: &LampElement, q: u32) -> LampElement {
    LampElement {
        lamps: g.lamps.iter().map(|(&i, &v)| (i - g.pos, (q - v) % q)).collect(),
        pos: -g.pos,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GenSet {
    /// Change the lamp under the walker, or step `±1`: `q + 1` generators.
    PaperSet,
    /// Set-lamp-then-step-right `(c·δ₀, +1)` for every `c`, and inverses.
    WalkAndLight,
}

impl GenSet {
    pub fn generators(&self, q: u32) -> Vec<LampElement> {
        let step = |p: i64| LampElement { lamps: BTreeMap::new(), pos: p };
        match self {
            GenSet::PaperSet => {
                let mut out: Vec<LampElement> = (1..q)
                    .map(|c| LampElement { lamps: BTreeMap::from([(0, c)]), pos: 0 })
                    .collect();
                out.push(step(1));
                out.push(step(-1));
                out
            }
            GenSet::WalkAndLight => {
                let fwd: Vec<LampElement> = (0..q)
                    .map(|c| LampElement::new([(0, c)], 1, q).expect("c < q"))
                    .collect();
                let back: Vec<LampElement> = fwd.iter().map(|g| ll_inverse(g, q)).collect();
                fwd.into_iter().chain(back).collect()
            }
        }
    }
}

/// Right-multiplication neighbors, i.e. the Cayley graph edges at `g`.
pub fn ll_neighbors(g: &LampElement, q: u32, gens: GenSet) -> Vec<LampElement> {
    gens.generators(q).iter().map(|s| ll_multiply(g, s, q)).collect()
}

pub fn ll_word_length_bfs(g: &LampElement, q: u32, gens: GenSet) -> Result<u32> {
    g.validate(q)?;
    bfs::bidirectional_distance(&LampElement::identity(), g, DEFAULT_WORD_CAP, |x| {
        ll_neighbors(x, q, gens)
    })
    .ok_or_else(|| Error::Cap(format!("word length of {g} exceeds cap {DEFAULT_WORD_CAP}")))
}

/// The Cayley ball of radius `radius` about the identity, in BFS order.
pub fn ll_ball(q: u32, gens: GenSet, radius: u32) -> Result<Vec<(LampElement, u32)>> {
    check_q(q)?;
    if radius > DEFAULT_WORD_CAP {
        return Err(Error::Cap(format!("ball radius {radius} exceeds cap {DEFAULT_WORD_CAP}")));
    }
    Ok(bfs::ball(&LampElement::identity(), radius, |x| ll_neighbors(x, q, gens)))
}

/// Closed-form word length.
///
/// For `PaperSet` each lit lamp costs one generator and the walker must
/// sweep `[a, b]`, the hull of the support together with `0` and `t`,
/// leaving at `0` and stopping at `t`; it turns around once, at whichever
/// end is cheaper to visit first. For `WalkAndLight` it is the DL distance
/// of the image from the base vertex.
pub fn ll_word_length_formula(g: &LampElement, q: u32, gens: GenSet) -> Result<u64> {
    g.validate(q)?;
    match gens {
        GenSet::PaperSet => {
            let t = g.pos;
            let lo = g.lamps.keys().next().copied().unwrap_or(0);
            let hi = g.lamps.keys().next_back().copied().unwrap_or(0);
            let a = lo.min(0).min(t);
            let b = hi.max(0).max(t);
            let left_first = -a + (b - a) + (b - t);
            let right_first = b + (b - a) + (t - a);
            Ok(g.lit_count() as u64 + left_first.min(right_first) as u64)
        }
        GenSet::WalkAndLight => {
            let base = ll_to_dl(&LampElement::identity(), q)?;
            Ok(dl_distance_formula(&base, &ll_to_dl(g, q)?))
        }
    }
}

pub fn ll_to_dl(g: &LampElement, q: u32) -> Result<DlVertex> {
    g.validate(q)?;
    let t = g.pos;
    let top = g.lamps.keys().next_back().copied().unwrap_or(t).max(t);
    let bottom = g.lamps.keys().next().copied().unwrap_or(t).min(t);
    let upath: Vec<u8> = (t..=top).rev().map(|i| g.lamp(i) as u8).collect();
    let vpath: Vec<u8> = (bottom..t).map(|i| g.lamp(i) as u8).collect();
    let u = TreeVertex::spine(top + 1).descend(&upath);
    let v = TreeVertex::spine(-bottom).descend(&vpath);
    debug_assert_eq!((u.h, v.h), (t, -t));
    Ok(DlVertex { u, v })
}

pub fn dl_to_ll(p: &DlVertex, q: u32) -> Result<LampElement> {
    check_q(q)?;
    p.u.validate(q)?;
    p.v.validate(q)?;
    if p.u.h + p.v.h != 0 {
        return Err(Error::Validation(format!("heights of {p} do not sum to zero")));
    }
    let t = p.u.h;
    let mut g = LampElement { lamps: BTreeMap::new(), pos: t };
    // u's last digit is the lamp at t, the one before it at t + 1, ...
    for (k, &d) in p.u.branch.iter().rev().enumerate() {
        g.add_lamp(t + k as i64, u32::from(d), q);
    }
    for (k, &d) in p.v.branch.iter().rev().enumerate() {
        g.add_lamp(t - 1 - k as i64, u32::from(d), q);
    }
    Ok(g)
}

pub enum BijectionInput<'a> {
    Lamp(&'a LampElement),
    Dl(&'a DlVertex),
}

pub enum BijectionOutput {
    Dl(DlVertex),
    Lamp(LampElement),
}

/// Both directions of the identification in one entry point.
pub fn ll_dl_bijection(x: BijectionInput<'_>, q: u32) -> Result<BijectionOutput> {
    match x {
        BijectionInput::Lamp(g) => ll_to_dl(g, q).map(BijectionOutput::Dl),
        BijectionInput::Dl(p) => dl_to_ll(p, q).map(BijectionOutput::Lamp),
    }
}

/// Edge-by-edge comparison of the `WalkAndLight` Cayley ball with the DL
/// ball of the same radius under the identification.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BallCheck {
    pub q: u32,
    pub radius: u32,
    pub lamp_vertices: usize,
    pub dl_vertices: usize,
    /// The image of the Cayley ball is exactly the DL ball.
    pub vertex_bijection: bool,
    pub lamp_edges: usize,
    pub dl_edges: usize,
    /// Cayley edges whose images are DL edges.
    pub forward_preserved: usize,
    /// DL edges whose preimages are Cayley edges.
    pub backward_preserved: usize,
}

impl BallCheck {
    pub fn isomorphic(&self) -> bool {
        self.vertex_bijection
            && self.lamp_edges == self.dl_edges
            && self.forward_preserved == self.lamp_edges
            && self.backward_preserved == self.dl_edges
    }
}

pub fn ll_dl_ball_check(q: u32, radius: u32) -> Result<BallCheck> {
    let graph = DlGraph::new(q, q)?;
    let lamp_ball = ll_ball(q, GenSet::WalkAndLight, radius)?;
    let dl = dl_ball(&graph, &graph.base(), radius)?;
    let lamp_set: HashSet<&LampElement> = lamp_ball.iter().map(|(x, _)| x).collect();
    let dl_set: HashSet<&DlVertex> = dl.iter().map(|(p, _)| p).collect();
    let image: HashMap<&LampElement, DlVertex> =
        lamp_ball.iter().map(|(x, _)| Ok((x, ll_to_dl(x, q)?))).collect::<Result<_>>()?;
    let vertex_bijection =
        image.len() == dl_set.len() && image.values().all(|p| dl_set.contains(p));
    let (mut lamp_edges, mut forward) = (0, 0);
    for (x, _) in &lamp_ball {
        let nb: HashSet<DlVertex> = dl_neighbors(&graph, &image[x]).into_iter().collect();
        for y in ll_neighbors(x, q, GenSet::WalkAndLight) {
            if let Some(img) = lamp_set.get(&y).map(|y| &image[y]) {
                lamp_edges += 1;
                forward += usize::from(nb.contains(img));
            }
        }
    }
    let (mut dl_edges, mut backward) = (0, 0);
    for (p, _) in &dl {
        let x = dl_to_ll(p, q)?;
        let nb: HashSet<LampElement> = ll_neighbors(&x, q, GenSet::WalkAndLight).into_iter().collect();
        for r in dl_neighbors(&graph, p) {
            if dl_set.contains(&r) {
                dl_edges += 1;
                backward += usize::from(nb.contains(&dl_to_ll(&r, q)?));
            }
        }
    }
    Ok(BallCheck {
        q,
        radius,
        lamp_vertices: lamp_ball.len(),
        dl_vertices: dl.len(),
        vertex_bijection,
        lamp_edges: lamp_edges / 2,
        dl_edges: dl_edges / 2,
        forward_preserved: forward / 2,
        backward_preserved: backward / 2,
    })
}
