//! Regular trees with a distinguished end and the Diestel-Leader graphs.
//!
//! A tree vertex is `(h, [d₁ … d_k])`: start at the spine vertex of height
//! `h + k` and descend through children `d₁, …, d_k`. Child 0 of a spine
//! vertex is the next spine vertex, so a canonical branch never starts with 0
//! and every vertex has exactly one encoding.
//!
//! `DL(m, n)` is the set of pairs `(u, v) ∈ T_m × T_n` with `h(u) + h(v) = 0`.
//! Height is `h(u)`. An up-move sends `u` to its parent and `v` to one of its
//! `n` children; a down-move sends `u` to one of its `m` children and `v` to
//! its parent.
//!
//! Text format: a tree vertex is `h:digits` (digits `0-9a-z`, empty on the
//! spine), a DL vertex is `(h:digits|-h:digits)`, e.g. `(0:|0:)` or
//! `(-1:1|1:)`.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bfs;
use crate::error::{Error, Result};
use crate::trace::{Ambient, SpaceTag};

/// Largest branching number representable in the text format.
pub const MAX_BRANCHING: u32 = 36;
pub const DEFAULT_BFS_CAP: u32 = 30;
pub const DEFAULT_BOX_CAP: u64 = 10_000_000;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TreeVertex {
    pub h: i64,
    pub branch: Vec<u8>,
}

impl TreeVertex {
    pub fn spine(h: i64) -> Self {
        Self { h, branch: Vec::new() }
    }

    /// Builds a vertex, rejecting non-canonical branches.
    pub fn new(h: i64, branch: Vec<u8>, q: u32) -> Result<Self> {
        let v = Self { h, branch };
        v.validate(q)?;
        Ok(v)
    }

    pub fn validate(&self, q: u32) -> Result<()> {
        if let Some(&d) = self.branch.iter().find(|&&d| u32::from(d) >= q) {
            return Err(Error::Validation(format!("digit {d} not below branching {q} in {self}")));
        }
        if self.branch.first() == Some(&0) {
            return Err(Error::Validation(format!(
                "{self} is not canonical: branch starts with 0"
            )));
        }
        Ok(())
    }

    pub fn is_spine(&self) -> bool {
        self.branch.is_empty()
    }

    /// Height at which the vertex leaves the spine.
    pub fn junction(&self) -> i64 {
        self.h + self.branch.len() as i64
    }

    pub fn parent(&self) -> TreeVertex {
        let mut branch = self.branch.clone();
        branch.pop();
        TreeVertex { h: self.h + 1, branch }
    }

    pub fn child(&self, d: u8) -> TreeVertex {
        if self.branch.is_empty() && d == 0 {
            return TreeVertex::spine(self.h - 1);
        }
        let mut branch = self.branch.clone();
        branch.push(d);
        TreeVertex { h: self.h - 1, branch }
    }

    /// The ancestor at height `height ≥ self.h`.
    pub fn ancestor(&self, height: i64) -> TreeVertex {
        debug_assert!(height >= self.h);
        let up = (height - self.h) as usize;
        if up >= self.branch.len() {
            TreeVertex::spine(height)
        } else {
            TreeVertex { h: height, branch: self.branch[..self.branch.len() - up].to_vec() }
        }
    }

    pub fn is_descendant_of(&self, anc: &TreeVertex) -> bool {
        anc.h >= self.h && self.ancestor(anc.h) == *anc
    }

    /// Descendant reached by the digit path `path` (applied top to bottom).
    pub fn descend(&self, path: &[u8]) -> TreeVertex {
        let mut branch = self.branch.clone();
        if branch.is_empty() {
            let lead = path.iter().take_while(|&&d| d == 0).count();
            branch.extend_from_slice(&path[lead..]);
        } else {
            branch.extend_from_slice(path);
        }
        TreeVertex { h: self.h - path.len() as i64, branch }
    }
}

fn digit_char(d: u8) -> char {
    std::char::from_digit(u32::from(d), MAX_BRANCHING).expect("digit below 36")
}

impl fmt::Display for TreeVertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:", self.h)?;
        for &d in &self.branch {
            write!(f, "{}", digit_char(d))?;
        }
        Ok(())
    }
}

impl FromStr for TreeVertex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (h, digits) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("tree vertex {s:?} lacks ':'")))?;
        let h: i64 = h
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad height in {s:?}")))?;
        let branch = digits
            .trim()
            .chars()
            .map(|c| {
                c.to_digit(MAX_BRANCHING)
                    .map(|d| d as u8)
                    .ok_or_else(|| Error::Parse(format!("bad digit {c:?} in {s:?}")))
            })
            .collect::<Result<Vec<u8>>>()?;
        if branch.first() == Some(&0) {
            return Err(Error::Validation(format!("{s:?} is not canonical: branch starts with 0")));
        }
        Ok(TreeVertex { h, branch })
    }
}

/// The `q + 1` neighbors: parent first, then children `0 … q−1`.
pub fn tree_neighbors(v: &TreeVertex, q: u32) -> Result<Vec<TreeVertex>> {
    v.validate(q)?;
    let mut out = Vec::with_capacity(q as usize + 1);
    out.push(v.parent());
    out.extend((0..q).map(|d| v.child(d as u8)));
    Ok(out)
}

pub fn tree_lca_height(u: &TreeVertex, w: &TreeVertex) -> i64 {
    let (su, sw) = (u.junction(), w.junction());
    if su != sw {
        return su.max(sw);
    }
    let common = u
        .branch
        .iter()
        .zip(&w.branch)
        .take_while(|(a, b)| a == b)
        .count();
    su - common as i64
}

pub fn tree_distance(u: &TreeVertex, w: &TreeVertex) -> u64 {
    let l = tree_lca_height(u, w);
    ((l - u.h) + (l - w.h)) as u64
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DlVertex {
    pub u: TreeVertex,
    pub v: TreeVertex,
}

impl DlVertex {
    pub fn height(&self) -> i64 {
        self.u.h
    }
}

impl fmt::Display for DlVertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}|{})", self.u, self.v)
    }
}

impl FromStr for DlVertex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let inner = s
            .trim()
            .strip_prefix('(')
            .and_then(|t| t.strip_suffix(')'))
            .ok_or_else(|| Error::Parse(format!("DL vertex {s:?} must be parenthesized")))?;
        let (a, b) = inner
            .split_once('|')
            .ok_or_else(|| Error::Parse(format!("DL vertex {s:?} lacks '|'")))?;
        let p = DlVertex { u: a.parse()?, v: b.parse()? };
        if p.u.h + p.v.h != 0 {
            return Err(Error::Validation(format!("heights of {s:?} do not sum to zero")));
        }
        Ok(p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DlGraph {
    m: u32,
    n: u32,
}

impl DlGraph {
    pub fn new(m: u32, n: u32) -> Result<Self> {
        for (name, q) in [("m", m), ("n", n)] {
            if !(2..=MAX_BRANCHING).contains(&q) {
                return Err(Error::Range {
                    name,
                    detail: format!("branching {q} not in 2..={MAX_BRANCHING}"),
                });
            }
        }
        Ok(Self { m, n })
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn degree(&self) -> u32 {
        self.m + self.n
    }

    pub fn base(&self) -> DlVertex {
        DlVertex { u: TreeVertex::spine(0), v: TreeVertex::spine(0) }
    }

    pub fn validate(&self, p: &DlVertex) -> Result<()> {
        p.u.validate(self.m)?;
        p.v.validate(self.n)?;
        if p.u.h + p.v.h != 0 {
            return Err(Error::Validation(format!("heights of {p} do not sum to zero")));
        }
        Ok(())
    }

    /// A vertex at height in `[-max_height, max_height]` whose tree
    /// coordinates leave the spine at most `max_depth` levels above.
    pub fn random_vertex<R: Rng>(&self, rng: &mut R, max_height: i64, max_depth: usize) -> DlVertex {
        let h = rng.gen_range(-max_height..=max_height);
        let mut tree = |q: u32, h: i64| {
            let k = rng.gen_range(0..=max_depth);
            let path: Vec<u8> = (0..k).map(|_| rng.gen_range(0..q) as u8).collect();
            TreeVertex::spine(h + k as i64).descend(&path)
        };
        let u = tree(self.m, h);
        let v = tree(self.n, -h);
        DlVertex { u, v }
    }
}

/// Up-moves first (`v` to each child), then down-moves (`u` to each child).
pub fn dl_neighbors(g: &DlGraph, p: &DlVertex) -> Vec<DlVertex> {
    let mut out = Vec::with_capacity(g.degree() as usize);
    let up = p.u.parent();
    for d in 0..g.n {
        out.push(DlVertex { u: up.clone(), v: p.v.child(d as u8) });
    }
    let vp = p.v.parent();
    for d in 0..g.m {
        out.push(DlVertex { u: p.u.child(d as u8), v: vp.clone() });
    }
    out
}

pub fn dl_distance_formula(p: &DlVertex, q: &DlVertex) -> u64 {
    let dh = (p.height() - q.height()).unsigned_abs();
    tree_distance(&p.u, &q.u) + tree_distance(&p.v, &q.v) - dh
}

pub fn dl_distance_bfs(g: &DlGraph, p: &DlVertex, q: &DlVertex) -> Result<u32> {
    dl_distance_bfs_capped(g, p, q, DEFAULT_BFS_CAP)
}

/// Breadth-first distance, giving up beyond `cap`.
pub fn dl_distance_bfs_capped(g: &DlGraph, p: &DlVertex, q: &DlVertex, cap: u32) -> Result<u32> {
    g.validate(p)?;
    g.validate(q)?;
    bfs::bidirectional_distance(p, q, cap, |x| dl_neighbors(g, x))
        .ok_or_else(|| Error::Cap(format!("BFS distance from {p} to {q} exceeds radius cap {cap}")))
}

/// All vertices within `radius` of `center` with their distances, in BFS order.
pub fn dl_ball(g: &DlGraph, center: &DlVertex, radius: u32) -> Result<Vec<(DlVertex, u32)>> {
    if radius > DEFAULT_BFS_CAP {
        return Err(Error::Cap(format!("ball radius {radius} exceeds cap {DEFAULT_BFS_CAP}")));
    }
    g.validate(center)?;
    Ok(bfs::ball(center, radius, |x| dl_neighbors(g, x)))
}

/// Box of half-height `L` below the anchors `a_u ∈ T_m`, `a_v ∈ T_n`, whose
/// heights sum to `2L`. Its height range is `[c − L, c + L]` with
/// `c = h(a_u) − L`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DlBox {
    graph: DlGraph,
    half_height: u32,
    anchor_u: TreeVertex,
    anchor_v: TreeVertex,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DlBoxContents {
    pub vertices: Vec<DlVertex>,
    /// `(height, count)` from the bottom slice up.
    pub slices: Vec<(i64, u64)>,
}

impl DlBox {
    pub fn new(graph: DlGraph, half_height: u32, anchor_u: TreeVertex, anchor_v: TreeVertex) -> Result<Self> {
        if half_height == 0 {
            return Err(Error::Range { name: "L", detail: "box half-height must be positive".into() });
        }
        anchor_u.validate(graph.m)?;
        anchor_v.validate(graph.n)?;
        if anchor_u.h + anchor_v.h != 2 * i64::from(half_height) {
            return Err(Error::Validation(format!(
                "anchor heights {} and {} must sum to 2L = {}",
                anchor_u.h,
                anchor_v.h,
                2 * half_height
            )));
        }
        Ok(Self { graph, half_height, anchor_u, anchor_v })
    }

    /// The box around the base vertex, anchored on the spines.
    pub fn centered(graph: DlGraph, half_height: u32) -> Result<Self> {
        let l = i64::from(half_height);
        Self::new(graph, half_height, TreeVertex::spine(l), TreeVertex::spine(l))
    }

    pub fn graph(&self) -> DlGraph {
        self.graph
    }

    pub fn half_height(&self) -> u32 {
        self.half_height
    }

    /// `(a_u, a_v)`.
    pub fn anchors(&self) -> (&TreeVertex, &TreeVertex) {
        (&self.anchor_u, &self.anchor_v)
    }

    pub fn center_height(&self) -> i64 {
        self.anchor_u.h - i64::from(self.half_height)
    }

    pub fn bottom(&self) -> i64 {
        self.center_height() - i64::from(self.half_height)
    }

    pub fn top(&self) -> i64 {
        self.center_height() + i64::from(self.half_height)
    }

    pub fn contains(&self, p: &DlVertex) -> bool {
        p.u.is_descendant_of(&self.anchor_u) && p.v.is_descendant_of(&self.anchor_v)
    }

    fn widths(&self, h: i64) -> (u32, u32) {
        ((self.anchor_u.h - h) as u32, (self.anchor_v.h + h) as u32)
    }

    /// `m^{L−h'} n^{L+h'}` with `h' = h − c`.
    pub fn slice_count(&self, h: i64) -> u64 {
        if h < self.bottom() || h > self.top() {
            return 0;
        }
        let (du, dv) = self.widths(h);
        u64::from(self.graph.m).pow(du) * u64::from(self.graph.n).pow(dv)
    }

    pub fn size(&self) -> u64 {
        (self.bottom()..=self.top()).map(|h| self.slice_count(h)).sum()
    }

    /// The top and bottom slices; every other vertex has all its neighbors in
    /// the box.
    pub fn boundary_size(&self) -> u64 {
        self.slice_count(self.bottom()) + self.slice_count(self.top())
    }

    pub fn folner_ratio(&self) -> f64 {
        self.boundary_size() as f64 / self.size() as f64
    }

    /// Number of top-to-bottom vertical geodesics, `m^{2L} n^{2L}`.
    pub fn geodesic_count(&self) -> u128 {
        let l2 = 2 * self.half_height;
        u128::from(self.graph.m).pow(l2) * u128::from(self.graph.n).pow(l2)
    }

    /// Vertical geodesics through one vertex at height `h`.
    pub fn incidences(&self, h: i64) -> u64 {
        let (du, dv) = self.widths(h);
        let l2 = 2 * self.half_height;
        u64::from(self.graph.m).pow(l2 - du) * u64::from(self.graph.n).pow(l2 - dv)
    }

    /// Vertical geodesic through `bottom_u` (height `bottom()` below `a_u`)
    /// and `top_v` (height `−top()` below `a_v`), listed bottom to top.
    pub fn geodesic(&self, bottom_u: &TreeVertex, top_v: &TreeVertex) -> Vec<DlVertex> {
        (self.bottom()..=self.top())
            .map(|h| DlVertex { u: bottom_u.ancestor(h), v: top_v.ancestor(-h) })
            .collect()
    }
}

fn all_paths(q: u32, len: u32) -> impl Iterator<Item = Vec<u8>> {
    let total = u64::from(q).pow(len);
    (0..total).map(move |mut k| {
        let mut path = vec![0u8; len as usize];
        for slot in path.iter_mut().rev() {
            *slot = (k % u64::from(q)) as u8;
            k /= u64::from(q);
        }
        path
    })
}

fn random_path<R: Rng>(rng: &mut R, q: u32, len: u32) -> Vec<u8> {
    (0..len).map(|_| rng.gen_range(0..q) as u8).collect()
}

pub fn dl_box_enumerate(bx: &DlBox) -> Result<DlBoxContents> {
    dl_box_enumerate_capped(bx, DEFAULT_BOX_CAP)
}

pub fn dl_box_enumerate_capped(bx: &DlBox, cap: u64) -> Result<DlBoxContents> {
    let size = bx.size();
    if size > cap {
        return Err(Error::Cap(format!("box has {size} vertices, cap is {cap}")));
    }
    let mut vertices = Vec::with_capacity(size as usize);
    let mut slices = Vec::new();
    for h in bx.bottom()..=bx.top() {
        let (du, dv) = bx.widths(h);
        let before = vertices.len();
        let vs: Vec<TreeVertex> = all_paths(bx.graph.n, dv).map(|p| bx.anchor_v.descend(&p)).collect();
        for pu in all_paths(bx.graph.m, du) {
            let u = bx.anchor_u.descend(&pu);
            for v in &vs {
                vertices.push(DlVertex { u: u.clone(), v: v.clone() });
            }
        }
        slices.push((h, (vertices.len() - before) as u64));
    }
    Ok(DlBoxContents { vertices, slices })
}

/// All `m^{2L} n^{2L}` vertical geodesics of the box when that is at most
/// `limit`, otherwise `limit` distinct ones drawn with `seed`.
pub fn dl_vertical_family(bx: &DlBox, limit: usize, seed: u64) -> Result<Vec<Vec<DlVertex>>> {
    if limit == 0 {
        return Err(Error::Range { name: "limit", detail: "must be at least 1".into() });
    }
    let l2 = 2 * bx.half_height;
    let (m, n) = (bx.graph.m, bx.graph.n);
    let total = bx.geodesic_count();
    if total <= limit as u128 {
        let tops: Vec<TreeVertex> = all_paths(n, l2).map(|p| bx.anchor_v.descend(&p)).collect();
        let mut out = Vec::with_capacity(total as usize);
        for pu in all_paths(m, l2) {
            let bu = bx.anchor_u.descend(&pu);
            for tv in &tops {
                out.push(bx.geodesic(&bu, tv));
            }
        }
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(limit);
    if total <= u128::from(u32::MAX) {
        let per_u = u64::from(n).pow(l2);
        for k in sample(&mut rng, total as usize, limit).into_vec() {
            let (iu, iv) = (k as u64 / per_u, k as u64 % per_u);
            let digits = |mut idx: u64, q: u32| {
                let mut p = vec![0u8; l2 as usize];
                for slot in p.iter_mut().rev() {
                    *slot = (idx % u64::from(q)) as u8;
                    idx /= u64::from(q);
                }
                p
            };
            let bu = bx.anchor_u.descend(&digits(iu, m));
            let tv = bx.anchor_v.descend(&digits(iv, n));
            out.push(bx.geodesic(&bu, &tv));
        }
    } else {
        let mut seen = HashSet::new();
        while out.len() < limit {
            let key = (random_path(&mut rng, m, l2), random_path(&mut rng, n, l2));
            if seen.insert(key.clone()) {
                let bu = bx.anchor_u.descend(&key.0);
                let tv = bx.anchor_v.descend(&key.1);
                out.push(bx.geodesic(&bu, &tv));
            }
        }
    }
    Ok(out)
}

/// `(n/m)^h`. Weighting vertices by it makes `w(h)·incidences(h)` constant
/// over the heights of any box.
pub fn dl_height_weight(h: i64, m: u32, n: u32) -> f64 {
    if m == n {
        return 1.0;
    }
    (f64::from(n) / f64::from(m)).powi(h as i32)
}

impl Ambient for DlGraph {
    type Point = DlVertex;

    fn distance_bounds(&self, p: &DlVertex, q: &DlVertex) -> (f64, f64) {
        let d = dl_distance_formula(p, q) as f64;
        (d, d)
    }

    fn height(&self, p: &DlVertex) -> f64 {
        p.height() as f64
    }

    fn space_tag(&self) -> SpaceTag {
        SpaceTag::Dl { m: self.m, n: self.n }
    }
}
