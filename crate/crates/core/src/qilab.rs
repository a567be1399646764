//! Synthetic quasi-isometries and the three-step detector.
//!
//! Maps are evaluated lazily: a SOL map is a standard map `(f(x), g(y), z)`
//! (optionally after the flip), sampled on a net and moved by a bounded,
//! hash-seeded perturbation. The detector then
//!
//! 1. fits an orientation and height offset on random sub-boxes of a box,
//! 2. reconciles the local fits into one orientation,
//! 3. fits `f̂, ĝ` by monotone regression and reports the sup distance from
//!    the map to the fitted standard map.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coarse::{is_eps_monotone, QiConstants, C_GRID, K_GRID};
use crate::dl::{dl_neighbors, dl_vertical_family, DlBox, DlGraph, DlVertex, TreeVertex};
use crate::error::{Error, Result};
use crate::sol::{sol_box_vertical_family, sol_distance_bounds, SolBox, SolParams, SolPoint};
use crate::trace::PathTrace;

// ---------------------------------------------------------------------------
// Hashing

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn hash_parts(seed: u64, parts: &[i64]) -> u64 {
    parts.iter().fold(splitmix(seed), |h, &p| splitmix(h ^ p as u64))
}

fn unit(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

// ---------------------------------------------------------------------------
// One-dimensional bilipschitz maps

/// An increasing piecewise-linear homeomorphism of ℝ: linear interpolation
/// through the knots, extended by the end slopes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bilip1D {
    xs: Vec<f64>,
    ys: Vec<f64>,
    left_slope: f64,
    right_slope: f64,
}

impl Bilip1D {
    pub fn identity() -> Self {
        Self { xs: vec![0.0], ys: vec![0.0], left_slope: 1.0, right_slope: 1.0 }
    }

    /// Knots must be strictly increasing in both coordinates. With a single
    /// knot the map is a translation.
    pub fn from_knots(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(Error::Validation("need matching nonempty knot lists".into()));
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::Domain("knots must be finite".into()));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) || ys.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation("knots must be strictly increasing".into()));
        }
        let n = xs.len();
        let (left, right) = if n == 1 {
            (1.0, 1.0)
        } else {
            ((ys[1] - ys[0]) / (xs[1] - xs[0]), (ys[n - 1] - ys[n - 2]) / (xs[n - 1] - xs[n - 2]))
        };
        Ok(Self { xs, ys, left_slope: left, right_slope: right })
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        (&self.xs, &self.ys)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0] + self.left_slope * (x - self.xs[0]);
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1] + self.right_slope * (x - self.xs[n - 1]);
        }
        let i = self.xs.partition_point(|&k| k <= x);
        let (x0, x1, y0, y1) = (self.xs[i - 1], self.xs[i], self.ys[i - 1], self.ys[i]);
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    pub fn slopes(&self) -> Vec<f64> {
        let mut s = vec![self.left_slope];
        s.extend(self.xs.windows(2).zip(self.ys.windows(2)).map(|(x, y)| (y[1] - y[0]) / (x[1] - x[0])));
        s.push(self.right_slope);
        s
    }

    /// The smallest `K` with every slope in `[1/K, K]`.
    pub fn constant(&self) -> f64 {
        self.slopes().iter().map(|&s| s.max(1.0 / s)).fold(1.0, f64::max)
    }
}

/// A random `K`-bilipschitz map with `f(0) = 0` and `count` breakpoints.
/// Breakpoint magnitudes are log-uniform on `[e^{-2}, e^9]` so the map has
/// structure at every scale a box up to `L = 8` sees; slopes are
/// log-uniform on `[1/K, K]`.
pub fn make_bilipschitz_1d(seed: u64, k: f64, count: usize) -> Result<Bilip1D> {
    if !(k >= 1.0 && k.is_finite()) {
        return Err(Error::Range { name: "K", detail: format!("need K ≥ 1, got {k}") });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut breaks: Vec<f64> = (0..count)
        .map(|_| {
            let mag = rng.gen_range(-2.0..9.0f64).exp();
            if rng.gen_bool(0.5) { mag } else { -mag }
        })
        .collect();
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let lk = k.ln();
    let mut slope = || if lk > 0.0 { rng.gen_range(-lk..=lk).exp() } else { 1.0 };
    let slopes: Vec<f64> = (0..=breaks.len()).map(|_| slope()).collect();
    if breaks.is_empty() {
        return Ok(Bilip1D { xs: vec![0.0], ys: vec![0.0], left_slope: slopes[0], right_slope: slopes[0] });
    }
    // integrate from the first breakpoint, then shift so that f(0) = 0
    let mut ys = vec![0.0];
    for i in 1..breaks.len() {
        ys.push(ys[i - 1] + slopes[i] * (breaks[i] - breaks[i - 1]));
    }
    let mut f = Bilip1D { xs: breaks, ys, left_slope: slopes[0], right_slope: slopes[slopes.len() - 1] };
    let f0 = f.eval(0.0);
    for y in &mut f.ys {
        *y -= f0;
    }
    Ok(f)
}

// ---------------------------------------------------------------------------
// Standard maps and nets

/// `(x, y, z) ↦ (f(x), g(y), z)`, or with `flip`, `(f(y), g(x), −z)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardMap {
    pub f: Bilip1D,
    pub g: Bilip1D,
    pub flip: bool,
    /// Added to every image height.
    pub height_offset: f64,
}

pub fn make_standard_map(f: Bilip1D, g: Bilip1D, flip: bool) -> StandardMap {
    StandardMap { f, g, flip, height_offset: 0.0 }
}

impl StandardMap {
    pub fn apply(&self, p: SolPoint) -> SolPoint {
        if self.flip {
            SolPoint::new(self.f.eval(p.y), self.g.eval(p.x), -p.z + self.height_offset)
        } else {
            SolPoint::new(self.f.eval(p.x), self.g.eval(p.y), p.z + self.height_offset)
        }
    }

    pub fn constant(&self) -> f64 {
        self.f.constant().max(self.g.constant())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NetIndex {
    pub k: i64,
    pub i: i64,
    pub j: i64,
}

/// Heights `ks`, and at height `z` an x-grid of horocyclic spacing `s` and a
/// y-grid of horocyclic spacing `s`. Every point is within `1.5·s` of the
/// net, reached by a vertical move and one move along each horocycle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolNet {
    spacing: f64,
    params: SolParams,
}

impl SolNet {
    pub fn new(spacing: f64, params: SolParams) -> Result<Self> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::Range { name: "spacing", detail: format!("{spacing} must be positive") });
        }
        Ok(Self { spacing, params })
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn covering_radius(&self) -> f64 {
        1.5 * self.spacing
    }

    pub fn snap(&self, p: SolPoint) -> NetIndex {
        let s = self.spacing;
        let k = (p.z / s).round() as i64;
        let z = k as f64 * s;
        NetIndex {
            k,
            i: (p.x / (s * (self.params.a() * z).exp())).round() as i64,
            j: (p.y / (s * (-self.params.b() * z).exp())).round() as i64,
        }
    }

    pub fn point(&self, idx: NetIndex) -> SolPoint {
        let s = self.spacing;
        let z = idx.k as f64 * s;
        SolPoint::new(
            idx.i as f64 * s * (self.params.a() * z).exp(),
            idx.j as f64 * s * (-self.params.b() * z).exp(),
            z,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseModel {
    /// A fresh displacement at every net point.
    Independent,
    /// Displacements drawn on a lattice of scale `2C` and interpolated
    /// trilinearly in horocyclic coordinates, so nearby points move together.
    Smooth,
}

/// Displacement `(v_z, v_x, v_y)` with each component in `[−C/3, C/3]`,
/// applied as a vertical move and then moves along the x- and
/// y-horocycles. The path realizing it has length `|v|₁ ≤ C`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Noise {
    pub c: f64,
    pub model: NoiseModel,
    pub seed: u64,
}

impl Noise {
    fn draw(&self, parts: &[i64]) -> [f64; 3] {
        let h = hash_parts(self.seed, parts);
        let third = self.c / 3.0;
        let mut out = [0.0; 3];
        for (slot, salt) in out.iter_mut().zip([1u64, 2, 3]) {
            *slot = third * (2.0 * unit(splitmix(h ^ salt)) - 1.0);
        }
        out
    }

    fn smooth(&self, p: SolPoint, params: SolParams) -> [f64; 3] {
        let lambda = 2.0 * self.c;
        let lz = p.z / lambda;
        let j0 = lz.floor();
        let tz = lz - j0;
        let mut acc = [0.0; 3];
        for (dj, wz) in [(0.0, 1.0 - tz), (1.0, tz)] {
            let zj = (j0 + dj) * lambda;
            let u = p.x / (lambda * (params.a() * zj).exp());
            let w = p.y / (lambda * (-params.b() * zj).exp());
            let (u0, w0) = (u.floor(), w.floor());
            let (tu, tw) = (u - u0, w - w0);
            for (du, wu) in [(0.0, 1.0 - tu), (1.0, tu)] {
                for (dw, ww) in [(0.0, 1.0 - tw), (1.0, tw)] {
                    let weight = wz * wu * ww;
                    if weight == 0.0 {
                        continue;
                    }
                    let v = self.draw(&[(j0 + dj) as i64, (u0 + du) as i64, (w0 + dw) as i64]);
                    for (a, b) in acc.iter_mut().zip(v) {
                        *a += weight * b;
                    }
                }
            }
        }
        acc
    }

    /// The displacement attached to a domain net point.
    pub fn vector(&self, idx: NetIndex, domain: SolPoint, params: SolParams) -> [f64; 3] {
        if self.c == 0.0 {
            return [0.0; 3];
        }
        match self.model {
            NoiseModel::Independent => self.draw(&[idx.k, idx.i, idx.j]),
            NoiseModel::Smooth => self.smooth(domain, params),
        }
    }
}

fn displace(q: SolPoint, v: [f64; 3], params: SolParams) -> SolPoint {
    let z = q.z + v[0];
    SolPoint::new(
        q.x + v[1] * (params.a() * z).exp(),
        q.y + v[2] * (-params.b() * z).exp(),
        z,
    )
}

/// A map known on a net and extended to nearest net points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledMap {
    params: SolParams,
    net: SolNet,
    base: StandardMap,
    noise: Option<Noise>,
    domain_flip: bool,
}

impl SampledMap {
    pub fn new(base: StandardMap, spacing: f64, params: SolParams) -> Result<Self> {
        if base.flip && !params.is_unimodular() {
            return Err(Error::Validation("the flip is an isometry only when a = b".into()));
        }
        Ok(Self { params, net: SolNet::new(spacing, params)?, base, noise: None, domain_flip: false })
    }

    pub fn params(&self) -> SolParams {
        self.params
    }

    pub fn net(&self) -> SolNet {
        self.net
    }

    pub fn base(&self) -> &StandardMap {
        &self.base
    }

    pub fn noise(&self) -> Option<Noise> {
        self.noise
    }

    /// The same map pre-composed with the flip `(x, y, z) ↦ (y, x, −z)`.
    pub fn precompose_flip(&self) -> Result<Self> {
        if !self.params.is_unimodular() {
            return Err(Error::Validation("the flip is an isometry only when a = b".into()));
        }
        let mut out = self.clone();
        out.domain_flip = !out.domain_flip;
        Ok(out)
    }

    fn domain_net(&self, p: SolPoint) -> (NetIndex, SolPoint) {
        let p = if self.domain_flip { p.flipped() } else { p };
        let idx = self.net.snap(p);
        (idx, self.net.point(idx))
    }

    /// The unperturbed image of the net point nearest `p`.
    pub fn base_eval(&self, p: SolPoint) -> SolPoint {
        self.base.apply(self.domain_net(p).1)
    }

    pub fn eval(&self, p: SolPoint) -> SolPoint {
        let (idx, q) = self.domain_net(p);
        let img = self.base.apply(q);
        match &self.noise {
            Some(n) => displace(img, n.vector(idx, q, self.params), self.params),
            None => img,
        }
    }
}

/// Moves every image by at most `C` along a fresh displacement per net point.
pub fn perturb_map(map: &SampledMap, c: f64, seed: u64) -> Result<SampledMap> {
    perturb_map_with(map, c, seed, NoiseModel::Independent)
}

pub fn perturb_map_with(map: &SampledMap, c: f64, seed: u64, model: NoiseModel) -> Result<SampledMap> {
    if !(c >= 0.0 && c.is_finite()) {
        return Err(Error::Range { name: "C", detail: format!("noise must be nonnegative, got {c}") });
    }
    let mut out = map.clone();
    out.noise = if c == 0.0 { None } else { Some(Noise { c, model, seed }) };
    Ok(out)
}

/// Estimated `(K, C)` of the map from all pairs of `points`, with distances
/// taken as interval midpoints between net points; `K` is read from pairs
/// at least `separation` times the largest domain distance apart.
pub fn estimate_map_constants(map: &SampledMap, points: &[SolPoint], separation: f64) -> Result<QiConstants> {
    if points.len() < 2 {
        return Err(Error::Degenerate("need at least two points".into()));
    }
    let params = map.params;
    let dom: Vec<SolPoint> = points.iter().map(|&p| map.domain_net(p).1).collect();
    let img: Vec<SolPoint> = points.iter().map(|&p| map.eval(p)).collect();
    let n = dom.len();
    let pairs: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let (dom, img) = (&dom, &img);
            ((i + 1)..n).map(move |j| {
                (
                    sol_distance_bounds(dom[i], dom[j], params).midpoint(),
                    sol_distance_bounds(img[i], img[j], params).midpoint(),
                )
            })
        })
        .collect();
    let far = separation * pairs.iter().map(|p| p.0).fold(0.0, f64::max);
    let mut k: f64 = 1.0;
    for &(d, e) in &pairs {
        if d >= far && d > 0.0 {
            if e <= 0.0 {
                return Err(Error::Degenerate("map collapses two distant points".into()));
            }
            k = k.max(d / e).max(e / d);
        }
    }
    let k = ((k / K_GRID) - 1e-9).ceil() * K_GRID;
    let k = k.max(1.0);
    let c = pairs.iter().map(|&(d, e)| (d / k - e).max(e - k * d)).fold(0.0, f64::max);
    Ok(QiConstants { k, c: ((c / C_GRID) - 1e-9).ceil().max(0.0) * C_GRID })
}

// ---------------------------------------------------------------------------
// DL maps

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DlNoise {
    /// Moves to a sibling in one tree, two edges each; heights are kept.
    Horizontal,
    /// A random walk along edges.
    Walk,
}

/// The identity of `DL(m, n)`, or for `m = n` the swap `(u, v) ↦ (v, u)`,
/// followed by at most `steps` edges of hash-seeded noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DlMap {
    domain: DlGraph,
    swap: bool,
    steps: u32,
    model: DlNoise,
    seed: u64,
}

impl DlMap {
    pub fn new(domain: DlGraph, swap: bool) -> Result<Self> {
        if swap && domain.m() != domain.n() {
            return Err(Error::Validation(format!(
                "the swap maps DL({0}, {1}) to DL({1}, {0}), not to itself",
                domain.m(),
                domain.n()
            )));
        }
        Ok(Self { domain, swap, steps: 0, model: DlNoise::Horizontal, seed: 0 })
    }

    pub fn with_noise(mut self, steps: u32, model: DlNoise, seed: u64) -> Self {
        self.steps = steps;
        self.model = model;
        self.seed = seed;
        self
    }

    pub fn domain(&self) -> DlGraph {
        self.domain
    }

    pub fn target(&self) -> DlGraph {
        self.domain
    }

    pub fn apply(&self, p: &DlVertex) -> DlVertex {
        let mut q = if self.swap { DlVertex { u: p.v.clone(), v: p.u.clone() } } else { p.clone() };
        if self.steps == 0 {
            return q;
        }
        let mut key = vec![p.u.h];
        key.extend(p.u.branch.iter().map(|&d| i64::from(d)));
        key.push(-1);
        key.extend(p.v.branch.iter().map(|&d| i64::from(d)));
        let mut rng = ChaCha8Rng::seed_from_u64(hash_parts(self.seed, &key));
        let target = self.target();
        let (m, n) = (target.m(), target.n());
        match self.model {
            DlNoise::Walk => {
                for _ in 0..self.steps {
                    let ns = dl_neighbors(&target, &q);
                    q = ns[rng.gen_range(0..ns.len())].clone();
                }
            }
            DlNoise::Horizontal => {
                for _ in 0..self.steps / 2 {
                    if rng.gen_bool(0.5) {
                        q.u = q.u.parent().child(rng.gen_range(0..m) as u8);
                    } else {
                        q.v = q.v.parent().child(rng.gen_range(0..n) as u8);
                    }
                }
            }
        }
        q
    }
}

// ---------------------------------------------------------------------------
// The detector

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    Up,
    Down,
}

impl Orientation {
    pub fn flipped(self) -> Self {
        match self {
            Orientation::Up => Orientation::Down,
            Orientation::Down => Orientation::Up,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    /// Half-height `R` of the sub-boxes; must divide the box half-height.
    pub sub_half_height: f64,
    pub eps: f64,
    pub theta: f64,
    /// Distinct sub-boxes sampled in step 1.
    pub tiles: usize,
    pub traces_per_tile: usize,
    /// Net points at which step 3 measures the sup distance.
    pub probes: usize,
    pub seed: u64,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self { sub_half_height: 2.0, eps: 0.1, theta: 0.1, tiles: 48, traces_per_tile: 16, probes: 2000, seed: 0 }
    }
}

impl StepConfig {
    fn validate(&self) -> Result<()> {
        if !(self.sub_half_height > 0.0 && self.sub_half_height.is_finite()) {
            return Err(Error::Range { name: "R", detail: format!("{} must be positive", self.sub_half_height) });
        }
        if !(self.eps > 0.0 && self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::Range { name: "eps, theta", detail: "need eps > 0 and 0 < theta < 1".into() });
        }
        if self.tiles == 0 || self.traces_per_tile == 0 || self.probes == 0 {
            return Err(Error::Range { name: "tiles", detail: "counts must be at least 1".into() });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalFit {
    pub tile: usize,
    pub center_height: f64,
    pub orientation: Orientation,
    /// Median of `h(φ(p)) ∓ h(p)` over the passing traces.
    pub height_offset: f64,
    /// Fraction of the tile's traces whose images are ε-monotone.
    pub mass_fraction: f64,
    /// `mass_fraction ≥ 1 − θ`.
    pub fit: bool,
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
}

/// Per-trace outcome: (monotone, oriented up, offset at the midpoint).
type TraceOutcome = (bool, bool, f64);

fn summarize(tile: usize, center_height: f64, outcomes: &[TraceOutcome], theta: f64) -> LocalFit {
    let passing: Vec<&TraceOutcome> = outcomes.iter().filter(|o| o.0).collect();
    let pool: Vec<&TraceOutcome> = if passing.is_empty() { outcomes.iter().collect() } else { passing.clone() };
    let ups = pool.iter().filter(|o| o.1).count();
    let orientation = if 2 * ups >= pool.len() { Orientation::Up } else { Orientation::Down };
    let up = orientation == Orientation::Up;
    let mut offs: Vec<f64> = pool.iter().filter(|o| o.1 == up).map(|o| o.2).collect();
    let mass = passing.len() as f64 / outcomes.len() as f64;
    LocalFit {
        tile,
        center_height,
        orientation,
        height_offset: median(&mut offs),
        mass_fraction: mass,
        fit: mass >= 1.0 - theta,
    }
}

fn slab_count(big: f64, small: f64) -> Result<usize> {
    let ratio = big / small;
    if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
        return Err(Error::Validation(format!("sub-box half-height {small} must divide {big}")));
    }
    Ok(ratio.round() as usize)
}

/// Step 1 on a SOL box: sample sub-boxes of half-height `R` by Haar points,
/// push a vertical family of each through the map and record orientation,
/// height offset and the fraction of ε-monotone images.
pub fn step1_local_fit(map: &SampledMap, bx: &SolBox, cfg: &StepConfig) -> Result<Vec<LocalFit>> {
    cfg.validate()?;
    let params = map.params;
    let r = cfg.sub_half_height;
    let l = bx.half_height;
    let slabs = slab_count(l, r)?;
    if map.net.covering_radius() > r / 10.0 {
        return Err(Error::Precondition(format!(
            "net too coarse: covering radius {} exceeds R/10 = {}",
            map.net.covering_radius(),
            r / 10.0
        )));
    }
    // tiles: slab i covers local heights [−L + 2Ri, −L + 2R(i+1)), split
    // horizontally into translates of [−e^R, e^R]² at the slab center
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let w = bx.half_width();
    let mut tiles: Vec<(usize, i64, i64)> = Vec::new();
    let mut attempts = 0;
    while tiles.len() < cfg.tiles && attempts < 20 * cfg.tiles {
        attempts += 1;
        let p = bx.to_local(bx.sample_point(&mut rng, params), params);
        let i = (((p.z + l) / (2.0 * r)).floor() as usize).min(slabs - 1);
        let zc = -l + (2 * i + 1) as f64 * r;
        let wx = 2.0 * r.exp() * (params.a() * zc).exp();
        let wy = 2.0 * r.exp() * (-params.b() * zc).exp();
        let key = (i, ((p.x + w) / wx).floor() as i64, ((p.y + w) / wy).floor() as i64);
        if !tiles.contains(&key) {
            tiles.push(key);
        }
    }
    let samples = ((2.0 * r) / (0.5 * map.net.spacing)).ceil() as usize + 1;
    tiles
        .par_iter()
        .enumerate()
        .map(|(t, &(i, ix, iy))| {
            let zc = -l + (2 * i + 1) as f64 * r;
            let wx = 2.0 * r.exp() * (params.a() * zc).exp();
            let wy = 2.0 * r.exp() * (-params.b() * zc).exp();
            let local = SolPoint::new(-w + (ix as f64 + 0.5) * wx, -w + (iy as f64 + 0.5) * wy, zc);
            let sub = SolBox::new(bx.to_world(local, params), r)?;
            let seed = hash_parts(cfg.seed, &[t as i64]);
            let fam = sol_box_vertical_family(&sub, cfg.traces_per_tile, seed, params)?;
            let outcomes = fam
                .iter()
                .map(|seg| {
                    let tr = seg.trace(samples)?;
                    let img = tr.map_points(|p| map.eval(*p));
                    let mono = is_eps_monotone(&params, &img, cfg.eps)?.monotone;
                    let pts = img.points();
                    let up = pts[pts.len() - 1].z > pts[0].z;
                    let mid = pts.len() / 2;
                    let h = tr.points()[mid].z;
                    let off = if up { pts[mid].z - h } else { pts[mid].z + h };
                    Ok((mono, up, off))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(summarize(t, sub.center.z, &outcomes, cfg.theta))
        })
        .collect()
}

fn random_box_vertex<R: Rng>(bx: &DlBox, rng: &mut R) -> DlVertex {
    let heights: Vec<i64> = (bx.bottom()..=bx.top()).collect();
    let weights: Vec<f64> = heights.iter().map(|&h| bx.slice_count(h) as f64).collect();
    let h = heights[WeightedIndex::new(&weights).expect("nonempty box").sample(rng)];
    let (au, av) = bx.anchors();
    let g = bx.graph();
    let pu: Vec<u8> = (0..(au.h - h)).map(|_| rng.gen_range(0..g.m()) as u8).collect();
    let pv: Vec<u8> = (0..(av.h + h)).map(|_| rng.gen_range(0..g.n()) as u8).collect();
    DlVertex { u: au.descend(&pu), v: av.descend(&pv) }
}

/// Step 1 on a DL box, with sub-boxes sampled by counting measure.
pub fn step1_local_fit_dl(map: &DlMap, bx: &DlBox, cfg: &StepConfig) -> Result<Vec<LocalFit>> {
    cfg.validate()?;
    if bx.graph() != map.domain {
        return Err(Error::Validation("box and map live in different graphs".into()));
    }
    let r = cfg.sub_half_height;
    if r.fract() != 0.0 {
        return Err(Error::Validation(format!("DL sub-box half-height must be an integer, got {r}")));
    }
    let ri = r as i64;
    let slabs = slab_count(f64::from(bx.half_height()), r)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut tiles: Vec<(i64, TreeVertex, TreeVertex)> = Vec::new();
    let mut attempts = 0;
    while tiles.len() < cfg.tiles && attempts < 20 * cfg.tiles {
        attempts += 1;
        let p = random_box_vertex(bx, &mut rng);
        let i = (((p.height() - bx.bottom()) / (2 * ri)) as usize).min(slabs - 1) as i64;
        let c = bx.bottom() + 2 * ri * i + ri;
        let key = (c, p.u.ancestor(c + ri), p.v.ancestor(-c + ri));
        if !tiles.contains(&key) {
            tiles.push(key);
        }
    }
    let target = map.target();
    tiles
        .par_iter()
        .enumerate()
        .map(|(t, (c, au, av))| {
            let sub = DlBox::new(bx.graph(), ri as u32, au.clone(), av.clone())?;
            let seed = hash_parts(cfg.seed, &[t as i64]);
            let fam = dl_vertical_family(&sub, cfg.traces_per_tile, seed)?;
            let outcomes = fam
                .iter()
                .map(|path| {
                    let params: Vec<f64> = (0..path.len()).map(|k| k as f64).collect();
                    let img = PathTrace::new(params, path.iter().map(|p| map.apply(p)).collect())?;
                    let mono = is_eps_monotone(&target, &img, cfg.eps)?.monotone;
                    let pts = img.points();
                    let up = pts[pts.len() - 1].height() > pts[0].height();
                    let mid = pts.len() / 2;
                    let h = path[mid].height() as f64;
                    let hi = pts[mid].height() as f64;
                    Ok((mono, up, if up { hi - h } else { hi + h }))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(summarize(t, *c as f64, &outcomes, cfg.theta))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum WeightScheme {
    Uniform,
    /// `w(h) = (n/m)^h` at each sub-box's center height.
    DlHeight { m: u32, n: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reconciliation {
    pub orientation: Orientation,
    /// Weighted share of the fitted tiles agreeing with `orientation`.
    pub consistency: f64,
    /// A Down majority under height weights with `m ≠ n`: no
    /// orientation-reversing QI of such a graph exists.
    pub hard_inconsistency: bool,
    pub height_offset: f64,
    pub tiles_used: usize,
}

/// Step 2: the weighted majority orientation over tiles that passed step 1.
/// Exact ties go to Up.
pub fn step2_reconcile(fits: &[LocalFit], scheme: WeightScheme) -> Result<Reconciliation> {
    if fits.is_empty() {
        return Err(Error::Degenerate("no local fits to reconcile".into()));
    }
    let weight = |f: &LocalFit| match scheme {
        WeightScheme::Uniform => 1.0,
        WeightScheme::DlHeight { m, n } => (f64::from(n) / f64::from(m)).powf(f.center_height),
    };
    let used: Vec<&LocalFit> = fits.iter().filter(|f| f.fit).collect();
    let (mut up, mut down) = (0.0, 0.0);
    for f in &used {
        match f.orientation {
            Orientation::Up => up += weight(f),
            Orientation::Down => down += weight(f),
        }
    }
    let orientation = if up >= down { Orientation::Up } else { Orientation::Down };
    let total = up + down;
    let consistency = if total > 0.0 { up.max(down) / total } else { 0.0 };
    let mut offs: Vec<f64> = used.iter().filter(|f| f.orientation == orientation).map(|f| f.height_offset).collect();
    let hard = matches!(scheme, WeightScheme::DlHeight { m, n } if m != n) && orientation == Orientation::Down;
    Ok(Reconciliation {
        orientation,
        consistency,
        hard_inconsistency: hard,
        height_offset: median(&mut offs),
        tiles_used: used.len(),
    })
}

/// Consistency below which step 3 refuses to fit.
pub const MIN_CONSISTENCY: f64 = 0.8;

/// Pool-adjacent-violators: the non-decreasing least-squares fit to `ys`
/// (equal weights), as `(first index, last index, value)` blocks.
pub fn pava(ys: &[f64]) -> Vec<(usize, usize, f64)> {
    let mut blocks: Vec<(usize, usize, f64, f64)> = Vec::new(); // lo, hi, sum, count
    for (i, &y) in ys.iter().enumerate() {
        blocks.push((i, i, y, 1.0));
        while blocks.len() > 1 {
            let n = blocks.len();
            let (a, b) = (blocks[n - 2], blocks[n - 1]);
            if a.2 / a.3 < b.2 / b.3 {
                break;
            }
            blocks.truncate(n - 2);
            blocks.push((a.0, b.1, a.2 + b.2, a.3 + b.3));
        }
    }
    blocks.into_iter().map(|(lo, hi, s, c)| (lo, hi, s / c)).collect()
}

/// Monotone regression of `(x, y)` samples into a [`Bilip1D`]: one knot per
/// PAVA block at the block's mean abscissa.
pub fn fit_monotone(mut samples: Vec<(f64, f64)>) -> Result<Bilip1D> {
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    samples.dedup_by(|a, b| a.0 == b.0);
    let ys: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let (mut kx, mut ky) = (Vec::new(), Vec::new());
    for (lo, hi, v) in pava(&ys) {
        kx.push(samples[lo..=hi].iter().map(|s| s.0).sum::<f64>() / (hi - lo + 1) as f64);
        ky.push(v);
    }
    Bilip1D::from_knots(kx, ky)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardFit {
    pub map: StandardMap,
    /// Largest certified upper bound on `d(φ(p), φ̂(p))` over the probes.
    pub sup_distance: f64,
    pub probes: usize,
}

/// Step 3: fit `f̂, ĝ` along the horocycles where the image coordinate is
/// least affected by noise (the bottom of the box for the coordinate
/// contracted upward, the top for the other) and measure the sup distance
/// over Haar-sampled net points.
pub fn step3_fit_standard(
    map: &SampledMap,
    recon: &Reconciliation,
    bx: &SolBox,
    cfg: &StepConfig,
) -> Result<StandardFit> {
    cfg.validate()?;
    if recon.hard_inconsistency {
        return Err(Error::Classification("orientation-reversing majority under height weights".into()));
    }
    if recon.consistency < MIN_CONSISTENCY {
        return Err(Error::Precondition(format!(
            "consistency {:.3} below {MIN_CONSISTENCY}; refusing to fit a standard map",
            recon.consistency
        )));
    }
    let params = map.params;
    let flip = recon.orientation == Orientation::Down;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED);
    let probes: Vec<SolPoint> = (0..cfg.probes)
        .map(|_| map.net.point(map.net.snap(bx.sample_point(&mut rng, params))))
        .collect();
    let c = bx.center;
    let (z_lo, z_hi) = (c.z - bx.half_height, c.z + bx.half_height);
    let span = bx.half_width();
    let grid = |center: f64, scale: f64| -> Vec<f64> {
        (0..=64).map(|k| center + scale * span * (k as f64 / 32.0 - 1.0)).collect()
    };
    let x_scale = (params.a() * c.z).exp();
    let y_scale = (-params.b() * c.z).exp();
    let mut xs: Vec<f64> = probes.iter().map(|p| p.x).chain(grid(c.x, x_scale)).collect();
    let mut ys: Vec<f64> = probes.iter().map(|p| p.y).chain(grid(c.y, y_scale)).collect();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    // image x is f(domain x) unflipped, f(domain y) flipped; its noise is
    // smallest where the image height is lowest, and symmetrically for y
    let (f_samples, g_samples): (Vec<(f64, f64)>, Vec<(f64, f64)>) = if flip {
        (
            ys.iter().map(|&y| (y, map.eval(SolPoint::new(c.x, y, z_hi)).x)).collect(),
            xs.iter().map(|&x| (x, map.eval(SolPoint::new(x, c.y, z_lo)).y)).collect(),
        )
    } else {
        (
            xs.iter().map(|&x| (x, map.eval(SolPoint::new(x, c.y, z_lo)).x)).collect(),
            ys.iter().map(|&y| (y, map.eval(SolPoint::new(c.x, y, z_hi)).y)).collect(),
        )
    };
    let fitted = StandardMap {
        f: fit_monotone(f_samples)?,
        g: fit_monotone(g_samples)?,
        flip,
        height_offset: recon.height_offset,
    };
    let sup = probes
        .par_iter()
        .map(|&p| sol_distance_bounds(map.eval(p), fitted.apply(p), params).upper)
        .reduce(|| 0.0, f64::max);
    Ok(StandardFit { map: fitted, sup_distance: sup, probes: probes.len() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub local: Vec<LocalFit>,
    pub reconciliation: Reconciliation,
    pub fit: Option<StandardFit>,
    /// Why step 3 did not run, if it did not.
    pub refused: Option<String>,
}

/// Steps 1 to 3 on a SOL map. A refusal in step 3 is reported, not raised.
pub fn detect_sol(map: &SampledMap, bx: &SolBox, cfg: &StepConfig) -> Result<Detection> {
    let local = step1_local_fit(map, bx, cfg)?;
    let reconciliation = step2_reconcile(&local, WeightScheme::Uniform)?;
    let (fit, refused) = match step3_fit_standard(map, &reconciliation, bx, cfg) {
        Ok(f) => (Some(f), None),
        Err(e @ (Error::Precondition(_) | Error::Classification(_))) => (None, Some(e.to_string())),
        Err(e) => return Err(e),
    };
    Ok(Detection { local, reconciliation, fit, refused })
}

/// Steps 1 and 2 on a DL map, height-weighted when `m ≠ n`.
pub fn detect_dl(map: &DlMap, bx: &DlBox, cfg: &StepConfig) -> Result<Detection> {
    let local = step1_local_fit_dl(map, bx, cfg)?;
    let g = map.domain;
    let scheme = if g.m() == g.n() { WeightScheme::Uniform } else { WeightScheme::DlHeight { m: g.m(), n: g.n() } };
    let reconciliation = step2_reconcile(&local, scheme)?;
    let refused = reconciliation
        .hard_inconsistency
        .then(|| "orientation-reversing majority under height weights".to_string());
    Ok(Detection { local, reconciliation, fit: None, refused })
}

/// Spearman rank correlation, ties given their average rank.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Validation("need two equal-length samples of size ≥ 2".into()));
    }
    let rx = ranks(x);
    let ry = ranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("a constant sample has no rank correlation".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}
