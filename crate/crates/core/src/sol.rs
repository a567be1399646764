//! The solvable Lie groups `G_{a,b} = ℝ ⋉ ℝ²` with `z·(x, y) = (e^{az}x, e^{-bz}y)`.
//!
//! Group law `(x₁, y₁, z₁)·(x₂, y₂, z₂) = (x₁ + e^{az₁}x₂, y₁ + e^{-bz₁}y₂, z₁ + z₂)`
//! with left-invariant metric `dz² + e^{-2az}dx² + e^{2bz}dy²`. SOL itself is
//! `a = b = 1/2`, where the law is the product of the matrices
//!
//! ```text
//! ⎡ e^{z/2}  x  0       ⎤
//! ⎢ 0        1  0       ⎥
//! ⎣ 0        y  e^{-z/2}⎦
//! ```
//!
//! There is no closed-form distance, so distances are certified intervals:
//! the lower end is the larger of the two leaf projections (each projection
//! onto a totally geodesic hyperbolic leaf is 1-lipschitz), the upper end is
//! the shortest of four two-leg staircase paths.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::hplane::{leaf_distance, leaf_geodesic_point, HPoint};
use crate::trace::{Ambient, PathTrace, SpaceTag};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolParams {
    a: f64,
    b: f64,
}

impl SolParams {
    pub const STANDARD: SolParams = SolParams { a: 0.5, b: 0.5 };

    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0) {
            return Err(Error::Range {
                name: "a, b",
                detail: format!("exponents must be positive, got a={a}, b={b}"),
            });
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn is_unimodular(&self) -> bool {
        self.a == self.b
    }

    /// Density of left Haar measure with respect to `dx dy dz`.
    pub fn haar_density(&self, z: f64) -> f64 {
        ((self.b - self.a) * z).exp()
    }
}

impl Default for SolParams {
    fn default() -> Self {
        Self::STANDARD
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl SolPoint {
    pub const IDENTITY: SolPoint = SolPoint { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn height(&self) -> f64 {
        self.z
    }

    /// The isometry `(x, y, z) ↦ (y, x, −z)` of the unimodular groups.
    pub fn flipped(&self) -> Self {
        Self::new(self.y, self.x, -self.z)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

pub fn sol_compose(p: SolPoint, q: SolPoint, params: SolParams) -> SolPoint {
    SolPoint::new(
        p.x + (params.a * p.z).exp() * q.x,
        p.y + (-params.b * p.z).exp() * q.y,
        p.z + q.z,
    )
}

pub fn sol_inverse(p: SolPoint, params: SolParams) -> SolPoint {
    SolPoint::new(
        -(-params.a * p.z).exp() * p.x,
        -(params.b * p.z).exp() * p.y,
        -p.z,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    XZ,
    YZ,
}

/// Projection to a hyperbolic leaf. The YZ plane is upside-down, so it is
/// returned with the height negated.
pub fn sol_project(p: SolPoint, axis: Axis) -> HPoint {
    match axis {
        Axis::XZ => HPoint::new(p.x, p.z),
        Axis::YZ => HPoint::new(p.y, -p.z),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceBounds {
    pub lower: f64,
    pub upper: f64,
}

impl DistanceBounds {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn contains(&self, d: f64, tol: f64) -> bool {
        d >= self.lower - tol && d <= self.upper + tol
    }
}

/// The four staircase shapes. `XFirst`/`YFirst` change height on the first
/// leg; the `ClimbLast` variants travel the first leg at the starting height.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StaircaseOrder {
    XFirst,
    YFirst,
    XFirstClimbLast,
    YFirstClimbLast,
}

impl StaircaseOrder {
    pub const ALL: [StaircaseOrder; 4] = [
        StaircaseOrder::XFirst,
        StaircaseOrder::YFirst,
        StaircaseOrder::XFirstClimbLast,
        StaircaseOrder::YFirstClimbLast,
    ];
}

/// A geodesic inside one hyperbolic leaf.
#[derive(Clone, Copy, Debug)]
enum Leg {
    /// In the leaf `y = c`, coordinates `(x, z)`.
    X { c: f64, from: HPoint, to: HPoint },
    /// In the leaf `x = c`, coordinates `(y, −z)`.
    Y { c: f64, from: HPoint, to: HPoint },
}

impl Leg {
    fn length(&self, params: SolParams) -> f64 {
        match *self {
            Leg::X { from, to, .. } => leaf_distance(from, to, params.a),
            Leg::Y { from, to, .. } => leaf_distance(from, to, params.b),
        }
    }

    fn point(&self, s: f64, params: SolParams) -> SolPoint {
        match *self {
            Leg::X { c, from, to } => {
                let h = leaf_geodesic_point(from, to, s, params.a);
                SolPoint::new(h.x, c, h.z)
            }
            Leg::Y { c, from, to } => {
                let h = leaf_geodesic_point(from, to, s, params.b);
                SolPoint::new(c, h.x, -h.z)
            }
        }
    }
}

fn staircase_legs(p: SolPoint, q: SolPoint, order: StaircaseOrder) -> [Leg; 2] {
    use StaircaseOrder::*;
    match order {
        XFirst => [
            Leg::X { c: p.y, from: HPoint::new(p.x, p.z), to: HPoint::new(q.x, q.z) },
            Leg::Y { c: q.x, from: HPoint::new(p.y, -q.z), to: HPoint::new(q.y, -q.z) },
        ],
        YFirst => [
            Leg::Y { c: p.x, from: HPoint::new(p.y, -p.z), to: HPoint::new(q.y, -q.z) },
            Leg::X { c: q.y, from: HPoint::new(p.x, q.z), to: HPoint::new(q.x, q.z) },
        ],
        XFirstClimbLast => [
            Leg::X { c: p.y, from: HPoint::new(p.x, p.z), to: HPoint::new(q.x, p.z) },
            Leg::Y { c: q.x, from: HPoint::new(p.y, -p.z), to: HPoint::new(q.y, -q.z) },
        ],
        YFirstClimbLast => [
            Leg::Y { c: p.x, from: HPoint::new(p.y, -p.z), to: HPoint::new(q.y, -p.z) },
            Leg::X { c: q.y, from: HPoint::new(p.x, p.z), to: HPoint::new(q.x, q.z) },
        ],
    }
}

pub fn staircase_length(p: SolPoint, q: SolPoint, order: StaircaseOrder, params: SolParams) -> f64 {
    staircase_legs(p, q, order)
        .iter()
        .map(|l| l.length(params))
        .sum()
}

pub fn sol_distance_bounds(p: SolPoint, q: SolPoint, params: SolParams) -> DistanceBounds {
    let d1 = leaf_distance(sol_project(p, Axis::XZ), sol_project(q, Axis::XZ), params.a);
    let d2 = leaf_distance(sol_project(p, Axis::YZ), sol_project(q, Axis::YZ), params.b);
    let lower = d1.max(d2);
    let upper = StaircaseOrder::ALL
        .iter()
        .map(|&o| staircase_length(p, q, o, params))
        .fold(f64::INFINITY, f64::min)
        .max(lower);
    DistanceBounds { lower, upper }
}

/// Arclength-parametrized two-leg staircase from `p` to `q`.
///
/// When `p == q` the result is the constant single-sample trace.
pub fn sol_staircase(
    p: SolPoint,
    q: SolPoint,
    order: StaircaseOrder,
    samples: usize,
    params: SolParams,
) -> Result<PathTrace<SolPoint>> {
    ensure_finite(&[p.x, p.y, p.z, q.x, q.y, q.z], "staircase endpoints")?;
    if samples < 2 {
        return Err(Error::Range { name: "samples", detail: format!("{samples} < 2") });
    }
    let legs = staircase_legs(p, q, order);
    let l1 = legs[0].length(params);
    let l2 = legs[1].length(params);
    let total = l1 + l2;
    if total == 0.0 {
        return PathTrace::new(vec![0.0], vec![p]);
    }
    PathTrace::sample(0.0, total, samples, |t| {
        if t >= total {
            q
        } else if t <= l1 && l1 > 0.0 {
            legs[0].point(t / l1, params)
        } else {
            legs[1].point(((t - l1) / l2).clamp(0.0, 1.0), params)
        }
    })
}

/// `(x₀, y₀, z₀ ± t)`.
pub fn sol_vertical_point(base: SolPoint, oriented_up: bool, t: f64) -> Result<SolPoint> {
    if !(t >= 0.0) {
        return Err(Error::Range { name: "t", detail: format!("{t} < 0") });
    }
    let dz = if oriented_up { t } else { -t };
    Ok(SolPoint::new(base.x, base.y, base.z + dz))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Refined {
    pub value: f64,
    pub converged: bool,
    pub bounds: DistanceBounds,
}

type State = [f64; 6];

fn geodesic_rhs(s: &State, params: SolParams) -> State {
    let ea = (2.0 * params.a * s[2]).exp();
    let eb = (-2.0 * params.b * s[2]).exp();
    [
        ea * s[3],
        eb * s[4],
        s[5],
        0.0,
        0.0,
        -(params.a * ea * s[3] * s[3] - params.b * eb * s[4] * s[4]),
    ]
}

/// Endpoint at time 1 of the geodesic from the identity with initial
/// covector `cov`; `p_x` and `p_y` are conserved.
fn shoot(cov: [f64; 3], steps: usize, params: SolParams) -> [f64; 3] {
    let mut s: State = [0.0, 0.0, 0.0, cov[0], cov[1], cov[2]];
    let h = 1.0 / steps as f64;
    let add = |s: &State, k: &State, f: f64| -> State {
        let mut o = *s;
        for i in 0..6 {
            o[i] += f * k[i];
        }
        o
    };
    for _ in 0..steps {
        let k1 = geodesic_rhs(&s, params);
        let k2 = geodesic_rhs(&add(&s, &k1, h / 2.0), params);
        let k3 = geodesic_rhs(&add(&s, &k2, h / 2.0), params);
        let k4 = geodesic_rhs(&add(&s, &k3, h), params);
        for i in 0..6 {
            s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    [s[0], s[1], s[2]]
}

fn residual(cov: [f64; 3], target: SolPoint, steps: usize, params: SolParams) -> [f64; 3] {
    let e = shoot(cov, steps, params);
    [e[0] - target.x, e[1] - target.y, e[2] - target.z]
}

fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn solve3(m: [[f64; 3]; 3], r: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(m);
    if d.abs() < 1e-300 || !d.is_finite() {
        return None;
    }
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let mut mc = m;
        for row in 0..3 {
            mc[row][c] = r[row];
        }
        *o = det(mc) / d;
    }
    Some(out)
}

fn newton_shoot(mut cov: [f64; 3], target: SolPoint, steps: usize, params: SolParams) -> Option<f64> {
    let scale = 1.0 + norm3([target.x, target.y, target.z]);
    let mut f = residual(cov, target, steps, params);
    for _ in 0..60 {
        let fnorm = norm3(f);
        if !fnorm.is_finite() {
            return None;
        }
        if fnorm < 1e-10 * scale {
            return Some(norm3(cov));
        }
        let mut jac = [[0.0; 3]; 3];
        for c in 0..3 {
            let h = 1e-7 * (1.0 + cov[c].abs());
            let mut cp = cov;
            cp[c] += h;
            let fp = residual(cp, target, steps, params);
            for row in 0..3 {
                jac[row][c] = (fp[row] - f[row]) / h;
            }
        }
        let delta = solve3(jac, f)?;
        let mut step = 1.0;
        let mut improved = false;
        for _ in 0..40 {
            let trial = [
                cov[0] - step * delta[0],
                cov[1] - step * delta[1],
                cov[2] - step * delta[2],
            ];
            let ft = residual(trial, target, steps, params);
            if norm3(ft) < fnorm {
                cov = trial;
                f = ft;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            return None;
        }
    }
    None
}

/// Sharpens the certified interval by geodesic shooting with `budget` RK4
/// steps. The result never leaves `[lower, upper]`; when shooting fails the
/// upper bound is returned with `converged = false`.
pub fn sol_distance_refine(p: SolPoint, q: SolPoint, params: SolParams, budget: usize) -> Result<Refined> {
    if budget < 1 {
        return Err(Error::Range { name: "budget", detail: "must be at least 1".into() });
    }
    let bounds = sol_distance_bounds(p, q, params);
    if bounds.upper - bounds.lower <= 1e-12 * (1.0 + bounds.upper) {
        return Ok(Refined { value: bounds.upper, converged: true, bounds });
    }
    let target = sol_compose(sol_inverse(p, params), q, params);
    let mut best: Option<f64> = None;
    for zbar in [0.5 * target.z, 0.0, target.z] {
        let guess = [
            target.x * (-2.0 * params.a * zbar).exp(),
            target.y * (2.0 * params.b * zbar).exp(),
            target.z,
        ];
        if let Some(len) = newton_shoot(guess, target, budget, params) {
            if bounds.contains(len, 1e-9 * (1.0 + bounds.upper)) {
                best = Some(best.map_or(len, |b: f64| b.min(len)));
            }
        }
    }
    Ok(match best {
        Some(v) => Refined {
            value: v.clamp(bounds.lower, bounds.upper),
            converged: true,
            bounds,
        },
        None => Refined { value: bounds.upper, converged: false, bounds },
    })
}

impl Ambient for SolParams {
    type Point = SolPoint;

    fn distance_bounds(&self, p: &SolPoint, q: &SolPoint) -> (f64, f64) {
        let b = sol_distance_bounds(*p, *q, *self);
        (b.lower, b.upper)
    }

    fn height(&self, p: &SolPoint) -> f64 {
        p.z
    }

    fn space_tag(&self) -> SpaceTag {
        SpaceTag::Sol { a: self.a, b: self.b }
    }
}

// ---------------------------------------------------------------------------
// Quadrilaterals

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairingCase {
    UpwardPairing,
    DownwardPairing,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadrilateralVerdict {
    pub case: PairingCase,
    /// Largest observed horocycle deviation (the empirical `C₁`).
    pub deviation: f64,
}

/// Distance from `p` to the x-horocycle `{(s, r.y, r.z)}`. The projection to
/// the YZ leaf is 1-lipschitz and attained at `s = p.x`, so this is exact.
pub fn distance_to_x_horocycle(p: SolPoint, r: SolPoint, params: SolParams) -> f64 {
    leaf_distance(sol_project(p, Axis::YZ), sol_project(r, Axis::YZ), params.b)
}

pub fn distance_to_y_horocycle(p: SolPoint, r: SolPoint, params: SolParams) -> f64 {
    leaf_distance(sol_project(p, Axis::XZ), sol_project(r, Axis::XZ), params.a)
}

/// Divergence constant in the quadrilateral hypothesis `d ≥ t/10 − C`.
pub const DIVERGENCE_RATE: f64 = 0.1;

/// Classifies a quadrilateral with corners `p₁, p₂` (start side) and `q₁, q₂`
/// (end side), where `segs[2i + j]` runs from near `pᵢ` to near `qⱼ`.
///
/// Upward segments spread apart in `y` and converge in `x`, so in the upward
/// case `p₂` sits near the x-horocycle of `p₁` and `q₂` near the y-horocycle
/// of `q₁`; the downward case is the mirror image under the flip.
pub fn sol_classify_quadrilateral(
    corners: [SolPoint; 4],
    segs: [&PathTrace<SolPoint>; 4],
    c: f64,
    params: SolParams,
) -> Result<QuadrilateralVerdict> {
    let [p1, p2, q1, q2] = corners;
    let starts = [p1, p1, p2, p2];
    let ends = [q1, q2, q1, q2];
    let names = ["γ11", "γ12", "γ21", "γ22"];
    for k in 0..4 {
        let s = segs[k];
        let first = s.points()[0];
        let last = s.points()[s.len() - 1];
        let d0 = sol_distance_bounds(first, starts[k], params).upper;
        if d0 > c {
            return Err(Error::Precondition(format!(
                "{} starts {d0:.6} from its corner, more than C = {c}",
                names[k]
            )));
        }
        let d1 = sol_distance_bounds(last, ends[k], params).upper;
        if d1 > c {
            return Err(Error::Precondition(format!(
                "{} ends {d1:.6} from its corner, more than C = {c}",
                names[k]
            )));
        }
    }
    for i in 0..2 {
        let (a, b) = (segs[2 * i], segs[2 * i + 1]);
        let t0a = a.start();
        let t0b = b.start();
        let reach = a.span().min(b.span());
        for (&t, pa) in a.params().iter().zip(a.points()) {
            let rel = t - t0a;
            if rel > reach {
                break;
            }
            let pb = b.point_at(t0b + rel);
            let d = sol_distance_bounds(*pa, *pb, params).upper;
            if d < DIVERGENCE_RATE * rel - c {
                return Err(Error::Precondition(format!(
                    "segments leaving p{} do not diverge: d = {d:.6} at t = {rel:.6}",
                    i + 1
                )));
            }
        }
    }
    let votes: Vec<Option<bool>> = segs
        .iter()
        .map(|s| {
            let dz = s.points()[s.len() - 1].z - s.points()[0].z;
            if dz > 0.0 {
                Some(true)
            } else if dz < 0.0 {
                Some(false)
            } else {
                None
            }
        })
        .collect();
    let ups = votes.iter().filter(|v| **v == Some(true)).count();
    let downs = votes.iter().filter(|v| **v == Some(false)).count();
    let case = match (ups, downs) {
        (u, 0) if u > 0 => PairingCase::UpwardPairing,
        (0, d) if d > 0 => PairingCase::DownwardPairing,
        (0, 0) => {
            return Err(Error::Classification("no segment has a vertical direction".into()))
        }
        _ => {
            return Err(Error::Classification(format!(
                "mixed orientations: {ups} upward, {downs} downward"
            )))
        }
    };
    let deviation = match case {
        PairingCase::UpwardPairing => distance_to_x_horocycle(p2, p1, params)
            .max(distance_to_y_horocycle(q2, q1, params)),
        PairingCase::DownwardPairing => distance_to_y_horocycle(p2, p1, params)
            .max(distance_to_x_horocycle(q2, q1, params)),
    };
    Ok(QuadrilateralVerdict { case, deviation })
}

// ---------------------------------------------------------------------------
// Boxes

/// `T_center([−e^L, e^L]² × [−L, L])`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolBox {
    pub center: SolPoint,
    pub half_height: f64,
}

impl SolBox {
    pub fn new(center: SolPoint, half_height: f64) -> Result<Self> {
        if !(half_height > 0.0 && half_height.is_finite()) || !center.is_finite() {
            return Err(Error::Range {
                name: "L",
                detail: format!("box half-height must be positive, got {half_height}"),
            });
        }
        Ok(Self { center, half_height })
    }

    pub fn at_identity(half_height: f64) -> Result<Self> {
        Self::new(SolPoint::IDENTITY, half_height)
    }

    pub fn half_width(&self) -> f64 {
        self.half_height.exp()
    }

    /// Coordinates relative to the box center.
    pub fn to_local(&self, p: SolPoint, params: SolParams) -> SolPoint {
        sol_compose(sol_inverse(self.center, params), p, params)
    }

    pub fn to_world(&self, local: SolPoint, params: SolParams) -> SolPoint {
        sol_compose(self.center, local, params)
    }

    pub fn contains(&self, p: SolPoint, params: SolParams) -> bool {
        let l = self.to_local(p, params);
        let w = self.half_width();
        l.x.abs() <= w && l.y.abs() <= w && l.z.abs() <= self.half_height
    }

    /// A point drawn from Haar measure on the box.
    pub fn sample_point<R: Rng>(&self, rng: &mut R, params: SolParams) -> SolPoint {
        let w = self.half_width();
        let l = self.half_height;
        let c = params.b - params.a;
        let u: f64 = rng.gen();
        // inverse CDF of the density e^{cz} on [−L, L]
        let z = if c.abs() < 1e-12 {
            -l + 2.0 * l * u
        } else {
            let lo = (c * -l).exp();
            let hi = (c * l).exp();
            (lo + u * (hi - lo)).ln() / c
        };
        let local = SolPoint::new(rng.gen_range(-w..=w), rng.gen_range(-w..=w), z);
        self.to_world(local, params)
    }
}

/// A vertical geodesic segment `bottom + (0, 0, ±t)`, `t ∈ [0, length]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerticalSegment {
    pub base: SolPoint,
    pub up: bool,
    pub length: f64,
}

impl VerticalSegment {
    pub fn point(&self, t: f64) -> SolPoint {
        let dz = if self.up { t } else { -t };
        SolPoint::new(self.base.x, self.base.y, self.base.z + dz)
    }

    pub fn end(&self) -> SolPoint {
        self.point(self.length)
    }

    pub fn trace(&self, samples: usize) -> Result<PathTrace<SolPoint>> {
        PathTrace::sample(0.0, self.length, samples, |t| self.point(t))
    }
}

/// The family `Y_L`: upward vertical segments spanning the full height of the
/// box, with bases uniform for Haar measure on the bottom face.
pub fn sol_box_vertical_family(
    bx: &SolBox,
    count: usize,
    seed: u64,
    params: SolParams,
) -> Result<Vec<VerticalSegment>> {
    if count == 0 {
        return Err(Error::Range { name: "count", detail: "must be at least 1".into() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = bx.half_width();
    Ok((0..count)
        .map(|_| {
            let local = SolPoint::new(
                rng.gen_range(-w..=w),
                rng.gen_range(-w..=w),
                -bx.half_height,
            );
            VerticalSegment {
                base: bx.to_world(local, params),
                up: true,
                length: 2.0 * bx.half_height,
            }
        })
        .collect())
}

/// Riemannian measures of the faces and volume of `B(L)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxMeasures {
    pub volume: f64,
    pub top: f64,
    pub bottom: f64,
    pub x_faces: f64,
    pub y_faces: f64,
}

impl BoxMeasures {
    pub fn boundary(&self) -> f64 {
        self.top + self.bottom + self.x_faces + self.y_faces
    }

    pub fn ratio(&self) -> f64 {
        self.boundary() / self.volume
    }
}

/// `∫_{−L}^{L} e^{cz} dz`
fn exp_integral(c: f64, l: f64) -> f64 {
    if c.abs() < 1e-15 {
        2.0 * l
    } else {
        2.0 * (c * l).sinh() / c
    }
}

pub fn sol_box_measures(l: f64, params: SolParams) -> Result<BoxMeasures> {
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::Range { name: "L", detail: format!("{l} must be positive") });
    }
    let (a, b) = (params.a, params.b);
    let w = 2.0 * l.exp();
    Ok(BoxMeasures {
        volume: w * w * exp_integral(b - a, l),
        top: w * w * ((b - a) * l).exp(),
        bottom: w * w * (-(b - a) * l).exp(),
        // x = ±e^L: area element e^{bz} dy dz
        x_faces: 2.0 * w * exp_integral(b, l),
        // y = ±e^L: area element e^{-az} dx dz
        y_faces: 2.0 * w * exp_integral(-a, l),
    })
}

/// Boundary area over volume of `B(L)`.
pub fn sol_folner_ratio(l: f64, params: SolParams) -> Result<f64> {
    Ok(sol_box_measures(l, params)?.ratio())
}

#[cfg(test)]
mod tests {
    use super::*;

    const S: SolParams = SolParams::STANDARD;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn pt_close(p: SolPoint, q: SolPoint, tol: f64) -> bool {
        close(p.x, q.x, tol) && close(p.y, q.y, tol) && close(p.z, q.z, tol)
    }

    /// 3×3 matrix form of SOL.
    fn matrix(p: SolPoint) -> [[f64; 3]; 3] {
        [
            [(p.z / 2.0).exp(), p.x, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, p.y, (-p.z / 2.0).exp()],
        ]
    }

    fn from_matrix(m: [[f64; 3]; 3]) -> SolPoint {
        SolPoint::new(m[0][1], m[2][1], 2.0 * m[0][0].ln())
    }

    fn matmul(a: [[f64; 3]; 3], b: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
        let mut o = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    o[i][j] += a[i][k] * b[k][j];
                }
            }
        }
        o
    }

    #[test]
    fn composition_matches_matrices() {
        let p = SolPoint::new(0.0, 0.0, 2.0);
        let q = SolPoint::new(1.0, 0.0, 0.0);
        let r = sol_compose(p, q, S);
        assert!(pt_close(r, SolPoint::new(1f64.exp(), 0.0, 2.0), 1e-12));
        let oracle = from_matrix(matmul(matrix(p), matrix(q)));
        assert!(pt_close(r, oracle, 1e-12));
        let a = SolPoint::new(-0.7, 2.5, 1.3);
        let b = SolPoint::new(3.1, 0.2, -2.2);
        assert!(pt_close(sol_compose(a, b, S), from_matrix(matmul(matrix(a), matrix(b))), 1e-12));
        assert_eq!(sol_compose(SolPoint::IDENTITY, a, S), a);
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(sol_inverse(SolPoint::IDENTITY, S), SolPoint::new(-0.0, -0.0, -0.0));
        assert_eq!(sol_inverse(SolPoint::new(0.0, 0.0, 3.0), S).z, -3.0);
        let inv = sol_inverse(SolPoint::new(1.0, 0.0, 2.0), S);
        assert!(pt_close(inv, SolPoint::new(-(-1f64).exp(), 0.0, -2.0), 1e-14));
        // matrix inverse oracle: the inverse of the upper-left block
        let m = matrix(SolPoint::new(1.0, 0.0, 2.0));
        let minv = [
            [1.0 / m[0][0], -m[0][1] / m[0][0], 0.0],
            [0.0, 1.0, 0.0],
            [0.0, -m[2][1] / m[2][2], 1.0 / m[2][2]],
        ];
        assert!(pt_close(inv, from_matrix(minv), 1e-14));
    }

    #[test]
    fn projections() {
        let p = SolPoint::new(1.0, 2.0, 3.0);
        assert_eq!(sol_project(p, Axis::XZ), HPoint::new(1.0, 3.0));
        assert_eq!(sol_project(p, Axis::YZ), HPoint::new(2.0, -3.0));
    }

    #[test]
    fn bounds_examples() {
        let o = SolPoint::IDENTITY;
        let b = sol_distance_bounds(o, o, S);
        assert_eq!((b.lower, b.upper), (0.0, 0.0));
        let b = sol_distance_bounds(o, SolPoint::new(0.0, 0.0, 7.0), S);
        assert!(close(b.lower, 7.0, 1e-12) && close(b.upper, 7.0, 1e-12));
        let b = sol_distance_bounds(o, SolPoint::new(1.0, 1.0, 0.0), S);
        // leaf metric dz² + e^{-z}dx²: 2·arccosh(1 + 1/8)
        assert!(close(b.lower, 2.0 * 1.125f64.acosh(), 1e-12));
        assert!(b.lower < b.upper);
        // upper: climb along x, then a horocyclic y-chord, best of four shapes
        let direct = staircase_length(o, SolPoint::new(1.0, 1.0, 0.0), StaircaseOrder::XFirst, S);
        assert!(close(direct, 2.0 * 2.0 * 1.125f64.acosh(), 1e-12));
        assert!(b.upper <= direct + 1e-12);
    }

    #[test]
    fn vertical_points() {
        let p = sol_vertical_point(SolPoint::IDENTITY, true, 3.0).unwrap();
        assert_eq!(p, SolPoint::new(0.0, 0.0, 3.0));
        let q = sol_vertical_point(SolPoint::new(1.0, 2.0, 0.0), false, 3.0).unwrap();
        assert_eq!(q, SolPoint::new(1.0, 2.0, -3.0));
        assert!(sol_vertical_point(SolPoint::IDENTITY, true, -1.0).is_err());
        let b = sol_distance_bounds(
            sol_vertical_point(p, true, 0.0).unwrap(),
            sol_vertical_point(p, true, 5.0).unwrap(),
            S,
        );
        assert!(close(b.lower, 5.0, 1e-12) && close(b.upper, 5.0, 1e-12));
    }

    #[test]
    fn staircase_traces() {
        let o = SolPoint::IDENTITY;
        let c = sol_staircase(o, o, StaircaseOrder::XFirst, 10, S).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.span(), 0.0);

        let q = SolPoint::new(2.0, 0.0, 1.0);
        let t = sol_staircase(o, q, StaircaseOrder::XFirst, 50, S).unwrap();
        assert!(t.points().iter().all(|p| p.y == 0.0));
        assert!(close(t.span(), leaf_distance(HPoint::new(0.0, 0.0), HPoint::new(2.0, 1.0), 0.5), 1e-12));

        let q = SolPoint::new(1.0, 1.0, 0.0);
        let tx = sol_staircase(o, q, StaircaseOrder::XFirst, 200, S).unwrap();
        let ty = sol_staircase(o, q, StaircaseOrder::YFirst, 200, S).unwrap();
        assert!(close(tx.span(), staircase_length(o, q, StaircaseOrder::XFirst, S), 1e-12));
        // sample-and-measure Hausdorff separation
        let dir = |a: &PathTrace<SolPoint>, b: &PathTrace<SolPoint>| {
            a.points()
                .iter()
                .map(|p| {
                    b.points()
                        .iter()
                        .map(|r| sol_distance_bounds(*p, *r, S).lower)
                        .fold(f64::INFINITY, f64::min)
                })
                .fold(0.0, f64::max)
        };
        let haus = dir(&tx, &ty).max(dir(&ty, &tx));
        assert!(haus > 0.1, "hausdorff {haus}");
        // arclength parametrization along each leg
        for w in tx.points().windows(2) {
            let d = sol_distance_bounds(w[0], w[1], S).lower;
            assert!(d <= tx.span() / 199.0 + 1e-9);
        }
    }

    #[test]
    fn refine_examples() {
        let o = SolPoint::IDENTITY;
        let v = sol_distance_refine(o, SolPoint::new(0.0, 0.0, 4.0), S, 50).unwrap();
        assert!(v.converged && close(v.value, 4.0, 1e-12));
        let leaf = sol_distance_refine(o, SolPoint::new(3.0, 0.0, 1.0), S, 50).unwrap();
        let h = leaf_distance(HPoint::new(0.0, 0.0), HPoint::new(3.0, 1.0), 0.5);
        assert!(close(leaf.value, h, 1e-9));
        let r = sol_distance_refine(o, SolPoint::new(1.0, 1.0, 0.0), S, 200).unwrap();
        assert!(r.converged, "{r:?}");
        assert!(r.value >= r.bounds.lower && r.value <= r.bounds.upper);
        assert!(r.value >= 0.962424);
        assert!(sol_distance_refine(o, o, S, 0).is_err());
    }

    #[test]
    fn shooting_reaches_target() {
        let o = SolPoint::IDENTITY;
        let q = SolPoint::new(1.5, -0.8, 0.7);
        let r = sol_distance_refine(o, q, S, 400).unwrap();
        assert!(r.converged);
        let r2 = sol_distance_refine(o, q, S, 800).unwrap();
        assert!(close(r.value, r2.value, 1e-7));
    }

    fn vertical_trace(base: SolPoint, up: bool, len: f64) -> PathTrace<SolPoint> {
        VerticalSegment { base, up, length: len }.trace(41).unwrap()
    }

    #[test]
    fn quadrilateral_upward_example() {
        // Corners: p₂ on the x-horocycle of p₁, q₂ on the y-horocycle of q₁.
        let p1 = SolPoint::new(0.0, 0.0, 0.0);
        let p2 = SolPoint::new(3.0, 0.0, 0.0);
        let q1 = SolPoint::new(0.0, 0.0, 10.0);
        let q2 = SolPoint::new(0.0, 0.5, 10.0);
        // γᵢⱼ is the vertical over (x(pᵢ), y(qⱼ))
        let g11 = vertical_trace(SolPoint::new(0.0, 0.0, 0.0), true, 10.0);
        let g12 = vertical_trace(SolPoint::new(0.0, 0.5, 0.0), true, 10.0);
        let g21 = vertical_trace(SolPoint::new(3.0, 0.0, 0.0), true, 10.0);
        let g22 = vertical_trace(SolPoint::new(3.0, 0.5, 0.0), true, 10.0);
        let v = sol_classify_quadrilateral([p1, p2, q1, q2], [&g11, &g12, &g21, &g22], 1.0, S)
            .unwrap();
        assert_eq!(v.case, PairingCase::UpwardPairing);
        assert!(v.deviation < 1e-12);

        let f = |t: &PathTrace<SolPoint>| t.map_points(|p| p.flipped());
        let v2 = sol_classify_quadrilateral(
            [p1.flipped(), p2.flipped(), q1.flipped(), q2.flipped()],
            [&f(&g11), &f(&g12), &f(&g21), &f(&g22)],
            1.0,
            S,
        )
        .unwrap();
        assert_eq!(v2.case, PairingCase::DownwardPairing);
        assert_eq!(v2.deviation, v.deviation);
    }

    #[test]
    fn quadrilateral_errors() {
        let p1 = SolPoint::new(0.0, 0.0, 0.0);
        let q1 = SolPoint::new(0.0, 0.0, 10.0);
        let up = vertical_trace(p1, true, 10.0);
        // corner far from the segment start
        let far = SolPoint::new(0.0, 50.0, 0.0);
        let e = sol_classify_quadrilateral([p1, far, q1, q1], [&up, &up, &up, &up], 1.0, S);
        assert!(matches!(e, Err(Error::Precondition(m)) if m.contains("γ21")));
        // identical segments from p₁ do not diverge over a long stretch
        let long = vertical_trace(p1, true, 40.0);
        let q = SolPoint::new(0.0, 0.0, 40.0);
        let e = sol_classify_quadrilateral([p1, p1, q, q], [&long, &long, &long, &long], 1.0, S);
        assert!(matches!(e, Err(Error::Precondition(m)) if m.contains("diverge")));
        // mixed orientations
        let down = PathTrace::new(up.params().to_vec(), up.points().iter().rev().cloned().collect())
            .unwrap();
        let e = sol_classify_quadrilateral([p1, p1, p1, p1], [&up, &up, &down, &up], 20.0, S);
        assert!(matches!(e, Err(Error::Classification(_))));
    }

    #[test]
    fn vertical_family_in_box() {
        let bx = SolBox::new(SolPoint::new(5.0, -3.0, 1.0), 3.0).unwrap();
        let fam = sol_box_vertical_family(&bx, 50, 9, S).unwrap();
        assert_eq!(fam, sol_box_vertical_family(&bx, 50, 9, S).unwrap());
        for seg in &fam {
            let lo = bx.to_local(seg.base, S);
            let hi = bx.to_local(seg.end(), S);
            assert!(close(lo.z, -3.0, 1e-12) && close(hi.z, 3.0, 1e-12));
            assert!(bx.contains(seg.point(seg.length / 2.0), S));
        }
        assert!(sol_box_vertical_family(&bx, 0, 9, S).is_err());
    }

    #[test]
    fn folner_examples() {
        let m = sol_box_measures(5.0, S).unwrap();
        assert!(close(m.volume, 8.0 * 5.0 * (10f64).exp(), 1e-6 * m.volume));
        assert!(close(m.top + m.bottom, 8.0 * (10f64).exp(), 1e-6 * m.top));
        let r5 = sol_folner_ratio(5.0, S).unwrap();
        // top and bottom give 1/L, the four sides about 2e^{-L/2}/L
        let sides = 2.0 * 4.0 * (2.5f64).sinh() / (10.0 * 5f64.exp());
        assert!(close(r5, 0.2 + sides, 1e-12), "{r5}");
        let r10 = sol_folner_ratio(10.0, S).unwrap();
        let m10 = sol_box_measures(10.0, S).unwrap();
        assert!(close((m10.top + m10.bottom) / m10.volume, 0.5 * (m.top + m.bottom) / m.volume, 1e-12));
        assert!(r10 < r5 && r10 / r5 > 0.4, "{}", r10 / r5);
        assert!(sol_folner_ratio(0.0, S).is_err());
        let nu = SolParams::new(1.0, 0.5).unwrap();
        let rs: Vec<f64> = [4.0, 6.0, 8.0].iter().map(|&l| sol_folner_ratio(l, nu).unwrap()).collect();
        for r in &rs {
            assert!(*r > 0.1);
            assert!(close(*r / rs[0], 1.0, 0.2));
        }
    }

    #[test]
    fn folner_matches_quadrature() {
        // Simpson's rule on the volume and face area forms.
        let simpson = |f: &dyn Fn(f64) -> f64, lo: f64, hi: f64| {
            let n = 2000;
            let h = (hi - lo) / n as f64;
            let mut s = f(lo) + f(hi);
            for k in 1..n {
                s += f(lo + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
            }
            s * h / 3.0
        };
        for params in [S, SolParams::new(1.0, 0.5).unwrap(), SolParams::new(0.3, 0.9).unwrap()] {
            let l: f64 = 4.0;
            let w = 2.0 * l.exp();
            let (a, b) = (params.a(), params.b());
            let vol = w * w * simpson(&|z| ((b - a) * z).exp(), -l, l);
            let xf = 2.0 * w * simpson(&|z| (b * z).exp(), -l, l);
            let yf = 2.0 * w * simpson(&|z| (-a * z).exp(), -l, l);
            let m = sol_box_measures(l, params).unwrap();
            assert!(close(m.volume, vol, 1e-9 * vol));
            assert!(close(m.x_faces, xf, 1e-9 * xf));
            assert!(close(m.y_faces, yf, 1e-9 * yf));
        }
    }

    #[test]
    fn haar_density_is_left_invariant() {
        // volume of a small cube before and after left translation
        let params = SolParams::new(1.0, 0.4).unwrap();
        let g = SolPoint::new(0.3, -1.2, 0.8);
        let p = SolPoint::new(2.0, 1.0, -0.5);
        let jac = (params.a() * g.z).exp() * (-params.b() * g.z).exp();
        let moved = sol_compose(g, p, params);
        let before = params.haar_density(p.z);
        let after = params.haar_density(moved.z) * jac;
        assert!(close(before, after, 1e-12));
    }
}
