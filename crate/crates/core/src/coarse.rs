//! Quasi-geodesic diagnostics and scale selection.
//!
//! Everything here runs against [`Ambient`], so the same code serves SOL
//! (certified distance intervals) and DL graphs (exact distances). Where an
//! inequality is checked with intervals, the bound used is the one that keeps
//! the check one-sided sound:
//!
//! * QI constants: the lower bound in `|Δt|/K − C ≤ d`, the upper bound in
//!   `d ≤ K|Δt| + C`.
//! * Efficiency and subdivision gain: upper bounds for the chord sums, the
//!   lower bound for the end-to-end displacement. A trace is only declared
//!   efficient when that is certified.
//!
//! Times along a trace are read off by nearest sample (ties go to the
//! earlier one), and heights are interpolated linearly between samples.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sol::{SolParams, SolPoint, VerticalSegment};
use crate::trace::{Ambient, PathTrace};

pub const K_GRID: f64 = 0.05;
pub const C_GRID: f64 = 0.5;
/// Default fraction of the span below which sample pairs do not inform `K`.
pub const DEFAULT_SEPARATION: f64 = 0.1;

const GRID_SLACK: f64 = 1e-9;

fn round_up(x: f64, grid: f64) -> f64 {
    (x / grid - GRID_SLACK).ceil().max(0.0) * grid
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QiConstants {
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "C")]
    pub c: f64,
}

impl QiConstants {
    pub fn new(k: f64, c: f64) -> Result<Self> {
        if !(k >= 1.0 && c >= 0.0 && k.is_finite() && c.is_finite()) {
            return Err(Error::Range { name: "K, C", detail: format!("need K ≥ 1, C ≥ 0, got {k}, {c}") });
        }
        Ok(Self { k, c })
    }

    /// `16K³/ε`, the bound on `Σ δ_m` for ε-monotonicity.
    pub fn monotone_bound(&self, eps: f64) -> f64 {
        16.0 * self.k.powi(3) / eps
    }

    /// `4K²/ε`, the bound on `Σ δ_m` for ε-efficiency.
    pub fn efficient_bound(&self, eps: f64) -> f64 {
        4.0 * self.k * self.k / eps
    }
}

/// Estimates `(K, C)` for the sampled path.
///
/// `K` is read from the pairs at least `separation·span` apart, where the
/// additive constant is negligible, as the worst of `|Δt|/d_lower` and
/// `d_upper/|Δt|`; then `C` is the smallest constant making both inequalities
/// hold on every pair. `K` is rounded up to a multiple of 0.05 and `C` to a
/// multiple of 0.5.
pub fn estimate_qi_constants_with<A: Ambient>(
    space: &A,
    trace: &PathTrace<A::Point>,
    separation: f64,
) -> Result<QiConstants> {
    if trace.len() < 2 {
        return Err(Error::Degenerate("need at least two samples".into()));
    }
    if !(separation > 0.0 && separation <= 1.0) {
        return Err(Error::Range { name: "separation", detail: format!("{separation} not in (0, 1]") });
    }
    let t = trace.params();
    let pts = trace.points();
    let n = trace.len();
    let tau = separation * trace.span();
    let rows: Vec<Vec<(f64, f64, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            ((i + 1)..n)
                .map(|j| {
                    let (lo, hi) = space.distance_bounds(&pts[i], &pts[j]);
                    (t[j] - t[i], lo, hi)
                })
                .collect()
        })
        .collect();
    let mut k: f64 = 1.0;
    for &(dt, lo, hi) in rows.iter().flatten() {
        if dt + GRID_SLACK * tau >= tau {
            if lo <= 0.0 {
                return Err(Error::Degenerate(format!(
                    "samples {dt} apart in time coincide; not a quasi-geodesic at this separation"
                )));
            }
            k = k.max(dt / lo).max(hi / dt);
        }
    }
    let k = round_up(k, K_GRID).max(1.0);
    let mut c: f64 = 0.0;
    for &(dt, lo, hi) in rows.iter().flatten() {
        c = c.max(dt / k - lo).max(hi - k * dt);
    }
    Ok(QiConstants { k, c: round_up(c, C_GRID) })
}

pub fn estimate_qi_constants<A: Ambient>(space: &A, trace: &PathTrace<A::Point>) -> Result<QiConstants> {
    estimate_qi_constants_with(space, trace, DEFAULT_SEPARATION)
}

// ---------------------------------------------------------------------------
// ε-monotonicity

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotoneVerdict {
    pub monotone: bool,
    /// Largest time gap between two equal-height points.
    pub max_gap: f64,
    /// Times realizing `max_gap`, if any equal-height pair exists.
    pub witness: Option<(f64, f64)>,
}

/// Time at which the linear piece `a → b` reaches height `y`; flat pieces
/// give their first or last time.
fn time_at(a: (f64, f64), b: (f64, f64), y: f64, latest: bool) -> f64 {
    if a.1 == b.1 {
        return if latest { b.0 } else { a.0 };
    }
    let s = ((y - a.1) / (b.1 - a.1)).clamp(0.0, 1.0);
    a.0 + s * (b.0 - a.0)
}

/// Largest `t' − t` with `h(t) = h(t')` for the piecewise-linear height
/// through `nodes` (time, height).
fn max_equal_height_gap(nodes: &[(f64, f64)]) -> (f64, Option<(f64, f64)>) {
    let mut best = 0.0;
    let mut witness = None;
    let segs: Vec<((f64, f64), (f64, f64))> = nodes.windows(2).map(|w| (w[0], w[1])).collect();
    for (i, &(a, b)) in segs.iter().enumerate() {
        let (ilo, ihi) = (a.1.min(b.1), a.1.max(b.1));
        for &(c, d) in segs[i..].iter().rev() {
            if d.0 - a.0 <= best {
                break;
            }
            let lo = ilo.max(c.1.min(d.1));
            let hi = ihi.min(c.1.max(d.1));
            if lo > hi {
                continue;
            }
            for y in [lo, hi] {
                let t1 = time_at(a, b, y, false);
                let t2 = time_at(c, d, y, true);
                if t2 - t1 > best {
                    best = t2 - t1;
                    witness = Some((t1, t2));
                }
            }
        }
    }
    (best, witness)
}

fn window_nodes<A: Ambient>(space: &A, trace: &PathTrace<A::Point>, a: f64, b: f64) -> Vec<(f64, f64)> {
    let t = trace.params();
    let h: Vec<f64> = trace.points().iter().map(|p| space.height(p)).collect();
    let interp = |x: f64| -> f64 {
        let i = t.partition_point(|&s| s < x);
        if i == 0 {
            return h[0];
        }
        if i == t.len() {
            return h[t.len() - 1];
        }
        let s = (x - t[i - 1]) / (t[i] - t[i - 1]);
        h[i - 1] + s * (h[i] - h[i - 1])
    };
    let mut nodes = vec![(a, interp(a))];
    for (k, &s) in t.iter().enumerate() {
        if s > a && s < b {
            nodes.push((s, h[k]));
        }
    }
    if b > a {
        nodes.push((b, interp(b)));
    }
    nodes
}

fn monotone_on_window<A: Ambient>(
    space: &A,
    trace: &PathTrace<A::Point>,
    a: f64,
    len: f64,
    eps: f64,
) -> MonotoneVerdict {
    let nodes = window_nodes(space, trace, a, a + len);
    let (gap, witness) = max_equal_height_gap(&nodes);
    MonotoneVerdict { monotone: gap < eps * len || len == 0.0, max_gap: gap, witness }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::Range { name: "eps", detail: format!("{eps} must be positive") })
    }
}

/// Whether equal-height times are always less than `ε·span` apart.
pub fn is_eps_monotone<A: Ambient>(space: &A, trace: &PathTrace<A::Point>, eps: f64) -> Result<MonotoneVerdict> {
    check_eps(eps)?;
    Ok(monotone_on_window(space, trace, trace.start(), trace.span(), eps))
}

// ---------------------------------------------------------------------------
// Vertical fits (SOL)

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerticalFit {
    pub segment: VerticalSegment,
    pub hausdorff: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// The vertical segment over the median horizontal position spanning the
/// observed heights, and its Hausdorff distance to the trace measured with
/// certified upper bounds. The segment is sampled at the heights of the
/// trace points and at as many evenly spaced points.
pub fn fit_vertical(params: SolParams, trace: &PathTrace<SolPoint>) -> Result<VerticalFit> {
    let pts = trace.points();
    let x = median(pts.iter().map(|p| p.x).collect());
    let y = median(pts.iter().map(|p| p.y).collect());
    let zmin = pts.iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
    let zmax = pts.iter().map(|p| p.z).fold(f64::NEG_INFINITY, f64::max);
    let up = pts[pts.len() - 1].z >= pts[0].z;
    let base = SolPoint::new(x, y, if up { zmin } else { zmax });
    let segment = VerticalSegment { base, up, length: zmax - zmin };
    let count = pts.len().max(2);
    let seg_pts: Vec<SolPoint> = (0..count)
        .map(|k| segment.point(segment.length * k as f64 / (count - 1) as f64))
        .chain(pts.iter().map(|p| SolPoint::new(x, y, p.z)))
        .collect();
    let dist = |p: &SolPoint, q: &SolPoint| crate::sol::sol_distance_bounds(*p, *q, params).upper;
    let nearest = |p: &SolPoint, set: &[SolPoint]| set.iter().map(|q| dist(p, q)).fold(f64::INFINITY, f64::min);
    let a = pts.par_iter().map(|p| nearest(p, &seg_pts)).reduce(|| 0.0, f64::max);
    let b = seg_pts.par_iter().map(|q| nearest(q, pts)).reduce(|| 0.0, f64::max);
    Ok(VerticalFit { segment, hausdorff: a.max(b) })
}

// ---------------------------------------------------------------------------
// ε-efficiency and subdivision

fn check_scale(r: f64, len: f64) -> Result<usize> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Range { name: "r", detail: format!("{r} must be positive") });
    }
    if r > len * (1.0 + GRID_SLACK) {
        return Err(Error::Range { name: "r", detail: format!("scale {r} exceeds span {len}") });
    }
    Ok(((len / r) * (1.0 + GRID_SLACK)).floor() as usize)
}

/// `(Σ_j d_upper(α(a + jr), α(a + (j−1)r)), d_lower(α(a + kr), α(a)))`.
fn chord_sums<A: Ambient>(space: &A, trace: &PathTrace<A::Point>, a: f64, k: usize, r: f64) -> (f64, f64) {
    let at = |j: usize| trace.point_at(a + j as f64 * r);
    let sum = (1..=k).map(|j| space.distance_bounds(at(j - 1), at(j)).1).sum();
    let disp = space.distance_bounds(at(0), at(k)).0;
    (sum, disp)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyVerdict {
    pub efficient: bool,
    pub chord_sum: f64,
    pub displacement: f64,
}

fn efficient_on_window<A: Ambient>(
    space: &A,
    trace: &PathTrace<A::Point>,
    a: f64,
    len: f64,
    eps: f64,
    r: f64,
) -> Result<EfficiencyVerdict> {
    let k = check_scale(r, len)?;
    let (sum, disp) = chord_sums(space, trace, a, k, r);
    Ok(EfficiencyVerdict { efficient: sum <= (1.0 + eps) * disp, chord_sum: sum, displacement: disp })
}

/// The chord sum at scale `r` over `⌊span/r⌋` full steps is within `1 + ε`
/// of the displacement; a ragged remainder is dropped.
pub fn is_eps_efficient<A: Ambient>(
    space: &A,
    trace: &PathTrace<A::Point>,
    eps: f64,
    r: f64,
) -> Result<EfficiencyVerdict> {
    check_eps(eps)?;
    efficient_on_window(space, trace, trace.start(), trace.span(), eps, r)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Monotone,
    Efficient,
}

/// Increase in total height variation (Monotone) or in chord length
/// (Efficient) from cutting the whole trace into `n` equal pieces.
pub fn subdivision_gain<A: Ambient>(space: &A, trace: &PathTrace<A::Point>, n: usize, mode: Mode) -> Result<f64> {
    if n < 2 {
        return Err(Error::Range { name: "n", detail: format!("{n} < 2") });
    }
    let r = trace.span() / n as f64;
    let a = trace.start();
    Ok(match mode {
        Mode::Monotone => {
            let h = |j: usize| space.height(trace.point_at(a + j as f64 * r));
            let tv: f64 = (1..=n).map(|j| (h(j) - h(j - 1)).abs()).sum();
            tv - (h(n) - h(0)).abs()
        }
        Mode::Efficient => {
            let (sum, disp) = chord_sums(space, trace, a, n, r);
            sum - disp
        }
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubdivisionTally {
    pub windows: usize,
    pub inefficient: usize,
    /// Inefficient windows whose gain fell short of `εr/(2K)`.
    pub violations: usize,
}

/// Cuts the trace into windows of every ladder length `r ≥ 2KC` and each
/// window into `n ∈ {2, 4, 8}` pieces, then checks that failing
/// ε-efficiency at `r/n` forces a subdivision gain of at least `εr/(2K)`.
///
/// Inefficiency means the gain exceeds `ε·d`, and `d ≥ r/K − C ≥ r/(2K)`
/// once `r ≥ 2KC`, so with valid constants there are no violations.
pub fn subdivision_check<A: Ambient>(
    space: &A,
    trace: &PathTrace<A::Point>,
    q: QiConstants,
    eps: f64,
    r0: f64,
    ratio: f64,
) -> Result<SubdivisionTally> {
    let ladder = ScaleLadder::fitting(r0, ratio, trace.span())?;
    let floor = 2.0 * q.k * q.c;
    let mut tally = SubdivisionTally::default();
    for &r in ladder.scales() {
        if r < floor {
            continue;
        }
        let pieces = (trace.span() / r * (1.0 + GRID_SLACK)).floor() as usize;
        for w in 0..pieces {
            let a = trace.start() + w as f64 * r;
            let (lo, hi) = (trace.index_near(a), trace.index_near(a + r));
            if hi <= lo {
                continue;
            }
            let piece = trace.slice(lo, hi);
            let len = piece.span();
            if len < floor {
                continue;
            }
            for n in [2usize, 4, 8] {
                tally.windows += 1;
                if !is_eps_efficient(space, &piece, eps, len / n as f64)?.efficient {
                    tally.inefficient += 1;
                    if subdivision_gain(space, &piece, n, Mode::Efficient)? < eps * len / (2.0 * q.k) {
                        tally.violations += 1;
                    }
                }
            }
        }
    }
    Ok(tally)
}

// ---------------------------------------------------------------------------
// Scale ladders

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleLadder {
    scales: Vec<f64>,
    ratio_floor: f64,
}

impl ScaleLadder {
    pub fn new(scales: Vec<f64>, ratio_floor: f64) -> Result<Self> {
        if scales.len() < 2 {
            return Err(Error::Validation("ladder needs r₀ and at least one rung".into()));
        }
        if !(ratio_floor > 1.0) {
            return Err(Error::Range { name: "ratio", detail: format!("{ratio_floor} must exceed 1") });
        }
        if !(scales[0] > 0.0) || scales.iter().any(|r| !r.is_finite()) {
            return Err(Error::Range { name: "r0", detail: "scales must be positive and finite".into() });
        }
        for (m, w) in scales.windows(2).enumerate() {
            if w[1] < ratio_floor * w[0] * (1.0 - GRID_SLACK) {
                return Err(Error::Validation(format!(
                    "ladder ratio r_{}/r_{} = {} below floor {ratio_floor}",
                    m + 1,
                    m,
                    w[1] / w[0]
                )));
            }
        }
        Ok(Self { scales, ratio_floor })
    }

    /// `r_m = r₀·n^m` for `m = 0..=rungs`.
    pub fn geometric(r0: f64, ratio: f64, rungs: usize) -> Result<Self> {
        Self::new((0..=rungs).map(|m| r0 * ratio.powi(m as i32)).collect(), ratio)
    }

    /// The tallest geometric ladder from `r0` fitting in `span`.
    pub fn fitting(r0: f64, ratio: f64, span: f64) -> Result<Self> {
        let mut rungs = 0;
        while r0 * ratio.powi(rungs as i32 + 1) <= span * (1.0 + GRID_SLACK) {
            rungs += 1;
        }
        Self::geometric(r0, ratio, rungs.max(1))
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn ratio_floor(&self) -> f64 {
        self.ratio_floor
    }

    /// Number of rungs `M` above `r₀`.
    pub fn rungs(&self) -> usize {
        self.scales.len() - 1
    }

    pub fn top(&self) -> f64 {
        self.scales[self.scales.len() - 1]
    }

    /// `r₀ ≫ C`, read as `r₀ ≥ factor·C`.
    pub fn check_floor(&self, c: f64, factor: f64) -> Result<()> {
        if self.scales[0] < factor * c {
            return Err(Error::Validation(format!(
                "ladder floor r0 = {} is below {factor}·C = {}",
                self.scales[0],
                factor * c
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaProfile {
    /// `δ₁ … δ_M`.
    pub deltas: Vec<f64>,
    pub mode: Mode,
}

impl DeltaProfile {
    pub fn total(&self) -> f64 {
        self.deltas.iter().sum()
    }
}

/// Fraction of scale-`r_m` pieces failing the mode's test, for `m = 1..=M`.
/// In Efficient mode a piece is tested at the next finer scale `r_{m−1}`.
pub fn delta_profile<A: Ambient>(
    space: &A,
    trace: &PathTrace<A::Point>,
    ladder: &ScaleLadder,
    eps: f64,
    mode: Mode,
) -> Result<DeltaProfile> {
    check_eps(eps)?;
    let span = trace.span();
    if ladder.top() > span * (1.0 + GRID_SLACK) {
        return Err(Error::Range {
            name: "ladder",
            detail: format!("top scale {} exceeds trace span {span}", ladder.top()),
        });
    }
    let r = ladder.scales();
    let mut deltas = Vec::with_capacity(ladder.rungs());
    for m in 1..r.len() {
        let pieces = ((span / r[m]) * (1.0 + GRID_SLACK)).floor() as usize;
        let mut fails = 0usize;
        for i in 0..pieces {
            let a = trace.start() + i as f64 * r[m];
            let failed = match mode {
                Mode::Monotone => !monotone_on_window(space, trace, a, r[m], eps).monotone,
                Mode::Efficient => !efficient_on_window(space, trace, a, r[m], eps, r[m - 1])?.efficient,
            };
            fails += usize::from(failed);
        }
        deltas.push(fails as f64 / pieces as f64);
    }
    Ok(DeltaProfile { deltas, mode })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoarseDifferentiation {
    /// Chosen rung, `1 ≤ m* ≤ M`.
    pub m_star: usize,
    /// `R = r_{m*}`, the length of the pieces.
    pub big_r: f64,
    /// `r = r_{m*−1}`, the scale at which the pieces are tested.
    pub small_r: f64,
    /// Family-averaged fraction of pieces passing at `m*`.
    pub fraction: f64,
    pub profile: Vec<f64>,
    /// Largest estimated `K` over the family.
    pub k_max: f64,
    /// `16K³/ε` or `4K²/ε` with `K = k_max`.
    pub bound: f64,
    /// Whether `M ≥ bound/θ`, so that a qualifying rung must exist.
    pub guaranteed: bool,
}

/// The first rung at which the family-averaged failure fraction drops below
/// `θ`. Per-trace profiles run in parallel and are summed in family order,
/// so the result does not depend on scheduling.
pub fn coarse_differentiate<A: Ambient>(
    space: &A,
    family: &[PathTrace<A::Point>],
    ladder: &ScaleLadder,
    eps: f64,
    theta: f64,
    mode: Mode,
) -> Result<CoarseDifferentiation> {
    if family.is_empty() {
        return Err(Error::Degenerate("empty family".into()));
    }
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::Range { name: "theta", detail: format!("{theta} not in (0, 1)") });
    }
    let results: Vec<(DeltaProfile, f64)> = family
        .par_iter()
        .map(|tr| {
            let p = delta_profile(space, tr, ladder, eps, mode)?;
            let k = estimate_qi_constants(space, tr).map(|q| q.k).unwrap_or(f64::INFINITY);
            Ok((p, k))
        })
        .collect::<Result<Vec<_>>>()?;
    let rungs = ladder.rungs();
    let mut avg = vec![0.0; rungs];
    let mut k_max: f64 = 1.0;
    for (p, k) in &results {
        for (a, d) in avg.iter_mut().zip(&p.deltas) {
            *a += d;
        }
        k_max = k_max.max(*k);
    }
    for a in &mut avg {
        *a /= family.len() as f64;
    }
    let q = QiConstants { k: k_max, c: 0.0 };
    let bound = match mode {
        Mode::Monotone => q.monotone_bound(eps),
        Mode::Efficient => q.efficient_bound(eps),
    };
    let guaranteed = rungs as f64 >= (bound / theta).ceil();
    match avg.iter().position(|&d| d < theta) {
        Some(i) => Ok(CoarseDifferentiation {
            m_star: i + 1,
            big_r: ladder.scales()[i + 1],
            small_r: ladder.scales()[i],
            fraction: 1.0 - avg[i],
            profile: avg,
            k_max,
            bound,
            guaranteed,
        }),
        None => Err(Error::NoScale { theta, profile: avg }),
    }
}
