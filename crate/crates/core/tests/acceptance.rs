//! One line per acceptance criterion, then a nonzero exit if any failed.

use std::collections::{HashMap, HashSet};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sol_coarse::coarse::{coarse_differentiate, delta_profile, subdivision_check, Mode, ScaleLadder};
use sol_coarse::dl::{
    dl_ball, dl_box_enumerate, dl_distance_bfs, dl_distance_formula, dl_height_weight, dl_vertical_family, DlBox,
    DlGraph, DlVertex,
};
use sol_coarse::hplane::{h2_distance, HPoint};
use sol_coarse::lamplighter::{ll_dl_ball_check, ll_dl_bijection, BijectionInput, BijectionOutput, LampElement};
use sol_coarse::qgen::adversarial_sol_family;
use sol_coarse::qilab::{
    detect_sol, make_bilipschitz_1d, make_standard_map, perturb_map_with, spearman, NoiseModel, SampledMap,
    StepConfig,
};
use sol_coarse::sol::{
    sol_box_vertical_family, sol_classify_quadrilateral, sol_compose, sol_distance_bounds, sol_folner_ratio,
    PairingCase, SolBox, SolParams, SolPoint,
};
use sol_coarse::trace::PathTrace;
use sol_coarse::Result;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Result<Outcome> {
    Ok(Outcome { pass, detail: detail.into() })
}

fn within(elapsed: Duration, secs: f64) -> bool {
    elapsed.as_secs_f64() < secs
}

// 1 -----------------------------------------------------------------------

/// Unit-speed geodesic of `dz² + e^{-2z}dx²` from `p` at angle `theta` from
/// the upward vertical, integrated by RK4 to time `t`. Uses the conserved
/// `p_x = e^{-2z}x'` and `z'' = −p_x² e^{2z}`.
fn shoot_h2(p: HPoint, theta: f64, t: f64, steps: usize) -> HPoint {
    let px = theta.sin() * (-p.z).exp();
    let f = |s: [f64; 3]| [px * (2.0 * s[1]).exp(), s[2], -px * px * (2.0 * s[1]).exp()];
    let mut s = [p.x, p.z, theta.cos()];
    let h = t / steps as f64;
    for _ in 0..steps {
        let k1 = f(s);
        let k2 = f([s[0] + h / 2.0 * k1[0], s[1] + h / 2.0 * k1[1], s[2] + h / 2.0 * k1[2]]);
        let k3 = f([s[0] + h / 2.0 * k2[0], s[1] + h / 2.0 * k2[1], s[2] + h / 2.0 * k2[2]]);
        let k4 = f([s[0] + h * k3[0], s[1] + h * k3[1], s[2] + h * k3[2]]);
        for i in 0..3 {
            s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    HPoint::new(s[0], s[1])
}

/// Length of the ODE geodesic from `p` to `q`, found by continuation: the
/// target slides from `p` to `q` along a straight line in `(x, z)` and a
/// damped Newton solve on `(θ, t)` follows it. Misses are measured in
/// `(e^{-z}Δx, Δz)` at the target, an isometry to first order there.
fn ode_distance(p: HPoint, q: HPoint) -> f64 {
    let steps = 1500;
    let stages = 20;
    let target = |lam: f64| HPoint::new(p.x + lam * (q.x - p.x), p.z + lam * (q.z - p.z));
    let first = target(1.0 / stages as f64);
    let (mut theta, mut t) = (((first.x - p.x) * (-p.z).exp()).atan2(first.z - p.z), 0.0);
    t += ((first.x - p.x) * (-p.z).exp()).hypot(first.z - p.z);
    for k in 1..=stages {
        let goal = target(k as f64 / stages as f64);
        let miss = |th: f64, t: f64| {
            let r = shoot_h2(p, th, t, steps);
            [(r.x - goal.x) * (-goal.z).exp(), r.z - goal.z]
        };
        let norm = |m: [f64; 2]| m[0].hypot(m[1]);
        let mut m = miss(theta, t);
        for _ in 0..40 {
            if norm(m) < 1e-12 {
                break;
            }
            let h = 1e-8;
            let a = miss(theta + h, t);
            let b = miss(theta, t + h);
            let j = [[(a[0] - m[0]) / h, (b[0] - m[0]) / h], [(a[1] - m[1]) / h, (b[1] - m[1]) / h]];
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            let dth = (j[1][1] * m[0] - j[0][1] * m[1]) / det;
            let dt = (-j[1][0] * m[0] + j[0][0] * m[1]) / det;
            let mut step = 1.0;
            loop {
                let trial = miss(theta - step * dth, t - step * dt);
                if norm(trial) < norm(m) || step < 1e-6 {
                    theta -= step * dth;
                    t -= step * dt;
                    m = trial;
                    break;
                }
                step /= 2.0;
            }
        }
    }
    // a negative time runs the same geodesic backwards
    t.abs()
}

fn criterion_1() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pairs: Vec<(HPoint, HPoint)> = (0..100)
        .map(|_| {
            let mut pt = || HPoint::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            (pt(), pt())
        })
        .collect();
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for &(p, q) in &pairs {
        worst = worst.max((h2_distance(p, q)? - ode_distance(p, q)).abs());
    }
    // the oracle's own cost is the bulk of this; the closed form is timed alone
    let closed = Instant::now();
    for &(p, q) in &pairs {
        std::hint::black_box(h2_distance(p, q)?);
    }
    let closed = closed.elapsed();
    outcome(
        worst < 1e-6 && within(closed, 1.0),
        format!(
            "max |closed form − ODE| = {worst:.2e} over 100 pairs; closed form {:.1?}, with oracle {:.1?}",
            closed,
            start.elapsed()
        ),
    )
}

// 2 -----------------------------------------------------------------------

fn criterion_2() -> Result<Outcome> {
    let params = SolParams::STANDARD;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let w = 8f64.exp();
    let pt = |rng: &mut ChaCha8Rng| {
        SolPoint::new(rng.gen_range(-w..w), rng.gen_range(-w..w), rng.gen_range(-8.0..8.0))
    };
    let (mut order_bad, mut inv_worst, mut vertical_bad): (usize, f64, usize) = (0, 0.0, 0);
    for _ in 0..10_000 {
        let (p, q) = (pt(&mut rng), pt(&mut rng));
        let b = sol_distance_bounds(p, q, params);
        if !(0.0 <= b.lower && b.lower <= b.upper) {
            order_bad += 1;
        }
        let g = SolPoint::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-2.0..2.0));
        let t = sol_distance_bounds(sol_compose(g, p, params), sol_compose(g, q, params), params);
        inv_worst = inv_worst.max((t.lower - b.lower).abs()).max((t.upper - b.upper).abs());
        let v = SolPoint::new(p.x, p.y, rng.gen_range(-8.0..8.0));
        let vb = sol_distance_bounds(p, v, params);
        let dz = (v.z - p.z).abs();
        if vb.lower != vb.upper || (vb.lower - dz).abs() > 1e-12 {
            vertical_bad += 1;
        }
    }
    let t = start.elapsed();
    outcome(
        order_bad == 0 && inv_worst <= 1e-9 && vertical_bad == 0 && within(t, 10.0),
        format!(
            "10^4 pairs: {order_bad} misordered, translation drift {inv_worst:.1e}, {vertical_bad} inexact verticals, {t:.1?}"
        ),
    )
}

// 3 -----------------------------------------------------------------------

fn criterion_3() -> Result<Outcome> {
    let ls = [4.0, 6.0, 8.0, 10.0];
    let y: Vec<f64> = ls.iter().map(|&l| sol_folner_ratio(l, SolParams::STANDARD)).collect::<Result<_>>()?;
    // least squares for y ≈ c/L
    let c = ls.iter().zip(&y).map(|(l, y)| y / l).sum::<f64>() / ls.iter().map(|l| 1.0 / (l * l)).sum::<f64>();
    let res = ls.iter().zip(&y).map(|(l, y)| (y - c / l).powi(2)).sum::<f64>().sqrt()
        / y.iter().map(|y| y * y).sum::<f64>().sqrt();
    let skew = SolParams::new(1.0, 0.5)?;
    let z: Vec<f64> = ls.iter().map(|&l| sol_folner_ratio(l, skew)).collect::<Result<_>>()?;
    let min_skew = z.iter().copied().fold(f64::INFINITY, f64::min);
    outcome(
        res < 0.1 && min_skew > 0.1,
        format!("c = {c:.4}, relative residual {res:.4}; (a,b) = (1,1/2) ratios ≥ {min_skew:.4}"),
    )
}

// 4 -----------------------------------------------------------------------

fn criterion_4() -> Result<Outcome> {
    let start = Instant::now();
    let mut notes = Vec::new();
    let mut pass = true;
    for (m, n) in [(2, 2), (3, 2), (3, 3)] {
        let g = DlGraph::new(m, n)?;
        let base = g.base();
        let ball = dl_ball(&g, &base, 8)?;
        let mut mismatches = ball.iter().filter(|(v, d)| dl_distance_formula(&base, v) != u64::from(*d)).count();
        // pairs inside the ball, confirmed by a fresh search each
        let mut rng = ChaCha8Rng::seed_from_u64(u64::from(10 * m + n));
        for _ in 0..200 {
            let u = &ball[rng.gen_range(0..ball.len())].0;
            let v = &ball[rng.gen_range(0..ball.len())].0;
            if dl_distance_formula(u, v) != u64::from(dl_distance_bfs(&g, u, v)?) {
                mismatches += 1;
            }
        }
        pass &= mismatches == 0;
        notes.push(format!("DL({m},{n}) {} ball vertices, {mismatches} mismatches", ball.len()));
    }
    for (m, n, size, boundary) in [(2, 2, 448, 128), (3, 2, 2059, 793)] {
        let bx = DlBox::centered(DlGraph::new(m, n)?, 3)?;
        let c = dl_box_enumerate(&bx)?;
        let enumerated = c.vertices.len() as u64;
        let distinct = c.vertices.iter().collect::<HashSet<_>>().len() as u64;
        let enum_boundary = c.slices[0].1 + c.slices[c.slices.len() - 1].1;
        let ok = enumerated == size && distinct == size && bx.size() == size;
        let ok = ok && enum_boundary == boundary && bx.boundary_size() == boundary;
        pass &= ok;
        notes.push(format!("DL({m},{n}) L=3 {enumerated}/{enum_boundary}"));
    }
    let ratios = |m, n| -> Result<Vec<f64>> {
        (1..=6).map(|l| Ok(DlBox::centered(DlGraph::new(m, n)?, l)?.folner_ratio())).collect()
    };
    let r22 = ratios(2, 2)?;
    let r32 = ratios(3, 2)?;
    let decreasing = r22.windows(2).all(|w| w[1] < w[0]);
    let floor = r32.iter().copied().fold(f64::INFINITY, f64::min);
    pass &= decreasing && floor > 0.3;
    notes.push(format!("DL(2,2) ratios decreasing {decreasing}, DL(3,2) ratios ≥ {floor:.4}"));
    let t = start.elapsed();
    outcome(pass && within(t, 60.0), format!("{}; {t:.1?}", notes.join("; ")))
}

// 5 -----------------------------------------------------------------------

fn criterion_5() -> Result<Outcome> {
    let start = Instant::now();
    let c = ll_dl_ball_check(2, 6)?;
    // the entry point used by the check agrees with the two-way bijection
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut round_trips = true;
    for _ in 0..200 {
        let g = LampElement::random(&mut rng, 2, 4, 4);
        let BijectionOutput::Dl(p) = ll_dl_bijection(BijectionInput::Lamp(&g), 2)? else { return outcome(false, "wrong direction") };
        let BijectionOutput::Lamp(h) = ll_dl_bijection(BijectionInput::Dl(&p), 2)? else { return outcome(false, "wrong direction") };
        round_trips &= g == h;
    }
    let t = start.elapsed();
    outcome(
        c.isomorphic() && round_trips && within(t, 30.0),
        format!(
            "{} vertices, {} lamplighter edges, {}/{} preserved forward, {}/{} backward; {t:.1?}",
            c.lamp_vertices, c.lamp_edges, c.forward_preserved, c.lamp_edges, c.backward_preserved, c.dl_edges
        ),
    )
}

// 6, 7 --------------------------------------------------------------------

fn criteria_6_7() -> Result<(Outcome, Outcome)> {
    let params = SolParams::STANDARD;
    let fam = adversarial_sol_family(1000, 6, 3.0, 5.0, 80.0, 0.5, params)?;
    let (mut checks, mut mono_bad, mut eff_bad) = (0, 0, 0);
    let mut worst: f64 = 0.0;
    for g in &fam {
        let ladder = ScaleLadder::fitting(2.0, 2.0, g.trace.span())?;
        for eps in [0.05, 0.1, 0.2] {
            let m = delta_profile(&params, &g.trace, &ladder, eps, Mode::Monotone)?.total();
            let e = delta_profile(&params, &g.trace, &ladder, eps, Mode::Efficient)?.total();
            mono_bad += usize::from(m > g.constants.monotone_bound(eps));
            eff_bad += usize::from(e > g.constants.efficient_bound(eps));
            worst = worst.max(m / g.constants.monotone_bound(eps)).max(e / g.constants.efficient_bound(eps));
            checks += 1;
        }
    }
    let six = Outcome {
        pass: fam.len() == 1000 && mono_bad == 0 && eff_bad == 0,
        detail: format!(
            "{} traces × 3 ε: {mono_bad} monotone and {eff_bad} efficient violations in {checks} checks, largest Σδ/bound {worst:.4}",
            fam.len()
        ),
    };
    let (mut windows, mut ineff, mut bad) = (0, 0, 0);
    for g in &fam {
        for eps in [0.05, 0.1, 0.2] {
            let s = subdivision_check(&params, &g.trace, g.constants, eps, 2.0, 2.0)?;
            windows += s.windows;
            ineff += s.inefficient;
            bad += s.violations;
        }
    }
    let seven = Outcome {
        pass: bad == 0 && ineff > 0,
        detail: format!("{windows} windows with r ≥ 2KC, {ineff} inefficient, {bad} with gain below εr/(2K)"),
    };
    Ok((six, seven))
}

// 8 -----------------------------------------------------------------------

fn criterion_8() -> Result<Outcome> {
    let start = Instant::now();
    let params = SolParams::STANDARD;
    let run = || -> Result<_> {
        let bx = SolBox::at_identity(8.0)?;
        let f = make_bilipschitz_1d(1, 2.0, 10)?;
        let g = make_bilipschitz_1d(2, 2.0, 10)?;
        let map = SampledMap::new(make_standard_map(f, g, false), 0.1, params)?;
        let map = perturb_map_with(&map, 1.0, 3, NoiseModel::Smooth)?;
        let family = sol_box_vertical_family(&bx, 200, 4, params)?
            .iter()
            .map(|seg| Ok(seg.trace(321)?.map_points(|p| map.eval(*p))))
            .collect::<Result<Vec<_>>>()?;
        let ladder = ScaleLadder::geometric(2.0, 2.0, 3)?;
        coarse_differentiate(&params, &family, &ladder, 0.1, 0.1, Mode::Efficient)
    };
    let a = run()?;
    let b = run()?;
    let t = start.elapsed();
    outcome(
        a.fraction >= 0.9 && a == b && within(t / 2, 120.0),
        format!("m* = {}, fraction {:.4}, repeat identical {}, {:.1?} per run", a.m_star, a.fraction, a == b, t / 2),
    )
}

// 9 -----------------------------------------------------------------------

fn criterion_9() -> Result<Outcome> {
    let params = SolParams::STANDARD;
    let bx = SolBox::at_identity(8.0)?;
    let cfg = StepConfig::default();
    let (mut cs, mut sups) = (Vec::new(), Vec::new());
    let mut correct = 0;
    for seed in 0..20u64 {
        let f = make_bilipschitz_1d(2 * seed, 2.0, 10)?;
        let g = make_bilipschitz_1d(2 * seed + 1, 2.0, 10)?;
        let flip = seed % 2 == 1;
        let base = SampledMap::new(make_standard_map(f, g, flip), 0.1, params)?;
        for c in [0.5, 1.0, 2.0] {
            let det = detect_sol(&perturb_map_with(&base, c, 100 + seed, NoiseModel::Smooth)?, &bx, &cfg)?;
            let Some(fit) = det.fit else { continue };
            if fit.map.flip == flip {
                correct += 1;
            }
            cs.push(c);
            sups.push(fit.sup_distance);
        }
    }
    let rho = spearman(&cs, &sups)?;
    outcome(
        correct == 60 && rho >= 0.9,
        format!("flip and orientation recovered {correct}/60 (20 maps × 3 noise levels), Spearman(C, sup) = {rho:.4}"),
    )
}

// 10 ----------------------------------------------------------------------

fn vertical(base: SolPoint, height: f64) -> Result<PathTrace<SolPoint>> {
    PathTrace::sample(0.0, height, 121, |t| SolPoint::new(base.x, base.y, base.z + t))
}

fn criterion_10() -> Result<Outcome> {
    let params = SolParams::STANDARD;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (mut classified, mut equivariant) = (0, 0);
    let mut cases: HashMap<&'static str, usize> = HashMap::new();
    for k in 0..1000 {
        let z0: f64 = rng.gen_range(-2.0..2.0);
        let (x0, y0) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let dx = rng.gen_range(0.5..5.0) * (0.5 * z0).exp() * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let dy = rng.gen_range(0.2..0.9) * (-0.5 * z0).exp() * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let h = rng.gen_range(5.0..25.0);
        let p1 = SolPoint::new(x0, y0, z0);
        let mut corners = [p1, SolPoint::new(x0 + dx, y0, z0), SolPoint::new(x0, y0, z0 + h), SolPoint::new(x0, y0 + dy, z0 + h)];
        let mut segs = [
            vertical(p1, h)?,
            vertical(SolPoint::new(x0, y0 + dy, z0), h)?,
            vertical(SolPoint::new(x0 + dx, y0, z0), h)?,
            vertical(SolPoint::new(x0 + dx, y0 + dy, z0), h)?,
        ];
        // half of the sample starts from the downward configuration
        if k % 2 == 1 {
            corners = corners.map(|p| p.flipped());
            segs = segs.map(|s| s.map_points(|p| p.flipped()));
        }
        let v = sol_classify_quadrilateral(corners, [&segs[0], &segs[1], &segs[2], &segs[3]], 1.0, params);
        let fc = corners.map(|p| p.flipped());
        let fs = segs.clone().map(|s| s.map_points(|p| p.flipped()));
        let w = sol_classify_quadrilateral(fc, [&fs[0], &fs[1], &fs[2], &fs[3]], 1.0, params);
        if let (Ok(v), Ok(w)) = (v, w) {
            classified += 1;
            *cases.entry(if v.case == PairingCase::UpwardPairing { "upward" } else { "downward" }).or_default() += 1;
            if v.case != w.case && v.deviation == w.deviation {
                equivariant += 1;
            }
        }
    }
    outcome(
        classified == 1000 && equivariant == 1000,
        format!("{classified}/1000 classified ({cases:?}), {equivariant}/1000 flip-equivariant"),
    )
}

// 11 ----------------------------------------------------------------------

fn criterion_11() -> Result<Outcome> {
    let (m, n) = (3u32, 2u32);
    let g = DlGraph::new(m, n)?;
    let mut pass = true;
    let mut notes = Vec::new();
    for l in 1..=4 {
        let bx = DlBox::centered(g, l)?;
        // incidences counted geodesic by geodesic where that is affordable
        if l <= 3 {
            let fam = dl_vertical_family(&bx, usize::MAX, 0)?;
            let mut hits: HashMap<&DlVertex, u64> = HashMap::new();
            for geo in &fam {
                for p in geo {
                    *hits.entry(p).or_default() += 1;
                }
            }
            pass &= hits.len() as u64 == bx.size();
            pass &= hits.iter().all(|(p, c)| *c == bx.incidences(p.height()));
        }
        // w(h)·I(h) = w(0)·I(0) as integers: I(h)·n^h = I(0)·m^h, mirrored below 0
        let i0 = u128::from(bx.incidences(0));
        let exact = (bx.bottom()..=bx.top()).all(|h| {
            let ih = u128::from(bx.incidences(h));
            let e = h.unsigned_abs() as u32;
            if h >= 0 {
                ih * u128::from(n).pow(e) == i0 * u128::from(m).pow(e)
            } else {
                ih * u128::from(m).pow(e) == i0 * u128::from(n).pow(e)
            }
        });
        let w0 = dl_height_weight(bx.bottom(), m, n) * bx.incidences(bx.bottom()) as f64;
        let float = (bx.bottom()..=bx.top()).all(|h| dl_height_weight(h, m, n) * bx.incidences(h) as f64 == w0);
        pass &= exact && float;
        notes.push(format!("L={l}: w·I = {w0}"));
    }
    outcome(pass, notes.join(", "))
}

fn main() {
    let (six, seven) = match criteria_6_7() {
        Ok((six, seven)) => (Ok(six), Ok(seven)),
        Err(e) => {
            let msg = e.to_string();
            (Err(e), Err(sol_coarse::Error::Degenerate(msg)))
        }
    };
    let results: Vec<(u32, Result<Outcome>)> = vec![
        (1, criterion_1()),
        (2, criterion_2()),
        (3, criterion_3()),
        (4, criterion_4()),
        (5, criterion_5()),
        (6, six),
        (7, seven),
        (8, criterion_8()),
        (9, criterion_9()),
        (10, criterion_10()),
        (11, criterion_11()),
    ];
    let mut failed = 0;
    for (k, r) in results {
        match r {
            Ok(o) => {
                failed += usize::from(!o.pass);
                println!("acceptance {k:2}: {}  {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
            }
            Err(e) => {
                failed += 1;
                println!("acceptance {k:2}: FAIL  error: {e}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
