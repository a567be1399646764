//! Estimating QI constants of sampled paths and testing them for
//! ε-monotonicity and ε-efficiency; a trace file round-trip on the way.

use std::io::Cursor;

use sol_coarse::coarse::{estimate_qi_constants, fit_vertical, is_eps_efficient, is_eps_monotone};
use sol_coarse::qgen::{sol_quasi_geodesic, QgKind};
use sol_coarse::sol::SolParams;
use sol_coarse::trace::{read_trace_file, write_trace_file, AnyTrace, TraceRecord};

fn main() -> sol_coarse::Result<()> {
    let params = SolParams::STANDARD;
    let mut records = Vec::new();
    for (i, kind) in QgKind::ALL.into_iter().enumerate() {
        records.push(TraceRecord::from_sol(params, &sol_quasi_geodesic(kind, i as u64, 40.0, 0.5, params)?));
    }
    let mut buf = Vec::new();
    write_trace_file(&mut buf, &records)?;
    for rec in read_trace_file(Cursor::new(buf))? {
        let AnyTrace::Sol(p, tr) = AnyTrace::try_from(&rec)? else { continue };
        let q = estimate_qi_constants(&p, &tr)?;
        let mono = is_eps_monotone(&p, &tr, 0.1)?;
        let eff = is_eps_efficient(&p, &tr, 0.1, tr.span() / 4.0)?;
        let fit = fit_vertical(p, &tr)?;
        println!(
            "span {:.1}: K {:.2} C {:.1}, monotone {}, efficient {}, vertical within {:.3}",
            tr.span(),
            q.k,
            q.c,
            mono.monotone,
            eff.efficient,
            fit.hausdorff
        );
    }
    Ok(())
}
