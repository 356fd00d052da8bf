//! One line per acceptance row; fails if any row fails.
//! `cargo test -p lelong-lab --test acceptance -- <tag-or-number>` runs a subset.

use lelong_lab::acceptance::{select, tol};
use std::process::ExitCode;

fn main() -> ExitCode {
    // libtest flags such as --nocapture may be forwarded; the first bare word is a filter
    let only = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let rows = select(only.as_deref());
    println!(
        "acceptance: {} rows; tolerances: point {:e}, worked example {:e} rel, scaling {:e}, binomial {:e}, horizontal {:e}, \
         Jensen {:e}, vertical slope {}, intrinsic {}x, conic {} / {}, slopes {}/{}/{}, MC {}/{} within {} sigma",
        rows.len(),
        tol::POINT_PLANE,
        tol::WORKED_EXAMPLE_REL,
        tol::SCALING_REL,
        tol::BINOMIAL_REL,
        tol::HORIZONTAL,
        tol::JENSEN_REL,
        tol::VERTICAL_SLOPE,
        tol::INTRINSIC_FACTOR,
        tol::CONIC_PASS,
        tol::CONIC_CONTROL,
        tol::FIBER_SLOPE,
        tol::BASE_SLOPE,
        tol::PHI_SLOPE,
        tol::MC_INSIDE,
        tol::MC_RUNS,
        tol::MC_SIGMAS,
    );
    let mut failed = 0;
    for c in rows {
        let r = c.run();
        println!("{}", r.line());
        failed += usize::from(!r.pass);
    }
    if failed == 0 {
        println!("acceptance: all rows pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} row(s) failed");
        ExitCode::FAILURE
    }
}
