//! Plain-text dump of a [`ConicProgram`] for cross-checking with other tools.
//!
//! Grammar, one item per line:
//!
//! ```text
//! vars <n>
//! linear <c_0> <c_1> ... <c_{n-1}>
//! offset <value>
//! quad <i> <j> <Q_ij>                      (upper triangle, i <= j)
//! bound <j> <lo> <hi>                      (only finite bounds are listed)
//! block <zero|nonnegative|second_order> <dim> | <j>:<a> ... = <rhs> | ...
//! ```
//!
//! A block line lists its rows separated by `|`; row `k` means
//! `sum a_j v_j - rhs` and the vector of rows must lie in the cone.

use std::fmt::Write;

use super::ConicProgram;
use crate::geometry::ConeKind;

pub fn dump_program(prog: &ConicProgram) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "vars {}", prog.num_vars);
    let _ = write!(out, "linear");
    for c in &prog.linear {
        let _ = write!(out, " {c:e}");
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "offset {:e}", prog.offset);
    for &(i, j, q) in &prog.quadratic {
        let _ = writeln!(out, "quad {i} {j} {q:e}");
    }
    for (j, &(lo, hi)) in prog.var_bounds.iter().enumerate() {
        if lo.is_finite() || hi.is_finite() {
            let _ = writeln!(out, "bound {j} {lo:e} {hi:e}");
        }
    }
    for block in &prog.blocks {
        let kind = match block.cone.kind {
            ConeKind::Zero => "zero",
            ConeKind::Nonnegative => "nonnegative",
            ConeKind::SecondOrder => "second_order",
        };
        let _ = write!(out, "block {kind} {}", block.cone.dim);
        for row in &block.rows {
            let _ = write!(out, " |");
            for &(j, a) in &row.terms {
                let _ = write!(out, " {j}:{a:e}");
            }
            let _ = write!(out, " = {:e}", row.rhs);
        }
        let _ = writeln!(out);
    }
    out
}
