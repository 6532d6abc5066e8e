//! Adaptive Simpson quadrature.

/// Default absolute tolerance.
pub const ABS_TOL: f64 = 1e-9;
/// Cap on the number of subintervals examined per call.
pub const MAX_INTERVALS: usize = 1 << 20;
const MIN_DEPTH: u32 = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    /// False if the interval cap was hit before every piece met its tolerance.
    pub converged: bool,
    pub intervals: usize,
}

struct Piece {
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
}

/// Integral of f over [a, b] to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Quadrature {
    integrate_panels(f, a, b, 1, tol)
}

/// Splits [a, b] into `panels` equal pieces first, distributing the tolerance by length.
/// Oscillatory integrands need enough panels that Simpson's first estimate is not
/// fooled by aliasing.
pub fn integrate_panels<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    panels: usize,
    tol: f64,
) -> Quadrature {
    if a == b {
        return Quadrature {
            value: 0.0,
            error: 0.0,
            converged: true,
            intervals: 0,
        };
    }
    let panels = panels.max(1);
    let h = (b - a) / panels as f64;
    let mut stack: Vec<Piece> = Vec::with_capacity(64 + panels);
    for i in (0..panels).rev() {
        let lo = a + h * i as f64;
        let hi = if i + 1 == panels { b } else { lo + h };
        let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
        stack.push(Piece {
            a: lo,
            b: hi,
            fa,
            fm,
            fb,
            whole: simpson(lo, hi, fa, fm, fb),
            tol: tol / panels as f64,
            depth: 0,
        });
    }
    let mut value = 0.0;
    let mut error = 0.0;
    let mut converged = true;
    let mut intervals = 0usize;
    while let Some(p) = stack.pop() {
        intervals += 1;
        let m = 0.5 * (p.a + p.b);
        let lm = 0.5 * (p.a + m);
        let rm = 0.5 * (m + p.b);
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(p.a, m, p.fa, flm, p.fm);
        let right = simpson(m, p.b, p.fm, frm, p.fb);
        let diff = left + right - p.whole;
        let done = p.depth >= MIN_DEPTH && diff.abs() <= 15.0 * p.tol;
        let capped = intervals + stack.len() >= MAX_INTERVALS || (m - p.a) <= f64::EPSILON * m.abs();
        if done || capped {
            if !done {
                converged = false;
            }
            value += left + right + diff / 15.0;
            error += diff.abs() / 15.0;
            continue;
        }
        stack.push(Piece {
            a: m,
            b: p.b,
            fa: p.fm,
            fm: frm,
            fb: p.fb,
            whole: right,
            tol: 0.5 * p.tol,
            depth: p.depth + 1,
        });
        stack.push(Piece {
            a: p.a,
            b: m,
            fa: p.fa,
            fm: flm,
            fb: p.fm,
            whole: left,
            tol: 0.5 * p.tol,
            depth: p.depth + 1,
        });
    }
    Quadrature {
        value,
        error,
        converged,
        intervals,
    }
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}
