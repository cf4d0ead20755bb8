//! One-dimensional searches used by the stage solvers.

/// Interval width at which golden-section search stops.
pub const GOLDEN_TOL: f64 = 1e-9;
pub const GOLDEN_MAX_ITER: usize = 200;
/// Bracket width at which boundary bisection stops.
pub const BISECT_TOL: f64 = 1e-9;

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Minimizes a unimodal `f` on `[lo, hi]`.
///
/// Returns `(argmin, min)`. The endpoints are compared with the interior
/// estimate, so minima sitting on the boundary are recovered exactly.
pub fn golden_section_min<F>(mut f: F, lo: f64, hi: f64, tol: f64, max_iter: usize) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    let f_lo = f(lo);
    if hi <= lo {
        return (lo, f_lo);
    }
    let f_hi = f(hi);

    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..max_iter {
        if b - a <= tol {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    let f_mid = f(mid);

    // Ties go to the leftmost candidate; if nothing is finite, report `lo`.
    let mut best = (lo, f_lo);
    for cand in [(c, fc), (mid, f_mid), (d, fd), (hi, f_hi)] {
        if cand.1 < best.1 || (best.1.is_nan() && !cand.1.is_nan()) {
            best = cand;
        }
    }
    best
}

/// Locates the boundary of `{u : ok(u)}` between a point where `ok` holds and
/// one where it fails. Returns the last point known to satisfy `ok`.
pub fn bisect_boundary<F>(mut ok: F, mut inside: f64, mut outside: f64, tol: f64) -> f64
where
    F: FnMut(f64) -> bool,
{
    while (outside - inside).abs() > tol {
        let mid = 0.5 * (inside + outside);
        if mid == inside || mid == outside {
            break;
        }
        if ok(mid) {
            inside = mid;
        } else {
            outside = mid;
        }
    }
    inside
}
