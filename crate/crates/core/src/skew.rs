//! Conjugated interval, planar, and three-dimensional extensions.
//!
//! The expanding interval map `L` plays the role of the symbol shift under
//! the coding map `h`; the planar map `G` couples `L` with the fiber maps;
//! the invertible map on the cube extends `G` with a third coordinate that
//! records enough history to run backwards. Every branch of every map here
//! preserves Lebesgue measure of the appropriate dimension.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::system::SystemParams;

/// A point of the unit cube.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Point3 {
    pub w: f64,
    pub x: f64,
    pub y: f64,
}

impl Point3 {
    pub fn new(w: f64, x: f64, y: f64) -> Result<Self> {
        for (name, v) in [("w", w), ("x", x), ("y", y)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::domain(format!("coordinate {name} = {v} outside [0, 1)")));
            }
        }
        Ok(Point3 { w, x, y })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Branch index of `w`: `0` on `[0, p0)`, else the `i` with
/// `r_i <= w < r_{i+1}`, `1 <= i <= M`.
fn branch_of(sys: &SystemParams, w: f64) -> usize {
    // breakpoints = r_0..r_{M+1}; half-open branches as printed.
    for i in (0..=sys.contractions as usize).rev() {
        if w >= sys.breakpoints[i] {
            return i;
        }
    }
    0
}

/// The expanding interval map conjugate to the symbol shift.
///
/// `w/p0` on `[0, p0)`, `M (w - r_i) / (1 - p0)` on `[r_i, r_{i+1})`.
pub fn l_map(sys: &SystemParams, w: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&w) {
        return Err(Error::domain(format!("w = {w} outside [0, 1)")));
    }
    Ok(l_step(sys, w))
}

#[inline]
fn l_step(sys: &SystemParams, w: f64) -> f64 {
    let i = branch_of(sys, w);
    if i == 0 {
        w / sys.p0
    } else {
        sys.contractions as f64 * (w - sys.breakpoints[i]) / (1.0 - sys.p0)
    }
}

/// The planar map driving the fiber by the branch of `w`.
pub fn g_map(sys: &SystemParams, w: f64, x: f64) -> Result<(f64, f64)> {
    for (name, v) in [("w", w), ("x", x)] {
        if !(0.0..1.0).contains(&v) {
            return Err(Error::domain(format!("{name} = {v} outside [0, 1)")));
        }
    }
    let i = branch_of(sys, w);
    let fiber = if i == 0 {
        let y = x * sys.expansion as f64;
        let frac = y - y.floor();
        if frac >= 1.0 {
            0.0
        } else {
            frac
        }
    } else {
        (x + (i - 1) as f64) / sys.contractions as f64
    };
    Ok((l_step(sys, w), fiber))
}

/// The invertible extension on the cube, forwards or backwards.
///
/// Forward branches are selected by `(w, x)`; inverse branches by `(y, x)`.
/// `gamma(gamma(p, Forward), Inverse)` returns `p` up to rounding.
pub fn gamma(sys: &SystemParams, p: Point3, direction: Direction) -> Result<Point3> {
    let Point3 { w, x, y } = p;
    for (name, v) in [("w", w), ("x", x), ("y", y)] {
        if !(0.0..1.0).contains(&v) {
            return Err(Error::domain(format!("{name} = {v} outside [0, 1)")));
        }
    }
    let n = sys.expansion as f64;
    let m = sys.contractions as f64;
    let p0 = sys.p0;
    let out = match direction {
        Direction::Forward => {
            if w < p0 {
                let j = (x * n).floor().min(n - 1.0);
                Point3 {
                    w: w / p0,
                    x: n * x - j,
                    y: p0 * (y + j) / n,
                }
            } else {
                let i = branch_of(sys, w);
                Point3 {
                    w: m * (w - sys.breakpoints[i]) / (1.0 - p0),
                    x: (x + (i - 1) as f64) / m,
                    y: (1.0 - p0) * y + p0,
                }
            }
        }
        Direction::Inverse => {
            if y < p0 {
                let j = (y * n / p0).floor().min(n - 1.0);
                Point3 {
                    w: p0 * w,
                    x: (x + j) / n,
                    y: n * y / p0 - j,
                }
            } else {
                let i = (x * m).floor().min(m - 1.0);
                Point3 {
                    w: (1.0 - p0) * (w + i) / m + p0,
                    x: m * x - i,
                    y: (y - p0) / (1.0 - p0),
                }
            }
        }
    };
    Ok(clamp_cube(out))
}

fn clamp_cube(p: Point3) -> Point3 {
    let fix = |v: f64| {
        if v >= 1.0 {
            1.0 - f64::EPSILON / 2.0
        } else if v < 0.0 {
            0.0
        } else {
            v
        }
    };
    Point3 {
        w: fix(p.w),
        x: fix(p.x),
        y: fix(p.y),
    }
}

/// Per-branch absolute Jacobian determinants of the forward cube map.
///
/// `(1/p0) * N * (p0/N)` for the expanding branch and
/// `(M/(1-p0)) * (1/M) * (1-p0)` for each contracting branch; both are 1, so
/// every branch preserves volume.
pub fn gamma_branch_jacobians(sys: &SystemParams) -> (f64, f64) {
    let n = sys.expansion as f64;
    let m = sys.contractions as f64;
    let p0 = sys.p0;
    let expanding = (1.0 / p0) * n * (p0 / n);
    let contracting = (m / (1.0 - p0)) * (1.0 / m) * (1.0 - p0);
    (expanding, contracting)
}

/// Sum of reciprocal branch slopes of `L` (equals 1: Lebesgue is invariant).
pub fn l_inverse_slope_sum(sys: &SystemParams) -> f64 {
    let m = sys.contractions as f64;
    let expanding_slope = 1.0 / sys.p0;
    let contracting_slope = m / (1.0 - sys.p0);
    1.0 / expanding_slope
        + (1..=sys.contractions).map(|_| 1.0 / contracting_slope).sum::<f64>()
}

/// Value of the coding map on a finite word extended periodically.
///
/// `h(omega) = sum_i (prod_{j<i} p_{omega_j}) r_{omega_i}`; the series is
/// truncated once the cumulative weight drops below 1e-17, beyond double
/// precision. Satisfies `h(shift omega) = L(h(omega))`.
pub fn encode_h(sys: &SystemParams, word: &[u8], tail_symbol: u8) -> Result<f64> {
    for &s in word.iter().chain(std::iter::once(&tail_symbol)) {
        if s as u32 > sys.contractions {
            return Err(Error::domain(format!(
                "symbol {s} outside 0..={}",
                sys.contractions
            )));
        }
    }
    let mut weight = 1.0f64;
    let mut sum = 0.0f64;
    let mut i = 0usize;
    while weight >= 1e-17 {
        let s = if i < word.len() { word[i] } else { tail_symbol } as usize;
        sum += weight * sys.breakpoints[s];
        weight *= sys.probs[s];
        i += 1;
    }
    Ok(sum)
}
