//! The generating maps and their orbits.
//!
//! A system is a pair of integers `(M, N)` together with a weight `p0`. It
//! generates `M + 1` affine maps on `[0, 1)`: symbol `0` is the expanding map
//! `x -> N x (mod 1)`, chosen with probability `p0`, and symbols `1..=M` are
//! the contractions `x -> (x + i - 1) / M`, each chosen with probability
//! `(1 - p0) / M`. Lebesgue measure is stationary for every such system; the
//! qualitative behavior of pairs of orbits driven by one symbol sequence is
//! governed by the sign of the Lyapunov exponent
//! `p0 ln N - (1 - p0) ln M`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Largest double below 1; used to keep contracted points inside `[0, 1)`.
const ONE_BELOW: f64 = 1.0 - f64::EPSILON / 2.0;

/// Parameters of one system: map family, probability vector, and derived data.
#[derive(Debug, Clone, Serialize)]
pub struct SystemParams {
    /// Number of contracting branches; each contracts by `1/contractions`.
    pub contractions: u32,
    /// Expansion factor of the symbol-0 map.
    pub expansion: u32,
    /// Probability of the expanding map.
    pub p0: f64,
    /// `(p0, (1-p0)/M, ..., (1-p0)/M)`, length `M + 1`.
    pub probs: Vec<f64>,
    /// Cumulative probabilities `r_0 = 0 < r_1 < ... < r_{M+1} = 1`.
    pub breakpoints: Vec<f64>,
    /// Lyapunov exponent `p0 ln N - (1-p0) ln M`.
    pub lyapunov: f64,
}

impl SystemParams {
    /// Builds a system from `(M, N, p0)`.
    ///
    /// Requires `M >= 2`, `N >= 2` and `0 < p0 < 1`.
    pub fn new(contractions: u32, expansion: u32, p0: f64) -> Result<Self> {
        if contractions < 2 {
            return Err(Error::domain(format!("M must be >= 2, got {contractions}")));
        }
        if expansion < 2 {
            return Err(Error::domain(format!("N must be >= 2, got {expansion}")));
        }
        if !(p0 > 0.0 && p0 < 1.0) {
            return Err(Error::domain(format!("p0 must lie in (0, 1), got {p0}")));
        }
        let m = contractions as usize;
        let contraction_prob = (1.0 - p0) / contractions as f64;
        let mut probs = Vec::with_capacity(m + 1);
        probs.push(p0);
        probs.extend(std::iter::repeat_n(contraction_prob, m));

        let mut breakpoints = Vec::with_capacity(m + 2);
        let mut cum = 0.0;
        breakpoints.push(0.0);
        for &p in &probs {
            cum += p;
            breakpoints.push(cum);
        }
        debug_assert!((cum - 1.0).abs() < 1e-12);
        // Pin the last breakpoint so inverse-CDF draws in [0,1) always land.
        *breakpoints.last_mut().unwrap() = 1.0;

        let lyapunov =
            p0 * (expansion as f64).ln() - (1.0 - p0) * (contractions as f64).ln();

        Ok(SystemParams {
            contractions,
            expansion,
            p0,
            probs,
            breakpoints,
            lyapunov,
        })
    }

    /// The discontinuity points `1/N, ..., (N-1)/N` of the expanding map.
    pub fn discontinuities(&self) -> impl Iterator<Item = f64> + '_ {
        (1..self.expansion).map(move |i| i as f64 / self.expansion as f64)
    }

    /// Log-derivative of the map with the given symbol.
    pub fn log_slope(&self, symbol: u8) -> f64 {
        if symbol == 0 {
            (self.expansion as f64).ln()
        } else {
            -(self.contractions as f64).ln()
        }
    }

    /// Applies the map with the given symbol; no domain checks.
    #[inline]
    pub(crate) fn step(&self, symbol: u8, x: f64) -> f64 {
        if symbol == 0 {
            let y = x * self.expansion as f64;
            let frac = y - y.floor();
            if frac >= 1.0 {
                0.0
            } else {
                frac
            }
        } else {
            let y = (x + (symbol - 1) as f64) / self.contractions as f64;
            if y >= 1.0 {
                ONE_BELOW
            } else {
                y
            }
        }
    }
}

/// Applies `f_symbol` to `x`.
///
/// Symbol `0` is `x -> N x (mod 1)`; symbols `1..=M` are `x -> (x+i-1)/M`.
pub fn apply_map(sys: &SystemParams, symbol: u8, x: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&x) {
        return Err(Error::domain(format!("point {x} outside [0, 1)")));
    }
    if symbol as u32 > sys.contractions {
        return Err(Error::domain(format!(
            "symbol {symbol} outside 0..={}",
            sys.contractions
        )));
    }
    Ok(sys.step(symbol, x))
}

/// An i.i.d. symbol source with the system's probability vector.
///
/// Symbols are drawn by inverse CDF against the breakpoints, mirroring the
/// conjugacy between the Bernoulli shift and the expanding interval map: a
/// uniform draw in `[r_i, r_{i+1})` yields symbol `i`.
#[derive(Debug, Clone)]
pub struct SymbolStream {
    rng: ChaCha8Rng,
    breakpoints: Vec<f64>,
}

impl SymbolStream {
    pub fn new(sys: &SystemParams, seed: u64) -> Self {
        SymbolStream {
            rng: rng_from_seed(seed),
            breakpoints: sys.breakpoints.clone(),
        }
    }

    #[inline]
    pub fn next_symbol(&mut self) -> u8 {
        let u: f64 = self.rng.random();
        symbol_from_uniform(&self.breakpoints, u)
    }

    /// Materializes the next `n` symbols as a finite word.
    pub fn take_word(&mut self, n: usize) -> Vec<u8> {
        (0..n).map(|_| self.next_symbol()).collect()
    }
}

impl Iterator for SymbolStream {
    type Item = u8;

    fn next(&mut self) -> Option<u8> {
        Some(self.next_symbol())
    }
}

#[inline]
pub(crate) fn symbol_from_uniform(breakpoints: &[f64], u: f64) -> u8 {
    // breakpoints = r_0..r_{M+1}; u in [r_i, r_{i+1}) picks symbol i.
    for (i, &r) in breakpoints[1..].iter().enumerate() {
        if u < r {
            return i as u8;
        }
    }
    (breakpoints.len() - 2) as u8
}

/// The orbit of one start under a fixed symbol sequence.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrbitRecord {
    /// `points[t] = f^t(x0)`; length `steps + 1`.
    pub points: Vec<f64>,
    /// Cumulative log derivative; `log_deriv[t] = a ln N - b ln M` where
    /// `a`, `b` count expanding/contracting symbols among the first `t`.
    pub log_deriv: Vec<f64>,
    /// `crossings[t]` is set when step `t` applied symbol 0 while the tracked
    /// points straddled a discontinuity of the expanding map.
    pub crossings: Vec<bool>,
}

/// Iterates every start under one symbol sequence (the d-point motion).
///
/// All starts see the same symbols; the crossing flags are shared between the
/// returned records since they are a property of the tracked set.
pub fn iterate_orbit<I>(
    sys: &SystemParams,
    symbols: I,
    starts: &[f64],
    steps: usize,
) -> Result<Vec<OrbitRecord>>
where
    I: IntoIterator<Item = u8>,
{
    for &x in starts {
        if !(0.0..1.0).contains(&x) {
            return Err(Error::domain(format!("start {x} outside [0, 1)")));
        }
    }
    let ln_n = (sys.expansion as f64).ln();
    let ln_m = (sys.contractions as f64).ln();

    let mut records: Vec<OrbitRecord> = starts
        .iter()
        .map(|&x| OrbitRecord {
            points: {
                let mut v = Vec::with_capacity(steps + 1);
                v.push(x);
                v
            },
            log_deriv: {
                let mut v = Vec::with_capacity(steps + 1);
                v.push(0.0);
                v
            },
            crossings: Vec::with_capacity(steps),
        })
        .collect();

    let mut current: Vec<f64> = starts.to_vec();
    let mut expansions: i64 = 0;
    let mut contractions_count: i64 = 0;
    let mut symbols = symbols.into_iter();

    for t in 0..steps {
        let symbol = symbols.next().ok_or_else(|| {
            Error::domain(format!("symbol sequence exhausted after {t} of {steps} steps"))
        })?;
        if symbol as u32 > sys.contractions {
            return Err(Error::domain(format!(
                "symbol {symbol} outside 0..={}",
                sys.contractions
            )));
        }

        let crossing = symbol == 0 && straddles_discontinuity(sys, &current);
        if symbol == 0 {
            expansions += 1;
        } else {
            contractions_count += 1;
        }
        let log_d = expansions as f64 * ln_n - contractions_count as f64 * ln_m;

        for (x, rec) in current.iter_mut().zip(records.iter_mut()) {
            *x = sys.step(symbol, *x);
            rec.points.push(*x);
            rec.log_deriv.push(log_d);
            rec.crossings.push(crossing);
        }
    }
    Ok(records)
}

/// Iterates a finite word over every start; the word length sets the steps.
pub fn iterate_word(sys: &SystemParams, word: &[u8], starts: &[f64]) -> Result<Vec<OrbitRecord>> {
    iterate_orbit(sys, word.iter().copied(), starts, word.len())
}

/// Whether the tracked points lie on different sides of some discontinuity.
///
/// A point exactly at a discontinuity counts as the right side, matching the
/// half-open branch intervals.
fn straddles_discontinuity(sys: &SystemParams, points: &[f64]) -> bool {
    if points.len() < 2 {
        return false;
    }
    let lo = points.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = points.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    sys.discontinuities().any(|c| lo < c && hi >= c)
}

/// The transfer sum `sum_i p_i * density((f_i)_* lambda)(x)` at `x`.
///
/// The expanding map contributes `p_0 * N * (1/N)`; a contraction contributes
/// `p_i * M` exactly when `x` lies in its image `[(i-1)/M, i/M)`. For the
/// stationary probability vector the sum is identically 1.
pub fn transfer_density_sum(probs: &[f64], contractions: u32, expansion: u32, x: f64) -> f64 {
    let n = expansion as f64;
    let m = contractions as f64;
    let mut sum = probs[0] * n * (1.0 / n);
    for i in 1..=contractions {
        let lo = (i - 1) as f64 / m;
        let hi = i as f64 / m;
        if x >= lo && x < hi {
            sum += probs[i as usize] * m;
        }
    }
    sum
}

/// Max deviation `|transfer sum - 1|` over the given points.
///
/// Exact branch bookkeeping, no sampling: this certifies that Lebesgue
/// measure is stationary for the system's probability vector.
pub fn transfer_density_check(sys: &SystemParams, xs: &[f64]) -> f64 {
    xs.iter()
        .map(|&x| (transfer_density_sum(&sys.probs, sys.contractions, sys.expansion, x) - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Convenience: deviation over an equispaced grid of `points` grid points.
pub fn transfer_density_check_grid(sys: &SystemParams, points: usize) -> f64 {
    let xs: Vec<f64> = (0..points).map(|i| i as f64 / points as f64).collect();
    transfer_density_check(sys, &xs)
}

/// Draws a uniform point in `[0, 1)`.
pub fn uniform_point(rng: &mut impl Rng) -> f64 {
    let x: f64 = rng.random();
    if x >= 1.0 {
        0.0
    } else {
        x
    }
}
