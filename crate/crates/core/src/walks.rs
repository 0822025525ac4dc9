//! Line walks with drift, first-passage times, and the stopping times that
//! drive the intermittency analysis.
//!
//! The derivative of an orbit composition is a product of two constants, so
//! its logarithm is a random walk on the line: down `ln N` with probability
//! `p0`, up `ln M` otherwise. This module provides that walk in general form
//! (arbitrary step pair), the classical first-passage quantities (Wald lower
//! bound, exponential martingale root, escape-probability brackets), walks
//! stopped at slowly growing time-dependent levels, and the two stopping
//! times on the symbol space itself: the first time an orbit interval can no
//! longer be certified small, and the first occurrence of a fixed
//! contraction word.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::system::{SymbolStream, SystemParams};

/// Step pair and mixing weight of a line walk.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct WalkParams {
    /// Negative step, taken with probability `p0`.
    pub step_down: f64,
    /// Positive step, taken with probability `1 - p0`.
    pub step_up: f64,
    pub p0: f64,
    /// Mean increment `p0 * step_down + (1 - p0) * step_up`.
    pub drift: f64,
}

impl WalkParams {
    /// Requires `step_down < 0 < step_up` and `0 < p0 <= 1` (the value 1 is
    /// the degenerate sure-down walk).
    pub fn new(step_down: f64, step_up: f64, p0: f64) -> Result<Self> {
        if !(step_down < 0.0 && step_up > 0.0) {
            return Err(Error::domain(format!(
                "need step_down < 0 < step_up, got ({step_down}, {step_up})"
            )));
        }
        if !(p0 > 0.0 && p0 <= 1.0) {
            return Err(Error::domain(format!("p0 = {p0} outside (0, 1]")));
        }
        Ok(WalkParams {
            step_down,
            step_up,
            p0,
            drift: p0 * step_down + (1.0 - p0) * step_up,
        })
    }

    /// A walk with drift exactly zero, built algebraically as
    /// `step_down = -(1-p0) c`, `step_up = p0 c` so the cancellation is not
    /// left to floating-point subtraction.
    pub fn zero_drift(p0: f64, scale: f64) -> Result<Self> {
        if !(p0 > 0.0 && p0 < 1.0) {
            return Err(Error::domain(format!("p0 = {p0} outside (0, 1)")));
        }
        if scale <= 0.0 || scale.is_nan() {
            return Err(Error::domain(format!("scale = {scale} must be positive")));
        }
        Ok(WalkParams {
            step_down: -((1.0 - p0) * scale),
            step_up: p0 * scale,
            p0,
            drift: 0.0,
        })
    }

    /// The walk of the log derivative, negated: down `ln N` under expansion,
    /// up `ln M` under contraction. Its drift is minus the Lyapunov exponent.
    pub fn derivative_walk(sys: &SystemParams) -> Self {
        WalkParams {
            step_down: -(sys.expansion as f64).ln(),
            step_up: (sys.contractions as f64).ln(),
            p0: sys.p0,
            drift: -sys.lyapunov,
        }
    }

    #[inline]
    fn step(&self, rng: &mut ChaCha8Rng) -> f64 {
        let u: f64 = rng.random();
        if u < self.p0 {
            self.step_down
        } else {
            self.step_up
        }
    }
}

/// The walk path `z_0, ..., z_n`.
pub fn simulate_walk(wp: &WalkParams, z0: f64, steps: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    let mut path = Vec::with_capacity(steps + 1);
    let mut z = z0;
    path.push(z);
    for _ in 0..steps {
        z += wp.step(&mut rng);
        path.push(z);
    }
    path
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ExitSide {
    Below,
    Above,
}

/// Outcome of a first-passage run.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Passage {
    pub time: u64,
    pub exit: ExitSide,
    /// The walk value at the exit step.
    pub z_exit: f64,
}

/// First time the walk leaves `[0, K]` (or `[0, inf)` without a barrier).
///
/// Returns `None` when the step cap is reached first; with negative drift
/// and no barrier this is a vanishing-probability event at any realistic
/// cap, but the cap keeps zero- and positive-drift runs finite.
pub fn first_passage(
    wp: &WalkParams,
    z0: f64,
    upper: Option<f64>,
    cap: u64,
    seed: u64,
) -> Result<Option<Passage>> {
    first_passage_with_rng(wp, z0, upper, cap, &mut rng_from_seed(seed))
}

pub fn first_passage_with_rng(
    wp: &WalkParams,
    z0: f64,
    upper: Option<f64>,
    cap: u64,
    rng: &mut ChaCha8Rng,
) -> Result<Option<Passage>> {
    if z0 < 0.0 {
        return Err(Error::precondition(format!("z0 = {z0} below 0")));
    }
    if let Some(k) = upper {
        if z0 > k {
            return Err(Error::precondition(format!("z0 = {z0} above the barrier {k}")));
        }
    }
    let mut z = z0;
    for n in 1..=cap {
        z += wp.step(rng);
        if z < 0.0 {
            return Ok(Some(Passage {
                time: n,
                exit: ExitSide::Below,
                z_exit: z,
            }));
        }
        if let Some(k) = upper {
            if z > k {
                return Ok(Some(Passage {
                    time: n,
                    exit: ExitSide::Above,
                    z_exit: z,
                }));
            }
        }
    }
    Ok(None)
}

/// Wald lower bound `-p0 * step_down / |drift|` on the mean exit time from
/// `[0, inf)` for starts in `[0, step_up)`.
pub fn wald_bound(wp: &WalkParams) -> Result<f64> {
    if wp.drift >= 0.0 {
        return Err(Error::precondition(format!(
            "Wald bound needs negative drift, got {}",
            wp.drift
        )));
    }
    Ok(-wp.p0 * wp.step_down / wp.drift.abs())
}

/// The positive root `r*` of `p0 e^{L r} + (1-p0) e^{R r} = 1`.
///
/// Exists and is unique for negative drift; bracketed bisection on
/// `(0, 50/step_up]` followed by a Newton polish, residual below 1e-13.
pub fn martingale_exponent(wp: &WalkParams) -> Result<f64> {
    if wp.drift >= 0.0 {
        return Err(Error::precondition(format!(
            "martingale exponent needs negative drift, got {}",
            wp.drift
        )));
    }
    let f = |r: f64| wp.p0 * (wp.step_down * r).exp() + (1.0 - wp.p0) * (wp.step_up * r).exp() - 1.0;
    let df = |r: f64| {
        wp.p0 * wp.step_down * (wp.step_down * r).exp()
            + (1.0 - wp.p0) * wp.step_up * (wp.step_up * r).exp()
    };
    let mut lo = 0.0f64;
    let mut hi = 50.0 / wp.step_up;
    if f(hi) <= 0.0 {
        return Err(Error::Convergence(format!(
            "martingale root bracket failed at r = {hi}"
        )));
    }
    let mut iterations = 0;
    while iterations < 120 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    let mut r = 0.5 * (lo + hi);
    while iterations < 200 {
        let val = f(r);
        if val.abs() < 1e-15 {
            break;
        }
        let slope = df(r);
        if slope == 0.0 {
            break;
        }
        let next = r - val / slope;
        if next <= 0.0 {
            break;
        }
        r = next;
        iterations += 1;
    }
    if f(r).abs() > 1e-13 {
        return Err(Error::Convergence(format!(
            "martingale-root residual {:.3e} above 1e-13 after {iterations} iterations",
            f(r).abs()
        )));
    }
    Ok(r)
}

/// Bracket for the probability of escaping `[0, K]` through 0.
///
/// Evaluates `(e^{c2 r*} - e^{z0 r*} e^{-K r*}) / (e^{c2 r*} - e^{c1 r*} e^{-K r*})`
/// at the four extreme corners `c1 in {L, 0}`, `c2 in {0, R}` and returns
/// the min and max.
pub fn escape_prob_bracket(wp: &WalkParams, barrier: f64, z0: f64) -> Result<(f64, f64)> {
    if !(0.0 <= z0 && z0 <= barrier) {
        return Err(Error::precondition(format!(
            "z0 = {z0} outside [0, {barrier}]"
        )));
    }
    let r = martingale_exponent(wp)?;
    // e^{z0 r} e^{-K r} and e^{c1 r} e^{-K r} combined in the exponent, so a
    // large barrier cannot overflow the intermediate factors.
    let start_decay = ((z0 - barrier) * r).exp();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &c1 in &[wp.step_down, 0.0] {
        for &c2 in &[0.0, wp.step_up] {
            let value = ((c2 * r).exp() - start_decay)
                / ((c2 * r).exp() - ((c1 - barrier) * r).exp());
            lo = lo.min(value);
            hi = hi.max(value);
        }
    }
    Ok((lo, hi))
}

/// The slowly growing stopping levels `K_n = 2 ln(n + p) + ln eps`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LevelSchedule {
    pub p: u32,
    pub eps: f64,
}

impl LevelSchedule {
    /// Requires `1/(p+1)^2 < eps < 1/p^2` so that `K_0 < 0`.
    pub fn new(p: u32, eps: f64) -> Result<Self> {
        if p < 1 {
            return Err(Error::domain("p must be >= 1".to_string()));
        }
        let lo = 1.0 / ((p + 1) as f64 * (p + 1) as f64);
        let hi = 1.0 / (p as f64 * p as f64);
        if !(eps > lo && eps < hi) {
            return Err(Error::domain(format!(
                "eps = {eps} outside (1/(p+1)^2, 1/p^2) = ({lo}, {hi})"
            )));
        }
        Ok(LevelSchedule { p, eps })
    }

    /// Determines `p` from `eps`.
    pub fn from_eps(eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::domain(format!("eps = {eps} outside (0, 1)")));
        }
        let p = (1.0 / eps.sqrt()).floor() as u32;
        for candidate in [p.saturating_sub(1), p, p + 1] {
            if candidate >= 1 {
                if let Ok(s) = LevelSchedule::new(candidate, eps) {
                    return Ok(s);
                }
            }
        }
        Err(Error::domain(format!(
            "eps = {eps} admits no integer p with 1/(p+1)^2 < eps < 1/p^2"
        )))
    }

    pub fn level(&self, n: u64) -> f64 {
        2.0 * ((n + self.p as u64) as f64).ln() + self.eps.ln()
    }

    /// Intercept and slope of the line tangent to the level curve at `m`;
    /// the affine level dominates the schedule everywhere by concavity.
    pub fn tangent(&self, m: u64) -> (f64, f64) {
        let beta = 2.0 / (m + self.p as u64) as f64;
        let alpha = self.level(m) - beta * m as f64;
        (alpha, beta)
    }
}

/// A stopping time, possibly censored at the step cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StopTime {
    pub steps: u64,
    pub censored: bool,
}

impl StopTime {
    pub fn stopped(steps: u64) -> Self {
        StopTime {
            steps,
            censored: false,
        }
    }

    pub fn censored_at(cap: u64) -> Self {
        StopTime {
            steps: cap,
            censored: true,
        }
    }
}

/// First time a zero-drift walk drops below the growing level `K_n`.
///
/// Requires drift exactly zero (use [`WalkParams::zero_drift`]) and a start
/// above `K_0`. The mean is infinite; truncated means certify that by
/// growing with the cap.
pub fn stop_s_timedep(
    wp: &WalkParams,
    sched: &LevelSchedule,
    z0: f64,
    cap: u64,
    seed: u64,
) -> Result<StopTime> {
    stop_s_timedep_with_rng(wp, sched, z0, cap, &mut rng_from_seed(seed))
}

pub fn stop_s_timedep_with_rng(
    wp: &WalkParams,
    sched: &LevelSchedule,
    z0: f64,
    cap: u64,
    rng: &mut ChaCha8Rng,
) -> Result<StopTime> {
    if wp.drift != 0.0 {
        return Err(Error::precondition(format!(
            "time-dependent stop requires exactly zero drift, got {}",
            wp.drift
        )));
    }
    if z0 <= sched.level(0) {
        return Err(Error::precondition(format!(
            "z0 = {z0} not above K_0 = {}",
            sched.level(0)
        )));
    }
    let mut z = z0;
    for n in 1..=cap {
        z += wp.step(rng);
        if z < sched.level(n) {
            return Ok(StopTime::stopped(n));
        }
    }
    Ok(StopTime::censored_at(cap))
}

/// Image interval of `[0, 1)` under a word of contractions: `(lower, length)`.
pub fn contraction_image(sys: &SystemParams, word: &[u8]) -> Result<(f64, f64)> {
    let mut lo = 0.0f64;
    for &s in word {
        if s == 0 || s as u32 > sys.contractions {
            return Err(Error::domain(format!(
                "contraction word must use symbols 1..={}, got {s}",
                sys.contractions
            )));
        }
        lo = (lo + (s - 1) as f64) / sys.contractions as f64;
    }
    let len = (sys.contractions as f64).powi(-(word.len() as i32));
    Ok((lo, len))
}

/// First time the tracked interval can no longer be certified small.
///
/// Stops at the first `n > 0` where either the composition derivative
/// exceeds `1 / ((p+n)^2 eps)`, or the next symbol is 0 while the tracked
/// point sits within `1/(p+n)^2` of a discontinuity of the expanding map.
/// The schedule parameter `p` is determined by `eps`.
pub fn stop_w(
    sys: &SystemParams,
    eps: f64,
    x_j: f64,
    cap: u64,
    seed: u64,
) -> Result<StopTime> {
    let mut stream = SymbolStream::new(sys, seed);
    stop_w_with_stream(sys, eps, x_j, cap, &mut stream)
}

pub fn stop_w_with_stream(
    sys: &SystemParams,
    eps: f64,
    x_j: f64,
    cap: u64,
    stream: &mut SymbolStream,
) -> Result<StopTime> {
    if !(0.0..1.0).contains(&x_j) {
        return Err(Error::domain(format!("x_j = {x_j} outside [0, 1)")));
    }
    let sched = LevelSchedule::from_eps(eps)?;
    let p = sched.p as u64;
    let ln_n = (sys.expansion as f64).ln();
    let ln_m = (sys.contractions as f64).ln();

    let mut x = x_j;
    let mut expansions: i64 = 0;
    let mut contractions: i64 = 0;

    let mut symbol = stream.next_symbol();
    for n in 1..=cap {
        if symbol == 0 {
            expansions += 1;
        } else {
            contractions += 1;
        }
        x = sys.step(symbol, x);
        let log_deriv = expansions as f64 * ln_n - contractions as f64 * ln_m;
        // (f^n)' > 1/((p+n)^2 eps), in logs.
        let t = (n + p) as f64;
        if log_deriv > -(t * t * eps).ln() {
            return Ok(StopTime::stopped(n));
        }
        let next = stream.next_symbol();
        if next == 0 && near_discontinuity(sys, x, 1.0 / (t * t)) {
            return Ok(StopTime::stopped(n));
        }
        symbol = next;
    }
    Ok(StopTime::censored_at(cap))
}

/// Whether `x` lies within the closed `r`-neighborhood of a discontinuity.
fn near_discontinuity(sys: &SystemParams, x: f64, r: f64) -> bool {
    sys.discontinuities().any(|c| (x - c).abs() <= r)
}

/// First time the trailing symbols match a fixed contraction word.
///
/// Returns the smallest `n >= D-1` such that the symbols at `n-D+1 ..= n`
/// equal the word (so `n + 1` symbols have been consumed).
pub fn stop_v(sys: &SystemParams, word: &[u8], cap: u64, seed: u64) -> Result<StopTime> {
    let mut stream = SymbolStream::new(sys, seed);
    stop_v_with_stream(sys, word, cap, &mut stream)
}

pub fn stop_v_with_stream(
    sys: &SystemParams,
    word: &[u8],
    cap: u64,
    stream: &mut SymbolStream,
) -> Result<StopTime> {
    if word.is_empty() {
        return Err(Error::precondition("pattern word must be nonempty".to_string()));
    }
    for &s in word {
        if s == 0 || s as u32 > sys.contractions {
            return Err(Error::domain(format!(
                "pattern must use contraction symbols 1..={}, got {s}",
                sys.contractions
            )));
        }
    }
    // Knuth-Morris-Pratt failure table over the full alphabet.
    let d = word.len();
    let mut failure = vec![0usize; d];
    for i in 1..d {
        let mut j = failure[i - 1];
        while j > 0 && word[i] != word[j] {
            j = failure[j - 1];
        }
        if word[i] == word[j] {
            j += 1;
        }
        failure[i] = j;
    }

    let mut state = 0usize;
    for n in 0..cap {
        let s = stream.next_symbol();
        while state > 0 && s != word[state] {
            state = failure[state - 1];
        }
        if s == word[state] {
            state += 1;
        }
        if state == d {
            return Ok(StopTime::stopped(n));
        }
    }
    Ok(StopTime::censored_at(cap))
}

/// The interleaved stopping schedule of the intermittency argument.
///
/// Alternates the word-occurrence time and the interval-growth time on one
/// symbol stream, returning absolute times `(n_i, m_i)` with
/// `n_1 < m_1 < n_2 < ...`. After each word occurrence the tracked point is
/// reset to the midpoint of the word's image interval.
pub fn composite_schedule(
    sys: &SystemParams,
    eps: f64,
    word: &[u8],
    rounds: usize,
    cap: u64,
    seed: u64,
) -> Result<Vec<(u64, u64)>> {
    let (lo, len) = contraction_image(sys, word)?;
    let x_j = lo + 0.5 * len;
    let mut stream = SymbolStream::new(sys, seed);
    let mut schedule = Vec::with_capacity(rounds);
    let mut clock: u64 = 0;
    for _ in 0..rounds {
        let v = stop_v_with_stream(sys, word, cap, &mut stream)?;
        if v.censored {
            break;
        }
        let n_abs = clock + v.steps;
        clock = n_abs + 1;
        let w = stop_w_with_stream(sys, eps, x_j, cap, &mut stream)?;
        if w.censored {
            break;
        }
        let m_abs = clock + w.steps;
        clock = m_abs;
        schedule.push((n_abs, m_abs));
    }
    Ok(schedule)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_seed;
    use crate::system::iterate_orbit;
    use nalgebra::DMatrix;

    #[test]
    fn degenerate_walk_descends_every_step() {
        let wp = WalkParams::new(-1.0, 1.0, 1.0).unwrap();
        let path = simulate_walk(&wp, 5.0, 10, 3);
        for (n, z) in path.iter().enumerate() {
            assert_eq!(*z, 5.0 - n as f64);
        }
        let p = first_passage(&wp, 0.5, None, 100, 3).unwrap().unwrap();
        assert_eq!(p.time, 1);
        assert_eq!(p.exit, ExitSide::Below);
    }

    #[test]
    fn mean_increment_obeys_clt() {
        let wp = WalkParams::new(-1.0, 1.0, 0.5).unwrap();
        let n = 1_000_000usize;
        let path = simulate_walk(&wp, 0.0, n, 99);
        let mean = path[n] / n as f64;
        assert!(mean.abs() < 3.0 / (n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn derivative_walk_tracks_orbit_log_derivative() {
        let sys = SystemParams::new(3, 2, 0.5).unwrap();
        let wp = WalkParams::derivative_walk(&sys);
        assert!((wp.drift - 0.2027325540540822).abs() < 1e-12);
        assert_eq!(WalkParams::derivative_walk(&SystemParams::new(2, 2, 0.5).unwrap()).drift, 0.0);
        let down = WalkParams::derivative_walk(&SystemParams::new(2, 3, 0.5).unwrap());
        assert!((down.drift + 0.2027325540540822).abs() < 1e-12);

        // Same symbols: the walk is the negated orbit log derivative.
        let word = SymbolStream::new(&sys, 21).take_word(10_000);
        let recs = iterate_orbit(&sys, word.iter().copied(), &[0.3], 10_000).unwrap();
        let mut z = 0.0f64;
        for (t, &s) in word.iter().enumerate() {
            z += if s == 0 { wp.step_down } else { wp.step_up };
            assert!(
                (z + recs[0].log_deriv[t + 1]).abs() < 1e-9,
                "mismatch at step {t}"
            );
        }
    }

    #[test]
    fn wald_bound_examples() {
        let wp = WalkParams::new(-1.0, 1.0, 0.6).unwrap();
        assert!((wald_bound(&wp).unwrap() - 3.0).abs() < 1e-12);

        let wp = WalkParams::new(-1.0, 0.0001, 0.999).unwrap();
        let expected = 0.999 / (0.999 - 0.001 * 0.0001);
        assert!((wald_bound(&wp).unwrap() - expected).abs() < 1e-9);

        let wp = WalkParams::new(-2.0, 1.0, 0.5).unwrap();
        assert!((wald_bound(&wp).unwrap() - 2.0).abs() < 1e-12);

        let balanced = WalkParams::new(-1.0, 1.0, 0.5).unwrap();
        assert!(wald_bound(&balanced).is_err());
    }

    #[test]
    fn wald_bound_holds_empirically() {
        let wp = WalkParams::new(-1.0, 1.0, 0.6).unwrap();
        let bound = wald_bound(&wp).unwrap();
        let trials = 100_000u64;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for t in 0..trials {
            let p = first_passage(&wp, 0.0, None, 1_000_000, derive_seed(5, t))
                .unwrap()
                .expect("negative drift must exit");
            sum += p.time as f64;
            sum_sq += (p.time as f64) * (p.time as f64);
        }
        let mean = sum / trials as f64;
        let var = sum_sq / trials as f64 - mean * mean;
        let sigma = (var / trials as f64).sqrt();
        assert!(
            mean >= bound - 3.0 * sigma,
            "mean {mean} below Wald bound {bound}"
        );
    }

    #[test]
    fn martingale_exponent_examples() {
        // 0.6 e^{-r} + 0.4 e^{r} = 1 has e^{r} = 1.5.
        let wp = WalkParams::new(-1.0, 1.0, 0.6).unwrap();
        let r = martingale_exponent(&wp).unwrap();
        assert!((r - 1.5f64.ln()).abs() < 1e-12);

        // Drift to zero from below: r* decreases to 0.
        let mut prev = f64::INFINITY;
        for &alpha in &[-0.2, -0.1, -0.05, -0.01, -0.001] {
            let wp = WalkParams::new(-1.0 + alpha, 1.0 + alpha, 0.5).unwrap();
            assert!((wp.drift - alpha).abs() < 1e-12);
            let r = martingale_exponent(&wp).unwrap();
            assert!(r > 0.0 && r < prev, "r* not decreasing at alpha = {alpha}");
            prev = r;
        }

        let balanced = WalkParams::new(-1.0, 1.0, 0.5).unwrap();
        assert!(matches!(
            martingale_exponent(&balanced),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn escape_bracket_examples() {
        // Duplicate-path oracle: evaluate the corner formula directly.
        let wp = WalkParams::new(-1.0, 1.0, 0.6).unwrap();
        let (lo, hi) = escape_prob_bracket(&wp, 20.0, 19.5).unwrap();
        let r = 1.5f64.ln();
        let corner = |c1: f64, c2: f64| {
            ((c2 * r).exp() - (19.5 * r).exp() * (-20.0 * r).exp())
                / ((c2 * r).exp() - (c1 * r).exp() * (-20.0 * r).exp())
        };
        let mut direct = [
            corner(-1.0, 0.0),
            corner(-1.0, 1.0),
            corner(0.0, 0.0),
            corner(0.0, 1.0),
        ];
        direct.sort_by(f64::total_cmp);
        assert!((lo - direct[0]).abs() < 1e-14 && (hi - direct[3]).abs() < 1e-14);
        assert!(0.0 < lo && lo <= hi && hi < 1.0);

        // Monotone decreasing in the barrier height for a start pinned at
        // the fixed distance step_up below it.
        let mut prev_hi = f64::INFINITY;
        for &k in &[10.0, 15.0, 20.0, 30.0] {
            let (_, hi) = escape_prob_bracket(&wp, k, k - 1.0).unwrap();
            assert!(hi < prev_hi);
            prev_hi = hi;
        }

        // Escape through 0 becomes negligible as the drift approaches zero
        // with a high barrier: r* K large while r* (K - z0) stays small.
        let mut prev = f64::INFINITY;
        for &alpha in &[-0.2, -0.05, -0.01, -0.002] {
            let wp = WalkParams::new(-1.0 + alpha, 1.0 + alpha, 0.5).unwrap();
            let barrier = 1.0e4;
            let (_, hi) = escape_prob_bracket(&wp, barrier, barrier - 0.5).unwrap();
            assert!(hi < prev, "upper bound not shrinking at alpha = {alpha}");
            prev = hi;
        }
        assert!(prev < 0.01, "small-drift escape bound {prev}");
    }

    #[test]
    fn escape_probability_lands_in_bracket() {
        let wp = WalkParams::new(-1.0, 1.0, 0.6).unwrap();
        let barrier = 20.0;
        let z0 = 19.5;
        let (lo, hi) = escape_prob_bracket(&wp, barrier, z0).unwrap();
        let trials = 50_000u64;
        let mut below = 0u64;
        for t in 0..trials {
            let p = first_passage(&wp, z0, Some(barrier), 10_000_000, derive_seed(6, t))
                .unwrap()
                .expect("two-sided exit is certain");
            if p.exit == ExitSide::Below {
                below += 1;
            }
        }
        let freq = below as f64 / trials as f64;
        let sigma = (freq.max(1e-9) * (1.0 - freq) / trials as f64).sqrt();
        assert!(
            freq >= lo - 3.0 * sigma && freq <= hi + 3.0 * sigma,
            "escape frequency {freq} outside bracket ({lo}, {hi})"
        );
    }

    #[test]
    fn martingale_identity_at_stopping() {
        // Mean of e^{r* z_T} over two-sided exits equals e^{r* z_0}.
        let wp = WalkParams::new(-1.0, 1.0, 0.6).unwrap();
        let r = martingale_exponent(&wp).unwrap();
        let barrier = 12.0;
        let z0 = 6.0;
        let trials = 100_000u64;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for t in 0..trials {
            let p = first_passage(&wp, z0, Some(barrier), 10_000_000, derive_seed(8, t))
                .unwrap()
                .unwrap();
            let v = (r * p.z_exit).exp();
            sum += v;
            sum_sq += v * v;
        }
        let mean = sum / trials as f64;
        let sigma = ((sum_sq / trials as f64 - mean * mean) / trials as f64).sqrt();
        let target = (r * z0).exp();
        assert!(
            (mean - target).abs() < 3.0 * sigma,
            "martingale mean {mean} vs {target} (sigma {sigma})"
        );
    }

    #[test]
    fn level_schedule_validity() {
        let sched = LevelSchedule::new(10, 0.009).unwrap();
        let k0 = sched.level(0);
        assert!((k0 - (2.0 * 10.0f64.ln() + 0.009f64.ln())).abs() < 1e-12);
        assert!(k0 < 0.0);
        // Strictly increasing and unbounded.
        let mut prev = k0;
        for n in 1..=1000u64 {
            let k = sched.level(n);
            assert!(k > prev);
            prev = k;
        }
        assert!(sched.level(1_000_000) > 20.0);

        assert_eq!(LevelSchedule::from_eps(0.009).unwrap().p, 10);
        assert!(LevelSchedule::new(10, 0.02).is_err());
    }

    #[test]
    fn tangent_levels_dominate_schedule() {
        let sched = LevelSchedule::new(10, 0.009).unwrap();
        let (alpha0, beta0) = sched.tangent(0);
        assert!((beta0 - 0.2).abs() < 1e-15);
        assert!((alpha0 - sched.level(0)).abs() < 1e-12);

        for &m in &[0u64, 5, 50, 400] {
            let (alpha, beta) = sched.tangent(m);
            for n in 0..=1000u64 {
                let affine = alpha + beta * n as f64;
                let gap = affine - sched.level(n);
                assert!(gap >= -1e-10, "tangent below schedule at n = {n}, m = {m}");
                if n == m {
                    assert!(gap.abs() < 1e-10);
                }
            }
        }
        // Slope vanishes as the tangent point recedes.
        assert!(sched.tangent(1_000_000).1 < 1e-5);
    }

    #[test]
    fn timedep_stop_preconditions() {
        let sched = LevelSchedule::new(10, 0.009).unwrap();
        let wp = WalkParams::zero_drift(0.5, 1.0).unwrap();
        assert_eq!(wp.drift, 0.0);
        // Start below K_0 is rejected.
        assert!(stop_s_timedep(&wp, &sched, sched.level(0) - 0.5, 1000, 1).is_err());
        // Nonzero drift is rejected.
        let drifting = WalkParams::new(-1.0, 0.9, 0.5).unwrap();
        assert!(stop_s_timedep(&drifting, &sched, 1.0, 1000, 1).is_err());
    }

    #[test]
    fn timedep_stop_truncated_means_grow_with_cap() {
        let sched = LevelSchedule::new(10, 0.009).unwrap();
        let wp = WalkParams::zero_drift(0.5, 2.0 * 2.0f64.ln()).unwrap();
        let trials = 4000u64;
        let caps = [1_000u64, 10_000, 100_000];
        let mut means = [0.0f64; 3];
        for t in 0..trials {
            let mut rng = rng_from_seed(derive_seed(12, t));
            let s = stop_s_timedep_with_rng(&wp, &sched, 0.0, caps[2], &mut rng).unwrap();
            for (i, &cap) in caps.iter().enumerate() {
                means[i] += s.steps.min(cap) as f64;
            }
        }
        assert!(
            means[0] < means[1] && means[1] < means[2],
            "truncated means {means:?} not increasing"
        );
    }

    #[test]
    fn interval_stop_conditions() {
        let sys = SystemParams::new(2, 2, 0.5).unwrap();
        // All-contraction streams never trigger: the derivative shrinks and
        // the discontinuity condition needs the expanding symbol.
        let word = vec![1u8; 2000];
        let mut iter = word.iter().copied();
        let result = stop_w_from_word(&sys, 0.009, 0.3, 1000, &mut iter);
        assert!(result.censored);

        // All-expansion streams trigger the derivative condition immediately:
        // (f^1)' = 2 > 1/((10+1)^2 * 0.009).
        let word = vec![0u8; 64];
        let mut iter = word.iter().copied();
        let result = stop_w_from_word(&sys, 0.009, 0.3, 1000, &mut iter);
        assert!(!result.censored);
        assert_eq!(result.steps, 1);
    }

    // Word-driven variant for deterministic tests.
    fn stop_w_from_word(
        sys: &SystemParams,
        eps: f64,
        x_j: f64,
        cap: u64,
        symbols: &mut dyn Iterator<Item = u8>,
    ) -> StopTime {
        let sched = LevelSchedule::from_eps(eps).unwrap();
        let p = sched.p as u64;
        let ln_n = (sys.expansion as f64).ln();
        let ln_m = (sys.contractions as f64).ln();
        let mut x = x_j;
        let mut a = 0i64;
        let mut b = 0i64;
        let mut symbol = symbols.next().unwrap();
        for n in 1..=cap {
            if symbol == 0 {
                a += 1;
            } else {
                b += 1;
            }
            x = crate::system::apply_map(sys, symbol, x).unwrap();
            let t = (n + p) as f64;
            if a as f64 * ln_n - b as f64 * ln_m > -(t * t * eps).ln() {
                return StopTime::stopped(n);
            }
            match symbols.next() {
                Some(next) => {
                    if next == 0 {
                        let r = 1.0 / (t * t);
                        if sys.discontinuities().any(|c| (x - c).abs() <= r) {
                            return StopTime::stopped(n);
                        }
                    }
                    symbol = next;
                }
                None => return StopTime::censored_at(n),
            }
        }
        StopTime::censored_at(cap)
    }

    #[test]
    fn interval_stop_splits_under_synchronization() {
        // Negative Lyapunov exponent: the derivative threshold starts near
        // (f^1)' by the choice of p, so trials either stop within the first
        // few steps on the derivative condition or the log-derivative walk
        // drifts up, away from the stopping levels, and the time is
        // effectively infinite. The truncated mean is then dominated by the
        // censored mass.
        let sys = SystemParams::new(3, 2, 0.5).unwrap();
        let cap = 10_000u64;
        let trials = 500u64;
        let mut censored = 0u64;
        let mut quick = 0u64;
        let mut total = 0.0;
        for t in 0..trials {
            let s = stop_w(&sys, 9.0e-5, 0.4, cap, derive_seed(16, t)).unwrap();
            censored += s.censored as u64;
            total += s.steps as f64;
            if !s.censored && s.steps <= 5 {
                quick += 1;
            }
        }
        let stopped = trials - censored;
        assert!(censored > trials / 20, "censored {censored} of {trials}");
        assert!(
            quick as f64 / stopped.max(1) as f64 > 0.8,
            "only {quick} of {stopped} stops are immediate"
        );
        let mean = total / trials as f64;
        let censored_share = censored as f64 * cap as f64 / trials as f64 / mean;
        assert!(
            censored_share > 0.5,
            "censored runs carry only {censored_share:.2} of the mean"
        );

        // Sanity check against the matching line walk: after the early
        // window its path stays above the level schedule.
        let wp = WalkParams::derivative_walk(&sys);
        let sched = LevelSchedule::from_eps(9.0e-5).unwrap();
        let path = simulate_walk(&wp, 0.0, cap as usize, 9);
        let above = path
            .iter()
            .enumerate()
            .skip(1)
            .filter(|(n, &z)| z >= sched.level(*n as u64))
            .count();
        assert!(above as f64 / cap as f64 > 0.95);
    }

    #[test]
    fn interval_stop_truncated_means_grow_with_cap() {
        // At (2,2) binary floating point thins the deep tail (the tracked
        // orbit collapses onto dyadics and then sits on the discontinuity),
        // so the growth signature is tested across moderate caps here; the
        // acceptance suite runs the deep caps on the ternary system.
        let sys = SystemParams::new(2, 2, 0.5).unwrap();
        let trials = 20_000u64;
        let caps = [100u64, 1_000, 10_000];
        let mut means = [0.0f64; 3];
        let x_j = 1.0 / 256.0;
        for t in 0..trials {
            let s = stop_w(&sys, 0.009, x_j, caps[2], derive_seed(13, t)).unwrap();
            for (i, &cap) in caps.iter().enumerate() {
                means[i] += s.steps.min(cap) as f64;
            }
        }
        assert!(
            means[0] < means[1] && means[1] < means[2],
            "truncated means {means:?} not increasing"
        );
    }

    #[test]
    fn word_stop_matches_geometric_law() {
        // Single-symbol pattern: hit probability (1-p0)/M = 1/4 per step,
        // so the index of the first hit has mean (1-q)/q = 3.
        let sys = SystemParams::new(2, 2, 0.5).unwrap();
        let trials = 100_000u64;
        let mut sum = 0.0;
        for t in 0..trials {
            let s = stop_v(&sys, &[1], 100_000, derive_seed(14, t)).unwrap();
            assert!(!s.censored);
            sum += s.steps as f64;
        }
        let mean = sum / trials as f64;
        assert!((mean - 3.0).abs() / 3.0 < 0.05, "mean {mean} not within 5% of 3");
    }

    #[test]
    fn word_stop_starts_at_word_end() {
        let sys = SystemParams::new(2, 2, 0.5).unwrap();
        // A stream beginning with the pattern stops at D - 1.
        for seed in 0..200u64 {
            let mut stream = SymbolStream::new(&sys, seed);
            let first_two = (stream.next_symbol(), stream.next_symbol());
            let s = stop_v(&sys, &[1, 2], 10_000, seed).unwrap();
            if first_two == (1, 2) {
                assert_eq!(s.steps, 1);
            } else {
                assert!(s.steps > 1);
            }
        }
    }

    #[test]
    fn word_stop_matches_pattern_automaton_oracle() {
        // Expected hitting index from the automaton linear system, minus one
        // because the stop is the index of the word's final symbol.
        let sys = SystemParams::new(3, 2, 0.5).unwrap();
        for word in [[1u8, 2u8], [1u8, 1u8]] {
            let expected = expected_draws_oracle(&sys, &word) - 1.0;
            let trials = 200_000u64;
            let mut sum = 0.0;
            for t in 0..trials {
                let s = stop_v(&sys, &word, 1_000_000, derive_seed(15, t)).unwrap();
                sum += s.steps as f64;
            }
            let mean = sum / trials as f64;
            assert!(
                (mean - expected).abs() / expected < 0.02,
                "pattern {word:?}: mean {mean} vs oracle {expected}"
            );
        }
    }

    /// Expected number of draws to complete the pattern, from the KMP
    /// automaton's expected absorption time.
    fn expected_draws_oracle(sys: &SystemParams, word: &[u8]) -> f64 {
        let d = word.len();
        // Automaton transition: from prefix state s on symbol c.
        let advance = |state: usize, c: u8| -> usize {
            let mut s = state;
            loop {
                if word[s] == c {
                    return s + 1;
                }
                if s == 0 {
                    return 0;
                }
                // Longest proper suffix of word[..s] that is a prefix.
                let mut fallback = 0;
                for len in (1..s).rev() {
                    if word[..len] == word[s - len..s] {
                        fallback = len;
                        break;
                    }
                }
                s = fallback;
            }
        };
        // E[s] = 1 + sum_c P(c) E[advance(s, c)], E[d] = 0.
        let mut a = DMatrix::<f64>::zeros(d, d);
        let rhs = nalgebra::DVector::<f64>::from_element(d, 1.0);
        for s in 0..d {
            a[(s, s)] += 1.0;
            for c in 0..=sys.contractions as u8 {
                let p = sys.probs[c as usize];
                let t = advance(s, c);
                if t < d {
                    a[(s, t)] -= p;
                }
            }
        }
        let sol = a.lu().solve(&rhs).unwrap();
        sol[0]
    }

    #[test]
    fn composite_schedule_interleaves() {
        let sys = SystemParams::new(2, 2, 0.5).unwrap();
        let word = vec![1u8; 7];
        let schedule = composite_schedule(&sys, 0.009, &word, 8, 1_000_000, 77).unwrap();
        assert!(!schedule.is_empty());
        let mut prev_m = 0u64;
        for &(n, m) in &schedule {
            assert!(n >= prev_m);
            assert!(m > n, "interval phase must advance the clock");
            prev_m = m;
        }
    }
}
