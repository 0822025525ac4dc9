//! Exact arithmetic for the collapsed two-letter system.
//!
//! Collapsing all contracting symbols to one letter turns the family into two
//! multivalued maps: letter 1 applies every contraction at once, letter 0
//! applies the expanding map. The orbit of `{0}` then lives on the grids
//! `S_j = { i / M^j }`, so everything here is integer arithmetic: numerators
//! are big integers and a grid level tracks the power of `M`. No floating
//! point enters any count.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::stationary::{mult_dependence, MultDepParams};
use crate::system::SystemParams;

/// Enumeration cap for exhaustive fiber counts.
pub const ENUMERATION_CAP: u64 = 1 << 24;

/// A point `numerator / M^level` of the grid `S_level`, kept in lowest terms
/// with respect to powers of `M`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GridPoint {
    pub level: u32,
    pub numerator: BigUint,
}

impl GridPoint {
    pub fn new(numerator: BigUint, level: u32, base_m: u32) -> Self {
        let mut p = GridPoint { level, numerator };
        p.normalize(base_m);
        p
    }

    pub fn zero() -> Self {
        GridPoint {
            level: 0,
            numerator: BigUint::zero(),
        }
    }

    fn normalize(&mut self, base_m: u32) {
        let m = BigUint::from(base_m);
        while self.level > 0 && (&self.numerator % &m).is_zero() {
            self.numerator /= &m;
            self.level -= 1;
        }
        if self.numerator.is_zero() {
            self.level = 0;
        }
    }

    /// Approximate value for display; exactness lives in the fields.
    pub fn value_f64(&self, base_m: u32) -> f64 {
        let denom = (base_m as f64).powi(self.level as i32);
        self.numerator.to_f64().unwrap_or(f64::NAN) / denom
    }
}

/// Image of a full grid under one letter, as a multiset of grid points.
///
/// Letter 1 sends `S_level` bijectively onto `S_{level+1}`; letter 0 maps
/// `i / M^level` to `(N i mod M^level) / M^level`, with multiplicities
/// whenever `N` and `M` share a factor.
pub fn grid_image(
    sys: &SystemParams,
    level: u32,
    symbol_class: u8,
) -> Result<BTreeMap<GridPoint, u64>> {
    let m = sys.contractions as u64;
    let grid_size = m
        .checked_pow(level)
        .filter(|&g| g <= ENUMERATION_CAP)
        .ok_or_else(|| {
            Error::Resource(format!("grid S_{level} for M = {m} exceeds the enumeration cap"))
        })?;

    let mut counts: BTreeMap<GridPoint, u64> = BTreeMap::new();
    match symbol_class {
        1 => {
            let finer = m.checked_pow(level + 1).filter(|&g| g <= ENUMERATION_CAP).ok_or_else(
                || Error::Resource(format!("grid S_{} exceeds the enumeration cap", level + 1)),
            )?;
            for i in 0..finer {
                counts.insert(
                    GridPoint::new(BigUint::from(i), level + 1, sys.contractions),
                    1,
                );
            }
        }
        0 => {
            let modulus = grid_size;
            let n = sys.expansion as u64;
            for i in 0..grid_size {
                let image = (n * i) % modulus;
                *counts
                    .entry(GridPoint::new(BigUint::from(image), level, sys.contractions))
                    .or_insert(0) += 1;
            }
        }
        other => {
            return Err(Error::domain(format!("symbol class must be 0 or 1, got {other}")));
        }
    }
    Ok(counts)
}

/// Exact endpoint distribution of `f^n(0)` over all words projecting to the
/// given two-letter word.
///
/// Enumerates all `M^gamma` symbol words (`gamma` = number of 1-letters) and
/// applies the maps in exact rational arithmetic. Every cylinder in the fiber
/// has the same probability, so counting words is counting measure; equal
/// counts over the realized grid is the fiber-uniformity statement.
pub fn fiber_distribution(
    sys: &SystemParams,
    eta: &[u8],
) -> Result<BTreeMap<GridPoint, u64>> {
    for &e in eta {
        if e > 1 {
            return Err(Error::domain(format!("two-letter word contains {e}")));
        }
    }
    let gamma = eta.iter().filter(|&&e| e == 1).count() as u32;
    let words = (sys.contractions as u64).checked_pow(gamma);
    match words {
        Some(w) if w <= ENUMERATION_CAP => {}
        _ => {
            return Err(Error::Resource(format!(
                "fiber of size M^{gamma} exceeds the enumeration cap {ENUMERATION_CAP}"
            )));
        }
    }

    let mut counts: BTreeMap<GridPoint, u64> = BTreeMap::new();
    let m_big = BigUint::from(sys.contractions);
    let n_big = BigUint::from(sys.expansion);

    // Depth-first over the fiber; branching only at 1-letters.
    struct Frame {
        pos: usize,
        numerator: BigUint,
        level: u32,
    }
    let mut stack = vec![Frame {
        pos: 0,
        numerator: BigUint::zero(),
        level: 0,
    }];
    while let Some(frame) = stack.pop() {
        if frame.pos == eta.len() {
            *counts
                .entry(GridPoint::new(frame.numerator, frame.level, sys.contractions))
                .or_insert(0) += 1;
            continue;
        }
        match eta[frame.pos] {
            0 => {
                // (N * num) mod M^level, level unchanged.
                let numerator = if frame.level == 0 {
                    BigUint::zero()
                } else {
                    (&frame.numerator * &n_big) % m_big.pow(frame.level)
                };
                stack.push(Frame {
                    pos: frame.pos + 1,
                    numerator,
                    level: frame.level,
                });
            }
            _ => {
                // (num + (i-1) M^level) / M^{level+1} for i = 1..=M.
                let scale = m_big.pow(frame.level);
                for i in 1..=sys.contractions {
                    let numerator = &frame.numerator + &scale * BigUint::from(i - 1);
                    stack.push(Frame {
                        pos: frame.pos + 1,
                        numerator,
                        level: frame.level + 1,
                    });
                }
            }
        }
    }
    Ok(counts)
}

/// Whether all counts of a fiber distribution agree.
pub fn counts_are_uniform(counts: &BTreeMap<GridPoint, u64>) -> bool {
    let mut values = counts.values();
    match values.next() {
        None => true,
        Some(first) => values.all(|v| v == first),
    }
}

/// A base-kappa interval `[index / kappa^level, (index+1) / kappa^level)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StripInterval {
    pub kappa: u32,
    pub level: u32,
    pub index: BigUint,
}

impl StripInterval {
    pub fn full(kappa: u32) -> Self {
        StripInterval {
            kappa,
            level: 0,
            index: BigUint::zero(),
        }
    }

    pub fn lower_f64(&self) -> f64 {
        self.index.to_f64().unwrap_or(f64::NAN) / (self.kappa as f64).powi(self.level as i32)
    }

    pub fn upper_f64(&self) -> f64 {
        (self.index.to_f64().unwrap_or(f64::NAN) + 1.0)
            / (self.kappa as f64).powi(self.level as i32)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower_f64() && x < self.upper_f64()
    }
}

/// The base-kappa interval containing the image `f_word([0, 1))`.
///
/// Requires `(M, N)` multiplicatively dependent, `M = kappa^l`, `N = kappa^k`.
/// A contraction refines the strip by `l` levels; the expanding map coarsens
/// by `k` levels, or returns the whole interval when the strip is wider than
/// one expanding branch.
pub fn strip_interval(sys: &SystemParams, word: &[u8]) -> Result<StripInterval> {
    let MultDepParams {
        kappa,
        expansion_pow: k,
        contraction_pow: l,
    } = mult_dependence(sys.contractions, sys.expansion).ok_or_else(|| {
        Error::precondition(format!(
            "({}, {}) is not multiplicatively dependent",
            sys.contractions, sys.expansion
        ))
    })?;

    let kappa_big = BigUint::from(kappa);
    let mut strip = StripInterval::full(kappa);
    for &symbol in word {
        if symbol as u32 > sys.contractions {
            return Err(Error::domain(format!(
                "symbol {symbol} outside 0..={}",
                sys.contractions
            )));
        }
        if symbol == 0 {
            if strip.level >= k {
                // [i/kappa^j, (i+1)/kappa^j) -> [i mod kappa^{j-k}, +1) / kappa^{j-k}.
                strip.level -= k;
                strip.index %= kappa_big.pow(strip.level);
            } else {
                // Strip wider than an expanding branch: image is everything.
                strip = StripInterval::full(kappa);
            }
        } else {
            // [i/kappa^j, (i+1)/kappa^j) -> [(i + (c-1) kappa^j) / kappa^{j+l}, +1).
            let shifted =
                &strip.index + BigUint::from(symbol as u32 - 1) * kappa_big.pow(strip.level);
            strip.index = shifted;
            strip.level += l;
        }
    }
    Ok(strip)
}
