//! Seeded Monte Carlo campaigns for the two-point dynamics.
//!
//! Each experiment gates on the sign of the Lyapunov exponent, runs
//! trial-parallel with per-trial derived seeds, and returns a report whose
//! tables are bit-reproducible under an identical configuration. Statistical
//! claims are tested against binomial/CLT gates; the underlying limits are
//! almost-sure statements, so the gates are the strongest desk-scale check
//! available.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::trial_rng;
use crate::stationary::{delta_eps_mass, mult_dependence, solve_b_default, CoefficientSequence};
use crate::system::{symbol_from_uniform, uniform_point, SystemParams};

/// Configuration echo carried by every report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub contractions: u32,
    pub expansion: u32,
    pub p0: f64,
    pub steps: u64,
    pub trials: u64,
    pub seed: u64,
    /// Experiment-specific scalar parameters, in a fixed order.
    pub params: Vec<(String, f64)>,
}

/// A named table of real-valued rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    fn new(name: &str, columns: &[&str]) -> Self {
        Table {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Value in `value_col` of the first row matching `key` in `key_col`.
    pub fn lookup(&self, key_col: &str, key: f64, value_col: &str) -> Option<f64> {
        let k = self.column(key_col)?;
        let v = self.column(value_col)?;
        self.rows.iter().find(|r| r[k] == key).map(|r| r[v])
    }
}

/// Output of one experiment: config echo, metric tables, censor count, and
/// wall time. Everything except the wall time is deterministic in the
/// configuration.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub tables: Vec<Table>,
    pub censored: u64,
    pub wall_time_s: f64,
}

impl ExperimentReport {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// Deterministic content (excludes wall time).
    pub fn deterministic_eq(&self, other: &ExperimentReport) -> bool {
        self.config == other.config && self.tables == other.tables && self.censored == other.censored
    }
}

/// Geometrically spaced checkpoints `1, 2, 4, ..., steps` (always including
/// the final step).
pub fn checkpoints(steps: u64) -> Vec<u64> {
    let mut points = Vec::new();
    let mut n = 1u64;
    while n < steps {
        points.push(n);
        n = n.saturating_mul(2);
    }
    points.push(steps);
    points.dedup();
    points
}

/// Power-of-ten checkpoints `10, 100, ..., steps`.
pub fn decade_checkpoints(steps: u64) -> Vec<u64> {
    let mut points = Vec::new();
    let mut n = 10u64;
    while n < steps {
        points.push(n);
        n = n.saturating_mul(10);
    }
    points.push(steps);
    points.dedup();
    points
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Least-squares slope of `ys` against `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    num / den
}

#[inline]
fn draw_symbol(breakpoints: &[f64], rng: &mut rand_chacha::ChaCha8Rng) -> u8 {
    let u: f64 = rng.random();
    symbol_from_uniform(breakpoints, u)
}

/// Two-point state tracked as a base point plus the signed separation.
///
/// Iterating both points directly absorbs the separation into the base
/// point's ulp once orbits approach each other, and the pair then merges
/// exactly, which the true dynamics almost surely never does. The separation
/// instead evolves multiplicatively (`d/M` under a contraction, `N d` minus
/// the branch wrap under the expanding map), keeping full relative precision
/// at every scale; an exact merge now requires underflow past 1e-308 and is
/// reported as such.
#[derive(Debug, Clone, Copy)]
struct PairState {
    x: f64,
    d: f64,
}

impl PairState {
    fn new(x: f64, y: f64) -> Self {
        PairState { x, d: y - x }
    }

    /// `|y - x|`.
    #[inline]
    fn dist(&self) -> f64 {
        self.d.abs()
    }

    /// The partner point `x + d`, wrapped into `[0, 1)`.
    fn partner(&self) -> f64 {
        let p = self.x + self.d;
        let p = if p < 0.0 {
            p + 1.0
        } else if p >= 1.0 {
            p - 1.0
        } else {
            p
        };
        p.clamp(0.0, 1.0 - f64::EPSILON / 2.0)
    }

    /// Advances both points by one symbol; returns whether the pair wrapped
    /// across a discontinuity (possible only for symbol 0).
    #[inline]
    fn step(&mut self, sys: &SystemParams, symbol: u8) -> bool {
        if symbol == 0 {
            let n = sys.expansion as f64;
            let u = self.x * n;
            let nd = self.d * n;
            let wrap = (u + nd).floor() - u.floor();
            let frac = u - u.floor();
            self.x = if frac >= 1.0 { 0.0 } else { frac };
            self.d = nd - wrap;
            wrap != 0.0
        } else {
            let m = sys.contractions as f64;
            let y = (self.x + (symbol - 1) as f64) / m;
            self.x = if y >= 1.0 { 1.0 - f64::EPSILON / 2.0 } else { y };
            self.d /= m;
            false
        }
    }
}

/// Synchronization campaign: pair distances under a common symbol stream.
///
/// Requires a negative Lyapunov exponent. Reports the running distance curve
/// at geometric checkpoints and the fraction of trials whose final distance
/// falls below a ladder of thresholds.
pub fn sync_experiment(
    sys: &SystemParams,
    trials: u64,
    steps: u64,
    seed: u64,
) -> Result<ExperimentReport> {
    if sys.lyapunov >= 0.0 {
        return Err(Error::precondition(format!(
            "synchronization requires a negative Lyapunov exponent, got {}",
            sys.lyapunov
        )));
    }
    let start = Instant::now();
    let marks = checkpoints(steps);
    let thresholds = [1e-2, 1e-4, 1e-6, 1e-9, 1e-12];

    struct Trial {
        x0: f64,
        y0: f64,
        final_dist: f64,
        crossings: u64,
        curve: Vec<f64>,
    }

    let results: Vec<Trial> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t);
            let x0 = uniform_point(&mut rng);
            let y0 = uniform_point(&mut rng);
            let mut pair = PairState::new(x0, y0);
            let mut crossings = 0u64;
            let mut curve = Vec::with_capacity(marks.len());
            let mut next_mark = 0usize;
            for n in 1..=steps {
                let s = draw_symbol(&sys.breakpoints, &mut rng);
                if pair.step(sys, s) {
                    crossings += 1;
                }
                if next_mark < marks.len() && n == marks[next_mark] {
                    curve.push(pair.dist());
                    next_mark += 1;
                }
            }
            Trial {
                x0,
                y0,
                final_dist: pair.dist(),
                crossings,
                curve,
            }
        })
        .collect();

    let mut trial_table = Table::new(
        "trials",
        &["trial", "x0", "y0", "final_dist", "crossings"],
    );
    for (t, r) in results.iter().enumerate() {
        trial_table
            .rows
            .push(vec![t as f64, r.x0, r.y0, r.final_dist, r.crossings as f64]);
    }

    let mut curve_table = Table::new("distance_curve", &["n", "median_dist", "max_dist"]);
    for (i, &n) in marks.iter().enumerate() {
        let mut dists: Vec<f64> = results.iter().map(|r| r.curve[i]).collect();
        let max = dists.iter().cloned().fold(0.0, f64::max);
        curve_table.rows.push(vec![n as f64, median(&mut dists), max]);
    }

    let mut agg = Table::new("final_below_threshold", &["threshold", "fraction"]);
    for &thr in &thresholds {
        let frac =
            results.iter().filter(|r| r.final_dist < thr).count() as f64 / trials as f64;
        agg.rows.push(vec![thr, frac]);
    }

    Ok(ExperimentReport {
        config: ExperimentConfig {
            experiment: "sync".to_string(),
            contractions: sys.contractions,
            expansion: sys.expansion,
            p0: sys.p0,
            steps,
            trials,
            seed,
            params: vec![],
        },
        tables: vec![curve_table, agg, trial_table],
        censored: 0,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Intermittency campaign at zero Lyapunov exponent.
///
/// Tracks the close fraction `F(n) = |{i < n : dist < eps}| / n` at decade
/// checkpoints, excursions beyond `beta`, and exact merges (reported
/// separately; a merged pair stays merged forever).
pub fn intermittency_experiment(
    sys: &SystemParams,
    eps: f64,
    beta: f64,
    trials: u64,
    steps: u64,
    seed: u64,
) -> Result<ExperimentReport> {
    if sys.lyapunov != 0.0 {
        return Err(Error::precondition(format!(
            "intermittency requires Lyapunov exponent exactly zero, got {}",
            sys.lyapunov
        )));
    }
    if !(eps > 0.0 && eps < 1.0) || !(beta > 0.0 && beta < 1.0) {
        return Err(Error::domain(format!("eps = {eps}, beta = {beta} outside (0, 1)")));
    }
    let start = Instant::now();
    let marks = decade_checkpoints(steps);

    struct Trial {
        merged: bool,
        merge_step: i64,
        excursions: u64,
        fractions: Vec<f64>,
    }

    let results: Vec<Trial> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t);
            let x0 = uniform_point(&mut rng);
            let y0 = uniform_point(&mut rng);
            let mut pair = PairState::new(x0, y0);
            let mut close = 0u64;
            let mut excursions = 0u64;
            let mut merged = false;
            let mut merge_step: i64 = -1;
            let mut fractions = Vec::with_capacity(marks.len());
            let mut next_mark = 0usize;
            for n in 1..=steps {
                let s = draw_symbol(&sys.breakpoints, &mut rng);
                pair.step(sys, s);
                let dist = pair.dist();
                if dist < eps {
                    close += 1;
                }
                if dist > beta {
                    excursions += 1;
                }
                if dist == 0.0 {
                    merged = true;
                    merge_step = n as i64;
                    // A merged pair never separates: fill the remaining
                    // checkpoints in closed form.
                    while next_mark < marks.len() {
                        let m = marks[next_mark];
                        let total = close + (m - n);
                        fractions.push(total as f64 / m as f64);
                        next_mark += 1;
                    }
                    break;
                }
                if next_mark < marks.len() && n == marks[next_mark] {
                    fractions.push(close as f64 / n as f64);
                    next_mark += 1;
                }
            }
            while fractions.len() < marks.len() {
                fractions.push(close as f64 / steps as f64);
            }
            Trial {
                merged,
                merge_step,
                excursions,
                fractions,
            }
        })
        .collect();

    let mut trial_table = Table::new(
        "trials",
        &["trial", "merged", "merge_step", "excursions", "final_fraction"],
    );
    for (t, r) in results.iter().enumerate() {
        trial_table.rows.push(vec![
            t as f64,
            r.merged as u64 as f64,
            r.merge_step as f64,
            r.excursions as f64,
            *r.fractions.last().unwrap(),
        ]);
    }

    let mut curve = Table::new("close_fraction", &["n", "median_fraction", "mean_fraction"]);
    for (i, &n) in marks.iter().enumerate() {
        let mut fr: Vec<f64> = results.iter().map(|r| r.fractions[i]).collect();
        let mean = fr.iter().sum::<f64>() / fr.len() as f64;
        curve.rows.push(vec![n as f64, median(&mut fr), mean]);
    }

    let merged_count = results.iter().filter(|r| r.merged).count() as u64;
    let non_merged: Vec<&Trial> = results.iter().filter(|r| !r.merged).collect();
    let with_excursion = non_merged.iter().filter(|r| r.excursions > 0).count() as u64;
    let mut agg = Table::new(
        "summary",
        &[
            "merged",
            "non_merged",
            "non_merged_with_excursion",
            "excursion_fraction",
        ],
    );
    let frac = if non_merged.is_empty() {
        1.0
    } else {
        with_excursion as f64 / non_merged.len() as f64
    };
    agg.rows.push(vec![
        merged_count as f64,
        non_merged.len() as f64,
        with_excursion as f64,
        frac,
    ]);

    Ok(ExperimentReport {
        config: ExperimentConfig {
            experiment: "intermit".to_string(),
            contractions: sys.contractions,
            expansion: sys.expansion,
            p0: sys.p0,
            steps,
            trials,
            seed,
            params: vec![("eps".to_string(), eps), ("beta".to_string(), beta)],
        },
        tables: vec![curve, agg, trial_table],
        censored: 0,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Divergence campaign at positive Lyapunov exponent.
///
/// Estimates the limiting close-time fraction `P(eps)` for each strip width
/// and fits the log-log slope; for multiplicatively dependent factors the
/// analytic strip mass and its slope are tabulated alongside.
pub fn divergence_experiment(
    sys: &SystemParams,
    eps_grid: &[f64],
    trials: u64,
    steps: u64,
    seed: u64,
) -> Result<ExperimentReport> {
    if sys.lyapunov <= 0.0 {
        return Err(Error::precondition(format!(
            "divergence requires a positive Lyapunov exponent, got {}",
            sys.lyapunov
        )));
    }
    if eps_grid.is_empty() {
        return Err(Error::domain("empty eps grid".to_string()));
    }
    for &e in eps_grid {
        if e <= 0.0 {
            return Err(Error::domain(format!("eps = {e} must be positive")));
        }
    }
    let start = Instant::now();

    let analytic: Option<(CoefficientSequence, u32)> =
        match mult_dependence(sys.contractions, sys.expansion) {
            Some(dep) => {
                let seq = solve_b_default(sys.p0, dep.expansion_pow, dep.contraction_pow)?;
                Some((seq, dep.kappa))
            }
            None => None,
        };

    let per_trial: Vec<Vec<u64>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t);
            let x0 = uniform_point(&mut rng);
            let y0 = uniform_point(&mut rng);
            let mut pair = PairState::new(x0, y0);
            let mut counts = vec![0u64; eps_grid.len()];
            for _ in 0..steps {
                let s = draw_symbol(&sys.breakpoints, &mut rng);
                pair.step(sys, s);
                let dist = pair.dist();
                for (i, &e) in eps_grid.iter().enumerate() {
                    if dist < e {
                        counts[i] += 1;
                    }
                }
            }
            counts
        })
        .collect();

    let mut curve = Table::new(
        "close_time_fraction",
        &["eps", "p_hat", "analytic_mass"],
    );
    let mut mean_p = vec![0.0f64; eps_grid.len()];
    for counts in &per_trial {
        for (i, &c) in counts.iter().enumerate() {
            mean_p[i] += c as f64 / steps as f64;
        }
    }
    for p in &mut mean_p {
        *p /= trials as f64;
    }
    for (i, &e) in eps_grid.iter().enumerate() {
        let analytic_mass = match &analytic {
            Some((seq, kappa)) if e <= 1.0 => delta_eps_mass(seq, *kappa, e)?,
            _ => f64::NAN,
        };
        curve.rows.push(vec![e, mean_p[i], analytic_mass]);
    }

    // Log-log fit over the sub-unit strip widths with positive estimates.
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ys_analytic = Vec::new();
    for (i, &e) in eps_grid.iter().enumerate() {
        if e < 1.0 && mean_p[i] > 0.0 {
            xs.push(e.ln());
            ys.push(mean_p[i].ln());
            if let Some((seq, kappa)) = &analytic {
                ys_analytic.push(delta_eps_mass(seq, *kappa, e)?.ln());
            }
        }
    }
    let slope = if xs.len() >= 2 {
        fit_slope(&xs, &ys)
    } else {
        f64::NAN
    };
    let analytic_slope = if ys_analytic.len() >= 2 {
        fit_slope(&xs, &ys_analytic)
    } else {
        f64::NAN
    };
    let exponent = analytic
        .as_ref()
        .map(|(seq, kappa)| -seq.tail_ratio.unwrap().ln() / (*kappa as f64).ln())
        .unwrap_or(f64::NAN);

    let mut agg = Table::new("slope", &["fitted", "analytic_fitted", "exponent"]);
    agg.rows.push(vec![slope, analytic_slope, exponent]);

    Ok(ExperimentReport {
        config: ExperimentConfig {
            experiment: "diverge".to_string(),
            contractions: sys.contractions,
            expansion: sys.expansion,
            p0: sys.p0,
            steps,
            trials,
            seed,
            params: eps_grid
                .iter()
                .enumerate()
                .map(|(i, &e)| (format!("eps{i}"), e))
                .collect(),
        },
        tables: vec![curve, agg],
        censored: 0,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Equidistribution check: binned occupation of one orbit against Lebesgue
/// measure, with a CLT-scaled gate on the sup deviation.
pub fn equidistribution_test(
    sys: &SystemParams,
    bins: usize,
    steps: u64,
    seed: u64,
) -> Result<ExperimentReport> {
    if bins < 2 {
        return Err(Error::domain(format!("bins = {bins} must be >= 2")));
    }
    if steps == 0 {
        return Err(Error::precondition("steps must be positive".to_string()));
    }
    let start = Instant::now();
    let mut rng = trial_rng(seed, 0);
    let mut x = uniform_point(&mut rng);
    let mut counts = vec![0u64; bins];
    // Occupation of the first `steps` orbit points, the start included.
    for n in 0..steps {
        let bin = ((x * bins as f64) as usize).min(bins - 1);
        counts[bin] += 1;
        if n + 1 < steps {
            let s = draw_symbol(&sys.breakpoints, &mut rng);
            x = sys.step(s, x);
        }
    }

    let width = 1.0 / bins as f64;
    let mut hist = Table::new("histogram", &["bin", "frequency"]);
    let mut sup = 0.0f64;
    for (b, &c) in counts.iter().enumerate() {
        let freq = c as f64 / steps as f64;
        sup = sup.max((freq - width).abs());
        hist.rows.push(vec![b as f64, freq]);
    }
    let gate = 4.0
        * (width * (1.0 - width) / steps as f64).sqrt()
        * (2.0 * (bins as f64).ln()).sqrt();
    let mut agg = Table::new("deviation", &["sup_deviation", "gate", "pass"]);
    agg.rows.push(vec![sup, gate, (sup < gate) as u64 as f64]);

    Ok(ExperimentReport {
        config: ExperimentConfig {
            experiment: "equi".to_string(),
            contractions: sys.contractions,
            expansion: sys.expansion,
            p0: sys.p0,
            steps,
            trials: 1,
            seed,
            params: vec![("bins".to_string(), bins as f64)],
        },
        tables: vec![agg, hist],
        censored: 0,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Occupation histogram of one long two-point orbit on a square mesh.
///
/// For multiplicatively dependent factors with a mesh that is a power of
/// `kappa`, the analytic cell masses from the diagonal-square decomposition
/// are tabulated for comparison.
pub fn two_point_histogram(
    sys: &SystemParams,
    grid_res: usize,
    steps: u64,
    seed: u64,
) -> Result<ExperimentReport> {
    if sys.lyapunov <= 0.0 {
        return Err(Error::precondition(format!(
            "two-point histogram requires a positive Lyapunov exponent, got {}",
            sys.lyapunov
        )));
    }
    if grid_res == 0 {
        return Err(Error::domain("grid resolution must be positive".to_string()));
    }
    let start = Instant::now();
    let mut rng = trial_rng(seed, 0);
    let x0 = uniform_point(&mut rng);
    let y0 = uniform_point(&mut rng);
    let mut pair = PairState::new(x0, y0);
    let g = grid_res as f64;
    let mut counts = vec![0u64; grid_res * grid_res];
    for _ in 0..steps {
        let s = draw_symbol(&sys.breakpoints, &mut rng);
        pair.step(sys, s);
        let i = ((pair.x * g) as usize).min(grid_res - 1);
        let j = ((pair.partner() * g) as usize).min(grid_res - 1);
        counts[i * grid_res + j] += 1;
    }

    let analytic = analytic_cell_masses(sys, grid_res)?;

    let mut hist = Table::new("histogram", &["i", "j", "count"]);
    for i in 0..grid_res {
        for j in 0..grid_res {
            let c = counts[i * grid_res + j];
            if c > 0 {
                hist.rows.push(vec![i as f64, j as f64, c as f64]);
            }
        }
    }

    let mut agg = Table::new(
        "comparison",
        &["cells_compared", "max_rel_error", "total_count"],
    );
    let mut tables = Vec::new();
    match &analytic {
        Some(masses) => {
            let mut max_rel = 0.0f64;
            let mut compared = 0u64;
            for (idx, &mass) in masses.iter().enumerate() {
                if mass > 1e-3 {
                    let emp = counts[idx] as f64 / steps as f64;
                    max_rel = max_rel.max((emp - mass).abs() / mass);
                    compared += 1;
                }
            }
            agg.rows.push(vec![compared as f64, max_rel, steps as f64]);

            let mut mass_table = Table::new("analytic_mass", &["i", "j", "mass"]);
            for i in 0..grid_res {
                for j in 0..grid_res {
                    let mass = masses[i * grid_res + j];
                    if mass > 0.0 {
                        mass_table.rows.push(vec![i as f64, j as f64, mass]);
                    }
                }
            }
            tables.push(mass_table);
        }
        None => agg.rows.push(vec![0.0, f64::NAN, steps as f64]),
    }
    tables.insert(0, agg);
    tables.insert(1, hist);

    Ok(ExperimentReport {
        config: ExperimentConfig {
            experiment: "hist2d".to_string(),
            contractions: sys.contractions,
            expansion: sys.expansion,
            p0: sys.p0,
            steps,
            trials: 1,
            seed,
            params: vec![("grid_res".to_string(), grid_res as f64)],
        },
        tables,
        censored: 0,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Analytic mass of each mesh cell under the diagonal-square measure, when
/// the factors are multiplicatively dependent and the mesh is `kappa^g`.
fn analytic_cell_masses(sys: &SystemParams, grid_res: usize) -> Result<Option<Vec<f64>>> {
    let dep = match mult_dependence(sys.contractions, sys.expansion) {
        Some(d) => d,
        None => return Ok(None),
    };
    // grid_res must be an exact power of kappa for cells to align.
    let mut g = 0u32;
    let mut v = 1usize;
    while v < grid_res {
        v *= dep.kappa as usize;
        g += 1;
    }
    if v != grid_res {
        return Ok(None);
    }
    let seq = solve_b_default(sys.p0, dep.expansion_pow, dep.contraction_pow)?;
    let kappa = dep.kappa as f64;

    // Mass of one cell inside a level-h block, h <= g: b_h kappa^{h - 2g};
    // finer levels contribute only on the diagonal: sum_{h > g} b_h / G.
    let mut tail = seq.tail_mass();
    for h in (g as usize + 1)..seq.b.len() {
        tail += seq.b[h];
    }
    let diagonal_extra = tail / grid_res as f64;

    let mut masses = vec![0.0f64; grid_res * grid_res];
    for i in 0..grid_res {
        for j in 0..grid_res {
            let mut mass = 0.0;
            for h in 0..=g {
                let block = dep.kappa.pow(g - h) as usize;
                if i / block == j / block {
                    mass += seq.coefficient(h as usize) * kappa.powi(h as i32)
                        / (grid_res * grid_res) as f64;
                }
            }
            if i == j {
                mass += diagonal_extra;
            }
            masses[i * grid_res + j] = mass;
        }
    }
    Ok(Some(masses))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::iterate_word;

    fn sys(m: u32, n: u32, p0: f64) -> SystemParams {
        SystemParams::new(m, n, p0).unwrap()
    }

    #[test]
    fn regime_gates_fail_fast() {
        let negative = sys(3, 2, 0.5);
        let zero = sys(2, 2, 0.5);
        let positive = sys(2, 3, 0.5);
        assert!(sync_experiment(&zero, 1, 10, 0).is_err());
        assert!(sync_experiment(&positive, 1, 10, 0).is_err());
        assert!(intermittency_experiment(&negative, 0.1, 0.5, 1, 10, 0).is_err());
        assert!(divergence_experiment(&negative, &[0.5], 1, 10, 0).is_err());
        assert!(divergence_experiment(&zero, &[0.5], 1, 10, 0).is_err());
        assert!(two_point_histogram(&negative, 3, 10, 0).is_err());
        assert!(equidistribution_test(&negative, 1, 10, 0).is_err());
        assert!(equidistribution_test(&negative, 10, 0, 0).is_err());
    }

    #[test]
    fn reports_are_reproducible() {
        let s = sys(3, 2, 0.5);
        let a = sync_experiment(&s, 20, 500, 11).unwrap();
        let b = sync_experiment(&s, 20, 500, 11).unwrap();
        assert!(a.deterministic_eq(&b));
        let c = sync_experiment(&s, 20, 500, 12).unwrap();
        assert!(!a.deterministic_eq(&c));
    }

    #[test]
    fn synchronization_contracts_pairs() {
        let s = sys(3, 2, 0.5);
        let report = sync_experiment(&s, 200, 2000, 7).unwrap();
        let agg = report.table("final_below_threshold").unwrap();
        let frac = agg.lookup("threshold", 1e-6, "fraction").unwrap();
        assert!(frac >= 0.95, "synchronized fraction {frac}");
    }

    #[test]
    fn identical_starts_stay_identical() {
        let s = sys(3, 2, 0.5);
        let word = crate::system::SymbolStream::new(&s, 3).take_word(500);
        let recs = iterate_word(&s, &word, &[0.42, 0.42]).unwrap();
        for t in 0..=500 {
            assert_eq!(recs[0].points[t], recs[1].points[t]);
        }
    }

    #[test]
    fn distance_jumps_only_at_crossings() {
        // Between crossings the gap scales exactly by the branch slopes.
        let s = sys(3, 2, 0.5);
        let word = crate::system::SymbolStream::new(&s, 5).take_word(2000);
        let recs = iterate_word(&s, &word, &[0.123, 0.456]).unwrap();
        for t in 0..2000 {
            let d_before = (recs[0].points[t] - recs[1].points[t]).abs();
            let d_after = (recs[0].points[t + 1] - recs[1].points[t + 1]).abs();
            let crossing = recs[0].crossings[t];
            if word[t] == 0 && !crossing {
                assert!(
                    (d_after - 2.0 * d_before).abs() < 1e-12,
                    "gap not doubled at clean expanding step {t}"
                );
            } else if word[t] != 0 {
                assert!(
                    (d_after - d_before / 3.0).abs() < 1e-12,
                    "gap not contracted at step {t}"
                );
            }
        }
    }

    #[test]
    fn intermittency_close_fraction_grows() {
        let s = sys(2, 2, 0.5);
        let report = intermittency_experiment(&s, 0.1, 0.5, 30, 1_000_000, 13).unwrap();
        let curve = report.table("close_fraction").unwrap();
        let early = curve.lookup("n", 1e4, "median_fraction").unwrap();
        let late = curve.lookup("n", 1e6, "median_fraction").unwrap();
        assert!(late > early, "close fraction not growing: {early} vs {late}");
        let summary = report.table("summary").unwrap();
        let frac = summary.rows[0][summary.column("excursion_fraction").unwrap()];
        assert!(frac >= 0.9, "excursion fraction {frac}");
    }

    #[test]
    fn ternary_intermittency_records_excursions() {
        // Zero drift at (3,3): the separation walk is recurrent, so nearly
        // every pair that does not merge exceeds beta = 0.5 at least once.
        let s = sys(3, 3, 0.5);
        let report = intermittency_experiment(&s, 0.1, 0.5, 30, 1_000_000, 41).unwrap();
        let summary = report.table("summary").unwrap();
        let row = &summary.rows[0];
        let non_merged = row[summary.column("non_merged").unwrap()];
        let frac = row[summary.column("excursion_fraction").unwrap()];
        assert!(non_merged > 0.0, "ternary pairs should not all merge");
        assert!(frac >= 0.9, "excursion fraction {frac}");
    }

    #[test]
    fn divergence_estimates_match_analytic_masses() {
        let s = sys(3, 3, 0.6);
        let grid: Vec<f64> = (1..=4).map(|m| 3.0f64.powi(-m)).collect();
        let report = divergence_experiment(&s, &grid, 8, 200_000, 17).unwrap();
        let curve = report.table("close_time_fraction").unwrap();
        for row in &curve.rows {
            let p_hat = row[curve.column("p_hat").unwrap()];
            let mass = row[curve.column("analytic_mass").unwrap()];
            assert!(
                (p_hat - mass).abs() < 0.02,
                "p_hat {p_hat} vs analytic {mass}"
            );
        }
    }

    #[test]
    fn divergence_trivial_and_independent_cases() {
        let s = sys(3, 3, 0.6);
        let report = divergence_experiment(&s, &[1.0], 2, 10_000, 3).unwrap();
        let curve = report.table("close_time_fraction").unwrap();
        assert_eq!(curve.rows[0][curve.column("p_hat").unwrap()], 1.0);

        // Multiplicatively independent: no analytic overlay, decreasing p_hat.
        let s = sys(2, 3, 0.5);
        let grid = [0.5, 0.25, 0.125, 0.0625, 0.03125];
        let report = divergence_experiment(&s, &grid, 4, 400_000, 29).unwrap();
        let curve = report.table("close_time_fraction").unwrap();
        let mut prev = f64::INFINITY;
        for row in &curve.rows {
            assert!(row[curve.column("analytic_mass").unwrap()].is_nan());
            let p = row[curve.column("p_hat").unwrap()];
            assert!(p < prev);
            prev = p;
        }
        // The limit is 0, but the invariant density piles up near the
        // diagonal at this small exponent; desk scale only sees the decrease.
        assert!(prev < 0.5, "smallest-eps close fraction {prev}");
    }

    #[test]
    fn equidistribution_in_all_three_regimes() {
        // Zero regime runs on (3,3): iterating the binary pair (2,2) in
        // doubles sheds mantissa bits until the orbit lives on a coarse
        // dyadic lattice, which genuinely breaks one-point equidistribution
        // in floating point. Ternary arithmetic has no such collapse.
        for &(m, n, p0) in &[(3u32, 2u32, 0.5), (3, 3, 0.5), (2, 3, 0.5)] {
            let s = sys(m, n, p0);
            let report = equidistribution_test(&s, 20, 1_000_000, 23).unwrap();
            let agg = report.table("deviation").unwrap();
            let pass = agg.rows[0][agg.column("pass").unwrap()];
            assert_eq!(pass, 1.0, "equidistribution failed for ({m},{n},{p0})");
        }
    }

    #[test]
    fn histogram_single_cell_collects_everything() {
        let s = sys(2, 3, 0.5);
        let report = two_point_histogram(&s, 1, 5000, 31).unwrap();
        let hist = report.table("histogram").unwrap();
        assert_eq!(hist.rows.len(), 1);
        assert_eq!(hist.rows[0][hist.column("count").unwrap()], 5000.0);
    }

    #[test]
    fn analytic_cell_masses_sum_to_one_and_dominate_diagonal() {
        let s = sys(3, 9, 0.5);
        let masses = analytic_cell_masses(&s, 27).unwrap().unwrap();
        let total: f64 = masses.iter().sum();
        assert!((total - 1.0).abs() < 1e-9, "total {total}");
        for i in 0..27 {
            for j in 0..27 {
                if i != j {
                    assert!(masses[i * 27 + j] <= masses[i * 27 + i] + 1e-15);
                }
            }
        }
        // Off-diagonal far cells still positive (full support).
        assert!(masses[26] > 0.0);
    }

    #[test]
    fn two_point_histogram_matches_analytic_measure() {
        let s = sys(3, 9, 0.5);
        let report = two_point_histogram(&s, 81, 100_000_000, 37).unwrap();
        let agg = report.table("comparison").unwrap();
        let compared = agg.rows[0][agg.column("cells_compared").unwrap()];
        let max_rel = agg.rows[0][agg.column("max_rel_error").unwrap()];
        assert!(compared > 0.0);
        assert!(max_rel < 0.05, "max relative cell error {max_rel}");
        // Diagonal cells dominate their off-diagonal neighbors.
        let masses = report.table("analytic_mass").unwrap();
        let lookup = |i: usize, j: usize| -> f64 {
            masses
                .rows
                .iter()
                .find(|r| r[0] == i as f64 && r[1] == j as f64)
                .map(|r| r[2])
                .unwrap_or(0.0)
        };
        for i in 0..80 {
            assert!(lookup(i, i) >= lookup(i, i + 1));
        }
    }
}
