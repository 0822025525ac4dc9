//! The acceptance suite: every numbered criterion as a runnable check.
//!
//! Each criterion pins its parameters, tolerances, seeds, and a wall-time
//! budget; a criterion passes only if its assertion holds and it finishes
//! inside the budget. The CLI `verify-all` subcommand and the `acceptance`
//! integration test both run these.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use crate::experiments::{divergence_experiment, intermittency_experiment, sync_experiment};
use crate::multivalued::{counts_are_uniform, fiber_distribution};
use crate::rng::{derive_seed, rng_from_seed, trial_rng};
use crate::skew::{g_map, gamma, Direction, Point3};
use crate::stationary::{
    boundedness_threshold, char_roots, density_sup, nu1, solve_b, solve_b_default,
    walk_occupation, Regime,
};
use crate::system::{transfer_density_check_grid, uniform_point, SystemParams};
use crate::walks::{
    first_passage_with_rng, martingale_exponent, stop_s_timedep_with_rng, stop_w, wald_bound,
    LevelSchedule, WalkParams,
};

/// Outcome of one acceptance criterion.
#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub seconds: f64,
    pub budget_s: f64,
    pub details: String,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "criterion {:2} [{}] {} ({:.2}s / {:.0}s budget) {}",
            self.id,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.seconds,
            self.budget_s,
            self.details
        )
    }
}

struct Criterion {
    id: usize,
    name: &'static str,
    budget_s: f64,
    run: fn() -> (bool, String),
}

const CRITERIA: &[Criterion] = &[
    Criterion { id: 1, name: "exact stationarity", budget_s: 1.0, run: c1_stationarity },
    Criterion { id: 2, name: "cube-map round trip", budget_s: 1.0, run: c2_round_trip },
    Criterion { id: 3, name: "fiber uniformity", budget_s: 30.0, run: c3_fiber_uniformity },
    Criterion { id: 4, name: "root classification", budget_s: 10.0, run: c4_roots },
    Criterion { id: 5, name: "coefficient law", budget_s: 60.0, run: c5_coefficients },
    Criterion { id: 6, name: "boundedness threshold", budget_s: 1.0, run: c6_boundedness },
    Criterion { id: 7, name: "divergence scaling", budget_s: 300.0, run: c7_divergence },
    Criterion { id: 8, name: "synchronization", budget_s: 10.0, run: c8_sync },
    Criterion { id: 9, name: "intermittency", budget_s: 600.0, run: c9_intermittency },
    Criterion { id: 10, name: "Wald and martingale", budget_s: 120.0, run: c10_wald },
    Criterion { id: 11, name: "infinite-expectation signature", budget_s: 600.0, run: c11_infinite_expectation },
    Criterion { id: 12, name: "sigma-finite regime", budget_s: 1.0, run: c12_sigma_finite },
];

/// Runs one criterion by id.
pub fn run_criterion(id: usize) -> Option<CriterionResult> {
    let spec = CRITERIA.iter().find(|c| c.id == id)?;
    let start = Instant::now();
    let (ok, details) = (spec.run)();
    let seconds = start.elapsed().as_secs_f64();
    Some(CriterionResult {
        id: spec.id,
        name: spec.name,
        passed: ok && seconds <= spec.budget_s,
        seconds,
        budget_s: spec.budget_s,
        details,
    })
}

/// Runs all criteria (or a subset of ids) in order.
pub fn run_all(ids: Option<&[usize]>) -> Vec<CriterionResult> {
    CRITERIA
        .iter()
        .filter(|c| ids.is_none_or(|ids| ids.contains(&c.id)))
        .map(|c| run_criterion(c.id).unwrap())
        .collect()
}

fn c1_stationarity() -> (bool, String) {
    let mut rng = rng_from_seed(0xC1);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let m = rng.random_range(2..=9u32);
        let n = rng.random_range(2..=9u32);
        let p0 = rng.random_range(0.02..0.98);
        let sys = SystemParams::new(m, n, p0).unwrap();
        worst = worst.max(transfer_density_check_grid(&sys, 10_000));
    }
    (worst < 1e-14, format!("max deviation {worst:.3e} over 20 random systems"))
}

fn c2_round_trip() -> (bool, String) {
    let mut rng = rng_from_seed(0xC2);
    let mut worst_rt = 0.0f64;
    let mut worst_factor = 0.0f64;
    for &(m, n, p0) in &[(2u32, 2u32, 0.5), (3, 2, 0.4), (2, 4, 0.7), (3, 3, 0.6)] {
        let sys = SystemParams::new(m, n, p0).unwrap();
        for _ in 0..25_000 {
            let p = Point3 {
                w: uniform_point(&mut rng),
                x: uniform_point(&mut rng),
                y: uniform_point(&mut rng),
            };
            let fwd = gamma(&sys, p, Direction::Forward).unwrap();
            let back = gamma(&sys, fwd, Direction::Inverse).unwrap();
            worst_rt = worst_rt
                .max((back.w - p.w).abs())
                .max((back.x - p.x).abs())
                .max((back.y - p.y).abs());
            let (gw, gx) = g_map(&sys, p.w, p.x).unwrap();
            worst_factor = worst_factor.max((fwd.w - gw).abs()).max((fwd.x - gx).abs());
        }
    }
    (
        worst_rt < 1e-12 && worst_factor < 1e-12,
        format!("round-trip {worst_rt:.3e}, projection mismatch {worst_factor:.3e} over 1e5 points"),
    )
}

fn c3_fiber_uniformity() -> (bool, String) {
    let configs = [(2u32, 2u32), (3, 2), (2, 4), (3, 3)];
    let mut checked = 0u64;
    for &(m, n) in &configs {
        let sys = SystemParams::new(m, n, 0.5).unwrap();
        for len in 0..=10usize {
            let uniform = (0..(1u32 << len)).into_par_iter().all(|bits| {
                let eta: Vec<u8> = (0..len).map(|i| ((bits >> i) & 1) as u8).collect();
                let counts = fiber_distribution(&sys, &eta).unwrap();
                counts_are_uniform(&counts)
            });
            if !uniform {
                return (false, format!("nonuniform fiber found for ({m},{n}) at length {len}"));
            }
            checked += 1u64 << len;
        }
    }
    (true, format!("{checked} two-letter words exhaustively uniform"))
}

fn c4_roots() -> (bool, String) {
    let mut worst_gap = 0.0f64;
    for k in 1..=6u32 {
        for l in 1..=6u32 {
            if num_integer::gcd(k, l) != 1 {
                continue;
            }
            let lo = l as f64 / (k + l) as f64;
            for i in 1..=20 {
                let p0 = lo + (1.0 - lo) * i as f64 / 21.0;
                let rc = match char_roots(p0, k, l) {
                    Ok(rc) => rc,
                    Err(e) => return (false, format!("char_roots failed at ({p0},{k},{l}): {e}")),
                };
                if (rc.inside, rc.on_circle, rc.outside) != (l as usize, 1, (k - 1) as usize) {
                    return (
                        false,
                        format!(
                            "counts ({},{},{}) at ({p0},{k},{l})",
                            rc.inside, rc.on_circle, rc.outside
                        ),
                    );
                }
                let max_inside = rc
                    .roots
                    .iter()
                    .skip(1)
                    .filter(|z| z.norm() < 1.0)
                    .map(|z| z.norm())
                    .fold(0.0, f64::max);
                worst_gap = worst_gap.max((max_inside - rc.nu1).abs());
            }
        }
    }
    if worst_gap >= 1e-11 {
        return (false, format!("nu1 vs largest inside root gap {worst_gap:.3e}"));
    }
    let spot1 = (nu1(0.75, 1, 1).unwrap() - 1.0 / 3.0).abs();
    let spot2 = (nu1(0.5, 2, 1).unwrap() - (5.0f64.sqrt() - 1.0) / 2.0).abs();
    (
        spot1 < 1e-12 && spot2 < 1e-12,
        format!("eigen gap {worst_gap:.2e}; spot errors {spot1:.2e}, {spot2:.2e}"),
    )
}

fn c5_coefficients() -> (bool, String) {
    let configs = [(0.75f64, 1u32, 1u32), (0.5, 2, 1), (0.8, 1, 2)];
    let mut details = Vec::new();
    for (idx, &(p0, k, l)) in configs.iter().enumerate() {
        let seq = match solve_b_default(p0, k, l) {
            Ok(s) => s,
            Err(e) => return (false, format!("solve failed at ({p0},{k},{l}): {e}")),
        };
        let residual = seq.max_recurrence_residual();
        if residual >= 1e-9 {
            return (false, format!("recurrence residual {residual:.3e} at ({p0},{k},{l})"));
        }
        if l == 1 {
            let nu = nu1(p0, k, l).unwrap();
            for h in 0..=40usize {
                let gap = (seq.b[h] / seq.b[0] - nu.powi(h as i32)).abs();
                if gap >= 1e-9 {
                    return (
                        false,
                        format!("geometric law violated at h = {h} for ({p0},{k},{l}): {gap:.3e}"),
                    );
                }
            }
        }
        let occ = walk_occupation(p0, k, l, 10_000_000, derive_seed(0xC5, idx as u64));
        let mut tv = 0.0;
        for h in 0..occ.len().max(seq.b.len()) {
            let emp = occ.get(h).copied().unwrap_or(0.0);
            tv += (emp - seq.coefficient(h)).abs();
        }
        tv *= 0.5;
        if tv >= 0.01 {
            return (false, format!("TV distance {tv:.4} at ({p0},{k},{l})"));
        }
        details.push(format!("({p0},{k},{l}): res {residual:.1e}, TV {tv:.4}"));
    }
    (true, details.join("; "))
}

fn c6_boundedness() -> (bool, String) {
    let seq06 = solve_b_default(0.6, 1, 1).unwrap();
    let seq09 = solve_b_default(0.9, 1, 1).unwrap();
    let v06 = density_sup(&seq06, 3, 2).unwrap();
    let v09 = density_sup(&seq09, 3, 2).unwrap();
    let p_star = match boundedness_threshold(3, 1, 1, 2) {
        Ok(p) => p,
        Err(e) => return (false, format!("bisection failed: {e}")),
    };
    let gap = (p_star - 0.75).abs();
    (
        !v06.bounded && v09.bounded && gap < 1e-9,
        format!(
            "p0=0.6 criterion {:.3} (unbounded), p0=0.9 criterion {:.3} (bounded), switch at {p_star} (|err| {gap:.2e})",
            v06.criterion, v09.criterion
        ),
    )
}

fn c7_divergence() -> (bool, String) {
    let sys = SystemParams::new(3, 3, 0.6).unwrap();
    let grid: Vec<f64> = (1..=6).map(|m| 3.0f64.powi(-m)).collect();
    let report = match divergence_experiment(&sys, &grid, 20, 10_000_000, 0xC7) {
        Ok(r) => r,
        Err(e) => return (false, format!("experiment failed: {e}")),
    };
    let agg = report.table("slope").unwrap();
    let slope = agg.rows[0][agg.column("fitted").unwrap()];
    let target = -(2.0f64 / 3.0).ln() / 3.0f64.ln();
    let gap = (slope - target).abs();
    (
        gap <= 0.05,
        format!("fitted slope {slope:.4} vs exponent {target:.4} (|err| {gap:.4})"),
    )
}

fn c8_sync() -> (bool, String) {
    let sys = SystemParams::new(3, 2, 0.5).unwrap();
    let report = match sync_experiment(&sys, 1000, 2000, 0xC8) {
        Ok(r) => r,
        Err(e) => return (false, format!("experiment failed: {e}")),
    };
    let agg = report.table("final_below_threshold").unwrap();
    let frac = agg.lookup("threshold", 1e-6, "fraction").unwrap();
    (frac >= 0.95, format!("{:.1}% of trials below 1e-6 by n = 2000", frac * 100.0))
}

fn c9_intermittency() -> (bool, String) {
    let sys = SystemParams::new(2, 2, 0.5).unwrap();
    let report = match intermittency_experiment(&sys, 0.1, 0.5, 100, 10_000_000, 0xC9) {
        Ok(r) => r,
        Err(e) => return (false, format!("experiment failed: {e}")),
    };
    let curve = report.table("close_fraction").unwrap();
    let early = curve.lookup("n", 1e4, "median_fraction").unwrap();
    let late = curve.lookup("n", 1e7, "median_fraction").unwrap();
    let summary = report.table("summary").unwrap();
    let row = &summary.rows[0];
    let non_merged = row[summary.column("non_merged").unwrap()];
    let frac = row[summary.column("excursion_fraction").unwrap()];
    // Float pairs are dyadic rationals, and dyadic pairs genuinely merge
    // under the binary maps; when every trial merges, gate on pre-merge
    // excursions over all trials instead of passing vacuously.
    let trials_table = report.table("trials").unwrap();
    let exc_col = trials_table.column("excursions").unwrap();
    let any_excursion = trials_table
        .rows
        .iter()
        .filter(|r| r[exc_col] > 0.0)
        .count() as f64
        / trials_table.rows.len() as f64;
    let monotone = late > early;
    let excursions_ok = if non_merged > 0.0 {
        frac >= 0.9
    } else {
        any_excursion >= 0.9
    };
    (
        monotone && excursions_ok,
        format!(
            "median F(1e4) = {early:.5}, F(1e7) = {late:.5}; {non_merged} non-merged trials, \
             excursion fraction {frac:.2} (pre-merge over all trials: {any_excursion:.2})"
        ),
    )
}

fn c10_wald() -> (bool, String) {
    let trials = 100_000u64;
    let mut worst_wald = f64::INFINITY;
    let mut worst_martingale = 0.0f64;
    let mut censored = 0u64;
    for (ci, &p0) in [0.55f64, 0.6, 0.7].iter().enumerate() {
        for (si, &scale) in [0.5f64, 1.0, 2.0].iter().enumerate() {
            let wp = WalkParams::new(-scale, scale, p0).unwrap();
            let bound = wald_bound(&wp).unwrap();
            let r_star = martingale_exponent(&wp).unwrap();
            let barrier = 12.0 * scale;
            let z0 = 6.0 * scale;
            let seed = derive_seed(0xC10, (ci * 3 + si) as u64);

            let stats: Vec<(f64, f64, u64)> = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let mut rng = trial_rng(seed, t);
                    let exit_time = match first_passage_with_rng(&wp, 0.0, None, 1_000_000, &mut rng)
                        .unwrap()
                    {
                        Some(p) => (p.time as f64, 0u64),
                        None => (1_000_000.0, 1u64),
                    };
                    let mart = first_passage_with_rng(&wp, z0, Some(barrier), 10_000_000, &mut rng)
                        .unwrap()
                        .map(|p| (r_star * p.z_exit).exp())
                        .unwrap_or(f64::NAN);
                    (exit_time.0, mart, exit_time.1)
                })
                .collect();

            let times: Vec<f64> = stats.iter().map(|s| s.0).collect();
            let mean_t = times.iter().sum::<f64>() / trials as f64;
            let var_t = times.iter().map(|t| (t - mean_t) * (t - mean_t)).sum::<f64>()
                / trials as f64;
            let sigma_t = (var_t / trials as f64).sqrt();
            worst_wald = worst_wald.min(mean_t - (bound - 3.0 * sigma_t));
            censored += stats.iter().map(|s| s.2).sum::<u64>();

            let marts: Vec<f64> = stats.iter().map(|s| s.1).collect();
            let mean_m = marts.iter().sum::<f64>() / trials as f64;
            let var_m = marts.iter().map(|v| (v - mean_m) * (v - mean_m)).sum::<f64>()
                / trials as f64;
            let sigma_m = (var_m / trials as f64).sqrt();
            let target = (r_star * z0).exp();
            worst_martingale = worst_martingale.max(((mean_m - target) / sigma_m).abs());
        }
    }
    let censor_rate = censored as f64 / (9.0 * trials as f64);
    (
        worst_wald >= 0.0 && worst_martingale <= 3.0 && censor_rate < 1e-3,
        format!(
            "min slack over Wald bound {worst_wald:.3}; worst martingale z-score {worst_martingale:.2}; censor rate {censor_rate:.1e}"
        ),
    )
}

fn c11_infinite_expectation() -> (bool, String) {
    let campaigns = 20u64;
    let trials = 20_000u64;
    let caps = [1_000u64, 10_000, 100_000];
    let sched = LevelSchedule::new(10, 0.009).unwrap();
    let wp = WalkParams::zero_drift(0.5, 2.0 * 2.0f64.ln()).unwrap();
    // Ternary zero-drift system: binary arithmetic at (2,2) collapses the
    // tracked orbit onto dyadics and artificially thins the deep tail.
    let sys = SystemParams::new(3, 3, 0.5).unwrap();
    let x_j = 1.0 / 256.0;

    let passes: u64 = (0..campaigns)
        .into_par_iter()
        .map(|c| {
            let mut s_means = [0.0f64; 3];
            let mut w_means = [0.0f64; 3];
            for t in 0..trials {
                let mut rng = trial_rng(derive_seed(0xC11, c), t);
                let s = stop_s_timedep_with_rng(&wp, &sched, 0.0, caps[2], &mut rng).unwrap();
                let w = stop_w(&sys, 0.009, x_j, caps[2], derive_seed(derive_seed(0xC11B, c), t))
                    .unwrap();
                for (i, &cap) in caps.iter().enumerate() {
                    s_means[i] += s.steps.min(cap) as f64;
                    w_means[i] += w.steps.min(cap) as f64;
                }
            }
            let s_ok = s_means[0] < s_means[1] && s_means[1] < s_means[2];
            let w_ok = w_means[0] < w_means[1] && w_means[1] < w_means[2];
            (s_ok && w_ok) as u64
        })
        .sum();

    (
        passes as f64 / campaigns as f64 >= 0.95,
        format!("{passes}/{campaigns} campaigns show strictly growing truncated means"),
    )
}

fn c12_sigma_finite() -> (bool, String) {
    let seq = match solve_b(0.5, 1, 1, 200) {
        Ok(s) => s,
        Err(e) => return (false, format!("solve failed: {e}")),
    };
    if seq.regime != Regime::SigmaFinite {
        return (false, "wrong regime".to_string());
    }
    let nondecreasing = seq.b.windows(2).all(|w| w[1] >= w[0] - 1e-12);
    let partial: f64 = seq.b.iter().sum();
    (
        nondecreasing && partial >= 0.4 * 200.0,
        format!("partial sum {partial:.1} over H = 200, nondecreasing = {nondecreasing}"),
    )
}
