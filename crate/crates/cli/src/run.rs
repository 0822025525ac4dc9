//! Subcommand handlers.

use std::fs;
use std::path::PathBuf;

use serde::de::DeserializeOwned;

use ifslab::error::Error;
use ifslab::experiments::{
    divergence_experiment, equidistribution_test, intermittency_experiment, sync_experiment,
    two_point_histogram, ExperimentConfig, ExperimentReport, Table,
};
use ifslab::multivalued::{counts_are_uniform, fiber_distribution, strip_interval};
use ifslab::report::{
    coefficients_to_csv, emit_report, fmt_real, roots_to_json, write_text, Format,
};
use ifslab::rng::derive_seed;
use ifslab::skew::{gamma, g_map, Direction, Point3};
use ifslab::stationary::{
    char_roots, delta_eps_mass, mult_dependence, solve_b, solve_b_default, Regime,
};
use ifslab::system::{
    iterate_orbit, transfer_density_check_grid, uniform_point, SymbolStream, SystemParams,
};
use ifslab::verify::run_all;
use ifslab::walks::{
    escape_prob_bracket, first_passage, martingale_exponent, simulate_walk, stop_s_timedep,
    stop_v, stop_w, wald_bound, LevelSchedule, WalkParams,
};

use crate::args::{
    Cli, Command, DeltaMassArgs, DivergeArgs, EquiArgs, ExperimentCommand, FiberArgs, GammaArgs,
    Hist2dArgs, IntermitArgs, OrbitArgs, Overlay, RootsArgs, StationaryArgs, StoppingArgs,
    StripArgs, SyncArgs, SystemInfoArgs, TransferArgs, VerifyArgs, WalkArgs,
};

/// A failure with its process exit code.
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.message.fmt(f)
    }
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        let code = match err {
            Error::Io(_) => 3,
            Error::Convergence(_) => 4,
            Error::Domain(_) | Error::Precondition(_) | Error::Resource(_) => 5,
        };
        Failure {
            code,
            message: err.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

pub fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::SystemInfo(a) => system_info(with_config(a)?),
        Command::Orbit(a) => orbit(with_config(a)?),
        Command::TransferCheck(a) => transfer_check(with_config(a)?),
        Command::GammaCheck(a) => gamma_check(with_config(a)?),
        Command::Fiber(a) => fiber(with_config(a)?),
        Command::Strip(a) => strip(with_config(a)?),
        Command::Walk(a) => walk(with_config(a)?),
        Command::Stopping(a) => stopping(with_config(a)?),
        Command::Stationary(a) => stationary(with_config(a)?),
        Command::Roots(a) => roots(with_config(a)?),
        Command::DeltaMass(a) => delta_mass(with_config(a)?),
        Command::Experiment(e) => experiment(e),
        Command::VerifyAll(a) => verify_all(a),
    }
}

/// Loads `--config` (TOML or JSON by content) and overlays it onto the flags.
fn with_config<T: Overlay + DeserializeOwned>(args: T) -> Result<T, Failure> {
    let path = match args.config_path() {
        Some(p) => p.clone(),
        None => return Ok(args),
    };
    let text = fs::read_to_string(&path)
        .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    let by_ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.eq_ignore_ascii_case("json"));
    let parsed: T = match by_ext {
        Some(true) => serde_json::from_str(&text)
            .map_err(|e| usage(format!("config {}: {e}", path.display())))?,
        Some(false) => toml::from_str(&text)
            .map_err(|e| usage(format!("config {}: {e}", path.display())))?,
        None => toml::from_str(&text)
            .or_else(|_| serde_json::from_str(&text))
            .map_err(|e| usage(format!("config {}: {e}", path.display())))?,
    };
    Ok(args.overlay(parsed))
}

fn req<T>(value: Option<T>, flag: &str) -> Result<T, Failure> {
    value.ok_or_else(|| usage(format!("missing required --{flag}")))
}

fn parse_format(flag: &Option<String>, out: &Option<PathBuf>) -> Result<Format, Failure> {
    if let Some(f) = flag {
        return f.parse::<Format>().map_err(Failure::from);
    }
    if let Some(path) = out {
        if path.extension().and_then(|e| e.to_str()) == Some("json") {
            return Ok(Format::Json);
        }
    }
    Ok(Format::Csv)
}

fn parse_digits(word: &str, flag: &str) -> Result<Vec<u8>, Failure> {
    word.chars()
        .map(|c| {
            c.to_digit(10)
                .map(|d| d as u8)
                .ok_or_else(|| usage(format!("--{flag} must be digits, got {c:?}")))
        })
        .collect()
}

fn parse_f64_list(text: &str, flag: &str) -> Result<Vec<f64>, Failure> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| usage(format!("--{flag}: {e} in {s:?}")))
        })
        .collect()
}

fn system(m: Option<u32>, n: Option<u32>, p0: Option<f64>) -> Result<SystemParams, Failure> {
    Ok(SystemParams::new(req(m, "M")?, req(n, "N")?, req(p0, "p0")?)?)
}

fn emit(report: &ExperimentReport, out: &Option<PathBuf>, format: Format) -> Result<(), Failure> {
    if let Some(path) = out {
        emit_report(report, path, format)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn report_shell(experiment: &str, sys: Option<&SystemParams>, seed: u64) -> ExperimentReport {
    ExperimentReport {
        config: ExperimentConfig {
            experiment: experiment.to_string(),
            contractions: sys.map_or(0, |s| s.contractions),
            expansion: sys.map_or(0, |s| s.expansion),
            p0: sys.map_or(f64::NAN, |s| s.p0),
            steps: 0,
            trials: 0,
            seed,
            params: vec![],
        },
        tables: vec![],
        censored: 0,
        wall_time_s: 0.0,
    }
}

fn system_info(a: SystemInfoArgs) -> Result<(), Failure> {
    let sys = system(a.m, a.n, a.p0)?;
    println!(
        "system M = {}, N = {}, p0 = {}",
        sys.contractions, sys.expansion, sys.p0
    );
    println!("  probabilities: {:?}", sys.probs);
    println!("  breakpoints:   {:?}", sys.breakpoints);
    println!("  Lyapunov exponent: {:.16}", sys.lyapunov);
    let regime = match sys.lyapunov.partial_cmp(&0.0).unwrap() {
        std::cmp::Ordering::Less => "negative (synchronization)",
        std::cmp::Ordering::Equal => "zero (intermittency)",
        std::cmp::Ordering::Greater => "positive (divergence)",
    };
    println!("  regime: {regime}");
    match mult_dependence(sys.contractions, sys.expansion) {
        Some(dep) => println!(
            "  multiplicatively dependent: kappa = {}, k = {}, l = {}",
            dep.kappa, dep.expansion_pow, dep.contraction_pow
        ),
        None => println!("  multiplicatively independent"),
    }
    if let Some(path) = &a.out {
        let doc = serde_json::json!({
            "system": sys,
            "dependence": mult_dependence(sys.contractions, sys.expansion),
        });
        write_text(path, &format!("{}\n", serde_json::to_string_pretty(&doc).unwrap()))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn orbit(a: OrbitArgs) -> Result<(), Failure> {
    let sys = system(a.m, a.n, a.p0)?;
    let starts = match &a.starts {
        Some(s) => parse_f64_list(s, "starts")?,
        None => vec![0.5],
    };
    let word: Vec<u8> = match (&a.word, a.steps) {
        (Some(w), _) => parse_digits(w, "word")?,
        (None, Some(steps)) => {
            SymbolStream::new(&sys, a.seed.unwrap_or(0)).take_word(steps as usize)
        }
        (None, None) => return Err(usage("need --word or --steps")),
    };
    let records = iterate_orbit(&sys, word.iter().copied(), &starts, word.len())?;

    let mut columns = vec!["step".to_string(), "symbol".to_string()];
    for i in 0..starts.len() {
        columns.push(format!("x{i}"));
    }
    columns.push("log_deriv".to_string());
    columns.push("crossing".to_string());
    let mut table = Table {
        name: "orbit".to_string(),
        columns,
        rows: Vec::new(),
    };
    for t in 0..=word.len() {
        let mut row = vec![t as f64, if t == 0 { -1.0 } else { word[t - 1] as f64 }];
        for rec in &records {
            row.push(rec.points[t]);
        }
        row.push(records[0].log_deriv[t]);
        row.push(if t == 0 {
            0.0
        } else {
            records[0].crossings[t - 1] as u64 as f64
        });
        table.rows.push(row);
    }

    for (i, rec) in records.iter().enumerate() {
        println!(
            "start {} = {} -> final {}",
            i,
            starts[i],
            rec.points.last().unwrap()
        );
    }
    println!(
        "log derivative after {} steps: {}",
        word.len(),
        records[0].log_deriv.last().unwrap()
    );

    let mut report = report_shell("orbit", Some(&sys), a.seed.unwrap_or(0));
    report.config.steps = word.len() as u64;
    report.tables.push(table);
    emit(&report, &a.out, parse_format(&a.format, &a.out)?)
}

fn transfer_check(a: TransferArgs) -> Result<(), Failure> {
    let sys = system(a.m, a.n, a.p0)?;
    let grid = a.grid.unwrap_or(10_000);
    let deviation = transfer_density_check_grid(&sys, grid);
    println!("max |transfer sum - 1| over {grid} grid points: {deviation:.3e}");
    Ok(())
}

fn gamma_check(a: GammaArgs) -> Result<(), Failure> {
    let sys = system(a.m, a.n, a.p0)?;
    let points = a.points.unwrap_or(100_000);
    let mut rng = ifslab::rng::rng_from_seed(a.seed.unwrap_or(0));
    let mut worst_rt = 0.0f64;
    let mut worst_factor = 0.0f64;
    for _ in 0..points {
        let p = Point3 {
            w: uniform_point(&mut rng),
            x: uniform_point(&mut rng),
            y: uniform_point(&mut rng),
        };
        let fwd = gamma(&sys, p, Direction::Forward)?;
        let back = gamma(&sys, fwd, Direction::Inverse)?;
        worst_rt = worst_rt
            .max((back.w - p.w).abs())
            .max((back.x - p.x).abs())
            .max((back.y - p.y).abs());
        let (gw, gx) = g_map(&sys, p.w, p.x)?;
        worst_factor = worst_factor.max((fwd.w - gw).abs()).max((fwd.x - gx).abs());
    }
    println!("round-trip max error over {points} points: {worst_rt:.3e}");
    println!("projection-vs-planar max error:          {worst_factor:.3e}");
    Ok(())
}

fn fiber(a: FiberArgs) -> Result<(), Failure> {
    let sys = system(a.m, a.n, a.p0)?;
    let eta = parse_digits(req(a.eta.as_ref(), "eta")?, "eta")?;
    let counts = fiber_distribution(&sys, &eta)?;
    let uniform = counts_are_uniform(&counts);
    let mut table = Table {
        name: "fiber".to_string(),
        columns: vec![
            "numerator".to_string(),
            "level".to_string(),
            "value".to_string(),
            "count".to_string(),
        ],
        rows: Vec::new(),
    };
    for (point, count) in &counts {
        println!(
            "f(0) = {} (= {}/M^{}) x{count}",
            point.value_f64(sys.contractions),
            point.numerator,
            point.level
        );
        table.rows.push(vec![
            point.numerator.to_string().parse::<f64>().unwrap_or(f64::NAN),
            point.level as f64,
            point.value_f64(sys.contractions),
            *count as f64,
        ]);
    }
    println!("{} endpoints; counts uniform: {uniform}", counts.len());
    let mut report = report_shell("fiber", Some(&sys), 0);
    report.tables.push(table);
    emit(&report, &a.out, parse_format(&a.format, &a.out)?)
}

fn strip(a: StripArgs) -> Result<(), Failure> {
    let sys = SystemParams::new(req(a.m, "M")?, req(a.n, "N")?, a.p0.unwrap_or(0.5))?;
    let word = parse_digits(req(a.word.as_ref(), "word")?, "word")?;
    let s = strip_interval(&sys, &word)?;
    let upper_index = &s.index + 1u32;
    println!(
        "image of [0,1) contained in [{}/{}^{}, {}/{}^{})",
        s.index, s.kappa, s.level, upper_index, s.kappa, s.level
    );
    println!("  = [{}, {})", s.lower_f64(), s.upper_f64());
    Ok(())
}

fn walk(a: WalkArgs) -> Result<(), Failure> {
    let wp = WalkParams::new(
        req(a.step_down, "step-down")?,
        req(a.step_up, "step-up")?,
        req(a.p0, "p0")?,
    )?;
    let steps = a.steps.unwrap_or(1000);
    let z0 = a.z0.unwrap_or(0.0);
    let path = simulate_walk(&wp, z0, steps as usize, a.seed.unwrap_or(0));
    println!(
        "walk drift {} over {steps} steps: z_0 = {z0}, z_end = {}",
        wp.drift,
        path.last().unwrap()
    );
    let table = Table {
        name: "walk".to_string(),
        columns: vec!["n".to_string(), "z".to_string()],
        rows: path
            .iter()
            .enumerate()
            .map(|(n, &z)| vec![n as f64, z])
            .collect(),
    };
    let mut report = report_shell("walk", None, a.seed.unwrap_or(0));
    report.config.steps = steps;
    report.tables.push(table);
    emit(&report, &a.out, parse_format(&a.format, &a.out)?)
}

fn walk_params(a: &StoppingArgs) -> Result<WalkParams, Failure> {
    Ok(WalkParams::new(
        req(a.step_down, "step-down")?,
        req(a.step_up, "step-up")?,
        req(a.p0, "p0")?,
    )?)
}

fn stopping(a: StoppingArgs) -> Result<(), Failure> {
    let kind = req(a.kind.clone(), "kind")?;
    let trials = a.trials.unwrap_or(10_000);
    let cap = a.cap.unwrap_or(1_000_000);
    let seed = a.seed.unwrap_or(0);
    let mut summary = Table {
        name: format!("stopping_{kind}"),
        columns: vec![
            "trials".to_string(),
            "mean".to_string(),
            "censored".to_string(),
        ],
        rows: Vec::new(),
    };
    match kind.as_str() {
        "passage" => {
            let wp = walk_params(&a)?;
            let z0 = a.z0.unwrap_or(0.0);
            let mut total = 0.0;
            let mut censored = 0u64;
            let mut below = 0u64;
            for t in 0..trials {
                match first_passage(&wp, z0, a.upper_k, cap, derive_seed(seed, t))? {
                    Some(p) => {
                        total += p.time as f64;
                        if p.exit == ifslab::walks::ExitSide::Below {
                            below += 1;
                        }
                    }
                    None => {
                        total += cap as f64;
                        censored += 1;
                    }
                }
            }
            let mean = total / trials as f64;
            println!("mean exit time {mean:.4} over {trials} trials ({censored} censored at {cap})");
            if a.upper_k.is_some() {
                println!(
                    "exit below 0: {below} ({:.4} of uncensored)",
                    below as f64 / (trials - censored).max(1) as f64
                );
            }
            summary.rows.push(vec![trials as f64, mean, censored as f64]);
        }
        "wald" => {
            let wp = walk_params(&a)?;
            let bound = wald_bound(&wp)?;
            let z0 = a.z0.unwrap_or(0.0);
            let mut total = 0.0;
            let mut censored = 0u64;
            for t in 0..trials {
                match first_passage(&wp, z0, None, cap, derive_seed(seed, t))? {
                    Some(p) => total += p.time as f64,
                    None => {
                        total += cap as f64;
                        censored += 1;
                    }
                }
            }
            let mean = total / trials as f64;
            println!("Wald lower bound {bound:.6}");
            println!("empirical mean   {mean:.6} over {trials} trials ({censored} censored)");
            summary.rows.push(vec![trials as f64, mean, censored as f64]);
        }
        "martingale" => {
            let wp = walk_params(&a)?;
            let r = martingale_exponent(&wp)?;
            println!("martingale exponent r* = {r:.15}");
            summary.rows.push(vec![0.0, r, 0.0]);
        }
        "escape" => {
            let wp = walk_params(&a)?;
            let barrier = req(a.upper_k, "upper-k")?;
            let z0 = req(a.z0, "z0")?;
            let (lo, hi) = escape_prob_bracket(&wp, barrier, z0)?;
            let mut below = 0u64;
            let mut censored = 0u64;
            for t in 0..trials {
                match first_passage(&wp, z0, Some(barrier), cap, derive_seed(seed, t))? {
                    Some(p) if p.exit == ifslab::walks::ExitSide::Below => below += 1,
                    Some(_) => {}
                    None => censored += 1,
                }
            }
            let freq = below as f64 / trials as f64;
            println!("escape-through-0 bracket [{lo:.6e}, {hi:.6e}]");
            println!("empirical frequency {freq:.6e} over {trials} trials ({censored} censored)");
            summary.rows.push(vec![trials as f64, freq, censored as f64]);
        }
        "s-timedep" => {
            let p0 = req(a.p0, "p0")?;
            let scale = a.scale.unwrap_or(1.0);
            let eps = req(a.eps, "eps")?;
            let wp = WalkParams::zero_drift(p0, scale)?;
            let sched = LevelSchedule::from_eps(eps)?;
            let z0 = a.z0.unwrap_or(0.0);
            println!(
                "schedule p = {}, K_0 = {:.6} (must be negative)",
                sched.p,
                sched.level(0)
            );
            let mut total = 0.0;
            let mut censored = 0u64;
            for t in 0..trials {
                let s = stop_s_timedep(&wp, &sched, z0, cap, derive_seed(seed, t))?;
                total += s.steps as f64;
                censored += s.censored as u64;
            }
            let mean = total / trials as f64;
            println!("truncated mean {mean:.4} at cap {cap} ({censored} censored)");
            summary.rows.push(vec![trials as f64, mean, censored as f64]);
        }
        "w" => {
            let sys = system(a.m, a.n, a.p0)?;
            let eps = req(a.eps, "eps")?;
            let x_j = req(a.x_j, "x-j")?;
            let mut total = 0.0;
            let mut censored = 0u64;
            for t in 0..trials {
                let s = stop_w(&sys, eps, x_j, cap, derive_seed(seed, t))?;
                total += s.steps as f64;
                censored += s.censored as u64;
            }
            let mean = total / trials as f64;
            println!("truncated mean {mean:.4} at cap {cap} ({censored} censored)");
            summary.rows.push(vec![trials as f64, mean, censored as f64]);
        }
        "v" => {
            let sys = system(a.m, a.n, a.p0)?;
            let zeta = parse_digits(req(a.zeta.as_ref(), "zeta")?, "zeta")?;
            let mut total = 0.0;
            let mut censored = 0u64;
            for t in 0..trials {
                let s = stop_v(&sys, &zeta, cap, derive_seed(seed, t))?;
                total += s.steps as f64;
                censored += s.censored as u64;
            }
            let mean = total / trials as f64;
            println!("mean occurrence index {mean:.4} over {trials} trials ({censored} censored)");
            summary.rows.push(vec![trials as f64, mean, censored as f64]);
        }
        other => return Err(usage(format!("unknown stopping kind {other:?}"))),
    }
    let mut report = report_shell(&format!("stopping-{kind}"), None, seed);
    report.config.trials = trials;
    report.tables.push(summary);
    emit(&report, &a.out, parse_format(&a.format, &a.out)?)
}

fn stationary(a: StationaryArgs) -> Result<(), Failure> {
    let m = req(a.m, "M")?;
    let n = req(a.n, "N")?;
    let p0 = req(a.p0, "p0")?;
    let dep = mult_dependence(m, n).ok_or_else(|| {
        Failure::from(Error::Precondition(format!(
            "({m}, {n}) is not multiplicatively dependent"
        )))
    })?;
    let seq = match a.truncation {
        Some(h) => solve_b(p0, dep.expansion_pow, dep.contraction_pow, h)?,
        None => solve_b_default(p0, dep.expansion_pow, dep.contraction_pow)?,
    };
    println!(
        "kappa = {}, k = {}, l = {}, regime = {:?}, H = {}",
        dep.kappa, dep.expansion_pow, dep.contraction_pow, seq.regime, seq.truncation
    );
    println!(
        "b_0 = {}, max recurrence residual = {:.3e}",
        fmt_real(seq.b[0]),
        seq.max_recurrence_residual()
    );
    if seq.regime == Regime::Finite {
        println!(
            "tail ratio = {}, tail mass = {:.3e}",
            fmt_real(seq.tail_ratio.unwrap()),
            seq.tail_mass()
        );
    } else {
        println!("partial sum = {}", fmt_real(seq.b.iter().sum::<f64>()));
    }
    if let Some(path) = &a.out {
        match parse_format(&a.format, &a.out)? {
            Format::Csv => write_text(path, &coefficients_to_csv(&seq))?,
            Format::Json => write_text(
                path,
                &format!("{}\n", serde_json::to_string_pretty(&seq).unwrap()),
            )?,
        }
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn roots(a: RootsArgs) -> Result<(), Failure> {
    let p0 = req(a.p0, "p0")?;
    let (k, l) = match (a.k, a.l) {
        (Some(k), Some(l)) => (k, l),
        _ => {
            let m = req(a.m, "M (or --k/--l)")?;
            let n = req(a.n, "N (or --k/--l)")?;
            let dep = mult_dependence(m, n).ok_or_else(|| {
                Failure::from(Error::Precondition(format!(
                    "({m}, {n}) is not multiplicatively dependent"
                )))
            })?;
            (dep.expansion_pow, dep.contraction_pow)
        }
    };
    let rc = char_roots(p0, k, l)?;
    println!(
        "characteristic roots for p0 = {p0}, k = {k}, l = {l}: {} inside, {} on, {} outside",
        rc.inside, rc.on_circle, rc.outside
    );
    for z in &rc.roots {
        println!("  {:+.12} {:+.12}i (|z| = {:.12})", z.re, z.im, z.norm());
    }
    println!("nu1 = {}", fmt_real(rc.nu1));
    if let Some(path) = &a.out {
        write_text(path, &roots_to_json(&rc))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn delta_mass(a: DeltaMassArgs) -> Result<(), Failure> {
    let m = req(a.m, "M")?;
    let n = req(a.n, "N")?;
    let p0 = req(a.p0, "p0")?;
    let dep = mult_dependence(m, n).ok_or_else(|| {
        Failure::from(Error::Precondition(format!(
            "({m}, {n}) is not multiplicatively dependent"
        )))
    })?;
    let seq = solve_b_default(p0, dep.expansion_pow, dep.contraction_pow)?;
    let eps_list: Vec<f64> = match &a.eps {
        Some(list) => parse_f64_list(list, "eps")?,
        None => (1..=a.levels.unwrap_or(6))
            .map(|j| (dep.kappa as f64).powi(-(j as i32)))
            .collect(),
    };
    let mut table = Table {
        name: "delta_mass".to_string(),
        columns: vec!["eps".to_string(), "mass".to_string()],
        rows: Vec::new(),
    };
    for &eps in &eps_list {
        let mass = delta_eps_mass(&seq, dep.kappa, eps)?;
        println!("eps = {:<24} mass = {}", fmt_real(eps), fmt_real(mass));
        table.rows.push(vec![eps, mass]);
    }
    let exponent = -seq.tail_ratio.unwrap().ln() / (dep.kappa as f64).ln();
    println!("analytic exponent -ln(nu1)/ln(kappa) = {exponent:.6}");
    let sys = SystemParams::new(m, n, p0)?;
    let mut report = report_shell("delta-mass", Some(&sys), 0);
    report.tables.push(table);
    emit(&report, &a.out, parse_format(&a.format, &a.out)?)
}

fn experiment(cmd: ExperimentCommand) -> Result<(), Failure> {
    match cmd {
        ExperimentCommand::Sync(a) => sync_cmd(with_config(a)?),
        ExperimentCommand::Intermit(a) => intermit_cmd(with_config(a)?),
        ExperimentCommand::Diverge(a) => diverge_cmd(with_config(a)?),
        ExperimentCommand::Equi(a) => equi_cmd(with_config(a)?),
        ExperimentCommand::Hist2d(a) => hist2d_cmd(with_config(a)?),
    }
}

fn print_report_summary(report: &ExperimentReport) {
    println!(
        "experiment {} on ({}, {}, {}): {} trials x {} steps, seed {} ({:.2}s)",
        report.config.experiment,
        report.config.contractions,
        report.config.expansion,
        report.config.p0,
        report.config.trials,
        report.config.steps,
        report.config.seed,
        report.wall_time_s
    );
    for table in &report.tables {
        if table.rows.len() <= 12 {
            println!("  table {} ({})", table.name, table.columns.join(", "));
            for row in &table.rows {
                let cells: Vec<String> = row.iter().map(|&v| fmt_real(v)).collect();
                println!("    {}", cells.join(", "));
            }
        } else {
            println!("  table {}: {} rows", table.name, table.rows.len());
        }
    }
}

fn sync_cmd(a: SyncArgs) -> Result<(), Failure> {
    let sys = system(a.m, a.n, a.p0)?;
    let report = sync_experiment(
        &sys,
        a.trials.unwrap_or(1000),
        a.steps.unwrap_or(2000),
        a.seed.unwrap_or(0),
    )?;
    print_report_summary(&report);
    emit(&report, &a.out, parse_format(&a.format, &a.out)?)
}

fn intermit_cmd(a: IntermitArgs) -> Result<(), Failure> {
    let sys = system(a.m, a.n, a.p0)?;
    let report = intermittency_experiment(
        &sys,
        a.eps.unwrap_or(0.1),
        a.beta.unwrap_or(0.5),
        a.trials.unwrap_or(100),
        a.steps.unwrap_or(1_000_000),
        a.seed.unwrap_or(0),
    )?;
    print_report_summary(&report);
    emit(&report, &a.out, parse_format(&a.format, &a.out)?)
}

fn diverge_cmd(a: DivergeArgs) -> Result<(), Failure> {
    let sys = system(a.m, a.n, a.p0)?;
    // Regime gate first, so a wrong-sign Lyapunov exponent reports as a
    // precondition failure regardless of the grid flags.
    if sys.lyapunov <= 0.0 {
        return Err(Error::Precondition(format!(
            "divergence requires a positive Lyapunov exponent, got {}",
            sys.lyapunov
        ))
        .into());
    }
    let grid: Vec<f64> = match &a.eps {
        Some(list) => parse_f64_list(list, "eps")?,
        None => {
            let dep = mult_dependence(sys.contractions, sys.expansion).ok_or_else(|| {
                usage("multiplicatively independent factors need an explicit --eps grid")
            })?;
            (1..=a.levels.unwrap_or(6))
                .map(|j| (dep.kappa as f64).powi(-(j as i32)))
                .collect()
        }
    };
    let report = divergence_experiment(
        &sys,
        &grid,
        a.trials.unwrap_or(20),
        a.steps.unwrap_or(1_000_000),
        a.seed.unwrap_or(0),
    )?;
    print_report_summary(&report);
    emit(&report, &a.out, parse_format(&a.format, &a.out)?)
}

fn equi_cmd(a: EquiArgs) -> Result<(), Failure> {
    let sys = system(a.m, a.n, a.p0)?;
    let report = equidistribution_test(
        &sys,
        a.bins.unwrap_or(20),
        a.steps.unwrap_or(1_000_000),
        a.seed.unwrap_or(0),
    )?;
    print_report_summary(&report);
    emit(&report, &a.out, parse_format(&a.format, &a.out)?)
}

fn hist2d_cmd(a: Hist2dArgs) -> Result<(), Failure> {
    let sys = system(a.m, a.n, a.p0)?;
    let report = two_point_histogram(
        &sys,
        a.grid_res.unwrap_or(81),
        a.steps.unwrap_or(1_000_000),
        a.seed.unwrap_or(0),
    )?;
    print_report_summary(&report);
    emit(&report, &a.out, parse_format(&a.format, &a.out)?)
}

fn verify_all(a: VerifyArgs) -> Result<(), Failure> {
    let ids: Option<Vec<usize>> = match &a.ids {
        Some(list) => Some(
            list.split(',')
                .map(|s| {
                    s.trim()
                        .parse::<usize>()
                        .map_err(|e| usage(format!("--ids: {e} in {s:?}")))
                })
                .collect::<Result<Vec<_>, _>>()?,
        ),
        None => None,
    };
    let results = run_all(ids.as_deref());
    if results.is_empty() {
        return Err(usage("no matching criteria"));
    }
    let mut failed = 0;
    for r in &results {
        println!("{}", r.line());
        if !r.passed {
            failed += 1;
        }
    }
    if failed > 0 {
        return Err(Failure {
            code: 1,
            message: format!("{failed} of {} criteria failed", results.len()),
        });
    }
    println!("all {} criteria passed", results.len());
    Ok(())
}
