//! One function per subcommand. Each writes its CSV series and plots into
//! the run directory and records hard checks; the caller turns failed checks
//! into exit status 1.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use num_complex::Complex64;
use palab::charts::{stable_prong, unstable_prong};
use palab::slowdown::{hp_second_derivative_scaling, linear_orbit_min_sq, psi_eval};
use palab::stats::{clt_check, correlations, large_deviations, log_grid, return_tail, sojourn_tail, LogLogFit, Observable, TailEstimate};
use palab::surface::stream_rng;
use palab::verify::{bounds_population, spread_population, verify_length_ratio, verify_s1s2_bounds, CrossingRecord, LengthReport};
use palab::{gamma_exponents, gp_time1, Direction, GammaExponents, LocalMap, MassPush, PlanePoint, Profile, SurfacePoint};
use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::config::{show_observable, ExperimentConfig};
use crate::svg::{Plot, Series, Style};

/// I/O failure while writing artifacts. Maps to exit status 3.
#[derive(Debug)]
pub struct IoFailure(pub String);

impl std::fmt::Display for IoFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "i/o: {}", self.0)
    }
}

impl std::error::Error for IoFailure {}

pub const SUBCOMMANDS: [&str; 10] = ["gamma", "verify-local", "verify-lemmas", "tail", "sojourn", "corr", "clt", "ldp", "lyapunov", "report"];

pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

/// Output directory plus the summary being assembled.
pub struct Run<'a> {
    pub cfg: &'a ExperimentConfig,
    pub subcommand: &'a str,
    pub dir: PathBuf,
    pub workers: usize,
    lines: Vec<String>,
    pub checks: Vec<Check>,
}

fn io(path: &Path, e: impl std::fmt::Display) -> anyhow::Error {
    IoFailure(format!("{}: {e}", path.display())).into()
}

impl<'a> Run<'a> {
    pub fn create(cfg: &'a ExperimentConfig, subcommand: &'a str, dir: PathBuf, workers: usize) -> Result<Self> {
        fs::create_dir_all(&dir).map_err(|e| io(&dir, e))?;
        Ok(Self { cfg, subcommand, dir, workers, lines: vec![], checks: vec![] })
    }

    pub fn line(&mut self, s: impl Into<String>) {
        self.lines.push(s.into());
    }

    pub fn check(&mut self, name: &str, pass: bool, detail: impl Into<String>) {
        self.checks.push(Check { name: name.into(), pass, detail: detail.into() });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }

    pub fn write(&self, file: &str, contents: &str) -> Result<()> {
        let p = self.path(file);
        fs::write(&p, contents).map_err(|e| io(&p, e))
    }

    pub fn svg(&self, file: &str, plot: &Plot) -> Result<()> {
        self.write(file, &plot.render())
    }

    /// Runs a core CSV writer, classifying its failure as I/O.
    pub fn csv(&self, file: &str, f: impl FnOnce(&Path) -> palab::Result<()>) -> Result<()> {
        let p = self.path(file);
        f(&p).map_err(|e| io(&p, e))
    }

    pub fn csv_rows(&self, file: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
        let p = self.path(file);
        let write = || -> std::result::Result<(), csv::Error> {
            let mut w = csv::Writer::from_path(&p)?;
            w.write_record(header)?;
            for r in rows {
                w.write_record(&r)?;
            }
            w.flush()?;
            Ok(())
        };
        write().map_err(|e| io(&p, e))
    }

    /// Writes `summary.txt` and `config.resolved`.
    pub fn finish(&self) -> Result<()> {
        let cfg = self.cfg;
        let mut s = String::new();
        let _ = writeln!(s, "experiment = {}", cfg.name);
        let _ = writeln!(s, "subcommand = {}", self.subcommand);
        let _ = writeln!(s, "seed = {}", cfg.seed);
        let _ = writeln!(s, "workers = {}", self.workers);
        let _ = writeln!(s, "alpha = {:?}", cfg.model.alpha);
        let _ = writeln!(s, "mu = {:?}", cfg.model.mu);
        let _ = writeln!(s, "profile = {}", if cfg.model.profile == Profile::Linear { "linear" } else { "slowed" });
        if let Ok(g) = gamma_exponents(cfg.model.alpha, cfg.model.mu) {
            let w = Windows::new(&g);
            let _ = writeln!(s, "gamma = {:.6}", g.gamma);
            let _ = writeln!(s, "gamma' = {:.6}", g.gamma_prime);
            let _ = writeln!(s, "tail slope window = [{:.4}, {:.4}]", w.tail.0, w.tail.1);
            let _ = writeln!(s, "correlation slope window = [{:.4}, {:.4}]", w.corr.0, w.corr.1);
            let _ = writeln!(s, "deviation slope bound = {:.4}", w.ldp);
        }
        s.push('\n');
        for l in &self.lines {
            let _ = writeln!(s, "{l}");
        }
        if !self.lines.is_empty() {
            s.push('\n');
        }
        for c in &self.checks {
            let _ = writeln!(s, "{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        let _ = writeln!(s, "status = {}", if self.passed() { "ok" } else { "failed" });
        self.write("summary.txt", &s)?;
        self.write("config.resolved", &cfg.to_text())
    }
}

/// Slope windows implied by the exponents.
pub struct Windows {
    pub tail: (f64, f64),
    pub corr: (f64, f64),
    pub ldp: f64,
}

impl Windows {
    pub fn new(g: &GammaExponents) -> Self {
        Self {
            tail: (-(g.gamma - 1.0) - 0.3, -(g.gamma_prime - 1.0) + 0.3),
            corr: (-(g.gamma - 2.0) - 0.4, -(g.gamma_prime - 2.0) + 0.4),
            ldp: -(g.gamma_prime - 2.0) + 0.4,
        }
    }
}

fn exponents(cfg: &ExperimentConfig) -> Result<GammaExponents> {
    gamma_exponents(cfg.model.alpha, cfg.model.mu).map_err(|e| crate::config::ConfigError(e.to_string()).into())
}

fn fit_text(fit: Option<LogLogFit>, note: &Option<String>) -> String {
    match fit {
        Some(f) => format!(
            "slope {:.4} +- {:.4} on [{:.4e}, {:.4e}] ({} points, curvature {:.3e} +- {:.1e}, curved {})",
            f.slope, f.stderr, f.window.0, f.window.1, f.points, f.curvature, f.curvature_stderr, f.curved
        ),
        None => format!("no fit ({})", note.as_deref().unwrap_or("unavailable")),
    }
}

fn fit_series(fit: Option<LogLogFit>) -> Option<Series> {
    fit.map(|f| Series::power_line(format!("fit {:.3}", f.slope), f.slope, f.intercept, f.window.0, f.window.1, Style::Line))
}

fn in_window(fit: Option<LogLogFit>, (lo, hi): (f64, f64)) -> bool {
    fit.is_some_and(|f| (lo..=hi).contains(&f.slope))
}

pub fn gamma(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let g = exponents(cfg)?;
    println!("gamma = {:.5}", g.gamma);
    println!("gamma' = {:.5}", g.gamma_prime);
    run.line(format!("beta = {:.6}, beta1 = {:.6}, beta2 = {:.6}", g.beta, g.beta1, g.beta2));
    let grid: Vec<(f64, GammaExponents)> = (1..50)
        .map(|i| i as f64 / 50.0)
        .map(|a| gamma_exponents(a, cfg.model.mu).map(|g| (a, g)))
        .collect::<palab::Result<_>>()?;
    run.csv_rows(
        "gamma.csv",
        &["alpha", "gamma", "gamma_prime", "beta", "beta1"],
        grid.iter().map(|(a, g)| vec![format!("{a}"), format!("{:e}", g.gamma), format!("{:e}", g.gamma_prime), format!("{:e}", g.beta), format!("{:e}", g.beta1)]),
    )?;
    let plot = Plot::new(format!("exponents at mu = {}", cfg.model.mu), "alpha", "exponent", false, true)
        .with(Series::new("gamma", grid.iter().map(|(a, g)| (*a, g.gamma)).collect(), Style::Line))
        .with(Series::new("gamma'", grid.iter().map(|(a, g)| (*a, g.gamma_prime)).collect(), Style::Dashed))
        .with(Series::new("configured", vec![(cfg.model.alpha, g.gamma), (cfg.model.alpha, g.gamma_prime)], Style::Markers));
    run.svg("gamma.svg", &plot)?;
    run.check("ordering", g.gamma >= g.gamma_prime && g.gamma_prime > 0.0, format!("gamma {:.6} >= gamma' {:.6} > 0", g.gamma, g.gamma_prime));
    Ok(())
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

pub fn verify_local(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let p = cfg.params()?;
    let mut rng = stream_rng(cfg.seed, 0);
    let (r0s, r1s) = (p.r0 * p.r0, p.r1 * p.r1);
    let mut rows: Vec<Vec<String>> = vec![];
    let mut record = |run: &mut Run, name: &str, value: f64, tol: f64| {
        let pass = value <= tol;
        rows.push(vec![name.to_string(), format!("{value:e}"), format!("{tol:e}"), pass.to_string()]);
        run.check(name, pass, format!("{value:.3e} <= {tol:.0e}"));
    };

    // Pure power law below r1, endpoints 0 and 1.
    let mut psi_err = (psi_eval(r0s, &p)? - 1.0).abs().max(psi_eval(0.0, &p)?.abs());
    for i in 1..=100 {
        let u = r1s * i as f64 / 100.0;
        psi_err = psi_err.max(rel(psi_eval(u, &p)?, p.k_pure() * u.powf(p.alpha)));
    }
    record(run, "psi endpoints and power law", psi_err, 1e-10);

    let push = MassPush::new(&p)?;
    let k = p.push_exponent();
    let push_err = (1..=100).map(|i| p.r1 * i as f64 / 100.0).map(|r| rel(push.radial(r), r.powf(k))).fold(0.0, f64::max);
    record(run, "mass push power law", push_err, 1e-10);

    let critical = p.with_alpha((p.p as f64 - 2.0) / p.p as f64)?;
    let id = MassPush::new(&critical)?;
    let mut id_err: f64 = 0.0;
    for i in 1..=100 {
        let r = if i <= 50 { critical.r1 * i as f64 / 50.0 } else { critical.r0 * i as f64 / 50.0 };
        let z = Complex64::from_polar(r, 0.37 * i as f64);
        id_err = id_err.max((id.push(z)? - z).norm() / r);
    }
    record(run, "critical mass push is the identity", id_err, 1e-10);

    let (mut far, mut product, mut jac, mut round) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut checked = 0;
    while checked < cfg.local_points {
        let s = PlanePoint::new(rng.random_range(-2.0..2.0) * p.r0, rng.random_range(-2.0..2.0) * p.r0);
        let g = gp_time1(s, 1.0, &p)?;
        if linear_orbit_min_sq(s, 1.0, &p) >= r0s {
            far = far.max(rel(g.s1, s.s1 * p.lambda)).max(rel(g.s2, s.s2 / p.lambda));
        }
        let c = s.s1 * s.s2;
        product = product.max((g.s1 * g.s2 - c).abs() / c.abs().max(1.0));
        let h = 1e-6 * s.norm();
        let f = |a: f64, b: f64| gp_time1(PlanePoint::new(s.s1 + a, s.s2 + b), 1.0, &p);
        let (xp, xm, yp, ym) = (f(h, 0.0)?, f(-h, 0.0)?, f(0.0, h)?, f(0.0, -h)?);
        let det = ((xp.s1 - xm.s1) * (yp.s2 - ym.s2) - (yp.s1 - ym.s1) * (xp.s2 - xm.s2)) / (4.0 * h * h);
        jac = jac.max(rel(det.abs(), p.psi(g.norm_sq()) / p.psi(s.norm_sq())));
        let back = gp_time1(g, -1.0, &p)?;
        round = round.max(((back.s1 - s.s1).hypot(back.s2 - s.s2)) / s.norm());
        checked += 1;
    }
    record(run, "flow equals the linear flow away from the slowed disk", far, 1e-12);
    record(run, "s1 s2 conserved", product, 1e-10);
    record(run, "flow Jacobian matches psi ratio", jac, 1e-7);
    record(run, "flow round trip", round, 1e-10);

    let local = LocalMap::new(&p)?;
    let (mut area, mut local_round, mut prong) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..cfg.local_area_points {
        let rho = (p.rho0 * rng.random::<f64>().sqrt()).max(1e-4);
        let w = Complex64::from_polar(rho, rng.random_range(0.0..std::f64::consts::TAU));
        let d = local.differential(w, Direction::Forward)?;
        let w2 = local.g(w, Direction::Forward)?;
        let det = d[0][0] * d[1][1] - d[0][1] * d[1][0];
        area = area.max((det * local.omega_p_density(w2)?.value / local.omega_p_density(w)?.value - 1.0).abs());
        local_round = local_round.max((local.g(w2, Direction::Backward)? - w).norm() / rho);
        let j = i as u32 % p.p;
        for ang in [stable_prong(j, p.p), unstable_prong(j, p.p)] {
            let f = local.g(Complex64::from_polar(rho, ang), Direction::Forward)?;
            let drift = (f.im.atan2(f.re) - ang).rem_euclid(std::f64::consts::TAU);
            prong = prong.max(drift.min(std::f64::consts::TAU - drift));
        }
    }
    record(run, "chart map preserves the invariant density", area, 1e-6);
    record(run, "chart map round trip", local_round, 1e-8);
    record(run, "prongs invariant", prong, 1e-10);

    let top = 0.5 * p.rho_pure();
    let radii: Vec<f64> = (0..16).map(|i| top * 10f64.powf(-(i as f64) / 8.0)).collect();
    let fit = hp_second_derivative_scaling(&p, &radii, 1e-3)?;
    record(run, "Hessian scaling exponent", (fit.slope - fit.expected).abs(), 0.05);
    run.line(format!("Hessian scaling: slope {:.4} vs {:.4} over {} radii", fit.slope, fit.expected, fit.used));

    run.csv_rows("checks.csv", &["check", "value", "tolerance", "pass"], rows)?;
    let profile: Vec<(f64, f64)> = (0..=200).map(|i| p.r0 * 2.0 * 10f64.powf(-4.0 * i as f64 / 200.0)).map(|r| (r, push.radial(r))).collect();
    run.csv_rows("push.csv", &["r", "push_r"], profile.iter().map(|(r, v)| vec![format!("{r:e}"), format!("{v:e}")]))?;
    let plot = Plot::new("radial mass push", "r", "push(r)", true, true)
        .with(Series::new("push", profile.clone(), Style::Markers))
        .with(Series::power_line(format!("r^{k:.2}"), k, 0.0, profile.last().unwrap().0, p.r1, Style::Dashed))
        .with(Series::new("identity", vec![(profile.last().unwrap().0, profile.last().unwrap().0), (profile[0].0, profile[0].0)], Style::Line));
    run.svg("push.svg", &plot)
}

fn length_points(rep: &LengthReport) -> Vec<(f64, f64)> {
    rep.records.iter().map(|r| ((r.m - r.n) as f64, r.ratio())).collect()
}

pub fn verify_lemmas(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let p = cfg.params()?;
    let g = exponents(cfg)?;

    let pop = bounds_population(cfg.crossings, cfg.min_ratio, &p, cfg.seed)?;
    run.csv("bounds.csv", |path| pop.write_csv(path))?;
    let mut text = Vec::new();
    palab::verify::write_bounds_summary(&mut text, &pop).map_err(|e| io(&run.path("summary.txt"), e))?;
    for l in String::from_utf8_lossy(&text).lines() {
        run.line(l.to_string());
    }
    run.check("crossing bounds (a)-(d)", pop.passes(), format!("worst margins {:?} over {} crossings", pop.worst.map(|m| format!("{m:.2e}")), pop.crossings));
    let axis = verify_s1s2_bounds(&CrossingRecord::axis(50.0, &p)?, &p)?;
    let (lo, hi) = axis.margins[1].unwrap_or((f64::NAN, f64::NAN));
    run.check("axis saturates (b)", lo.abs() <= 1e-10 && hi.abs() <= 1e-10, format!("margins {lo:.2e} / {hi:.2e}"));

    let a = spread_population(cfg.pairs, cfg.min_ratio, p.mu, &p, cfg.seed.wrapping_add(1))?;
    let b = spread_population(cfg.pairs, cfg.min_ratio, p.mu, &p, cfg.seed.wrapping_add(2))?;
    run.csv("spread_a.csv", |path| a.write_csv(path))?;
    run.csv("spread_b.csv", |path| b.write_csv(path))?;
    let ratio = |x: f64, y: f64| (x / y).max(y / x);
    let stability = ratio(a.c1, b.c1).max(ratio(a.c2, b.c2));
    run.line(format!("spread: admissible {} + {} of {} + {}, skipped {} + {}", a.admissible, b.admissible, a.pairs, b.pairs, a.skipped, b.skipped));
    run.line(format!("spread: C1 {:.4e} / {:.4e}, C2 {:.4e} / {:.4e}, comparability [{:.4}, {:.4}] / [{:.4}, {:.4}]", a.c1, b.c1, a.c2, b.c2, a.comparability.0, a.comparability.1, b.comparability.0, b.comparability.1));
    let dev = a.worst_deviation_margin.min(b.worst_deviation_margin);
    run.check("deviation bound", a.admissible > 0 && b.admissible > 0 && dev >= -1e-9, format!("worst relative margin {dev:.3e}"));
    run.check("spread envelopes stable", a.envelopes_ok() && b.envelopes_ok() && stability < 3.0, format!("envelope ratio {stability:.4} < 3"));

    let rep = verify_length_ratio(cfg.segments, cfg.entry_length, cfg.min_q, &p, p.mu, cfg.seed.wrapping_add(3))?;
    let control = verify_length_ratio(cfg.control_segments, cfg.entry_length, cfg.min_q, &p.with_profile(Profile::Linear), p.mu, cfg.seed.wrapping_add(3))?;
    run.csv("lengths.csv", |path| rep.write_csv(path))?;
    run.csv("lengths_control.csv", |path| control.write_csv(path))?;
    run.line(format!(
        "lengths: {} curves, {} excluded, lower envelope {:.4e}, upper envelope {:.4e}, halves ratio {:.3}",
        rep.records.len(),
        rep.excluded,
        rep.lower_envelope,
        rep.upper_envelope,
        rep.half_ratio()
    ));
    run.check("length sandwich envelopes", rep.envelopes_ok(), format!("lower {:.3e}, upper {:.3e}", rep.lower_envelope, rep.upper_envelope));
    run.check("control lengths exponential", control.exponential_flag(), format!("control fit {}", fit_text(control.fit, &None)));

    let pts = length_points(&rep);
    let (k0, k1) = pts.iter().fold((f64::MAX, 1.0f64), |(a, b), (k, _)| (a.min(*k), b.max(*k)));
    let mut plot = Plot::new("length ratio across the singular disk", "m - n", "L(m) / L(n)", true, true)
        .with(Series::new("slowed", pts, Style::Markers))
        .with(Series::new("no slow-down", length_points(&control), Style::Markers));
    if rep.envelopes_ok() {
        let k0 = k0.min(k1);
        plot = plot
            .with(Series::power_line("lower t^-gamma", -g.gamma, rep.lower_envelope.ln(), k0, k1, Style::Dashed))
            .with(Series::power_line("upper t^-gamma'", -g.gamma_prime, rep.upper_envelope.ln(), k0, k1, Style::Dashed));
    }
    run.svg("lengths.svg", &plot)
}

fn survival_points(t: &TailEstimate) -> Vec<(f64, f64)> {
    t.survival().map(|(n, s)| (n as f64, s)).collect()
}

pub fn tail(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let w = Windows::new(&exponents(cfg)?);
    let model = cfg.model()?;
    let est = return_tail(&cfg.tail_rect, cfg.tail_n_max, cfg.tail_samples, &model, cfg.seed)?;
    run.csv("tail.csv", |path| est.write_csv(path))?;
    run.line(format!("returns: {} samples, {} censored, mean {:.3}", est.total, est.censored, est.mean));
    run.line(format!("tail fit: {}", fit_text(est.fit, &est.fit_note)));
    run.check("tail slope in window", in_window(est.fit, w.tail), format!("window [{:.3}, {:.3}]", w.tail.0, w.tail.1));
    let mut plot = Plot::new("first-return survival", "n", "P(tau > n)", true, true).with(Series::new("slowed", survival_points(&est), Style::Markers));
    if let Some(s) = fit_series(est.fit) {
        plot = plot.with(s);
    }
    if cfg.tail_control_samples > 0 {
        let control = return_tail(&cfg.tail_rect, cfg.tail_n_max, cfg.tail_control_samples, &model.with_profile(Profile::Linear)?, cfg.seed)?;
        run.csv("tail_control.csv", |path| control.write_csv(path))?;
        run.line(format!("control fit: {}", fit_text(control.fit, &control.fit_note)));
        run.check("control tail not polynomial", control.fit.is_none_or(|f| f.curved), "fit unavailable or curved");
        plot = plot.with(Series::new("no slow-down", survival_points(&control), Style::Markers));
    }
    run.svg("tail.svg", &plot)
}

pub fn sojourn(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let model = cfg.model()?;
    let rep = sojourn_tail(cfg.sojourn_samples, cfg.sojourn_cap, &model, cfg.seed)?;
    run.csv("sojourn.csv", |path| rep.tail.write_csv(path))?;
    let mut text = Vec::new();
    rep.write_summary(&mut text).map_err(|e| io(&run.path("summary.txt"), e))?;
    for l in String::from_utf8_lossy(&text).lines() {
        run.line(l.to_string());
    }
    run.line(format!("sojourn fit: {}", fit_text(rep.tail.fit, &rep.tail.fit_note)));
    run.line(format!("annulus run maximum: {} over the first half, {} over all visits", rep.annulus_max_half, rep.annulus_max));
    run.check("deeper entry stays longer", rep.depth_rank_correlation > 0.9, format!("rank correlation {:.4} > 0.9", rep.depth_rank_correlation));
    let gap = (rep.prong_steps as f64 - rep.prong_exit_time).abs();
    run.check("prong sojourn matches the axis time", gap <= 1.0, format!("{} steps vs {:.4}", rep.prong_steps, rep.prong_exit_time));
    let mut plot = Plot::new("sojourn length survival", "n", "P(sojourn > n)", true, true).with(Series::new("visits", survival_points(&rep.tail), Style::Markers));
    if let Some(s) = fit_series(rep.tail.fit) {
        plot = plot.with(s);
    }
    run.svg("sojourn.svg", &plot)
}

pub fn corr(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let w = Windows::new(&exponents(cfg)?);
    let model = cfg.model()?;
    let h = &cfg.corr_observable;
    let series = correlations(h, h, cfg.corr_n_max, cfg.corr_orbit_len, cfg.corr_orbits, &model, cfg.seed)?;
    run.csv("corr.csv", |path| series.write_csv(path))?;
    run.line(format!("observable: {} (support clearance {:.4})", show_observable(h), h.support_clearance(&model)));
    run.line(format!("correlation fit: {}", fit_text(series.fit, &series.fit_note)));
    let pass = in_window(series.fit, w.corr) && series.fit.is_some_and(|f| !f.curved);
    run.check("correlation slope in window", pass, format!("window [{:.3}, {:.3}], curvature flag clear", w.corr.0, w.corr.1));
    let pts: Vec<(f64, f64)> = series.lags.iter().zip(&series.corr).map(|(&n, &c)| (n as f64, c.abs())).collect();
    let mut plot = Plot::new("correlations", "n", "|Cor_n|", true, true).with(Series::new(show_observable(h), pts, Style::Markers));
    if let Some(s) = fit_series(series.fit) {
        plot = plot.with(s);
    }
    run.svg("corr.svg", &plot)
}

pub fn clt(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let model = cfg.model()?;
    let h = &cfg.clt_observable;
    let rep = clt_check(h, cfg.clt_n, cfg.clt_samples, &model, cfg.seed)?;
    run.csv("clt.csv", |path| rep.write_csv(path))?;
    run.line(format!("observable: {}, mean {:.6}", show_observable(h), rep.mean));
    run.line(format!("sigma2 {:.6e} from {} lags (c0 {:.6e}), KS {:.5} (bootstrap se {:.5}), KS to a point mass {:.4}", rep.sigma2, rep.gk_lags, rep.c0, rep.ks, rep.ks_bootstrap_se, rep.ks_point_mass));
    run.check("Birkhoff sums are Gaussian", rep.ks < 0.05 && !rep.cohomology_suspect, format!("KS {:.4} < 0.05, variance flag {}", rep.ks, rep.cohomology_suspect));
    let cob = clt_check(&Observable::Coboundary(Box::new(h.clone())), 1000, 1000, &model, cfg.seed.wrapping_add(1))?;
    run.check("coboundary flagged", cob.cohomology_suspect, format!("sigma2 / c0 = {:.2e}", cob.sigma2 / cob.c0));

    let m = rep.normalized.len();
    let normal = Normal::new(0.0, rep.sigma2.max(f64::MIN_POSITIVE).sqrt())?;
    let qq: Vec<(f64, f64)> =
        (1..100).map(|i| i as f64 / 100.0).map(|q| (normal.inverse_cdf(q), rep.normalized[((q * m as f64) as usize).min(m - 1)])).collect();
    let ends = (qq[0].0, qq[qq.len() - 1].0);
    let plot = Plot::new("normalized Birkhoff sums against the Gaussian", "Gaussian quantile", "empirical quantile", false, false)
        .with(Series::new("quantiles", qq, Style::Markers))
        .with(Series::new("y = x", vec![(ends.0, ends.0), (ends.1, ends.1)], Style::Line));
    run.svg("clt.svg", &plot)
}

pub fn ldp(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let w = Windows::new(&exponents(cfg)?);
    let model = cfg.model()?;
    let h = &cfg.ldp_observable;
    let grid = log_grid(cfg.ldp_n_min, cfg.ldp_n_max, cfg.ldp_per_decade);
    let curve = large_deviations(h, cfg.ldp_eps, &grid, cfg.ldp_samples, &model, cfg.seed)?;
    let control = large_deviations(h, cfg.ldp_eps, &grid, cfg.ldp_samples, &model.with_profile(Profile::Linear)?, cfg.seed)?;
    run.csv("ldp.csv", |path| curve.write_csv(path))?;
    run.csv("ldp_control.csv", |path| control.write_csv(path))?;
    run.line(format!("observable: {}, eps {}, mean {:.6}", show_observable(h), cfg.ldp_eps, curve.mean));
    run.line(format!("deviation fit: {}", fit_text(curve.fit, &curve.fit_note)));
    run.line(format!("control fit: {}", fit_text(control.fit, &control.fit_note)));
    run.check("deviation slope bound", curve.fit.is_some_and(|f| f.slope <= w.ldp), format!("slope <= {:.3}", w.ldp));
    run.check("control deviations super-polynomial", control.polynomial_rejected(), "concave log-log curve");
    let pts = |c: &palab::stats::LdpCurve| c.n.iter().zip(c.prob()).map(|(&n, p)| (n as f64, p)).collect::<Vec<_>>();
    let mut plot = Plot::new(format!("P(|average - mean| > {})", cfg.ldp_eps), "n", "probability", true, true)
        .with(Series::new("slowed", pts(&curve), Style::Markers))
        .with(Series::new("no slow-down", pts(&control), Style::Markers));
    if let Some(s) = fit_series(curve.fit) {
        plot = plot.with(s);
    }
    run.svg("ldp.svg", &plot)
}

pub fn lyapunov(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let model = cfg.model()?;
    let linear = model.with_profile(Profile::Linear)?;
    let ll = model.lambda.ln();
    let start = SurfacePoint::new(cfg.lyapunov_start[0], cfg.lyapunov_start[1], 0);
    let steps = cfg.lyapunov_steps.max(10_000);
    let off = linear.lyapunov_exponent(&start, 10_000, Direction::Forward)?.exponent;
    let mut grid = log_grid(10_000, steps, 3);
    if grid.last() != Some(&steps) {
        grid.push(steps);
    }
    let mut rows = vec![];
    let mut curve = vec![];
    let (mut fwd, mut bwd) = (f64::NAN, f64::NAN);
    for &n in &grid {
        fwd = model.lyapunov_exponent(&start, n, Direction::Forward)?.exponent;
        bwd = model.lyapunov_exponent(&start, n, Direction::Backward)?.exponent;
        rows.push(vec![n.to_string(), format!("{fwd:e}"), format!("{bwd:e}")]);
        curve.push((n as f64, fwd));
    }
    run.csv_rows("lyapunov.csv", &["steps", "forward", "backward"], rows)?;
    run.line(format!("log lambda = {ll:.8}, no slow-down {off:.8}, forward {fwd:.8}, backward {bwd:.8}"));
    run.check("no slow-down gives log lambda", (off - ll).abs() <= 1e-3, format!("|{off:.6} - {ll:.6}| <= 1e-3"));
    run.check("slowed exponent inside (0, log lambda)", fwd > 0.0 && fwd < ll, format!("{fwd:.8}"));
    run.check("forward and backward cancel", (fwd + bwd).abs() <= 2e-3, format!("|sum| = {:.2e} <= 2e-3", (fwd + bwd).abs()));
    let (a, b) = (grid[0] as f64, steps as f64);
    let plot = Plot::new("forward exponent", "steps", "exponent", true, false)
        .with(Series::new("slowed", curve, Style::Markers))
        .with(Series::new("log lambda", vec![(a, ll), (b, ll)], Style::Dashed));
    run.svg("lyapunov.svg", &plot)
}

pub fn dispatch(run: &mut Run) -> Result<()> {
    match run.subcommand {
        "gamma" => gamma(run),
        "verify-local" => verify_local(run),
        "verify-lemmas" => verify_lemmas(run),
        "tail" => tail(run),
        "sojourn" => sojourn(run),
        "corr" => corr(run),
        "clt" => clt(run),
        "ldp" => ldp(run),
        "lyapunov" => lyapunov(run),
        other => Err(crate::config::ConfigError(format!("unknown subcommand {other}")).into()),
    }
    .with_context(|| format!("{} failed", run.subcommand))
}
