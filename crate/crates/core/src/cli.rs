//! Config files, CSV output and the commands behind the `grantfree` binary.
//!
//! Config files are flat `key = value` lines with `#` comments. Unknown keys
//! are rejected. Every CSV gets a sibling `<name>.manifest` that is itself a
//! valid config file reproducing the run.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::amp::state_evolution_fixed_point;
use crate::bler::{mixture_bler, overall_bler, ConditionalMethod};
use crate::detection::{DetectionConvention, DetectionStats};
use crate::montecarlo::{run_campaign_with_workers, EmpiricalBler};
use crate::pilot::{evaluate_point, optimize_pilot_length, SweepMode};
use crate::rng::trial_seed;
use crate::system::{db_to_linear, dbm_to_watts, Activity, SystemConfig, TABLE_ONE_NOISE_DBM, TABLE_ONE_RX_POWER_DB};
use crate::validate::{run_suite, ValidateOptions};
use crate::{Error, Result};

pub const CSV_SCHEMA_VERSION: u32 = 1;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::EmptyFeasibleSet(_) | Error::Io(_) => EXIT_CONFIG,
        Error::Domain(_)
        | Error::Dimension(_)
        | Error::Divergence { .. }
        | Error::NonConvergence { .. }
        | Error::Quadrature { .. } => EXIT_NUMERICAL,
    }
}

/// Inclusive integer range with a step, written `start:stop:step`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    pub start: usize,
    pub stop: usize,
    pub step: usize,
}

impl Grid {
    pub fn values(&self) -> Vec<usize> {
        (self.start..=self.stop).step_by(self.step.max(1)).collect()
    }

    fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let num = |p: &str| p.parse::<usize>().map_err(|_| Error::Config(format!("bad grid `{s}`")));
        match parts.as_slice() {
            [a, b, c] => Ok(Grid { start: num(a)?, stop: num(b)?, step: num(c)? }),
            [a, b] => Ok(Grid { start: num(a)?, stop: num(b)?, step: 1 }),
            _ => Err(Error::Config(format!("grid `{s}` should be start:stop[:step]"))),
        }
    }
}

impl std::fmt::Display for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.stop, self.step)
    }
}

/// A parsed config file: the system plus run controls.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub rx_power_db: f64,
    pub noise_dbm: f64,
    pub trials: usize,
    pub seed: u64,
    pub mode: SweepMode,
    /// K grid of `fig2`.
    pub fig2_active: Grid,
    pub fig2_pilot_lens: Vec<usize>,
    /// L grid of `fig3`.
    pub fig3_pilot_lens: Grid,
    pub fig3_active: Vec<usize>,
    /// Simulate every this-many pilot lengths in `fig3`.
    pub fig3_sim_step: usize,
    pub validate_scenarios: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut system = SystemConfig::table_one(100, 120);
        system.rx_power = db_to_linear(TABLE_ONE_RX_POWER_DB);
        system.noise_var = dbm_to_watts(TABLE_ONE_NOISE_DBM);
        Self {
            system,
            rx_power_db: TABLE_ONE_RX_POWER_DB,
            noise_dbm: TABLE_ONE_NOISE_DBM,
            trials: 2000,
            seed: 1,
            mode: SweepMode::Fast,
            fig2_active: Grid { start: 60, stop: 110, step: 5 },
            fig2_pilot_lens: vec![120, 160],
            fig3_pilot_lens: Grid { start: 100, stop: 200, step: 1 },
            fig3_active: vec![60, 100],
            fig3_sim_step: 10,
            validate_scenarios: 20,
        }
    }
}

fn parse_list(key: &str, v: &str) -> Result<Vec<usize>> {
    v.split(',')
        .map(|s| s.trim().parse::<usize>().map_err(|_| Error::Config(format!("{key}: bad list `{v}`"))))
        .collect()
}

/// Parses config text on top of the Table I defaults.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut rc = RunConfig::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        let bad = || Error::Config(format!("line {}: bad value `{value}` for {key}", lineno + 1));
        macro_rules! num {
            ($t:ty) => {
                value.parse::<$t>().map_err(|_| bad())?
            };
        }
        let s = &mut rc.system;
        match key {
            "n_users" => s.n_users = num!(usize),
            "n_antennas" => s.n_antennas = num!(usize),
            "block_len" => s.block_len = num!(usize),
            "pilot_len" => s.pilot_len = num!(usize),
            "payload_bits" => s.payload_bits = num!(usize),
            "active_count" => s.activity = Activity::Fixed(num!(usize)),
            "activity_prob" => s.activity = Activity::Bernoulli(num!(f64)),
            "rx_power_db" => rc.rx_power_db = num!(f64),
            "noise_dbm" => rc.noise_dbm = num!(f64),
            "trials" => rc.trials = num!(usize),
            "seed" => rc.seed = num!(u64),
            "amp_max_iters" => s.amp_max_iters = num!(usize),
            "amp_tol" => s.amp_tol = num!(f64),
            "trunc_tol" => s.trunc_tol = num!(f64),
            "se_samples" => s.se_samples = num!(usize),
            "mode" => rc.mode = value.parse()?,
            "fig2_active" => rc.fig2_active = Grid::parse(value)?,
            "fig2_pilot_lens" => rc.fig2_pilot_lens = parse_list(key, value)?,
            "fig3_pilot_lens" => rc.fig3_pilot_lens = Grid::parse(value)?,
            "fig3_active" => rc.fig3_active = parse_list(key, value)?,
            "fig3_sim_step" => rc.fig3_sim_step = num!(usize),
            "validate_scenarios" => rc.validate_scenarios = num!(usize),
            other => return Err(Error::Config(format!("line {}: unknown key `{other}`", lineno + 1))),
        }
    }
    rc.system.rx_power = db_to_linear(rc.rx_power_db);
    rc.system.noise_var = dbm_to_watts(rc.noise_dbm);
    if rc.fig3_sim_step == 0 {
        return Err(Error::Config("fig3_sim_step must be positive".into()));
    }
    rc.system.validate()?;
    Ok(rc)
}

pub fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
            parse_config(&text)
        }
        None => parse_config(""),
    }
}

/// The config in file form; parsing it back gives the same `RunConfig`.
pub fn render_config(rc: &RunConfig) -> String {
    let s = &rc.system;
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    kv("n_users", s.n_users.to_string());
    kv("n_antennas", s.n_antennas.to_string());
    kv("block_len", s.block_len.to_string());
    kv("pilot_len", s.pilot_len.to_string());
    kv("payload_bits", s.payload_bits.to_string());
    match s.activity {
        Activity::Fixed(k) => kv("active_count", k.to_string()),
        Activity::Bernoulli(p) => kv("activity_prob", format!("{p:?}")),
    }
    kv("rx_power_db", format!("{:?}", rc.rx_power_db));
    kv("noise_dbm", format!("{:?}", rc.noise_dbm));
    kv("trials", rc.trials.to_string());
    kv("seed", rc.seed.to_string());
    kv("amp_max_iters", s.amp_max_iters.to_string());
    kv("amp_tol", format!("{:?}", s.amp_tol));
    kv("trunc_tol", format!("{:?}", s.trunc_tol));
    kv("se_samples", s.se_samples.to_string());
    kv("mode", rc.mode.as_str().to_string());
    kv("fig2_active", rc.fig2_active.to_string());
    kv("fig2_pilot_lens", join(&rc.fig2_pilot_lens));
    kv("fig3_pilot_lens", rc.fig3_pilot_lens.to_string());
    kv("fig3_active", join(&rc.fig3_active));
    kv("fig3_sim_step", rc.fig3_sim_step.to_string());
    kv("validate_scenarios", rc.validate_scenarios.to_string());
    out
}

fn join(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:.16e}")
    }
}

fn opt_f64(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Command-line options shared by every command.
#[derive(Debug, Clone, Default)]
pub struct CommonOpts {
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub workers: usize,
    pub mode: Option<SweepMode>,
    pub analytic_only: bool,
}

impl CommonOpts {
    /// Config file with flag overrides applied.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut rc = load_config(self.config.as_deref())?;
        if let Some(t) = self.trials {
            rc.trials = t;
        }
        if let Some(s) = self.seed {
            rc.seed = s;
        }
        if let Some(m) = self.mode {
            rc.mode = m;
        }
        if self.analytic_only {
            rc.trials = 0;
        }
        Ok(rc)
    }
}

/// Writes `csv` to `path` and its manifest next to it.
pub fn write_outputs(path: &Path, csv: &str, rc: &RunConfig, command: &str) -> Result<PathBuf> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, csv)?;
    let manifest = manifest_path(path);
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let mut text = String::new();
    let _ = writeln!(text, "# command: {command}");
    let _ = writeln!(text, "# tool: grantfree {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(text, "# csv_schema: {CSV_SCHEMA_VERSION}");
    let _ = writeln!(text, "# unix_time: {stamp}");
    let _ = writeln!(text, "# output: {}", path.display());
    text.push_str(&render_config(rc));
    fs::write(&manifest, text)?;
    Ok(manifest)
}

pub fn manifest_path(csv: &Path) -> PathBuf {
    let mut name = csv.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest");
    csv.with_file_name(name)
}

fn schema_line(command: &str) -> String {
    format!("# grantfree {command} csv v{CSV_SCHEMA_VERSION}\n")
}

/// Campaign seed for one grid point, a pure function of the run seed.
pub fn point_seed(seed: u64, active: usize, pilot_len: usize) -> u64 {
    trial_seed(seed, ((pilot_len as u64) << 32) | active as u64)
}

/// One row of the BLER-versus-K table. BLER columns include missed users.
#[derive(Debug, Clone, PartialEq)]
pub struct Fig2Row {
    pub active: usize,
    pub pilot_len: usize,
    pub p_miss: f64,
    pub p_false: f64,
    pub tau_inf_sq: f64,
    pub bler_mixture_lo: f64,
    pub bler_mixture_hi: f64,
    pub bler_dominant: f64,
    pub empirical: Option<EmpiricalBler>,
}

/// Analytical (and, with `trials > 0`, simulated) BLER over the K grid for
/// every listed pilot length.
pub fn fig2_rows(rc: &RunConfig, workers: usize) -> Result<Vec<Fig2Row>> {
    let mut rows = Vec::new();
    for &l in &rc.fig2_pilot_lens {
        for k in rc.fig2_active.values() {
            let cfg = rc.system.with_pilot_len(l).with_active_count(k);
            cfg.validate()?;
            let tau = state_evolution_fixed_point(&cfg)?;
            let stats = DetectionStats::at_state(&cfg, tau, DetectionConvention::Corrected);
            let rep = mixture_bler(&cfg, &stats, cfg.code(), cfg.trunc_tol, ConditionalMethod::ClosedForm)?;
            let empirical = if rc.trials > 0 {
                Some(run_campaign_with_workers(&cfg, rc.trials, point_seed(rc.seed, k, l), workers)?)
            } else {
                None
            };
            rows.push(Fig2Row {
                active: k,
                pilot_len: l,
                p_miss: rep.p_miss,
                p_false: rep.p_false,
                tau_inf_sq: rep.tau_inf_sq,
                bler_mixture_lo: rep.p_overall_lo,
                bler_mixture_hi: rep.p_overall_hi,
                bler_dominant: overall_bler(rep.p_miss, rep.bler_dominant),
                empirical,
            });
        }
    }
    Ok(rows)
}

pub fn fig2_csv(rows: &[Fig2Row]) -> String {
    let mut out = schema_line("fig2");
    out.push_str("K,L,p_miss,p_false,tau_inf_sq,bler_mixture_lo,bler_mixture_hi,bler_dominant,bler_empirical,ci_half_width,trials\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.active,
            r.pilot_len,
            fmt_f64(r.p_miss),
            fmt_f64(r.p_false),
            fmt_f64(r.tau_inf_sq),
            fmt_f64(r.bler_mixture_lo),
            fmt_f64(r.bler_mixture_hi),
            fmt_f64(r.bler_dominant),
            opt_f64(r.empirical.as_ref().map(|e| e.bler)),
            opt_f64(r.empirical.as_ref().map(|e| e.ci_half_width)),
            r.empirical.as_ref().map(|e| e.trials.to_string()).unwrap_or_default(),
        );
    }
    out
}

/// K at which curve `b` overtakes curve `a` (both sampled on `ks`), by linear
/// interpolation of `log(a) - log(b)`; the first sign change wins.
pub fn curve_crossing(ks: &[usize], a: &[f64], b: &[f64]) -> Option<f64> {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x.max(1e-300).ln() - y.max(1e-300).ln()).collect();
    for i in 1..diff.len() {
        let (d0, d1) = (diff[i - 1], diff[i]);
        if d0 == 0.0 {
            return Some(ks[i - 1] as f64);
        }
        if d0.signum() != d1.signum() {
            let t = d0 / (d0 - d1);
            return Some(ks[i - 1] as f64 + t * (ks[i] - ks[i - 1]) as f64);
        }
    }
    None
}

/// One row of the BLER-versus-L table.
#[derive(Debug, Clone, PartialEq)]
pub struct Fig3Row {
    pub active: usize,
    pub pilot_len: usize,
    pub rate: f64,
    pub p_miss: f64,
    pub p_false: f64,
    pub tau_inf_sq: f64,
    pub bler_analytic: f64,
    pub empirical: Option<EmpiricalBler>,
    pub is_argmin: bool,
}

/// Analytical curve (in the configured mode) over the L grid for each K, with
/// simulated points every `fig3_sim_step` lengths when `trials > 0`.
pub fn fig3_rows(rc: &RunConfig, workers: usize) -> Result<Vec<Fig3Row>> {
    let mut rows = Vec::new();
    for &k in &rc.fig3_active {
        let max_len = rc.system.block_len - rc.system.payload_bits;
        let lens: Vec<usize> =
            rc.fig3_pilot_lens.values().into_iter().filter(|&l| l > k && l <= max_len).collect();
        if lens.is_empty() {
            return Err(Error::EmptyFeasibleSet(format!("no pilot length in {} fits K = {k}", rc.fig3_pilot_lens)));
        }
        let start = rows.len();
        for (i, &l) in lens.iter().enumerate() {
            let cfg = rc.system.with_pilot_len(l).with_active_count(k);
            let rep = evaluate_point(&cfg, rc.mode, ConditionalMethod::ClosedForm)?;
            let empirical = if rc.trials > 0 && i % rc.fig3_sim_step == 0 {
                Some(run_campaign_with_workers(&cfg, rc.trials, point_seed(rc.seed, k, l), workers)?)
            } else {
                None
            };
            rows.push(Fig3Row {
                active: k,
                pilot_len: l,
                rate: cfg.coding_rate(),
                p_miss: rep.p_miss,
                p_false: rep.p_false,
                tau_inf_sq: rep.tau_inf_sq,
                bler_analytic: rep.p_overall,
                empirical,
                is_argmin: false,
            });
        }
        let best = (start..rows.len())
            .fold(start, |b, i| if rows[i].bler_analytic < rows[b].bler_analytic { i } else { b });
        rows[best].is_argmin = true;
    }
    Ok(rows)
}

pub fn fig3_csv(rows: &[Fig3Row]) -> String {
    let mut out = schema_line("fig3");
    out.push_str("K,L,rate,p_miss,p_false,tau_inf_sq,bler_analytic,bler_empirical,ci_half_width,trials,is_argmin\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.active,
            r.pilot_len,
            fmt_f64(r.rate),
            fmt_f64(r.p_miss),
            fmt_f64(r.p_false),
            fmt_f64(r.tau_inf_sq),
            fmt_f64(r.bler_analytic),
            opt_f64(r.empirical.as_ref().map(|e| e.bler)),
            opt_f64(r.empirical.as_ref().map(|e| e.ci_half_width)),
            r.empirical.as_ref().map(|e| e.trials.to_string()).unwrap_or_default(),
            u8::from(r.is_argmin),
        );
    }
    out
}

fn out_path(opts: &CommonOpts, default: &str) -> PathBuf {
    opts.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

pub fn cmd_fig2(opts: &CommonOpts) -> Result<String> {
    let rc = opts.resolve()?;
    let rows = fig2_rows(&rc, opts.workers)?;
    let path = out_path(opts, "fig2.csv");
    write_outputs(&path, &fig2_csv(&rows), &rc, "fig2")?;
    let mut msg = format!("wrote {} rows to {}\n", rows.len(), path.display());
    if rc.fig2_pilot_lens.len() == 2 {
        let (la, lb) = (rc.fig2_pilot_lens[0], rc.fig2_pilot_lens[1]);
        let pick = |l: usize| rows.iter().filter(|r| r.pilot_len == l).map(|r| r.bler_mixture_lo).collect::<Vec<_>>();
        let ks = rc.fig2_active.values();
        match curve_crossing(&ks, &pick(la), &pick(lb)) {
            Some(k) => {
                let _ = writeln!(msg, "L = {la} and L = {lb} curves cross at K = {k:.2}");
            }
            None => {
                let _ = writeln!(msg, "L = {la} and L = {lb} curves do not cross on the grid");
            }
        }
    }
    Ok(msg)
}

pub fn cmd_fig3(opts: &CommonOpts) -> Result<String> {
    let rc = opts.resolve()?;
    let rows = fig3_rows(&rc, opts.workers)?;
    let path = out_path(opts, "fig3.csv");
    write_outputs(&path, &fig3_csv(&rows), &rc, "fig3")?;
    let mut msg = format!("wrote {} rows to {}\n", rows.len(), path.display());
    for r in rows.iter().filter(|r| r.is_argmin) {
        let _ = writeln!(msg, "K = {}: analytical optimum L* = {} (P_e = {:.4e})", r.active, r.pilot_len, r.bler_analytic);
    }
    Ok(msg)
}

pub fn cmd_optimize(opts: &CommonOpts) -> Result<String> {
    let rc = opts.resolve()?;
    let res = optimize_pilot_length(&rc.system, rc.mode)?;
    let mut csv = schema_line("optimize");
    csv.push_str("L,p_overall,p_miss,p_false,rate,bler_detected,tau_inf_sq\n");
    let mut table = String::new();
    let _ = writeln!(table, "{:>5} {:>14} {:>14} {:>14} {:>8}", "L", "P_e", "P_M", "P_F", "R");
    for p in &res.curve {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            p.pilot_len,
            fmt_f64(p.p_overall),
            fmt_f64(p.p_miss),
            fmt_f64(p.p_false),
            fmt_f64(p.rate),
            fmt_f64(p.bler_detected),
            fmt_f64(p.tau_inf_sq)
        );
        let _ = writeln!(
            table,
            "{:>5} {:>14.6e} {:>14.6e} {:>14.6e} {:>8.4}",
            p.pilot_len, p.p_overall, p.p_miss, p.p_false, p.rate
        );
    }
    let path = out_path(opts, "optimize.csv");
    write_outputs(&path, &csv, &rc, "optimize")?;
    let best = res.best();
    let mut msg = String::new();
    for w in &res.warnings {
        let _ = writeln!(msg, "warning: {w}");
    }
    let _ = writeln!(msg, "mode: {}", res.mode.as_str());
    let _ = writeln!(msg, "L* = {}  P_e(L*) = {:.6e}", best.pilot_len, best.p_overall);
    msg.push_str(&table);
    Ok(msg)
}

/// Runs the oracle suite; the flag is `true` when every check passed.
pub fn cmd_validate(opts: &CommonOpts, corrupt_shape: bool) -> Result<(bool, String)> {
    let rc = opts.resolve()?;
    let vopts = ValidateOptions {
        scenarios: rc.validate_scenarios,
        seed: rc.seed,
        corrupt_shape,
        ..ValidateOptions::default()
    };
    let checks = run_suite(&rc.system, &vopts)?;
    let mut report = String::from("check,status,value,limit,detail\n");
    for c in &checks {
        let _ = writeln!(
            report,
            "{},{},{},{},\"{}\"",
            c.name,
            if c.passed { "pass" } else { "fail" },
            fmt_f64(c.value),
            fmt_f64(c.limit),
            c.detail.replace('"', "'")
        );
    }
    if let Some(path) = &opts.out {
        write_outputs(path, &(schema_line("validate") + &report), &rc, "validate")?;
    }
    Ok((checks.iter().all(|c| c.passed), report))
}
