//! Command-line front end: parse flags, run one pipeline stage, write its
//! artifacts. Nothing is written unless the whole stage succeeds.

use crate::cell_problem::{assemble_a_hom, check_symmetry, correctors, effective_tensor, CellDiscretisation, CellOptions};
use crate::config::{load_config, LoadedConfig, RunConfig, TargetRoot};
use crate::dispersion::{
    band_structure, mode_frame, REGIME_TOL, reconstruct_eigenfunction, regime_windows, solve_branch, DispersionTable, RegimeWindow,
};
use crate::error::{Error, Result};
use crate::gamma_fn::{check_gamma_symmetry, definiteness, GammaEvaluator};
use crate::inclusion_spectrum::{solve_resonances_with, InclusionOperators, ResonanceSpectrum, DENSE_LIMIT};
use crate::supercell_validation::{validate_root, ValidationOptions, ValidationReport};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(name = "hommax", version, about = "Homogenised spectra of high-contrast periodic Maxwell composites")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed for randomised solver starts only.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Effective tensor and the stiff-inclusion duality check.
    Ahom,
    /// Inclusion resonances and their moments.
    Spectrum {
        /// Also write the resonance fields as binary plus a JSON header.
        #[arg(long)]
        dump_fields: bool,
    },
    /// Gamma on a frequency grid `lo:hi:steps`.
    Gamma {
        #[arg(long)]
        omega_grid: String,
    },
    /// Band table and regime windows.
    Bands,
    /// Regime windows over a dense frequency grid.
    Gaps,
    /// Supercell comparison for one homogenised root.
    Validate {
        /// Use the root nearest this frequency instead of the configured targets.
        #[arg(long)]
        target_omega: Option<f64>,
        /// Comma-separated supercell factors, e.g. `2,3,4`.
        #[arg(long, value_delimiter = ',')]
        ladder: Option<Vec<usize>>,
    },
    /// Symmetry patterns of the effective tensor and of Gamma.
    SymmetryCheck,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

/// Exit status for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Geometry(_) => EXIT_CONFIG,
        _ => EXIT_SOLVER,
    }
}

/// A named artifact held in memory until the stage finishes.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    hash: &'a str,
    seed: u64,
}

impl Ctx<'_> {
    fn header(&self, n: usize) -> Value {
        json!({
            "config_sha256": self.hash,
            "grid": { "n": n, "h": 1.0 / n as f64, "n_cell": self.cfg.grid.n_cell.unwrap_or(self.cfg.grid.n) },
            "seed": self.seed,
        })
    }

    fn json(&self, name: &str, n: usize, units: &str, result: impl Serialize) -> Result<Artifact> {
        let mut v = self.header(n);
        v["units"] = json!(units);
        v["result"] = serde_json::to_value(result).map_err(|e| Error::Solver(format!("serialising {name}: {e}")))?;
        let mut text = serde_json::to_string_pretty(&v).map_err(|e| Error::Solver(e.to_string()))?;
        text.push('\n');
        Ok(Artifact { name: name.into(), bytes: text.into_bytes() })
    }

    /// CSV with `#` comment lines carrying units and provenance, then a header row.
    fn csv(&self, name: &str, n: usize, units: &str, columns: &[&str], rows: &[Vec<String>]) -> Artifact {
        let mut s = String::new();
        let _ = writeln!(s, "# {units}");
        let _ = writeln!(s, "# config_sha256={} n={} h={:.16e} seed={}", self.hash, n, 1.0 / n as f64, self.seed);
        let _ = writeln!(s, "{}", columns.join(","));
        for r in rows {
            let _ = writeln!(s, "{}", r.join(","));
        }
        Artifact { name: name.into(), bytes: s.into_bytes() }
    }
}

/// 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || Error::Config(format!("omega grid '{s}' must be lo:hi:steps with 0 <= lo < hi and steps >= 1"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let steps: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if !(lo >= 0.0 && hi > lo && hi.is_finite()) || steps == 0 {
        return Err(bad());
    }
    Ok((0..=steps).map(|i| lo + (hi - lo) * i as f64 / steps as f64).filter(|&w| w > 0.0).collect())
}

fn evaluator(cfg: &RunConfig, seed: u64, full: bool) -> Result<(GammaEvaluator, usize)> {
    let cell = if full { cfg.ladder_cell()? } else { cfg.cell()? };
    let ops = InclusionOperators::new(&cell)?;
    let mut opts = cfg.spectrum_options(seed)?;
    let cd = ops.complement_dim();
    if full && cd <= DENSE_LIMIT {
        opts.k = cd;
    }
    opts.k = opts.k.min(cd);
    let spec = solve_resonances_with(&ops, &opts)?;
    let ev = GammaEvaluator::new(spec, ops, cfg.spectrum.zero_mean_tol)?;
    Ok((ev, cell.n))
}

fn omega_max(cfg: &RunConfig, ev: &GammaEvaluator) -> Result<f64> {
    match cfg.dispersion.omega_max {
        Some(w) => Ok(w),
        None => ev
            .alphas
            .last()
            .map(|a| 0.85 * a.sqrt())
            .ok_or_else(|| Error::Solver("no resonances computed".into())),
    }
}

fn run_ahom(ctx: &Ctx) -> Result<Vec<Artifact>> {
    let cell = ctx.cfg.cell()?;
    let t = effective_tensor(&cell, &CellOptions { tol: ctx.cfg.cell.tol, ..Default::default() })?;
    Ok(vec![ctx.json("ahom.json", cell.n, "A: inverse permittivity units; stiff: permittivity units", &t)?])
}

fn run_spectrum(ctx: &Ctx, dump: bool) -> Result<Vec<Artifact>> {
    let cell = ctx.cfg.cell()?;
    let ops = InclusionOperators::new(&cell)?;
    let spec: ResonanceSpectrum = solve_resonances_with(&ops, &ctx.cfg.spectrum_options(ctx.seed)?)?;
    let mut out = vec![ctx.json(
        "spectrum.json",
        cell.n,
        "alpha: omega^2 with c = 1 and unit period; moments: cell integrals of unit-L2 fields",
        &spec,
    )?];
    if dump {
        let (bytes, mut header) = spec.field_dump("spectrum_fields.bin");
        header["config_sha256"] = json!(ctx.hash);
        out.push(Artifact { name: "spectrum_fields.bin".into(), bytes });
        let mut text = serde_json::to_string_pretty(&header).map_err(|e| Error::Solver(e.to_string()))?;
        text.push('\n');
        out.push(Artifact { name: "spectrum_fields.json".into(), bytes: text.into_bytes() });
    }
    Ok(out)
}

fn run_gamma(ctx: &Ctx, grid: &str) -> Result<Vec<Artifact>> {
    let omegas = parse_grid(grid)?;
    let (ev, n) = evaluator(ctx.cfg, ctx.seed, false)?;
    let mut rows = Vec::new();
    for &w in &omegas {
        let mut r = vec![fmt_f64(w)];
        match ev.gamma_series(w) {
            Ok(g) => {
                let d = definiteness(&g, REGIME_TOL * crate::mat3::frob(&g))?;
                r.extend(g.iter().flatten().map(|&v| fmt_f64(v)));
                r.push(d.label.to_string());
            }
            Err(Error::PoleGuard { .. }) => {
                r.extend((0..9).map(|_| "NaN".to_string()));
                r.push("pole_guard".into());
            }
            Err(e) => return Err(e),
        }
        r.push(ev.nearest_pole(w).map_or("NaN".into(), |a| fmt_f64(a.sqrt())));
        rows.push(r);
    }
    let cols = ["omega", "g11", "g12", "g13", "g21", "g22", "g23", "g31", "g32", "g33", "definiteness", "nearest_pole_omega"];
    Ok(vec![ctx.csv(
        "gamma.csv",
        n,
        "omega in units of 1/period (c = 1); Gamma in omega^2 units; series truncated at K resonances",
        &cols,
        &rows,
    )])
}

fn band_rows(t: &DispersionTable) -> Vec<Vec<String>> {
    t.rows
        .iter()
        .map(|r| {
            let m = r.m.map_or(["*".to_string(), "*".into(), "*".into()], |m| m.map(|x| x.to_string()));
            vec![
                m[0].clone(),
                m[1].clone(),
                m[2].clone(),
                r.branch.to_string(),
                fmt_f64(r.omega),
                r.multiplicity.to_string(),
                r.regime.to_string(),
                fmt_f64(r.residual),
                r.uncertain.to_string(),
            ]
        })
        .collect()
}

#[derive(Serialize)]
struct GapReport<'a> {
    omega_max: f64,
    samples: usize,
    truncation_ok: bool,
    weak_gap_windows: usize,
    full_gap_windows: usize,
    windows: &'a [RegimeWindow],
}

fn gap_report<'a>(windows: &'a [RegimeWindow], omega_max: f64, samples: usize, truncation_ok: bool) -> GapReport<'a> {
    use crate::dispersion::Regime;
    GapReport {
        omega_max,
        samples,
        truncation_ok,
        weak_gap_windows: windows.iter().filter(|w| w.regime == Regime::WeakGap).count(),
        full_gap_windows: windows.iter().filter(|w| w.regime == Regime::FullGap).count(),
        windows,
    }
}

fn run_bands(ctx: &Ctx, with_table: bool) -> Result<Vec<Artifact>> {
    let cfg = ctx.cfg;
    let cell = cfg.cell()?;
    let a = assemble_a_hom(&cell, &CellOptions { tol: cfg.cell.tol, ..Default::default() })?.a;
    let (ev, n) = evaluator(cfg, ctx.seed, false)?;
    let wmax = omega_max(cfg, &ev)?;
    let truncation_ok = ev.alphas.last().is_some_and(|&al| wmax < 0.9 * al.sqrt());
    if !truncation_ok {
        log::warn!("omega_max = {wmax} is not below 0.9 sqrt(alpha_K); series truncation is uncontrolled");
    }
    let windows = regime_windows(&ev, wmax, cfg.dispersion.gap_samples)?;
    let mut out = Vec::new();
    let units = "omega in units of 1/period (c = 1); m integer wave vector, k = 2 pi m";
    if with_table {
        let table = band_structure(&a, &ev, cfg.dispersion.m_max, wmax, &cfg.scan_options())?;
        let cols = ["m1", "m2", "m3", "branch", "omega", "multiplicity", "regime", "residual", "uncertain"];
        out.push(ctx.csv("bands.csv", n, units, &cols, &band_rows(&table)));
    } else {
        let rows: Vec<Vec<String>> = windows
            .iter()
            .map(|w| vec![w.regime.to_string(), fmt_f64(w.lo), fmt_f64(w.hi), w.samples.to_string(), w.propagating.len().to_string()])
            .collect();
        out.push(ctx.csv("gaps.csv", n, units, &["regime", "omega_lo", "omega_hi", "samples", "propagating_dim"], &rows));
    }
    out.push(ctx.json(
        "gap_report.json",
        n,
        "omega in units of 1/period; windows are sampled ranges, pole guards excluded",
        gap_report(&windows, wmax, cfg.dispersion.gap_samples, truncation_ok),
    )?);
    Ok(out)
}

#[derive(Serialize)]
struct ValidateOut {
    target: TargetRoot,
    report: ValidationReport,
}

fn run_validate(ctx: &Ctx, target_omega: Option<f64>, ladder: Option<Vec<usize>>) -> Result<Vec<Artifact>> {
    let cfg = ctx.cfg;
    let cell = cfg.ladder_cell()?;
    let copts = CellOptions { tol: cfg.cell.tol, ..Default::default() };
    let a = assemble_a_hom(&cell, &copts)?.a;
    let disc = CellDiscretisation::new(&cell)?;
    let corr = correctors(&disc, &copts)?;
    let (ev, n) = evaluator(cfg, ctx.seed, true)?;
    let wmax = omega_max(cfg, &ev)?;
    let scan = cfg.scan_options();
    let targets: Vec<TargetRoot> = match target_omega {
        Some(w) => {
            if !(w > 0.0) {
                return Err(Error::Config(format!("target omega must be positive, got {w}")));
            }
            let table = band_structure(&a, &ev, cfg.dispersion.m_max, wmax.max(1.05 * w), &scan)?;
            let best = table
                .rows
                .iter()
                .filter(|r| r.m.is_some())
                .min_by(|x, y| (x.omega - w).abs().total_cmp(&(y.omega - w).abs()))
                .ok_or_else(|| Error::Solver(format!("no homogenised root found below {}", wmax.max(1.05 * w))))?;
            vec![TargetRoot { m: best.m.unwrap(), branch: best.branch }]
        }
        None => cfg.validate.targets.clone(),
    };
    let opts = ValidationOptions {
        ladder: ladder.unwrap_or_else(|| cfg.validate.ladder.clone()),
        count: cfg.validate.count,
        tol: cfg.validate.tol,
        seed: ctx.seed,
        max_grid: cfg.validate.max_grid,
    };
    if let Some(p) = opts.ladder.iter().find(|&&p| p == 0 || p * n > opts.max_grid) {
        return Err(Error::Config(format!("ladder entry {p} is zero or exceeds the {}^3 grid cap", opts.max_grid)));
    }
    let mut results = Vec::new();
    for t in targets {
        let frame = mode_frame(&a, t.m)?;
        let br = solve_branch(&frame, &ev, (1e-3, wmax), &scan)?;
        let root = br
            .roots
            .get(t.branch)
            .ok_or_else(|| Error::Solver(format!("m = {:?} has no branch {} below {wmax}", t.m, t.branch)))?;
        let field = reconstruct_eigenfunction(&frame, &ev, root.omega, root.uhat[0])?;
        let report = validate_root(&cell, &ev, &corr, &field, &opts)?;
        results.push(ValidateOut { target: t, report });
    }
    Ok(vec![ctx.json(
        "validate.json",
        n,
        "omega in units of 1/period; distances in omega units; field distances relative l2",
        &results,
    )?])
}

#[derive(Serialize)]
struct SymmetryOut {
    tags: Vec<String>,
    a_hom: crate::mat3::M3,
    a_hom_report: crate::cell_problem::SymmetryReport,
    gamma: Vec<crate::gamma_fn::GammaSymmetry>,
    ok: bool,
}

/// Midpoints of the first few inter-pole segments, plus one low frequency.
fn symmetry_samples(ev: &GammaEvaluator) -> Vec<f64> {
    let mut edges = vec![0.0];
    edges.extend(ev.poles.iter().take(4).map(|p| p.alpha.sqrt()));
    let mut out = vec![0.25 * edges.get(1).copied().unwrap_or(1.0)];
    out.extend(edges.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    out
}

fn run_symmetry(ctx: &Ctx) -> Result<Vec<Artifact>> {
    let cfg = ctx.cfg;
    let cell = cfg.cell()?;
    if cell.symmetry_tags.is_empty() {
        return Err(Error::Config("symmetry-check needs geometry.symmetry tags".into()));
    }
    let tol = 1e-6;
    let t = assemble_a_hom(&cell, &CellOptions { tol: cfg.cell.tol, ..Default::default() })?;
    let a_hom_report = check_symmetry(&t.a, &cell.symmetry_tags, tol);
    let (ev, n) = evaluator(cfg, ctx.seed, false)?;
    let gamma = check_gamma_symmetry(&ev, &cell, &symmetry_samples(&ev), tol)?;
    let ok = a_hom_report.ok && gamma.iter().all(|g| g.report.ok);
    let out = SymmetryOut {
        tags: cell.symmetry_tags.iter().map(|r| r.to_string()).collect(),
        a_hom: t.a,
        a_hom_report,
        gamma,
        ok,
    };
    Ok(vec![ctx.json("symmetry.json", n, "errors relative to the Frobenius norm", &out)?])
}

/// Run one subcommand against a loaded configuration and return its artifacts.
pub fn execute(command: &Command, loaded: &LoadedConfig, seed: u64) -> Result<Vec<Artifact>> {
    let ctx = Ctx { cfg: &loaded.config, hash: &loaded.hash, seed };
    match command {
        Command::Ahom => run_ahom(&ctx),
        Command::Spectrum { dump_fields } => run_spectrum(&ctx, *dump_fields),
        Command::Gamma { omega_grid } => run_gamma(&ctx, omega_grid),
        Command::Bands => run_bands(&ctx, true),
        Command::Gaps => run_bands(&ctx, false),
        Command::Validate { target_omega, ladder } => run_validate(&ctx, *target_omega, ladder.clone()),
        Command::SymmetryCheck => run_symmetry(&ctx),
    }
}

pub fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for a in artifacts {
        std::fs::write(dir.join(&a.name), &a.bytes)?;
    }
    Ok(())
}

fn run_inner(cli: &Cli) -> Result<Vec<PathBuf>> {
    let path = cli.common.config.as_ref().ok_or_else(|| Error::Config("--config PATH is required".into()))?;
    let loaded = load_config(path)?;
    let artifacts = match cli.common.threads {
        Some(0) => return Err(Error::Config("--threads must be positive".into())),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(|| execute(&cli.command, &loaded, cli.common.seed))?,
        None => execute(&cli.command, &loaded, cli.common.seed)?,
    };
    write_artifacts(&cli.common.out, &artifacts)?;
    Ok(artifacts.iter().map(|a| cli.common.out.join(&a.name)).collect())
}

/// Parse `args` (including the program name), run, and return the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run_inner(&cli) {
        Ok(paths) => {
            for p in paths {
                log::info!("wrote {}", p.display());
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
