//! Command-line experiments over the subriemann toolkit.
//!
//! Every command reads a JSON config (flags override a few common fields),
//! writes its results as CSV/JSON plus a run manifest, and exits 0 when all
//! pass flags hold, 1 on a failed check, 2 on usage or config errors.
//! With a fixed seed, outputs are byte-identical across runs.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use subriemann::frames::{
    best_index, homogeneous_dimension, hormander_rank, lambda_det, rescale,
};
use subriemann::functional::{poincare_constant_estimate, validate_structure, PoincareEnsemble};
use subriemann::grid::BoxRegion;
use subriemann::harnack::{
    epsilon_sweep, harnack_quotient, log_oscillation, make_cylinders, max_principle_margin,
};
use subriemann::io;
use subriemann::metric::distance::{adapted_lattice, distance_field};
use subriemann::metric::volume::{ball_volume, doubling_lattice, sandwich_check, SandwichConfig};
use subriemann::pde::solve;

use config::{read_config, SolveConfig, SweepFileConfig};

#[derive(Parser)]
#[command(name = "subriemann", version, about = "frames, control distances and parabolic harnesses")]
struct Cli {
    /// Worker threads (default: all cores); results do not depend on it
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// JSON config file
    #[arg(long)]
    config: PathBuf,
    /// Output directory (under $SUBRIEMANN_OUT when set)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the config seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Inspect a frame: commutator table, degrees, rank, best tuple
    Frame {
        /// frame definition file
        #[arg(long)]
        frame: PathBuf,
        /// evaluation point, comma separated
        #[arg(long, default_value = "0,0,0")]
        at: String,
        /// rescaling parameter
        #[arg(long, default_value_t = 0.0)]
        epsilon: f64,
        /// radius for the best-tuple selection
        #[arg(long, default_value_t = 0.1)]
        radius: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build and export a control distance field
    Distance(CommonArgs),
    /// Ball volumes against the volume functional over an (epsilon, r) grid
    Volume(CommonArgs),
    /// Doubling ratios |B(2r)| / |B(r)|
    Doubling(CommonArgs),
    /// Poincare constant estimates over an ensemble
    Poincare(CommonArgs),
    /// Solve a parabolic problem and export the final slice
    Solve(CommonArgs),
    /// Harnack quotient, maximum-principle margin and log oscillation
    Harnack(CommonArgs),
    /// Full stability sweep over (epsilon, rho)
    Sweep(CommonArgs),
}

fn out_dir(cmd: &str, flag: &Option<PathBuf>) -> Result<PathBuf> {
    let root = std::env::var_os("SUBRIEMANN_OUT").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
    let dir = root.join(flag.clone().unwrap_or_else(|| PathBuf::from(format!("out_{cmd}"))));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn write_csv(path: &Path, header: &str, rows: &[Vec<String>]) -> Result<()> {
    let mut text = String::from(header);
    text.push('\n');
    for row in rows {
        text.push_str(&row.join(","));
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

#[derive(Serialize)]
struct Manifest {
    command: String,
    version: String,
    seed: u64,
    config: serde_json::Value,
    outputs: Vec<String>,
    pass: bool,
    wall_ms: u128,
}

fn write_manifest(
    dir: &Path,
    command: &str,
    seed: u64,
    config: serde_json::Value,
    outputs: &[&Path],
    pass: bool,
    start: Instant,
) -> Result<()> {
    let manifest = Manifest {
        command: command.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed,
        config,
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        pass,
        wall_ms: start.elapsed().as_millis(),
    };
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

fn parse_point(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| anyhow::anyhow!("bad coordinate {p:?}: {e}")))
        .collect()
}

fn cmd_frame(frame: &Path, at: &str, epsilon: f64, radius: f64, out: &Option<PathBuf>) -> Result<bool> {
    let start = Instant::now();
    let dir = out_dir("frame", out)?;
    let table = io::load_frame(frame)?;
    let x = parse_point(at)?;
    if x.len() != table.dim() {
        bail!("point has {} coordinates, frame dimension is {}", x.len(), table.dim());
    }
    let family = rescale(&table, epsilon)?;
    let rank = hormander_rank(&table, &x);
    let n_hom = homogeneous_dimension(&table, &x).ok();
    let best = best_index(&family, &x, radius, 0.5).ok();
    let report = json!({
        "dim": table.dim(),
        "generators": table.num_generators(),
        "entries": table.entries().iter().map(|(f, d)| json!({
            "degree": d,
            "components": f.components().iter().map(|p| p.to_string()).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
        "degrees": table.entries().iter().map(|e| e.1).collect::<Vec<_>>(),
        "hormander_rank": rank,
        "full_rank": rank == table.dim(),
        "homogeneous_dimension": n_hom,
        "epsilon": epsilon,
        "extended_degrees": family.degrees_eps(),
        "best_tuple": best.as_ref().map(|t| t.indices().to_vec()),
        "best_lambda": best.as_ref().map(|t| lambda_det(&family, &x, t)),
        "at": x,
    });
    let path = dir.join("frame_report.json");
    std::fs::write(&path, serde_json::to_string_pretty(&report)?)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    let pass = rank == table.dim();
    write_manifest(&dir, "frame", 0, json!({"frame": frame, "at": at, "epsilon": epsilon}), &[&path], pass, start)?;
    Ok(pass)
}

#[derive(Debug, Clone, Serialize, serde::Deserialize)]
struct DistanceConfig {
    frame: PathBuf,
    #[serde(default)]
    epsilon: f64,
    origin: Vec<f64>,
    box_half: Vec<f64>,
    dims: Vec<usize>,
    #[serde(default = "default_true")]
    adapt_degenerate_axes: bool,
    #[serde(default = "default_budget")]
    move_budget: usize,
    #[serde(default)]
    seed: u64,
}

fn default_true() -> bool {
    true
}
fn default_budget() -> usize {
    2
}

fn cmd_distance(args: &CommonArgs) -> Result<bool> {
    let start = Instant::now();
    let cfg: DistanceConfig = read_config(&args.config)?;
    let dir = out_dir("distance", &args.out)?;
    let table = config::load_frame_rel(args.config.parent().unwrap_or(Path::new(".")), &cfg.frame)?;
    let family = rescale(&table, cfg.epsilon)?;
    let lower: Vec<f64> = cfg.origin.iter().zip(&cfg.box_half).map(|(c, h)| c - h).collect();
    let upper: Vec<f64> = cfg.origin.iter().zip(&cfg.box_half).map(|(c, h)| c + h).collect();
    let bbox0 = BoxRegion::new(lower, upper)?;
    let (bbox, dims) = if cfg.adapt_degenerate_axes {
        adapted_lattice(&family, &cfg.origin, &bbox0, &cfg.dims, 2049)
    } else {
        (bbox0, cfg.dims.clone())
    };
    let h: Vec<f64> = (0..bbox.dim()).map(|j| bbox.extent(j) / (dims[j] - 1) as f64).collect();
    let field = distance_field(&family, &cfg.origin, &bbox, &h, cfg.move_budget)?;

    let bin = dir.join("field.grid");
    io::write_distance_field(&bin, &field)?;
    let csv = dir.join("field.csv");
    io::write_values_csv(&csv, field.lattice(), field.values())?;
    // round-trip check: reload must be bit-identical
    let reloaded = io::read_distance_field(&bin)?;
    let pass = reloaded.values() == field.values();
    write_manifest(&dir, "distance", cfg.seed, serde_json::to_value(&cfg)?, &[&bin, &csv], pass, start)?;
    println!(
        "distance field: {} nodes, spacing {:?}, min boundary value {}",
        field.lattice().node_count(),
        field.lattice().spacing(),
        fmt_f64(field.min_boundary_value())
    );
    Ok(pass)
}

#[derive(Debug, Clone, Serialize, serde::Deserialize)]
struct VolumeCmdConfig {
    frame: PathBuf,
    center: Vec<f64>,
    epsilons: Vec<f64>,
    radii: Vec<f64>,
    #[serde(flatten)]
    sandwich: SandwichConfig,
}

fn cmd_volume(args: &CommonArgs) -> Result<bool> {
    let start = Instant::now();
    let mut cfg: VolumeCmdConfig = read_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.sandwich.seed = seed;
    }
    let dir = out_dir("volume", &args.out)?;
    let table = config::load_frame_rel(args.config.parent().unwrap_or(Path::new(".")), &cfg.frame)?;
    let report = sandwich_check(&table, &cfg.center, &cfg.radii, &cfg.epsilons, &cfg.sandwich)?;

    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                fmt_f64(r.epsilon),
                fmt_f64(r.r),
                fmt_f64(r.volume),
                fmt_f64(r.ci),
                fmt_f64(r.lambda),
                fmt_f64(r.ratio),
            ]
        })
        .collect();
    let csv = dir.join("volume.csv");
    write_csv(&csv, "epsilon,r,volume,ci,lambda,ratio", &rows)?;
    let summary = dir.join("summary.json");
    std::fs::write(&summary, serde_json::to_string_pretty(&report)?)?;
    println!(
        "volume sweep: global spread {}, sub-Riemannian {}, Riemannian {}, pass {}",
        fmt_f64(report.spread_global),
        fmt_f64(report.spread_sub_riemannian),
        fmt_f64(report.spread_riemannian),
        report.pass
    );
    write_manifest(&dir, "volume", cfg.sandwich.seed, serde_json::to_value(&cfg)?, &[&csv, &summary], report.pass, start)?;
    Ok(report.pass)
}

#[derive(Debug, Clone, Serialize, serde::Deserialize)]
struct DoublingConfig {
    frame: PathBuf,
    center: Vec<f64>,
    epsilons: Vec<f64>,
    radii: Vec<f64>,
    #[serde(default = "default_scale_deg")]
    box_scale_deg: Vec<f64>,
    #[serde(default = "default_resolution")]
    resolution: Vec<usize>,
    #[serde(default = "default_cap")]
    axis_node_cap: usize,
    #[serde(default = "default_budget")]
    move_budget: usize,
    #[serde(default = "default_samples")]
    samples: usize,
    #[serde(default)]
    seed: u64,
}

fn default_scale_deg() -> Vec<f64> {
    vec![1.3, 0.25]
}
fn default_resolution() -> Vec<usize> {
    vec![41, 41, 41]
}
fn default_cap() -> usize {
    1025
}
fn default_samples() -> usize {
    200_000
}

fn cmd_doubling(args: &CommonArgs) -> Result<bool> {
    let start = Instant::now();
    let mut cfg: DoublingConfig = read_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let dir = out_dir("doubling", &args.out)?;
    let table = config::load_frame_rel(args.config.parent().unwrap_or(Path::new(".")), &cfg.frame)?;
    let mut rows = Vec::new();
    for &epsilon in &cfg.epsilons {
        let family = rescale(&table, epsilon)?;
        for &r in &cfg.radii {
            let (bbox, dims) = doubling_lattice(
                &table,
                epsilon,
                &cfg.center,
                2.0 * r,
                r,
                &cfg.box_scale_deg,
                &cfg.resolution,
                48,
                cfg.axis_node_cap,
            )?;
            let h: Vec<f64> = (0..bbox.dim()).map(|j| bbox.extent(j) / (dims[j] - 1) as f64).collect();
            let field = distance_field(&family, &cfg.center, &bbox, &h, cfg.move_budget)?;
            let cell = cfg.seed ^ epsilon.to_bits().rotate_left(11) ^ r.to_bits();
            let small = ball_volume(&field, r, cfg.samples, cell ^ 0xd0)?;
            let big = ball_volume(&field, 2.0 * r, cfg.samples, cell ^ 0xd1)?;
            rows.push(vec![
                fmt_f64(epsilon),
                fmt_f64(r),
                fmt_f64(small.mean),
                fmt_f64(small.half_width),
                fmt_f64(big.mean),
                fmt_f64(big.half_width),
                fmt_f64(big.mean / small.mean),
            ]);
            println!(
                "epsilon {} r {}: |B(r)| = {} +- {}, |B(2r)| = {} +- {}, ratio {}",
                fmt_f64(epsilon),
                fmt_f64(r),
                fmt_f64(small.mean),
                fmt_f64(small.half_width),
                fmt_f64(big.mean),
                fmt_f64(big.half_width),
                fmt_f64(big.mean / small.mean)
            );
        }
    }
    let csv = dir.join("doubling.csv");
    write_csv(&csv, "epsilon,r,vol_r,ci_r,vol_2r,ci_2r,ratio", &rows)?;
    write_manifest(&dir, "doubling", cfg.seed, serde_json::to_value(&cfg)?, &[&csv], true, start)?;
    Ok(true)
}

#[derive(Debug, Clone, Serialize, serde::Deserialize)]
struct PoincareConfig {
    frame: PathBuf,
    center: Vec<f64>,
    epsilons: Vec<f64>,
    rho: f64,
    #[serde(default = "default_scale_deg")]
    box_scale_deg: Vec<f64>,
    #[serde(default = "default_resolution")]
    resolution: Vec<usize>,
    #[serde(default = "default_cap")]
    axis_node_cap: usize,
    #[serde(default = "default_budget")]
    move_budget: usize,
    #[serde(default = "default_ensemble")]
    ensemble: usize,
    #[serde(default)]
    seed: u64,
}

fn default_ensemble() -> usize {
    12
}

fn cmd_poincare(args: &CommonArgs) -> Result<bool> {
    let start = Instant::now();
    let mut cfg: PoincareConfig = read_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let dir = out_dir("poincare", &args.out)?;
    let table = config::load_frame_rel(args.config.parent().unwrap_or(Path::new(".")), &cfg.frame)?;
    let mut rows = Vec::new();
    for &epsilon in &cfg.epsilons {
        let family = rescale(&table, epsilon)?;
        let (bbox, dims) = doubling_lattice(
            &table,
            epsilon,
            &cfg.center,
            2.0 * cfg.rho,
            cfg.rho,
            &cfg.box_scale_deg,
            &cfg.resolution,
            48,
            cfg.axis_node_cap,
        )?;
        let h: Vec<f64> = (0..bbox.dim()).map(|j| bbox.extent(j) / (dims[j] - 1) as f64).collect();
        let field = distance_field(&family, &cfg.center, &bbox, &h, cfg.move_budget)?;
        let estimate = poincare_constant_estimate(
            &family,
            &field,
            &cfg.center,
            cfg.rho,
            PoincareEnsemble { size: cfg.ensemble, seed: cfg.seed },
        )?;
        println!("epsilon {}: poincare estimate {}", fmt_f64(epsilon), fmt_f64(estimate));
        rows.push(vec![fmt_f64(epsilon), fmt_f64(cfg.rho), fmt_f64(estimate)]);
    }
    let csv = dir.join("poincare.csv");
    write_csv(&csv, "epsilon,rho,estimate", &rows)?;
    write_manifest(&dir, "poincare", cfg.seed, serde_json::to_value(&cfg)?, &[&csv], true, start)?;
    Ok(true)
}

fn cmd_solve(args: &CommonArgs) -> Result<bool> {
    let start = Instant::now();
    let mut cfg: SolveConfig = read_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let dir = out_dir("solve", &args.out)?;
    let built = cfg.build(args.config.parent().unwrap_or(Path::new(".")))?;
    let diag = validate_structure(&built.problem.structure, 0.0)?;
    let u = solve(&built.problem, &built.scheme)?;
    let final_slice = u.slice_fn(u.num_slices() - 1);
    let bin = dir.join("final.grid");
    io::write_grid_binary(&bin, &final_slice)?;
    let csv = dir.join("final.csv");
    io::write_grid_csv(&csv, &final_slice)?;
    println!(
        "solved: {} stored slices, tau {}, final range [{}, {}], theta {}",
        u.num_slices(),
        fmt_f64(u.tau()),
        fmt_f64(final_slice.values().iter().cloned().fold(f64::INFINITY, f64::min)),
        fmt_f64(final_slice.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max)),
        fmt_f64(diag.theta)
    );
    write_manifest(&dir, "solve", cfg.seed, serde_json::to_value(&cfg)?, &[&bin, &csv], true, start)?;
    Ok(true)
}

#[derive(Debug, Clone, Serialize, serde::Deserialize)]
struct HarnackCmdConfig {
    #[serde(flatten)]
    solve: SolveConfig,
    rho: f64,
    /// admissible radius bound R; rho must stay below 20 R
    /// (default: a quarter of the smallest box half-width)
    #[serde(default)]
    r_bound: Option<f64>,
    #[serde(default)]
    k: f64,
    #[serde(default)]
    theta: Option<f64>,
    #[serde(default = "default_offset")]
    offset: f64,
    #[serde(default = "default_pair_budget")]
    pair_budget: usize,
    #[serde(default = "default_budget")]
    move_budget: usize,
}

fn default_offset() -> f64 {
    1e-12
}
fn default_pair_budget() -> usize {
    1 << 22
}

fn cmd_harnack(args: &CommonArgs) -> Result<bool> {
    let start = Instant::now();
    let mut cfg: HarnackCmdConfig = read_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.solve.seed = seed;
    }
    let dir = out_dir("harnack", &args.out)?;
    let built = cfg.solve.build(args.config.parent().unwrap_or(Path::new(".")))?;
    let diag = validate_structure(&built.problem.structure, 0.0)?;
    let theta = cfg.theta.unwrap_or(diag.theta);
    let u = solve(&built.problem, &built.scheme)?;

    let lattice = built.problem.lattice.clone();
    let bbox = lattice.bbox().clone();
    let h: Vec<f64> = lattice.spacing().to_vec();
    let center: Vec<f64> = (0..bbox.dim()).map(|j| 0.5 * (bbox.lower[j] + bbox.upper[j])).collect();
    let field = distance_field(&built.problem.family, &center, &bbox, &h, cfg.move_budget)?;
    let r_bound = cfg.r_bound.unwrap_or_else(|| {
        0.25 * (0..bbox.dim())
            .map(|j| 0.5 * bbox.extent(j))
            .fold(f64::INFINITY, f64::min)
    });
    let cyl = make_cylinders(&field, built.problem.t_final, cfg.rho, r_bound)?;

    let quotient = harnack_quotient(&u, &cyl, cfg.k, theta)?;
    let m_bound = built
        .problem
        .initial
        .values()
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let margin = max_principle_margin(&u, m_bound, diag.kappa, 1.0);
    let osc = log_oscillation(&u, &cyl, cfg.k, cfg.offset, cfg.pair_budget, cfg.solve.seed)?;

    let csv = dir.join("harnack.csv");
    write_csv(
        &csv,
        "epsilon,rho,quotient,margin,log_oscillation",
        &[vec![
            fmt_f64(cfg.solve.epsilon),
            fmt_f64(cfg.rho),
            fmt_f64(quotient),
            fmt_f64(margin),
            fmt_f64(osc),
        ]],
    )?;
    let pass = margin <= 0.0 && quotient.is_finite();
    println!(
        "harnack: quotient {}, margin {}, log oscillation {}, pass {pass}",
        fmt_f64(quotient),
        fmt_f64(margin),
        fmt_f64(osc)
    );
    write_manifest(&dir, "harnack", cfg.solve.seed, serde_json::to_value(&cfg)?, &[&csv], pass, start)?;
    Ok(pass)
}

fn cmd_sweep(args: &CommonArgs) -> Result<bool> {
    let start = Instant::now();
    let mut cfg: SweepFileConfig = read_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.sweep.seed = seed;
    }
    let dir = out_dir("sweep", &args.out)?;
    let table = config::load_frame_rel(args.config.parent().unwrap_or(Path::new(".")), &cfg.frame)?;
    let report = epsilon_sweep(&table, &cfg.sweep);

    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                fmt_f64(r.epsilon),
                fmt_f64(r.rho),
                opt(r.harnack_quotient),
                opt(r.doubling_ratio),
                opt(r.poincare_estimate),
                opt(r.max_principle_margin),
                r.error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    let csv = dir.join("sweep.csv");
    write_csv(
        &csv,
        "epsilon,rho,harnack_quotient,doubling_ratio,poincare_estimate,max_principle_margin,error",
        &rows,
    )?;
    let summary = dir.join("summary.json");
    std::fs::write(&summary, serde_json::to_string_pretty(&report)?)?;

    // per-quantity plot data: epsilon against the measured value
    type Getter = fn(&subriemann::harnack::SweepRow) -> Option<f64>;
    let plots: [(&str, Getter); 4] = [
        ("harnack", |r| r.harnack_quotient),
        ("doubling", |r| r.doubling_ratio),
        ("poincare", |r| r.poincare_estimate),
        ("margin", |r| r.max_principle_margin),
    ];
    let mut outputs: Vec<PathBuf> = vec![csv.clone(), summary.clone()];
    for (name, get) in plots {
        let rows: Vec<Vec<String>> = report
            .rows
            .iter()
            .filter_map(|r| get(r).map(|v| vec![fmt_f64(r.epsilon), fmt_f64(r.rho), fmt_f64(v)]))
            .collect();
        let path = dir.join(format!("plot_{name}.csv"));
        write_csv(&path, "epsilon,rho,value", &rows)?;
        outputs.push(path);
    }

    println!(
        "sweep: harnack spread {}, poincare spread {}, doubling spread {}, pass {}",
        fmt_f64(report.harnack_spread),
        fmt_f64(report.poincare_spread),
        fmt_f64(report.doubling_spread),
        report.flags.pass
    );
    for r in &report.rows {
        if let Some(e) = &r.error {
            eprintln!("row (epsilon {}, rho {}) failed: {e}", fmt_f64(r.epsilon), fmt_f64(r.rho));
        }
    }
    let out_refs: Vec<&Path> = outputs.iter().map(|p| p.as_path()).collect();
    write_manifest(&dir, "sweep", cfg.sweep.seed, serde_json::to_value(&cfg)?, &out_refs, report.flags.pass, start)?;
    Ok(report.flags.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let outcome = match &cli.cmd {
        Cmd::Frame { frame, at, epsilon, radius, out } => cmd_frame(frame, at, *epsilon, *radius, out),
        Cmd::Distance(args) => cmd_distance(args),
        Cmd::Volume(args) => cmd_volume(args),
        Cmd::Doubling(args) => cmd_doubling(args),
        Cmd::Poincare(args) => cmd_poincare(args),
        Cmd::Solve(args) => cmd_solve(args),
        Cmd::Harnack(args) => cmd_harnack(args),
        Cmd::Sweep(args) => cmd_sweep(args),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
