use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use gilbert::engine::{build_with, BuildOptions};
use gilbert::functionals::{empirical_measure, integrate, Phi, TestFunction};
use gilbert::io::{self, fmt_f64, SeedRecord};
use gilbert::pointproc::{sample_poisson, ProcessParams, Window};
use gilbert::stabilize::stab_tail;
use gilbert::stats::{self, ExperimentOptions, PolarGrid, DEFAULT_M_MAX};

const EXIT_CONFIG: u8 = 2;
const EXIT_CHECK: u8 = 3;

#[derive(Parser)]
#[command(name = "gilbert", version, about = "Gilbert crack tessellations and their limit theorems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Master seed of every random stream.
    #[arg(long, env = "GILBERT_SEED", default_value_t = 0)]
    seed: u64,
    /// Directory for data files and the run manifest (default: current directory).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Exit with status 3 when the run fails its acceptance check.
    #[arg(long)]
    check: bool,
}

#[derive(Args, Clone)]
struct StatArgs {
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    /// total-length, power-sum:<alpha>, threshold:<theta> or count.
    #[arg(long, default_value = "total-length")]
    phi: Phi,
    #[arg(long, default_value_t = DEFAULT_M_MAX)]
    m_max: u32,
}

#[derive(Subcommand)]
enum Command {
    /// Build one tessellation from a seed file or a Poisson sample.
    Simulate {
        /// JSON list of {x, y, alpha}.
        #[arg(long, conflicts_with = "poisson_tau")]
        seeds: Option<PathBuf>,
        /// Sample a Poisson configuration of this intensity instead.
        #[arg(long, requires_all = ["width", "height"])]
        poisson_tau: Option<f64>,
        #[arg(long)]
        width: Option<f64>,
        #[arg(long)]
        height: Option<f64>,
        /// Break exact arrival ties by branch order instead of failing.
        #[arg(long)]
        tie_break: bool,
        /// Tessellation JSON path; printed to stdout when absent.
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Empirical measure on Q_λ and its integral against f.
    Measure {
        #[command(flatten)]
        stat: StatArgs,
        #[arg(long)]
        lambda: f64,
        #[arg(long, default_value = "const1")]
        f: TestFunction,
        #[arg(long)]
        padding: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Estimate E(τ).
    EstimateE {
        #[command(flatten)]
        stat: StatArgs,
        #[arg(long, default_value_t = 2000)]
        n_rep: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Estimate V(τ) from the pair-correlation integral.
    EstimateV {
        #[command(flatten)]
        stat: StatArgs,
        /// Truncation radius; defaults to where the fitted tail drops below 1e-3.
        #[arg(long)]
        r_max: Option<f64>,
        #[arg(long, default_value_t = 4)]
        n_angles: usize,
        #[arg(long, default_value_t = 40)]
        n_radii: usize,
        #[arg(long, default_value_t = 200)]
        n_rep: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Law of large numbers along a λ ladder.
    Lln {
        #[command(flatten)]
        stat: StatArgs,
        #[arg(long, default_value = "const1")]
        f: TestFunction,
        #[arg(long, value_delimiter = ',', default_value = "100,400,1600")]
        lambdas: Vec<f64>,
        #[arg(long, default_value_t = 50)]
        n_rep: usize,
        #[arg(long)]
        padding: Option<f64>,
        /// Replicates behind the Ê(τ) target.
        #[arg(long, default_value_t = 20_000)]
        e_reps: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Normalized variance along a λ ladder.
    Var {
        #[command(flatten)]
        stat: StatArgs,
        #[arg(long, default_value = "const1")]
        f: TestFunction,
        #[arg(long, value_delimiter = ',', default_value = "400,1600")]
        lambdas: Vec<f64>,
        #[arg(long, default_value_t = 200)]
        n_rep: usize,
        #[arg(long)]
        padding: Option<f64>,
        /// V̂(τ) for the target column.
        #[arg(long)]
        v_hat: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Standardized integrals against the normal law.
    Clt {
        #[command(flatten)]
        stat: StatArgs,
        #[arg(long, default_value = "const1")]
        f: TestFunction,
        #[arg(long)]
        lambda: f64,
        #[arg(long, default_value_t = 300)]
        n_rep: usize,
        #[arg(long)]
        padding: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Scaling of E and V with the intensity.
    Scaling {
        #[arg(long, default_value = "total-length")]
        phi: Phi,
        #[arg(long, value_delimiter = ',', default_value = "0.5,1,2,4")]
        taus: Vec<f64>,
        #[arg(long, default_value_t = 2000)]
        n_rep_e: usize,
        /// Replicates per intensity for the variance column; 0 skips it.
        #[arg(long, default_value_t = 0)]
        n_rep_v: usize,
        /// Window area at τ = 1; intensity τ uses lambda_ref / τ.
        #[arg(long, default_value_t = 400.0)]
        lambda_ref: f64,
        #[arg(long, default_value_t = DEFAULT_M_MAX)]
        m_max: u32,
        #[command(flatten)]
        common: Common,
    },
    /// Survival function of the stabilization radius.
    StabTail {
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        #[arg(long, default_value_t = 2000)]
        n_rep: usize,
        #[arg(long, default_value_t = 15.0)]
        r_max: f64,
        #[arg(long, default_value_t = 0.25)]
        r_step: f64,
        #[arg(long, default_value_t = DEFAULT_M_MAX)]
        m_max: u32,
        #[command(flatten)]
        common: Common,
    },
    /// Re-run the configuration stored in a manifest.
    Replay {
        manifest: PathBuf,
        /// Where to write; defaults to the manifest's directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

/// A fully resolved run, as stored in manifests.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
enum RunConfig {
    Simulate {
        seeds: Option<Vec<SeedRecord>>,
        poisson: Option<PoissonSpec>,
        tie_break: bool,
    },
    Measure {
        tau: f64,
        phi: Phi,
        lambda: f64,
        f: TestFunction,
        padding: Option<f64>,
        seed: u64,
    },
    EstimateE {
        tau: f64,
        phi: Phi,
        n_rep: usize,
        m_max: u32,
        seed: u64,
    },
    EstimateV {
        tau: f64,
        phi: Phi,
        r_max: Option<f64>,
        n_angles: usize,
        n_radii: usize,
        n_rep: usize,
        m_max: u32,
        seed: u64,
    },
    Lln {
        tau: f64,
        phi: Phi,
        f: TestFunction,
        lambdas: Vec<f64>,
        n_rep: usize,
        padding: Option<f64>,
        e_reps: usize,
        m_max: u32,
        seed: u64,
    },
    Var {
        tau: f64,
        phi: Phi,
        f: TestFunction,
        lambdas: Vec<f64>,
        n_rep: usize,
        padding: Option<f64>,
        v_hat: Option<f64>,
        m_max: u32,
        seed: u64,
    },
    Clt {
        tau: f64,
        phi: Phi,
        f: TestFunction,
        lambda: f64,
        n_rep: usize,
        padding: Option<f64>,
        m_max: u32,
        seed: u64,
    },
    Scaling {
        phi: Phi,
        taus: Vec<f64>,
        n_rep_e: usize,
        n_rep_v: usize,
        lambda_ref: f64,
        m_max: u32,
        seed: u64,
    },
    StabTail {
        tau: f64,
        n_rep: usize,
        r_max: f64,
        r_step: f64,
        m_max: u32,
        seed: u64,
    },
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
struct PoissonSpec {
    tau: f64,
    width: f64,
    height: f64,
    seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    tool: String,
    version: String,
    check: bool,
    config: RunConfig,
    files: Vec<String>,
}

/// Input the user has to fix; maps to exit status 2.
#[derive(Debug)]
struct ConfigError(String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

/// Where a run writes, and the verdict of its check.
struct Outcome {
    files: Vec<(String, Vec<u8>)>,
    passed: bool,
    summary: String,
}

impl Outcome {
    fn new() -> Self {
        Outcome { files: Vec::new(), passed: true, summary: String::new() }
    }

    fn file(&mut self, name: &str, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.to_owned(), bytes.into()));
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.file(name, s);
        Ok(())
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        self.file(name, w.into_inner().map_err(|e| anyhow::anyhow!("csv buffer: {e}"))?);
        Ok(())
    }

    fn line(&mut self, s: impl AsRef<str>) {
        self.summary.push_str(s.as_ref());
        self.summary.push('\n');
    }
}

fn input_error(e: gilbert::Error) -> anyhow::Error {
    match e {
        gilbert::Error::Degenerate(m) => config_error(format!("DegenerateConfiguration: {m}")),
        gilbert::Error::Domain(_) | gilbert::Error::Json(_) => config_error(e.to_string()),
        e => e.into(),
    }
}

fn params(tau: f64, seed: u64) -> Result<ProcessParams> {
    ProcessParams::new(tau, seed, 0).map_err(|e| config_error(e.to_string()))
}

fn estimator_rows(rows: &[(&str, &stats::EstimatorReport)]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|(name, r)| {
            vec![
                name.to_string(),
                fmt_f64(r.estimate),
                fmt_f64(r.std_error),
                r.n_rep.to_string(),
                fmt_f64(r.certified_fraction),
                r.excluded.to_string(),
                r.meta.master_seed.to_string(),
            ]
        })
        .collect()
}

const ESTIMATOR_COLUMNS: [&str; 7] =
    ["quantity", "estimate", "std_error", "n_rep", "certified_fraction", "excluded", "master_seed"];

fn relative_deviation(row: &stats::TableRow) -> f64 {
    let t = row.target.unwrap_or(f64::NAN);
    if t == 0.0 {
        (row.estimate - t).abs()
    } else {
        ((row.estimate - t) / t).abs()
    }
}

fn execute(config: &RunConfig) -> Result<Outcome> {
    let mut out = Outcome::new();
    match config {
        RunConfig::Simulate { seeds, poisson, tie_break } => {
            let cfg = match (seeds, poisson) {
                (Some(records), None) => {
                    io::parse_seeds(&serde_json::to_string(records)?).map_err(input_error)?
                }
                (None, Some(p)) => {
                    let window = Window::rect(0.0, 0.0, p.width, p.height).map_err(|e| config_error(e.to_string()))?;
                    sample_poisson(&window, &params(p.tau, p.seed)?)?
                }
                _ => return Err(config_error("give exactly one of --seeds or --poisson-tau")),
            };
            let tess = build_with(&cfg, BuildOptions { tie_break: *tie_break }).map_err(input_error)?;
            out.file("tessellation.json", io::tessellation_json(&tess)? + "\n");
            out.file("render.svg", io::svg_string(&tess, &tess.clip_window()));
            let finite = tess.branch_lengths().filter(|(_, l)| l.is_finite()).count();
            out.line(format!("{} seeds, {} events, {finite} finite branches", cfg.len(), tess.events().len()));
        }
        RunConfig::Measure { tau, phi, lambda, f, padding, seed } => {
            let p = params(*tau, *seed)?;
            let pad = padding.unwrap_or_else(|| gilbert::functionals::default_padding(*tau));
            let m = empirical_measure(*lambda, &p, *phi, pad)?;
            let integral = integrate(&m, f);
            let rows: Vec<Vec<String>> = m
                .atoms
                .iter()
                .map(|a| {
                    vec![fmt_f64(a.location.x), fmt_f64(a.location.y), fmt_f64(a.weight), a.certified.to_string()]
                })
                .collect();
            out.csv("measure.csv", &["x", "y", "weight", "certified"], &rows)?;
            out.json(
                "measure.json",
                &serde_json::json!({
                    "atoms": m.atoms.len(),
                    "certified_fraction": m.certified_fraction,
                    "integral": integral,
                    "f": f.to_string(),
                    "phi": phi.to_string(),
                    "lambda": lambda,
                    "padding": pad,
                }),
            )?;
            out.line(format!(
                "{} atoms, certified {:.4}, ∫{f} dμ = {} ({} excluded)",
                m.atoms.len(),
                m.certified_fraction,
                integral.value,
                integral.excluded
            ));
        }
        RunConfig::EstimateE { tau, phi, n_rep, m_max, seed } => {
            let r = stats::estimate_e(*phi, *n_rep, &params(*tau, *seed)?, *m_max)?;
            out.csv("estimate-e.csv", &ESTIMATOR_COLUMNS, &estimator_rows(&[("E", &r)]))?;
            out.json("estimate-e.json", &r)?;
            out.line(format!("E({tau}) = {} ± {} (certified {:.4})", r.estimate, r.std_error, r.certified_fraction));
        }
        RunConfig::EstimateV { tau, phi, r_max, n_angles, n_radii, n_rep, m_max, seed } => {
            let p = params(*tau, *seed)?;
            let r_max = match r_max {
                Some(r) => *r,
                None => {
                    let grid: Vec<f64> = (1..=60).map(|k| k as f64 * 0.25 / tau.sqrt()).collect();
                    let tail = stab_tail(&grid, 1000, &p.substream(u64::MAX), *m_max)?;
                    let fit = tail.fit.ok_or_else(|| anyhow::anyhow!("no usable stabilization tail fit"))?;
                    stats::default_r_max(&fit)
                }
            };
            let grid = PolarGrid { r_max, n_angles: *n_angles, n_radii: *n_radii };
            let r = stats::estimate_v(*phi, grid, *n_rep, &p, *m_max)?;
            let mut integral = r.report.clone();
            integral.estimate = r.integral;
            integral.std_error = r.integral_se;
            out.csv(
                "estimate-v.csv",
                &ESTIMATOR_COLUMNS,
                &estimator_rows(&[("V", &r.report), ("c0", &r.c0), ("pair_integral", &integral)]),
            )?;
            out.json("estimate-v.json", &r)?;
            out.line(format!(
                "V({tau}) = {} ± {} (c0 = {}, integral = {} ± {}, r_max = {r_max})",
                r.report.estimate, r.report.std_error, r.c0.estimate, r.integral, r.integral_se
            ));
            if r.refinement_warning {
                out.line("warning: halving the radial resolution moves V by more than one standard error");
            }
            out.passed = r.report.estimate > 3.0 * r.report.std_error && !r.refinement_warning;
        }
        RunConfig::Lln { tau, phi, f, lambdas, n_rep, padding, e_reps, m_max, seed } => {
            let opts = ExperimentOptions { padding: *padding, m_max: *m_max, e_reps: *e_reps };
            let r = stats::lln_experiment(*phi, f, lambdas, *n_rep, &params(*tau, *seed)?, &opts)?;
            out.csv("lln.csv", &io::TABLE_COLUMNS, &io::table_rows_csv(&r.rows))?;
            out.json("lln.json", &r)?;
            let devs: Vec<f64> = r.rows.iter().map(|row| (row.estimate - row.target.unwrap_or(f64::NAN)).abs()).collect();
            for (row, d) in r.rows.iter().zip(&devs) {
                out.line(format!("λ = {}: {} ± {} (target {:?}, |dev| {d:.3e})", row.lambda, row.estimate, row.std_error, row.target));
            }
            let last = r.rows.last().map(relative_deviation).unwrap_or(f64::NAN);
            out.passed = devs.windows(2).all(|w| w[1] <= w[0]) && last <= 0.05;
        }
        RunConfig::Var { tau, phi, f, lambdas, n_rep, padding, v_hat, m_max, seed } => {
            let opts = ExperimentOptions { padding: *padding, m_max: *m_max, ..Default::default() };
            let r = stats::var_experiment(*phi, f, lambdas, *n_rep, &params(*tau, *seed)?, &opts, *v_hat)?;
            out.csv("var.csv", &io::TABLE_COLUMNS, &io::table_rows_csv(&r.rows))?;
            out.json("var.json", &r)?;
            for row in &r.rows {
                out.line(format!("λ = {}: {} ± {} (target {:?})", row.lambda, row.estimate, row.std_error, row.target));
            }
            let spread_ok = r.rows.windows(2).all(|w| (w[1].estimate - w[0].estimate).abs() <= 0.15 * w[0].estimate);
            let target_ok = r.rows.iter().all(|row| row.target.is_none() || relative_deviation(row) <= 0.20);
            out.passed = spread_ok && target_ok;
        }
        RunConfig::Clt { tau, phi, f, lambda, n_rep, padding, m_max, seed } => {
            let opts = ExperimentOptions { padding: *padding, m_max: *m_max, ..Default::default() };
            let r = stats::clt_experiment(*phi, f, *lambda, *n_rep, &params(*tau, *seed)?, &opts)?;
            let rows: Vec<Vec<String>> =
                r.samples.iter().enumerate().map(|(i, s)| vec![i.to_string(), fmt_f64(*s)]).collect();
            out.csv("clt.csv", &["replicate", "standardized"], &rows)?;
            out.json("clt.json", &r)?;
            out.line(format!("KS D = {:.5}, p = {:.4} over {} replicates", r.ks_statistic, r.p_value, r.n_rep));
            out.passed = r.p_value >= 0.01;
        }
        RunConfig::Scaling { phi, taus, n_rep_e, n_rep_v, lambda_ref, m_max, seed } => {
            let opts = ExperimentOptions { m_max: *m_max, ..Default::default() };
            let r = stats::scaling_check(*phi, taus, *n_rep_e, *n_rep_v, *lambda_ref, &params(1.0, *seed)?, &opts)
                .map_err(|e| match e {
                    gilbert::Error::Domain(m) => config_error(m),
                    other => other.into(),
                })?;
            let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
            let rows: Vec<Vec<String>> = r
                .rows
                .iter()
                .map(|row| vec![fmt_f64(row.tau), fmt_f64(row.e_scaled), fmt_f64(row.e_se), opt(row.v_scaled), opt(row.v_se)])
                .collect();
            out.csv("scaling.csv", &["tau", "e_scaled", "e_se", "v_scaled", "v_se"], &rows)?;
            out.json("scaling.json", &r)?;
            for row in &r.rows {
                out.line(format!("τ = {}: τ^(k/2)E = {} ± {}, τ^k V = {:?}", row.tau, row.e_scaled, row.e_se, row.v_scaled));
            }
            out.line(format!("flagged pairs: E {:?}, V {:?}", r.e_flags, r.v_flags));
            out.passed = r.passed();
        }
        RunConfig::StabTail { tau, n_rep, r_max, r_step, m_max, seed } => {
            if !(*r_step > 0.0 && r_max > r_step) {
                return Err(config_error("need 0 < r_step < r_max"));
            }
            let n = (r_max / r_step).floor() as usize;
            let grid: Vec<f64> = (1..=n).map(|k| k as f64 * r_step).collect();
            let r = stab_tail(&grid, *n_rep, &params(*tau, *seed)?, *m_max)?;
            let rows: Vec<Vec<String>> =
                r.rows.iter().map(|row| vec![fmt_f64(row.r), fmt_f64(row.survival), fmt_f64(row.std_error)]).collect();
            out.csv("stab-tail.csv", &["r", "survival", "std_error"], &rows)?;
            out.json("stab-tail.json", &r)?;
            match &r.fit {
                Some(fit) => {
                    out.line(format!("log-linear fit: slope {:.4}, R² {:.4}, {} points", fit.slope, fit.r_squared, fit.points_used));
                    let monotone = r.rows.windows(2).all(|w| w[1].survival <= w[0].survival);
                    out.passed = monotone && fit.r_squared >= 0.9 && fit.slope < 0.0;
                }
                None => {
                    out.line("no fit: too few grid points with survival >= 0.01");
                    out.passed = false;
                }
            }
        }
    }
    Ok(out)
}

fn run(config: RunConfig, out_dir: Option<&Path>, check: bool) -> Result<bool> {
    let outcome = execute(&config)?;
    print!("{}", outcome.summary);
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (name, bytes) in &outcome.files {
            fs::write(dir.join(name), bytes).with_context(|| format!("writing {name}"))?;
        }
        let manifest = Manifest {
            tool: "gilbert".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            check,
            config,
            files: outcome.files.iter().map(|f| f.0.clone()).collect(),
        };
        io::write_json(&manifest, &dir.join("manifest.json"))?;
    }
    if check {
        println!("check: {}", if outcome.passed { "PASS" } else { "FAIL" });
    }
    Ok(!check || outcome.passed)
}

fn read_seed_records(path: &Path) -> Result<Vec<SeedRecord>> {
    let text = fs::read_to_string(path).map_err(|e| config_error(format!("reading {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| config_error(format!("parsing {}: {e}", path.display())))
}

fn dispatch(cli: Cli) -> Result<bool> {
    let (config, common) = match cli.command {
        Command::Simulate { seeds, poisson_tau, width, height, tie_break, json, svg, common } => {
            let seeds = seeds.as_deref().map(read_seed_records).transpose()?;
            let poisson = poisson_tau.map(|tau| PoissonSpec {
                tau,
                width: width.unwrap_or_default(),
                height: height.unwrap_or_default(),
                seed: common.seed,
            });
            let config = RunConfig::Simulate { seeds, poisson, tie_break };
            // Explicit paths are extra copies of the directory outputs.
            let outcome = execute(&config)?;
            let get = |name: &str| outcome.files.iter().find(|f| f.0 == name).map(|f| f.1.clone()).unwrap_or_default();
            if let Some(path) = &svg {
                fs::write(path, get("render.svg")).with_context(|| format!("writing {}", path.display()))?;
            }
            match &json {
                Some(path) => fs::write(path, get("tessellation.json")).with_context(|| format!("writing {}", path.display()))?,
                None if common.out_dir.is_none() => print!("{}", String::from_utf8_lossy(&get("tessellation.json"))),
                None => {}
            }
            if common.out_dir.is_none() {
                return Ok(true);
            }
            (config, common)
        }
        Command::Measure { stat, lambda, f, padding, common } => (
            RunConfig::Measure { tau: stat.tau, phi: stat.phi, lambda, f, padding, seed: common.seed },
            common,
        ),
        Command::EstimateE { stat, n_rep, common } => (
            RunConfig::EstimateE { tau: stat.tau, phi: stat.phi, n_rep, m_max: stat.m_max, seed: common.seed },
            common,
        ),
        Command::EstimateV { stat, r_max, n_angles, n_radii, n_rep, common } => (
            RunConfig::EstimateV {
                tau: stat.tau,
                phi: stat.phi,
                r_max,
                n_angles,
                n_radii,
                n_rep,
                m_max: stat.m_max,
                seed: common.seed,
            },
            common,
        ),
        Command::Lln { stat, f, lambdas, n_rep, padding, e_reps, common } => (
            RunConfig::Lln {
                tau: stat.tau,
                phi: stat.phi,
                f,
                lambdas,
                n_rep,
                padding,
                e_reps,
                m_max: stat.m_max,
                seed: common.seed,
            },
            common,
        ),
        Command::Var { stat, f, lambdas, n_rep, padding, v_hat, common } => (
            RunConfig::Var {
                tau: stat.tau,
                phi: stat.phi,
                f,
                lambdas,
                n_rep,
                padding,
                v_hat,
                m_max: stat.m_max,
                seed: common.seed,
            },
            common,
        ),
        Command::Clt { stat, f, lambda, n_rep, padding, common } => (
            RunConfig::Clt { tau: stat.tau, phi: stat.phi, f, lambda, n_rep, padding, m_max: stat.m_max, seed: common.seed },
            common,
        ),
        Command::Scaling { phi, taus, n_rep_e, n_rep_v, lambda_ref, m_max, common } => (
            RunConfig::Scaling { phi, taus, n_rep_e, n_rep_v, lambda_ref, m_max, seed: common.seed },
            common,
        ),
        Command::StabTail { tau, n_rep, r_max, r_step, m_max, common } => (
            RunConfig::StabTail { tau, n_rep, r_max, r_step, m_max, seed: common.seed },
            common,
        ),
        Command::Replay { manifest, out_dir } => {
            let text = fs::read_to_string(&manifest)
                .map_err(|e| config_error(format!("reading {}: {e}", manifest.display())))?;
            let m: Manifest =
                serde_json::from_str(&text).map_err(|e| config_error(format!("bad manifest: {e}")))?;
            let dir = out_dir.unwrap_or_else(|| manifest.parent().map(Path::to_path_buf).unwrap_or_default());
            return run(m.config, Some(&dir), m.check);
        }
    };
    let dir = common.out_dir.unwrap_or_else(|| PathBuf::from("."));
    run(config, Some(&dir), common.check)
}

fn is_config_error(err: &anyhow::Error) -> bool {
    if err.downcast_ref::<ConfigError>().is_some() {
        return true;
    }
    matches!(
        err.downcast_ref::<gilbert::Error>(),
        Some(gilbert::Error::Domain(_) | gilbert::Error::Degenerate(_) | gilbert::Error::Json(_))
    )
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_CHECK),
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_config_error(&e) {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
