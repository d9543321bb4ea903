//! `sgspec`: command-line front end for the spectral transform pipelines.
//!
//! Exit codes: 0 success, 1 input error, 2 numerical failure or tolerance
//! violation (a JSON status record goes to stderr in both failure cases).

mod config;

use clap::{Parser, Subcommand};
use config::{FlowDirection, RunConfig};
use serde::Serialize;
use serde_json::json;
use sg_spectral::asymptotics::{exp_decay_report, thm_m_report_sampled, thm_spectral_report};
use sg_spectral::finitetype::{finite_type_project, FiniteTypeOptions};
use sg_spectral::io::{self, CsvTable, Field};
use sg_spectral::jacobi::{flow_x_check_with, flow_y_check_with, linspace, FlowOptions};
use sg_spectral::monodromy::{lambda_k0, mu_k0, MonodromyOptions, MonodromyRecord, MonodromySolver};
use sg_spectral::reconstruct::{default_test_grid, roundtrip_report_with, ReconstructedMonodromy};
use sg_spectral::spectral::{find_branch_points_with, find_divisor_with, SpectralDivisor, SpectralOptions};
use sg_spectral::{par, PeriodicPotential, SpectralError};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "sgspec", version, about = "Spectral data of periodic sinh-Gordon Cauchy data")]
struct Cli {
    /// JSON run configuration (see schema/run_config.schema.json).
    #[arg(long, global = true, env = "SGSPEC_CONFIG")]
    config: Option<PathBuf>,
    /// Output directory; without it results go to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 1 forces sequential execution.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Sequential, byte-stable execution.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Override the truncation radius K.
    #[arg(long, global = true)]
    k_max: Option<usize>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Vacuum nodes λ_{k,0}, μ_{k,0} and their asymptotes (CSV).
    VacuumTable {
        #[arg(long, default_value_t = 8)]
        k: i64,
    },
    /// Monodromy at the configured λ's.
    Monodromy,
    /// Spectral divisor for |k| ≤ K.
    Divisor,
    /// Branch-point pairs for |k| ≤ K.
    BranchPoints,
    /// Bounding-sequence and weighted-norm reports.
    Asymptotics,
    /// Monodromy rebuilt from the divisor at the configured λ's.
    Reconstruct {
        /// Divisor JSON to rebuild from instead of the configured potential.
        #[arg(long)]
        divisor: Option<PathBuf>,
    },
    /// Direct vs reconstructed monodromy.
    Roundtrip,
    /// Projection to a nearby finite-type divisor.
    FiniteType {
        #[arg(long)]
        n: Option<usize>,
        /// Divisor JSON to project instead of the configured potential's.
        #[arg(long)]
        divisor: Option<PathBuf>,
    },
    /// Abel coordinates along the x- or y-flow (CSV) plus fit summary.
    AbelFlow {
        #[arg(long, value_enum)]
        direction: Option<Dir>,
        #[arg(long)]
        gaps: Option<usize>,
    },
    /// Log-linear decay fits of gaps and divisor offsets.
    Decay,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum Dir {
    X,
    Y,
}

enum Failure {
    Input(String),
    Numeric(SpectralError),
    Tolerance { violations: Vec<String> },
}

impl From<SpectralError> for Failure {
    fn from(e: SpectralError) -> Self {
        if e.is_input_error() {
            Failure::Input(e.to_string())
        } else {
            Failure::Numeric(e)
        }
    }
}

struct Ctx {
    cfg: RunConfig,
    out: Option<PathBuf>,
}

impl Ctx {
    fn potential(&self) -> Result<PeriodicPotential, Failure> {
        Ok(self.cfg.potential.build()?)
    }

    fn solver(&self, p: &PeriodicPotential) -> MonodromySolver {
        MonodromySolver::with_options(
            p,
            MonodromyOptions {
                rtol: self.cfg.rtol,
                max_steps: self.cfg.max_steps,
            },
        )
    }

    fn spectral_opts(&self) -> SpectralOptions {
        SpectralOptions {
            taylor_points: self.cfg.taylor_points,
            verify_counts: self.cfg.verify_counts,
            k_align: self.cfg.k_align,
            ..SpectralOptions::default()
        }
    }

    /// The divisor from `path`, or that of the configured potential.
    fn divisor(&self, path: Option<&Path>) -> Result<SpectralDivisor, Failure> {
        match path {
            Some(p) => Ok(io::read_json(p)?),
            None => {
                let p = self.potential()?;
                Ok(find_divisor_with(&self.solver(&p), self.cfg.k_max, &self.spectral_opts())?)
            }
        }
    }

    fn lambdas(&self) -> Vec<sg_spectral::C64> {
        if self.cfg.lambdas.is_empty() {
            default_test_grid()
        } else {
            self.cfg.lambdas.clone()
        }
    }

    /// JSON to `<out>/<name>.json`, or stdout.
    fn emit_json<T: Serialize>(&self, name: &str, v: &T) -> Result<(), Failure> {
        match &self.out {
            Some(dir) => Ok(io::write_json(&dir.join(format!("{name}.json")), v)?),
            None => {
                print!("{}", io::to_json(v)?);
                Ok(())
            }
        }
    }

    fn emit_csv(&self, name: &str, t: &CsvTable, to_stdout: bool) -> Result<(), Failure> {
        match &self.out {
            Some(dir) => Ok(t.write(&dir.join(format!("{name}.csv")))?),
            None if to_stdout => {
                print!("{}", t.to_csv()?);
                Ok(())
            }
            None => Ok(()),
        }
    }
}

fn check(violations: Vec<String>) -> Result<(), Failure> {
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Failure::Tolerance { violations })
    }
}

fn run(cmd: &Command, ctx: &Ctx) -> Result<(), Failure> {
    let cfg = &ctx.cfg;
    let k_max = cfg.k_max;
    match cmd {
        Command::VacuumTable { k } => {
            let mut t = CsvTable::new(&["k", "lambda_k0", "mu_k0", "asymptote", "defect"]);
            for j in -k..=*k {
                let l = lambda_k0(j);
                let a = j as f64;
                let asym = match j {
                    0 => None,
                    j if j > 0 => Some(16.0 * PI * PI * a * a - 2.0),
                    _ => Some(1.0 / (16.0 * PI * PI * a * a) + 1.0 / (128.0 * PI.powi(4) * a.powi(4))),
                };
                let (asym, defect) = match asym {
                    Some(v) => (Field::Float(v), Field::Float(l - v)),
                    None => (Field::Text(String::new()), Field::Text(String::new())),
                };
                t.push(vec![j.into(), l.into(), mu_k0(j).into(), asym, defect]);
            }
            ctx.emit_csv("vacuum_table", &t, true)
        }
        Command::Monodromy => {
            let p = ctx.potential()?;
            let ls = ctx.lambdas();
            let ms = ctx.solver(&p).batch(&ls)?;
            let recs: Vec<MonodromyRecord> = ls.iter().zip(&ms).map(|(l, m)| MonodromyRecord::new(*l, m)).collect();
            ctx.emit_json("monodromy", &recs)?;
            check(
                recs.iter()
                    .filter(|r| r.det_err >= 1e-9)
                    .map(|r| format!("|det M − 1| = {:e} at λ = {:?}", r.det_err, r.lambda))
                    .collect(),
            )
        }
        Command::Divisor => {
            let p = ctx.potential()?;
            let d = find_divisor_with(&ctx.solver(&p), k_max, &ctx.spectral_opts())?;
            ctx.emit_json("divisor", &d)
        }
        Command::BranchPoints => {
            let p = ctx.potential()?;
            let b = find_branch_points_with(&ctx.solver(&p), k_max, &ctx.spectral_opts())?;
            ctx.emit_json("branch_points", &b)
        }
        Command::Asymptotics => {
            let p = ctx.potential()?;
            let m = thm_m_report_sampled(&p, k_max, cfg.bounding_radii, cfg.bounding_angles)?;
            let solver = ctx.solver(&p);
            let d = find_divisor_with(&solver, k_max, &ctx.spectral_opts())?;
            let b = find_branch_points_with(&solver, k_max, &ctx.spectral_opts())?;
            let s = thm_spectral_report(&d, &b)?;
            ctx.emit_json("asymptotics", &json!({ "monodromy": m, "spectral": s }))?;
            let mut v = Vec::new();
            for (name, x) in ["a", "b", "c", "d"].iter().zip(m.norms()) {
                if !x.is_finite() {
                    v.push(format!("norm of {name} is not finite"));
                }
            }
            for (name, x) in [("lambda", s.lambda_norm), ("mu", s.mu_norm), ("kappa", s.kappa_norm)] {
                if !x.is_finite() {
                    v.push(format!("{name} norm is not finite"));
                }
            }
            check(v)
        }
        Command::Reconstruct { divisor } => {
            let d = ctx.divisor(divisor.as_deref())?;
            let rec = ReconstructedMonodromy::new(&d)?;
            let ls = ctx.lambdas();
            let mut recs = Vec::with_capacity(ls.len());
            let mut t = CsvTable::new(&[
                "lambda_re", "lambda_im", "a_re", "a_im", "b_re", "b_im", "c_re", "c_im", "d_re", "d_im",
            ]);
            for l in &ls {
                let m = rec.matrix(*l)?;
                let mut row: Vec<Field> = vec![l.re.into(), l.im.into()];
                for z in [m.a, m.b, m.c, m.d] {
                    row.push(z.re.into());
                    row.push(z.im.into());
                }
                t.push(row);
                recs.push(MonodromyRecord::new(*l, &m));
            }
            ctx.emit_csv("reconstruct", &t, false)?;
            ctx.emit_json("reconstruct", &json!({ "K": d.k_max, "tau": rec.tau(), "monodromy": recs }))
        }
        Command::Roundtrip => {
            let p = ctx.potential()?;
            let r = roundtrip_report_with(&p, k_max, &ctx.lambdas(), &ctx.spectral_opts())?;
            ctx.emit_json("roundtrip", &r)?;
            let mut v = Vec::new();
            if r.max_rel_err >= 1e-3 {
                v.push(format!("max relative error {:e} ≥ 1e-3", r.max_rel_err));
            }
            if r.tau_err >= 1e-4 {
                v.push(format!("tau error {:e} ≥ 1e-4", r.tau_err));
            }
            check(v)
        }
        Command::FiniteType { n, divisor } => {
            let d = ctx.divisor(divisor.as_deref())?;
            let k_max = d.k_max;
            let opts = FiniteTypeOptions {
                tol: cfg.finite_type_tol,
                verify_counts: cfg.verify_counts,
                ..FiniteTypeOptions::default()
            };
            let n = n.unwrap_or(cfg.finite_type_n);
            if n >= k_max {
                return Err(Failure::Input(format!("N = {n} must be below K = {k_max}")));
            }
            let r = finite_type_project(&d, n, &opts)?;
            ctx.emit_json("finite_type", &r)?;
            let mut v = Vec::new();
            if r.contraction >= 1.0 {
                v.push(format!("measured contraction {} ≥ 1", r.contraction));
            }
            if r.defect >= 1e-8 {
                v.push(format!("double-point defect {:e} ≥ 1e-8", r.defect));
            }
            check(v)
        }
        Command::AbelFlow { direction, gaps } => {
            let p = ctx.potential()?;
            let dir = match direction {
                Some(Dir::X) => FlowDirection::X,
                Some(Dir::Y) => FlowDirection::Y,
                None => cfg.flow,
            };
            let opts = FlowOptions {
                spectral: SpectralOptions {
                    verify_counts: false,
                    ..ctx.spectral_opts()
                },
                quad_nodes: cfg.quad_nodes,
                ..FlowOptions::default()
            };
            let g = gaps.unwrap_or(cfg.n_gaps);
            let (r, tol) = match dir {
                FlowDirection::X => (flow_x_check_with(&p, g, &linspace(0.0, 1.0, cfg.samples), k_max, &opts)?, 1e-3),
                FlowDirection::Y => (
                    flow_y_check_with(&p, g, &linspace(-cfg.y_max, cfg.y_max, cfg.samples), k_max, &opts)?,
                    5e-3,
                ),
            };
            let mut t = CsvTable::new(&["t", "n", "re_phi", "im_phi"]);
            for (x, row) in r.params.iter().zip(&r.phi) {
                for (j, v) in row.iter().enumerate() {
                    t.push(vec![(*x).into(), r.gaps[j].into(), v.re.into(), v.im.into()]);
                }
            }
            ctx.emit_csv("abel_flow", &t, false)?;
            let summary = json!({
                "direction": r.kind,
                "genus": r.genus,
                "gaps": r.gaps,
                "slopes": r.slopes,
                "residuals": r.residuals,
                "ranges": r.ranges,
                "rel_residuals": r.rel_residuals,
                "lattice": r.lattice,
                "windings": r.windings,
                "ambiguous_lifts": r.ambiguous_lifts,
                "b_periods": r.b_periods,
            });
            ctx.emit_json("abel_flow", &summary)?;
            let mut v: Vec<String> = r
                .rel_residuals
                .iter()
                .zip(&r.gaps)
                .filter(|(x, _)| **x >= tol)
                .map(|(x, n)| format!("coordinate {n}: relative fit residual {x:e} ≥ {tol:e}"))
                .collect();
            if let Some(l) = &r.lattice {
                if l.distance >= 1e-3 {
                    v.push(format!("φ(1) − φ(0) is {:e} from the lattice", l.distance));
                }
            }
            check(v)
        }
        Command::Decay => {
            if cfg.decay_n_min > cfg.decay_n_max || cfg.decay_n_max > k_max {
                return Err(Failure::Input("need decay_n_min ≤ decay_n_max ≤ k_max".into()));
            }
            let p = ctx.potential()?;
            let solver = ctx.solver(&p);
            let d = find_divisor_with(&solver, k_max, &ctx.spectral_opts())?;
            let b = find_branch_points_with(&solver, k_max, &ctx.spectral_opts())?;
            let r = exp_decay_report(&d, &b, cfg.y0_hint, cfg.decay_n_min, cfg.decay_n_max)?;
            ctx.emit_json("decay", &r)?;
            let mut v = Vec::new();
            for (name, f) in [("gap", &r.gap), ("divisor_offset", &r.divisor_offset), ("mu_offset", &r.mu_offset)] {
                if f.floor_limited {
                    v.push(format!("{name}: fewer than three samples above the measurement floor"));
                } else if !(f.rate > 0.0 && f.r_squared > 0.9) {
                    v.push(format!("{name}: rate {} with R² {}", f.rate, f.r_squared));
                }
            }
            check(v)
        }
    }
}

fn variant_name(e: &SpectralError) -> String {
    let s = format!("{e:?}");
    s.split(|c| c == '{' || c == '(' || c == ' ').next().unwrap_or("").to_string()
}

fn configure_threads(cfg: &RunConfig) -> Result<(), String> {
    if cfg.deterministic || cfg.threads == Some(1) {
        par::force_sequential(true);
        return Ok(());
    }
    #[cfg(feature = "parallel")]
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let status = |v: serde_json::Value| eprintln!("{v}");
    let mut cfg = match RunConfig::load(cli.config.as_deref(), std::env::vars()) {
        Ok(c) => c,
        Err(e) => {
            status(json!({ "status": "input_error", "message": e }));
            return ExitCode::from(1);
        }
    };
    if let Some(t) = cli.threads {
        cfg.threads = Some(t);
    }
    if let Some(k) = cli.k_max {
        cfg.k_max = k;
    }
    cfg.deterministic |= cli.deterministic;
    if cli.out.is_some() {
        cfg.out = cli.out.clone();
    }
    if let Err(e) = cfg.validate().and_then(|_| configure_threads(&cfg)) {
        status(json!({ "status": "input_error", "message": e }));
        return ExitCode::from(1);
    }
    if let Some(dir) = &cfg.out {
        if let Err(e) = std::fs::create_dir_all(dir) {
            status(json!({ "status": "input_error", "message": format!("{}: {e}", dir.display()) }));
            return ExitCode::from(1);
        }
    }
    let ctx = Ctx {
        out: cfg.out.clone(),
        cfg,
    };
    match run(&cli.cmd, &ctx) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(m)) => {
            status(json!({ "status": "input_error", "message": m }));
            ExitCode::from(1)
        }
        Err(Failure::Numeric(e)) => {
            status(json!({ "status": "numerical_failure", "kind": variant_name(&e), "message": e.to_string() }));
            ExitCode::from(2)
        }
        Err(Failure::Tolerance { violations }) => {
            status(json!({ "status": "tolerance_violation", "violations": violations }));
            ExitCode::from(2)
        }
    }
}
