//! Subcommand implementations. Every subcommand writes into one output
//! directory and removes what it wrote if a later step fails.

use std::fmt::Write as _;
use std::path::{Path as FsPath, PathBuf};

use anyhow::Context;
use serde::Serialize;

use super::config::{Scenario, ScenarioConfig};
use crate::control_opt::{audit_a3, audit_a4, optimize, ControlSignal, OptimizeResult};
use crate::dynamics::{monte_carlo, simulate_path, EnsembleReport, Path};
use crate::picard::{contraction_ratio, picard_solve};
use crate::qwiener::{sample_increments, NoisePath};
use crate::wellposedness::{audit_lipschitz, constants_report, theorem2_check, AuditTarget};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Check,
    Simulate,
    Picard,
    Optimize,
    Example,
}

/// Command-line overrides of the scenario file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub dt: Option<f64>,
}

struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: &FsPath) -> anyhow::Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> anyhow::Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, &s)
    }

    fn discard(self) {
        for p in self.written {
            let _ = std::fs::remove_file(p);
        }
    }
}

/// Runs `cmd` on `cfg` and returns the files written to `out`.
pub fn run_subcommand(
    cmd: Command,
    cfg: &ScenarioConfig,
    out: &FsPath,
    opts: &RunOptions,
) -> anyhow::Result<Vec<PathBuf>> {
    let mut cfg = cfg.clone();
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    if let Some(dt) = opts.dt {
        cfg.dt = dt;
    }
    if let Some(n) = opts.paths {
        match cmd {
            Command::Simulate | Command::Example => cfg.paths = n,
            Command::Picard => cfg.picard.paths = n,
            Command::Optimize => cfg.optimizer.paths = n,
            Command::Check => {}
        }
    }
    let scenario = cfg.build()?;
    let mut outputs = Outputs::new(out)?;
    let result = match cmd {
        Command::Check => check(&cfg, &scenario, &mut outputs).map(|_| ()),
        Command::Simulate => simulate(&cfg, &scenario, &mut outputs).map(|_| ()),
        Command::Picard => picard(&cfg, &scenario, &mut outputs),
        Command::Optimize => optimise(&cfg, &scenario, &mut outputs).map(|_| ()),
        Command::Example => example(&cfg, &scenario, &mut outputs),
    };
    match result {
        Ok(()) => Ok(outputs.written),
        Err(e) => {
            outputs.discard();
            Err(e)
        }
    }
}

#[derive(Serialize)]
struct Audits {
    drift: crate::wellposedness::LipschitzAudit,
    diffusion: crate::wellposedness::LipschitzAudit,
    cost_coercivity: crate::control_opt::AuditReport,
    cost_convexity: crate::control_opt::AuditReport,
    radius: f64,
}

fn check(cfg: &ScenarioConfig, sc: &Scenario, out: &mut Outputs) -> anyhow::Result<crate::ConstantsReport> {
    let report = constants_report(&sc.spec, &sc.lipschitz)?;
    out.json("constants.json", &report)?;
    let radius = 4.0;
    let spec = &sc.spec;
    let lb = &sc.lipschitz;
    let audits = Audits {
        drift: audit_lipschitz(
            AuditTarget::Drift(spec.drift.as_ref()),
            spec.dim(),
            spec.horizon,
            lb.lipschitz_g,
            lb.growth_g,
            2000,
            radius,
            cfg.seed,
        )?,
        diffusion: audit_lipschitz(
            AuditTarget::Diffusion(spec.diffusion.as_ref(), &spec.noise),
            spec.dim(),
            spec.horizon,
            lb.lipschitz_h,
            lb.growth_h,
            2000,
            radius,
            cfg.seed,
        )?,
        cost_coercivity: audit_a4(&sc.cost, spec, 2000, cfg.seed)?,
        cost_convexity: audit_a3(&sc.cost, spec, 2000, cfg.seed)?,
        radius,
    };
    out.json("audits.json", &audits)?;
    Ok(report)
}

pub fn path_csv(path: &Path) -> String {
    let d = path.states()[0].dim();
    let mut s = String::from("t");
    (0..d).for_each(|i| write!(s, ",mode_{i}").unwrap());
    s.push('\n');
    for (t, y) in path.grid().iter().zip(path.states()) {
        write!(s, "{t}").unwrap();
        y.as_slice().iter().for_each(|v| write!(s, ",{v}").unwrap());
        s.push('\n');
    }
    s
}

pub fn jumps_csv(path: &Path) -> String {
    let d = path.states()[0].dim();
    let mut s = String::from("k,t");
    (0..d).for_each(|i| write!(s, ",mode_{i}").unwrap());
    s.push('\n');
    for (k, (node, y)) in path.impulse_nodes().iter().zip(path.plus_states()).enumerate() {
        write!(s, "{},{}", k + 1, path.grid()[*node]).unwrap();
        y.as_slice().iter().for_each(|v| write!(s, ",{v}").unwrap());
        s.push('\n');
    }
    s
}

pub fn ensemble_csv(rep: &EnsembleReport) -> String {
    let mut s = String::from("t,mean_sq_norm,std_error\n");
    for ((t, m), e) in rep.grid.iter().zip(&rep.mean_sq_norm).zip(&rep.std_error) {
        writeln!(s, "{t},{m},{e}").unwrap();
    }
    s
}

#[derive(Serialize)]
struct EnsembleSummary {
    n_paths: usize,
    seed: u64,
    sup_mean_sq_norm: f64,
    final_mean_sq_norm: f64,
    final_std_error: f64,
    impulse_times: Vec<f64>,
    plus_mean_sq_norm: Vec<f64>,
    final_norm_path0: f64,
}

fn simulate(cfg: &ScenarioConfig, sc: &Scenario, out: &mut Outputs) -> anyhow::Result<EnsembleReport> {
    let noise = sample_increments(&sc.spec.noise, &sc.grid, cfg.seed, 0)?;
    let path = simulate_path(&sc.spec, &sc.zero_control, &noise)?;
    out.write("path.csv", &path_csv(&path))?;
    out.write("jumps.csv", &jumps_csv(&path))?;
    let rep = monte_carlo(&sc.spec, &sc.zero_control, &sc.grid, cfg.paths, cfg.seed)?;
    out.write("ensemble.csv", &ensemble_csv(&rep))?;
    out.json(
        "ensemble.json",
        &EnsembleSummary {
            n_paths: cfg.paths,
            seed: cfg.seed,
            sup_mean_sq_norm: rep.sup_mean_sq_norm,
            final_mean_sq_norm: *rep.mean_sq_norm.last().unwrap(),
            final_std_error: *rep.std_error.last().unwrap(),
            impulse_times: rep.impulse_nodes.iter().map(|n| rep.grid[*n]).collect(),
            plus_mean_sq_norm: rep.plus_mean_sq_norm.clone(),
            final_norm_path0: path.final_state().norm(),
        },
    )?;
    Ok(rep)
}

#[derive(Serialize)]
struct PicardSummary {
    converged: bool,
    iterations: usize,
    last_distance: f64,
    tol: f64,
    n_paths: usize,
    tail_max_ratio: Option<f64>,
    theorem2_k: f64,
    theorem2_verdict: bool,
}

fn picard(cfg: &ScenarioConfig, sc: &Scenario, out: &mut Outputs) -> anyhow::Result<()> {
    let noises: Vec<NoisePath> = (0..cfg.picard.paths as u64)
        .map(|i| sample_increments(&sc.spec.noise, &sc.grid, cfg.seed, i))
        .collect::<crate::Result<_>>()?;
    let res = picard_solve(&sc.spec, &sc.zero_control, &noises, cfg.picard.tol, cfg.picard.max_iter)?;
    let mut csv = String::from("iteration,distance,ratio\n");
    for (i, d) in res.distances.iter().enumerate() {
        let ratio = if i > 0 && res.distances[i - 1] != 0.0 {
            (d / res.distances[i - 1]).to_string()
        } else {
            String::new()
        };
        writeln!(csv, "{},{d},{ratio}", i + 1).unwrap();
    }
    out.write("picard.csv", &csv)?;
    let t2 = theorem2_check(&sc.spec, &sc.lipschitz)?;
    out.json(
        "picard.json",
        &PicardSummary {
            converged: res.converged,
            iterations: res.iterations(),
            last_distance: res.last_distance(),
            tol: cfg.picard.tol,
            n_paths: noises.len(),
            tail_max_ratio: contraction_ratio(&res.distances).ok().map(|c| c.tail_max),
            theorem2_k: t2.k,
            theorem2_verdict: t2.verdict,
        },
    )?;
    Ok(())
}

pub fn history_csv(res: &OptimizeResult) -> String {
    let mut s = String::from("iteration,j_best,j_current,step_norm\n");
    for h in &res.history {
        writeln!(s, "{},{},{},{}", h.iteration, h.j_best, h.j_current, h.step_norm).unwrap();
    }
    s
}

pub fn control_csv(u: &ControlSignal) -> String {
    let mut s = String::from("t_left,t_right");
    (0..u.dim()).for_each(|i| write!(s, ",u_{i}").unwrap());
    s.push('\n');
    for (w, v) in u.breakpoints().windows(2).zip(u.values()) {
        write!(s, "{},{}", w[0], w[1]).unwrap();
        v.iter().for_each(|x| write!(s, ",{x}").unwrap());
        s.push('\n');
    }
    s
}

#[derive(Serialize)]
struct OptimizeSummary {
    j_init: f64,
    j_star: f64,
    j_star_standard_error: f64,
    evaluations: usize,
    budget: usize,
    n_paths: usize,
    seed: u64,
}

fn optimise(cfg: &ScenarioConfig, sc: &Scenario, out: &mut Outputs) -> anyhow::Result<OptimizeResult> {
    let params = cfg.optimize_params();
    let res = optimize(&sc.spec, &sc.cost, &sc.admissible, &sc.zero_control, &sc.grid, &params)?;
    out.write("history.csv", &history_csv(&res))?;
    out.write("control.csv", &control_csv(&res.u_star))?;
    out.json(
        "optimize.json",
        &OptimizeSummary {
            j_init: res.j_init,
            j_star: res.j_star,
            j_star_standard_error: res.j_star_standard_error,
            evaluations: res.evaluations,
            budget: params.budget,
            n_paths: params.n_paths,
            seed: params.seed,
        },
    )?;
    Ok(res)
}

#[derive(Serialize)]
struct ExampleSummary {
    scenario: String,
    theorem1_verdict: bool,
    theorem2_verdict: bool,
    binding_constraint: String,
    script_n: f64,
    k1: f64,
    k2: f64,
    n_paths: usize,
    sup_mean_sq_norm: f64,
    j_init: f64,
    j_star: f64,
    evaluations: usize,
    best_so_far_non_increasing: bool,
    notes: Vec<String>,
}

fn example(cfg: &ScenarioConfig, sc: &Scenario, out: &mut Outputs) -> anyhow::Result<()> {
    let report = check(cfg, sc, out)?;
    let ens = simulate(cfg, sc, out)?;
    let opt = optimise(cfg, sc, out)?;
    out.json(
        "summary.json",
        &ExampleSummary {
            scenario: cfg.name.clone(),
            theorem1_verdict: report.theorem1.verdict,
            theorem2_verdict: report.theorem2.verdict,
            binding_constraint: report.binding_constraint.clone(),
            script_n: report.theorem1.script_n,
            k1: report.theorem2.k1,
            k2: report.theorem2.k2,
            n_paths: cfg.paths,
            sup_mean_sq_norm: ens.sup_mean_sq_norm,
            j_init: opt.j_init,
            j_star: opt.j_star,
            evaluations: opt.evaluations,
            best_so_far_non_increasing: opt.history.windows(2).all(|w| w[1].j_best <= w[0].j_best),
            notes: report.notes.clone(),
        },
    )?;
    Ok(())
}
