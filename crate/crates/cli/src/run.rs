//! The five commands.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{anyhow, Context, Result};
use serde_json::json;
use whisker_core::cohomology::{certify, DiophantineCertificate, Frequency, FrequencyKind};
use whisker_core::flow::solve_flow_torus;
use whisker_core::models::Family;
use whisker_core::newton::{condition_report, continue_family, linearize, solve_observed, NewtonRecord};
use whisker_core::torus::winding_for;
use whisker_core::verify::verify;
use whisker_core::{Embedding, Grid, SymplecticSystem, TorusSolution};

use crate::artifacts::{read_torus, Output, Sidecar};
use crate::config::{self, Command, Loaded, DEFAULT_GRID, DEFAULT_K_MAX, DEFAULT_NU};
use crate::plugin::Plugin;

/// A solver outcome that is reported, not a usage problem: exit status 2.
#[derive(Debug)]
pub struct Controlled(pub String);

impl std::fmt::Display for Controlled {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Controlled {}

fn controlled(e: impl std::fmt::Display) -> anyhow::Error {
    anyhow::Error::new(Controlled(e.to_string()))
}

pub struct Options {
    pub command: Command,
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub seed_torus: Option<PathBuf>,
    pub grid: Option<usize>,
    pub quiet: bool,
}

struct Ctx {
    loaded: Loaded,
    sys: Box<dyn SymplecticSystem<f64>>,
    seed: Embedding<f64>,
    sidecar: Option<Sidecar>,
    omega: Vec<f64>,
    out: Output,
    quiet: bool,
}

impl Ctx {
    fn cfg(&self) -> &config::RunConfig {
        &self.loaded.config
    }

    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn flow_kind(&self) -> FrequencyKind {
        if self.cfg().is_flow() {
            FrequencyKind::Flow
        } else {
            FrequencyKind::Map
        }
    }

    fn certificate(&self, omega: &[f64]) -> Result<DiophantineCertificate> {
        let f = &self.cfg().frequency;
        let freq = Frequency { omega: omega.to_vec(), kind: self.flow_kind() };
        certify(&freq, f.nu.unwrap_or(DEFAULT_NU), f.k_max.unwrap_or(DEFAULT_K_MAX))
            .map_err(|e| controlled(format!("frequency {omega:?} fails the Diophantine scan: {e}")))
    }

    fn seed_solution(&self) -> Result<TorusSolution<f64>> {
        let mut sol = TorusSolution::seed(self.seed.clone(), Frequency::map(&self.omega), &*self.sys).map_err(controlled)?;
        if let Some(s) = &self.sidecar {
            if s.lambda.len() == sol.lambda.len() {
                sol.lambda = s.lambda.clone();
            }
            if let Some(r) = s.residual {
                sol.residual = r;
            }
        }
        Ok(sol)
    }
}

fn usage(l: &Loaded, field: &str, msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(l.error(field, msg))
}

fn prepare(opts: &Options) -> Result<Ctx> {
    let mut loaded = config::load(&opts.config)?;
    if let Some(p) = &opts.seed_torus {
        loaded.config.seed_torus = Some(p.clone());
    }
    let stored = match &loaded.config.seed_torus {
        Some(p) => {
            // command-line paths are relative to the working directory
            let path = if opts.seed_torus.is_some() { p.clone() } else { loaded.resolve(p) };
            if !path.exists() {
                return Err(usage(&loaded, "seed_torus", format!("file {} not found", path.display())));
            }
            Some(read_torus(&path)?)
        }
        None => None,
    };
    let n = opts
        .grid
        .or(loaded.config.grid)
        .or_else(|| stored.as_ref().map(|(m, _)| m.grid().sizes()[0]))
        .unwrap_or(DEFAULT_GRID);
    config::validate(&loaded, opts.command, n)?;
    let c = &loaded.config;
    let sys: Box<dyn SymplecticSystem<f64>> = match (&c.model, &c.plugin) {
        (Some(m), _) => m.system(c.flow.integrator).map_err(|e| usage(&loaded, "model", e.to_string()))?,
        (None, Some(p)) => {
            let cwd = opts.config.parent().map(|p| p.to_path_buf()).unwrap_or_else(|| PathBuf::from("."));
            let cwd = if cwd.as_os_str().is_empty() { PathBuf::from(".") } else { cwd };
            Box::new(Plugin::spawn(p, &cwd)?)
        }
        _ => unreachable!("validated"),
    };
    let l = sys.angles().len();
    let grid = Grid::cube(l, n).map_err(|e| usage(&loaded, "grid", e.to_string()))?;
    let (seed, sidecar) = match stored {
        Some((map, side)) => {
            if map.grid().dim() != l || map.m() != sys.dim() {
                return Err(usage(
                    &loaded,
                    "seed_torus",
                    format!("torus file has l = {}, m = {}; the system needs l = {l}, m = {}", map.grid().dim(), map.m(), sys.dim()),
                ));
            }
            let winding = side.as_ref().map(Sidecar::winding).unwrap_or_else(|| winding_for(sys.dim(), &sys.angles()));
            let k = Embedding::new(winding, map.resample(&grid)?)?;
            (k, side)
        }
        None => {
            let m = c.model.as_ref().expect("plugins require a seed torus");
            (m.seed(&grid)?, None)
        }
    };
    let omega = match (&c.frequency.omega, &sidecar, &c.model) {
        (Some(w), _, _) => w.clone(),
        (None, Some(s), _) => s.omega.clone(),
        (None, None, Some(m)) if l == 1 => vec![m.omega0],
        _ => return Err(usage(&loaded, "frequency.omega", "no frequency given")),
    };
    if omega.len() != l {
        return Err(usage(&loaded, "frequency.omega", format!("{} entries for a torus of dimension {l}", omega.len())));
    }
    let out_dir = opts.out.clone().or_else(|| c.out.as_ref().map(|p| loaded.resolve(p))).unwrap_or_else(|| PathBuf::from("whisker-out"));
    let out = Output::new(&out_dir)?;
    Ok(Ctx { loaded, sys, seed, sidecar, omega, out, quiet: opts.quiet })
}

pub fn run(opts: &Options) -> Result<()> {
    let ctx = prepare(opts)?;
    match opts.command {
        Command::Solve => solve(&ctx),
        Command::Continue => continuation(&ctx),
        Command::RefineBundle => refine(&ctx),
        Command::Verify => check(&ctx),
        Command::Report => report(&ctx),
    }
}

fn progress(ctx: &Ctx, r: &NewtonRecord) {
    ctx.say(format!("iter {:>2}  residual {:.3e}  |lambda| {:.3e}", r.iter, r.residual, r.lambda_norm));
}

fn write_solution(ctx: &Ctx, sol: &TorusSolution<f64>, side: &Sidecar) -> Result<()> {
    ctx.out.torus("torus", sol, side)?;
    ctx.out.report("report.jsonl", &sol.report)?;
    ctx.out.samples(&sol.k)?;
    if let Some(s) = &sol.splitting {
        ctx.out.splitting(s)?;
    }
    Ok(())
}

fn solve(ctx: &Ctx) -> Result<()> {
    let cert = ctx.certificate(&ctx.omega)?;
    let newton = &ctx.cfg().newton;
    let result = match &ctx.cfg().model {
        Some(m) if m.family == Family::B => {
            let map = m.model_b().time1(ctx.cfg().flow.integrator);
            solve_flow_torus(&map, ctx.seed.clone(), &Frequency::flow(&ctx.omega), newton, &ctx.cfg().flow).map(|f| {
                let extra = json!({ "flow_defects": f.defects, "energy_spread": f.energy_spread, "flow_flagged": f.flagged });
                (f.solution, Some(extra))
            })
        }
        _ => {
            let seed = ctx.seed_solution()?;
            solve_observed(seed, &*ctx.sys, newton, |r| progress(ctx, r)).map(|s| (s, None))
        }
    };
    match result {
        Ok((sol, extra)) => {
            let mut side = Sidecar::of(&sol, Some(&cert), None);
            side.kind = ctx.flow_kind();
            if let Some(serde_json::Value::Object(e)) = extra {
                side.extra = e;
            }
            write_solution(ctx, &sol, &side)?;
            ctx.say(format!("converged: residual {:.3e} after {} steps", sol.residual, sol.report.len().saturating_sub(1)));
            if side.extra.get("flow_flagged") == Some(&serde_json::Value::Bool(true)) {
                return Err(controlled("flow invariance defect above flow_tol"));
            }
            Ok(())
        }
        Err(f) => {
            let mut side = Sidecar::of(&f.partial, Some(&cert), Some(f.error.to_string()));
            side.kind = ctx.flow_kind();
            write_solution(ctx, &f.partial, &side)?;
            Err(controlled(f.error))
        }
    }
}

fn continuation(ctx: &Ctx) -> Result<()> {
    let c = ctx.cfg();
    let sec = c.continuation.as_ref().expect("validated");
    let model = c.model.clone().expect("validated");
    let integrator = c.flow.integrator;
    let mut certs = BTreeMap::new();
    for &v in &sec.values {
        let mut m = model.clone();
        sec.param.set(&mut m, v);
        let omega = if sec.param == config::Param::Omega0 && c.frequency.omega.is_none() { vec![v] } else { ctx.omega.clone() };
        certs.insert(v.to_bits(), ctx.certificate(&omega)?);
    }
    let fixed_omega = c.frequency.omega.is_some();
    let out = continue_family(
        &ctx.seed,
        &sec.values,
        |v| {
            let mut m = model.clone();
            sec.param.set(&mut m, v);
            let omega = if sec.param == config::Param::Omega0 && !fixed_omega { vec![v] } else { ctx.omega.clone() };
            ctx.say(format!("{:?} = {v}", sec.param));
            Ok((m.system(integrator)?, Frequency::map(&omega)))
        },
        sec.predictor,
        &c.newton,
    );
    let mut csv = String::from("index,param,residual,lambda_norm,steps,lipschitz\n");
    for (i, s) in out.steps.iter().enumerate() {
        let side = Sidecar::of(&s.solution, certs.get(&s.param.to_bits()), None);
        ctx.out.torus(&format!("torus_{i:03}"), &s.solution, &side)?;
        ctx.out.report(&format!("report_{i:03}.jsonl"), &s.solution.report)?;
        let lip = s.lipschitz.map(|x| format!("{x:.16e}")).unwrap_or_default();
        csv.push_str(&format!(
            "{i},{:.16e},{:.16e},{:.16e},{},{lip}\n",
            s.param,
            s.solution.residual,
            s.solution.lambda_norm(),
            s.solution.report.len().saturating_sub(1)
        ));
    }
    ctx.out.text("lipschitz.csv", &csv)?;
    match out.failure {
        None => {
            ctx.say(format!("{} tori written", out.steps.len()));
            Ok(())
        }
        Some(f) => {
            if let Some(p) = &f.partial {
                let i = out.steps.len();
                let side = Sidecar::of(p, certs.get(&f.param.to_bits()), Some(f.error.to_string()));
                ctx.out.torus(&format!("torus_{i:03}"), p, &side)?;
                ctx.out.report(&format!("report_{i:03}.jsonl"), &p.report)?;
            }
            Err(controlled(format!("continuation stopped at {}: {}", f.param, f.error)))
        }
    }
}

fn refine(ctx: &Ctx) -> Result<()> {
    let sol = ctx.seed_solution()?;
    let lin = linearize(&sol, &*ctx.sys, None, &ctx.cfg().newton).map_err(controlled)?;
    ctx.out.splitting(&lin.splitting)?;
    let summary = json!({
        "dims": [lin.splitting.dims.0, lin.splitting.dims.1, lin.splitting.dims.2],
        "invariance_residual": lin.split_residual,
        "projection_defect": lin.splitting.projection_defect(),
        "rates": lin.rates,
        "isotropy": lin.isotropy,
        "center_dist": lin.center_dist,
    });
    ctx.out.json("bundles.json", &summary)?;
    ctx.say(format!(
        "splitting {:?}: invariance {:.3e}, mu = ({:.4}, {:.4}, {:.4})",
        lin.splitting.dims, lin.split_residual, lin.rates.mu1, lin.rates.mu2, lin.rates.mu3
    ));
    let v = lin.rates.violations();
    if v.is_empty() {
        Ok(())
    } else {
        Err(controlled(v.join("; ")))
    }
}

fn check(ctx: &Ctx) -> Result<()> {
    let sol = ctx.seed_solution()?;
    let rep = verify(&sol, &*ctx.sys, &ctx.cfg().newton, &ctx.cfg().verify).map_err(controlled)?;
    let table = rep.table();
    ctx.out.text("verify.txt", &table)?;
    let rows: Vec<_> = rep
        .checks
        .iter()
        .map(|c| json!({ "check": c.kind.name(), "value": c.value, "bound": c.bound, "pass": c.pass, "note": c.note }))
        .collect();
    ctx.out.json("verify.json", &rows)?;
    if !ctx.quiet {
        print!("{table}");
    }
    if rep.passed() {
        Ok(())
    } else {
        let failed: Vec<&str> = rep.checks.iter().filter(|c| !c.pass).map(|c| c.kind.name()).collect();
        Err(controlled(format!("checks failed: {}", failed.join(", "))))
    }
}

fn report(ctx: &Ctx) -> Result<()> {
    let cert = ctx.certificate(&ctx.omega)?;
    let sol = ctx.seed_solution()?;
    let cond = condition_report(&sol, &*ctx.sys, &ctx.cfg().newton).map_err(controlled)?;
    let doc = json!({ "certificate": cert, "conditions": cond });
    ctx.out.json("condition.json", &doc)?;
    if !ctx.quiet {
        println!("kappa {:.4e} (nu {}, |k| <= {}, worst k {:?})", cert.kappa, cert.nu, cert.k_max, cert.worst_k);
        println!(
            "C^c {:.3e}  C^h {:.3e}  C {:.3e}  |avg A^-1| {:.3e}  |avg Q^-1| {:.3e}",
            cond.c_center, cond.c_hyperbolic, cond.c_total, cond.avg_a_inv, cond.avg_q_inv
        );
        for f in &cond.flags {
            println!("flag: {f}");
        }
    }
    Ok(())
}

/// Cap the worker pool from `WHISKER_THREADS`.
pub fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("WHISKER_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| anyhow!("WHISKER_THREADS must be a positive integer, got {v:?}"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("cannot size the worker pool")
}
