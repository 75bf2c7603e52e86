mod args;
mod svg;

use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use chaoscope_core::boundary::InitRegion;
use chaoscope_core::ensemble::Exec;
use chaoscope_core::fractal::{
    box_count_points, estimate_dimension, family_counts, parse_points_csv, BoxCountSeries, FractalFamily,
};
use chaoscope_core::integrate::{build_plugin, integrate, IntegratorConfig, Method, DEFAULT_COMPILE_COMMAND};
use chaoscope_core::store::{RunResults, Store};
use chaoscope_core::sysdsl::SystemDef;
use chaoscope_core::workflow::{execute, JobRequest, Outcome};
use clap::Parser;
use serde_json::{json, Map, Value};

use crate::args::{BenchArgs, Cli, Command, Common, FractalArgs, MethodArg, ServeArgs};

#[derive(Debug)]
struct CliError(String);

impl<E: std::error::Error> From<E> for CliError {
    fn from(e: E) -> CliError {
        CliError(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn fail<T>(msg: impl Display) -> Result<T> {
    Err(CliError(msg.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError(msg)) => {
            let line: Vec<&str> = msg.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
            eprintln!("error: {}", line.join("; "));
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Solve(a) => {
            let mut req = base_request(&a.common, "solve")?;
            set(&mut req, "predicate", a.predicate.map(Value::from));
            set(&mut req, "t_range", a.t_range.as_deref().map(parse_range).transpose()?.map(|r| json!(r)));
            set(&mut req, "t_plot_step", a.t_plot_step.map(Value::from));
            let out = run_job(req, &a.common)?;
            if let Some(path) = &a.svg {
                let store = Store::resolve(a.common.store.as_deref());
                let run = store.load_run(&out.manifest.run_id)?;
                let vars: Vec<&str> = a.svg_vars.split(',').map(str::trim).collect();
                fs::write(path, svg::render(&run, &vars)?).map_err(|e| CliError(format!("{}: {e}", path.display())))?;
            }
            Ok(())
        }
        Command::Boxcount(a) => {
            let mut req = base_request(&a.common, "boxcount")?;
            cell_flags(&mut req, &a.cells);
            set(&mut req, "epsilon", a.epsilon.map(Value::from));
            run_job(req, &a.common).map(|_| ())
        }
        Command::Fdim(a) => {
            let mut req = base_request(&a.common, "fdim")?;
            cell_flags(&mut req, &a.cells);
            set(&mut req, "epsilon_range", a.epsilon_range.as_deref().map(parse_range).transpose()?.map(|r| json!(r)));
            set(&mut req, "n_epsilons", a.n_epsilons.map(Value::from));
            let out = run_job(req, &a.common)?;
            if let (Some(path), RunResults::Fdim(fd)) = (&a.csv, &out.results) {
                fs::write(path, fd.to_csv()).map_err(|e| CliError(format!("{}: {e}", path.display())))?;
            }
            Ok(())
        }
        Command::Fractal(a) => fractal(a),
        Command::Bench(a) => bench(a),
        Command::Serve(a) => serve(a),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError(format!("{}: {e}", path.display())))
}

fn set(req: &mut Map<String, Value>, key: &str, value: Option<Value>) {
    if let Some(v) = value {
        req.insert(key.to_string(), v);
    }
}

/// `a..b` or `a,b`.
fn parse_range(s: &str) -> Result<[f64; 2]> {
    let (a, b) = s.split_once("..").or_else(|| s.split_once(',')).ok_or_else(|| CliError(format!("expected lo..hi, got '{s}'")))?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|_| CliError(format!("bad number '{}' in '{s}'", v.trim())));
    Ok([num(a)?, num(b)?])
}

fn apply_params(sys: SystemDef, params: &[String]) -> Result<SystemDef> {
    params.iter().try_fold(sys, |sys, p| {
        let (name, value) = p.split_once('=').ok_or_else(|| CliError(format!("expected NAME=VALUE, got '{p}'")))?;
        let value: f64 = value.trim().parse().map_err(|_| CliError(format!("bad parameter value in '{p}'")))?;
        Ok(sys.rebind(name.trim(), value)?)
    })
}

fn base_request(c: &Common, kind: &str) -> Result<Map<String, Value>> {
    let mut req = match &c.config {
        Some(path) => match serde_json::from_str::<Value>(&read(path)?) {
            Ok(Value::Object(m)) => m,
            Ok(_) => return fail(format!("{}: expected a JSON object", path.display())),
            Err(e) => return fail(format!("{}: {e}", path.display())),
        },
        None => Map::new(),
    };
    match req.get("kind") {
        Some(k) if k != kind => return fail(format!("config describes a {k} job, not {kind}")),
        _ => {
            req.insert("kind".into(), kind.into());
        }
    }
    if let Some(path) = &c.system {
        req.insert("system".into(), read(path)?.into());
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        req.insert("system_name".into(), stem.into());
    }
    if !c.params.is_empty() {
        let Some(Value::String(src)) = req.get("system") else {
            return fail("--param needs a system (--system or `system` in --config)");
        };
        let name = req.get("system_name").and_then(Value::as_str).unwrap_or("system").to_string();
        let sys = apply_params(SystemDef::from_source(&name, src)?, &c.params)?;
        req.insert("system".into(), sys.to_string().into());
    }
    if let Some(r) = &c.region {
        let region: InitRegion = r.parse()?;
        req.insert("region".into(), serde_json::to_value(region)?);
    }
    set(&mut req, "number_ic", c.number_ic.map(Value::from));
    set(&mut req, "seed", c.seed.map(Value::from));
    set(&mut req, "t_calc_step", c.t_calc_step.map(Value::from));
    set(&mut req, "compile_command", c.compile_command.clone().map(Value::from));
    let method = c.method.map(|m| match m {
        MethodArg::Native => "native",
        MethodArg::Plugin => "plugin",
    });
    set(&mut req, "method", method.map(Value::from));
    Ok(req)
}

fn cell_flags(req: &mut Map<String, Value>, c: &args::CellArgs) {
    set(req, "predicate", c.predicate.clone().map(Value::from));
    set(req, "final_time", c.final_time.map(Value::from));
    set(req, "t0", c.t0.map(Value::from));
    set(req, "k", c.k.map(Value::from));
}

fn run_job(req: Map<String, Value>, c: &Common) -> Result<Outcome> {
    let req: JobRequest =
        serde_json::from_value(Value::Object(req)).map_err(|e| CliError(format!("invalid request: {e}")))?;
    req.validate()?;
    let store = Store::resolve(c.store.as_deref());
    let out = execute(&req, &store, &Exec::with_workers(c.workers))?;
    if c.json {
        let v = json!({"run_id": out.manifest.run_id, "elapsed_secs": out.elapsed_secs, "results": out.results});
        println!("{}", serde_json::to_string_pretty(&v)?);
    } else {
        print_outcome(&out, &store);
    }
    Ok(out)
}

fn print_outcome(out: &Outcome, store: &Store) {
    let m = &out.manifest;
    match &out.results {
        RunResults::None => {
            let failed = m.trajectories.iter().filter(|t| !matches!(t.status, chaoscope_core::integrate::Status::Completed)).count();
            println!("trajectories: {} ({} completed, {failed} failed)", m.trajectories.len(), m.trajectories.len() - failed);
        }
        RunResults::Boxcount(r) => {
            println!("epsilon = {:e}  delta = {:e}", r.epsilon, r.delta);
            println!("From the {} points (that were testable), {} of them were close to the boundary", r.n_testable, r.n_boundary);
            println!("fraction = {}  excluded = {}", r.fraction(), r.n_excluded);
        }
        RunResults::Fdim(fd) => {
            println!("{:>14} {:>14} {:>10} {:>10} {:>14}", "epsilon", "delta", "testable", "boundary", "fraction");
            for r in &fd.runs {
                let mark = if r.n_boundary == 0 { "  (dropped)" } else { "" };
                println!("{:>14.6e} {:>14.6e} {:>10} {:>10} {:>14.6e}{mark}", r.epsilon, r.delta, r.n_testable, r.n_boundary, r.fraction());
            }
            println!("alpha = {}", fd.alpha);
            println!("Fractal dimension = {}", fd.d_b);
            println!("pearson r = {}", fd.pearson_r);
            println!("statistical error = {} %", fd.se_percent);
        }
    }
    println!("run {} saved in {} ({:.2} s)", m.run_id, store.root().display(), out.elapsed_secs);
}

fn fractal(a: FractalArgs) -> Result<()> {
    let series = match &a.points {
        Some(path) => {
            let points = parse_points_csv(&read(path)?)?;
            let deltas: Vec<f64> = match &a.deltas {
                Some(d) => d
                    .split(',')
                    .map(|v| v.trim().parse::<f64>().map_err(|_| CliError(format!("bad cell size '{}'", v.trim()))))
                    .collect::<Result<_>>()?,
                None => (1..=6).map(|m| 3f64.powi(-m)).collect(),
            };
            let counts = deltas.iter().map(|&d| Ok((d, box_count_points(&points, d)?))).collect::<Result<Vec<_>>>()?;
            BoxCountSeries::new(counts)?
        }
        None => {
            let (Some(b), Some(s), Some(m)) = (a.branches, a.scale, a.iterations) else {
                return fail("give either --points or all of -b, -s and -m");
            };
            family_counts(&FractalFamily::new(b, s, m)?)?
        }
    };
    let est = estimate_dimension(&series)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&json!({"estimate": est, "series": series.points()}))?);
    } else {
        print!("{}", series.to_csv());
        println!("d = {}", est.d);
        println!("pearson r = {}  se = {}", est.pearson_r, est.se_slope);
    }
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    if a.repetitions == 0 {
        return fail("repetitions must be at least 1");
    }
    let name = a.system.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let sys = apply_params(SystemDef::from_source(&name, &read(&a.system)?)?, &a.params)?;
    let x0: Vec<f64> = match &a.ic {
        Some(s) => s
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| CliError(format!("bad initial value '{}'", v.trim()))))
            .collect::<Result<_>>()?,
        None => vec![0.5; sys.dim()],
    };
    if x0.len() != sys.dim() {
        return fail(format!("--ic has {} values, the system has {} variables", x0.len(), sys.dim()));
    }
    let [t0, t1] = parse_range(&a.t_range)?;
    let cfg = IntegratorConfig::native(t0, t1, a.t_calc_step, 1);
    cfg.validate()?;

    let time = |cfg: &IntegratorConfig| -> Result<f64> {
        let start = Instant::now();
        for _ in 0..a.repetitions {
            integrate(&sys, &x0, cfg)?;
        }
        Ok(start.elapsed().as_secs_f64() / a.repetitions as f64)
    };
    let mut rows = vec![json!({"method": "native", "repetitions": a.repetitions, "seconds_per_trajectory": time(&cfg)?})];
    let workdir = tempfile::tempdir()?;
    let command = a.compile_command.as_deref().unwrap_or(DEFAULT_COMPILE_COMMAND);
    match build_plugin(&sys, "c99", command, workdir.path()) {
        Ok(spec) => {
            let cfg = IntegratorConfig { method: Method::Plugin(spec), ..cfg.clone() };
            rows.push(json!({"method": "plugin", "repetitions": a.repetitions, "seconds_per_trajectory": time(&cfg)?}));
        }
        Err(e) => rows.push(json!({"method": "plugin", "skipped": e.to_string()})),
    }
    if a.json {
        println!("{}", serde_json::to_string_pretty(&rows)?);
        return Ok(());
    }
    println!("{:<8} {:>11} {:>24}", "method", "repetitions", "seconds_per_trajectory");
    for r in rows {
        match r.get("skipped") {
            Some(why) => println!("{:<8} skipped: {}", r["method"].as_str().unwrap_or(""), why.as_str().unwrap_or("").replace('\n', "; ")),
            None => println!("{:<8} {:>11} {:>24.6e}", r["method"].as_str().unwrap_or(""), a.repetitions, r["seconds_per_trajectory"].as_f64().unwrap_or(f64::NAN)),
        }
    }
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let cfg = chaoscope_service::ServeConfig {
        addr: a.addr,
        store: Store::resolve(a.store.as_deref()),
        workers: a.workers,
        cors_origin: a.cors_origin,
    };
    let root = cfg.store.root().display().to_string();
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(chaoscope_service::serve(cfg, |addr| {
        println!("listening on http://{addr} (store {root})");
    }))?;
    Ok(())
}
