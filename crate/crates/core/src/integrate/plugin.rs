//! External compiled integrator.
//!
//! A plugin is two C sources: `derivs.c`, emitted from the system, and the
//! fixed driver `rk5.c` below, which repeats the native stepping loop. The
//! resulting executable is used only through its file contract:
//!
//! ```text
//! rk5.in   line 1: n
//!          line 2: t0 t1 h stride
//!          line 3: x0[0] ... x0[n-1]
//! rk5.out  one line per recorded sample: t x[0] ... x[n-1]
//! ```
//!
//! Reals are written with 17 significant digits. Exit status 0 means the
//! run completed, 2 means the trajectory failed numerically (the output
//! holds the recorded prefix), anything else is an execution error. In
//! every non-zero case standard error carries a one-line reason.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{rk5_step, IntegrateError, IntegratorConfig, Status, Trajectory};
use crate::sysdsl::{emit_kernel_source, SystemDef};

pub const DEFAULT_COMPILE_COMMAND: &str = "cc -std=c99 -O2 -ffp-contract=off -o {exe} {src} -lm";

pub const DRIVER_FILE: &str = "rk5.c";
pub const KERNEL_FILE: &str = "derivs.c";
pub const INPUT_FILE: &str = "rk5.in";
pub const OUTPUT_FILE: &str = "rk5.out";

const DEFAULT_TIMEOUT_SECS: f64 = 600.0;
const HANDSHAKE_TOL: f64 = 1e-12;

/// The fixed driver. Constants and arithmetic order mirror `Rk5::step` and
/// `step_native`.
pub const DRIVER_SOURCE: &str = r#"/* rk5.c: fixed-step Cash-Karp fifth-order Runge-Kutta driver.
 * usage: rk5 <input> <output>
 * exit 0: completed; 2: trajectory failed (prefix written); 1: error. */
#include <math.h>
#include <stdio.h>
#include <stdlib.h>

void derivs(double t, const double *x, double *dxdt);

#define C2 (1.0 / 5.0)
#define C3 (3.0 / 10.0)
#define C4 (3.0 / 5.0)
#define C5 (1.0)
#define C6 (7.0 / 8.0)
#define A21 (1.0 / 5.0)
#define A31 (3.0 / 40.0)
#define A32 (9.0 / 40.0)
#define A41 (3.0 / 10.0)
#define A42 (-9.0 / 10.0)
#define A43 (6.0 / 5.0)
#define A51 (-11.0 / 54.0)
#define A52 (5.0 / 2.0)
#define A53 (-70.0 / 27.0)
#define A54 (35.0 / 27.0)
#define A61 (1631.0 / 55296.0)
#define A62 (175.0 / 512.0)
#define A63 (575.0 / 13824.0)
#define A64 (44275.0 / 110592.0)
#define A65 (253.0 / 4096.0)
#define B1 (37.0 / 378.0)
#define B3 (250.0 / 621.0)
#define B4 (125.0 / 594.0)
#define B6 (512.0 / 1771.0)
#define GRID_TOL 1e-9

static int n;
static double *k1, *k2, *k3, *k4, *k5, *k6, *tmp;

static void step(double t, const double *x, double h, double *out)
{
    int j;
    derivs(t, x, k1);
    for (j = 0; j < n; j++) tmp[j] = x[j] + h * (A21 * k1[j]);
    derivs(t + C2 * h, tmp, k2);
    for (j = 0; j < n; j++) tmp[j] = x[j] + h * (A31 * k1[j] + A32 * k2[j]);
    derivs(t + C3 * h, tmp, k3);
    for (j = 0; j < n; j++) tmp[j] = x[j] + h * (A41 * k1[j] + A42 * k2[j] + A43 * k3[j]);
    derivs(t + C4 * h, tmp, k4);
    for (j = 0; j < n; j++) tmp[j] = x[j] + h * (A51 * k1[j] + A52 * k2[j] + A53 * k3[j] + A54 * k4[j]);
    derivs(t + C5 * h, tmp, k5);
    for (j = 0; j < n; j++) tmp[j] = x[j] + h * (A61 * k1[j] + A62 * k2[j] + A63 * k3[j] + A64 * k4[j] + A65 * k5[j]);
    derivs(t + C6 * h, tmp, k6);
    for (j = 0; j < n; j++) out[j] = x[j] + h * (B1 * k1[j] + B3 * k3[j] + B4 * k4[j] + B6 * k6[j]);
}

static void record(FILE *f, double t, const double *x)
{
    int j;
    fprintf(f, "%.17g", t);
    for (j = 0; j < n; j++) fprintf(f, " %.17g", x[j]);
    fputc('\n', f);
}

int main(int argc, char **argv)
{
    FILE *in, *out;
    double t0, t1, h, ratio, nearest;
    unsigned long long stride, steps, i;
    double *x, *next, *swap;
    int j;

    if (argc != 3) {
        fprintf(stderr, "usage: rk5 <input> <output>\n");
        return 1;
    }
    in = fopen(argv[1], "r");
    if (!in) {
        fprintf(stderr, "cannot open input %s\n", argv[1]);
        return 1;
    }
    if (fscanf(in, "%d", &n) != 1 || n < 1) {
        fprintf(stderr, "input line 1: expected dimension\n");
        return 1;
    }
    if (fscanf(in, "%lf %lf %lf %llu", &t0, &t1, &h, &stride) != 4 || !(h > 0.0) || !(t1 > t0) || stride < 1) {
        fprintf(stderr, "input line 2: expected t0 t1 h stride\n");
        return 1;
    }
    x = malloc(sizeof(double) * n);
    next = malloc(sizeof(double) * n);
    k1 = malloc(sizeof(double) * n);
    k2 = malloc(sizeof(double) * n);
    k3 = malloc(sizeof(double) * n);
    k4 = malloc(sizeof(double) * n);
    k5 = malloc(sizeof(double) * n);
    k6 = malloc(sizeof(double) * n);
    tmp = malloc(sizeof(double) * n);
    if (!x || !next || !k1 || !k2 || !k3 || !k4 || !k5 || !k6 || !tmp) {
        fprintf(stderr, "out of memory\n");
        return 1;
    }
    for (j = 0; j < n; j++) {
        if (fscanf(in, "%lf", &x[j]) != 1) {
            fprintf(stderr, "input line 3: expected %d initial values\n", n);
            return 1;
        }
    }
    fclose(in);

    out = fopen(argv[2], "w");
    if (!out) {
        fprintf(stderr, "cannot open output %s\n", argv[2]);
        return 1;
    }

    ratio = (t1 - t0) / h;
    nearest = round(ratio);
    if (fabs(ratio - nearest) <= GRID_TOL * fmax(nearest, 1.0))
        steps = (unsigned long long)nearest;
    else
        steps = (unsigned long long)ceil(ratio);

    record(out, t0, x);
    for (i = 0; i < steps; i++) {
        double t = t0 + (double)i * h;
        int last = (i + 1 == steps);
        double hs = last ? t1 - t : h;
        step(t, x, hs, next);
        for (j = 0; j < n; j++) {
            if (!isfinite(next[j])) {
                fclose(out);
                fprintf(stderr, "failed: non-finite state; last good time %.17g\n", t);
                return 2;
            }
        }
        swap = x;
        x = next;
        next = swap;
        if (last)
            record(out, t1, x);
        else if ((i + 1) % stride == 0)
            record(out, t0 + (double)(i + 1) * h, x);
    }
    if (fclose(out) != 0) {
        fprintf(stderr, "cannot write output %s\n", argv[2]);
        return 1;
    }
    return 0;
}
"#;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
pub struct PluginSpec {
    pub kernel_source_path: PathBuf,
    pub driver_source_path: PathBuf,
    /// Template with `{src}` (both sources) and `{exe}` placeholders.
    pub compile_command: String,
    pub executable_path: PathBuf,
    pub workdir: PathBuf,
    pub dim: usize,
    /// Wall-clock bound for one run.
    pub timeout_secs: f64,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IntegrateError + '_ {
    move |source| IntegrateError::Io { path: path.display().to_string(), source }
}

fn expand_command(template: &str, sources: &[&Path], exe: &Path) -> Vec<String> {
    let joined = sources.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(" ");
    let mut argv = Vec::new();
    for token in template.split_whitespace() {
        if token == "{src}" {
            argv.extend(sources.iter().map(|p| p.display().to_string()));
        } else {
            argv.push(token.replace("{exe}", &exe.display().to_string()).replace("{src}", &joined));
        }
    }
    argv
}

/// Emits kernel and driver into `workdir`, compiles them, and checks the
/// executable against one native step.
pub fn build_plugin(
    sys: &SystemDef,
    dialect: &str,
    compile_command: &str,
    workdir: &Path,
) -> Result<PluginSpec, IntegrateError> {
    let kernel = emit_kernel_source(sys, dialect)?;
    fs::create_dir_all(workdir).map_err(io_err(workdir))?;
    let kernel_path = workdir.join(KERNEL_FILE);
    let driver_path = workdir.join(DRIVER_FILE);
    let exe_path = workdir.join("rk5");
    fs::write(&kernel_path, kernel).map_err(io_err(&kernel_path))?;
    fs::write(&driver_path, DRIVER_SOURCE).map_err(io_err(&driver_path))?;

    let argv = expand_command(compile_command, &[&driver_path, &kernel_path], &exe_path);
    let Some((program, args)) = argv.split_first() else {
        return Err(IntegrateError::CompilerNotFound(String::new()));
    };
    let output = Command::new(program).args(args).current_dir(workdir).output().map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            IntegrateError::CompilerNotFound(program.clone())
        } else {
            IntegrateError::Io { path: program.clone(), source: e }
        }
    })?;
    if !output.status.success() {
        return Err(IntegrateError::CompileFailed {
            status: output.status.to_string(),
            diagnostics: String::from_utf8_lossy(&output.stderr).trim().to_string(),
        });
    }
    if !exe_path.exists() {
        return Err(IntegrateError::CompileFailed {
            status: output.status.to_string(),
            diagnostics: format!("compiler produced no {}", exe_path.display()),
        });
    }

    let spec = PluginSpec {
        kernel_source_path: kernel_path,
        driver_source_path: driver_path,
        compile_command: compile_command.to_string(),
        executable_path: exe_path,
        workdir: workdir.to_path_buf(),
        dim: sys.dim(),
        timeout_secs: DEFAULT_TIMEOUT_SECS,
    };
    handshake(sys, &spec)?;
    Ok(spec)
}

/// State used for the one-step probe.
pub fn probe_state(dim: usize) -> Vec<f64> {
    (0..dim).map(|j| 0.5 + 0.125 * j as f64).collect()
}

fn handshake(sys: &SystemDef, spec: &PluginSpec) -> Result<(), IntegrateError> {
    let x0 = probe_state(sys.dim());
    let h = 0.01;
    let cfg = IntegratorConfig::native(0.0, h, h, 1);
    let traj = run_plugin(spec, &x0, &cfg)?;
    let native = rk5_step(sys, 0.0, &x0, h).ok().filter(|x| x.iter().all(|v| v.is_finite()));
    match (native, &traj.status) {
        (None, Status::Failed { .. }) => Ok(()),
        (None, Status::Completed) => Err(IntegrateError::Handshake("plugin completed a step the native integrator rejects".into())),
        (Some(_), Status::Failed { reason, .. }) => Err(IntegrateError::Handshake(format!("probe step failed: {reason}"))),
        (Some(expected), Status::Completed) => {
            let got = &traj.states[traj.states.len() - 1];
            if traj.len() != 2 || got.len() != expected.len() {
                return Err(IntegrateError::Handshake(format!("expected 2 samples of dimension {}", expected.len())));
            }
            for (j, (a, b)) in got.iter().zip(&expected).enumerate() {
                if (a - b).abs() > HANDSHAKE_TOL * a.abs().max(b.abs()) {
                    return Err(IntegrateError::Handshake(format!("component {j}: plugin {a:e}, native {b:e}")));
                }
            }
            Ok(())
        }
    }
}

/// Formats a real with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Runs the plugin executable once in a private directory under its workdir.
pub fn run_plugin(spec: &PluginSpec, x0: &[f64], cfg: &IntegratorConfig) -> Result<Trajectory, IntegrateError> {
    cfg.validate()?;
    if x0.len() != spec.dim {
        return Err(IntegrateError::DimensionMismatch { expected: spec.dim, got: x0.len() });
    }
    let dir = tempfile::Builder::new().prefix("run-").tempdir_in(&spec.workdir).map_err(io_err(&spec.workdir))?;
    let input = dir.path().join(INPUT_FILE);
    let output = dir.path().join(OUTPUT_FILE);
    // A stride past the last step records only the endpoints.
    let stride = cfg.sample_stride.min(cfg.step_count() + 1);
    let x0_line = x0.iter().map(|v| fmt17(*v)).collect::<Vec<_>>().join(" ");
    let text = format!("{}\n{} {} {} {}\n{}\n", x0.len(), fmt17(cfg.t0), fmt17(cfg.t1), fmt17(cfg.h), stride, x0_line);
    fs::write(&input, text).map_err(io_err(&input))?;

    let mut child = Command::new(&spec.executable_path)
        .arg(INPUT_FILE)
        .arg(OUTPUT_FILE)
        .current_dir(dir.path())
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(io_err(&spec.executable_path))?;

    let start = Instant::now();
    let mut pause = Duration::from_micros(100);
    let status = loop {
        if let Some(status) = child.try_wait().map_err(io_err(&spec.executable_path))? {
            break status;
        }
        if start.elapsed().as_secs_f64() > spec.timeout_secs {
            let _ = child.kill();
            let _ = child.wait();
            return Err(IntegrateError::Timeout(spec.timeout_secs));
        }
        std::thread::sleep(pause);
        pause = (pause * 2).min(Duration::from_millis(20));
    };
    let mut stderr = String::new();
    if let Some(mut pipe) = child.stderr.take() {
        let _ = pipe.read_to_string(&mut stderr);
    }
    let reason = stderr.lines().next().unwrap_or("").trim().to_string();

    let failed = match status.code() {
        Some(0) => None,
        Some(2) => Some(reason),
        _ => return Err(IntegrateError::Exec { status: status.to_string(), reason }),
    };
    let body = fs::read_to_string(&output).map_err(io_err(&output))?;
    let (times, states) = parse_output(&body, x0.len(), cfg.t0)?;

    let status = match failed {
        None => {
            let expected = IntegratorConfig { sample_stride: stride, ..cfg.clone() }.sample_count();
            if times.len() != expected {
                return Err(IntegrateError::Malformed {
                    line: times.len() + 1,
                    msg: format!("expected {expected} samples, found {}", times.len()),
                });
            }
            Status::Completed
        }
        Some(reason) => {
            let last_good_time = reason
                .rsplit("last good time ")
                .next()
                .and_then(|s| s.trim().parse::<f64>().ok())
                .unwrap_or(*times.last().expect("parse_output requires one sample"));
            let reason = reason.strip_prefix("failed: ").unwrap_or(&reason);
            let reason = reason.split(';').next().unwrap_or(reason).to_string();
            Status::Failed { reason, last_good_time }
        }
    };
    Ok(Trajectory { ic_index: 0, times, states, status })
}

type Samples = (Vec<f64>, Vec<Vec<f64>>);

fn parse_output(body: &str, dim: usize, t0: f64) -> Result<Samples, IntegrateError> {
    let mut times = Vec::new();
    let mut states = Vec::new();
    for (i, line) in body.lines().enumerate() {
        let lineno = i + 1;
        let malformed = |msg: String| IntegrateError::Malformed { line: lineno, msg };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != dim + 1 {
            return Err(malformed(format!("expected {} fields, found {}", dim + 1, fields.len())));
        }
        let mut values = Vec::with_capacity(dim + 1);
        for (j, f) in fields.iter().enumerate() {
            values.push(f.parse::<f64>().map_err(|_| malformed(format!("field {}: `{f}` is not a number", j + 1)))?);
        }
        let t = values[0];
        if let Some(prev) = times.last() {
            if t <= *prev {
                return Err(malformed(format!("time {t} does not increase")));
            }
        } else if t != t0 {
            return Err(malformed(format!("first time {t} differs from t0 {t0}")));
        }
        times.push(t);
        states.push(values[1..].to_vec());
    }
    if times.is_empty() {
        return Err(IntegrateError::Malformed { line: 1, msg: "no samples".into() });
    }
    Ok((times, states))
}
