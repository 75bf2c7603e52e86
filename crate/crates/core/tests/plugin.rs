use std::fs;

use chaoscope_core::integrate::{
    build_plugin, integrate, rk5_step, run_plugin, IntegrateError, IntegratorConfig, Method, DEFAULT_COMPILE_COMMAND,
};
use chaoscope_core::sysdsl::SystemDef;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LORENZ: &str = "param sigma = 10\nparam b = 8/3\nparam R = 28\n\
                      diff(x,t) = sigma*(y-x)\ndiff(y,t) = -x*z+R*x-y\ndiff(z,t) = x*y-b*z\n";

fn lorenz() -> SystemDef {
    SystemDef::from_source("lorenz", LORENZ).unwrap()
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-300)).fold(0.0, f64::max)
}

#[test]
fn compiled_lorenz_matches_native() {
    let dir = tempfile::tempdir().unwrap();
    let sys = lorenz();
    let spec = build_plugin(&sys, "c99", DEFAULT_COMPILE_COMMAND, dir.path()).unwrap();
    let cfg = IntegratorConfig::native(0.0, 11.0, 0.002, 1);
    let x0 = [-0.377165, 0.486855, -0.298935];
    let native = integrate(&sys, &x0, &cfg).unwrap();
    let plugin = integrate(&sys, &x0, &IntegratorConfig { method: Method::Plugin(spec), ..cfg }).unwrap();
    assert!(native.is_completed() && plugin.is_completed());
    assert_eq!(native.times, plugin.times);
    let dev = native.states.iter().zip(&plugin.states).map(|(a, b)| max_rel(a, b)).fold(0.0, f64::max);
    assert!(dev <= 1e-9, "max relative deviation {dev}");
}

#[test]
fn single_steps_agree_at_random_states() {
    let dir = tempfile::tempdir().unwrap();
    let sys = lorenz();
    let spec = build_plugin(&sys, "c99", DEFAULT_COMPILE_COMMAND, dir.path()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-25.0..25.0)).collect();
        let h = 0.002;
        let want = rk5_step(&sys, 0.0, &x, h).unwrap();
        let got = run_plugin(&spec, &x, &IntegratorConfig::native(0.0, h, h, 1)).unwrap();
        assert_eq!(got.len(), 2);
        assert!(max_rel(&want, &got.states[1]) <= 1e-12, "x={x:?}");
    }
}

#[test]
fn blow_up_is_reported_as_data() {
    let dir = tempfile::tempdir().unwrap();
    let sys = SystemDef::from_source("blow", "diff(x,t) = x^2").unwrap();
    let spec = build_plugin(&sys, "c99", DEFAULT_COMPILE_COMMAND, dir.path()).unwrap();
    let cfg = IntegratorConfig::native(0.0, 2.0, 0.01, 1);
    let native = integrate(&sys, &[1.0], &cfg).unwrap();
    let tr = integrate(&sys, &[1.0], &IntegratorConfig { method: Method::Plugin(spec), ..cfg }).unwrap();
    assert!(!tr.is_completed());
    assert_eq!(tr.status, native.status);
    assert_eq!(tr.times, native.times);
}

#[test]
fn missing_compiler_is_a_build_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = build_plugin(&lorenz(), "c99", "no-such-compiler-xyz -o {exe} {src}", dir.path()).unwrap_err();
    assert!(!matches!(err, IntegrateError::Malformed { .. }), "{err}");
}

#[test]
fn broken_compile_is_a_build_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(build_plugin(&lorenz(), "c99", "cc -std=c99 -DNOPE=( -o {exe} {src} -lm -Wl,--no-such-flag", dir.path())
        .is_err());
}

#[test]
fn deleted_executable_fails_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let spec = build_plugin(&lorenz(), "c99", DEFAULT_COMPILE_COMMAND, dir.path()).unwrap();
    fs::remove_file(&spec.executable_path).unwrap();
    assert!(run_plugin(&spec, &[1.0, 1.0, 1.0], &IntegratorConfig::native(0.0, 1.0, 0.01, 1)).is_err());
}

#[test]
fn truncated_output_is_malformed() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = build_plugin(&lorenz(), "c99", DEFAULT_COMPILE_COMMAND, dir.path()).unwrap();
    let fake = dir.path().join("fake.sh");
    fs::write(&fake, "#!/bin/sh\nprintf '0 1 1 1\\n0.01 1 1\\n' > \"$2\"\n").unwrap();
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        fs::set_permissions(&fake, fs::Permissions::from_mode(0o755)).unwrap();
    }
    spec.executable_path = fake;
    let err = run_plugin(&spec, &[1.0, 1.0, 1.0], &IntegratorConfig::native(0.0, 1.0, 0.01, 1)).unwrap_err();
    assert!(matches!(err, IntegrateError::Malformed { line: 2, .. }), "{err}");
}

#[test]
fn wrong_dimension_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let spec = build_plugin(&lorenz(), "c99", DEFAULT_COMPILE_COMMAND, dir.path()).unwrap();
    let err = run_plugin(&spec, &[1.0, 1.0], &IntegratorConfig::native(0.0, 1.0, 0.01, 1)).unwrap_err();
    assert!(matches!(err, IntegrateError::DimensionMismatch { expected: 3, got: 2 }));
}
