//! Static SVG of a 2-D projection of a stored run.

use std::fmt::Write;

use chaoscope_core::boundary::Class;
use chaoscope_core::store::StoredRun;

use crate::{fail, Result};

const SIZE: f64 = 600.0;
const PAD: f64 = 40.0;

fn colour(class: Option<&Class>) -> &'static str {
    match class {
        Some(Class::True) => "#d62728",
        Some(Class::False) => "#1f77b4",
        _ => "#555555",
    }
}

pub fn render(run: &StoredRun, vars: &[&str]) -> Result<String> {
    let names: Vec<&str> = run.manifest.region.ranges.iter().map(|r| r.var.as_str()).collect();
    let col = |v: &str| -> Result<usize> {
        if v == "t" {
            return Ok(0);
        }
        match names.iter().position(|n| *n == v) {
            Some(i) => Ok(i + 1),
            None => fail(format!("--svg-vars: unknown variable '{v}'")),
        }
    };
    let [a, b] = vars else {
        return fail("--svg-vars needs two variables, e.g. x,z");
    };
    let (ca, cb) = (col(a)?, col(b)?);

    let mut orbits = Vec::new();
    for (n, entry) in run.manifest.trajectories.iter().enumerate() {
        let t = run.trajectory(n)?;
        let pts: Vec<(f64, f64)> = t
            .times
            .iter()
            .zip(&t.states)
            .map(|(t, x)| {
                let get = |c: usize| if c == 0 { *t } else { x[c - 1] };
                (get(ca), get(cb))
            })
            .collect();
        orbits.push((entry.class.as_ref(), pts));
    }
    let all = orbits.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    let span = |lo: f64, hi: f64| if hi > lo { hi - lo } else { 1.0 };
    let (sx, sy) = ((SIZE - 2.0 * PAD) / span(x0, x1), (SIZE - 2.0 * PAD) / span(y0, y1));

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{PAD}" y="{PAD}" width="{w}" height="{w}" fill="none" stroke="grey"/>"#,
        w = SIZE - 2.0 * PAD
    );
    for (class, pts) in &orbits {
        let path: Vec<String> = pts
            .iter()
            .map(|(x, y)| format!("{:.2},{:.2}", PAD + (x - x0) * sx, SIZE - PAD - (y - y0) * sy))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{}" stroke-width="0.8" points="{}"/>"#,
            colour(*class),
            path.join(" ")
        );
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{a} [{x0:.4}, {x1:.4}]</text>"#, SIZE / 2.0, SIZE - 10.0);
    let _ = writeln!(
        s,
        r#"<text x="12" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 12 {})">{b} [{y0:.4}, {y1:.4}]</text>"#,
        SIZE / 2.0,
        SIZE / 2.0
    );
    s.push_str("</svg>\n");
    Ok(s)
}
