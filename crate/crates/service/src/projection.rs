//! 2-D projections of stored trajectories, windowed to a closed rectangle
//! and decimated per orbit.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Closed rectangle `[a_lo, a_hi] x [b_lo, b_hi]` in the projected axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
pub struct Window {
    pub a: [f64; 2],
    pub b: [f64; 2],
}

impl Window {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        self.a[0] <= p[0] && p[0] <= self.a[1] && self.b[0] <= p[1] && p[1] <= self.b[1]
    }
}

/// `a_lo,a_hi,b_lo,b_hi`
impl FromStr for Window {
    type Err = String;

    fn from_str(s: &str) -> Result<Window, String> {
        let v: Vec<f64> = s
            .split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|_| format!("bad window value '{}'", x.trim())))
            .collect::<Result<_, _>>()?;
        let [a0, a1, b0, b1] = v[..] else {
            return Err(format!("window needs 4 values a_lo,a_hi,b_lo,b_hi, got {}", v.len()));
        };
        if v.iter().any(|x| x.is_nan()) || a0 > a1 || b0 > b1 {
            return Err(format!("window {s} is empty or invalid"));
        }
        Ok(Window { a: [a0, a1], b: [b0, b1] })
    }
}

/// Maximal runs of consecutive points inside the window.
pub fn segments(points: &[[f64; 2]], window: Option<&Window>) -> Vec<Vec<[f64; 2]>> {
    let Some(w) = window else {
        return if points.is_empty() { vec![] } else { vec![points.to_vec()] };
    };
    let mut out = Vec::new();
    let mut cur: Vec<[f64; 2]> = Vec::new();
    for &p in points {
        if w.contains(p) {
            cur.push(p);
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Points kept from a segment of length `len` at stride `s`: every `s`-th
/// point plus the last.
fn kept(len: usize, s: usize) -> usize {
    if len <= 1 {
        len
    } else {
        (len - 1).div_ceil(s) + 1
    }
}

fn thin(seg: &[[f64; 2]], s: usize) -> Vec<[f64; 2]> {
    let mut out: Vec<[f64; 2]> = seg.iter().step_by(s).copied().collect();
    if (seg.len() - 1) % s != 0 {
        out.push(seg[seg.len() - 1]);
    }
    out
}

/// Uniform-stride thinning of one orbit to at most `max_points`, always
/// keeping both ends of every segment. If the segment ends alone exceed the
/// budget, only the ends are returned.
pub fn decimate(segs: Vec<Vec<[f64; 2]>>, max_points: usize) -> Vec<Vec<[f64; 2]>> {
    let total: usize = segs.iter().map(Vec::len).sum();
    if total <= max_points {
        return segs;
    }
    let longest = segs.iter().map(Vec::len).max().unwrap_or(1).max(1);
    let count = |s: usize| segs.iter().map(|g| kept(g.len(), s)).sum::<usize>();
    // count is non-increasing in s; find the smallest stride that fits
    let (mut lo, mut hi) = (1, longest);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if count(mid) <= max_points {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    segs.iter().map(|g| thin(g, lo)).collect()
}
