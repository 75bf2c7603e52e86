//! Fixed-step fifth-order Runge-Kutta with the Cash-Karp tableau.
//!
//! ```text
//!  c  |  a
//!  0  |
//! 1/5 | 1/5
//! 3/10| 3/40        9/40
//! 3/5 | 3/10       -9/10     6/5
//!  1  | -11/54      5/2     -70/27       35/27
//! 7/8 | 1631/55296  175/512  575/13824   44275/110592  253/4096
//! ----+----------------------------------------------------------------
//!  b  | 37/378      0        250/621     125/594       0         512/1771
//! ```
//!
//! The embedded fourth-order weights are not used: steps are fixed.
//! The C driver in [`super::plugin`] repeats these constants and the
//! arithmetic order of [`Rk5::step`] exactly.

use crate::sysdsl::{DslError, SystemDef};

pub(crate) const C2: f64 = 1.0 / 5.0;
pub(crate) const C3: f64 = 3.0 / 10.0;
pub(crate) const C4: f64 = 3.0 / 5.0;
pub(crate) const C5: f64 = 1.0;
pub(crate) const C6: f64 = 7.0 / 8.0;

pub(crate) const A21: f64 = 1.0 / 5.0;
pub(crate) const A31: f64 = 3.0 / 40.0;
pub(crate) const A32: f64 = 9.0 / 40.0;
pub(crate) const A41: f64 = 3.0 / 10.0;
pub(crate) const A42: f64 = -9.0 / 10.0;
pub(crate) const A43: f64 = 6.0 / 5.0;
pub(crate) const A51: f64 = -11.0 / 54.0;
pub(crate) const A52: f64 = 5.0 / 2.0;
pub(crate) const A53: f64 = -70.0 / 27.0;
pub(crate) const A54: f64 = 35.0 / 27.0;
pub(crate) const A61: f64 = 1631.0 / 55296.0;
pub(crate) const A62: f64 = 175.0 / 512.0;
pub(crate) const A63: f64 = 575.0 / 13824.0;
pub(crate) const A64: f64 = 44275.0 / 110592.0;
pub(crate) const A65: f64 = 253.0 / 4096.0;

pub(crate) const B1: f64 = 37.0 / 378.0;
pub(crate) const B3: f64 = 250.0 / 621.0;
pub(crate) const B4: f64 = 125.0 / 594.0;
pub(crate) const B6: f64 = 512.0 / 1771.0;

/// Scratch space for one integration; reuse it across steps.
#[derive(Debug, Clone)]
pub struct Rk5 {
    k: [Vec<f64>; 6],
    tmp: Vec<f64>,
}

impl Rk5 {
    pub fn new(dim: usize) -> Rk5 {
        Rk5 { k: std::array::from_fn(|_| vec![0.0; dim]), tmp: vec![0.0; dim] }
    }

    /// Advances `x` from `t` by `h` into `out`. On error `out` is unspecified.
    pub fn step(&mut self, sys: &SystemDef, t: f64, x: &[f64], h: f64, out: &mut [f64]) -> Result<(), DslError> {
        let n = x.len();
        let [k1, k2, k3, k4, k5, k6] = &mut self.k;
        let tmp = &mut self.tmp;

        sys.eval_rhs_into(t, x, k1)?;
        for j in 0..n {
            tmp[j] = x[j] + h * (A21 * k1[j]);
        }
        sys.eval_rhs_into(t + C2 * h, tmp, k2)?;
        for j in 0..n {
            tmp[j] = x[j] + h * (A31 * k1[j] + A32 * k2[j]);
        }
        sys.eval_rhs_into(t + C3 * h, tmp, k3)?;
        for j in 0..n {
            tmp[j] = x[j] + h * (A41 * k1[j] + A42 * k2[j] + A43 * k3[j]);
        }
        sys.eval_rhs_into(t + C4 * h, tmp, k4)?;
        for j in 0..n {
            tmp[j] = x[j] + h * (A51 * k1[j] + A52 * k2[j] + A53 * k3[j] + A54 * k4[j]);
        }
        sys.eval_rhs_into(t + C5 * h, tmp, k5)?;
        for j in 0..n {
            tmp[j] = x[j] + h * (A61 * k1[j] + A62 * k2[j] + A63 * k3[j] + A64 * k4[j] + A65 * k5[j]);
        }
        sys.eval_rhs_into(t + C6 * h, tmp, k6)?;
        for j in 0..n {
            out[j] = x[j] + h * (B1 * k1[j] + B3 * k3[j] + B4 * k4[j] + B6 * k6[j]);
        }
        Ok(())
    }
}

/// One step of the method from `(t, x)` with step `h`.
pub fn rk5_step(sys: &SystemDef, t: f64, x: &[f64], h: f64) -> Result<Vec<f64>, DslError> {
    if x.len() != sys.dim() {
        return Err(DslError::DimensionMismatch { expected: sys.dim(), got: x.len() });
    }
    let mut out = vec![0.0; x.len()];
    Rk5::new(x.len()).step(sys, t, x, h, &mut out)?;
    Ok(out)
}
