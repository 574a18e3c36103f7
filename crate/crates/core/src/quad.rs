//! Adaptive Gauss–Kronrod (10/21) quadrature with global subdivision.
//!
//! Used for every one-dimensional integral in the crate: stationary
//! covariances, inhomogeneous variances, iterated-OU limit covariances and
//! CF inversion oracles. Vector-valued integrands share one subdivision tree.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::{Error, Result};

const XGK: [f64; 11] = [
    0.995_657_163_025_808_1,
    0.973_906_528_517_171_7,
    0.930_157_491_355_708_2,
    0.865_063_366_688_984_5,
    0.780_817_726_586_416_9,
    0.679_409_568_299_024_4,
    0.562_757_134_668_604_7,
    0.433_395_394_129_247_2,
    0.294_392_862_701_460_2,
    0.148_874_338_981_631_2,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874,
    0.032_558_162_307_964_73,
    0.054_755_896_574_352,
    0.075_039_674_810_919_95,
    0.093_125_454_583_697_6,
    0.109_387_158_802_297_64,
    0.123_491_976_262_065_85,
    0.134_709_217_311_473_33,
    0.142_775_938_577_060_08,
    0.147_739_104_901_338_49,
    0.149_445_554_002_916_9,
];

// Gauss weights for XGK[1], XGK[3], .., XGK[9].
const WG: [f64; 5] = [
    0.066_671_344_308_688_14,
    0.149_451_349_150_580_6,
    0.219_086_362_515_982_04,
    0.269_266_719_309_996_35,
    0.295_524_224_714_752_87,
];

const MAX_INTERVALS: usize = 4000;

#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

struct Interval {
    a: f64,
    b: f64,
    value: Vec<f64>,
    error: f64,
}

impl PartialEq for Interval {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Interval {}
impl PartialOrd for Interval {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Interval {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk21<F>(f: &F, dim: usize, a: f64, b: f64, buf: &mut [f64]) -> (Vec<f64>, f64)
where
    F: Fn(f64, &mut [f64]),
{
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut kron = vec![0.0; dim];
    let mut gauss = vec![0.0; dim];
    f(c, buf);
    for k in 0..dim {
        kron[k] = WGK[10] * buf[k];
    }
    for (i, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(10).enumerate() {
        let dx = h * x;
        for s in [-1.0, 1.0] {
            f(c + s * dx, buf);
            for k in 0..dim {
                kron[k] += w * buf[k];
                if i % 2 == 1 {
                    gauss[k] += WG[i / 2] * buf[k];
                }
            }
        }
    }
    let mut err = 0.0_f64;
    for k in 0..dim {
        kron[k] *= h;
        gauss[k] *= h;
        err = err.max((kron[k] - gauss[k]).abs());
    }
    (kron, err)
}

/// Integrates a vector-valued function over `[a, b]` until the summed
/// error estimate is below `max(abs_tol, rel_tol·‖I‖∞)`.
pub fn integrate_vec<F>(f: F, dim: usize, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<(Vec<f64>, f64)>
where
    F: Fn(f64, &mut [f64]),
{
    if a == b {
        return Ok((vec![0.0; dim], 0.0));
    }
    let mut buf = vec![0.0; dim];
    let mut heap = BinaryHeap::new();
    let (value, error) = gk21(&f, dim, a, b, &mut buf);
    let mut total = value.clone();
    let mut total_err = error;
    heap.push(Interval { a, b, value, error });
    while heap.len() < MAX_INTERVALS {
        let scale = total.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if total_err <= abs_tol.max(rel_tol * scale) {
            return Ok((total, total_err));
        }
        let worst = heap.pop().expect("non-empty heap");
        let mid = 0.5 * (worst.a + worst.b);
        let (lv, le) = gk21(&f, dim, worst.a, mid, &mut buf);
        let (rv, re) = gk21(&f, dim, mid, worst.b, &mut buf);
        for k in 0..dim {
            total[k] += lv[k] + rv[k] - worst.value[k];
        }
        total_err += le + re - worst.error;
        heap.push(Interval { a: worst.a, b: mid, value: lv, error: le });
        heap.push(Interval { a: mid, b: worst.b, value: rv, error: re });
    }
    // re-sum to shed accumulated rounding in the running totals
    let mut total = vec![0.0; dim];
    let mut total_err = 0.0;
    for iv in heap.iter() {
        for (t, v) in total.iter_mut().zip(&iv.value) {
            *t += v;
        }
        total_err += iv.error;
    }
    let scale = total.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if total_err <= abs_tol.max(rel_tol * scale) {
        Ok((total, total_err))
    } else {
        Err(Error::QuadratureFailure { tol: abs_tol.max(rel_tol * scale), estimate: total_err })
    }
}

/// Integrates `f` over `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<QuadResult> {
    let count = std::cell::Cell::new(0usize);
    let (v, e) = integrate_vec(
        |x, out| {
            count.set(count.get() + 1);
            out[0] = f(x)
        },
        1,
        a,
        b,
        abs_tol,
        rel_tol,
    )?;
    Ok(QuadResult { value: v[0], error: e, evaluations: count.get() })
}

/// Integrates `f` over `[a, ∞)` through the map `x = a + u/(1-u)`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64, abs_tol: f64, rel_tol: f64) -> Result<QuadResult> {
    integrate(
        |u| {
            let one_minus = 1.0 - u;
            let x = a + u / one_minus;
            let y = f(x) / (one_minus * one_minus);
            if y.is_finite() {
                y
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        abs_tol,
        rel_tol,
    )
}

/// Integrates over consecutive pieces `[p0,p1], [p1,p2], ..` and sums.
pub fn integrate_pieces<F: Fn(f64) -> f64>(f: F, breaks: &[f64], abs_tol: f64, rel_tol: f64) -> Result<QuadResult> {
    let mut out = QuadResult { value: 0.0, error: 0.0, evaluations: 0 };
    let pieces = (breaks.len().max(1) - 1).max(1) as f64;
    for w in breaks.windows(2) {
        let r = integrate(&f, w[0], w[1], abs_tol / pieces, rel_tol)?;
        out.value += r.value;
        out.error += r.error;
        out.evaluations += r.evaluations;
    }
    Ok(out)
}
