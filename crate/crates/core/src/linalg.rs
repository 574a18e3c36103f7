//! Dense linear-algebra helpers: the matrix exponential, matrix parsing,
//! symmetric square roots and the continuous Lyapunov equation.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::{Error, Result};

const THETA: [(usize, f64); 4] = [
    (3, 1.495_585_217_958_292e-2),
    (5, 2.539_398_330_063_23e-1),
    (7, 9.504_178_996_162_932e-1),
    (9, 2.097_847_961_257_068),
];
const THETA_13: f64 = 5.371_920_351_148_152;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [17_297_280.0, 8_648_640.0, 1_995_840.0, 277_200.0, 25_200.0, 1512.0, 56.0, 1.0];
const B9: [f64; 10] = [
    17_643_225_600.0,
    8_821_612_800.0,
    2_075_673_600.0,
    302_702_400.0,
    30_270_240.0,
    2_162_160.0,
    110_880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

fn pade_low(a: &DMatrix<f64>, b: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let a2 = a * a;
    let mut odd = DMatrix::identity(n, n) * b[1];
    let mut even = DMatrix::identity(n, n) * b[0];
    let mut power = DMatrix::identity(n, n);
    for k in (2..b.len()).step_by(2) {
        power = &power * &a2;
        even += &power * b[k];
        if k + 1 < b.len() {
            odd += &power * b[k + 1];
        }
    }
    (a * odd, even)
}

fn pade13(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * B13[13] + &a4 * B13[11] + &a2 * B13[9];
    let u = a * (&a6 * inner_u + &a6 * B13[7] + &a4 * B13[5] + &a2 * B13[3] + &id * B13[1]);
    let inner_v = &a6 * B13[12] + &a4 * B13[10] + &a2 * B13[8];
    let v = &a6 * inner_v + &a6 * B13[6] + &a4 * B13[4] + &a2 * B13[2] + &id * B13[0];
    (u, v)
}

/// Matrix exponential by scaling and squaring with a diagonal Padé
/// approximant of degree 3, 5, 7, 9 or 13 (Higham 2005 selection).
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    assert!(a.is_square(), "expm requires a square matrix");
    let n = a.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    if n == 1 {
        return DMatrix::from_element(1, 1, a[(0, 0)].exp());
    }
    let norm = norm1(a);
    for (m, theta) in THETA {
        if norm <= theta {
            let b: &[f64] = match m {
                3 => &B3,
                5 => &B5,
                7 => &B7,
                _ => &B9,
            };
            let (u, v) = pade_low(a, b);
            return solve_pade(&u, &v);
        }
    }
    let s = if norm > THETA_13 { (norm / THETA_13).log2().ceil().max(0.0) as i32 } else { 0 };
    let scaled = a * 2f64.powi(-s);
    let (u, v) = pade13(&scaled);
    let mut r = solve_pade(&u, &v);
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

fn solve_pade(u: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    let p = v + u;
    let q = v - u;
    q.lu().solve(&p).expect("Padé denominator is nonsingular for admissible norms")
}

/// `e^{-Λt}`.
pub fn expm_neg(lambda: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    expm(&(lambda * (-t)))
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::InvalidMatrix("empty matrix".into()));
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::InvalidMatrix("ragged rows".into()));
    }
    Ok(DMatrix::from_fn(n, cols, |i, j| rows[i][j]))
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Parses a row-major CSV matrix. Blank lines and `#` comments are skipped.
pub fn parse_matrix_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidMatrix(format!("line {}: `{}`: {e}", lineno + 1, f.trim())))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    from_rows(&rows)
}

/// Spectral norm (largest singular value).
pub fn norm2(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().svd(false, false).singular_values.max()
}

/// Principal square root of a symmetric positive semidefinite matrix.
/// Eigenvalues below zero (rounding) are clipped.
pub fn sqrtm_psd(a: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let d = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

/// Solves `Λ Σ + Σ Λᵀ = Q` by vectorization. Unique for stable `Λ`.
pub fn solve_lyapunov(lambda: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = lambda.nrows();
    let id = DMatrix::<f64>::identity(m, m);
    // vec(ΛΣ) = (I ⊗ Λ) vec Σ, vec(ΣΛᵀ) = (Λ ⊗ I) vec Σ  (column-major vec)
    let k = id.kronecker(lambda) + lambda.kronecker(&id);
    let rhs = DVector::from_column_slice(q.as_slice());
    let sol = k.lu().solve(&rhs).ok_or_else(|| Error::InvalidMatrix("Lyapunov operator is singular".into()))?;
    let s = DMatrix::from_column_slice(m, m, sol.as_slice());
    Ok((&s + s.transpose()) * 0.5)
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}
