//! Matrix exponential, norms and spectral data for small dense systems.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    /// Euclidean norm for vectors, largest singular value for matrices.
    #[default]
    Spectral,
    /// Sum of magnitudes for vectors, max column sum for matrices.
    One,
}

pub fn vector_norm(v: &[f64], norm: Norm) -> f64 {
    match norm {
        Norm::Spectral => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        Norm::One => v.iter().map(|x| x.abs()).sum(),
    }
}

pub fn matrix_norm(m: &DMatrix<f64>, norm: Norm) -> f64 {
    match norm {
        Norm::One => one_norm(m),
        Norm::Spectral => {
            if m.nrows() == 1 && m.ncols() == 1 {
                m[(0, 0)].abs()
            } else {
                m.clone()
                    .singular_values()
                    .iter()
                    .cloned()
                    .fold(0.0, f64::max)
            }
        }
    }
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA_13: f64 = 5.371920351148152;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// `exp(A t)` by scaling and squaring with a diagonal Padé approximant of
/// degree 3, 5, 7, 9 or 13 chosen from the 1-norm of `A t`.
pub fn matrix_exponential(a: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::invalid("matrix exponential needs a square matrix"));
    }
    if !t.is_finite() || a.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("matrix exponential of non-finite input"));
    }
    if n == 1 {
        let v = (a[(0, 0)] * t).exp();
        if !v.is_finite() {
            return Err(Error::Overflow(format!("exp({}) overflows", a[(0, 0)] * t)));
        }
        return Ok(DMatrix::from_element(1, 1, v));
    }
    let at = a * t;
    let norm = one_norm(&at);
    let id = DMatrix::<f64>::identity(n, n);
    if norm == 0.0 {
        return Ok(id);
    }
    for (m, theta) in THETA {
        if norm <= theta {
            return pade_low(&at, m, &id);
        }
    }
    let s = (norm / THETA_13).log2().ceil().max(0.0);
    if s > 1000.0 {
        return Err(Error::Overflow(format!("norm of A t is {:e}", norm)));
    }
    let s = s as i32;
    let scaled = &at * 2f64.powi(-s);
    let mut r = pade13(&scaled, &id)?;
    for _ in 0..s {
        r = &r * &r;
    }
    if r.iter().any(|x| !x.is_finite()) {
        return Err(Error::Overflow(format!(
            "exp(A t) overflows (norm of A t is {:e})",
            norm
        )));
    }
    Ok(r)
}

fn pade_low(a: &DMatrix<f64>, m: usize, id: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let b: &[f64] = match m {
        3 => &B3,
        5 => &B5,
        7 => &B7,
        _ => &B9,
    };
    let a2 = a * a;
    let mut powers = vec![id.clone(), a2.clone()];
    while powers.len() * 2 <= m {
        let next = powers.last().unwrap() * &a2;
        powers.push(next);
    }
    let n = a.nrows();
    let mut u = DMatrix::<f64>::zeros(n, n);
    let mut v = DMatrix::<f64>::zeros(n, n);
    for (k, p) in powers.iter().enumerate() {
        u += p * b[2 * k + 1];
        v += p * b[2 * k];
    }
    let u = a * u;
    solve_pade(&u, &v)
}

fn pade13(a: &DMatrix<f64>, id: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let b = &B13;
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
    let u = a * (inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + id * b[1]);
    let inner_v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]);
    let v = inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + id * b[0];
    solve_pade(&u, &v)
}

fn solve_pade(u: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = v + u;
    let q = v - u;
    q.lu()
        .solve(&p)
        .ok_or_else(|| Error::Convergence("singular Padé denominator".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralData {
    /// Eigenvalues as (re, im), sorted by decreasing real part then imaginary part.
    pub eigenvalues: Vec<(f64, f64)>,
    /// Spectral abscissa: the largest real part.
    pub abscissa: f64,
    /// Largest multiplicity among eigenvalues on the line Re = abscissa,
    /// clustering eigenvalues closer than 1e-6. It bounds the Jordan block
    /// size, so `(1 + t)^(n-1) e^(abscissa t)` bounds the growth of `exp(A t)`.
    pub dominant_multiplicity: usize,
}

const CLUSTER: f64 = 1e-6;

pub fn spectral_data(a: &DMatrix<f64>) -> Result<SpectralData> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(Error::invalid("spectral data needs a non-empty square matrix"));
    }
    let schur = nalgebra::linalg::Schur::try_new(a.clone(), 1e-15, 100_000)
        .ok_or_else(|| Error::Convergence("QR iteration for eigenvalues did not converge".into()))?;
    let mut eig: Vec<(f64, f64)> = schur
        .complex_eigenvalues()
        .iter()
        .map(|z| (z.re, z.im))
        .collect();
    eig.sort_by(|x, y| y.0.total_cmp(&x.0).then(y.1.total_cmp(&x.1)));
    let abscissa = eig.iter().map(|e| e.0).fold(f64::NEG_INFINITY, f64::max);
    let tol = CLUSTER * abscissa.abs().max(1.0);
    let dominant: Vec<(f64, f64)> = eig
        .iter()
        .cloned()
        .filter(|e| (e.0 - abscissa).abs() <= tol)
        .collect();
    let dominant_multiplicity = dominant
        .iter()
        .map(|c| {
            dominant
                .iter()
                .filter(|e| (e.0 - c.0).hypot(e.1 - c.1) <= tol)
                .count()
        })
        .max()
        .unwrap_or(1);
    Ok(SpectralData {
        eigenvalues: eig,
        abscissa,
        dominant_multiplicity,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeCheck {
    /// Constant fitted on the first half of the horizon.
    pub c_fit: f64,
    /// Largest envelope ratio seen on the second half.
    pub tail_ratio: f64,
    pub holds: bool,
}

/// Checks `|exp(A t)| <= C (1 + t)^(n-1) e^(lambda t)` on `[0, horizon]`,
/// fitting `C` on the first half and testing it on the second.
pub fn growth_envelope(a: &DMatrix<f64>, horizon: f64, samples: usize, norm: Norm) -> Result<EnvelopeCheck> {
    let sd = spectral_data(a)?;
    let n = sd.dominant_multiplicity as i32;
    let samples = samples.max(4);
    let mut c_fit: f64 = 0.0;
    let mut tail_ratio: f64 = 0.0;
    for k in 0..=samples {
        let t = horizon * k as f64 / samples as f64;
        let phi = matrix_exponential(a, t)?;
        let env = (1.0 + t).powi(n - 1) * (sd.abscissa * t).exp();
        let r = matrix_norm(&phi, norm) / env;
        if 2 * k <= samples {
            c_fit = c_fit.max(r);
        } else {
            tail_ratio = tail_ratio.max(r);
        }
    }
    Ok(EnvelopeCheck {
        c_fit,
        tail_ratio,
        holds: tail_ratio <= c_fit * (1.0 + 1e-6),
    })
}

pub fn mat_vec(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    let d = m.nrows();
    let mut out = vec![0.0; d];
    for (i, o) in out.iter_mut().enumerate() {
        let mut s = 0.0;
        for (j, x) in v.iter().enumerate() {
            s += m[(i, j)] * x;
        }
        *o = s;
    }
    out
}

pub fn dvec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> DMatrix<f64> {
        let n = rows.len();
        DMatrix::from_fn(n, rows[0].len(), |i, j| rows[i][j])
    }

    #[test]
    fn nilpotent_exponential() {
        let e = matrix_exponential(&m(&[&[0.0, 1.0], &[0.0, 0.0]]), 3.0).unwrap();
        assert_eq!(e, m(&[&[1.0, 3.0], &[0.0, 1.0]]));
    }

    #[test]
    fn rotation_exponential_all_degrees() {
        for t in [1e-3, 0.1, 0.5, 1.5, 4.0, 40.0] {
            let e = matrix_exponential(&m(&[&[0.0, 1.0], &[-1.0, 0.0]]), t).unwrap();
            let want = m(&[&[t.cos(), t.sin()], &[-t.sin(), t.cos()]]);
            assert!((e - want).abs().max() < 1e-13 * t.max(1.0), "t = {}", t);
        }
    }

    #[test]
    fn overflow_is_reported() {
        let a = m(&[&[1.0, 0.0], &[0.0, 2.0]]);
        assert!(matches!(matrix_exponential(&a, 1e5), Err(Error::Overflow(_))));
        assert!(matches!(
            matrix_exponential(&m(&[&[1.0]]), 1e4),
            Err(Error::Overflow(_))
        ));
    }

    #[test]
    fn spectral_examples() {
        let rot = spectral_data(&m(&[&[0.0, 1.0], &[-1.0, 0.0]])).unwrap();
        assert!(rot.abscissa.abs() < 1e-12);
        assert_eq!(rot.dominant_multiplicity, 1);
        assert!((rot.eigenvalues[0].1.abs() - 1.0).abs() < 1e-12);

        let jordan = spectral_data(&m(&[&[1.0, 1.0], &[0.0, 1.0]])).unwrap();
        assert!((jordan.abscissa - 1.0).abs() < 1e-12);
        assert_eq!(jordan.dominant_multiplicity, 2);

        let neg = spectral_data(&(-DMatrix::<f64>::identity(3, 3))).unwrap();
        assert_eq!(neg.abscissa, -1.0);
        assert_eq!(neg.dominant_multiplicity, 3);
    }

    #[test]
    fn envelope_for_jordan_block() {
        let c = growth_envelope(&m(&[&[1.0, 1.0], &[0.0, 1.0]]), 20.0, 200, Norm::Spectral).unwrap();
        assert!(c.holds);
    }
}
