//! Singular values, nuclear norm and representation normalization.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Relative cutoff below which singular values are treated as exact zeros.
pub const SINGULAR_CUTOFF: f64 = 1e-12;

const MAX_SWEEPS: usize = 100;

/// Singular values of a matrix in descending order, via one-sided Jacobi
/// (Hestenes) rotations on the narrower orientation of the matrix.
pub fn singular_values(m: &Tensor) -> Result<Vec<f64>> {
    let (r, c) = m.dims2()?;
    // Orthogonalize columns of an (rows × cols) matrix with rows >= cols.
    let work = if c > r { m.transpose()? } else { m.clone() };
    let (rows, cols) = work.dims2()?;
    if cols == 0 {
        return Ok(Vec::new());
    }
    // column-major copy
    let mut a: Vec<Vec<f64>> = (0..cols).map(|j| (0..rows).map(|i| work.at(i, j)).collect()).collect();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let alpha: f64 = a[p].iter().map(|v| v * v).sum();
                let beta: f64 = a[q].iter().map(|v| v * v).sum();
                let gamma: f64 = a[p].iter().zip(&a[q]).map(|(x, y)| x * y).sum();
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                let (left, right) = a.split_at_mut(q);
                for (x, y) in left[p].iter_mut().zip(right[0].iter_mut()) {
                    let (xp, yq) = (*x, *y);
                    *x = cs * xp - sn * yq;
                    *y = sn * xp + cs * yq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sv: Vec<f64> = a
        .iter()
        .map(|col| col.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    let cutoff = SINGULAR_CUTOFF * sv[0];
    for s in &mut sv {
        if *s < cutoff {
            *s = 0.0;
        }
    }
    Ok(sv)
}

/// Sum of singular values.
pub fn svd_nuclear_norm(m: &Tensor) -> Result<f64> {
    if m.rank() != 2 {
        return Err(Error::Shape(format!(
            "nuclear norm needs a 2-D matrix, got shape {:?}",
            m.shape()
        )));
    }
    Ok(singular_values(m)?.iter().sum())
}

/// Row-compresses a `p × n` matrix with `p > n` to its `n × n` triangular QR
/// factor `R` (Householder), so `XᵀX = RᵀR`; narrower matrices come back unchanged.
/// Products `X Yᵀ` then keep their singular values under `X, Y → R_X, R_Y`.
pub fn compress_rows(m: &Tensor) -> Result<Tensor> {
    let (p, n) = m.dims2()?;
    if p <= n {
        return Ok(m.clone());
    }
    // column-major working copy
    let mut a: Vec<Vec<f64>> = (0..n).map(|j| (0..p).map(|i| m.at(i, j)).collect()).collect();
    for k in 0..n {
        let norm = a[k][k..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if a[k][k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = a[k][k..].to_vec();
        v[0] -= alpha;
        let vv: f64 = v.iter().map(|x| x * x).sum();
        if vv == 0.0 {
            continue;
        }
        for col in a.iter_mut().skip(k) {
            let dot: f64 = v.iter().zip(&col[k..]).map(|(x, y)| x * y).sum();
            let f = 2.0 * dot / vv;
            col[k..].iter_mut().zip(&v).for_each(|(c, x)| *c -= f * x);
        }
    }
    let mut r = vec![0.0; n * n];
    for (j, col) in a.iter().enumerate() {
        for i in 0..=j {
            r[i * n + j] = col[i];
        }
    }
    Tensor::matrix(n, n, r)
}

/// Centers every row (feature) of a `features × examples` matrix to zero mean and
/// scales the whole matrix to unit Frobenius norm.
pub fn center_and_normalize(a: &Tensor) -> Result<Tensor> {
    let (p, n) = a.dims2()?;
    if n < 2 {
        return Err(Error::InsufficientData(format!("need at least 2 examples, got {n}")));
    }
    let mut out = a.data().to_vec();
    for row in out.chunks_mut(n) {
        let mean = row.iter().sum::<f64>() / n as f64;
        row.iter_mut().for_each(|v| *v -= mean);
    }
    let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = a.data().iter().map(|v| v.abs()).fold(0.0, f64::max);
    // residue of rounding when centering constant rows is ~1e-16 relative
    if norm == 0.0 || norm <= 1e-12 * scale * ((p * n) as f64).sqrt() {
        return Err(Error::Degenerate(
            "matrix is constant along every feature after centering".into(),
        ));
    }
    out.iter_mut().for_each(|v| *v /= norm);
    Tensor::new(vec![p, n], out)
}
