use crate::error::{Error, Result};
use crate::numerics::{Graph, Tensor, Var};

pub const DEFAULT_TEMPERATURE: f64 = 0.2;
pub const BARLOW_LAMBDA: f64 = 0.0051;
pub const BARLOW_SCALE: f64 = 0.048;

fn check_temperature(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Config(format!("temperature must be > 0, got {t}")));
    }
    Ok(())
}

fn same_shape(g: &Graph, a: Var, b: Var, what: &str) -> Result<(usize, usize)> {
    let da = g.value(a).dims2()?;
    let db = g.value(b).dims2()?;
    if da != db {
        return Err(Error::Shape(format!("{what}: {da:?} vs {db:?}")));
    }
    Ok(da)
}

/// Mean over rows of the cosine similarity between matching rows of `a` and `b`.
pub fn mean_row_cosine(g: &mut Graph, a: Var, b: Var) -> Result<Var> {
    let (n, _) = same_shape(g, a, b, "cosine")?;
    let an = g.normalize_rows(a)?;
    let bn = g.normalize_rows(b)?;
    let prod = g.mul(an, bn)?;
    let s = g.sum(prod)?;
    g.scale(s, 1.0 / n as f64)
}

/// Symmetric NT-Xent over `2N` embeddings: every anchor scores its positive
/// against the other `2N − 2` embeddings with cosine similarity over `temperature`.
pub fn ntxent_loss(g: &mut Graph, z1: Var, z2: Var, temperature: f64) -> Result<Var> {
    check_temperature(temperature)?;
    let (n, _) = same_shape(g, z1, z2, "ntxent")?;
    if n < 2 {
        return Err(Error::Shape(format!("ntxent needs N >= 2, got {n}")));
    }
    let z = g.concat_rows(z1, z2)?;
    let z = g.normalize_rows(z)?;
    let sim = g.matmul_ext(z, false, z, true)?;
    let sim = g.scale(sim, 1.0 / temperature)?;
    let logits = g.drop_diagonal(sim)?;
    // dropping the diagonal shifts columns right of it down by one
    let targets: Vec<usize> = (0..2 * n).map(|i| if i < n { i + n - 1 } else { i - n }).collect();
    g.cross_entropy(logits, &targets)
}

/// InfoNCE of queries against their keys (positives) and a bank of negatives.
///
/// `keys` are constants (the key encoder is not trained by this loss); they and
/// the `queue` rows are L2-normalized here, so the caller may pass raw vectors.
pub fn infonce_loss(g: &mut Graph, query: Var, keys: &Tensor, queue: &Tensor, temperature: f64) -> Result<Var> {
    check_temperature(temperature)?;
    let (n, d) = g.value(query).dims2()?;
    if keys.dims2()? != (n, d) {
        return Err(Error::Shape(format!("keys {:?} vs queries {n}x{d}", keys.shape())));
    }
    let (_, qd) = queue.dims2()?;
    if qd != d {
        return Err(Error::Shape(format!("queue dim {qd} vs embedding dim {d}")));
    }
    let q = g.normalize_rows(query)?;
    let k = g.constant(keys.clone());
    let k = g.normalize_rows(k)?;
    let pos = g.mul(q, k)?;
    let pos = g.sum_rows(pos)?;
    let bank = g.constant(queue.clone());
    let neg = g.matmul_ext(q, false, bank, true)?;
    let logits = g.concat_cols(pos, neg)?;
    let logits = g.scale(logits, 1.0 / temperature)?;
    g.cross_entropy(logits, &vec![0; n])
}

/// `2 − (mean cos(p1, t2) + mean cos(p2, t1))`; targets are detached.
pub fn byol_loss(g: &mut Graph, pred1: Var, target2: Var, pred2: Var, target1: Var) -> Result<Var> {
    let t2 = g.detach(target2);
    let t1 = g.detach(target1);
    let c12 = mean_row_cosine(g, pred1, t2)?;
    let c21 = mean_row_cosine(g, pred2, t1)?;
    let s = g.add(c12, c21)?;
    let neg = g.scale(s, -1.0)?;
    g.add_scalar(neg, 2.0)
}

/// `−½(mean cos(p1, z2) + mean cos(p2, z1))`; projections are detached.
pub fn simsiam_loss(g: &mut Graph, pred1: Var, proj2: Var, pred2: Var, proj1: Var) -> Result<Var> {
    let z2 = g.detach(proj2);
    let z1 = g.detach(proj1);
    let c12 = mean_row_cosine(g, pred1, z2)?;
    let c21 = mean_row_cosine(g, pred2, z1)?;
    let s = g.add(c12, c21)?;
    g.scale(s, -0.5)
}

/// Barlow Twins redundancy reduction on batch-standardized embeddings:
/// `scale · [Σ_i (1 − C_ii)² + λ Σ_{i≠j} C_ij²]` with `C = z1ᵀ z2 / N`.
///
/// `eps = 0` turns a zero-variance dimension into a degenerate-batch error.
pub fn barlow_twins_loss(g: &mut Graph, z1: Var, z2: Var, lambda: f64, scale: f64, eps: f64) -> Result<Var> {
    let (n, d) = same_shape(g, z1, z2, "barlow twins")?;
    if n < 2 {
        return Err(Error::Shape(format!("barlow twins needs N >= 2, got {n}")));
    }
    let a = g.standardize_cols(z1, eps)?;
    let b = g.standardize_cols(z2, eps)?;
    let c = g.matmul_ext(a, true, b, false)?;
    let c = g.scale(c, 1.0 / n as f64)?;
    // Σ w∘C² − 2 tr C + d, with w = 1 on the diagonal and λ elsewhere
    let mut w = vec![lambda; d * d];
    for i in 0..d {
        w[i * d + i] = 1.0;
    }
    let w = g.constant(Tensor::matrix(d, d, w)?);
    let sq = g.mul(c, c)?;
    let weighted = g.mul(sq, w)?;
    let weighted = g.sum(weighted)?;
    let eye = g.constant(Tensor::identity(d));
    let diag = g.mul(c, eye)?;
    let trace = g.sum(diag)?;
    let trace = g.scale(trace, -2.0)?;
    let total = g.add(weighted, trace)?;
    let total = g.add_scalar(total, d as f64)?;
    g.scale(total, scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradcheck::check_gradients;
    use crate::numerics::ParamId;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn randn(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
        Tensor::matrix(r, c, (0..r * c).map(|_| StandardNormal.sample(rng)).collect()).unwrap()
    }

    fn scalar(g: &Graph, v: Var) -> f64 {
        g.value(v).item().unwrap()
    }

    #[test]
    fn ntxent_examples() {
        let u = Tensor::from_rows(&[vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]]).unwrap();
        let mut g = Graph::new();
        let a = g.constant(u.clone());
        let b = g.constant(u);
        let l = ntxent_loss(&mut g, a, b, 0.2).unwrap();
        assert!((scalar(&g, l) - 3f64.ln()).abs() < 1e-12);

        // pairs aligned, different pairs orthogonal
        let z1 = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let mut g = Graph::new();
        let a = g.constant(z1.clone());
        let b = g.constant(z1);
        let l = ntxent_loss(&mut g, a, b, 0.2).unwrap();
        let expected = (1.0 + 2.0 * (-5f64).exp()).ln();
        assert!((scalar(&g, l) - expected).abs() < 1e-12);
    }

    #[test]
    fn infonce_example_and_shape_error() {
        let q = Tensor::from_rows(&[vec![1.0, 0.0, 0.0]]).unwrap();
        let queue = Tensor::from_rows(&[vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![0.0, -1.0, 0.0]]).unwrap();
        let mut g = Graph::new();
        let qv = g.constant(q.clone());
        let l = infonce_loss(&mut g, qv, &q, &queue, 0.2).unwrap();
        assert!((scalar(&g, l) - (1.0 + 3.0 * (-5f64).exp()).ln()).abs() < 1e-12);
        let bad = Tensor::zeros(&[3, 2]);
        assert!(matches!(infonce_loss(&mut g, qv, &q, &bad, 0.2), Err(Error::Shape(_))));
    }

    #[test]
    fn byol_and_simsiam_examples() {
        let p = Tensor::from_rows(&[vec![1.0, 2.0], vec![-3.0, 1.0]]).unwrap();
        let perp = Tensor::from_rows(&[vec![-2.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let mut g = Graph::new();
        let a = g.constant(p.clone());
        let b = g.constant(perp);
        let same = byol_loss(&mut g, a, a, a, a).unwrap();
        let orth = byol_loss(&mut g, a, b, a, b).unwrap();
        assert!(scalar(&g, same).abs() < 1e-12);
        assert!((scalar(&g, orth) - 2.0).abs() < 1e-12);
        let s_same = simsiam_loss(&mut g, a, a, a, a).unwrap();
        let s_orth = simsiam_loss(&mut g, a, b, a, b).unwrap();
        assert!((scalar(&g, s_same) + 1.0).abs() < 1e-12);
        assert!(scalar(&g, s_orth).abs() < 1e-12);
    }

    #[test]
    fn barlow_examples() {
        let z = Tensor::matrix(4, 1, vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let neg = z.map(|v| -v).unwrap();
        let mut g = Graph::new();
        let a = g.constant(z.clone());
        let b = g.constant(neg);
        let same = barlow_twins_loss(&mut g, a, a, BARLOW_LAMBDA, BARLOW_SCALE, 0.0).unwrap();
        let flip = barlow_twins_loss(&mut g, a, b, BARLOW_LAMBDA, BARLOW_SCALE, 0.0).unwrap();
        assert!(scalar(&g, same).abs() < 1e-12);
        assert!((scalar(&g, flip) - 4.0 * BARLOW_SCALE).abs() < 1e-12);
        let c = g.constant(Tensor::matrix(4, 1, vec![2.0; 4]).unwrap());
        assert!(matches!(
            barlow_twins_loss(&mut g, c, a, BARLOW_LAMBDA, BARLOW_SCALE, 0.0),
            Err(Error::Degenerate(_))
        ));
        assert!(barlow_twins_loss(&mut g, c, a, BARLOW_LAMBDA, BARLOW_SCALE, 1e-8).is_ok());
    }

    #[test]
    fn barlow_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (n, d) = (6, 3);
        let z1 = randn(&mut rng, n, d);
        let z2 = randn(&mut rng, n, d);
        let std = |z: &Tensor| -> Vec<Vec<f64>> {
            (0..d)
                .map(|j| {
                    let col: Vec<f64> = (0..n).map(|i| z.at(i, j)).collect();
                    let m = col.iter().sum::<f64>() / n as f64;
                    let s = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt();
                    col.iter().map(|v| (v - m) / s).collect()
                })
                .collect()
        };
        let (a, b) = (std(&z1), std(&z2));
        let mut expected = 0.0;
        for i in 0..d {
            for j in 0..d {
                let c = (0..n).map(|k| a[i][k] * b[j][k]).sum::<f64>() / n as f64;
                expected += if i == j { (1.0 - c).powi(2) } else { 0.3 * c * c };
            }
        }
        let mut g = Graph::new();
        let x = g.constant(z1);
        let y = g.constant(z2);
        let l = barlow_twins_loss(&mut g, x, y, 0.3, 1.0, 0.0).unwrap();
        assert!((scalar(&g, l) - expected).abs() < 1e-12);
    }

    #[test]
    fn stop_gradient_branches_get_exact_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ts: Vec<Tensor> = (0..4).map(|_| randn(&mut rng, 8, 16)).collect();
        for byol in [true, false] {
            let mut g = Graph::new();
            let v: Vec<Var> = ts
                .iter()
                .enumerate()
                .map(|(i, t)| g.param(ParamId(i), t.clone()))
                .collect();
            let l = if byol {
                byol_loss(&mut g, v[0], v[1], v[2], v[3]).unwrap()
            } else {
                simsiam_loss(&mut g, v[0], v[1], v[2], v[3]).unwrap()
            };
            let grads = g.backward(l).unwrap();
            assert!(grads[&ParamId(1)].data().iter().all(|&x| x == 0.0));
            assert!(grads[&ParamId(3)].data().iter().all(|&x| x == 0.0));
            assert!(grads[&ParamId(0)].frobenius_norm() > 0.0);
        }
    }

    #[test]
    fn all_losses_pass_finite_differences() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let (n, d) = (8, 16);
            let a = randn(&mut rng, n, d);
            let b = randn(&mut rng, n, d);
            let c = randn(&mut rng, n, d);
            let e = randn(&mut rng, n, d);
            let keys = randn(&mut rng, n, d);
            let queue = randn(&mut rng, 32, d);
            check_gradients(&[a.clone(), b.clone()], |g, v| ntxent_loss(g, v[0], v[1], 0.2)).unwrap();
            check_gradients(std::slice::from_ref(&a), |g, v| {
                infonce_loss(g, v[0], &keys, &queue, 0.2)
            })
            .unwrap();
            // targets are stop-gradient constants, so only the predictions are perturbed
            check_gradients(&[a.clone(), c.clone()], |g, v| {
                let t2 = g.constant(b.clone());
                let t1 = g.constant(e.clone());
                byol_loss(g, v[0], t2, v[1], t1)
            })
            .unwrap();
            check_gradients(&[a.clone(), c.clone()], |g, v| {
                let z2 = g.constant(b.clone());
                let z1 = g.constant(e.clone());
                simsiam_loss(g, v[0], z2, v[1], z1)
            })
            .unwrap();
            check_gradients(&[a, b], |g, v| {
                barlow_twins_loss(g, v[0], v[1], BARLOW_LAMBDA, BARLOW_SCALE, 0.0)
            })
            .unwrap();
        }
    }

    #[test]
    fn scale_invariances() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (n, d) = (8, 16);
        let a = randn(&mut rng, n, d);
        let b = randn(&mut rng, n, d);
        let keys = randn(&mut rng, n, d);
        let queue = randn(&mut rng, 20, d);
        let eval = |f: &dyn Fn(&mut Graph, Var, Var) -> Result<Var>, x: &Tensor, y: &Tensor| {
            let mut g = Graph::new();
            let (xv, yv) = (g.constant(x.clone()), g.constant(y.clone()));
            let l = f(&mut g, xv, yv).unwrap();
            g.value(l).item().unwrap()
        };
        let rowscale = |t: &Tensor, seed: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let s: Vec<f64> = (0..t.rows()).map(|_| rand::Rng::gen_range(&mut r, 0.1..10.0)).collect();
            Tensor::matrix(
                t.rows(),
                t.cols(),
                t.data().iter().enumerate().map(|(i, v)| v * s[i / t.cols()]).collect(),
            )
            .unwrap()
        };
        let nt = |g: &mut Graph, x: Var, y: Var| ntxent_loss(g, x, y, 0.2);
        let mo = |g: &mut Graph, x: Var, _y: Var| infonce_loss(g, x, &keys, &queue, 0.2);
        let by = |g: &mut Graph, x: Var, y: Var| byol_loss(g, x, y, y, x);
        let ss = |g: &mut Graph, x: Var, y: Var| simsiam_loss(g, x, y, y, x);
        for f in [&nt as &dyn Fn(&mut Graph, Var, Var) -> Result<Var>, &mo, &by, &ss] {
            let base = eval(f, &a, &b);
            let scaled = eval(f, &rowscale(&a, 1), &rowscale(&b, 2));
            assert!((base - scaled).abs() < 1e-10, "{base} vs {scaled}");
        }
        // per-dimension affine maps are absorbed by the batch standardization
        let affine = |t: &Tensor, seed: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let m: Vec<(f64, f64)> = (0..t.cols())
                .map(|_| {
                    (
                        rand::Rng::gen_range(&mut r, 0.2..5.0),
                        rand::Rng::gen_range(&mut r, -3.0..3.0),
                    )
                })
                .collect();
            Tensor::matrix(
                t.rows(),
                t.cols(),
                t.data()
                    .iter()
                    .enumerate()
                    .map(|(i, v)| m[i % t.cols()].0 * v + m[i % t.cols()].1)
                    .collect(),
            )
            .unwrap()
        };
        let bt = |g: &mut Graph, x: Var, y: Var| barlow_twins_loss(g, x, y, BARLOW_LAMBDA, BARLOW_SCALE, 0.0);
        let base = eval(&bt, &a, &b);
        let moved = eval(&bt, &affine(&a, 3), &affine(&b, 4));
        assert!((base - moved).abs() < 1e-8);
    }
}
