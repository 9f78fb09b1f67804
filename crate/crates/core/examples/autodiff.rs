//! Reverse-mode gradients of a small loss, checked against finite differences,
//! and the nuclear norm behind the Procrustes distance.

use genaug::numerics::gradcheck::check_gradients;
use genaug::numerics::{svd_nuclear_norm, Graph, Tensor};

fn main() -> genaug::Result<()> {
    let x = Tensor::matrix(3, 2, vec![0.5, -1.0, 2.0, 0.25, -0.75, 1.5])?;
    let w = Tensor::matrix(2, 2, vec![1.0, 0.3, -0.2, 0.8])?;

    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let wv = g.param(genaug::numerics::ParamId(0), w.clone());
    let h = g.matmul(xv, wv)?;
    let h = g.relu(h)?;
    let loss = g.mean(h)?;
    let grads = g.backward(loss)?;
    println!("loss {:.6}", g.value(loss).item()?);
    println!(
        "dL/dW {:?}",
        grads.get(&genaug::numerics::ParamId(0)).map(|t| t.data().to_vec())
    );

    let err = check_gradients(&[x, w], |g, v| {
        let h = g.matmul(v[0], v[1])?;
        let h = g.normalize_rows(h)?;
        g.sum(h)
    })?;
    println!("max relative finite-difference error {err:.2e}");

    let m = Tensor::matrix(2, 2, vec![3.0, 0.0, 0.0, -4.0])?;
    println!("nuclear norm {}", svd_nuclear_norm(&m)?);
    Ok(())
}
