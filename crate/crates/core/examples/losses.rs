//! The five objectives on one random batch of embeddings.

use genaug::numerics::{Graph, Tensor};
use genaug::ssl_objectives::{barlow_twins_loss, byol_loss, infonce_loss, ntxent_loss, simsiam_loss};
use rand::{Rng, SeedableRng};

fn random(rng: &mut rand_chacha::ChaCha8Rng, n: usize, d: usize) -> genaug::Result<Tensor> {
    Tensor::matrix(n, d, (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

fn main() -> genaug::Result<()> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let (z1, z2) = (random(&mut rng, 8, 16)?, random(&mut rng, 8, 16)?);
    let queue = random(&mut rng, 32, 16)?;

    let mut g = Graph::new();
    let a = g.constant(z1.clone());
    let b = g.constant(z2.clone());
    let losses = [
        ("nt-xent", ntxent_loss(&mut g, a, b, 0.2)?),
        ("infonce", infonce_loss(&mut g, a, &z2, &queue, 0.2)?),
        ("byol", byol_loss(&mut g, a, b, b, a)?),
        ("simsiam", simsiam_loss(&mut g, a, b, b, a)?),
        ("barlow twins", barlow_twins_loss(&mut g, a, b, 0.0051, 0.048, 1e-5)?),
    ];
    for (name, v) in losses {
        println!("{name:>12} {:.5}", g.value(v).item()?);
    }
    Ok(())
}
