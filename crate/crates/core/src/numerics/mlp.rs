use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

/// Fully connected layer `y = act(x · W + b)` with `W[in × out]`, `b[out]`.
#[derive(Clone, Debug)]
pub struct DenseLayer {
    pub weight: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

/// A dense layer whose tensors already live in a graph.
#[derive(Clone, Copy, Debug)]
pub struct BoundLayer {
    pub weight: Var,
    pub bias: Var,
    pub activation: Activation,
}

/// Runs `x[batch × in]` through the layers, recording into `g`.
pub fn forward_mlp_graph(g: &mut Graph, layers: &[BoundLayer], x: Var) -> Result<Var> {
    let mut h = x;
    for (i, layer) in layers.iter().enumerate() {
        let (rows, _) = g.value(h).dims2()?;
        if rows == 0 {
            return Err(Error::Shape("empty batch".into()));
        }
        let (win, _) = g.value(layer.weight).dims2()?;
        let hin = g.value(h).cols();
        if win != hin {
            return Err(Error::Shape(format!(
                "layer {i}: input width {hin} but weight expects {win}"
            )));
        }
        let z = g.matmul(h, layer.weight)?;
        let z = g.add_bias(z, layer.bias)?;
        h = match layer.activation {
            Activation::Relu => g.relu(z)?,
            Activation::Identity => z,
        };
    }
    Ok(h)
}

/// Gradient-free evaluation of an MLP on `x[batch × in]`.
pub fn forward_mlp(layers: &[DenseLayer], x: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let bound: Vec<BoundLayer> = layers
        .iter()
        .map(|l| BoundLayer {
            weight: g.constant(l.weight.clone()),
            bias: g.constant(l.bias.clone()),
            activation: l.activation,
        })
        .collect();
    let xv = g.constant(x.clone());
    let out = forward_mlp_graph(&mut g, &bound, xv)?;
    Ok(g.value(out).clone())
}
