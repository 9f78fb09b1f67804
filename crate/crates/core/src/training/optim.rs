use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Gradients, ParamStore, Tensor};

pub const LARS_TRUST: f64 = 0.001;
pub const LARS_EPS: f64 = 1e-9;
pub const DEFAULT_MOMENTUM: f64 = 0.9;

fn default_momentum() -> f64 {
    DEFAULT_MOMENTUM
}
fn default_trust() -> f64 {
    LARS_TRUST
}
fn default_eps() -> f64 {
    LARS_EPS
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerSpec {
    Sgd {
        #[serde(default = "default_momentum")]
        momentum: f64,
    },
    Lars {
        #[serde(default = "default_momentum")]
        momentum: f64,
        #[serde(default = "default_trust")]
        trust: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
}

impl OptimizerSpec {
    pub fn sgd() -> Self {
        OptimizerSpec::Sgd {
            momentum: DEFAULT_MOMENTUM,
        }
    }

    pub fn lars() -> Self {
        OptimizerSpec::Lars {
            momentum: DEFAULT_MOMENTUM,
            trust: LARS_TRUST,
            eps: LARS_EPS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (m, extra) = match *self {
            OptimizerSpec::Sgd { momentum } => (momentum, true),
            OptimizerSpec::Lars { momentum, trust, eps } => (momentum, trust > 0.0 && eps >= 0.0),
        };
        if !(0.0..1.0).contains(&m) || !extra {
            return Err(Error::Config(format!("invalid optimizer settings {self:?}")));
        }
        Ok(())
    }
}

fn grad_for<'a>(params: &ParamStore, grads: &'a Gradients, id: crate::numerics::ParamId) -> Result<&'a Tensor> {
    let g = grads
        .get(&id)
        .ok_or_else(|| Error::Shape(format!("no gradient for {}", params.name(id))))?;
    if g.shape() != params.get(id).shape() {
        return Err(Error::Shape(format!(
            "gradient {:?} for {} {:?}",
            g.shape(),
            params.name(id),
            params.get(id).shape()
        )));
    }
    Ok(g)
}

fn check_velocity(params: &ParamStore, velocity: &ParamStore) -> Result<()> {
    if params.len() != velocity.len()
        || params
            .ids()
            .any(|id| params.get(id).shape() != velocity.get(id).shape())
    {
        return Err(Error::Shape("velocity does not match parameters".into()));
    }
    Ok(())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// One momentum step on a single tensor with an effective rate multiplier `local`.
fn momentum_step(
    p: &Tensor,
    g: &Tensor,
    v: &Tensor,
    lr: f64,
    momentum: f64,
    wd: f64,
    local: f64,
) -> Result<(Tensor, Tensor)> {
    let (pd, gd, vd) = (p.data(), g.data(), v.data());
    let mut nv = Vec::with_capacity(pd.len());
    let mut np = Vec::with_capacity(pd.len());
    for i in 0..pd.len() {
        let vel = momentum * vd[i] + local * (gd[i] + wd * pd[i]);
        nv.push(vel);
        np.push(pd[i] - lr * vel);
    }
    Ok((
        Tensor::new(p.shape().to_vec(), np)?,
        Tensor::new(p.shape().to_vec(), nv)?,
    ))
}

/// `v ← μ·v + g + wd·p`, `p ← p − lr·v`, for every tensor.
pub fn sgd_update(
    params: &mut ParamStore,
    grads: &Gradients,
    velocity: &mut ParamStore,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    check_velocity(params, velocity)?;
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let g = grad_for(params, grads, id)?;
        let (np, nv) = momentum_step(params.get(id), g, velocity.get(id), lr, momentum, weight_decay, 1.0)?;
        params.set(id, np)?;
        velocity.set(id, nv)?;
    }
    Ok(())
}

/// Layer-wise trust ratio `trust·‖p‖ / (‖g‖ + wd·‖p‖ + eps)`; 1 when either norm is 0.
pub fn lars_local_lr(p: &Tensor, g: &Tensor, weight_decay: f64, trust: f64, eps: f64) -> f64 {
    let (pn, gn) = (norm(p.data()), norm(g.data()));
    if pn == 0.0 || gn == 0.0 {
        1.0
    } else {
        trust * pn / (gn + weight_decay * pn + eps)
    }
}

/// LARS: every tensor of rank ≥ 2 is one layer with its own trust ratio; rank-1
/// tensors (biases) get neither adaptation nor weight decay.
#[allow(clippy::too_many_arguments)]
pub fn lars_update(
    params: &mut ParamStore,
    grads: &Gradients,
    velocity: &mut ParamStore,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
    trust: f64,
    eps: f64,
) -> Result<()> {
    check_velocity(params, velocity)?;
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let p = params.get(id);
        let g = grad_for(params, grads, id)?;
        let (local, wd) = if p.rank() >= 2 {
            (lars_local_lr(p, g, weight_decay, trust, eps), weight_decay)
        } else {
            (1.0, 0.0)
        };
        let (np, nv) = momentum_step(p, g, velocity.get(id), lr, momentum, wd, local)?;
        params.set(id, np)?;
        velocity.set(id, nv)?;
    }
    Ok(())
}

/// Optimizer with its per-tensor momentum buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer {
    pub spec: OptimizerSpec,
    pub weight_decay: f64,
    pub velocity: ParamStore,
}

impl Optimizer {
    pub fn new(spec: OptimizerSpec, weight_decay: f64, params: &ParamStore) -> Result<Self> {
        spec.validate()?;
        if !(weight_decay >= 0.0) {
            return Err(Error::Config(format!("weight decay {weight_decay} < 0")));
        }
        let mut velocity = ParamStore::new();
        for (name, t) in params.iter() {
            velocity.push(name, Tensor::zeros(t.shape()));
        }
        Ok(Optimizer {
            spec,
            weight_decay,
            velocity,
        })
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients, lr: f64) -> Result<()> {
        match self.spec {
            OptimizerSpec::Sgd { momentum } => {
                sgd_update(params, grads, &mut self.velocity, lr, momentum, self.weight_decay)
            }
            OptimizerSpec::Lars { momentum, trust, eps } => lars_update(
                params,
                grads,
                &mut self.velocity,
                lr,
                momentum,
                self.weight_decay,
                trust,
                eps,
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::ParamId;

    fn one(w: &[f64], b: &[f64]) -> ParamStore {
        let mut s = ParamStore::new();
        s.push("w", Tensor::matrix(1, w.len(), w.to_vec()).unwrap());
        s.push("b", Tensor::new(vec![b.len()], b.to_vec()).unwrap());
        s
    }

    fn grads_of(s: &ParamStore) -> Gradients {
        s.ids().map(|id| (id, s.get(id).clone())).collect()
    }

    #[test]
    fn lr_zero_and_zero_grads_are_identity() {
        let p0 = one(&[1.0, -2.0], &[0.5]);
        let g = grads_of(&one(&[0.3, 0.1], &[1.0]));
        for spec in [OptimizerSpec::sgd(), OptimizerSpec::lars()] {
            let mut p = p0.clone();
            let mut opt = Optimizer::new(spec, 0.0, &p).unwrap();
            opt.step(&mut p, &g, 0.0).unwrap();
            assert_eq!(p, p0);
            let zero = grads_of(&one(&[0.0, 0.0], &[0.0]));
            let mut fresh = Optimizer::new(spec, 0.0, &p).unwrap();
            fresh.step(&mut p, &zero, 0.5).unwrap();
            assert_eq!(p, p0);
        }
    }

    #[test]
    fn vanilla_and_momentum_sgd() {
        let mut p = one(&[1.0, 2.0], &[3.0]);
        let g = grads_of(&one(&[0.5, -1.0], &[2.0]));
        let mut v = Optimizer::new(OptimizerSpec::sgd(), 0.0, &p).unwrap().velocity;
        sgd_update(&mut p, &g, &mut v, 0.1, 0.0, 0.0).unwrap();
        assert_eq!(p.get(ParamId(0)).data(), &[1.0 - 0.05, 2.0 + 0.1]);

        let mut p = one(&[0.0], &[0.0]);
        let g = grads_of(&one(&[2.0], &[0.0]));
        let mut v = Optimizer::new(OptimizerSpec::sgd(), 0.0, &p).unwrap().velocity;
        for _ in 0..2 {
            sgd_update(&mut p, &g, &mut v, 0.1, 0.9, 0.0).unwrap();
        }
        let moved = -p.get(ParamId(0)).data()[0];
        assert!((moved - 0.1 * 2.0 * (1.0 + 1.9)).abs() < 1e-12);
    }

    #[test]
    fn lars_ratio_identities() {
        let p = Tensor::matrix(1, 2, vec![3.0, 4.0]).unwrap();
        let g = Tensor::matrix(1, 2, vec![0.0, 5.0]).unwrap();
        assert!((lars_local_lr(&p, &g, 0.0, 1.0, LARS_EPS) - 1.0).abs() < 1e-9);
        let p2 = p.map(|v| 2.0 * v).unwrap();
        let g2 = g.map(|v| 2.0 * v).unwrap();
        let a = lars_local_lr(&p, &g, 0.0, 1e-3, 0.0);
        let b = lars_local_lr(&p2, &g2, 0.0, 1e-3, 0.0);
        assert!((a - b).abs() < 1e-15);

        // with ratio 1, LARS on a weight matrix is an SGD step
        let mut lp = one(&[3.0, 4.0], &[1.0]);
        let mut sp = lp.clone();
        let g = grads_of(&one(&[0.0, 5.0], &[1.0]));
        let mut lv = Optimizer::new(OptimizerSpec::lars(), 0.0, &lp).unwrap().velocity;
        let mut sv = lv.clone();
        lars_update(&mut lp, &g, &mut lv, 0.1, 0.9, 0.0, 1.0, LARS_EPS).unwrap();
        sgd_update(&mut sp, &g, &mut sv, 0.1, 0.9, 0.0).unwrap();
        assert!(lp.get(ParamId(0)).max_abs_diff(sp.get(ParamId(0))) < 1e-9);
    }

    #[test]
    fn biases_skip_adaptation_and_decay() {
        let mut p = one(&[1.0, 1.0], &[2.0]);
        let g = grads_of(&one(&[0.1, 0.1], &[0.5]));
        let mut v = Optimizer::new(OptimizerSpec::lars(), 0.0, &p).unwrap().velocity;
        lars_update(&mut p, &g, &mut v, 0.1, 0.0, 0.5, 1e-3, 1e-9).unwrap();
        assert!((p.get(ParamId(1)).data()[0] - (2.0 - 0.05)).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_errors() {
        let mut p = one(&[1.0, 1.0], &[2.0]);
        let g = grads_of(&one(&[0.1], &[0.5]));
        let mut v = Optimizer::new(OptimizerSpec::sgd(), 0.0, &p).unwrap().velocity;
        assert!(matches!(
            sgd_update(&mut p, &g, &mut v, 0.1, 0.9, 0.0),
            Err(Error::Shape(_))
        ));
    }
}
