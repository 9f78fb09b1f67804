use std::f64::consts::PI;

use rand_distr::{Distribution, StandardNormal};

use super::losses::infonce_loss;
use crate::augmentation::SampleRng;
use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamStore, Tensor, Var};

/// Cosine ramp from `m_base` at `t = 0` to `m_final` at `t = 1`.
pub fn momentum_at(m_base: f64, m_final: f64, t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    m_final - (m_final - m_base) * ((PI * t).cos() + 1.0) / 2.0
}

/// Exponential-moving-average copy of the online parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct EmaState {
    pub target: ParamStore,
    pub m_base: f64,
    pub m_final: f64,
}

impl EmaState {
    pub fn new(online: &ParamStore, m_base: f64, m_final: f64) -> Result<Self> {
        for m in [m_base, m_final] {
            if !(0.0..=1.0).contains(&m) {
                return Err(Error::Config(format!("momentum {m} outside [0,1]")));
            }
        }
        Ok(EmaState {
            target: online.clone(),
            m_base,
            m_final,
        })
    }

    pub fn momentum(&self, t: f64) -> f64 {
        momentum_at(self.m_base, self.m_final, t)
    }

    /// `target ← m·target + (1−m)·online` with `m` at schedule position `t`.
    pub fn update(&mut self, online: &ParamStore, t: f64) -> Result<f64> {
        let m = self.momentum(t);
        ema_update(online, &mut self.target, m)?;
        Ok(m)
    }
}

/// Blends `online` into `target` in place with momentum `m`.
pub fn ema_update(online: &ParamStore, target: &mut ParamStore, m: f64) -> Result<()> {
    if online.len() != target.len() {
        return Err(Error::Shape(format!(
            "online has {} tensors, target {}",
            online.len(),
            target.len()
        )));
    }
    for id in online.ids() {
        let o = online.get(id);
        let t = target.get(id);
        if o.shape() != t.shape() {
            return Err(Error::Shape(format!(
                "{}: online {:?} vs target {:?}",
                online.name(id),
                o.shape(),
                t.shape()
            )));
        }
        let data = if m == 1.0 {
            continue;
        } else if m == 0.0 {
            o.data().to_vec()
        } else {
            t.data()
                .iter()
                .zip(o.data())
                .map(|(t, o)| m * t + (1.0 - m) * o)
                .collect()
        };
        target.set(id, Tensor::new(o.shape().to_vec(), data)?)?;
    }
    Ok(())
}

/// FIFO ring of unit-norm key embeddings with fixed capacity.
#[derive(Clone, Debug, PartialEq)]
pub struct KeyQueue {
    capacity: usize,
    dim: usize,
    data: Vec<f64>,
    head: usize,
}

fn unit_rows(rows: usize, dim: usize, data: &mut [f64]) -> Result<()> {
    for (i, row) in data.chunks_mut(dim).enumerate().take(rows) {
        let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::Degenerate(format!("zero-norm key in row {i}")));
        }
        row.iter_mut().for_each(|v| *v /= n);
    }
    Ok(())
}

impl KeyQueue {
    /// A full queue of random unit vectors, so it holds exactly `capacity` keys from
    /// the first step on.
    pub fn random(capacity: usize, dim: usize, rng: &mut SampleRng) -> Result<Self> {
        if capacity == 0 || dim == 0 {
            return Err(Error::Config("queue capacity and dim must be positive".into()));
        }
        let mut data: Vec<f64> = (0..capacity * dim).map(|_| StandardNormal.sample(rng)).collect();
        unit_rows(capacity, dim, &mut data)?;
        Ok(KeyQueue {
            capacity,
            dim,
            data,
            head: 0,
        })
    }

    pub fn from_parts(capacity: usize, dim: usize, data: Vec<f64>, head: usize) -> Result<Self> {
        if data.len() != capacity * dim || head >= capacity.max(1) {
            return Err(Error::Shape("queue buffer does not match its capacity".into()));
        }
        Ok(KeyQueue {
            capacity,
            dim,
            data,
            head,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.capacity
    }

    pub fn is_empty(&self) -> bool {
        self.capacity == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn head(&self) -> usize {
        self.head
    }

    pub fn raw(&self) -> &[f64] {
        &self.data
    }

    /// All stored keys as a `capacity × dim` matrix (slot order).
    pub fn as_tensor(&self) -> Tensor {
        Tensor::matrix(self.capacity, self.dim, self.data.clone()).expect("queue dims")
    }

    /// Normalizes and enqueues every row of `keys`, overwriting the oldest entries.
    pub fn enqueue(&mut self, keys: &Tensor) -> Result<()> {
        let (n, d) = keys.dims2()?;
        if d != self.dim {
            return Err(Error::Shape(format!("key dim {d} vs queue dim {}", self.dim)));
        }
        let mut rows = keys.data().to_vec();
        unit_rows(n, d, &mut rows)?;
        for row in rows.chunks(d) {
            let s = self.head * d;
            self.data[s..s + d].copy_from_slice(row);
            self.head = (self.head + 1) % self.capacity;
        }
        Ok(())
    }
}

/// Queue plus the momentum (key) encoder of MoCo.
#[derive(Clone, Debug, PartialEq)]
pub struct MocoState {
    pub queue: KeyQueue,
    pub key_encoder: EmaState,
}

/// InfoNCE of `query` against `keys` and the queued negatives, then enqueues the
/// keys. The key encoder is advanced separately with [`EmaState::update`] once
/// the online parameters have stepped.
pub fn moco_step(g: &mut Graph, query: Var, keys: &Tensor, state: &mut MocoState, temperature: f64) -> Result<Var> {
    let loss = infonce_loss(g, query, keys, &state.queue.as_tensor(), temperature)?;
    state.queue.enqueue(keys)?;
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(vals: &[f64]) -> ParamStore {
        let mut s = ParamStore::new();
        s.push("w", Tensor::matrix(1, vals.len(), vals.to_vec()).unwrap());
        s
    }

    #[test]
    fn schedule_endpoints() {
        assert!((momentum_at(0.99, 0.999, 0.0) - 0.99).abs() < 1e-12);
        assert!((momentum_at(0.99, 0.999, 1.0) - 0.999).abs() < 1e-12);
        assert!((momentum_at(0.99, 1.0, 1.0) - 1.0).abs() < 1e-12);
        for i in 0..=100 {
            let m = momentum_at(0.99, 1.0, i as f64 / 100.0);
            assert!((0.0..=1.0).contains(&m));
        }
    }

    #[test]
    fn frozen_and_copy() {
        let online = store(&[1.0, 2.0]);
        let mut target = store(&[5.0, 6.0]);
        ema_update(&online, &mut target, 1.0).unwrap();
        assert_eq!(target, store(&[5.0, 6.0]));
        ema_update(&online, &mut target, 0.0).unwrap();
        assert_eq!(target, online);
        let mut wrong = store(&[1.0]);
        assert!(matches!(ema_update(&online, &mut wrong, 0.5), Err(Error::Shape(_))));
    }

    #[test]
    fn queue_is_fifo_and_unit_norm() {
        let mut rng = SampleRng::from_parts(&[1]);
        let (cap, d, batch) = (12, 4, 3);
        let mut q = KeyQueue::random(cap, d, &mut rng).unwrap();
        let initial = q.raw().to_vec();
        for step in 0..cap / batch {
            let keys = Tensor::matrix(batch, d, (0..batch * d).map(|i| (i + step + 1) as f64).collect()).unwrap();
            q.enqueue(&keys).unwrap();
            assert_eq!(q.len(), cap);
        }
        for (old, new) in initial.chunks(d).zip(q.raw().chunks(d)) {
            assert_ne!(old, new);
        }
        for row in q.raw().chunks(d) {
            let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn moco_step_keeps_size_and_matches_formula() {
        let mut rng = SampleRng::from_parts(&[2]);
        let d = 3;
        // orthogonal queue: every entry along e2 or e3
        let queue = KeyQueue::from_parts(4, d, vec![0., 1., 0., 0., 0., 1., 0., -1., 0., 0., 0., -1.], 0).unwrap();
        let online = store(&[0.0]);
        let mut state = MocoState {
            queue,
            key_encoder: EmaState::new(&online, 0.99, 0.999).unwrap(),
        };
        let q = Tensor::from_rows(&[vec![2.0, 0.0, 0.0]]).unwrap();
        let mut g = Graph::new();
        let qv = g.constant(q.clone());
        let l = moco_step(&mut g, qv, &q, &mut state, 0.2).unwrap();
        let expected = (1.0 + 4.0 * (-5f64).exp()).ln();
        assert!((g.value(l).item().unwrap() - expected).abs() < 1e-12);
        assert_eq!(state.queue.len(), 4);
        assert_eq!(&state.queue.raw()[..3], &[1.0, 0.0, 0.0]);
        let _ = KeyQueue::random(8, 3, &mut rng).unwrap();
    }
}
