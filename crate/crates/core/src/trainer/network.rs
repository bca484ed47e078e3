use crate::neural::{relu, GradBuffer, GruCache, GruCell, Linear, Mlp, MlpCache, ParameterSet, Tensor};
use crate::{Error, Result, Rng};

/// Consecutive rows belonging to one episode: `steps × n_agents` rows,
/// time-major, starting at `start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub start: usize,
    pub steps: usize,
}

/// Per-agent utility network shared by all agents; the agent's identity is
/// part of its input. Two ReLU layers, an optional GRU, and a linear head.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentNetwork {
    n_agents: usize,
    encoder: Mlp,
    gru: Option<GruCell>,
    head: Linear,
}

#[derive(Debug, Clone)]
pub struct AgentCache {
    encoder: MlpCache,
    activated: Tensor,
    features: Tensor,
    segments: Vec<Segment>,
    gru: Vec<Vec<GruCache>>,
}

impl AgentNetwork {
    pub fn new(input_dim: usize, hidden: usize, n_actions: usize, n_agents: usize, recurrent: bool) -> Self {
        Self {
            n_agents,
            encoder: Mlp::new("agent.enc", &[input_dim, hidden, hidden]),
            gru: recurrent.then(|| GruCell::new("agent.gru", hidden, hidden)),
            head: Linear::new("agent.head", hidden, n_actions),
        }
    }

    pub fn init(&self, params: &mut ParameterSet, rng: &mut Rng) -> Result<()> {
        self.encoder.init(params, rng)?;
        if let Some(g) = &self.gru {
            g.init(params, rng)?;
        }
        self.head.init(params, rng)
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn hidden(&self) -> usize {
        self.encoder.output_dim()
    }

    pub fn n_actions(&self) -> usize {
        self.head.output()
    }

    pub fn is_recurrent(&self) -> bool {
        self.gru.is_some()
    }

    /// Zero recurrent state for one time step of all agents.
    pub fn initial_hidden(&self) -> Tensor {
        Tensor::zeros(&[self.n_agents, self.hidden()])
    }

    fn encode(&self, params: &ParameterSet, x: &Tensor) -> Result<(Tensor, MlpCache)> {
        let (mut a, cache) = self.encoder.forward(params, x)?;
        a.data_mut().iter_mut().for_each(|v| *v = relu(*v));
        Ok((a, cache))
    }

    /// One decision step for all agents (`n_agents × input`), carrying the
    /// recurrent state forward.
    pub fn step(&self, params: &ParameterSet, x: &Tensor, hidden: &Tensor) -> Result<(Tensor, Tensor)> {
        let (a, _) = self.encode(params, x)?;
        let h = match &self.gru {
            Some(g) => g.forward(params, &a, hidden)?.0,
            None => a,
        };
        let q = self.head.forward(params, &h)?;
        Ok((q, h))
    }

    /// Utilities for every row of `x`; recurrence runs along each segment.
    pub fn forward(&self, params: &ParameterSet, x: &Tensor, segments: &[Segment]) -> Result<(Tensor, AgentCache)> {
        let rows: usize = segments.iter().map(|s| s.steps * self.n_agents).sum();
        if rows != x.rows() {
            return Err(Error::Shape(format!("segments cover {rows} rows, input has {}", x.rows())));
        }
        let (activated, encoder) = self.encode(params, x)?;
        let hid = self.hidden();
        let n = self.n_agents;
        let mut gru_caches = Vec::new();
        let features = match &self.gru {
            None => activated.clone(),
            Some(g) => {
                let mut out = Tensor::zeros(&[rows, hid]);
                for seg in segments {
                    let mut h = self.initial_hidden();
                    let mut caches = Vec::with_capacity(seg.steps);
                    for t in 0..seg.steps {
                        let r0 = seg.start + t * n;
                        let xt = Tensor::from_vec(&[n, hid], activated.data()[r0 * hid..(r0 + n) * hid].to_vec())?;
                        let (h_next, cache) = g.forward(params, &xt, &h)?;
                        out.data_mut()[r0 * hid..(r0 + n) * hid].copy_from_slice(h_next.data());
                        caches.push(cache);
                        h = h_next;
                    }
                    gru_caches.push(caches);
                }
                out
            }
        };
        let q = self.head.forward(params, &features)?;
        Ok((
            q,
            AgentCache {
                encoder,
                activated,
                features,
                segments: segments.to_vec(),
                gru: gru_caches,
            },
        ))
    }

    pub fn backward(&self, params: &ParameterSet, cache: &AgentCache, dq: &Tensor, grads: &mut GradBuffer) -> Result<()> {
        let dfeat = self
            .head
            .backward(params, &cache.features, dq, grads, true)?
            .expect("requested input gradient");
        let hid = self.hidden();
        let n = self.n_agents;
        let mut dact = match &self.gru {
            None => dfeat,
            Some(g) => {
                let mut dact = Tensor::zeros(cache.activated.shape());
                for (seg, caches) in cache.segments.iter().zip(&cache.gru) {
                    let mut carry = self.initial_hidden();
                    for t in (0..seg.steps).rev() {
                        let r0 = seg.start + t * n;
                        let mut dh = Tensor::from_vec(&[n, hid], dfeat.data()[r0 * hid..(r0 + n) * hid].to_vec())?;
                        for (d, c) in dh.data_mut().iter_mut().zip(carry.data()) {
                            *d += c;
                        }
                        let (dx, dprev) = g.backward(params, &caches[t], &dh, grads)?;
                        dact.data_mut()[r0 * hid..(r0 + n) * hid].copy_from_slice(dx.data());
                        carry = dprev;
                    }
                }
                dact
            }
        };
        for (d, &a) in dact.data_mut().iter_mut().zip(cache.activated.data()) {
            if a <= 0.0 {
                *d = 0.0;
            }
        }
        self.encoder.backward(params, &cache.encoder, &dact, grads)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::grad_check;
    use crate::stream_rng;
    use rand::Rng as _;

    fn setup(recurrent: bool, seed: u64) -> (AgentNetwork, ParameterSet, Tensor, Vec<Segment>) {
        let net = AgentNetwork::new(3, 5, 4, 2, recurrent);
        let mut p = ParameterSet::new();
        net.init(&mut p, &mut stream_rng(seed, 0)).unwrap();
        let segments = vec![Segment { start: 0, steps: 3 }, Segment { start: 6, steps: 2 }];
        let mut rng = stream_rng(seed, 1);
        let data = (0..10 * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
        (net, p, Tensor::from_vec(&[10, 3], data).unwrap(), segments)
    }

    #[test]
    fn batched_forward_matches_stepping() {
        for recurrent in [false, true] {
            let (net, p, x, segs) = setup(recurrent, 2);
            let (q, _) = net.forward(&p, &x, &segs).unwrap();
            for seg in &segs {
                let mut h = net.initial_hidden();
                for t in 0..seg.steps {
                    let r0 = seg.start + t * 2;
                    let xt = Tensor::from_vec(&[2, 3], x.data()[r0 * 3..(r0 + 2) * 3].to_vec()).unwrap();
                    let (qt, h2) = net.step(&p, &xt, &h).unwrap();
                    h = h2;
                    assert_eq!(qt.data(), &q.data()[r0 * 4..(r0 + 2) * 4]);
                }
            }
        }
    }

    #[test]
    fn gradient_check_through_time() {
        for recurrent in [false, true] {
            for seed in 0..10u64 {
                let (net, p, x, segs) = setup(recurrent, seed);
                let weights: Vec<f64> = (0..40).map(|i| ((i * 7 % 11) as f64 - 5.0) / 5.0).collect();
                let loss = |p: &ParameterSet| -> f64 {
                    let (q, _) = net.forward(p, &x, &segs).unwrap();
                    q.data().iter().zip(&weights).map(|(a, w)| w * a * a).sum()
                };
                let (q, cache) = net.forward(&p, &x, &segs).unwrap();
                let dq: Vec<f64> = q.data().iter().zip(&weights).map(|(a, w)| 2.0 * w * a).collect();
                let mut g = p.zeros_like();
                net.backward(&p, &cache, &Tensor::from_vec(&[10, 4], dq).unwrap(), &mut g).unwrap();
                let report = grad_check(&p, &g, 1e-5, loss);
                assert!(report.passes(1e-4), "recurrent={recurrent} seed={seed}: {report:?}");
            }
        }
    }

    #[test]
    fn segment_rows_must_match() {
        let (net, p, x, _) = setup(false, 0);
        assert!(net.forward(&p, &x, &[Segment { start: 0, steps: 1 }]).is_err());
    }
}
