use crate::neural::{elu, elu_grad, GradBuffer, Linear, Mlp, MlpCache, ParameterSet, Tensor};
use crate::{Error, Result, Rng};

/// Monotonic mixing network whose weights are produced from the global state
/// by hypernetworks and passed through `abs`, so `∂Q_tot/∂Q_a >= 0`.
///
/// Parameters live under `{name}.hyper_w1`, `{name}.hyper_b1`,
/// `{name}.hyper_w2` and `{name}.v`.
#[derive(Debug, Clone, PartialEq)]
pub struct QmixMixer {
    name: String,
    n_agents: usize,
    state_dim: usize,
    embed: usize,
    hyper_w1: Linear,
    hyper_b1: Linear,
    hyper_w2: Linear,
    v: Mlp,
}

#[derive(Debug, Clone)]
pub struct QmixCache {
    owner: String,
    states: Tensor,
    qs: Tensor,
    hw1: Tensor,
    pre: Tensor,
    hidden: Tensor,
    hw2: Tensor,
    v: MlpCache,
}

fn abs_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl QmixMixer {
    pub fn new(name: impl Into<String>, n_agents: usize, state_dim: usize, embed: usize) -> Self {
        let name = name.into();
        Self {
            hyper_w1: Linear::new(format!("{name}.hyper_w1"), state_dim, n_agents * embed),
            hyper_b1: Linear::new(format!("{name}.hyper_b1"), state_dim, embed),
            hyper_w2: Linear::new(format!("{name}.hyper_w2"), state_dim, embed),
            v: Mlp::new(format!("{name}.v"), &[state_dim, embed, 1]),
            name,
            n_agents,
            state_dim,
            embed,
        }
    }

    pub fn init(&self, params: &mut ParameterSet, rng: &mut Rng) -> Result<()> {
        self.hyper_w1.init(params, rng)?;
        self.hyper_b1.init(params, rng)?;
        self.hyper_w2.init(params, rng)?;
        self.v.init(params, rng)
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn embed(&self) -> usize {
        self.embed
    }

    /// One mixing pass with explicit, already non-negative weights:
    /// `w2 · elu(q W1 + b1) + b2`, with `w1` laid out agent-major (`n × embed`).
    pub fn mix_with(q: &[f64], w1: &[f64], b1: &[f64], w2: &[f64], b2: f64) -> f64 {
        let embed = b1.len();
        let mut out = b2;
        for e in 0..embed {
            let pre: f64 = b1[e] + q.iter().enumerate().map(|(a, qa)| qa * w1[a * embed + e]).sum::<f64>();
            out += w2[e] * elu(pre);
        }
        out
    }

    /// `qs` is `N × n_agents`, `states` is `N × state_dim`.
    pub fn forward(&self, params: &ParameterSet, qs: &Tensor, states: &Tensor) -> Result<(Vec<f64>, QmixCache)> {
        let rows = qs.rows();
        if qs.cols() != self.n_agents || states.rows() != rows || states.cols() != self.state_dim {
            return Err(Error::Shape(format!(
                "mixer expects q {rows}x{} and state {rows}x{}, got {:?} and {:?}",
                self.n_agents,
                self.state_dim,
                qs.shape(),
                states.shape()
            )));
        }
        let hw1 = self.hyper_w1.forward(params, states)?;
        let b1 = self.hyper_b1.forward(params, states)?;
        let hw2 = self.hyper_w2.forward(params, states)?;
        let (v, v_cache) = self.v.forward(params, states)?;
        let e_dim = self.embed;
        let mut pre = Tensor::zeros(&[rows, e_dim]);
        let mut hidden = Tensor::zeros(&[rows, e_dim]);
        let mut out = Vec::with_capacity(rows);
        for r in 0..rows {
            let q = qs.row(r);
            let w1 = hw1.row(r);
            let w2 = hw2.row(r);
            let mut total = v.data()[r];
            for e in 0..e_dim {
                let mut z = b1.row(r)[e];
                for (a, qa) in q.iter().enumerate() {
                    z += qa * w1[a * e_dim + e].abs();
                }
                let h = elu(z);
                pre.row_mut(r)[e] = z;
                hidden.row_mut(r)[e] = h;
                total += w2[e].abs() * h;
            }
            out.push(total);
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerics(format!("{} produced a non-finite value", self.name)));
        }
        Ok((
            out,
            QmixCache {
                owner: self.name.clone(),
                states: states.clone(),
                qs: qs.clone(),
                hw1,
                pre,
                hidden,
                hw2,
                v: v_cache,
            },
        ))
    }

    /// Accumulates mixer parameter gradients for upstream `d_qtot` and returns
    /// the gradient with respect to the agent utilities (`N × n_agents`).
    pub fn backward(&self, params: &ParameterSet, cache: &QmixCache, d_qtot: &[f64], grads: &mut GradBuffer) -> Result<Tensor> {
        if cache.owner != self.name || d_qtot.len() != cache.qs.rows() {
            return Err(Error::Cache(format!(
                "{}: cache from {} with {} rows, upstream {}",
                self.name,
                cache.owner,
                cache.qs.rows(),
                d_qtot.len()
            )));
        }
        let rows = d_qtot.len();
        let e_dim = self.embed;
        let n = self.n_agents;
        let mut d_hw1 = Tensor::zeros(&[rows, n * e_dim]);
        let mut d_b1 = Tensor::zeros(&[rows, e_dim]);
        let mut d_hw2 = Tensor::zeros(&[rows, e_dim]);
        let mut d_v = Tensor::zeros(&[rows, 1]);
        let mut d_q = Tensor::zeros(&[rows, n]);
        for (r, &g) in d_qtot.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            d_v.data_mut()[r] = g;
            let q = cache.qs.row(r);
            let hw1 = cache.hw1.row(r);
            let hw2 = cache.hw2.row(r);
            for e in 0..e_dim {
                d_hw2.row_mut(r)[e] = g * cache.hidden.row(r)[e] * abs_grad(hw2[e]);
                let d_pre = g * hw2[e].abs() * elu_grad(cache.pre.row(r)[e]);
                d_b1.row_mut(r)[e] = d_pre;
                for a in 0..n {
                    let w = hw1[a * e_dim + e];
                    d_hw1.row_mut(r)[a * e_dim + e] = d_pre * q[a] * abs_grad(w);
                    d_q.row_mut(r)[a] += d_pre * w.abs();
                }
            }
        }
        self.hyper_w1.backward(params, &cache.states, &d_hw1, grads, false)?;
        self.hyper_b1.backward(params, &cache.states, &d_b1, grads, false)?;
        self.hyper_w2.backward(params, &cache.states, &d_hw2, grads, false)?;
        self.v.backward(params, &cache.v, &d_v, grads)?;
        Ok(d_q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixers::joint_argmax;
    use crate::neural::grad_check;
    use crate::stream_rng;
    use rand::Rng as _;

    fn setup(seed: u64, n: usize, f: usize, e: usize) -> (QmixMixer, ParameterSet) {
        let m = QmixMixer::new("mixer", n, f, e);
        let mut p = ParameterSet::new();
        m.init(&mut p, &mut stream_rng(seed, 0)).unwrap();
        (m, p)
    }

    fn random_tensor(rng: &mut Rng, rows: usize, cols: usize, scale: f64) -> Tensor {
        let data = (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect();
        Tensor::from_vec(&[rows, cols], data).unwrap()
    }

    #[test]
    fn unit_weights_reduce_to_sum() {
        let q = [0.5, 1.25, 2.0];
        let out = QmixMixer::mix_with(&q, &[1.0, 1.0, 1.0], &[0.0], &[1.0], 0.0);
        assert!((out - 3.75).abs() < 1e-12);
    }

    #[test]
    fn forward_matches_mix_with() {
        let (m, p) = setup(3, 2, 5, 4);
        let mut rng = stream_rng(3, 1);
        let s = random_tensor(&mut rng, 6, 5, 1.0);
        let q = random_tensor(&mut rng, 6, 2, 2.0);
        let (out, _) = m.forward(&p, &q, &s).unwrap();
        let hw1 = m.hyper_w1.forward(&p, &s).unwrap();
        let b1 = m.hyper_b1.forward(&p, &s).unwrap();
        let hw2 = m.hyper_w2.forward(&p, &s).unwrap();
        let (v, _) = m.v.forward(&p, &s).unwrap();
        for r in 0..6 {
            let w1: Vec<f64> = hw1.row(r).iter().map(|x| x.abs()).collect();
            let w2: Vec<f64> = hw2.row(r).iter().map(|x| x.abs()).collect();
            let oracle = QmixMixer::mix_with(q.row(r), &w1, b1.row(r), &w2, v.data()[r]);
            assert!((out[r] - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn monotone_in_every_agent_utility() {
        let mut probes = 0;
        for seed in 0..10u64 {
            let (m, p) = setup(seed, 3, 4, 8);
            let mut rng = stream_rng(seed, 7);
            for _ in 0..100 {
                let s = random_tensor(&mut rng, 1, 4, 2.0);
                let q = random_tensor(&mut rng, 1, 3, 5.0);
                let (_, cache) = m.forward(&p, &q, &s).unwrap();
                let mut g = p.zeros_like();
                let dq = m.backward(&p, &cache, &[1.0], &mut g).unwrap();
                for a in 0..3 {
                    let h = 1e-5;
                    let mut up = q.clone();
                    up.data_mut()[a] += h;
                    let mut dn = q.clone();
                    dn.data_mut()[a] -= h;
                    let fd = (m.forward(&p, &up, &s).unwrap().0[0] - m.forward(&p, &dn, &s).unwrap().0[0]) / (2.0 * h);
                    assert!(fd >= -1e-9, "finite difference {fd}");
                    assert!(dq.data()[a] >= 0.0);
                }
                probes += 1;
            }
        }
        assert_eq!(probes, 1000);
    }

    #[test]
    fn greedy_actions_maximise_mixed_value() {
        let (n, u) = (2, 4);
        for seed in 0..100u64 {
            let (m, p) = setup(seed, n, 3, 6);
            let mut rng = stream_rng(seed, 9);
            let s = random_tensor(&mut rng, 1, 3, 1.0);
            let all_q: Vec<Vec<f64>> = (0..n).map(|_| (0..u).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
            let mut best = f64::NEG_INFINITY;
            for a0 in 0..u {
                for a1 in 0..u {
                    let q = Tensor::from_vec(&[1, 2], vec![all_q[0][a0], all_q[1][a1]]).unwrap();
                    best = best.max(m.forward(&p, &q, &s).unwrap().0[0]);
                }
            }
            let greedy = joint_argmax(&all_q);
            let q = Tensor::from_vec(&[1, 2], vec![all_q[0][greedy[0]], all_q[1][greedy[1]]]).unwrap();
            let at_greedy = m.forward(&p, &q, &s).unwrap().0[0];
            assert!(at_greedy >= best - 1e-12, "seed {seed}: {at_greedy} < {best}");
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..5u64 {
            let (m, p) = setup(seed, 2, 3, 4);
            let mut rng = stream_rng(seed, 2);
            let s = random_tensor(&mut rng, 4, 3, 1.0);
            let q = random_tensor(&mut rng, 4, 2, 2.0);
            let targets = [0.3, -1.0, 2.0, 0.5];
            let loss = |p: &ParameterSet| -> f64 {
                let (out, _) = m.forward(p, &q, &s).unwrap();
                out.iter().zip(&targets).map(|(o, t)| (o - t).powi(2)).sum()
            };
            let (out, cache) = m.forward(&p, &q, &s).unwrap();
            let d: Vec<f64> = out.iter().zip(&targets).map(|(o, t)| 2.0 * (o - t)).collect();
            let mut g = p.zeros_like();
            m.backward(&p, &cache, &d, &mut g).unwrap();
            let report = grad_check(&p, &g, 1e-5, loss);
            assert!(report.passes(1e-4), "{report:?}");
        }
    }

    #[test]
    fn utility_gradient_matches_finite_differences() {
        let (m, p) = setup(11, 3, 2, 5);
        let mut rng = stream_rng(11, 2);
        let s = random_tensor(&mut rng, 2, 2, 1.0);
        let q = random_tensor(&mut rng, 2, 3, 2.0);
        let (_, cache) = m.forward(&p, &q, &s).unwrap();
        let mut g = p.zeros_like();
        let dq = m.backward(&p, &cache, &[1.0, -0.5], &mut g).unwrap();
        for i in 0..6 {
            let h = 1e-5;
            let mut up = q.clone();
            up.data_mut()[i] += h;
            let mut dn = q.clone();
            dn.data_mut()[i] -= h;
            let f = |t: &Tensor| {
                let o = m.forward(&p, t, &s).unwrap().0;
                o[0] - 0.5 * o[1]
            };
            let fd = (f(&up) - f(&dn)) / (2.0 * h);
            assert!((fd - dq.data()[i]).abs() < 1e-7);
        }
    }

    #[test]
    fn shape_and_cache_errors() {
        let (m, p) = setup(0, 2, 3, 4);
        let bad = Tensor::zeros(&[1, 3]);
        assert!(m.forward(&p, &bad, &Tensor::zeros(&[1, 3])).is_err());
        let (_, cache) = m.forward(&p, &Tensor::zeros(&[1, 2]), &Tensor::zeros(&[1, 3])).unwrap();
        let other = QmixMixer::new("target", 2, 3, 4);
        let mut g = p.zeros_like();
        assert!(matches!(other.backward(&p, &cache, &[1.0], &mut g), Err(Error::Cache(_))));
        assert!(matches!(m.backward(&p, &cache, &[1.0, 2.0], &mut g), Err(Error::Cache(_))));
    }
}
