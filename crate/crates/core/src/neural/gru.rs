use super::layers::{affine, affine_backward, sigmoid};
use super::{GradBuffer, ParameterSet, Tensor};
use crate::{Error, Result, Rng};

/// Gated recurrent cell:
///
/// ```text
/// z  = sigmoid(Wz x + Uz h + bz)
/// r  = sigmoid(Wr x + Ur h + br)
/// h~ = tanh(Wh x + Uh (r * h) + bh)
/// h' = (1 - z) * h + z * h~
/// ```
///
/// Parameters live under `{name}.{wz,uz,bz,wr,ur,br,wh,uh,bh}`.
#[derive(Debug, Clone, PartialEq)]
pub struct GruCell {
    name: String,
    input: usize,
    hidden: usize,
}

#[derive(Debug, Clone)]
pub struct GruCache {
    owner: String,
    x: Tensor,
    h: Tensor,
    z: Tensor,
    r: Tensor,
    cand: Tensor,
    rh: Tensor,
}

impl GruCell {
    pub fn new(name: impl Into<String>, input: usize, hidden: usize) -> Self {
        Self {
            name: name.into(),
            input,
            hidden,
        }
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    fn key(&self, part: &str) -> String {
        format!("{}.{part}", self.name)
    }

    pub fn init(&self, params: &mut ParameterSet, rng: &mut Rng) -> Result<()> {
        use rand::Rng as _;
        let bound = 1.0 / (self.hidden as f64).sqrt();
        for gate in ["z", "r", "h"] {
            for (part, shape) in [
                (format!("w{gate}"), vec![self.hidden, self.input]),
                (format!("u{gate}"), vec![self.hidden, self.hidden]),
                (format!("b{gate}"), vec![self.hidden]),
            ] {
                let n = shape.iter().product();
                let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
                params.insert(self.key(&part), Tensor::from_vec(&shape, data)?)?;
            }
        }
        Ok(())
    }

    fn gate(&self, params: &ParameterSet, g: &str, x: &Tensor, h: &Tensor) -> Result<Tensor> {
        let mut a = affine(x, params.get(&self.key(&format!("w{g}")))?, Some(params.get(&self.key(&format!("b{g}")))?))?;
        let u = affine(h, params.get(&self.key(&format!("u{g}")))?, None)?;
        for (v, w) in a.data_mut().iter_mut().zip(u.data()) {
            *v += w;
        }
        Ok(a)
    }

    pub fn forward(&self, params: &ParameterSet, x: &Tensor, h: &Tensor) -> Result<(Tensor, GruCache)> {
        if h.cols() != self.hidden || x.cols() != self.input || h.rows() != x.rows() {
            return Err(Error::Shape(format!(
                "{}: input {:?} / hidden {:?} for cell {}->{}",
                self.name,
                x.shape(),
                h.shape(),
                self.input,
                self.hidden
            )));
        }
        let mut z = self.gate(params, "z", x, h)?;
        z.data_mut().iter_mut().for_each(|v| *v = sigmoid(*v));
        let mut r = self.gate(params, "r", x, h)?;
        r.data_mut().iter_mut().for_each(|v| *v = sigmoid(*v));
        let mut rh = r.clone();
        for (v, w) in rh.data_mut().iter_mut().zip(h.data()) {
            *v *= w;
        }
        let mut cand = self.gate(params, "h", x, &rh)?;
        cand.data_mut().iter_mut().for_each(|v| *v = v.tanh());
        let mut out = Tensor::zeros(h.shape());
        for (i, o) in out.data_mut().iter_mut().enumerate() {
            let zi = z.data()[i];
            *o = (1.0 - zi) * h.data()[i] + zi * cand.data()[i];
        }
        out.check_finite(&self.name)?;
        Ok((
            out,
            GruCache {
                owner: self.name.clone(),
                x: x.clone(),
                h: h.clone(),
                z,
                r,
                cand,
                rh,
            },
        ))
    }

    /// Returns `(dx, dh)` and accumulates parameter gradients.
    pub fn backward(&self, params: &ParameterSet, cache: &GruCache, dout: &Tensor, grads: &mut GradBuffer) -> Result<(Tensor, Tensor)> {
        if cache.owner != self.name || dout.shape() != cache.h.shape() {
            return Err(Error::Cache(format!("{}: cache/upstream mismatch", self.name)));
        }
        let n = dout.len();
        let (z, r, cand, h) = (cache.z.data(), cache.r.data(), cache.cand.data(), cache.h.data());
        let d = dout.data();
        let mut dh = Tensor::zeros(cache.h.shape());
        let mut da_z = Tensor::zeros(cache.h.shape());
        let mut da_h = Tensor::zeros(cache.h.shape());
        for i in 0..n {
            dh.data_mut()[i] = d[i] * (1.0 - z[i]);
            let dz = d[i] * (cand[i] - h[i]);
            da_z.data_mut()[i] = dz * z[i] * (1.0 - z[i]);
            let dcand = d[i] * z[i];
            da_h.data_mut()[i] = dcand * (1.0 - cand[i] * cand[i]);
        }
        let mut dx = Tensor::zeros(cache.x.shape());
        let add = |acc: &mut Tensor, v: Tensor| {
            for (a, b) in acc.data_mut().iter_mut().zip(v.data()) {
                *a += b;
            }
        };

        // candidate branch
        let (dw, db) = grads.get_pair_mut(&self.key("wh"), &self.key("bh"))?;
        let v = affine_backward(&cache.x, params.get(&self.key("wh"))?, &da_h, dw, Some(db), true).expect("dx");
        add(&mut dx, v);
        let drh = affine_backward(&cache.rh, params.get(&self.key("uh"))?, &da_h, grads.get_mut(&self.key("uh"))?, None, true).expect("drh");
        let mut da_r = Tensor::zeros(cache.h.shape());
        for i in 0..n {
            let dr = drh.data()[i] * h[i];
            dh.data_mut()[i] += drh.data()[i] * r[i];
            da_r.data_mut()[i] = dr * r[i] * (1.0 - r[i]);
        }

        for (g, da) in [("z", &da_z), ("r", &da_r)] {
            let (dw, db) = grads.get_pair_mut(&self.key(&format!("w{g}")), &self.key(&format!("b{g}")))?;
            let v = affine_backward(&cache.x, params.get(&self.key(&format!("w{g}")))?, da, dw, Some(db), true).expect("dx");
            add(&mut dx, v);
            let v = affine_backward(&cache.h, params.get(&self.key(&format!("u{g}")))?, da, grads.get_mut(&self.key(&format!("u{g}")))?, None, true).expect("dh");
            add(&mut dh, v);
        }
        Ok((dx, dh))
    }
}
