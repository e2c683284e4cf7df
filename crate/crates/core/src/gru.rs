//! Gated recurrent unit.
//!
//! ```text
//! z  = σ(W_z x + U_z h + b_z)
//! r  = σ(W_r x + U_r h + b_r)
//! h̃  = tanh(W_h x + U_h (r ⊙ h) + b_h)
//! h' = (1 − z) ⊙ h + z ⊙ h̃
//! ```

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    pub w_z: Tensor,
    pub w_r: Tensor,
    pub w_h: Tensor,
    pub u_z: Tensor,
    pub u_r: Tensor,
    pub u_h: Tensor,
    pub b_z: Tensor,
    pub b_r: Tensor,
    pub b_h: Tensor,
}

/// Field names in storage order, shared by checkpoints and gradient bookkeeping.
pub const GRU_FIELDS: [&str; 9] = ["w_z", "w_r", "w_h", "u_z", "u_r", "u_h", "b_z", "b_r", "b_h"];

impl GruParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        let w = Tensor::zeros(&[hidden_dim, input_dim]);
        let u = Tensor::zeros(&[hidden_dim, hidden_dim]);
        let b = Tensor::zeros(&[hidden_dim]);
        GruParams {
            w_z: w.clone(),
            w_r: w.clone(),
            w_h: w,
            u_z: u.clone(),
            u_r: u.clone(),
            u_h: u,
            b_z: b.clone(),
            b_r: b.clone(),
            b_h: b,
        }
    }

    /// Weights from `U[-scale, scale]`, biases zero.
    pub fn random<R: Rng + ?Sized>(
        input_dim: usize,
        hidden_dim: usize,
        scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut p = Self::zeros(input_dim, hidden_dim);
        for t in [&mut p.w_z, &mut p.w_r, &mut p.w_h, &mut p.u_z, &mut p.u_r, &mut p.u_h] {
            *t = Tensor::uniform(t.shape(), -scale, scale, rng)?;
        }
        Ok(p)
    }

    pub fn input_dim(&self) -> usize {
        self.w_z.shape()[1]
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_z.shape()[0]
    }

    pub fn tensors(&self) -> [&Tensor; 9] {
        [
            &self.w_z, &self.w_r, &self.w_h, &self.u_z, &self.u_r, &self.u_h, &self.b_z,
            &self.b_r, &self.b_h,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 9] {
        [
            &mut self.w_z,
            &mut self.w_r,
            &mut self.w_h,
            &mut self.u_z,
            &mut self.u_r,
            &mut self.u_h,
            &mut self.b_z,
            &mut self.b_r,
            &mut self.b_h,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let (h, i) = (self.hidden_dim(), self.input_dim());
        let expect = |t: &Tensor, shape: &[usize], name: &str| {
            if t.shape() == shape {
                Ok(())
            } else {
                Err(Error::shape(format!(
                    "gru {name}: expected {shape:?}, got {:?}",
                    t.shape()
                )))
            }
        };
        for (t, name) in self.tensors().into_iter().zip(GRU_FIELDS) {
            let shape: &[usize] = match &name[..1] {
                "w" => &[h, i],
                "u" => &[h, h],
                _ => &[h],
            };
            expect(t, shape, name)?;
        }
        Ok(())
    }

    /// Registers every tensor as a graph leaf.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> GruVars {
        let [w_z, w_r, w_h, u_z, u_r, u_h, b_z, b_r, b_h] =
            self.tensors().map(|t| g.leaf(t.clone(), trainable));
        GruVars {
            w_z,
            w_r,
            w_h,
            u_z,
            u_r,
            u_h,
            b_z,
            b_r,
            b_h,
            input_dim: self.input_dim(),
            hidden_dim: self.hidden_dim(),
        }
    }
}

/// [`GruParams`] bound into a graph.
#[derive(Debug, Clone, Copy)]
pub struct GruVars {
    pub w_z: Var,
    pub w_r: Var,
    pub w_h: Var,
    pub u_z: Var,
    pub u_r: Var,
    pub u_h: Var,
    pub b_z: Var,
    pub b_r: Var,
    pub b_h: Var,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl GruVars {
    pub fn vars(&self) -> [Var; 9] {
        [
            self.w_z, self.w_r, self.w_h, self.u_z, self.u_r, self.u_h, self.b_z, self.b_r,
            self.b_h,
        ]
    }

    pub fn step(&self, g: &mut Graph, x: Var, h_prev: Var) -> Result<Var> {
        if g.shape(x) != [self.input_dim] {
            return Err(Error::shape(format!(
                "gru input: expected [{}], got {:?}",
                self.input_dim,
                g.shape(x)
            )));
        }
        if g.shape(h_prev) != [self.hidden_dim] {
            return Err(Error::shape(format!(
                "gru state: expected [{}], got {:?}",
                self.hidden_dim,
                g.shape(h_prev)
            )));
        }
        let gate = |g: &mut Graph, w: Var, u: Var, b: Var, h: Var| -> Result<Var> {
            let wx = g.matmul(w, x)?;
            let uh = g.matmul(u, h)?;
            let s = g.add(wx, uh)?;
            g.add(s, b)
        };
        let z_pre = gate(g, self.w_z, self.u_z, self.b_z, h_prev)?;
        let z = g.sigmoid(z_pre);
        let r_pre = gate(g, self.w_r, self.u_r, self.b_r, h_prev)?;
        let r = g.sigmoid(r_pre);
        let rh = g.mul(r, h_prev)?;
        let cand_pre = gate(g, self.w_h, self.u_h, self.b_h, rh)?;
        let cand = g.tanh(cand_pre);
        // (1 − z) ⊙ h + z ⊙ h̃  ==  h + z ⊙ (h̃ − h)
        let delta = g.sub(cand, h_prev)?;
        let zd = g.mul(z, delta)?;
        g.add(h_prev, zd)
    }

    /// Runs over the rows of `xs` (`n × input_dim`), returning `n × hidden_dim`.
    pub fn run(&self, g: &mut Graph, xs: Var, h0: Option<Var>) -> Result<Var> {
        let shape = g.shape(xs).to_vec();
        if shape.len() != 2 || shape[1] != self.input_dim {
            return Err(Error::shape(format!(
                "gru sequence: expected [n, {}], got {shape:?}",
                self.input_dim
            )));
        }
        let mut h = match h0 {
            Some(h) => h,
            None => g.constant(Tensor::zeros(&[self.hidden_dim])),
        };
        let mut outputs = Vec::with_capacity(shape[0]);
        for t in 0..shape[0] {
            let x = g.row(xs, t)?;
            h = self.step(g, x, h)?;
            outputs.push(h);
        }
        g.stack_rows(&outputs)
    }
}

/// One step on plain values.
pub fn gru_step(x: &[f64], h_prev: &[f64], p: &GruParams) -> Result<Vec<f64>> {
    p.validate()?;
    let mut g = Graph::new();
    let vars = p.bind(&mut g, false);
    let x = g.constant(Tensor::vector(x.to_vec()));
    let h = g.constant(Tensor::vector(h_prev.to_vec()));
    let out = vars.step(&mut g, x, h)?;
    Ok(g.value(out).data().to_vec())
}

/// Runs a whole sequence on plain values; `h0` defaults to zeros.
pub fn gru_run(xs: &[Vec<f64>], p: &GruParams, h0: Option<&[f64]>) -> Result<Vec<Vec<f64>>> {
    if xs.is_empty() {
        return Err(Error::invalid("gru_run on an empty sequence"));
    }
    p.validate()?;
    let mut g = Graph::new();
    let vars = p.bind(&mut g, false);
    let x = g.constant(Tensor::from_rows(xs)?);
    let h0 = h0.map(|h| g.constant(Tensor::vector(h.to_vec())));
    let out = vars.run(&mut g, x, h0)?;
    let t = g.value(out);
    Ok((0..xs.len()).map(|i| t.row(i).to_vec()).collect())
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::tensor::grad_check;

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    #[test]
    fn zero_params_halve_the_state() {
        let p = GruParams::zeros(3, 2);
        let h = gru_step(&[0.4, -1.0, 2.0], &[0.6, -0.8], &p).unwrap();
        assert_eq!(h, vec![0.3, -0.4]);
        let h = gru_step(&[1.0, 1.0, 1.0], &[0.0, 0.0], &p).unwrap();
        assert_eq!(h, vec![0.0, 0.0]);

        let xs = vec![vec![1.0, 2.0, 3.0]; 3];
        let out = gru_run(&xs, &p, Some(&[0.8, -0.4])).unwrap();
        assert_eq!(out, vec![vec![0.4, -0.2], vec![0.2, -0.1], vec![0.1, -0.05]]);
    }

    #[test]
    fn scalar_case_matches_hand_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut p = GruParams::random(1, 1, 1.0, &mut rng).unwrap();
        p.b_z = Tensor::vector(vec![0.3]);
        p.b_r = Tensor::vector(vec![-0.2]);
        p.b_h = Tensor::vector(vec![0.1]);
        let v = |t: &Tensor| t.data()[0];
        let (x, h) = (0.7, -0.4);
        let z = sig(v(&p.w_z) * x + v(&p.u_z) * h + v(&p.b_z));
        let r = sig(v(&p.w_r) * x + v(&p.u_r) * h + v(&p.b_r));
        let c = (v(&p.w_h) * x + v(&p.u_h) * (r * h) + v(&p.b_h)).tanh();
        let expected = (1.0 - z) * h + z * c;
        let got = gru_step(&[x], &[h], &p).unwrap()[0];
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn dimension_errors() {
        let p = GruParams::zeros(3, 2);
        assert!(gru_step(&[1.0, 2.0], &[0.0, 0.0], &p).is_err());
        assert!(gru_step(&[1.0, 2.0, 3.0], &[0.0], &p).is_err());
        assert!(gru_run(&[], &p, None).is_err());
        let mut bad = p.clone();
        bad.u_r = Tensor::zeros(&[3, 3]);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn single_element_run_is_one_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = GruParams::random(4, 3, 0.5, &mut rng).unwrap();
        let x = vec![0.1, -0.2, 0.3, 0.9];
        let h0 = [0.2, 0.0, -0.5];
        let run = gru_run(std::slice::from_ref(&x), &p, Some(&h0)).unwrap();
        let step = gru_step(&x, &h0, &p).unwrap();
        assert_eq!(run, vec![step]);
    }

    #[test]
    fn causality_and_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let p = GruParams::random(2, 3, 0.5, &mut rng).unwrap();
        let xs: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 * 0.1, -0.3]).collect();
        let base = gru_run(&xs, &p, None).unwrap();
        assert_eq!(base.len(), xs.len());
        for t in 0..xs.len() {
            let mut ys = xs.clone();
            ys[t][0] += 0.5;
            let out = gru_run(&ys, &p, None).unwrap();
            for s in 0..t {
                assert_eq!(out[s], base[s]);
            }
            assert_ne!(out[t], base[t]);
        }
    }

    #[test]
    fn gru_gradients_pass_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut p = GruParams::random(3, 4, 0.5, &mut rng).unwrap();
        for b in [&mut p.b_z, &mut p.b_r, &mut p.b_h] {
            *b = Tensor::uniform(&[4], -0.3, 0.3, &mut rng).unwrap();
        }
        let xs = Tensor::uniform(&[5, 3], -1.0, 1.0, &mut rng).unwrap();
        let mut params: Vec<Tensor> = p.tensors().into_iter().cloned().collect();
        params.push(xs);
        let report = grad_check(
            |g, v| {
                let vars = GruVars {
                    w_z: v[0],
                    w_r: v[1],
                    w_h: v[2],
                    u_z: v[3],
                    u_r: v[4],
                    u_h: v[5],
                    b_z: v[6],
                    b_r: v[7],
                    b_h: v[8],
                    input_dim: 3,
                    hidden_dim: 4,
                };
                let out = vars.run(g, v[9], None)?;
                let w = g.constant(Tensor::uniform(&[5, 4], -1.0, 1.0, &mut ChaCha8Rng::seed_from_u64(1))?);
                let o = g.mul(out, w)?;
                Ok(g.sum(o))
            },
            &params,
            1e-5,
            100,
            2,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }
}
