//! Gated recurrent units and the bidirectional sequence classifier.
//!
//! Per step, with `x` the input and `h` the previous state:
//!
//! ```text
//! z  = σ(W_z x + U_z h + b_z)
//! r  = σ(W_r x + U_r h + b_r)
//! h̃  = act(W x + r ⊙ (U h) + b)        act = tanh by default
//! h' = (1 − z) ⊙ h + z ⊙ h̃
//! ```
//!
//! Sequences are processed in batches laid out time-major: `[T][B][I]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::activation;
use super::tensor::{gemm, gemm_small, transpose, Mat, Tensor};
use super::{softmax_rows, Parameterized};
use crate::error::{Error, Result};
use crate::NUM_CLASSES;

/// Nonlinearity of the candidate activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateActivation {
    #[default]
    Tanh,
    Sigmoid,
}

impl CandidateActivation {
    fn apply_in_place(self, xs: &mut [f64]) {
        match self {
            CandidateActivation::Tanh => activation::tanh_in_place(xs),
            CandidateActivation::Sigmoid => activation::sigmoid_in_place(xs),
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative(self, out: f64) -> f64 {
        match self {
            CandidateActivation::Tanh => 1.0 - out * out,
            CandidateActivation::Sigmoid => out * (1.0 - out),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruLayerParams {
    pub w: Tensor,
    pub w_z: Tensor,
    pub w_r: Tensor,
    pub u: Tensor,
    pub u_z: Tensor,
    pub u_r: Tensor,
    pub b: Tensor,
    pub b_z: Tensor,
    pub b_r: Tensor,
    pub activation: CandidateActivation,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct GruTrace {
    pub steps: usize,
    pub batch: usize,
    /// `(T + 1) × B × H`; block 0 is the initial state.
    pub states: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    cand: Vec<f64>,
    /// `U h` for the candidate, before the reset gate is applied.
    uh: Vec<f64>,
}

impl GruTrace {
    pub fn final_state(&self) -> &[f64] {
        let hb = self.states.len() / (self.steps + 1);
        &self.states[self.steps * hb..]
    }
}

impl GruLayerParams {
    pub fn zeros(input: usize, hidden: usize, activation: CandidateActivation) -> Self {
        GruLayerParams {
            w: Tensor::zeros(&[hidden, input]),
            w_z: Tensor::zeros(&[hidden, input]),
            w_r: Tensor::zeros(&[hidden, input]),
            u: Tensor::zeros(&[hidden, hidden]),
            u_z: Tensor::zeros(&[hidden, hidden]),
            u_r: Tensor::zeros(&[hidden, hidden]),
            b: Tensor::zeros(&[hidden]),
            b_z: Tensor::zeros(&[hidden]),
            b_r: Tensor::zeros(&[hidden]),
            activation,
        }
    }

    /// Uniform `±1/√fan_in` weights, zero biases.
    pub fn init(
        input: usize,
        hidden: usize,
        activation: CandidateActivation,
        rng: &mut impl Rng,
    ) -> Self {
        let si = 1.0 / (input as f64).sqrt();
        let sh = 1.0 / (hidden as f64).sqrt();
        GruLayerParams {
            w: Tensor::uniform(&[hidden, input], si, rng),
            w_z: Tensor::uniform(&[hidden, input], si, rng),
            w_r: Tensor::uniform(&[hidden, input], si, rng),
            u: Tensor::uniform(&[hidden, hidden], sh, rng),
            u_z: Tensor::uniform(&[hidden, hidden], sh, rng),
            u_r: Tensor::uniform(&[hidden, hidden], sh, rng),
            b: Tensor::zeros(&[hidden]),
            b_z: Tensor::zeros(&[hidden]),
            b_r: Tensor::zeros(&[hidden]),
            activation,
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.b.len()
    }

    pub fn input_size(&self) -> usize {
        self.w.shape()[1]
    }

    fn check_shapes(&self) -> Result<()> {
        let (h, i) = (self.hidden_size(), self.input_size());
        let ok = [&self.w, &self.w_z, &self.w_r].iter().all(|t| t.shape() == [h, i])
            && [&self.u, &self.u_z, &self.u_r].iter().all(|t| t.shape() == [h, h])
            && [&self.b, &self.b_z, &self.b_r].iter().all(|t| t.shape() == [h]);
        if ok {
            Ok(())
        } else {
            Err(Error::contract("inconsistent GRU parameter shapes"))
        }
    }

    /// Gate rows stacked as `[z; r; candidate]`.
    fn packed_input(&self) -> Vec<f64> {
        [self.w_z.data(), self.w_r.data(), self.w.data()].concat()
    }

    fn packed_recurrent(&self) -> Vec<f64> {
        [self.u_z.data(), self.u_r.data(), self.u.data()].concat()
    }

    fn packed_bias(&self) -> Vec<f64> {
        [self.b_z.data(), self.b_r.data(), self.b.data()].concat()
    }

    /// Runs the layer over a time-major batch `xs` of `steps × batch × input`.
    pub fn forward(&self, xs: &[f64], steps: usize, batch: usize, h0: Option<&[f64]>) -> Result<GruTrace> {
        self.check_shapes()?;
        let (hs, is) = (self.hidden_size(), self.input_size());
        if xs.len() != steps * batch * is {
            return Err(Error::contract("GRU input has the wrong length"));
        }
        let g = 3 * hs;
        let bh = batch * hs;
        let mut ax = vec![0.0; steps * batch * g];
        let w_all = self.packed_input();
        gemm(
            Mat::new(xs, steps * batch, is),
            Mat::t(&w_all, g, is),
            0.0,
            &mut ax,
        );
        let bias = self.packed_bias();
        for row in ax.chunks_exact_mut(g) {
            for (v, b) in row.iter_mut().zip(&bias) {
                *v += b;
            }
        }
        let u_t = transpose(&self.packed_recurrent(), g, hs);

        let mut states = vec![0.0; (steps + 1) * bh];
        if let Some(h0) = h0 {
            if h0.len() != bh {
                return Err(Error::contract("initial state has the wrong length"));
            }
            states[..bh].copy_from_slice(h0);
        }
        let mut z = vec![0.0; steps * bh];
        let mut r = vec![0.0; steps * bh];
        let mut cand = vec![0.0; steps * bh];
        let mut uh = vec![0.0; steps * bh];
        let mut ah = vec![0.0; batch * g];
        let act = self.activation;
        for t in 0..steps {
            let (prev_part, next_part) = states.split_at_mut((t + 1) * bh);
            let prev = &prev_part[t * bh..];
            let next = &mut next_part[..bh];
            let ax_t = &ax[t * batch * g..(t + 1) * batch * g];
            gemm_small(prev, batch, hs, &u_t, g, &mut ah, false);
            for bi in 0..batch {
                let o = t * bh + bi * hs;
                let hp = &prev[bi * hs..(bi + 1) * hs];
                let ah = &ah[bi * g..(bi + 1) * g];
                let axr = &ax_t[bi * g..(bi + 1) * g];
                let zs = &mut z[o..o + hs];
                let rs = &mut r[o..o + hs];
                for j in 0..hs {
                    zs[j] = axr[j] + ah[j];
                    rs[j] = axr[hs + j] + ah[hs + j];
                }
                activation::sigmoid_in_place(zs);
                activation::sigmoid_in_place(rs);
                let cs = &mut cand[o..o + hs];
                uh[o..o + hs].copy_from_slice(&ah[2 * hs..]);
                for j in 0..hs {
                    cs[j] = axr[2 * hs + j] + rs[j] * ah[2 * hs + j];
                }
                act.apply_in_place(cs);
                let hn = &mut next[bi * hs..(bi + 1) * hs];
                for j in 0..hs {
                    hn[j] = (1.0 - zs[j]) * hp[j] + zs[j] * cs[j];
                }
            }
        }
        Ok(GruTrace {
            steps,
            batch,
            states,
            z,
            r,
            cand,
            uh,
        })
    }

    /// Backpropagates a gradient on the final state. Parameter gradients are
    /// added into `grads`; the gradient on the initial state is returned.
    pub fn backward(
        &self,
        xs: &[f64],
        trace: &GruTrace,
        d_final: &[f64],
        grads: &mut GruLayerParams,
    ) -> Vec<f64> {
        let (hs, is) = (self.hidden_size(), self.input_size());
        let (steps, batch) = (trace.steps, trace.batch);
        let g = 3 * hs;
        let bh = batch * hs;
        assert_eq!(d_final.len(), bh);
        let u_all = self.packed_recurrent();
        let act = self.activation;

        let mut d_ax = vec![0.0; steps * batch * g];
        let mut d_ah_t = vec![0.0; batch * g];
        let mut dh = d_final.to_vec();
        let mut dh_prev = vec![0.0; bh];
        for t in (0..steps).rev() {
            let prev = &trace.states[t * bh..(t + 1) * bh];
            let o = t * bh;
            let (zs, rs) = (&trace.z[o..o + bh], &trace.r[o..o + bh]);
            let (cs, uhs) = (&trace.cand[o..o + bh], &trace.uh[o..o + bh]);
            let block = t * batch * g..(t + 1) * batch * g;
            backward_step(
                act,
                hs,
                [zs, rs, cs, uhs, prev, &dh],
                &mut dh_prev,
                &mut d_ax[block],
                &mut d_ah_t,
            );
            gemm_small(&d_ah_t, batch, g, &u_all, hs, &mut dh_prev, true);
            std::mem::swap(&mut dh, &mut dh_prev);
        }

        let rows = steps * batch;
        let mut dw = vec![0.0; g * is];
        gemm(Mat::t(&d_ax, rows, g), Mat::new(xs, rows, is), 0.0, &mut dw);
        let mut db = vec![0.0; g];
        for row in d_ax.chunks_exact(g) {
            for (acc, v) in db.iter_mut().zip(row) {
                *acc += v;
            }
        }
        // the recurrent path sees the candidate gradient through r
        for (row, r) in d_ax.chunks_exact_mut(g).zip(trace.r.chunks_exact(hs)) {
            for (v, rj) in row[2 * hs..].iter_mut().zip(r) {
                *v *= rj;
            }
        }
        let mut du = vec![0.0; g * hs];
        gemm(
            Mat::t(&d_ax, rows, g),
            Mat::new(&trace.states[..rows * hs], rows, hs),
            0.0,
            &mut du,
        );
        let (wi, wh) = (hs * is, hs * hs);
        add_into(grads.w_z.data_mut(), &dw[..wi]);
        add_into(grads.w_r.data_mut(), &dw[wi..2 * wi]);
        add_into(grads.w.data_mut(), &dw[2 * wi..]);
        add_into(grads.u_z.data_mut(), &du[..wh]);
        add_into(grads.u_r.data_mut(), &du[wh..2 * wh]);
        add_into(grads.u.data_mut(), &du[2 * wh..]);
        add_into(grads.b_z.data_mut(), &db[..hs]);
        add_into(grads.b_r.data_mut(), &db[hs..2 * hs]);
        add_into(grads.b.data_mut(), &db[2 * hs..]);
        dh
    }
}

activation::dispatch!(
/// Gate gradients for one time step. `dh_prev` receives the direct path
/// `dh ⊙ (1 − z)`; rows of `d_ax`/`d_ah` are `[z; r; candidate]`.
backward_step(
    act: CandidateActivation,
    hs: usize,
    parts: [&[f64]; 6],
    dh_prev: &mut [f64],
    d_ax: &mut [f64],
    d_ah: &mut [f64]
) {
    let [z, r, cand, uh, prev, dh] = parts;
    let g = 3 * hs;
    for bi in 0..dh.len() / hs {
        let s = bi * hs..(bi + 1) * hs;
        let (z, r, cand, uh) = (&z[s.clone()], &r[s.clone()], &cand[s.clone()], &uh[s.clone()]);
        let (prev, dh) = (&prev[s.clone()], &dh[s.clone()]);
        let dh_prev = &mut dh_prev[s];
        let (ax_z, rest) = d_ax[bi * g..(bi + 1) * g].split_at_mut(hs);
        let (ax_r, ax_c) = rest.split_at_mut(hs);
        let (ah_z, rest) = d_ah[bi * g..(bi + 1) * g].split_at_mut(hs);
        let (ah_r, ah_c) = rest.split_at_mut(hs);
        for j in 0..hs {
            let (zj, rj, cj, d) = (z[j], r[j], cand[j], dh[j]);
            let dz = d * (cj - prev[j]);
            dh_prev[j] = d * (1.0 - zj);
            let dpc = d * zj * act.derivative(cj);
            let dpz = dz * zj * (1.0 - zj);
            let dpr = dpc * uh[j] * rj * (1.0 - rj);
            ax_z[j] = dpz;
            ax_r[j] = dpr;
            ax_c[j] = dpc;
            ah_z[j] = dpz;
            ah_r[j] = dpr;
            ah_c[j] = dpc * rj;
        }
    }
});

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// One GRU step for a single input vector.
pub fn gru_cell_step(params: &GruLayerParams, x: &[f64], h_prev: &[f64]) -> Result<Vec<f64>> {
    if x.len() != params.input_size() || h_prev.len() != params.hidden_size() {
        return Err(Error::contract("GRU cell input or state has the wrong size"));
    }
    let trace = params.forward(x, 1, 1, Some(h_prev))?;
    Ok(trace.final_state().to_vec())
}

impl Parameterized for GruLayerParams {
    fn named_tensors(&self) -> Vec<(&'static str, &Tensor)> {
        vec![
            ("W", &self.w),
            ("W_z", &self.w_z),
            ("W_r", &self.w_r),
            ("U", &self.u),
            ("U_z", &self.u_z),
            ("U_r", &self.u_r),
            ("b", &self.b),
            ("b_z", &self.b_z),
            ("b_r", &self.b_r),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.w,
            &mut self.w_z,
            &mut self.w_r,
            &mut self.u,
            &mut self.u_z,
            &mut self.u_r,
            &mut self.b,
            &mut self.b_z,
            &mut self.b_r,
        ]
    }
}

/// Forward and backward GRU over the same sequence; the two final states are
/// concatenated and fed to a softmax layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BgruClassifier {
    pub forward: GruLayerParams,
    pub backward: GruLayerParams,
    /// `classes × 2·hidden`
    pub w_out: Tensor,
    pub b_out: Tensor,
}

/// Saved activations of one batched classifier pass.
pub struct BgruPass {
    fwd: GruTrace,
    bwd: GruTrace,
    xs_rev: Vec<f64>,
    merged: Vec<f64>,
    pub probs: Vec<f64>,
}

impl BgruClassifier {
    pub fn init(
        input: usize,
        hidden: usize,
        activation: CandidateActivation,
        rng: &mut impl Rng,
    ) -> Self {
        let forward = GruLayerParams::init(input, hidden, activation, rng);
        let backward = GruLayerParams::init(input, hidden, activation, rng);
        let so = 1.0 / ((2 * hidden) as f64).sqrt();
        BgruClassifier {
            forward,
            backward,
            w_out: Tensor::uniform(&[NUM_CLASSES, 2 * hidden], so, rng),
            b_out: Tensor::zeros(&[NUM_CLASSES]),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let a = self.forward.activation;
        BgruClassifier {
            forward: GruLayerParams::zeros(self.input_size(), self.hidden_size(), a),
            backward: GruLayerParams::zeros(self.input_size(), self.hidden_size(), a),
            w_out: Tensor::zeros_like(&self.w_out),
            b_out: Tensor::zeros_like(&self.b_out),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.forward.hidden_size()
    }

    pub fn input_size(&self) -> usize {
        self.forward.input_size()
    }

    pub fn classes(&self) -> usize {
        self.b_out.len()
    }

    /// Softmax probabilities for a time-major batch, `batch × classes`.
    pub fn run(&self, xs: &[f64], steps: usize, batch: usize) -> Result<BgruPass> {
        if steps == 0 {
            return Err(Error::domain("cannot classify an empty sequence"));
        }
        let hs = self.hidden_size();
        let step_len = batch * self.input_size();
        let mut xs_rev = Vec::with_capacity(xs.len());
        for t in (0..steps).rev() {
            xs_rev.extend_from_slice(&xs[t * step_len..(t + 1) * step_len]);
        }
        let fwd = self.forward.forward(xs, steps, batch, None)?;
        let bwd = self.backward.forward(&xs_rev, steps, batch, None)?;
        let mut merged = vec![0.0; batch * 2 * hs];
        for bi in 0..batch {
            merged[bi * 2 * hs..bi * 2 * hs + hs]
                .copy_from_slice(&fwd.final_state()[bi * hs..(bi + 1) * hs]);
            merged[bi * 2 * hs + hs..(bi + 1) * 2 * hs]
                .copy_from_slice(&bwd.final_state()[bi * hs..(bi + 1) * hs]);
        }
        let k = self.classes();
        let mut logits = vec![0.0; batch * k];
        for row in logits.chunks_exact_mut(k) {
            row.copy_from_slice(self.b_out.data());
        }
        gemm(
            Mat::new(&merged, batch, 2 * hs),
            Mat::t(self.w_out.data(), k, 2 * hs),
            1.0,
            &mut logits,
        );
        let probs = softmax_rows(&logits, k);
        Ok(BgruPass {
            fwd,
            bwd,
            xs_rev,
            merged,
            probs,
        })
    }

    /// Adds the gradient of the mean cross-entropy over the batch to `grads`.
    pub fn backward(
        &self,
        xs: &[f64],
        pass: &BgruPass,
        labels: &[u8],
        grads: &mut BgruClassifier,
    ) {
        let batch = labels.len();
        let k = self.classes();
        let hs = self.hidden_size();
        let mut d_logits = pass.probs.clone();
        for (bi, &y) in labels.iter().enumerate() {
            d_logits[bi * k + y as usize] -= 1.0;
        }
        let inv = 1.0 / batch as f64;
        d_logits.iter_mut().for_each(|v| *v *= inv);

        gemm(
            Mat::t(&d_logits, batch, k),
            Mat::new(&pass.merged, batch, 2 * hs),
            1.0,
            grads.w_out.data_mut(),
        );
        for row in d_logits.chunks_exact(k) {
            add_into(grads.b_out.data_mut(), row);
        }
        let mut d_merged = vec![0.0; batch * 2 * hs];
        gemm(
            Mat::new(&d_logits, batch, k),
            Mat::new(self.w_out.data(), k, 2 * hs),
            0.0,
            &mut d_merged,
        );
        let mut d_f = vec![0.0; batch * hs];
        let mut d_b = vec![0.0; batch * hs];
        for bi in 0..batch {
            d_f[bi * hs..(bi + 1) * hs].copy_from_slice(&d_merged[bi * 2 * hs..bi * 2 * hs + hs]);
            d_b[bi * hs..(bi + 1) * hs]
                .copy_from_slice(&d_merged[bi * 2 * hs + hs..(bi + 1) * 2 * hs]);
        }
        self.forward.backward(xs, &pass.fwd, &d_f, &mut grads.forward);
        self.backward
            .backward(&pass.xs_rev, &pass.bwd, &d_b, &mut grads.backward);
    }
}

impl Parameterized for BgruClassifier {
    fn named_tensors(&self) -> Vec<(&'static str, &Tensor)> {
        let mut out = Vec::new();
        for (name, t) in self.forward.named_tensors() {
            out.push((fwd_name(name), t));
        }
        for (name, t) in self.backward.named_tensors() {
            out.push((bwd_name(name), t));
        }
        out.push(("out.W", &self.w_out));
        out.push(("out.b", &self.b_out));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.forward.tensors_mut();
        out.extend(self.backward.tensors_mut());
        out.push(&mut self.w_out);
        out.push(&mut self.b_out);
        out
    }
}

fn fwd_name(n: &str) -> &'static str {
    match n {
        "W" => "fwd.W",
        "W_z" => "fwd.W_z",
        "W_r" => "fwd.W_r",
        "U" => "fwd.U",
        "U_z" => "fwd.U_z",
        "U_r" => "fwd.U_r",
        "b" => "fwd.b",
        "b_z" => "fwd.b_z",
        _ => "fwd.b_r",
    }
}

fn bwd_name(n: &str) -> &'static str {
    match n {
        "W" => "bwd.W",
        "W_z" => "bwd.W_z",
        "W_r" => "bwd.W_r",
        "U" => "bwd.U",
        "U_z" => "bwd.U_z",
        "U_r" => "bwd.U_r",
        "b" => "bwd.b",
        "b_z" => "bwd.b_z",
        _ => "bwd.b_r",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::gradcheck::{check_gradients, GradCheckReport};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_layer(rng: &mut ChaCha8Rng, input: usize, hidden: usize) -> GruLayerParams {
        let mut p = GruLayerParams::init(input, hidden, CandidateActivation::Tanh, rng);
        for t in [&mut p.b, &mut p.b_z, &mut p.b_r] {
            *t = Tensor::uniform(&[hidden], 0.5, rng);
        }
        p
    }

    /// Straight transcription of the gate equations with scalar loops.
    fn scalar_step(p: &GruLayerParams, x: &[f64], h: &[f64]) -> Vec<f64> {
        let (hs, is) = (p.hidden_size(), p.input_size());
        let lin = |w: &Tensor, u: Option<&Tensor>, b: &Tensor, j: usize| {
            let mut s = b.data()[j];
            for k in 0..is {
                s += w.data()[j * is + k] * x[k];
            }
            if let Some(u) = u {
                for k in 0..hs {
                    s += u.data()[j * hs + k] * h[k];
                }
            }
            s
        };
        (0..hs)
            .map(|j| {
                let z = 1.0 / (1.0 + (-lin(&p.w_z, Some(&p.u_z), &p.b_z, j)).exp());
                let r = 1.0 / (1.0 + (-lin(&p.w_r, Some(&p.u_r), &p.b_r, j)).exp());
                let mut uh = 0.0;
                for k in 0..hs {
                    uh += p.u.data()[j * hs + k] * h[k];
                }
                let c = (lin(&p.w, None, &p.b, j) + r * uh).tanh();
                (1.0 - z) * h[j] + z * c
            })
            .collect()
    }

    #[test]
    fn zero_weights_halve_state() {
        let p = GruLayerParams::zeros(3, 4, CandidateActivation::Tanh);
        let h = [0.4, -1.0, 2.0, 0.0];
        let out = gru_cell_step(&p, &[1.0, -2.0, 3.0], &h).unwrap();
        for (o, hv) in out.iter().zip(h.iter()) {
            assert_eq!(*o, 0.5 * hv);
        }
    }

    #[test]
    fn closed_update_gate_keeps_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = small_layer(&mut rng, 3, 5);
        p.b_z.fill(-1e9);
        let h: Vec<f64> = (0..5).map(|i| i as f64 * 0.3 - 0.7).collect();
        let out = gru_cell_step(&p, &[0.3, -0.2, 0.9], &h).unwrap();
        for (o, hv) in out.iter().zip(h.iter()) {
            assert!((o - hv).abs() < 1e-12);
        }
    }

    #[test]
    fn cell_matches_scalar_transcription() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let p = small_layer(&mut rng, 3, 5);
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let h: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let got = gru_cell_step(&p, &x, &h).unwrap();
            let want = scalar_step(&p, &x, &h);
            for (a, b) in got.iter().zip(want.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn batched_sequence_matches_stepwise_cells() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = small_layer(&mut rng, 2, 4);
        let (steps, batch) = (6, 3);
        let xs: Vec<f64> = (0..steps * batch * 2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let trace = p.forward(&xs, steps, batch, None).unwrap();
        for b in 0..batch {
            let mut h = vec![0.0; 4];
            for t in 0..steps {
                let x = &xs[(t * batch + b) * 2..(t * batch + b) * 2 + 2];
                h = gru_cell_step(&p, x, &h).unwrap();
            }
            for j in 0..4 {
                assert!((trace.final_state()[b * 4 + j] - h[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let p = GruLayerParams::zeros(3, 4, CandidateActivation::Tanh);
        assert!(gru_cell_step(&p, &[1.0, 2.0], &[0.0; 4]).is_err());
        assert!(gru_cell_step(&p, &[1.0, 2.0, 3.0], &[0.0; 3]).is_err());
    }

    #[test]
    fn cell_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for activation in [CandidateActivation::Tanh, CandidateActivation::Sigmoid] {
            let mut p = small_layer(&mut rng, 3, 4);
            p.activation = activation;
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let h0: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let coef: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let loss = |q: &GruLayerParams| -> f64 {
                let h = gru_cell_step(q, &x, &h0).unwrap();
                h.iter().zip(&coef).map(|(a, b)| a * b).sum()
            };
            let trace = p.forward(&x, 1, 1, Some(&h0)).unwrap();
            let mut grads = GruLayerParams::zeros(3, 4, activation);
            let dh0 = p.backward(&x, &trace, &coef, &mut grads);
            let report: GradCheckReport = check_gradients(&p, &grads, loss);
            assert!(report.max_rel_error < 1e-4, "{report:?}");

            for j in 0..4 {
                let eps = 1e-5;
                let mut hp = h0.clone();
                hp[j] += eps;
                let mut hm = h0.clone();
                hm[j] -= eps;
                let f = |hh: &[f64]| -> f64 {
                    gru_cell_step(&p, &x, hh)
                        .unwrap()
                        .iter()
                        .zip(&coef)
                        .map(|(a, b)| a * b)
                        .sum()
                };
                let num = (f(&hp) - f(&hm)) / (2.0 * eps);
                assert!((num - dh0[j]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn palindrome_with_tied_directions() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut model = BgruClassifier::init(2, 4, CandidateActivation::Tanh, &mut rng);
        model.backward = model.forward.clone();
        let half: Vec<[f64; 2]> = (0..4).map(|_| [rng.gen(), rng.gen()]).collect();
        let mut seq = half.clone();
        seq.extend(half.iter().rev());
        let xs: Vec<f64> = seq.iter().flat_map(|p| p.iter().copied()).collect();
        let pass = model.run(&xs, seq.len(), 1).unwrap();
        assert_eq!(&pass.merged[..4], &pass.merged[4..]);
        let s: f64 = pass.probs.iter().sum();
        assert!((s - 1.0).abs() < 1e-9);
    }

    #[test]
    fn empty_sequence_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let model = BgruClassifier::init(2, 4, CandidateActivation::Tanh, &mut rng);
        assert!(model.run(&[], 0, 1).is_err());
    }
}
