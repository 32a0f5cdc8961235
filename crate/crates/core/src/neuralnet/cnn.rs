//! Compact convolutional classifier for rendered trajectories.
//!
//! `conv3x3 → relu → maxpool2 → conv3x3 → relu → maxpool2 → dense → softmax`,
//! valid convolutions with stride 1, floor pooling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{gemm, gemm_small, transpose, Mat, Tensor};
use super::{softmax_rows, Parameterized};
use crate::error::{Error, Result};
use crate::NUM_CLASSES;

const K: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnnConfig {
    pub input_size: usize,
    pub conv1_filters: usize,
    pub conv2_filters: usize,
}

impl Default for CnnConfig {
    fn default() -> Self {
        CnnConfig {
            input_size: 64,
            conv1_filters: 8,
            conv2_filters: 16,
        }
    }
}

impl CnnConfig {
    fn dims(&self) -> Dims {
        let o1 = self.input_size - (K - 1);
        let p1 = o1 / 2;
        let o2 = p1 - (K - 1);
        let p2 = o2 / 2;
        Dims { o1, p1, o2, p2 }
    }

    pub fn flattened(&self) -> usize {
        let d = self.dims();
        self.conv2_filters * d.p2 * d.p2
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size < 10 || self.conv1_filters == 0 || self.conv2_filters == 0 {
            return Err(Error::contract("CNN needs input >= 10 and nonzero filters"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Dims {
    o1: usize,
    p1: usize,
    o2: usize,
    p2: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnParams {
    pub config: CnnConfig,
    /// `c1 × 1 × 3 × 3`
    pub conv1_w: Tensor,
    pub conv1_b: Tensor,
    /// `c2 × c1 × 3 × 3`
    pub conv2_w: Tensor,
    pub conv2_b: Tensor,
    /// `classes × flattened`
    pub dense_w: Tensor,
    pub dense_b: Tensor,
}

/// Per-sample state kept for the backward pass. The im2col buffers are
/// rebuilt on demand, and the relu masks are read off the pooled values.
struct SampleTrace {
    image: Vec<f64>,
    pool1: Vec<f64>,
    arg1: Vec<u32>,
    arg2: Vec<u32>,
}

pub struct CnnPass {
    traces: Vec<SampleTrace>,
    /// `batch × flattened`
    flat: Vec<f64>,
    pub probs: Vec<f64>,
}

impl CnnParams {
    pub fn init(config: CnnConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let (c1, c2) = (config.conv1_filters, config.conv2_filters);
        let f = config.flattened();
        Ok(CnnParams {
            config,
            conv1_w: Tensor::uniform(&[c1, 1, K, K], 1.0 / ((K * K) as f64).sqrt(), rng),
            conv1_b: Tensor::zeros(&[c1]),
            conv2_w: Tensor::uniform(&[c2, c1, K, K], 1.0 / ((c1 * K * K) as f64).sqrt(), rng),
            conv2_b: Tensor::zeros(&[c2]),
            dense_w: Tensor::uniform(&[NUM_CLASSES, f], 1.0 / (f as f64).sqrt(), rng),
            dense_b: Tensor::zeros(&[NUM_CLASSES]),
        })
    }

    pub fn zeros(config: CnnConfig) -> Self {
        let (c1, c2) = (config.conv1_filters, config.conv2_filters);
        CnnParams {
            config,
            conv1_w: Tensor::zeros(&[c1, 1, K, K]),
            conv1_b: Tensor::zeros(&[c1]),
            conv2_w: Tensor::zeros(&[c2, c1, K, K]),
            conv2_b: Tensor::zeros(&[c2]),
            dense_w: Tensor::zeros(&[NUM_CLASSES, config.flattened()]),
            dense_b: Tensor::zeros(&[NUM_CLASSES]),
        }
    }

    pub fn zeros_like(&self) -> Self {
        CnnParams::zeros(self.config)
    }

    /// Forward pass over `images`, each `input_size²` values in `[0, 1]`.
    pub fn run(&self, images: &[&[f64]]) -> Result<CnnPass> {
        let s = self.config.input_size;
        let d = self.config.dims();
        let (c1, c2) = (self.config.conv1_filters, self.config.conv2_filters);
        let (n1, n2) = (d.o1 * d.o1, d.o2 * d.o2);
        let f = self.config.flattened();
        let k = NUM_CLASSES;
        let b = images.len();

        let mut col1 = vec![0.0; K * K * n1];
        let mut act1 = vec![0.0; c1 * n1];
        let mut col2 = vec![0.0; c1 * K * K * n2];
        let mut act2 = vec![0.0; c2 * n2];
        let mut flat = vec![0.0; b * f];
        let mut traces = Vec::with_capacity(b);
        for (img, flat_row) in images.iter().zip(flat.chunks_exact_mut(f)) {
            if img.len() != s * s {
                return Err(Error::contract(format!(
                    "CNN expects a {s}x{s} image, got {} values",
                    img.len()
                )));
            }
            im2col(img, 1, s, d.o1, &mut col1);
            conv_apply(&self.conv1_w, &self.conv1_b, &col1, c1, K * K, n1, &mut act1);
            let mut pool1 = vec![0.0; c1 * d.p1 * d.p1];
            let mut arg1 = vec![0u32; pool1.len()];
            maxpool(&act1, c1, d.o1, d.p1, &mut pool1, &mut arg1);

            im2col(&pool1, c1, d.p1, d.o2, &mut col2);
            conv_apply(&self.conv2_w, &self.conv2_b, &col2, c2, c1 * K * K, n2, &mut act2);
            let mut arg2 = vec![0u32; f];
            maxpool(&act2, c2, d.o2, d.p2, flat_row, &mut arg2);
            traces.push(SampleTrace {
                image: img.to_vec(),
                pool1,
                arg1,
                arg2,
            });
        }

        let mut logits = vec![0.0; b * k];
        for row in logits.chunks_exact_mut(k) {
            row.copy_from_slice(self.dense_b.data());
        }
        gemm(
            Mat::new(&flat, b, f),
            Mat::t(self.dense_w.data(), k, f),
            1.0,
            &mut logits,
        );
        Ok(CnnPass {
            traces,
            flat,
            probs: softmax_rows(&logits, k),
        })
    }

    /// Adds the gradient of the mean cross-entropy over the batch to `grads`.
    pub fn backward(&self, pass: &CnnPass, labels: &[u8], grads: &mut CnnParams) {
        let d = self.config.dims();
        let s = self.config.input_size;
        let (c1, c2) = (self.config.conv1_filters, self.config.conv2_filters);
        let k = NUM_CLASSES;
        let b = labels.len();
        let inv = 1.0 / b as f64;
        let f = self.config.flattened();
        let (n1, n2) = (d.o1 * d.o1, d.o2 * d.o2);

        let mut dl = pass.probs.clone();
        for (row, &y) in dl.chunks_exact_mut(k).zip(labels) {
            row[y as usize] -= 1.0;
            row.iter_mut().for_each(|v| *v *= inv);
        }
        gemm(
            Mat::t(&dl, b, k),
            Mat::new(&pass.flat, b, f),
            1.0,
            grads.dense_w.data_mut(),
        );
        for row in dl.chunks_exact(k) {
            for (g, v) in grads.dense_b.data_mut().iter_mut().zip(row) {
                *g += v;
            }
        }
        let mut d_flat = vec![0.0; b * f];
        gemm(
            Mat::new(&dl, b, k),
            Mat::new(self.dense_w.data(), k, f),
            0.0,
            &mut d_flat,
        );

        let w2_t = transpose(self.conv2_w.data(), c2, c1 * K * K);
        let mut d_act2 = vec![0.0; c2 * n2];
        let mut col2 = vec![0.0; c1 * K * K * n2];
        let mut d_col2 = vec![0.0; c1 * K * K * n2];
        let mut d_pool1 = vec![0.0; c1 * d.p1 * d.p1];
        let mut d_act1 = vec![0.0; c1 * n1];
        let mut col1 = vec![0.0; K * K * n1];
        for (bi, tr) in pass.traces.iter().enumerate() {
            let flat = &pass.flat[bi * f..(bi + 1) * f];
            // unpool, masked by relu
            d_act2.fill(0.0);
            for ((g, &src), &v) in d_flat[bi * f..(bi + 1) * f].iter().zip(&tr.arg2).zip(flat) {
                if v > 0.0 {
                    d_act2[src as usize] += g;
                }
            }
            for (ch, g) in grads.conv2_b.data_mut().iter_mut().enumerate() {
                *g += d_act2[ch * n2..(ch + 1) * n2].iter().sum::<f64>();
            }
            im2col(&tr.pool1, c1, d.p1, d.o2, &mut col2);
            gemm(
                Mat::new(&d_act2, c2, n2),
                Mat::t(&col2, c1 * K * K, n2),
                1.0,
                grads.conv2_w.data_mut(),
            );
            gemm_small(&w2_t, c1 * K * K, c2, &d_act2, n2, &mut d_col2, false);
            col2im(&d_col2, c1, d.p1, d.o2, &mut d_pool1);

            d_act1.fill(0.0);
            for ((g, &src), &v) in d_pool1.iter().zip(&tr.arg1).zip(&tr.pool1) {
                if v > 0.0 {
                    d_act1[src as usize] += g;
                }
            }
            for (ch, g) in grads.conv1_b.data_mut().iter_mut().enumerate() {
                *g += d_act1[ch * n1..(ch + 1) * n1].iter().sum::<f64>();
            }
            im2col(&tr.image, 1, s, d.o1, &mut col1);
            gemm(
                Mat::new(&d_act1, c1, n1),
                Mat::t(&col1, K * K, n1),
                1.0,
                grads.conv1_w.data_mut(),
            );
        }
    }

    /// Output of the first convolution (before relu), `c1 × o1 × o1`.
    pub fn conv1_response(&self, img: &[f64]) -> Vec<f64> {
        let d = self.config.dims();
        let c1 = self.config.conv1_filters;
        let mut col1 = vec![0.0; K * K * d.o1 * d.o1];
        im2col(img, 1, self.config.input_size, d.o1, &mut col1);
        let mut out = vec![0.0; c1 * d.o1 * d.o1];
        for ch in 0..c1 {
            out[ch * d.o1 * d.o1..(ch + 1) * d.o1 * d.o1].fill(self.conv1_b.data()[ch]);
        }
        gemm(
            Mat::new(self.conv1_w.data(), c1, K * K),
            Mat::new(&col1, K * K, d.o1 * d.o1),
            1.0,
            &mut out,
        );
        out
    }
}

/// `out = relu(W · col + b)` with `col` laid out `taps × positions`.
fn conv_apply(
    w: &Tensor,
    b: &Tensor,
    col: &[f64],
    filters: usize,
    taps: usize,
    positions: usize,
    out: &mut [f64],
) {
    for ch in 0..filters {
        out[ch * positions..(ch + 1) * positions].fill(b.data()[ch]);
    }
    gemm_small(w.data(), filters, taps, col, positions, out, true);
    for v in out.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Rows are `(channel, dy, dx)` taps, columns output positions.
fn im2col(input: &[f64], channels: usize, size: usize, out: usize, col: &mut [f64]) {
    let positions = out * out;
    debug_assert_eq!(col.len(), channels * K * K * positions);
    for c in 0..channels {
        let plane = &input[c * size * size..(c + 1) * size * size];
        for dy in 0..K {
            for dx in 0..K {
                let row = ((c * K + dy) * K + dx) * positions;
                for oy in 0..out {
                    let src = &plane[(oy + dy) * size + dx..(oy + dy) * size + dx + out];
                    col[row + oy * out..row + oy * out + out].copy_from_slice(src);
                }
            }
        }
    }
}

fn col2im(col: &[f64], channels: usize, size: usize, out: usize, img: &mut [f64]) {
    let positions = out * out;
    img.fill(0.0);
    for c in 0..channels {
        for dy in 0..K {
            for dx in 0..K {
                let row = ((c * K + dy) * K + dx) * positions;
                for oy in 0..out {
                    let base = c * size * size + (oy + dy) * size + dx;
                    let dst = &mut img[base..base + out];
                    for (v, g) in dst.iter_mut().zip(&col[row + oy * out..row + oy * out + out]) {
                        *v += g;
                    }
                }
            }
        }
    }
}

/// 2×2 max pooling into `vals`, recording the flat source index of each.
/// Ties go to the first of top-left, top-right, bottom-left, bottom-right.
fn maxpool(input: &[f64], channels: usize, size: usize, out: usize, vals: &mut [f64], args: &mut [u32]) {
    for c in 0..channels {
        for py in 0..out {
            let top = (c * size + 2 * py) * size;
            let (r0, r1) = (&input[top..top + size], &input[top + size..top + 2 * size]);
            let o = (c * out + py) * out;
            let (v_row, a_row) = (&mut vals[o..o + out], &mut args[o..o + out]);
            for px in 0..out {
                let x = 2 * px;
                let mut best = r0[x];
                let mut arg = top + x;
                for (v, idx) in [(r0[x + 1], top + x + 1), (r1[x], top + size + x), (r1[x + 1], top + size + x + 1)] {
                    if v > best {
                        best = v;
                        arg = idx;
                    }
                }
                v_row[px] = best;
                a_row[px] = arg as u32;
            }
        }
    }
}

impl Parameterized for CnnParams {
    fn named_tensors(&self) -> Vec<(&'static str, &Tensor)> {
        vec![
            ("conv1.W", &self.conv1_w),
            ("conv1.b", &self.conv1_b),
            ("conv2.W", &self.conv2_w),
            ("conv2.b", &self.conv2_b),
            ("dense.W", &self.dense_w),
            ("dense.b", &self.dense_b),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.conv1_w,
            &mut self.conv1_b,
            &mut self.conv2_w,
            &mut self.conv2_b,
            &mut self.dense_w,
            &mut self.dense_b,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_model_is_uniform() {
        let p = CnnParams::zeros(CnnConfig::default());
        let img = vec![0.0; 64 * 64];
        let pass = p.run(&[&img]).unwrap();
        for v in &pass.probs {
            assert!((v - 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn probabilities_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = CnnParams::init(CnnConfig::default(), &mut rng).unwrap();
        let img: Vec<f64> = (0..64 * 64).map(|_| rng.gen::<f64>()).collect();
        let pass = p.run(&[&img, &img]).unwrap();
        for row in pass.probs.chunks(10) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn wrong_size_rejected() {
        let p = CnnParams::zeros(CnnConfig::default());
        let img = vec![0.0; 32 * 32];
        assert!(p.run(&[&img]).is_err());
    }

    #[test]
    fn delta_image_reproduces_flipped_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = CnnConfig {
            input_size: 16,
            conv1_filters: 2,
            conv2_filters: 2,
        };
        let p = CnnParams::init(cfg, &mut rng).unwrap();
        let (cy, cx) = (7usize, 9usize);
        let mut img = vec![0.0; 16 * 16];
        img[cy * 16 + cx] = 1.0;
        let resp = p.conv1_response(&img);
        let o = 14;
        // direct correlation oracle: out[y][x] = Σ w[dy][dx] img[y+dy][x+dx]
        for ch in 0..2 {
            let w = &p.conv1_w.data()[ch * 9..(ch + 1) * 9];
            for y in 0..o {
                for x in 0..o {
                    let mut acc = 0.0;
                    for dy in 0..3 {
                        for dx in 0..3 {
                            acc += w[dy * 3 + dx] * img[(y + dy) * 16 + x + dx];
                        }
                    }
                    assert!((resp[ch * o * o + y * o + x] - acc).abs() < 1e-15);
                }
            }
            // the response around the delta is the kernel rotated by 180 degrees
            for dy in 0..3 {
                for dx in 0..3 {
                    let got = resp[ch * o * o + (cy - dy) * o + (cx - dx)];
                    assert_eq!(got, w[dy * 3 + dx]);
                }
            }
        }
    }
}
