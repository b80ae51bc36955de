#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tensorview::convref::FeatureMap;
use tensorview::{Matrix, Tensor};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, dims: &[usize]) -> Tensor {
    let n = dims.iter().product();
    Tensor::new(
        dims.to_vec(),
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn random_map(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> FeatureMap {
    FeatureMap::new(c, h, w, random_vec(rng, c * h * w)).unwrap()
}

pub fn rel_distance(a: &Tensor, b: &Tensor) -> f64 {
    a.distance(b).unwrap() / b.frobenius_norm()
}

/// Direct convolution written independently of the library: explicit
/// zero-padded copy of the input, signed offsets, six nested loops.
pub fn naive_conv(x: &FeatureMap, k4: &Tensor, stride: usize) -> Vec<f64> {
    let (c, h, w) = (x.channels(), x.height(), x.width());
    let (ci, co, k) = (k4.dims()[0], k4.dims()[1], k4.dims()[2]);
    assert_eq!(c, ci);
    let p = (k - 1) / 2;
    let (ph, pw) = (h + 2 * p, w + 2 * p);
    let mut padded = vec![0.0; c * ph * pw];
    for ch in 0..c {
        for y in 0..h {
            for xx in 0..w {
                padded[(ch * ph + y + p) * pw + xx + p] = x.values()[(ch * h + y) * w + xx];
            }
        }
    }
    let oh = h.div_ceil(stride);
    let ow = w.div_ceil(stride);
    let mut out = vec![0.0; co * oh * ow];
    for o in 0..co {
        for y in 0..oh {
            for xx in 0..ow {
                let mut acc = 0.0;
                for i in 0..ci {
                    for ky in 0..k {
                        for kx in 0..k {
                            acc += k4.get(&[i, o, ky, kx])
                                * padded[(i * ph + y * stride + ky) * pw + xx * stride + kx];
                        }
                    }
                }
                out[(o * oh + y) * ow + xx] = acc;
            }
        }
    }
    out
}

pub fn max_rel(got: &[f64], want: &[f64]) -> f64 {
    assert_eq!(got.len(), want.len());
    let scale = want.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = got
        .iter()
        .zip(want)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}
