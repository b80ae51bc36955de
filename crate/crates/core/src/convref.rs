//! Reference convolution operators and the factored layer pipelines.
//!
//! Conventions: cross-correlation (no kernel flip), zero padding of
//! `(k − 1) / 2` on every side, odd `k` only, output extent `ceil(H / stride)`.
//! Output pixel `(y, x)` with spatial tap `j = ky·k + kx` reads input pixel
//! `(y·stride + ky − p, x·stride + kx − p)` where `p = (k − 1) / 2`.
//!
//! For shifts this means tap `j` reads from offset `(ky − p, kx − p)`: with
//! `k = 3`, tap 0 reads the up-left neighbour, so content moves one pixel down
//! and right; tap 4 (the centre) is the identity. Vacated pixels are zero.
//!
//! Every accumulation runs in a fixed loop order, so results are reproducible
//! bit for bit.

use crate::decompose::{CpdFactors, DpFactors, Factors, PdFactors, ShiftLayerFactors};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::tensor::{spatial_extent, Tensor};

/// Activation tensor `[channels, height, width]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    data: Tensor,
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        FeatureMap::from_tensor(Tensor::new(vec![channels, height, width], data)?)
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Result<Self> {
        FeatureMap::from_tensor(Tensor::zeros(vec![channels, height, width])?)
    }

    pub fn from_tensor(data: Tensor) -> Result<Self> {
        if data.ndim() != 3 {
            return Err(Error::shape(format!(
                "feature map needs [channels, height, width], got {:?}",
                data.dims()
            )));
        }
        if !data.is_finite() {
            return Err(Error::Numeric("feature map has non-finite values".into()));
        }
        Ok(FeatureMap { data })
    }

    pub fn channels(&self) -> usize {
        self.data.dims()[0]
    }

    pub fn height(&self) -> usize {
        self.data.dims()[1]
    }

    pub fn width(&self) -> usize {
        self.data.dims()[2]
    }

    pub fn tensor(&self) -> &Tensor {
        &self.data
    }

    pub fn into_tensor(self) -> Tensor {
        self.data
    }

    pub fn values(&self) -> &[f64] {
        self.data.data()
    }

    #[inline]
    fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data.data()[(c * self.height() + y) * self.width() + x]
    }

    /// Input value under tap `(ky, kx)` of output pixel `(y, x)`, zero when it
    /// falls in the padding.
    #[inline]
    #[allow(clippy::too_many_arguments)]
    fn tap(
        &self,
        c: usize,
        y: usize,
        x: usize,
        ky: usize,
        kx: usize,
        stride: usize,
        pad: usize,
    ) -> Option<f64> {
        let iy = (y * stride + ky).checked_sub(pad)?;
        let ix = (x * stride + kx).checked_sub(pad)?;
        (iy < self.height() && ix < self.width()).then(|| self.at(c, iy, ix))
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &FeatureMap) -> Result<f64> {
        if self.data.dims() != other.data.dims() {
            return Err(Error::shape(format!(
                "feature maps {:?} and {:?} differ in shape",
                self.data.dims(),
                other.data.dims()
            )));
        }
        Ok(self
            .values()
            .iter()
            .zip(other.values())
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    /// `max|self − reference| / max|reference|` (plain max difference when the
    /// reference is identically zero).
    pub fn relative_deviation(&self, reference: &FeatureMap) -> Result<f64> {
        let diff = self.max_abs_diff(reference)?;
        let scale = reference.data.max_abs();
        Ok(if scale > 0.0 { diff / scale } else { diff })
    }
}

fn output_extent(n: usize, stride: usize) -> usize {
    n.div_ceil(stride)
}

fn check_stride(stride: usize) -> Result<()> {
    if stride == 0 {
        return Err(Error::invalid("stride must be at least 1"));
    }
    Ok(())
}

fn odd_window(kk: usize) -> Result<usize> {
    let k = spatial_extent(kk)?;
    if k % 2 == 0 {
        return Err(Error::shape(format!("kernel extent {k} is even")));
    }
    Ok(k)
}

/// Dense convolution with a `[ci, co, k, k]` kernel.
pub fn conv2d(x: &FeatureMap, k4: &Tensor, stride: usize) -> Result<FeatureMap> {
    check_stride(stride)?;
    let [ci, co, kh, kw] = match k4.dims() {
        &[a, b, c, d] => [a, b, c, d],
        d => return Err(Error::shape(format!("expected a 4-way kernel, got {d:?}"))),
    };
    if kh != kw {
        return Err(Error::shape(format!(
            "kernel window {kh}x{kw} is not square"
        )));
    }
    let k = odd_window(kh * kw)?;
    if x.channels() != ci {
        return Err(Error::shape(format!(
            "kernel expects {ci} input channels, feature map has {}",
            x.channels()
        )));
    }
    let pad = (k - 1) / 2;
    let (oh, ow) = (
        output_extent(x.height(), stride),
        output_extent(x.width(), stride),
    );
    let w = k4.data();
    let mut out = Vec::with_capacity(co * oh * ow);
    for o in 0..co {
        for y in 0..oh {
            for xx in 0..ow {
                let mut acc = 0.0;
                for i in 0..ci {
                    for ky in 0..k {
                        for kx in 0..k {
                            if let Some(v) = x.tap(i, y, xx, ky, kx, stride, pad) {
                                acc += w[((i * co + o) * k + ky) * k + kx] * v;
                            }
                        }
                    }
                }
                out.push(acc);
            }
        }
    }
    FeatureMap::new(co, oh, ow, out)
}

/// Per-channel convolution; row `c` of `kernels` (`channels × k²`) filters
/// channel `c`.
pub fn depthwise(x: &FeatureMap, kernels: &Matrix, stride: usize) -> Result<FeatureMap> {
    check_stride(stride)?;
    let k = odd_window(kernels.cols())?;
    if kernels.rows() != x.channels() {
        return Err(Error::shape(format!(
            "{} depthwise kernels for {} channels",
            kernels.rows(),
            x.channels()
        )));
    }
    let pad = (k - 1) / 2;
    let (oh, ow) = (
        output_extent(x.height(), stride),
        output_extent(x.width(), stride),
    );
    let mut out = Vec::with_capacity(x.channels() * oh * ow);
    for c in 0..x.channels() {
        let w = kernels.row(c);
        for y in 0..oh {
            for xx in 0..ow {
                let mut acc = 0.0;
                for ky in 0..k {
                    for kx in 0..k {
                        if let Some(v) = x.tap(c, y, xx, ky, kx, stride, pad) {
                            acc += w[ky * k + kx] * v;
                        }
                    }
                }
                out.push(acc);
            }
        }
    }
    FeatureMap::new(x.channels(), oh, ow, out)
}

/// 1×1 convolution: `out[o] = Σ_i mix[o, i] · x[i]` at every pixel.
pub fn pointwise(x: &FeatureMap, mix: &Matrix) -> Result<FeatureMap> {
    if mix.cols() != x.channels() {
        return Err(Error::shape(format!(
            "pointwise weights {:?} incompatible with {} channels",
            mix.shape(),
            x.channels()
        )));
    }
    let plane = x.height() * x.width();
    let mut out = vec![0.0; mix.rows() * plane];
    for (o, dst) in out.chunks_exact_mut(plane).enumerate() {
        for (i, &w) in mix.row(o).iter().enumerate() {
            let src = &x.values()[i * plane..(i + 1) * plane];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += w * s;
            }
        }
    }
    FeatureMap::new(mix.rows(), x.height(), x.width(), out)
}

/// Moves each channel by the displacement of its one-hot tap (see the module
/// docs for the sign), zero-filling vacated pixels. Equal to [`depthwise`]
/// with one-hot kernels `e_{shifts[c]}`.
pub fn shift_op(x: &FeatureMap, shifts: &[usize], k: usize, stride: usize) -> Result<FeatureMap> {
    check_stride(stride)?;
    let k = odd_window(k * k)?;
    if shifts.len() != x.channels() {
        return Err(Error::shape(format!(
            "{} shifts for {} channels",
            shifts.len(),
            x.channels()
        )));
    }
    if let Some(&bad) = shifts.iter().find(|&&s| s >= k * k) {
        return Err(Error::IndexOutOfRange {
            index: bad,
            extent: k * k,
        });
    }
    let pad = (k - 1) / 2;
    let (oh, ow) = (
        output_extent(x.height(), stride),
        output_extent(x.width(), stride),
    );
    let mut out = Vec::with_capacity(x.channels() * oh * ow);
    for (c, &s) in shifts.iter().enumerate() {
        let (ky, kx) = (s / k, s % k);
        for y in 0..oh {
            for xx in 0..ow {
                out.push(x.tap(c, y, xx, ky, kx, stride, pad).unwrap_or(0.0));
            }
        }
    }
    FeatureMap::new(x.channels(), oh, ow, out)
}

/// DW then PW.
pub fn dp_forward(x: &FeatureMap, f: &DpFactors, stride: usize) -> Result<FeatureMap> {
    pointwise(&depthwise(x, &f.spatial, stride)?, &f.mix)
}

/// PW then DW.
pub fn pd_forward(x: &FeatureMap, f: &PdFactors, stride: usize) -> Result<FeatureMap> {
    depthwise(&pointwise(x, &f.mix)?, &f.spatial, stride)
}

/// PW (`aᵀ`) then DW (columns of `c`) then PW (`b`).
pub fn pdp_forward(x: &FeatureMap, f: &CpdFactors, stride: usize) -> Result<FeatureMap> {
    let entry = pointwise(x, &f.a.transpose())?;
    let spatial = depthwise(&entry, &f.c.transpose(), stride)?;
    pointwise(&spatial, &f.b)
}

/// PW (stacked `v`) then shift then PW (stacked `u`).
pub fn shift_forward(x: &FeatureMap, f: &ShiftLayerFactors, stride: usize) -> Result<FeatureMap> {
    f.validate()?;
    let entry = pointwise(x, &f.entry_weights())?;
    let shifted = shift_op(&entry, &f.shifts(), f.kernel_extent, stride)?;
    pointwise(&shifted, &f.exit_weights())
}

/// Runs whichever pipeline matches the factor form.
pub fn forward(x: &FeatureMap, f: &Factors, stride: usize) -> Result<FeatureMap> {
    match f {
        Factors::Dp(f) => dp_forward(x, f, stride),
        Factors::Pd(f) => pd_forward(x, f, stride),
        Factors::Cpd(f) => pdp_forward(x, f, stride),
        Factors::Shift(f) => shift_forward(x, f, stride),
    }
}
