//! Forward kernels and their adjoints.
//!
//! Every spatial kernel works on tensors shaped `(..., A, T, R, C)`; leading
//! axes are flattened into a batch index. Adjoints take the upstream gradient
//! and return gradients for each differentiable input.

use super::{gemm, gemm_a_bt, gemm_at_b, spatial_dims, with_spatial, Scalar, Tensor};
use crate::error::{Error, Result};
use crate::par;

/// Boundary treatment for one spatial axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PadMode {
    Zero,
    Circular,
    Replicate,
}

/// Per-axis padding for the (axial, tangential, radial) axes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PaddingSpec {
    pub axes: [(PadMode, usize); 3],
}

impl PaddingSpec {
    pub fn new(axes: [(PadMode, usize); 3]) -> Self {
        PaddingSpec { axes }
    }

    pub fn none() -> Self {
        PaddingSpec {
            axes: [(PadMode::Zero, 0); 3],
        }
    }

    /// "Same" padding for an odd kernel with the annulus boundary modes:
    /// zero on the axial axis, circular on the tangential axis (one periodic
    /// passage) and replicate on the radial axis (end walls).
    pub fn annulus(kernel: [usize; 3]) -> Self {
        Self::with_modes(
            kernel,
            [PadMode::Zero, PadMode::Circular, PadMode::Replicate],
        )
    }

    pub fn with_modes(kernel: [usize; 3], modes: [PadMode; 3]) -> Self {
        PaddingSpec {
            axes: [
                (modes[0], kernel[0] / 2),
                (modes[1], kernel[1] / 2),
                (modes[2], kernel[2] / 2),
            ],
        }
    }

    pub fn widths(&self) -> [usize; 3] {
        [self.axes[0].1, self.axes[1].1, self.axes[2].1]
    }

    /// Check this padding against spatial extents `(A, T, R)`.
    pub fn validate(&self, extents: [usize; 3]) -> Result<()> {
        for (axis, (&(mode, width), &extent)) in self.axes.iter().zip(&extents).enumerate() {
            if mode == PadMode::Circular && width >= extent {
                return Err(Error::invalid(format!(
                    "circular pad width {width} must be smaller than extent {extent} on spatial axis {axis}"
                )));
            }
        }
        Ok(())
    }

    /// Source index along each axis for every padded position (`None` = zero).
    fn index_maps(&self, extents: [usize; 3]) -> [Vec<Option<usize>>; 3] {
        let map = |axis: usize| -> Vec<Option<usize>> {
            let (mode, p) = self.axes[axis];
            let e = extents[axis] as isize;
            (0..extents[axis] + 2 * p)
                .map(|o| {
                    let src = o as isize - p as isize;
                    if (0..e).contains(&src) {
                        Some(src as usize)
                    } else {
                        match mode {
                            PadMode::Zero => None,
                            PadMode::Circular => Some(src.rem_euclid(e) as usize),
                            PadMode::Replicate => Some(src.clamp(0, e - 1) as usize),
                        }
                    }
                })
                .collect()
        };
        [map(0), map(1), map(2)]
    }
}

fn pad_sample<T: Scalar>(
    x: &[T],
    dims: [usize; 4],
    maps: &[Vec<Option<usize>>; 3],
    out: &mut [T],
) {
    let [_, t, r, c] = dims;
    let (pt, pr) = (maps[1].len(), maps[2].len());
    for (oa, sa) in maps[0].iter().enumerate() {
        for (ot, st) in maps[1].iter().enumerate() {
            for (or, sr) in maps[2].iter().enumerate() {
                let dst = ((oa * pt + ot) * pr + or) * c;
                match (sa, st, sr) {
                    (Some(sa), Some(st), Some(sr)) => {
                        let src = ((sa * t + st) * r + sr) * c;
                        out[dst..dst + c].copy_from_slice(&x[src..src + c]);
                    }
                    _ => out[dst..dst + c].fill(T::zero()),
                }
            }
        }
    }
}

fn pad_sample_adjoint<T: Scalar>(
    g: &[T],
    dims: [usize; 4],
    maps: &[Vec<Option<usize>>; 3],
    out: &mut [T],
) {
    let [_, t, r, c] = dims;
    let (pt, pr) = (maps[1].len(), maps[2].len());
    out.fill(T::zero());
    for (oa, sa) in maps[0].iter().enumerate() {
        for (ot, st) in maps[1].iter().enumerate() {
            for (or, sr) in maps[2].iter().enumerate() {
                if let (Some(sa), Some(st), Some(sr)) = (sa, st, sr) {
                    let src = ((oa * pt + ot) * pr + or) * c;
                    let dst = ((sa * t + st) * r + sr) * c;
                    for (o, &v) in out[dst..dst + c].iter_mut().zip(&g[src..src + c]) {
                        *o += v;
                    }
                }
            }
        }
    }
}

/// Pad the three spatial axes.
pub fn pad3d<T: Scalar>(x: &Tensor<T>, spec: &PaddingSpec) -> Result<Tensor<T>> {
    let [n, a, t, r, c] = spatial_dims(x.shape())?;
    spec.validate([a, t, r])?;
    let [pa, pt, pr] = spec.widths();
    let (oa, ot, or) = (a + 2 * pa, t + 2 * pt, r + 2 * pr);
    let maps = spec.index_maps([a, t, r]);
    let in_step = a * t * r * c;
    let out_step = oa * ot * or * c;
    let mut out = vec![T::zero(); n * out_step];
    par::for_each_chunk_mut(&mut out, out_step, |i, o| {
        pad_sample(&x.data()[i * in_step..(i + 1) * in_step], [a, t, r, c], &maps, o)
    });
    Tensor::new(with_spatial(x.shape(), oa, ot, or, c), out)
}

/// Adjoint of [`pad3d`]: fold padded-gradient contributions back onto their sources.
pub fn pad3d_adjoint<T: Scalar>(
    grad: &Tensor<T>,
    spec: &PaddingSpec,
    input_shape: &[usize],
) -> Result<Tensor<T>> {
    let [n, a, t, r, c] = spatial_dims(input_shape)?;
    let [pa, pt, pr] = spec.widths();
    let expect = with_spatial(input_shape, a + 2 * pa, t + 2 * pt, r + 2 * pr, c);
    if grad.shape() != expect.as_slice() {
        return Err(Error::invalid(format!(
            "pad adjoint expects gradient shape {expect:?}, got {:?}",
            grad.shape()
        )));
    }
    let maps = spec.index_maps([a, t, r]);
    let in_step = a * t * r * c;
    let out_step = grad.len() / n;
    let mut out = vec![T::zero(); n * in_step];
    par::for_each_chunk_mut(&mut out, in_step, |i, o| {
        pad_sample_adjoint(
            &grad.data()[i * out_step..(i + 1) * out_step],
            [a, t, r, c],
            &maps,
            o,
        )
    });
    Tensor::new(input_shape.to_vec(), out)
}

/// Remove `widths` from both ends of each spatial axis (inverse of padding).
pub fn crop3d<T: Scalar>(x: &Tensor<T>, widths: [usize; 3]) -> Result<Tensor<T>> {
    let [n, a, t, r, c] = spatial_dims(x.shape())?;
    let [pa, pt, pr] = widths;
    if a <= 2 * pa || t <= 2 * pt || r <= 2 * pr {
        return Err(Error::invalid("crop widths exceed tensor extents"));
    }
    let (oa, ot, or) = (a - 2 * pa, t - 2 * pt, r - 2 * pr);
    let mut out = Vec::with_capacity(n * oa * ot * or * c);
    for i in 0..n {
        for ia in 0..oa {
            for it in 0..ot {
                let base = ((((i * a) + ia + pa) * t + it + pt) * r + pr) * c;
                out.extend_from_slice(&x.data()[base..base + or * c]);
            }
        }
    }
    Tensor::new(with_spatial(x.shape(), oa, ot, or, c), out)
}

struct ConvGeometry {
    n: usize,
    a: usize,
    t: usize,
    r: usize,
    cin: usize,
    cout: usize,
    k: [usize; 3],
    padded: [usize; 3],
}

impl ConvGeometry {
    fn new<T: Scalar>(x: &[usize], kernel: &Tensor<T>, bias: &Tensor<T>, spec: &PaddingSpec) -> Result<Self> {
        let [n, a, t, r, cin] = spatial_dims(x)?;
        let ks = kernel.shape();
        if ks.len() != 5 {
            return Err(Error::invalid(format!(
                "kernel must be (kA, kT, kR, Cin, Cout), got {ks:?}"
            )));
        }
        if ks[3] != cin {
            return Err(Error::invalid(format!(
                "channel mismatch: input has {cin} channels, kernel expects {}",
                ks[3]
            )));
        }
        let cout = ks[4];
        if bias.shape() != [cout] {
            return Err(Error::invalid(format!(
                "bias shape {:?} does not match {cout} output channels",
                bias.shape()
            )));
        }
        let k = [ks[0], ks[1], ks[2]];
        if k.iter().any(|&e| e % 2 == 0) {
            return Err(Error::invalid(format!("kernel spatial extents must be odd, got {k:?}")));
        }
        let widths = spec.widths();
        for axis in 0..3 {
            if widths[axis] != k[axis] / 2 {
                return Err(Error::invalid(format!(
                    "padding {widths:?} is not 'same' for kernel {k:?}"
                )));
            }
        }
        spec.validate([a, t, r])?;
        Ok(ConvGeometry {
            n,
            a,
            t,
            r,
            cin,
            cout,
            k,
            padded: [a + 2 * widths[0], t + 2 * widths[1], r + 2 * widths[2]],
        })
    }

    fn is_pointwise(&self) -> bool {
        self.k == [1, 1, 1]
    }

    fn taps(&self) -> usize {
        self.k[0] * self.k[1] * self.k[2]
    }

    fn plane(&self) -> usize {
        self.t * self.r
    }

    fn in_step(&self) -> usize {
        self.a * self.t * self.r * self.cin
    }

    fn out_step(&self) -> usize {
        self.a * self.t * self.r * self.cout
    }

    fn padded_step(&self) -> usize {
        self.padded.iter().product::<usize>() * self.cin
    }

    /// Gather the receptive fields of output plane `ia` into `col`
    /// (rows: T*R output nodes, columns: taps x Cin).
    fn im2col<T: Scalar>(&self, xp: &[T], ia: usize, col: &mut [T]) {
        let [_, pt, pr] = self.padded;
        let [ka, kt, kr] = self.k;
        let cin = self.cin;
        let kdim = self.taps() * cin;
        for it in 0..self.t {
            for ir in 0..self.r {
                let row = &mut col[(it * self.r + ir) * kdim..][..kdim];
                let mut off = 0;
                for da in 0..ka {
                    for dt in 0..kt {
                        let base = (((ia + da) * pt + it + dt) * pr + ir) * cin;
                        let len = kr * cin;
                        row[off..off + len].copy_from_slice(&xp[base..base + len]);
                        off += len;
                    }
                }
            }
        }
    }

    /// Scatter-add `col` gradients of plane `ia` back into the padded gradient.
    fn col2im<T: Scalar>(&self, col: &[T], ia: usize, gp: &mut [T]) {
        let [_, pt, pr] = self.padded;
        let [ka, kt, kr] = self.k;
        let cin = self.cin;
        let kdim = self.taps() * cin;
        for it in 0..self.t {
            for ir in 0..self.r {
                let row = &col[(it * self.r + ir) * kdim..][..kdim];
                let mut off = 0;
                for da in 0..ka {
                    for dt in 0..kt {
                        let base = (((ia + da) * pt + it + dt) * pr + ir) * cin;
                        let len = kr * cin;
                        for (g, &v) in gp[base..base + len].iter_mut().zip(&row[off..off + len]) {
                            *g += v;
                        }
                        off += len;
                    }
                }
            }
        }
    }
}

/// 3D cross-correlation with "same" padding, summed over input channels, plus bias.
///
/// `x`: `(..., A, T, R, Cin)`, `kernel`: `(kA, kT, kR, Cin, Cout)`, `bias`: `(Cout)`.
pub fn conv3d<T: Scalar>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
    spec: &PaddingSpec,
) -> Result<Tensor<T>> {
    let g = ConvGeometry::new(x.shape(), kernel, bias, spec)?;
    let out_shape = with_spatial(x.shape(), g.a, g.t, g.r, g.cout);
    let out_step = g.out_step();
    let in_step = g.in_step();
    let mut out = vec![T::zero(); g.n * out_step];
    let maps = spec.index_maps([g.a, g.t, g.r]);
    let w = kernel.data();
    par::for_each_chunk_mut(&mut out, out_step, |i, o| {
        let xs = &x.data()[i * in_step..(i + 1) * in_step];
        for row in o.chunks_mut(g.cout) {
            row.copy_from_slice(bias.data());
        }
        if g.is_pointwise() {
            gemm(g.a * g.plane(), g.cin, g.cout, xs, w, T::one(), o);
            return;
        }
        let mut xp = vec![T::zero(); g.padded_step()];
        pad_sample(xs, [g.a, g.t, g.r, g.cin], &maps, &mut xp);
        let kdim = g.taps() * g.cin;
        let mut col = vec![T::zero(); g.plane() * kdim];
        let plane_out = g.plane() * g.cout;
        for ia in 0..g.a {
            g.im2col(&xp, ia, &mut col);
            gemm(
                g.plane(),
                kdim,
                g.cout,
                &col,
                w,
                T::one(),
                &mut o[ia * plane_out..(ia + 1) * plane_out],
            );
        }
    });
    Tensor::new(out_shape, out)
}

/// Gradients of [`conv3d`] with respect to input, kernel and bias.
pub fn conv3d_adjoint<T: Scalar>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
    spec: &PaddingSpec,
    grad: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let g = ConvGeometry::new(x.shape(), kernel, bias, spec)?;
    let out_step = g.out_step();
    let in_step = g.in_step();
    if grad.len() != g.n * out_step {
        return Err(Error::invalid("conv adjoint: gradient shape mismatch"));
    }
    let maps = spec.index_maps([g.a, g.t, g.r]);
    let w = kernel.data();
    let kdim = g.taps() * g.cin;

    let per_sample = par::map_range(g.n, |i| {
        let xs = &x.data()[i * in_step..(i + 1) * in_step];
        let gs = &grad.data()[i * out_step..(i + 1) * out_step];
        let mut dk = vec![T::zero(); kdim * g.cout];
        let mut db = vec![T::zero(); g.cout];
        for row in gs.chunks(g.cout) {
            for (b, &v) in db.iter_mut().zip(row) {
                *b += v;
            }
        }
        let mut dx = vec![T::zero(); in_step];
        if g.is_pointwise() {
            let m = g.a * g.plane();
            gemm_at_b(m, g.cin, g.cout, xs, gs, &mut dk);
            gemm_a_bt(m, g.cout, g.cin, gs, w, &mut dx);
            return (dx, dk, db);
        }
        let mut xp = vec![T::zero(); g.padded_step()];
        pad_sample(xs, [g.a, g.t, g.r, g.cin], &maps, &mut xp);
        let mut gp = vec![T::zero(); g.padded_step()];
        let mut col = vec![T::zero(); g.plane() * kdim];
        let plane_out = g.plane() * g.cout;
        for ia in 0..g.a {
            let go = &gs[ia * plane_out..(ia + 1) * plane_out];
            g.im2col(&xp, ia, &mut col);
            gemm_at_b(g.plane(), kdim, g.cout, &col, go, &mut dk);
            gemm_a_bt(g.plane(), g.cout, kdim, go, w, &mut col);
            g.col2im(&col, ia, &mut gp);
        }
        pad_sample_adjoint(&gp, [g.a, g.t, g.r, g.cin], &maps, &mut dx);
        (dx, dk, db)
    });

    let mut dx = Vec::with_capacity(g.n * in_step);
    let mut dk = vec![T::zero(); kdim * g.cout];
    let mut db = vec![T::zero(); g.cout];
    for (sx, sk, sb) in per_sample {
        dx.extend_from_slice(&sx);
        for (a, b) in dk.iter_mut().zip(sk) {
            *a += b;
        }
        for (a, b) in db.iter_mut().zip(sb) {
            *a += b;
        }
    }
    Ok((
        Tensor::new(x.shape().to_vec(), dx)?,
        Tensor::new(kernel.shape().to_vec(), dk)?,
        Tensor::new(bias.shape().to_vec(), db)?,
    ))
}

/// Output of a training-mode batch normalization.
pub struct BatchNormForward<T> {
    pub output: Tensor<T>,
    pub normalized: Tensor<T>,
    pub mean: Vec<f64>,
    /// Biased (population) variance of the batch.
    pub variance: Vec<f64>,
    pub inv_std: Vec<T>,
}

fn check_affine<T: Scalar>(x: &Tensor<T>, gamma: &Tensor<T>, beta: &Tensor<T>, eps: f64) -> Result<usize> {
    if eps <= 0.0 || !eps.is_finite() {
        return Err(Error::invalid(format!("batch-norm epsilon must be positive, got {eps}")));
    }
    let c = *x.shape().last().ok_or_else(|| Error::invalid("empty shape"))?;
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(Error::invalid(format!(
            "batch-norm affine terms must have shape [{c}], got {:?} / {:?}",
            gamma.shape(),
            beta.shape()
        )));
    }
    Ok(c)
}

/// Per-channel normalization over every non-channel axis using batch statistics.
pub fn batch_norm_train<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: f64,
) -> Result<BatchNormForward<T>> {
    let c = check_affine(x, gamma, beta, eps)?;
    let rows = x.len() / c;
    let mut mean = vec![0.0f64; c];
    for row in x.data().chunks(c) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v.as_f64();
        }
    }
    mean.iter_mut().for_each(|m| *m /= rows as f64);
    let mut variance = vec![0.0f64; c];
    for row in x.data().chunks(c) {
        for ((s, &v), &m) in variance.iter_mut().zip(row).zip(&mean) {
            let d = v.as_f64() - m;
            *s += d * d;
        }
    }
    variance.iter_mut().for_each(|s| *s /= rows as f64);
    let inv: Vec<f64> = variance.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let mut normalized = Vec::with_capacity(x.len());
    let mut output = Vec::with_capacity(x.len());
    for row in x.data().chunks(c) {
        for ch in 0..c {
            let xh = (row[ch].as_f64() - mean[ch]) * inv[ch];
            normalized.push(T::lit(xh));
            output.push(T::lit(xh) * gamma.data()[ch] + beta.data()[ch]);
        }
    }
    Ok(BatchNormForward {
        output: Tensor::new(x.shape().to_vec(), output)?,
        normalized: Tensor::new(x.shape().to_vec(), normalized)?,
        mean,
        variance,
        inv_std: inv.into_iter().map(T::lit).collect(),
    })
}

/// Normalization with fixed running statistics. Returns `(output, normalized, inv_std)`.
pub fn batch_norm_inference<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running_mean: &[T],
    running_var: &[T],
    eps: f64,
) -> Result<(Tensor<T>, Tensor<T>, Vec<T>)> {
    let c = check_affine(x, gamma, beta, eps)?;
    if running_mean.len() != c || running_var.len() != c {
        return Err(Error::invalid("running statistics do not match channel count"));
    }
    let inv: Vec<T> = running_var
        .iter()
        .map(|&v| T::one() / (v + T::lit(eps)).sqrt())
        .collect();
    let mut normalized = Vec::with_capacity(x.len());
    let mut output = Vec::with_capacity(x.len());
    for row in x.data().chunks(c) {
        for ch in 0..c {
            let xh = (row[ch] - running_mean[ch]) * inv[ch];
            normalized.push(xh);
            output.push(xh * gamma.data()[ch] + beta.data()[ch]);
        }
    }
    Ok((
        Tensor::new(x.shape().to_vec(), output)?,
        Tensor::new(x.shape().to_vec(), normalized)?,
        inv,
    ))
}

/// Adjoint of training-mode batch norm. Returns `(dx, dgamma, dbeta)`.
pub fn batch_norm_train_adjoint<T: Scalar>(
    grad: &Tensor<T>,
    normalized: &Tensor<T>,
    gamma: &Tensor<T>,
    inv_std: &[T],
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let c = gamma.len();
    let rows = grad.len() / c;
    let mut dgamma = vec![0.0f64; c];
    let mut dbeta = vec![0.0f64; c];
    for (g, xh) in grad.data().chunks(c).zip(normalized.data().chunks(c)) {
        for ch in 0..c {
            dbeta[ch] += g[ch].as_f64();
            dgamma[ch] += (g[ch] * xh[ch]).as_f64();
        }
    }
    let n = rows as f64;
    let scale: Vec<f64> = (0..c)
        .map(|ch| gamma.data()[ch].as_f64() * inv_std[ch].as_f64() / n)
        .collect();
    let mut dx = Vec::with_capacity(grad.len());
    for (g, xh) in grad.data().chunks(c).zip(normalized.data().chunks(c)) {
        for ch in 0..c {
            let v = scale[ch] * (n * g[ch].as_f64() - dbeta[ch] - xh[ch].as_f64() * dgamma[ch]);
            dx.push(T::lit(v));
        }
    }
    (
        Tensor::new(grad.shape().to_vec(), dx).expect("shape preserved"),
        Tensor::new(vec![c], dgamma.into_iter().map(T::lit).collect()).expect("channel vector"),
        Tensor::new(vec![c], dbeta.into_iter().map(T::lit).collect()).expect("channel vector"),
    )
}

/// Adjoint of inference-mode batch norm. Returns `(dx, dgamma, dbeta)`.
pub fn batch_norm_inference_adjoint<T: Scalar>(
    grad: &Tensor<T>,
    normalized: &Tensor<T>,
    gamma: &Tensor<T>,
    inv_std: &[T],
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let c = gamma.len();
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    let mut dx = Vec::with_capacity(grad.len());
    for (g, xh) in grad.data().chunks(c).zip(normalized.data().chunks(c)) {
        for ch in 0..c {
            dbeta[ch] += g[ch];
            dgamma[ch] += g[ch] * xh[ch];
            dx.push(g[ch] * gamma.data()[ch] * inv_std[ch]);
        }
    }
    (
        Tensor::new(grad.shape().to_vec(), dx).expect("shape preserved"),
        Tensor::new(vec![c], dgamma).expect("channel vector"),
        Tensor::new(vec![c], dbeta).expect("channel vector"),
    )
}

/// Elementwise `max(x, slope * x)` for `0 <= slope <= 1`.
pub fn leaky_relu<T: Scalar>(x: &Tensor<T>, slope: T) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { v * slope })
}

/// Derivative is 1 for positive inputs and `slope` otherwise (including 0).
pub fn leaky_relu_adjoint<T: Scalar>(x: &Tensor<T>, slope: T, grad: &Tensor<T>) -> Tensor<T> {
    let data = x
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&v, &g)| if v > T::zero() { g } else { g * slope })
        .collect();
    Tensor::new(x.shape().to_vec(), data).expect("shape preserved")
}

/// Non-overlapping 2x2x2 max pooling. Returns the pooled tensor and, for each
/// output element, the linear input index that won (first maximum in
/// window scan order).
pub fn max_pool3d<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
    let [n, a, t, r, c] = spatial_dims(x.shape())?;
    if a % 2 != 0 || t % 2 != 0 || r % 2 != 0 {
        return Err(Error::invalid(format!(
            "max pooling needs even spatial extents, got ({a}, {t}, {r})"
        )));
    }
    let (oa, ot, or) = (a / 2, t / 2, r / 2);
    let total = n * oa * ot * or * c;
    let mut out = Vec::with_capacity(total);
    let mut argmax = Vec::with_capacity(total);
    let xd = x.data();
    for i in 0..n {
        for ia in 0..oa {
            for it in 0..ot {
                for ir in 0..or {
                    for ch in 0..c {
                        let mut best = usize::MAX;
                        let mut best_v = T::zero();
                        for da in 0..2 {
                            for dt in 0..2 {
                                for dr in 0..2 {
                                    let idx = ((((i * a) + 2 * ia + da) * t + 2 * it + dt) * r
                                        + 2 * ir
                                        + dr)
                                        * c
                                        + ch;
                                    let v = xd[idx];
                                    if best == usize::MAX || v > best_v {
                                        best = idx;
                                        best_v = v;
                                    }
                                }
                            }
                        }
                        out.push(best_v);
                        argmax.push(best);
                    }
                }
            }
        }
    }
    Ok((Tensor::new(with_spatial(x.shape(), oa, ot, or, c), out)?, argmax))
}

/// Routes each pooled gradient to the input element that won the window.
pub fn max_pool3d_adjoint<T: Scalar>(
    input_shape: &[usize],
    argmax: &[usize],
    grad: &Tensor<T>,
) -> Tensor<T> {
    let mut dx = Tensor::zeros(input_shape.to_vec());
    for (&idx, &g) in argmax.iter().zip(grad.data()) {
        dx.data_mut()[idx] += g;
    }
    dx
}

/// Nearest-neighbour 2x upsampling of every spatial axis.
pub fn upsample3d<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, a, t, r, c] = spatial_dims(x.shape())?;
    let (oa, ot, or) = (2 * a, 2 * t, 2 * r);
    let mut out = Vec::with_capacity(n * oa * ot * or * c);
    let xd = x.data();
    for i in 0..n {
        for ia in 0..oa {
            for it in 0..ot {
                for ir in 0..or {
                    let src = ((((i * a) + ia / 2) * t + it / 2) * r + ir / 2) * c;
                    out.extend_from_slice(&xd[src..src + c]);
                }
            }
        }
    }
    Tensor::new(with_spatial(x.shape(), oa, ot, or, c), out)
}

/// Sums each 2x2x2 block of the upstream gradient.
pub fn upsample3d_adjoint<T: Scalar>(input_shape: &[usize], grad: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, a, t, r, c] = spatial_dims(input_shape)?;
    let (oa, ot, or) = (2 * a, 2 * t, 2 * r);
    let mut dx = vec![T::zero(); n * a * t * r * c];
    let gd = grad.data();
    for i in 0..n {
        for ia in 0..oa {
            for it in 0..ot {
                for ir in 0..or {
                    let src = ((((i * oa) + ia) * ot + it) * or + ir) * c;
                    let dst = ((((i * a) + ia / 2) * t + it / 2) * r + ir / 2) * c;
                    for (d, &g) in dx[dst..dst + c].iter_mut().zip(&gd[src..src + c]) {
                        *d += g;
                    }
                }
            }
        }
    }
    Tensor::new(input_shape.to_vec(), dx)
}

/// Concatenate along the last (channel) axis.
pub fn concat_channels<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.len() != sb.len() || sa[..sa.len() - 1] != sb[..sb.len() - 1] {
        return Err(Error::invalid(format!(
            "concat needs matching leading extents, got {sa:?} and {sb:?}"
        )));
    }
    let (ca, cb) = (sa[sa.len() - 1], sb[sb.len() - 1]);
    let mut out = Vec::with_capacity(a.len() + b.len());
    for (ra, rb) in a.data().chunks(ca).zip(b.data().chunks(cb)) {
        out.extend_from_slice(ra);
        out.extend_from_slice(rb);
    }
    let mut shape = sa.to_vec();
    *shape.last_mut().expect("non-empty") = ca + cb;
    Tensor::new(shape, out)
}

/// Split a concatenated-channel gradient into its two parts.
pub fn concat_channels_adjoint<T: Scalar>(
    grad: &Tensor<T>,
    a_shape: &[usize],
    b_shape: &[usize],
) -> (Tensor<T>, Tensor<T>) {
    let ca = a_shape[a_shape.len() - 1];
    let cb = b_shape[b_shape.len() - 1];
    let mut ga = Vec::with_capacity(grad.len() / (ca + cb) * ca);
    let mut gb = Vec::with_capacity(grad.len() / (ca + cb) * cb);
    for row in grad.data().chunks(ca + cb) {
        ga.extend_from_slice(&row[..ca]);
        gb.extend_from_slice(&row[ca..]);
    }
    (
        Tensor::new(a_shape.to_vec(), ga).expect("shape preserved"),
        Tensor::new(b_shape.to_vec(), gb).expect("shape preserved"),
    )
}

/// Elementwise sum of identically shaped tensors.
pub fn add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.shape() != b.shape() {
        return Err(Error::invalid(format!(
            "add needs identical shapes, got {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut out = a.clone();
    out.add_assign(b);
    Ok(out)
}

/// Mean squared error over every element.
pub fn mse<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::invalid(format!(
            "mse needs identical shapes, got {:?} and {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = p.as_f64() - t.as_f64();
            d * d
        })
        .sum();
    Ok(sum / pred.len() as f64)
}

pub fn mse_adjoint<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>, upstream: f64) -> Tensor<T> {
    let scale = 2.0 * upstream / pred.len() as f64;
    let data = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| T::lit(scale * (p.as_f64() - t.as_f64())))
        .collect();
    Tensor::new(pred.shape().to_vec(), data).expect("shape preserved")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.0..1.0))
    }

    fn all_modes() -> [PaddingSpec; 3] {
        [
            PaddingSpec::new([(PadMode::Zero, 1), (PadMode::Zero, 2), (PadMode::Zero, 1)]),
            PaddingSpec::new([(PadMode::Circular, 1), (PadMode::Circular, 2), (PadMode::Circular, 1)]),
            PaddingSpec::new([(PadMode::Replicate, 1), (PadMode::Replicate, 2), (PadMode::Replicate, 2)]),
        ]
    }

    #[test]
    fn zero_width_pad_is_identity() {
        let x = random(&[2, 3, 4, 5, 2], 1);
        assert_eq!(pad3d(&x, &PaddingSpec::none()).unwrap(), x);
    }

    #[test]
    fn circular_pad_wraps_tangential_axis() {
        let x = Tensor::<f64>::new(vec![1, 4, 1, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let spec = PaddingSpec::new([(PadMode::Zero, 0), (PadMode::Circular, 1), (PadMode::Zero, 0)]);
        let y = pad3d(&x, &spec).unwrap();
        assert_eq!(y.shape(), &[1, 6, 1, 1]);
        assert_eq!(y.data(), &[4.0, 1.0, 2.0, 3.0, 4.0, 1.0]);
    }

    #[test]
    fn replicate_and_zero_pad_edges() {
        let x = Tensor::<f64>::new(vec![1, 1, 3, 1], vec![5.0, 6.0, 7.0]).unwrap();
        let rep = PaddingSpec::new([(PadMode::Zero, 0), (PadMode::Zero, 0), (PadMode::Replicate, 2)]);
        assert_eq!(pad3d(&x, &rep).unwrap().data(), &[5.0, 5.0, 5.0, 6.0, 7.0, 7.0, 7.0]);
        let zero = PaddingSpec::new([(PadMode::Zero, 0), (PadMode::Zero, 0), (PadMode::Zero, 1)]);
        assert_eq!(pad3d(&x, &zero).unwrap().data(), &[0.0, 5.0, 6.0, 7.0, 0.0]);
    }

    #[test]
    fn circular_pad_wider_than_axis_is_rejected() {
        let x = random(&[2, 4, 3, 1], 2);
        let spec = PaddingSpec::new([(PadMode::Zero, 0), (PadMode::Circular, 4), (PadMode::Zero, 0)]);
        assert!(matches!(pad3d(&x, &spec), Err(Error::InvalidArgument(_))));
        // replicate and zero have no such restriction
        let spec = PaddingSpec::new([(PadMode::Replicate, 5), (PadMode::Zero, 4), (PadMode::Zero, 0)]);
        assert!(pad3d(&x, &spec).is_ok());
    }

    #[test]
    fn pad_then_crop_is_identity_for_all_modes() {
        let x = random(&[2, 3, 5, 4, 2], 3);
        for spec in all_modes() {
            let back = crop3d(&pad3d(&x, &spec).unwrap(), spec.widths()).unwrap();
            assert_eq!(back, x);
        }
    }

    #[test]
    fn pad_adjoint_matches_transpose() {
        // <pad(x), g> == <x, pad^T(g)> for every mode
        let x = random(&[1, 3, 5, 4, 2], 4);
        for spec in all_modes() {
            let y = pad3d(&x, &spec).unwrap();
            let g = random(y.shape(), 5);
            let gx = pad3d_adjoint(&g, &spec, x.shape()).unwrap();
            let lhs: f64 = y.data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.data().iter().zip(gx.data()).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-12, "{spec:?}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn conv_of_zero_input_is_bias() {
        let x = Tensor::<f32>::zeros(vec![2, 3, 4, 2]);
        let k = random(&[3, 3, 3, 2, 3], 6).cast::<f32>();
        let b = Tensor::new(vec![3], vec![0.5f32, -1.0, 2.0]).unwrap();
        let y = conv3d(&x, &k, &b, &PaddingSpec::annulus([3, 3, 3])).unwrap();
        assert_eq!(y.shape(), &[2, 3, 4, 3]);
        for row in y.data().chunks(3) {
            assert_eq!(row, b.data());
        }
    }

    #[test]
    fn identity_pointwise_kernel() {
        let x = random(&[2, 3, 4, 1], 7).cast::<f32>();
        let k = Tensor::new(vec![1, 1, 1, 1, 1], vec![1.0f32]).unwrap();
        let b = Tensor::zeros(vec![1]);
        assert_eq!(conv3d(&x, &k, &b, &PaddingSpec::none()).unwrap(), x);
    }

    #[test]
    fn conv_rejects_bad_arguments() {
        let x = random(&[2, 4, 4, 3], 8);
        let b = Tensor::zeros(vec![2]);
        let spec = PaddingSpec::annulus([3, 3, 3]);
        let wrong_cin = random(&[3, 3, 3, 2, 2], 9);
        assert!(matches!(conv3d(&x, &wrong_cin, &b, &spec), Err(Error::InvalidArgument(_))));
        let even = random(&[2, 3, 3, 3, 2], 9);
        assert!(conv3d(&x, &even, &b, &PaddingSpec::annulus([2, 3, 3])).is_err());
        let k = random(&[3, 3, 3, 3, 2], 9);
        assert!(conv3d(&x, &k, &b, &PaddingSpec::none()).is_err());
    }

    #[test]
    fn batch_norm_standardizes_in_train_mode() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = Tensor::<f64>::from_fn(vec![4, 2, 4, 4, 3], |i| {
            (i % 3) as f64 * 2.0 + rng.random_range(-3.0..5.0)
        });
        let gamma = Tensor::full(vec![3], 1.0);
        let beta = Tensor::zeros(vec![3]);
        let f = batch_norm_train(&x, &gamma, &beta, 1e-5).unwrap();
        let c = 3;
        let rows = (x.len() / c) as f64;
        for ch in 0..c {
            let vals: Vec<f64> = f.output.data().iter().skip(ch).step_by(c).copied().collect();
            let mean = vals.iter().sum::<f64>() / rows;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / rows;
            assert!(mean.abs() < 1e-6);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn batch_norm_constant_channel_gives_beta() {
        let x = Tensor::<f64>::full(vec![2, 2, 2, 2, 1], 3.25);
        let gamma = Tensor::full(vec![1], 1.7);
        let beta = Tensor::full(vec![1], 0.4);
        let f = batch_norm_train(&x, &gamma, &beta, 1e-5).unwrap();
        assert!(f.output.data().iter().all(|&v| v == 0.4));
    }

    #[test]
    fn batch_norm_inference_matches_formula() {
        let x = Tensor::<f64>::new(vec![3, 1], vec![1.0, 2.0, 4.0]).unwrap();
        let gamma = Tensor::full(vec![1], 2.0);
        let beta = Tensor::full(vec![1], 0.5);
        let (y, _, _) = batch_norm_inference(&x, &gamma, &beta, &[1.5], &[0.25], 1e-5).unwrap();
        for (xi, yi) in [1.0f64, 2.0, 4.0].iter().zip(y.data()) {
            let want = (xi - 1.5) / (0.25f64 + 1e-5).sqrt() * 2.0 + 0.5;
            assert!((yi - want).abs() < 1e-12);
        }
    }

    #[test]
    fn batch_norm_rejects_non_positive_epsilon() {
        let x = Tensor::<f64>::full(vec![2, 1], 1.0);
        let g = Tensor::full(vec![1], 1.0);
        let b = Tensor::zeros(vec![1]);
        assert!(batch_norm_train(&x, &g, &b, 0.0).is_err());
        assert!(batch_norm_inference(&x, &g, &b, &[0.0], &[1.0], -1.0).is_err());
    }

    #[test]
    fn leaky_relu_values() {
        let x = Tensor::<f64>::new(vec![3], vec![0.0, -1.0, 2.0]).unwrap();
        assert_eq!(leaky_relu(&x, 0.2).data(), &[0.0, -0.2, 2.0]);
        let g = Tensor::full(vec![3], 1.0);
        assert_eq!(leaky_relu_adjoint(&x, 0.2, &g).data(), &[0.2, 0.2, 1.0]);
    }

    #[test]
    fn max_pool_shapes_and_constants() {
        let x = Tensor::<f32>::full(vec![4, 64, 64, 6], 2.5);
        let (y, _) = max_pool3d(&x).unwrap();
        assert_eq!(y.shape(), &[2, 32, 32, 6]);
        assert!(y.data().iter().all(|&v| v == 2.5));
        assert!(max_pool3d(&Tensor::<f32>::zeros(vec![3, 4, 4, 1])).is_err());
    }

    #[test]
    fn max_pool_ties_go_to_first_index() {
        let x = Tensor::<f64>::full(vec![2, 2, 2, 1], 1.0);
        let (_, arg) = max_pool3d(&x).unwrap();
        assert_eq!(arg, vec![0]);
        let g = Tensor::full(vec![1, 1, 1, 1], 3.0);
        let dx = max_pool3d_adjoint(x.shape(), &arg, &g);
        assert_eq!(dx.data()[0], 3.0);
        assert_eq!(dx.sum(), 3.0);
    }

    #[test]
    fn upsample_repeats_and_adjoint_sums() {
        let x = Tensor::<f64>::full(vec![1, 1, 1, 1], 3.0);
        let y = upsample3d(&x).unwrap();
        assert_eq!(y.shape(), &[2, 2, 2, 1]);
        assert!(y.data().iter().all(|&v| v == 3.0));
        let x = random(&[1, 16, 16, 24], 11);
        let y = upsample3d(&x).unwrap();
        assert_eq!(y.shape(), &[2, 32, 32, 24]);
        let ones = Tensor::full(y.shape().to_vec(), 1.0);
        let dx = upsample3d_adjoint(x.shape(), &ones).unwrap();
        assert!(dx.data().iter().all(|&v| v == 8.0));
    }

    #[test]
    fn pool_inverts_upsample() {
        let x = random(&[2, 1, 3, 2, 2], 12);
        let (back, _) = max_pool3d(&upsample3d(&x).unwrap()).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn concat_and_add_shapes() {
        let a = random(&[1, 2, 2, 3], 13);
        let b = random(&[1, 2, 2, 5], 14);
        let c = concat_channels(&a, &b).unwrap();
        assert_eq!(c.shape(), &[1, 2, 2, 8]);
        let (ga, gb) = concat_channels_adjoint(&c, a.shape(), b.shape());
        assert_eq!((ga, gb), (a.clone(), b.clone()));
        assert!(concat_channels(&a, &random(&[1, 2, 3, 5], 1)).is_err());
        assert_eq!(add(&a, &Tensor::zeros(a.shape().to_vec())).unwrap(), a);
        assert!(add(&a, &b).is_err());
    }
}
