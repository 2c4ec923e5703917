//! Forward and reverse passes of the fixed layer stack.
//!
//! Activations are stored channel-last (`[y, x, c]`). Convolutions run as
//! patch matrices times weight matrices; conv weights `[ky, kx, in, out]` are
//! already a row-major `(9·in) × out` matrix. Every reduction runs in a fixed
//! order, so results are reproducible on a given machine.

use super::arch::{Architecture, KERNEL};
use super::params::{Layer, Params};

/// Borrowed network input: `grid²·in_channels` features plus a `grid²` mask.
#[derive(Debug, Clone, Copy)]
pub struct GridInput<'a> {
    pub features: &'a [f64],
    pub mask: &'a [f64],
}

/// Intermediate values kept from the forward pass for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct Activations {
    masked: Vec<f64>,
    cols_a: Vec<f64>,
    a1: Vec<f64>,
    a2: Vec<f64>,
    cols_b: Vec<f64>,
    a3: Vec<f64>,
    pooled: Vec<f64>,
    argmax: Vec<usize>,
    cols_c: Vec<f64>,
    a4: Vec<f64>,
    hidden: Vec<f64>,
    pub output: f64,
}

impl Activations {
    pub fn new(arch: &Architecture) -> Self {
        let cells = arch.grid * arch.grid;
        let pooled_cells = arch.pooled() * arch.pooled();
        let taps = KERNEL * KERNEL;
        Self {
            masked: vec![0.0; cells * arch.in_channels],
            cols_a: vec![0.0; cells * taps * arch.in_channels],
            a1: vec![0.0; cells * arch.conv_a],
            a2: vec![0.0; cells * arch.pointwise],
            cols_b: vec![0.0; cells * taps * arch.pointwise],
            a3: vec![0.0; cells * arch.conv_b],
            pooled: vec![0.0; pooled_cells * arch.conv_b],
            argmax: vec![0; pooled_cells * arch.conv_b],
            cols_c: vec![0.0; pooled_cells * taps * arch.conv_b],
            a4: vec![0.0; pooled_cells * arch.conv_c],
            hidden: vec![0.0; arch.hidden],
            output: 0.0,
        }
    }

    /// Compact fingerprint of every ReLU gate and pooling choice; two inputs
    /// with equal signatures lie in the same linear region of the network.
    pub fn signature(&self) -> Vec<u64> {
        let gates = [&self.a1, &self.a2, &self.a3, &self.a4, &self.hidden];
        let mut bits = Vec::new();
        let mut word = 0u64;
        let mut n = 0;
        for v in gates.into_iter().flat_map(|g| g.iter()) {
            word = (word << 1) | u64::from(*v > 0.0);
            n += 1;
            if n == 64 {
                bits.push(word);
                word = 0;
                n = 0;
            }
        }
        bits.push(word);
        bits.extend(self.argmax.iter().map(|&i| i as u64));
        bits
    }
}

/// Scratch buffers for one backward pass.
#[derive(Debug, Clone)]
pub(crate) struct Scratch {
    d_hidden: Vec<f64>,
    d_a4: Vec<f64>,
    d_cols: Vec<f64>,
    d_pooled: Vec<f64>,
    d_a3: Vec<f64>,
    d_a2: Vec<f64>,
    d_a1: Vec<f64>,
}

impl Scratch {
    pub fn new(arch: &Architecture) -> Self {
        let cells = arch.grid * arch.grid;
        let pooled_cells = arch.pooled() * arch.pooled();
        let taps = KERNEL * KERNEL;
        Self {
            d_hidden: vec![0.0; arch.hidden],
            d_a4: vec![0.0; pooled_cells * arch.conv_c],
            d_cols: vec![0.0; (cells * taps * arch.pointwise).max(pooled_cells * taps * arch.conv_b)],
            d_pooled: vec![0.0; pooled_cells * arch.conv_b],
            d_a3: vec![0.0; cells * arch.conv_b],
            d_a2: vec![0.0; cells * arch.pointwise],
            d_a1: vec![0.0; cells * arch.conv_a],
        }
    }
}

/// A strided view of a matrix.
#[derive(Clone, Copy)]
struct Mat<'a> {
    data: &'a [f64],
    rows: usize,
    cols: usize,
    rs: usize,
    cs: usize,
}

impl<'a> Mat<'a> {
    /// Row-major `rows × cols`.
    fn new(data: &'a [f64], rows: usize, cols: usize) -> Self {
        Self { data, rows, cols, rs: cols, cs: 1 }
    }

    fn t(self) -> Self {
        Self { rows: self.cols, cols: self.rows, rs: self.cs, cs: self.rs, ..self }
    }

    fn fits(&self) -> bool {
        self.rows == 0 || self.cols == 0 || (self.rows - 1) * self.rs + (self.cols - 1) * self.cs < self.data.len()
    }
}

/// `c ← a·b + beta·c` with `c` row-major.
fn gemm(a: Mat<'_>, b: Mat<'_>, beta: f64, c: &mut [f64]) {
    let (m, k, n) = (a.rows, a.cols, b.cols);
    assert_eq!(k, b.rows, "inner dimensions");
    assert!(a.fits() && b.fits() && c.len() >= m * n, "matrix view out of bounds");
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: every index reachable through the strides was bounds-checked
    // above, and `c` does not alias `a` or `b` (it is a unique borrow).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn relu_in_place(v: &mut [f64]) {
    for x in v {
        if *x <= 0.0 {
            *x = 0.0;
        }
    }
}

/// Zeroes gradient entries whose forward activation was clipped by ReLU.
fn relu_gate(d: &mut [f64], activation: &[f64]) {
    for (d, &a) in d.iter_mut().zip(activation) {
        if a <= 0.0 {
            *d = 0.0;
        }
    }
}

/// For output cell `(y, x)` and tap `(ky, kx)`, the input cell under the
/// same-padded 3×3 window, if inside the grid.
#[inline]
fn tap_source(n: usize, y: usize, x: usize, ky: usize, kx: usize) -> Option<usize> {
    let iy = (y + ky).checked_sub(1).filter(|&v| v < n)?;
    let ix = (x + kx).checked_sub(1).filter(|&v| v < n)?;
    Some(iy * n + ix)
}

/// Patch matrix: row `p` holds the nine `cin`-vectors around cell `p`, zero
/// outside the grid.
fn im2col(input: &[f64], n: usize, cin: usize, cols: &mut [f64]) {
    let width = KERNEL * KERNEL * cin;
    for y in 0..n {
        for x in 0..n {
            let row = &mut cols[(y * n + x) * width..(y * n + x + 1) * width];
            for ky in 0..KERNEL {
                for kx in 0..KERNEL {
                    let dst = &mut row[(ky * KERNEL + kx) * cin..(ky * KERNEL + kx + 1) * cin];
                    match tap_source(n, y, x, ky, kx) {
                        Some(q) => dst.copy_from_slice(&input[q * cin..(q + 1) * cin]),
                        None => dst.fill(0.0),
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: sums patch gradients back onto input cells.
fn col2im(d_cols: &[f64], n: usize, cin: usize, d_input: &mut [f64]) {
    let width = KERNEL * KERNEL * cin;
    d_input.fill(0.0);
    for y in 0..n {
        for x in 0..n {
            let row = &d_cols[(y * n + x) * width..(y * n + x + 1) * width];
            for ky in 0..KERNEL {
                for kx in 0..KERNEL {
                    if let Some(q) = tap_source(n, y, x, ky, kx) {
                        let src = &row[(ky * KERNEL + kx) * cin..(ky * KERNEL + kx + 1) * cin];
                        for (d, s) in d_input[q * cin..(q + 1) * cin].iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                }
            }
        }
    }
}

/// `out = relu(x·W + b)` for `rows` input rows of width `cin`.
fn dense_relu(x: &[f64], rows: usize, cin: usize, layer: &Layer, cout: usize, out: &mut [f64]) {
    for row in out[..rows * cout].chunks_exact_mut(cout) {
        row.copy_from_slice(&layer.bias);
    }
    gemm(Mat::new(x, rows, cin), Mat::new(&layer.weight, cin, cout), 1.0, out);
    relu_in_place(&mut out[..rows * cout]);
}

/// Weight and bias gradients of `z = x·W + b` given `dz`, and optionally
/// `dx = dz·Wᵀ`.
fn dense_backward(
    x: &[f64],
    rows: usize,
    cin: usize,
    cout: usize,
    dz: &[f64],
    layer: &Layer,
    grad: &mut Layer,
    dx: Option<&mut [f64]>,
) {
    for row in dz[..rows * cout].chunks_exact(cout) {
        for (g, d) in grad.bias.iter_mut().zip(row) {
            *g += d;
        }
    }
    gemm(Mat::new(x, rows, cin).t(), Mat::new(dz, rows, cout), 1.0, &mut grad.weight);
    if let Some(dx) = dx {
        gemm(Mat::new(dz, rows, cout), Mat::new(&layer.weight, cin, cout).t(), 0.0, dx);
    }
}

/// Runs the full stack and returns the raw (normalised) output.
pub(crate) fn forward(arch: &Architecture, params: &Params, input: GridInput<'_>, act: &mut Activations) -> f64 {
    let n = arch.grid;
    let m = arch.pooled();
    let cin = arch.in_channels;
    let taps = KERNEL * KERNEL;

    // Masking stage: absent cells contribute exactly zero downstream.
    for (cell, &mask) in input.mask.iter().enumerate() {
        let src = &input.features[cell * cin..(cell + 1) * cin];
        let dst = &mut act.masked[cell * cin..(cell + 1) * cin];
        if mask != 0.0 {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = s * mask;
            }
        } else {
            dst.fill(0.0);
        }
    }

    im2col(&act.masked, n, cin, &mut act.cols_a);
    dense_relu(&act.cols_a, n * n, taps * cin, &params.conv_a, arch.conv_a, &mut act.a1);
    dense_relu(&act.a1, n * n, arch.conv_a, &params.pointwise, arch.pointwise, &mut act.a2);
    im2col(&act.a2, n, arch.pointwise, &mut act.cols_b);
    dense_relu(&act.cols_b, n * n, taps * arch.pointwise, &params.conv_b, arch.conv_b, &mut act.a3);

    // 2×2 max-pool, floor; ties go to the first cell in row-major order.
    let cb = arch.conv_b;
    for py in 0..m {
        for px in 0..m {
            for c in 0..cb {
                let mut best_idx = ((2 * py) * n + 2 * px) * cb + c;
                let mut best = act.a3[best_idx];
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = ((2 * py + dy) * n + 2 * px + dx) * cb + c;
                    if act.a3[idx] > best {
                        best = act.a3[idx];
                        best_idx = idx;
                    }
                }
                let o = (py * m + px) * cb + c;
                act.pooled[o] = best;
                act.argmax[o] = best_idx;
            }
        }
    }

    im2col(&act.pooled, m, cb, &mut act.cols_c);
    dense_relu(&act.cols_c, m * m, taps * cb, &params.conv_c, arch.conv_c, &mut act.a4);
    dense_relu(&act.a4, 1, act.a4.len(), &params.hidden, arch.hidden, &mut act.hidden);

    let mut out = params.output.bias[0];
    for (v, w) in act.hidden.iter().zip(&params.output.weight) {
        out += v * w;
    }
    act.output = out;
    out
}

/// Adds `d_output ·` ∂output/∂θ into `grad`, using activations from [`forward`].
pub(crate) fn backward(
    arch: &Architecture,
    params: &Params,
    act: &Activations,
    d_output: f64,
    scratch: &mut Scratch,
    grad: &mut Params,
) {
    let n = arch.grid;
    let m = arch.pooled();
    let taps = KERNEL * KERNEL;
    let (ca, cp, cb, cc) = (arch.conv_a, arch.pointwise, arch.conv_b, arch.conv_c);

    // Output dense.
    grad.output.bias[0] += d_output;
    for (g, &a) in grad.output.weight.iter_mut().zip(&act.hidden) {
        *g += d_output * a;
    }
    for ((d, &w), &a) in scratch.d_hidden.iter_mut().zip(&params.output.weight).zip(&act.hidden) {
        *d = if a > 0.0 { w * d_output } else { 0.0 };
    }

    let flat = act.a4.len();
    dense_backward(
        &act.a4,
        1,
        flat,
        arch.hidden,
        &scratch.d_hidden,
        &params.hidden,
        &mut grad.hidden,
        Some(&mut scratch.d_a4),
    );
    relu_gate(&mut scratch.d_a4, &act.a4);

    let d_cols_c = &mut scratch.d_cols[..m * m * taps * cb];
    dense_backward(&act.cols_c, m * m, taps * cb, cc, &scratch.d_a4, &params.conv_c, &mut grad.conv_c, Some(d_cols_c));
    col2im(d_cols_c, m, cb, &mut scratch.d_pooled);

    // Unpool: route to the recorded argmax, then gate by ConvB's ReLU.
    scratch.d_a3.fill(0.0);
    for (o, &src) in act.argmax.iter().enumerate() {
        if act.a3[src] > 0.0 {
            scratch.d_a3[src] += scratch.d_pooled[o];
        }
    }

    let d_cols_b = &mut scratch.d_cols[..n * n * taps * cp];
    dense_backward(&act.cols_b, n * n, taps * cp, cb, &scratch.d_a3, &params.conv_b, &mut grad.conv_b, Some(d_cols_b));
    col2im(d_cols_b, n, cp, &mut scratch.d_a2);
    relu_gate(&mut scratch.d_a2, &act.a2);

    dense_backward(&act.a1, n * n, ca, cp, &scratch.d_a2, &params.pointwise, &mut grad.pointwise, Some(&mut scratch.d_a1));
    relu_gate(&mut scratch.d_a1, &act.a1);

    // The masked input needs no gradient.
    dense_backward(&act.cols_a, n * n, taps * arch.in_channels, ca, &scratch.d_a1, &params.conv_a, &mut grad.conv_a, None);
}
