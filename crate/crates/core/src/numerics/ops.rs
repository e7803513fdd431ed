//! Forward and backward passes for the handful of layer types the network
//! uses. Matrix products and convolutions go through [`Real::gemm`].

use super::{NumericsError, Real, Tensor};

fn mismatch(op: &'static str, detail: String) -> NumericsError {
    NumericsError::ShapeMismatch { op, detail }
}

/// `a[m×k] · b[k×n]`.
pub fn matmul<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, NumericsError> {
    let (m, k) = a.dims2("matmul")?;
    let (k2, n) = b.dims2("matmul")?;
    if k != k2 {
        return Err(mismatch("matmul", format!("{m}x{k} · {k2}x{n}")));
    }
    let mut out = vec![T::zero(); m * n];
    T::gemm(
        m,
        k,
        n,
        a.data(),
        row_major(k),
        b.data(),
        row_major(n),
        T::zero(),
        &mut out,
        row_major(n),
    );
    Ok(Tensor::from_vec(&[m, n], out)?.debug_finite("matmul"))
}

fn row_major(cols: usize) -> (isize, isize) {
    (cols as isize, 1)
}

fn col_major(rows: usize) -> (isize, isize) {
    (1, rows as isize)
}

/// Gradients of `a·b` given upstream `g`: `(g·bᵀ, aᵀ·g)`.
pub fn matmul_backward<T: Real>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    g: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>), NumericsError> {
    let (m, k) = a.dims2("matmul_backward")?;
    let (_, n) = b.dims2("matmul_backward")?;
    if g.shape() != [m, n] {
        return Err(mismatch(
            "matmul_backward",
            format!("upstream {:?}, expected [{m}, {n}]", g.shape()),
        ));
    }
    let mut da = vec![T::zero(); m * k];
    T::gemm(
        m,
        n,
        k,
        g.data(),
        row_major(n),
        b.data(),
        col_major(n),
        T::zero(),
        &mut da,
        row_major(k),
    );
    let mut db = vec![T::zero(); k * n];
    T::gemm(
        k,
        m,
        n,
        a.data(),
        col_major(k),
        g.data(),
        row_major(n),
        T::zero(),
        &mut db,
        row_major(n),
    );
    Ok((Tensor::from_vec(&[m, k], da)?, Tensor::from_vec(&[k, n], db)?))
}

pub fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Upstream gradient masked to where the forward input was positive.
pub fn relu_backward<T: Real>(x: &Tensor<T>, g: &Tensor<T>) -> Tensor<T> {
    let data = x
        .data()
        .iter()
        .zip(g.data())
        .map(|(&xv, &gv)| if xv > T::zero() { gv } else { T::zero() })
        .collect();
    Tensor::from_vec(x.shape(), data).expect("relu_backward shapes agree")
}

pub fn sigmoid<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(sigmoid_scalar)
}

pub fn sigmoid_scalar<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

/// Backward of sigmoid expressed through its output `y`.
pub fn sigmoid_backward<T: Real>(y: &Tensor<T>, g: &Tensor<T>) -> Tensor<T> {
    let data = y
        .data()
        .iter()
        .zip(g.data())
        .map(|(&yv, &gv)| gv * yv * (T::one() - yv))
        .collect();
    Tensor::from_vec(y.shape(), data).expect("sigmoid_backward shapes agree")
}

/// Softmax down each column of a `C×T` tensor, max-subtracted.
pub fn softmax_channels<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>, NumericsError> {
    let (c, t) = x.dims2("softmax_channels")?;
    let xd = x.data();
    let mut out = vec![T::zero(); c * t];
    for col in 0..t {
        let max = (0..c)
            .map(|r| xd[r * t + col].as_f64())
            .fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = (0..c).map(|r| (xd[r * t + col].as_f64() - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        for r in 0..c {
            out[r * t + col] = T::from_f64_lossy(exps[r] / sum);
        }
    }
    Tensor::from_vec(&[c, t], out)
}

/// Backward of column softmax through its output `y`:
/// `dx = y ⊙ (g − Σ_c y·g)` per column.
pub fn softmax_channels_backward<T: Real>(y: &Tensor<T>, g: &Tensor<T>) -> Result<Tensor<T>, NumericsError> {
    let (c, t) = y.dims2("softmax_channels_backward")?;
    if g.shape() != y.shape() {
        return Err(mismatch(
            "softmax_channels_backward",
            format!("{:?} vs {:?}", g.shape(), y.shape()),
        ));
    }
    let (yd, gd) = (y.data(), g.data());
    let mut out = vec![T::zero(); c * t];
    for col in 0..t {
        let dot: f64 = (0..c)
            .map(|r| yd[r * t + col].as_f64() * gd[r * t + col].as_f64())
            .sum();
        for r in 0..c {
            let i = r * t + col;
            out[i] = T::from_f64_lossy(yd[i].as_f64() * (gd[i].as_f64() - dot));
        }
    }
    Tensor::from_vec(&[c, t], out)
}

/// Geometry of a same-padded, stride-1, dilated 1-D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv1dSpec {
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub dilation: usize,
}

impl Conv1dSpec {
    pub fn new(c_in: usize, c_out: usize, kernel: usize, dilation: usize) -> Result<Self, NumericsError> {
        if kernel.is_multiple_of(2) {
            return Err(NumericsError::EvenKernel(kernel));
        }
        if dilation == 0 {
            return Err(NumericsError::BadDilation(dilation));
        }
        Ok(Self {
            c_in,
            c_out,
            kernel,
            dilation,
        })
    }

    /// Zero padding on each side.
    pub fn padding(&self) -> usize {
        (self.kernel - 1) * self.dilation / 2
    }

    /// Half-width of the window of input columns one output column sees.
    pub fn radius(&self) -> usize {
        self.padding()
    }

    /// For tap `j`: the first source column and the range of output columns
    /// whose tap lands inside `[0, t_len)`.
    fn tap(&self, j: usize, t_len: usize) -> (usize, usize, usize) {
        let shift = (j * self.dilation) as isize - self.padding() as isize;
        let lo = (-shift).clamp(0, t_len as isize) as usize;
        let hi = (t_len as isize - shift).clamp(0, t_len as isize) as usize;
        if hi <= lo {
            return (0, 0, 0);
        }
        ((lo as isize + shift) as usize, lo, hi)
    }

    fn check(&self, input: &[usize], weight: &[usize], bias: &[usize]) -> Result<usize, NumericsError> {
        let t = match input {
            [c, t] if *c == self.c_in => *t,
            _ => {
                return Err(mismatch(
                    "conv1d",
                    format!("input {input:?}, expected [{}, T]", self.c_in),
                ))
            }
        };
        if weight != [self.c_out, self.c_in, self.kernel] {
            return Err(mismatch(
                "conv1d",
                format!(
                    "weight {weight:?}, expected [{}, {}, {}]",
                    self.c_out, self.c_in, self.kernel
                ),
            ));
        }
        if bias != [self.c_out] {
            return Err(mismatch("conv1d", format!("bias {bias:?}, expected [{}]", self.c_out)));
        }
        Ok(t)
    }
}

/// Unrolls `input` to `(c_in·kernel) × T` so the convolution becomes one
/// matrix product. Row `i·kernel + j` holds channel `i` shifted for tap `j`.
fn im2col<T: Real>(spec: &Conv1dSpec, x: &[T], t_len: usize) -> Vec<T> {
    let mut col = vec![T::zero(); spec.c_in * spec.kernel * t_len];
    for i in 0..spec.c_in {
        let row = &x[i * t_len..(i + 1) * t_len];
        for j in 0..spec.kernel {
            let (src_lo, lo, hi) = spec.tap(j, t_len);
            let dst = &mut col[(i * spec.kernel + j) * t_len..][..t_len];
            dst[lo..hi].copy_from_slice(&row[src_lo..src_lo + (hi - lo)]);
        }
    }
    col
}

/// `out[c][t] = bias[c] + Σ_{i,j} w[c][i][j] · in_padded[i][t + j·d]`.
pub fn conv1d<T: Real>(
    spec: &Conv1dSpec,
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>, NumericsError> {
    let t_len = spec.check(input.shape(), weight.shape(), bias.shape())?;
    let ck = spec.c_in * spec.kernel;
    let col = im2col(spec, input.data(), t_len);
    let mut out: Vec<T> = bias
        .data()
        .iter()
        .flat_map(|&b| std::iter::repeat_n(b, t_len))
        .collect();
    T::gemm(
        spec.c_out,
        ck,
        t_len,
        weight.data(),
        row_major(ck),
        &col,
        row_major(t_len),
        T::one(),
        &mut out,
        row_major(t_len),
    );
    Ok(Tensor::from_vec(&[spec.c_out, t_len], out)?.debug_finite("conv1d"))
}

#[derive(Debug, Clone)]
pub struct Conv1dGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn conv1d_backward<T: Real>(
    spec: &Conv1dSpec,
    input: &Tensor<T>,
    weight: &Tensor<T>,
    g: &Tensor<T>,
) -> Result<Conv1dGrads<T>, NumericsError> {
    let t_len = spec.check(input.shape(), weight.shape(), &[spec.c_out])?;
    if g.shape() != [spec.c_out, t_len] {
        return Err(mismatch("conv1d_backward", format!("upstream {:?}", g.shape())));
    }
    let ck = spec.c_in * spec.kernel;
    let gd = g.data();
    let col = im2col(spec, input.data(), t_len);

    let db: Vec<T> = (0..spec.c_out)
        .map(|c| gd[c * t_len..(c + 1) * t_len].iter().fold(T::zero(), |a, &v| a + v))
        .collect();
    let mut dw = vec![T::zero(); spec.c_out * ck];
    T::gemm(
        spec.c_out,
        t_len,
        ck,
        gd,
        row_major(t_len),
        &col,
        col_major(t_len),
        T::zero(),
        &mut dw,
        row_major(ck),
    );
    let mut dcol = vec![T::zero(); ck * t_len];
    T::gemm(
        ck,
        spec.c_out,
        t_len,
        weight.data(),
        col_major(ck),
        gd,
        row_major(t_len),
        T::zero(),
        &mut dcol,
        row_major(t_len),
    );

    let mut dx = vec![T::zero(); spec.c_in * t_len];
    for i in 0..spec.c_in {
        let dxrow = &mut dx[i * t_len..(i + 1) * t_len];
        for j in 0..spec.kernel {
            let (src_lo, lo, hi) = spec.tap(j, t_len);
            let src = &dcol[(i * spec.kernel + j) * t_len..][lo..hi];
            for (d, &v) in dxrow[src_lo..src_lo + (hi - lo)].iter_mut().zip(src) {
                *d = *d + v;
            }
        }
    }
    Ok(Conv1dGrads {
        input: Tensor::from_vec(&[spec.c_in, t_len], dx)?,
        weight: Tensor::from_vec(weight.shape(), dw)?,
        bias: Tensor::from_vec(&[spec.c_out], db)?,
    })
}
