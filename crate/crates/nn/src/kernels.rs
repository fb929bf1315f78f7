//! Dense CPU kernels shared by forward and backward passes.

use crate::error::{NnError, Result};
use crate::tensor::{strides, Tensor};

/// `c = alpha * a @ b + beta * c` over strided row-major views.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    c: &mut [f64],
    beta: f64,
) {
    if m == 0 || n == 0 {
        return;
    }
    if k > 0 {
        assert!(a.len() > (m - 1) * rsa + (k - 1) * csa);
        assert!(b.len() > (k - 1) * rsb + (n - 1) * csb);
    }
    assert!(c.len() >= m * n);
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Batch layout of a matrix product.
#[derive(Debug, Clone, Copy)]
pub(crate) struct MatmulDims {
    pub batch: usize,
    pub a_batched: bool,
    pub b_batched: bool,
    pub m: usize,
    pub k: usize,
    pub n: usize,
}

pub(crate) fn matmul_dims(a: &[usize], b: &[usize]) -> Result<(MatmulDims, Vec<usize>)> {
    let err = || NnError::ShapeMismatch {
        lhs: a.to_vec(),
        rhs: b.to_vec(),
        context: "matmul",
    };
    if a.len() < 2 || b.len() < 2 {
        return Err(err());
    }
    let (m, k) = (a[a.len() - 2], a[a.len() - 1]);
    let (k2, n) = (b[b.len() - 2], b[b.len() - 1]);
    if k != k2 {
        return Err(err());
    }
    let a_lead = &a[..a.len() - 2];
    let b_lead = &b[..b.len() - 2];
    let lead = match (a_lead.is_empty(), b_lead.is_empty()) {
        (true, _) => b_lead.to_vec(),
        (false, true) => a_lead.to_vec(),
        (false, false) if a_lead == b_lead => a_lead.to_vec(),
        _ => return Err(err()),
    };
    let batch = lead.iter().product::<usize>().max(1);
    let mut out = lead;
    out.push(m);
    out.push(n);
    Ok((
        MatmulDims {
            batch,
            a_batched: !a_lead.is_empty(),
            b_batched: !b_lead.is_empty(),
            m,
            k,
            n,
        },
        out,
    ))
}

pub(crate) fn matmul_forward(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (d, out_shape) = matmul_dims(a.shape(), b.shape())?;
    let mut out = vec![0.0; d.batch * d.m * d.n];
    for t in 0..d.batch {
        let ao = if d.a_batched { t * d.m * d.k } else { 0 };
        let bo = if d.b_batched { t * d.k * d.n } else { 0 };
        gemm(
            d.m,
            d.k,
            d.n,
            &a.data()[ao..],
            (d.k, 1),
            &b.data()[bo..],
            (d.n, 1),
            &mut out[t * d.m * d.n..],
            0.0,
        );
    }
    Ok(Tensor::from_parts(out_shape, out))
}

/// Gradients of `a @ b` given the upstream gradient `g`.
pub(crate) fn matmul_backward(
    a: &Tensor,
    b: &Tensor,
    g: &Tensor,
    need_a: bool,
    need_b: bool,
) -> (Option<Tensor>, Option<Tensor>) {
    let (d, _) = matmul_dims(a.shape(), b.shape()).expect("shapes checked in forward");
    let mut ga = need_a.then(|| vec![0.0; a.numel()]);
    let mut gb = need_b.then(|| vec![0.0; b.numel()]);
    for t in 0..d.batch {
        let ao = if d.a_batched { t * d.m * d.k } else { 0 };
        let bo = if d.b_batched { t * d.k * d.n } else { 0 };
        let go = t * d.m * d.n;
        if let Some(ga) = ga.as_mut() {
            // dA = G @ B^T
            gemm(
                d.m,
                d.n,
                d.k,
                &g.data()[go..],
                (d.n, 1),
                &b.data()[bo..],
                (1, d.n),
                &mut ga[ao..],
                1.0,
            );
        }
        if let Some(gb) = gb.as_mut() {
            // dB = A^T @ G
            gemm(
                d.k,
                d.m,
                d.n,
                &a.data()[ao..],
                (1, d.k),
                &g.data()[go..],
                (d.n, 1),
                &mut gb[bo..],
                1.0,
            );
        }
    }
    (
        ga.map(|v| Tensor::from_parts(a.shape().to_vec(), v)),
        gb.map(|v| Tensor::from_parts(b.shape().to_vec(), v)),
    )
}

pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// Strides of `src` aligned to an output of rank `out.len()`, zero on broadcast axes.
fn aligned_strides(src: &[usize], out: &[usize]) -> Vec<usize> {
    let s = strides(src);
    let off = out.len() - src.len();
    (0..out.len())
        .map(|i| {
            if i < off || src[i - off] == 1 {
                0
            } else {
                s[i - off]
            }
        })
        .collect()
}

/// Calls `f(out_index, a_index, b_index)` over every element of the broadcast output.
pub(crate) fn for_each_broadcast(
    out: &[usize],
    a: &[usize],
    b: &[usize],
    mut f: impl FnMut(usize, usize, usize),
) {
    let n: usize = out.iter().product();
    if n == 0 {
        return;
    }
    let sa = aligned_strides(a, out);
    let sb = aligned_strides(b, out);
    let rank = out.len();
    let mut idx = vec![0usize; rank];
    let (mut ia, mut ib) = (0usize, 0usize);
    for o in 0..n {
        f(o, ia, ib);
        for d in (0..rank).rev() {
            idx[d] += 1;
            ia += sa[d];
            ib += sb[d];
            if idx[d] < out[d] {
                break;
            }
            ia -= sa[d] * out[d];
            ib -= sb[d] * out[d];
            idx[d] = 0;
        }
    }
}

/// Sum a gradient of broadcast shape back down to `target`.
pub(crate) fn reduce_to(g: &Tensor, target: &[usize]) -> Tensor {
    if g.shape() == target {
        return g.clone();
    }
    let mut out = vec![0.0; target.iter().product()];
    let gd = g.data();
    for_each_broadcast(g.shape(), target, target, |o, t, _| out[t] += gd[o]);
    Tensor::from_parts(target.to_vec(), out)
}

/// Geometry of a 1-D convolution over `[batch, channels, length]`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Conv1dGeom {
    pub batch: usize,
    pub c_in: usize,
    pub len: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_len: usize,
}

pub(crate) fn conv_out_len(len: usize, kernel: usize, stride: usize, padding: usize) -> usize {
    (len + 2 * padding).saturating_sub(kernel) / stride + 1
}

impl Conv1dGeom {
    pub fn new(x: &[usize], w: &[usize], stride: usize, padding: usize) -> Result<Self> {
        if x.len() != 3 || w.len() != 3 || x[1] != w[1] || stride == 0 || x[2] + 2 * padding < w[2]
        {
            return Err(NnError::ShapeMismatch {
                lhs: x.to_vec(),
                rhs: w.to_vec(),
                context: "conv1d",
            });
        }
        Ok(Self {
            batch: x[0],
            c_in: x[1],
            len: x[2],
            c_out: w[0],
            kernel: w[2],
            stride,
            padding,
            out_len: conv_out_len(x[2], w[2], stride, padding),
        })
    }

    fn source(&self, t: usize, k: usize) -> Option<usize> {
        let pos = (t * self.stride + k) as isize - self.padding as isize;
        (pos >= 0 && (pos as usize) < self.len).then_some(pos as usize)
    }

    /// Column matrix `[c_in * kernel, out_len]` for batch item `n`.
    pub fn im2col(&self, x: &[f64], n: usize, cols: &mut [f64]) {
        let base = n * self.c_in * self.len;
        for ci in 0..self.c_in {
            for k in 0..self.kernel {
                let row = (ci * self.kernel + k) * self.out_len;
                for t in 0..self.out_len {
                    cols[row + t] = match self.source(t, k) {
                        Some(p) => x[base + ci * self.len + p],
                        None => 0.0,
                    };
                }
            }
        }
    }

    pub fn col2im(&self, cols: &[f64], n: usize, dx: &mut [f64]) {
        let base = n * self.c_in * self.len;
        for ci in 0..self.c_in {
            for k in 0..self.kernel {
                let row = (ci * self.kernel + k) * self.out_len;
                for t in 0..self.out_len {
                    if let Some(p) = self.source(t, k) {
                        dx[base + ci * self.len + p] += cols[row + t];
                    }
                }
            }
        }
    }
}

/// Geometry of a 2-D convolution over `[batch, channels, height, width]`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Conv2dGeom {
    pub batch: usize,
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    pub oh: usize,
    pub ow: usize,
}

impl Conv2dGeom {
    pub fn new(
        x: &[usize],
        w: &[usize],
        stride: (usize, usize),
        padding: (usize, usize),
    ) -> Result<Self> {
        if x.len() != 4
            || w.len() != 4
            || x[1] != w[1]
            || stride.0 == 0
            || stride.1 == 0
            || x[2] + 2 * padding.0 < w[2]
            || x[3] + 2 * padding.1 < w[3]
        {
            return Err(NnError::ShapeMismatch {
                lhs: x.to_vec(),
                rhs: w.to_vec(),
                context: "conv2d",
            });
        }
        Ok(Self {
            batch: x[0],
            c_in: x[1],
            h: x[2],
            w: x[3],
            c_out: w[0],
            kh: w[2],
            kw: w[3],
            stride,
            padding,
            oh: conv_out_len(x[2], w[2], stride.0, padding.0),
            ow: conv_out_len(x[3], w[3], stride.1, padding.1),
        })
    }

    pub fn patch(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    pub fn out_area(&self) -> usize {
        self.oh * self.ow
    }

    fn visit(&self, n: usize, mut f: impl FnMut(usize, Option<usize>)) {
        let base = n * self.c_in * self.h * self.w;
        let area = self.out_area();
        for ci in 0..self.c_in {
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = ((ci * self.kh + ki) * self.kw + kj) * area;
                    for oi in 0..self.oh {
                        let y = (oi * self.stride.0 + ki) as isize - self.padding.0 as isize;
                        for oj in 0..self.ow {
                            let x = (oj * self.stride.1 + kj) as isize - self.padding.1 as isize;
                            let col = row + oi * self.ow + oj;
                            if y >= 0 && (y as usize) < self.h && x >= 0 && (x as usize) < self.w {
                                let src = base + (ci * self.h + y as usize) * self.w + x as usize;
                                f(col, Some(src));
                            } else {
                                f(col, None);
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn im2col(&self, x: &[f64], n: usize, cols: &mut [f64]) {
        self.visit(n, |c, s| cols[c] = s.map_or(0.0, |s| x[s]));
    }

    pub fn col2im(&self, cols: &[f64], n: usize, dx: &mut [f64]) {
        self.visit(n, |c, s| {
            if let Some(s) = s {
                dx[s] += cols[c];
            }
        });
    }
}
