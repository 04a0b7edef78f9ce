//! Dense CHW building blocks with explicit backward passes.

use ndarray::Array3;

/// Channel-major feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct Feat {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Feat {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self {
            c,
            h,
            w,
            data: vec![0.0; c * h * w],
        }
    }

    pub fn from_array(a: &Array3<f64>) -> Self {
        let (c, h, w) = a.dim();
        Self {
            c,
            h,
            w,
            data: a.iter().copied().collect(),
        }
    }

    pub fn to_array(&self) -> Array3<f64> {
        Array3::from_shape_vec((self.c, self.h, self.w), self.data.clone())
            .expect("feature length matches shape")
    }

    fn plane(&self, ch: usize) -> &[f64] {
        let n = self.h * self.w;
        &self.data[ch * n..(ch + 1) * n]
    }

    fn plane_mut(&mut self, ch: usize) -> &mut [f64] {
        let n = self.h * self.w;
        &mut self.data[ch * n..(ch + 1) * n]
    }
}

/// Geometry of one zero-padded, stride-1 convolution. Weights are laid out
/// `[out][in][ky][kx]`, followed by `out` biases elsewhere in the parameter
/// vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub w_off: usize,
    pub b_off: usize,
}

impl ConvSpec {
    pub fn weight_len(&self) -> usize {
        self.out_c * self.in_c * self.k * self.k
    }

    /// Valid output range for a tap at offset `d` (relative to the centre).
    fn span(d: isize, n: usize) -> (usize, usize) {
        let lo = (-d).max(0) as usize;
        let hi = (n as isize - d.max(0)).max(0) as usize;
        (lo.min(n), hi.max(lo.min(n)))
    }

    pub fn forward(&self, params: &[f64], input: &Feat) -> Feat {
        debug_assert_eq!(input.c, self.in_c);
        let (h, w, k) = (input.h, input.w, self.k);
        let r = (k / 2) as isize;
        let weights = &params[self.w_off..self.w_off + self.weight_len()];
        let bias = &params[self.b_off..self.b_off + self.out_c];
        let mut out = Feat::zeros(self.out_c, h, w);
        for o in 0..self.out_c {
            let dst = out.plane_mut(o);
            dst.fill(bias[o]);
            for i in 0..self.in_c {
                let src = input.plane(i);
                for ky in 0..k {
                    let dy = ky as isize - r;
                    let (y0, y1) = Self::span(dy, h);
                    for kx in 0..k {
                        let dx = kx as isize - r;
                        let (x0, x1) = Self::span(dx, w);
                        let wv = weights[((o * self.in_c + i) * k + ky) * k + kx];
                        for y in y0..y1 {
                            let sy = (y as isize + dy) as usize;
                            let srow = &src[sy * w..(sy + 1) * w];
                            let drow = &mut dst[y * w..(y + 1) * w];
                            for x in x0..x1 {
                                drow[x] += wv * srow[(x as isize + dx) as usize];
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Accumulates parameter gradients into `grad` and returns the gradient
    /// with respect to the input.
    pub fn backward(
        &self,
        params: &[f64],
        input: &Feat,
        grad_out: &Feat,
        grad: &mut [f64],
    ) -> Feat {
        let (h, w, k) = (input.h, input.w, self.k);
        let r = (k / 2) as isize;
        let weights = &params[self.w_off..self.w_off + self.weight_len()];
        let mut grad_in = Feat::zeros(self.in_c, h, w);
        for o in 0..self.out_c {
            let g = grad_out.plane(o);
            grad[self.b_off + o] += g.iter().sum::<f64>();
            for i in 0..self.in_c {
                let src = input.plane(i);
                for ky in 0..k {
                    let dy = ky as isize - r;
                    let (y0, y1) = Self::span(dy, h);
                    for kx in 0..k {
                        let dx = kx as isize - r;
                        let (x0, x1) = Self::span(dx, w);
                        let widx = ((o * self.in_c + i) * k + ky) * k + kx;
                        let wv = weights[widx];
                        let mut gw = 0.0;
                        let gin = grad_in.plane_mut(i);
                        for y in y0..y1 {
                            let sy = (y as isize + dy) as usize;
                            let grow = &g[y * w..(y + 1) * w];
                            let srow = &src[sy * w..(sy + 1) * w];
                            let girow = &mut gin[sy * w..(sy + 1) * w];
                            for x in x0..x1 {
                                let sx = (x as isize + dx) as usize;
                                gw += grow[x] * srow[sx];
                                girow[sx] += wv * grow[x];
                            }
                        }
                        grad[self.w_off + widx] += gw;
                    }
                }
            }
        }
        grad_in
    }
}

pub fn tanh_forward(x: &Feat) -> Feat {
    Feat {
        data: x.data.iter().map(|v| v.tanh()).collect(),
        ..*x
    }
}

/// Given the activation output `y = tanh(x)`.
pub fn tanh_backward(y: &Feat, grad_out: &Feat) -> Feat {
    Feat {
        data: y
            .data
            .iter()
            .zip(&grad_out.data)
            .map(|(y, g)| g * (1.0 - y * y))
            .collect(),
        ..*y
    }
}

/// Block averaging with a square window; edge blocks average only the pixels
/// they cover.
pub fn avg_pool(x: &Feat, factor: usize) -> Feat {
    if factor == 1 {
        return x.clone();
    }
    let (oh, ow) = (x.h.div_ceil(factor), x.w.div_ceil(factor));
    let mut out = Feat::zeros(x.c, oh, ow);
    for c in 0..x.c {
        let src = x.plane(c);
        let dst = out.plane_mut(c);
        for oy in 0..oh {
            let ys = oy * factor..((oy + 1) * factor).min(x.h);
            for ox in 0..ow {
                let xs = ox * factor..((ox + 1) * factor).min(x.w);
                let count = (ys.len() * xs.len()) as f64;
                let mut s = 0.0;
                for y in ys.clone() {
                    s += src[y * x.w + xs.start..y * x.w + xs.end]
                        .iter()
                        .sum::<f64>();
                }
                dst[oy * ow + ox] = s / count;
            }
        }
    }
    out
}

/// Per-axis interpolation taps for half-pixel-centred bilinear resizing.
fn bilinear_taps(n_in: usize, n_out: usize) -> Vec<(usize, usize, f64)> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(n_in - 1);
            let i1 = (i0 + 1).min(n_in - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

pub fn bilinear_resize(x: &Feat, oh: usize, ow: usize) -> Feat {
    let ty = bilinear_taps(x.h, oh);
    let tx = bilinear_taps(x.w, ow);
    let mut out = Feat::zeros(x.c, oh, ow);
    for c in 0..x.c {
        let src = x.plane(c);
        let dst = out.plane_mut(c);
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let top = src[y0 * x.w + x0] * (1.0 - fx) + src[y0 * x.w + x1] * fx;
                let bot = src[y1 * x.w + x0] * (1.0 - fx) + src[y1 * x.w + x1] * fx;
                dst[oy * ow + ox] = top * (1.0 - fy) + bot * fy;
            }
        }
    }
    out
}

/// Adjoint of [`bilinear_resize`] from an `oh x ow` gradient back to `h x w`.
pub fn bilinear_resize_backward(grad_out: &Feat, h: usize, w: usize) -> Feat {
    let ty = bilinear_taps(h, grad_out.h);
    let tx = bilinear_taps(w, grad_out.w);
    let mut out = Feat::zeros(grad_out.c, h, w);
    for c in 0..grad_out.c {
        let g = grad_out.plane(c);
        let dst = out.plane_mut(c);
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let v = g[oy * grad_out.w + ox];
                dst[y0 * w + x0] += v * (1.0 - fy) * (1.0 - fx);
                dst[y0 * w + x1] += v * (1.0 - fy) * fx;
                dst[y1 * w + x0] += v * fy * (1.0 - fx);
                dst[y1 * w + x1] += v * fy * fx;
            }
        }
    }
    out
}

/// Softmax over channels at every pixel.
pub fn softmax_channels(x: &Feat) -> Feat {
    let n = x.h * x.w;
    let mut out = Feat::zeros(x.c, x.h, x.w);
    for p in 0..n {
        let max = (0..x.c)
            .map(|c| x.data[c * n + p])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for c in 0..x.c {
            let e = (x.data[c * n + p] - max).exp();
            out.data[c * n + p] = e;
            sum += e;
        }
        for c in 0..x.c {
            out.data[c * n + p] /= sum;
        }
    }
    out
}

/// Gradient with respect to logits given softmax output `y` and the gradient
/// with respect to `y`.
pub fn softmax_backward(y: &Feat, grad_out: &Feat) -> Feat {
    let n = y.h * y.w;
    let mut out = Feat::zeros(y.c, y.h, y.w);
    for p in 0..n {
        let dot: f64 = (0..y.c)
            .map(|c| y.data[c * n + p] * grad_out.data[c * n + p])
            .sum();
        for c in 0..y.c {
            out.data[c * n + p] = y.data[c * n + p] * (grad_out.data[c * n + p] - dot);
        }
    }
    out
}

/// [`softmax_backward`] on ndarray inputs (K x H x W).
pub fn softmax_backward_array(probs: &Array3<f64>, grad_probs: &Array3<f64>) -> Array3<f64> {
    softmax_backward(&Feat::from_array(probs), &Feat::from_array(grad_probs)).to_array()
}
