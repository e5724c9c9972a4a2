//! Layer primitives with hand-written forward and reverse-mode backward
//! passes. All convolutions run as shift-and-accumulate over contiguous
//! z-runs, which keeps the inner loops vectorisable.

use super::tensor::Tensor5;

/// 3D convolution with odd kernel and same padding.
/// Weight layout: [c_out][c_in][kx][ky][kz], then c_out biases.
pub fn conv3d_forward(
    x: &Tensor5,
    w: &[f64],
    bias: &[f64],
    c_out: usize,
    k: (usize, usize, usize),
) -> Tensor5 {
    let [nb, c_in, nx, ny, nz] = x.shape;
    let (kx, ky, kz) = k;
    let (rx, ry, rz) = (kx / 2, ky / 2, kz / 2);
    let mut out = Tensor5::zeros([nb, c_out, nx, ny, nz]);
    for b in 0..nb {
        for co in 0..c_out {
            let base = out.idx(b, co, 0, 0, 0);
            out.data[base..base + nx * ny * nz].fill(bias[co]);
        }
    }
    for b in 0..nb {
        for co in 0..c_out {
            for ci in 0..c_in {
                for dx in 0..kx {
                    let (x_lo, x_hi) = shift_range(nx, dx as i64 - rx as i64);
                    for dy in 0..ky {
                        let (y_lo, y_hi) = shift_range(ny, dy as i64 - ry as i64);
                        for dz in 0..kz {
                            let (z_lo, z_hi) = shift_range(nz, dz as i64 - rz as i64);
                            if z_lo >= z_hi {
                                continue;
                            }
                            let wv = w[((co * c_in + ci) * kx + dx) * ky * kz + dy * kz + dz];
                            let run = z_hi - z_lo;
                            let oz = dz as i64 - rz as i64;
                            for xo in x_lo..x_hi {
                                let xi = (xo as i64 + dx as i64 - rx as i64) as usize;
                                for yo in y_lo..y_hi {
                                    let yi = (yo as i64 + dy as i64 - ry as i64) as usize;
                                    let ob = out.idx(b, co, xo, yo, z_lo);
                                    let ib = x.idx(b, ci, xi, yi, (z_lo as i64 + oz) as usize);
                                    let (orow, irow) = (
                                        &mut out.data[ob..ob + run],
                                        &x.data[ib..ib + run],
                                    );
                                    for (o, i) in orow.iter_mut().zip(irow) {
                                        *o += wv * i;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Gradients of conv3d: (d_input, d_weights, d_bias).
pub fn conv3d_backward(
    x: &Tensor5,
    w: &[f64],
    d_out: &Tensor5,
    c_out: usize,
    k: (usize, usize, usize),
) -> (Tensor5, Vec<f64>, Vec<f64>) {
    let [nb, c_in, nx, ny, nz] = x.shape;
    let (kx, ky, kz) = k;
    let (rx, ry, rz) = (kx / 2, ky / 2, kz / 2);
    let mut d_x = Tensor5::zeros(x.shape);
    let mut d_w = vec![0.0; w.len()];
    let mut d_b = vec![0.0; c_out];
    let plane = nx * ny * nz;
    for b in 0..nb {
        for co in 0..c_out {
            let base = d_out.idx(b, co, 0, 0, 0);
            d_b[co] += d_out.data[base..base + plane].iter().sum::<f64>();
        }
    }
    for b in 0..nb {
        for co in 0..c_out {
            for ci in 0..c_in {
                for dx in 0..kx {
                    let (x_lo, x_hi) = shift_range(nx, dx as i64 - rx as i64);
                    for dy in 0..ky {
                        let (y_lo, y_hi) = shift_range(ny, dy as i64 - ry as i64);
                        for dz in 0..kz {
                            let (z_lo, z_hi) = shift_range(nz, dz as i64 - rz as i64);
                            if z_lo >= z_hi {
                                continue;
                            }
                            let widx = ((co * c_in + ci) * kx + dx) * ky * kz + dy * kz + dz;
                            let wv = w[widx];
                            let run = z_hi - z_lo;
                            let oz = dz as i64 - rz as i64;
                            let mut wacc = 0.0;
                            for xo in x_lo..x_hi {
                                let xi = (xo as i64 + dx as i64 - rx as i64) as usize;
                                for yo in y_lo..y_hi {
                                    let yi = (yo as i64 + dy as i64 - ry as i64) as usize;
                                    let ob = d_out.idx(b, co, xo, yo, z_lo);
                                    let ib = x.idx(b, ci, xi, yi, (z_lo as i64 + oz) as usize);
                                    let grow = &d_out.data[ob..ob + run];
                                    let irow = &x.data[ib..ib + run];
                                    let drow = &mut d_x.data[ib..ib + run];
                                    for ((g, i), d) in grow.iter().zip(irow).zip(drow) {
                                        wacc += g * i;
                                        *d += wv * g;
                                    }
                                }
                            }
                            d_w[widx] += wacc;
                        }
                    }
                }
            }
        }
    }
    (d_x, d_w, d_b)
}

/// Valid output range along one axis for input index = output index + shift.
#[inline]
fn shift_range(n: usize, shift: i64) -> (usize, usize) {
    let lo = (-shift).max(0) as usize;
    let hi = ((n as i64 - shift).min(n as i64)).max(0) as usize;
    (lo, hi)
}

/// Transposed convolution with kernel (2, 2, 1) and stride (2, 2, 1):
/// doubles the in-plane dims. Weight layout: [c_in][c_out][dx][dy].
pub fn upconv2_forward(x: &Tensor5, w: &[f64], bias: &[f64], c_out: usize) -> Tensor5 {
    let [nb, c_in, nx, ny, nz] = x.shape;
    let mut out = Tensor5::zeros([nb, c_out, 2 * nx, 2 * ny, nz]);
    for b in 0..nb {
        for co in 0..c_out {
            let base = out.idx(b, co, 0, 0, 0);
            out.data[base..base + 4 * nx * ny * nz].fill(bias[co]);
        }
    }
    for b in 0..nb {
        for ci in 0..c_in {
            for co in 0..c_out {
                for dx in 0..2 {
                    for dy in 0..2 {
                        let wv = w[((ci * c_out + co) * 2 + dx) * 2 + dy];
                        for xi in 0..nx {
                            for yi in 0..ny {
                                let ob = out.idx(b, co, 2 * xi + dx, 2 * yi + dy, 0);
                                let ib = x.idx(b, ci, xi, yi, 0);
                                let (orow, irow) =
                                    (&mut out.data[ob..ob + nz], &x.data[ib..ib + nz]);
                                for (o, i) in orow.iter_mut().zip(irow) {
                                    *o += wv * i;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn upconv2_backward(
    x: &Tensor5,
    w: &[f64],
    d_out: &Tensor5,
    c_out: usize,
) -> (Tensor5, Vec<f64>, Vec<f64>) {
    let [nb, c_in, nx, ny, nz] = x.shape;
    let mut d_x = Tensor5::zeros(x.shape);
    let mut d_w = vec![0.0; w.len()];
    let mut d_b = vec![0.0; c_out];
    let oplane = 4 * nx * ny * nz;
    for b in 0..nb {
        for co in 0..c_out {
            let base = d_out.idx(b, co, 0, 0, 0);
            d_b[co] += d_out.data[base..base + oplane].iter().sum::<f64>();
        }
    }
    for b in 0..nb {
        for ci in 0..c_in {
            for co in 0..c_out {
                for dx in 0..2 {
                    for dy in 0..2 {
                        let widx = ((ci * c_out + co) * 2 + dx) * 2 + dy;
                        let wv = w[widx];
                        let mut wacc = 0.0;
                        for xi in 0..nx {
                            for yi in 0..ny {
                                let ob = d_out.idx(b, co, 2 * xi + dx, 2 * yi + dy, 0);
                                let ib = x.idx(b, ci, xi, yi, 0);
                                let grow = &d_out.data[ob..ob + nz];
                                let irow = &x.data[ib..ib + nz];
                                let drow = &mut d_x.data[ib..ib + nz];
                                for ((g, i), d) in grow.iter().zip(irow).zip(drow) {
                                    wacc += g * i;
                                    *d += wv * g;
                                }
                            }
                        }
                        d_w[widx] += wacc;
                    }
                }
            }
        }
    }
    (d_x, d_w, d_b)
}

/// Transposed convolution with kernel (1, 1, k) and stride (1, 1, k):
/// expands the slice axis by k. Weight layout: [c_in][c_out][dz].
pub fn upconvz_forward(x: &Tensor5, w: &[f64], bias: &[f64], c_out: usize, k: usize) -> Tensor5 {
    let [nb, c_in, nx, ny, nz] = x.shape;
    let mut out = Tensor5::zeros([nb, c_out, nx, ny, k * nz]);
    for b in 0..nb {
        for co in 0..c_out {
            let base = out.idx(b, co, 0, 0, 0);
            out.data[base..base + nx * ny * k * nz].fill(bias[co]);
        }
    }
    for b in 0..nb {
        for ci in 0..c_in {
            for co in 0..c_out {
                for x_ in 0..nx {
                    for y_ in 0..ny {
                        let ib = x.idx(b, ci, x_, y_, 0);
                        let ob = out.idx(b, co, x_, y_, 0);
                        for z in 0..nz {
                            let iv = x.data[ib + z];
                            let orow = &mut out.data[ob + k * z..ob + k * z + k];
                            for (dz, o) in orow.iter_mut().enumerate() {
                                *o += w[(ci * c_out + co) * k + dz] * iv;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn upconvz_backward(
    x: &Tensor5,
    w: &[f64],
    d_out: &Tensor5,
    c_out: usize,
    k: usize,
) -> (Tensor5, Vec<f64>, Vec<f64>) {
    let [nb, c_in, nx, ny, nz] = x.shape;
    let mut d_x = Tensor5::zeros(x.shape);
    let mut d_w = vec![0.0; w.len()];
    let mut d_b = vec![0.0; c_out];
    let oplane = nx * ny * k * nz;
    for b in 0..nb {
        for co in 0..c_out {
            let base = d_out.idx(b, co, 0, 0, 0);
            d_b[co] += d_out.data[base..base + oplane].iter().sum::<f64>();
        }
    }
    for b in 0..nb {
        for ci in 0..c_in {
            for co in 0..c_out {
                for x_ in 0..nx {
                    for y_ in 0..ny {
                        let ib = x.idx(b, ci, x_, y_, 0);
                        let ob = d_out.idx(b, co, x_, y_, 0);
                        for z in 0..nz {
                            let iv = x.data[ib + z];
                            let grow = &d_out.data[ob + k * z..ob + k * z + k];
                            let mut dacc = 0.0;
                            for (dz, &g) in grow.iter().enumerate() {
                                let widx = (ci * c_out + co) * k + dz;
                                d_w[widx] += g * iv;
                                dacc += w[widx] * g;
                            }
                            d_x.data[ib + z] += dacc;
                        }
                    }
                }
            }
        }
    }
    (d_x, d_w, d_b)
}

/// Max pooling over (2, 2, 1) windows. In-plane dims must be even.
/// Returns the pooled tensor and the argmax linear index (into the input)
/// per output element; ties resolve to the first window element scanned.
pub fn maxpool21_forward(x: &Tensor5) -> (Tensor5, Vec<usize>) {
    let [nb, c, nx, ny, nz] = x.shape;
    debug_assert!(nx % 2 == 0 && ny % 2 == 0);
    let mut out = Tensor5::zeros([nb, c, nx / 2, ny / 2, nz]);
    let mut argmax = vec![0usize; out.len()];
    let mut oi = 0;
    for b in 0..nb {
        for ch in 0..c {
            for xo in 0..nx / 2 {
                for yo in 0..ny / 2 {
                    for z in 0..nz {
                        let mut best_idx = x.idx(b, ch, 2 * xo, 2 * yo, z);
                        let mut best = x.data[best_idx];
                        for (dx, dy) in [(0, 1), (1, 0), (1, 1)] {
                            let i = x.idx(b, ch, 2 * xo + dx, 2 * yo + dy, z);
                            if x.data[i] > best {
                                best = x.data[i];
                                best_idx = i;
                            }
                        }
                        out.data[oi] = best;
                        argmax[oi] = best_idx;
                        oi += 1;
                    }
                }
            }
        }
    }
    (out, argmax)
}

pub fn maxpool21_backward(d_out: &Tensor5, argmax: &[usize], in_shape: [usize; 5]) -> Tensor5 {
    let mut d_x = Tensor5::zeros(in_shape);
    for (g, &src) in d_out.data.iter().zip(argmax) {
        d_x.data[src] += g;
    }
    d_x
}

/// Leaky rectifier.
pub fn leaky_forward(x: &Tensor5, slope: f64) -> Tensor5 {
    let data = x
        .data
        .iter()
        .map(|&v| if v > 0.0 { v } else { slope * v })
        .collect();
    Tensor5 {
        data,
        shape: x.shape,
    }
}

pub fn leaky_backward(x_pre: &Tensor5, d_out: &Tensor5, slope: f64) -> Tensor5 {
    let data = x_pre
        .data
        .iter()
        .zip(&d_out.data)
        .map(|(&v, &g)| if v > 0.0 { g } else { slope * g })
        .collect();
    Tensor5 {
        data,
        shape: d_out.shape,
    }
}
