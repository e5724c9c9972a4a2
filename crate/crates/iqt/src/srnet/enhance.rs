//! Whole-volume inference: tile, standardise, run the network, and stitch
//! with cosine-tapered overlap blending.

use super::model::{forward, SrModel};
use super::patch::patch_stats;
use super::tensor::Tensor5;
use crate::error::{IqtError, Result};
use crate::volume::Volume;

/// Tiling configuration for [`enhance`]; tiles overlap by half a patch.
#[derive(Debug, Clone, Copy)]
pub struct EnhanceTiling {
    pub patch_xy: usize,
    pub patch_z: usize,
}

impl Default for EnhanceTiling {
    fn default() -> Self {
        Self {
            patch_xy: 16,
            patch_z: 4,
        }
    }
}

/// Tile origins along one axis: stride = patch/2, final tile clamped so the
/// axis is fully covered.
fn tile_origins(n: usize, patch: usize) -> Vec<usize> {
    let stride = (patch / 2).max(1);
    let mut out = Vec::new();
    let mut o = 0;
    loop {
        if o + patch >= n {
            out.push(n - patch);
            break;
        }
        out.push(o);
        o += stride;
    }
    out.dedup();
    out
}

/// Raised-cosine taper over a patch: ramps from >0 to 1 across the overlap
/// region on sides that have a neighbour, flat 1 elsewhere. Two neighbours
/// at regular stride sum to exactly 1 in the overlap.
fn taper(patch: usize, ramp: usize, ramp_lo: bool, ramp_hi: bool) -> Vec<f64> {
    let mut w = vec![1.0; patch];
    if ramp == 0 {
        return w;
    }
    for i in 0..ramp.min(patch) {
        let s = (std::f64::consts::PI * (i as f64 + 0.5) / (2.0 * ramp as f64)).sin();
        if ramp_lo {
            w[i] *= s * s;
        }
        if ramp_hi {
            let c = s * s;
            w[patch - 1 - i] *= c;
        }
    }
    w
}

/// Run the model over a low-field volume, upsampling the slice axis by the
/// model's factor k. Tiles overlap by half a patch and are blended with a
/// cosine taper whose accumulated weight normalises to one at every output
/// voxel. Each tile is standardised with its own mean/std before the
/// forward pass and the inverse transform is applied to the prediction.
pub fn enhance(model: &SrModel, lf: &Volume, tiling: EnhanceTiling) -> Result<Volume> {
    // Work with the slice axis last.
    let axis = lf.slice_axis();
    let perm = match axis {
        0 => [1, 2, 0],
        1 => [0, 2, 1],
        2 => [0, 1, 2],
        other => {
            return Err(IqtError::Parameter(format!("invalid slice axis {other}")));
        }
    };
    let work = if axis == 2 {
        lf.clone()
    } else {
        lf.transposed(perm)?
    };

    let k = model.config().k;
    let (nx, ny, nz) = work.dims();
    let (px, pz) = (tiling.patch_xy, tiling.patch_z);
    if px > nx || px > ny || pz > nz {
        return Err(IqtError::Shape(format!(
            "volume {:?} is smaller than one ({px}, {px}, {pz}) patch",
            work.dims()
        )));
    }
    let div = 1usize << model.config().levels;
    if px % div != 0 {
        return Err(IqtError::Shape(format!(
            "patch_xy {px} must be divisible by 2^levels = {div}"
        )));
    }

    let xs = tile_origins(nx, px);
    let ys = tile_origins(ny, px);
    let zs = tile_origins(nz, pz);
    let ramp_xy = px - (px / 2).max(1);
    let ramp_z_out = (pz - (pz / 2).max(1)) * k;

    let mut acc = vec![0.0f64; nx * ny * nz * k];
    let mut wacc = vec![0.0f64; nx * ny * nz * k];
    let out_dims = (nx, ny, nz * k);
    let out_idx = |x: usize, y: usize, z: usize| x + out_dims.0 * (y + out_dims.1 * z);

    for &x0 in &xs {
        let wx = taper(px, ramp_xy, x0 > 0, x0 + px < nx);
        for &y0 in &ys {
            let wy = taper(px, ramp_xy, y0 > 0, y0 + px < ny);
            for &z0 in &zs {
                let wz = taper(pz * k, ramp_z_out, z0 > 0, z0 + pz < nz);
                // Copy the tile out, standardise, predict, invert.
                let mut tile = Tensor5::zeros([1, 1, px, px, pz]);
                let mut ti = 0;
                for x in x0..x0 + px {
                    for y in y0..y0 + px {
                        for z in z0..z0 + pz {
                            tile.data[ti] = work.get(x, y, z);
                            ti += 1;
                        }
                    }
                }
                let (mean, std) = patch_stats(&tile);
                for v in &mut tile.data {
                    *v = (*v - mean) / std;
                }
                let pred = forward(model, &tile)?;
                let mut pi = 0;
                for (ix, x) in (x0..x0 + px).enumerate() {
                    for (iy, y) in (y0..y0 + px).enumerate() {
                        for iz in 0..pz * k {
                            let z = z0 * k + iz;
                            let w = wx[ix] * wy[iy] * wz[iz];
                            let val = pred.data[pi] * std + mean;
                            let oi = out_idx(x, y, z);
                            acc[oi] += w * val;
                            wacc[oi] += w;
                            pi += 1;
                        }
                    }
                }
            }
        }
    }

    for (a, &w) in acc.iter_mut().zip(&wacc) {
        debug_assert!(w > 0.0);
        *a /= w;
    }
    let (sx, sy, sz) = work.spacing();
    let out = Volume::new(acc, out_dims, (sx, sy, sz / k as f64))?.with_slice_axis(2)?;
    if axis == 2 {
        return Ok(out);
    }
    // Undo the permutation.
    let mut inv = [0usize; 3];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    out.transposed(inv)
}
