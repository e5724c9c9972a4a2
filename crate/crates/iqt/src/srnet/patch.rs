//! Paired patch extraction from aligned LF/HF volumes and per-patch
//! standardisation.

use super::tensor::Tensor5;
use crate::error::{IqtError, Result};
use crate::volume::{MembershipMaps, Volume};

/// A voxel counts as brain when its total membership reaches this level;
/// used only by the patch filter.
const BRAIN_VOXEL_LEVEL: f64 = 0.5;

/// Extract aligned (LF, HF) patch pairs.
///
/// The LF volume and the membership maps live on the LF grid; the HF volume
/// must have identical in-plane dims and exactly k-times the LF slice count
/// (crop it beforehand if the source has spare slices). LF patches are
/// (patch_xy, patch_xy, patch_z_lf); HF patches cover the matching
/// (patch_xy, patch_xy, k * patch_z_lf) block. Patches whose brain-voxel
/// fraction falls below `min_brain_fraction` are discarded. Ordering is
/// lexicographic in the (x, y, z) patch origin. Both volumes are expected
/// with the slice axis last.
#[allow(clippy::too_many_arguments)]
pub fn extract_patches(
    hf: &Volume,
    lf: &Volume,
    maps: &MembershipMaps,
    k: usize,
    patch_xy: usize,
    patch_z_lf: usize,
    stride: (usize, usize, usize),
    min_brain_fraction: f64,
) -> Result<Vec<(Tensor5, Tensor5)>> {
    let (lx, ly, lz) = lf.dims();
    let (hx, hy, hz) = hf.dims();
    if (hx, hy) != (lx, ly) {
        return Err(IqtError::Shape(format!(
            "in-plane dims differ: HF ({hx}, {hy}) vs LF ({lx}, {ly})"
        )));
    }
    if hz != k * lz {
        return Err(IqtError::Shape(format!(
            "HF has {hz} slices but LF has {lz}; expected factor k = {k} (i.e. {} HF slices)",
            k * lz
        )));
    }
    if maps.dims() != lf.dims() {
        return Err(IqtError::Shape(format!(
            "membership maps {:?} must live on the LF grid {:?}",
            maps.dims(),
            lf.dims()
        )));
    }
    if patch_xy > lx || patch_xy > ly || patch_z_lf > lz {
        return Err(IqtError::Shape(format!(
            "patch ({patch_xy}, {patch_xy}, {patch_z_lf}) exceeds LF dims {:?}",
            lf.dims()
        )));
    }
    if stride.0 == 0 || stride.1 == 0 || stride.2 == 0 {
        return Err(IqtError::Parameter("stride components must be >= 1".into()));
    }

    let brain = maps.brain_strength();
    let mut out = Vec::new();
    let mut x0 = 0;
    while x0 + patch_xy <= lx {
        let mut y0 = 0;
        while y0 + patch_xy <= ly {
            let mut z0 = 0;
            while z0 + patch_z_lf <= lz {
                let total = (patch_xy * patch_xy * patch_z_lf) as f64;
                let mut n_brain = 0usize;
                for z in z0..z0 + patch_z_lf {
                    for y in y0..y0 + patch_xy {
                        for x in x0..x0 + patch_xy {
                            if brain[lf.idx(x, y, z)] >= BRAIN_VOXEL_LEVEL {
                                n_brain += 1;
                            }
                        }
                    }
                }
                if n_brain as f64 / total >= min_brain_fraction {
                    let lf_patch = copy_block(lf, x0, y0, z0, patch_xy, patch_xy, patch_z_lf);
                    let hf_patch =
                        copy_block(hf, x0, y0, z0 * k, patch_xy, patch_xy, patch_z_lf * k);
                    out.push((lf_patch, hf_patch));
                }
                z0 += stride.2;
            }
            y0 += stride.1;
        }
        x0 += stride.0;
    }
    Ok(out)
}

fn copy_block(
    v: &Volume,
    x0: usize,
    y0: usize,
    z0: usize,
    px: usize,
    py: usize,
    pz: usize,
) -> Tensor5 {
    let mut t = Tensor5::zeros([1, 1, px, py, pz]);
    let mut i = 0;
    for x in x0..x0 + px {
        for y in y0..y0 + py {
            for z in z0..z0 + pz {
                t.data[i] = v.get(x, y, z);
                i += 1;
            }
        }
    }
    t
}

impl MembershipMaps {
    /// Per-voxel total membership, for patch filtering.
    fn brain_strength(&self) -> Vec<f64> {
        (0..self.gm.len()).map(|i| self.total(i)).collect()
    }
}

/// Mean and standard deviation of a tensor, with a floor that maps
/// (near-)constant patches to std 1 so standardisation stays a no-op
/// instead of blowing up.
pub fn patch_stats(t: &Tensor5) -> (f64, f64) {
    let n = t.len() as f64;
    let mean = t.data.iter().sum::<f64>() / n;
    let var = t.data.iter().map(|&x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    (mean, if std < 1e-12 { 1.0 } else { std })
}

/// Standardise an (LF, HF) pair with the LF patch's statistics, so the
/// inverse transform at inference needs only the LF input.
pub fn standardize_pair(lf: &Tensor5, hf: &Tensor5) -> ((f64, f64), (Tensor5, Tensor5)) {
    let (mean, std) = patch_stats(lf);
    let norm = |t: &Tensor5| Tensor5 {
        data: t.data.iter().map(|&x| (x - mean) / std).collect(),
        shape: t.shape,
    };
    ((mean, std), (norm(lf), norm(hf)))
}
