//! Volumetric data model.
//!
//! A [`Volume`] is a 3D scalar image with voxel spacing in mm and a
//! designated slice (through-plane) axis. Data is stored x-fastest, matching
//! NIfTI file order, and computed in f64 regardless of on-disk precision.
//! Volumes are immutable after construction; every operation returns a new
//! volume, so they are safe to share across threads.

use crate::error::{IqtError, Result};

/// 3D scalar image with voxel geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    data: Vec<f64>,
    dims: (usize, usize, usize),
    spacing: (f64, f64, f64),
    slice_axis: usize,
}

/// Spacing is quantised to f32 on construction: NIfTI-1 stores pixdim as
/// f32, and quantising up front makes save/load round trips preserve
/// spacing exactly rather than within a rounding tolerance.
fn quantize_spacing(s: f64) -> f64 {
    s as f32 as f64
}

impl Volume {
    /// Build a volume, validating the type invariants: dims >= 1, spacing
    /// positive and finite, all values finite.
    pub fn new(data: Vec<f64>, dims: (usize, usize, usize), spacing: (f64, f64, f64)) -> Result<Self> {
        let (nx, ny, nz) = dims;
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(IqtError::Shape(format!(
                "volume dims must all be >= 1, got {nx}x{ny}x{nz}"
            )));
        }
        if data.len() != nx * ny * nz {
            return Err(IqtError::Shape(format!(
                "data length {} does not match dims {nx}x{ny}x{nz}",
                data.len()
            )));
        }
        for (i, &s) in [spacing.0, spacing.1, spacing.2].iter().enumerate() {
            if !(s.is_finite() && s > 0.0) {
                return Err(IqtError::Parameter(format!(
                    "spacing[{i}] must be positive and finite, got {s}"
                )));
            }
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(IqtError::Numeric(format!(
                "non-finite voxel value at linear index {pos}"
            )));
        }
        Ok(Self {
            data,
            dims,
            spacing: (
                quantize_spacing(spacing.0),
                quantize_spacing(spacing.1),
                quantize_spacing(spacing.2),
            ),
            slice_axis: 2,
        })
    }

    /// Constant-filled volume.
    pub fn filled(value: f64, dims: (usize, usize, usize), spacing: (f64, f64, f64)) -> Result<Self> {
        Self::new(vec![value; dims.0 * dims.1 * dims.2], dims, spacing)
    }

    pub fn zeros(dims: (usize, usize, usize), spacing: (f64, f64, f64)) -> Result<Self> {
        Self::filled(0.0, dims, spacing)
    }

    /// Same dims/spacing/slice_axis, new data.
    pub fn like(&self, data: Vec<f64>) -> Result<Self> {
        let mut v = Self::new(data, self.dims, self.spacing)?;
        v.slice_axis = self.slice_axis;
        Ok(v)
    }

    pub fn with_slice_axis(mut self, axis: usize) -> Result<Self> {
        if axis > 2 {
            return Err(IqtError::Parameter(format!(
                "slice axis must be 0, 1 or 2, got {axis}"
            )));
        }
        self.slice_axis = axis;
        Ok(self)
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn spacing(&self) -> (f64, f64, f64) {
        self.spacing
    }

    pub fn slice_axis(&self) -> usize {
        self.slice_axis
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn dim(&self, axis: usize) -> usize {
        match axis {
            0 => self.dims.0,
            1 => self.dims.1,
            _ => self.dims.2,
        }
    }

    pub fn spacing_along(&self, axis: usize) -> f64 {
        match axis {
            0 => self.spacing.0,
            1 => self.spacing.1,
            _ => self.spacing.2,
        }
    }

    /// Linear index of voxel (x, y, z); x is the fastest axis.
    #[inline]
    pub fn idx(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims.0 * (y + self.dims.1 * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.idx(x, y, z)]
    }

    /// Whether `other` lives on the same voxel grid (dims exactly equal,
    /// spacing within `tol_mm` per axis).
    pub fn same_grid(&self, other: &Volume, tol_mm: f64) -> bool {
        self.dims == other.dims
            && (self.spacing.0 - other.spacing.0).abs() <= tol_mm
            && (self.spacing.1 - other.spacing.1).abs() <= tol_mm
            && (self.spacing.2 - other.spacing.2).abs() <= tol_mm
    }

    /// Apply a per-voxel function, revalidating finiteness.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Volume> {
        self.like(self.data.iter().map(|&v| f(v)).collect())
    }

    /// Permute the axes: output axis i is input axis perm[i]. The slice
    /// axis index is remapped accordingly.
    pub fn transposed(&self, perm: [usize; 3]) -> Result<Volume> {
        {
            let mut seen = [false; 3];
            for &p in &perm {
                if p > 2 || seen[p] {
                    return Err(IqtError::Parameter(format!(
                        "invalid axis permutation {perm:?}"
                    )));
                }
                seen[p] = true;
            }
        }
        let dims = [self.dims.0, self.dims.1, self.dims.2];
        let spacing = [self.spacing.0, self.spacing.1, self.spacing.2];
        let new_dims = (dims[perm[0]], dims[perm[1]], dims[perm[2]]);
        let new_spacing = (spacing[perm[0]], spacing[perm[1]], spacing[perm[2]]);
        let mut data = vec![0.0; self.data.len()];
        let mut i = 0;
        for c in 0..new_dims.2 {
            for b in 0..new_dims.1 {
                for a in 0..new_dims.0 {
                    let mut src = [0usize; 3];
                    src[perm[0]] = a;
                    src[perm[1]] = b;
                    src[perm[2]] = c;
                    data[i] = self.get(src[0], src[1], src[2]);
                    i += 1;
                }
            }
        }
        let new_axis = perm
            .iter()
            .position(|&p| p == self.slice_axis)
            .unwrap_or(self.slice_axis);
        let mut v = Volume::new(data, new_dims, new_spacing)?;
        v.slice_axis = new_axis;
        Ok(v)
    }

    /// Extract `len` consecutive planes starting at `start` along `axis`.
    pub fn crop_axis(&self, axis: usize, start: usize, len: usize) -> Result<Volume> {
        if axis > 2 {
            return Err(IqtError::Parameter(format!("invalid axis {axis}")));
        }
        let n = self.dim(axis);
        if len == 0 || start + len > n {
            return Err(IqtError::Shape(format!(
                "crop [{start}, {}) out of range for axis {axis} with {n} planes",
                start + len
            )));
        }
        let (nx, ny, nz) = self.dims;
        let new_dims = match axis {
            0 => (len, ny, nz),
            1 => (nx, len, nz),
            _ => (nx, ny, len),
        };
        let mut data = Vec::with_capacity(new_dims.0 * new_dims.1 * new_dims.2);
        for z in 0..new_dims.2 {
            for y in 0..new_dims.1 {
                for x in 0..new_dims.0 {
                    let (sx, sy, sz) = match axis {
                        0 => (x + start, y, z),
                        1 => (x, y + start, z),
                        _ => (x, y, z + start),
                    };
                    data.push(self.get(sx, sy, sz));
                }
            }
        }
        let mut v = Volume::new(data, new_dims, self.spacing)?;
        v.slice_axis = self.slice_axis;
        Ok(v)
    }
}

/// Per-voxel GM/WM/CSF membership probabilities on a common grid.
#[derive(Debug, Clone)]
pub struct MembershipMaps {
    pub gm: Volume,
    pub wm: Volume,
    pub csf: Volume,
}

/// Tolerance on the voxel-wise membership sum exceeding 1.
pub const MEMBERSHIP_SUM_EPS: f64 = 1e-6;

impl MembershipMaps {
    /// Build maps, validating: identical grids, values in [0, 1], and
    /// gm + wm + csf <= 1 + eps voxel-wise.
    pub fn new(gm: Volume, wm: Volume, csf: Volume) -> Result<Self> {
        if !gm.same_grid(&wm, 1e-4) || !gm.same_grid(&csf, 1e-4) {
            return Err(IqtError::Shape(format!(
                "membership maps must share one grid, got {:?}, {:?}, {:?}",
                gm.dims(),
                wm.dims(),
                csf.dims()
            )));
        }
        for (name, m) in [("gm", &gm), ("wm", &wm), ("csf", &csf)] {
            if let Some(&bad) = m.data().iter().find(|v| **v < 0.0 || **v > 1.0) {
                return Err(IqtError::Data(format!(
                    "{name} membership value {bad} outside [0, 1]"
                )));
            }
        }
        for i in 0..gm.len() {
            let total = gm.data()[i] + wm.data()[i] + csf.data()[i];
            if total > 1.0 + MEMBERSHIP_SUM_EPS {
                return Err(IqtError::Data(format!(
                    "membership sum {total} > 1 + eps at linear index {i}"
                )));
            }
        }
        Ok(Self { gm, wm, csf })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.gm.dims()
    }

    /// gm + wm + csf at a linear index.
    #[inline]
    pub fn total(&self, i: usize) -> f64 {
        self.gm.data()[i] + self.wm.data()[i] + self.csf.data()[i]
    }

    /// True where any tissue membership is strictly positive.
    pub fn brain_mask(&self) -> Vec<bool> {
        (0..self.gm.len()).map(|i| self.total(i) > 0.0).collect()
    }

    /// True where all memberships are exactly zero (unreached by tissue).
    pub fn background_mask(&self) -> Vec<bool> {
        (0..self.gm.len()).map(|i| self.total(i) == 0.0).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_zero_dims() {
        assert!(Volume::new(vec![], (0, 3, 3), (1.0, 1.0, 1.0)).is_err());
    }

    #[test]
    fn rejects_non_finite_values() {
        let err = Volume::new(vec![1.0, f64::NAN], (2, 1, 1), (1.0, 1.0, 1.0));
        assert!(matches!(err, Err(IqtError::Numeric(_))));
    }

    #[test]
    fn rejects_bad_spacing() {
        assert!(Volume::filled(0.0, (2, 2, 2), (1.0, -1.0, 1.0)).is_err());
        assert!(Volume::filled(0.0, (2, 2, 2), (1.0, f64::INFINITY, 1.0)).is_err());
    }

    #[test]
    fn index_order_is_x_fastest() {
        let data: Vec<f64> = (0..24).map(|i| i as f64).collect();
        let v = Volume::new(data, (2, 3, 4), (1.0, 1.0, 1.0)).unwrap();
        assert_eq!(v.get(1, 0, 0), 1.0);
        assert_eq!(v.get(0, 1, 0), 2.0);
        assert_eq!(v.get(0, 0, 1), 6.0);
    }

    #[test]
    fn crop_axis_extracts_planes() {
        let data: Vec<f64> = (0..27).map(|i| i as f64).collect();
        let v = Volume::new(data, (3, 3, 3), (1.0, 1.0, 1.0)).unwrap();
        let c = v.crop_axis(2, 1, 2).unwrap();
        assert_eq!(c.dims(), (3, 3, 2));
        assert_eq!(c.get(0, 0, 0), v.get(0, 0, 1));
        assert_eq!(c.get(2, 2, 1), v.get(2, 2, 2));
        assert!(v.crop_axis(2, 2, 2).is_err());
    }

    #[test]
    fn membership_sum_guard() {
        let g = Volume::filled(0.6, (2, 2, 2), (1.0, 1.0, 1.0)).unwrap();
        let w = Volume::filled(0.6, (2, 2, 2), (1.0, 1.0, 1.0)).unwrap();
        let c = Volume::filled(0.0, (2, 2, 2), (1.0, 1.0, 1.0)).unwrap();
        assert!(MembershipMaps::new(g, w, c).is_err());
    }

    #[test]
    fn membership_masks() {
        let mut g = vec![0.0; 8];
        g[3] = 1.0;
        let gm = Volume::new(g, (2, 2, 2), (1.0, 1.0, 1.0)).unwrap();
        let wm = Volume::zeros((2, 2, 2), (1.0, 1.0, 1.0)).unwrap();
        let csf = Volume::zeros((2, 2, 2), (1.0, 1.0, 1.0)).unwrap();
        let m = MembershipMaps::new(gm, wm, csf).unwrap();
        assert_eq!(m.brain_mask().iter().filter(|b| **b).count(), 1);
        assert_eq!(m.background_mask().iter().filter(|b| **b).count(), 7);
    }
}
