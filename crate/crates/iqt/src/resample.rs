//! Through-plane resampling: slice-profile blur, gapped slice sampling,
//! and the cubic B-spline upsampling baseline.
//!
//! The LF acquisition is modelled in two sub-steps: a 1D Gaussian blur along
//! the slice axis whose FWHM equals the slice thickness, then pure selection
//! of slices every (thickness + gap) mm. Sampling never averages; the whole
//! slice profile lives in the Gaussian.

use rayon::prelude::*;

use crate::error::{IqtError, Result};
use crate::volume::Volume;

/// Geometry of a gapped slice acquisition along one axis.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct SliceGeometry {
    /// Slice thickness in mm.
    pub st_mm: f64,
    /// Inter-slice gap in mm.
    pub gap_mm: f64,
    /// Axis index the slices are taken along.
    pub axis: usize,
    /// Position of the first sample in mm from the volume edge along `axis`.
    pub offset_mm: f64,
}

impl SliceGeometry {
    /// Geometry with the first slice centred half a period into the volume.
    pub fn centered(st_mm: f64, gap_mm: f64, axis: usize) -> Result<Self> {
        let g = Self {
            st_mm,
            gap_mm,
            axis,
            offset_mm: (st_mm + gap_mm) / 2.0,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn with_offset(st_mm: f64, gap_mm: f64, axis: usize, offset_mm: f64) -> Result<Self> {
        let g = Self {
            st_mm,
            gap_mm,
            axis,
            offset_mm,
        };
        g.validate()?;
        Ok(g)
    }

    /// Sampling period (thickness + gap) in mm.
    pub fn period_mm(&self) -> f64 {
        self.st_mm + self.gap_mm
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.st_mm.is_finite() && self.st_mm > 0.0) {
            return Err(IqtError::Geometry(format!(
                "slice thickness must be > 0, got {}",
                self.st_mm
            )));
        }
        if !(self.gap_mm.is_finite() && self.gap_mm >= 0.0) {
            return Err(IqtError::Geometry(format!(
                "gap must be >= 0, got {}",
                self.gap_mm
            )));
        }
        if self.axis > 2 {
            return Err(IqtError::Geometry(format!(
                "axis must be 0, 1 or 2, got {}",
                self.axis
            )));
        }
        let period = self.period_mm();
        if !(self.offset_mm >= 0.0 && self.offset_mm < period) {
            return Err(IqtError::Geometry(format!(
                "offset {} outside [0, {period})",
                self.offset_mm
            )));
        }
        Ok(())
    }
}

/// Iterate over all lines along `axis`, yielding the start index and stride.
fn lines_along(dims: (usize, usize, usize), axis: usize) -> (Vec<usize>, usize, usize) {
    let (nx, ny, nz) = dims;
    let (stride, len) = match axis {
        0 => (1, nx),
        1 => (nx, ny),
        _ => (nx * ny, nz),
    };
    let mut starts = Vec::new();
    match axis {
        0 => {
            for z in 0..nz {
                for y in 0..ny {
                    starts.push(nx * (y + ny * z));
                }
            }
        }
        1 => {
            for z in 0..nz {
                for x in 0..nx {
                    starts.push(x + nx * ny * z);
                }
            }
        }
        _ => {
            for y in 0..ny {
                for x in 0..nx {
                    starts.push(x + nx * y);
                }
            }
        }
    }
    (starts, stride, len)
}

/// Discrete Gaussian kernel with the stated FWHM, sampled at voxel centres,
/// truncated at +/- 4 sigma and renormalised to sum 1.
fn gaussian_kernel(fwhm_mm: f64, spacing_mm: f64) -> Vec<f64> {
    let sigma_vox = fwhm_mm / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt()) / spacing_mm;
    let radius = (4.0 * sigma_vox).ceil() as usize;
    let mut k = Vec::with_capacity(2 * radius + 1);
    for j in -(radius as i64)..=(radius as i64) {
        let t = j as f64 / sigma_vox;
        k.push((-0.5 * t * t).exp());
    }
    let sum: f64 = k.iter().sum();
    for w in &mut k {
        *w /= sum;
    }
    k
}

/// 1D Gaussian blur along `axis` with full-width-at-half-maximum `fwhm_mm`.
///
/// At volume boundaries the kernel is renormalised over its in-bounds
/// support, so constants are preserved exactly. Dims and spacing are
/// unchanged.
pub fn gaussian_blur_axis(v: &Volume, axis: usize, fwhm_mm: f64) -> Result<Volume> {
    if !(fwhm_mm.is_finite() && fwhm_mm > 0.0) {
        return Err(IqtError::Parameter(format!(
            "fwhm must be > 0, got {fwhm_mm}"
        )));
    }
    if axis > 2 {
        return Err(IqtError::Parameter(format!("invalid axis {axis}")));
    }
    let kernel = gaussian_kernel(fwhm_mm, v.spacing_along(axis));
    let radius = kernel.len() / 2;
    let (starts, stride, len) = lines_along(v.dims(), axis);

    let src = v.data();
    let mut out = vec![0.0; src.len()];
    let chunks: Vec<(usize, Vec<f64>)> = starts
        .par_iter()
        .map(|&start| {
            let mut line = vec![0.0; len];
            for (i, slot) in line.iter_mut().enumerate() {
                let mut acc = 0.0;
                let mut wsum = 0.0;
                for (j, &w) in kernel.iter().enumerate() {
                    let s = i as i64 + j as i64 - radius as i64;
                    if s >= 0 && (s as usize) < len {
                        acc += w * src[start + s as usize * stride];
                        wsum += w;
                    }
                }
                *slot = acc / wsum;
            }
            (start, line)
        })
        .collect();
    for (start, line) in chunks {
        for (i, &val) in line.iter().enumerate() {
            out[start + i * stride] = val;
        }
    }
    v.like(out)
}

/// Number of slices `sample_slices` would produce.
pub fn sample_count(v: &Volume, g: &SliceGeometry) -> usize {
    let spacing = v.spacing_along(g.axis);
    let n = v.dim(g.axis);
    let period = g.period_mm();
    if !(period > 0.0) {
        return 0;
    }
    let mut count = 0usize;
    loop {
        let pos = g.offset_mm + count as f64 * period;
        let j = (pos / spacing).round() as i64;
        if j >= n as i64 {
            break;
        }
        count += 1;
    }
    count
}

/// Select slices at positions offset + i * (st + gap) mm along the geometry
/// axis, snapping each position to the nearest source voxel centre (voxel j
/// sits at j * spacing). Output spacing along the axis becomes st + gap;
/// nothing between sample positions influences the output.
pub fn sample_slices(v: &Volume, g: &SliceGeometry) -> Result<Volume> {
    g.validate()?;
    let spacing = v.spacing_along(g.axis);
    let period = g.period_mm();
    if period < spacing - 1e-9 {
        return Err(IqtError::Geometry(format!(
            "period {period} mm below source spacing {spacing} mm along axis {}",
            g.axis
        )));
    }
    let n_out = sample_count(v, g);
    if n_out < 2 {
        return Err(IqtError::Geometry(format!(
            "geometry yields {n_out} slice(s); need at least 2"
        )));
    }

    let picks: Vec<usize> = (0..n_out)
        .map(|i| ((g.offset_mm + i as f64 * period) / spacing).round() as usize)
        .collect();

    let (nx, ny, nz) = v.dims();
    let new_dims = match g.axis {
        0 => (n_out, ny, nz),
        1 => (nx, n_out, nz),
        _ => (nx, ny, n_out),
    };
    let mut data = Vec::with_capacity(new_dims.0 * new_dims.1 * new_dims.2);
    for z in 0..new_dims.2 {
        for y in 0..new_dims.1 {
            for x in 0..new_dims.0 {
                let (sx, sy, sz) = match g.axis {
                    0 => (picks[x], y, z),
                    1 => (x, picks[y], z),
                    _ => (x, y, picks[z]),
                };
                data.push(v.get(sx, sy, sz));
            }
        }
    }
    let (ox, oy, oz) = v.spacing();
    let new_spacing = match g.axis {
        0 => (period, oy, oz),
        1 => (ox, period, oz),
        _ => (ox, oy, period),
    };
    Volume::new(data, new_dims, new_spacing)?.with_slice_axis(g.axis)
}

/// Pole of the cubic B-spline prefilter.
const POLE: f64 = -0.267_949_192_431_122_7; // sqrt(3) - 2

/// Convert samples to interpolating cubic B-spline coefficients in place.
///
/// Exact recursive prefilter (no truncated horizon) with whole-sample
/// mirror boundaries.
fn prefilter_cubic(c: &mut [f64]) {
    let n = c.len();
    debug_assert!(n >= 2);
    let z = POLE;
    let lambda = (1.0 - z) * (1.0 - 1.0 / z); // = 6 for the cubic pole
    for v in c.iter_mut() {
        *v *= lambda;
    }
    // Exact causal initialisation for the mirrored sequence.
    let mut zn = z;
    let iz = 1.0 / z;
    let mut z2n = z.powi(n as i32 - 1);
    let mut sum = c[0] + z2n * c[n - 1];
    z2n *= z2n * iz;
    for item in c.iter().take(n - 1).skip(1) {
        sum += (zn + z2n) * item;
        zn *= z;
        z2n *= iz;
    }
    c[0] = sum / (1.0 - zn * zn);
    for k in 1..n {
        c[k] += z * c[k - 1];
    }
    // Exact anticausal initialisation.
    c[n - 1] = (z / (z * z - 1.0)) * (z * c[n - 2] + c[n - 1]);
    for k in (0..n - 1).rev() {
        c[k] = z * (c[k + 1] - c[k]);
    }
}

/// Cubic B-spline basis weights for fractional position u in [0, 1),
/// applied to coefficients at base-1, base, base+1, base+2.
#[inline]
fn bspline_weights(u: f64) -> [f64; 4] {
    let u2 = u * u;
    let u3 = u2 * u;
    [
        (1.0 - u).powi(3) / 6.0,
        (3.0 * u3 - 6.0 * u2 + 4.0) / 6.0,
        (-3.0 * u3 + 3.0 * u2 + 3.0 * u + 1.0) / 6.0,
        u3 / 6.0,
    ]
}

/// Mirror an out-of-range coefficient index into [0, n).
#[inline]
fn mirror(idx: i64, n: i64) -> usize {
    let mut i = idx;
    if i < 0 {
        i = -i;
    }
    if i > n - 1 {
        i = 2 * (n - 1) - i;
    }
    i as usize
}

/// Interpolating cubic B-spline upsampling along `axis` by integer factor
/// `k`: output plane j sits at input position j / k, so original planes
/// (j = multiple of k) reproduce the original values and output spacing
/// along the axis becomes input spacing / k. Output has k * n planes.
pub fn bspline_upsample(v: &Volume, axis: usize, k: usize) -> Result<Volume> {
    if k < 2 {
        return Err(IqtError::Parameter(format!(
            "upsampling factor must be >= 2, got {k}"
        )));
    }
    if axis > 2 {
        return Err(IqtError::Parameter(format!("invalid axis {axis}")));
    }
    let n = v.dim(axis);
    if n < 4 {
        return Err(IqtError::Shape(format!(
            "need at least 4 planes along axis {axis} for cubic interpolation, got {n}"
        )));
    }

    let (starts, stride, len) = lines_along(v.dims(), axis);
    let out_len = len * k;
    let src = v.data();

    let (nx, ny, nz) = v.dims();
    let new_dims = match axis {
        0 => (out_len, ny, nz),
        1 => (nx, out_len, nz),
        _ => (nx, ny, out_len),
    };
    let out_stride = match axis {
        0 => 1,
        1 => new_dims.0,
        _ => new_dims.0 * new_dims.1,
    };
    // Map each line start onto the output grid: only the coordinate along
    // `axis` changes, so the start index scales along that axis.
    let remap_start = |start: usize| -> usize {
        match axis {
            0 => {
                let z = start / (nx * ny);
                let y = (start % (nx * ny)) / nx;
                y * new_dims.0 + z * new_dims.0 * new_dims.1
            }
            1 => {
                let z = start / (nx * ny);
                let x = start % nx;
                x + z * new_dims.0 * new_dims.1
            }
            _ => start,
        }
    };

    let mut out = vec![0.0; new_dims.0 * new_dims.1 * new_dims.2];
    let lines: Vec<(usize, Vec<f64>)> = starts
        .par_iter()
        .map(|&start| {
            let mut coeff: Vec<f64> = (0..len).map(|i| src[start + i * stride]).collect();
            prefilter_cubic(&mut coeff);
            let nn = len as i64;
            let mut line = vec![0.0; out_len];
            for (j, slot) in line.iter_mut().enumerate() {
                let t = j as f64 / k as f64;
                let base = t.floor() as i64;
                let u = t - base as f64;
                let w = bspline_weights(u);
                let mut acc = 0.0;
                for (m, &wm) in w.iter().enumerate() {
                    acc += wm * coeff[mirror(base - 1 + m as i64, nn)];
                }
                *slot = acc;
            }
            (remap_start(start), line)
        })
        .collect();
    for (ostart, line) in lines {
        for (j, &val) in line.iter().enumerate() {
            out[ostart + j * out_stride] = val;
        }
    }

    let (ox, oy, oz) = v.spacing();
    let new_spacing = match axis {
        0 => (ox / k as f64, oy, oz),
        1 => (ox, oy / k as f64, oz),
        _ => (ox, oy, oz / k as f64),
    };
    let mut res = Volume::new(out, new_dims, new_spacing)?;
    res = res.with_slice_axis(v.slice_axis())?;
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Half-max crossing width of a 1D response, linear interpolation
    /// between samples (brute-force oracle for the FWHM check).
    pub(crate) fn measured_fwhm_mm(line: &[f64], spacing: f64) -> f64 {
        let (imax, &vmax) = line
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        let half = vmax / 2.0;
        let mut left = f64::NAN;
        for i in (1..=imax).rev() {
            if line[i - 1] <= half && line[i] >= half {
                let f = (half - line[i - 1]) / (line[i] - line[i - 1]);
                left = (i - 1) as f64 + f;
                break;
            }
        }
        let mut right = f64::NAN;
        for i in imax..line.len() - 1 {
            if line[i] >= half && line[i + 1] <= half {
                let f = (line[i] - half) / (line[i] - line[i + 1]);
                right = i as f64 + f;
                break;
            }
        }
        (right - left) * spacing
    }

    #[test]
    fn constant_volume_is_preserved() {
        let v = Volume::filled(3.25, (5, 5, 20), (1.0, 1.0, 1.0)).unwrap();
        let b = gaussian_blur_axis(&v, 2, 6.0).unwrap();
        for &x in b.data() {
            assert!((x - 3.25).abs() <= 1e-12);
        }
    }

    #[test]
    fn impulse_response_matches_normalized_gaussian() {
        // Oracle: evaluate the renormalised Gaussian samples directly.
        let mut data = vec![0.0; 65];
        data[32] = 1.0;
        let v = Volume::new(data, (1, 1, 65), (1.0, 1.0, 1.0)).unwrap();
        let b = gaussian_blur_axis(&v, 2, 6.0).unwrap();
        let sigma = 6.0 / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt());
        assert!((sigma - 2.5480).abs() < 1e-3);
        let radius = (4.0 * sigma).ceil() as i64;
        let mut expected = vec![0.0; 65];
        let mut sum = 0.0;
        for j in -radius..=radius {
            sum += (-0.5 * (j as f64 / sigma).powi(2)).exp();
        }
        for j in -radius..=radius {
            expected[(32 + j) as usize] = (-0.5 * (j as f64 / sigma).powi(2)).exp() / sum;
        }
        for i in 0..65 {
            assert!(
                (b.data()[i] - expected[i]).abs() < 1e-12,
                "mismatch at {i}: {} vs {}",
                b.data()[i],
                expected[i]
            );
        }
    }

    #[test]
    fn impulse_fwhm_is_six_mm() {
        let mut data = vec![0.0; 65];
        data[32] = 1.0;
        let v = Volume::new(data, (1, 1, 65), (1.0, 1.0, 1.0)).unwrap();
        let b = gaussian_blur_axis(&v, 2, 6.0).unwrap();
        let fwhm = measured_fwhm_mm(b.data(), 1.0);
        assert!(
            (fwhm - 6.0).abs() <= 0.15,
            "measured FWHM {fwhm} outside 6.0 +/- 0.15"
        );
    }

    #[test]
    fn blur_is_linear() {
        use crate::rng::SplitMix64;
        let mut rng = SplitMix64::new(5);
        let a: Vec<f64> = (0..200).map(|_| rng.range(-1.0, 1.0)).collect();
        let b: Vec<f64> = (0..200).map(|_| rng.range(-1.0, 1.0)).collect();
        let va = Volume::new(a.clone(), (1, 1, 200), (1.0, 1.0, 1.0)).unwrap();
        let vb = Volume::new(b.clone(), (1, 1, 200), (1.0, 1.0, 1.0)).unwrap();
        let (alpha, beta) = (1.7, -0.4);
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| alpha * x + beta * y).collect();
        let vm = Volume::new(mix, (1, 1, 200), (1.0, 1.0, 1.0)).unwrap();
        let ba = gaussian_blur_axis(&va, 2, 4.0).unwrap();
        let bb = gaussian_blur_axis(&vb, 2, 4.0).unwrap();
        let bm = gaussian_blur_axis(&vm, 2, 4.0).unwrap();
        for i in 0..200 {
            let lin = alpha * ba.data()[i] + beta * bb.data()[i];
            assert!((bm.data()[i] - lin).abs() <= 1e-12 * lin.abs().max(1.0));
        }
    }

    #[test]
    fn interior_mass_is_preserved() {
        // Away from boundaries the kernel sums to 1, so the windowed sum of
        // an impulse response equals the impulse mass.
        let mut data = vec![0.0; 101];
        data[50] = 2.5;
        let v = Volume::new(data, (1, 1, 101), (1.0, 1.0, 1.0)).unwrap();
        let b = gaussian_blur_axis(&v, 2, 6.0).unwrap();
        let total: f64 = b.data()[30..71].iter().sum();
        assert!((total - 2.5).abs() <= 1e-9);
    }

    #[test]
    fn hcp_like_geometry_gives_twenty_slices() {
        let v = Volume::filled(1.0, (2, 2, 160), (0.9, 0.9, 0.9)).unwrap();
        let g = SliceGeometry::centered(6.0, 1.2, 2).unwrap();
        let s = sample_slices(&v, &g).unwrap();
        assert_eq!(s.dims(), (2, 2, 20));
        let sp = s.spacing();
        assert!((sp.2 - 7.2).abs() < 1e-6);
    }

    #[test]
    fn unit_period_zero_offset_is_identity() {
        use crate::rng::SplitMix64;
        let mut rng = SplitMix64::new(8);
        let data: Vec<f64> = (0..4 * 4 * 10).map(|_| rng.range(0.0, 9.0)).collect();
        let v = Volume::new(data, (4, 4, 10), (1.0, 1.0, 1.0)).unwrap();
        let g = SliceGeometry::with_offset(1.0, 0.0, 2, 0.0).unwrap();
        let s = sample_slices(&v, &g).unwrap();
        assert_eq!(s.dims(), v.dims());
        assert_eq!(s.data(), v.data());
    }

    #[test]
    fn ramp_sampling_matches_positions() {
        // v(z) = z in mm; sampled planes must carry the snapped positions.
        let (nx, ny, nz) = (2usize, 2usize, 80usize);
        let mut data = vec![0.0; nx * ny * nz];
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    data[x + nx * (y + ny * z)] = z as f64 * 0.9;
                }
            }
        }
        let v = Volume::new(data, (nx, ny, nz), (0.9, 0.9, 0.9)).unwrap();
        let g = SliceGeometry::with_offset(6.0, 1.2, 2, 0.0).unwrap();
        let s = sample_slices(&v, &g).unwrap();
        for i in 0..s.dims().2 {
            let got = s.get(0, 0, i);
            let want = 7.2 * i as f64;
            assert!(
                (got - want).abs() <= 0.9 / 2.0 + 1e-9,
                "slice {i}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn too_few_output_slices_is_a_geometry_error() {
        let v = Volume::filled(0.0, (2, 2, 5), (1.0, 1.0, 1.0)).unwrap();
        let g = SliceGeometry::with_offset(5.0, 0.0, 2, 0.0).unwrap();
        assert!(matches!(sample_slices(&v, &g), Err(IqtError::Geometry(_))));
    }

    #[test]
    fn sampling_commutes_with_blur_selection() {
        use crate::rng::SplitMix64;
        let mut rng = SplitMix64::new(17);
        let dims = (3, 3, 40);
        let data: Vec<f64> = (0..dims.0 * dims.1 * dims.2)
            .map(|_| rng.range(0.0, 100.0))
            .collect();
        let v = Volume::new(data, dims, (1.0, 1.0, 1.0)).unwrap();
        let g = SliceGeometry::centered(3.0, 1.0, 2).unwrap();
        let blurred = gaussian_blur_axis(&v, 2, 3.0).unwrap();
        let sampled = sample_slices(&blurred, &g).unwrap();
        // Selection: output plane i must equal source plane round((o+i*p)/s).
        for i in 0..sampled.dims().2 {
            let src_z = ((g.offset_mm + i as f64 * g.period_mm()) / 1.0).round() as usize;
            for y in 0..3 {
                for x in 0..3 {
                    assert_eq!(sampled.get(x, y, i), blurred.get(x, y, src_z));
                }
            }
        }
    }

    #[test]
    fn bspline_constant_stays_constant() {
        let v = Volume::filled(4.5, (3, 3, 8), (1.0, 1.0, 2.0)).unwrap();
        let u = bspline_upsample(&v, 2, 4).unwrap();
        assert_eq!(u.dims(), (3, 3, 32));
        for &x in u.data() {
            assert!((x - 4.5).abs() <= 1e-9);
        }
        let sp = u.spacing();
        assert!((sp.2 - 0.5).abs() < 1e-9);
    }

    #[test]
    fn bspline_interpolates_original_planes() {
        use crate::rng::SplitMix64;
        let mut rng = SplitMix64::new(23);
        let data: Vec<f64> = (0..32).map(|_| rng.range(1.0, 50.0)).collect();
        let v = Volume::new(data.clone(), (1, 1, 32), (1.0, 1.0, 1.0)).unwrap();
        let u = bspline_upsample(&v, 2, 5).unwrap();
        for (j, &orig) in data.iter().enumerate() {
            let got = u.data()[j * 5];
            assert!(
                (got - orig).abs() <= 1e-9 * orig.abs(),
                "plane {j}: {got} vs {orig}"
            );
        }
    }

    #[test]
    fn bspline_reproduces_cubic_polynomials_in_interior() {
        // Oracle: evaluate the polynomial analytically at the new positions.
        // The mirror extension of a cubic is not a cubic, so boundary error
        // decays into the interior as |pole|^d; 16 slices of margin push it
        // well below the 1e-6 relative tolerance.
        let p = |t: f64| 0.3 * t * t * t - 2.0 * t * t + 5.0 * t + 20.0;
        let n = 48usize;
        let data: Vec<f64> = (0..n).map(|z| p(z as f64)).collect();
        let v = Volume::new(data, (1, 1, n), (1.0, 1.0, 1.0)).unwrap();
        let k = 4usize;
        let u = bspline_upsample(&v, 2, k).unwrap();
        for j in (16 * k)..((n - 16) * k) {
            let t = j as f64 / k as f64;
            let want = p(t);
            let got = u.data()[j];
            assert!(
                (got - want).abs() <= 1e-6 * want.abs().max(1.0),
                "position {t}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn bspline_needs_four_planes() {
        let v = Volume::filled(0.0, (4, 4, 3), (1.0, 1.0, 1.0)).unwrap();
        assert!(matches!(
            bspline_upsample(&v, 2, 2),
            Err(IqtError::Shape(_))
        ));
    }

    #[test]
    fn bspline_round_trip_of_downsampled_constant() {
        let v = Volume::filled(2.0, (4, 4, 40), (1.0, 1.0, 1.0)).unwrap();
        let g = SliceGeometry::with_offset(4.0, 0.0, 2, 0.0).unwrap();
        let down = sample_slices(&v, &g).unwrap();
        let up = bspline_upsample(&down, 2, 4).unwrap();
        for &x in up.data() {
            assert!((x - 2.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn blur_on_non_default_axis() {
        let mut data = vec![0.0; 33 * 3 * 3];
        let v0 = Volume::new(data.clone(), (33, 3, 3), (1.0, 1.0, 1.0)).unwrap();
        data[v0.idx(16, 1, 1)] = 1.0;
        let v = Volume::new(data, (33, 3, 3), (1.0, 1.0, 1.0)).unwrap();
        let b = gaussian_blur_axis(&v, 0, 4.0).unwrap();
        // Mass stays on the (y=1, z=1) line.
        let line: f64 = (0..33).map(|x| b.get(x, 1, 1)).sum();
        assert!((line - 1.0).abs() <= 1e-9);
        assert_eq!(b.get(16, 0, 0), 0.0);
    }
}
