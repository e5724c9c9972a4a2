//! Quantitative evaluation: SSIM, PSNR, MSE and paired comparison reports.
//!
//! SSIM uses a uniform cubic box window (default 7^3) with the conventional
//! stabilisers k1 = 0.01, k2 = 0.03 and a caller-supplied data range; the
//! local index is averaged in 3D over the whole volume or, when a mask is
//! given, over masked voxels only. Windows are clipped at volume borders.

use serde::Serialize;

use crate::error::{IqtError, Result};
use crate::volume::Volume;

/// SSIM configuration.
#[derive(Debug, Clone)]
pub struct SsimParams {
    /// Cubic box window edge length; odd, >= 3.
    pub window: usize,
    pub k1: f64,
    pub k2: f64,
    /// Data range L of the reference.
    pub data_range: f64,
    /// Restrict aggregation to these voxels when present.
    pub mask: Option<Vec<bool>>,
}

impl SsimParams {
    /// Defaults with the data range taken from a reference volume
    /// (max - min).
    pub fn for_reference(reference: &Volume) -> Result<Self> {
        let mut lo = f64::MAX;
        let mut hi = f64::MIN;
        for &x in reference.data() {
            lo = lo.min(x);
            hi = hi.max(x);
        }
        let range = hi - lo;
        if !(range > 0.0) {
            return Err(IqtError::Parameter(format!(
                "reference volume has data range {range}; SSIM needs a positive range"
            )));
        }
        Ok(Self {
            window: 7,
            k1: 0.01,
            k2: 0.03,
            data_range: range,
            mask: None,
        })
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Self {
        self.mask = Some(mask);
        self
    }

    pub fn with_data_range(mut self, l: f64) -> Self {
        self.data_range = l;
        self
    }

    fn validate(&self, n_voxels: usize) -> Result<()> {
        if self.window < 3 || self.window % 2 == 0 {
            return Err(IqtError::Parameter(format!(
                "window must be odd and >= 3, got {}",
                self.window
            )));
        }
        if !(self.data_range.is_finite() && self.data_range > 0.0) {
            return Err(IqtError::Parameter(format!(
                "data range must be positive, got {}",
                self.data_range
            )));
        }
        if let Some(m) = &self.mask {
            if m.len() != n_voxels {
                return Err(IqtError::Shape(format!(
                    "mask length {} does not match volume {}",
                    m.len(),
                    n_voxels
                )));
            }
        }
        Ok(())
    }
}

/// Clipped moving box sum of radius `r` along `axis`, in place.
fn box_sum_axis(data: &mut [f64], dims: (usize, usize, usize), axis: usize, r: usize) {
    let (nx, ny, nz) = dims;
    let (stride, len, n_lines) = match axis {
        0 => (1, nx, ny * nz),
        1 => (nx, ny, nx * nz),
        _ => (nx * ny, nz, nx * ny),
    };
    let mut line = vec![0.0; len];
    for l in 0..n_lines {
        let start = match axis {
            0 => l * nx,
            1 => {
                let z = l / nx;
                let x = l % nx;
                x + nx * ny * z
            }
            _ => l,
        };
        for (i, slot) in line.iter_mut().enumerate() {
            *slot = data[start + i * stride];
        }
        // Running clipped window sum.
        let mut acc: f64 = line.iter().take(r + 1).sum();
        let mut out_prev;
        data[start] = acc;
        out_prev = acc;
        for i in 1..len {
            if i + r < len {
                acc = out_prev + line[i + r];
            } else {
                acc = out_prev;
            }
            if i >= r + 1 {
                acc -= line[i - r - 1];
            }
            data[start + i * stride] = acc;
            out_prev = acc;
        }
    }
}

/// Per-axis clipped window length at index i.
#[inline]
fn clipped_len(i: usize, n: usize, r: usize) -> f64 {
    let lo = i.saturating_sub(r);
    let hi = (i + r).min(n - 1);
    (hi - lo + 1) as f64
}

fn window_sums(v: &Volume, other: Option<&Volume>, r: usize) -> Vec<f64> {
    let mut buf: Vec<f64> = match other {
        None => v.data().to_vec(),
        Some(o) => v.data().iter().zip(o.data()).map(|(a, b)| a * b).collect(),
    };
    let dims = v.dims();
    for axis in 0..3 {
        box_sum_axis(&mut buf, dims, axis, r);
    }
    buf
}

/// Mean structural similarity between `a` and `b`.
pub fn ssim(a: &Volume, b: &Volume, p: &SsimParams) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(IqtError::Shape(format!(
            "ssim inputs differ: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    p.validate(a.len())?;
    let r = p.window / 2;
    let c1 = (p.k1 * p.data_range).powi(2);
    let c2 = (p.k2 * p.data_range).powi(2);

    let sa = window_sums(a, None, r);
    let sb = window_sums(b, None, r);
    let saa = window_sums(a, Some(a), r);
    let sbb = window_sums(b, Some(b), r);
    let sab = window_sums(a, Some(b), r);

    let (nx, ny, nz) = a.dims();
    let mut total = 0.0;
    let mut count = 0usize;
    let mut i = 0;
    for z in 0..nz {
        let cz = clipped_len(z, nz, r);
        for y in 0..ny {
            let cy = clipped_len(y, ny, r);
            for x in 0..nx {
                if let Some(mask) = &p.mask {
                    if !mask[i] {
                        i += 1;
                        continue;
                    }
                }
                let n = clipped_len(x, nx, r) * cy * cz;
                let mu_a = sa[i] / n;
                let mu_b = sb[i] / n;
                // No clamping: identical inputs then yield bitwise-equal
                // numerator and denominator, making ssim(v, v) exactly 1.
                let var_a = saa[i] / n - mu_a * mu_a;
                let var_b = sbb[i] / n - mu_b * mu_b;
                let cov = sab[i] / n - mu_a * mu_b;
                let num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
                let den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
                total += num / den;
                count += 1;
                i += 1;
            }
        }
    }
    if count == 0 {
        return Err(IqtError::Data("SSIM mask selects no voxels".into()));
    }
    Ok(total / count as f64)
}

/// Mean squared error.
pub fn mse(a: &Volume, b: &Volume) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(IqtError::Shape(format!(
            "mse inputs differ: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    let n = a.len() as f64;
    Ok(a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n)
}

/// PSNR in dB, or the distinguished `Identical` flag when the MSE is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PsnrValue {
    Identical,
    Db(f64),
}

impl Serialize for PsnrValue {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            PsnrValue::Identical => s.serialize_str("identical"),
            PsnrValue::Db(v) => s.serialize_f64(*v),
        }
    }
}

impl std::fmt::Display for PsnrValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PsnrValue::Identical => write!(f, "identical"),
            PsnrValue::Db(v) => write!(f, "{v}"),
        }
    }
}

/// Peak signal-to-noise ratio of `a` against `reference` with peak `l`.
pub fn psnr(a: &Volume, reference: &Volume, l: f64) -> Result<PsnrValue> {
    if !(l.is_finite() && l > 0.0) {
        return Err(IqtError::Parameter(format!("peak must be positive, got {l}")));
    }
    let e = mse(a, reference)?;
    if e == 0.0 {
        Ok(PsnrValue::Identical)
    } else {
        Ok(PsnrValue::Db(10.0 * (l * l / e).log10()))
    }
}

/// Metrics of one (image, reference) comparison.
#[derive(Debug, Clone, Serialize)]
pub struct PairMetrics {
    pub pair: String,
    pub ssim: f64,
    pub psnr: PsnrValue,
    pub mse: f64,
    pub n_voxels: usize,
}

/// Full evaluation report for (enhanced, baseline) against a reference.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub pairs: Vec<PairMetrics>,
    pub ssim_difference: f64,
    pub window: usize,
    pub k1: f64,
    pub k2: f64,
    pub data_range: f64,
}

impl MetricsReport {
    /// CSV rendering: one row per compared pair.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("pair,ssim,psnr_db,mse,n_voxels,window,k1,k2,L\n");
        for p in &self.pairs {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                p.pair, p.ssim, p.psnr, p.mse, p.n_voxels, self.window, self.k1, self.k2,
                self.data_range
            ));
        }
        out
    }
}

/// Compare an enhanced volume and an interpolation baseline against the
/// same reference.
pub fn evaluate_pair(
    enhanced: &Volume,
    baseline: &Volume,
    reference: &Volume,
    mask: Option<Vec<bool>>,
    p: &SsimParams,
) -> Result<MetricsReport> {
    if enhanced.dims() != reference.dims() {
        return Err(IqtError::Shape(format!(
            "enhanced dims {:?} do not match reference {:?}",
            enhanced.dims(),
            reference.dims()
        )));
    }
    if baseline.dims() != reference.dims() {
        return Err(IqtError::Shape(format!(
            "baseline dims {:?} do not match reference {:?}",
            baseline.dims(),
            reference.dims()
        )));
    }
    let mut params = p.clone();
    params.mask = mask;
    let n_voxels = params
        .mask
        .as_ref()
        .map(|m| m.iter().filter(|x| **x).count())
        .unwrap_or(reference.len());

    let mut pairs = Vec::with_capacity(2);
    for (name, img) in [("enhanced", enhanced), ("baseline", baseline)] {
        pairs.push(PairMetrics {
            pair: name.to_string(),
            ssim: ssim(img, reference, &params)?,
            psnr: psnr(img, reference, params.data_range)?,
            mse: mse(img, reference)?,
            n_voxels,
        });
    }
    let diff = pairs[0].ssim - pairs[1].ssim;
    Ok(MetricsReport {
        pairs,
        ssim_difference: diff,
        window: params.window,
        k1: params.k1,
        k2: params.k2,
        data_range: params.data_range,
    })
}
