//! HF -> LF simulation: SNR estimation, contrast change, noise addition,
//! and the composed five-step pipeline.
//!
//! The pipeline takes a high-field volume plus its tissue membership maps
//! and produces a low-field-like volume with prescribed mean GM and WM
//! SNRs: skull-strip, blur along the slice axis (FWHM = slice thickness),
//! sample every (thickness + gap) mm, rescale GM/WM contrast with
//! membership-weighted multipliers, then add Gaussian noise. Membership
//! maps are degraded through the same blur + sample path so that the noise
//! variance is derived on the image that actually receives it.

use serde::{Deserialize, Serialize};

use crate::error::{IqtError, Result};
use crate::resample::{gaussian_blur_axis, sample_slices, SliceGeometry};
use crate::rng::gaussian_at;
use crate::tissue::skull_strip;
use crate::volume::{MembershipMaps, Volume};

/// Target mean SNR per tissue.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SnrTarget {
    pub snr_gm: f64,
    pub snr_wm: f64,
}

impl SnrTarget {
    pub fn new(snr_gm: f64, snr_wm: f64) -> Result<Self> {
        for (name, v) in [("snr_gm", snr_gm), ("snr_wm", snr_wm)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(IqtError::Parameter(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(Self { snr_gm, snr_wm })
    }
}

/// GM and WM signal multipliers for the contrast step.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Multipliers {
    pub m_gm: f64,
    pub m_wm: f64,
}

/// How the multiplier pair is anchored; the target only fixes their ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// White matter keeps its scale (m_wm = 1).
    #[default]
    WmAnchored,
    /// Both multipliers rescaled so the mean over GM/WM tissue is unchanged.
    MeanPreserving,
}

impl std::fmt::Display for Normalization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Normalization::WmAnchored => write!(f, "wm-anchored"),
            Normalization::MeanPreserving => write!(f, "mean-preserving"),
        }
    }
}

/// Everything one LF simulation needs beyond the image and its maps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimParams {
    pub target: SnrTarget,
    pub geometry: SliceGeometry,
    /// Voxels with gm + wm below this pass through the contrast step
    /// unchanged (CSF-dominated or background).
    pub membership_threshold: f64,
    pub seed: u64,
    pub normalization: Normalization,
}

impl SimParams {
    pub fn new(target: SnrTarget, geometry: SliceGeometry, seed: u64) -> Result<Self> {
        geometry.validate()?;
        Ok(Self {
            target,
            geometry,
            membership_threshold: 1e-3,
            seed,
            normalization: Normalization::WmAnchored,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if !(0.0..0.5).contains(&self.membership_threshold) {
            return Err(IqtError::Parameter(format!(
                "membership threshold {} outside [0, 0.5)",
                self.membership_threshold
            )));
        }
        Ok(())
    }
}

/// Measured SNR of a volume.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SnrEstimate {
    pub snr_gm: f64,
    pub snr_wm: f64,
    pub mean_gm: f64,
    pub mean_wm: f64,
    pub sigma_noise: f64,
    pub n_gm: usize,
    pub n_wm: usize,
    pub n_bg: usize,
}

/// Membership level above which a voxel counts as pure tissue for SNR
/// purposes.
pub const PURE_TISSUE_LEVEL: f64 = 0.9;
/// Minimum voxel count per region for a trustworthy estimate.
const MIN_REGION_VOXELS: usize = 500;

fn region_mean(v: &Volume, map: &Volume, name: &str) -> Result<(f64, usize)> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (i, &p) in map.data().iter().enumerate() {
        if p >= PURE_TISSUE_LEVEL {
            sum += v.data()[i];
            count += 1;
        }
    }
    if count < MIN_REGION_VOXELS {
        return Err(IqtError::Data(format!(
            "{name} region has {count} voxels with membership >= {PURE_TISSUE_LEVEL}; need {MIN_REGION_VOXELS}"
        )));
    }
    Ok((sum / count as f64, count))
}

/// Estimate per-tissue SNR: mean signal over voxels with membership >= 0.9
/// for GM and WM, divided by the sample standard deviation of the signal
/// over `background_mask`.
pub fn estimate_snr(
    v: &Volume,
    maps: &MembershipMaps,
    background_mask: &[bool],
) -> Result<SnrEstimate> {
    if maps.dims() != v.dims() || background_mask.len() != v.len() {
        return Err(IqtError::Shape(
            "volume, maps and background mask must share a grid".into(),
        ));
    }
    let (mean_gm, n_gm) = region_mean(v, &maps.gm, "GM")?;
    let (mean_wm, n_wm) = region_mean(v, &maps.wm, "WM")?;

    let bg: Vec<f64> = v
        .data()
        .iter()
        .zip(background_mask)
        .filter_map(|(&x, &m)| m.then_some(x))
        .collect();
    if bg.len() < MIN_REGION_VOXELS {
        return Err(IqtError::Data(format!(
            "background region has {} voxels; need {MIN_REGION_VOXELS}",
            bg.len()
        )));
    }
    let n_bg = bg.len();
    let mean_bg = bg.iter().sum::<f64>() / n_bg as f64;
    let sigma_noise =
        (bg.iter().map(|&x| (x - mean_bg).powi(2)).sum::<f64>() / (n_bg as f64 - 1.0)).sqrt();
    if sigma_noise < 1e-12 {
        return Err(IqtError::Data(
            "zero noise: background standard deviation below 1e-12".into(),
        ));
    }

    Ok(SnrEstimate {
        snr_gm: mean_gm / sigma_noise,
        snr_wm: mean_wm / sigma_noise,
        mean_gm,
        mean_wm,
        sigma_noise,
        n_gm,
        n_wm,
        n_bg,
    })
}

/// Derive WM-anchored multipliers: m_wm = 1 and m_gm chosen so the
/// post-contrast GM/WM mean ratio equals snr_gm / snr_wm exactly.
pub fn derive_multipliers(mean_gm_hf: f64, mean_wm_hf: f64, target: SnrTarget) -> Result<Multipliers> {
    for (name, v) in [("mean_gm", mean_gm_hf), ("mean_wm", mean_wm_hf)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(IqtError::Parameter(format!(
                "{name} must be positive, got {v}"
            )));
        }
    }
    Ok(Multipliers {
        m_gm: (target.snr_gm / target.snr_wm) * (mean_wm_hf / mean_gm_hf),
        m_wm: 1.0,
    })
}

/// Multiply each voxel by the membership-weighted average of the GM and WM
/// multipliers. Voxels whose gm + wm weight falls below `eps` (CSF or
/// background) pass through with multiplier 1.
pub fn apply_contrast(
    v: &Volume,
    maps: &MembershipMaps,
    m: Multipliers,
    eps: f64,
) -> Result<Volume> {
    if v.dims() != maps.dims() {
        return Err(IqtError::Shape(format!(
            "volume dims {:?} do not match maps {:?}",
            v.dims(),
            maps.dims()
        )));
    }
    let gm = maps.gm.data();
    let wm = maps.wm.data();
    let data = v
        .data()
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let w = gm[i] + wm[i];
            if w >= eps {
                x * (gm[i] * m.m_gm + wm[i] * m.m_wm) / w
            } else {
                x
            }
        })
        .collect();
    v.like(data)
}

/// Rescale a multiplier pair so that applying it leaves the mean over
/// GM/WM-weighted tissue (gm + wm >= eps) unchanged, preserving the ratio.
pub fn rescale_mean_preserving(
    v: &Volume,
    maps: &MembershipMaps,
    m: Multipliers,
    eps: f64,
) -> Result<Multipliers> {
    if v.dims() != maps.dims() {
        return Err(IqtError::Shape("volume dims do not match maps".into()));
    }
    let gm = maps.gm.data();
    let wm = maps.wm.data();
    let mut before = 0.0;
    let mut after = 0.0;
    for (i, &x) in v.data().iter().enumerate() {
        let w = gm[i] + wm[i];
        if w >= eps {
            before += x;
            after += x * (gm[i] * m.m_gm + wm[i] * m.m_wm) / w;
        }
    }
    if after <= 0.0 || before <= 0.0 {
        return Err(IqtError::Data(
            "cannot preserve the mean of a non-positive tissue signal".into(),
        ));
    }
    let gamma = before / after;
    Ok(Multipliers {
        m_gm: gamma * m.m_gm,
        m_wm: gamma * m.m_wm,
    })
}

/// Noise standard deviation that yields the target GM SNR on the
/// post-contrast image: sigma = mean(v over gm >= 0.9) / snr_gm.
///
/// With WM-anchored multipliers the WM SNR then lands on snr_wm up to the
/// partial-volume error of the contrast step.
pub fn derive_noise_sigma(
    v_contrast: &Volume,
    maps: &MembershipMaps,
    target: SnrTarget,
) -> Result<f64> {
    if v_contrast.dims() != maps.dims() {
        return Err(IqtError::Shape("volume dims do not match maps".into()));
    }
    let (mean_gm, _) = region_mean(v_contrast, &maps.gm, "GM")?;
    Ok(mean_gm / target.snr_gm)
}

/// Add i.i.d. Gaussian noise with standard deviation `sigma`.
///
/// Each voxel's sample comes from a counter-based stream keyed on
/// (seed, linear index), so the result is a pure function of
/// (dims, sigma, seed) regardless of evaluation order.
pub fn add_noise(v: &Volume, sigma: f64, seed: u64) -> Result<Volume> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(IqtError::Parameter(format!(
            "noise sigma must be > 0, got {sigma}"
        )));
    }
    let data = v
        .data()
        .iter()
        .enumerate()
        .map(|(i, &x)| x + sigma * gaussian_at(seed, i as u64))
        .collect();
    v.like(data)
}

/// Degrade membership maps through the same blur + slice-sampling path as
/// the image, yielding tissue weights at LF resolution.
pub fn degrade_memberships(maps: &MembershipMaps, g: &SliceGeometry) -> Result<MembershipMaps> {
    let degrade = |m: &Volume| -> Result<Volume> {
        let blurred = gaussian_blur_axis(m, g.axis, g.st_mm)?;
        let sampled = sample_slices(&blurred, g)?;
        // Blur is a convex combination, so values stay in [0, 1] up to
        // rounding; clamp the rounding away.
        sampled.map(|x| x.clamp(0.0, 1.0))
    };
    MembershipMaps::new(
        degrade(&maps.gm)?,
        degrade(&maps.wm)?,
        degrade(&maps.csf)?,
    )
}

/// Record of the parameters one simulation actually used.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub m_gm: f64,
    pub m_wm: f64,
    pub sigma: f64,
    pub st_mm: f64,
    pub gap_mm: f64,
    pub axis: usize,
    pub offset_mm: f64,
    pub seed: u64,
    pub snr_gm_target: f64,
    pub snr_wm_target: f64,
    pub normalization: String,
    /// How the tissue weights for sigma derivation were obtained.
    pub membership_degradation: String,
}

/// Simulate a low-field acquisition of `hf`.
///
/// Steps, mirroring the simulation procedure: (1) membership input
/// validation, (2) skull-stripping, (3) blur + gapped slice sampling along
/// the slice axis, (4) membership-weighted contrast change, (5) Gaussian
/// noise scaled to hit the target GM SNR. Errors carry the failing step.
pub fn simulate_lf(
    hf: &Volume,
    maps: &MembershipMaps,
    p: &SimParams,
) -> Result<(Volume, Provenance)> {
    p.validate()?;
    if maps.dims() != hf.dims() {
        return Err(IqtError::Shape(format!(
            "membership maps {:?} do not match the HF volume {:?}",
            maps.dims(),
            hf.dims()
        ))
        .at_sim_step(1, "membership input"));
    }

    let stripped = skull_strip(hf, maps).map_err(|e| e.at_sim_step(2, "skull-strip"))?;

    let g = &p.geometry;
    let blurred =
        gaussian_blur_axis(&stripped, g.axis, g.st_mm).map_err(|e| e.at_sim_step(3, "down-sampling"))?;
    let lf_clean = sample_slices(&blurred, g).map_err(|e| e.at_sim_step(3, "down-sampling"))?;
    let lf_maps = degrade_memberships(maps, g).map_err(|e| e.at_sim_step(3, "down-sampling"))?;

    let (mean_gm, _) = region_mean(&lf_clean, &lf_maps.gm, "GM")
        .map_err(|e| e.at_sim_step(4, "contrast change"))?;
    let (mean_wm, _) = region_mean(&lf_clean, &lf_maps.wm, "WM")
        .map_err(|e| e.at_sim_step(4, "contrast change"))?;
    let mut mult = derive_multipliers(mean_gm, mean_wm, p.target)
        .map_err(|e| e.at_sim_step(4, "contrast change"))?;
    if p.normalization == Normalization::MeanPreserving {
        mult = rescale_mean_preserving(&lf_clean, &lf_maps, mult, p.membership_threshold)
            .map_err(|e| e.at_sim_step(4, "contrast change"))?;
    }
    let contrasted = apply_contrast(&lf_clean, &lf_maps, mult, p.membership_threshold)
        .map_err(|e| e.at_sim_step(4, "contrast change"))?;

    let sigma = derive_noise_sigma(&contrasted, &lf_maps, p.target)
        .map_err(|e| e.at_sim_step(5, "noise addition"))?;
    let noisy =
        add_noise(&contrasted, sigma, p.seed).map_err(|e| e.at_sim_step(5, "noise addition"))?;

    let provenance = Provenance {
        m_gm: mult.m_gm,
        m_wm: mult.m_wm,
        sigma,
        st_mm: g.st_mm,
        gap_mm: g.gap_mm,
        axis: g.axis,
        offset_mm: g.offset_mm,
        seed: p.seed,
        snr_gm_target: p.target.snr_gm,
        snr_wm_target: p.target.snr_wm,
        normalization: p.normalization.to_string(),
        membership_degradation: "blur+sample along the slice axis, same path as the image".into(),
    };
    Ok((noisy, provenance))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{make_phantom, PhantomSpec};

    #[test]
    fn snr_round_trip_on_a_noisy_phantom() {
        // Construct a volume with GM at the post-contrast level 126.316 and
        // WM at 150 and noise at sigma = 126.316 / 48; the estimate must
        // land on (48, 57) within 3%.
        let spec = PhantomSpec::cube(64, 1.0)
            .with_hard_boundaries()
            .with_tissue_means(126.316, 150.0, 30.0);
        let (v, maps) = make_phantom(&spec, 5).unwrap();
        let sigma: f64 = 126.316 / 48.0;
        assert!((sigma - 2.63158).abs() < 1e-4);
        let noisy = add_noise(&v, sigma, 1).unwrap();
        let est = estimate_snr(&noisy, &maps, &maps.background_mask()).unwrap();
        assert!((est.snr_gm - 48.0).abs() / 48.0 < 0.03, "snr_gm {}", est.snr_gm);
        assert!((est.snr_wm - 57.0).abs() / 57.0 < 0.03, "snr_wm {}", est.snr_wm);
    }

    #[test]
    fn noiseless_volume_trips_the_zero_noise_guard() {
        let spec = PhantomSpec::cube(48, 1.0).with_hard_boundaries();
        let (v, maps) = make_phantom(&spec, 0).unwrap();
        let err = estimate_snr(&v, &maps, &maps.background_mask());
        match err {
            Err(IqtError::Data(msg)) => assert!(msg.contains("zero noise")),
            other => panic!("expected zero-noise data error, got {other:?}"),
        }
    }

    #[test]
    fn empty_background_is_a_data_error() {
        let spec = PhantomSpec::cube(48, 1.0).with_hard_boundaries();
        let (v, maps) = make_phantom(&spec, 0).unwrap();
        let none = vec![false; v.len()];
        assert!(matches!(
            estimate_snr(&v, &maps, &none),
            Err(IqtError::Data(_))
        ));
    }

    #[test]
    fn multipliers_match_the_closed_form() {
        let t = SnrTarget::new(48.0, 57.0).unwrap();
        let m = derive_multipliers(100.0, 150.0, t).unwrap();
        assert!((m.m_gm - 1.26316).abs() < 1e-5, "m_gm {}", m.m_gm);
        assert_eq!(m.m_wm, 1.0);

        // Target ratio equal to the HF ratio: identity multipliers.
        let t2 = SnrTarget::new(40.0, 60.0).unwrap();
        let m2 = derive_multipliers(100.0, 150.0, t2).unwrap();
        assert!((m2.m_gm - 1.0).abs() < 1e-12);

        // Equal means with the Fig.-2-style targets.
        let t3 = SnrTarget::new(50.0, 63.0).unwrap();
        let m3 = derive_multipliers(120.0, 120.0, t3).unwrap();
        assert!((m3.m_gm - 50.0 / 63.0).abs() < 1e-9);
        assert!((m3.m_gm - 0.79365).abs() < 1e-5);
    }

    #[test]
    fn non_positive_mean_is_a_parameter_error() {
        let t = SnrTarget::new(48.0, 57.0).unwrap();
        assert!(matches!(
            derive_multipliers(0.0, 150.0, t),
            Err(IqtError::Parameter(_))
        ));
    }

    #[test]
    fn contrast_applies_weighted_multipliers() {
        let mk = |vals: Vec<f64>| Volume::new(vals, (3, 1, 1), (1.0, 1.0, 1.0)).unwrap();
        let v = mk(vec![100.0, 120.0, 30.0]);
        let maps = MembershipMaps::new(
            mk(vec![1.0, 0.5, 0.0]),
            mk(vec![0.0, 0.5, 0.0]),
            mk(vec![0.0, 0.0, 1.0]),
        )
        .unwrap();
        let m = Multipliers {
            m_gm: 1.26316,
            m_wm: 1.0,
        };
        let out = apply_contrast(&v, &maps, m, 1e-3).unwrap();
        assert!((out.data()[0] - 126.316).abs() < 1e-9);
        assert!((out.data()[1] - 135.7896).abs() < 1e-3);
        assert_eq!(out.data()[2], 30.0, "pure CSF passes through");
    }

    #[test]
    fn contrast_ratio_is_exact_on_hard_phantoms() {
        let spec = PhantomSpec::cube(64, 1.0).with_hard_boundaries();
        let (v, maps) = make_phantom(&spec, 3).unwrap();
        let target = SnrTarget::new(48.0, 57.0).unwrap();
        let (mean_gm, _) = region_mean(&v, &maps.gm, "GM").unwrap();
        let (mean_wm, _) = region_mean(&v, &maps.wm, "WM").unwrap();
        let m = derive_multipliers(mean_gm, mean_wm, target).unwrap();
        let out = apply_contrast(&v, &maps, m, 1e-3).unwrap();
        let (g2, _) = region_mean(&out, &maps.gm, "GM").unwrap();
        let (w2, _) = region_mean(&out, &maps.wm, "WM").unwrap();
        let ratio = g2 / w2;
        let want = target.snr_gm / target.snr_wm;
        assert!(
            (ratio - want).abs() < 1e-9,
            "ratio {ratio} vs {want} (diff {})",
            (ratio - want).abs()
        );
    }

    #[test]
    fn contrast_preserves_sign() {
        let mk = |vals: Vec<f64>| Volume::new(vals, (2, 1, 1), (1.0, 1.0, 1.0)).unwrap();
        let v = mk(vec![-5.0, 5.0]);
        let maps = MembershipMaps::new(
            mk(vec![1.0, 1.0]),
            mk(vec![0.0, 0.0]),
            mk(vec![0.0, 0.0]),
        )
        .unwrap();
        let m = Multipliers { m_gm: 1.3, m_wm: 1.0 };
        let out = apply_contrast(&v, &maps, m, 1e-3).unwrap();
        assert!(out.data()[0] < 0.0 && out.data()[1] > 0.0);
    }

    #[test]
    fn mean_preserving_rescale_keeps_tissue_mean_and_ratio() {
        let spec = PhantomSpec::cube(48, 1.0);
        let (v, maps) = make_phantom(&spec, 6).unwrap();
        let m = Multipliers {
            m_gm: 1.26316,
            m_wm: 1.0,
        };
        let eps = 1e-3;
        let m2 = rescale_mean_preserving(&v, &maps, m, eps).unwrap();
        assert!((m2.m_gm / m2.m_wm - m.m_gm / m.m_wm).abs() < 1e-12, "ratio preserved");
        let out = apply_contrast(&v, &maps, m2, eps).unwrap();
        let tissue_mean = |vol: &Volume| {
            let mut s = 0.0;
            let mut n = 0usize;
            for (i, &x) in vol.data().iter().enumerate() {
                if maps.gm.data()[i] + maps.wm.data()[i] >= eps {
                    s += x;
                    n += 1;
                }
            }
            s / n as f64
        };
        let before = tissue_mean(&v);
        let after = tissue_mean(&out);
        assert!((before - after).abs() / before < 1e-12);
    }

    #[test]
    fn noise_sigma_follows_gm_mean() {
        let spec = PhantomSpec::cube(64, 1.0)
            .with_hard_boundaries()
            .with_tissue_means(126.316, 150.0, 30.0);
        let (v, maps) = make_phantom(&spec, 2).unwrap();
        let target = SnrTarget::new(48.0, 57.0).unwrap();
        let sigma = derive_noise_sigma(&v, &maps, target).unwrap();
        assert!((sigma - 2.63158).abs() < 1e-4, "sigma {sigma}");
        // Consistency: WM SNR implied by this sigma is the WM target.
        assert!((150.0 / sigma - 57.0).abs() < 0.01);

        // Limiting behaviour: enormous target SNR drives sigma to zero.
        let huge = SnrTarget::new(1e9, 57.0).unwrap();
        let tiny = derive_noise_sigma(&v, &maps, huge).unwrap();
        assert!(tiny < 1.3e-7);
    }

    #[test]
    fn add_noise_statistics_and_determinism() {
        let v = Volume::zeros((50, 50, 50), (1.0, 1.0, 1.0)).unwrap();
        let sigma = 2.5;
        let a = add_noise(&v, sigma, 9).unwrap();
        let b = add_noise(&v, sigma, 9).unwrap();
        assert_eq!(a.data(), b.data(), "same seed must be bit-identical");

        let n = a.len() as f64;
        let mean = a.data().iter().sum::<f64>() / n;
        assert!(mean.abs() <= 4.0 * sigma / n.sqrt(), "mean {mean}");
        let sd = (a.data().iter().map(|&x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((sd - sigma).abs() / sigma < 0.015, "sd {sd}");

        let c = add_noise(&v, sigma, 10).unwrap();
        let differing = a
            .data()
            .iter()
            .zip(c.data())
            .filter(|(x, y)| x != y)
            .count();
        assert!(differing as f64 / n > 0.99);
    }

    #[test]
    fn add_noise_rejects_non_positive_sigma() {
        let v = Volume::zeros((2, 2, 2), (1.0, 1.0, 1.0)).unwrap();
        assert!(matches!(
            add_noise(&v, 0.0, 1),
            Err(IqtError::Parameter(_))
        ));
    }

    #[test]
    fn simulate_lf_end_to_end_hits_targets() {
        let spec = PhantomSpec::cube(96, 1.0).with_tissue_means(100.0, 150.0, 30.0);
        let (hf, maps) = make_phantom(&spec, 7).unwrap();
        let g = SliceGeometry::centered(6.0, 2.0, 2).unwrap();
        let p = SimParams::new(SnrTarget::new(50.0, 63.0).unwrap(), g, 7).unwrap();
        let (lf, prov) = simulate_lf(&hf, &maps, &p).unwrap();
        assert_eq!(lf.dims().2, 12);
        let sp = lf.spacing();
        assert!((sp.2 - 8.0).abs() < 1e-9 && (sp.0 - 1.0).abs() < 1e-9);

        let lf_maps = degrade_memberships(&maps, &g).unwrap();
        let est = estimate_snr(&lf, &lf_maps, &lf_maps.background_mask()).unwrap();
        assert!(
            (est.snr_gm - 50.0).abs() / 50.0 < 0.05,
            "snr_gm {}",
            est.snr_gm
        );
        assert!(
            (est.snr_wm - 63.0).abs() / 63.0 < 0.05,
            "snr_wm {}",
            est.snr_wm
        );
        assert_eq!(prov.seed, 7);
        assert!(prov.sigma > 0.0);
    }

    #[test]
    fn simulate_lf_is_deterministic() {
        let spec = PhantomSpec::cube(48, 1.0);
        let (hf, maps) = make_phantom(&spec, 1).unwrap();
        let g = SliceGeometry::centered(4.0, 0.0, 2).unwrap();
        let p = SimParams::new(SnrTarget::new(50.0, 63.0).unwrap(), g, 3).unwrap();
        let (a, _) = simulate_lf(&hf, &maps, &p).unwrap();
        let (b, _) = simulate_lf(&hf, &maps, &p).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn near_identity_configuration_returns_the_stripped_input() {
        let spec = PhantomSpec::cube(48, 1.0);
        let (hf, maps) = make_phantom(&spec, 4).unwrap();
        // Intrinsic ratio with a huge GM SNR and identity geometry.
        let g = SliceGeometry::with_offset(1.0, 0.0, 2, 0.0).unwrap();
        let stripped = skull_strip(&hf, &maps).unwrap();
        let blurred = gaussian_blur_axis(&stripped, 2, 1.0).unwrap();
        // Target ratio = measured blurred-tissue ratio, so multipliers = 1.
        let (mg, _) = region_mean(&blurred, &maps.gm, "GM").unwrap();
        let (mw, _) = region_mean(&blurred, &maps.wm, "WM").unwrap();
        let ratio = mg / mw;
        let p = SimParams::new(
            SnrTarget::new(1e9 * ratio, 1e9).unwrap(),
            g,
            0,
        )
        .unwrap();
        let (lf, _) = simulate_lf(&hf, &maps, &p).unwrap();
        assert_eq!(lf.dims(), hf.dims());
        // The output deviates from the stripped input only by the 1-voxel
        // FWHM blur (plus vanishing noise).
        let mut max_dev_vs_blur: f64 = 0.0;
        for (a, b) in lf.data().iter().zip(blurred.data()) {
            max_dev_vs_blur = max_dev_vs_blur.max((a - b).abs());
        }
        assert!(
            max_dev_vs_blur < 1.0,
            "deviation vs blurred input {max_dev_vs_blur}"
        );
    }

    #[test]
    fn mismatched_maps_fail_at_step_one() {
        let spec = PhantomSpec::cube(32, 1.0);
        let (hf, _) = make_phantom(&spec, 0).unwrap();
        let (_, small_maps) = make_phantom(&PhantomSpec::cube(24, 1.0), 0).unwrap();
        let g = SliceGeometry::centered(4.0, 0.0, 2).unwrap();
        let p = SimParams::new(SnrTarget::new(50.0, 63.0).unwrap(), g, 0).unwrap();
        match simulate_lf(&hf, &small_maps, &p) {
            Err(IqtError::SimStep { step: 1, .. }) => {}
            other => panic!("expected step-1 error, got {other:?}"),
        }
    }
}
