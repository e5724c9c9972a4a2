//! Synthetic brain-like phantoms with known tissue geometry.
//!
//! A phantom is three nested ellipsoids: an outer brain envelope whose shell
//! is grey matter, an inner white-matter ellipsoid, and a central CSF
//! ellipsoid. Memberships ramp linearly over `boundary_softness` mm at each
//! interface so partial-volume code paths get exercised; the voxel value is
//! the membership-weighted mix of the tissue means. The seed perturbs the
//! (shared) ellipsoid orientation only, so a phantom is a pure function of
//! (spec, seed).

use serde::{Deserialize, Serialize};

use crate::error::{IqtError, Result};
use crate::rng::SplitMix64;
use crate::volume::{MembershipMaps, Volume};

/// Axis-aligned ellipsoid in mm, relative to the volume centre
/// (before the seed-driven rotation is applied).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Ellipsoid {
    pub center_mm: [f64; 3],
    pub semi_axes_mm: [f64; 3],
}

impl Ellipsoid {
    /// Normalised ellipsoid coordinate: < 1 inside, 1 on the surface.
    fn eval(&self, p: [f64; 3]) -> f64 {
        let dx = (p[0] - self.center_mm[0]) / self.semi_axes_mm[0];
        let dy = (p[1] - self.center_mm[1]) / self.semi_axes_mm[1];
        let dz = (p[2] - self.center_mm[2]) / self.semi_axes_mm[2];
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    /// Approximate signed distance to the surface in mm (radial
    /// approximation; negative inside).
    fn signed_distance_mm(&self, p: [f64; 3]) -> f64 {
        let e = self.eval(p);
        let r = ((p[0] - self.center_mm[0]).powi(2)
            + (p[1] - self.center_mm[1]).powi(2)
            + (p[2] - self.center_mm[2]).powi(2))
        .sqrt();
        if e == 0.0 {
            // Centre point: deepest inside.
            return -self.semi_axes_mm.iter().cloned().fold(f64::MAX, f64::min);
        }
        r * (e - 1.0) / e
    }
}

/// Full description of one phantom.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub dims: (usize, usize, usize),
    pub spacing_mm: (f64, f64, f64),
    pub brain: Ellipsoid,
    pub wm: Ellipsoid,
    pub csf: Ellipsoid,
    /// (GM, WM, CSF) signal means, arbitrary units.
    pub tissue_means: (f64, f64, f64),
    /// Width in mm of the linear membership ramp at each interface;
    /// 0 gives hard boundaries.
    pub boundary_softness: f64,
}

impl PhantomSpec {
    /// Cubic phantom with proportionally sized nested ellipsoids, the
    /// default tissue means (100, 150, 30) and 2 mm soft boundaries.
    pub fn cube(n: usize, spacing_mm: f64) -> Self {
        let half = n as f64 * spacing_mm / 2.0;
        Self {
            dims: (n, n, n),
            spacing_mm: (spacing_mm, spacing_mm, spacing_mm),
            brain: Ellipsoid {
                center_mm: [0.0, 0.0, 0.0],
                semi_axes_mm: [0.84 * half, 0.80 * half, 0.76 * half],
            },
            wm: Ellipsoid {
                center_mm: [0.0, 0.0, 0.0],
                semi_axes_mm: [0.54 * half, 0.50 * half, 0.46 * half],
            },
            csf: Ellipsoid {
                center_mm: [0.0, 0.0, 0.0],
                semi_axes_mm: [0.20 * half, 0.18 * half, 0.16 * half],
            },
            tissue_means: (100.0, 150.0, 30.0),
            boundary_softness: 2.0,
        }
    }

    pub fn with_hard_boundaries(mut self) -> Self {
        self.boundary_softness = 0.0;
        self
    }

    pub fn with_tissue_means(mut self, gm: f64, wm: f64, csf: f64) -> Self {
        self.tissue_means = (gm, wm, csf);
        self
    }

    fn validate(&self) -> Result<()> {
        let (g, w, c) = self.tissue_means;
        if g <= 0.0 || w <= 0.0 || c <= 0.0 {
            return Err(IqtError::Spec(format!(
                "tissue means must be positive, got ({g}, {w}, {c})"
            )));
        }
        if self.boundary_softness < 0.0 {
            return Err(IqtError::Spec(format!(
                "boundary_softness must be >= 0, got {}",
                self.boundary_softness
            )));
        }
        check_nested(&self.csf, &self.wm, "csf", "wm")?;
        check_nested(&self.wm, &self.brain, "wm", "brain")?;
        Ok(())
    }
}

/// Verify `inner` lies strictly inside `outer` by sampling the inner
/// surface on a latitude/longitude grid.
fn check_nested(inner: &Ellipsoid, outer: &Ellipsoid, iname: &str, oname: &str) -> Result<()> {
    let steps = 24;
    for it in 0..=steps {
        let theta = std::f64::consts::PI * it as f64 / steps as f64;
        for ip in 0..(2 * steps) {
            let phi = std::f64::consts::PI * ip as f64 / steps as f64;
            let u = [
                theta.sin() * phi.cos(),
                theta.sin() * phi.sin(),
                theta.cos(),
            ];
            let p = [
                inner.center_mm[0] + inner.semi_axes_mm[0] * u[0],
                inner.center_mm[1] + inner.semi_axes_mm[1] * u[1],
                inner.center_mm[2] + inner.semi_axes_mm[2] * u[2],
            ];
            if outer.eval(p) >= 1.0 - 1e-9 {
                return Err(IqtError::Spec(format!(
                    "{iname} ellipsoid is not strictly inside {oname} ellipsoid"
                )));
            }
        }
    }
    Ok(())
}

/// Inside-membership of a surface: 1 well inside, 0 well outside, linear
/// ramp of width `softness` mm centred on the surface.
fn ramp(signed_dist_mm: f64, softness: f64) -> f64 {
    if softness == 0.0 {
        return if signed_dist_mm <= 0.0 { 1.0 } else { 0.0 };
    }
    (0.5 - signed_dist_mm / softness).clamp(0.0, 1.0)
}

/// Rotation matrix from small Euler angles (x, then y, then z).
fn rotation(ax: f64, ay: f64, az: f64) -> [[f64; 3]; 3] {
    let (sx, cx) = ax.sin_cos();
    let (sy, cy) = ay.sin_cos();
    let (sz, cz) = az.sin_cos();
    // Rz * Ry * Rx
    [
        [cz * cy, cz * sy * sx - sz * cx, cz * sy * cx + sz * sx],
        [sz * cy, sz * sy * sx + cz * cx, sz * sy * cx - cz * sx],
        [-sy, cy * sx, cy * cx],
    ]
}

/// Generate a noiseless HF-like phantom volume and the exact membership
/// maps used to mix it. Deterministic given (spec, seed); the seed only
/// rotates the ellipsoid frame (up to ~0.2 rad per axis).
pub fn make_phantom(spec: &PhantomSpec, seed: u64) -> Result<(Volume, MembershipMaps)> {
    spec.validate()?;
    let (nx, ny, nz) = spec.dims;
    let (sx, sy, sz) = spec.spacing_mm;
    let centre = [
        (nx as f64 - 1.0) * sx / 2.0,
        (ny as f64 - 1.0) * sy / 2.0,
        (nz as f64 - 1.0) * sz / 2.0,
    ];

    let mut rng = SplitMix64::new(seed);
    let rot = rotation(
        rng.range(-0.2, 0.2),
        rng.range(-0.2, 0.2),
        rng.range(-0.2, 0.2),
    );

    let n = nx * ny * nz;
    let mut value = vec![0.0; n];
    let mut gm = vec![0.0; n];
    let mut wm = vec![0.0; n];
    let mut csf = vec![0.0; n];
    let (mu_gm, mu_wm, mu_csf) = spec.tissue_means;
    let soft = spec.boundary_softness;

    let mut i = 0;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let q = [
                    x as f64 * sx - centre[0],
                    y as f64 * sy - centre[1],
                    z as f64 * sz - centre[2],
                ];
                // Rotate the sample point into the ellipsoid frame
                // (inverse rotation = transpose).
                let p = [
                    rot[0][0] * q[0] + rot[1][0] * q[1] + rot[2][0] * q[2],
                    rot[0][1] * q[0] + rot[1][1] * q[1] + rot[2][1] * q[2],
                    rot[0][2] * q[0] + rot[1][2] * q[1] + rot[2][2] * q[2],
                ];
                let b = ramp(spec.brain.signed_distance_mm(p), soft);
                if b > 0.0 {
                    let w = ramp(spec.wm.signed_distance_mm(p), soft).min(b);
                    let c = ramp(spec.csf.signed_distance_mm(p), soft).min(w);
                    let m_csf = c;
                    let m_wm = w - c;
                    let m_gm = b - w;
                    gm[i] = m_gm;
                    wm[i] = m_wm;
                    csf[i] = m_csf;
                    value[i] = m_gm * mu_gm + m_wm * mu_wm + m_csf * mu_csf;
                }
                i += 1;
            }
        }
    }

    let spacing = spec.spacing_mm;
    let v = Volume::new(value, spec.dims, spacing)?;
    let maps = MembershipMaps::new(
        Volume::new(gm, spec.dims, spacing)?,
        Volume::new(wm, spec.dims, spacing)?,
        Volume::new(csf, spec.dims, spacing)?,
    )?;
    Ok((v, maps))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hard_boundaries_give_pure_wm_interior() {
        let spec = PhantomSpec::cube(32, 1.0).with_hard_boundaries();
        let (v, maps) = make_phantom(&spec, 0).unwrap();
        // Centre of the volume is inside the CSF ellipsoid; probe a point
        // between the CSF and WM surfaces instead.
        let c = 16usize;
        let probe = v.idx(c + 5, c, c);
        assert_eq!(maps.wm.data()[probe], 1.0);
        assert_eq!(v.data()[probe], 150.0);
    }

    #[test]
    fn outside_brain_is_zero_everywhere() {
        let spec = PhantomSpec::cube(32, 1.0);
        let (v, maps) = make_phantom(&spec, 1).unwrap();
        let corner = v.idx(0, 0, 0);
        assert_eq!(v.data()[corner], 0.0);
        assert_eq!(maps.gm.data()[corner], 0.0);
        assert_eq!(maps.wm.data()[corner], 0.0);
        assert_eq!(maps.csf.data()[corner], 0.0);
    }

    #[test]
    fn mean_over_pure_gm_matches_mu_gm() {
        // Oracle: direct summation over the generated phantom.
        let spec = PhantomSpec::cube(64, 1.0);
        let (v, maps) = make_phantom(&spec, 2).unwrap();
        let mut sum = 0.0;
        let mut count = 0usize;
        for i in 0..v.len() {
            if maps.gm.data()[i] >= 0.99 {
                sum += v.data()[i];
                count += 1;
            }
        }
        assert!(count > 1000, "need a meaningful pure-GM population, got {count}");
        let mean = sum / count as f64;
        assert!(
            (mean - 100.0).abs() / 100.0 < 0.005,
            "pure-GM mean {mean} deviates from 100 by more than 0.5%"
        );
    }

    #[test]
    fn memberships_partition_inside_and_vanish_outside() {
        let spec = PhantomSpec::cube(48, 1.0);
        let (_, maps) = make_phantom(&spec, 3).unwrap();
        // The seed rotates the ellipsoid frame, so classify in the unrotated
        // frame with a margin covering both the ramp width and the maximum
        // surface displacement the rotation can cause.
        let margin = spec.boundary_softness + 4.0;
        let mut inside = 0usize;
        let mut outside = 0usize;
        let mut i = 0;
        for z in 0..48 {
            for y in 0..48 {
                for x in 0..48 {
                    let total = maps.total(i);
                    let q = [x as f64 - 23.5, y as f64 - 23.5, z as f64 - 23.5];
                    let d = spec.brain.signed_distance_mm(q);
                    if d < -margin {
                        assert!(
                            (total - 1.0).abs() <= 1e-6,
                            "partition broke at ({x},{y},{z}): {total}"
                        );
                        inside += 1;
                    } else if d > margin {
                        assert_eq!(total, 0.0, "background leak at ({x},{y},{z})");
                        outside += 1;
                    }
                    i += 1;
                }
            }
        }
        assert!(inside > 5000, "interior sample too small: {inside}");
        assert!(outside > 5000, "exterior sample too small: {outside}");
    }

    #[test]
    fn deterministic_given_spec_and_seed() {
        let spec = PhantomSpec::cube(24, 1.0);
        let (a, am) = make_phantom(&spec, 9).unwrap();
        let (b, bm) = make_phantom(&spec, 9).unwrap();
        assert_eq!(a.data(), b.data());
        assert_eq!(am.gm.data(), bm.gm.data());
        let (c, _) = make_phantom(&spec, 10).unwrap();
        assert_ne!(a.data(), c.data(), "different seeds should rotate the frame");
    }

    #[test]
    fn non_nested_ellipsoids_rejected() {
        let mut spec = PhantomSpec::cube(16, 1.0);
        spec.wm.semi_axes_mm = spec.brain.semi_axes_mm;
        assert!(matches!(
            make_phantom(&spec, 0),
            Err(IqtError::Spec(_))
        ));
    }
}
