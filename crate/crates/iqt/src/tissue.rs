//! Tissue segmentation and skull-stripping.
//!
//! Two routes produce GM/WM/CSF membership maps: ingesting externally
//! computed probability maps ([`load_memberships`]), or fitting a
//! three-class Gaussian mixture to masked intensities with EM ([`fit_gmm`] +
//! [`memberships`]). Components are labelled by sorted mean: lowest is CSF,
//! middle GM, highest WM, which holds for T1-weighted contrast where white
//! matter is brightest.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{IqtError, Result};
use crate::nifti::load_volume;
use crate::rng::SplitMix64;
use crate::volume::{MembershipMaps, Volume};

/// The three tissue classes, in the fixed GM/WM/CSF order used throughout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tissue {
    Gm,
    Wm,
    Csf,
}

/// Fitted three-component 1D Gaussian mixture.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GmmModel {
    /// Component means in signal units.
    pub means: [f64; 3],
    /// Component variances in squared signal units.
    pub variances: [f64; 3],
    /// Mixing weights; sum to 1.
    pub weights: [f64; 3],
    /// Tissue assigned to each component (by sorted mean).
    pub labels: [Tissue; 3],
}

impl GmmModel {
    pub fn validate(&self) -> Result<()> {
        if self.variances.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(IqtError::Data(format!(
                "variances must be positive and finite: {:?}",
                self.variances
            )));
        }
        if self.means.iter().any(|m| !m.is_finite()) {
            return Err(IqtError::Data(format!(
                "means must be finite: {:?}",
                self.means
            )));
        }
        let wsum: f64 = self.weights.iter().sum();
        if (wsum - 1.0).abs() > 1e-9 {
            return Err(IqtError::Data(format!("weights sum to {wsum}, not 1")));
        }
        Ok(())
    }

    /// Component index labelled as the given tissue.
    pub fn component_of(&self, tissue: Tissue) -> usize {
        self.labels.iter().position(|&t| t == tissue).unwrap()
    }
}

/// Options for [`fit_gmm`].
#[derive(Debug, Clone, Copy)]
pub struct GmmFitOptions {
    pub max_iter: usize,
    /// Stop when the mean per-voxel log-likelihood improves by less than
    /// this between iterations.
    pub tol: f64,
    /// Variance regulariser added each M-step, relative to the masked data
    /// variance. Keeps components on discrete-valued data (e.g. hard
    /// phantoms) from degenerating; set to 0 to fit unregularised.
    pub reg_covar_rel: f64,
}

impl Default for GmmFitOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol: 1e-6,
            reg_covar_rel: 1e-8,
        }
    }
}

/// Minimum masked voxel count for a meaningful fit.
const MIN_MASK_VOXELS: usize = 1000;
/// A component whose variance falls below this times the data variance has
/// collapsed onto (numerically) a single point.
const COLLAPSE_REL: f64 = 1e-12;

/// Load GM/WM/CSF membership maps from three NIfTI files, checking them
/// against a reference grid (dims exact, spacing within 1e-4 mm) and
/// clamping values into [0, 1]. Fails if more than 1% of voxels fall
/// outside [-0.01, 1.01] before clamping.
pub fn load_memberships(
    gm_path: impl AsRef<Path>,
    wm_path: impl AsRef<Path>,
    csf_path: impl AsRef<Path>,
    reference: &Volume,
) -> Result<MembershipMaps> {
    let mut vols = Vec::with_capacity(3);
    for (name, path) in [
        ("gm", gm_path.as_ref()),
        ("wm", wm_path.as_ref()),
        ("csf", csf_path.as_ref()),
    ] {
        let v = load_volume(path)?;
        if v.dims() != reference.dims() {
            return Err(IqtError::Shape(format!(
                "{name} map dims {:?} do not match reference {:?}",
                v.dims(),
                reference.dims()
            )));
        }
        if !v.same_grid(reference, 1e-4) {
            return Err(IqtError::Shape(format!(
                "{name} map spacing {:?} deviates from reference {:?} by more than 1e-4 mm",
                v.spacing(),
                reference.spacing()
            )));
        }
        let out_of_range = v
            .data()
            .iter()
            .filter(|&&x| !(-0.01..=1.01).contains(&x))
            .count();
        if out_of_range * 100 > v.len() {
            return Err(IqtError::Data(format!(
                "{name} map has {out_of_range} of {} voxels outside [-0.01, 1.01]",
                v.len()
            )));
        }
        vols.push(v.map(|x| x.clamp(0.0, 1.0))?);
    }
    let csf = vols.pop().unwrap();
    let wm = vols.pop().unwrap();
    let gm = vols.pop().unwrap();
    MembershipMaps::new(gm, wm, csf)
}

/// Default brain mask: voxels above 5% of the 99th-percentile intensity,
/// reduced to the largest 6-connected component.
pub fn default_brain_mask(v: &Volume) -> Vec<bool> {
    let mut sorted: Vec<f64> = v.data().to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let p99 = sorted[((sorted.len() - 1) as f64 * 0.99).floor() as usize];
    let threshold = 0.05 * p99;
    let rough: Vec<bool> = v.data().iter().map(|&x| x > threshold).collect();
    largest_component(&rough, v.dims())
}

/// Largest 6-connected component of a boolean mask.
fn largest_component(mask: &[bool], dims: (usize, usize, usize)) -> Vec<bool> {
    let (nx, ny, nz) = dims;
    let idx = |x: usize, y: usize, z: usize| x + nx * (y + ny * z);
    let mut label = vec![0u32; mask.len()];
    let mut sizes: Vec<usize> = vec![0]; // label 0 = unassigned
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || label[start] != 0 {
            continue;
        }
        let current = sizes.len() as u32;
        sizes.push(0);
        stack.push(start);
        label[start] = current;
        while let Some(i) = stack.pop() {
            sizes[current as usize] += 1;
            let z = i / (nx * ny);
            let r = i % (nx * ny);
            let y = r / nx;
            let x = r % nx;
            let mut push = |n: usize| {
                if mask[n] && label[n] == 0 {
                    label[n] = current;
                    stack.push(n);
                }
            };
            if x > 0 {
                push(idx(x - 1, y, z));
            }
            if x + 1 < nx {
                push(idx(x + 1, y, z));
            }
            if y > 0 {
                push(idx(x, y - 1, z));
            }
            if y + 1 < ny {
                push(idx(x, y + 1, z));
            }
            if z > 0 {
                push(idx(x, y, z - 1));
            }
            if z + 1 < nz {
                push(idx(x, y, z + 1));
            }
        }
    }
    let best = (1..sizes.len()).max_by_key(|&l| sizes[l]).unwrap_or(0) as u32;
    label.iter().map(|&l| l != 0 && l == best).collect()
}

fn mean_and_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|&x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

/// k-means++ seeding on 1D intensities followed by a few Lloyd iterations;
/// returns initial (means, variances, weights).
fn kmeans_init(xs: &[f64], seed: u64, data_var: f64) -> ([f64; 3], [f64; 3], [f64; 3]) {
    let mut rng = SplitMix64::new(seed);
    let mut centers = [0.0f64; 3];
    centers[0] = xs[rng.below(xs.len())];
    for k in 1..3 {
        // Sample proportional to squared distance to the nearest centre.
        let d2: Vec<f64> = xs
            .iter()
            .map(|&x| {
                centers[..k]
                    .iter()
                    .map(|&c| (x - c) * (x - c))
                    .fold(f64::MAX, f64::min)
            })
            .collect();
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            centers[k] = xs[rng.below(xs.len())];
            continue;
        }
        let mut target = rng.next_f64() * total;
        let mut chosen = xs.len() - 1;
        for (i, &d) in d2.iter().enumerate() {
            if target < d {
                chosen = i;
                break;
            }
            target -= d;
        }
        centers[k] = xs[chosen];
    }
    for _ in 0..20 {
        let mut sums = [0.0f64; 3];
        let mut counts = [0usize; 3];
        for &x in xs {
            let k = nearest(&centers, x);
            sums[k] += x;
            counts[k] += 1;
        }
        let mut moved = false;
        for k in 0..3 {
            if counts[k] > 0 {
                let m = sums[k] / counts[k] as f64;
                if m != centers[k] {
                    moved = true;
                }
                centers[k] = m;
            }
        }
        if !moved {
            break;
        }
    }
    let mut vars = [0.0f64; 3];
    let mut counts = [0usize; 3];
    for &x in xs {
        let k = nearest(&centers, x);
        vars[k] += (x - centers[k]).powi(2);
        counts[k] += 1;
    }
    let mut weights = [0.0f64; 3];
    let n = xs.len() as f64;
    for k in 0..3 {
        weights[k] = (counts[k] as f64 / n).max(1e-6);
        vars[k] = if counts[k] > 1 {
            (vars[k] / counts[k] as f64).max(1e-4 * data_var)
        } else {
            1e-2 * data_var
        };
    }
    let wsum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= wsum;
    }
    (centers, vars, weights)
}

fn nearest(centers: &[f64; 3], x: f64) -> usize {
    let mut best = 0;
    let mut bd = f64::MAX;
    for (k, &c) in centers.iter().enumerate() {
        let d = (x - c).abs();
        if d < bd {
            bd = d;
            best = k;
        }
    }
    best
}

#[inline]
fn log_gauss(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (d * d / var + var.ln() + (2.0 * std::f64::consts::PI).ln())
}

/// Fit a three-component Gaussian mixture to the intensities of `v` inside
/// `brain_mask` with EM.
///
/// Initialisation is k-means++ style on the 1D intensities with the given
/// seed. Iteration stops when the mean per-voxel log-likelihood improves by
/// less than `opts.tol`, or after `opts.max_iter` rounds. Components come
/// back labelled by sorted mean (ties broken by ascending variance).
pub fn fit_gmm(
    v: &Volume,
    brain_mask: &[bool],
    seed: u64,
    opts: GmmFitOptions,
) -> Result<GmmModel> {
    if brain_mask.len() != v.len() {
        return Err(IqtError::Shape(format!(
            "mask length {} does not match volume {}",
            brain_mask.len(),
            v.len()
        )));
    }
    let xs: Vec<f64> = v
        .data()
        .iter()
        .zip(brain_mask)
        .filter_map(|(&x, &m)| m.then_some(x))
        .collect();
    if xs.len() < MIN_MASK_VOXELS {
        return Err(IqtError::Data(format!(
            "mask selects {} voxels; need at least {MIN_MASK_VOXELS}",
            xs.len()
        )));
    }
    let (_, data_var) = mean_and_var(&xs);
    if data_var == 0.0 {
        return Err(IqtError::Data(
            "masked intensities are all equal; nothing to segment".into(),
        ));
    }

    let (mut means, mut vars, mut weights) = kmeans_init(&xs, seed, data_var);
    let reg = opts.reg_covar_rel * data_var;
    let collapse_floor = COLLAPSE_REL * data_var;
    let n = xs.len() as f64;

    let mut resp = vec![0.0f64; xs.len() * 3];
    let mut last_ll = f64::NEG_INFINITY;
    for iter in 0..opts.max_iter {
        // E-step with log-sum-exp.
        let mut ll = 0.0;
        let logw = [weights[0].ln(), weights[1].ln(), weights[2].ln()];
        for (i, &x) in xs.iter().enumerate() {
            let l = [
                logw[0] + log_gauss(x, means[0], vars[0]),
                logw[1] + log_gauss(x, means[1], vars[1]),
                logw[2] + log_gauss(x, means[2], vars[2]),
            ];
            let m = l[0].max(l[1]).max(l[2]);
            let e = [(l[0] - m).exp(), (l[1] - m).exp(), (l[2] - m).exp()];
            let s = e[0] + e[1] + e[2];
            for k in 0..3 {
                resp[3 * i + k] = e[k] / s;
            }
            ll += m + s.ln();
        }
        ll /= n;

        // M-step.
        for k in 0..3 {
            let mut rk = 0.0;
            let mut mk = 0.0;
            for (i, &x) in xs.iter().enumerate() {
                let r = resp[3 * i + k];
                rk += r;
                mk += r * x;
            }
            if rk <= 0.0 {
                return Err(IqtError::Collapse {
                    iter,
                    msg: format!("component {k} lost all responsibility mass"),
                });
            }
            let mean = mk / rk;
            let mut vk = 0.0;
            for (i, &x) in xs.iter().enumerate() {
                let d = x - mean;
                vk += resp[3 * i + k] * d * d;
            }
            let var = vk / rk + reg;
            if var < collapse_floor {
                return Err(IqtError::Collapse {
                    iter,
                    msg: format!(
                        "component {k} variance {var:.3e} below {collapse_floor:.3e} (1e-12 x data variance)"
                    ),
                });
            }
            means[k] = mean;
            vars[k] = var;
            weights[k] = rk / n;
        }
        let wsum: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= wsum;
        }

        if (ll - last_ll).abs() < opts.tol && iter > 0 {
            break;
        }
        last_ll = ll;
    }

    // Label by sorted mean: lowest CSF, middle GM, highest WM; equal means
    // ordered by ascending variance.
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        means[a]
            .partial_cmp(&means[b])
            .unwrap()
            .then(vars[a].partial_cmp(&vars[b]).unwrap())
    });
    let mut labels = [Tissue::Gm; 3];
    labels[order[0]] = Tissue::Csf;
    labels[order[1]] = Tissue::Gm;
    labels[order[2]] = Tissue::Wm;

    let model = GmmModel {
        means,
        variances: vars,
        weights,
        labels,
    };
    model.validate()?;
    Ok(model)
}

/// Per-voxel posterior responsibilities of the mixture inside `brain_mask`,
/// zero outside. Inside the mask the three maps sum to 1.
pub fn memberships(model: &GmmModel, v: &Volume, brain_mask: &[bool]) -> Result<MembershipMaps> {
    model.validate()?;
    if brain_mask.len() != v.len() {
        return Err(IqtError::Shape(format!(
            "mask length {} does not match volume {}",
            brain_mask.len(),
            v.len()
        )));
    }
    let n = v.len();
    let mut out = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let logw = [
        model.weights[0].ln(),
        model.weights[1].ln(),
        model.weights[2].ln(),
    ];
    for i in 0..n {
        if !brain_mask[i] {
            continue;
        }
        let x = v.data()[i];
        let l = [
            logw[0] + log_gauss(x, model.means[0], model.variances[0]),
            logw[1] + log_gauss(x, model.means[1], model.variances[1]),
            logw[2] + log_gauss(x, model.means[2], model.variances[2]),
        ];
        let m = l[0].max(l[1]).max(l[2]);
        let e = [(l[0] - m).exp(), (l[1] - m).exp(), (l[2] - m).exp()];
        let s = e[0] + e[1] + e[2];
        for k in 0..3 {
            out[k][i] = e[k] / s;
        }
    }
    let pick = |tissue: Tissue, out: &[Vec<f64>; 3]| out[model.component_of(tissue)].clone();
    let gm = v.like(pick(Tissue::Gm, &out))?;
    let wm = v.like(pick(Tissue::Wm, &out))?;
    let csf = v.like(pick(Tissue::Csf, &out))?;
    MembershipMaps::new(gm, wm, csf)
}

/// Zero every voxel with no tissue membership at all; keep the rest.
pub fn skull_strip(v: &Volume, maps: &MembershipMaps) -> Result<Volume> {
    if v.dims() != maps.dims() {
        return Err(IqtError::Shape(format!(
            "volume dims {:?} do not match maps {:?}",
            v.dims(),
            maps.dims()
        )));
    }
    let data = v
        .data()
        .iter()
        .enumerate()
        .map(|(i, &x)| if maps.total(i) > 0.0 { x } else { 0.0 })
        .collect();
    v.like(data)
}
