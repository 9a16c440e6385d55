//! Fitting a CDL so that a graded source matches a reference palette.
//!
//! Pixels of both images are treated as point clouds in CIELAB and the CDL
//! parameters are optimised against the sliced loss. Optimisation runs in an
//! unconstrained parameterisation: slope and power through `exp`, offset
//! as-is and saturation as an absolute value, starting at the identity grade.
//! Saturation stays linear in its raw parameter so it can travel all the way
//! to zero within a short run; a square would slow down near zero.

use crate::color::cdl::{apply_cdl_jacobian, apply_cdl_pixel, CdlParams, N_PARAMS};
use crate::color::raster::{resize_max_dim, LabImage, RgbImage};
use crate::color::space::{srgb_to_lab, srgb_to_lab_jacobian};
use crate::error::{invalid, Result};
use crate::estimator::ReswdConfig;
use crate::numeric::SampleSet;
use crate::optimize::{fit_transform, MatchReport, Mode, OptimizerKind, ParametricTransform};

/// Maps unconstrained parameters to a CDL.
pub fn params_from_raw(z: &[f64]) -> CdlParams {
    CdlParams {
        slope: [z[0].exp(), z[1].exp(), z[2].exp()],
        offset: [z[3], z[4], z[5]],
        power: [z[6].exp(), z[7].exp(), z[8].exp()],
        saturation: z[9].abs(),
    }
}

/// Inverse of [`params_from_raw`], choosing the non-negative saturation.
pub fn raw_from_params(cdl: &CdlParams) -> Vec<f64> {
    let mut z = cdl.to_array().to_vec();
    for i in [0, 1, 2, 6, 7, 8] {
        z[i] = z[i].ln();
    }
    z
}

/// Source pixels pushed through the CDL and converted to Lab.
#[derive(Debug, Clone)]
pub struct CdlTransform {
    pixels: Vec<[f64; 3]>,
}

impl CdlTransform {
    pub fn new(source: &RgbImage) -> Self {
        Self { pixels: source.pixels().collect() }
    }
}

impl ParametricTransform for CdlTransform {
    fn n_params(&self) -> usize {
        N_PARAMS
    }

    fn apply(&self, params: &[f64]) -> Result<SampleSet> {
        let cdl = params_from_raw(params);
        let data: Vec<f64> = self.pixels.iter().flat_map(|&p| srgb_to_lab(apply_cdl_pixel(&cdl, p))).collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(invalid("graded pixels are not finite"));
        }
        SampleSet::new(data, self.pixels.len(), 3)
    }

    fn vjp(&self, params: &[f64], grad_out: &[f64]) -> Result<Vec<f64>> {
        if grad_out.len() != self.pixels.len() * 3 {
            return Err(invalid("gradient does not match the transform output"));
        }
        let cdl = params_from_raw(params);
        let mut g = [0.0; N_PARAMS];
        for (p, go) in self.pixels.iter().zip(grad_out.chunks_exact(3)) {
            let (rgb, jc) = apply_cdl_jacobian(&cdl, *p);
            let (_, jl) = srgb_to_lab_jacobian(rgb);
            let g_rgb: [f64; 3] = std::array::from_fn(|k| (0..3).map(|i| jl[i][k] * go[i]).sum());
            for (j, gj) in g.iter_mut().enumerate() {
                *gj += (0..3).map(|c| jc[c][j] * g_rgb[c]).sum::<f64>();
            }
        }
        // chain through the reparameterisation
        for i in [0, 1, 2] {
            g[i] *= cdl.slope[i];
            g[6 + i] *= cdl.power[i];
        }
        if params[9] < 0.0 {
            g[9] = -g[9];
        }
        Ok(g.to_vec())
    }
}

#[derive(Debug, Clone)]
pub struct ColorMatchConfig {
    pub estimator: ReswdConfig,
    pub mode: Mode,
    pub steps: usize,
    /// Working resolution (longer side) for both images.
    pub max_dim: usize,
    pub optimizer: OptimizerKind,
}

/// Step size used for the CDL parameters unless overridden.
pub const DEFAULT_COLOR_LR: f64 = 3e-2;

impl Default for ColorMatchConfig {
    fn default() -> Self {
        Self {
            estimator: ReswdConfig::default(),
            mode: Mode::Reswd,
            steps: 150,
            max_dim: 128,
            optimizer: OptimizerKind::adam(DEFAULT_COLOR_LR),
        }
    }
}

/// Fits a CDL that grades `source` towards the colours of `reference`.
/// The returned parameters apply to the full-resolution source.
pub fn color_match(source: &RgbImage, reference: &RgbImage, cfg: &ColorMatchConfig) -> Result<(CdlParams, MatchReport)> {
    let src = resize_max_dim(source, cfg.max_dim)?;
    let refr = resize_max_dim(reference, cfg.max_dim)?;
    let target = LabImage::from_rgb(&refr).to_samples()?;
    let transform = CdlTransform::new(&src);
    let z0 = raw_from_params(&CdlParams::identity());
    let (z, mut report) = fit_transform(&z0, &transform, &target, &cfg.estimator, cfg.steps, &cfg.optimizer, cfg.mode)?;
    if reference.count_colors(2) == 1 {
        report.warnings.push("reference image has a single colour; the fitted grade is not unique".into());
    }
    let cdl = params_from_raw(&z);
    cdl.validate()?;
    Ok((cdl, report))
}
