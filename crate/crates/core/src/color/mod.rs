//! Differentiable ASC CDL colour grading matched in CIELAB.

pub mod cdl;
pub mod matching;
pub mod raster;
pub mod space;

pub use cdl::{apply_cdl_jacobian, apply_cdl_pixel, cdl_xml_read, cdl_xml_write, luma, CdlParams};
pub use matching::{color_match, CdlTransform, ColorMatchConfig};
pub use raster::{apply_cdl, psnr, resize_max_dim, LabImage, RgbImage};
pub use space::{lab_to_srgb, srgb_to_lab, srgb_to_lab_jacobian};
