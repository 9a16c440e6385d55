//! ASC CDL transform and its XML form.
//!
//! Per channel `v = max(0, s * x + o)^p`, followed by the saturation blend
//! `S(v; lambda) = L(v) + lambda * (v - L(v))` where `L` is Rec. 709 luma.
//! The transform is applied to sRGB-encoded values.

use crate::error::{Error, Result};

pub const LUMA: [f64; 3] = [0.2126, 0.7152, 0.0722];

/// Number of scalar CDL parameters: slope, offset, power triples and saturation.
pub const N_PARAMS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdlParams {
    pub slope: [f64; 3],
    pub offset: [f64; 3],
    pub power: [f64; 3],
    pub saturation: f64,
}

impl Default for CdlParams {
    fn default() -> Self {
        Self::identity()
    }
}

impl CdlParams {
    pub const fn identity() -> Self {
        Self { slope: [1.0; 3], offset: [0.0; 3], power: [1.0; 3], saturation: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let all = self.to_array();
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("CDL parameters must be finite".into()));
        }
        if self.slope.iter().any(|&s| s <= 0.0) {
            return Err(Error::InvalidArgument("CDL slope must be positive".into()));
        }
        if self.power.iter().any(|&p| p <= 0.0) {
            return Err(Error::InvalidArgument("CDL power must be positive".into()));
        }
        if self.saturation < 0.0 {
            return Err(Error::InvalidArgument("CDL saturation must be non-negative".into()));
        }
        Ok(())
    }

    /// `[slope r g b, offset r g b, power r g b, saturation]`
    pub fn to_array(&self) -> [f64; N_PARAMS] {
        let mut out = [0.0; N_PARAMS];
        out[0..3].copy_from_slice(&self.slope);
        out[3..6].copy_from_slice(&self.offset);
        out[6..9].copy_from_slice(&self.power);
        out[9] = self.saturation;
        out
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != N_PARAMS {
            return Err(Error::InvalidArgument(format!("expected {N_PARAMS} CDL values, got {}", v.len())));
        }
        let p = Self {
            slope: [v[0], v[1], v[2]],
            offset: [v[3], v[4], v[5]],
            power: [v[6], v[7], v[8]],
            saturation: v[9],
        };
        p.validate()?;
        Ok(p)
    }

    /// Largest absolute difference over the 10 parameters.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.to_array().iter().zip(other.to_array()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

pub fn luma(rgb: [f64; 3]) -> f64 {
    LUMA[0] * rgb[0] + LUMA[1] * rgb[1] + LUMA[2] * rgb[2]
}

fn sop(cdl: &CdlParams, rgb: [f64; 3]) -> [f64; 3] {
    std::array::from_fn(|c| {
        let base = (cdl.slope[c] * rgb[c] + cdl.offset[c]).max(0.0);
        if cdl.power[c] == 1.0 {
            base
        } else {
            base.powf(cdl.power[c])
        }
    })
}

fn saturate(v: [f64; 3], lambda: f64) -> [f64; 3] {
    let l = luma(v);
    v.map(|c| lambda * c + (1.0 - lambda) * l)
}

/// Applies the CDL to one encoded RGB triple, without output clamping.
pub fn apply_cdl_pixel(cdl: &CdlParams, rgb: [f64; 3]) -> [f64; 3] {
    saturate(sop(cdl, rgb), cdl.saturation)
}

/// Output and `d out / d params` for one pixel, rows per output channel,
/// columns in [`CdlParams::to_array`] order. The clamp contributes zero
/// gradient.
pub fn apply_cdl_jacobian(cdl: &CdlParams, rgb: [f64; 3]) -> ([f64; 3], [[f64; N_PARAMS]; 3]) {
    let lambda = cdl.saturation;
    let mut v = [0.0; 3];
    // d v_c / d (s_c, o_c, p_c)
    let mut dv = [[0.0; 3]; 3];
    for c in 0..3 {
        let t = cdl.slope[c] * rgb[c] + cdl.offset[c];
        if t > 0.0 {
            let p = cdl.power[c];
            let val = t.powf(p);
            let dt = p * t.powf(p - 1.0);
            v[c] = val;
            dv[c] = [dt * rgb[c], dt, val * t.ln()];
        }
    }
    let out = saturate(v, lambda);
    let l = luma(v);
    let mut jac = [[0.0; N_PARAMS]; 3];
    for (c, row) in jac.iter_mut().enumerate() {
        for k in 0..3 {
            // d out_c / d v_k
            let g = (1.0 - lambda) * LUMA[k] + if c == k { lambda } else { 0.0 };
            row[k] = g * dv[k][0];
            row[3 + k] = g * dv[k][1];
            row[6 + k] = g * dv[k][2];
        }
        row[9] = v[c] - l;
    }
    (out, jac)
}

fn fmt_value(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

fn fmt_triple(v: &[f64; 3]) -> String {
    v.iter().map(|x| fmt_value(*x)).collect::<Vec<_>>().join(" ")
}

/// Serialises as an ASC `ColorCorrection` document with six decimals.
pub fn cdl_xml_write(cdl: &CdlParams) -> String {
    format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
         <ColorCorrection xmlns=\"urn:ASC:CDL:v1.01\">\n\
         \x20   <SOPNode>\n\
         \x20       <Slope>{}</Slope>\n\
         \x20       <Offset>{}</Offset>\n\
         \x20       <Power>{}</Power>\n\
         \x20   </SOPNode>\n\
         \x20   <SatNode>\n\
         \x20       <Saturation>{}</Saturation>\n\
         \x20   </SatNode>\n\
         </ColorCorrection>\n",
        fmt_triple(&cdl.slope),
        fmt_triple(&cdl.offset),
        fmt_triple(&cdl.power),
        fmt_value(cdl.saturation)
    )
}

fn child<'a, 'i>(node: roxmltree::Node<'a, 'i>, name: &str) -> Result<roxmltree::Node<'a, 'i>> {
    node.descendants()
        .find(|n| n.is_element() && n.tag_name().name() == name)
        .ok_or_else(|| Error::Parse(format!("{name} missing")))
}

fn numbers<const N: usize>(node: roxmltree::Node, name: &str) -> Result<[f64; N]> {
    let text = child(node, name)?.text().unwrap_or("");
    let values = text
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| Error::Parse(format!("{name}: invalid number '{t}'"))))
        .collect::<Result<Vec<f64>>>()?;
    if values.len() != N {
        return Err(Error::Parse(format!("{name}: expected {N} values, found {}", values.len())));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parse(format!("{name}: non-finite value")));
    }
    Ok(std::array::from_fn(|i| values[i]))
}

/// Reads the first `SOPNode` and `SatNode` found anywhere in the document,
/// so `.cc`, `.ccc` and `.cdl` wrappers are all accepted.
pub fn cdl_xml_read(text: &str) -> Result<CdlParams> {
    let doc = roxmltree::Document::parse(text).map_err(|e| Error::Parse(format!("malformed CDL XML: {e}")))?;
    let root = doc.root();
    let sop = child(root, "SOPNode")?;
    let sat = child(root, "SatNode")?;
    let cdl = CdlParams {
        slope: numbers::<3>(sop, "Slope")?,
        offset: numbers::<3>(sop, "Offset")?,
        power: numbers::<3>(sop, "Power")?,
        saturation: numbers::<1>(sat, "Saturation")?[0],
    };
    cdl.validate().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(cdl)
}
