//! Full-reference quality metrics: the rectilinear four (PSNR, SSIM,
//! MS-SSIM, VIFp) and the spherical three (S-PSNR, WS-PSNR, CPP-PSNR).

mod filter;
mod psnr;
mod spherical;
mod ssim;
mod vif;

pub use psnr::psnr;
pub use spherical::{cpp_psnr, s_psnr, ws_psnr, SphericalMetricConfig};
pub use ssim::{ms_ssim, ssim, ssim_map};
pub use vif::vifp;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("dimension mismatch: {0}x{1}x{2} vs {3}x{4}x{5}")]
    DimensionMismatch(usize, usize, usize, usize, usize, usize),
    #[error("{metric}: image too small ({actual} px), needs at least {required} px per side")]
    TooSmall {
        metric: &'static str,
        required: usize,
        actual: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MetricId {
    Psnr,
    Ssim,
    MsSsim,
    Vifp,
    SPsnr,
    WsPsnr,
    CppPsnr,
}

impl MetricId {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricId::Psnr => "psnr",
            MetricId::Ssim => "ssim",
            MetricId::MsSsim => "ms_ssim",
            MetricId::Vifp => "vifp",
            MetricId::SPsnr => "s_psnr",
            MetricId::WsPsnr => "ws_psnr",
            MetricId::CppPsnr => "cpp_psnr",
        }
    }

    /// The Table-1 roster in presentation order.
    pub fn all() -> [MetricId; 7] {
        [
            MetricId::Psnr,
            MetricId::Ssim,
            MetricId::MsSsim,
            MetricId::Vifp,
            MetricId::SPsnr,
            MetricId::WsPsnr,
            MetricId::CppPsnr,
        ]
    }
}

impl std::str::FromStr for MetricId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "psnr" => Ok(MetricId::Psnr),
            "ssim" => Ok(MetricId::Ssim),
            "ms_ssim" | "ms-ssim" | "msssim" => Ok(MetricId::MsSsim),
            "vifp" => Ok(MetricId::Vifp),
            "s_psnr" | "s-psnr" | "spsnr" => Ok(MetricId::SPsnr),
            "ws_psnr" | "ws-psnr" | "wspsnr" => Ok(MetricId::WsPsnr),
            "cpp_psnr" | "cpp-psnr" | "cpppsnr" => Ok(MetricId::CppPsnr),
            other => Err(format!("unknown metric '{other}'")),
        }
    }
}

/// Score plus a record of the parameters that produced it. PSNR-family
/// values are dB and become `f64::INFINITY` for identical inputs.
#[derive(Clone, Debug)]
pub struct MetricResult {
    pub value: f64,
    pub metric_id: MetricId,
    pub params_digest: String,
}

impl MetricResult {
    pub fn is_infinite(&self) -> bool {
        self.value.is_infinite()
    }
}

pub(crate) fn check_dims(
    a: &crate::raster::ImageBuffer,
    b: &crate::raster::ImageBuffer,
) -> Result<(), MetricError> {
    if !a.same_shape(b) {
        return Err(MetricError::DimensionMismatch(
            a.width(),
            a.height(),
            a.channels(),
            b.width(),
            b.height(),
            b.channels(),
        ));
    }
    Ok(())
}

pub(crate) fn mse_to_psnr(mse: f64) -> f64 {
    if mse <= 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    }
}
