use std::f64::consts::PI;

use crate::raster::ImageBuffer;
use crate::sphere::{cpp_resample, fibonacci_sphere, sample_into, sphere_to_equirect, Interpolation};

use super::{check_dims, mse_to_psnr, MetricError, MetricId, MetricResult};

/// Shared knobs for the sphere-aware PSNR variants.
#[derive(Clone, Copy, Debug)]
pub struct SphericalMetricConfig {
    /// Number of Fibonacci-lattice directions used by S-PSNR.
    pub s_psnr_samples: usize,
    pub interpolation: Interpolation,
    /// CPP raster size; `None` keeps the input dimensions.
    pub cpp_dims: Option<(usize, usize)>,
}

impl Default for SphericalMetricConfig {
    fn default() -> Self {
        Self {
            s_psnr_samples: 10_000,
            interpolation: Interpolation::Bilinear,
            cpp_dims: None,
        }
    }
}

impl SphericalMetricConfig {
    fn interp_name(&self) -> &'static str {
        match self.interpolation {
            Interpolation::Bilinear => "bilinear",
            Interpolation::Nearest => "nearest",
        }
    }
}

/// Spherical PSNR: MSE over a uniform set of sphere directions, each sampled
/// from both equirectangular images.
pub fn s_psnr(
    reference: &ImageBuffer,
    distorted: &ImageBuffer,
    cfg: &SphericalMetricConfig,
) -> Result<MetricResult, MetricError> {
    check_dims(reference, distorted)?;
    let dirs = fibonacci_sphere(cfg.s_psnr_samples.max(1)).expect("nonzero sample count");
    let channels = reference.channels();
    let (w, h) = (reference.width(), reference.height());
    let mut ref_vals = vec![0.0f64; channels];
    let mut dist_vals = vec![0.0f64; channels];
    let mut acc = 0.0f64;
    for dir in &dirs {
        let (x, y) = sphere_to_equirect(*dir, w, h);
        sample_into(reference, x, y, cfg.interpolation, &mut ref_vals);
        sample_into(distorted, x, y, cfg.interpolation, &mut dist_vals);
        for c in 0..channels {
            let d = ref_vals[c] - dist_vals[c];
            acc += d * d;
        }
    }
    let mse = acc / (dirs.len() * channels) as f64;
    Ok(MetricResult {
        value: mse_to_psnr(mse),
        metric_id: MetricId::SPsnr,
        params_digest: format!(
            "samples={};interp={};lattice=fibonacci",
            dirs.len(),
            cfg.interp_name()
        ),
    })
}

/// Per-row solid-angle weights for an equirectangular raster of height `h`.
pub fn ws_psnr_row_weights(h: usize) -> Vec<f64> {
    (0..h)
        .map(|j| ((j as f64 + 0.5 - h as f64 / 2.0) * PI / h as f64).cos())
        .collect()
}

/// Weighted-to-spherically-uniform PSNR: raster MSE with cosine-latitude row
/// weights, normalized by the weight total.
pub fn ws_psnr(
    reference: &ImageBuffer,
    distorted: &ImageBuffer,
) -> Result<MetricResult, MetricError> {
    check_dims(reference, distorted)?;
    let (w, h, channels) = (
        reference.width(),
        reference.height(),
        reference.channels(),
    );
    let weights = ws_psnr_row_weights(h);
    // Weighted mean of per-row mean squared errors; rows share one weight,
    // so this equals the per-pixel weighted MSE while keeping the weight
    // normalization structurally identical to the numerator.
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for (j, &wj) in weights.iter().enumerate() {
        let mut row_err = 0.0f64;
        for c in 0..channels {
            let row_r = &reference.plane(c)[j * w..(j + 1) * w];
            let row_d = &distorted.plane(c)[j * w..(j + 1) * w];
            for (&a, &b) in row_r.iter().zip(row_d) {
                let d = a as f64 - b as f64;
                row_err += d * d;
            }
        }
        num += wj * (row_err / (w * channels) as f64);
        den += wj;
    }
    let wmse = num / den;
    Ok(MetricResult {
        value: mse_to_psnr(wmse),
        metric_id: MetricId::WsPsnr,
        params_digest: "weights=cos((j+0.5-h/2)*pi/h);norm=weight-sum".into(),
    })
}

/// PSNR after remapping both images to the equal-area Craster parabolic
/// plane; pixels outside the parabolic footprint are excluded.
pub fn cpp_psnr(
    reference: &ImageBuffer,
    distorted: &ImageBuffer,
    cfg: &SphericalMetricConfig,
) -> Result<MetricResult, MetricError> {
    check_dims(reference, distorted)?;
    let (out_w, out_h) = cfg
        .cpp_dims
        .unwrap_or((reference.width(), reference.height()));
    let (ref_cpp, mask) = cpp_resample(reference, out_w, out_h, cfg.interpolation)
        .expect("nonzero output dims");
    let (dist_cpp, _) = cpp_resample(distorted, out_w, out_h, cfg.interpolation)
        .expect("nonzero output dims");
    let channels = reference.channels();
    let n = out_w * out_h;
    let mut acc = 0.0f64;
    let mut count = 0usize;
    for c in 0..channels {
        let pr = ref_cpp.plane(c);
        let pd = dist_cpp.plane(c);
        for i in 0..n {
            if mask[i] {
                let d = pr[i] as f64 - pd[i] as f64;
                acc += d * d;
                count += 1;
            }
        }
    }
    let mse = acc / count as f64;
    Ok(MetricResult {
        value: mse_to_psnr(mse),
        metric_id: MetricId::CppPsnr,
        params_digest: format!(
            "dims={out_w}x{out_h};interp={};mask=footprint-only",
            cfg.interp_name()
        ),
    })
}
