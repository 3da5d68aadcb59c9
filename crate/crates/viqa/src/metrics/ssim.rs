use crate::raster::ImageBuffer;

use super::filter::{gaussian_kernel, PlaneF64};
use super::{check_dims, MetricError, MetricId, MetricResult};

const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;
// L = 1 on normalized data.
const C1: f64 = K1 * K1;
const C2: f64 = K2 * K2;

const MS_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

/// Mean structural similarity over the valid 11x11 Gaussian-window map,
/// computed on luminance.
pub fn ssim(reference: &ImageBuffer, distorted: &ImageBuffer) -> Result<MetricResult, MetricError> {
    let (map, _, _) = ssim_map(reference, distorted)?;
    let mean = map.iter().sum::<f64>() / map.len() as f64;
    Ok(MetricResult {
        value: mean,
        metric_id: MetricId::Ssim,
        params_digest: format!("win=11;sigma=1.5;k1=0.01;k2=0.03;l=1;luma=bt601"),
    })
}

/// The local SSIM map (valid convolution region) and its dimensions.
pub fn ssim_map(
    reference: &ImageBuffer,
    distorted: &ImageBuffer,
) -> Result<(Vec<f64>, usize, usize), MetricError> {
    check_dims(reference, distorted)?;
    let x = PlaneF64::from_luma(reference, 1.0);
    let y = PlaneF64::from_luma(distorted, 1.0);
    if x.w < WINDOW || x.h < WINDOW {
        return Err(MetricError::TooSmall {
            metric: "ssim",
            required: WINDOW,
            actual: x.w.min(x.h),
        });
    }
    let kernel = gaussian_kernel(WINDOW, SIGMA);
    let (l, cs, w, h) = luminance_and_cs(&x, &y, &kernel);
    let map = l.iter().zip(&cs).map(|(&a, &b)| a * b).collect();
    Ok((map, w, h))
}

/// Per-window luminance term and contrast-structure term.
fn luminance_and_cs(
    x: &PlaneF64,
    y: &PlaneF64,
    kernel: &[f64],
) -> (Vec<f64>, Vec<f64>, usize, usize) {
    let mu_x = x.filter_valid(kernel);
    let mu_y = y.filter_valid(kernel);
    let xx = x.map2(x, |a, b| a * b).filter_valid(kernel);
    let yy = y.map2(y, |a, b| a * b).filter_valid(kernel);
    let xy = x.map2(y, |a, b| a * b).filter_valid(kernel);
    let n = mu_x.data.len();
    let mut l = Vec::with_capacity(n);
    let mut cs = Vec::with_capacity(n);
    for i in 0..n {
        let (mx, my) = (mu_x.data[i], mu_y.data[i]);
        let var_x = xx.data[i] - mx * mx;
        let var_y = yy.data[i] - my * my;
        let cov = xy.data[i] - mx * my;
        l.push((2.0 * mx * my + C1) / (mx * mx + my * my + C1));
        cs.push((2.0 * cov + C2) / (var_x + var_y + C2));
    }
    (l, cs, mu_x.w, mu_x.h)
}

/// Multi-scale SSIM: five dyadic scales, contrast-structure terms for the
/// first four, the full product at the coarsest, combined with the standard
/// exponents. Downsampling is a 2x2 mean followed by decimation.
pub fn ms_ssim(
    reference: &ImageBuffer,
    distorted: &ImageBuffer,
) -> Result<MetricResult, MetricError> {
    check_dims(reference, distorted)?;
    let min_dim = reference.width().min(reference.height());
    let required = WINDOW << (MS_WEIGHTS.len() - 1);
    if min_dim < required {
        return Err(MetricError::TooSmall {
            metric: "ms_ssim",
            required,
            actual: min_dim,
        });
    }
    let kernel = gaussian_kernel(WINDOW, SIGMA);
    let mut x = PlaneF64::from_luma(reference, 1.0);
    let mut y = PlaneF64::from_luma(distorted, 1.0);
    let mut value = 1.0f64;
    for (scale, &weight) in MS_WEIGHTS.iter().enumerate() {
        if scale > 0 {
            x = x.downsample2();
            y = y.downsample2();
        }
        let (l, cs, _, _) = luminance_and_cs(&x, &y, &kernel);
        let n = cs.len() as f64;
        let mean_cs = cs.iter().sum::<f64>() / n;
        if scale + 1 < MS_WEIGHTS.len() {
            value *= mean_cs.max(0.0).powf(weight);
        } else {
            let mean_ssim = l.iter().zip(&cs).map(|(&a, &b)| a * b).sum::<f64>() / n;
            value *= mean_ssim.max(0.0).powf(weight);
        }
    }
    Ok(MetricResult {
        value,
        metric_id: MetricId::MsSsim,
        params_digest: format!(
            "scales=5;weights={MS_WEIGHTS:?};win=11;sigma=1.5;downsample=mean2x2;luma=bt601"
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_image(w: usize, h: usize, c: usize, seed: u64) -> ImageBuffer {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(seed);
        ImageBuffer::from_fn(w, h, c, |_, _, _| rng.gen())
    }

    #[test]
    fn identity_is_exactly_one() {
        let img = random_image(64, 48, 3, 3);
        assert!((ssim(&img, &img).unwrap().value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn symmetry() {
        let a = random_image(40, 40, 1, 1);
        let b = random_image(40, 40, 1, 2);
        let ab = ssim(&a, &b).unwrap().value;
        let ba = ssim(&b, &a).unwrap().value;
        assert!((ab - ba).abs() < 1e-12);
    }

    #[test]
    fn map_values_in_unit_interval() {
        let a = random_image(32, 32, 1, 8);
        let b = random_image(32, 32, 1, 9);
        let (map, _, _) = ssim_map(&a, &b).unwrap();
        for v in map {
            assert!((-1.0..=1.0).contains(&v), "ssim map value {v}");
        }
    }

    #[test]
    fn inverted_binary_image_scores_low() {
        // Single 11x11 window; brute-force the windowed moments directly.
        let x = ImageBuffer::from_fn(11, 11, 1, |_, px, py| ((px + py) % 2) as f32);
        let y = ImageBuffer::from_fn(11, 11, 1, |_, px, py| 1.0 - ((px + py) % 2) as f32);
        let (map, w, h) = ssim_map(&x, &y).unwrap();
        assert_eq!((w, h), (1, 1));

        let k = gaussian_kernel(11, 1.5);
        let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for py in 0..11 {
            for px in 0..11 {
                let wgt = k[px] * k[py];
                let a = x.get(0, px, py) as f64;
                let b = y.get(0, px, py) as f64;
                mx += wgt * a;
                my += wgt * b;
                sxx += wgt * a * a;
                syy += wgt * b * b;
                sxy += wgt * a * b;
            }
        }
        let (vx, vy, cov) = (sxx - mx * mx, syy - my * my, sxy - mx * my);
        let oracle = ((2.0 * mx * my + C1) * (2.0 * cov + C2))
            / ((mx * mx + my * my + C1) * (vx + vy + C2));
        assert!((map[0] - oracle).abs() < 1e-9, "{} vs {}", map[0], oracle);
        assert!(map[0] < 0.2, "inverted image scored {}", map[0]);
    }

    #[test]
    fn too_small_image_rejected() {
        let a = ImageBuffer::zeros(8, 8, 1);
        assert!(matches!(
            ssim(&a, &a),
            Err(MetricError::TooSmall { .. })
        ));
    }

    #[test]
    fn ms_ssim_identity_and_range() {
        let img = random_image(192, 192, 1, 12);
        let r = ms_ssim(&img, &img).unwrap();
        assert!((r.value - 1.0).abs() < 1e-9);

        let other = random_image(192, 192, 1, 13);
        let v = ms_ssim(&img, &other).unwrap().value;
        assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn ms_ssim_needs_five_scales() {
        let a = ImageBuffer::zeros(160, 160, 1);
        assert!(matches!(
            ms_ssim(&a, &a),
            Err(MetricError::TooSmall { required: 176, .. })
        ));
    }
}
