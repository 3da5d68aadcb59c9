use crate::raster::ImageBuffer;

use super::filter::{gaussian_kernel, PlaneF64};
use super::{check_dims, MetricError, MetricId, MetricResult};

// Canonical pixel-domain constants; data is rescaled to the 0-255 range
// internally so they apply unchanged.
const SIGMA_NSQ: f64 = 2.0;
const EPS: f64 = 1e-10;
const SCALES: usize = 4;

/// Pixel-domain visual information fidelity: the ratio of information the
/// distorted image retains about the reference, summed over four scales.
/// Asymmetric by construction. Windows with a degenerate (zero-variance)
/// reference contribute nothing to either side of the ratio.
pub fn vifp(reference: &ImageBuffer, distorted: &ImageBuffer) -> Result<MetricResult, MetricError> {
    check_dims(reference, distorted)?;
    let mut x = PlaneF64::from_luma(reference, 255.0);
    let mut y = PlaneF64::from_luma(distorted, 255.0);

    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for scale in 1..=SCALES {
        let win_len = (1usize << (SCALES + 1 - scale)) + 1;
        let kernel = gaussian_kernel(win_len, win_len as f64 / 5.0);
        if scale > 1 {
            x = x.filter_valid(&kernel).decimate2();
            y = y.filter_valid(&kernel).decimate2();
        }
        if x.w < win_len || x.h < win_len {
            return Err(MetricError::TooSmall {
                metric: "vifp",
                required: win_len << (SCALES - 1),
                actual: reference.width().min(reference.height()),
            });
        }
        let mu_x = x.filter_valid(&kernel);
        let mu_y = y.filter_valid(&kernel);
        let xx = x.map2(&x, |a, b| a * b).filter_valid(&kernel);
        let yy = y.map2(&y, |a, b| a * b).filter_valid(&kernel);
        let xy = x.map2(&y, |a, b| a * b).filter_valid(&kernel);
        for i in 0..mu_x.data.len() {
            let (mx, my) = (mu_x.data[i], mu_y.data[i]);
            let mut sigma_x = xx.data[i] - mx * mx;
            let sigma_y = (yy.data[i] - my * my).max(0.0);
            let sigma_xy = xy.data[i] - mx * my;

            let mut g = sigma_xy / (sigma_x + EPS);
            let mut sv = sigma_y - g * sigma_xy;
            if sigma_x < EPS {
                g = 0.0;
                sv = sigma_y;
                sigma_x = 0.0;
            }
            if sigma_y < EPS {
                g = 0.0;
                sv = 0.0;
            }
            if g < 0.0 {
                sv = sigma_y;
                g = 0.0;
            }
            let sv = sv.max(EPS);
            num += (1.0 + g * g * sigma_x / (sv + SIGMA_NSQ)).log10();
            den += (1.0 + sigma_x / SIGMA_NSQ).log10();
        }
    }
    // A reference with no information anywhere: define the ratio as 1.
    let value = if den == 0.0 { 1.0 } else { num / den };
    Ok(MetricResult {
        value,
        metric_id: MetricId::Vifp,
        params_digest: format!(
            "domain=pixel;scales=4;windows=17/9/5/3;sigma_nsq=2(0-255);luma=bt601"
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn textured(w: usize, h: usize, seed: u64) -> ImageBuffer {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(seed);
        ImageBuffer::from_fn(w, h, 1, |_, x, y| {
            0.4 + 0.25 * ((x as f32 / 7.0).sin() + (y as f32 / 5.0).cos()) * 0.5
                + 0.2 * rng.gen::<f32>()
        })
    }

    #[test]
    fn identity_is_one() {
        let img = textured(96, 96, 4);
        let r = vifp(&img, &img).unwrap();
        assert!((r.value - 1.0).abs() < 1e-6, "vifp {}", r.value);
    }

    #[test]
    fn noise_monotonicity() {
        use rand::{Rng, SeedableRng};
        let reference = textured(96, 96, 4);
        let mut last = f64::INFINITY;
        for (i, sigma) in [0.01f32, 0.05, 0.1].into_iter().enumerate() {
            let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(40 + i as u64);
            let noisy = ImageBuffer::new(
                96,
                96,
                1,
                reference
                    .data()
                    .iter()
                    .map(|&v| (v + sigma * (rng.gen::<f32>() - 0.5) * 3.4641).clamp(0.0, 1.0))
                    .collect(),
            )
            .unwrap();
            let v = vifp(&reference, &noisy).unwrap().value;
            assert!(v < last, "vifp not decreasing at sigma {sigma}");
            last = v;
        }
    }

    #[test]
    fn contrast_boost_can_exceed_one() {
        // Scale around the mean so values stay in range without clipping.
        let reference = textured(96, 96, 9);
        let mean: f32 =
            reference.data().iter().sum::<f32>() / reference.data().len() as f32;
        let boosted = ImageBuffer::new(
            96,
            96,
            1,
            reference
                .data()
                .iter()
                .map(|&v| (mean + 1.2 * (v - mean)).clamp(0.0, 1.0))
                .collect(),
        )
        .unwrap();
        let v = vifp(&reference, &boosted).unwrap().value;
        assert!(v > 1.0, "contrast boost gave {v}");
    }

    #[test]
    fn asymmetric_under_noise() {
        use rand::{Rng, SeedableRng};
        let reference = textured(96, 96, 5);
        let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(77);
        let noisy = ImageBuffer::new(
            96,
            96,
            1,
            reference
                .data()
                .iter()
                .map(|&v| (v + 0.08 * (rng.gen::<f32>() - 0.5) * 3.4641).clamp(0.0, 1.0))
                .collect(),
        )
        .unwrap();
        let forward = vifp(&reference, &noisy).unwrap().value;
        let backward = vifp(&noisy, &reference).unwrap().value;
        assert!((forward - backward).abs() > 1e-3, "{forward} vs {backward}");
    }
}
