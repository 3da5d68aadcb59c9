use crate::raster::ImageBuffer;

use super::{check_dims, mse_to_psnr, MetricError, MetricId, MetricResult};

/// Peak signal-to-noise ratio on `[0, 1]` data (MAX = 1). The squared error
/// is averaged over all pixels and channels; identical inputs give the
/// infinite marker.
pub fn psnr(reference: &ImageBuffer, distorted: &ImageBuffer) -> Result<MetricResult, MetricError> {
    check_dims(reference, distorted)?;
    let mut acc = 0.0f64;
    for (&a, &b) in reference.data().iter().zip(distorted.data()) {
        let d = a as f64 - b as f64;
        acc += d * d;
    }
    let mse = acc / reference.data().len() as f64;
    Ok(MetricResult {
        value: mse_to_psnr(mse),
        metric_id: MetricId::Psnr,
        params_digest: format!("max=1.0;mse=mean-over-{}ch", reference.channels()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_images_are_infinite() {
        let img = ImageBuffer::from_fn(8, 4, 3, |c, x, y| (c + x + y) as f32 / 16.0);
        let r = psnr(&img, &img).unwrap();
        assert!(r.is_infinite());
    }

    #[test]
    fn uniform_offset_is_twenty_db() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(5);
        let reference = ImageBuffer::from_fn(32, 16, 1, |_, _, _| rng.gen::<f32>() * 0.8);
        let distorted = ImageBuffer::new(
            32,
            16,
            1,
            reference.data().iter().map(|&v| v + 0.1).collect(),
        )
        .unwrap();
        let r = psnr(&reference, &distorted).unwrap();
        assert!((r.value - 20.0).abs() < 1e-3, "psnr {}", r.value);
    }

    #[test]
    fn noise_monotonicity() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(6);
        let reference = ImageBuffer::from_fn(64, 32, 1, |_, x, y| ((x + y) % 13) as f32 / 16.0);
        let mut last = f64::INFINITY;
        for sigma in [0.01f32, 0.02, 0.05] {
            let noisy = ImageBuffer::new(
                64,
                32,
                1,
                reference
                    .data()
                    .iter()
                    .map(|&v| {
                        let n: f32 = rng.gen::<f32>() - 0.5;
                        (v + sigma * n * 3.4641).clamp(0.0, 1.0)
                    })
                    .collect(),
            )
            .unwrap();
            let r = psnr(&reference, &noisy).unwrap();
            assert!(r.value < last, "psnr not decreasing at sigma {sigma}");
            last = r.value;
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let a = ImageBuffer::zeros(4, 4, 1);
        let b = ImageBuffer::zeros(4, 4, 3);
        assert!(matches!(
            psnr(&a, &b),
            Err(MetricError::DimensionMismatch(..))
        ));
    }
}
