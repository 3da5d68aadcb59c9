//! Equirectangular <-> sphere coordinate mapping, uniform sphere sampling,
//! bilinear raster sampling with seam wrap, and the Craster parabolic
//! projection used by the spherical PSNR variants.

use std::f64::consts::PI;

use thiserror::Error;

use crate::raster::ImageBuffer;

#[derive(Debug, Error)]
pub enum SphereError {
    #[error("pixel index ({u}, {v}) outside {w}x{h}")]
    OutOfRange { u: usize, v: usize, w: usize, h: usize },
    #[error("sample count must be at least 1")]
    EmptySampleSet,
    #[error("output dimensions must be nonzero")]
    ZeroDims,
}

/// A direction on the unit sphere. Latitude in `[-pi/2, pi/2]`, longitude in
/// `[-pi, pi)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SphereDir {
    pub lat: f64,
    pub lon: f64,
}

impl SphereDir {
    pub fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }

    /// Unit 3-vector (x toward lon 0, z toward the north pole).
    pub fn to_unit(self) -> [f64; 3] {
        let (cl, sl) = (self.lat.cos(), self.lat.sin());
        [cl * self.lon.cos(), cl * self.lon.sin(), sl]
    }

    pub fn from_unit(v: [f64; 3]) -> Self {
        Self {
            lat: v[2].clamp(-1.0, 1.0).asin(),
            lon: v[1].atan2(v[0]),
        }
    }
}

/// A point in a flat projection plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlanePoint {
    pub x: f64,
    pub y: f64,
}

/// Direction of the sphere point seen by pixel `(u, v)` of a `w x h`
/// equirectangular raster, using the pixel-center convention.
pub fn equirect_to_sphere(
    u: usize,
    v: usize,
    w: usize,
    h: usize,
) -> Result<SphereDir, SphereError> {
    if u >= w || v >= h {
        return Err(SphereError::OutOfRange { u, v, w, h });
    }
    Ok(SphereDir {
        lon: ((u as f64 + 0.5) / w as f64 - 0.5) * 2.0 * PI,
        lat: (0.5 - (v as f64 + 0.5) / h as f64) * PI,
    })
}

/// Continuous raster coordinates of a sphere direction; exact inverse of
/// [`equirect_to_sphere`] at pixel centers.
pub fn sphere_to_equirect(dir: SphereDir, w: usize, h: usize) -> (f64, f64) {
    let x = (dir.lon / (2.0 * PI) + 0.5) * w as f64 - 0.5;
    let y = (0.5 - dir.lat / PI) * h as f64 - 0.5;
    (x, y)
}

/// `n` near-uniform directions from the Fibonacci lattice. Deterministic and
/// seedless.
pub fn fibonacci_sphere(n: usize) -> Result<Vec<SphereDir>, SphereError> {
    if n == 0 {
        return Err(SphereError::EmptySampleSet);
    }
    let golden = (1.0 + 5.0f64.sqrt()) / 2.0;
    let mut dirs = Vec::with_capacity(n);
    for i in 0..n {
        let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
        let lat = z.asin();
        let mut lon = (2.0 * PI * i as f64 / golden) % (2.0 * PI);
        if lon >= PI {
            lon -= 2.0 * PI;
        }
        dirs.push(SphereDir { lat, lon });
    }
    Ok(dirs)
}

/// Interpolation kernel for raster resampling.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Interpolation {
    Bilinear,
    Nearest,
}

/// Samples every channel of `img` at continuous coordinates `(x, y)`.
/// Horizontal neighbors wrap modulo the width (the sphere seam); vertical
/// neighbors clamp at the poles. Results are written to `out`, one value per
/// channel.
pub fn sample_into(img: &ImageBuffer, x: f64, y: f64, interp: Interpolation, out: &mut [f64]) {
    debug_assert_eq!(out.len(), img.channels());
    let w = img.width();
    let h = img.height();
    match interp {
        Interpolation::Nearest => {
            let xi = wrap_index(x.round() as i64, w);
            let yi = (y.round() as i64).clamp(0, h as i64 - 1) as usize;
            for (c, slot) in out.iter_mut().enumerate() {
                *slot = img.get(c, xi, yi) as f64;
            }
        }
        Interpolation::Bilinear => {
            let x0f = x.floor();
            let y0f = y.floor();
            let fx = x - x0f;
            let fy = y - y0f;
            let x0 = wrap_index(x0f as i64, w);
            let x1 = wrap_index(x0f as i64 + 1, w);
            let y0 = (y0f as i64).clamp(0, h as i64 - 1) as usize;
            let y1 = (y0f as i64 + 1).clamp(0, h as i64 - 1) as usize;
            let (w00, w10) = ((1.0 - fx) * (1.0 - fy), fx * (1.0 - fy));
            let (w01, w11) = ((1.0 - fx) * fy, fx * fy);
            for (c, slot) in out.iter_mut().enumerate() {
                *slot = w00 * img.get(c, x0, y0) as f64
                    + w10 * img.get(c, x1, y0) as f64
                    + w01 * img.get(c, x0, y1) as f64
                    + w11 * img.get(c, x1, y1) as f64;
            }
        }
    }
}

/// Bilinear variant of [`sample_into`] returning a fresh vector.
pub fn bilinear_sample(img: &ImageBuffer, x: f64, y: f64) -> Vec<f64> {
    let mut out = vec![0.0; img.channels()];
    sample_into(img, x, y, Interpolation::Bilinear, &mut out);
    out
}

fn wrap_index(i: i64, n: usize) -> usize {
    let n = n as i64;
    (((i % n) + n) % n) as usize
}

/// Half-height of the projection: sqrt(3*pi) * sin(pi/6).
fn cpp_half_height() -> f64 {
    (3.0 * PI).sqrt() / 2.0
}
/// Half-width of the projection at the equator: sqrt(3/pi) * pi = sqrt(3*pi).
fn cpp_half_width() -> f64 {
    (3.0 * PI).sqrt()
}

/// Craster parabolic (equal-area) forward projection.
pub fn cpp_forward(dir: SphereDir) -> PlanePoint {
    let x = (3.0 / PI).sqrt() * dir.lon * (2.0 * (2.0 * dir.lat / 3.0).cos() - 1.0);
    let y = (3.0 * PI).sqrt() * (dir.lat / 3.0).sin();
    PlanePoint { x, y }
}

/// Inverse of [`cpp_forward`]; `None` outside the parabolic footprint.
pub fn cpp_inverse(p: PlanePoint) -> Option<SphereDir> {
    let s = p.y / (3.0 * PI).sqrt();
    if s.abs() > 0.5 {
        return None;
    }
    let lat = 3.0 * s.asin();
    let denom = (3.0 / PI).sqrt() * (2.0 * (2.0 * lat / 3.0).cos() - 1.0);
    if denom <= 0.0 {
        // Only reachable at the exact poles, where the footprint is a point.
        return if p.x == 0.0 {
            Some(SphereDir { lat, lon: 0.0 })
        } else {
            None
        };
    }
    let lon = p.x / denom;
    if !(-PI..=PI).contains(&lon) {
        return None;
    }
    Some(SphereDir { lat, lon })
}

/// Resamples an equirectangular image into the Craster parabolic plane.
/// Returns the projected image and a mask that is `true` where the output
/// pixel falls inside the parabolic footprint.
pub fn cpp_resample(
    img: &ImageBuffer,
    out_w: usize,
    out_h: usize,
    interp: Interpolation,
) -> Result<(ImageBuffer, Vec<bool>), SphereError> {
    if out_w == 0 || out_h == 0 {
        return Err(SphereError::ZeroDims);
    }
    let half_w = cpp_half_width();
    let half_h = cpp_half_height();
    let channels = img.channels();
    let mut out = ImageBuffer::zeros(out_w, out_h, channels);
    let mut mask = vec![false; out_w * out_h];
    let mut sample = vec![0.0f64; channels];
    for j in 0..out_h {
        let y = (0.5 - (j as f64 + 0.5) / out_h as f64) * 2.0 * half_h;
        for i in 0..out_w {
            let x = ((i as f64 + 0.5) / out_w as f64 - 0.5) * 2.0 * half_w;
            let Some(dir) = cpp_inverse(PlanePoint { x, y }) else {
                continue;
            };
            let (sx, sy) = sphere_to_equirect(dir, img.width(), img.height());
            sample_into(img, sx, sy, interp, &mut sample);
            for (c, &v) in sample.iter().enumerate() {
                out.set(c, i, j, v as f32);
            }
            mask[j * out_w + i] = true;
        }
    }
    Ok((out, mask))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_mapped_corner() {
        let d = equirect_to_sphere(0, 0, 4, 2).unwrap();
        assert!((d.lon - (-3.0 * PI / 4.0)).abs() < 1e-12);
        assert!((d.lat - PI / 4.0).abs() < 1e-12);
    }

    #[test]
    fn center_pixel_near_origin() {
        let (w, h) = (64, 32);
        let d = equirect_to_sphere(w / 2, h / 2, w, h).unwrap();
        assert!(d.lon.abs() <= PI / w as f64 + 1e-12);
        assert!(d.lat.abs() <= PI / (2.0 * h as f64) + 1e-12);
    }

    #[test]
    fn top_row_approaches_north_pole() {
        let top_lat = |h: usize| equirect_to_sphere(0, 0, 4, h).unwrap().lat;
        assert!(top_lat(1_000_000) > PI / 2.0 - 1e-5);
        assert!(top_lat(100) < top_lat(10_000));
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(equirect_to_sphere(4, 0, 4, 2).is_err());
        assert!(equirect_to_sphere(0, 2, 4, 2).is_err());
    }

    #[test]
    fn round_trip_pixel_centers() {
        let (w, h) = (17, 9);
        for v in 0..h {
            for u in 0..w {
                let d = equirect_to_sphere(u, v, w, h).unwrap();
                let (x, y) = sphere_to_equirect(d, w, h);
                assert!((x - u as f64).abs() < 1e-9, "u={u} x={x}");
                assert!((y - v as f64).abs() < 1e-9, "v={v} y={y}");
            }
        }
    }

    #[test]
    fn origin_maps_to_image_center() {
        let (x, y) = sphere_to_equirect(SphereDir::new(0.0, 0.0), 8, 4);
        assert!((x - 3.5).abs() < 1e-12);
        assert!((y - 1.5).abs() < 1e-12);
    }

    #[test]
    fn seam_stays_on_positive_side() {
        let (x, _) = sphere_to_equirect(SphereDir::new(0.0, PI - 1e-9), 16, 8);
        assert!(x > 15.0 && x < 15.5);
    }

    #[test]
    fn fibonacci_unit_norm_and_balance() {
        let dirs = fibonacci_sphere(10_000).unwrap();
        let mut mean = [0.0f64; 3];
        for d in &dirs {
            let v = d.to_unit();
            let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
            for k in 0..3 {
                mean[k] += v[k];
            }
        }
        let n = dirs.len() as f64;
        let mag = (mean[0] * mean[0] + mean[1] * mean[1] + mean[2] * mean[2]).sqrt() / n;
        assert!(mag < 0.02, "mean magnitude {mag}");
    }

    #[test]
    fn fibonacci_degenerate_cases() {
        assert!(fibonacci_sphere(0).is_err());
        let one = fibonacci_sphere(1).unwrap();
        assert_eq!(one.len(), 1);
        assert!(one[0].lat.abs() <= PI / 2.0);
    }

    #[test]
    fn fibonacci_latitude_density_matches_cosine() {
        let n = 10_000usize;
        let dirs = fibonacci_sphere(n).unwrap();
        let bins = 18;
        let mut counts = vec![0usize; bins];
        for d in &dirs {
            let t = (d.lat + PI / 2.0) / PI;
            let b = ((t * bins as f64) as usize).min(bins - 1);
            counts[b] += 1;
        }
        for b in 0..bins {
            let lo = -PI / 2.0 + PI * b as f64 / bins as f64;
            let hi = -PI / 2.0 + PI * (b + 1) as f64 / bins as f64;
            let p = (hi.sin() - lo.sin()) / 2.0;
            let expected = n as f64 * p;
            let sigma = (n as f64 * p * (1.0 - p)).sqrt();
            assert!(
                (counts[b] as f64 - expected).abs() <= 3.0 * sigma,
                "bin {b}: {} vs {expected} (sigma {sigma})",
                counts[b]
            );
        }
    }

    #[test]
    fn bilinear_identities() {
        let img = ImageBuffer::from_fn(4, 3, 1, |_, x, y| (x as f32 + y as f32 * 4.0) / 16.0);
        for y in 0..3 {
            for x in 0..4 {
                let v = bilinear_sample(&img, x as f64, y as f64);
                assert!((v[0] - img.get(0, x, y) as f64).abs() < 1e-12);
            }
        }
        let flat = ImageBuffer::from_fn(5, 4, 3, |_, _, _| 0.25);
        for &(x, y) in &[(0.3, 0.7), (4.9, -0.4), (2.5, 3.5), (-0.49, 0.0)] {
            for v in bilinear_sample(&flat, x, y) {
                assert!((v - 0.25).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn bilinear_hand_midpoint() {
        let img = ImageBuffer::new(2, 1, 1, vec![0.0, 1.0]).unwrap();
        let v = bilinear_sample(&img, 0.5, 0.0);
        assert!((v[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn bilinear_bounded_by_neighbors() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(7);
        let img = ImageBuffer::from_fn(9, 6, 1, |_, _, _| rng.gen::<f32>());
        for _ in 0..500 {
            let x = rng.gen::<f64>() * 10.0 - 0.5;
            let y = rng.gen::<f64>() * 7.0 - 0.5;
            let v = bilinear_sample(&img, x, y)[0];
            let x0 = wrap_index(x.floor() as i64, 9);
            let x1 = wrap_index(x.floor() as i64 + 1, 9);
            let y0 = (y.floor() as i64).clamp(0, 5) as usize;
            let y1 = (y.floor() as i64 + 1).clamp(0, 5) as usize;
            let vals = [
                img.get(0, x0, y0),
                img.get(0, x1, y0),
                img.get(0, x0, y1),
                img.get(0, x1, y1),
            ];
            let lo = vals.iter().cloned().fold(f32::INFINITY, f32::min) as f64;
            let hi = vals.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
            assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
        }
    }

    #[test]
    fn cpp_forward_fixed_points() {
        let o = cpp_forward(SphereDir::new(0.0, 0.0));
        assert_eq!((o.x, o.y), (0.0, 0.0));
        for &lon in &[-2.0, -0.5, 0.25, 3.0] {
            let p = cpp_forward(SphereDir::new(0.0, lon));
            assert!((p.x - (3.0 / PI).sqrt() * lon).abs() < 1e-12);
            assert!(p.y.abs() < 1e-12);
        }
    }

    #[test]
    fn cpp_equal_area_jacobian() {
        // Finite-difference area scale divided by cos(lat) must be constant.
        let h = 1e-5;
        let lon = 0.3;
        let mut scales = Vec::new();
        for k in 0..50 {
            let lat = -1.45 + 2.9 * k as f64 / 49.0;
            let dx_dlon = (cpp_forward(SphereDir::new(lat, lon + h)).x
                - cpp_forward(SphereDir::new(lat, lon - h)).x)
                / (2.0 * h);
            let dy_dlat = (cpp_forward(SphereDir::new(lat + h, lon)).y
                - cpp_forward(SphereDir::new(lat - h, lon)).y)
                / (2.0 * h);
            let dx_dlat = (cpp_forward(SphereDir::new(lat + h, lon)).x
                - cpp_forward(SphereDir::new(lat - h, lon)).x)
                / (2.0 * h);
            let dy_dlon = (cpp_forward(SphereDir::new(lat, lon + h)).y
                - cpp_forward(SphereDir::new(lat, lon - h)).y)
                / (2.0 * h);
            let det = dx_dlon * dy_dlat - dx_dlat * dy_dlon;
            scales.push(det / lat.cos());
        }
        let first = scales[0];
        for s in &scales {
            assert!((s - first).abs() < 1e-6, "area scale drifted: {s} vs {first}");
        }
    }

    #[test]
    fn cpp_inverse_round_trip() {
        for &(lat, lon) in &[(0.0, 0.0), (0.7, -2.1), (-1.2, 2.9), (1.5, 0.3)] {
            let p = cpp_forward(SphereDir::new(lat, lon));
            let d = cpp_inverse(p).unwrap();
            assert!((d.lat - lat).abs() < 1e-9);
            assert!((d.lon - lon).abs() < 1e-9);
        }
        // Just past the equatorial half-width sqrt(3*pi) ~ 3.07.
        assert!(cpp_inverse(PlanePoint { x: 3.2, y: 0.0 }).is_none());
    }

    #[test]
    fn cpp_resample_constant_and_mask_fraction() {
        let img = ImageBuffer::from_fn(128, 64, 1, |_, _, _| 0.6);
        let (out, mask) = cpp_resample(&img, 128, 64, Interpolation::Bilinear).unwrap();
        let valid = mask.iter().filter(|&&m| m).count();
        for (i, &m) in mask.iter().enumerate() {
            if m {
                assert!((out.data()[i] - 0.6).abs() < 1e-6);
            }
        }
        let frac = valid as f64 / mask.len() as f64;
        assert!((frac - 2.0 / 3.0).abs() < 0.01, "footprint fraction {frac}");
        let (_, mask_b) = cpp_resample(&img, 200, 100, Interpolation::Bilinear).unwrap();
        let frac_b = mask_b.iter().filter(|&&m| m).count() as f64 / mask_b.len() as f64;
        assert!((frac_b - frac).abs() < 0.01, "fraction unstable: {frac} vs {frac_b}");
    }

    #[test]
    fn cpp_resample_rejects_zero_dims() {
        let img = ImageBuffer::zeros(8, 4, 1);
        assert!(cpp_resample(&img, 0, 4, Interpolation::Bilinear).is_err());
    }
}
