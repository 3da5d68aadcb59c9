//! Synthetic distortion generation and dataset construction: a blockwise
//! DCT-quantization distortion with codec-like artifacts, Gaussian blur,
//! seeded additive noise, a deterministic MOS oracle, procedural reference
//! scenes, and CSV manifest emission.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use thiserror::Error;

use crate::metrics::{ms_ssim, MetricError};
use crate::raster::{load_image, save_image, ImageBuffer, ImageError};

#[derive(Debug, Error)]
pub enum DistortionError {
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DistortionKind {
    /// Blockwise 8x8 DCT with uniform quantization, the blocky-codec stand-in.
    Jpegish,
    /// Separable Gaussian blur, sigma = strength.
    Blur,
    /// Additive Gaussian noise, sigma = strength, seeded.
    Noise,
}

impl DistortionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DistortionKind::Jpegish => "jpegish",
            DistortionKind::Blur => "blur",
            DistortionKind::Noise => "noise",
        }
    }

    pub fn all() -> [DistortionKind; 3] {
        [
            DistortionKind::Jpegish,
            DistortionKind::Blur,
            DistortionKind::Noise,
        ]
    }
}

impl std::str::FromStr for DistortionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jpegish" => Ok(DistortionKind::Jpegish),
            "blur" => Ok(DistortionKind::Blur),
            "noise" => Ok(DistortionKind::Noise),
            other => Err(format!("unknown distortion kind '{other}'")),
        }
    }
}

/// One distortion to apply; strength 0 is the identity for every kind.
#[derive(Clone, Copy, Debug)]
pub struct DistortionSpec {
    pub kind: DistortionKind,
    pub strength: f64,
    /// Only the noise kind consumes the seed.
    pub seed: u64,
}

/// Quantization step per unit strength for the jpegish kind; strength 8
/// yields roughly 21 dB of blocky degradation on [0, 1] data.
const JPEGISH_STEP: f64 = 0.04;

pub fn distort(img: &ImageBuffer, spec: &DistortionSpec) -> ImageBuffer {
    if spec.strength <= 0.0 {
        return img.clone();
    }
    match spec.kind {
        DistortionKind::Jpegish => jpegish(img, spec.strength * JPEGISH_STEP),
        DistortionKind::Blur => gaussian_blur(img, spec.strength),
        DistortionKind::Noise => additive_noise(img, spec.strength, spec.seed),
    }
}

/// Orthonormal 8-point DCT-II basis, row k = analysis vector for frequency k.
fn dct8_basis() -> [[f64; 8]; 8] {
    let mut basis = [[0.0f64; 8]; 8];
    for (k, row) in basis.iter_mut().enumerate() {
        let alpha = if k == 0 {
            (1.0f64 / 8.0).sqrt()
        } else {
            (2.0f64 / 8.0).sqrt()
        };
        for (n, v) in row.iter_mut().enumerate() {
            *v = alpha
                * (std::f64::consts::PI * (2.0 * n as f64 + 1.0) * k as f64 / 16.0).cos();
        }
    }
    basis
}

fn jpegish(img: &ImageBuffer, step: f64) -> ImageBuffer {
    let basis = dct8_basis();
    let (w, h) = (img.width(), img.height());
    let mut out = img.clone();
    for c in 0..img.channels() {
        let src = img.plane(c);
        let dst = out.plane_mut(c);
        for by in (0..h).step_by(8) {
            for bx in (0..w).step_by(8) {
                // Edge-replicated 8x8 block.
                let mut block = [[0.0f64; 8]; 8];
                for (y, row) in block.iter_mut().enumerate() {
                    let sy = (by + y).min(h - 1);
                    for (x, v) in row.iter_mut().enumerate() {
                        let sx = (bx + x).min(w - 1);
                        *v = src[sy * w + sx] as f64;
                    }
                }
                let mut coeffs = dct2d(&block, &basis);
                for row in coeffs.iter_mut() {
                    for v in row.iter_mut() {
                        *v = (*v / step).round() * step;
                    }
                }
                let rec = idct2d(&coeffs, &basis);
                for (y, row) in rec.iter().enumerate() {
                    if by + y >= h {
                        break;
                    }
                    for (x, &v) in row.iter().enumerate() {
                        if bx + x >= w {
                            break;
                        }
                        dst[(by + y) * w + bx + x] = v.clamp(0.0, 1.0) as f32;
                    }
                }
            }
        }
    }
    out
}

fn dct2d(block: &[[f64; 8]; 8], basis: &[[f64; 8]; 8]) -> [[f64; 8]; 8] {
    let mut tmp = [[0.0f64; 8]; 8];
    // Rows.
    for y in 0..8 {
        for k in 0..8 {
            tmp[y][k] = (0..8).map(|n| basis[k][n] * block[y][n]).sum();
        }
    }
    // Columns.
    let mut out = [[0.0f64; 8]; 8];
    for k in 0..8 {
        for x in 0..8 {
            out[k][x] = (0..8).map(|n| basis[k][n] * tmp[n][x]).sum();
        }
    }
    out
}

fn idct2d(coeffs: &[[f64; 8]; 8], basis: &[[f64; 8]; 8]) -> [[f64; 8]; 8] {
    let mut tmp = [[0.0f64; 8]; 8];
    for x in 0..8 {
        for n in 0..8 {
            tmp[n][x] = (0..8).map(|k| basis[k][n] * coeffs[k][x]).sum();
        }
    }
    let mut out = [[0.0f64; 8]; 8];
    for y in 0..8 {
        for n in 0..8 {
            out[y][n] = (0..8).map(|k| basis[k][n] * tmp[y][k]).sum();
        }
    }
    out
}

/// Separable Gaussian blur with edge replication; kernel radius 3 sigma.
pub fn gaussian_blur(img: &ImageBuffer, sigma: f64) -> ImageBuffer {
    if sigma <= 0.0 {
        return img.clone();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel = Vec::with_capacity((2 * radius + 1) as usize);
    for i in -radius..=radius {
        kernel.push((-(i * i) as f64 / (2.0 * sigma * sigma)).exp());
    }
    let total: f64 = kernel.iter().sum();
    for v in &mut kernel {
        *v /= total;
    }
    let (w, h) = (img.width() as isize, img.height() as isize);
    let mut out = img.clone();
    for c in 0..img.channels() {
        let src = img.plane(c);
        let mut horiz = vec![0.0f64; (w * h) as usize];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (t, &k) in kernel.iter().enumerate() {
                    let sx = (x + t as isize - radius).clamp(0, w - 1);
                    acc += k * src[(y * w + sx) as usize] as f64;
                }
                horiz[(y * w + x) as usize] = acc;
            }
        }
        let dst = out.plane_mut(c);
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (t, &k) in kernel.iter().enumerate() {
                    let sy = (y + t as isize - radius).clamp(0, h - 1);
                    acc += k * horiz[(sy * w + x) as usize];
                }
                dst[(y * w + x) as usize] = (acc as f32).clamp(0.0, 1.0);
            }
        }
    }
    out
}

fn additive_noise(img: &ImageBuffer, sigma: f64, seed: u64) -> ImageBuffer {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let normal = Normal::new(0.0f64, sigma).expect("sigma checked positive");
    let mut out = img.clone();
    for v in out.data_mut() {
        *v = (*v + normal.sample(&mut rng) as f32).clamp(0.0, 1.0);
    }
    out
}

/// Deterministic perceptual-quality oracle on the 0-100 opinion scale:
/// scaled multi-scale structural similarity against the reference.
pub fn synth_mos(reference: &ImageBuffer, distorted: &ImageBuffer) -> Result<f64, DistortionError> {
    let v = ms_ssim(reference, distorted)?.value;
    Ok(100.0 * v.clamp(0.0, 1.0))
}

/// Procedural reference scene: smooth shading, band-limited texture, and a
/// few soft shapes, with mild per-channel variation. Deterministic per seed.
pub fn synth_scene(seed: u64, width: usize, height: usize, channels: usize) -> ImageBuffer {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let (wf, hf) = (width as f64, height as f64);

    // Low-frequency shading: two oriented sinusoids plus a linear ramp.
    let waves: Vec<(f64, f64, f64, f64)> = (0..2)
        .map(|_| {
            (
                rng.gen_range(1.0..3.5) * std::f64::consts::TAU / wf,
                rng.gen_range(0.5..2.5) * std::f64::consts::TAU / hf,
                rng.gen_range(0.0..std::f64::consts::TAU),
                rng.gen_range(0.08..0.18),
            )
        })
        .collect();
    let ramp = (
        rng.gen_range(-0.15..0.15) / wf,
        rng.gen_range(-0.15..0.15) / hf,
    );

    // Soft shapes.
    struct Shape {
        cx: f64,
        cy: f64,
        rx: f64,
        ry: f64,
        gain: f64,
    }
    let shapes: Vec<Shape> = (0..rng.gen_range(5..9))
        .map(|_| Shape {
            cx: rng.gen_range(0.0..wf),
            cy: rng.gen_range(0.0..hf),
            rx: rng.gen_range(wf / 24.0..wf / 6.0),
            ry: rng.gen_range(hf / 16.0..hf / 4.0),
            gain: rng.gen_range(0.12..0.3) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 },
        })
        .collect();

    let mut base = ImageBuffer::from_fn(width, height, 1, |_, x, y| {
        let (xf, yf) = (x as f64, y as f64);
        let mut v = 0.5 + ramp.0 * xf + ramp.1 * yf;
        for &(ax, ay, phase, amp) in &waves {
            v += amp * (ax * xf + ay * yf + phase).sin();
        }
        for s in &shapes {
            let d = ((xf - s.cx) / s.rx).powi(2) + ((yf - s.cy) / s.ry).powi(2);
            if d < 1.0 {
                // Smooth falloff toward the shape boundary.
                v += s.gain * (1.0 - d) * (1.0 - d);
            }
        }
        v as f32
    });

    // Band-limited texture: three noise bands from coarse to pixel-level
    // grain so that both blur and block quantization bite.
    let coarse_sigma = rng.gen_range(1.4..2.8);
    let coarse_seed: u64 = rng.gen();
    let mid_seed: u64 = rng.gen();
    let fine_seed: u64 = rng.gen();
    let coarse = gaussian_blur(&noise_plane(coarse_seed, width, height), coarse_sigma);
    let mid = gaussian_blur(&noise_plane(mid_seed, width, height), 0.7);
    let fine = noise_plane(fine_seed, width, height);
    {
        let n = width * height;
        let b = base.data_mut();
        for i in 0..n {
            let texture = 0.4 * (coarse.data()[i] - 0.5)
                + 0.3 * (mid.data()[i] - 0.5)
                + 0.1 * (fine.data()[i] - 0.5);
            b[i] = (b[i] + texture).clamp(0.02, 0.98);
        }
    }
    if channels == 1 {
        return base;
    }
    // Correlated colour: shared luminance with gentle per-channel tints.
    let tints: Vec<(f64, f64)> = (0..channels)
        .map(|_| (rng.gen_range(0.85..1.15), rng.gen_range(-0.06..0.06)))
        .collect();
    ImageBuffer::from_fn(width, height, channels, |c, x, y| {
        let v = base.get(0, x, y) as f64;
        let (gain, offset) = tints[c];
        ((v - 0.5) * gain + 0.5 + offset).clamp(0.02, 0.98) as f32
    })
}

fn noise_plane(seed: u64, width: usize, height: usize) -> ImageBuffer {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    ImageBuffer::from_fn(width, height, 1, |_, _, _| rng.gen())
}

/// FNV-1a, used to derive stable per-scene noise seeds.
fn stable_hash(s: &str) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// One manifest row produced by [`build_dataset`].
#[derive(Clone, Debug)]
pub struct ManifestRow {
    pub ref_path: String,
    pub dist_path: String,
    pub mos: f64,
    pub scene_id: String,
    pub codec: String,
    pub strength: f64,
}

/// Applies every spec to every reference, writes the distorted images and
/// re-encoded references into `out_dir`, and emits `manifest.csv` there.
/// Deterministic: rows are ordered by (reference, spec) and noise seeds are
/// derived from the spec seed and the scene id.
pub fn build_dataset(
    refs: &[PathBuf],
    specs: &[DistortionSpec],
    out_dir: &Path,
) -> Result<PathBuf, DistortionError> {
    if refs.is_empty() || specs.is_empty() {
        return Err(DistortionError::Dataset(
            "need at least one reference and one spec".into(),
        ));
    }
    std::fs::create_dir_all(out_dir)?;
    let mut sorted_refs = refs.to_vec();
    sorted_refs.sort();

    struct Job {
        scene_id: String,
        ref_name: String,
        ref_img: ImageBuffer,
        spec: DistortionSpec,
    }
    let mut jobs = Vec::with_capacity(sorted_refs.len() * specs.len());
    for path in &sorted_refs {
        let scene_id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| DistortionError::Dataset(format!("bad ref path {path:?}")))?
            .to_string();
        let img = load_image(path)?;
        let ref_name = format!("{scene_id}__ref.png");
        save_image(&img, &out_dir.join(&ref_name))?;
        for spec in specs {
            jobs.push(Job {
                scene_id: scene_id.clone(),
                ref_name: ref_name.clone(),
                ref_img: img.clone(),
                spec: DistortionSpec {
                    seed: spec.seed ^ stable_hash(&scene_id),
                    ..*spec
                },
            });
        }
    }

    let rows: Vec<ManifestRow> = jobs
        .par_iter()
        .map(|job| {
            let distorted = distort(&job.ref_img, &job.spec);
            let mos = synth_mos(&job.ref_img, &distorted)?;
            let strength_tag = format!("{}", job.spec.strength).replace('.', "p");
            let dist_name = format!(
                "{}__{}_{}.png",
                job.scene_id,
                job.spec.kind.as_str(),
                strength_tag
            );
            save_image(&distorted, &out_dir.join(&dist_name))?;
            Ok(ManifestRow {
                ref_path: job.ref_name.clone(),
                dist_path: dist_name,
                mos,
                scene_id: job.scene_id.clone(),
                codec: job.spec.kind.as_str().to_string(),
                strength: job.spec.strength,
            })
        })
        .collect::<Result<_, DistortionError>>()?;

    let manifest_path = out_dir.join("manifest.csv");
    let mut writer = csv::Writer::from_path(&manifest_path)
        .map_err(|e| DistortionError::Dataset(e.to_string()))?;
    writer
        .write_record(["ref_path", "dist_path", "mos", "scene_id", "codec", "strength"])
        .map_err(|e| DistortionError::Dataset(e.to_string()))?;
    for row in &rows {
        writer
            .write_record([
                row.ref_path.as_str(),
                row.dist_path.as_str(),
                &row.mos.to_string(),
                row.scene_id.as_str(),
                row.codec.as_str(),
                &row.strength.to_string(),
            ])
            .map_err(|e| DistortionError::Dataset(e.to_string()))?;
    }
    writer
        .flush()
        .map_err(|e| DistortionError::Dataset(e.to_string()))?;
    Ok(manifest_path)
}

/// The default strength ladder: four rungs per kind, mirroring a
/// four-rate compression sweep.
pub fn default_ladder(seed: u64) -> Vec<DistortionSpec> {
    let mut specs = Vec::with_capacity(12);
    for kind in DistortionKind::all() {
        let strengths: [f64; 4] = match kind {
            DistortionKind::Jpegish => [2.0, 6.0, 12.0, 24.0],
            DistortionKind::Blur => [1.0, 2.0, 4.0, 10.0],
            DistortionKind::Noise => [0.02, 0.05, 0.1, 0.2],
        };
        for s in strengths {
            specs.push(DistortionSpec {
                kind,
                strength: s,
                seed,
            });
        }
    }
    specs
}
