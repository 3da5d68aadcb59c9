//! Planar image buffers, PNG/PNM file I/O, luminance conversion, and the
//! non-overlapping patch grid with per-patch relative-position vectors.

use std::io::Read;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("file not found: {0}")]
    Missing(PathBuf),
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("truncated or corrupt image data: {0}")]
    Truncated(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("unsupported channel count {0} (expected 1 or 3)")]
    BadChannels(usize),
    #[error("patch size {patch} does not divide image dimensions {width}x{height}")]
    NonDivisible {
        patch: usize,
        width: usize,
        height: usize,
    },
    #[error("invalid image buffer: {0}")]
    InvalidBuffer(String),
}

/// Planar pixel container. Values live in `[0, 1]`; the layout is
/// channel-planar, row-major within each plane: `data[c*w*h + y*w + x]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl ImageBuffer {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<f32>,
    ) -> Result<Self, ImageError> {
        if channels != 1 && channels != 3 {
            return Err(ImageError::BadChannels(channels));
        }
        if data.len() != width * height * channels {
            return Err(ImageError::InvalidBuffer(format!(
                "data length {} != {}x{}x{}",
                data.len(),
                width,
                height,
                channels
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(ImageError::InvalidBuffer(format!(
                "pixel value {v} outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    /// Builds a buffer by evaluating `f(channel, x, y)`, clamping to `[0, 1]`.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, x, y).clamp(0.0, 1.0));
                }
            }
        }
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.width * self.height;
        &mut self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, x: usize, y: usize) -> f32 {
        self.data[c * self.width * self.height + y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, x: usize, y: usize, v: f32) {
        self.data[c * self.width * self.height + y * self.width + x] = v;
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.channels == other.channels
    }

    /// Converts to a single luminance plane. Three-channel input uses the
    /// BT.601 weights 0.299/0.587/0.114; single-channel input is returned
    /// unchanged.
    pub fn to_luma(&self) -> ImageBuffer {
        if self.channels == 1 {
            return self.clone();
        }
        let n = self.width * self.height;
        let (r, g, b) = (self.plane(0), self.plane(1), self.plane(2));
        let mut data = Vec::with_capacity(n);
        for i in 0..n {
            data.push(0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i]);
        }
        ImageBuffer {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }
}

/// One tile of the non-overlapping patch grid.
#[derive(Clone, Debug)]
pub struct Patch {
    /// Patch pixels, same channel count as the source image.
    pub pixels: ImageBuffer,
    /// Offset of the patch center from the image center, in pixels.
    pub position: [f64; 2],
    /// (row, col) in the grid.
    pub grid_index: (usize, usize),
}

/// All patches of one image in row-major grid order.
#[derive(Clone, Debug)]
pub struct PatchSet {
    pub patches: Vec<Patch>,
    pub source_dims: (usize, usize),
    pub grid: (usize, usize),
    pub patch_size: usize,
}

impl PatchSet {
    /// Stitches the patches back into the source layout. Exact inverse of
    /// [`extract_patch_grid`].
    pub fn assemble(&self) -> Result<ImageBuffer, ImageError> {
        let tiles: Vec<&ImageBuffer> = self.patches.iter().map(|p| &p.pixels).collect();
        assemble_tiles(&tiles, self.grid)
    }
}

/// Splits `img` into the `(width/patch_size) x (height/patch_size)` grid of
/// non-overlapping patches. Each patch records the pixel offset of its center
/// from the image center.
pub fn extract_patch_grid(img: &ImageBuffer, patch_size: usize) -> Result<PatchSet, ImageError> {
    let (w, h) = (img.width, img.height);
    if patch_size == 0 || w % patch_size != 0 || h % patch_size != 0 {
        return Err(ImageError::NonDivisible {
            patch: patch_size,
            width: w,
            height: h,
        });
    }
    let cols = w / patch_size;
    let rows = h / patch_size;
    let half = patch_size as f64 / 2.0;
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let mut patches = Vec::with_capacity(rows * cols);
    for row in 0..rows {
        for col in 0..cols {
            let x0 = col * patch_size;
            let y0 = row * patch_size;
            let mut data = Vec::with_capacity(patch_size * patch_size * img.channels);
            for c in 0..img.channels {
                let plane = img.plane(c);
                for y in 0..patch_size {
                    let start = (y0 + y) * w + x0;
                    data.extend_from_slice(&plane[start..start + patch_size]);
                }
            }
            patches.push(Patch {
                pixels: ImageBuffer {
                    width: patch_size,
                    height: patch_size,
                    channels: img.channels,
                    data,
                },
                position: [
                    x0 as f64 + half - cx,
                    y0 as f64 + half - cy,
                ],
                grid_index: (row, col),
            });
        }
    }
    Ok(PatchSet {
        patches,
        source_dims: (w, h),
        grid: (rows, cols),
        patch_size,
    })
}

/// Stitches row-major tiles of identical size into one image.
pub fn assemble_tiles(
    tiles: &[&ImageBuffer],
    grid: (usize, usize),
) -> Result<ImageBuffer, ImageError> {
    let (rows, cols) = grid;
    if tiles.is_empty() || tiles.len() != rows * cols {
        return Err(ImageError::InvalidBuffer(format!(
            "{} tiles cannot fill a {rows}x{cols} grid",
            tiles.len()
        )));
    }
    let p = tiles[0].width;
    let channels = tiles[0].channels;
    if tiles
        .iter()
        .any(|t| t.width != p || t.height != p || t.channels != channels)
    {
        return Err(ImageError::InvalidBuffer(
            "tiles differ in size or channel count".into(),
        ));
    }
    let (w, h) = (cols * p, rows * p);
    let mut out = ImageBuffer::zeros(w, h, channels);
    for (i, tile) in tiles.iter().enumerate() {
        let (row, col) = (i / cols, i % cols);
        for c in 0..channels {
            let src = tile.plane(c);
            let dst = out.plane_mut(c);
            for y in 0..p {
                let s = y * p;
                let d = (row * p + y) * w + col * p;
                dst[d..d + p].copy_from_slice(&src[s..s + p]);
            }
        }
    }
    Ok(out)
}

/// Loads an 8- or 16-bit PNG, or a binary PPM (P6) / PGM (P5), scaling
/// integer samples to `[0, 1]`.
pub fn load_image(path: &Path) -> Result<ImageBuffer, ImageError> {
    if !path.exists() {
        return Err(ImageError::Missing(path.to_path_buf()));
    }
    let reader = image::ImageReader::open(path)?
        .with_guessed_format()
        .map_err(|e| ImageError::Truncated(e.to_string()))?;
    match reader.format() {
        Some(image::ImageFormat::Png) | Some(image::ImageFormat::Pnm) => {}
        Some(other) => {
            return Err(ImageError::UnsupportedFormat(format!("{other:?}")));
        }
        None => {
            return Err(ImageError::UnsupportedFormat(
                "unrecognized magic bytes".into(),
            ));
        }
    }
    let img = reader.decode().map_err(|e| match e {
        image::ImageError::Unsupported(u) => ImageError::UnsupportedFormat(u.to_string()),
        other => ImageError::Truncated(other.to_string()),
    })?;
    dynamic_to_planar(img)
}

fn dynamic_to_planar(img: image::DynamicImage) -> Result<ImageBuffer, ImageError> {
    use image::DynamicImage::*;
    let width = img.width() as usize;
    let height = img.height() as usize;
    let n = width * height;
    let (channels, data) = match img {
        ImageLuma8(buf) => {
            let data: Vec<f32> = buf.as_raw().iter().map(|&v| v as f32 / 255.0).collect();
            (1, data)
        }
        ImageLuma16(buf) => {
            let data: Vec<f32> = buf.as_raw().iter().map(|&v| v as f32 / 65535.0).collect();
            (1, data)
        }
        // Interleaved RGB -> planar.
        ImageRgb8(buf) => {
            let raw = buf.as_raw();
            let mut data = vec![0.0f32; 3 * n];
            for i in 0..n {
                for c in 0..3 {
                    data[c * n + i] = raw[3 * i + c] as f32 / 255.0;
                }
            }
            (3, data)
        }
        ImageRgb16(buf) => {
            let raw = buf.as_raw();
            let mut data = vec![0.0f32; 3 * n];
            for i in 0..n {
                for c in 0..3 {
                    data[c * n + i] = raw[3 * i + c] as f32 / 65535.0;
                }
            }
            (3, data)
        }
        // Alpha is dropped; quality metrics have no use for it.
        other => {
            let buf = other.to_rgb8();
            let raw = buf.as_raw();
            let mut data = vec![0.0f32; 3 * n];
            for i in 0..n {
                for c in 0..3 {
                    data[c * n + i] = raw[3 * i + c] as f32 / 255.0;
                }
            }
            (3, data)
        }
    };
    ImageBuffer::new(width, height, channels, data)
}

/// Writes `img` as an 8-bit PNG (grayscale or RGB by channel count).
pub fn save_image(img: &ImageBuffer, path: &Path) -> Result<(), ImageError> {
    let n = img.width * img.height;
    let quantize = |v: f32| (v * 255.0).round().clamp(0.0, 255.0) as u8;
    let bytes: Vec<u8> = match img.channels {
        1 => img.data.iter().map(|&v| quantize(v)).collect(),
        3 => {
            let mut out = vec![0u8; 3 * n];
            for c in 0..3 {
                let plane = img.plane(c);
                for i in 0..n {
                    out[3 * i + c] = quantize(plane[i]);
                }
            }
            out
        }
        c => return Err(ImageError::BadChannels(c)),
    };
    let color = if img.channels == 1 {
        image::ExtendedColorType::L8
    } else {
        image::ExtendedColorType::Rgb8
    };
    let file = std::fs::File::create(path)?;
    let writer = std::io::BufWriter::new(file);
    let encoder = image::codecs::png::PngEncoder::new(writer);
    image::ImageEncoder::write_image(
        encoder,
        &bytes,
        img.width as u32,
        img.height as u32,
        color,
    )
    .map_err(|e| ImageError::Truncated(e.to_string()))?;
    Ok(())
}

/// Reads a binary PGM/PPM from an open reader. Exposed for tests and tools
/// that hold raw bytes rather than paths.
pub fn load_pnm_bytes(bytes: &[u8]) -> Result<ImageBuffer, ImageError> {
    let mut reader = std::io::Cursor::new(bytes);
    let mut buf = Vec::new();
    reader.read_to_end(&mut buf)?;
    let img = image::load_from_memory_with_format(&buf, image::ImageFormat::Pnm)
        .map_err(|e| ImageError::Truncated(e.to_string()))?;
    dynamic_to_planar(img)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmpdir() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn white_png_loads_as_ones() {
        let dir = tmpdir();
        let path = dir.path().join("white.png");
        let img = ImageBuffer::from_fn(2, 2, 3, |_, _, _| 1.0);
        save_image(&img, &path).unwrap();
        let back = load_image(&path).unwrap();
        assert!(back.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn black_ppm_loads_as_zeros() {
        let dir = tmpdir();
        let path = dir.path().join("black.ppm");
        let mut bytes = b"P6\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0u8; 12]);
        std::fs::write(&path, bytes).unwrap();
        let img = load_image(&path).unwrap();
        assert_eq!(img.channels(), 3);
        assert!(img.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn eight_bit_scaling() {
        let dir = tmpdir();
        let path = dir.path().join("mid.png");
        let img = ImageBuffer::new(1, 1, 1, vec![128.0 / 255.0]).unwrap();
        save_image(&img, &path).unwrap();
        let back = load_image(&path).unwrap();
        assert!((back.data()[0] - 128.0 / 255.0).abs() < 1e-7);
        assert!((back.data()[0] - 0.50196).abs() < 1e-4);
    }

    #[test]
    fn round_trip_error_bounded_by_quantization() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(11);
        let img = ImageBuffer::from_fn(17, 9, 3, |_, _, _| rng.gen::<f32>());
        let dir = tmpdir();
        let path = dir.path().join("rt.png");
        save_image(&img, &path).unwrap();
        let back = load_image(&path).unwrap();
        let max_diff = img
            .data()
            .iter()
            .zip(back.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(max_diff <= 1.0 / 255.0 + 1e-6, "max diff {max_diff}");
    }

    #[test]
    fn save_zeros_round_trip() {
        let dir = tmpdir();
        let path = dir.path().join("z.png");
        let img = ImageBuffer::zeros(4, 3, 1);
        save_image(&img, &path).unwrap();
        assert_eq!(load_image(&path).unwrap(), img);
    }

    #[test]
    fn save_to_unwritable_path_is_io_error() {
        let img = ImageBuffer::zeros(2, 2, 1);
        let err = save_image(&img, Path::new("/nonexistent-dir/x.png")).unwrap_err();
        assert!(matches!(err, ImageError::Io(_)));
    }

    #[test]
    fn missing_file_is_distinct_error() {
        let err = load_image(Path::new("/no/such/file.png")).unwrap_err();
        assert!(matches!(err, ImageError::Missing(_)));
    }

    #[test]
    fn truncated_png_rejected() {
        let dir = tmpdir();
        let path = dir.path().join("trunc.png");
        let img = ImageBuffer::zeros(16, 16, 3);
        save_image(&img, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        let err = load_image(&path).unwrap_err();
        assert!(matches!(err, ImageError::Truncated(_)));
    }

    #[test]
    fn unknown_format_rejected() {
        let dir = tmpdir();
        let path = dir.path().join("photo.jpg");
        // JPEG magic bytes; the codec itself is not compiled in.
        std::fs::write(&path, [0xFF, 0xD8, 0xFF, 0xE0, 0x00, 0x10]).unwrap();
        let err = load_image(&path).unwrap_err();
        assert!(matches!(err, ImageError::UnsupportedFormat(_)));
    }

    #[test]
    fn luma_identity_for_single_channel() {
        let img = ImageBuffer::from_fn(3, 2, 1, |_, x, y| (x + y) as f32 / 8.0);
        assert_eq!(img.to_luma(), img);
    }

    #[test]
    fn luma_weights() {
        let white = ImageBuffer::from_fn(1, 1, 3, |_, _, _| 1.0);
        assert!((white.to_luma().data()[0] - 1.0).abs() < 1e-6);
        let red = ImageBuffer::from_fn(1, 1, 3, |c, _, _| if c == 0 { 1.0 } else { 0.0 });
        assert!((red.to_luma().data()[0] - 0.299).abs() < 1e-6);
    }

    #[test]
    fn patch_grid_counts_and_positions() {
        let img = ImageBuffer::zeros(2048, 1024, 1);
        let set = extract_patch_grid(&img, 256).unwrap();
        assert_eq!(set.patches.len(), 32);
        assert_eq!(set.grid, (4, 8));
        let first = &set.patches[0];
        assert_eq!(first.grid_index, (0, 0));
        assert_eq!(first.position, [-896.0, -384.0]);
    }

    #[test]
    fn single_patch_centered() {
        let img = ImageBuffer::zeros(32, 16, 1);
        let set = extract_patch_grid(&img, 32).err().unwrap();
        assert!(matches!(set, ImageError::NonDivisible { .. }));
        let img = ImageBuffer::zeros(32, 32, 1);
        let set = extract_patch_grid(&img, 32).unwrap();
        assert_eq!(set.patches.len(), 1);
        assert_eq!(set.patches[0].position, [0.0, 0.0]);
    }

    #[test]
    fn positions_sum_to_zero() {
        let img = ImageBuffer::zeros(96, 64, 3);
        let set = extract_patch_grid(&img, 16).unwrap();
        let sum = set.patches.iter().fold([0.0, 0.0], |acc, p| {
            [acc[0] + p.position[0], acc[1] + p.position[1]]
        });
        assert_eq!(sum, [0.0, 0.0]);
    }

    #[test]
    fn reassembly_is_bit_exact() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(3);
        let img = ImageBuffer::from_fn(48, 32, 3, |_, _, _| rng.gen::<f32>());
        let set = extract_patch_grid(&img, 16).unwrap();
        assert_eq!(set.assemble().unwrap(), img);
    }
}
