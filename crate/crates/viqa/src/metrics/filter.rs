//! Separable filtering helpers shared by the windowed metrics. All filtering
//! is "valid" mode: the output shrinks by the kernel length minus one.

/// Normalized 1-D Gaussian taps of odd length `len` with the given sigma.
pub(crate) fn gaussian_kernel(len: usize, sigma: f64) -> Vec<f64> {
    assert!(len % 2 == 1, "kernel length must be odd");
    let half = (len / 2) as isize;
    let mut k: Vec<f64> = (-half..=half)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// A grayscale plane in f64 with explicit dimensions.
#[derive(Clone, Debug)]
pub(crate) struct PlaneF64 {
    pub w: usize,
    pub h: usize,
    pub data: Vec<f64>,
}

impl PlaneF64 {
    pub fn from_luma(img: &crate::raster::ImageBuffer, scale: f64) -> Self {
        let luma = img.to_luma();
        PlaneF64 {
            w: luma.width(),
            h: luma.height(),
            data: luma.data().iter().map(|&v| v as f64 * scale).collect(),
        }
    }

    pub fn map2(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!((self.w, self.h), (other.w, other.h));
        PlaneF64 {
            w: self.w,
            h: self.h,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Separable valid-mode convolution with the same 1-D kernel on both
    /// axes.
    pub fn filter_valid(&self, kernel: &[f64]) -> Self {
        let klen = kernel.len();
        let ow = self.w + 1 - klen;
        let oh = self.h + 1 - klen;
        // Horizontal pass.
        let mut horiz = vec![0.0f64; ow * self.h];
        for y in 0..self.h {
            let row = &self.data[y * self.w..(y + 1) * self.w];
            let out = &mut horiz[y * ow..(y + 1) * ow];
            for (i, slot) in out.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (t, &k) in kernel.iter().enumerate() {
                    acc += k * row[i + t];
                }
                *slot = acc;
            }
        }
        // Vertical pass.
        let mut data = vec![0.0f64; ow * oh];
        for y in 0..oh {
            for (t, &k) in kernel.iter().enumerate() {
                let src = &horiz[(y + t) * ow..(y + t + 1) * ow];
                let dst = &mut data[y * ow..(y + 1) * ow];
                for (s, d) in src.iter().zip(dst.iter_mut()) {
                    *d += k * s;
                }
            }
        }
        PlaneF64 {
            w: ow,
            h: oh,
            data,
        }
    }

    /// 2x2 mean pooling followed by decimation; odd trailing row/column is
    /// dropped.
    pub fn downsample2(&self) -> Self {
        let ow = self.w / 2;
        let oh = self.h / 2;
        let mut data = vec![0.0f64; ow * oh];
        for y in 0..oh {
            for x in 0..ow {
                let i0 = (2 * y) * self.w + 2 * x;
                let i1 = (2 * y + 1) * self.w + 2 * x;
                data[y * ow + x] =
                    0.25 * (self.data[i0] + self.data[i0 + 1] + self.data[i1] + self.data[i1 + 1]);
            }
        }
        PlaneF64 {
            w: ow,
            h: oh,
            data,
        }
    }

    /// Plain decimation by 2 (every other sample), as used by the VIF
    /// pyramid after low-pass filtering.
    pub fn decimate2(&self) -> Self {
        let ow = self.w.div_ceil(2);
        let oh = self.h.div_ceil(2);
        let mut data = vec![0.0f64; ow * oh];
        for y in 0..oh {
            for x in 0..ow {
                data[y * ow + x] = self.data[(2 * y) * self.w + 2 * x];
            }
        }
        PlaneF64 {
            w: ow,
            h: oh,
            data,
        }
    }
}
