//! Logo detection by zero-normalized cross-correlation.
//!
//! For every offset `(u, v)` of the template inside the search region
//!
//! ```text
//! ncc(u, v) = Σ (I - Ī)(T - T̄) / sqrt(Σ (I - Ī)² · Σ (T - T̄)²)
//! ```
//!
//! over the template window. Because the template is mean-subtracted up front,
//! the numerator reduces to `Σ I · (T - T̄)`, which is computed for all offsets
//! at once with a 2-D FFT. Window sums and sums of squares come from integer
//! integral images, so flat windows are detected exactly.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::media::{Frame, Segment};

pub const DEFAULT_THRESHOLD: f64 = 0.7;
pub const DEFAULT_SAMPLE_STRIDE: usize = 15;
/// Windows whose per-pixel variance falls below this score 0.
pub const VARIANCE_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum XcorrError {
    #[error("template {tw}x{th} does not fit in the {rw}x{rh} search region")]
    TemplateLargerThanRegion { tw: usize, th: usize, rw: usize, rh: usize },
    #[error("logo template is constant")]
    FlatTemplate,
    #[error("search region {0:?} is not a non-empty sub-rectangle of [0,1]²")]
    BadRegion(SearchRegion),
    #[error("segment has no frames")]
    EmptySegment,
    #[error("sample stride must be positive")]
    ZeroStride,
}

/// Search window in normalized frame coordinates, `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchRegion {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl SearchRegion {
    pub const TOP_RIGHT_QUADRANT: SearchRegion = SearchRegion {
        x0: 0.5,
        y0: 0.0,
        x1: 1.0,
        y1: 0.5,
    };
    pub const FULL_FRAME: SearchRegion = SearchRegion {
        x0: 0.0,
        y0: 0.0,
        x1: 1.0,
        y1: 1.0,
    };

    fn is_valid(&self) -> bool {
        (0.0..1.0).contains(&self.x0)
            && (0.0..1.0).contains(&self.y0)
            && self.x1 > self.x0
            && self.y1 > self.y0
            && self.x1 <= 1.0
            && self.y1 <= 1.0
    }

    pub fn to_pixels(&self, width: usize, height: usize) -> PixelRect {
        let x = (self.x0 * width as f64).round() as usize;
        let y = (self.y0 * height as f64).round() as usize;
        let x_end = ((self.x1 * width as f64).round() as usize).min(width);
        let y_end = ((self.y1 * height as f64).round() as usize).min(height);
        PixelRect {
            x,
            y,
            width: x_end.saturating_sub(x),
            height: y_end.saturating_sub(y),
        }
    }
}

impl Default for SearchRegion {
    fn default() -> Self {
        SearchRegion::TOP_RIGHT_QUADRANT
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogoTemplate {
    patch: Frame,
    region: SearchRegion,
}

impl LogoTemplate {
    pub fn new(patch: Frame, region: SearchRegion) -> Result<Self, XcorrError> {
        if !region.is_valid() {
            return Err(XcorrError::BadRegion(region));
        }
        let first = patch.pixels()[0];
        if patch.pixels().iter().all(|&p| p == first) {
            return Err(XcorrError::FlatTemplate);
        }
        Ok(LogoTemplate { patch, region })
    }

    pub fn patch(&self) -> &Frame {
        &self.patch
    }

    pub fn region(&self) -> SearchRegion {
        self.region
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XcorrResult {
    pub peak_value: f64,
    /// `(x, y)` offset of the template's top-left corner within the search region.
    pub peak_location: (u32, u32),
    pub logo_present: bool,
}

/// In-place 2-D FFT over a row-major `height × width` buffer.
struct Fft2d {
    width: usize,
    height: usize,
    rows: Arc<dyn Fft<f64>>,
    cols: Arc<dyn Fft<f64>>,
    inv_rows: Arc<dyn Fft<f64>>,
    inv_cols: Arc<dyn Fft<f64>>,
}

impl Fft2d {
    fn new(width: usize, height: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2d {
            width,
            height,
            rows: planner.plan_fft_forward(width),
            cols: planner.plan_fft_forward(height),
            inv_rows: planner.plan_fft_inverse(width),
            inv_cols: planner.plan_fft_inverse(height),
        }
    }

    fn run(&self, buf: &mut [Complex<f64>], scratch: &mut Vec<Complex<f64>>, inverse: bool) {
        let (rows, cols) = if inverse {
            (&self.inv_rows, &self.inv_cols)
        } else {
            (&self.rows, &self.cols)
        };
        rows.process(buf);
        scratch.resize(buf.len(), Complex::default());
        transpose(buf, scratch, self.width, self.height);
        cols.process(scratch);
        transpose(scratch, buf, self.height, self.width);
    }
}

fn transpose(src: &[Complex<f64>], dst: &mut [Complex<f64>], width: usize, height: usize) {
    for y in 0..height {
        for x in 0..width {
            dst[x * height + y] = src[y * width + x];
        }
    }
}

/// Smallest 5-smooth integer >= n; FFT sizes with small factors only.
fn fft_size(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r.is_multiple_of(p) {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

/// A template prepared for frames of one fixed size.
pub struct NccMatcher {
    region: PixelRect,
    tw: usize,
    th: usize,
    fft: Fft2d,
    /// Conjugated spectrum of the zero-mean template, zero-padded.
    template_spectrum: Vec<Complex<f64>>,
    template_ss: f64,
    threshold: f64,
}

impl NccMatcher {
    pub fn new(template: &LogoTemplate, frame_width: usize, frame_height: usize, threshold: f64) -> Result<Self, XcorrError> {
        let region = template.region.to_pixels(frame_width, frame_height);
        let (tw, th) = (template.patch.width() as usize, template.patch.height() as usize);
        if tw > region.width || th > region.height {
            return Err(XcorrError::TemplateLargerThanRegion {
                tw,
                th,
                rw: region.width,
                rh: region.height,
            });
        }
        let (fw, fh) = (fft_size(region.width), fft_size(region.height));
        let fft = Fft2d::new(fw, fh);

        let px = template.patch.pixels();
        let mean = px.iter().map(|&p| p as f64).sum::<f64>() / px.len() as f64;
        let mut spectrum = vec![Complex::default(); fw * fh];
        let mut template_ss = 0.0;
        for y in 0..th {
            for x in 0..tw {
                let d = px[y * tw + x] as f64 - mean;
                template_ss += d * d;
                spectrum[y * fw + x] = Complex::new(d, 0.0);
            }
        }
        let mut scratch = Vec::new();
        fft.run(&mut spectrum, &mut scratch, false);
        for c in spectrum.iter_mut() {
            *c = c.conj();
        }
        Ok(NccMatcher {
            region,
            tw,
            th,
            fft,
            template_spectrum: spectrum,
            template_ss,
            threshold,
        })
    }

    pub fn region(&self) -> PixelRect {
        self.region
    }

    /// Offsets along x and y at which the template fits in the region.
    pub fn offsets(&self) -> (usize, usize) {
        (self.region.width - self.tw + 1, self.region.height - self.th + 1)
    }

    /// Scores of every valid offset, row-major over `offsets()`.
    pub fn score_map(&self, image: &Frame) -> Vec<f64> {
        let PixelRect { x: rx, y: ry, width: rw, height: rh } = self.region;
        assert!(
            rx + rw <= image.width() as usize && ry + rh <= image.height() as usize,
            "frame smaller than the matcher was built for"
        );
        let (fw, fh) = (self.fft.width, self.fft.height);

        let mut buf = vec![Complex::default(); fw * fh];
        // integral images over the region, (rw + 1) x (rh + 1)
        let iw = rw + 1;
        let mut sum = vec![0i64; iw * (rh + 1)];
        let mut sq = vec![0i64; iw * (rh + 1)];
        for y in 0..rh {
            let row = &image.row(ry + y)[rx..rx + rw];
            let (mut rs, mut rq) = (0i64, 0i64);
            for (x, &p) in row.iter().enumerate() {
                let p = p as i64;
                rs += p;
                rq += p * p;
                sum[(y + 1) * iw + x + 1] = sum[y * iw + x + 1] + rs;
                sq[(y + 1) * iw + x + 1] = sq[y * iw + x + 1] + rq;
                buf[y * fw + x] = Complex::new(p as f64, 0.0);
            }
        }

        let mut scratch = Vec::new();
        self.fft.run(&mut buf, &mut scratch, false);
        for (b, t) in buf.iter_mut().zip(&self.template_spectrum) {
            *b *= t;
        }
        self.fft.run(&mut buf, &mut scratch, true);
        let norm = (fw * fh) as f64;

        let n = (self.tw * self.th) as i64;
        let (ox, oy) = self.offsets();
        let mut scores = Vec::with_capacity(ox * oy);
        let rect = |t: &[i64], x: usize, y: usize| {
            t[(y + self.th) * iw + x + self.tw] - t[y * iw + x + self.tw] - t[(y + self.th) * iw + x] + t[y * iw + x]
        };
        for v in 0..oy {
            for u in 0..ox {
                let s = rect(&sum, u, v) as i128;
                let q = rect(&sq, u, v) as i128;
                // n² · variance, exact
                let n2var = n as i128 * q - s * s;
                let ss = n2var as f64 / n as f64;
                if n2var as f64 / (n as f64 * n as f64) < VARIANCE_EPS {
                    scores.push(0.0);
                    continue;
                }
                let num = buf[v * fw + u].re / norm;
                scores.push((num / (ss * self.template_ss).sqrt()).clamp(-1.0, 1.0));
            }
        }
        scores
    }

    pub fn match_frame(&self, image: &Frame) -> XcorrResult {
        let scores = self.score_map(image);
        let (ox, _) = self.offsets();
        // first strict maximum in row-major order: ties go to the smallest (y, x)
        let mut best = 0;
        for (i, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = i;
            }
        }
        let peak_value = scores[best];
        XcorrResult {
            peak_value,
            peak_location: ((best % ox) as u32, (best / ox) as u32),
            logo_present: peak_value >= self.threshold,
        }
    }
}

/// One-off correlation of `image` against `template` at the default threshold.
pub fn ncc(image: &Frame, template: &LogoTemplate) -> Result<XcorrResult, XcorrError> {
    let matcher = NccMatcher::new(template, image.width() as usize, image.height() as usize, DEFAULT_THRESHOLD)?;
    Ok(matcher.match_frame(image))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XcorrDecision {
    pub is_ad: bool,
    /// Local index of each sampled frame with its result.
    pub samples: Vec<(usize, XcorrResult)>,
}

impl XcorrDecision {
    pub fn logo_count(&self) -> usize {
        self.samples.iter().filter(|(_, r)| r.logo_present).count()
    }
}

/// Scores every `sample_stride`-th frame; the segment is an ad when the logo is
/// present on fewer than half of the sampled frames.
pub fn classify_segment_xcorr(
    seg: &Segment,
    template: &LogoTemplate,
    threshold: f64,
    sample_stride: usize,
) -> Result<XcorrDecision, XcorrError> {
    if sample_stride == 0 {
        return Err(XcorrError::ZeroStride);
    }
    if seg.frames().is_empty() {
        return Err(XcorrError::EmptySegment);
    }
    let matcher = NccMatcher::new(template, seg.width() as usize, seg.height() as usize, threshold)?;
    let samples: Vec<(usize, XcorrResult)> = seg
        .frames()
        .iter()
        .enumerate()
        .step_by(sample_stride)
        .map(|(i, f)| (i, matcher.match_frame(f)))
        .collect();
    let present = samples.iter().filter(|(_, r)| r.logo_present).count();
    Ok(XcorrDecision {
        is_ad: present * 2 < samples.len(),
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn textured(w: u16, h: u16, seed: u32) -> Frame {
        let mut state = seed.wrapping_mul(2654435761).max(1);
        let px = (0..w as usize * h as usize)
            .map(|_| {
                state ^= state << 13;
                state ^= state >> 17;
                state ^= state << 5;
                (state >> 24) as u8
            })
            .collect();
        Frame::new(w, h, px).unwrap()
    }

    fn paste(dst: &Frame, src: &Frame, x0: usize, y0: usize) -> Frame {
        let mut px = dst.pixels().to_vec();
        for y in 0..src.height() as usize {
            for x in 0..src.width() as usize {
                px[(y0 + y) * dst.width() as usize + x0 + x] = src.get(x, y);
            }
        }
        Frame::new(dst.width(), dst.height(), px).unwrap()
    }

    #[test]
    fn exact_copy_peaks_at_one() {
        let logo = textured(12, 10, 7);
        let img = paste(&textured(40, 30, 3), &logo, 5, 3);
        let t = LogoTemplate::new(logo, SearchRegion::FULL_FRAME).unwrap();
        let r = ncc(&img, &t).unwrap();
        assert!((r.peak_value - 1.0).abs() < 1e-6, "{}", r.peak_value);
        assert_eq!(r.peak_location, (5, 3));
        assert!(r.logo_present);
    }

    #[test]
    fn flat_image_scores_zero() {
        let t = LogoTemplate::new(textured(8, 8, 1), SearchRegion::FULL_FRAME).unwrap();
        let r = ncc(&Frame::filled(32, 32, 90).unwrap(), &t).unwrap();
        assert_eq!(r.peak_value, 0.0);
        assert_eq!(r.peak_location, (0, 0));
        assert!(!r.logo_present);
    }

    #[test]
    fn template_larger_than_region() {
        let t = LogoTemplate::new(textured(20, 8, 1), SearchRegion::TOP_RIGHT_QUADRANT).unwrap();
        assert_eq!(
            ncc(&textured(32, 32, 2), &t),
            Err(XcorrError::TemplateLargerThanRegion {
                tw: 20,
                th: 8,
                rw: 16,
                rh: 16
            })
        );
    }

    #[test]
    fn flat_template_rejected() {
        assert_eq!(
            LogoTemplate::new(Frame::filled(8, 8, 3).unwrap(), SearchRegion::FULL_FRAME),
            Err(XcorrError::FlatTemplate)
        );
    }

    #[test]
    fn region_offsets_are_relative() {
        let logo = textured(8, 8, 9);
        let img = paste(&textured(64, 48, 4), &logo, 50, 6);
        let t = LogoTemplate::new(logo, SearchRegion::TOP_RIGHT_QUADRANT).unwrap();
        let r = ncc(&img, &t).unwrap();
        assert_eq!(r.peak_location, (18, 6));
    }

    #[test]
    fn fft_sizes_are_smooth() {
        assert_eq!(fft_size(1), 1);
        assert_eq!(fft_size(7), 8);
        assert_eq!(fft_size(61), 64);
        assert_eq!(fft_size(80), 80);
        assert_eq!(fft_size(317), 320);
    }
}
