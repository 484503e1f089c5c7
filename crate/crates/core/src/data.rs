//! Real datasets, built-in toy generators and the learnable synthetic set.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::models::{Batch, InputShape};
use crate::rng::{self, Prng};

/// Examples in row-major `[rows, dim]` order with one label per row.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Split {
    pub pixels: Vec<f64>,
    pub labels: Vec<usize>,
}

impl Split {
    pub fn new(pixels: Vec<f64>, labels: Vec<usize>) -> Self {
        Self { pixels, labels }
    }

    pub fn rows(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn batch(&self) -> Batch<'_> {
        Batch::new(&self.pixels, &self.labels)
    }

    pub fn row(&self, i: usize, dim: usize) -> &[f64] {
        &self.pixels[i * dim..(i + 1) * dim]
    }

    /// Rows selected by `indices`, in that order.
    pub fn select(&self, indices: &[usize], dim: usize) -> Split {
        let mut out = Split::default();
        for &i in indices {
            out.pixels.extend_from_slice(self.row(i, dim));
            out.labels.push(self.labels[i]);
        }
        out
    }

    pub fn class_counts(&self, classes: usize) -> Vec<usize> {
        let mut counts = vec![0; classes];
        for &l in &self.labels {
            if l < classes {
                counts[l] += 1;
            }
        }
        counts
    }
}

/// Per-channel affine normalisation fitted on the training split.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalization {
    pub fn fit(pixels: &[f64], shape: InputShape) -> Self {
        let plane = shape.height * shape.width;
        let dim = shape.dim();
        let rows = pixels.len().checked_div(dim).unwrap_or(0);
        let mut mean = vec![0.0; shape.channels];
        let mut std = vec![1.0; shape.channels];
        let count = (rows * plane) as f64;
        if count > 0.0 {
            for c in 0..shape.channels {
                let values = (0..rows).flat_map(|r| {
                    let start = r * dim + c * plane;
                    pixels[start..start + plane].iter()
                });
                let m = values.clone().sum::<f64>() / count;
                let var = values.map(|v| (v - m) * (v - m)).sum::<f64>() / count;
                mean[c] = m;
                std[c] = if var > 0.0 { libm::sqrt(var) } else { 1.0 };
            }
        }
        Self { mean, std }
    }

    fn channel_of(&self, i: usize, shape: InputShape) -> usize {
        (i % shape.dim()) / (shape.height * shape.width)
    }

    pub fn apply(&self, pixels: &mut [f64], shape: InputShape) {
        for (i, v) in pixels.iter_mut().enumerate() {
            let c = self.channel_of(i, shape);
            *v = (*v - self.mean[c]) / self.std[c];
        }
    }

    pub fn invert(&self, pixels: &mut [f64], shape: InputShape) {
        for (i, v) in pixels.iter_mut().enumerate() {
            let c = self.channel_of(i, shape);
            *v = *v * self.std[c] + self.mean[c];
        }
    }
}

/// A labelled real dataset with train and test splits, normalised with
/// statistics of the training split.
#[derive(Clone, Debug, PartialEq)]
pub struct RealDataset {
    pub train: Split,
    pub test: Split,
    pub classes: usize,
    pub shape: InputShape,
    pub normalization: Normalization,
}

impl RealDataset {
    /// Normalises raw splits in place and validates labels.
    pub fn from_raw(mut train: Split, mut test: Split, classes: usize, shape: InputShape) -> Result<Self> {
        let dim = shape.dim();
        for split in [&train, &test] {
            if split.pixels.len() != split.rows() * dim {
                return Err(Error::shape(
                    "dataset",
                    format!("{} values for {} rows of {}", split.pixels.len(), split.rows(), dim),
                ));
            }
            if let Some(&label) = split.labels.iter().find(|&&l| l >= classes) {
                return Err(Error::LabelOutOfRange { label, classes });
            }
        }
        let normalization = Normalization::fit(&train.pixels, shape);
        normalization.apply(&mut train.pixels, shape);
        normalization.apply(&mut test.pixels, shape);
        Ok(Self { train, test, classes, shape, normalization })
    }

    pub fn dim(&self) -> usize {
        self.shape.dim()
    }

    /// Training rows of class `c`, in file order.
    pub fn class_indices(&self, c: usize) -> Vec<usize> {
        self.train.labels.iter().enumerate().filter(|(_, &l)| l == c).map(|(i, _)| i).collect()
    }

    /// `per_class` randomly chosen training rows of every class, class-major.
    pub fn random_subset(&self, per_class: usize, seed: u64) -> Result<Split> {
        let mut rng = rng::prng(seed);
        let mut chosen = Vec::with_capacity(per_class * self.classes);
        for c in 0..self.classes {
            let mut idx = self.class_indices(c);
            if idx.len() < per_class {
                return Err(Error::InsufficientExamples { class: c, available: idx.len(), needed: per_class });
            }
            rng::shuffle(&mut rng, &mut idx);
            chosen.extend_from_slice(&idx[..per_class]);
        }
        Ok(self.train.select(&chosen, self.dim()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ToyKind {
    /// Isotropic Gaussian clusters.
    Blobs,
    /// Interleaved 2-D spiral arms.
    Spirals,
    /// 8x8 renderings of digit glyphs with random shifts, gains and noise.
    TinyDigits,
}

impl ToyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ToyKind::Blobs => "blobs",
            ToyKind::Spirals => "spirals",
            ToyKind::TinyDigits => "tinydigits",
        }
    }
}

impl fmt::Display for ToyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ToyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blobs" => Ok(ToyKind::Blobs),
            "spirals" => Ok(ToyKind::Spirals),
            "tinydigits" => Ok(ToyKind::TinyDigits),
            other => Err(Error::InvalidConfig(format!("unknown toy dataset `{}`", other))),
        }
    }
}

/// Parameters of a generated toy dataset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ToySpec {
    pub kind: ToyKind,
    pub classes: usize,
    pub per_class: usize,
    pub test_per_class: usize,
    /// Feature count for blobs.
    pub dim: usize,
    /// Distance between blob centres in units of `noise`.
    pub separation: f64,
    /// Noise standard deviation.
    pub noise: f64,
    pub seed: u64,
}

impl ToySpec {
    pub fn new(kind: ToyKind, classes: usize, per_class: usize, seed: u64) -> Self {
        let noise = match kind {
            ToyKind::Blobs => 1.0,
            ToyKind::Spirals => 0.05,
            ToyKind::TinyDigits => 0.35,
        };
        Self { kind, classes, per_class, test_per_class: per_class, dim: 8, separation: 4.0, noise, seed }
    }

    pub fn shape(&self) -> InputShape {
        match self.kind {
            ToyKind::Blobs => InputShape::flat(self.dim),
            ToyKind::Spirals => InputShape::flat(2),
            ToyKind::TinyDigits => InputShape::new(1, 8, 8),
        }
    }
}

const DIGITS: [[&str; 7]; 10] = [
    ["01110", "10001", "10011", "10101", "11001", "10001", "01110"],
    ["00100", "01100", "00100", "00100", "00100", "00100", "01110"],
    ["01110", "10001", "00001", "00010", "00100", "01000", "11111"],
    ["11110", "00001", "00001", "01110", "00001", "00001", "11110"],
    ["00010", "00110", "01010", "10010", "11111", "00010", "00010"],
    ["11111", "10000", "11110", "00001", "00001", "10001", "01110"],
    ["00110", "01000", "10000", "11110", "10001", "10001", "01110"],
    ["11111", "00001", "00010", "00100", "01000", "01000", "01000"],
    ["01110", "10001", "10001", "01110", "10001", "10001", "01110"],
    ["01110", "10001", "10001", "01111", "00001", "00010", "01100"],
];

/// Generates a toy dataset; train and test draws come from one seeded stream.
pub fn make_toy(spec: &ToySpec) -> Result<RealDataset> {
    if spec.classes < 2 {
        return Err(Error::InvalidConfig("toy datasets need at least two classes".into()));
    }
    if spec.kind == ToyKind::TinyDigits && spec.classes > DIGITS.len() {
        return Err(Error::InvalidConfig("tinydigits has at most 10 classes".into()));
    }
    if spec.kind == ToyKind::Blobs && spec.dim == 0 {
        return Err(Error::InvalidConfig("blobs need at least one feature".into()));
    }
    let mut rng = rng::prng(spec.seed);
    let centers = blob_centers(spec, &mut rng);
    let draw = |count: usize, rng: &mut Prng| {
        let mut split = Split::default();
        for c in 0..spec.classes {
            for _ in 0..count {
                match spec.kind {
                    ToyKind::Blobs => {
                        for d in 0..spec.dim {
                            let v = centers[c * spec.dim + d] + spec.noise * rng::normal(rng);
                            split.pixels.push(v);
                        }
                    }
                    ToyKind::Spirals => {
                        let t = rng::uniform(rng, 0.05, 1.0);
                        let angle = 2.0 * core::f64::consts::PI * c as f64 / spec.classes as f64 + 4.0 * t;
                        split.pixels.push(t * libm::cos(angle) + spec.noise * rng::normal(rng));
                        split.pixels.push(t * libm::sin(angle) + spec.noise * rng::normal(rng));
                    }
                    ToyKind::TinyDigits => render_digit(c, spec.noise, rng, &mut split.pixels),
                }
                split.labels.push(c);
            }
        }
        split
    };
    let train = draw(spec.per_class, &mut rng);
    let test = draw(spec.test_per_class, &mut rng);
    RealDataset::from_raw(train, test, spec.classes, spec.shape())
}

fn blob_centers(spec: &ToySpec, rng: &mut Prng) -> Vec<f64> {
    if spec.kind != ToyKind::Blobs {
        return Vec::new();
    }
    // Orthogonal axes scaled so that every pair of centres is `separation * noise` apart.
    let radius = spec.separation * spec.noise / core::f64::consts::SQRT_2;
    let mut centers = vec![0.0; spec.classes * spec.dim];
    for c in 0..spec.classes {
        let row = &mut centers[c * spec.dim..(c + 1) * spec.dim];
        if spec.classes <= spec.dim {
            row[c] = radius;
        } else {
            let mut norm = 0.0;
            for v in row.iter_mut() {
                *v = rng::normal(rng);
                norm += *v * *v;
            }
            let scale = radius / libm::sqrt(norm);
            row.iter_mut().for_each(|v| *v *= scale);
        }
    }
    centers
}

fn render_digit(class: usize, noise: f64, rng: &mut Prng, out: &mut Vec<f64>) {
    let glyph = &DIGITS[class];
    let dy = rng::below(rng, 2);
    let dx = rng::below(rng, 4);
    let gain = rng::uniform(rng, 0.6, 1.0);
    let mut img = [0.0f64; 64];
    for (r, line) in glyph.iter().enumerate() {
        for (c, ch) in line.bytes().enumerate() {
            if ch == b'1' {
                img[(r + dy) * 8 + c + dx] = gain;
            }
        }
    }
    for v in img.iter_mut() {
        *v += noise * rng::normal(rng);
    }
    out.extend_from_slice(&img);
}

/// How synthetic pixels are initialised.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SyntheticInit {
    /// Copies of randomly chosen real training examples.
    RealSample,
    /// Standard normal noise.
    Noise,
}

impl FromStr for SyntheticInit {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real" | "real-sample" => Ok(SyntheticInit::RealSample),
            "noise" => Ok(SyntheticInit::Noise),
            other => Err(Error::InvalidConfig(format!("unknown synthetic init `{}`", other))),
        }
    }
}

/// Gaussian perturbation of the student's starting weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub enabled: bool,
    /// Standard deviation as a multiple of the RMS of the starting weights.
    pub sigma: f64,
}

impl NoiseSpec {
    pub fn disabled() -> Self {
        Self { enabled: false, sigma: 0.01 }
    }

    pub fn relative(sigma: f64) -> Self {
        Self { enabled: true, sigma }
    }
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self::disabled()
    }
}

/// The learnable synthetic set: pixels, fixed balanced labels, and the
/// student step size.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDataset {
    pub pixels: Vec<f64>,
    pub labels: Vec<usize>,
    pub ipc: usize,
    pub classes: usize,
    pub shape: InputShape,
    pub step_size: f64,
    pub ema_pixels: Vec<f64>,
    pub ema_decay: f64,
}

impl SyntheticDataset {
    /// `ipc` examples per class, labels in class-major order.
    pub fn init(
        real: &RealDataset,
        ipc: usize,
        seed: u64,
        init: SyntheticInit,
        step_size: f64,
        ema_decay: f64,
    ) -> Result<Self> {
        if ipc == 0 {
            return Err(Error::InvalidConfig("ipc must be at least 1".into()));
        }
        if !(step_size > 0.0) {
            return Err(Error::InvalidConfig("student step size must be positive".into()));
        }
        let labels: Vec<usize> = (0..real.classes).flat_map(|c| core::iter::repeat_n(c, ipc)).collect();
        let pixels = match init {
            SyntheticInit::RealSample => real.random_subset(ipc, seed)?.pixels,
            SyntheticInit::Noise => {
                let mut rng = rng::prng(seed);
                (0..labels.len() * real.dim()).map(|_| rng::normal(&mut rng)).collect()
            }
        };
        Ok(Self {
            ema_pixels: pixels.clone(),
            pixels,
            labels,
            ipc,
            classes: real.classes,
            shape: real.shape,
            step_size,
            ema_decay,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.shape.dim()
    }

    /// `ema ← β·ema + (1−β)·pixels`
    pub fn ema_update(&mut self) {
        let beta = self.ema_decay;
        for (e, p) in self.ema_pixels.iter_mut().zip(&self.pixels) {
            *e = beta * *e + (1.0 - beta) * p;
        }
    }

    pub fn eval_pixels(&self, use_ema: bool) -> &[f64] {
        if use_ema {
            &self.ema_pixels
        } else {
            &self.pixels
        }
    }

    pub fn batch(&self, use_ema: bool) -> Batch<'_> {
        Batch::new(self.eval_pixels(use_ema), &self.labels)
    }
}
