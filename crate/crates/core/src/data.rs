//! Synthetic particle-trajectory images and their on-disk format.
//!
//! Four image classes mimic the qualitative signatures seen in a liquid
//! argon TPC:
//!
//! - `track_mip`: thin, faint, slightly wiggly track ending in a short,
//!   fainter decay stub;
//! - `shower`: a branching cascade of short segments covering a wide cone;
//! - `track_heavy`: a straight, thick track at more than twice the
//!   `track_mip` intensity;
//! - `track_kink`: a `track_mip` with one abrupt 20-60 degree turn.
//!
//! Intensities are on an absolute scale, so pixel values compare across
//! images and classes. Every image draws from its own ChaCha stream derived
//! from `(seed, index)`.
//!
//! File layout (all integers little-endian):
//!
//! ```text
//! "QCDS" 0x01 | N:u32 H:u32 W:u32 C:u32 | C x (len:u16, utf-8 bytes)
//!             | N*H*W f32 pixels, image-major, row-major | N u8 labels
//! ```

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::network::Tensor;

const MAGIC: &[u8; 4] = b"QCDS";
const VERSION: u8 = 0x01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParticleClass {
    TrackMip,
    Shower,
    TrackHeavy,
    TrackKink,
}

impl ParticleClass {
    pub const ALL: [ParticleClass; 4] = [
        ParticleClass::TrackMip,
        ParticleClass::Shower,
        ParticleClass::TrackHeavy,
        ParticleClass::TrackKink,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ParticleClass::TrackMip => "track_mip",
            ParticleClass::Shower => "shower",
            ParticleClass::TrackHeavy => "track_heavy",
            ParticleClass::TrackKink => "track_kink",
        }
    }
}

impl fmt::Display for ParticleClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ParticleClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown particle class {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub height: usize,
    pub width: usize,
    pub classes: Vec<ParticleClass>,
    pub samples_per_class: usize,
    pub noise_level: f64,
    /// Standard deviation of the per-step direction change, radians.
    pub wiggle: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            height: 30,
            width: 30,
            classes: vec![ParticleClass::TrackMip, ParticleClass::Shower],
            samples_per_class: 100,
            noise_level: 0.02,
            wiggle: 0.15,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    fn validate(&self) -> Result<()> {
        if self.classes.len() < 2 {
            return Err(Error::Config(format!(
                "need at least 2 classes, got {}",
                self.classes.len()
            )));
        }
        if self.classes.len() > u8::MAX as usize {
            return Err(Error::Config("too many classes for u8 labels".into()));
        }
        for (i, c) in self.classes.iter().enumerate() {
            if self.classes[..i].contains(c) {
                return Err(Error::Config(format!("class {c} listed twice")));
            }
        }
        if self.height < 4 || self.width < 4 {
            return Err(Error::Config(format!(
                "canvas {}x{} is smaller than 4x4",
                self.height, self.width
            )));
        }
        if self.samples_per_class == 0 {
            return Err(Error::Config("samples_per_class must be positive".into()));
        }
        if self.noise_level.is_nan() || self.noise_level < 0.0 || self.wiggle.is_nan() || self.wiggle < 0.0 {
            return Err(Error::Config("noise level and wiggle must be non-negative".into()));
        }
        Ok(())
    }
}

/// Labeled single-channel images with pixels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    height: usize,
    width: usize,
    images: Vec<f32>,
    labels: Vec<u8>,
    class_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        height: usize,
        width: usize,
        images: Vec<f32>,
        labels: Vec<u8>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if images.len() != labels.len() * height * width {
            return Err(Error::Shape(format!(
                "{} labels of {height}x{width} need {} pixels, got {}",
                labels.len(),
                labels.len() * height * width,
                images.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= class_names.len()) {
            return Err(Error::Argument(format!(
                "label {bad} >= class count {}",
                class_names.len()
            )));
        }
        if images.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Argument("pixels must lie in [0, 1]".into()));
        }
        Ok(Self {
            height,
            width,
            images,
            labels,
            class_names,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    pub fn pixels(&self, i: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.images[i * n..(i + 1) * n]
    }

    pub fn image(&self, i: usize) -> Tensor {
        let pixels = self.pixels(i).iter().map(|&p| p as f64).collect();
        Tensor::image(self.height, self.width, pixels).expect("dataset dimensions are consistent")
    }

    /// Samples per class, indexed by label.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_names.len()];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    /// New dataset holding the given samples, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut images = Vec::with_capacity(indices.len() * self.height * self.width);
        for &i in indices {
            images.extend_from_slice(self.pixels(i));
        }
        Dataset {
            height: self.height,
            width: self.width,
            images,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
        }
    }

    /// Stratified split. Each class contributes `round(n * train_fraction)`
    /// samples to train (at least one to each side); both halves keep the
    /// original sample order.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::Argument(format!(
                "train fraction {train_fraction} outside (0, 1)"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut train = Vec::new();
        let mut test = Vec::new();
        for class in 0..self.class_names.len() {
            let mut members: Vec<usize> = (0..self.len()).filter(|&i| self.label(i) == class).collect();
            if members.len() < 2 {
                return Err(Error::Argument(format!(
                    "class {:?} has {} samples, need at least 2 to split",
                    self.class_names[class],
                    members.len()
                )));
            }
            members.shuffle(&mut rng);
            let k = ((members.len() as f64 * train_fraction).round() as usize).clamp(1, members.len() - 1);
            train.extend_from_slice(&members[..k]);
            test.extend_from_slice(&members[k..]);
        }
        train.sort_unstable();
        test.sort_unstable();
        Ok((self.subset(&train), self.subset(&test)))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(21 + self.images.len() * 4 + self.labels.len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        for v in [self.len(), self.height, self.width, self.class_names.len()] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for name in &self.class_names {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
        }
        for p in &self.images {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out.extend_from_slice(&self.labels);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(4)? != MAGIC {
            return Err(Error::Format {
                offset: 0,
                message: "bad magic, expected \"QCDS\"".into(),
            });
        }
        let version = r.take(1)?[0];
        if version != VERSION {
            return Err(Error::Format {
                offset: 4,
                message: format!("unsupported version {version}"),
            });
        }
        let n = r.u32()? as usize;
        let h = r.u32()? as usize;
        let w = r.u32()? as usize;
        let c = r.u32()? as usize;
        if c > u8::MAX as usize + 1 {
            return Err(Error::Format {
                offset: 17,
                message: format!("class count {c} exceeds u8 labels"),
            });
        }
        let mut class_names = Vec::with_capacity(c);
        for _ in 0..c {
            let len = r.u16()? as usize;
            let at = r.offset();
            let name = std::str::from_utf8(r.take(len)?).map_err(|e| Error::Format {
                offset: at,
                message: format!("class name is not utf-8: {e}"),
            })?;
            class_names.push(name.to_owned());
        }
        let pixel_count = n.checked_mul(h).and_then(|v| v.checked_mul(w)).ok_or(Error::Format {
            offset: 5,
            message: "image dimensions overflow".into(),
        })?;
        r.require(pixel_count as u64 * 4 + n as u64)?;
        let pixel_start = r.offset();
        let images: Vec<f32> = r
            .take(pixel_count * 4)?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4-byte chunk")))
            .collect();
        if let Some(i) = images.iter().position(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Format {
                offset: pixel_start + 4 * i as u64,
                message: format!("pixel value {} outside [0, 1]", images[i]),
            });
        }
        let label_start = r.offset();
        let labels = r.take(n)?.to_vec();
        if let Some(i) = labels.iter().position(|&l| l as usize >= c) {
            return Err(Error::Format {
                offset: label_start + i as u64,
                message: format!("label {} >= class count {c}", labels[i]),
            });
        }
        if r.remaining() != 0 {
            return Err(Error::Format {
                offset: r.offset(),
                message: format!("{} trailing bytes", r.remaining()),
            });
        }
        Ok(Self {
            height: h,
            width: w,
            images,
            labels,
            class_names,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Bounds-checked little-endian cursor.
pub struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn offset(&self) -> u64 {
        self.pos as u64
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    /// Fails with a truncation error unless `n` more bytes are available.
    pub fn require(&self, n: u64) -> Result<()> {
        if (self.remaining() as u64) < n {
            return Err(Error::Truncated {
                offset: self.buf.len() as u64,
                expected: n - self.remaining() as u64,
            });
        }
        Ok(())
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        self.require(n as u64)?;
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Generates `samples_per_class` images per class, class-major.
pub fn generate(config: &GeneratorConfig) -> Result<Dataset> {
    config.validate()?;
    let per = config.samples_per_class;
    let total = per * config.classes.len();
    let images: Vec<Vec<f64>> = (0..total)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(i as u64);
            render(config.classes[i / per], config, &mut rng)
        })
        .collect();
    let labels = (0..total).map(|i| (i / per) as u8).collect();
    Dataset::new(
        config.height,
        config.width,
        images.into_iter().flatten().map(|p| p as f32).collect(),
        labels,
        config.classes.iter().map(|c| c.name().to_owned()).collect(),
    )
}

/// Renders one image of `class` using the canvas size, noise, and wiggle
/// from `config`.
pub fn render(class: ParticleClass, config: &GeneratorConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut canvas = Canvas::new(config.height, config.width);
    let scale = config.height.min(config.width) as f64;
    match class {
        ParticleClass::TrackMip => draw_light_track(&mut canvas, scale, config.wiggle, false, rng),
        ParticleClass::TrackKink => draw_light_track(&mut canvas, scale, config.wiggle, true, rng),
        ParticleClass::TrackHeavy => draw_heavy_track(&mut canvas, scale, rng),
        ParticleClass::Shower => draw_shower(&mut canvas, scale, rng),
    }
    if config.noise_level > 0.0 {
        let normal = Normal::new(0.0, config.noise_level).expect("finite non-negative std");
        for p in &mut canvas.pixels {
            *p += normal.sample(rng);
        }
    }
    for p in &mut canvas.pixels {
        *p = p.clamp(0.0, 1.0);
    }
    canvas.pixels
}

struct Canvas {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
}

impl Canvas {
    fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            pixels: vec![0.0; height * width],
        }
    }

    fn center(&self) -> (f64, f64) {
        (self.width as f64 / 2.0, self.height as f64 / 2.0)
    }

    /// Raises every pixel whose center lies within `radius` of `(x, y)` to at
    /// least `intensity`; with radius 0 only the containing pixel.
    fn deposit(&mut self, x: f64, y: f64, intensity: f64, radius: f64) {
        let reach = radius.ceil() as i64;
        let (cx, cy) = (x.floor() as i64, y.floor() as i64);
        for row in cy - reach..=cy + reach {
            for col in cx - reach..=cx + reach {
                if row < 0 || col < 0 || row >= self.height as i64 || col >= self.width as i64 {
                    continue;
                }
                let (dx, dy) = (col as f64 + 0.5 - x, row as f64 + 0.5 - y);
                if radius > 0.0 && dx * dx + dy * dy > radius * radius {
                    continue;
                }
                let p = &mut self.pixels[row as usize * self.width + col as usize];
                *p = p.max(intensity);
            }
        }
    }

    fn segment(&mut self, from: (f64, f64), to: (f64, f64), intensity: f64, radius: f64) {
        let len = ((to.0 - from.0).powi(2) + (to.1 - from.1).powi(2)).sqrt();
        let steps = (len / 0.2).ceil().max(1.0) as usize;
        for s in 0..=steps {
            let t = s as f64 / steps as f64;
            self.deposit(
                from.0 + t * (to.0 - from.0),
                from.1 + t * (to.1 - from.1),
                intensity,
                radius,
            );
        }
    }
}

fn advance(p: (f64, f64), angle: f64, len: f64) -> (f64, f64) {
    (p.0 + len * angle.cos(), p.1 + len * angle.sin())
}

/// Start point such that a track of `length` along `angle` is roughly
/// centered on the canvas.
fn track_start(canvas: &Canvas, scale: f64, angle: f64, length: f64, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let (cx, cy) = canvas.center();
    let jitter = 0.12 * scale;
    let c = (
        cx + rng.random_range(-jitter..=jitter),
        cy + rng.random_range(-jitter..=jitter),
    );
    advance(c, angle + PI, length / 2.0)
}

fn draw_light_track(canvas: &mut Canvas, scale: f64, wiggle: f64, kink: bool, rng: &mut ChaCha8Rng) {
    let intensity = rng.random_range(0.27..=0.33);
    let length = rng.random_range(0.55..=0.8) * scale;
    let step = (scale / 15.0).max(0.7);
    let steps = (length / step).ceil() as usize;
    let mut angle = rng.random_range(0.0..TAU);
    let kink_at = kink.then(|| {
        let at = ((steps as f64 * rng.random_range(0.3..=0.7)) as usize).clamp(1, steps.saturating_sub(1).max(1));
        let turn = rng.random_range(20f64.to_radians()..=60f64.to_radians());
        (at, if rng.random_bool(0.5) { turn } else { -turn })
    });
    let wobble = Normal::new(0.0, wiggle).expect("finite non-negative std");

    let mut p = track_start(canvas, scale, angle, length, rng);
    for s in 0..steps {
        if let Some((at, turn)) = kink_at {
            if s == at {
                angle += turn;
            }
        }
        angle += wobble.sample(rng);
        let next = advance(p, angle, step);
        canvas.segment(p, next, intensity, 0.0);
        p = next;
    }

    // Decay product: short and fainter, in an unrelated direction.
    let stub_angle = rng.random_range(0.0..TAU);
    let stub_len = rng.random_range(0.1..=0.18) * scale;
    canvas.segment(p, advance(p, stub_angle, stub_len), 0.5 * intensity, 0.0);
}

fn draw_heavy_track(canvas: &mut Canvas, scale: f64, rng: &mut ChaCha8Rng) {
    let intensity = rng.random_range(0.7..=0.85);
    let length = rng.random_range(0.45..=0.7) * scale;
    let angle = rng.random_range(0.0..TAU);
    let start = track_start(canvas, scale, angle, length, rng);
    canvas.segment(start, advance(start, angle, length), intensity, 0.75);
}

fn draw_shower(canvas: &mut Canvas, scale: f64, rng: &mut ChaCha8Rng) {
    let axis = rng.random_range(0.0..TAU);
    let start = track_start(canvas, scale, axis, 0.7 * scale, rng);
    let spread = Normal::new(0.0, 0.25).expect("valid std");
    // (position, direction, energy)
    let mut front = vec![(start, axis, 1.0_f64)];
    let mut segments = 0;
    while let Some((p, angle, energy)) = front.pop() {
        if segments >= 48 {
            break;
        }
        segments += 1;
        let dir = angle + spread.sample(rng);
        let next = advance(p, dir, rng.random_range(0.06..=0.12) * scale);
        canvas.segment(p, next, 0.2 + 0.4 * energy, 0.0);
        if energy > 0.25 {
            front.push((next, dir, energy * 0.92));
        }
        if energy > 0.3 && rng.random_bool(0.35) {
            let kick = rng.random_range(0.3..=0.8);
            let side = if rng.random_bool(0.5) { kick } else { -kick };
            front.insert(0, (next, dir + side, energy * 0.75));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(classes: Vec<ParticleClass>) -> GeneratorConfig {
        GeneratorConfig {
            height: 10,
            width: 10,
            classes,
            samples_per_class: 6,
            seed: 3,
            ..Default::default()
        }
    }

    #[test]
    fn class_names_parse() {
        for c in ParticleClass::ALL {
            assert_eq!(c.name().parse::<ParticleClass>().unwrap(), c);
        }
        assert!("muon".parse::<ParticleClass>().is_err());
    }

    #[test]
    fn needs_two_classes() {
        assert!(matches!(
            generate(&small(vec![ParticleClass::TrackMip])),
            Err(Error::Config(_))
        ));
        let twice = small(vec![ParticleClass::Shower, ParticleClass::Shower]);
        assert!(generate(&twice).is_err());
    }

    #[test]
    fn generated_layout() {
        let ds = generate(&small(vec![ParticleClass::TrackMip, ParticleClass::TrackKink])).unwrap();
        assert_eq!(ds.len(), 12);
        assert_eq!(ds.class_counts(), vec![6, 6]);
        assert_eq!(ds.class_names(), &["track_mip".to_string(), "track_kink".to_string()]);
        assert!((0..ds.len()).all(|i| ds.pixels(i).iter().any(|&p| p > 0.2)));
    }

    #[test]
    fn split_errors() {
        let ds = generate(&small(vec![ParticleClass::TrackMip, ParticleClass::Shower])).unwrap();
        assert!(ds.split(0.0, 1).is_err());
        assert!(ds.split(1.0, 1).is_err());
        let lonely = ds.subset(&[0, 6, 7]);
        assert!(matches!(lonely.split(0.5, 1), Err(Error::Argument(_))));
    }

    #[test]
    fn format_errors_carry_offsets() {
        let ds = generate(&small(vec![ParticleClass::TrackMip, ParticleClass::Shower])).unwrap();
        let bytes = ds.to_bytes();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            Dataset::from_bytes(&bad),
            Err(Error::Format { offset: 0, .. })
        ));

        let short = &bytes[..bytes.len() - 5];
        assert!(matches!(Dataset::from_bytes(short), Err(Error::Truncated { .. })));

        let mut bad_label = bytes.clone();
        let last = bad_label.len() - 1;
        bad_label[last] = 7;
        match Dataset::from_bytes(&bad_label) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, last as u64),
            other => panic!("expected format error, got {other:?}"),
        }

        let mut trailing = bytes.clone();
        trailing.push(0);
        assert!(matches!(Dataset::from_bytes(&trailing), Err(Error::Format { .. })));
    }
}
