//! Frames, echo sequences and their on-disk form.
//!
//! An echo lives in one directory: one 8-bit grayscale image per frame (PNG
//! or binary PGM), read in lexicographic name order, plus a landmarks JSON
//! sidecar `{"fps": 25, "start": [x, y], "end": [x, y], "apex_seed": [x, y]}`.

use std::fs;
use std::path::{Path, PathBuf};

use image::GrayImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;

/// Row-major 8-bit grayscale raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl Frame {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Validation(format!(
                "frame dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::Validation(format!(
                "frame {width}x{height} needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(Frame {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width > 0 && height > 0, "frame dimensions must be positive");
        Frame {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Frame::new(width, height, pixels).expect("dimensions checked by caller")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: u8) {
        self.pixels[y * self.width + x] = value;
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x <= (self.width - 1) as f64 && p.y <= (self.height - 1) as f64
    }

    /// Copy of the rectangle `[x0, x0 + w) x [y0, y0 + h)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Frame {
        assert!(x0 + w <= self.width && y0 + h <= self.height, "crop out of bounds");
        let mut pixels = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            let row = y * self.width;
            pixels.extend_from_slice(&self.pixels[row + x0..row + x0 + w]);
        }
        Frame {
            width: w,
            height: h,
            pixels,
        }
    }

    pub fn to_image(&self) -> GrayImage {
        GrayImage::from_raw(self.width as u32, self.height as u32, self.pixels.clone())
            .expect("buffer length matches dimensions")
    }

    pub fn from_image(img: &GrayImage) -> Self {
        Frame {
            width: img.width() as usize,
            height: img.height() as usize,
            pixels: img.as_raw().clone(),
        }
    }
}

/// Integer pixel coordinate, serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[u32; 2]", into = "[u32; 2]")]
pub struct Pixel {
    pub x: u32,
    pub y: u32,
}

impl Pixel {
    pub const fn new(x: u32, y: u32) -> Self {
        Pixel { x, y }
    }

    pub fn to_point(self) -> Point {
        Point::new(self.x as f64, self.y as f64)
    }
}

impl From<[u32; 2]> for Pixel {
    fn from(v: [u32; 2]) -> Self {
        Pixel { x: v[0], y: v[1] }
    }
}

impl From<Pixel> for [u32; 2] {
    fn from(p: Pixel) -> Self {
        [p.x, p.y]
    }
}

/// Mitral-annulus endpoints and a seed near the top of the apical cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Landmarks {
    pub start: Pixel,
    pub end: Pixel,
    pub apex_seed: Pixel,
}

impl Landmarks {
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        for (name, p) in [
            ("start", self.start),
            ("end", self.end),
            ("apex_seed", self.apex_seed),
        ] {
            if p.x as usize >= width || p.y as usize >= height {
                return Err(Error::Validation(format!(
                    "{name} landmark ({}, {}) lies outside the {width}x{height} frame",
                    p.x, p.y
                )));
            }
        }
        if self.start.x >= self.end.x {
            return Err(Error::Validation(format!(
                "start.x ({}) must be left of end.x ({})",
                self.start.x, self.end.x
            )));
        }
        if self.apex_seed.y >= self.start.y.min(self.end.y) {
            return Err(Error::Validation(format!(
                "apex seed y ({}) must lie above the base (min y {})",
                self.apex_seed.y,
                self.start.y.min(self.end.y)
            )));
        }
        Ok(())
    }

    pub fn translated(&self, dx: i64, dy: i64) -> Landmarks {
        let shift = |p: Pixel| Pixel::new((p.x as i64 + dx) as u32, (p.y as i64 + dy) as u32);
        Landmarks {
            start: shift(self.start),
            end: shift(self.end),
            apex_seed: shift(self.apex_seed),
        }
    }
}

/// The landmarks sidecar file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandmarksFile {
    pub fps: f64,
    pub start: Pixel,
    pub end: Pixel,
    pub apex_seed: Pixel,
}

impl LandmarksFile {
    pub fn landmarks(&self) -> Landmarks {
        Landmarks {
            start: self.start,
            end: self.end,
            apex_seed: self.apex_seed,
        }
    }
}

/// One cardiac cycle; frame 0 is end-diastole.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoSequence {
    pub id: String,
    pub fps: f64,
    pub landmarks: Landmarks,
    frames: Vec<Frame>,
}

impl EchoSequence {
    pub fn new(id: impl Into<String>, fps: f64, landmarks: Landmarks, frames: Vec<Frame>) -> Result<Self> {
        if frames.len() < 2 {
            return Err(Error::Validation(format!(
                "an echo needs at least 2 frames, got {}",
                frames.len()
            )));
        }
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::Validation(format!("fps must be positive, got {fps}")));
        }
        let (w, h) = (frames[0].width(), frames[0].height());
        if let Some((i, f)) = frames
            .iter()
            .enumerate()
            .find(|(_, f)| f.width() != w || f.height() != h)
        {
            return Err(Error::Validation(format!(
                "frame {i} is {}x{}, expected {w}x{h}",
                f.width(),
                f.height()
            )));
        }
        landmarks.validate(w, h)?;
        Ok(EchoSequence {
            id: id.into(),
            fps,
            landmarks,
            frames,
        })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width()
    }

    pub fn height(&self) -> usize {
        self.frames[0].height()
    }

    pub fn landmarks_file(&self) -> LandmarksFile {
        LandmarksFile {
            fps: self.fps,
            start: self.landmarks.start,
            end: self.landmarks.end,
            apex_seed: self.landmarks.apex_seed,
        }
    }
}

fn is_frame_file(path: &Path) -> bool {
    path.is_file()
        && path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "pgm"))
            .unwrap_or(false)
}

/// Frame files of a directory in lexicographic name order.
pub fn list_frame_files(frame_dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(frame_dir).map_err(|e| Error::Ingestion {
        path: frame_dir.to_path_buf(),
        reason: e.to_string(),
    })?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::Ingestion {
            path: frame_dir.to_path_buf(),
            reason: e.to_string(),
        })?;
        let path = entry.path();
        if is_frame_file(&path) {
            files.push(path);
        }
    }
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(files)
}

pub fn read_frame(path: &Path) -> Result<Frame> {
    let img = image::open(path).map_err(|e| Error::Ingestion {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    Ok(Frame::from_image(&img.to_luma8()))
}

pub fn read_landmarks(path: &Path) -> Result<LandmarksFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::Ingestion {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Ingestion {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Reads every frame of `frame_dir` plus the landmarks sidecar.
pub fn load_sequence(frame_dir: &Path, landmarks_file: &Path) -> Result<EchoSequence> {
    let meta = read_landmarks(landmarks_file)?;
    let files = list_frame_files(frame_dir)?;
    if files.len() < 2 {
        return Err(Error::Ingestion {
            path: frame_dir.to_path_buf(),
            reason: format!("expected at least 2 frame images, found {}", files.len()),
        });
    }
    let frames = files
        .iter()
        .map(|p| read_frame(p))
        .collect::<Result<Vec<_>>>()?;
    let id = frame_dir
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("echo")
        .to_string();
    EchoSequence::new(id, meta.fps, meta.landmarks(), frames)
}

/// Conventional file name of frame `index`.
pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:04}.png")
}

pub const LANDMARKS_FILE: &str = "landmarks.json";

/// Writes frames as PNG and the landmarks sidecar; returns written paths.
pub fn write_sequence_files(seq: &EchoSequence, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::with_capacity(seq.len() + 1);
    for (i, frame) in seq.frames().iter().enumerate() {
        let path = dir.join(frame_file_name(i));
        frame.to_image().save(&path).map_err(|e| Error::Io {
            path: path.clone(),
            source: std::io::Error::other(e.to_string()),
        })?;
        written.push(path);
    }
    let path = dir.join(LANDMARKS_FILE);
    let json = serde_json::to_string_pretty(&seq.landmarks_file()).expect("landmarks serialize");
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(written)
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as usize;
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= sum);
    k
}

#[inline]
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut m = i.rem_euclid(period);
    if m >= n as isize {
        m = period - m;
    }
    m as usize
}

/// Separable Gaussian blur with mirrored borders; `sigma == 0` is the identity.
pub fn smooth(frame: &Frame, sigma: f64) -> Frame {
    assert!(sigma >= 0.0 && sigma.is_finite(), "sigma must be finite and non-negative");
    if sigma == 0.0 {
        return frame.clone();
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;
    let (w, h) = (frame.width, frame.height);
    let mut tmp = vec![0.0f64; w * h];
    for y in 0..h {
        let row = &frame.pixels[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &wk) in kernel.iter().enumerate() {
                let xi = reflect(x as isize + k as isize - radius, w);
                acc += wk * row[xi] as f64;
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &wk) in kernel.iter().enumerate() {
                let yi = reflect(y as isize + k as isize - radius, h);
                acc += wk * tmp[yi * w + x];
            }
            out[y * w + x] = acc.round().clamp(0.0, 255.0) as u8;
        }
    }
    Frame {
        width: w,
        height: h,
        pixels: out,
    }
}
