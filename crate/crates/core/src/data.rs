//! Synthetic crowd scenes, crop-and-resize augmentation, and dataset IO.
//!
//! On disk a dataset is a directory holding binary PGM images (P5, maxval
//! 255) and an `annotations.json` listing
//! `{"image": path, "width": int, "height": int, "points": [[x, y], ...]}`
//! with image paths relative to the JSON file.

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::density::{downsample_sum, generate_density, Annotation};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::tensor::{Float, Tensor};

/// File name of the annotation list inside a dataset directory.
pub const ANNOTATIONS_FILE: &str = "annotations.json";

/// Resolution ratio between images and density maps.
pub const MAP_STRIDE: usize = 8;

/// Single-channel image with intensities in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != height * width || height == 0 || width == 0 {
            return Err(Error::dim(
                "Image::new",
                "pixels",
                format!("{height}x{width} image needs {} pixels, got {}", height * width, pixels.len()),
            ));
        }
        Ok(Self { height, width, pixels })
    }

    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// `[1, channels, H, W]` with the gray plane replicated per channel.
    pub fn to_tensor(&self, channels: usize) -> Tensor {
        let plane = self.height * self.width;
        Tensor::from_fn(&[1, channels, self.height, self.width], |i| self.pixels[i % plane] as Float)
    }

    /// Rounds every pixel to the nearest 8-bit level.
    pub fn quantized(mut self) -> Self {
        for p in &mut self.pixels {
            *p = (p.clamp(0.0, 1.0) * 255.0).round() / 255.0;
        }
        self
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|p| (p.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }
}

/// Writes a binary PGM (P5, maxval 255).
pub fn write_pgm(path: &Path, image: &Image) -> Result<()> {
    let mut buf = format!("P5\n{} {}\n255\n", image.width, image.height).into_bytes();
    buf.extend(image.to_bytes());
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Parses a binary PGM (P5) with 8- or 16-bit samples into `[0, 1]` intensities.
pub fn parse_pgm(bytes: &[u8]) -> Result<Image> {
    let mut pos = 0;
    let mut token = || -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Parse("PGM header truncated".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token()?;
    if magic != "P5" {
        return Err(Error::Parse(format!("expected PGM magic P5, found {magic:?}")));
    }
    let mut number = |what: &str| -> Result<usize> {
        let t = token()?;
        t.parse()
            .map_err(|_| Error::Parse(format!("PGM {what} is not an integer: {t:?}")))
    };
    let width = number("width")?;
    let height = number("height")?;
    let maxval = number("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Parse(format!("PGM maxval {maxval} out of range")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let sample_bytes = if maxval < 256 { 1 } else { 2 };
    let need = width * height * sample_bytes;
    let raster = bytes.get(pos..pos + need).ok_or_else(|| {
        Error::Parse(format!(
            "PGM raster truncated: need {need} bytes, have {}",
            bytes.len().saturating_sub(pos)
        ))
    })?;
    let scale = maxval as f64;
    let pixels = if sample_bytes == 1 {
        raster.iter().map(|&b| (b as f64 / scale).min(1.0)).collect()
    } else {
        raster
            .chunks_exact(2)
            .map(|c| (u16::from_be_bytes([c[0], c[1]]) as f64 / scale).min(1.0))
            .collect()
    };
    Image::new(height, width, pixels)
}

pub fn read_pgm(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Reads and validates an annotation list.
pub fn load_annotations(path: &Path) -> Result<Vec<Annotation>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_annotations(&text).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_annotations(text: &str) -> Result<Vec<Annotation>> {
    let anns: Vec<Annotation> = serde_json::from_str(text)
        .map_err(|e| Error::Parse(format!("line {}, column {}: {e}", e.line(), e.column())))?;
    for a in &anns {
        a.validate()?;
    }
    Ok(anns)
}

pub fn save_annotations(path: &Path, anns: &[Annotation]) -> Result<()> {
    let text = serde_json::to_string_pretty(anns).map_err(|e| Error::Parse(e.to_string()))?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes())
        .and_then(|_| f.write_all(b"\n"))
        .map_err(|e| Error::io(path, e))
}

/// One training/evaluation example.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    /// `[1, C, H, W]`.
    pub image: Tensor,
    pub annotation: Annotation,
    /// Ground-truth density at map resolution, `[1, 1, H/8, W/8]`.
    pub target: Tensor,
}

impl Sample {
    pub fn new(image: &Image, annotation: Annotation, sigma: f64, channels: usize) -> Result<Self> {
        if (image.height, image.width) != (annotation.height, annotation.width) {
            return Err(Error::Annotation {
                image: annotation.image.clone(),
                detail: format!(
                    "annotation says {}x{} but the image is {}x{}",
                    annotation.width, annotation.height, image.width, image.height
                ),
            });
        }
        let full = generate_density(&annotation, sigma)?;
        let map = downsample_sum(&full, MAP_STRIDE)?;
        let (h, w) = (map.height(), map.width());
        let target = map.values.reshape(&[1, 1, h, w])?;
        Ok(Self {
            id: annotation.image.clone(),
            image: image.to_tensor(channels),
            annotation,
            target,
        })
    }

    /// Ground-truth count.
    pub fn count(&self) -> f64 {
        self.annotation.count() as f64
    }
}

/// Loads `annotations.json` and its images from `dir` (or from the JSON file
/// itself when `path` names one).
pub fn load_dataset(path: &Path, sigma: f64, channels: usize) -> Result<Vec<Sample>> {
    let json = if path.is_dir() {
        path.join(ANNOTATIONS_FILE)
    } else {
        path.to_path_buf()
    };
    let root = json.parent().map(Path::to_path_buf).unwrap_or_default();
    let anns = load_annotations(&json)?;
    anns.into_iter()
        .map(|a| {
            let img = read_pgm(&root.join(&a.image))?;
            Sample::new(&img, a, sigma, channels)
        })
        .collect()
}

/// Writes images as PGM plus `annotations.json` into `dir`.
pub fn write_dataset(dir: &Path, scenes: &[(Image, Annotation)]) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (img, ann) in scenes {
        write_pgm(&dir.join(&ann.image), img)?;
    }
    let anns: Vec<Annotation> = scenes.iter().map(|(_, a)| a.clone()).collect();
    let json = dir.join(ANNOTATIONS_FILE);
    save_annotations(&json, &anns)?;
    Ok(json)
}

pub fn samples_from(scenes: &[(Image, Annotation)], sigma: f64, channels: usize) -> Result<Vec<Sample>> {
    scenes
        .iter()
        .map(|(img, ann)| Sample::new(img, ann.clone(), sigma, channels))
        .collect()
}

/// Parameters of the synthetic scene generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub height: usize,
    pub width: usize,
    /// Inclusive range of people per scene.
    pub count_range: (usize, usize),
    /// Head radius range in pixels; the perspective gradient interpolates within it.
    pub radius_range: (f64, f64),
    /// 0 = no perspective; 1 = heads shrink to the minimum radius at the far edge.
    pub perspective: f64,
    /// Per-scene rotation of the whole layout, degrees.
    pub rotation_deg: (f64, f64),
    /// Standard deviation of additive background noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            count_range: (8, 24),
            radius_range: (1.0, 3.0),
            perspective: 0.8,
            rotation_deg: (-30.0, 30.0),
            noise: 0.03,
            seed: 7,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.count_range.0 < 1 || self.count_range.0 > self.count_range.1 {
            return Err(Error::Contract(format!("invalid count range {:?}", self.count_range)));
        }
        if !(self.radius_range.0 > 0.0 && self.radius_range.0 <= self.radius_range.1) {
            return Err(Error::Contract(format!("invalid radius range {:?}", self.radius_range)));
        }
        if self.height % MAP_STRIDE != 0 || self.width % MAP_STRIDE != 0 || self.height == 0 || self.width == 0 {
            return Err(Error::dim(
                "SceneConfig",
                "canvas",
                format!("{}x{} must be positive multiples of 8", self.height, self.width),
            ));
        }
        Ok(())
    }
}

/// A placed head: center and radius in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Head {
    pub x: f64,
    pub y: f64,
    pub r: f64,
}

/// Heads of scene `index`. Heads never overlap: centers are at least
/// `r1 + r2 + 2` apart, so rendered disks are separate 8-connected blobs.
pub fn place_heads(cfg: &SceneConfig, index: u64) -> Vec<Head> {
    let mut rng = SplitMix64::derived(cfg.seed, index);
    let (c_lo, c_hi) = cfg.count_range;
    let count = c_lo + rng.below((c_hi - c_lo + 1) as u64) as usize;
    let angle = rng.uniform(cfg.rotation_deg.0, cfg.rotation_deg.1.max(cfg.rotation_deg.0)) * PI / 180.0;
    let (sin, cos) = angle.sin_cos();
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let (cx, cy) = (w / 2.0, h / 2.0);
    let (r_lo, r_hi) = cfg.radius_range;

    let mut heads: Vec<Head> = Vec::with_capacity(count);
    let mut attempts = 0;
    while heads.len() < count && attempts < 400 * count {
        attempts += 1;
        // layout frame: depth grows downwards before the scene is rotated
        let u = rng.uniform(0.0, w);
        let v = rng.uniform(0.0, h);
        let depth = v / h;
        let r = r_lo + (r_hi - r_lo) * (1.0 - cfg.perspective * (1.0 - depth));
        let (du, dv) = (u - cx, v - cy);
        let x = cx + cos * du - sin * dv;
        let y = cy + sin * du + cos * dv;
        if x < 0.5 || y < 0.5 || x > w - 0.5 || y > h - 0.5 {
            continue;
        }
        if heads.iter().any(|o| (o.x - x).hypot(o.y - y) < o.r + r + 2.0) {
            continue;
        }
        heads.push(Head { x, y, r });
    }
    heads
}

/// Renders heads as shaded disks over a dim background.
pub fn render_heads(cfg: &SceneConfig, heads: &[Head], index: u64, noisy: bool) -> Image {
    let (h, w) = (cfg.height, cfg.width);
    let mut noise_rng = SplitMix64::derived(cfg.seed ^ 0x4E01_5E00, index);
    let mut pixels = vec![0.0; h * w];
    for (i, p) in pixels.iter_mut().enumerate() {
        let row = (i / w) as f64 / h as f64;
        *p = if noisy {
            0.08 + 0.04 * row + cfg.noise * noise_rng.normal()
        } else {
            0.0
        };
    }
    for head in heads {
        let (x0, x1) = ((head.x - head.r).floor().max(0.0) as usize, ((head.x + head.r).ceil() as usize).min(w - 1));
        let (y0, y1) = ((head.y - head.r).floor().max(0.0) as usize, ((head.y + head.r).ceil() as usize).min(h - 1));
        for py in y0..=y1 {
            for px in x0..=x1 {
                let d = (px as f64 + 0.5 - head.x).hypot(py as f64 + 0.5 - head.y);
                if d <= head.r {
                    let shade = 0.9 * (1.0 - 0.3 * (d / head.r).powi(2));
                    pixels[py * w + px] = if noisy { shade + 0.5 * cfg.noise * noise_rng.normal() } else { shade };
                }
            }
        }
    }
    Image { height: h, width: w, pixels }.quantized()
}

/// Renders `count` scenes; scene `i` is drawn from seed `cfg.seed ^ i`.
pub fn gen_synthetic(cfg: &SceneConfig, count: usize) -> Result<Vec<(Image, Annotation)>> {
    cfg.validate()?;
    Ok((0..count as u64)
        .into_par_iter()
        .map(|i| {
            let heads = place_heads(cfg, i);
            let image = render_heads(cfg, &heads, i, true);
            let ann = Annotation {
                image: format!("scene_{i:04}.pgm"),
                width: cfg.width,
                height: cfg.height,
                points: heads.iter().map(|hd| [hd.x, hd.y]).collect(),
            };
            (image, ann)
        })
        .collect())
}

/// Largest coordinate strictly below `limit` used when rescaled points round up.
fn below_limit(v: f64, limit: f64) -> f64 {
    if v < limit {
        v
    } else {
        limit - limit * f64::EPSILON
    }
}

/// Crops a random window with side fraction drawn from `frac_range` and
/// resizes it (bilinear) to `out_shape = (height, width)`. Points outside the
/// window are dropped; a crop with no points is redrawn up to 10 times and
/// then accepted empty.
pub fn augment_crop_resize(
    image: &Image,
    ann: &Annotation,
    frac_range: (f64, f64),
    out_shape: (usize, usize),
    rng: &mut SplitMix64,
) -> Result<(Image, Annotation)> {
    let (oh, ow) = out_shape;
    if oh == 0 || ow == 0 || oh % MAP_STRIDE != 0 || ow % MAP_STRIDE != 0 {
        return Err(Error::dim(
            "augment_crop_resize",
            "out_shape",
            format!("{oh}x{ow} must be positive multiples of 8"),
        ));
    }
    let (lo, hi) = frac_range;
    if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
        return Err(Error::Contract(format!("crop fraction range {frac_range:?} must lie in (0, 1]")));
    }
    let (h, w) = (image.height, image.width);
    let mut window = (0, 0, h, w);
    let mut kept = Vec::new();
    for attempt in 0..=10 {
        let frac = if hi > lo { rng.uniform(lo, hi) } else { lo };
        let ch = ((frac * h as f64).round() as usize).clamp(1, h);
        let cw = ((frac * w as f64).round() as usize).clamp(1, w);
        let y0 = rng.below((h - ch + 1) as u64) as usize;
        let x0 = rng.below((w - cw + 1) as u64) as usize;
        window = (y0, x0, ch, cw);
        kept = ann
            .points
            .iter()
            .filter(|&&[x, y]| x >= x0 as f64 && x < (x0 + cw) as f64 && y >= y0 as f64 && y < (y0 + ch) as f64)
            .copied()
            .collect::<Vec<_>>();
        if !kept.is_empty() || ann.points.is_empty() || attempt == 10 {
            break;
        }
    }
    let (y0, x0, ch, cw) = window;
    let (sy, sx) = (oh as f64 / ch as f64, ow as f64 / cw as f64);
    let points = kept
        .iter()
        .map(|&[x, y]| {
            [
                below_limit((x - x0 as f64) * sx, ow as f64),
                below_limit((y - y0 as f64) * sy, oh as f64),
            ]
        })
        .collect();

    let mut pixels = Vec::with_capacity(oh * ow);
    for v in 0..oh {
        let src_y = (y0 as f64 + (v as f64 + 0.5) / sy - 0.5).clamp(y0 as f64, (y0 + ch - 1) as f64);
        let iy = (src_y.floor() as usize).min(y0 + ch - 1);
        let fy = src_y - iy as f64;
        let iy1 = (iy + 1).min(y0 + ch - 1);
        for u in 0..ow {
            let src_x = (x0 as f64 + (u as f64 + 0.5) / sx - 0.5).clamp(x0 as f64, (x0 + cw - 1) as f64);
            let ix = (src_x.floor() as usize).min(x0 + cw - 1);
            let fx = src_x - ix as f64;
            let ix1 = (ix + 1).min(x0 + cw - 1);
            let top = image.at(iy, ix) * (1.0 - fx) + image.at(iy, ix1) * fx;
            let bottom = image.at(iy1, ix) * (1.0 - fx) + image.at(iy1, ix1) * fx;
            pixels.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    let out = Image::new(oh, ow, pixels)?;
    let ann = Annotation {
        image: ann.image.clone(),
        width: ow,
        height: oh,
        points,
    };
    Ok((out, ann))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 8-connected components of pixels above zero.
    fn count_blobs(img: &Image) -> usize {
        let (h, w) = (img.height, img.width);
        let mut seen = vec![false; h * w];
        let mut blobs = 0;
        for start in 0..h * w {
            if seen[start] || img.pixels[start] <= 0.0 {
                continue;
            }
            blobs += 1;
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(p) = stack.pop() {
                let (y, x) = ((p / w) as i64, (p % w) as i64);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (ny, nx) = (y + dy, x + dx);
                        if ny < 0 || nx < 0 || ny >= h as i64 || nx >= w as i64 {
                            continue;
                        }
                        let q = ny as usize * w + nx as usize;
                        if !seen[q] && img.pixels[q] > 0.0 {
                            seen[q] = true;
                            stack.push(q);
                        }
                    }
                }
            }
        }
        blobs
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SceneConfig::default();
        let a = gen_synthetic(&cfg, 4).unwrap();
        let b = gen_synthetic(&cfg, 4).unwrap();
        assert_eq!(a, b);
        let bytes: Vec<Vec<u8>> = a.iter().map(|(i, _)| i.to_bytes()).collect();
        assert_eq!(bytes, b.iter().map(|(i, _)| i.to_bytes()).collect::<Vec<_>>());
    }

    #[test]
    fn points_lie_inside_canvas() {
        let cfg = SceneConfig {
            rotation_deg: (-90.0, 90.0),
            ..SceneConfig::default()
        };
        for (_, ann) in gen_synthetic(&cfg, 16).unwrap() {
            ann.validate().unwrap();
            assert!(ann.count() >= 1);
        }
    }

    #[test]
    fn blob_count_matches_annotation_count() {
        let cfg = SceneConfig {
            count_range: (5, 30),
            ..SceneConfig::default()
        };
        for i in 0..12 {
            let heads = place_heads(&cfg, i);
            let clean = render_heads(&cfg, &heads, i, false);
            assert_eq!(count_blobs(&clean), heads.len(), "scene {i}");
        }
    }

    #[test]
    fn perspective_shrinks_heads_towards_top() {
        let cfg = SceneConfig {
            rotation_deg: (0.0, 0.0),
            perspective: 1.0,
            count_range: (30, 30),
            ..SceneConfig::default()
        };
        let heads = place_heads(&cfg, 0);
        for hd in &heads {
            let expected = 1.0 + 2.0 * hd.y / 64.0;
            assert!((hd.r - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn full_crop_is_identity() {
        let cfg = SceneConfig::default();
        let (img, ann) = gen_synthetic(&cfg, 1).unwrap().remove(0);
        let mut rng = SplitMix64::new(1);
        let (out, out_ann) = augment_crop_resize(&img, &ann, (1.0, 1.0), (64, 64), &mut rng).unwrap();
        assert_eq!(out, img);
        assert_eq!(out_ann.points, ann.points);
    }

    #[test]
    fn crop_keeps_exactly_the_contained_points() {
        let cfg = SceneConfig::default();
        let scenes = gen_synthetic(&cfg, 6).unwrap();
        let mut rng = SplitMix64::new(99);
        for (img, ann) in &scenes {
            let mut probe = rng.clone();
            let (_, out) = augment_crop_resize(img, ann, (0.5, 0.9), (32, 48), &mut rng).unwrap();
            // replay the accepted draw to recover the window
            let mut window = None;
            for _ in 0..=10 {
                let frac = probe.uniform(0.5, 0.9);
                let ch = ((frac * 64.0).round() as usize).clamp(1, 64);
                let cw = ch;
                let y0 = probe.below((64 - ch + 1) as u64) as usize;
                let x0 = probe.below((64 - cw + 1) as u64) as usize;
                let inside: Vec<[f64; 2]> = ann
                    .points
                    .iter()
                    .filter(|&&[x, y]| x >= x0 as f64 && x < (x0 + cw) as f64 && y >= y0 as f64 && y < (y0 + ch) as f64)
                    .copied()
                    .collect();
                window = Some((y0, x0, ch, cw, inside.clone()));
                if !inside.is_empty() {
                    break;
                }
            }
            let (y0, x0, ch, cw, inside) = window.unwrap();
            assert_eq!(out.points.len(), inside.len());
            for (p, q) in out.points.iter().zip(&inside) {
                assert!((p[0] - (q[0] - x0 as f64) * 48.0 / cw as f64).abs() < 1e-9);
                assert!((p[1] - (q[1] - y0 as f64) * 32.0 / ch as f64).abs() < 1e-9);
                assert!(p[0] < 48.0 && p[1] < 32.0);
            }
        }
    }

    #[test]
    fn crop_without_points_yields_empty_annotation() {
        let img = Image::new(64, 64, vec![0.5; 64 * 64]).unwrap();
        let ann = Annotation {
            image: "x".into(),
            width: 64,
            height: 64,
            points: vec![],
        };
        let mut rng = SplitMix64::new(3);
        let (_, out) = augment_crop_resize(&img, &ann, (0.5, 0.9), (32, 32), &mut rng).unwrap();
        assert!(out.points.is_empty());
        let sample = Sample::new(&Image::new(32, 32, vec![0.0; 1024]).unwrap(), out, 4.0, 1).unwrap();
        assert_eq!(sample.target.sum(), 0.0);
    }

    #[test]
    fn pgm_round_trip_and_errors() {
        let img = Image::new(2, 3, vec![0.0, 1.0, 0.5, 0.25, 1.0, 0.0]).unwrap().quantized();
        let mut bytes = b"P5\n# comment\n3 2\n255\n".to_vec();
        bytes.extend(img.to_bytes());
        assert_eq!(parse_pgm(&bytes).unwrap(), img);
        assert!(parse_pgm(b"P2\n3 2\n255\n").is_err());
        assert!(parse_pgm(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn annotations_parse_and_reject() {
        let ok = r#"[{"image": "a.pgm", "width": 8, "height": 8, "points": []}]"#;
        let anns = parse_annotations(ok).unwrap();
        assert_eq!(anns[0].count(), 0);
        let truncated = &ok[..ok.len() - 5];
        let err = parse_annotations(truncated).unwrap_err().to_string();
        assert!(err.contains("line 1"), "{err}");
        let outside = r#"[{"image": "a.pgm", "width": 8, "height": 8, "points": [[8.0, 1.0]]}]"#;
        assert!(matches!(parse_annotations(outside), Err(Error::Annotation { .. })));
    }
}
