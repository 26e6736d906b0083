//! Differentiable 2-D affine spatial transformer.
//!
//! Coordinates are normalized so both axes of a map span `[-1, 1]`, with the
//! endpoints on the centers of the first and last pixels (align-corners).
//! A transform `θ` maps target (output) coordinates to source coordinates:
//! `(xs, ys) = θ · (xt, yt, 1)`. Samples that fall outside the source map read
//! zeros.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::{Float, Graph, Tensor, Var};
use crate::tensor::Op;

/// Inversion refuses transforms with `|det|` below this.
pub const MIN_INVERTIBLE_DET: Float = 1e-6;

/// Default lower bound of the structured scale factors.
pub const DEFAULT_S_MIN: Float = 0.2;

/// Which degrees of freedom the region selector may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransformMode {
    /// Translation only: `θ11 = θ22 = 1`, `θ12 = θ21 = 0`.
    Translate,
    /// Translation and per-axis scale: `θ12 = θ21 = 0`.
    TranslateScale,
    /// Translation, scale and rotation.
    TranslateScaleRotate,
    /// Six unconstrained entries used directly as `θ`.
    Raw,
}

impl TransformMode {
    pub const ABLATION: [TransformMode; 3] = [
        TransformMode::Translate,
        TransformMode::TranslateScale,
        TransformMode::TranslateScaleRotate,
    ];

    /// Number of raw scalars the transform head must predict.
    pub fn raw_len(self) -> usize {
        match self {
            TransformMode::Raw => 6,
            _ => 5,
        }
    }

    pub fn flag(self) -> &'static str {
        match self {
            TransformMode::Translate => "t",
            TransformMode::TranslateScale => "ts",
            TransformMode::TranslateScaleRotate => "tsr",
            TransformMode::Raw => "raw",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            TransformMode::Translate => "T",
            TransformMode::TranslateScale => "T+S",
            TransformMode::TranslateScaleRotate => "T+S+R",
            TransformMode::Raw => "RAW",
        }
    }
}

impl fmt::Display for TransformMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.flag())
    }
}

impl FromStr for TransformMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "t" => Ok(TransformMode::Translate),
            "ts" | "t+s" => Ok(TransformMode::TranslateScale),
            "tsr" | "t+s+r" => Ok(TransformMode::TranslateScaleRotate),
            "raw" => Ok(TransformMode::Raw),
            other => Err(Error::Parse(format!("unknown transform mode {other:?} (expected t|ts|tsr|raw)"))),
        }
    }
}

/// Structured parameters behind a non-RAW transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformParams {
    pub sx: Float,
    pub sy: Float,
    pub phi: Float,
    pub tx: Float,
    pub ty: Float,
}

/// A 2×3 affine matrix `[[θ11, θ12, θ13], [θ21, θ22, θ23]]`, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineTransform {
    pub theta: [Float; 6],
    pub mode: TransformMode,
}

impl AffineTransform {
    pub fn identity() -> Self {
        Self {
            theta: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0],
            mode: TransformMode::Raw,
        }
    }

    pub fn raw(theta: [Float; 6]) -> Self {
        Self {
            theta,
            mode: TransformMode::Raw,
        }
    }

    pub fn from_tensor(t: &Tensor, mode: TransformMode) -> Self {
        let mut theta = [0.0; 6];
        theta.copy_from_slice(&t.data()[..6]);
        Self { theta, mode }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(&[2, 3], self.theta.to_vec()).expect("2x3")
    }

    pub fn determinant(&self) -> Float {
        let t = &self.theta;
        t[0] * t[4] - t[1] * t[3]
    }

    /// The 3×3 homogeneous matrix with last row `[0, 0, 1]`.
    pub fn augmented(&self) -> [[Float; 3]; 3] {
        let t = &self.theta;
        [[t[0], t[1], t[2]], [t[3], t[4], t[5]], [0.0, 0.0, 1.0]]
    }

    pub fn apply(&self, x: Float, y: Float) -> (Float, Float) {
        let t = &self.theta;
        (t[0] * x + t[1] * y + t[2], t[3] * x + t[4] * y + t[5])
    }
}

fn sigmoid(x: Float) -> Float {
    1.0 / (1.0 + (-x).exp())
}

fn squash_scale(raw: Float, s_min: Float) -> Float {
    s_min + (1.0 - s_min) * sigmoid(raw)
}

/// Squashes raw head outputs `(sx̃, sỹ, φ̃, t̃x, t̃y)` into [`TransformParams`].
/// Parameters the mode forbids are pinned (`s = 1`, `φ = 0`).
pub fn structured_params(raw: &[Float], mode: TransformMode, s_min: Float) -> TransformParams {
    let tx = raw[3].tanh();
    let ty = raw[4].tanh();
    match mode {
        TransformMode::Translate => TransformParams {
            sx: 1.0,
            sy: 1.0,
            phi: 0.0,
            tx,
            ty,
        },
        TransformMode::TranslateScale => TransformParams {
            sx: squash_scale(raw[0], s_min),
            sy: squash_scale(raw[1], s_min),
            phi: 0.0,
            tx,
            ty,
        },
        TransformMode::TranslateScaleRotate => TransformParams {
            sx: squash_scale(raw[0], s_min),
            sy: squash_scale(raw[1], s_min),
            phi: raw[2],
            tx,
            ty,
        },
        TransformMode::Raw => panic!("RAW mode has no structured parameters"),
    }
}

/// Builds `θ` from raw head outputs (5 scalars, or 6 in RAW mode).
pub fn compose_transform(raw: &[Float], mode: TransformMode, s_min: Float) -> Result<AffineTransform> {
    if raw.len() != mode.raw_len() {
        return Err(Error::dim(
            "compose_transform",
            "raw",
            format!("mode {} takes {} scalars, got {}", mode.label(), mode.raw_len(), raw.len()),
        ));
    }
    let theta = match mode {
        TransformMode::Raw => {
            let mut t = [0.0; 6];
            t.copy_from_slice(raw);
            t
        }
        TransformMode::Translate => {
            let p = structured_params(raw, mode, s_min);
            [1.0, 0.0, p.tx, 0.0, 1.0, p.ty]
        }
        TransformMode::TranslateScale => {
            let p = structured_params(raw, mode, s_min);
            [p.sx, 0.0, p.tx, 0.0, p.sy, p.ty]
        }
        TransformMode::TranslateScaleRotate => {
            let p = structured_params(raw, mode, s_min);
            let (sin, cos) = p.phi.sin_cos();
            [p.sx * cos, -p.sy * sin, p.tx, p.sx * sin, p.sy * cos, p.ty]
        }
    };
    Ok(AffineTransform { theta, mode })
}

pub(crate) fn compose_backward(raw: &[Float], mode: TransformMode, s_min: Float, g: &[Float]) -> Vec<Float> {
    if mode == TransformMode::Raw {
        return g.to_vec();
    }
    let p = structured_params(raw, mode, s_min);
    let (d_sx, d_sy, d_phi) = match mode {
        TransformMode::Translate => (0.0, 0.0, 0.0),
        TransformMode::TranslateScale => (g[0], g[4], 0.0),
        _ => {
            let (sin, cos) = p.phi.sin_cos();
            (
                g[0] * cos + g[3] * sin,
                -g[1] * sin + g[4] * cos,
                -g[0] * p.sx * sin - g[1] * p.sy * cos + g[3] * p.sx * cos - g[4] * p.sy * sin,
            )
        }
    };
    let scale_slope = |r: Float| {
        let s = sigmoid(r);
        (1.0 - s_min) * s * (1.0 - s)
    };
    vec![
        d_sx * scale_slope(raw[0]),
        d_sy * scale_slope(raw[1]),
        d_phi,
        g[2] * (1.0 - p.tx * p.tx),
        g[5] * (1.0 - p.ty * p.ty),
    ]
}

/// Closed-form inverse of the affine map.
pub fn invert_affine(t: &AffineTransform) -> Result<AffineTransform> {
    Ok(AffineTransform::raw(invert_theta(&t.theta)?))
}

fn invert_theta(theta: &[Float]) -> Result<[Float; 6]> {
    let [a, b, c, d, e, f] = [theta[0], theta[1], theta[2], theta[3], theta[4], theta[5]];
    let det = a * e - b * d;
    if !(det.abs() >= MIN_INVERTIBLE_DET) {
        return Err(Error::SingularTransform {
            det: det as f64,
            min: MIN_INVERTIBLE_DET as f64,
        });
    }
    let r = 1.0 / det;
    Ok([
        r * e,
        -r * b,
        r * (b * f - c * e),
        -r * d,
        r * a,
        r * (c * d - a * f),
    ])
}

pub(crate) fn invert_backward(theta: &[Float], g: &[Float]) -> [Float; 6] {
    let [a, b, c, d, e, f] = [theta[0], theta[1], theta[2], theta[3], theta[4], theta[5]];
    let r = 1.0 / (a * e - b * d);
    let r2 = r * r;
    // dL/dr with the matrix entries held fixed
    let s = g[0] * e - g[1] * b + g[2] * (b * f - c * e) - g[3] * d + g[4] * a + g[5] * (c * d - a * f);
    [
        r * (g[4] - g[5] * f) - s * e * r2,
        r * (-g[1] + g[2] * f) + s * d * r2,
        r * (-g[2] * e + g[5] * d),
        r * (-g[3] + g[5] * c) + s * b * r2,
        r * (g[0] - g[2] * c) - s * a * r2,
        r * (g[2] * b - g[5] * a),
    ]
}

/// Normalized coordinate of pixel `i` on an axis with `n` pixels.
fn lattice(i: usize, n: usize) -> Float {
    -1.0 + 2.0 * i as Float / (n - 1) as Float
}

/// Source coordinates `[h, w, (xs, ys)]` for an evenly spaced target lattice.
pub fn affine_grid(t: &AffineTransform, out_h: usize, out_w: usize) -> Result<Tensor> {
    check_grid_extent(out_h, out_w)?;
    Ok(grid_values(&t.theta, out_h, out_w))
}

fn check_grid_extent(out_h: usize, out_w: usize) -> Result<()> {
    if out_h < 2 || out_w < 2 {
        return Err(Error::dim(
            "affine_grid",
            if out_h < 2 { "height" } else { "width" },
            format!("grid extents must be at least 2, got {out_h}x{out_w}"),
        ));
    }
    Ok(())
}

fn grid_values(theta: &[Float], h: usize, w: usize) -> Tensor {
    let mut data = Vec::with_capacity(h * w * 2);
    for y in 0..h {
        let yt = lattice(y, h);
        for x in 0..w {
            let xt = lattice(x, w);
            data.push(theta[0] * xt + theta[1] * yt + theta[2]);
            data.push(theta[3] * xt + theta[4] * yt + theta[5]);
        }
    }
    Tensor::new(&[h, w, 2], data).expect("grid shape")
}

pub(crate) fn affine_grid_backward(g: &[Float], h: usize, w: usize) -> [Float; 6] {
    let mut d = [0.0; 6];
    for y in 0..h {
        let yt = lattice(y, h);
        for x in 0..w {
            let xt = lattice(x, w);
            let k = 2 * (y * w + x);
            let (gx, gy) = (g[k], g[k + 1]);
            d[0] += gx * xt;
            d[1] += gx * yt;
            d[2] += gx;
            d[3] += gy * xt;
            d[4] += gy * yt;
            d[5] += gy;
        }
    }
    d
}

/// The four neighbours of a fractional pixel position with their bilinear weights.
#[derive(Debug, Clone, Copy)]
pub struct BilinearTap {
    pub x0: i64,
    pub y0: i64,
    pub fx: Float,
    pub fy: Float,
}

impl BilinearTap {
    /// `xs, ys` are normalized source coordinates on a `height×width` map.
    pub fn new(xs: Float, ys: Float, height: usize, width: usize) -> Self {
        let px = (xs + 1.0) * (width - 1) as Float / 2.0;
        let py = (ys + 1.0) * (height - 1) as Float / 2.0;
        let (fx0, fy0) = (px.floor(), py.floor());
        Self {
            x0: fx0 as i64,
            y0: fy0 as i64,
            fx: px - fx0,
            fy: py - fy0,
        }
    }

    /// Weights of `(y0,x0), (y0,x0+1), (y0+1,x0), (y0+1,x0+1)`.
    pub fn weights(&self) -> [Float; 4] {
        let (gx, gy) = (1.0 - self.fx, 1.0 - self.fy);
        [gy * gx, gy * self.fx, self.fy * gx, self.fy * self.fx]
    }

    /// Flat in-plane offsets of the four neighbours; `None` when out of bounds.
    pub fn offsets(&self, height: usize, width: usize) -> [Option<usize>; 4] {
        let at = |y: i64, x: i64| {
            (y >= 0 && x >= 0 && (y as usize) < height && (x as usize) < width)
                .then(|| y as usize * width + x as usize)
        };
        [
            at(self.y0, self.x0),
            at(self.y0, self.x0 + 1),
            at(self.y0 + 1, self.x0),
            at(self.y0 + 1, self.x0 + 1),
        ]
    }
}

/// Samples a `[C,H,W]` map at every grid location, producing `[C,h,w]`.
pub fn bilinear_sample(map: &Tensor, grid: &Tensor) -> Result<Tensor> {
    let (ms, gs) = check_sample_shapes(map.shape(), grid.shape())?;
    let out = sample_values(map.data(), ms, grid.data(), gs);
    Tensor::new(&[ms.0, gs.0, gs.1], out)
}

type Dims3 = (usize, usize, usize);

fn check_sample_shapes(map: &[usize], grid: &[usize]) -> Result<(Dims3, (usize, usize))> {
    if map.len() != 3 {
        return Err(Error::dim("bilinear_sample", "map rank", format!("expected [C,H,W], got {map:?}")));
    }
    if grid.len() != 3 || grid[2] != 2 {
        return Err(Error::dim("bilinear_sample", "grid", format!("expected [h,w,2], got {grid:?}")));
    }
    Ok(((map[0], map[1], map[2]), (grid[0], grid[1])))
}

fn sample_values(map: &[Float], (c, h, w): Dims3, grid: &[Float], (gh, gw): (usize, usize)) -> Vec<Float> {
    let points = gh * gw;
    let mut out = vec![0.0; c * points];
    for p in 0..points {
        let tap = BilinearTap::new(grid[2 * p], grid[2 * p + 1], h, w);
        let weights = tap.weights();
        let offsets = tap.offsets(h, w);
        for ch in 0..c {
            let plane = &map[ch * h * w..(ch + 1) * h * w];
            let mut acc = 0.0;
            for (off, wt) in offsets.iter().zip(weights) {
                if let Some(o) = off {
                    acc += wt * plane[*o];
                }
            }
            out[ch * points + p] = acc;
        }
    }
    out
}

pub(crate) fn bilinear_backward(
    map: &[Float],
    (c, h, w): Dims3,
    grid: &[Float],
    (gh, gw): (usize, usize),
    g: &[Float],
    want_map: bool,
    want_grid: bool,
) -> (Option<Vec<Float>>, Option<Vec<Float>>) {
    let points = gh * gw;
    let mut d_map = want_map.then(|| vec![0.0; c * h * w]);
    let mut d_grid = want_grid.then(|| vec![0.0; points * 2]);
    let (sx, sy) = ((w - 1) as Float / 2.0, (h - 1) as Float / 2.0);
    for p in 0..points {
        let tap = BilinearTap::new(grid[2 * p], grid[2 * p + 1], h, w);
        let weights = tap.weights();
        let offsets = tap.offsets(h, w);
        let mut d_px = 0.0;
        let mut d_py = 0.0;
        for ch in 0..c {
            let go = g[ch * points + p];
            if go == 0.0 {
                continue;
            }
            let base = ch * h * w;
            if let Some(dm) = d_map.as_mut() {
                for (off, wt) in offsets.iter().zip(weights) {
                    if let Some(o) = off {
                        dm[base + o] += go * wt;
                    }
                }
            }
            if d_grid.is_some() {
                let v = offsets.map(|off| off.map_or(0.0, |o| map[base + o]));
                d_px += go * ((1.0 - tap.fy) * (v[1] - v[0]) + tap.fy * (v[3] - v[2]));
                d_py += go * ((1.0 - tap.fx) * (v[2] - v[0]) + tap.fx * (v[3] - v[1]));
            }
        }
        if let Some(dg) = d_grid.as_mut() {
            dg[2 * p] = d_px * sx;
            dg[2 * p + 1] = d_py * sy;
        }
    }
    (d_map, d_grid)
}

fn check_theta(graph: &Graph, op: &'static str, theta: Var) -> Result<()> {
    if graph.shape(theta) != [2, 3] {
        return Err(Error::dim(op, "theta", format!("expected [2, 3], got {:?}", graph.shape(theta))));
    }
    Ok(())
}

impl Graph {
    /// Differentiable [`compose_transform`]; returns a `[2, 3]` θ.
    pub fn compose_transform(&mut self, raw: Var, mode: TransformMode, s_min: Float) -> Result<Var> {
        let t = compose_transform(self.value(raw).data(), mode, s_min)?;
        Ok(self.push(t.to_tensor(), Op::ComposeTransform { raw, mode, s_min }, &[raw]))
    }

    pub fn affine_grid(&mut self, theta: Var, out_h: usize, out_w: usize) -> Result<Var> {
        check_theta(self, "affine_grid", theta)?;
        check_grid_extent(out_h, out_w)?;
        let value = grid_values(self.value(theta).data(), out_h, out_w);
        Ok(self.push(
            value,
            Op::AffineGrid {
                theta,
                height: out_h,
                width: out_w,
            },
            &[theta],
        ))
    }

    pub fn bilinear_sample(&mut self, map: Var, grid: Var) -> Result<Var> {
        let (ms, gs) = check_sample_shapes(self.shape(map), self.shape(grid))?;
        let out = sample_values(self.value(map).data(), ms, self.value(grid).data(), gs);
        let value = Tensor::new(&[ms.0, gs.0, gs.1], out)?;
        Ok(self.push(value, Op::BilinearSample { map, grid }, &[map, grid]))
    }

    pub fn invert_affine(&mut self, theta: Var) -> Result<Var> {
        check_theta(self, "invert_affine", theta)?;
        let inv = invert_theta(self.value(theta).data())?;
        let value = Tensor::new(&[2, 3], inv.to_vec())?;
        Ok(self.push(value, Op::InvertAffine { theta }, &[theta]))
    }

    /// Scatters a region map back onto an `out_h×out_w` canvas through `θ⁻¹`.
    /// The result is zero outside the image of the attended region.
    pub fn inverse_scatter(&mut self, residual: Var, theta: Var, out_h: usize, out_w: usize) -> Result<Var> {
        let inv = self.invert_affine(theta)?;
        let grid = self.affine_grid(inv, out_h, out_w)?;
        self.bilinear_sample(residual, grid)
    }
}

/// Value-only [`Graph::inverse_scatter`].
pub fn inverse_scatter(residual: &Tensor, t: &AffineTransform, out_h: usize, out_w: usize) -> Result<Tensor> {
    let inv = invert_affine(t)?;
    let grid = affine_grid(&inv, out_h, out_w)?;
    bilinear_sample(residual, &grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Float, b: Float, tol: Float) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn translate_mode_pins_linear_part_exactly() {
        let t = compose_transform(&[3.0, -2.0, 1.3, 0.4, -0.2], TransformMode::Translate, 0.2).unwrap();
        assert_eq!([t.theta[0], t.theta[1], t.theta[3], t.theta[4]], [1.0, 0.0, 0.0, 1.0]);
        assert!(close(t.theta[2], (0.4 as Float).tanh(), 1e-15));
    }

    #[test]
    fn translate_scale_mode_pins_off_diagonal() {
        let t = compose_transform(&[3.0, -2.0, 1.3, 0.4, -0.2], TransformMode::TranslateScale, 0.2).unwrap();
        assert_eq!(t.theta[1], 0.0);
        assert_eq!(t.theta[3], 0.0);
        assert!(t.theta[0] > 0.2 && t.theta[0] <= 1.0);
    }

    #[test]
    fn raw_zeros_give_midpoint_scale() {
        let t = compose_transform(&[0.0; 5], TransformMode::TranslateScaleRotate, 0.2).unwrap();
        for (a, b) in t.theta.iter().zip([0.6, 0.0, 0.0, 0.0, 0.6, 0.0]) {
            assert!(close(*a, b, 1e-15));
        }
        let p = structured_params(&[0.0; 5], TransformMode::TranslateScaleRotate, 0.2);
        assert!(close(p.sx, 0.6, 1e-15) && close(p.sy, 0.6, 1e-15));
        assert_eq!((p.phi, p.tx, p.ty), (0.0, 0.0, 0.0));
    }

    #[test]
    fn raw_mode_passes_theta_through() {
        let t = compose_transform(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0], TransformMode::Raw, 0.2).unwrap();
        assert_eq!(t.theta, AffineTransform::identity().theta);
        assert!(compose_transform(&[0.0; 5], TransformMode::Raw, 0.2).is_err());
    }

    #[test]
    fn identity_grid_spans_corners() {
        let g = affine_grid(&AffineTransform::identity(), 3, 3).unwrap();
        let d = g.data();
        assert_eq!((d[0], d[1]), (-1.0, -1.0));
        assert_eq!((d[8], d[9]), (0.0, 0.0));
        assert_eq!((d[16], d[17]), (1.0, 1.0));
    }

    #[test]
    fn scaled_grid_corner() {
        let t = AffineTransform::raw([0.5, 0.0, 0.0, 0.0, 0.5, 0.0]);
        let g = affine_grid(&t, 3, 3).unwrap();
        assert_eq!((g.data()[16], g.data()[17]), (0.5, 0.5));
    }

    #[test]
    fn rotated_grid_point() {
        let t = AffineTransform::raw([0.0, -1.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(t.apply(1.0, 0.0), (0.0, 1.0));
        // target (1, 0) is row 1, column 2 of a 3x3 lattice
        let g = affine_grid(&t, 3, 3).unwrap();
        assert_eq!((g.data()[10], g.data()[11]), (0.0, 1.0));
    }

    #[test]
    fn grid_needs_two_points_per_axis() {
        assert!(affine_grid(&AffineTransform::identity(), 1, 4).is_err());
    }

    #[test]
    fn bilinear_center_of_two_by_two() {
        let map = Tensor::new(&[1, 2, 2], vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let grid = Tensor::new(&[1, 1, 2], vec![0.0, 0.0]).unwrap();
        let out = bilinear_sample(&map, &grid).unwrap();
        assert_eq!(out.data(), &[1.5]);
    }

    #[test]
    fn bilinear_far_outside_is_zero() {
        let map = Tensor::full(&[1, 4, 4], 3.0);
        let grid = Tensor::new(&[1, 1, 2], vec![5.0, 5.0]).unwrap();
        assert_eq!(bilinear_sample(&map, &grid).unwrap().data(), &[0.0]);
    }

    #[test]
    fn identity_sampling_reproduces_map() {
        let map = Tensor::from_fn(&[2, 7, 5], |i| ((i * 37) % 11) as Float * 0.3 - 1.0);
        let grid = affine_grid(&AffineTransform::identity(), 7, 5).unwrap();
        let out = bilinear_sample(&map, &grid).unwrap();
        assert!(out.max_abs_diff(&map) <= 1e-12);
    }

    #[test]
    fn bilinear_weights_partition_unity() {
        for (xs, ys) in [(0.13, -0.77), (0.999, 0.5), (-0.31, 0.01), (0.5, 0.5)] {
            let tap = BilinearTap::new(xs, ys, 9, 13);
            let s: Float = tap.weights().iter().sum();
            assert!((s - 1.0).abs() <= 2.0 * Float::EPSILON, "{s}");
        }
    }

    #[test]
    fn invert_worked_examples() {
        let id = invert_affine(&AffineTransform::identity()).unwrap();
        assert_eq!(id.theta, AffineTransform::identity().theta);

        let t = AffineTransform::raw([2.0, 0.0, 0.5, 0.0, 2.0, 0.0]);
        assert_eq!(invert_affine(&t).unwrap().theta, [0.5, 0.0, -0.25, 0.0, 0.5, 0.0]);

        let rot = AffineTransform::raw([0.0, -1.0, 0.0, 1.0, 0.0, 0.0]);
        let inv = invert_affine(&rot).unwrap();
        for (a, b) in inv.theta.iter().zip([0.0, 1.0, 0.0, -1.0, 0.0, 0.0]) {
            assert_eq!(*a, b);
        }
    }

    #[test]
    fn invert_rejects_singular() {
        let t = AffineTransform::raw([1.0, 2.0, 0.0, 0.5, 1.0, 0.0]);
        match invert_affine(&t) {
            Err(Error::SingularTransform { det, .. }) => assert_eq!(det, 0.0),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn inverse_scatter_identity_is_resize() {
        let residual = Tensor::full(&[1, 4, 4], 2.0);
        let out = inverse_scatter(&residual, &AffineTransform::identity(), 8, 8).unwrap();
        assert!(out.data().iter().all(|&v| close(v, 2.0, 1e-12)));
    }
}
