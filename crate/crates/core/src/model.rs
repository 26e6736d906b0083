//! The recurrent spatial-aware refinement network.
//!
//! * GFE: three convolutional columns (large/medium/small kernels, seven conv
//!   layers and three 2×2 pools each) whose outputs are concatenated into the
//!   global feature `g` at 1/8 input resolution.
//! * `M0 = relu(conv1x1(g))`.
//! * Context: spatial mean of `g` → FC-256 → relu → FC-(w·h), reshaped to the
//!   region size. Computed once per image.
//! * RSAR step: `FC(M)` drives an LSTM; a head on the hidden state predicts the
//!   region transform; the region is sampled, refined by the three-column LRN
//!   together with the context map, and the residual is scattered back through
//!   the inverse transform: `M' = relu(M + IST(LRN(r, c_g), T⁻¹))`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::stn::{AffineTransform, TransformMode, DEFAULT_S_MIN};
use crate::tensor::{lstm_cell, Float, Graph, LstmWeights, Tensor, Var, LSTM_GATES};

/// Logit of the structured scale output at initialization; gives `s ≈ 0.986`
/// with the default `s_min`, i.e. a glimpse covering nearly the whole map.
pub const IDENTITY_SCALE_LOGIT: Float = 4.0;

const COLUMN_NAMES: [&str; 3] = ["l", "m", "s"];

/// Kernel sizes and output channels of one convolutional column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSpec {
    pub kernels: Vec<usize>,
    pub channels: Vec<usize>,
}

impl ColumnSpec {
    fn new(kernels: &[usize], channels: &[usize]) -> Self {
        assert_eq!(kernels.len(), channels.len());
        Self {
            kernels: kernels.to_vec(),
            channels: channels.to_vec(),
        }
    }

    pub fn out_channels(&self) -> usize {
        *self.channels.last().expect("non-empty column")
    }

    fn scaled(&self, mult: f64) -> Self {
        Self {
            kernels: self.kernels.clone(),
            channels: self
                .channels
                .iter()
                .map(|&c| ((c as f64 * mult).round() as usize).max(1))
                .collect(),
        }
    }
}

/// GFE layers (0-based) followed by a 2×2 max pool.
pub const GFE_POOL_AFTER: [usize; 3] = [1, 3, 5];

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub image_height: usize,
    pub image_width: usize,
    pub in_channels: usize,
    pub gfe: [ColumnSpec; 3],
    pub lrn: [ColumnSpec; 3],
    pub encoder_dim: usize,
    pub hidden: usize,
    pub context_hidden: usize,
    /// Region `(height, width)` the selected glimpse is resampled to.
    pub region: (usize, usize),
    pub mode: TransformMode,
    pub s_min: Float,
    /// Feed the global context map to the LRN.
    pub context: bool,
    /// Flatten `g` instead of averaging it before the context FCs.
    pub context_flatten: bool,
}

impl ModelConfig {
    /// Default desk-scale architecture for an `height×width` input.
    pub fn new(image_height: usize, image_width: usize) -> Self {
        Self::with_width(image_height, image_width, 1.0)
    }

    /// Default architecture with every conv channel count scaled by `mult`.
    pub fn with_width(image_height: usize, image_width: usize, mult: f64) -> Self {
        let gfe_channels = [8, 8, 16, 16, 16, 16, 16];
        let lrn_channels = [8, 8, 8, 8, 8];
        let gfe = [
            ColumnSpec::new(&[9, 7, 7, 7, 5, 5, 5], &gfe_channels),
            ColumnSpec::new(&[7, 5, 5, 5, 3, 3, 3], &gfe_channels),
            ColumnSpec::new(&[5, 3, 3, 3, 3, 3, 3], &gfe_channels),
        ]
        .map(|c| c.scaled(mult));
        let lrn = [
            ColumnSpec::new(&[9, 7, 7, 7, 5], &lrn_channels),
            ColumnSpec::new(&[7, 5, 5, 5, 3], &lrn_channels),
            ColumnSpec::new(&[5, 3, 3, 3, 3], &lrn_channels),
        ]
        .map(|c| c.scaled(mult));
        let (mh, mw) = (image_height / 8, image_width / 8);
        Self {
            image_height,
            image_width,
            in_channels: 1,
            gfe,
            lrn,
            encoder_dim: 512,
            hidden: 512,
            context_hidden: 256,
            region: ((mh / 2).max(2), (mw / 2).max(2)),
            mode: TransformMode::TranslateScaleRotate,
            s_min: DEFAULT_S_MIN,
            context: true,
            context_flatten: false,
        }
    }

    pub fn map_size(&self) -> (usize, usize) {
        (self.image_height / 8, self.image_width / 8)
    }

    pub fn feature_channels(&self) -> usize {
        self.gfe.iter().map(ColumnSpec::out_channels).sum()
    }

    pub fn validate(&self) -> Result<()> {
        for (axis, extent) in [("height", self.image_height), ("width", self.image_width)] {
            if extent == 0 || extent % 8 != 0 {
                return Err(Error::dim(
                    "ModelConfig",
                    axis,
                    format!("image extent {extent} must be a positive multiple of 8"),
                ));
            }
        }
        if self.region.0 < 2 || self.region.1 < 2 {
            return Err(Error::Contract(format!("region {:?} must be at least 2x2", self.region)));
        }
        if !(self.s_min > 0.0 && self.s_min <= 1.0) {
            return Err(Error::Contract(format!("s_min {} must lie in (0, 1]", self.s_min)));
        }
        for col in self.gfe.iter().chain(&self.lrn) {
            if col.kernels.iter().any(|k| k % 2 == 0) {
                return Err(Error::Contract(format!("kernel sizes must be odd: {:?}", col.kernels)));
            }
        }
        if self.gfe.iter().any(|c| c.kernels.len() != 7) {
            return Err(Error::Contract("GFE columns have seven conv layers".into()));
        }
        Ok(())
    }

    /// Names and shapes of every parameter the network uses, sorted by name.
    pub fn inventory(&self) -> Vec<(String, Vec<usize>)> {
        let mut inv = Vec::new();
        let conv_column = |inv: &mut Vec<(String, Vec<usize>)>, prefix: &str, col: &ColumnSpec, cin: usize| {
            let mut c_in = cin;
            for (i, (&k, &c_out)) in col.kernels.iter().zip(&col.channels).enumerate() {
                inv.push((format!("{prefix}.conv{}.w", i + 1), vec![c_out, c_in, k, k]));
                inv.push((format!("{prefix}.conv{}.b", i + 1), vec![c_out]));
                c_in = c_out;
            }
        };
        for (name, col) in COLUMN_NAMES.iter().zip(&self.gfe) {
            conv_column(&mut inv, &format!("gfe.{name}"), col, self.in_channels);
        }
        let cg = self.feature_channels();
        inv.push(("init.w".into(), vec![1, cg, 1, 1]));
        inv.push(("init.b".into(), vec![1]));

        let (mh, mw) = self.map_size();
        inv.push(("enc.w".into(), vec![mh * mw, self.encoder_dim]));
        inv.push(("enc.b".into(), vec![self.encoder_dim]));
        for gate in LSTM_GATES {
            inv.push((format!("lstm.w_{gate}"), vec![self.encoder_dim + self.hidden, self.hidden]));
            inv.push((format!("lstm.b_{gate}"), vec![self.hidden]));
        }
        inv.push(("head.w".into(), vec![self.hidden, self.mode.raw_len()]));
        inv.push(("head.b".into(), vec![self.mode.raw_len()]));

        let (rh, rw) = self.region;
        if self.context {
            let ctx_in = if self.context_flatten { cg * mh * mw } else { cg };
            inv.push(("ctx.fc1.w".into(), vec![ctx_in, self.context_hidden]));
            inv.push(("ctx.fc1.b".into(), vec![self.context_hidden]));
            inv.push(("ctx.fc2.w".into(), vec![self.context_hidden, rh * rw]));
            inv.push(("ctx.fc2.b".into(), vec![rh * rw]));
        }
        let lrn_in = if self.context { 2 } else { 1 };
        for (name, col) in COLUMN_NAMES.iter().zip(&self.lrn) {
            conv_column(&mut inv, &format!("lrn.{name}"), col, lrn_in);
        }
        let fused: usize = self.lrn.iter().map(ColumnSpec::out_channels).sum();
        inv.push(("lrn.fuse.w".into(), vec![1, fused, 1, 1]));
        inv.push(("lrn.fuse.b".into(), vec![1]));

        inv.sort_by(|a, b| a.0.cmp(&b.0));
        inv
    }

    /// Bias of the transform head that makes the first glimpse (near-)identity.
    pub fn head_identity_bias(&self) -> Vec<Float> {
        match self.mode {
            TransformMode::Raw => vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0],
            _ => vec![IDENTITY_SCALE_LOGIT, IDENTITY_SCALE_LOGIT, 0.0, 0.0, 0.0],
        }
    }
}

/// Named parameter tensors, iterated in lexicographic name order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelParams {
    tensors: BTreeMap<String, Tensor>,
}

impl ModelParams {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.tensors.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Checks names and shapes against the configuration's inventory.
    pub fn check_inventory(&self, config: &ModelConfig) -> Result<()> {
        let inventory = config.inventory();
        for (name, shape) in &inventory {
            let t = self.get(name).ok_or_else(|| Error::MissingArray(name.clone()))?;
            if t.shape() != shape.as_slice() {
                return Err(Error::dim(
                    "ModelParams",
                    name.clone(),
                    format!("expected {shape:?}, got {:?}", t.shape()),
                ));
            }
        }
        if let Some(extra) = self.names().find(|n| !inventory.iter().any(|(m, _)| m == n)) {
            return Err(Error::UnknownArray(extra.to_string()));
        }
        Ok(())
    }

    /// Records every tensor on `graph` as a leaf.
    pub fn bind(&self, graph: &mut Graph, trainable: bool) -> Bound {
        Bound {
            vars: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), graph.leaf(v.clone(), trainable)))
                .collect(),
        }
    }
}

/// Parameters recorded on a graph.
#[derive(Debug, Clone)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn from_vars(vars: impl IntoIterator<Item = (String, Var)>) -> Self {
        Self {
            vars: vars.into_iter().collect(),
        }
    }

    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars.get(name).copied().ok_or_else(|| Error::MissingArray(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }

    /// Gradients of every bound parameter after a backward pass (zeros if unreached).
    pub fn gradients(&self, graph: &Graph) -> BTreeMap<String, Tensor> {
        self.vars
            .iter()
            .map(|(k, &v)| {
                let g = graph
                    .grad(v)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(graph.shape(v)));
                (k.clone(), g)
            })
            .collect()
    }
}

fn conv_column(graph: &mut Graph, p: &Bound, prefix: &str, col: &ColumnSpec, input: Var, pool_after: &[usize]) -> Result<Var> {
    let mut x = input;
    for (i, &k) in col.kernels.iter().enumerate() {
        let w = p.var(&format!("{prefix}.conv{}.w", i + 1))?;
        let b = p.var(&format!("{prefix}.conv{}.b", i + 1))?;
        x = graph.conv2d(x, w, Some(b), 1, (k - 1) / 2)?;
        x = graph.relu(x);
        if pool_after.contains(&i) {
            x = graph.maxpool2(x)?;
        }
    }
    Ok(x)
}

/// Global feature `g`: `[1, C_g, H/8, W/8]`.
pub fn gfe_forward(graph: &mut Graph, p: &Bound, cfg: &ModelConfig, image: Var) -> Result<Var> {
    let s = graph.shape(image).to_vec();
    if s.len() != 4 || s[0] != 1 || s[1] != cfg.in_channels {
        return Err(Error::dim(
            "gfe_forward",
            "image",
            format!("expected [1, {}, H, W], got {s:?}", cfg.in_channels),
        ));
    }
    for (axis, extent) in [("height", s[2]), ("width", s[3])] {
        if extent % 8 != 0 {
            return Err(Error::dim("gfe_forward", axis, format!("extent {extent} is not divisible by 8")));
        }
    }
    let mut outs = Vec::with_capacity(3);
    for (name, col) in COLUMN_NAMES.iter().zip(&cfg.gfe) {
        outs.push(conv_column(graph, p, &format!("gfe.{name}"), col, image, &GFE_POOL_AFTER)?);
    }
    graph.concat(&outs, 1)
}

/// `M0 = relu(conv1x1(g))`: `[1, 1, H/8, W/8]`.
pub fn initial_map(graph: &mut Graph, p: &Bound, g: Var) -> Result<Var> {
    let m = graph.conv2d(g, p.var("init.w")?, Some(p.var("init.b")?), 1, 0)?;
    Ok(graph.relu(m))
}

/// Context map `c_g`: `[1, 1, h, w]` at region size.
pub fn global_context(graph: &mut Graph, p: &Bound, cfg: &ModelConfig, g: Var) -> Result<Var> {
    let pooled = if cfg.context_flatten {
        let n = graph.value(g).len();
        graph.reshape(g, &[1, n])?
    } else {
        graph.mean_spatial(g)?
    };
    let hidden = graph.linear(pooled, p.var("ctx.fc1.w")?, Some(p.var("ctx.fc1.b")?))?;
    let hidden = graph.relu(hidden);
    let out = graph.linear(hidden, p.var("ctx.fc2.w")?, Some(p.var("ctx.fc2.b")?))?;
    let (rh, rw) = cfg.region;
    graph.reshape(out, &[1, 1, rh, rw])
}

fn local_refinement(graph: &mut Graph, p: &Bound, cfg: &ModelConfig, input: Var) -> Result<Var> {
    let mut outs = Vec::with_capacity(3);
    for (name, col) in COLUMN_NAMES.iter().zip(&cfg.lrn) {
        outs.push(conv_column(graph, p, &format!("lrn.{name}"), col, input, &[])?);
    }
    let cat = graph.concat(&outs, 1)?;
    graph.conv2d(cat, p.var("lrn.fuse.w")?, Some(p.var("lrn.fuse.b")?), 1, 0)
}

/// Map, recurrent state and transform history carried across refinement steps.
#[derive(Debug, Clone)]
pub struct RefinementState {
    /// Current density map `[1, 1, h_m, w_m]`.
    pub map: Var,
    pub hidden: Var,
    pub cell: Var,
    /// Completed steps.
    pub step: usize,
    /// Total steps allowed.
    pub steps: usize,
    pub trace: Vec<AffineTransform>,
}

impl RefinementState {
    pub fn new(graph: &mut Graph, cfg: &ModelConfig, m0: Var, steps: usize) -> Self {
        let hidden = graph.constant(Tensor::zeros(&[1, cfg.hidden]));
        let cell = graph.constant(Tensor::zeros(&[1, cfg.hidden]));
        Self {
            map: m0,
            hidden,
            cell,
            step: 0,
            steps,
            trace: Vec::with_capacity(steps),
        }
    }
}

fn lstm_weights(p: &Bound) -> Result<LstmWeights> {
    let mut weight = Vec::with_capacity(4);
    let mut bias = Vec::with_capacity(4);
    for gate in LSTM_GATES {
        weight.push(p.var(&format!("lstm.w_{gate}"))?);
        bias.push(p.var(&format!("lstm.b_{gate}"))?);
    }
    Ok(LstmWeights {
        weight: weight.try_into().expect("four gates"),
        bias: bias.try_into().expect("four gates"),
    })
}

/// One region-selection and refinement step.
pub fn rsar_step(
    graph: &mut Graph,
    p: &Bound,
    cfg: &ModelConfig,
    state: RefinementState,
    context: Option<Var>,
) -> Result<RefinementState> {
    if state.step >= state.steps {
        return Err(Error::Contract(format!(
            "refinement exhausted: {} of {} steps already taken",
            state.step, state.steps
        )));
    }
    let (mh, mw) = cfg.map_size();
    let (rh, rw) = cfg.region;

    let flat = graph.reshape(state.map, &[1, mh * mw])?;
    let encoded = graph.linear(flat, p.var("enc.w")?, Some(p.var("enc.b")?))?;
    let (hidden, cell) = lstm_cell(graph, encoded, state.hidden, state.cell, &lstm_weights(p)?)?;

    let raw = graph.linear(hidden, p.var("head.w")?, Some(p.var("head.b")?))?;
    let raw = graph.reshape(raw, &[cfg.mode.raw_len()])?;
    let theta = graph.compose_transform(raw, cfg.mode, cfg.s_min)?;

    let map3 = graph.reshape(state.map, &[1, mh, mw])?;
    let grid = graph.affine_grid(theta, rh, rw)?;
    let region = graph.bilinear_sample(map3, grid)?;
    let region = graph.reshape(region, &[1, 1, rh, rw])?;

    let lrn_in = match context {
        Some(cg) if cfg.context => graph.concat(&[region, cg], 1)?,
        None if !cfg.context => region,
        _ => {
            return Err(Error::Contract(
                "context map must be supplied exactly when the context branch is enabled".into(),
            ))
        }
    };
    let residual = local_refinement(graph, p, cfg, lrn_in)?;
    let residual = graph.reshape(residual, &[1, rh, rw])?;
    let scattered = graph.inverse_scatter(residual, theta, mh, mw)?;
    let scattered = graph.reshape(scattered, &[1, 1, mh, mw])?;
    let updated = graph.add(state.map, scattered)?;
    let map = graph.relu(updated);

    let mut trace = state.trace;
    trace.push(AffineTransform::from_tensor(graph.value(theta), cfg.mode));
    Ok(RefinementState {
        map,
        hidden,
        cell,
        step: state.step + 1,
        steps: state.steps,
        trace,
    })
}

/// Result of a full forward pass.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub m0: Var,
    pub mn: Var,
    /// `M_0 … M_n`.
    pub maps: Vec<Var>,
    pub trace: Vec<AffineTransform>,
}

/// Initial map followed by `n` refinement steps.
pub fn drsan_forward(graph: &mut Graph, p: &Bound, cfg: &ModelConfig, image: Var, n: usize) -> Result<ForwardOutput> {
    let g = gfe_forward(graph, p, cfg, image)?;
    let m0 = initial_map(graph, p, g)?;
    let context = if cfg.context && n > 0 {
        Some(global_context(graph, p, cfg, g)?)
    } else {
        None
    };
    let mut state = RefinementState::new(graph, cfg, m0, n);
    let mut maps = vec![m0];
    for _ in 0..n {
        state = rsar_step(graph, p, cfg, state, context)?;
        maps.push(state.map);
    }
    Ok(ForwardOutput {
        m0,
        mn: state.map,
        maps,
        trace: state.trace,
    })
}

/// Value-only prediction of `(M0, Mn, trace)` for one `[1, C, H, W]` image.
pub fn predict(params: &ModelParams, cfg: &ModelConfig, image: &Tensor, n: usize) -> Result<(Tensor, Tensor, Vec<AffineTransform>)> {
    let mut graph = Graph::new();
    let bound = params.bind(&mut graph, false);
    let x = graph.constant(image.clone());
    let out = drsan_forward(&mut graph, &bound, cfg, x, n)?;
    Ok((graph.value(out.m0).clone(), graph.value(out.mn).clone(), out.trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn filled(cfg: &ModelConfig, f: impl Fn(&str, usize) -> Float) -> ModelParams {
        let mut p = ModelParams::new();
        for (name, shape) in cfg.inventory() {
            let t = Tensor::from_fn(&shape, |i| f(&name, i));
            p.insert(name, t);
        }
        p
    }

    fn wavy(name: &str, i: usize) -> Float {
        let h = name.bytes().fold(7u64, |a, b| a.wrapping_mul(31).wrapping_add(b as u64));
        (((i as u64 * 2654435761 + h) % 1000) as Float / 1000.0 - 0.45) * 0.2
    }

    fn small_config() -> ModelConfig {
        let mut cfg = ModelConfig::with_width(32, 32, 0.5);
        cfg.hidden = 16;
        cfg.encoder_dim = 16;
        cfg.context_hidden = 8;
        cfg
    }

    #[test]
    fn zero_image_zero_biases_give_zero_features() {
        let cfg = small_config();
        let p = filled(&cfg, |name, i| if name.ends_with(".b") { 0.0 } else { wavy(name, i) });
        let mut g = Graph::new();
        let b = p.bind(&mut g, false);
        let x = g.constant(Tensor::zeros(&[1, 1, 32, 32]));
        let feat = gfe_forward(&mut g, &b, &cfg, x).unwrap();
        assert_eq!(g.shape(feat), &[1, cfg.feature_channels(), 4, 4]);
        assert!(g.value(feat).data().iter().all(|&v| v == 0.0));
        let m0 = initial_map(&mut g, &b, feat).unwrap();
        assert!(g.value(m0).data().iter().all(|&v| v == 0.0));
        let ctx = global_context(&mut g, &b, &cfg, feat).unwrap();
        assert_eq!(g.shape(ctx), &[1, 1, 2, 2]);
        assert!(g.value(ctx).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn feature_extent_is_one_eighth() {
        let cfg = ModelConfig::new(64, 64);
        assert_eq!(cfg.map_size(), (8, 8));
        assert_eq!(cfg.feature_channels(), 48);
        assert_eq!(cfg.region, (4, 4));
        let p = filled(&cfg, wavy);
        let mut g = Graph::new();
        let b = p.bind(&mut g, false);
        let x = g.constant(Tensor::from_fn(&[1, 1, 64, 64], |i| (i % 13) as Float / 13.0));
        let feat = gfe_forward(&mut g, &b, &cfg, x).unwrap();
        assert_eq!(g.shape(feat), &[1, 48, 8, 8]);
    }

    #[test]
    fn indivisible_image_is_rejected() {
        let cfg = small_config();
        let p = filled(&cfg, wavy);
        let mut g = Graph::new();
        let b = p.bind(&mut g, false);
        let x = g.constant(Tensor::zeros(&[1, 1, 36, 32]));
        assert!(matches!(gfe_forward(&mut g, &b, &cfg, x), Err(Error::Dimension { .. })));
    }

    #[test]
    fn zero_fusion_layer_keeps_initial_map() {
        let cfg = small_config();
        let p = filled(&cfg, |name, i| {
            if name.starts_with("lrn.fuse") {
                0.0
            } else if name == "init.b" {
                0.3
            } else {
                wavy(name, i)
            }
        });
        let image = Tensor::from_fn(&[1, 1, 32, 32], |i| ((i * 7) % 17) as Float / 17.0);
        let (m0, mn, trace) = predict(&p, &cfg, &image, 5).unwrap();
        assert_eq!(m0, mn);
        assert_eq!(trace.len(), 5);
    }

    #[test]
    fn zero_steps_return_initial_map() {
        let cfg = small_config();
        let p = filled(&cfg, wavy);
        let image = Tensor::from_fn(&[1, 1, 32, 32], |i| (i % 5) as Float);
        let (m0, mn, trace) = predict(&p, &cfg, &image, 0).unwrap();
        assert_eq!(m0, mn);
        assert!(trace.is_empty());
    }

    #[test]
    fn translate_mode_constrains_every_step() {
        let mut cfg = small_config();
        cfg.mode = TransformMode::Translate;
        let p = filled(&cfg, wavy);
        let image = Tensor::from_fn(&[1, 1, 32, 32], |i| (i % 9) as Float / 9.0);
        let (_, mn, trace) = predict(&p, &cfg, &image, 4).unwrap();
        assert_eq!(trace.len(), 4);
        for t in &trace {
            assert_eq!([t.theta[0], t.theta[1], t.theta[3], t.theta[4]], [1.0, 0.0, 0.0, 1.0]);
        }
        assert!(mn.data().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn exhausted_state_is_a_contract_error() {
        let cfg = small_config();
        let p = filled(&cfg, wavy);
        let mut g = Graph::new();
        let b = p.bind(&mut g, false);
        let m0 = g.constant(Tensor::zeros(&[1, 1, 4, 4]));
        let ctx = g.constant(Tensor::zeros(&[1, 1, 2, 2]));
        let state = RefinementState::new(&mut g, &cfg, m0, 1);
        let state = rsar_step(&mut g, &b, &cfg, state, Some(ctx)).unwrap();
        assert!(matches!(rsar_step(&mut g, &b, &cfg, state, Some(ctx)), Err(Error::Contract(_))));
    }

    #[test]
    fn inventory_is_sorted_and_context_dependent() {
        let mut cfg = small_config();
        let inv = cfg.inventory();
        assert!(inv.windows(2).all(|w| w[0].0 < w[1].0));
        assert!(inv.iter().any(|(n, _)| n == "ctx.fc1.w"));
        cfg.context = false;
        let inv = cfg.inventory();
        assert!(!inv.iter().any(|(n, _)| n.starts_with("ctx.")));
        let lrn_first = inv.iter().find(|(n, _)| n == "lrn.l.conv1.w").unwrap();
        assert_eq!(lrn_first.1[1], 1);
    }
}
