//! Central finite-difference checks of analytic gradients.
//!
//! The numeric side only ever evaluates forward values, so it is independent
//! of every backward rule it checks. A coordinate whose estimate changes when
//! the step is halved, or whose forward and backward slopes disagree, sits on
//! a kink (relu, max-pool switch, bilinear cell boundary); it is skipped and,
//! when sampling, replaced by a fresh draw.

use crate::error::{Error, Result};
use crate::model::{drsan_forward, Bound, ModelConfig, ModelParams};
use crate::rng::SplitMix64;
use crate::stn::{AffineTransform, TransformMode};
use crate::tensor::{lstm_cell, Float, Graph, LstmWeights, Tensor, Var};
use crate::train::{init_params_with, InitScheme};

#[derive(Debug, Clone, Copy)]
pub struct CheckOptions {
    /// Central-difference step.
    pub step: Float,
    /// Denominator floor of the relative error.
    pub floor: Float,
    /// Relative disagreement between step `h` and `h/2` estimates that marks a kink.
    pub kink_tolerance: Float,
    /// Relative disagreement between the forward and backward one-sided
    /// slopes that marks a kink sitting exactly on the evaluation point.
    pub one_sided_tolerance: Float,
    /// `None` checks every coordinate; `Some(k)` samples `k` per input tensor.
    pub per_input: Option<usize>,
    pub seed: u64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            floor: 1e-4,
            kink_tolerance: 1e-4,
            one_sided_tolerance: 1e-2,
            per_input: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CheckReport {
    pub name: String,
    pub max_rel_error: Float,
    /// Input tensor and flat index of the worst coordinate.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
    pub skipped_kinks: usize,
    /// `(coordinates checked, max relative error)` per input tensor.
    pub per_input: Vec<(usize, Float)>,
}

impl CheckReport {
    pub fn passes(&self, tolerance: Float) -> bool {
        self.checked > 0 && self.max_rel_error <= tolerance
    }
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: Float, numeric: Float, floor: Float) -> Float {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Checks `d f / d inputs` where `f` builds a one-element tensor on a fresh graph.
pub fn check_gradients<F>(name: &str, inputs: &[Tensor], f: F, opts: &CheckOptions) -> Result<CheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut graph = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| graph.param(t.clone())).collect();
    let out = f(&mut graph, &vars)?;
    graph.backward(out)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .map(|&v| graph.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(graph.shape(v))))
        .collect();
    drop(graph);

    let eval = |perturbed: &[Tensor]| -> Result<Float> {
        let mut g = Graph::new();
        let vars: Vec<Var> = perturbed.iter().map(|t| g.constant(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        Ok(g.value(out).data()[0])
    };

    let base = eval(inputs)?;
    let mut work = inputs.to_vec();
    let mut probe = |input: usize, idx: usize, h: Float| -> Result<(Float, Float)> {
        let orig = work[input].data()[idx];
        work[input].data_mut()[idx] = orig + h;
        let plus = eval(&work)?;
        work[input].data_mut()[idx] = orig - h;
        let minus = eval(&work)?;
        work[input].data_mut()[idx] = orig;
        Ok((plus, minus))
    };

    let mut report = CheckReport {
        name: name.to_string(),
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        skipped_kinks: 0,
        per_input: vec![(0, 0.0); inputs.len()],
    };
    let mut rng = SplitMix64::new(opts.seed);
    for (input, tensor) in inputs.iter().enumerate() {
        let n = tensor.len();
        let (mut wanted, exhaustive) = match opts.per_input {
            None => (n, true),
            Some(k) => (k.min(n), false),
        };
        let mut cursor = 0;
        let mut attempts = 0;
        while wanted > 0 && attempts < 20 * n.max(1) {
            attempts += 1;
            let idx = if exhaustive {
                if cursor == n {
                    break;
                }
                cursor += 1;
                cursor - 1
            } else {
                rng.below(n as u64) as usize
            };
            let h = opts.step;
            let (plus, minus) = probe(input, idx, h)?;
            let coarse = (plus - minus) / (2.0 * h);
            let (plus_half, minus_half) = probe(input, idx, h / 2.0)?;
            let fine = (plus_half - minus_half) / h;
            let (ahead, behind) = ((plus - base) / h, (base - minus) / h);
            if relative_error(coarse, fine, opts.floor) > opts.kink_tolerance
                || relative_error(ahead, behind, opts.floor) > opts.one_sided_tolerance
            {
                report.skipped_kinks += 1;
                if exhaustive {
                    wanted -= 1;
                }
                continue;
            }
            let err = relative_error(analytic[input].data()[idx], coarse, opts.floor);
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((input, idx));
            }
            let slot = &mut report.per_input[input];
            slot.0 += 1;
            slot.1 = slot.1.max(err);
            report.checked += 1;
            wanted -= 1;
        }
    }
    Ok(report)
}

fn random_tensor(rng: &mut SplitMix64, shape: &[usize], scale: Float) -> Tensor {
    Tensor::from_fn(shape, |_| rng.normal() as Float * scale)
}

fn dim(rng: &mut SplitMix64, lo: usize, hi: usize) -> usize {
    lo + rng.below((hi - lo + 1) as u64) as usize
}

/// `Σ r ⊙ out` with a fixed random `r`, turning any output into a generic scalar.
fn project(graph: &mut Graph, out: Var, seed: u64) -> Result<Var> {
    let mut rng = SplitMix64::new(seed);
    let r = random_tensor(&mut rng, graph.shape(out), 1.0);
    let r = graph.constant(r);
    let prod = graph.mul(out, r)?;
    Ok(graph.sum(prod))
}

/// Gradient checks of every differentiable primitive on randomized shapes
/// (at most 8 per axis).
pub fn primitive_suite(seed: u64) -> Result<Vec<CheckReport>> {
    let mut rng = SplitMix64::new(seed);
    let opts = CheckOptions {
        seed,
        ..CheckOptions::default()
    };
    let mut reports = Vec::new();

    // conv2d
    {
        let (n, c, k) = (dim(&mut rng, 1, 2), dim(&mut rng, 1, 3), dim(&mut rng, 1, 3));
        let (h, w) = (dim(&mut rng, 3, 8), dim(&mut rng, 3, 8));
        let ks = [1, 3, 5][rng.below(3) as usize].min(h.min(w) | 1);
        let stride = dim(&mut rng, 1, 2);
        let inputs = [
            random_tensor(&mut rng, &[n, c, h, w], 1.0),
            random_tensor(&mut rng, &[k, c, ks, ks], 0.5),
            random_tensor(&mut rng, &[k], 0.5),
        ];
        reports.push(check_gradients(
            "conv2d",
            &inputs,
            |g, v| {
                let y = g.conv2d(v[0], v[1], Some(v[2]), stride, (ks - 1) / 2)?;
                project(g, y, seed ^ 1)
            },
            &opts,
        )?);
    }
    // maxpool2
    {
        let (c, h, w) = (dim(&mut rng, 1, 3), 2 * dim(&mut rng, 1, 4), 2 * dim(&mut rng, 1, 4));
        let inputs = [random_tensor(&mut rng, &[1, c, h, w], 1.0)];
        reports.push(check_gradients(
            "maxpool2",
            &inputs,
            |g, v| {
                let y = g.maxpool2(v[0])?;
                project(g, y, seed ^ 2)
            },
            &opts,
        )?);
    }
    // fully_connected
    {
        let (n, d, m) = (dim(&mut rng, 1, 4), dim(&mut rng, 1, 8), dim(&mut rng, 1, 8));
        let inputs = [
            random_tensor(&mut rng, &[n, d], 1.0),
            random_tensor(&mut rng, &[d, m], 1.0),
            random_tensor(&mut rng, &[m], 1.0),
        ];
        reports.push(check_gradients(
            "fully_connected",
            &inputs,
            |g, v| {
                let y = g.linear(v[0], v[1], Some(v[2]))?;
                project(g, y, seed ^ 3)
            },
            &opts,
        )?);
    }
    // activations
    for (name, kind) in [
        ("relu", crate::tensor::Activation::Relu),
        ("sigmoid", crate::tensor::Activation::Sigmoid),
        ("tanh", crate::tensor::Activation::Tanh),
    ] {
        let shape = [dim(&mut rng, 1, 8), dim(&mut rng, 1, 8)];
        let inputs = [random_tensor(&mut rng, &shape, 2.0)];
        reports.push(check_gradients(
            name,
            &inputs,
            |g, v| {
                let y = g.activation(v[0], kind);
                project(g, y, seed ^ 4)
            },
            &opts,
        )?);
    }
    // lstm_cell
    {
        let (n, d, h) = (dim(&mut rng, 1, 3), dim(&mut rng, 1, 6), dim(&mut rng, 1, 6));
        let mut inputs = vec![
            random_tensor(&mut rng, &[n, d], 1.0),
            random_tensor(&mut rng, &[n, h], 0.5),
            random_tensor(&mut rng, &[n, h], 0.5),
        ];
        for _ in 0..4 {
            inputs.push(random_tensor(&mut rng, &[d + h, h], 0.5));
        }
        for _ in 0..4 {
            inputs.push(random_tensor(&mut rng, &[h], 0.5));
        }
        reports.push(check_gradients(
            "lstm_cell",
            &inputs,
            |g, v| {
                let w = LstmWeights {
                    weight: [v[3], v[4], v[5], v[6]],
                    bias: [v[7], v[8], v[9], v[10]],
                };
                let (h1, c1) = lstm_cell(g, v[0], v[1], v[2], &w)?;
                // run a second step so gradients also flow across iterations
                let (h2, _) = lstm_cell(g, v[0], h1, c1, &w)?;
                project(g, h2, seed ^ 5)
            },
            &opts,
        )?);
    }
    // bilinear_sample (map and grid)
    {
        let (c, h, w) = (dim(&mut rng, 1, 3), dim(&mut rng, 2, 8), dim(&mut rng, 2, 8));
        let (gh, gw) = (dim(&mut rng, 1, 6), dim(&mut rng, 1, 6));
        let grid = Tensor::from_fn(&[gh, gw, 2], |_| rng.uniform(-1.2, 1.2) as Float);
        let inputs = [random_tensor(&mut rng, &[c, h, w], 1.0), grid];
        reports.push(check_gradients(
            "bilinear_sample",
            &inputs,
            |g, v| {
                let y = g.bilinear_sample(v[0], v[1])?;
                project(g, y, seed ^ 6)
            },
            &opts,
        )?);
    }
    // affine_grid
    {
        let (h, w) = (dim(&mut rng, 2, 8), dim(&mut rng, 2, 8));
        let inputs = [random_tensor(&mut rng, &[2, 3], 1.0)];
        reports.push(check_gradients(
            "affine_grid",
            &inputs,
            |g, v| {
                let y = g.affine_grid(v[0], h, w)?;
                project(g, y, seed ^ 7)
            },
            &opts,
        )?);
    }
    // inverse_scatter (residual and theta; theta well-conditioned)
    {
        let (c, h, w) = (dim(&mut rng, 1, 2), dim(&mut rng, 2, 6), dim(&mut rng, 2, 6));
        let (oh, ow) = (dim(&mut rng, 2, 8), dim(&mut rng, 2, 8));
        let params = [
            rng.uniform(-1.0, 1.0),
            rng.uniform(-1.0, 1.0),
            rng.uniform(-1.0, 1.0),
            rng.uniform(-0.5, 0.5),
            rng.uniform(-0.5, 0.5),
        ];
        let theta = crate::stn::compose_transform(
            &params.map(|v| v as Float),
            TransformMode::TranslateScaleRotate,
            0.2,
        )?;
        let inputs = [random_tensor(&mut rng, &[c, h, w], 1.0), theta.to_tensor()];
        reports.push(check_gradients(
            "inverse_scatter",
            &inputs,
            |g, v| {
                let y = g.inverse_scatter(v[0], v[1], oh, ow)?;
                project(g, y, seed ^ 8)
            },
            &opts,
        )?);
    }
    // compose_transform, every mode
    for mode in [
        TransformMode::Translate,
        TransformMode::TranslateScale,
        TransformMode::TranslateScaleRotate,
        TransformMode::Raw,
    ] {
        let inputs = [random_tensor(&mut rng, &[mode.raw_len()], 1.0)];
        let s_min = 0.2;
        reports.push(check_gradients(
            &format!("compose_transform[{}]", mode.label()),
            &inputs,
            |g, v| {
                let y = g.compose_transform(v[0], mode, s_min)?;
                project(g, y, seed ^ 9)
            },
            &opts,
        )?);
    }
    Ok(reports)
}

/// Architecture used for end-to-end checks: the default desk configuration at
/// `size×size` input.
pub fn gradcheck_model_config(size: usize, mode: TransformMode) -> ModelConfig {
    let mut cfg = ModelConfig::new(size, size);
    cfg.mode = mode;
    cfg
}

/// End-to-end check of the training loss through `steps` refinement steps.
///
/// Every parameter tensor gets `per_tensor` sampled coordinates. Parameters
/// use fan-in scaled initialization with random biases so that signals reach
/// every layer. Returns the report and the parameter name of each input slot.
pub fn model_check(cfg: &ModelConfig, steps: usize, per_tensor: usize, seed: u64) -> Result<(CheckReport, Vec<String>)> {
    let params = init_params_with(cfg, seed, InitScheme::FanIn { bias_std: 0.1 });
    let mut rng = SplitMix64::new(seed ^ 0xD1CE);
    let image = Tensor::from_fn(&[1, cfg.in_channels, cfg.image_height, cfg.image_width], |_| {
        rng.next_f64() as Float
    });
    let (mh, mw) = cfg.map_size();
    let target = Tensor::from_fn(&[1, 1, mh, mw], |_| rng.next_f64() as Float);
    model_check_with(cfg, &params, &image, &target, steps, per_tensor, seed)
}

pub fn model_check_with(
    cfg: &ModelConfig,
    params: &ModelParams,
    image: &Tensor,
    target: &Tensor,
    steps: usize,
    per_tensor: usize,
    seed: u64,
) -> Result<(CheckReport, Vec<String>)> {
    let names: Vec<String> = params.names().map(str::to_string).collect();
    let tensors: Vec<Tensor> = params.iter().map(|(_, t)| t.clone()).collect();
    let opts = CheckOptions {
        step: 1e-6,
        floor: 1e-4,
        kink_tolerance: 1e-4,
        one_sided_tolerance: 1e-2,
        per_input: Some(per_tensor),
        seed,
    };
    let loss = |g: &mut Graph, vars: &[Var]| -> Result<Var> {
        let bound = Bound::from_vars(names.iter().cloned().zip(vars.iter().copied()));
        let x = g.constant(image.clone());
        let out = drsan_forward(g, &bound, cfg, x, steps)?;
        let d = g.constant(target.clone());
        crate::train::loss(g, out.m0, out.mn, d)
    };
    let report = check_gradients("drsan", &tensors, loss, &opts)?;
    Ok((report, names))
}

/// Worst-case `augmented(T)·augmented(T⁻¹) - I` over `count` random transforms
/// with `|det| ≥ min_det`.
pub fn inversion_residual(count: usize, min_det: Float, seed: u64) -> Result<Float> {
    let mut rng = SplitMix64::new(seed);
    let mut worst: Float = 0.0;
    let mut done = 0;
    while done < count {
        let theta = [(); 6].map(|_| rng.uniform(-2.0, 2.0) as Float);
        let t = AffineTransform::raw(theta);
        if t.determinant().abs() < min_det {
            continue;
        }
        let inv = crate::stn::invert_affine(&t)?;
        let (a, b) = (t.augmented(), inv.augmented());
        for i in 0..3 {
            for j in 0..3 {
                let v: Float = (0..3).map(|k| a[i][k] * b[k][j]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((v - expect).abs());
            }
        }
        done += 1;
    }
    if done == 0 {
        return Err(Error::Empty("inversion sample"));
    }
    Ok(worst)
}
