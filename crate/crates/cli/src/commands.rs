use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use drsan::ablation::{majority, run_ablation, strong_geometry_scene, AblationPlan, TEST_SEED_SALT};
use drsan::checkpoint::{load_checkpoint, save_checkpoint};
use drsan::data::{gen_synthetic, load_dataset, read_pgm, samples_from, write_dataset, Image, Sample, SceneConfig};
use drsan::density::DEFAULT_SIGMA;
use drsan::density::tiled_sum;
use drsan::eval::evaluate;
use drsan::gradcheck::{gradcheck_model_config, model_check, primitive_suite};
use drsan::model::{predict as forward_maps, ModelConfig};
use drsan::train::{train as fit, InitScheme, TrainConfig, TrainEvent};
use drsan::{Error, TransformMode};

use crate::config::Settings;
use crate::error::{CliError, CliResult};

const DEFAULT_IMAGES: usize = 8;
const DEFAULT_STEPS: usize = 4;
pub const PRIMITIVE_TOLERANCE: f64 = 1e-5;
pub const MODEL_TOLERANCE: f64 = 1e-3;

fn write(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e).into())
}

fn out_dir(s: &Settings, default: &str) -> CliResult<PathBuf> {
    let dir = s.out.clone().unwrap_or_else(|| PathBuf::from(default));
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn sigma(s: &Settings) -> f64 {
    s.sigma.unwrap_or(DEFAULT_SIGMA)
}

/// Dataset from `data`, or a synthetic suite drawn from `seed ^ salt`.
fn samples(s: &Settings, salt: u64) -> CliResult<Vec<Sample>> {
    match &s.data {
        Some(path) => Ok(load_dataset(path, sigma(s), 1)?),
        None => {
            let mut scene = s.scene(SceneConfig::default());
            scene.seed ^= salt;
            let scenes = gen_synthetic(&scene, s.images.unwrap_or(DEFAULT_IMAGES))?;
            Ok(samples_from(&scenes, sigma(s), 1)?)
        }
    }
}

fn model_config(s: &Settings, height: usize, width: usize) -> CliResult<ModelConfig> {
    let mut cfg = ModelConfig::with_width(height, width, s.channel_mult.unwrap_or(1.0));
    cfg.mode = s.mode.unwrap_or(cfg.mode);
    cfg.context = s.context.unwrap_or(cfg.context);
    cfg.context_flatten = s.context_flatten.unwrap_or(cfg.context_flatten);
    cfg.validate()?;
    Ok(cfg)
}

fn config_for(s: &Settings, samples: &[Sample]) -> CliResult<ModelConfig> {
    let first = samples.first().ok_or(Error::Empty("dataset"))?;
    let shape = first.image.shape();
    if let Some(other) = samples.iter().find(|x| x.image.shape() != shape) {
        return Err(CliError::Usage(format!(
            "all images must share one size: {} is {:?} but {} is {:?}",
            first.id,
            &shape[2..],
            other.id,
            &other.image.shape()[2..]
        )));
    }
    model_config(s, shape[2], shape[3])
}

fn train_config(s: &Settings) -> TrainConfig {
    let base = TrainConfig::default();
    TrainConfig {
        lr0: s.lr.unwrap_or(base.lr0),
        decay: s.decay.unwrap_or(base.decay),
        decay_every: s.decay_every.unwrap_or(base.decay_every),
        iterations: s.iters.unwrap_or(base.iterations),
        steps: s.n.unwrap_or(DEFAULT_STEPS),
        seed: s.seed.unwrap_or(base.seed),
        log_every: s.log_every.unwrap_or(base.log_every),
        clip_norm: s.clip_norm,
        checkpoint_every: s.checkpoint_every,
        init: s.init.unwrap_or_default(),
        ..base
    }
}

fn checkpoint_path(s: &Settings) -> CliResult<&Path> {
    s.checkpoint
        .as_deref()
        .ok_or_else(|| CliError::Usage("a checkpoint is required (--checkpoint or `checkpoint = ...`)".into()))
}

pub fn gen_data(s: &Settings) -> CliResult<()> {
    let scene = s.scene(SceneConfig::default());
    let scenes = gen_synthetic(&scene, s.images.unwrap_or(DEFAULT_IMAGES))?;
    let dir = out_dir(s, "data")?;
    let json = write_dataset(&dir, &scenes)?;
    let people: usize = scenes.iter().map(|(_, a)| a.count()).sum();
    println!("wrote {} images ({people} people) to {}", scenes.len(), json.display());
    Ok(())
}

/// Settings needed to rebuild the trained model, in config-file syntax.
fn run_config(s: &Settings, cfg: &ModelConfig, train: &TrainConfig) -> String {
    let mut text = String::from("# model settings of this run\n");
    let _ = writeln!(text, "mode = {}", cfg.mode.flag());
    let _ = writeln!(text, "context = {}", if cfg.context { "on" } else { "off" });
    let _ = writeln!(text, "context_flatten = {}", if cfg.context_flatten { "on" } else { "off" });
    let _ = writeln!(text, "channel_mult = {}", s.channel_mult.unwrap_or(1.0));
    let _ = writeln!(text, "n = {}", train.steps);
    let _ = writeln!(text, "seed = {}", train.seed);
    let _ = writeln!(text, "sigma = {}", sigma(s));
    let _ = writeln!(
        text,
        "init = {}",
        if train.init == InitScheme::default() { "narrow" } else { "scaled" }
    );
    text
}

pub fn train(s: &Settings) -> CliResult<()> {
    let samples = samples(s, 0)?;
    let cfg = config_for(s, &samples)?;
    let tc = train_config(s);
    let dir = out_dir(s, "run")?;
    let mut failure = None;
    let outcome = fit(&cfg, &tc, &samples, |event| match event {
        TrainEvent::Log(record) => println!("{record}"),
        TrainEvent::Checkpoint { iter, params } => {
            let path = dir.join(format!("checkpoint_{iter:06}.drsn"));
            if let Err(e) = save_checkpoint(params, &path) {
                failure.get_or_insert(e);
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(e.into());
    }
    let model = dir.join("model.drsn");
    save_checkpoint(&outcome.params, &model)?;
    write(&dir.join("train.log"), outcome.log_text())?;
    write(&dir.join("run.cfg"), run_config(s, &cfg, &tc))?;
    println!("wrote {} and {}", model.display(), dir.join("train.log").display());
    Ok(())
}

pub fn eval(s: &Settings) -> CliResult<()> {
    let samples = samples(s, TEST_SEED_SALT)?;
    let cfg = config_for(s, &samples)?;
    let params = load_checkpoint(checkpoint_path(s)?, &cfg)?;
    let report = evaluate(&params, &cfg, &samples, s.n.unwrap_or(DEFAULT_STEPS), None)?;
    print!("{}", report.to_table());
    if s.out.is_some() {
        let dir = out_dir(s, "eval")?;
        write(&dir.join("eval.json"), report.to_json() + "\n")?;
        write(&dir.join("eval.txt"), report.to_table())?;
    }
    Ok(())
}

/// Density values as CSV, one map row per line, shortest round-trip formatting.
pub fn density_csv(values: &[f64], width: usize) -> String {
    let mut out = String::new();
    for row in values.chunks(width) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// 8-bit rendering scaled by the per-map maximum.
pub fn heat_image(values: &[f64], height: usize, width: usize) -> Image {
    let max = values.iter().cloned().fold(0.0, f64::max);
    let pixels = values
        .iter()
        .map(|&v| if max > 0.0 { (v / max).clamp(0.0, 1.0) } else { 0.0 })
        .collect();
    Image { height, width, pixels }
}

pub fn predict(s: &Settings) -> CliResult<()> {
    let data = s
        .data
        .as_deref()
        .ok_or_else(|| CliError::Usage("predict needs --data (dataset or PGM image)".into()))?;
    let inputs: Vec<(String, drsan::Tensor)> = if data.extension().is_some_and(|e| e == "pgm") {
        let img = read_pgm(data)?;
        let id = data.file_stem().map(|x| x.to_string_lossy().into_owned()).unwrap_or_default();
        vec![(id, img.to_tensor(1))]
    } else {
        load_dataset(data, sigma(s), 1)?
            .into_iter()
            .map(|x| {
                let stem = Path::new(&x.id).file_stem().map(|v| v.to_string_lossy().into_owned());
                (stem.unwrap_or(x.id), x.image)
            })
            .collect()
    };
    let dir = out_dir(s, "predictions")?;
    let n = s.n.unwrap_or(DEFAULT_STEPS);
    let mut cfg: Option<ModelConfig> = None;
    let mut params = None;
    for (id, image) in inputs {
        let (h, w) = (image.shape()[2], image.shape()[3]);
        if cfg.as_ref().is_none_or(|c| (c.image_height, c.image_width) != (h, w)) {
            let c = model_config(s, h, w)?;
            params = Some(load_checkpoint(checkpoint_path(s)?, &c)?);
            cfg = Some(c);
        }
        let (_, mn, _) = forward_maps(params.as_ref().unwrap(), cfg.as_ref().unwrap(), &image, n)?;
        let (mh, mw) = (mn.shape()[2], mn.shape()[3]);
        let values: Vec<f64> = mn.data().iter().map(|&v| v as f64).collect();
        write(&dir.join(format!("{id}.csv")), density_csv(&values, mw))?;
        drsan::data::write_pgm(&dir.join(format!("{id}.pgm")), &heat_image(&values, mh, mw))?;
        println!("{id} {:.6}", tiled_sum(mn.data(), mh, mw));
    }
    Ok(())
}

pub fn gradcheck(s: &Settings) -> CliResult<()> {
    let seed = s.seed.unwrap_or(0);
    let mut failed = Vec::new();
    for r in primitive_suite(seed)? {
        let ok = r.passes(PRIMITIVE_TOLERANCE);
        println!(
            "{:<28} max rel error {:.3e}  ({} checked, {} kinks skipped) {}",
            r.name,
            r.max_rel_error,
            r.checked,
            r.skipped_kinks,
            if ok { "ok" } else { "FAIL" }
        );
        if !ok {
            failed.push(r.name);
        }
    }
    let mode = s.mode.unwrap_or(TransformMode::TranslateScaleRotate);
    let steps = s.n.unwrap_or(3);
    let (r, _) = model_check(&gradcheck_model_config(32, mode), steps, 3, seed)?;
    let ok = r.passes(MODEL_TOLERANCE);
    println!(
        "{:<28} max rel error {:.3e}  ({} checked, {} kinks skipped) {}",
        format!("drsan 32x32 n={steps} {}", mode.label()),
        r.max_rel_error,
        r.checked,
        r.skipped_kinks,
        if ok { "ok" } else { "FAIL" }
    );
    if !ok {
        failed.push(r.name);
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(format!("gradient check failed for {}", failed.join(", "))))
    }
}

pub fn ablation_plan(s: &Settings) -> AblationPlan {
    let base = AblationPlan::default();
    let mut scene = s.scene(strong_geometry_scene());
    scene.seed = 0;
    AblationPlan {
        scene,
        train_images: s.images.unwrap_or(base.train_images),
        test_images: s.test_images.unwrap_or(base.test_images),
        sigma: s.sigma.unwrap_or(base.sigma),
        width: s.channel_mult.unwrap_or(base.width),
        train: TrainConfig {
            iterations: s.iters.unwrap_or(base.train.iterations),
            steps: s.n.unwrap_or(base.train.steps),
            lr0: s.lr.unwrap_or(base.train.lr0),
            clip_norm: s.clip_norm,
            init: s.init.unwrap_or(base.train.init),
            ..base.train
        },
        modes: base.modes,
        eval_steps: s.eval_steps.clone().unwrap_or(base.eval_steps),
        context_rows: true,
        seeds: s.ablation_seeds.clone().unwrap_or(base.seeds),
        noise_tolerance: s.noise_tolerance.unwrap_or(base.noise_tolerance),
    }
}

pub fn ablate(s: &Settings) -> CliResult<()> {
    let plan = ablation_plan(s);
    let result = run_ablation(&plan, |msg| eprintln!("{msg}"))?;
    let table = result.to_table();
    print!("{table}");
    println!(
        "mode ordering majority: {}; context majority: {}",
        majority(&result.mode_ordering()),
        majority(&result.context_direction())
    );
    let dir = out_dir(s, "ablation")?;
    write(&dir.join("ablation.txt"), &table)?;
    let json = serde_json::to_string_pretty(&result).map_err(|e| CliError::Failed(e.to_string()))?;
    write(&dir.join("ablation.json"), json + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trips_exactly() {
        let values = [0.1, 1.0 / 3.0, 2e-17, 0.0, 5.5, 1e300];
        let text = density_csv(&values, 3);
        assert_eq!(text.lines().count(), 2);
        let back: Vec<f64> = text
            .lines()
            .flat_map(|l| l.split(',').map(|v| v.parse::<f64>().unwrap()))
            .collect();
        assert_eq!(back, values);
    }

    #[test]
    fn heat_image_scales_by_max() {
        let img = heat_image(&[0.0, 0.5, 2.0, 1.0], 2, 2);
        assert_eq!(img.pixels, vec![0.0, 0.25, 1.0, 0.5]);
        assert!(heat_image(&[0.0; 4], 2, 2).pixels.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn flags_reach_train_config() {
        let mut s = Settings::default();
        s.set("iters", "12").unwrap();
        s.set("n", "3").unwrap();
        s.set("lr", "0.001").unwrap();
        let tc = train_config(&s);
        assert_eq!((tc.iterations, tc.steps, tc.lr0, tc.seed), (12, 3, 1e-3, 7));
    }
}
