//! Ablation grids over transform modes, refinement steps and global context.
//!
//! Each seed draws its own synthetic train/test suites. One model is trained
//! per transform mode (context on) plus one T+S+R model with context off; the
//! mode models are then evaluated at every refinement-step count of the grid.

use std::fmt::Write as _;

use serde::Serialize;

use crate::data::{gen_synthetic, samples_from, Sample, SceneConfig};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::model::ModelConfig;
use crate::stn::TransformMode;
use crate::train::{train, InitScheme, TrainConfig};

/// Test suites are drawn from `seed ^ TEST_SEED_SALT` so they never share scenes with training.
pub const TEST_SEED_SALT: u64 = 0x7E57_0000;

#[derive(Debug, Clone, PartialEq)]
pub struct AblationPlan {
    /// Scene generator; its `seed` is replaced per run.
    pub scene: SceneConfig,
    pub train_images: usize,
    pub test_images: usize,
    pub sigma: f64,
    /// Channel multiplier of every conv layer.
    pub width: f64,
    /// Training schedule; `steps` is the refinement depth used while training.
    pub train: TrainConfig,
    pub modes: Vec<TransformMode>,
    /// Refinement depths evaluated for every mode model.
    pub eval_steps: Vec<usize>,
    /// Adds the context on/off pair at the training depth.
    pub context_rows: bool,
    pub seeds: Vec<u64>,
    /// Allowed MAE inversion, as a fraction of the mean test count, before a
    /// directional check counts as violated.
    pub noise_tolerance: f64,
}

impl Default for AblationPlan {
    fn default() -> Self {
        Self {
            scene: strong_geometry_scene(),
            train_images: 16,
            test_images: 16,
            sigma: 4.0,
            width: 0.5,
            train: TrainConfig {
                iterations: 1500,
                steps: 10,
                init: InitScheme::scaled(),
                ..TrainConfig::default()
            },
            modes: TransformMode::ABLATION.to_vec(),
            eval_steps: vec![0, 10, 20, 30, 40],
            context_rows: true,
            seeds: vec![1, 2, 3],
            noise_tolerance: 0.02,
        }
    }
}

/// Synthetic suite with a strong perspective gradient and wide rotations.
pub fn strong_geometry_scene() -> SceneConfig {
    SceneConfig {
        height: 64,
        width: 64,
        count_range: (6, 30),
        radius_range: (1.0, 4.0),
        perspective: 1.0,
        rotation_deg: (-60.0, 60.0),
        noise: 0.03,
        seed: 0,
    }
}

impl AblationPlan {
    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.train.validate()?;
        if self.seeds.is_empty() || self.modes.is_empty() || self.train_images == 0 || self.test_images == 0 {
            return Err(Error::Empty("ablation plan"));
        }
        Ok(())
    }

    fn model(&self, mode: TransformMode, context: bool) -> ModelConfig {
        let mut cfg = ModelConfig::with_width(self.scene.height, self.scene.width, self.width);
        cfg.mode = mode;
        cfg.context = context;
        cfg
    }

    fn suites(&self, seed: u64) -> Result<(Vec<Sample>, Vec<Sample>)> {
        let train_scene = SceneConfig { seed, ..self.scene.clone() };
        let test_scene = SceneConfig {
            seed: seed ^ TEST_SEED_SALT,
            ..self.scene.clone()
        };
        let train = samples_from(&gen_synthetic(&train_scene, self.train_images)?, self.sigma, 1)?;
        let test = samples_from(&gen_synthetic(&test_scene, self.test_images)?, self.sigma, 1)?;
        Ok((train, test))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub seed: u64,
    pub mode: String,
    pub context: bool,
    pub steps: usize,
    pub mae: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationResult {
    pub train_steps: usize,
    pub eval_steps: Vec<usize>,
    /// Mean ground-truth count of each seed's test suite.
    pub mean_counts: Vec<(u64, f64)>,
    pub noise_tolerance: f64,
    pub rows: Vec<AblationRow>,
}

/// Outcome of a directional check on one seed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectionCheck {
    pub seed: u64,
    pub holds: bool,
    pub detail: String,
}

pub fn run_ablation(plan: &AblationPlan, mut progress: impl FnMut(&str)) -> Result<AblationResult> {
    plan.validate()?;
    let mut rows = Vec::new();
    let mut mean_counts = Vec::new();
    let train_cfg_for = |seed: u64| TrainConfig { seed, ..plan.train.clone() };
    for &seed in &plan.seeds {
        let (train_set, test_set) = plan.suites(seed)?;
        let mean = test_set.iter().map(Sample::count).sum::<f64>() / test_set.len() as f64;
        mean_counts.push((seed, mean));
        let mut depths = plan.eval_steps.clone();
        if !depths.contains(&plan.train.steps) {
            depths.push(plan.train.steps);
        }
        let mut runs: Vec<(TransformMode, bool, Vec<usize>)> =
            plan.modes.iter().map(|&m| (m, true, depths.clone())).collect();
        if plan.context_rows {
            runs.push((TransformMode::TranslateScaleRotate, false, vec![plan.train.steps]));
        }
        for (mode, context, steps) in runs {
            progress(&format!(
                "seed {seed}: training {} context {}",
                mode.label(),
                if context { "on" } else { "off" }
            ));
            let model = plan.model(mode, context);
            let outcome = train(&model, &train_cfg_for(seed), &train_set, |_| {})?;
            for n in steps {
                let report = evaluate(&outcome.params, &model, &test_set, n, None)?;
                rows.push(AblationRow {
                    seed,
                    mode: mode.label().to_string(),
                    context,
                    steps: n,
                    mae: report.mae,
                    mse: report.mse,
                });
            }
        }
    }
    Ok(AblationResult {
        train_steps: plan.train.steps,
        eval_steps: plan.eval_steps.clone(),
        mean_counts,
        noise_tolerance: plan.noise_tolerance,
        rows,
    })
}

impl AblationResult {
    fn find(&self, seed: u64, mode: &str, context: bool, steps: usize) -> Option<&AblationRow> {
        self.rows
            .iter()
            .find(|r| r.seed == seed && r.mode == mode && r.context == context && r.steps == steps)
    }

    fn seeds(&self) -> Vec<u64> {
        self.mean_counts.iter().map(|&(s, _)| s).collect()
    }

    fn tolerance(&self, seed: u64) -> f64 {
        let mean = self.mean_counts.iter().find(|m| m.0 == seed).map_or(0.0, |m| m.1);
        self.noise_tolerance * mean
    }

    /// `MAE(T) ≥ MAE(T+S) ≥ MAE(T+S+R)` at the training depth, up to the noise tolerance.
    pub fn mode_ordering(&self) -> Vec<DirectionCheck> {
        let labels = TransformMode::ABLATION.map(TransformMode::label);
        self.seeds()
            .into_iter()
            .filter_map(|seed| {
                let maes: Vec<f64> = labels
                    .iter()
                    .map(|m| self.find(seed, m, true, self.train_steps).map(|r| r.mae))
                    .collect::<Option<_>>()?;
                let tol = self.tolerance(seed);
                let holds = maes.windows(2).all(|w| w[0] + tol >= w[1]);
                Some(DirectionCheck {
                    seed,
                    holds,
                    detail: format!(
                        "T {:.3} / T+S {:.3} / T+S+R {:.3} (tolerance {:.3})",
                        maes[0], maes[1], maes[2], tol
                    ),
                })
            })
            .collect()
    }

    /// `MAE(context off) ≥ MAE(context on)` for T+S+R at the training depth.
    pub fn context_direction(&self) -> Vec<DirectionCheck> {
        let mode = TransformMode::TranslateScaleRotate.label();
        self.seeds()
            .into_iter()
            .filter_map(|seed| {
                let on = self.find(seed, mode, true, self.train_steps)?.mae;
                let off = self.find(seed, mode, false, self.train_steps)?.mae;
                Some(DirectionCheck {
                    seed,
                    holds: off >= on,
                    detail: format!("off {off:.3} / on {on:.3}"),
                })
            })
            .collect()
    }

    /// Rows of the comparison table for one seed: the (mode, n) grid with
    /// context on, then every model at the training depth.
    pub fn seed_rows(&self, seed: u64) -> Vec<&AblationRow> {
        let mut grid: Vec<&AblationRow> = self
            .rows
            .iter()
            .filter(|r| r.seed == seed && r.context && self.eval_steps.contains(&r.steps))
            .collect();
        grid.sort_by_key(|r| (mode_rank(&r.mode), r.steps));
        let mut trained: Vec<&AblationRow> = self
            .rows
            .iter()
            .filter(|r| r.seed == seed && r.steps == self.train_steps)
            .collect();
        trained.sort_by_key(|r| (!r.context, mode_rank(&r.mode)));
        grid.extend(trained);
        grid
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        for (seed, mean) in &self.mean_counts {
            let _ = writeln!(s, "seed {seed} (mean test count {mean:.3}, trained with n = {})", self.train_steps);
            let _ = writeln!(s, "  {:<6} {:>7} {:>4} {:>10} {:>10}", "mode", "context", "n", "MAE", "MSE");
            for r in self.seed_rows(*seed) {
                let _ = writeln!(
                    s,
                    "  {:<6} {:>7} {:>4} {:>10.4} {:>10.4}",
                    r.mode,
                    if r.context { "on" } else { "off" },
                    r.steps,
                    r.mae,
                    r.mse
                );
            }
        }
        let _ = writeln!(s, "mode ordering T >= T+S >= T+S+R:");
        for c in self.mode_ordering() {
            let _ = writeln!(s, "  seed {}: {} {}", c.seed, if c.holds { "holds" } else { "violated" }, c.detail);
        }
        if self.rows.iter().any(|r| !r.context) {
            let _ = writeln!(s, "context off >= context on:");
            for c in self.context_direction() {
                let _ = writeln!(s, "  seed {}: {} {}", c.seed, if c.holds { "holds" } else { "violated" }, c.detail);
            }
        }
        s
    }
}

fn mode_rank(label: &str) -> usize {
    ["T", "T+S", "T+S+R", "RAW"].iter().position(|m| *m == label).unwrap_or(4)
}

/// `true` when more than half of the checks hold.
pub fn majority(checks: &[DirectionCheck]) -> bool {
    !checks.is_empty() && 2 * checks.iter().filter(|c| c.holds).count() > checks.len()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_plan() -> AblationPlan {
        AblationPlan {
            scene: SceneConfig {
                height: 32,
                width: 32,
                count_range: (2, 6),
                ..strong_geometry_scene()
            },
            train_images: 2,
            test_images: 2,
            sigma: 2.0,
            width: 0.25,
            train: TrainConfig {
                iterations: 2,
                steps: 6,
                ..TrainConfig::default()
            },
            modes: TransformMode::ABLATION.to_vec(),
            eval_steps: vec![0, 1, 2, 3, 4],
            context_rows: true,
            seeds: vec![5],
            noise_tolerance: 0.02,
        }
    }

    #[test]
    fn grid_then_every_model_at_training_depth() {
        let result = run_ablation(&tiny_plan(), |_| {}).unwrap();
        let rows = result.seed_rows(5);
        assert_eq!(rows.len(), 15 + 4);
        assert!(rows[..15].iter().all(|r| r.context && r.steps < 6));
        let trained: Vec<_> = rows[15..].iter().map(|r| (r.mode.as_str(), r.context, r.steps)).collect();
        assert_eq!(
            trained,
            [("T", true, 6), ("T+S", true, 6), ("T+S+R", true, 6), ("T+S+R", false, 6)]
        );
        assert_eq!(result.mode_ordering().len(), 1);
        assert_eq!(result.context_direction().len(), 1);
        let table = result.to_table();
        assert_eq!(table.lines().filter(|l| l.starts_with("  T")).count(), 19);
        assert!(table.contains("mode ordering"));
    }

    #[test]
    fn majority_rule() {
        let c = |holds| DirectionCheck {
            seed: 0,
            holds,
            detail: String::new(),
        };
        assert!(majority(&[c(true), c(false), c(true)]));
        assert!(!majority(&[c(true), c(false), c(false)]));
        assert!(!majority(&[]));
    }
}
