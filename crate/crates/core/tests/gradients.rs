use drsan::gradcheck::{check_gradients, model_check, primitive_suite, relative_error, CheckOptions};
use drsan::model::ModelConfig;
use drsan::{Tensor, TransformMode};

#[test]
fn relative_error_uses_floor() {
    assert_eq!(relative_error(1.0, 1.0, 1e-4), 0.0);
    assert!((relative_error(2.0, 1.0, 1e-4) - 0.5).abs() < 1e-15);
    assert!((relative_error(1e-9, 0.0, 1e-4) - 1e-5).abs() < 1e-15);
}

#[test]
fn check_detects_agreement_and_kinks() {
    let x = Tensor::new(&[4], vec![0.3, -1.2, 2.0, 1e-9]).unwrap();
    let r = check_gradients("cube", &[x.clone()], |g, v| {
        let sq = g.mul(v[0], v[0])?;
        let cube = g.mul(sq, v[0])?;
        Ok(g.sum(cube))
    }, &CheckOptions::default())
    .unwrap();
    assert!(r.passes(1e-6), "{}", r.max_rel_error);

    // relu at exactly zero is a kink: skipped, not reported as an error
    let at_kink = Tensor::new(&[2], vec![0.0, 0.7]).unwrap();
    let r = check_gradients("relu", &[at_kink], |g, v| {
        let y = g.relu(v[0]);
        Ok(g.sum(y))
    }, &CheckOptions::default())
    .unwrap();
    assert_eq!(r.skipped_kinks, 1);
    assert_eq!(r.checked, 1);
    assert!(r.passes(1e-8));
}

#[test]
fn every_primitive_matches_finite_differences() {
    for r in primitive_suite(5).unwrap() {
        assert!(r.passes(1e-5), "{}: {:.3e}", r.name, r.max_rel_error);
    }
}

#[test]
fn small_networks_match_in_every_mode() {
    for (mode, context) in [
        (TransformMode::Translate, true),
        (TransformMode::TranslateScale, true),
        (TransformMode::TranslateScaleRotate, false),
        (TransformMode::Raw, true),
    ] {
        let mut cfg = ModelConfig::with_width(32, 32, 0.25);
        cfg.hidden = 12;
        cfg.encoder_dim = 10;
        cfg.context_hidden = 6;
        cfg.mode = mode;
        cfg.context = context;
        let (r, names) = model_check(&cfg, 2, 2, 3).unwrap();
        let worst = r.worst.map(|(i, _)| names[i].clone()).unwrap_or_default();
        assert!(r.passes(1e-3), "{mode:?}: {:.3e} at {worst}", r.max_rel_error);
    }
}

#[test]
fn flatten_context_variant_matches() {
    let mut cfg = ModelConfig::with_width(32, 32, 0.25);
    cfg.hidden = 8;
    cfg.encoder_dim = 8;
    cfg.context_hidden = 6;
    cfg.context_flatten = true;
    let (r, _) = model_check(&cfg, 1, 2, 8).unwrap();
    assert!(r.passes(1e-3), "{:.3e}", r.max_rel_error);
}
