use std::collections::BTreeMap;

use drsan::checkpoint::{decode, encode};
use drsan::data::{augment_crop_resize, parse_annotations, parse_pgm, Image, Sample};
use drsan::eval::metrics;
use drsan::model::ModelParams;
use drsan::stn::{invert_affine, BilinearTap};
use drsan::train::{adam_step, lr_at, AdamConfig, OptimizerState, TrainConfig};
use drsan::{downsample_sum, generate_density, sum_count, AffineTransform, Annotation, Float, SplitMix64, Tensor};
use proptest::prelude::*;

fn annotation(w: usize, h: usize, pts: Vec<(f64, f64)>) -> Annotation {
    Annotation {
        image: "p".into(),
        width: w,
        height: h,
        points: pts.into_iter().map(|(x, y)| [x * w as f64, y * h as f64]).collect(),
    }
}

fn unit_points(max: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.0..1.0f64, 0.0..1.0f64), 0..max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn inverse_composes_to_identity(
        a in 0.3..2.0f64, d in 0.3..2.0f64,
        b in -0.2..0.2f64, c in -0.2..0.2f64,
        tx in -1.0..1.0f64, ty in -1.0..1.0f64,
        flip in any::<bool>(),
    ) {
        let a = if flip { -a } else { a };
        let t = AffineTransform::raw([a as Float, b as Float, tx as Float, c as Float, d as Float, ty as Float]);
        let inv = invert_affine(&t).unwrap();
        let (p, q) = (t.augmented(), inv.augmented());
        for i in 0..3 {
            for j in 0..3 {
                let v: Float = (0..3).map(|k| p[i][k] * q[k][j]).sum();
                let e = if i == j { 1.0 } else { 0.0 };
                prop_assert!((v - e).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn density_conserves_count(pts in unit_points(40), sigma in 0.05..6.0f64, wb in 1usize..5, hb in 1usize..5) {
        let ann = annotation(8 * wb, 8 * hb, pts);
        let map = generate_density(&ann, sigma).unwrap();
        let c = ann.count() as f64;
        prop_assert!((sum_count(&map) - c).abs() <= 1e-6 * c.max(1.0));
        prop_assert!(map.values.data().iter().all(|&v| v >= 0.0));
        let small = downsample_sum(&map, 8).unwrap();
        prop_assert_eq!(sum_count(&small), sum_count(&map));
    }

    #[test]
    fn bilinear_weights_partition_unity(x in -3.0..12.0f64, y in -3.0..12.0f64) {
        let tap = BilinearTap::new(x as Float, y as Float, 10, 10);
        let s: Float = tap.weights().iter().sum();
        prop_assert!((s - 1.0).abs() <= 2.0 * Float::EPSILON);
    }

    #[test]
    fn augmentation_keeps_points_inside(pts in unit_points(25), seed in any::<u64>(), oh in 1usize..6, ow in 1usize..6) {
        let ann = annotation(48, 40, pts);
        let img = Image::new(40, 48, vec![0.25; 40 * 48]).unwrap();
        let mut rng = SplitMix64::new(seed);
        let (out, out_ann) = augment_crop_resize(&img, &ann, (0.5, 0.9), (8 * oh, 8 * ow), &mut rng).unwrap();
        prop_assert!(out_ann.validate().is_ok());
        prop_assert!(out_ann.count() <= ann.count());
        let sample = Sample::new(&out, out_ann.clone(), 2.0, 1).unwrap();
        let c = out_ann.count() as f64;
        prop_assert!((sample.target.sum() as f64 - c).abs() <= 1e-6 * c.max(1.0));
    }

    #[test]
    fn lr_never_increases(a in 0usize..100_000, b in 0usize..100_000) {
        let cfg = TrainConfig::default();
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(lr_at(hi, &cfg) <= lr_at(lo, &cfg));
    }

    #[test]
    fn mae_never_exceeds_mse(pairs in prop::collection::vec((0.0..100.0f64, 0.0..100.0f64), 1..30)) {
        let (mae, mse) = metrics(&pairs).unwrap();
        prop_assert!(mae <= mse + 1e-12);
    }

    #[test]
    fn adam_keeps_shapes_and_finiteness(
        values in prop::collection::vec(-1e3..1e3f64, 1..20),
        grads in prop::collection::vec(-1e6..1e6f64, 20),
        steps in 1usize..4,
    ) {
        let n = values.len();
        let mut params = ModelParams::new();
        params.insert("w", Tensor::new(&[n], values.iter().map(|&v| v as Float).collect()).unwrap());
        let g: BTreeMap<String, Tensor> =
            [("w".to_string(), Tensor::new(&[n], grads[..n].iter().map(|&v| v as Float).collect()).unwrap())].into();
        let mut opt = OptimizerState::default();
        for _ in 0..steps {
            adam_step(&mut params, &g, &mut opt, 1e-2, &AdamConfig::default()).unwrap();
        }
        let w = params.get("w").unwrap();
        prop_assert_eq!(w.shape(), &[n][..]);
        prop_assert!(w.all_finite());
    }

    #[test]
    fn checkpoint_round_trip(tensors in prop::collection::vec(prop::collection::vec(any::<f64>(), 1..12), 1..6)) {
        let mut params = ModelParams::new();
        for (i, t) in tensors.iter().enumerate() {
            params.insert(format!("p{i}"), Tensor::new(&[t.len()], t.iter().map(|&v| v as Float).collect()).unwrap());
        }
        let bytes = encode(&params).unwrap();
        let back = decode(&bytes).unwrap();
        prop_assert_eq!(encode(&back).unwrap(), bytes);
    }

    #[test]
    fn pgm_round_trip(bytes in prop::collection::vec(any::<u8>(), 1..64), w in 1usize..8) {
        let h = bytes.len().div_ceil(w);
        let mut raster = bytes.clone();
        raster.resize(w * h, 0);
        let mut file = format!("P5\n{w} {h}\n255\n").into_bytes();
        file.extend(&raster);
        let img = parse_pgm(&file).unwrap();
        prop_assert_eq!(img.to_bytes(), raster);
    }

    #[test]
    fn annotation_json_round_trip(pts in unit_points(20)) {
        let ann = annotation(64, 48, pts);
        let text = serde_json::to_string(&vec![ann.clone()]).unwrap();
        let back = parse_annotations(&text).unwrap();
        prop_assert_eq!(&back[0].points, &ann.points);
    }

    #[test]
    fn truncated_annotation_documents_are_rejected(cut in 1usize..60) {
        let text = r#"[{"image": "a.pgm", "width": 16, "height": 16, "points": [[1.5, 2.25], [3.0, 4.0]]}]"#;
        let cut = cut.min(text.len() - 1);
        let err = parse_annotations(&text[..cut]).unwrap_err().to_string();
        prop_assert!(err.contains("line") && err.contains("column"), "{}", err);
    }
}
