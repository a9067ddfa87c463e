use proptest::prelude::*;

use laddernet::data::pnm::decode_pnm;
use laddernet::data::{extract, sample_patches, stitch_predictions, tile_origins, GrayImage};
use laddernet::ladder::{EdgeKind, LadderConfig, LadderNet};
use laddernet::metrics::{confusion, roc_auc, ConfusionCounts};
use laddernet::nn::{DropoutPlan, Init, ParamStore};
use laddernet::tensor::{Mode, Tape, Tensor};
use laddernet::train::{AdamConfig, AdamState};

fn counts() -> impl Strategy<Value = ConfusionCounts> {
    (0u64..500, 0u64..500, 0u64..500, 0u64..500).prop_map(|(tp, tn, fp, fn_)| ConfusionCounts { tp, tn, fp, fn_ })
}

proptest! {
    #[test]
    fn fresh_adam_moves_against_the_gradient(g in prop::collection::vec(-1e3f64..1e3, 1..16), lr in 1e-4f64..0.1) {
        prop_assume!(g.iter().all(|v| v.abs() > 1e-6));
        let mut store = ParamStore::<f64>::new(0);
        let h = store.register("w", &[g.len()], Init::Zeros).unwrap();
        let slot = store.slot_of(h);
        let mut adam = AdamState::new(&store, AdamConfig::default());
        adam.step(&mut store, &[(slot, Tensor::new(&[g.len()], g.clone()).unwrap())], lr).unwrap();
        for (&w, &gv) in store.value(h).data().iter().zip(&g) {
            // first bias-corrected step is −lr·g/(|g|+eps)
            prop_assert!((w + lr * gv.signum()).abs() <= lr * 1e-6, "w {w} g {gv}");
        }
    }

    #[test]
    fn auc_ignores_monotone_transforms(
        scores in prop::collection::vec(0.0f64..1.0, 20..120),
        skew in 0.5f64..0.9,
        seed in any::<u64>(),
    ) {
        let truth: Vec<bool> = scores.iter().enumerate()
            .map(|(i, _)| i == 0 || (i != 1 && ((seed >> (i % 64)) & 1 == 1 || (i as f64 / scores.len() as f64) < skew)))
            .collect();
        let cubed: Vec<f64> = scores.iter().map(|s| s * s * s).collect();
        prop_assert_eq!(roc_auc(&scores, &truth, None).unwrap().1, roc_auc(&cubed, &truth, None).unwrap().1);
    }

    #[test]
    fn accuracy_lies_between_sensitivity_and_specificity(c in counts()) {
        prop_assume!(c.tp + c.fn_ > 0 && c.tn + c.fp > 0);
        let m = c.metrics();
        let (ac, se, sp) = (m.accuracy.unwrap(), m.sensitivity.unwrap(), m.specificity.unwrap());
        prop_assert!(se.min(sp) - 1e-12 <= ac && ac <= se.max(sp) + 1e-12);
    }

    #[test]
    fn f1_is_the_harmonic_mean(c in counts()) {
        let m = c.metrics();
        if let (Some(p), Some(r)) = (m.precision, m.recall) {
            if p + r > 0.0 {
                let f1 = m.f1.unwrap();
                prop_assert!((f1 - 2.0 * p * r / (p + r)).abs() <= 1e-12);
                prop_assert!(f1 <= (p * r).sqrt() + 1e-12);
                prop_assert!((p * r).sqrt() <= p.max(r) + 1e-12);
            }
        }
    }

    #[test]
    fn masked_scoring_equals_extracted_scoring(
        cells in prop::collection::vec((any::<bool>(), any::<bool>(), any::<bool>(), 0.0f64..1.0), 4..200)
    ) {
        let pred: Vec<bool> = cells.iter().map(|c| c.0).collect();
        let truth: Vec<bool> = cells.iter().map(|c| c.1).collect();
        let mut mask: Vec<bool> = cells.iter().map(|c| c.2).collect();
        let scores: Vec<f64> = cells.iter().map(|c| c.3).collect();
        mask[0] = true;
        let pick = |v: &[bool]| -> Vec<bool> { v.iter().zip(&mask).filter(|p| *p.1).map(|p| *p.0).collect() };
        let (sp, st) = (pick(&pred), pick(&truth));
        prop_assert_eq!(confusion(&pred, &truth, Some(&mask)).unwrap(), confusion(&sp, &st, None).unwrap());
        let ss: Vec<f64> = scores.iter().zip(&mask).filter(|p| *p.1).map(|p| *p.0).collect();
        let masked = roc_auc(&scores, &truth, Some(&mask));
        let plain = roc_auc(&ss, &st, None);
        match (masked, plain) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a.1, b.1),
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "masked {:?} vs extracted {:?}", a.is_ok(), b.is_ok()),
        }
    }

    #[test]
    fn gray_color_decodes_like_gray(w in 1usize..8, h in 1usize..8, px in prop::collection::vec(any::<u8>(), 64)) {
        let px = &px[..w * h];
        let mut p5 = format!("P5\n{w} {h}\n255\n").into_bytes();
        p5.extend_from_slice(px);
        let mut p6 = format!("P6\n{w} {h}\n255\n").into_bytes();
        for &v in px {
            p6.extend_from_slice(&[v, v, v]);
        }
        let gray = decode_pnm(&p5, "g").unwrap();
        prop_assert_eq!(&gray.pixels, &decode_pnm(&p6, "c").unwrap().pixels);
        let twice = decode_pnm(&laddernet::data::pnm::encode_pgm(w, h, &gray.pixels), "g2").unwrap();
        prop_assert_eq!(gray.pixels, twice.pixels);
    }

    #[test]
    fn forward_shape_holds_for_every_valid_size(levels in 2usize..=4, pairs in 1usize..=2, a in 1usize..=3, b in 1usize..=3) {
        let config = LadderConfig::small(levels, pairs, 2);
        let m = config.size_multiple();
        let (hh, ww) = (a * m, b * m);
        let mut net = LadderNet::<f32>::build(&config, 1).unwrap();
        let tape = Tape::new();
        let x = tape.constant(Tensor::from_fn(&[1, 1, hh, ww], |i| (i % 7) as f32 / 7.0));
        let pass = net.forward(&tape, x, Mode::Eval, DropoutPlan::Off).unwrap();
        prop_assert_eq!(pass.logits.shape(), vec![1, 2, hh, ww]);
        for e in &net.layers.topology.edges {
            if e.kind == EdgeKind::Lateral {
                prop_assert_eq!(&pass.node_shapes[&e.from], &pass.node_shapes[&e.to]);
            }
        }
    }
}

#[test]
fn extraction_commutes_with_indexing() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
    let (w, h) = (37, 29);
    let values: Vec<u32> = (0..w * h).map(|_| rng.random()).collect();
    for _ in 0..1000 {
        let size = rng.random_range(1..=12);
        let (top, left) = (rng.random_range(0..=h - size), rng.random_range(0..=w - size));
        let patch = extract(&values, w, top, left, size);
        let (r, c) = (rng.random_range(0..size), rng.random_range(0..size));
        assert_eq!(patch[r * size + c], values[(top + r) * w + left + c]);
    }
}

#[test]
fn constant_patches_stitch_to_a_constant_map() {
    let (h, w, s) = (70, 53, 48);
    let origins = tile_origins(h, w, s, 16).unwrap();
    let probs = Tensor::from_fn(&[origins.len(), 2, s, s], |i| if (i / (s * s)) % 2 == 1 { 0.37 } else { 0.63 });
    let map = stitch_predictions(&probs, &origins, h, w).unwrap();
    assert!(map.iter().all(|&v| (v - 0.37).abs() < 1e-12));
}

#[test]
fn sampled_origins_are_uniform() {
    let (side, size, draws) = (12usize, 8usize, 100_000usize);
    let image = GrayImage::new("u", side, side, vec![0.5; side * side])
        .unwrap()
        .with_label(vec![false; side * side])
        .unwrap();
    let set = sample_patches(&[image], draws, size, 17, 0.0).unwrap();
    let span = side - size + 1;
    let mut bins = vec![0usize; span * span];
    for o in &set.origins {
        bins[o.top * span + o.left] += 1;
    }
    let expected = draws as f64 / bins.len() as f64;
    let sigma = (expected * (1.0 - 1.0 / bins.len() as f64)).sqrt();
    let chi2: f64 = bins.iter().map(|&b| (b as f64 - expected).powi(2) / expected).sum();
    // Wilson–Hilferty upper 0.1% point for 24 degrees of freedom is about 51.2
    let dof = (bins.len() - 1) as f64;
    let z = 3.09;
    let critical = dof * (1.0 - 2.0 / (9.0 * dof) + z * (2.0 / (9.0 * dof)).sqrt()).powi(3);
    assert!(chi2 < critical, "chi2 {chi2} >= {critical}");
    for (i, &b) in bins.iter().enumerate() {
        assert!((b as f64 - expected).abs() <= 3.0 * sigma, "bin {i}: {b} vs {expected}±{sigma}");
    }
}
