use super::*;
use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_image(shape: (usize, usize, usize), seed: u64) -> Array3<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = Array3::zeros(shape);
    for v in img.iter_mut() {
        *v = rng.gen_range(0.0..1.0);
    }
    img
}

fn small_spec() -> ModelSpec {
    ModelSpec {
        input: (8, 8, 3),
        layers: vec![
            LayerSpec::Conv { out_ch: 4, kernel: 3 },
            LayerSpec::Relu,
            LayerSpec::AvgPool { size: 2 },
            LayerSpec::Flatten,
            LayerSpec::Dense { out_dim: 3 },
        ],
        feature_tap: 4,
    }
}

// ---- masking ----

#[test]
fn masked_input_keep_all_is_identity() {
    let img = GridImage::new(random_image((8, 8, 3), 1), 2, 2).unwrap();
    let keep = crate::subset::Subset::full(4);
    assert_eq!(img.masked_input(&keep).unwrap(), *img.pixels());
}

#[test]
fn masked_input_keep_none_is_baseline() {
    let img = GridImage::new(random_image((8, 8, 3), 2), 2, 2).unwrap();
    let masked = img.masked_input(&crate::subset::Subset::empty()).unwrap();
    let baseline = img.baseline();
    for ((_, _, ch), &v) in masked.indexed_iter() {
        assert_eq!(v, baseline[ch]);
    }
}

#[test]
fn masked_input_single_cell_masks_three_blocks() {
    let img = GridImage::new(random_image((8, 8, 3), 3), 2, 2).unwrap();
    let masked = img.masked_input(&crate::subset::Subset::singleton(2)).unwrap();
    let baseline = img.baseline();
    let mut baseline_blocks = 0;
    for cell in 0..4 {
        let (y0, y1, x0, x1) = img.cell_bounds(cell);
        let all_baseline = (y0..y1).all(|y| {
            (x0..x1).all(|x| (0..3).all(|ch| masked[(y, x, ch)] == baseline[ch]))
        });
        if cell == 2 {
            assert!(!all_baseline, "kept cell must stay untouched");
            for y in y0..y1 {
                for x in x0..x1 {
                    for ch in 0..3 {
                        assert_eq!(masked[(y, x, ch)], img.pixels()[(y, x, ch)]);
                    }
                }
            }
        } else if all_baseline {
            baseline_blocks += 1;
        }
    }
    assert_eq!(baseline_blocks, 3);
}

#[test]
fn masking_is_idempotent() {
    let img = GridImage::new(random_image((12, 12, 3), 4), 3, 3).unwrap();
    let keep = crate::subset::Subset::from_indices([0, 4, 8]);
    let once = img.masked_input(&keep).unwrap();
    let again = img.with_pixels(once.clone()).unwrap().masked_input(&keep).unwrap();
    assert_eq!(once, again);
}

#[test]
fn masked_input_rejects_out_of_grid_cells() {
    let img = GridImage::new(random_image((8, 8, 3), 5), 2, 2).unwrap();
    assert_eq!(
        img.masked_input(&crate::subset::Subset::singleton(4)),
        Err(GridError::CellOutOfRange { cell: 4, cells: 4 })
    );
}

#[test]
fn grid_image_validates_inputs() {
    assert!(matches!(
        GridImage::new(Array3::zeros((8, 8, 2)), 2, 2),
        Err(GridError::BadImage { .. })
    ));
    assert!(matches!(
        GridImage::new(Array3::zeros((8, 9, 3)), 2, 2),
        Err(GridError::BadPartition { .. })
    ));
    let mut bad = Array3::zeros((4, 4, 3));
    bad[(1, 2, 0)] = 1.5;
    assert!(matches!(
        GridImage::new(bad, 2, 2),
        Err(GridError::OutOfRange { y: 1, x: 2, .. })
    ));
}

#[test]
fn baseline_is_mean_color() {
    let mut px = Array3::zeros((2, 2, 3));
    for (i, v) in [0.0, 0.5, 1.0, 0.5].iter().enumerate() {
        px[(i / 2, i % 2, 0)] = *v;
    }
    let img = GridImage::new(px, 1, 1).unwrap();
    assert!((img.baseline()[0] - 0.5).abs() < 1e-12);
    assert_eq!(img.baseline()[1], 0.0);
}

// ---- forward ----

#[test]
fn forward_is_deterministic() {
    let model = ScorerModel::init(&small_spec(), 7).unwrap();
    let img = random_image((8, 8, 3), 6);
    assert_eq!(
        model.forward_features(&img).unwrap(),
        model.forward_features(&img).unwrap()
    );
}

#[test]
fn forward_deterministic_across_threads() {
    let model = std::sync::Arc::new(ScorerModel::init(&small_spec(), 7).unwrap());
    let img = std::sync::Arc::new(random_image((8, 8, 3), 6));
    let reference = model.forward_features(&img).unwrap();
    let handles: Vec<_> = (0..4)
        .map(|_| {
            let (m, i) = (model.clone(), img.clone());
            std::thread::spawn(move || m.forward_features(&i).unwrap())
        })
        .collect();
    for h in handles {
        assert_eq!(h.join().unwrap(), reference);
    }
}

#[test]
fn zero_weights_give_zero_features() {
    let model = ScorerModel::zeros(&small_spec()).unwrap();
    let img = random_image((8, 8, 3), 8);
    let features = model.forward_features(&img).unwrap();
    assert!(features.iter().all(|&v| v == 0.0));
}

#[test]
fn conv_matches_direct_computation() {
    // single 3x3 conv over a known 4x4 single-channel input, features tapped
    // right after the conv; the oracle below pads explicitly and convolves
    // with its own loops
    let weight: Vec<f32> = vec![0.5, -1.0, 0.25, 2.0, 0.0, -0.5, 1.0, 0.75, -0.25];
    let bias = vec![0.125f32];
    let layers = vec![Layer::Conv {
        weight: weight.clone(),
        bias: bias.clone(),
        out_ch: 1,
        in_ch: 1,
        kernel: 3,
    }];
    let model = ScorerModel::from_layers((4, 4, 1), layers, 1).unwrap();
    let mut img = Array3::zeros((4, 4, 1));
    for y in 0..4 {
        for x in 0..4 {
            img[(y, x, 0)] = (y * 4 + x) as f64 / 16.0;
        }
    }

    let mut padded = vec![vec![0.0f64; 6]; 6];
    for y in 0..4 {
        for x in 0..4 {
            padded[y + 1][x + 1] = img[(y, x, 0)];
        }
    }
    let mut expected = vec![0.0f64; 16];
    for y in 0..4 {
        for x in 0..4 {
            let mut acc = bias[0] as f64;
            for ky in 0..3 {
                for kx in 0..3 {
                    acc += weight[ky * 3 + kx] as f64 * padded[y + ky][x + kx];
                }
            }
            expected[y * 4 + x] = acc;
        }
    }

    let features = model.forward_features(&img).unwrap();
    for (got, want) in features.iter().zip(&expected) {
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }
}

#[test]
fn forward_rejects_shape_mismatch() {
    let model = ScorerModel::init(&small_spec(), 7).unwrap();
    let img = random_image((8, 9, 3), 6);
    assert!(matches!(
        model.forward_features(&img),
        Err(ScorerError::ShapeMismatch { .. })
    ));
}

// ---- gradients ----

fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs()).max(1e-8);
    (a - b).abs() / scale
}

fn gradcheck(model: &ScorerModel, img: &Array3<f64>, coords: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = model.feature_dim();
    let cotangent: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let grad = model.input_gradient(img, &cotangent).unwrap();
    let dot = |image: &Array3<f64>| -> f64 {
        model
            .forward_features(image)
            .unwrap()
            .iter()
            .zip(&cotangent)
            .map(|(f, c)| f * c)
            .sum()
    };
    let (h, w, c) = img.dim();
    let center = dot(img);
    let step = 1e-3;
    let mut checked = 0;
    let mut attempts = 0;
    while checked < coords {
        attempts += 1;
        assert!(attempts < coords * 20, "too many rectifier kinks near the test point");
        let idx = (
            rng.gen_range(0..h),
            rng.gen_range(0..w),
            rng.gen_range(0..c),
        );
        let mut plus = img.clone();
        plus[idx] += step;
        let mut minus = img.clone();
        minus[idx] -= step;
        let (fp, fm) = (dot(&plus), dot(&minus));
        // the stack is piecewise linear, so any curvature over the probe
        // segment means a rectifier kink sits inside it and the central
        // difference is not a valid derivative oracle there
        let curvature = (fp - 2.0 * center + fm).abs();
        if curvature > 1e-9 * fp.abs().max(fm.abs()).max(1.0) {
            continue;
        }
        let fd = (fp - fm) / (2.0 * step);
        let err = relative_error(grad[idx], fd);
        assert!(
            err <= 1e-3,
            "coordinate {idx:?}: analytic {} vs fd {fd}, rel err {err}",
            grad[idx]
        );
        checked += 1;
    }
}

#[test]
fn input_gradient_matches_finite_differences() {
    let model = ScorerModel::init(&small_spec(), 21).unwrap();
    let img = random_image((8, 8, 3), 22);
    gradcheck(&model, &img, 25, 23);
}

#[test]
fn input_gradient_per_layer_types() {
    // every shipped layer type appears on some tap path
    let specs = [
        // conv only
        ModelSpec {
            input: (6, 6, 2),
            layers: vec![LayerSpec::Conv { out_ch: 3, kernel: 3 }],
            feature_tap: 1,
        },
        // conv + relu
        ModelSpec {
            input: (6, 6, 2),
            layers: vec![LayerSpec::Conv { out_ch: 3, kernel: 3 }, LayerSpec::Relu],
            feature_tap: 2,
        },
        // pooling
        ModelSpec {
            input: (6, 6, 2),
            layers: vec![LayerSpec::AvgPool { size: 3 }],
            feature_tap: 1,
        },
        // dense head
        ModelSpec {
            input: (4, 4, 2),
            layers: vec![LayerSpec::Flatten, LayerSpec::Dense { out_dim: 5 }],
            feature_tap: 2,
        },
    ];
    for (i, spec) in specs.iter().enumerate() {
        let model = ScorerModel::init(spec, 30 + i as u64).unwrap();
        let img = random_image(spec.input, 40 + i as u64);
        gradcheck(&model, &img, 12, 50 + i as u64);
    }
}

#[test]
fn zero_cotangent_gives_zero_gradient() {
    let model = ScorerModel::init(&small_spec(), 7).unwrap();
    let img = random_image((8, 8, 3), 9);
    let grad = model
        .input_gradient(&img, &vec![0.0; model.feature_dim()])
        .unwrap();
    assert!(grad.iter().all(|&v| v == 0.0));
}

#[test]
fn linear_model_gradient_independent_of_input() {
    let spec = ModelSpec {
        input: (4, 4, 3),
        layers: vec![LayerSpec::Flatten, LayerSpec::Dense { out_dim: 6 }],
        feature_tap: 2,
    };
    let model = ScorerModel::init(&spec, 11).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let cotangent: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let g1 = model
        .input_gradient(&random_image((4, 4, 3), 13), &cotangent)
        .unwrap();
    let g2 = model
        .input_gradient(&random_image((4, 4, 3), 14), &cotangent)
        .unwrap();
    assert_eq!(g1, g2);
}

#[test]
fn input_gradient_rejects_bad_cotangent() {
    let model = ScorerModel::init(&small_spec(), 7).unwrap();
    let img = random_image((8, 8, 3), 6);
    assert!(matches!(
        model.input_gradient(&img, &[1.0, 2.0]),
        Err(ScorerError::CotangentMismatch { .. })
    ));
}

// ---- training ----

#[test]
fn training_learns_shapes() {
    let dataset = shapes_dataset(40, 64, 5);
    let spec = ModelSpec::toy((64, 64, 3), 2);
    let config = TrainConfig {
        epochs: 20,
        ..TrainConfig::default()
    };
    let (_, report) = train_toy(&spec, &dataset, &config).unwrap();
    assert!(
        report.train_accuracy > 0.9,
        "accuracy {}",
        report.train_accuracy
    );
}

#[test]
fn zero_epochs_returns_initialisation() {
    let dataset = shapes_dataset(4, 16, 1);
    let spec = ModelSpec {
        input: (16, 16, 3),
        layers: vec![LayerSpec::Flatten, LayerSpec::Dense { out_dim: 2 }],
        feature_tap: 1,
    };
    let config = TrainConfig {
        epochs: 0,
        seed: 9,
        ..TrainConfig::default()
    };
    let (trained, _) = train_toy(&spec, &dataset, &config).unwrap();
    let init = ScorerModel::init(&spec, 9).unwrap();
    for (a, b) in trained.layers().iter().zip(init.layers()) {
        match (a, b) {
            (
                Layer::Dense { weight: wa, bias: ba, .. },
                Layer::Dense { weight: wb, bias: bb, .. },
            ) => {
                assert_eq!(wa, wb);
                assert_eq!(ba, bb);
            }
            _ => {}
        }
    }
}

#[test]
fn training_is_seed_deterministic() {
    let dataset = shapes_dataset(8, 16, 2);
    let spec = ModelSpec {
        input: (16, 16, 3),
        layers: vec![
            LayerSpec::Conv { out_ch: 2, kernel: 3 },
            LayerSpec::Relu,
            LayerSpec::AvgPool { size: 4 },
            LayerSpec::Flatten,
            LayerSpec::Dense { out_dim: 2 },
        ],
        feature_tap: 4,
    };
    let config = TrainConfig {
        epochs: 3,
        seed: 3,
        ..TrainConfig::default()
    };
    let (a, _) = train_toy(&spec, &dataset, &config).unwrap();
    let (b, _) = train_toy(&spec, &dataset, &config).unwrap();
    for (la, lb) in a.layers().iter().zip(b.layers()) {
        match (la, lb) {
            (Layer::Conv { weight: wa, .. }, Layer::Conv { weight: wb, .. }) => {
                assert_eq!(wa, wb)
            }
            (Layer::Dense { weight: wa, .. }, Layer::Dense { weight: wb, .. }) => {
                assert_eq!(wa, wb)
            }
            _ => {}
        }
    }
}

#[test]
fn training_rejects_degenerate_datasets() {
    let spec = ModelSpec::toy((16, 16, 3), 2);
    let empty = Dataset {
        images: vec![],
        classes: 2,
    };
    assert!(matches!(
        train_toy(&spec, &empty, &TrainConfig::default()),
        Err(ScorerError::EmptyDataset)
    ));
    let one_class = Dataset {
        images: shapes_dataset(2, 16, 0).images,
        classes: 1,
    };
    assert!(matches!(
        train_toy(&spec, &one_class, &TrainConfig::default()),
        Err(ScorerError::TooFewClasses(1))
    ));
}

// ---- game bridge ----

#[test]
fn game_from_image_matches_direct_evaluation() {
    let model = std::sync::Arc::new(ScorerModel::init(&small_spec(), 17).unwrap());
    let image = std::sync::Arc::new(GridImage::new(random_image((8, 8, 3), 18), 2, 2).unwrap());
    let game = game_from_image(model.clone(), image.clone());
    assert_eq!(game.n(), 4);
    assert_eq!(game.d(), model.feature_dim());

    let full = game.value(&crate::subset::Subset::full(4));
    assert_eq!(*full, model.forward_features(image.pixels()).unwrap());

    let empty = game.value(&crate::subset::Subset::empty());
    let all_masked = image.masked_input(&crate::subset::Subset::empty()).unwrap();
    assert_eq!(*empty, model.forward_features(&all_masked).unwrap());

    // the empty-context identity holds bit-exactly: both sides reduce to the
    // same pair of cached evaluations
    for i in 0..4 {
        assert_eq!(
            game.delta_identity_residual(i, &crate::subset::Subset::empty())
                .unwrap(),
            0.0
        );
    }
}

// ---- weights file ----

#[test]
fn weights_roundtrip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ilens");
    let model = ScorerModel::init(&ModelSpec::toy((16, 16, 3), 2), 77).unwrap();
    save_model(&model, &path).unwrap();
    let loaded = load_model(&path).unwrap();
    assert_eq!(model.input_shape(), loaded.input_shape());
    assert_eq!(model.feature_tap(), loaded.feature_tap());
    assert_eq!(model.layers().len(), loaded.layers().len());
    for (a, b) in model.layers().iter().zip(loaded.layers()) {
        match (a, b) {
            (
                Layer::Conv { weight: wa, bias: ba, .. },
                Layer::Conv { weight: wb, bias: bb, .. },
            ) => {
                assert_eq!(wa, wb);
                assert_eq!(ba, bb);
            }
            (
                Layer::Dense { weight: wa, bias: ba, .. },
                Layer::Dense { weight: wb, bias: bb, .. },
            ) => {
                assert_eq!(wa, wb);
                assert_eq!(ba, bb);
            }
            (Layer::Relu, Layer::Relu) | (Layer::Flatten, Layer::Flatten) => {}
            (Layer::AvgPool { size: sa }, Layer::AvgPool { size: sb }) => assert_eq!(sa, sb),
            (a, b) => panic!("layer mismatch: {a:?} vs {b:?}"),
        }
    }
    // same file bytes when saved again
    let path2 = dir.path().join("model2.ilens");
    save_model(&loaded, &path2).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
}

#[test]
fn weights_load_rejects_garbage() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.ilens");
    std::fs::write(&path, b"NOTILENS___").unwrap();
    assert!(matches!(
        load_model(&path),
        Err(ScorerError::BadWeights(_))
    ));
    std::fs::write(&path, b"ILENS1\x01\x00").unwrap();
    assert!(matches!(
        load_model(&path),
        Err(ScorerError::BadWeights(_))
    ));
}
