use flowgate::classifier::{extract_features, FeatureLayout, StreamMode};
use flowgate::eval::{EvalConfig, EvalData, InputKind, Suite, Workbench};
use flowgate::flow::{estimate_flow, FlowConfig};
use flowgate::imaging::ImageBuffer;
use flowgate::pipeline::{analyze, PipelineConfig};
use flowgate::protocol::ProtocolConfig;
use flowgate::sequence::capture_triplet;
use flowgate::simulator::{make_dataset, AttackClass, Scene, SceneSpec};

fn residual(class: AttackClass, seed: u64) -> f64 {
    let scene = Scene::new(SceneSpec::sample(class, seed)).unwrap();
    let t = capture_triplet(&scene, &ProtocolConfig::default()).unwrap();
    let (pair, flow) = analyze(t.frames(), t.annotations(), &PipelineConfig::default()).unwrap();
    let layout = FeatureLayout::default();
    let fv = extract_features(&pair, &flow, layout).unwrap();
    let k = layout.names().iter().position(|n| n == "flow.expansion_residual").unwrap();
    fv.values()[k]
}

#[test]
fn live_faces_leave_more_residual_than_prints() {
    for seed in [1, 2, 3] {
        let (live, print) = (residual(AttackClass::Real, seed), residual(AttackClass::PrintedPhoto, seed));
        assert!(live > print, "seed {seed}: live {live} vs print {print}");
    }
}

#[test]
fn flow_ignores_a_brightness_offset() {
    let tex = |x: usize, y: usize| 0.4 + 0.3 * ((x as f64) * 0.23).sin() * ((y as f64) * 0.19 + 0.5).cos();
    let a = ImageBuffer::from_fn(96, 96, 1, |x, y, _| tex(x, y));
    let b = ImageBuffer::from_fn(96, 96, 1, |x, y, _| tex(x.saturating_sub(2), y));
    let cfg = FlowConfig {
        resolution: 96,
        ..FlowConfig::default()
    };
    let f = estimate_flow(&a, &b, &cfg).unwrap();
    let g = estimate_flow(&a.map(|v| v + 0.1), &b.map(|v| v + 0.1), &cfg).unwrap();
    let diff = f
        .u()
        .iter()
        .zip(g.u())
        .chain(f.v().iter().zip(g.v()))
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max);
    assert!(diff < 1e-3, "max change {diff}");
}

#[test]
fn small_benchmark_is_deterministic_and_sensible() {
    let ds = make_dataset(3, 11).unwrap();
    let cfg = EvalConfig {
        draws: 1,
        ..EvalConfig::default()
    };
    let wb = || Workbench::new(EvalData::from_sim(&ds).unwrap(), cfg).unwrap();
    let (w1, w2) = (wb(), wb());
    let v = w1.default_variant("dual");
    let r1 = w1.run_variant("check", &v).unwrap();
    let r2 = w2.run_variant("check", &v).unwrap();
    assert_eq!(r1.auc, r2.auc);
    assert_eq!(r1.config, r2.config);
    assert_eq!(r1.config_hash, r2.config_hash);
    assert_eq!(r1.config_hash.len(), 64);
    assert_eq!(r1.auc.len(), AttackClass::ATTACKS.len());

    let (head, _) = w1.train_variant(&v).unwrap();
    let (scores, _) = w1.test_scores(&v, &head).unwrap();
    let mean = |c: AttackClass| {
        let s: Vec<f64> = scores.iter().filter(|s| s.0 == c).map(|s| s.1).collect();
        s.iter().sum::<f64>() / s.len() as f64
    };
    assert!(mean(AttackClass::Real) > mean(AttackClass::PrintedPhoto));

    let mut flow_only = v.clone();
    flow_only.layout.mode = StreamMode::FlowOnly;
    assert_ne!(w1.run_variant("check", &flow_only).unwrap().config_hash, r1.config_hash);

    // The stabilized-average baseline yields a full row too.
    let stab = w1
        .suite_variants(Suite::Baselines)
        .into_iter()
        .find(|v| v.input == InputKind::StabilizedAverage)
        .unwrap();
    let r = w1.run_variant("baselines", &stab).unwrap();
    assert_eq!(r.auc.len(), AttackClass::ATTACKS.len());
    assert!(r.auc.values().all(|a| (0.0..=1.0).contains(a)));
}
