use landmark_sc::autoencoder::Activation;
use landmark_sc::dataset::GeneratorConfig;
use landmark_sc::pipeline::{run_pipeline, RunConfig};
use landmark_sc::self_expression::{AnchorCount, FittedModel};

fn small(dir: &std::path::Path) -> RunConfig {
    let mut gen = GeneratorConfig::standard(25, 5);
    gen.subspaces = 4;
    gen.ambient_dim = 100;
    let mut cfg = RunConfig::synthetic(gen);
    cfg.network.latent = 48;
    cfg.network.latent_activation = Activation::Identity;
    cfg.network.bias = false;
    cfg.network.pretrain_epochs = 30;
    cfg.model.anchors = AnchorCount::Auto;
    cfg.model.clusters = 4;
    cfg.output.dir = dir.to_path_buf();
    cfg.output.dump_epochs = vec![0, 1];
    cfg
}

#[test]
fn labels_are_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let a = small(&tmp.path().join("a"));
    let b = small(&tmp.path().join("b"));
    let ra = run_pipeline(&a, None).unwrap();
    let rb = run_pipeline(&b, None).unwrap();
    let la = std::fs::read(tmp.path().join("a/labels.txt")).unwrap();
    let lb = std::fs::read(tmp.path().join("b/labels.txt")).unwrap();
    assert_eq!(la, lb);
    assert_eq!(ra.metrics.unwrap().acc, rb.metrics.unwrap().acc);
}

#[test]
fn stage_timings_add_up() {
    let tmp = tempfile::tempdir().unwrap();
    let report = run_pipeline(&small(tmp.path()), None).unwrap();
    let t = report.timings;
    for v in [t.data, t.pretrain, t.fit, t.spectral, t.kmeans, t.metrics, t.output] {
        assert!(v >= 0.0);
    }
    let gap = (t.total - t.stage_sum()).abs() / t.total;
    assert!(gap <= 0.05, "stages {} vs total {}", t.stage_sum(), t.total);
    assert!(report.history.len() <= 50);
}

#[test]
fn outputs_reload() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small(tmp.path());
    let report = run_pipeline(&cfg, None).unwrap();
    let model = FittedModel::load(&tmp.path().join("model")).unwrap();
    assert_eq!(model.history, report.history);
    assert!(tmp.path().join("affinity_iter0.csv").exists());
    assert!(tmp.path().join("affinity_iter1.raw").exists());
    let text = std::fs::read_to_string(tmp.path().join("report.txt")).unwrap();
    assert!(text.contains("[config]"));
    assert!(text.contains("spectral_mode=squared_normalized"));
}

#[test]
fn documented_configs_parse() {
    let chapter = include_str!("../../../book/src/pipeline.md");
    let start = chapter.find("```toml\n").unwrap() + "```toml\n".len();
    let block = &chapter[start..start + chapter[start..].find("```").unwrap()];
    let cfg = RunConfig::from_toml(block).unwrap();
    assert_eq!(cfg.planned_n(), Some(500));

    let shipped = RunConfig::from_toml(include_str!("../../../configs/synthetic.toml")).unwrap();
    assert_eq!(shipped.model.clusters, 10);
}
