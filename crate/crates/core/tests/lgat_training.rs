mod common;

use common::heist::{SCRIPT, SUMMARY};
use screengraph::lgat::{train, Example, LgatConfig, LgatModel, Variant};
use screengraph::screenplay::parse_xml;

#[test]
fn desk_model_overfits_one_pair_and_reloads() {
    let sp = parse_xml(SCRIPT.as_bytes()).unwrap();
    let mut config = LgatConfig::desk();
    config.epochs = 200;
    config.max_steps = Some(200);
    let embedder = config.embedder.build().unwrap();
    let example = Example::new(&sp, SUMMARY, embedder.as_ref(), config.graph).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (model, report) = train(std::slice::from_ref(&example), &config, Variant::Full, Some(dir.path())).unwrap();
    assert!(report.losses.iter().any(|&l| l < 0.05), "final loss {:?}", report.final_loss());
    assert_eq!(model.summarize(&example.graph, &example.script).unwrap(), SUMMARY);

    let loaded = LgatModel::load(dir.path()).unwrap();
    assert_eq!(loaded.summarize(&example.graph, &example.script).unwrap(), SUMMARY);
    let csv = std::fs::read_to_string(dir.path().join("loss.csv")).unwrap();
    assert_eq!(csv.lines().count(), report.steps + 1);
}
