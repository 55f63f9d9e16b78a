use super::*;

#[test]
fn config_defaults_and_layers() {
    let c = ModelConfig::new(LayerType::Gcn, 3);
    assert_eq!(c.layers(), 4);
    assert_eq!(c.num_classes(), 8);
    assert!(c.validate().is_ok());
    let chain = ModelConfig::for_chain(LayerType::Gin, 5);
    assert_eq!((chain.depth, chain.layers()), (2, 8));
}

#[test]
fn config_validation() {
    let mut c = ModelConfig::new(LayerType::Gat, 2);
    c.gat_heads = 5;
    assert!(matches!(c.validate(), Err(TrainError::Config(_))));
    let mut c = ModelConfig::new(LayerType::Gcn, 0);
    assert!(c.validate().is_err());
    c.depth = 2;
    c.fa_fraction = Some(1.5);
    assert!(c.validate().is_err());
    c.fa_fraction = None;
    c.num_layers = Some(0);
    assert!(c.validate().is_err());
}

#[test]
fn config_round_trips_through_json() {
    let mut c = ModelConfig::new(LayerType::Ggnn, 4);
    c.fa_last = true;
    c.fa_fraction = Some(0.25);
    let text = serde_json::to_string(&c).unwrap();
    assert_eq!(serde_json::from_str::<ModelConfig>(&text).unwrap(), c);
}

#[test]
fn argmax_ties_go_to_lowest_class() {
    let logits = [1.0f32, 3.0, 3.0, 0.0, 0.5, 0.5, -1.0, 0.5];
    assert_eq!(argmax_rows(&logits, 4), vec![1, 0]);
}

#[test]
fn parameter_count_for_radius_two_gcn() {
    // slots 8+4, input 8·32+32, 3 × (32·32 + norm 64), output 32·4+4
    let m = Model::<f32>::new(ModelConfig::new(LayerType::Gcn, 2)).unwrap();
    assert_eq!(m.parameter_count(), 12 + 288 + 3 * (1024 + 64) + 132);
    assert_eq!(m.parameter_count(), 3696);
}

#[test]
fn shared_weights_store_one_layer() {
    let mut c = ModelConfig::new(LayerType::Ggnn, 3);
    c.unroll_shared_weights = true;
    let m = Model::<f32>::new(c).unwrap();
    assert_eq!(m.layers().len(), 1);
}

#[test]
fn default_batch_rule() {
    assert_eq!(TrainSchedule::default_batch_size(96), 96);
    assert_eq!(TrainSchedule::default_batch_size(8000), 8000);
    assert_eq!(TrainSchedule::default_batch_size(32000), 1024);
}

#[test]
fn report_serializes_as_json_lines() {
    let report = TrainReport {
        epochs: vec![EpochRecord {
            epoch: 1,
            loss: 1.5,
            train_acc: 0.25,
            lr: 1e-3,
        }],
        lr_events: vec![],
        stop_reason: StopReason::Converged100,
        best_accuracy: 0.25,
        final_accuracy: 0.25,
        epochs_run: 1,
        failed: false,
        error: None,
        wall_time_s: 0.0,
    };
    let text = report.to_json_lines();
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["type"], "epoch");
    assert_eq!(lines[1]["stop_reason"], "converged_100");
}
