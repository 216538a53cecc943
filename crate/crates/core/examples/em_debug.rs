use cecrf::data::{generate_synthetic, split, SynthConfig};
use cecrf::eval::{error_rate, recall_at_precision};
use cecrf::persist::{ModelFile, SavedModel};
use cecrf::training::{sgd_train, standardize_features, Objective, TrainConfig};
use cecrf::trellis::DecodeMode;

fn evaluate(file: &ModelFile, test: &cecrf::data::Dataset) -> (f64, f64) {
    let preds = file.decode_dataset(test, DecodeMode::Marginal).unwrap();
    let mut predicted = Vec::new();
    let mut confidences = Vec::new();
    for p in &preds {
        predicted.extend_from_slice(&p.labels);
        confidences.extend_from_slice(p.confidences.as_ref().unwrap());
    }
    let gold = test.flat_labels();
    (error_rate(&predicted, &gold).unwrap(),
     recall_at_precision(&confidences, &predicted, &gold, 91.0).unwrap().recall)
}

fn main() {
    let cfg = SynthConfig { delta_within: 1.6, length_min: 3, length_max: 8, ..SynthConfig::default() };
    let ds = generate_synthetic(&cfg).unwrap();
    let (train_raw, test_raw) = split(&ds, 0.8, 1).unwrap();
    let (stats, train) = standardize_features(&train_raw).unwrap();
    let test = stats.apply(&test_raw);

    for (label, objective, dim) in [
        ("memm    d8 ", Objective::Memm, 8),
        ("memm_bn d8 ", Objective::MemmBn, 8),
        ("memm    d16", Objective::Memm, 16),
        ("memm_bn d16", Objective::MemmBn, 16),
        ("memm    d32", Objective::Memm, 32),
        ("memm_bn d32", Objective::MemmBn, 32),
        ("memm    d50", Objective::Memm, 50),
        ("memm_bn d50", Objective::MemmBn, 50),
    ] {
        let config = TrainConfig { objective, embed_dim: dim, epochs: 30, seed: 7, ..TrainConfig::default() };
        let (params, _) = sgd_train(&config, &train).unwrap();
        let folded = evaluate(&ModelFile { model: SavedModel::Raw { params: params.clone(), bn_active: objective.uses_bn() }, feature_stats: None }, &test);
        // diagnostic: same parameters decoded with the raw product
        let raw = evaluate(&ModelFile { model: SavedModel::Raw { params, bn_active: false }, feature_stats: None }, &test);
        println!("{label}: decode-as-trained {:.2}/{:.1}   decode-raw-product {:.2}/{:.1}", folded.0, folded.1, raw.0, raw.1);
    }
}
