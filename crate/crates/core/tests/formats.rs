mod common;

use std::fs;
use std::path::Path;

use common::{rng, uniform};
use gramstyle::classifiers::{
    pca_fit, train_forest, train_linear, AdamConfig, FeatureMatrix, ForestConfig, ForestModel,
    LinearModel, PcaModel,
};
use gramstyle::gram::store::{manifest_path, FeatureRecord, FeatureStore, FeatureStoreWriter};
use gramstyle::gram::LayerVector;
use gramstyle::network::{small_extractor_spec, Network, TensorContainer};
use gramstyle::{Error, Tensor};
use proptest::prelude::*;

fn container_strategy() -> impl Strategy<Value = TensorContainer> {
    let tensor = prop::collection::vec(1usize..5, 1..4).prop_flat_map(|shape| {
        let n = shape.iter().product::<usize>();
        prop::collection::vec(any::<f32>(), n)
            .prop_map(move |data| Tensor::new(shape.clone(), data).unwrap())
    });
    prop::collection::vec(("[a-z_.0-9]{1,12}", tensor), 0..5)
        .prop_map(|tensors| TensorContainer { tensors })
}

fn record_strategy() -> impl Strategy<Value = FeatureRecord> {
    let layer = ("ReLU[1-5]_1", prop::collection::vec(any::<f32>(), 0..40))
        .prop_map(|(layer, values)| LayerVector { layer, values });
    (
        "[a-z0-9_]{1,16}\\.png",
        prop::option::of(0u32..1000),
        prop::collection::vec(layer, 0..4),
    )
        .prop_map(|(image_id, label, layers)| FeatureRecord {
            image_id,
            label,
            layers,
        })
}

/// Copies a store record by record into `to`.
fn rewrite_store(from: &Path, to: &Path) {
    let store = FeatureStore::open(from).unwrap();
    let mut w = FeatureStoreWriter::create(to).unwrap();
    for r in store.records().unwrap() {
        w.append(&r).unwrap();
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weight_containers_round_trip_bytewise(c in container_strategy()) {
        let bytes = c.to_bytes().unwrap();
        let back = TensorContainer::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes().unwrap(), bytes);
        for ((na, ta), (nb, tb)) in c.tensors.iter().zip(&back.tensors) {
            prop_assert_eq!(na, nb);
            prop_assert_eq!(ta.shape(), tb.shape());
            let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(ta), bits(tb));
        }
    }

    #[test]
    fn truncated_containers_are_rejected(c in container_strategy(), cut in any::<prop::sample::Index>()) {
        let bytes = c.to_bytes().unwrap();
        let keep = cut.index(bytes.len());
        let rejected = matches!(TensorContainer::from_bytes(&bytes[..keep]), Err(Error::Format { .. }));
        prop_assert!(rejected);
    }

    #[test]
    fn feature_records_round_trip_bytewise(r in record_strategy()) {
        let bytes = r.encode().unwrap();
        let (back, used) = FeatureRecord::decode(&bytes).unwrap();
        prop_assert_eq!(used, bytes.len());
        prop_assert_eq!(back.encode().unwrap(), bytes);
        prop_assert_eq!(back.image_id, r.image_id);
        prop_assert_eq!(back.label, r.label);
    }

    #[test]
    fn feature_stores_round_trip_bytewise(records in prop::collection::vec(record_strategy(), 0..8)) {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.nsf"), dir.path().join("b.nsf"));
        let mut w = FeatureStoreWriter::create(&a).unwrap();
        let mut kept = 0;
        for r in &records {
            if !w.contains(&r.image_id) {
                w.append(r).unwrap();
                kept += 1;
            }
        }
        drop(w);
        prop_assert_eq!(FeatureStore::open(&a).unwrap().len(), kept);
        rewrite_store(&a, &b);
        prop_assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
        prop_assert_eq!(fs::read(manifest_path(&a)).unwrap(), fs::read(manifest_path(&b)).unwrap());
    }
}

#[test]
fn network_weights_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let net = Network::random(small_extractor_spec(), 8).unwrap();
    let (a, b) = (dir.path().join("a.nsw"), dir.path().join("b.nsw"));
    net.save_weights(&a).unwrap();
    let back = gramstyle::network::load_weights(small_extractor_spec(), &a).unwrap();
    assert_eq!(back, net);
    back.save_weights(&b).unwrap();
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn weights_bound_to_the_wrong_spec_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.nsw");
    Network::random(small_extractor_spec(), 8)
        .unwrap()
        .save_weights(&path)
        .unwrap();
    let other = gramstyle::network::vgg19_extractor_spec();
    assert!(gramstyle::network::load_weights(other, &path).is_err());
}

fn toy_features(seed: u64) -> (FeatureMatrix, Vec<usize>) {
    let x = uniform(&mut rng(seed), &[40, 6], -1.0, 1.0).cast::<f32>();
    let labels = (0..40).map(|i| i % 3).collect();
    (FeatureMatrix::new(40, 6, x.into_data()).unwrap(), labels)
}

#[test]
fn forests_round_trip_bytewise() {
    let (x, y) = toy_features(1);
    let cfg = ForestConfig {
        trees: 12,
        seed: 4,
        ..ForestConfig::default()
    };
    let model = train_forest(&x, &y, &cfg)
        .unwrap()
        .with_layers(vec!["ReLU1_1".into()]);
    let bytes = model.to_bytes().unwrap();
    let back = ForestModel::from_bytes(&bytes).unwrap();
    assert_eq!(back, model);
    assert_eq!(back.to_bytes().unwrap(), bytes);
    for cut in [0, 4, 8, bytes.len() / 2, bytes.len() - 1] {
        assert!(ForestModel::from_bytes(&bytes[..cut]).is_err());
    }
}

#[test]
fn linear_and_pca_models_round_trip() {
    let (x, y) = toy_features(2);
    let (model, _) = train_linear(&x, &y, 3, &AdamConfig::default()).unwrap();
    let c = model.to_container();
    assert_eq!(LinearModel::from_container(&c).unwrap(), model);

    let pca = pca_fit(&x, 0.9).unwrap();
    let c = pca.to_container();
    let back = PcaModel::from_container(&c).unwrap();
    assert_eq!(back, pca);
    assert_eq!(back.to_container().to_bytes().unwrap(), c.to_bytes().unwrap());
}
