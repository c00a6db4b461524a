//! Small end-to-end fixtures: a generated suite, prepared training images
//! and the checks that need a live network.

use std::path::Path;

use fusedet::bbox::BBox;
use fusedet::dataset::{ingest_dataset, Manifest, Sample, Split};
use fusedet::detector::{batch_loss, prepare_images, train, PipelineConfig, TrainImage, TrainLog};
use fusedet::fusion::FusionMode;
use fusedet::nn::{LayerTable, Network, Sgd, WeightInit};
use fusedet::synth::{generate_suite, SuiteProfile};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A reduced easy suite: 5 sequences of 8 frames at 160 x 120.
pub fn tiny_profile() -> SuiteProfile {
    let mut p = SuiteProfile::easy();
    p.name = "tiny".into();
    p.sequences = 5;
    p.frames = 8;
    p.width = 160;
    p.height = 120;
    p
}

pub fn load_split(root: &Path, split: Split) -> Vec<Sample> {
    let manifest = Manifest::load(root).unwrap();
    ingest_dataset(root, &manifest, 5)
        .unwrap()
        .into_iter()
        .filter(|s| s.split == split)
        .collect()
}

pub fn tiny_training_images(root: &Path, mode: FusionMode) -> Vec<TrainImage> {
    generate_suite(&tiny_profile(), root, 3).unwrap();
    let samples = load_split(root, Split::Train);
    prepare_images(&samples, mode, &Default::default()).unwrap()
}

pub fn desk_network(seed: u64) -> Network<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Network::build(&LayerTable::desk(), WeightInit::He, &mut rng).unwrap()
}

pub fn short_config(iterations: u64) -> PipelineConfig {
    let mut c = PipelineConfig::desk();
    c.train.iterations = iterations;
    c.train.sgd.schedule = vec![(0, c.train.sgd.learning_rate)];
    c
}

pub fn train_tiny(images: &[TrainImage], config: &PipelineConfig, seed: u64) -> (Network<f32>, TrainLog) {
    let mut net = desk_network(seed);
    let log = train(&mut net, images, &config.train, 1.0, |_, _| Ok(())).unwrap();
    (net, log)
}

fn head_bits(net: &Network<f32>) -> Vec<(String, Vec<u32>)> {
    net.named_tensors()
        .into_iter()
        .filter(|(n, _)| n.starts_with("bbox."))
        .map(|(n, t)| (n, t.data().iter().map(|v| v.to_bits()).collect()))
        .collect()
}

/// One SGD step on a minibatch whose ROIs are all background (label 0).
/// Returns whether the box-regression head is bit-identical afterwards, and
/// whether the classifier moved (so the step itself did happen).
pub fn background_step_leaves_bbox_head(seed: u64) -> (bool, bool) {
    let mut net = desk_network(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let image = fusedet::nn::Tensor::<f32>::randn(&[1, 3, 96, 128], 1.0, &mut rng);
    let rois = [BBox::new(0.0, 0.0, 40.0, 30.0), BBox::new(50.0, 20.0, 60.0, 50.0), BBox::new(10.0, 40.0, 30.0, 30.0)];
    let before = head_bits(&net);
    let cls_before: Vec<u32> = net.named_tensors().into_iter().find(|(n, _)| n == "cls.weight").unwrap().1.data().iter().map(|v| v.to_bits()).collect();

    let fwd = net.forward_train(&[(&image, &rois[..])], &mut rng).unwrap();
    let labels = vec![0; rois.len()];
    let loss = batch_loss(&fwd.cls_logits, &fwd.bbox_deltas, &labels, &vec![None; rois.len()], 1.0).unwrap();
    assert!(loss.bbox_grad.is_none());
    net.backward(fwd, &loss.cls_grad, loss.bbox_grad.as_ref()).unwrap();
    let mut sgd = Sgd::<f32>::new(PipelineConfig::desk().train.sgd).unwrap();
    {
        let mut params = net.params_with_grad();
        sgd.step(params.iter_mut().map(|(n, t)| (n.as_str(), &mut **t)), 0).unwrap();
    }
    let cls_after: Vec<u32> = net.named_tensors().into_iter().find(|(n, _)| n == "cls.weight").unwrap().1.data().iter().map(|v| v.to_bits()).collect();
    (head_bits(&net) == before, cls_after != cls_before)
}

/// Bit patterns of every parameter.
pub fn weight_bits(net: &Network<f32>) -> Vec<(String, Vec<u32>)> {
    net.named_tensors()
        .into_iter()
        .map(|(n, t)| (n, t.data().iter().map(|v| v.to_bits()).collect()))
        .collect()
}

pub fn loss_bits(log: &TrainLog) -> Vec<(u64, u64, u64)> {
    log.rows.iter().map(|r| (r.iteration, r.l_cls.to_bits(), r.l_bbox.to_bits())).collect()
}
