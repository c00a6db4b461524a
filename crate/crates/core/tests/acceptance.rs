//! End-to-end acceptance run: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines always print. Set
//! `ACCEPTANCE_ONLY=5,8` to run a subset while iterating.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use common::gradcheck::{self, REL_TOL};
use common::invariants::{channel_assignment, fuse_copies_pixels, identical_frames_have_zero_motion};
use common::oracles::{ap_mismatches, iou_max_error};
use common::pipeline::{
    background_step_leaves_bbox_head, desk_network, load_split, loss_bits, short_config, tiny_profile, train_tiny,
    weight_bits,
};
use fusedet::bbox::smooth_l1;
use fusedet::dataset::{Sample, Split};
use fusedet::detector::{classification_loss, detections_csv, prepare_images, train, PipelineConfig};
use fusedet::eval::{report_table, run_mode, summarize, ApMethod, DecisionFusionConfig, EvalReport, ImageResult};
use fusedet::fusion::{fuse, FusionMode};
use fusedet::image::{FusedImage, ImagePlane};
use fusedet::nn::{load_weights, save_weights, Network};
use fusedet::proposals::{felzenszwalb_labels, selective_search, SelectiveSearchConfig};
use fusedet::synth::{generate_suite, SuiteProfile};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

// pinned tolerances and budgets
const GRAD_BUDGET: Duration = Duration::from_secs(120);
const IOU_PAIRS: usize = 1000;
const IOU_TOL: f64 = 1e-9;
const AP_INSTANCES: usize = 200;
const AP_MAX_DETS: usize = 20;
const LOSS_TOL: f64 = 1e-9;
const MIN_RECALL: f64 = 0.90;
const RECALL_IOU: f64 = 0.5;
/// Proposals per 320 x 240 image under the default search settings.
const PROPOSAL_ENVELOPE: (usize, usize) = (1, 400);
const DESK_ITERATIONS: u64 = 2000;
const MIN_EASY_AP: f64 = 0.70;
const EASY_BUDGET: Duration = Duration::from_secs(30 * 60);
const SUITE_SEED: u64 = 7;
const NETWORK_SEED: u64 = 0;
const README_MARKER: &str = "not reproduced at the original dataset scale";

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn gray(p: &ImagePlane) -> FusedImage {
    fuse(Some(p), None, None, FusionMode::VisibleOnly, 0).unwrap()
}

fn desk_config() -> PipelineConfig {
    let mut c = PipelineConfig::desk();
    c.train.iterations = DESK_ITERATIONS;
    c
}

fn split(samples: Vec<Sample>) -> (Vec<Sample>, Vec<Sample>) {
    samples.into_iter().partition(|s| s.split == Split::Train)
}

fn suite(profile: SuiteProfile, dir: &Path) -> (Vec<Sample>, Vec<Sample>) {
    generate_suite(&profile, dir, SUITE_SEED).unwrap();
    let mut all = load_split(dir, Split::Train);
    all.extend(load_split(dir, Split::Test));
    split(all)
}

fn train_mode(config: &PipelineConfig, samples: &[Sample], mode: FusionMode) -> Network<f32> {
    let images = prepare_images(samples, mode, &config.proposals).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(NETWORK_SEED);
    let mut net = Network::build(&config.architecture.table().unwrap(), config.init, &mut rng).unwrap();
    train(&mut net, &images, &config.train, config.detect.input_scale, |_, _| Ok(())).unwrap();
    net
}

fn evaluate(
    config: &PipelineConfig,
    samples: &[Sample],
    mode: FusionMode,
    nets: &BTreeMap<FusionMode, Network<f32>>,
) -> (EvalReport, Vec<ImageResult>) {
    let results = run_mode(samples, mode, nets, &config.proposals, &config.detect, &DecisionFusionConfig::default()).unwrap();
    (summarize(mode, &results, ApMethod::AllPoints).unwrap(), results)
}

fn c1_scale() -> Outcome {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../README.md");
    match fs::read_to_string(&path) {
        Ok(text) if text.contains(README_MARKER) => outcome(true, "README states the scale limits"),
        Ok(_) => outcome(false, format!("README lacks the statement {README_MARKER:?}")),
        Err(e) => outcome(false, format!("cannot read {}: {e}", path.display())),
    }
}

fn c2_gradients() -> Outcome {
    let start = Instant::now();
    let mut worst = Vec::new();
    for (name, f) in gradcheck::ALL {
        let err = (0..2).map(f).fold(0.0, f64::max);
        worst.push((name, err));
    }
    let elapsed = start.elapsed();
    let bad: Vec<_> = worst.iter().filter(|(_, e)| !(*e < REL_TOL)).collect();
    let max = worst.iter().map(|w| w.1).fold(0.0, f64::max);
    outcome(
        bad.is_empty() && elapsed < GRAD_BUDGET,
        format!(
            "{} ops x 3 shapes x 2 seeds, max rel err {max:.2e} (< {REL_TOL:e}), {:.1}s (< {}s){}",
            worst.len(),
            elapsed.as_secs_f64(),
            GRAD_BUDGET.as_secs(),
            if bad.is_empty() { String::new() } else { format!(", failing: {bad:?}") }
        ),
    )
}

fn c3_metrics() -> Outcome {
    let iou_err = iou_max_error(11, IOU_PAIRS);
    let ap_bad = ap_mismatches(12, AP_INSTANCES, AP_MAX_DETS);
    let sl1 = [(0.5f64, 0.125), (-2.0, 1.5), (3.25, 2.75), (0.0, 0.0)]
        .iter()
        .map(|&(d, want)| (smooth_l1(d) - want).abs())
        .fold(0.0, f64::max);
    let nll = (classification_loss(&[0.25f64, 0.75], 1) + 0.75f64.ln()).abs();
    outcome(
        iou_err <= IOU_TOL && ap_bad == 0 && sl1 <= LOSS_TOL && nll <= LOSS_TOL,
        format!(
            "IoU err {iou_err:.1e} over {IOU_PAIRS} pairs, AP mismatches {ap_bad}/{AP_INSTANCES}, \
             smooth-L1 err {sl1:.1e}, NLL err {nll:.1e}"
        ),
    )
}

fn c4_fusion() -> Outcome {
    let (a, b, c) = (identical_frames_have_zero_motion(), fuse_copies_pixels(), channel_assignment());
    outcome(a && b && c, format!("zero motion {a}, pixel copy {b}, B=VI G=motion R=MWIR {c}"))
}

fn c5_proposals(tmp: &Path) -> Outcome {
    let constant = felzenszwalb_labels(&gray(&ImagePlane::filled(48, 32, 128)), 100.0, 50, 0.8).unwrap().count;
    let quads = ImagePlane::from_fn(64, 48, |x, y| [[10, 80], [150, 220]][usize::from(y >= 24)][usize::from(x >= 32)]);
    let four = felzenszwalb_labels(&gray(&quads), 100.0, 50, 0.0).unwrap().count;

    let (_, test) = suite(SuiteProfile::mixed(), &tmp.join("mixed"));
    let ss = SelectiveSearchConfig::default();
    let (mut hit, mut total) = (0usize, 0usize);
    let (mut lo, mut hi) = (usize::MAX, 0);
    for s in &test {
        let set = selective_search(&s.fused(FusionMode::ThreeChannel).unwrap(), &ss).unwrap();
        lo = lo.min(set.len());
        hi = hi.max(set.len());
        for g in &s.gts {
            total += 1;
            hit += usize::from(set.boxes.iter().any(|b| fusedet::bbox::iou(b, &g.bbox) >= RECALL_IOU));
        }
    }
    let recall = hit as f64 / total.max(1) as f64;
    let in_env = lo >= PROPOSAL_ENVELOPE.0 && hi <= PROPOSAL_ENVELOPE.1;
    outcome(
        constant == 1 && four == 4 && recall >= MIN_RECALL && in_env,
        format!(
            "constant {constant} segment, quadrants {four} segments, mixed recall {recall:.3} \
             (>= {MIN_RECALL}) over {total} boxes, proposals/image {lo}..={hi} (envelope {}..={})",
            PROPOSAL_ENVELOPE.0, PROPOSAL_ENVELOPE.1
        ),
    )
}

fn c6_easy(tmp: &Path) -> Outcome {
    let start = Instant::now();
    let config = desk_config();
    let (train_s, test_s) = suite(SuiteProfile::easy(), &tmp.join("easy"));
    let mode = FusionMode::ThreeChannel;
    let nets: BTreeMap<_, _> = [(mode, train_mode(&config, &train_s, mode))].into();
    let (report, _) = evaluate(&config, &test_s, mode, &nets);
    let elapsed = start.elapsed();
    outcome(
        report.ap >= MIN_EASY_AP && elapsed <= EASY_BUDGET,
        format!(
            "three-channel AP {:.4} (>= {MIN_EASY_AP}) after {DESK_ITERATIONS} iterations, {:.0}s (<= {}s)",
            report.ap,
            elapsed.as_secs_f64(),
            EASY_BUDGET.as_secs()
        ),
    )
}

fn c7_camouflage(tmp: &Path) -> Outcome {
    let config = desk_config();
    let (train_s, test_s) = suite(SuiteProfile::camouflage(), &tmp.join("camouflage"));
    let nets: BTreeMap<_, _> = FusionMode::PIXEL
        .into_iter()
        .map(|m| (m, train_mode(&config, &train_s, m)))
        .collect();
    let reports: Vec<EvalReport> = FusionMode::ALL
        .into_iter()
        .map(|m| evaluate(&config, &test_s, m, &nets).0)
        .collect();
    print!("{}", report_table(&reports));
    let ap = |m: FusionMode| reports.iter().find(|r| r.mode == m).unwrap().ap;
    let (three, vis, mwir) = (ap(FusionMode::ThreeChannel), ap(FusionMode::VisibleOnly), ap(FusionMode::MwirOnly));
    outcome(
        three >= vis && three >= mwir && reports.len() == 6,
        format!(
            "{} modes, {DESK_ITERATIONS} iterations each: three-channel {three:.4}, visible {vis:.4}, mwir {mwir:.4}",
            reports.len()
        ),
    )
}

fn c8_reproducibility(tmp: &Path) -> Outcome {
    let root = tmp.join("tiny");
    generate_suite(&tiny_profile(), &root, 3).unwrap();
    let (train_s, test_s) = split({
        let mut v = load_split(&root, Split::Train);
        v.extend(load_split(&root, Split::Test));
        v
    });
    let config = short_config(60);
    let mode = FusionMode::ThreeChannel;
    let run = || {
        let images = prepare_images(&train_s, mode, &config.proposals).unwrap();
        let proposals: Vec<_> = images.iter().map(|i| i.proposals.clone()).collect();
        let (net, log) = train_tiny(&images, &config, 5);
        let bits = weight_bits(&net);
        let nets: BTreeMap<_, _> = [(mode, net)].into();
        let (report, results) = evaluate(&config, &test_s, mode, &nets);
        let rows: Vec<_> = results
            .iter()
            .flat_map(|r| r.detections.iter().map(move |d| (r.image_id.clone(), *d)))
            .collect();
        let fingerprint = (report.ap.to_bits(), report.top1.map(f64::to_bits), report.pr.to_csv(), detections_csv(&rows));
        (loss_bits(&log), proposals, bits, fingerprint, nets)
    };
    let (loss_a, prop_a, bits_a, rep_a, nets) = run();
    let (loss_b, prop_b, bits_b, rep_b, _) = run();

    let path = tmp.join("roundtrip.bin");
    save_weights(&nets[&mode], &path).unwrap();
    let mut back = desk_network(99);
    load_weights(&mut back, &path, true).unwrap();
    let round_trip = weight_bits(&back) == bits_a;

    let (l, p, w, r) = (loss_a == loss_b, prop_a == prop_b, bits_a == bits_b, rep_a == rep_b);
    outcome(
        l && p && w && r && round_trip,
        format!("loss traces {l}, proposals {p}, trained weights {w}, reports {r}, weight round trip {round_trip}"),
    )
}

fn c9_background_batch() -> Outcome {
    let checks: Vec<(bool, bool)> = (0..3).map(background_step_leaves_bbox_head).collect();
    let frozen = checks.iter().all(|c| c.0);
    let stepped = checks.iter().all(|c| c.1);
    outcome(
        frozen && stepped,
        format!("bbox head bit-unchanged {frozen}, classifier updated {stepped} (3 seeds)"),
    )
}

fn main() {
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let criteria: [(&str, Box<dyn Fn() -> Outcome>); 9] = [
        ("full-scale results documented as out of reach", Box::new(c1_scale)),
        ("gradient checks", Box::new(c2_gradients)),
        ("metric oracles", Box::new(c3_metrics)),
        ("fusion invariants", Box::new(c4_fusion)),
        ("proposals", Box::new(|| c5_proposals(dir))),
        ("desk-scale training on the easy suite", Box::new(|| c6_easy(dir))),
        ("camouflage ordering", Box::new(|| c7_camouflage(dir))),
        ("reproducibility", Box::new(|| c8_reproducibility(dir))),
        ("background batches leave the box head", Box::new(c9_background_batch)),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        println!(
            "criterion {n} {}: {name}: {} [{:.1}s]",
            if result.pass { "PASS" } else { "FAIL" },
            result.detail,
            start.elapsed().as_secs_f64()
        );
        std::io::stdout().flush().unwrap();
        if !result.pass {
            failed.push(n);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
