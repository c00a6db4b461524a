//! Running detectors over a test split and summarising the results.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::time::Instant;

use crate::bbox::{Detection, GroundTruthBox};
use crate::dataset::Sample;
use crate::detector::{detect, DetectConfig, StageTiming};
use crate::error::{Error, Result};
use crate::eval::decision::{decision_fuse, DecisionFusionConfig};
use crate::eval::metrics::{average_precision, match_detections, top1_precision, ApMethod, PrCurve, TP_IOU};
use crate::fusion::FusionMode;
use crate::image::ensure_parent;
use crate::nn::Network;
use crate::proposals::SelectiveSearchConfig;
use crate::scalar::Scalar;

/// Single-modality detectors whose outputs decision-level fusion combines.
pub const DECISION_INPUTS: [FusionMode; 3] = [FusionMode::VisibleOnly, FusionMode::MwirOnly, FusionMode::MotionOnly];

/// Detector outputs on one test image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageResult {
    pub image_id: String,
    pub detections: Vec<Detection>,
    pub gts: Vec<GroundTruthBox>,
    pub timing: StageTiming,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub mode: FusionMode,
    pub ap: f64,
    /// `None` when some image does not have exactly one ground-truth box.
    pub top1: Option<f64>,
    /// Median seconds per image.
    pub proposal: f64,
    pub network: f64,
    pub overall: f64,
    pub images: usize,
    pub pr: PrCurve,
}

/// Networks `mode` needs: itself for pixel modes, the three single-modality
/// detectors for decision-level fusion.
pub fn required_networks(mode: FusionMode) -> Vec<FusionMode> {
    if mode.is_pixel_mode() {
        vec![mode]
    } else {
        DECISION_INPUTS.to_vec()
    }
}

/// Modes among `modes` that cannot run, each with the weights it lacks.
pub fn missing_weights(modes: &[FusionMode], available: &BTreeSet<FusionMode>) -> Vec<(FusionMode, Vec<FusionMode>)> {
    modes
        .iter()
        .filter_map(|&m| {
            let missing: Vec<FusionMode> = required_networks(m)
                .into_iter()
                .filter(|r| !available.contains(r))
                .collect();
            (!missing.is_empty()).then_some((m, missing))
        })
        .collect()
}

fn network_for<'a, T: Scalar>(networks: &'a BTreeMap<FusionMode, Network<T>>, mode: FusionMode) -> Result<&'a Network<T>> {
    networks
        .get(&mode)
        .ok_or_else(|| Error::Config(format!("no weights for mode {mode}")))
}

/// Runs the `mode` detector on each sample, one image at a time so the
/// stage timings are not distorted by concurrent work.
pub fn run_mode<T: Scalar>(
    samples: &[Sample],
    mode: FusionMode,
    networks: &BTreeMap<FusionMode, Network<T>>,
    proposals: &SelectiveSearchConfig,
    detect_config: &DetectConfig,
    fusion: &DecisionFusionConfig,
) -> Result<Vec<ImageResult>> {
    if let Some((_, missing)) = missing_weights(&[mode], &networks.keys().copied().collect()).pop() {
        let names: Vec<&str> = missing.iter().map(|m| m.as_str()).collect();
        return Err(Error::Config(format!("mode {mode} needs weights for: {}", names.join(", "))));
    }
    samples
        .iter()
        .map(|s| {
            let start = Instant::now();
            let (detections, mut timing) = if mode.is_pixel_mode() {
                detect(network_for(networks, mode)?, &s.fused(mode)?, proposals, detect_config)?
            } else {
                let mut total = StageTiming::default();
                let mut lists = Vec::new();
                for m in DECISION_INPUTS {
                    let (d, t) = detect(network_for(networks, m)?, &s.fused(m)?, proposals, detect_config)?;
                    total.proposal += t.proposal;
                    total.network += t.network;
                    lists.push(d);
                }
                (decision_fuse(&lists, fusion)?, total)
            };
            timing.overall = start.elapsed().as_secs_f64();
            Ok(ImageResult {
                image_id: s.image_id(),
                detections,
                gts: s.gts.clone(),
                timing,
            })
        })
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// AP, top-1 precision and median timings of one mode's results.
pub fn summarize(mode: FusionMode, results: &[ImageResult], method: ApMethod) -> Result<EvalReport> {
    let total_gt: usize = results.iter().map(|r| r.gts.len()).sum();
    let matches: Vec<_> = results
        .iter()
        .flat_map(|r| match_detections(&r.detections, &r.gts, TP_IOU))
        .collect();
    let pr = average_precision(&matches, total_gt, method)?;
    let top1 = if results.iter().all(|r| r.gts.len() == 1) {
        let pairs: Vec<_> = results.iter().map(|r| (r.detections.clone(), r.gts.clone())).collect();
        Some(top1_precision(&pairs)?)
    } else {
        log::warn!("{mode}: some images lack exactly one ground-truth box, top-1 precision skipped");
        None
    };
    Ok(EvalReport {
        mode,
        ap: pr.ap,
        top1,
        proposal: median(results.iter().map(|r| r.timing.proposal).collect()),
        network: median(results.iter().map(|r| r.timing.network).collect()),
        overall: median(results.iter().map(|r| r.timing.overall).collect()),
        images: results.len(),
        pr,
    })
}

/// Pairs stored detections with ground truth by image id. Every ground-truth
/// image takes part; detections on unknown images are an input error.
pub fn results_from_detections(
    detections: &[(String, Detection)],
    gts: &BTreeMap<String, Vec<GroundTruthBox>>,
) -> Result<Vec<ImageResult>> {
    let mut by_image: BTreeMap<&str, Vec<Detection>> = BTreeMap::new();
    for (id, d) in detections {
        if !gts.contains_key(id) {
            return Err(Error::Input(format!("detection on image {id:?} which has no ground-truth entry")));
        }
        by_image.entry(id).or_default().push(*d);
    }
    Ok(gts
        .iter()
        .map(|(id, g)| ImageResult {
            image_id: id.clone(),
            detections: by_image.remove(id.as_str()).unwrap_or_default(),
            gts: g.clone(),
            timing: StageTiming::default(),
        })
        .collect())
}

/// Every requested mode over the same samples.
pub fn run_benchmark<T: Scalar>(
    samples: &[Sample],
    modes: &[FusionMode],
    networks: &BTreeMap<FusionMode, Network<T>>,
    proposals: &SelectiveSearchConfig,
    detect_config: &DetectConfig,
    fusion: &DecisionFusionConfig,
    method: ApMethod,
) -> Result<Vec<(EvalReport, Vec<ImageResult>)>> {
    let missing = missing_weights(modes, &networks.keys().copied().collect());
    if !missing.is_empty() {
        let text: Vec<String> = missing
            .iter()
            .map(|(m, need)| {
                let need: Vec<&str> = need.iter().map(|n| n.as_str()).collect();
                format!("{m} (needs {})", need.join(", "))
            })
            .collect();
        return Err(Error::Config(format!("missing weights: {}", text.join("; "))));
    }
    modes
        .iter()
        .map(|&m| {
            let results = run_mode(samples, m, networks, proposals, detect_config, fusion)?;
            Ok((summarize(m, &results, method)?, results))
        })
        .collect()
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.digits$}"))
}

/// Fixed-width comparison table, one row per mode.
pub fn report_table(reports: &[EvalReport]) -> String {
    let mut s = format!(
        "{:<22} {:>8} {:>8} {:>12} {:>12} {:>12}\n",
        "Method", "AP", "Top1", "Proposal(s)", "Networks(s)", "Overall(s)"
    );
    for r in reports {
        s.push_str(&format!(
            "{:<22} {:>8.4} {:>8} {:>12.4} {:>12.4} {:>12.4}\n",
            r.mode.label(),
            r.ap,
            fmt_opt(r.top1, 4),
            r.proposal,
            r.network,
            r.overall
        ));
    }
    s
}

pub fn report_csv(reports: &[EvalReport]) -> String {
    let mut s = String::from("mode,ap,top1,proposal_s,network_s,overall_s,images\n");
    for r in reports {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.mode.as_str(),
            r.ap,
            r.top1.map_or_else(String::new, |v| v.to_string()),
            r.proposal,
            r.network,
            r.overall,
            r.images
        ));
    }
    s
}

/// `report.csv`, `report.txt` and one `pr_<mode>.csv` per report.
pub fn write_reports(reports: &[EvalReport], dir: &Path) -> Result<()> {
    let write = |name: &str, text: String| {
        let path = dir.join(name);
        ensure_parent(&path)?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    };
    write("report.csv", report_csv(reports))?;
    write("report.txt", report_table(reports))?;
    for r in reports {
        write(&format!("pr_{}.csv", r.mode.as_str()), r.pr.to_csv())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bbox::BBox;

    fn gt(id: &str) -> GroundTruthBox {
        GroundTruthBox {
            bbox: BBox::new(0.0, 0.0, 10.0, 10.0),
            class_id: 1,
            image_id: id.into(),
        }
    }

    #[test]
    fn decision_needs_three_networks() {
        let avail: BTreeSet<_> = [FusionMode::VisibleOnly, FusionMode::ThreeChannel].into();
        let m = missing_weights(&[FusionMode::ThreeChannel, FusionMode::DecisionLevel], &avail);
        assert_eq!(m, vec![(FusionMode::DecisionLevel, vec![FusionMode::MwirOnly, FusionMode::MotionOnly])]);
    }

    #[test]
    fn summary_from_stored_detections() {
        let gts: BTreeMap<String, Vec<GroundTruthBox>> =
            [("a/1".to_string(), vec![gt("a/1")]), ("a/2".to_string(), vec![gt("a/2")])].into();
        let dets = vec![("a/1".to_string(), Detection::new(BBox::new(0.0, 0.0, 10.0, 10.0), 0.9))];
        let results = results_from_detections(&dets, &gts).unwrap();
        let r = summarize(FusionMode::ThreeChannel, &results, ApMethod::AllPoints).unwrap();
        assert_eq!((r.ap, r.top1, r.images), (0.5, Some(0.5), 2));
        assert!(report_table(&[r.clone()]).contains("3-Channels"));
        assert!(report_csv(&[r]).starts_with("mode,ap,top1"));
        let stray = vec![("zz/1".to_string(), dets[0].1)];
        assert!(matches!(results_from_detections(&stray, &gts), Err(Error::Input(_))));
    }

    #[test]
    fn medians() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0]), 2.5);
        assert_eq!(median(vec![]), 0.0);
    }
}
