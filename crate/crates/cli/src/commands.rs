use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use fusedet::bbox::Detection;
use fusedet::dataset::{ingest_dataset, load_ground_truth, Manifest, Sample, Split};
use fusedet::detector::{
    load_detections, prepare_images, save_detections, train, PipelineConfig,
};
use fusedet::eval::{
    dump_feature_map, missing_weights, required_networks, results_from_detections, run_benchmark, run_mode,
    save_overlay, save_pr_plot, summarize, write_reports, report_table, DecisionFusionConfig,
};
use fusedet::fusion::FusionMode;
use fusedet::nn::{load_weights, save_weights, Network};
use fusedet::proposals::selective_search;
use fusedet::synth::{generate_suite, SuiteProfile};
use fusedet::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::args::*;

/// State shared by every command: resolved settings and what was written.
pub struct Run {
    pub config: PipelineConfig,
    pub out_dir: PathBuf,
    pub outputs: Vec<PathBuf>,
    /// Command-specific facts for the manifest.
    pub details: serde_json::Map<String, Value>,
}

impl Run {
    pub fn new(config: PipelineConfig, out_dir: PathBuf) -> Self {
        Run {
            config,
            out_dir,
            outputs: Vec::new(),
            details: serde_json::Map::new(),
        }
    }

    fn path(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.out_dir.join(rel)
    }

    fn record(&mut self, path: PathBuf) {
        self.outputs.push(path);
    }

    fn write(&mut self, rel: &str, text: String) -> Result<()> {
        let path = self.path(rel);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        self.record(path);
        Ok(())
    }

    fn note(&mut self, key: &str, value: Value) {
        self.details.insert(key.to_string(), value);
    }
}

/// Preset settings with the optional config file layered on top.
pub fn resolve_config(preset: Preset, file: Option<&Path>) -> fusedet::Result<PipelineConfig> {
    let mut c = match preset {
        Preset::Full => PipelineConfig::default(),
        Preset::Desk => PipelineConfig::desk(),
    };
    if let Some(p) = file {
        let text = fs::read_to_string(p).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        })?;
        c.apply_text(&text)?;
    }
    Ok(c)
}

/// Resolved settings as a JSON object, one member per config key.
pub fn config_json(c: &PipelineConfig) -> Value {
    let map: serde_json::Map<String, Value> = c
        .to_text()
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), Value::String(v.to_string())))
        .collect();
    Value::Object(map)
}

fn input_error(msg: impl Into<String>) -> anyhow::Error {
    Error::Input(msg.into()).into()
}

fn load_manifest(root: &Path) -> Result<Manifest> {
    Ok(Manifest::load(root)?)
}

fn splits(arg: SplitArg) -> Vec<Split> {
    match arg {
        SplitArg::Train => vec![Split::Train],
        SplitArg::Test => vec![Split::Test],
        SplitArg::All => vec![Split::Train, Split::Test],
    }
}

fn load_samples(root: &Path, split: SplitArg, stride: usize) -> Result<Vec<Sample>> {
    let mut manifest = load_manifest(root)?;
    let keep = splits(split);
    manifest.entries.retain(|e| keep.contains(&e.split));
    Ok(ingest_dataset(root, &manifest, stride)?)
}

fn build_network(config: &PipelineConfig, seed: u64) -> Result<Network<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(Network::build(&config.architecture.table()?, config.init, &mut rng)?)
}

fn load_network(config: &PipelineConfig, path: &Path) -> Result<Network<f32>> {
    let mut net = build_network(config, 0)?;
    load_weights(&mut net, path, true)?;
    Ok(net)
}

/// `--weights` values: bare paths belong to `default_mode`.
fn weight_paths(values: &[String], default_mode: Option<FusionMode>) -> Result<BTreeMap<FusionMode, PathBuf>> {
    let mut out = BTreeMap::new();
    for v in values {
        let (mode, path) = match v.split_once('=') {
            Some((m, p)) => (m.parse::<FusionMode>()?, PathBuf::from(p)),
            None => match default_mode {
                Some(m) if m.is_pixel_mode() => (m, PathBuf::from(v)),
                _ => return Err(input_error(format!("--weights {v:?} needs a MODE=PATH form here"))),
            },
        };
        if !mode.is_pixel_mode() {
            return Err(input_error("decision-level fusion has no weights of its own"));
        }
        if out.insert(mode, path).is_some() {
            return Err(input_error(format!("weights for {mode} given twice")));
        }
    }
    Ok(out)
}

/// Loads the networks `modes` need, failing before any work if some lack weights.
fn networks_for(
    modes: &[FusionMode],
    paths: &BTreeMap<FusionMode, PathBuf>,
    config: &PipelineConfig,
) -> Result<BTreeMap<FusionMode, Network<f32>>> {
    let available: BTreeSet<FusionMode> = paths.keys().copied().collect();
    let missing = missing_weights(modes, &available);
    if !missing.is_empty() {
        let text: Vec<String> = missing
            .iter()
            .map(|(m, need)| {
                let need: Vec<&str> = need.iter().map(|n| n.as_str()).collect();
                format!("{m} (needs {})", need.join(", "))
            })
            .collect();
        return Err(Error::Config(format!("missing weights: {}", text.join("; "))).into());
    }
    let needed: BTreeSet<FusionMode> = modes.iter().flat_map(|&m| required_networks(m)).collect();
    needed
        .into_iter()
        .map(|m| Ok((m, load_network(config, &paths[&m])?)))
        .collect()
}

fn weights_json(paths: &BTreeMap<FusionMode, PathBuf>) -> Value {
    paths
        .iter()
        .map(|(m, p)| (m.as_str().to_string(), json!(p)))
        .collect::<serde_json::Map<_, _>>()
        .into()
}

fn image_file(id: &str, ext: &str) -> PathBuf {
    PathBuf::from(format!("{id}.{ext}"))
}

pub fn synth(run: &mut Run, a: &SynthArgs) -> Result<()> {
    let profile = if SuiteProfile::BUILTIN.contains(&a.profile.as_str()) {
        SuiteProfile::builtin(&a.profile)?
    } else {
        let p = Path::new(&a.profile);
        let text = fs::read_to_string(p).map_err(|e| {
            input_error(format!("profile {:?} is neither built in nor a readable file: {e}", a.profile))
        })?;
        SuiteProfile::parse(&text)?
    };
    let summary = generate_suite(&profile, &run.out_dir, a.seed)?;
    run.write("profile.txt", profile.to_text())?;
    run.record(run.path(fusedet::dataset::MANIFEST_FILE));
    run.note("profile", json!(profile.name));
    run.note("sequences", json!(summary.manifest.entries.len()));
    run.note("frames_written", json!(summary.frames_written));
    println!(
        "wrote {} sequences ({} frames) to {}",
        summary.manifest.entries.len(),
        summary.frames_written,
        run.out_dir.display()
    );
    Ok(())
}

pub fn propose(run: &mut Run, a: &ProposeArgs) -> Result<()> {
    let mode: FusionMode = a.mode.into();
    if !mode.is_pixel_mode() {
        return Err(input_error("proposals need a pixel fusion mode"));
    }
    let samples = load_samples(&a.data, a.split, run.config.frame_stride)?;
    let mut summary = String::from("image_id,proposals,recall\n");
    let mut recalls = Vec::new();
    for s in &samples {
        let image = s.fused(mode)?;
        let set = selective_search(&image, &run.config.proposals)?;
        let path = run.path(Path::new("proposals").join(image_file(&s.image_id(), "csv")));
        set.save_csv(&path)?;
        let gts: Vec<_> = s.gts.iter().map(|g| g.bbox).collect();
        let recall = set.recall(&gts, 0.5);
        if let Some(r) = recall {
            recalls.push(r);
        }
        summary.push_str(&format!(
            "{},{},{}\n",
            s.image_id(),
            set.len(),
            recall.map_or_else(String::new, |r| r.to_string())
        ));
        if a.overlay {
            let dets: Vec<Detection> = set.boxes.iter().map(|&b| Detection::new(b, 1.0)).collect();
            let path = run.path(Path::new("overlays").join(image_file(&s.image_id(), "png")));
            save_overlay(&image, &dets, &[], &path)?;
        }
    }
    run.record(run.path("proposals"));
    run.write("proposals.csv", summary)?;
    let mean = if recalls.is_empty() { None } else { Some(recalls.iter().sum::<f64>() / recalls.len() as f64) };
    run.note("images", json!(samples.len()));
    run.note("mean_recall", json!(mean));
    println!("{} images, mean recall at IoU 0.5: {}", samples.len(), mean.map_or("-".into(), |r| format!("{r:.4}")));
    Ok(())
}

pub fn train_cmd(run: &mut Run, a: &TrainArgs) -> Result<()> {
    let mode: FusionMode = a.mode.into();
    if !mode.is_pixel_mode() {
        return Err(input_error(
            "decision-level fusion is not trained; train visible, mwir and motion detectors instead",
        ));
    }
    if let Some(n) = a.iters {
        run.config.train.iterations = n;
    }
    run.config.train.seed = a.seed;
    run.config.validate()?;
    let config = run.config.clone();

    let mut net = build_network(&config, a.seed)?;
    if let Some(p) = &a.init_weights {
        let report = load_weights(&mut net, p, false)?;
        log::info!("initialised {} tensors from {}", report.loaded.len(), p.display());
        run.note("init_weights", json!(p));
    }
    let samples = load_samples(&a.data, SplitArg::Train, config.frame_stride)?;
    log::info!("preparing {} training images", samples.len());
    let images = prepare_images(&samples, mode, &config.proposals)?;

    let ckpt_dir = run.path("checkpoints");
    let every = config.train.checkpoint_every;
    let mut checkpoints = Vec::new();
    let log = train(&mut net, &images, &config.train, config.detect.input_scale, |row, net| {
        if row.iteration % 100 == 0 {
            log::info!("iteration {} l_cls {:.4} l_bbox {:.4} lr {}", row.iteration, row.l_cls, row.l_bbox, row.lr);
        }
        if every > 0 && row.iteration % every == 0 {
            let p = ckpt_dir.join(format!("iter_{:06}.bin", row.iteration));
            save_weights(net, &p)?;
            checkpoints.push(p);
        }
        Ok(())
    })?;
    run.outputs.extend(checkpoints);
    let weights = run.path("weights.bin");
    save_weights(&net, &weights)?;
    run.record(weights);
    run.write("train_log.csv", log.to_csv())?;
    run.write("config.txt", config.to_text())?;
    let last = log.rows.last();
    run.note("mode", json!(mode.as_str()));
    run.note("images", json!(images.len()));
    run.note("final_l_cls", json!(last.map(|r| r.l_cls)));
    run.note("final_l_bbox", json!(last.map(|r| r.l_bbox)));
    println!("trained {mode} for {} iterations on {} images", log.rows.len(), images.len());
    Ok(())
}

pub fn detect_cmd(run: &mut Run, a: &DetectArgs) -> Result<()> {
    let mode: FusionMode = a.mode.into();
    let paths = weight_paths(&a.weights.weights, Some(mode))?;
    let networks = networks_for(&[mode], &paths, &run.config)?;
    let samples = load_samples(&a.data, a.split, run.config.frame_stride)?;
    let results = run_mode(
        &samples,
        mode,
        &networks,
        &run.config.proposals,
        &run.config.detect,
        &DecisionFusionConfig::default(),
    )?;
    let rows: Vec<(String, Detection)> = results
        .iter()
        .flat_map(|r| r.detections.iter().map(move |d| (r.image_id.clone(), *d)))
        .collect();
    let path = run.path("dets.csv");
    save_detections(&rows, &path)?;
    run.record(path);
    let mut timing = String::from("image_id,proposal_s,network_s,overall_s\n");
    for r in &results {
        timing.push_str(&format!(
            "{},{},{},{}\n",
            r.image_id, r.timing.proposal, r.timing.network, r.timing.overall
        ));
    }
    run.write("timing.csv", timing)?;
    if a.overlay {
        for (s, r) in samples.iter().zip(&results) {
            let image = if mode.is_pixel_mode() { s.fused(mode)? } else { s.fused(FusionMode::ThreeChannel)? };
            let gts: Vec<_> = r.gts.iter().map(|g| g.bbox).collect();
            let path = run.path(Path::new("overlays").join(image_file(&r.image_id, "png")));
            save_overlay(&image, &r.detections, &gts, &path)?;
        }
        run.record(run.path("overlays"));
    }
    run.note("mode", json!(mode.as_str()));
    run.note("weights", weights_json(&paths));
    run.note("images", json!(results.len()));
    run.note("detections", json!(rows.len()));
    println!("{} detections on {} images", rows.len(), results.len());
    Ok(())
}

pub fn evaluate(run: &mut Run, a: &EvaluateArgs) -> Result<()> {
    let dets = load_detections(&a.dets)?;
    let manifest = load_manifest(&a.gt)?;
    let mut gts = BTreeMap::new();
    for split in splits(a.split) {
        gts.extend(load_ground_truth(&a.gt, &manifest, split, run.config.frame_stride)?);
    }
    let results = results_from_detections(&dets, &gts)?;
    let mode: FusionMode = a.mode.into();
    let report = summarize(mode, &results, a.ap.into())?;
    write_reports(std::slice::from_ref(&report), &run.out_dir)?;
    for f in ["report.csv", "report.txt", &format!("pr_{}.csv", mode.as_str())] {
        run.record(run.path(f));
    }
    let plot = a.plot.clone().unwrap_or_else(|| PathBuf::from("pr.svg"));
    let plot = if plot.is_absolute() { plot } else { run.path(plot) };
    save_pr_plot(&[(mode.label(), &report.pr)], &plot)?;
    run.record(plot);
    run.note("ap", json!(report.ap));
    run.note("top1", json!(report.top1));
    run.note("images", json!(report.images));
    print!("{}", report_table(std::slice::from_ref(&report)));
    Ok(())
}

pub fn benchmark(run: &mut Run, a: &BenchmarkArgs) -> Result<()> {
    let modes: Vec<FusionMode> = if a.modes.is_empty() {
        FusionMode::ALL.to_vec()
    } else {
        let mut seen = BTreeSet::new();
        a.modes.iter().map(|&m| m.into()).filter(|m| seen.insert(*m)).collect()
    };
    let mut paths = weight_paths(&a.weights.weights, None)?;
    if let Some(dir) = &a.weights_dir {
        for m in FusionMode::PIXEL {
            let p = dir.join(format!("{}.bin", m.as_str()));
            if !paths.contains_key(&m) && p.is_file() {
                paths.insert(m, p);
            }
        }
    }
    let networks = networks_for(&modes, &paths, &run.config)?;
    let samples = load_samples(&a.data, SplitArg::Test, run.config.frame_stride)?;
    let out = run_benchmark(
        &samples,
        &modes,
        &networks,
        &run.config.proposals,
        &run.config.detect,
        &DecisionFusionConfig::default(),
        a.ap.into(),
    )?;
    let reports: Vec<_> = out.into_iter().map(|(r, _)| r).collect();
    write_reports(&reports, &run.out_dir)?;
    run.record(run.path("report.csv"));
    run.record(run.path("report.txt"));
    for r in &reports {
        run.record(run.path(format!("pr_{}.csv", r.mode.as_str())));
    }
    let curves: Vec<(&str, &_)> = reports.iter().map(|r| (r.mode.label(), &r.pr)).collect();
    let plot = run.path("pr.svg");
    save_pr_plot(&curves, &plot)?;
    run.record(plot);
    run.note("modes", json!(modes.iter().map(|m| m.as_str()).collect::<Vec<_>>()));
    run.note("weights", weights_json(&paths));
    run.note("images", json!(samples.len()));
    print!("{}", report_table(&reports));
    Ok(())
}

pub fn dump_features(run: &mut Run, a: &DumpArgs) -> Result<()> {
    let mode: FusionMode = a.mode.into();
    if !mode.is_pixel_mode() {
        return Err(input_error("feature maps need a pixel fusion mode"));
    }
    let paths = weight_paths(&a.weights.weights, Some(mode))?;
    let Some(path) = paths.get(&mode) else {
        bail!(Error::Config(format!("missing weights for {mode}")));
    };
    let net = load_network(&run.config, path)?;
    let samples = load_samples(&a.data, SplitArg::Test, run.config.frame_stride)?;
    for s in samples.iter().take(a.limit) {
        let image = s.fused(mode)?;
        let id = s.image_id();
        let input = run.path(Path::new("features").join(image_file(&format!("{id}_input"), "png")));
        image.save_png(&input)?;
        let fmap = run.path(Path::new("features").join(image_file(&format!("{id}_{}", a.layer), "png")));
        dump_feature_map(&net, &image, &a.layer, a.projection.into(), &fmap)?;
        run.record(input);
        run.record(fmap);
    }
    run.note("mode", json!(mode.as_str()));
    run.note("layer", json!(a.layer));
    println!("dumped {} feature maps of {}", samples.len().min(a.limit), a.layer);
    Ok(())
}
