//! End-to-end training and inference.
//!
//! Training runs: resize → segment → extract → standardize → GA select →
//! one-vs-all → priors → integration vectors → MLP. Inference replays the
//! same steps with the bundle's settings and returns labels for the full
//! model and for the three context ablations.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::bundle::ModelBundle;
use crate::config::{RunConfig, Segmenter};
use crate::context::{fit_priors, predict_context, ContextPriors, PriorSample};
use crate::error::{Error, Result, StageExt};
use crate::features::{extract_features, FeatureCatalog, Standardizer, CATALOG_VERSION};
use crate::gasel::{run_ga, FeatureMask, GaOutcome, LabeledRows};
use crate::imagedata::{resize_image, resize_labels, split_dataset, Dataset, DatasetSplit, LabeledImage};
use crate::integrate::{train_integration, TrainedMlp};
use crate::metrics::{Confusion, EvalReport};
use crate::superpix::{segment_grid, segment_slic, SlicParams, SuperpixelMap};
use crate::visual::{predict_visual, train_ova, BinaryClassifier};
use crate::{argmax, seeds};

/// Seeded train/test split of a dataset under `cfg`.
pub fn split_for(dataset: &Dataset, cfg: &RunConfig) -> Result<DatasetSplit> {
    split_dataset(&dataset.ids(), cfg.split_ratio, seeds::derive(cfg.seed, seeds::STAGE_SPLIT))
}

pub fn segment(img: &LabeledImage, cfg: &RunConfig) -> Result<SuperpixelMap> {
    match cfg.segmenter {
        Segmenter::Grid => segment_grid(img, cfg.superpixels, cfg.blocks),
        Segmenter::Slic => segment_slic(
            img,
            &SlicParams {
                n: cfg.superpixels,
                compactness: cfg.compactness,
                iters: cfg.slic_iters,
            },
            cfg.blocks,
        ),
    }
}

/// One image after resizing, segmentation and feature extraction.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub id: String,
    /// Original resolution, for mapping predictions back.
    pub orig_width: usize,
    pub orig_height: usize,
    pub map: SuperpixelMap,
    /// Raw (unstandardized) feature rows, one per superpixel.
    pub features: Vec<Vec<f64>>,
    /// Majority ground-truth class per superpixel, `None` when unknown.
    pub majority: Vec<Option<usize>>,
}

pub fn prepare_image(img: &LabeledImage, cfg: &RunConfig, n_classes: usize) -> Result<Prepared> {
    let resized = resize_image(img, cfg.image_side).stage("resize")?;
    let map = segment(&resized, cfg).stage("segment")?;
    let features = extract_features(&resized, &map).stage("features")?;
    let majority = map.majority_labels(&resized.labels, n_classes);
    Ok(Prepared {
        id: img.id.clone(),
        orig_width: img.width,
        orig_height: img.height,
        map,
        features,
        majority,
    })
}

pub fn prepare(images: &[&LabeledImage], cfg: &RunConfig, n_classes: usize) -> Result<Vec<Prepared>> {
    images.par_iter().map(|img| prepare_image(img, cfg, n_classes)).collect()
}

/// Wall-clock seconds per stage; kept out of reports so those stay
/// reproducible.
#[derive(Debug, Clone, Default)]
pub struct Timings {
    pub stages: Vec<(&'static str, f64)>,
}

impl Timings {
    fn time<T>(&mut self, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f().stage(stage);
        self.stages.push((stage, start.elapsed().as_secs_f64()));
        out
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (stage, secs) in &self.stages {
            let _ = writeln!(s, "{stage:<10} {secs:>9.3} s");
        }
        s
    }
}

/// Standardized labelled rows pooled over images.
fn labelled_rows(prepared: &[Prepared], standardizer: &Standardizer) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for p in prepared {
        for (f, m) in p.features.iter().zip(&p.majority) {
            if let Some(c) = m {
                rows.push(standardizer.apply(f));
                labels.push(*c);
            }
        }
    }
    (rows, labels)
}

fn fit_standardizer(prepared: &[Prepared]) -> Result<Standardizer> {
    let rows: Vec<Vec<f64>> = prepared.iter().flat_map(|p| p.features.iter().cloned()).collect();
    Standardizer::fit(&rows)
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub standardizer: Standardizer,
    pub mask: FeatureMask,
    /// `None` when selection was disabled.
    pub ga: Option<GaOutcome>,
}

/// Seeded sample of labelled rows split into GA train/validation parts.
/// Train rows, train labels, validation rows, validation labels.
type GaSplit = (Vec<Vec<f64>>, Vec<usize>, Vec<Vec<f64>>, Vec<usize>);

fn ga_sample(rows: &[Vec<f64>], labels: &[usize], cfg: &RunConfig) -> Result<GaSplit> {
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.shuffle(&mut seeds::rng(seeds::derive(cfg.seed, seeds::STAGE_GA_SAMPLE)));
    order.truncate(cfg.ga_max_rows);
    let n_val = ((order.len() as f64 * cfg.ga_val_fraction).round() as usize).clamp(1, order.len().saturating_sub(1).max(1));
    if order.len() < 2 {
        return Err(Error::data("feature selection needs at least two labelled superpixels"));
    }
    let (val, train) = order.split_at(n_val);
    let pick = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<usize>) {
        (idx.iter().map(|&i| rows[i].clone()).collect(), idx.iter().map(|&i| labels[i]).collect())
    };
    let (tr, trl) = pick(train);
    let (va, val_l) = pick(val);
    Ok((tr, trl, va, val_l))
}

/// Standardize and, if enabled, run the GA on prepared training images.
pub fn select_features(prepared: &[Prepared], cfg: &RunConfig) -> Result<Selection> {
    let standardizer = fit_standardizer(prepared)?;
    let t = standardizer.mean.len();
    if !cfg.ga_enabled {
        return Ok(Selection {
            standardizer,
            mask: FeatureMask::all(t),
            ga: None,
        });
    }
    let (rows, labels) = labelled_rows(prepared, &standardizer);
    let (tr, trl, va, val) = ga_sample(&rows, &labels, cfg)?;
    let outcome = run_ga(LabeledRows::new(&tr, &trl)?, LabeledRows::new(&va, &val)?, &cfg.ga_config())?;
    Ok(Selection {
        standardizer,
        mask: outcome.best.mask.clone(),
        ga: Some(outcome),
    })
}

/// Per-superpixel layer outputs for one image.
#[derive(Debug, Clone)]
pub struct LayerOutputs {
    pub p_vis: Vec<Vec<f64>>,
    pub voters: Vec<usize>,
    pub p_adj: Vec<Vec<f64>>,
    pub p_blk: Vec<Vec<f64>>,
}

fn layer_outputs(
    p: &Prepared,
    standardizer: &Standardizer,
    mask: &FeatureMask,
    classifiers: &[BinaryClassifier],
    priors: &ContextPriors,
) -> Result<LayerOutputs> {
    let vis: Vec<_> = p
        .features
        .iter()
        .map(|f| predict_visual(&mask.project(&standardizer.apply(f)), classifiers))
        .collect();
    let voters: Vec<usize> = vis.iter().map(|v| v.argmax).collect();
    let ctx = predict_context(&p.map, &voters, priors)?;
    let (p_adj, p_blk) = ctx.into_iter().map(|c| (c.p_adj, c.p_blk)).unzip();
    Ok(LayerOutputs {
        p_vis: vis.into_iter().map(|v| v.p).collect(),
        voters,
        p_adj,
        p_blk,
    })
}

/// The MLP input `[p_vis | p_adj | p_blk]`, with uniform context when the
/// context layer is disabled.
fn mlp_input(out: &LayerOutputs, s: usize, context: bool) -> Vec<f64> {
    let c = out.p_vis[s].len();
    let mut x = Vec::with_capacity(3 * c);
    x.extend_from_slice(&out.p_vis[s]);
    if context {
        x.extend_from_slice(&out.p_adj[s]);
        x.extend_from_slice(&out.p_blk[s]);
    } else {
        x.extend(std::iter::repeat_n(1.0 / c as f64, 2 * c));
    }
    x
}

/// Which layers produce the label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Visual,
    Adjacent,
    Block,
    Full,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Visual, Variant::Adjacent, Variant::Block, Variant::Full];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Visual => "visual-only",
            Variant::Adjacent => "visual+adjacent",
            Variant::Block => "visual+adjacent+block",
            Variant::Full => "full",
        }
    }
}

/// Pixel labels at the image's original resolution, one map per variant in
/// [`Variant::ALL`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePrediction {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub variants: [Vec<i32>; 4],
}

impl ImagePrediction {
    pub fn full(&self) -> &[i32] {
        &self.variants[3]
    }

    pub fn get(&self, v: Variant) -> &[i32] {
        &self.variants[v as usize]
    }
}

fn product_argmax(parts: &[&[f64]]) -> usize {
    let c = parts[0].len();
    let prod: Vec<f64> = (0..c).map(|k| parts.iter().map(|p| p[k]).product()).collect();
    argmax(&prod)
}

pub fn predict_prepared(bundle: &ModelBundle, p: &Prepared) -> Result<ImagePrediction> {
    let out = layer_outputs(p, &bundle.standardizer, &bundle.mask, &bundle.classifiers, &bundle.priors)?;
    let context = bundle.config.context_enabled;
    let n = p.map.n;
    let mut sp: [Vec<i32>; 4] = Default::default();
    for s in 0..n {
        let (v, a, b) = (&out.p_vis[s][..], &out.p_adj[s][..], &out.p_blk[s][..]);
        sp[0].push(out.voters[s] as i32);
        sp[1].push(product_argmax(&[v, a]) as i32);
        sp[2].push(product_argmax(&[v, a, b]) as i32);
        sp[3].push(bundle.mlp.predict(&mlp_input(&out, s, context)) as i32);
    }
    let (w, h) = (p.map.width, p.map.height);
    let variants = sp.map(|labels| resize_labels(&p.map.pixelize(&labels), w, h, p.orig_width, p.orig_height));
    Ok(ImagePrediction {
        id: p.id.clone(),
        width: p.orig_width,
        height: p.orig_height,
        variants,
    })
}

/// Label one image with a trained bundle.
pub fn predict_image(bundle: &ModelBundle, img: &LabeledImage) -> Result<ImagePrediction> {
    let p = prepare_image(img, &bundle.config, bundle.n_classes())?;
    predict_prepared(bundle, &p).stage("predict")
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub n_train_images: usize,
    pub n_train_superpixels: usize,
    pub mask: FeatureMask,
    pub ga: Option<GaOutcome>,
    pub context_enabled: bool,
    pub mlp: TrainedMlp,
    pub train_eval: EvalReport,
}

impl TrainReport {
    pub fn to_text(&self, catalog: &FeatureCatalog, names: &[String]) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "training images:       {}", self.n_train_images);
        let _ = writeln!(s, "labelled superpixels:  {}", self.n_train_superpixels);
        match &self.ga {
            Some(ga) => {
                let _ = writeln!(
                    s,
                    "feature selection:     GA, {} generations, {} evaluations, best fitness {:.6} (error {:.6})",
                    ga.history.len(),
                    ga.evaluations,
                    ga.best.fitness,
                    ga.best.error
                );
            }
            None => {
                let _ = writeln!(s, "feature selection:     skipped (all features)");
            }
        }
        let _ = writeln!(s, "selected features:     {}/{}", self.mask.count(), self.mask.len());
        let cols = catalog.column_names();
        let chosen: Vec<&str> = self.mask.indices().iter().map(|&i| cols[i].as_str()).collect();
        let _ = writeln!(s, "mask:                  {}", self.mask);
        let _ = writeln!(s, "columns:               {}", chosen.join(" "));
        let _ = writeln!(s, "context layer:         {}", if self.context_enabled { "on" } else { "off (uniform)" });
        if let (Some(first), Some(last)) = (self.mlp.epoch_loss.first(), self.mlp.epoch_loss.last()) {
            let _ = writeln!(s, "mlp loss:              {first:.6} -> {last:.6} over {} epochs", self.mlp.epoch_loss.len());
        }
        let _ = writeln!(s, "\ntrain-set evaluation\n");
        s.push_str(&self.train_eval.to_text(names));
        s
    }
}

/// Train every layer on the training split of `dataset`.
pub fn train(dataset: &Dataset, cfg: &RunConfig) -> Result<(ModelBundle, TrainReport, Timings)> {
    cfg.validate()?;
    let c = dataset.classes.n_classes();
    let mut timings = Timings::default();
    let split = split_for(dataset, cfg).stage("split")?;
    let images = dataset.select(&split.train).stage("split")?;
    if images.is_empty() {
        return Err(Error::data("training split is empty")).stage("split");
    }
    let prepared = timings.time("prepare", || prepare(&images, cfg, c))?;
    let selection = timings.time("select", || select_features(&prepared, cfg))?;
    let Selection { standardizer, mask, ga } = selection;

    let (rows, labels) = labelled_rows(&prepared, &standardizer);
    if rows.is_empty() {
        return Err(Error::data("no labelled training superpixels")).stage("visual");
    }
    let classifiers = timings.time("visual", || {
        let projected: Vec<Vec<f64>> = rows.iter().map(|r| mask.project(r)).collect();
        train_ova(&projected, &labels, c, &cfg.ova)
    })?;

    let priors = timings.time("context", || {
        let samples: Vec<PriorSample> = prepared.iter().map(|p| (&p.map, &p.majority[..])).collect();
        fit_priors(&samples, c, cfg.blocks)
    })?;

    let trained = timings.time("integrate", || {
        let outputs = prepared
            .par_iter()
            .map(|p| layer_outputs(p, &standardizer, &mask, &classifiers, &priors))
            .collect::<Result<Vec<_>>>()?;
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        for (p, out) in prepared.iter().zip(&outputs) {
            for (s, m) in p.majority.iter().enumerate() {
                if let Some(t) = m {
                    inputs.push(mlp_input(out, s, cfg.context_enabled));
                    targets.push(*t);
                }
            }
        }
        train_integration(&inputs, &targets, c, &cfg.mlp_schedule())
    })?;

    let bundle = ModelBundle {
        config: cfg.clone(),
        classes: dataset.classes.clone(),
        catalog_version: CATALOG_VERSION.to_string(),
        standardizer,
        mask: mask.clone(),
        classifiers,
        priors,
        mlp: trained.mlp.clone(),
    };
    bundle.validate().stage("bundle")?;

    let train_eval = timings.time("evaluate", || {
        let preds = prepared
            .par_iter()
            .map(|p| predict_prepared(&bundle, p))
            .collect::<Result<Vec<_>>>()?;
        let mut conf = Confusion::new(c);
        for (pred, img) in preds.iter().zip(&images) {
            conf.add(pred.full(), &img.labels)?;
        }
        conf.report()
    })?;

    let report = TrainReport {
        n_train_images: images.len(),
        n_train_superpixels: rows.len(),
        mask,
        ga,
        context_enabled: cfg.context_enabled,
        mlp: trained,
        train_eval,
    };
    Ok((bundle, report, timings))
}

/// Evaluation of a bundle on a set of labelled images.
#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub report: EvalReport,
    /// Global accuracy of each [`Variant`], in `Variant::ALL` order.
    pub ablation: Vec<(Variant, f64)>,
    pub predictions: Vec<ImagePrediction>,
}

impl EvalOutcome {
    pub fn ablation_text(&self) -> String {
        let mut s = format!("{:<24} {:>10}\n", "variant", "global acc");
        for (v, acc) in &self.ablation {
            let _ = writeln!(s, "{:<24} {:>10.4}", v.name(), acc);
        }
        s
    }
}

pub fn evaluate_images(bundle: &ModelBundle, images: &[&LabeledImage]) -> Result<EvalOutcome> {
    let c = bundle.n_classes();
    let predictions = images
        .par_iter()
        .map(|img| predict_image(bundle, img))
        .collect::<Result<Vec<_>>>()?;
    let mut confs: Vec<Confusion> = (0..4).map(|_| Confusion::new(c)).collect();
    for (pred, img) in predictions.iter().zip(images) {
        for (conf, labels) in confs.iter_mut().zip(&pred.variants) {
            conf.add(labels, &img.labels).stage("evaluate")?;
        }
    }
    let report = confs[3].report().stage("evaluate")?;
    let ablation = Variant::ALL
        .iter()
        .zip(&confs)
        .map(|(&v, conf)| Ok((v, conf.report()?.global_acc)))
        .collect::<Result<Vec<_>>>()
        .stage("evaluate")?;
    Ok(EvalOutcome {
        report,
        ablation,
        predictions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitChoice {
    Train,
    Test,
    All,
}

impl std::str::FromStr for SplitChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitChoice::Train),
            "test" => Ok(SplitChoice::Test),
            "all" => Ok(SplitChoice::All),
            other => Err(Error::config(format!("unknown split {other:?} (train|test|all)"))),
        }
    }
}

/// Evaluate on the chosen split, recomputed from the bundle's seed and ratio.
pub fn eval_split(bundle: &ModelBundle, dataset: &Dataset, which: SplitChoice) -> Result<EvalOutcome> {
    if dataset.classes.names() != bundle.classes.names() {
        return Err(Error::data("dataset classes differ from the bundle's class table"));
    }
    let ids = match which {
        SplitChoice::All => dataset.ids(),
        SplitChoice::Train => split_for(dataset, &bundle.config)?.train,
        SplitChoice::Test => split_for(dataset, &bundle.config)?.test,
    };
    let images = dataset.select(&ids)?;
    evaluate_images(bundle, &images)
}
