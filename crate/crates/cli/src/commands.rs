use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use patternnet::data::{self, ImageConfig, PngOptions, Split, ToyConfig};
use patternnet::estimators::{self, FitOptions, SignalEstimatorKind};
use patternnet::eval::{
    self, DegradationOptions, PatchOrdering, ProbeStats, RhoReport, RHO_LAMBDA_SCALE,
};
use patternnet::explain::{render_heatmap, HeatmapMode, Method};
use patternnet::network::{self, Loss, Optimizer, TrainConfig};
use patternnet::tensor::RngStream;
use patternnet::{Dataset, Error, Explainer, NetworkModel, PatternSet, Result};
use serde_json::json;

use crate::config::Config;
use crate::manifest::Manifest;

pub const DATA_FILE: &str = "data.pnd";
pub const MODEL_FILE: &str = "model.pnm";
pub const RHO_FILE: &str = "rho.csv";
pub const RHO_LAYERS_FILE: &str = "rho_layers.csv";
pub const CURVES_FILE: &str = "curves.csv";
pub const AUC_FILE: &str = "auc.csv";
pub const REPORT_FILE: &str = "report.md";

pub fn patterns_file(kind: SignalEstimatorKind) -> String {
    format!("patterns-{}.pnp", kind.name())
}

pub struct Ctx {
    pub cfg: Config,
    pub out: PathBuf,
    pub seed: u64,
}

impl Ctx {
    pub fn new(cfg: Config) -> Result<Self> {
        let out = PathBuf::from(cfg.str_or("out", "."));
        fs::create_dir_all(&out)?;
        let seed = cfg.parse_or("seed", 0u64)?;
        Ok(Ctx { cfg, out, seed })
    }

    fn split(&self, key: &str, default: Split) -> Result<Split> {
        Ok(self.cfg.parse(key)?.unwrap_or(default))
    }

    fn load_data(&self, m: &mut Manifest, key: &str) -> Result<Dataset> {
        let p = self.cfg.path(key)?;
        m.input(&p)?;
        data::load_dataset(&p)
    }

    /// The held-out set if `eval.data` is given, else `data`. The flag says
    /// whether it is the same file the patterns were fitted on.
    fn load_eval_data(&self, m: &mut Manifest) -> Result<(Dataset, bool)> {
        if self.cfg.get("eval.data").is_some() {
            Ok((self.load_data(m, "eval.data")?, false))
        } else {
            Ok((self.load_data(m, "data")?, true))
        }
    }

    fn load_model(&self, m: &mut Manifest) -> Result<NetworkModel> {
        let p = self.cfg.path("model")?;
        m.input(&p)?;
        network::load_model(&p)
    }

    fn load_pattern_files(
        &self,
        m: &mut Manifest,
        model: &NetworkModel,
    ) -> Result<Vec<PatternSet>> {
        let mut sets = Vec::new();
        for f in self.cfg.list("patterns") {
            let p = PathBuf::from(&f);
            if !p.exists() {
                return Err(Error::Dependency(format!(
                    "pattern file {f} does not exist"
                )));
            }
            m.input(&p)?;
            let set: PatternSet = estimators::load_patterns(&p)?;
            set.check_binding(model)?;
            sets.push(set);
        }
        Ok(sets)
    }

    fn methods(&self, default: &[Method]) -> Result<Vec<Method>> {
        let names = self.cfg.list("methods");
        if names.is_empty() {
            return Ok(default.to_vec());
        }
        names.iter().map(|s| s.parse()).collect()
    }
}

fn write_with<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(BufWriter<File>) -> Result<()>,
{
    f(BufWriter::new(File::create(path)?))
}

fn hygiene(
    m: &mut Manifest,
    what: &str,
    a: (&str, Split),
    b: (&str, Split),
    n: usize,
) -> Result<()> {
    if a.1.overlaps(b.1, n)? {
        m.warn(format!(
            "split hygiene: {what} {} split {} overlaps {} split {} of the same {n} samples",
            a.0, a.1, b.0, b.1
        ));
    }
    Ok(())
}

pub fn toygen(ctx: &Ctx) -> Result<Manifest> {
    let c = &ctx.cfg;
    let mut m = Manifest::new("toygen", &ctx.out);
    let kind = c.str_or("toy.kind", "linear");
    let d: Dataset = match kind {
        "linear" => {
            let mut t = ToyConfig {
                seed: ctx.seed,
                ..ToyConfig::default()
            };
            if let Some(v) = c.floats("toy.a_s")? {
                t.a_s = v;
            }
            if let Some(v) = c.floats("toy.a_d")? {
                t.a_d = v;
            }
            t.y_range = c.pair("toy.y_range")?.unwrap_or(t.y_range);
            t.noise_mean = c.parse_or("toy.noise_mean", t.noise_mean)?;
            t.noise_std = c.parse_or("toy.noise_std", t.noise_std)?;
            t.n_samples = c.parse_or("toy.n_samples", t.n_samples)?;
            t.generate()?
        }
        "images" => {
            let d = ImageConfig::default();
            let t = ImageConfig {
                classes: c.parse_or("images.classes", d.classes)?,
                size: c.parse_or("images.size", d.size)?,
                channels: c.parse_or("images.channels", d.channels)?,
                bumps_per_class: c.parse_or("images.bumps_per_class", d.bumps_per_class)?,
                bump_width: c.parse_or("images.bump_width", d.bump_width)?,
                signal_range: c.pair("images.signal_range")?.unwrap_or(d.signal_range),
                distractors: c.parse_or("images.distractors", d.distractors)?,
                distractor_std: c.parse_or("images.distractor_std", d.distractor_std)?,
                noise_std: c.parse_or("images.noise_std", d.noise_std)?,
                n_samples: c.parse_or("toy.n_samples", d.n_samples)?,
                seed: ctx.seed,
            };
            t.generate()?
        }
        other => {
            return Err(Error::Config(format!(
                "toy.kind must be linear or images, got {other:?}"
            )))
        }
    };
    let path = ctx.out.join(DATA_FILE);
    data::save_dataset(&d, &path)?;
    m.output(&path, json!({ "kind": "dataset" }))?;
    m.summarize("samples", json!(d.len()));
    m.summarize("input_shape", json!(d.input_shape()));
    Ok(m)
}

pub fn ingest(ctx: &Ctx) -> Result<Manifest> {
    let c = &ctx.cfg;
    let mut m = Manifest::new("ingest", &ctx.out);
    let src = c.path("ingest.path")?;
    m.input(&src)?;
    let d: Dataset = match c.require("ingest.format")? {
        "idx" => {
            let labels = c.path("ingest.labels")?;
            m.input(&labels)?;
            data::ingest_idx(&src, &labels)?
        }
        "csv" => data::ingest_csv(&src)?,
        "png_dir" => {
            let size = match c.get("ingest.size") {
                None => None,
                Some(s) => {
                    let bad =
                        || Error::Config(format!("ingest.size must look like 28x28, got {s:?}"));
                    let (h, w) = s.split_once('x').ok_or_else(bad)?;
                    Some((
                        h.trim().parse().map_err(|_| bad())?,
                        w.trim().parse().map_err(|_| bad())?,
                    ))
                }
            };
            data::ingest_png_dir(
                &src,
                PngOptions {
                    size,
                    grayscale: c.parse("ingest.grayscale")?,
                },
            )?
        }
        f => {
            return Err(Error::Config(format!(
                "ingest.format must be idx, png_dir or csv, got {f:?}"
            )))
        }
    };
    let d = d.normalize_channels();
    let path = ctx.out.join(DATA_FILE);
    data::save_dataset(&d, &path)?;
    m.output(&path, json!({ "kind": "dataset" }))?;
    m.summarize("samples", json!(d.len()));
    m.summarize("input_shape", json!(d.input_shape()));
    m.summarize("channel_mean", json!(d.channel_mean()));
    m.summarize("channel_std", json!(d.channel_std()));
    Ok(m)
}

pub fn train(ctx: &Ctx) -> Result<Manifest> {
    let c = &ctx.cfg;
    let mut m = Manifest::new("train", &ctx.out);
    let d = ctx.load_data(&mut m, "data")?;
    let split = ctx.split("train.split", Split::All)?;
    let (inputs, labels) = d.split(split)?;
    let arch = network::parse_architecture(c.require("arch")?)?;
    let init = NetworkModel::init(d.input_shape(), &arch, &mut RngStream::new(ctx.seed))?;
    let loss = match c.get("train.loss") {
        None if d.label_arity() > 1 => Loss::SoftmaxCrossEntropy,
        None | Some("mse") => Loss::MeanSquared,
        Some("cross_entropy") => Loss::SoftmaxCrossEntropy,
        Some(l) => {
            return Err(Error::Config(format!(
                "train.loss must be mse or cross_entropy, got {l:?}"
            )))
        }
    };
    let optimizer = match c.str_or("train.optimizer", "adam") {
        "adam" => Optimizer::Adam,
        "sgd" => Optimizer::Sgd,
        o => {
            return Err(Error::Config(format!(
                "train.optimizer must be adam or sgd, got {o:?}"
            )))
        }
    };
    let defaults = TrainConfig::default();
    let tc = TrainConfig {
        optimizer,
        loss,
        learning_rate: c.parse_or("train.lr", defaults.learning_rate)?,
        batch_size: c.parse_or("train.batch", defaults.batch_size)?,
        epochs: c.parse_or("train.epochs", defaults.epochs)?,
        seed: ctx.seed,
    };
    let (model, report) = network::train(&init, inputs, labels, &tc)?;
    let path = ctx.out.join(MODEL_FILE);
    network::save_model(&model, &path)?;
    m.output(
        &path,
        json!({ "kind": "model", "model_crc": format!("{:08x}", model.crc32()) }),
    )?;
    m.summarize("epoch_loss", json!(report.epoch_loss));
    m.summarize("parameters", json!(model.parameter_count()));
    if d.label_arity() > 1 {
        let start = d.range(split)?.start;
        let mut correct = 0;
        for (i, x) in inputs.iter().enumerate() {
            correct += usize::from(model.predict(x)?.argmax() == d.class_of(start + i));
        }
        m.summarize(
            "train_accuracy",
            json!(correct as f64 / inputs.len() as f64),
        );
    }
    Ok(m)
}

pub fn fit(ctx: &Ctx) -> Result<Manifest> {
    let c = &ctx.cfg;
    let kind: SignalEstimatorKind = c.parse_or("estimator", SignalEstimatorKind::TwoComponent)?;
    let mut m = Manifest::new(format!("fit-{}", kind.name()), &ctx.out);
    let model = ctx.load_model(&mut m)?;
    let mut opts = FitOptions::new(kind);
    opts.timestamp = c.parse_or("fit.timestamp", 0u64)?;
    let set = if kind == SignalEstimatorKind::Filter {
        estimators::fit_all(&model, &[], &opts)?
    } else {
        let d = ctx.load_data(&mut m, "data")?;
        let split = ctx.split("fit.split", Split::FirstHalf)?;
        opts.split = Some(split);
        estimators::fit_all(&model, d.split(split)?.0, &opts)?
    };
    if set.flagged_count() > 0 {
        m.warn(format!(
            "{} neurons flagged (dead, thin or degenerate regime)",
            set.flagged_count()
        ));
    }
    let path = ctx.out.join(patterns_file(kind));
    estimators::save_patterns(&set, &path)?;
    m.output(
        &path,
        json!({ "kind": "patterns", "estimator": kind.name() }),
    )?;
    m.summarize("flagged", json!(set.flagged_count()));
    m.summarize("samples", json!(set.provenance().sample_count));
    Ok(m)
}

pub fn rho(ctx: &Ctx) -> Result<Manifest> {
    let c = &ctx.cfg;
    let mut m = Manifest::new("rho", &ctx.out);
    let model = ctx.load_model(&mut m)?;
    let sets = ctx.load_pattern_files(&mut m, &model)?;
    let baselines = match c.get("rho.baselines") {
        None => vec!["random".to_string()],
        Some(_) => c.list("rho.baselines"),
    };
    if sets.is_empty() && baselines.is_empty() {
        return Err(Error::Dependency(
            "rho needs pattern files or a baseline".into(),
        ));
    }
    let d = ctx.load_data(&mut m, "data")?;
    let probe_split = ctx.split("rho.probe_split", Split::SecondHalf)?;
    let eval_split = ctx.split("rho.eval_split", Split::All)?;
    let (eval_d, same) = ctx.load_eval_data(&mut m)?;
    for s in &sets {
        if let Some(fit) = s.provenance().split {
            hygiene(
                &mut m,
                "rho",
                ("probe", probe_split),
                ("fitting", fit),
                d.len(),
            )?;
            if same {
                hygiene(
                    &mut m,
                    "rho",
                    ("evaluation", eval_split),
                    ("fitting", fit),
                    d.len(),
                )?;
            }
        }
    }
    if same {
        hygiene(
            &mut m,
            "rho",
            ("evaluation", eval_split),
            ("probe", probe_split),
            d.len(),
        )?;
    }
    let lambda = c.parse_or("rho.lambda_scale", RHO_LAMBDA_SCALE)?;
    let probe = ProbeStats::collect(&model, d.split(probe_split)?.0)?;
    let eval_inputs = eval_d.split(eval_split)?.0;
    let mut reports: Vec<(String, RhoReport)> = Vec::new();
    for s in &sets {
        reports.push((
            s.kind().name().to_string(),
            probe.rho(&model, Some(s), eval_inputs, lambda)?,
        ));
    }
    for b in &baselines {
        let r = match b.as_str() {
            "random" => probe.rho(
                &model,
                Some(&eval::random_patterns(&model, ctx.seed)?),
                eval_inputs,
                lambda,
            )?,
            "identity" => probe.rho(&model, None, eval_inputs, lambda)?,
            _ => return Err(Error::Config(format!("unknown rho baseline {b:?}"))),
        };
        reports.push((b.clone(), r));
    }
    let labelled: Vec<(&str, &RhoReport)> = reports.iter().map(|(l, r)| (l.as_str(), r)).collect();
    let path = ctx.out.join(RHO_FILE);
    write_with(&path, |w| eval::write_rho_csv(w, &labelled))?;
    m.output(&path, json!({ "kind": "rho" }))?;
    let path = ctx.out.join(RHO_LAYERS_FILE);
    write_with(&path, |w| {
        let mut w = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(["layer", "estimator", "mean_rho", "flagged"])
            .map_err(io)?;
        for (label, r) in &reports {
            for l in &r.layers {
                let flagged = l.neurons.iter().filter(|n| n.flagged).count();
                w.write_record([
                    l.layer.to_string(),
                    label.clone(),
                    format!("{:.17e}", l.mean()),
                    flagged.to_string(),
                ])
                .map_err(io)?;
            }
        }
        w.flush()?;
        Ok(())
    })?;
    m.output(&path, json!({ "kind": "rho_layers" }))?;
    for (label, r) in &reports {
        println!("rho {label:<14} {}", fmt_list(&r.layer_means()));
        m.summarize(label, json!(r.layer_means()));
    }
    Ok(m)
}

fn fmt_list(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.4}"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn explain(ctx: &Ctx) -> Result<Manifest> {
    let c = &ctx.cfg;
    let mut m = Manifest::new("explain", &ctx.out);
    let model = ctx.load_model(&mut m)?;
    let sets = ctx.load_pattern_files(&mut m, &model)?;
    if sets.len() > 1 {
        return Err(Error::Config("explain takes a single pattern file".into()));
    }
    let patterns = sets.first();
    let methods = match (c.get("methods"), patterns) {
        (None, None) => {
            m.warn("no pattern file given; skipping pattern_net and pattern_attribution");
            Method::ALL
                .iter()
                .copied()
                .filter(|m| !m.needs_patterns())
                .collect()
        }
        _ => ctx.methods(&Method::ALL)?,
    };
    let (d, _) = ctx.load_eval_data(&mut m)?;
    let index: usize = c.parse_or("explain.index", 0)?;
    if index >= d.len() {
        return Err(Error::Data(format!(
            "explain.index {index} outside a dataset of {}",
            d.len()
        )));
    }
    let x = &d.inputs()[index];
    let target = match c.parse("explain.target")? {
        Some(t) => t,
        None => model.predict(x)?.argmax(),
    };
    let explainer = Explainer::new(&model, patterns)?;
    let dir = ctx.out.join("explain");
    fs::create_dir_all(&dir)?;
    for method in methods {
        let e = explainer.explain(x, target, method)?;
        let stem = format!("{index}-{method}");
        let tags = json!({ "method": method.name(), "target": target, "index": index });
        for p in e.export(&dir, &stem)? {
            m.output(&p, tags.clone())?;
        }
        let png = dir.join(format!("{stem}.png"));
        render_heatmap(&e, HeatmapMode::for_method(method))?.save_png(&png)?;
        m.output(&png, tags)?;
    }
    m.summarize("target", json!(target));
    Ok(m)
}

pub fn degrade(ctx: &Ctx) -> Result<Manifest> {
    let c = &ctx.cfg;
    let mut m = Manifest::new("degrade", &ctx.out);
    let model = ctx.load_model(&mut m)?;
    let sets = ctx.load_pattern_files(&mut m, &model)?;
    if sets.len() > 1 {
        return Err(Error::Config("degrade takes a single pattern file".into()));
    }
    let patterns = sets.first();
    let methods = ctx.methods(&[Method::PatternAttribution, Method::LrpZ])?;
    if patterns.is_none() && methods.iter().any(|m| m.needs_patterns()) {
        return Err(Error::Dependency(
            "pattern methods need a pattern file (patterns = ...)".into(),
        ));
    }
    let (d, same) = ctx.load_eval_data(&mut m)?;
    let split = ctx.split("degrade.split", Split::All)?;
    if same {
        if let Some(fit) = patterns.and_then(|p| p.provenance().split) {
            hygiene(
                &mut m,
                "degrade",
                ("evaluation", split),
                ("fitting", fit),
                d.len(),
            )?;
        }
    }
    let range = d.range(split)?;
    let wanted: usize = c.parse_or("degrade.images", 500)?;
    let n = wanted.min(range.len());
    if n < wanted {
        m.warn(format!("only {n} images available, {wanted} requested"));
    }
    let images = &d.inputs()[range.start..range.start + n];
    let opts = DegradationOptions {
        patch: c.parse_or("degrade.patch", 4)?,
        steps: c.parse_or("degrade.steps", 100)?,
    };
    let explainer = Explainer::new(&model, patterns)?;
    let mut orderings: Vec<PatchOrdering> =
        methods.into_iter().map(PatchOrdering::Method).collect();
    if c.parse_or("degrade.random", true)? {
        orderings.push(PatchOrdering::Random { seed: ctx.seed });
    }
    let curves = orderings
        .into_iter()
        .map(|o| eval::degradation_run(&explainer, images, range.start, o, &opts))
        .collect::<Result<Vec<_>>>()?;
    let path = ctx.out.join(CURVES_FILE);
    write_with(&path, |w| eval::write_curve_csv(w, &curves))?;
    m.output(&path, json!({ "kind": "curves" }))?;
    let path = ctx.out.join(AUC_FILE);
    write_with(&path, |w| {
        let mut w = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(["method", "images", "auc"]).map_err(io)?;
        for cv in &curves {
            w.write_record([
                cv.ordering.clone(),
                cv.images.to_string(),
                format!("{:.17e}", cv.auc()),
            ])
            .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    })?;
    m.output(&path, json!({ "kind": "auc" }))?;
    for cv in &curves {
        println!("auc {:<20} {:.4}", cv.ordering, cv.auc());
        m.summarize(&cv.ordering, json!(cv.auc()));
    }
    Ok(m)
}

fn read_rows(path: &Path) -> Result<Vec<csv::StringRecord>> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    r.records()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn num(rec: &csv::StringRecord, i: usize) -> Result<f64> {
    rec.get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Data(format!("malformed row {rec:?}")))
}

/// Collects `rho_layers.csv` and `auc.csv` from the output directory into
/// `report.md`.
pub fn report(ctx: &Ctx) -> Result<Manifest> {
    let mut m = Manifest::new("report", &ctx.out);
    let rho_path = ctx.out.join(RHO_LAYERS_FILE);
    let auc_path = ctx.out.join(AUC_FILE);
    if !rho_path.exists() && !auc_path.exists() {
        return Err(Error::Dependency(format!(
            "nothing to report in {}: run rho or degrade first",
            ctx.out.display()
        )));
    }
    let mut md = String::from("# Run report\n");
    if rho_path.exists() {
        m.input(&rho_path)?;
        let rows = read_rows(&rho_path)?;
        let mut estimators: Vec<String> = Vec::new();
        let mut layers: Vec<String> = Vec::new();
        for r in &rows {
            let (l, e) = (r[0].to_string(), r[1].to_string());
            if !layers.contains(&l) {
                layers.push(l);
            }
            if !estimators.contains(&e) {
                estimators.push(e);
            }
        }
        md += "\n## Layer-mean rho\n\n| estimator |";
        for l in &layers {
            md += &format!(" layer {l} |");
        }
        md += "\n|---|";
        md += &"---|".repeat(layers.len());
        md += "\n";
        for e in &estimators {
            md += &format!("| {e} |");
            let mut means = Vec::new();
            for l in &layers {
                match rows.iter().find(|r| &r[0] == l && &r[1] == e) {
                    Some(r) => {
                        let v = num(r, 2)?;
                        means.push(v);
                        md += &format!(" {v:.4} |");
                    }
                    None => md += " |",
                }
            }
            md += "\n";
            m.summarize(&format!("rho.{e}"), json!(means));
        }
    }
    if auc_path.exists() {
        m.input(&auc_path)?;
        md += "\n## Degradation AUC (lower is better)\n\n| ordering | images | auc |\n|---|---|---|\n";
        for r in read_rows(&auc_path)? {
            let v = num(&r, 2)?;
            md += &format!("| {} | {} | {v:.4} |\n", &r[0], &r[1]);
            m.summarize(&format!("auc.{}", &r[0]), json!(v));
        }
    }
    let path = ctx.out.join(REPORT_FILE);
    fs::write(&path, &md)?;
    m.output(&path, json!({ "kind": "report" }))?;
    print!("{md}");
    Ok(m)
}
