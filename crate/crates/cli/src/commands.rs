use crate::args::*;
use crate::config::FileConfig;
use crate::error::{CliError, Result};
use fisheye_distance::adjust::{adjust, Adjustment};
use fisheye_distance::calibrate::{fit_params, load_correspondences, FitOptions};
use fisheye_distance::camera::{CameraParams, PixelPoint};
use fisheye_distance::dataset::{
    dataset_stats, load_dataset, load_detections, load_ground_truth, resolve, save_detections,
    save_ground_truth, Dataset, DatasetStats, DEFAULT_IMAGE_SIDE,
};
use fisheye_distance::geometry::LocalizedPerson;
use fisheye_distance::metrics::{EvalReport, VIOLATION_THRESHOLD_IN};
use fisheye_distance::mlp::{extract_feature, train, FeatureScaling, MlpModel, TrainConfig};
use fisheye_distance::pipeline::{
    alpha_grid, evaluate_pipeline, grid_training_samples, sweep_alpha, Estimator,
};
use fisheye_distance::synth::{
    generate_collection, generate_grid, generate_scene, load_grid_pairs, random_crowd,
    save_grid_pairs, CollectionSpec, CrowdSpec, GridSpec, SceneOptions,
};
use serde::Serialize;
use serde_json::json;
use std::io::Write;
use std::path::{Path, PathBuf};

const DEFAULT_HEIGHT_IN: f64 = 65.0;
const DEFAULT_GRID_PAIRS: usize = 20_000;

pub struct Context {
    pub config: FileConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub output_json: Option<PathBuf>,
}

impl Context {
    pub fn new(global: &GlobalArgs) -> Result<Self> {
        let config = match &global.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        Ok(Self {
            seed: global.seed.or(config.seed).unwrap_or(0),
            out_dir: global.out_dir.clone(),
            output_json: global.output_json.clone(),
            config,
        })
    }

    fn output(&self, explicit: &Option<PathBuf>, default_name: &str) -> PathBuf {
        explicit
            .clone()
            .or_else(|| self.config.output.clone())
            .unwrap_or_else(|| self.out_dir.join(default_name))
    }

    fn image_side(&self, explicit: Option<f64>) -> f64 {
        explicit
            .or(self.config.image_side)
            .unwrap_or(DEFAULT_IMAGE_SIDE)
    }

    fn write_json(&self, value: &impl Serialize) -> Result<()> {
        if let Some(path) = &self.output_json {
            let text = serde_json::to_string_pretty(value).expect("report serializes");
            write_file(path, &(text + "\n"))?;
        }
        Ok(())
    }
}

fn required(explicit: &Option<PathBuf>, config: &Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    explicit
        .clone()
        .or_else(|| config.clone())
        .ok_or_else(|| CliError::usage(format!("missing required option --{flag}")))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))
}

fn load_camera(path: &Option<PathBuf>) -> Result<CameraParams> {
    match path {
        Some(p) => Ok(CameraParams::load(p)?),
        None => Ok(CameraParams::synthetic_default()),
    }
}

fn adjustment(ctx: &Context, a: &AlphaArgs) -> Adjustment {
    let c = &ctx.config;
    if let Some(alpha) = a.alpha {
        return Adjustment::shared(alpha);
    }
    if let (Some(v), Some(o)) = (a.alpha_visible, a.alpha_occluded) {
        return Adjustment {
            visible: v,
            occluded: o,
        };
    }
    if let Some(alpha) = c.alpha {
        return Adjustment::shared(alpha);
    }
    Adjustment {
        visible: c.alpha_visible.unwrap_or(0.0),
        occluded: c.alpha_occluded.unwrap_or(0.0),
    }
}

fn check_adjustment(adj: &Adjustment) -> Result<()> {
    fisheye_distance::adjust::check_alpha(adj.visible)?;
    fisheye_distance::adjust::check_alpha(adj.occluded)?;
    Ok(())
}

fn geometry_estimator(ctx: &Context, camera: &Option<PathBuf>, height: f64) -> Result<Estimator> {
    let camera = CameraParams::load(required(camera, &ctx.config.camera, "camera")?)?;
    fisheye_distance::camera::height_to_pz(&camera, height)?;
    Ok(Estimator::Geometry {
        camera,
        assumed_height: height,
    })
}

fn mlp_estimator(ctx: &Context, model: &Option<PathBuf>) -> Result<Estimator> {
    Ok(Estimator::Mlp(MlpModel::load(required(
        model,
        &ctx.config.model,
        "model",
    )?)?))
}

fn single_estimator(ctx: &Context, a: &EstimatorArgs) -> Result<Estimator> {
    let height = a.height.or(ctx.config.height).unwrap_or(DEFAULT_HEIGHT_IN);
    match (a.geometry, a.mlp) {
        (true, false) => geometry_estimator(ctx, &a.camera, height),
        (false, true) => mlp_estimator(ctx, &a.model),
        _ => Err(CliError::usage("choose exactly one of --geometry or --mlp")),
    }
}

fn method_label(est: &Estimator) -> String {
    match est {
        Estimator::Geometry { assumed_height, .. } => {
            format!("geometry H/2={:.2}", assumed_height / 2.0)
        }
        Estimator::Mlp(_) => "mlp".into(),
    }
}

fn load_eval_dataset(
    ctx: &Context,
    detections: &Option<PathBuf>,
    gt: &Option<PathBuf>,
    image_side: Option<f64>,
) -> Result<Dataset> {
    Ok(load_dataset(
        required(detections, &ctx.config.detections, "detections")?,
        required(gt, &ctx.config.gt, "gt")?,
        ctx.image_side(image_side),
    )?)
}

pub fn calibrate(ctx: &Context, a: &CalibrateArgs) -> Result<()> {
    let data = load_correspondences(required(
        &a.correspondences,
        &ctx.config.correspondences,
        "correspondences",
    )?)?;
    let mut initial = load_camera(&a.initial.clone().or_else(|| ctx.config.camera.clone()))?;
    if let Some(b) = a.mount_height {
        initial.mount_height = b;
        initial.validate()?;
    }
    let opts = FitOptions {
        max_iterations: a.max_iter,
        ..FitOptions::default()
    };
    let fit = fit_params(&data, &initial, &opts)?;
    let out = ctx.output(&a.output, "camera.json");
    fit.params.save(&out)?;
    let p = &fit.params;
    println!(
        "fitted {} correspondences in {} iterations: xi={:.6} fx={:.3} fy={:.3} cx={:.3} cy={:.3}, RMSE {:.4} px",
        data.len(),
        fit.report.iterations,
        p.xi,
        p.fx,
        p.fy,
        p.cx,
        p.cy,
        fit.report.rmse_px
    );
    println!("wrote {}", out.display());
    ctx.write_json(&json!({
        "camera": fit.params,
        "report": fit.report,
        "correspondences": data.len(),
    }))
}

pub fn synth(ctx: &Context, a: &SynthArgs) -> Result<()> {
    let camera = load_camera(&a.camera.clone().or_else(|| ctx.config.camera.clone()))?;
    let quantize = a.quantize || ctx.config.quantize.unwrap_or(false);
    if a.grid {
        let base = ctx.config.grid_spec.unwrap_or_default();
        let spec = GridSpec {
            spacing: a.spacing.unwrap_or(base.spacing),
            rows: a.rows.unwrap_or(base.rows),
            cols: a.cols.unwrap_or(base.cols),
            plane_height: a.plane_height.unwrap_or(base.plane_height),
            origin: base.origin,
        };
        let budget = a.pairs.or(ctx.config.pairs).unwrap_or(DEFAULT_GRID_PAIRS);
        let pairs = generate_grid(&spec, &camera, budget, ctx.seed, quantize)?;
        let out = ctx.output(&a.output, "grid.csv");
        if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
            ensure_dir(dir)?;
        }
        save_grid_pairs(&out, &pairs)?;
        println!(
            "wrote {} pairs from a {}x{} grid ({} in spacing, {} in above the floor) to {}",
            pairs.len(),
            spec.rows,
            spec.cols,
            spec.spacing,
            spec.plane_height,
            out.display()
        );
        return ctx.write_json(&json!({
            "kind": "grid",
            "seed": ctx.seed,
            "spec": spec,
            "pairs": pairs.len(),
            "output": out,
        }));
    }

    let (det, gt, kind) = if let Some(kind) = a.collection {
        let (name, spec) = match kind {
            CollectionKind::Fixed => ("fixed", CollectionSpec::FIXED_HEIGHT),
            CollectionKind::Varying => ("varying", CollectionSpec::VARYING_HEIGHT),
        };
        let (det, gt) = generate_collection(name, &spec, ctx.seed, &camera)?;
        (det, gt, name)
    } else {
        let base = ctx.config.crowd.unwrap_or_default();
        let spec = CrowdSpec {
            people: a.people.unwrap_or(base.people),
            height_min: a.height_min.unwrap_or(base.height_min),
            height_max: a.height_max.unwrap_or(base.height_max),
            occluded_probability: a.occluded_probability.unwrap_or(base.occluded_probability),
            occlusion_fraction: a.occlusion.unwrap_or(base.occlusion_fraction),
            min_separation: base.min_separation,
        };
        let people = random_crowd(&spec, ctx.seed)?;
        let opts = SceneOptions {
            quantize,
            ..SceneOptions::default()
        };
        let scene = generate_scene(format!("scene{}", ctx.seed), &people, &camera, &opts)?;
        (scene.detections(), scene.ground_truth(), "scene")
    };
    ensure_dir(&ctx.out_dir)?;
    let det_path = ctx.out_dir.join("detections.jsonl");
    let gt_path = ctx.out_dir.join("gt.csv");
    let cam_path = ctx.out_dir.join("camera.json");
    save_detections(&det_path, &det)?;
    save_ground_truth(&gt_path, &gt)?;
    camera.save(&cam_path)?;
    let stats = dataset_stats(&gt);
    println!(
        "wrote {} detections and {} pairs ({} V-V, {} V-O, {} O-O) to {}",
        det.detections.len(),
        gt.pairs.len(),
        stats.vv,
        stats.vo,
        stats.oo,
        ctx.out_dir.display()
    );
    ctx.write_json(&json!({
        "kind": kind,
        "seed": ctx.seed,
        "detections": det_path,
        "gt": gt_path,
        "camera": cam_path,
        "stats": stats,
    }))
}

pub fn train_model(ctx: &Context, a: &TrainArgs) -> Result<()> {
    let pairs = load_grid_pairs(required(&a.grid, &ctx.config.grid, "grid")?)?;
    let mut cfg: TrainConfig = ctx.config.train.clone().unwrap_or_default();
    cfg.seed = ctx.seed;
    if let Some(v) = a.max_epochs {
        cfg.max_epochs = v;
    }
    if let Some(v) = a.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.patience {
        cfg.patience = v;
    }
    if let Some(v) = &a.layers {
        cfg.layer_sizes = v.clone();
    }
    let scaling = FeatureScaling::for_image(ctx.image_side(a.image_side));
    let samples = grid_training_samples(&pairs, &scaling.origin);
    let outcome = train(&samples, scaling, &cfg)?;
    let out = ctx.output(&a.output, "model.json");
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    outcome.model.save(&out)?;
    let best = outcome.best();
    println!(
        "trained on {} pairs for {} epochs; best epoch {} (validation RMSE {:.3} in)",
        samples.len(),
        outcome.history.len() - 1,
        outcome.best_epoch,
        best.validation_mse.sqrt()
    );
    println!("wrote {}", out.display());
    ctx.write_json(&json!({
        "samples": samples.len(),
        "config": cfg,
        "best_epoch": outcome.best_epoch,
        "history": outcome.history,
        "model": out,
    }))
}

#[derive(Serialize)]
struct EstimateRow {
    id_a: String,
    id_b: String,
    distance_in: f64,
}

pub fn estimate(ctx: &Context, a: &EstimateArgs) -> Result<()> {
    let estimator = single_estimator(ctx, &a.estimator)?;
    let adj = adjustment(ctx, &a.alpha);
    check_adjustment(&adj)?;
    let det = load_detections(
        required(&a.detections, &ctx.config.detections, "detections")?,
        ctx.image_side(a.image_side),
    )?;
    let ids = det.ids();
    let center = det.image_center();
    let centers = det
        .detections
        .iter()
        .map(|d| adjust(&d.bbox, adj.for_box(&d.bbox), &center))
        .collect::<std::result::Result<Vec<PixelPoint>, _>>()?;
    let pairs = det.image_pairs();
    let distances: Vec<f64> = match &estimator {
        Estimator::Geometry {
            camera,
            assumed_height,
        } => {
            let world = centers
                .iter()
                .map(|c| LocalizedPerson::new(*c, *assumed_height).world_point(camera))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            pairs
                .iter()
                .map(|&(i, j)| world[i].distance(&world[j]))
                .collect()
        }
        Estimator::Mlp(model) => {
            let features: Vec<_> = pairs
                .iter()
                .map(|&(i, j)| extract_feature(&centers[i], &centers[j], &model.scaling.origin))
                .collect();
            model.predict_batch(&features)
        }
    };
    let rows: Vec<EstimateRow> = pairs
        .iter()
        .zip(&distances)
        .map(|(&(i, j), &d)| EstimateRow {
            id_a: ids[i].clone(),
            id_b: ids[j].clone(),
            distance_in: d,
        })
        .collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r).map_err(CliError::data)?;
    }
    let text = String::from_utf8(w.into_inner().map_err(CliError::data)?).expect("csv is utf-8");
    match &a.output {
        Some(path) => {
            write_file(path, &text)?;
            println!("wrote {} distances to {}", rows.len(), path.display());
        }
        None => {
            std::io::stdout()
                .write_all(text.as_bytes())
                .map_err(CliError::data)?;
        }
    }
    ctx.write_json(&json!({
        "method": estimator.name(),
        "adjustment": adj,
        "estimates": rows,
    }))
}

#[derive(Serialize)]
struct MethodReport {
    method: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    assumed_height_in: Option<f64>,
    report: EvalReport,
}

fn fmt_mae(m: Option<f64>) -> String {
    m.map_or("-".into(), |v| format!("{v:.2}"))
}

fn render_tables(rows: &[MethodReport], threshold: f64) -> String {
    let width = rows
        .iter()
        .map(|r| r.method.len())
        .max()
        .unwrap_or(0)
        .max(12);
    let mut s = format!(
        "{:<width$} {:>8} {:>8} {:>8} {:>8}\n",
        "MAE (in)", "V-V", "V-O", "O-O", "All"
    );
    for r in rows {
        let e = &r.report;
        s += &format!(
            "{:<width$} {:>8} {:>8} {:>8} {:>8}\n",
            r.method,
            fmt_mae(e.vv.mae_in),
            fmt_mae(e.vo.mae_in),
            fmt_mae(e.oo.mae_in),
            fmt_mae(e.all.mae_in)
        );
    }
    if let Some(r) = rows.first() {
        let e = &r.report;
        s += &format!(
            "{:<width$} {:>8} {:>8} {:>8} {:>8}\n",
            "pairs", e.vv.n, e.vo.n, e.oo.n, e.all.n
        );
    }
    s += &format!(
        "\n{:<width$} {:>8} {:>8} {:>5} {:>5} {:>5} {:>5}\n",
        format!("< {threshold} in"),
        "CCR (%)",
        "F1 (%)",
        "TP",
        "TN",
        "FP",
        "FN"
    );
    for r in rows {
        let v = &r.report.violations;
        let c = &v.confusion;
        s += &format!(
            "{:<width$} {:>8.2} {:>8} {:>5} {:>5} {:>5} {:>5}\n",
            r.method,
            v.ccr,
            if v.degenerate_f1 {
                format!("{:.2}*", v.f1)
            } else {
                format!("{:.2}", v.f1)
            },
            c.tp,
            c.tn,
            c.fp,
            c.fn_
        );
    }
    if rows.iter().any(|r| r.report.violations.degenerate_f1) {
        s += "* no positives in ground truth or estimates; F1 reported as 100\n";
    }
    s
}

pub fn evaluate(ctx: &Context, a: &EvaluateArgs) -> Result<()> {
    if !a.geometry && !a.mlp {
        return Err(CliError::usage(
            "choose at least one of --geometry or --mlp",
        ));
    }
    let adj = adjustment(ctx, &a.alpha);
    check_adjustment(&adj)?;
    let threshold = a
        .threshold
        .or(ctx.config.threshold)
        .unwrap_or(VIOLATION_THRESHOLD_IN);
    let mut estimators = Vec::new();
    if a.geometry {
        let heights = if a.height.is_empty() {
            vec![ctx.config.height.unwrap_or(DEFAULT_HEIGHT_IN)]
        } else {
            a.height.clone()
        };
        for h in heights {
            estimators.push(geometry_estimator(ctx, &a.camera, h)?);
        }
    }
    if a.mlp {
        estimators.push(mlp_estimator(ctx, &a.model)?);
    }
    let data = load_eval_dataset(ctx, &a.detections, &a.gt, a.image_side)?;
    let rows = estimators
        .iter()
        .map(|est| {
            Ok(MethodReport {
                method: method_label(est),
                assumed_height_in: match est {
                    Estimator::Geometry { assumed_height, .. } => Some(*assumed_height),
                    Estimator::Mlp(_) => None,
                },
                report: evaluate_pipeline(est, &adj, &data, threshold)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if adj != Adjustment::NONE {
        println!("alpha: visible {} / occluded {}", adj.visible, adj.occluded);
    }
    print!("{}", render_tables(&rows, threshold));
    ctx.write_json(&json!({
        "threshold_in": threshold,
        "adjustment": adj,
        "methods": rows,
    }))
}

pub fn sweep(ctx: &Context, a: &SweepArgs) -> Result<()> {
    if a.step.is_nan() || a.step <= 0.0 {
        return Err(CliError::usage("--step must be positive"));
    }
    let estimator = single_estimator(ctx, &a.estimator)?;
    let data = load_eval_dataset(ctx, &a.detections, &a.gt, a.image_side)?;
    let rows = sweep_alpha(&estimator, &data, &alpha_grid(a.step))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r).map_err(CliError::data)?;
    }
    let text = String::from_utf8(w.into_inner().map_err(CliError::data)?).expect("csv is utf-8");
    match &a.output {
        Some(path) => {
            write_file(path, &text)?;
            println!("wrote {} rows to {}", rows.len(), path.display());
        }
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(CliError::data)?,
    }
    let best: Vec<_> = ["V-V", "V-O", "O-O", "All"]
        .iter()
        .filter_map(|c| fisheye_distance::pipeline::best_alpha(&rows, c))
        .collect();
    ctx.write_json(&json!({
        "method": estimator.name(),
        "rows": rows,
        "best": best,
    }))
}

fn render_stats(s: &DatasetStats) -> String {
    let range = |v: Option<f64>| v.map_or("-".into(), |d| format!("{d:.2}"));
    format!(
        "{:<20} {:>6} {:>6} {:>6} {:>6}\n{:<20} {:>6} {:>6} {:>6} {:>6}\n\n\
         {:<20} {:>6} {:>8} {:>7}\n{:<20} {:>6} {:>8} {:>7}\n\n\
         distinct distances {}\nmin distance {} in\nmax distance {} in\n",
        "pairs",
        "V-V",
        "V-O",
        "O-O",
        "All",
        "",
        s.vv,
        s.vo,
        s.oo,
        s.all,
        "distance",
        "<6 ft",
        "6-12 ft",
        ">12 ft",
        "",
        s.buckets[0],
        s.buckets[1],
        s.buckets[2],
        s.distinct_distances,
        range(s.min_distance_in),
        range(s.max_distance_in),
    )
}

pub fn stats(ctx: &Context, a: &StatsArgs) -> Result<()> {
    let gt = load_ground_truth(required(&a.gt, &ctx.config.gt, "gt")?)?;
    if let Some(det) = a
        .detections
        .clone()
        .or_else(|| ctx.config.detections.clone())
    {
        resolve(&load_detections(det, ctx.image_side(None))?, &gt)?;
    }
    let s = dataset_stats(&gt);
    print!("{}", render_stats(&s));
    ctx.write_json(&s)
}
