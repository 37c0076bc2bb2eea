use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::CommandFactory;

use adablur_core::adaptive::{apply_grouped_adaptive, DEFAULT_SIGMA};
use adablur_core::analysis::{filter_variance, group_similarity, max_filter_variance, variance_by_gradient};
use adablur_core::io::{read_instance_set, read_label_map, Checkpoint, Image, KvConfig, MetricRecord, MetricReport};
use adablur_core::metrics::{classification_consistency, maisc, massc, LabelMap, MaiscConfig, MetricValue, Rect};
use adablur_core::ops::strided_subsample;
use adablur_core::tensor::reflect_index;
use adablur_core::{BlurKind, BlurProvider, PredictorConfig, PredictorParams, Tensor32};
use adablur_experiments::ablation::{init_model, probe_class, shift1_metric, summary_tsv, sweep_tsv};
use adablur_experiments::alias::{alias_demo, demo_providers, maxpool_bits, SIGNALS};
use adablur_experiments::segment::{segmentation_accuracy, segmentation_consistency, SegmentationTask};
use adablur_experiments::train::{evaluate, EvalResult};
use adablur_experiments::{
    run_ablation, run_group_sweep, train, AblationSpec, Classifier, ProviderSpec, Split, SyntheticTask,
};

use crate::noise_field::NoiseAware;
use crate::{AblateTask, BlurArgs, Cli, Command, ConsistencyArgs, MetricTask, ModelArgs, TaskArgs};

/// Demo image: impulse noise over a flat background with clean, sharp-edged
/// foreground shapes.
pub const DEMO_IMAGE: &[u8] = include_bytes!("../assets/impulse_edges.pgm");

/// Prints clap-style usage text and exits with status 2.
pub fn usage_error(msg: impl std::fmt::Display) -> ! {
    Cli::command().error(ErrorKind::InvalidValue, msg).exit()
}

fn parse_or_usage<V: std::str::FromStr>(what: &str, s: &str) -> V
where
    V::Err: std::fmt::Display,
{
    s.parse().unwrap_or_else(|e| usage_error(format!("invalid {what} {s:?}: {e}")))
}

fn parse_list_or_usage<V: std::str::FromStr>(what: &str, s: &str) -> Vec<V>
where
    V::Err: std::fmt::Display,
{
    s.split(',').map(str::trim).filter(|p| !p.is_empty()).map(|p| parse_or_usage(what, p)).collect()
}

pub fn run(cli: Cli) -> Result<()> {
    let out = |name: &str| cli.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(name));
    let seed = cli.seed;
    match cli.command {
        Command::AliasDemo { k } => cmd_alias_demo(k),
        Command::Blur(args) => cmd_blur(&args, &out("blur")),
        Command::Train { model, task } => cmd_train(&model, &task, seed, &out("train")),
        Command::Eval { model, task } => cmd_eval(&model, &task, seed, &out("eval")),
        Command::Ablate {
            providers,
            task_kind,
            task,
        } => cmd_ablate(providers.as_deref(), task_kind, &task, seed, &out("ablate")),
        Command::Sweep { groups, task } => cmd_sweep(groups.as_deref(), &task, seed, &out("sweep")),
        Command::Analyze {
            model,
            layer,
            samples,
            groups,
            task,
        } => cmd_analyze(&model, layer, samples, groups, &task, seed, &out("analyze")),
        Command::Consistency(args) => cmd_consistency(&args, seed.unwrap_or(0), &out("consistency")),
    }
}

fn cmd_alias_demo(k: usize) -> Result<()> {
    if k == 0 || k % 2 == 0 {
        usage_error(format!("--k must be odd, got {k}"));
    }
    for s in SIGNALS {
        println!("maxpool(k=2, s=2) {s} -> {}", maxpool_bits(s)?);
    }
    println!();
    println!("{:<10} {:<12} {:<12} {:>12} {:>8}", "provider", SIGNALS[0], SIGNALS[1], "disagreement", "gap");
    for r in alias_demo(&demo_providers(k)?)? {
        println!("{:<10} {:<12} {:<12} {:>12} {:>8.3}", r.provider, r.bits[0], r.bits[1], r.disagreement, r.gap);
    }
    Ok(())
}

// ---- blur ----

fn blur_kind(s: &str) -> BlurKind {
    parse_or_usage("blur kind", s)
}

fn apply_blur(img: &Image, x: &Tensor32, args: &BlurArgs, kind: BlurKind, k: usize) -> Result<Tensor32> {
    let sigma = args.sigma.unwrap_or(DEFAULT_SIGMA);
    let blurred = match kind {
        BlurKind::None => x.clone(),
        BlurKind::Gaussian { .. } => BlurProvider::gaussian(k, sigma)?.blur(x)?,
        BlurKind::Box => BlurProvider::boxed(k)?.blur(x)?,
        adaptive => {
            let groups = if adaptive == BlurKind::SpatialChannelAdaptive { args.groups } else { 1 };
            match &args.predictor {
                Some(dir) => {
                    let ck = Checkpoint::<f32>::load(dir).with_context(|| format!("loading predictor {}", dir.display()))?;
                    let p = ck.predictor("", PredictorConfig::new(img.channels, k, groups)?)?;
                    BlurProvider::adaptive(adaptive, p)?.blur(x)?
                }
                None => {
                    let field = NoiseAware::new(k, args.sigma.unwrap_or(1.5)).field(x, adaptive, groups, img.maxval as f64)?;
                    apply_grouped_adaptive(x, &field)?
                }
            }
        }
    };
    if args.stride > 1 {
        Ok(strided_subsample(&blurred, args.stride)?)
    } else {
        Ok(blurred)
    }
}

fn cmd_blur(args: &BlurArgs, out: &Path) -> Result<()> {
    let kind = blur_kind(&args.blur);
    if args.stride == 0 {
        usage_error("--stride must be at least 1");
    }
    if kind != BlurKind::None && (args.k == 0 || args.k % 2 == 0) {
        usage_error(format!("--k must be odd, got {}", args.k));
    }
    if args.demo {
        return blur_demo(args, out);
    }
    let input = args.input.as_ref().expect("clap requires --input without --demo");
    let bytes = fs::read(input).with_context(|| format!("reading {}", input.display()))?;
    let img = Image::decode(&bytes).with_context(|| format!("decoding {}", input.display()))?;
    if kind == BlurKind::SpatialChannelAdaptive && (args.groups == 0 || img.channels % args.groups != 0) {
        usage_error(format!("--groups {} does not divide {} image channels", args.groups, img.channels));
    }
    let ext = if img.channels == 3 { "ppm" } else { "pgm" };
    let dest = args.output.clone().unwrap_or_else(|| out.join(format!("blurred.{ext}")));
    if let Some(dir) = dest.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    if kind == BlurKind::None && args.stride == 1 {
        // identity: keep the file exactly, comments and layout included
        fs::write(&dest, &bytes)?;
    } else {
        let y = apply_blur(&img, &img.to_tensor(), args, kind, args.k)?;
        Image::from_tensor(&y, img.maxval, img.binary)?.write(&dest)?;
    }
    println!("{} -> {}", input.display(), dest.display());
    Ok(())
}

/// Mean `|y - median3(y)|` over the image, as a fraction of `maxval`.
fn impulse_residual(y: &Tensor32, maxval: f64) -> f64 {
    let s = y.shape();
    let mut total = 0.0;
    for c in 0..s.c {
        for i in 0..s.h {
            for j in 0..s.w {
                let mut v = [0f32; 9];
                for (t, slot) in v.iter_mut().enumerate() {
                    *slot = y.at(0, c, reflect_index(i as isize + t as isize / 3 - 1, s.h), reflect_index(j as isize + t as isize % 3 - 1, s.w));
                }
                v.sort_by(f32::total_cmp);
                total += (y.at(0, c, i, j) - v[4]).abs() as f64;
            }
        }
    }
    total / (s.numel() as f64 * maxval)
}

/// Mean of the strongest 5% central-difference gradient magnitudes, as a
/// fraction of `maxval`.
fn edge_strength(y: &Tensor32, maxval: f64) -> f64 {
    let s = y.shape();
    let mut mags = Vec::with_capacity(s.numel());
    for c in 0..s.c {
        for i in 0..s.h {
            for j in 0..s.w {
                let at = |a: usize, b: usize| y.at(0, c, a, b) as f64;
                let gy = at((i + 1).min(s.h - 1), j) - at(i.saturating_sub(1), j);
                let gx = at(i, (j + 1).min(s.w - 1)) - at(i, j.saturating_sub(1));
                mags.push((gx * gx + gy * gy).sqrt() / 2.0);
            }
        }
    }
    mags.sort_by(|a, b| b.total_cmp(a));
    let top = (mags.len() / 20).max(1);
    mags[..top].iter().sum::<f64>() / (top as f64 * maxval)
}

fn blur_demo(args: &BlurArgs, out: &Path) -> Result<()> {
    let img = Image::decode(DEMO_IMAGE)?;
    let x = img.to_tensor::<f32>();
    let k = args.k.max(5);
    let sigma = args.sigma.unwrap_or(1.5);
    let demo_args = BlurArgs {
        input: None,
        output: None,
        blur: String::new(),
        k,
        groups: 1,
        stride: 2,
        sigma: Some(sigma),
        predictor: None,
        demo: true,
    };
    fs::create_dir_all(out)?;
    img.write(out.join("a_input.pgm"))?;
    let maxval = img.maxval as f64;
    println!("{:<22} {:>16} {:>14}", "output", "impulse_residual", "edge_strength");
    println!("{:<22} {:>16.4} {:>14.4}", "a_input.pgm", impulse_residual(&x, maxval), edge_strength(&x, maxval));
    for (name, kind) in [
        ("b_none.pgm", BlurKind::None),
        ("c_gaussian.pgm", BlurKind::Gaussian { sigma }),
        ("d_adaptive.pgm", BlurKind::SpatialAdaptive),
    ] {
        let y = apply_blur(&img, &x, &demo_args, kind, k)?;
        Image::from_tensor(&y, img.maxval, true)?.write(out.join(name))?;
        println!("{:<22} {:>16.4} {:>14.4}", name, impulse_residual(&y, maxval), edge_strength(&y, maxval));
    }
    let sig = NoiseAware::new(k, sigma).sigmas(&x, BlurKind::SpatialAdaptive, 1, maxval)?;
    let scaled = sig.map(|v| ((v as f64 - 0.3) / (sigma - 0.3) * 255.0) as f32);
    Image::from_tensor(&scaled, 255, true)?.write(out.join("d_sigma.pgm"))?;
    println!("wrote {}", out.display());
    Ok(())
}

// ---- task configuration ----

fn task_kv(args: &TaskArgs, seed: Option<u64>, base: Option<&Path>) -> Result<KvConfig> {
    let mut kv = match (&args.config, base) {
        (Some(p), _) => KvConfig::read(p).with_context(|| format!("reading {}", p.display()))?,
        (None, Some(b)) if b.exists() => KvConfig::read(b)?,
        _ => KvConfig::default(),
    };
    if let Some(s) = seed {
        kv.set("seed", s);
        kv.set("task_seed", s);
    }
    let mut set = |key: &str, v: Option<String>| {
        if let Some(v) = v {
            kv.set(key, v);
        }
    };
    set("size", args.size.map(|v| v.to_string()));
    set("train_count", args.train_count.map(|v| v.to_string()));
    set("test_count", args.test_count.map(|v| v.to_string()));
    set("vocabulary", args.vocabulary.clone());
    set("epochs", args.epochs.map(|v| v.to_string()));
    set("batch_size", args.batch_size.map(|v| v.to_string()));
    set("lr", args.lr.map(|v| v.to_string()));
    set("widths", args.widths.clone());
    set("k", args.k.map(|v| v.to_string()));
    set("pair_count", args.pairs.map(|v| v.to_string()));
    if args.freeze_predictor {
        kv.set("freeze_predictor", true);
    }
    Ok(kv)
}

fn configs(args: &TaskArgs, seed: Option<u64>, base: Option<&Path>) -> (SyntheticTask, AblationSpec) {
    let kv = task_kv(args, seed, base).unwrap_or_else(|e| usage_error(format!("{e:#}")));
    let task = SyntheticTask::from_kv(&kv).unwrap_or_else(|e| usage_error(e));
    let spec = AblationSpec::from_kv(&kv).unwrap_or_else(|e| usage_error(e));
    (task, spec)
}

fn eval_report(ev: &EvalResult, task: &SyntheticTask, seed: u64) -> MetricReport {
    let mut r = MetricReport::default();
    r.push(MetricRecord::scalar("accuracy", ev.accuracy, seed));
    r.push(MetricRecord::new("consistency", ev.consistency, seed));
    if let (Some(v), Some(name)) = (ev.unit_shift_consistency, shift1_metric(task)) {
        r.push(MetricRecord::new(name, v, seed));
    }
    r
}

fn cmd_train(model: &ModelArgs, targs: &TaskArgs, seed: Option<u64>, out: &Path) -> Result<()> {
    let (task, spec) = configs(targs, seed, None);
    let blur = blur_kind(&model.blur);
    let provider = if blur == BlurKind::SpatialChannelAdaptive {
        ProviderSpec::grouped(model.groups)
    } else {
        ProviderSpec::new(blur)
    };
    let cfg = spec.model_config(provider, task.classes());
    if let Err(e) = cfg.validate() {
        usage_error(e);
    }
    let mut net = init_model(cfg, spec.seed)?;
    let data = task.dataset(Split::Train)?;
    let outcome = train(&mut net, &data, &spec.train, spec.seed)?;
    fs::create_dir_all(out)?;
    let mut log = String::from("epoch\tlr\tloss\n");
    for e in &outcome.epochs {
        log.push_str(&format!("{}\t{}\t{}\n", e.epoch, e.lr, e.loss));
        println!("epoch {:>3}  lr {:.5}  loss {:.5}", e.epoch, e.lr, e.loss);
    }
    fs::write(out.join("train.tsv"), log)?;
    fs::write(out.join("task.cfg"), task.to_kv().to_text())?;
    fs::write(out.join("train.cfg"), spec.to_kv().to_text())?;
    if let Some(at) = outcome.diverged_at {
        bail!("training diverged (non-finite loss) in epoch {at}");
    }
    net.save(out.join("model"))?;
    let test = task.dataset(Split::Test)?;
    let ev = evaluate(&net, &task, &test, spec.pair_count, spec.seed, probe_class(&task))?;
    let mut report = eval_report(&ev, &task, spec.seed);
    if let Some(l) = outcome.final_loss() {
        report.push(MetricRecord::scalar("final_loss", l, spec.seed));
    }
    report.write(out.join("report.txt"))?;
    print!("{}", report_lines(&report));
    Ok(())
}

fn report_lines(r: &MetricReport) -> String {
    r.to_text().split(adablur_core::io::REPORT_SEPARATOR).next().unwrap_or("").to_string()
}

fn load_model(dir: &Path) -> Result<Classifier<f32>> {
    Classifier::load(dir).with_context(|| format!("loading model {}", dir.display()))
}

/// `task.cfg` next to a model directory written by `train`.
fn sibling_task_cfg(model: &Path) -> Option<PathBuf> {
    model.parent().map(|p| p.join("task.cfg"))
}

fn cmd_eval(model_dir: &Path, targs: &TaskArgs, seed: Option<u64>, out: &Path) -> Result<()> {
    let net = load_model(model_dir)?;
    let (task, spec) = configs(targs, seed, sibling_task_cfg(model_dir).as_deref());
    if task.classes() != net.cfg.classes {
        bail!("model predicts {} classes but the task has {}", net.cfg.classes, task.classes());
    }
    let test = task.dataset(Split::Test)?;
    let ev = evaluate(&net, &task, &test, spec.pair_count, spec.seed, probe_class(&task))?;
    let report = eval_report(&ev, &task, spec.seed);
    fs::create_dir_all(out)?;
    report.write(out.join("report.txt"))?;
    print!("{}", report_lines(&report));
    Ok(())
}

fn cmd_ablate(providers: Option<&str>, kind: AblateTask, targs: &TaskArgs, seed: Option<u64>, out: &Path) -> Result<()> {
    let (task, mut spec) = configs(targs, seed, None);
    if let Some(p) = providers {
        spec.providers = parse_list_or_usage("provider", p);
    }
    if let Err(e) = spec.validate() {
        usage_error(e);
    }
    match kind {
        AblateTask::Cls => {
            let results = run_ablation(&task, &spec, Some(out))?;
            print!("{}", summary_tsv(&task, &results));
        }
        AblateTask::Semseg => {
            let seg = SegmentationTask {
                seed: spec.seed,
                ..Default::default()
            };
            fs::create_dir_all(out)?;
            let mut table = String::from("provider\tmassc\tpixel_accuracy\n");
            for p in &spec.providers {
                let provider = fixed_or_untrained(p, spec.k)?;
                let v = segmentation_consistency(&seg, &provider)?;
                let acc = segmentation_accuracy(&seg, &provider)?;
                let mut r = MetricReport::default();
                r.push(MetricRecord::new("massc", v, spec.seed));
                r.push(MetricRecord::scalar("pixel_accuracy", acc, spec.seed));
                let sub = out.join(p.label());
                fs::create_dir_all(&sub)?;
                r.write(sub.join("report.txt"))?;
                table.push_str(&format!("{}\t{}\t{}\n", p.label(), v.value, acc));
            }
            fs::write(out.join("semseg.tsv"), &table)?;
            print!("{table}");
        }
    }
    Ok(())
}

/// Single-channel provider for the training-free segmentation task;
/// adaptive kinds use untrained (zero) predictors.
fn fixed_or_untrained(p: &ProviderSpec, k: usize) -> Result<BlurProvider<f32>> {
    Ok(match p.blur {
        BlurKind::None => BlurProvider::none(),
        BlurKind::Gaussian { sigma } => BlurProvider::gaussian(k, sigma)?,
        BlurKind::Box => BlurProvider::boxed(k)?,
        kind => BlurProvider::adaptive(kind, PredictorParams::zeros(PredictorConfig::new(1, k, 1)?)?)?,
    })
}

fn cmd_sweep(groups: Option<&str>, targs: &TaskArgs, seed: Option<u64>, out: &Path) -> Result<()> {
    let (task, mut spec) = configs(targs, seed, None);
    if let Some(g) = groups {
        spec.groups = parse_list_or_usage("group count", g);
    }
    for &g in &spec.groups {
        if g == 0 || spec.widths.iter().any(|w| w % g != 0) {
            usage_error(format!("group count {g} does not divide widths {:?}", spec.widths));
        }
    }
    let points = run_group_sweep(&task, &spec, Some(out))?;
    print!("{}", sweep_tsv(&points));
    Ok(())
}

fn cmd_analyze(
    model_dir: &Path,
    layer: usize,
    samples: usize,
    groups: Option<usize>,
    targs: &TaskArgs,
    seed: Option<u64>,
    out: &Path,
) -> Result<()> {
    let net = load_model(model_dir)?;
    if layer >= net.stages.len() {
        usage_error(format!("--layer {layer} out of range; the model has {} stages", net.stages.len()));
    }
    if samples == 0 {
        usage_error("--samples must be at least 1");
    }
    let (task, spec) = configs(targs, seed, sibling_task_cfg(model_dir).as_deref());
    let test = task.dataset(Split::Test)?;
    let idx: Vec<usize> = (0..samples.min(test.len())).collect();
    let x = test.images.select_batch(&idx)?;
    let feats = net.blur_inputs(&x)?.swap_remove(layer);
    let stage = &net.stages[layer];
    fs::create_dir_all(out)?;
    let mut report = MetricReport::default();
    let s = spec.seed;
    match stage.blur.field(&feats)? {
        Some(field) => {
            let vm = filter_variance(&field);
            for n in 0..vm.n {
                for g in 0..vm.groups {
                    let img = Image::gray(vm.w, vm.h, 255, vm.to_gray(n, g).into_iter().map(u16::from).collect())?;
                    img.write(out.join(format!("variance_n{n}_g{g}.pgm")))?;
                }
            }
            let split = variance_by_gradient(&feats, &vm)?;
            report.push(MetricRecord::scalar("mean_variance", vm.mean(), s));
            report.push(MetricRecord::scalar("max_variance_bound", max_filter_variance(vm.k), s));
            report.push(MetricRecord::scalar("high_gradient_mean_variance", split.high_gradient_mean_variance, s));
            report.push(MetricRecord::scalar("low_gradient_mean_variance", split.low_gradient_mean_variance, s));
        }
        None => println!("stage {layer} has no blur; skipping variance maps"),
    }
    let g = groups.unwrap_or_else(|| stage.blur.groups());
    let sim = group_similarity(&feats, g).unwrap_or_else(|e| usage_error(e));
    let mut tsv = String::new();
    for a in 0..g {
        let row: Vec<String> = (0..g).map(|b| sim.get(a, b).to_string()).collect();
        tsv.push_str(&row.join("\t"));
        tsv.push('\n');
    }
    fs::write(out.join(format!("similarity_layer{layer}.tsv")), tsv)?;
    report.push(MetricRecord::scalar("group_contrast", sim.contrast(), s));
    report.write(out.join("report.txt"))?;
    print!("{}", report_lines(&report));
    Ok(())
}

// ---- consistency from prediction dumps ----

fn pair_lines(path: &Path) -> Result<Vec<(usize, Vec<String>)>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").split_whitespace().map(String::from).collect::<Vec<_>>()))
        .filter(|(_, f)| !f.is_empty())
        .collect())
}

fn field<V: std::str::FromStr>(path: &Path, line: usize, v: &str) -> Result<V> {
    v.parse().map_err(|_| anyhow::anyhow!("{}:{line}: cannot parse {v:?}", path.display()))
}

/// Overlap of two crops with origins `oa`, `ob` and extents `ea`, `eb`, in
/// each crop's local frame.
fn overlap(oa: (usize, usize), ea: (usize, usize), ob: (usize, usize), eb: (usize, usize)) -> Option<(Rect, Rect)> {
    let a = Rect::new(oa.0, oa.1, ea.0, ea.1);
    let b = Rect::new(ob.0, ob.1, eb.0, eb.1);
    let o = a.intersect(&b);
    (!o.is_empty()).then(|| (o.relative_to(&a), o.relative_to(&b)))
}

fn cmd_consistency(args: &ConsistencyArgs, seed: u64, out: &Path) -> Result<()> {
    let base = args.pairs.parent().unwrap_or(Path::new("."));
    let lines = pair_lines(&args.pairs)?;
    let expect = |n: usize, l: &(usize, Vec<String>)| -> Result<()> {
        if l.1.len() != n {
            bail!("{}:{}: expected {n} fields, got {}", args.pairs.display(), l.0, l.1.len());
        }
        Ok(())
    };
    let p = &args.pairs;
    let (name, value): (&str, MetricValue) = match args.task {
        MetricTask::Cls => {
            let mut pairs = Vec::new();
            for l in &lines {
                expect(2, l)?;
                pairs.push((field::<usize>(p, l.0, &l.1[0])?, field::<usize>(p, l.0, &l.1[1])?));
            }
            ("classification_consistency", classification_consistency(&pairs)?)
        }
        MetricTask::Semseg => {
            let mut images: Vec<(String, Vec<(LabelMap, LabelMap)>)> = Vec::new();
            for l in &lines {
                expect(7, l)?;
                let f = &l.1;
                let a = read_label_map(base.join(&f[1]))?;
                let b = read_label_map(base.join(&f[4]))?;
                let oa = (field(p, l.0, &f[2])?, field(p, l.0, &f[3])?);
                let ob = (field(p, l.0, &f[5])?, field(p, l.0, &f[6])?);
                let slot = match images.iter().position(|(id, _)| *id == f[0]) {
                    Some(i) => i,
                    None => {
                        images.push((f[0].clone(), Vec::new()));
                        images.len() - 1
                    }
                };
                if let Some((ra, rb)) = overlap(oa, (a.height(), a.width()), ob, (b.height(), b.width())) {
                    images[slot].1.push((a.crop(ra)?, b.crop(rb)?));
                }
            }
            ("massc", massc(&images.into_iter().map(|(_, v)| v).collect::<Vec<_>>())?)
        }
        MetricTask::Instseg => {
            let mut pairs = Vec::new();
            let mut no_overlap = 0;
            for l in &lines {
                expect(6, l)?;
                let f = &l.1;
                let a = read_instance_set(base.join(&f[0]))?;
                let b = read_instance_set(base.join(&f[3]))?;
                let oa = (field(p, l.0, &f[1])?, field(p, l.0, &f[2])?);
                let ob = (field(p, l.0, &f[4])?, field(p, l.0, &f[5])?);
                match overlap(oa, (a.height(), a.width()), ob, (b.height(), b.width())) {
                    Some((ra, rb)) => pairs.push((a.restrict(ra)?, b.restrict(rb)?)),
                    None => no_overlap += 1,
                }
            }
            let cfg = MaiscConfig {
                iou_threshold: args.iou_threshold,
                require_class_match: !args.ignore_class,
            };
            let mut v = maisc(&pairs, &cfg)?;
            v.pairs_skipped += no_overlap;
            ("maisc", v)
        }
    };
    let mut report = MetricReport::default();
    report.push(MetricRecord::new(name, value, seed));
    fs::create_dir_all(out)?;
    report.write(out.join("report.txt"))?;
    print!("{}", report_lines(&report));
    Ok(())
}
