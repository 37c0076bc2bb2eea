use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use adablur_core::io::{write_instance_set, write_label_map, Image, MetricReport};
use adablur_core::metrics::{Instance, InstanceSet, LabelMap, Mask};

fn adablur(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adablur")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const TINY: [&str; 10] = ["--size", "16", "--train-count", "48", "--test-count", "24", "--epochs", "1", "--widths", "4,4"];

#[test]
fn alias_demo_prints_shifted_outputs() {
    let o = adablur(&["alias-demo"]);
    assert_eq!(code(&o), 0);
    let s = stdout(&o);
    assert!(s.contains("001100110011 -> 010101"));
    assert!(s.contains("011001100110 -> 111111"));
    let none = s.lines().find(|l| l.starts_with("none")).unwrap();
    assert_eq!(none.split_whitespace().nth(3), Some("3"));
    for kind in ["gaussian", "box", "image", "spatial", "grouped"] {
        let row = s.lines().find(|l| l.starts_with(kind)).unwrap();
        let d: usize = row.split_whitespace().nth(3).unwrap().parse().unwrap();
        assert!(d < 3, "{row}");
    }
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        vec!["alias-demo", "--nope"],
        vec!["frobnicate"],
        vec!["blur"],
        vec!["blur", "--demo", "--blur", "median"],
        vec!["alias-demo", "--k", "4"],
        vec!["consistency", "--task", "video", "--pairs", "x"],
        vec!["--threads", "0", "alias-demo"],
    ] {
        let o = adablur(&args);
        assert_eq!(code(&o), 2, "{args:?}");
        assert!(String::from_utf8_lossy(&o.stderr).contains("error"), "{args:?}");
    }
    assert_eq!(code(&adablur(&["--help"])), 0);
}

#[test]
fn runtime_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = adablur(&["blur", "--input", p(&dir.path().join("missing.pgm")), "--out", p(dir.path())]);
    assert_eq!(code(&o), 1);
    fs::write(dir.path().join("bad.pgm"), b"P9 nonsense").unwrap();
    let o = adablur(&["blur", "--input", p(&dir.path().join("bad.pgm")), "--blur", "box"]);
    assert_eq!(code(&o), 1);
    let o = adablur(&["eval", "--model", p(&dir.path().join("nomodel"))]);
    assert_eq!(code(&o), 1);
}

#[test]
fn identity_blur_keeps_file_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("in.pgm");
    let original = b"P2\n# hand made\n4 2\n9\n0 1 2 3\n4 5 6 9\n";
    fs::write(&src, original).unwrap();
    let dst = dir.path().join("out.pgm");
    let o = adablur(&["blur", "--input", p(&src), "--blur", "none", "--stride", "1", "--output", p(&dst)]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read(&dst).unwrap(), original);
}

#[test]
fn blur_downsamples_gray_and_color() {
    let dir = tempfile::tempdir().unwrap();
    let gray = Image::new(10, 6, 1, 255, (0..60).map(|i| (i * 4) as u16).collect(), true).unwrap();
    gray.write(dir.path().join("g.pgm")).unwrap();
    let color = Image::new(8, 8, 3, 255, (0..192).map(|i| (i % 256) as u16).collect(), false).unwrap();
    color.write(dir.path().join("c.ppm")).unwrap();
    let out = dir.path().join("o.pgm");
    let o = adablur(&["blur", "--input", p(&dir.path().join("g.pgm")), "--blur", "gaussian", "--output", p(&out)]);
    assert_eq!(code(&o), 0);
    let y = Image::read(&out).unwrap();
    assert_eq!((y.width, y.height, y.channels, y.binary), (5, 3, 1, true));
    // constant image passes any unit-sum blur unchanged
    let flat = Image::new(6, 6, 3, 255, vec![77; 108], true).unwrap();
    flat.write(dir.path().join("f.ppm")).unwrap();
    let out = dir.path().join("f_out.ppm");
    let o = adablur(&["blur", "--input", p(&dir.path().join("f.ppm")), "--blur", "grouped", "--groups", "3", "--output", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let y = Image::read(&out).unwrap();
    assert_eq!((y.width, y.height, y.channels), (3, 3, 3));
    assert!(y.samples.iter().all(|&v| v == 77));
    let o = adablur(&["blur", "--input", p(&dir.path().join("c.ppm")), "--blur", "grouped", "--groups", "2"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn blur_demo_keeps_edges_sharper_than_gaussian() {
    let dir = tempfile::tempdir().unwrap();
    let o = adablur(&["blur", "--demo", "--out", p(dir.path())]);
    assert_eq!(code(&o), 0);
    let s = stdout(&o);
    let row = |name: &str| -> (f64, f64) {
        let l = s.lines().find(|l| l.starts_with(name)).unwrap();
        let v: Vec<f64> = l.split_whitespace().skip(1).map(|x| x.parse().unwrap()).collect();
        (v[0], v[1])
    };
    let (none_noise, _) = row("b_none");
    let (gauss_noise, gauss_edge) = row("c_gaussian");
    let (adapt_noise, adapt_edge) = row("d_adaptive");
    assert!(gauss_noise < none_noise && adapt_noise < none_noise);
    assert!(adapt_edge > gauss_edge);
    for f in ["a_input.pgm", "b_none.pgm", "c_gaussian.pgm", "d_adaptive.pgm", "d_sigma.pgm"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    assert_eq!(Image::read(dir.path().join("b_none.pgm")).unwrap().width, 32);
}

fn report_value(path: &Path, metric: &str) -> f64 {
    MetricReport::read(path).unwrap().get(metric).unwrap().value
}

#[test]
fn classification_consistency_from_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let list = dir.path().join("pairs.txt");
    fs::write(&list, "# a b\n1 1\n2 2\n3 0\n4 4\n").unwrap();
    let o = adablur(&["consistency", "--task", "cls", "--pairs", p(&list), "--out", p(dir.path())]);
    assert_eq!(code(&o), 0);
    assert_eq!(report_value(&dir.path().join("report.txt"), "classification_consistency"), 0.75);
    fs::write(&list, "1 2 3\n").unwrap();
    assert_eq!(code(&adablur(&["consistency", "--task", "cls", "--pairs", p(&list), "--out", p(dir.path())])), 1);
}

#[test]
fn segmentation_consistency_from_label_maps() {
    let dir = tempfile::tempdir().unwrap();
    // source labels depend on absolute position; crops at (0,0) and (2,3)
    let truth = |y: usize, x: usize| ((y / 3 + x / 2) % 4) as u32;
    let a = LabelMap::from_fn(8, 8, |i, j| truth(i, j));
    let b = LabelMap::from_fn(8, 8, |i, j| truth(i + 2, j + 3));
    write_label_map(dir.path().join("a.pgm"), &a).unwrap();
    write_label_map(dir.path().join("b.pgm"), &b).unwrap();
    let bad = LabelMap::from_fn(8, 8, |i, j| if i < 3 { 99 } else { truth(i + 2, j + 3) });
    write_label_map(dir.path().join("bad.pgm"), &bad).unwrap();
    let list = dir.path().join("pairs.txt");
    fs::write(&list, "img0 a.pgm 0 0 b.pgm 2 3\n").unwrap();
    let o = adablur(&["consistency", "--task", "semseg", "--pairs", p(&list), "--out", p(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(report_value(&dir.path().join("report.txt"), "massc"), 1.0);
    // overlap is 6x5 in b's frame at (0,0); rows 0..3 of it disagree: 15 of 30
    fs::write(&list, "img0 a.pgm 0 0 bad.pgm 2 3\n").unwrap();
    adablur(&["consistency", "--task", "semseg", "--pairs", p(&list), "--out", p(dir.path())]);
    assert_eq!(report_value(&dir.path().join("report.txt"), "massc"), 0.5);
}

fn rect_mask(h: usize, w: usize, y0: usize, x0: usize, y1: usize, x1: usize) -> Mask {
    Mask::from_fn(h, w, |i, j| i >= y0 && i < y1 && j >= x0 && j < x1)
}

#[test]
fn instance_consistency_from_mask_sets() {
    let dir = tempfile::tempdir().unwrap();
    let inst = |m: Mask, c: f64| Instance {
        mask: m,
        class_id: 1,
        confidence: c,
    };
    let b = InstanceSet::new(10, 10, vec![inst(rect_mask(10, 10, 0, 0, 4, 4), 0.9), inst(rect_mask(10, 10, 5, 5, 10, 10), 0.8)]).unwrap();
    // first matches exactly; second overlaps with IoU 20/25 = 0.8
    let c = InstanceSet::new(10, 10, vec![inst(rect_mask(10, 10, 0, 0, 4, 4), 0.9), inst(rect_mask(10, 10, 6, 5, 10, 10), 0.7)]).unwrap();
    write_instance_set(dir.path().join("b"), &b).unwrap();
    write_instance_set(dir.path().join("c"), &c).unwrap();
    let list = dir.path().join("pairs.txt");
    fs::write(&list, "b 0 0 c 0 0\nb 0 0 b 0 0\n").unwrap();
    let o = adablur(&["consistency", "--task", "instseg", "--pairs", p(&list), "--out", p(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    // (0.5 + 1.0) / 2
    assert_eq!(report_value(&dir.path().join("report.txt"), "maisc"), 0.75);
    adablur(&["consistency", "--task", "instseg", "--pairs", p(&list), "--iou-threshold", "0.75", "--out", p(dir.path())]);
    assert_eq!(report_value(&dir.path().join("report.txt"), "maisc"), 1.0);
}

#[test]
fn train_eval_analyze_round_trip_and_seed_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str, threads: &str| {
        let out = dir.path().join(name);
        let mut args = vec!["train", "--blur", "grouped", "--groups", "2", "--seed", seed, "--threads", threads, "--out", p(&out)];
        args.extend(TINY);
        let o = adablur(&args);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let a = run("a", "3", "1");
    let b = run("b", "3", "2");
    assert_eq!(fs::read(a.join("report.txt")).unwrap(), fs::read(b.join("report.txt")).unwrap());
    assert_eq!(fs::read(a.join("train.tsv")).unwrap(), fs::read(b.join("train.tsv")).unwrap());
    let c = run("c", "4", "1");
    assert_ne!(fs::read(a.join("train.tsv")).unwrap(), fs::read(c.join("train.tsv")).unwrap());

    let model = a.join("model");
    let ev = dir.path().join("eval");
    let o = adablur(&["eval", "--model", p(&model), "--seed", "3", "--out", p(&ev)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let acc = |d: &Path| report_value(&d.join("report.txt"), "accuracy");
    assert_eq!(acc(&ev), acc(&a));

    let an = dir.path().join("an");
    let o = adablur(&["analyze", "--model", p(&model), "--layer", "1", "--samples", "2", "--out", p(&an)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(an.join("variance_n1_g1.pgm").exists());
    let m = report_value(&an.join("report.txt"), "mean_variance");
    assert!((0.0..=8.0 / 81.0).contains(&m));
    let sim = fs::read_to_string(an.join("similarity_layer1.tsv")).unwrap();
    assert_eq!(sim.lines().count(), 2);
    assert_eq!(code(&adablur(&["analyze", "--model", p(&model), "--layer", "2"])), 2);
}

#[test]
fn ablate_and_sweep_write_run_directories() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("abl");
    let mut args = vec!["ablate", "--providers", "none,box", "--out", p(&out)];
    args.extend(TINY);
    let o = adablur(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("box/report.txt").exists());
    assert_eq!(fs::read_to_string(out.join("ablation.tsv")).unwrap().lines().count(), 3);

    let sw = dir.path().join("sw");
    let mut args = vec!["sweep", "--groups", "1,4", "--out", p(&sw)];
    args.extend(TINY);
    assert_eq!(code(&adablur(&args)), 0);
    assert_eq!(fs::read_to_string(sw.join("sweep.tsv")).unwrap().lines().count(), 3);

    let sem = dir.path().join("sem");
    let o = adablur(&["ablate", "--task-kind", "semseg", "--providers", "none,gaussian", "--out", p(&sem)]);
    assert_eq!(code(&o), 0);
    let v = report_value(&sem.join("gaussian/report.txt"), "massc");
    assert!(v > 0.5 && v <= 1.0);
}
