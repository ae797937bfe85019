use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_abstain"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn schema() -> jsonschema::Validator {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/report-schema-1.0.json");
    let schema: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::validator_for(&schema).unwrap()
}

fn report(args: &[&str]) -> Value {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let errors: Vec<String> = schema().iter_errors(&v).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{args:?}: {errors:?}");
    v
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn mcnemar_first_published_row() {
    let v = report(&["mcnemar", "--n11", "788", "--n10", "35", "--n01", "8", "--n00", "12"]);
    assert!((f(&v["chi2"]) - 16.331).abs() < 1e-3);
    assert!((f(&v["p"]) / 5.32e-5 - 1.0).abs() < 0.02);
    assert!((f(&v["delta"]) - 0.0320).abs() < 1e-4);
    assert!((f(&v["ci"][0]) - 0.0169).abs() < 2e-4 && (f(&v["ci"][1]) - 0.0471).abs() < 2e-4);
    assert_eq!(v["schema_version"], "1.0");
}

#[test]
fn mcnemar_records_printed_discrepancy() {
    let v = report(&["mcnemar", "--n11", "778", "--n10", "18", "--n01", "44", "--n00", "3"]);
    assert!((f(&v["chi2"]) - 10.488).abs() < 1e-3);
    assert_eq!(f(&v["printed"]["chi2"]), 10.512);
    assert!(f(&v["printed"]["chi2_difference"]) < 0.0);
}

#[test]
fn p_value_formatting_is_scientific() {
    let out = run(&["mcnemar", "--n11", "788", "--n10", "35", "--n01", "8", "--n00", "12"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("\"p\": 5.32e-5"), "{text}");
    assert!(text.contains("\"chi2\": 16.331395"), "{text}");
}

#[test]
fn output_is_byte_identical_and_out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let values = write(dir.path(), "v.csv", "value\n1\n2\n3\n4\n5\n6\n7\n8\n");
    let a = run(&["bootstrap", "--values", s(&values), "--resamples", "500"]);
    let b = run(&["bootstrap", "--values", s(&values), "--resamples", "500"]);
    assert_eq!(a.stdout, b.stdout);
    let out = dir.path().join("r.json");
    let c = run(&["bootstrap", "--values", s(&values), "--resamples", "500", "--out", s(&out)]);
    assert!(c.status.success() && c.stdout.is_empty());
    assert_eq!(fs::read(&out).unwrap(), a.stdout);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let empty = write(dir.path(), "empty.csv", "");
    let out = run(&["score", "--method", "energy", "--logits", s(&empty)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty input"));

    let bad = write(dir.path(), "bad.csv", "id,split,label,logit_0,logit_1\nc,test,9,0,0\n");
    assert_eq!(run(&["score", "--logits", s(&bad)]).status.code(), Some(2));

    let ok = write(dir.path(), "ok.csv", "id,split,label,logit_0,logit_1\na,test,1,0,1\n");
    assert_eq!(run(&["score", "--logits", s(&ok), "--temperature", "0"]).status.code(), Some(3));
    assert_eq!(run(&["score", "--method", "odin", "--logits", s(&ok)]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["mcnemar", "--n11", "x"]).status.code(), Some(1));

    let help = run(&["sweep", "--help"]);
    assert_eq!(help.status.code(), Some(0));
    let text = String::from_utf8(help.stdout).unwrap();
    assert!(text.contains("--taus") && text.contains("scores CSV"));
}

const LOGITS: &str = "\
id,split,label,logit_0,logit_1,logit_2,logit_3
a,test,0,4,0,0,0
b,test,1,0,3,0,0
c,test,2,0,0,5,0
d,test,3,0,0,0,2
e,test,3,2.5,0,0,2
f,ood,,0.2,0.1,0,0.3
g,ood,,1,1,1,0.9
";

#[test]
fn score_then_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let logits = write(dir.path(), "l.csv", LOGITS);
    let scores = dir.path().join("s.csv");
    let out = run(&["score", "--logits", s(&logits), "--format", "csv", "--out", s(&scores)]);
    assert!(out.status.success());
    let table = fs::read_to_string(&scores).unwrap();
    assert!(table.starts_with("id,split,label,score\n"));

    let v = report(&["sweep", "--scores", s(&scores)]);
    let points = v["points"].as_array().unwrap();
    assert_eq!(points.len(), 9);
    for p in points {
        assert_eq!(f(&p["coverage"]) + f(&p["rejection"]), 1.0);
        assert_eq!(p["reference"].as_bool().unwrap(), f(&p["tau"]) == 0.5);
    }

    let v = report(&["ood-eval", "--scores", s(&scores)]);
    assert_eq!(v["n_id"], 5);
    assert_eq!(f(&v["auroc"]), 1.0);
    let w = report(&["ood-eval", "--logits", s(&logits)]);
    assert_eq!(v["auroc"], w["auroc"]);

    let e = report(&["score", "--method", "energy", "--logits", s(&logits)]);
    let rec = &e["records"][0];
    assert!((f(&rec["score"]) + f(&rec["energy"])).abs() < 1e-6);
}

#[test]
fn classification_report() {
    let dir = tempfile::tempdir().unwrap();
    let logits = write(dir.path(), "l.csv", LOGITS);
    let v = report(&["cls-eval", "--logits", s(&logits), "--tau", "0.6"]);
    assert_eq!(v["count"], 5);
    assert_eq!(f(&v["metrics"]["accuracy"]), 0.8);
    assert_eq!(v["confusion"]["counts"][3][0], 1);
    assert!(f(&v["abstention"]["coverage"]) < 1.0);

    let preds = write(dir.path(), "p.csv", "id,label,prediction\na,0,0\nb,1,1\nc,1,0\n");
    let v = report(&["cls-eval", "--predictions", s(&preds), "--class-names", "x,y"]);
    assert_eq!(v["classes"][1], "y");
}

#[test]
fn mcnemar_from_prediction_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.csv", "id,label,prediction\n1,0,0\n2,1,1\n3,1,1\n4,0,1\n");
    let b = write(dir.path(), "b.csv", "id,label,prediction\n4,0,0\n3,1,0\n2,1,1\n1,0,0\n");
    let v = report(&["mcnemar", "--a", s(&a), "--b", s(&b)]);
    assert_eq!((v["n11"].as_u64(), v["n10"].as_u64(), v["n01"].as_u64(), v["n00"].as_u64()), (Some(2), Some(1), Some(1), Some(0)));
}

fn pgm(w: usize, h: usize, on: impl Fn(usize, usize) -> bool) -> Vec<u8> {
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    for y in 0..h {
        for x in 0..w {
            out.push(if on(x, y) { 255 } else { 0 });
        }
    }
    out
}

fn ppm(w: usize, h: usize, px: impl Fn(usize, usize) -> [u8; 3]) -> Vec<u8> {
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    for y in 0..h {
        for x in 0..w {
            out.extend(px(x, y));
        }
    }
    out
}

#[test]
fn segmentation_report() {
    let dir = tempfile::tempdir().unwrap();
    let (pred, gt) = (dir.path().join("pred"), dir.path().join("gt"));
    fs::create_dir_all(&pred).unwrap();
    fs::create_dir_all(&gt).unwrap();
    for (i, name) in ["a.pgm", "b.pgm", "c.pgm"].iter().enumerate() {
        fs::write(gt.join(name), pgm(8, 8, |x, _| x < 4)).unwrap();
        fs::write(pred.join(name), pgm(8, 8, |x, _| x < 4 + i)).unwrap();
    }
    let classes = write(dir.path(), "c.csv", "name,class\na.pgm,fresh\nb.pgm,fresh\nc.pgm,spoiled\n");
    let v = report(&["seg-eval", "--pred", s(&pred), "--gt", s(&gt), "--classes", s(&classes), "--resamples", "300"]);
    assert_eq!(f(&v["images"][0]["iou"]), 1.0);
    assert!((f(&v["images"][1]["iou"]) - 0.8).abs() < 1e-9);
    assert!(v["per_class"]["spoiled"]["iou"]["mean"].is_number());
}

#[test]
fn dedup_removes_injected_copies() {
    let dir = tempfile::tempdir().unwrap();
    let base = |k: usize| move |x: usize, y: usize| [((x * (k + 3) + y * 7) % 256) as u8, ((x * y + k * 40) % 256) as u8, ((y * 11 + k * 90) % 256) as u8];
    for k in 0..4 {
        fs::write(dir.path().join(format!("img{k}.ppm")), ppm(32, 32, base(k))).unwrap();
    }
    fs::write(dir.path().join("img0_copy.ppm"), ppm(32, 32, base(0))).unwrap();
    fs::write(dir.path().join("img2_copy.ppm"), ppm(32, 32, base(2))).unwrap();
    let keep = dir.path().join("keep.txt");
    let v = report(&["dedup", "--in", s(dir.path()), "--keep-list", s(&keep), "--max-dist", "0"]);
    assert_eq!(v["removed"], 2);
    assert_eq!(fs::read_to_string(keep).unwrap().lines().count(), 4);
}

#[test]
fn split_and_folds() {
    let v = report(&["split", "--counts", "940,1155,1661,1700"]);
    let per = v["per_class"].as_array().unwrap();
    for (row, n) in per.iter().zip([940, 1155, 1661, 1700]) {
        assert_eq!(row["total"], n);
    }
    assert_eq!(v["totals"].as_array().unwrap().iter().map(|t| t.as_u64().unwrap()).sum::<u64>(), 5456);

    let dir = tempfile::tempdir().unwrap();
    let text: String = std::iter::once("id,label\n".to_string())
        .chain((0..60).map(|i| format!("s{i},{}\n", ["fresh", "spoiled", "other"][i % 3])))
        .collect();
    let labels = write(dir.path(), "labels.csv", &text);
    let v = report(&["folds", "--labels", s(&labels)]);
    assert_eq!(v["leakage_audit_passed"], true);
    assert_eq!(v["outer"].as_array().unwrap().len(), 5);
    let v = report(&["split", "--labels", s(&labels), "--ratios", "0.5,0.25,0.25"]);
    assert_eq!(v["assignments"].as_array().unwrap().len(), 60);
    assert_eq!(run(&["split", "--counts", "5,5", "--ratios", "0.5,0.5"]).status.code(), Some(1));
}

#[test]
fn nested_cv_model_feeds_odin() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("id,split,label,x_0,x_1\n");
    let mut k = 0u64;
    let mut jitter = || {
        k = k.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (k >> 40) as f64 / (1u64 << 24) as f64 - 0.5
    };
    for i in 0..90 {
        let c = i % 3;
        let centre = [[3.0, 0.0], [0.0, 3.0], [-3.0, -3.0]][c];
        let split = if i < 72 { "train" } else { "val" };
        text += &format!("s{i},{split},{c},{},{}\n", centre[0] + jitter(), centre[1] + jitter());
    }
    for i in 0..12 {
        text += &format!("o{i},ood,,{},{}\n", jitter() * 0.5, jitter() * 0.5);
    }
    let features = write(dir.path(), "f.csv", &text);
    let model = dir.path().join("model.json");
    let v = report(&[
        "nested-cv", "--features", s(&features), "--outer", "3", "--inner", "2", "--epochs", "8", "--save-model", s(&model),
    ]);
    assert_eq!(v["leakage_audit_passed"], true);
    assert!(f(&v["mean_accuracy"]) > 0.9);
    let odin = report(&["score", "--method", "odin", "--model", s(&model), "--features", s(&features)]);
    assert!(odin["odin_tuning"]["rows"].as_u64().unwrap() > 0);
    let fixed = report(&[
        "score", "--method", "odin", "--model", s(&model), "--features", s(&features), "--temperature", "1", "--epsilon", "0",
    ]);
    assert_eq!(fixed["count"], 102);
}

#[test]
fn pseudomask_directory() {
    let dir = tempfile::tempdir().unwrap();
    let (input, out) = (dir.path().join("in"), dir.path().join("out"));
    fs::create_dir_all(&input).unwrap();
    let ellipse = |x: usize, y: usize| {
        let (dx, dy) = ((x as f64 - 24.0) / 14.0, (y as f64 - 16.0) / 9.0);
        dx * dx + dy * dy <= 1.0
    };
    fs::write(input.join("meat.ppm"), ppm(48, 32, |x, y| if ellipse(x, y) { [190, 40, 50] } else { [30, 80, 200] })).unwrap();
    fs::write(input.join("flat.ppm"), ppm(16, 16, |_, _| [100, 100, 100])).unwrap();
    let v = report(&["pseudomask", "--in", s(&input), "--out", s(&out), "--apply"]);
    assert_eq!(v["degenerate_count"], 1);
    assert!(out.join("meat.pgm").exists() && out.join("meat.masked.ppm").exists() && out.join("report.json").exists());
    let mask = fs::read(out.join("meat.pgm")).unwrap();
    let on = mask.iter().rev().take(48 * 32).filter(|&&b| b == 255).count();
    let truth = (0..32).flat_map(|y| (0..48).map(move |x| (x, y))).filter(|&(x, y)| ellipse(x, y)).count();
    assert!((on as f64 / truth as f64 - 1.0).abs() < 0.1, "{on} vs {truth}");
    assert_eq!(run(&["pseudomask", "--in", s(&input)]).status.code(), Some(1));
}

#[test]
fn demo_report_validates() {
    let v = report(&["demo", "--seed", "42"]);
    assert!(f(&v["test_accuracy"]) >= 0.95);
    for m in v["ood"].as_array().unwrap() {
        assert!(f(&m["metrics"]["auroc"]) >= 0.90);
    }
}
