use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use visdet_core::barrier_distance::ImagePatch;
use visdet_core::pipeline_io::{parse_label_maps, write_ppm};

fn visdet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_visdet"))
        .args(args)
        .output()
        .expect("spawn visdet")
}

fn ok(args: &[&str]) -> Output {
    let out = visdet(args);
    assert!(
        out.status.success(),
        "visdet {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Textured image with a few flat bright blocks standing in for objects.
fn scene(width: usize, height: usize, salt: usize, blocks: &[[usize; 4]]) -> ImagePatch {
    let mut img = ImagePatch::filled(width, height, [0, 0, 0]).unwrap();
    for y in 0..height {
        for x in 0..width {
            let v = ((x * 7 + y * 13 + salt * 31) % 41) as u8 + 20;
            img.set(x, y, [v, v / 2 + 10, 90 - v / 3]);
        }
    }
    for (i, &[x0, y0, x1, y1]) in blocks.iter().enumerate() {
        for y in y0..y1 {
            for x in x0..x1 {
                img.set(x, y, [200 - 20 * i as u8, 180, 40 + 30 * i as u8]);
            }
        }
    }
    img
}

struct Dataset {
    _dir: tempfile::TempDir,
    root: PathBuf,
    images: PathBuf,
    manifest: PathBuf,
}

fn dataset() -> Dataset {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let images = root.join("images");
    std::fs::create_dir_all(&images).unwrap();
    let fixtures: [(u64, usize, usize, Vec<[usize; 4]>); 3] = [
        (3, 96, 80, vec![[10, 12, 50, 60], [40, 30, 90, 70]]),
        (1, 80, 64, vec![[5, 5, 35, 40]]),
        (2, 128, 96, vec![[20, 10, 110, 90], [60, 40, 100, 60], [0, 70, 30, 96]]),
    ];
    let mut imgs = Vec::new();
    let mut anns = Vec::new();
    let mut next_ann = 10;
    for (id, w, h, blocks) in &fixtures {
        let name = format!("img{id}.ppm");
        write_ppm(&images.join(&name), &scene(*w, *h, *id as usize, blocks)).unwrap();
        imgs.push(format!(r#"{{"id":{id},"file_name":"{name}","width":{w},"height":{h}}}"#));
        for (j, b) in blocks.iter().enumerate() {
            let (bw, bh) = (b[2] - b[0], b[3] - b[1]);
            anns.push(format!(
                r#"{{"id":{next_ann},"image_id":{id},"category_id":{},"bbox":[{},{},{bw},{bh}]}}"#,
                1 + j % 2,
                b[0],
                b[1]
            ));
            next_ann += 1;
        }
    }
    let manifest = root.join("annotations.json");
    std::fs::write(
        &manifest,
        format!(
            r#"{{"images":[{}],"annotations":[{}],"categories":[{{"id":1,"name":"box"}},{{"id":2,"name":"can"}}]}}"#,
            imgs.join(","),
            anns.join(",")
        ),
    )
    .unwrap();
    Dataset { _dir: dir, root, images, manifest }
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn assign_is_deterministic_across_runs_and_threads() {
    let d = dataset();
    let outs: Vec<Vec<u8>> = [("a", "1"), ("b", "1"), ("c", "8")]
        .iter()
        .map(|(name, threads)| {
            let out = d.root.join(format!("{name}.json"));
            ok(&[
                "--threads", threads, "assign", "--images", s(&d.images), "--annotations",
                s(&d.manifest), "--out", s(&out), "--rng-seed", "0",
            ]);
            std::fs::read(out).unwrap()
        })
        .collect();
    assert_eq!(outs[0], outs[1]);
    assert_eq!(outs[0], outs[2]);

    let text = String::from_utf8(outs[0].clone()).unwrap();
    let maps = parse_label_maps(&text, "labels").unwrap();
    assert_eq!(maps.iter().map(|m| m.image_id).collect::<Vec<_>>(), vec![1, 2, 3]);
    for m in &maps {
        for (id, total) in m.multiplicities() {
            assert_eq!(total, 10, "image {} instance {id}", m.image_id);
        }
    }

    let other = d.root.join("seed7.json");
    ok(&[
        "assign", "--images", s(&d.images), "--annotations", s(&d.manifest), "--out", s(&other),
        "--rng-seed", "7",
    ]);
    assert_ne!(std::fs::read(other).unwrap(), outs[0]);
}

#[test]
fn visibility_writes_one_map_per_annotation() {
    let d = dataset();
    let a = d.root.join("vis1");
    let b = d.root.join("vis8");
    let args = |out: &Path, threads: &'static str| {
        ok(&[
            "--threads", threads, "visibility", "--images", s(&d.images), "--annotations",
            s(&d.manifest), "--out", s(out),
        ]);
    };
    args(&a, "1");
    args(&b, "8");
    let fa = read_dir_sorted(&a);
    assert_eq!(fa, read_dir_sorted(&b));
    let names: Vec<&str> = fa.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["1_12.pgm", "2_13.pgm", "2_14.pgm", "2_15.pgm", "3_10.pgm", "3_11.pgm"]);
    assert!(fa[0].1.starts_with(b"P5\n# scale=64\n30 35\n65535\n"));
}

#[test]
fn no_subcommand_mutates_inputs() {
    let d = dataset();
    let before = std::fs::read(&d.manifest).unwrap();
    let images_before = read_dir_sorted(&d.images);
    ok(&[
        "assign", "--images", s(&d.images), "--annotations", s(&d.manifest), "--out",
        s(&d.root.join("l.json")),
    ]);
    ok(&[
        "visibility", "--images", s(&d.images), "--annotations", s(&d.manifest), "--out",
        s(&d.root.join("v")),
    ]);
    assert_eq!(std::fs::read(&d.manifest).unwrap(), before);
    assert_eq!(read_dir_sorted(&d.images), images_before);
}

const PREDICTIONS: &str = r#"[
  {"image_id": 2, "category_id": 1, "bbox": [0, 0, 10, 10], "cls_score": 0.9, "confidence": 0.8},
  {"image_id": 2, "category_id": 1, "bbox": [1, 0, 10, 10], "cls_score": 0.7, "confidence": 0.4},
  {"image_id": 1, "category_id": 1, "bbox": [5, 5, 10, 10], "cls_score": 0.6, "confidence": 0.9},
  {"image_id": 1, "category_id": 2, "bbox": [5, 5, 10, 10], "cls_score": 0.01, "confidence": 0.9},
  {"image_id": 1, "category_id": 1, "bbox": [40, 40, 8, 8], "cls_score": 0.3, "confidence": 0.5}
]"#;

#[test]
fn fuse_groups_by_image_and_is_thread_independent() {
    let dir = tempfile::tempdir().unwrap();
    let preds = dir.path().join("p.json");
    std::fs::write(&preds, PREDICTIONS).unwrap();
    let run = |threads: &str, name: &str| {
        let out = dir.path().join(name);
        ok(&["--threads", threads, "fuse", "--predictions", s(&preds), "--out", s(&out)]);
        std::fs::read_to_string(out).unwrap()
    };
    let one = run("1", "a.json");
    assert_eq!(one, run("8", "b.json"));
    let v: serde_json::Value = serde_json::from_str(&one).unwrap();
    let recs = v.as_array().unwrap();
    assert_eq!(recs.len(), 3);
    let ids: Vec<u64> = recs.iter().map(|r| r["image_id"].as_u64().unwrap()).collect();
    assert_eq!(ids, [1, 1, 2]);
    assert_eq!(recs[2]["cluster_size"], 2);
    assert!(recs[0].get("confidence").is_none());
    assert!(one.contains("\"cls_score\":0.734847"), "{one}");
}

#[test]
fn fuse_on_empty_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let preds = dir.path().join("p.json");
    let out = dir.path().join("d.json");
    std::fs::write(&preds, "[]").unwrap();
    ok(&["fuse", "--predictions", s(&preds), "--out", s(&out)]);
    assert_eq!(std::fs::read_to_string(out).unwrap(), "[]\n");
}

fn eval_fixture(dir: &Path) -> (PathBuf, PathBuf) {
    let manifest = dir.join("gt.json");
    std::fs::write(
        &manifest,
        r#"{"images":[{"id":1,"file_name":"x.ppm","width":100,"height":100}],
            "annotations":[{"id":1,"image_id":1,"category_id":1,"bbox":[0,0,10,10]}],
            "categories":[{"id":1,"name":"obj"}]}"#,
    )
    .unwrap();
    let dets = dir.join("dets.json");
    std::fs::write(
        &dets,
        r#"[{"image_id":1,"category_id":1,"bbox":[0,0,10,6],"cls_score":0.9,"cluster_size":1}]"#,
    )
    .unwrap();
    (manifest, dets)
}

#[test]
fn eval_on_iou_point_six_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, dets) = eval_fixture(dir.path());
    let a = ok(&["eval", "--detections", s(&dets), "--annotations", s(&manifest)]);
    let b = ok(&[
        "--threads", "8", "eval", "--detections", s(&dets), "--annotations", s(&manifest),
        "--iou-thrs", "0.50:0.95:0.05",
    ]);
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert!(text.starts_with(r#"{"ap":0.300000,"ap50":1.000000,"ap75":0.000000,"#), "{text}");
}

#[test]
fn eval_rejects_unknown_image() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, dets) = eval_fixture(dir.path());
    std::fs::write(&dets, r#"[{"image_id":5,"category_id":1,"bbox":[0,0,1,1],"score":0.5}]"#).unwrap();
    let out = visdet(&["eval", "--detections", s(&dets), "--annotations", s(&manifest)]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("detections[0]") && err.contains("image_id 5"), "{err}");
}

#[test]
fn mbd_oracle_exact_values_and_guard() {
    let dir = tempfile::tempdir().unwrap();
    let small = dir.path().join("strip.ppm");
    let mut strip = ImagePatch::filled(3, 3, [0, 0, 0]).unwrap();
    strip.set(1, 1, [1, 1, 1]);
    write_ppm(&small, &strip).unwrap();
    let out = dir.path().join("o.pgm");
    ok(&["mbd-oracle", "--image", s(&small), "--seed-step", "1", "--out", s(&out)]);
    let bytes = std::fs::read(&out).unwrap();
    let header = b"P5\n# scale=64\n3 3\n65535\n";
    assert!(bytes.starts_with(header));
    let samples: Vec<u16> = bytes[header.len()..]
        .chunks(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    assert_eq!(samples, [0, 0, 0, 0, 64, 0, 0, 0, 0]);

    let big = dir.path().join("big.ppm");
    write_ppm(&big, &ImagePatch::filled(40, 40, [3, 3, 3]).unwrap()).unwrap();
    let res = visdet(&["mbd-oracle", "--image", s(&big), "--out", s(&dir.path().join("b.pgm"))]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("too large"));
}

#[test]
fn manifest_errors_are_reported() {
    let d = dataset();
    let text = std::fs::read_to_string(&d.manifest).unwrap().replace(r#""image_id":1,"#, r#""image_id":99,"#);
    std::fs::write(&d.manifest, text).unwrap();
    let out = visdet(&[
        "assign", "--images", s(&d.images), "--annotations", s(&d.manifest), "--out",
        s(&d.root.join("l.json")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("annotations[2]") && err.contains("image_id 99"), "{err}");
}

#[test]
fn wrong_image_size_is_reported() {
    let d = dataset();
    write_ppm(&d.images.join("img1.ppm"), &ImagePatch::filled(40, 32, [1, 1, 1]).unwrap()).unwrap();
    let out = visdet(&[
        "visibility", "--images", s(&d.images), "--annotations", s(&d.manifest), "--out",
        s(&d.root.join("v")),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("manifest says (80, 64)"));
}
