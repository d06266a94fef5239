//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any criterion fails. Runs without the libtest harness so the lines are
//! always visible under `cargo test`.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use lesionmorph::classifier::{self, gradient_check, softmax, ClassifierModel, Optimizer, TrainConfig, BN_EPSILON};
use lesionmorph::contour::{convex_hull, polygon_area, trace_contour, trace_outline, Contour, Point};
use lesionmorph::metrics::{confuse, f1_score, report};
use lesionmorph::morphometry::{analyze, extract_features_with, ExtractOptions, FeatureVector};
use lesionmorph::rng::SeededRng;
use lesionmorph::synthkit::{oracles, render, ShapeKind, ShapeSpec};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn raw(spec: &ShapeSpec) -> FeatureVector {
    extract_features_with(&render(spec).expect("spec fits"), &ExtractOptions::raw())
}

/// 54 shapes: nine sizes/rotations of each generator kind on a 128 canvas.
fn oracle_family() -> Vec<ShapeSpec> {
    let mut out = Vec::new();
    for i in 0..9u32 {
        let t = i as f64 / 8.0;
        let rot = 7.0 + 19.0 * i as f64;
        let kinds = [
            ShapeKind::Disk { radius: 12.0 + 40.0 * t },
            ShapeKind::Ellipse { semi_major: 25.0 + 30.0 * t, semi_minor: 12.0 + 10.0 * t },
            ShapeKind::Rect { width: 30.0 + 40.0 * t, height: 15.0 + 25.0 * t },
            ShapeKind::Star { radius: 35.0 + 20.0 * t, lobes: 3 + i % 6, depth: 0.3 + 0.3 * t },
            ShapeKind::Rosette { radius: 35.0 + 20.0 * t, lobes: 3 + (i + 2) % 6, depth: 0.3 + 0.3 * t },
            ShapeKind::Plus { span: 50.0 + 40.0 * t, arm: 12.0 + 10.0 * t },
        ];
        for kind in kinds {
            out.push(ShapeSpec::new(kind, 128).rotated(rot).jittered(u64::from(i), 4.0));
        }
    }
    out
}

fn point_set(c: &Contour) -> BTreeSet<(u64, u64)> {
    c.points.iter().map(|p| (p.x.to_bits(), p.y.to_bits())).collect()
}

/// Shoelace area of an unordered convex vertex set, ordered by angle about
/// its mean.
fn angular_area(mut pts: Vec<Point>) -> f64 {
    let n = pts.len() as f64;
    let (cx, cy) = (pts.iter().map(|p| p.x).sum::<f64>() / n, pts.iter().map(|p| p.y).sum::<f64>() / n);
    pts.sort_by(|a, b| (a.y - cy).atan2(a.x - cx).total_cmp(&(b.y - cy).atan2(b.x - cx)));
    polygon_area(&Contour::new(pts))
}

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let family = oracle_family();
    let mut area_checked = 0;
    for spec in &family {
        let mask = render(spec).map_err(|e| e.to_string())?;
        let (f, _) = analyze(&mask, &ExtractOptions::raw());
        check(!f.degenerate, || format!("{spec:?} came out degenerate"))?;
        let outline = trace_outline(&mask).map_err(|e| e.to_string())?.smoothed(1);
        let pixels = oracles::pixel_area(&mask) as f64;
        if pixels >= 200.0 {
            area_checked += 1;
            let rel = (f.area - pixels).abs() / pixels;
            check(rel <= 0.05, || format!("{:?}: area {} vs {pixels} px", spec.kind, f.area))?;
        }
        // Pixel-centre and crack-midpoint boundaries have exactly
        // representable coordinates, so vertex sets must agree exactly; the
        // smoothed outline (thirds) only up to rounding, so compare areas.
        let crack = trace_outline(&mask).map_err(|e| e.to_string())?;
        for c in [&trace_contour(&mask).map_err(|e| e.to_string())?, &crack] {
            let (hull, brute) = (convex_hull(c), Contour::new(oracles::hull(&c.points)));
            check(point_set(&hull) == point_set(&brute), || {
                format!("{:?}: hull {} vs brute-force {} vertices", spec.kind, hull.len(), brute.len())
            })?;
        }
        let (fast, slow) = (polygon_area(&convex_hull(&outline)), angular_area(oracles::hull(&outline.points)));
        check((fast - slow).abs() <= 1e-9 * slow, || format!("{:?}: hull area {fast} vs brute-force {slow}", spec.kind))?;
        check(f.perimeter.to_bits() == oracles::perimeter(&outline).to_bits(), || {
            format!("{:?}: perimeter {} vs step sum {}", spec.kind, f.perimeter, oracles::perimeter(&outline))
        })?;
    }

    let disk = raw(&ShapeSpec::new(ShapeKind::Disk { radius: 50.0 }, 128));
    check((0.95..=1.01).contains(&disk.form_factor), || format!("disk form_factor {}", disk.form_factor))?;
    check((0.95..=1.05).contains(&disk.roundness), || format!("disk roundness {}", disk.roundness))?;
    check(disk.solidity >= 0.99, || format!("disk solidity {}", disk.solidity))?;
    check(disk.convexity >= 0.99, || format!("disk convexity {}", disk.convexity))?;
    check((0.97..=1.03).contains(&disk.enc), || format!("disk enc {}", disk.enc))?;
    check((0.76..=0.80).contains(&disk.extent), || format!("disk extent {}", disk.extent))?;
    check(disk.cspi == 0, || format!("disk cspi {}", disk.cspi))?;
    let square = raw(&ShapeSpec::new(ShapeKind::Rect { width: 80.0, height: 80.0 }, 128));
    check(square.extent >= 0.99, || format!("square extent {}", square.extent))?;
    check((square.form_factor - PI / 4.0).abs() <= 0.02, || format!("square form_factor {}", square.form_factor))?;

    let elapsed = started.elapsed();
    check(elapsed < Duration::from_secs(30), || format!("took {elapsed:.1?}, budget 30 s"))?;
    Ok(format!(
        "{} shapes ({} area-checked), disk ff {:.4} round {:.4} sol {:.4} conv {:.4} enc {:.4} ext {:.4}; square ext {:.4} ff {:.4}; {:.1?}",
        family.len(),
        area_checked,
        disk.form_factor,
        disk.roundness,
        disk.solidity,
        disk.convexity,
        disk.enc,
        disk.extent,
        square.extent,
        square.form_factor,
        elapsed
    ))
}

/// Analytic turning angle at a star notch: how far the boundary direction
/// swings there, sampled densely from the generator's own polygon.
fn notch_deviation(spec: &ShapeSpec) -> f64 {
    let poly = spec.boundary_polygon(64);
    let n = poly.len();
    let c = spec.center();
    let (i, _) = poly
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| (i, p.dist(c)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("polygon has points");
    let d = |a: Point, b: Point| (b.x - a.x, b.y - a.y);
    let (u, v) = (d(poly.points[(i + n - 1) % n], poly.points[i]), d(poly.points[i], poly.points[(i + 1) % n]));
    (u.0 * v.1 - u.1 * v.0).abs().atan2(u.0 * v.0 + u.1 * v.1).to_degrees()
}

fn criterion_2() -> Outcome {
    let mut cases = 0;
    for k in [3usize, 5] {
        let opts = ExtractOptions { k, ..ExtractOptions::default() };
        for n in 3..=8u32 {
            for rot in [0.0, 17.0] {
                let star = ShapeKind::Star { radius: 90.0, lobes: n, depth: 0.5 };
                let rosette = ShapeKind::Rosette { radius: 90.0, lobes: n, depth: 0.5 };
                for kind in [star, rosette] {
                    let spec = ShapeSpec::new(kind, 256).rotated(rot);
                    if matches!(kind, ShapeKind::Star { .. }) {
                        let dev = notch_deviation(&spec);
                        check(dev > 60.0, || format!("{kind:?}: notch turns only {dev:.1} degrees"))?;
                    }
                    let f = extract_features_with(&render(&spec).map_err(|e| e.to_string())?, &opts);
                    let want = 2 * spec.analytic_concave_count() as u32;
                    check(f.cspi == want, || format!("k={k} rot={rot} {kind:?}: cspi {} want {want}", f.cspi))?;
                    cases += 1;
                }
            }
        }
        for (span, arm, rot) in [(180.0, 50.0, 0.0), (200.0, 60.0, 30.0)] {
            let spec = ShapeSpec::new(ShapeKind::Plus { span, arm }, 256).rotated(rot);
            let f = extract_features_with(&render(&spec).map_err(|e| e.to_string())?, &opts);
            let want = 2 * spec.analytic_concave_count() as u32;
            check(f.cspi == want, || format!("k={k} plus {span}x{arm} rot={rot}: cspi {} want {want}", f.cspi))?;
            cases += 1;
        }
        let disk = extract_features_with(&render(&ShapeSpec::new(ShapeKind::Disk { radius: 90.0 }, 256)).unwrap(), &opts);
        check(disk.cspi == 0, || format!("k={k} circle cspi {}", disk.cspi))?;
        cases += 1;
    }
    Ok(format!("{cases} shapes: stars/rosettes n=3..8 at depth 0.5, plus, circle; k in {{3, 5}}"))
}

fn rel_change(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(1e-12)
}

fn criterion_3() -> Outcome {
    for spec in oracle_family() {
        let f = raw(&spec);
        check(f.solidity.to_bits() == f.tca_ratio.to_bits(), || format!("{:?}: solidity != tca_ratio", spec.kind))?;
    }

    let mut rng = SeededRng::new(3);
    let classes = ["normal", "benign", "malignant"];
    for _ in 0..50 {
        let n = 1 + rng.below(200) as usize;
        let actual: Vec<usize> = (0..n).map(|_| rng.below(3) as usize).collect();
        let predicted: Vec<usize> = (0..n).map(|_| rng.below(3) as usize).collect();
        let r = report(&confuse(&classes, &actual, &predicted).map_err(|e| e.to_string())?);
        for c in &r.per_class {
            check((c.recall - c.sensitivity).abs() <= 1e-12, || format!("recall {} vs sensitivity {}", c.recall, c.sensitivity))?;
        }
    }

    let rotation_kinds = [
        ShapeKind::Ellipse { semi_major: 50.0, semi_minor: 22.0 },
        ShapeKind::Rect { width: 70.0, height: 30.0 },
        ShapeKind::Star { radius: 55.0, lobes: 5, depth: 0.5 },
        ShapeKind::Rosette { radius: 55.0, lobes: 6, depth: 0.45 },
        ShapeKind::Plus { span: 90.0, arm: 24.0 },
    ];
    for kind in rotation_kinds {
        let mask = render(&ShapeSpec::new(kind, 128).rotated(11.0)).map_err(|e| e.to_string())?;
        let a = extract_features_with(&mask, &ExtractOptions::raw());
        let b = extract_features_with(&mask.rotate90(), &ExtractOptions::raw());
        for ((name, x), (_, y)) in a.dimensionless().iter().zip(b.dimensionless()) {
            match *name {
                "extent" => {}
                "aspect_ratio" => check((x * y - 1.0).abs() <= 1e-9, || format!("{kind:?}: aspect {x} vs {y}"))?,
                _ => check((x - y).abs() <= 1e-9, || format!("{kind:?}: {name} {x} vs {y} after 90 degrees"))?,
            }
        }
        check(a.cspi == b.cspi && (a.lobulation_index - b.lobulation_index).abs() <= 1e-9, || {
            format!("{kind:?}: cspi/li {}/{} vs {}/{}", a.cspi, a.lobulation_index, b.cspi, b.lobulation_index)
        })?;
    }

    // Working-resolution shapes; features below pixel scale are covered by
    // the separate sharp-star measurement reported after the check.
    let scale_kinds = [
        ShapeKind::Disk { radius: 80.0 },
        ShapeKind::Ellipse { semi_major: 95.0, semi_minor: 50.0 },
        ShapeKind::Rect { width: 140.0, height: 70.0 },
        ShapeKind::Star { radius: 95.0, lobes: 5, depth: 0.45 },
        ShapeKind::Rosette { radius: 95.0, lobes: 6, depth: 0.4 },
        ShapeKind::Plus { span: 180.0, arm: 50.0 },
    ];
    let mut worst = 0.0f64;
    for kind in scale_kinds {
        let base_spec = ShapeSpec::new(kind, 256).rotated(21.0);
        let base = raw(&base_spec);
        for s in [2.0, 3.0] {
            let big = raw(&base_spec.scaled(s));
            for ((name, x), (_, y)) in base.dimensionless().iter().zip(big.dimensionless()) {
                let r = rel_change(*x, y);
                worst = worst.max(r);
                check(r < 0.03, || format!("{kind:?} x{s}: {name} {x} -> {y}"))?;
            }
            let ra = rel_change(base.area * s * s, big.area);
            let rp = rel_change(base.perimeter * s, big.perimeter);
            check(ra <= 0.03, || format!("{kind:?} x{s}: area {} -> {}", base.area, big.area))?;
            check(rp <= 0.03, || format!("{kind:?} x{s}: perimeter {} -> {}", base.perimeter, big.perimeter))?;
        }
    }
    let sharp = ShapeSpec::new(ShapeKind::Star { radius: 95.0, lobes: 8, depth: 0.55 }, 256).rotated(21.0);
    let (a, b) = (raw(&sharp), raw(&sharp.scaled(3.0)));
    let sharp_drift = rel_change(a.form_factor, b.form_factor);
    Ok(format!(
        "solidity==tca_ratio on 54 shapes; recall==sensitivity; 90-degree rotation exact; worst x2/x3 drift {:.2}%; \
         not asserted: 8-lobe depth-0.55 star form_factor drifts {:.2}% at x3 (tips narrower than a pixel)",
        100.0 * worst,
        100.0 * sharp_drift
    ))
}

fn random_batch(rng: &mut SeededRng, rows: usize, dim: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let x = (0..rows).map(|_| (0..dim).map(|_| rng.normal() * 2.0 + 0.5).collect()).collect();
    let y = (0..rows).map(|i| (i % 3 + rng.below(2) as usize) % 3).collect();
    (x, y)
}

fn criterion_4() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..10u64 {
        let mut rng = SeededRng::new(1000 + seed);
        let model = ClassifierModel::new(17, 128, 3, seed);
        let (x, y) = random_batch(&mut rng, 12, 17);
        let err = gradient_check(&model, &x, &y).map_err(|e| e.to_string())?;
        worst = worst.max(err);
        check(err <= 1e-4, || format!("seed {seed}: gradient relative error {err:e}"))?;
    }

    let mut rng = SeededRng::new(9);
    for _ in 0..1000 {
        let scale = [1.0, 30.0, 700.0][rng.below(3) as usize];
        let logits: Vec<f64> = (0..3).map(|_| rng.normal() * scale).collect();
        let s: f64 = softmax(&logits).iter().sum();
        check((s - 1.0).abs() <= 1e-9, || format!("softmax of {logits:?} sums to {s}"))?;
    }

    // 1 input, 2 hidden, 3 outputs with hand-picked weights: w1 (2) and the
    // non-zero output weights (4) are the six free parameters.
    let mut m = ClassifierModel::new(1, 2, 3, 0);
    m.w1 = vec![2.0, -1.0];
    m.b1 = vec![0.0; 2];
    m.w2 = vec![1.0, 0.0, -1.0, 0.5, 2.0, 0.0];
    m.b2 = vec![0.0; 3];
    m.bn_running_mean = vec![1.0];
    m.bn_running_var = vec![4.0 - BN_EPSILON];
    let p = m.predict_proba(&[vec![2.0], vec![-3.0]]).map_err(|e| e.to_string())?;
    // x = 2 -> normalized 0.5 -> hidden (1, 0) -> logits (1, 0, -1)
    // x = -3 -> normalized -2 -> hidden (0, 2) -> logits (1, 4, 0)
    for (row, logits) in p.iter().zip([[1.0, 0.0, -1.0], [1.0, 4.0, 0.0]]) {
        let e: Vec<f64> = logits.iter().map(|v: &f64| v.exp()).collect();
        let total: f64 = e.iter().sum();
        for (got, want) in row.iter().zip(e.iter().map(|v| v / total)) {
            check((got - want).abs() <= 1e-12, || format!("hand forward pass: {got} vs {want}"))?;
        }
    }

    let mut rng = SeededRng::new(77);
    let (tx, ty) = random_batch(&mut rng, 90, 17);
    let (vx, vy) = random_batch(&mut rng, 30, 17);
    let cfg = TrainConfig { epochs: 4, batch_size: 16, learning_rate: 0.01, optimizer: Optimizer::Adam, seed: 5 };
    let (m1, r1) = classifier::train(&tx, &ty, &vx, &vy, &cfg).map_err(|e| e.to_string())?;
    let (m2, r2) = classifier::train(&tx, &ty, &vx, &vy, &cfg).map_err(|e| e.to_string())?;
    let bits = |m: &ClassifierModel| -> Vec<u64> {
        [&m.bn_gamma, &m.bn_beta, &m.bn_running_mean, &m.bn_running_var, &m.w1, &m.b1, &m.w2, &m.b2]
            .iter()
            .flat_map(|v| v.iter().map(|x| x.to_bits()))
            .collect()
    };
    check(bits(&m1) == bits(&m2) && r1.log_lines() == r2.log_lines(), || "seeded training differs between runs".into())?;
    Ok(format!("worst gradient error {worst:.2e} over 10 seeds; softmax sums; hand forward pass; bit-identical retrain"))
}

fn run_cli(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_lesionmorph"))
        .args(args)
        .env_remove("LESIONMORPH_DATASET")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "`lesionmorph {}` exited {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn manifest_results(path: &Path) -> Result<serde_json::Value, String> {
    let mut name = path.as_os_str().to_owned();
    name.push(".manifest.json");
    let text = std::fs::read_to_string(PathBuf::from(name)).map_err(|e| e.to_string())?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    Ok(v["results"].clone())
}

/// extract -> train -> eval on `dataset`, returning (val accuracy from
/// training, eval accuracy from the manifest).
fn pipeline(dataset: &Path, work: &Path, epochs: usize) -> Result<(f64, f64), String> {
    let p = |name: &str| work.join(name).to_string_lossy().into_owned();
    let ds = dataset.to_string_lossy();
    run_cli(&["extract", "--dataset", &ds, "--out", &p("features.csv"), "--jobs", "4"])?;
    run_cli(&[
        "train",
        "--features",
        &p("features.csv"),
        "--model",
        &p("model.json"),
        "--epochs",
        &epochs.to_string(),
        "--seed",
        "42",
    ])?;
    run_cli(&[
        "eval",
        "--model",
        &p("model.json"),
        "--features",
        &p("features.csv"),
        "--split",
        &p("model.json.split.json"),
        "--report",
        &p("report.json"),
        "--grid",
        &p("confusion.png"),
    ])?;
    let train = manifest_results(&work.join("model.json"))?;
    let eval = manifest_results(&work.join("report.json"))?;
    let val = train["val_accuracy"].as_f64().ok_or("train manifest lacks val_accuracy")?;
    let acc = eval["accuracy"].as_f64().ok_or("eval manifest lacks accuracy")?;
    Ok((val, acc))
}

fn criterion_5() -> Outcome {
    let started = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ds = dir.path().join("corpus");
    run_cli(&["synth", "--out", &ds.to_string_lossy(), "--per-class", "30", "--seed", "42"])?;
    let (val, acc) = pipeline(&ds, dir.path(), 60)?;
    let elapsed = started.elapsed();
    check(val >= 0.95 && acc >= 0.95, || format!("validation accuracy {val:.4} (eval {acc:.4}), need >= 0.95"))?;
    check(elapsed <= Duration::from_secs(60), || format!("took {elapsed:.1?}, budget 60 s"))?;
    Ok(format!("30/class, 60 epochs: validation accuracy {val:.4}, eval {acc:.4}, {elapsed:.1?}"))
}

fn criterion_6() -> Outcome {
    let f1 = f1_score(0.9187, 0.8802);
    check((f1 - 0.8990).abs() < 5e-5, || format!("F1(0.9187, 0.8802) = {f1}"))?;

    let mut rng = SeededRng::new(6);
    let classes = ["normal", "benign", "malignant"];
    let actual: Vec<usize> = (0..1000).map(|_| rng.below(3) as usize).collect();
    let predicted: Vec<usize> = (0..1000).map(|_| rng.below(3) as usize).collect();
    let r = report(&confuse(&classes, &actual, &predicted).map_err(|e| e.to_string())?);
    for c in 0..3 {
        let pairs = || actual.iter().zip(&predicted);
        let tp = pairs().filter(|&(&a, &p)| a == c && p == c).count() as f64;
        let fp = pairs().filter(|&(&a, &p)| a != c && p == c).count() as f64;
        let fn_ = pairs().filter(|&(&a, &p)| a == c && p != c).count() as f64;
        let tn = pairs().filter(|&(&a, &p)| a != c && p != c).count() as f64;
        let (precision, recall) = (tp / (tp + fp), tp / (tp + fn_));
        let want_f1 = 2.0 * precision * recall / (precision + recall);
        let got = &r.per_class[c];
        for (name, g, w) in [
            ("precision", got.precision, precision),
            ("recall", got.recall, recall),
            ("specificity", got.specificity, tn / (tn + fp)),
            ("f1", got.f1, want_f1),
        ] {
            check((g - w).abs() <= 1e-12, || format!("class {c} {name}: {g} vs counted {w}"))?;
        }
    }
    let acc = actual.iter().zip(&predicted).filter(|(a, p)| a == p).count() as f64 / 1000.0;
    check((r.accuracy - acc).abs() <= 1e-12, || format!("accuracy {} vs counted {acc}", r.accuracy))?;
    Ok(format!("F1(0.9187, 0.8802) = {f1:.4} (published table shows 0.8973); 1000-pair counting oracle agrees"))
}

fn criterion_7() -> Outcome {
    let Some(root) = std::env::var_os("LESIONMORPH_DATASET").map(PathBuf::from) else {
        return Ok("real dataset not supplied (set LESIONMORPH_DATASET); headline accuracy excluded, nothing to run".into());
    };
    if !root.is_dir() {
        return Err(format!("LESIONMORPH_DATASET={} is not a directory", root.display()));
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (val, acc) = pipeline(&root, dir.path(), 5)?;
    Ok(format!("real dataset ran end to end; recorded val accuracy {val:.4}, eval accuracy {acc:.4} (no floor asserted)"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("geometric oracles", criterion_1),
        ("cspi correctness", criterion_2),
        ("identities and invariances", criterion_3),
        ("classifier numerics", criterion_4),
        ("synthetic pipeline", criterion_5),
        ("metric arithmetic", criterion_6),
        ("real-dataset run (no floor)", criterion_7),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("criterion {} [{name}]: PASS - {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} [{name}]: FAIL - {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
