//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL line
//! each, and fails if any criterion fails.
//!
//! Run with `cargo test -p periocular-cli --test acceptance -- --nocapture`.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use periocular_core::descriptors::{hog_descriptor, lbp_descriptor, DESCRIPTOR_LEN};
use periocular_core::eval::{
    build_trials, det_from_scores, score_trials, SampleInfo, ScoreSet, UserKey,
};
use periocular_core::fusion::{folds_by_user_parity, train_fusion, two_fold_fusion};
use periocular_core::metrics::Metric;
use periocular_core::sift::{
    detect_keypoints, match_constrained, Keypoint, KeypointSet, MatchParams,
    DESCRIPTOR_LEN as SIFT_LEN,
};
use periocular_core::{Eye, GrayImage};
use periocular_neural::toy::{single_conv_model, toy_model, TOY_INPUT_SIDE};
use periocular_neural::{layer_sweep, load_network_bytes};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Outcome = Result<(), String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        // a NaN comparison is false, so it fails here
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($msg)+));
        }
    };
}

fn sample(user: usize, i: usize, rng: &mut ChaCha8Rng) -> SampleInfo {
    SampleInfo {
        image_id: format!("u{user:03}_{i:02}"),
        user: UserKey {
            subject_id: format!("s{}", user / 2),
            eye: if user.is_multiple_of(2) {
                Eye::Left
            } else {
                Eye::Right
            },
        },
        session: 1 + rng.gen_range(0..2),
        distance_m: [4.0, 8.0][rng.gen_range(0..2)],
        order: None,
    }
}

// 1. Protocol combinatorics

fn protocol_combinatorics() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for _ in 0..100 {
        let users = rng.gen_range(5..=50);
        let counts: Vec<usize> = (0..users).map(|_| rng.gen_range(2..=12)).collect();
        let samples: Vec<SampleInfo> = counts
            .iter()
            .enumerate()
            .flat_map(|(u, &k)| (0..k).map(move |i| (u, i)))
            .map(|(u, i)| sample(u, i, &mut rng))
            .collect();
        let p = build_trials(&samples);

        // brute force: every unordered pair of distinct images of one user,
        // every ordered pair of distinct users
        let mut genuine = 0usize;
        for (a, sa) in samples.iter().enumerate() {
            for sb in &samples[a + 1..] {
                if sa.user == sb.user {
                    genuine += 1;
                }
            }
        }
        let mut owners: Vec<&UserKey> = samples.iter().map(|s| &s.user).collect();
        owners.sort();
        owners.dedup();
        let mut impostor = 0usize;
        for u in &owners {
            for v in &owners {
                if u != v {
                    impostor += 1;
                }
            }
        }
        let formula: usize = counts.iter().map(|k| k * (k - 1) / 2).sum();
        ensure!(
            p.trials.genuine.len() == genuine,
            "genuine {} vs brute force {genuine}",
            p.trials.genuine.len()
        );
        ensure!(
            genuine == formula,
            "brute force {genuine} vs formula {formula}"
        );
        ensure!(
            p.trials.impostor.len() == impostor,
            "impostor {} vs {impostor}",
            p.trials.impostor.len()
        );
        ensure!(
            impostor == users * (users - 1),
            "impostor count is not U(U-1)"
        );
    }

    // 172 users as in the reference protocol: 172 x 171 = 29,412 impostor trials
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let samples: Vec<SampleInfo> = (0..172)
        .flat_map(|u| (0..2).map(move |i| (u, i)))
        .map(|(u, i)| sample(u, i, &mut rng))
        .collect();
    let p = build_trials(&samples);
    ensure!(
        p.trials.impostor.len() == 29_412,
        "172 users give {} impostor trials",
        p.trials.impostor.len()
    );
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    Ok(())
}

// 2. DET/EER oracle

struct SweepOracle {
    eer: f64,
    frr_at_1pct: f64,
}

/// Counts errors at every threshold straight from the raw score lists.
fn threshold_sweep(gen: &[f64], imp: &[f64]) -> SweepOracle {
    let mut ts: Vec<f64> = gen.iter().chain(imp).copied().collect();
    ts.extend([f64::NEG_INFINITY, f64::INFINITY]);
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ts.dedup();
    let pts: Vec<(f64, f64)> = ts
        .iter()
        .map(|&t| {
            let far = imp.iter().filter(|&&s| s >= t).count() as f64 / imp.len() as f64;
            let frr = gen.iter().filter(|&&s| s < t).count() as f64 / gen.len() as f64;
            (far, frr)
        })
        .collect();
    let mut eer = f64::NAN;
    for w in pts.windows(2) {
        let (d0, d1) = (w[0].0 - w[0].1, w[1].0 - w[1].1);
        if d0 == 0.0 {
            eer = w[0].0;
            break;
        }
        if d1 == 0.0 {
            eer = w[1].0;
            break;
        }
        if d0 > 0.0 && d1 < 0.0 {
            let a = d0 / (d0 - d1);
            eer = w[0].0 + a * (w[1].0 - w[0].0);
            break;
        }
    }
    let frr_at_1pct = pts
        .iter()
        .filter(|p| p.0 <= 0.01)
        .map(|p| p.1)
        .fold(1.0, f64::min);
    SweepOracle { eer, frr_at_1pct }
}

fn det_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(201);
    for case in 0..200 {
        let total = rng.gen_range(2..=50);
        let ng = rng.gen_range(1..total);
        let ni = total - ng;
        let gen: Vec<f64> = (0..ng).map(|_| rng.gen_range(0..15) as f64 / 7.0).collect();
        let imp: Vec<f64> = (0..ni).map(|_| rng.gen_range(0..15) as f64 / 9.0).collect();
        let det = det_from_scores(&gen, &imp).map_err(|e| e.to_string())?;
        let o = threshold_sweep(&gen, &imp);
        ensure!(
            (det.eer - o.eer).abs() <= 1e-9,
            "case {case}: EER {} vs oracle {}",
            det.eer,
            o.eer
        );
        let frr = det.frr_at(0.01);
        ensure!(
            (frr - o.frr_at_1pct).abs() <= 1e-9,
            "case {case}: FRR {frr} vs oracle {}",
            o.frr_at_1pct
        );
    }
    let sep = det_from_scores(&[0.7, 0.8, 1.0], &[0.0, 0.1, 0.5]).map_err(|e| e.to_string())?;
    ensure!(sep.eer == 0.0, "separated classes give EER {}", sep.eer);

    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let gen: Vec<f64> = (0..10_000).map(|_| normal.sample(&mut rng)).collect();
    let imp: Vec<f64> = (0..10_000).map(|_| normal.sample(&mut rng)).collect();
    let same = det_from_scores(&gen, &imp).map_err(|e| e.to_string())?;
    ensure!(
        (same.eer - 0.5).abs() <= 0.02,
        "same distribution gives EER {}",
        same.eer
    );
    Ok(())
}

// 3. Descriptor invariants

fn quantized_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> GrayImage {
    GrayImage::from_fn(w, h, |_, _| rng.gen_range(0..=255) as f64 / 255.0)
}

fn descriptor_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(301);
    for _ in 0..20 {
        let (w, h) = (rng.gen_range(10..120), rng.gen_range(10..120));
        let img = quantized_image(&mut rng, w, h);
        let lbp = lbp_descriptor(&img).map_err(|e| e.to_string())?;
        for (name, t) in [
            ("gamma 0.5", img.map(|v| v.powf(0.5))),
            ("affine", img.map(|v| 3.0 * v - 1.0)),
            ("affine 2", img.map(|v| 0.25 * v + 0.5)),
        ] {
            let l = lbp_descriptor(&t).map_err(|e| e.to_string())?;
            ensure!(
                l.values == lbp.values,
                "LBP changed under {name} on {w}x{h}"
            );
        }

        let hog = hog_descriptor(&img).map_err(|e| e.to_string())?;
        for (name, t) in [
            ("offset", img.map(|v| v + 0.3)),
            ("scale", img.map(|v| 2.5 * v)),
        ] {
            let g = hog_descriptor(&t).map_err(|e| e.to_string())?;
            let worst = g
                .values
                .iter()
                .zip(&hog.values)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f32, f32::max);
            ensure!(
                worst <= 1e-6,
                "HOG moved by {worst} under {name} on {w}x{h}"
            );
        }

        for d in [&lbp, &hog] {
            ensure!(
                d.values.len() == DESCRIPTOR_LEN && DESCRIPTOR_LEN == 512,
                "length {}",
                d.values.len()
            );
            ensure!(
                d.values.iter().all(|&v| v >= 0.0),
                "negative histogram value"
            );
            for block in d.values.chunks(8) {
                let s: f64 = block.iter().map(|&v| v as f64).sum();
                ensure!(s == 0.0 || (s - 1.0).abs() <= 1e-6, "block sums to {s}");
            }
        }
    }
    Ok(())
}

// 4. Metric axioms

fn metric_axioms() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(401);
    for _ in 0..10_000 {
        let n = rng.gen_range(1..64);
        let a: Vec<f32> = (0..n).map(|_| rng.gen()).collect();
        let b: Vec<f32> = (0..n).map(|_| rng.gen()).collect();
        for m in Metric::ALL {
            let ab = m.compare(&a, &b).map_err(|e| e.to_string())?;
            let ba = m.compare(&b, &a).map_err(|e| e.to_string())?;
            ensure!(
                ab.to_bits() == ba.to_bits(),
                "{m} not symmetric: {ab} vs {ba}"
            );
        }
    }
    let chi = Metric::Chi2
        .compare(&[1.0, 0.0], &[0.0, 1.0])
        .map_err(|e| e.to_string())?;
    ensure!(chi == -2.0, "chi2 hand example gives {chi}");

    let unit = |rng: &mut ChaCha8Rng| {
        let v: Vec<f32> = (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        v.into_iter().map(|x| x / n).collect::<Vec<f32>>()
    };
    let gallery: Vec<Vec<f32>> = (0..100).map(|_| unit(&mut rng)).collect();
    for _ in 0..100 {
        let probe = unit(&mut rng);
        let rank = |m: Metric| -> Result<Vec<usize>, String> {
            let s: Vec<f64> = gallery
                .iter()
                .map(|g| m.compare(&probe, g))
                .collect::<Result<_, _>>()
                .map_err(|e| e.to_string())?;
            let mut idx: Vec<usize> = (0..s.len()).collect();
            idx.sort_by(|&i, &j| s[j].total_cmp(&s[i]).then(i.cmp(&j)));
            Ok(idx)
        };
        ensure!(
            rank(Metric::Cosine)? == rank(Metric::Euclidean)?,
            "cosine and euclidean rankings differ"
        );
    }
    Ok(())
}

// 5. SIFT structure

fn random_descriptor(rng: &mut ChaCha8Rng) -> Vec<f32> {
    let v: Vec<f32> = (0..SIFT_LEN).map(|_| rng.gen()).collect();
    let n = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn sift_structure() -> Outcome {
    let start = Instant::now();
    let flat = detect_keypoints(&GrayImage::filled(64, 64, 0.5)).map_err(|e| e.to_string())?;
    ensure!(
        flat.is_empty(),
        "constant image gave {} keypoints",
        flat.len()
    );

    let (cx, cy, s) = (33.4, 29.7, 3.0);
    let blob = GrayImage::from_fn(64, 64, |x, y| {
        let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
        0.1 + 0.8 * (-d2 / (2.0 * s * s)).exp()
    });
    let kps = detect_keypoints(&blob).map_err(|e| e.to_string())?;
    ensure!(
        kps.iter().any(|k| f64::hypot(k.x - cx, k.y - cy) <= 2.0),
        "no keypoint within 2 px of the blob centre among {}",
        kps.len()
    );

    let set = KeypointSet {
        width: 64,
        height: 64,
        keypoints: kps.clone(),
    };
    let own = match_constrained(&set, &set, &MatchParams::default());
    ensure!(
        own.score() == kps.len(),
        "self-match {} of {}",
        own.score(),
        kps.len()
    );

    // 10 pairs sharing one translation, 3 displaced ten times as far
    let mut rng = ChaCha8Rng::seed_from_u64(501);
    let (dx, dy) = (12.0, 5.0);
    let mut enrol = Vec::new();
    let mut probe = Vec::new();
    for i in 0..13 {
        let d = random_descriptor(&mut rng);
        let (x, y) = (rng.gen_range(20.0..280.0), rng.gen_range(20.0..280.0));
        let ori = rng.gen_range(0.0..std::f64::consts::TAU);
        let k = if i < 10 { 1.0 } else { 10.0 };
        enrol.push(Keypoint {
            x,
            y,
            scale: 2.0,
            orientation: ori,
            descriptor: d.clone(),
        });
        probe.push(Keypoint {
            x: x + k * dx,
            y: y + k * dy,
            scale: 2.0,
            orientation: ori,
            descriptor: d,
        });
    }
    let wrap = |keypoints| KeypointSet {
        width: 300,
        height: 300,
        keypoints,
    };
    let m = match_constrained(&wrap(enrol), &wrap(probe), &MatchParams::default());
    ensure!(
        m.candidates == 13,
        "{} candidate pairs before filtering",
        m.candidates
    );
    ensure!(m.score() == 10, "planted scene filtered to {}", m.score());
    ensure!(
        m.pairs.iter().all(|p| p.enrol < 10 && p.enrol == p.probe),
        "kept a planted outlier"
    );

    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    Ok(())
}

// 6. Neural oracle

fn neural_oracle() -> Outcome {
    let kernel = [0.25, -0.5, 1.0, 0.75, -1.25, 0.5, 0.0, 2.0, -0.125];
    let input: Vec<f64> = (0..25)
        .map(|i| ((i * 5 + 3) % 13) as f64 / 13.0 - 0.4)
        .collect();
    let img = GrayImage::new(5, 5, input.clone()).map_err(|e| e.to_string())?;
    let net =
        load_network_bytes(&single_conv_model(kernel, 5, 5), "conv").map_err(|e| e.to_string())?;
    let act = net.extract(&img, "conv").map_err(|e| e.to_string())?;
    ensure!(
        act.values.len() == 9,
        "conv output has {} values",
        act.values.len()
    );
    for oy in 0..3 {
        for ox in 0..3 {
            let mut want = 0.0f64;
            for ky in 0..3 {
                for kx in 0..3 {
                    want +=
                        kernel[ky * 3 + kx] as f64 * (input[(oy + ky) * 5 + ox + kx] as f32) as f64;
                }
            }
            let got = act.values[oy * 3 + ox] as f64;
            ensure!(
                (got - want).abs() <= 1e-5,
                "conv at ({ox},{oy}): {got} vs {want}"
            );
        }
    }

    let toy = load_network_bytes(&toy_model(), "toy").map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(601);
    let mut dataset = Vec::new();
    for u in 0..6 {
        for i in 0..3 {
            let img = GrayImage::from_fn(40, 40, |_, _| rng.gen());
            dataset.push((img, sample(u, i, &mut rng)));
        }
    }
    let rows = layer_sweep(&toy, &dataset, &Metric::ALL).map_err(|e| e.to_string())?;
    ensure!(
        toy.layer_names.len() == 6,
        "toy model has {} layers",
        toy.layer_names.len()
    );
    ensure!(rows.len() == 18, "sweep emitted {} rows", rows.len());
    ensure!(
        rows.iter().all(|r| (0.0..=100.0).contains(&r.eer_percent)),
        "EER outside [0, 100]"
    );

    let x = GrayImage::from_fn(TOY_INPUT_SIDE, TOY_INPUT_SIDE, |_, _| rng.gen());
    let a = toy.extract_all(&x).map_err(|e| e.to_string())?;
    let b = toy.extract_all(&x.clone()).map_err(|e| e.to_string())?;
    ensure!(a == b, "identical inputs gave different activations");
    Ok(())
}

// 7. Fusion

fn fusion_scores(seed: u64) -> Result<(Vec<ScoreSet>, Vec<u8>), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<SampleInfo> = (0..60)
        .flat_map(|u| (0..4).map(move |i| (u, i)))
        .map(|(u, i)| sample(u, i, &mut rng))
        .collect();
    let protocol = build_trials(&samples);
    let trials = protocol.trials.trials();
    // two comparators whose errors are independent: each sees the label
    // through its own noise, so their sum separates better than either
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut draws: BTreeMap<(String, String), (f64, f64)> = BTreeMap::new();
    for t in &trials {
        let y = if t.label.is_genuine() { 1.0 } else { 0.0 };
        draws.insert(
            (t.enrol_id.clone(), t.probe_id.clone()),
            (
                1.2 * y + noise.sample(&mut rng),
                3.0 * (1.2 * y + noise.sample(&mut rng)) - 4.0,
            ),
        );
    }
    let a = score_trials(&trials, "a", |e, p| {
        Ok(draws[&(e.to_owned(), p.to_owned())].0)
    })
    .map_err(|e| e.to_string())?;
    let b = score_trials(&trials, "b", |e, p| {
        Ok(draws[&(e.to_owned(), p.to_owned())].1)
    })
    .map_err(|e| e.to_string())?;
    let users = protocol.user_index();
    let folds = folds_by_user_parity(&a, |id| users.get(id).copied()).map_err(|e| e.to_string())?;
    Ok((vec![a, b], folds))
}

fn fusion() -> Outcome {
    let (sets, folds) = fusion_scores(701)?;
    let single = train_fusion(&sets[..1]).map_err(|e| e.to_string())?;
    let mut twin = sets[0].clone();
    twin.comparator_id = "a-copy".into();
    let dup = train_fusion(&[sets[0].clone(), twin]).map_err(|e| e.to_string())?;
    let gap = (single.training.log_likelihood - dup.training.log_likelihood).abs();
    ensure!(
        gap <= 1e-6,
        "duplicate comparator changes log-likelihood by {gap}"
    );

    let fused = two_fold_fusion(&sets, &folds).map_err(|e| e.to_string())?;
    let eer =
        |s: &ScoreSet| det_from_scores(&s.genuine_scores(), &s.impostor_scores()).map(|d| d.eer);
    let best = eer(&sets[0])
        .map_err(|e| e.to_string())?
        .min(eer(&sets[1]).map_err(|e| e.to_string())?);
    let joint = eer(&fused.fused).map_err(|e| e.to_string())?;
    ensure!(
        joint < best,
        "fused EER {joint} is not below the best single {best}"
    );

    let again = two_fold_fusion(&sets, &folds).map_err(|e| e.to_string())?;
    for (m1, m2) in fused.models.iter().zip(&again.models) {
        ensure!(
            (m1.bias - m2.bias).abs() <= 1e-9,
            "bias differs across reruns"
        );
        for (w1, w2) in m1.weights.iter().zip(&m2.weights) {
            ensure!((w1 - w2).abs() <= 1e-9, "weights differ across reruns");
        }
    }
    Ok(())
}

// 8. End-to-end synthetic run

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_periocular"))
}

fn run_cli(args: &[&str]) -> Result<String, String> {
    let out = bin().args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "periocular {} exited with {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

/// Relative path -> bytes of every file under `root`.
fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(dir: &Path, root: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(&path, root, out);
            } else {
                out.insert(
                    path.strip_prefix(root).unwrap().to_path_buf(),
                    std::fs::read(&path).unwrap(),
                );
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn same_tree(a: &Path, b: &Path) -> Outcome {
    let (sa, sb) = (snapshot(a), snapshot(b));
    let ka: Vec<_> = sa.keys().collect();
    let kb: Vec<_> = sb.keys().collect();
    ensure!(
        ka == kb,
        "{} and {} hold different files",
        a.display(),
        b.display()
    );
    for (k, v) in &sa {
        ensure!(
            sb[k] == *v,
            "{} differs between {} and {}",
            k.display(),
            a.display(),
            b.display()
        );
    }
    Ok(())
}

const RUN_CONFIG: &str = r#"
extractors = ["lbp", "hog"]
metrics = ["chi2"]
fusion = ["lbp", "hog"]
"#;

fn end_to_end() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path();
    let config = root.join("experiment.toml");
    std::fs::write(&config, RUN_CONFIG).map_err(|e| e.to_string())?;
    let config = config.to_str().unwrap();

    let start = Instant::now();
    let data = root.join("data");
    run_cli(&[
        "synth",
        "--users",
        "20",
        "--images",
        "4",
        "--seed",
        "7",
        "--out",
        data.to_str().unwrap(),
    ])?;
    let manifest = data.join("manifest.csv");
    let manifest = manifest.to_str().unwrap();
    let run = |out: &Path, workers: &str| {
        run_cli(&[
            "run",
            "--manifest",
            manifest,
            "--config",
            config,
            "--out",
            out.to_str().unwrap(),
            "--workers",
            workers,
        ])
    };
    let first = root.join("run1");
    run(&first, "1")?;
    let elapsed = start.elapsed();
    ensure!(
        elapsed < Duration::from_secs(300),
        "synth + run took {elapsed:?}"
    );

    let summary = std::fs::read_to_string(first.join("summary.csv")).map_err(|e| e.to_string())?;
    let mut rdr = csv::Reader::from_reader(summary.as_bytes());
    let mut systems = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| e.to_string())?;
        let eer: f64 = row[1].parse().map_err(|_| format!("bad EER {}", &row[1]))?;
        systems.push(row[0].to_owned());
        if !row[0].starts_with("fusion:") {
            ensure!(eer < 30.0, "{} has EER {eer}%", &row[0]);
        }
    }
    ensure!(
        systems == ["lbp/chi2", "hog/chi2", "fusion:lbp+hog"],
        "summary rows {systems:?}"
    );

    let data2 = root.join("data2");
    run_cli(&[
        "synth",
        "--users",
        "20",
        "--images",
        "4",
        "--seed",
        "7",
        "--out",
        data2.to_str().unwrap(),
    ])?;
    same_tree(&data, &data2)?;

    let second = root.join("run2");
    run(&second, "1")?;
    same_tree(&first, &second)?;
    let parallel = root.join("run8");
    run(&parallel, "8")?;
    same_tree(&first, &parallel)?;

    // warm cache: rerunning into the same directory changes nothing
    let before = snapshot(&first);
    run(&first, "8")?;
    ensure!(
        snapshot(&first) == before,
        "rerun with a warm cache changed outputs"
    );
    Ok(())
}

// 9. Report format and documentation

fn report_and_docs() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path();
    let data = root.join("data");
    let out = root.join("out");
    let config = root.join("experiment.toml");
    std::fs::write(&config, RUN_CONFIG).map_err(|e| e.to_string())?;
    run_cli(&[
        "synth",
        "--users",
        "8",
        "--images",
        "3",
        "--seed",
        "9",
        "--out",
        data.to_str().unwrap(),
    ])?;
    run_cli(&[
        "run",
        "--manifest",
        data.join("manifest.csv").to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ])?;

    let summary = std::fs::read_to_string(out.join("summary.csv")).map_err(|e| e.to_string())?;
    ensure!(
        summary.starts_with("system,eer_percent,frr_at_far_1pct_percent,genuine,impostor\n"),
        "unexpected summary header"
    );
    let mut rdr = csv::Reader::from_reader(summary.as_bytes());
    let mut rows = 0;
    for row in rdr.records() {
        let row = row.map_err(|e| e.to_string())?;
        rows += 1;
        let stem = row[0].replace('/', "_").replace(':', "-");
        let file = std::fs::File::open(out.join("scores").join(format!("{stem}.csv")))
            .map_err(|e| e.to_string())?;
        let scores = ScoreSet::read_csv(file).map_err(|e| e.to_string())?;
        ensure!(
            scores.comparator_id == row[0],
            "score file names {}",
            scores.comparator_id
        );
        let det = det_from_scores(&scores.genuine_scores(), &scores.impostor_scores())
            .map_err(|e| e.to_string())?;
        let eer: f64 = row[1].parse().map_err(|_| "bad EER".to_string())?;
        let frr: f64 = row[2].parse().map_err(|_| "bad FRR".to_string())?;
        ensure!(
            eer == 100.0 * det.eer,
            "{}: summary EER {eer} vs recomputed {}",
            &row[0],
            100.0 * det.eer
        );
        ensure!(
            frr == 100.0 * det.frr_at(0.01),
            "{}: summary FRR {frr}",
            &row[0]
        );
    }
    ensure!(rows == 3, "summary has {rows} rows");

    // the report subcommand rebuilds the same table from the score files alone
    let md = std::fs::read(out.join("summary.md")).map_err(|e| e.to_string())?;
    std::fs::remove_file(out.join("summary.csv")).map_err(|e| e.to_string())?;
    std::fs::remove_file(out.join("summary.md")).map_err(|e| e.to_string())?;
    run_cli(&["report", "--out", out.to_str().unwrap()])?;
    ensure!(
        std::fs::read_to_string(out.join("summary.csv")).map_err(|e| e.to_string())? == summary,
        "report rebuilt a different summary.csv"
    );
    ensure!(
        std::fs::read(out.join("summary.md")).map_err(|e| e.to_string())? == md,
        "report rebuilt a different summary.md"
    );

    let readme_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../README.md");
    let readme = std::fs::read_to_string(&readme_path)
        .map_err(|e| format!("{}: {e}", readme_path.display()))?;
    for needle in ["17.8%", "11.3%", "16.6%", "5.6%", "UBIPr", "EER", "FRR"] {
        ensure!(readme.contains(needle), "README lacks {needle:?}");
    }
    ensure!(
        readme.to_lowercase().contains("not reproducible"),
        "README does not mark the reference numbers"
    );
    Ok(())
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 9] = [
        ("protocol combinatorics", protocol_combinatorics),
        ("DET/EER oracle", det_oracle),
        ("descriptor invariants", descriptor_invariants),
        ("metric axioms", metric_axioms),
        ("SIFT structure", sift_structure),
        ("neural oracle", neural_oracle),
        ("fusion", fusion),
        ("end-to-end synthetic run", end_to_end),
        ("report and documentation", report_and_docs),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        // written to the raw handle so the lines show even when output is captured
        let mut err = std::io::stderr();
        match &outcome {
            Ok(()) => writeln!(err, "criterion {}: PASS  {name} ({secs:.2}s)", i + 1),
            Err(why) => writeln!(err, "criterion {}: FAIL  {name} ({secs:.2}s): {why}", i + 1),
        }
        .unwrap();
        if outcome.is_err() {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
