mod common;

use std::path::{Path, PathBuf};

use common::*;
use idf::cli::{run, EXIT_IO, EXIT_OK, EXIT_USAGE, EXIT_VALIDATION};
use idf::io::{
    confine, decode_tensors, encode_weights, list_pngs, load_image, load_weights,
    load_weights_inferred, save_image, save_weights, RunConfig, CONFIG_KEYS,
};
use idf::{did_forward, IdfError, Image, ModelConfig, Rng};
use proptest::prelude::*;

fn call(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let code = run(std::iter::once("idf").chain(args.iter().copied()), &mut out);
    (code, String::from_utf8(out).unwrap())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Random image already on the 8-bit grid, so a PNG round trip is lossless.
fn quantized(c: usize, h: usize, w: usize, seed: u64) -> Image {
    let mut rng = Rng::new(seed);
    Image::from_fn(c, h, w, |_, _, _| rng.below(256) as f64 / 255.0)
}

#[test]
fn png_round_trip_is_exact_on_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    for c in [1, 3] {
        let img = quantized(c, 9, 13, c as u64);
        let p = dir.path().join(format!("img{c}.png"));
        save_image(&img, &p).unwrap();
        assert_eq!(load_image(&p).unwrap(), img);
    }
}

#[test]
fn png_quantizes_and_clamps() {
    let dir = tempfile::tempdir().unwrap();
    let img = Image::new(1, 1, 4, vec![-0.5, 0.0, 1.0, 1.7]).unwrap();
    let p = dir.path().join("edge.png");
    save_image(&img, &p).unwrap();
    assert_eq!(load_image(&p).unwrap().data(), &[0.0, 0.0, 1.0, 1.0]);
    let mid = Image::new(1, 1, 1, vec![0.5]).unwrap();
    save_image(&mid, &p).unwrap();
    assert_eq!(load_image(&p).unwrap().data(), &[128.0 / 255.0]);
}

#[test]
fn unsupported_images_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p16 = dir.path().join("deep.png");
    image::save_buffer(&p16, &[0u8; 8], 2, 2, image::ColorType::L16).unwrap();
    assert!(matches!(
        load_image(&p16),
        Err(IdfError::UnsupportedImage { .. })
    ));
    let txt = dir.path().join("fake.png");
    std::fs::write(&txt, b"not an image").unwrap();
    assert!(load_image(&txt).is_err());
    assert!(matches!(
        load_image(&dir.path().join("missing.png")),
        Err(IdfError::Io { .. })
    ));
    assert!(save_image(&Image::filled(2, 2, 2, 0.0), &dir.path().join("two.png")).is_err());
}

#[test]
fn png_listing_is_sorted_and_filtered() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["b.png", "a.PNG", "c.txt"] {
        std::fs::write(dir.path().join(name), b"x").unwrap();
    }
    let names: Vec<_> = list_pngs(dir.path())
        .unwrap()
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names, ["a.PNG", "b.png"]);
}

#[test]
fn weights_round_trip_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    // f32 storage: start from values that are exactly representable
    let mut w = random_weights(tiny_config(), 1);
    for t in w.tensors_mut() {
        for v in t.data_mut() {
            *v = *v as f32 as f64;
        }
    }
    let p = dir.path().join("w.idfw");
    save_weights(&w, &p).unwrap();
    assert_eq!(load_weights(&p, &tiny_config()).unwrap(), w);
    assert_eq!(
        load_weights_inferred(&p, &ModelConfig::default()).unwrap(),
        w
    );
    assert_eq!(std::fs::read(&p).unwrap(), encode_weights(&w));
}

#[test]
fn corrupted_checkpoint_fails_crc() {
    let mut bytes = encode_weights(&random_weights(tiny_config(), 2));
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x10;
    assert!(matches!(decode_tensors(&bytes), Err(IdfError::Crc { .. })));
    assert!(decode_tensors(&bytes[..10]).is_err());
    let mut magic = encode_weights(&random_weights(tiny_config(), 2));
    magic[0] = b'X';
    assert!(matches!(
        decode_tensors(&magic),
        Err(IdfError::WeightFormat(_))
    ));
}

#[test]
fn width_mismatch_is_a_shape_error() {
    let dir = tempfile::tempdir().unwrap();
    let narrow = ModelConfig {
        hidden_width: 32,
        ..ModelConfig::default()
    };
    let p = dir.path().join("narrow.idfw");
    save_weights(&random_weights(narrow, 3), &p).unwrap();
    assert!(matches!(
        load_weights(&p, &ModelConfig::default()),
        Err(IdfError::WeightShape { .. })
    ));
    assert_eq!(
        load_weights_inferred(&p, &ModelConfig::default())
            .unwrap()
            .config()
            .hidden_width,
        32
    );
}

#[test]
fn config_text_round_trip_and_errors() {
    let cfg = RunConfig::default();
    let text = cfg.render();
    assert_eq!(RunConfig::parse(&text).unwrap(), cfg);
    assert_eq!(text.lines().count(), CONFIG_KEYS.len());
    for key in CONFIG_KEYS {
        assert!(text.contains(&format!("{key} = ")), "{key}");
    }
    assert!(RunConfig::parse("model.colour = 3").is_err());
    assert!(RunConfig::parse("engine.kappa = 0.1\nengine.kappa = 0.2").is_err());
    assert!(RunConfig::parse("engine.kappa 0.1").is_err());
    assert!(RunConfig::parse("engine.kappa = -1").is_err());
    let parsed = RunConfig::parse(
        "# comment\nengine.kappa = 0.03 # trailing\n\nbench.suite = gaussian:25, mixture:2",
    )
    .unwrap();
    assert_eq!(parsed.engine.kappa, 0.03);
    assert_eq!(parsed.bench_suite.len(), 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn config_round_trips(kappa in 0.0f64..1.0, t in 1usize..40, lr in 1e-6f64..1e-1, steps in 0usize..5000, seed in any::<u64>(), level in 1u8..=4) {
        let mut cfg = RunConfig::default();
        cfg.engine.kappa = kappa;
        cfg.engine.max_iterations = t;
        cfg.train.learning_rate = lr;
        cfg.train.steps = steps;
        cfg.noise_seed = seed;
        cfg.noise = idf::Noise::Mixture { level };
        prop_assert_eq!(RunConfig::parse(&cfg.render()).unwrap(), cfg);
    }
}

#[test]
fn confine_keeps_paths_inside() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().canonicalize().unwrap();
    assert_eq!(
        confine(&root, Path::new("a/b.png")).unwrap(),
        root.join("a/b.png")
    );
    assert!(matches!(
        confine(&root, Path::new("../x.png")),
        Err(IdfError::PathOutsideSandbox(_))
    ));
    assert!(confine(&root, Path::new("a/../../x")).is_err());
    assert!(confine(&root, Path::new("/etc/passwd")).is_err());
    #[cfg(unix)]
    {
        std::os::unix::fs::symlink("/tmp", root.join("escape")).unwrap();
        assert!(confine(&root, Path::new("escape/x.png")).is_err());
    }
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        Fixture { _dir: dir, root }
    }
    fn p(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
}

#[test]
fn cli_single_iteration_denoise_equals_one_block() {
    let f = Fixture::new();
    let w = random_weights(tiny_config(), 4);
    save_weights(&w, &f.p("w.idfw")).unwrap();
    let img = quantized(3, 12, 12, 5);
    save_image(&img, &f.p("in.png")).unwrap();
    let (code, out) = call(&[
        "denoise",
        "--in",
        s(&f.p("in.png")),
        "--out",
        s(&f.p("out.png")),
        "--weights",
        s(&f.p("w.idfw")),
        "--T",
        "1",
        "--stop",
        "fixed",
    ]);
    assert_eq!(code, EXIT_OK, "{out}");
    assert!(out.contains("iterations_used=1"));
    assert!(out.contains("stop_reason=max_reached"));
    assert!(out.contains("degenerate_kernels="));
    assert!(out.contains("engine.max_iterations = 1"));
    let loaded = load_weights(&f.p("w.idfw"), &tiny_config()).unwrap();
    let (want, _) = did_forward(&img, None, &loaded, 2).unwrap();
    let got = load_image(&f.p("out.png")).unwrap();
    // the PNG holds the 8-bit quantisation of the estimate
    assert!(max_abs_diff(got.data(), want.data()) <= 0.5 / 255.0 + 1e-12);
}

#[test]
fn cli_trace_writes_iterations() {
    let f = Fixture::new();
    save_weights(&random_weights(tiny_config(), 6), &f.p("w.idfw")).unwrap();
    save_image(&quantized(3, 10, 10, 7), &f.p("in.png")).unwrap();
    let (code, _) = call(&[
        "denoise",
        "--in",
        s(&f.p("in.png")),
        "--out",
        s(&f.p("out.png")),
        "--weights",
        s(&f.p("w.idfw")),
        "--T",
        "3",
        "--stop",
        "fixed",
        "--trace",
        s(&f.p("trace")),
    ]);
    assert_eq!(code, EXIT_OK);
    let lines = std::fs::read_to_string(f.p("trace/trace.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 3);
    assert!(list_pngs(&f.p("trace")).unwrap().len() >= 3);
}

#[test]
fn cli_eval_on_identical_dirs() {
    let f = Fixture::new();
    for (i, name) in ["a.png", "b.png"].iter().enumerate() {
        let img = quantized(3, 16, 16, 10 + i as u64);
        save_image(&img, &f.p(&format!("pred/{name}"))).unwrap();
        save_image(&img, &f.p(&format!("ref/{name}"))).unwrap();
    }
    let (code, out) = call(&[
        "eval",
        "--pred",
        s(&f.p("pred")),
        "--ref",
        s(&f.p("ref")),
        "--report",
        s(&f.p("m.csv")),
    ]);
    assert_eq!(code, EXIT_OK, "{out}");
    let mut rdr = csv::Reader::from_path(f.p("m.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert!(rows.len() >= 2);
    for r in &rows {
        assert_eq!(r[1].parse::<f64>().unwrap(), 100.0);
        assert!((r[2].parse::<f64>().unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn cli_add_noise_is_seeded() {
    let f = Fixture::new();
    save_image(&quantized(3, 12, 12, 12), &f.p("clean.png")).unwrap();
    for out in ["n1.png", "n2.png"] {
        let (code, _) = call(&[
            "add-noise",
            "--in",
            s(&f.p("clean.png")),
            "--out",
            s(&f.p(out)),
            "--noise",
            "gaussian:25",
            "--seed",
            "9",
        ]);
        assert_eq!(code, EXIT_OK);
    }
    let (a, b) = (
        load_image(&f.p("n1.png")).unwrap(),
        load_image(&f.p("n2.png")).unwrap(),
    );
    assert_eq!(a, b);
    assert_ne!(a, load_image(&f.p("clean.png")).unwrap());
}

#[test]
fn cli_param_count() {
    let (code, out) = call(&["param-count"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(out.lines().last().unwrap(), "38706");
    let (code, out) = call(&["param-count", "--set", "model.hidden_width=32"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(
        out.lines().last().unwrap().parse::<usize>().unwrap(),
        expected_param_count(3, 32, 3)
    );
}

#[test]
fn cli_exit_codes() {
    let f = Fixture::new();
    assert_eq!(call(&[]).0, EXIT_USAGE);
    assert_eq!(call(&["frobnicate"]).0, EXIT_USAGE);
    assert_eq!(call(&["denoise", "--in", "x.png"]).0, EXIT_USAGE);
    assert_eq!(call(&["--help"]).0, EXIT_OK);
    // missing input file
    save_weights(&random_weights(tiny_config(), 13), &f.p("w.idfw")).unwrap();
    let missing = call(&[
        "denoise",
        "--in",
        s(&f.p("nope.png")),
        "--out",
        s(&f.p("o.png")),
        "--weights",
        s(&f.p("w.idfw")),
    ]);
    assert_eq!(missing.0, EXIT_IO);
    // bad config value and unknown key
    assert_eq!(
        call(&["param-count", "--set", "engine.kappa=-2"]).0,
        EXIT_VALIDATION
    );
    assert_eq!(
        call(&["param-count", "--set", "engine.colour=1"]).0,
        EXIT_VALIDATION
    );
    // corrupted checkpoint
    let mut bytes = std::fs::read(f.p("w.idfw")).unwrap();
    bytes[20] ^= 1;
    std::fs::write(f.p("bad.idfw"), bytes).unwrap();
    save_image(&quantized(3, 8, 8, 14), &f.p("in.png")).unwrap();
    let crc = call(&[
        "denoise",
        "--in",
        s(&f.p("in.png")),
        "--out",
        s(&f.p("o.png")),
        "--weights",
        s(&f.p("bad.idfw")),
    ]);
    assert_eq!(crc.0, EXIT_VALIDATION);
    // a config pins the architecture, so narrower weights are refused
    std::fs::write(f.p("run.cfg"), "engine.kappa = 0.02\n").unwrap();
    let shape = call(&[
        "denoise",
        "--in",
        s(&f.p("in.png")),
        "--out",
        s(&f.p("o.png")),
        "--weights",
        s(&f.p("w.idfw")),
        "--config",
        s(&f.p("run.cfg")),
    ]);
    assert_eq!(shape.0, EXIT_VALIDATION);
}

#[test]
fn cli_train_writes_weights_and_log() {
    let f = Fixture::new();
    for i in 0..2 {
        save_image(
            &quantized(3, 16, 16, 20 + i),
            &f.p(&format!("data/{i}.png")),
        )
        .unwrap();
    }
    let (code, out) = call(&[
        "train",
        "--data",
        s(&f.p("data")),
        "--out",
        s(&f.p("w.idfw")),
        "--set",
        "train.steps=2",
        "--set",
        "train.batch_size=1",
        "--set",
        "train.patch_size=8",
        "--set",
        "train.unroll=2",
        "--set",
        "model.hidden_width=4",
    ]);
    assert_eq!(code, EXIT_OK, "{out}");
    let w = load_weights_inferred(&f.p("w.idfw"), &ModelConfig::default()).unwrap();
    assert_eq!(w.config().hidden_width, 4);
    let log = std::fs::read_to_string(f.p("w.csv")).unwrap();
    assert_eq!(log.lines().count(), 3);
    let empty = call(&["train", "--data", s(&f.root), "--out", s(&f.p("x.idfw"))]);
    assert_eq!(empty.0, EXIT_VALIDATION);
}
