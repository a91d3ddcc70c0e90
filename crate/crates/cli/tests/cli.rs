//! End-to-end tests against the compiled binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_dcfe")
}

struct TestDir(PathBuf);

impl TestDir {
    fn new(name: &str) -> TestDir {
        let dir = std::env::temp_dir().join(format!("dcfe-cli-{name}-{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        fs::create_dir_all(&dir).unwrap();
        TestDir(dir)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }
}

impl Drop for TestDir {
    fn drop(&mut self) {
        let _ = fs::remove_dir_all(&self.0);
    }
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_in(dir: &TestDir, args: &[&str]) -> Output {
    let args: Vec<String> = args
        .iter()
        .map(|a| {
            if let Some(name) = a.strip_prefix('@') {
                dir.path(name).to_string_lossy().into_owned()
            } else {
                (*a).to_string()
            }
        })
        .collect();
    Command::new(bin())
        .args(&args)
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "command failed: {}\n{}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// A small raster with smooth structure and mild texture.
fn write_test_ppm(path: &Path) {
    let (w, h) = (64usize, 64usize);
    let mut px = Vec::with_capacity(3 * w * h);
    for y in 0..h {
        for x in 0..w {
            let fx = x as f64;
            let fy = y as f64;
            let base = 128.0 + 48.0 * (fx / 17.0).sin() * (fy / 23.0).cos();
            let grain = ((x * 31 + y * 57) % 7) as f64 - 3.0;
            let v = base + grain;
            px.push((v + 9.0).clamp(0.0, 255.0) as u8);
            px.push(v.clamp(0.0, 255.0) as u8);
            px.push((v - 7.0).clamp(0.0, 255.0) as u8);
        }
    }
    let mut bytes = format!("P6\n{w} {h}\n255\n").into_bytes();
    bytes.extend_from_slice(&px);
    fs::write(path, bytes).unwrap();
}

/// encode + scramble + issue two users; returns the directory.
fn build_fixture(name: &str) -> TestDir {
    let dir = TestDir::new(name);
    write_test_ppm(&dir.path("src.ppm"));
    assert_ok(&run_in(
        &dir,
        &["encode", "--in", "@src.ppm", "--out", "@plain.jpg"],
    ));
    assert_ok(&run_in(
        &dir,
        &[
            "scramble",
            "--in",
            "@plain.jpg",
            "--out",
            "@trial.jpg",
            "--key-out",
            "@producer.dcfek",
            "--seed",
            "9",
        ],
    ));
    for user in ["alice", "bob"] {
        assert_ok(&run_in(
            &dir,
            &[
                "issue",
                "--trial",
                "@trial.jpg",
                "--producer-key",
                "@producer.dcfek",
                "--user-id",
                user,
                "--key-out",
                &format!("@{user}.dcfek"),
                "--registry",
                "@registry.json",
            ],
        ));
    }
    dir
}

#[test]
fn pipeline_traces_each_user() {
    let dir = build_fixture("pipeline");
    for user in ["alice", "bob"] {
        let copy = format!("@{user}.jpg");
        assert_ok(&run_in(
            &dir,
            &[
                "decode",
                "--in",
                "@trial.jpg",
                "--key",
                &format!("@{user}.dcfek"),
                "--out",
                &copy,
            ],
        ));
        let out = run_in(
            &dir,
            &["trace", "--in", &copy, "--registry", "@registry.json"],
        );
        assert_eq!(out.status.code(), Some(0));
        assert_eq!(stdout(&out).trim(), format!("MATCH {user}"));
    }

    // The trial itself matches nobody.
    let out = run_in(
        &dir,
        &[
            "trace",
            "--in",
            "@trial.jpg",
            "--registry",
            "@registry.json",
        ],
    );
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stdout(&out).trim(), "NO_MATCH");

    let registry = fs::read_to_string(dir.path("registry.json")).unwrap();
    assert!(registry.contains("\"alice\"") && registry.contains("\"bob\""));
}

#[test]
fn producer_key_inverts_the_scramble_exactly() {
    let dir = build_fixture("invert");
    assert_ok(&run_in(
        &dir,
        &[
            "decode",
            "--in",
            "@trial.jpg",
            "--key",
            "@producer.dcfek",
            "--out",
            "@restored.jpg",
        ],
    ));
    let plain = fs::read(dir.path("plain.jpg")).unwrap();
    let restored = fs::read(dir.path("restored.jpg")).unwrap();
    assert_eq!(plain, restored);
}

#[test]
fn trial_is_heavily_degraded_and_decode_is_close() {
    let dir = build_fixture("quality");
    let plain = run_in(&dir, &["psnr", "--ref", "@src.ppm", "--test", "@plain.jpg"]);
    assert_ok(&plain);
    let trial = run_in(&dir, &["psnr", "--ref", "@src.ppm", "--test", "@trial.jpg"]);
    assert_ok(&trial);
    let parse_db = |s: &str| -> f64 {
        s.lines()
            .find_map(|l| l.strip_prefix("psnr: "))
            .and_then(|v| v.strip_suffix(" dB"))
            .expect("psnr line")
            .parse()
            .unwrap()
    };
    let plain_db = parse_db(&stdout(&plain));
    let trial_db = parse_db(&stdout(&trial));
    assert!(
        plain_db - trial_db >= 3.0,
        "trial {trial_db} vs plain {plain_db}"
    );

    let same = run_in(&dir, &["psnr", "--ref", "@src.ppm", "--test", "@src.ppm"]);
    assert_ok(&same);
    assert!(stdout(&same).contains("psnr: IDENTICAL"));
}

#[test]
fn inspect_reports_structure() {
    let dir = build_fixture("inspect");
    let out = run_in(&dir, &["inspect", "--in", "@plain.jpg"]);
    assert_ok(&out);
    let text = stdout(&out);
    assert!(text.contains("size: 64x64"));
    assert!(text.contains("components: 3"));
    assert!(text.contains("content digest: "));
    assert!(text.contains("component 1: sampling 2x2"));
}

#[test]
fn recompute_audits_the_registry() {
    let dir = build_fixture("recompute");
    assert_ok(&run_in(
        &dir,
        &[
            "decode",
            "--in",
            "@trial.jpg",
            "--key",
            "@alice.dcfek",
            "--out",
            "@alice.jpg",
        ],
    ));
    let out = run_in(
        &dir,
        &[
            "trace",
            "--in",
            "@alice.jpg",
            "--registry",
            "@registry.json",
            "--recompute",
            "--trial",
            "@trial.jpg",
            "--producer-key",
            "@producer.dcfek",
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("audit alice: ok"));
    assert!(text.contains("audit bob: ok"));
    assert!(text.contains("MATCH alice"));

    // Corrupt alice's stored reference hash: the audit flags it, and the
    // recomputed hash still finds her.
    let registry_path = dir.path("registry.json");
    let text = fs::read_to_string(&registry_path).unwrap();
    let alice_hash = text
        .lines()
        .skip_while(|l| !l.contains("\"alice\""))
        .find_map(|l| l.split('"').nth(3).filter(|_| l.contains("reference_hash")))
        .expect("alice reference hash")
        .to_string();
    fs::write(&registry_path, text.replace(&alice_hash, &"0".repeat(32))).unwrap();

    let plain = run_in(
        &dir,
        &[
            "trace",
            "--in",
            "@alice.jpg",
            "--registry",
            "@registry.json",
        ],
    );
    assert_eq!(plain.status.code(), Some(3));

    let out = run_in(
        &dir,
        &[
            "trace",
            "--in",
            "@alice.jpg",
            "--registry",
            "@registry.json",
            "--recompute",
            "--trial",
            "@trial.jpg",
            "--producer-key",
            "@producer.dcfek",
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("audit alice: stale"));
    assert!(text.contains("MATCH alice"));
}

#[test]
fn scramble_flag_variants_work() {
    let dir = build_fixture("flags");
    assert_ok(&run_in(
        &dir,
        &[
            "scramble",
            "--in",
            "@plain.jpg",
            "--out",
            "@t2.jpg",
            "--key-out",
            "@p2.dcfek",
            "--xi-mode",
            "fixed:3",
            "--components",
            "luma",
        ],
    ));
    // Same flags and default seed reproduce the same trial bytes.
    assert_ok(&run_in(
        &dir,
        &[
            "scramble",
            "--in",
            "@plain.jpg",
            "--out",
            "@t3.jpg",
            "--key-out",
            "@p3.dcfek",
            "--xi-mode",
            "fixed:3",
            "--components",
            "luma",
        ],
    ));
    assert_eq!(
        fs::read(dir.path("t2.jpg")).unwrap(),
        fs::read(dir.path("t3.jpg")).unwrap()
    );
    assert_eq!(
        fs::read(dir.path("p2.dcfek")).unwrap(),
        fs::read(dir.path("p3.dcfek")).unwrap()
    );
}

#[test]
fn emitted_files_decode_with_an_independent_reader() {
    let dir = build_fixture("interop");
    assert_ok(&run_in(
        &dir,
        &[
            "decode",
            "--in",
            "@trial.jpg",
            "--key",
            "@alice.dcfek",
            "--out",
            "@alice.jpg",
        ],
    ));
    for name in ["plain.jpg", "trial.jpg", "alice.jpg"] {
        let img = image::open(dir.path(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!((img.width(), img.height()), (64, 64), "{name}");
    }
}

#[test]
fn exit_codes_distinguish_failure_classes() {
    let dir = TestDir::new("exits");
    write_test_ppm(&dir.path("src.ppm"));

    // Usage: missing required argument.
    let out = run(&["encode", "--in", "nope.ppm"]);
    assert_eq!(out.status.code(), Some(1));

    // Io: input file does not exist.
    let out = run_in(&dir, &["encode", "--in", "@missing.ppm", "--out", "@x.jpg"]);
    assert_eq!(out.status.code(), Some(1));

    // Usage: quality out of range.
    let out = run_in(
        &dir,
        &[
            "encode",
            "--in",
            "@src.ppm",
            "--out",
            "@x.jpg",
            "--quality",
            "0",
        ],
    );
    assert_eq!(out.status.code(), Some(1));

    // Format: not a JPEG.
    fs::write(dir.path("junk.jpg"), b"not a jpeg at all").unwrap();
    let out = run_in(
        &dir,
        &[
            "scramble",
            "--in",
            "@junk.jpg",
            "--out",
            "@t.jpg",
            "--key-out",
            "@k.dcfek",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("junk.jpg"));

    // Conflict: issuing the same user twice.
    let dir = build_fixture("exits2");
    let out = run_in(
        &dir,
        &[
            "issue",
            "--trial",
            "@trial.jpg",
            "--producer-key",
            "@producer.dcfek",
            "--user-id",
            "alice",
            "--key-out",
            "@alice2.dcfek",
            "--registry",
            "@registry.json",
        ],
    );
    assert_eq!(out.status.code(), Some(4));

    // Precondition: decoding with a key for different content.
    let out = run_in(
        &dir,
        &[
            "decode",
            "--in",
            "@plain.jpg",
            "--key",
            "@alice.dcfek",
            "--out",
            "@x.jpg",
        ],
    );
    assert_eq!(out.status.code(), Some(4));
}
