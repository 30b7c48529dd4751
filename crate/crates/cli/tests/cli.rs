use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hafit::ha_processor::{load_fitting, write_fitting, Fitting, FittingLabel, ANCHOR_FREQS_HZ};
use hafit::hearing_loss::Audiogram;
use hafit::prescriptions::write_audiogram;
use hafit::signal::{read_wav, rms, write_wav, WavEncoding};
use hafit::synth::{mix, speech, NoiseKind};
use tempfile::TempDir;

fn hafit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hafit")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_pair(clean_dir: &Path, noisy_dir: &Path, stem: &str, seed: u64) {
    std::fs::create_dir_all(clean_dir).unwrap();
    std::fs::create_dir_all(noisy_dir).unwrap();
    let c = speech(0.5, seed);
    let n = mix(&c, &NoiseKind::LowFrequency.generate(c.len(), seed + 100), 5.0).unwrap();
    write_wav(&c, clean_dir.join(format!("{stem}.wav")), WavEncoding::Float32).unwrap();
    write_wav(&n, noisy_dir.join(format!("{stem}.wav")), WavEncoding::Float32).unwrap();
}

/// `train/`, `val/` and `test/` directories with two utterances each under
/// the noise tag `lf`, plus a manifest.
fn split_corpus() -> (TempDir, PathBuf) {
    let dir = TempDir::new().unwrap();
    let mut seed = 0;
    for split in ["train", "val", "test"] {
        for i in 0..2 {
            let base = dir.path().join(split);
            write_pair(&base.join("clean"), &base.join("noisy/lf"), &format!("{split}{i}"), seed);
            seed += 1;
        }
    }
    let manifest = dir.path().join("manifest.toml");
    let o = hafit(&["ingest", path(dir.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    (dir, manifest)
}

fn tiny_config(dir: &Path) -> PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(
        &p,
        "schema_version = 1\naudiogram = \"N2\"\n[train]\nepochs = 1\nbatch_size = 2\ncrop_secs = 0.5\nval_every = 0\n",
    )
    .unwrap();
    p
}

#[test]
fn ingest_hash_is_stable() {
    let dir = TempDir::new().unwrap();
    for (i, stem) in ["a", "b", "c"].iter().enumerate() {
        write_pair(&dir.path().join("clean"), &dir.path().join("noisy"), stem, i as u64);
    }
    let first = hafit(&["ingest", path(dir.path())]);
    assert!(first.status.success(), "{}", stderr(&first));
    assert!(stdout(&first).starts_with("3 entries"), "{}", stdout(&first));
    let text = std::fs::read_to_string(dir.path().join("manifest.toml")).unwrap();

    let other = dir.path().join("again.toml");
    let second = hafit(&["ingest", path(dir.path()), "--out", path(&other)]);
    assert!(second.status.success());
    assert_eq!(std::fs::read_to_string(other).unwrap(), text);
}

#[test]
fn ingest_reports_orphans() {
    let dir = TempDir::new().unwrap();
    write_pair(&dir.path().join("clean"), &dir.path().join("noisy"), "a", 0);
    write_pair(&dir.path().join("spare"), &dir.path().join("noisy"), "lonely", 1);
    let o = hafit(&["ingest", path(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("lonely.wav"), "{}", stderr(&o));
}

#[test]
fn optimize_labels_follow_source_and_front_end() {
    let (dir, manifest) = split_corpus();
    let cfg = tiny_config(dir.path());
    for (source, front_end, label) in [
        ("clean", "none", FittingLabel::G),
        ("noisy", "none", FittingLabel::Cn),
        ("noisy", "wiener", FittingLabel::Cw),
    ] {
        let out = dir.path().join(format!("{source}-{front_end}"));
        let o = hafit(&[
            "optimize",
            "--config",
            path(&cfg),
            "--manifest",
            path(&manifest),
            "--source",
            source,
            "--front-end",
            front_end,
            "--out",
            path(&out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert_eq!(load_fitting(out.join("fitting.toml")).unwrap().label, label);
        let loss = std::fs::read_to_string(out.join("loss.csv")).unwrap();
        assert_eq!(loss.lines().count(), 2, "{loss}");
        assert!(std::fs::read_to_string(out.join("report.toml")).unwrap().contains("manifest_hash"));
    }
}

#[test]
fn evaluate_writes_one_row_per_fitting() {
    let (dir, manifest) = split_corpus();
    let csv = dir.path().join("eval.csv");
    let o = hafit(&[
        "evaluate",
        "--manifest",
        path(&manifest),
        "--audiogram",
        "N2",
        "--fitting",
        "nal-r",
        "--fitting",
        "nal-r+W",
        "--out",
        path(&csv),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3, "{text}");
    assert!(lines[1].starts_with("N2,lf,N,none,"), "{text}");
    assert!(lines[2].starts_with("N2,lf,N,wiener,"), "{text}");
    assert!(lines[1].ends_with(",2"));

    let o = hafit(&["evaluate", "--manifest", path(&manifest), "--fitting", "missing.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_zero_loss_is_transparent_and_n4_is_quieter() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("in.wav");
    let w = speech(1.0, 4);
    write_wav(&w, &input, WavEncoding::Float32).unwrap();
    let zero = dir.path().join("zero.toml");
    write_audiogram(&Audiogram::zero(), &zero).unwrap();

    let out = dir.path().join("zero.wav");
    let o = hafit(&["simulate", path(&input), "--audiogram", path(&zero), "--out", path(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let y = read_wav(&out).unwrap();
    let diff: Vec<f64> = y.samples().iter().zip(w.samples()).map(|(a, b)| a - b).collect();
    assert!(rms(&diff) < 0.05 * w.rms(), "{}", rms(&diff) / w.rms());

    let out = dir.path().join("n4.wav");
    let o = hafit(&["simulate", path(&input), "--audiogram", "N4", "--out", path(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(read_wav(&out).unwrap().rms() < 0.5 * w.rms());

    let o = hafit(&["simulate", "nope.wav", "--audiogram", "N4", "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn freq_response_tracks_the_fitting() {
    let dir = TempDir::new().unwrap();
    let flat = dir.path().join("flat.toml");
    write_fitting(&Fitting::flat(12.0), &flat).unwrap();
    let n2 = dir.path().join("n2.toml");
    let o = hafit(&["prescribe", "--audiogram", "N2", "--out", path(&n2)]);
    assert!(o.status.success(), "{}", stderr(&o));

    let read = |fitting: &Path| -> Vec<(f64, f64)> {
        let o = hafit(&["freq-response", path(fitting)]);
        assert!(o.status.success(), "{}", stderr(&o));
        stdout(&o)
            .lines()
            .skip(1)
            .map(|l| {
                let (f, g) = l.split_once(',').unwrap();
                (f.parse().unwrap(), g.parse().unwrap())
            })
            .collect()
    };
    let a = read(&flat);
    assert!(a.iter().all(|(_, g)| (g - 12.0).abs() < 0.1), "{a:?}");

    let b = read(&n2);
    assert_eq!(a.iter().map(|p| p.0).collect::<Vec<_>>(), b.iter().map(|p| p.0).collect::<Vec<_>>());
    let want = [0.0, 2.2, 12.75, 13.85, 15.95, 17.5];
    for (f, g) in ANCHOR_FREQS_HZ.iter().zip(want) {
        let (_, got) = b.iter().find(|(x, _)| (x - f).abs() < 1e-6).unwrap();
        assert!((got - g).abs() < 0.25, "{f} Hz: {got} vs {g}");
    }

    let o = hafit(&["freq-response", "absent.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_usage_exits_2() {
    assert_eq!(hafit(&["optimize", "--front-end", "magic"]).status.code(), Some(2));
    assert_eq!(hafit(&["prescribe", "--audiogram", "N9"]).status.code(), Some(2));
    assert_eq!(hafit(&["optimize"]).status.code(), Some(2));
}
