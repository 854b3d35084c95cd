use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn photocorr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_photocorr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SCENE: &str = r#"
[run]
frames = 20000

[scene]
grid_width = 40
grid_height = 16
normalization_alpha = 0.005

[[scene.objects]]
center = [6.5, 6.5]
emitter = { decay_rate_k = 0.1, two_photon_prob_p = 0.22, brightness_coeff = 2.0 }

[[scene.objects]]
center = [14.5, 9.5]
count = 2
emitter = { decay_rate_k = 0.1, two_photon_prob_p = 0.22, brightness_coeff = 2.0 }

[camera]
dark_event_rate = 0.001
image_offset_b = [20.0, 0.0]
"#;

struct Work {
    dir: tempfile::TempDir,
}

impl Work {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn file(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        fs::write(&p, text).unwrap();
        p
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let w = Work::new();
    let cfg = w.file("scene.toml", SCENE);
    let (a, b, c) = (w.path("a.pfs"), w.path("b.pfs"), w.path("c.pfs"));
    for (out, seed) in [(&a, "7"), (&b, "7"), (&c, "8")] {
        let o = photocorr(&[
            "simulate",
            "--config",
            s(&cfg),
            "--out",
            s(out),
            "--seed",
            seed,
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert!(stderr(&o).contains("20000 frames"));
    }
    let (a, b, c) = (
        fs::read(a).unwrap(),
        fs::read(b).unwrap(),
        fs::read(c).unwrap(),
    );
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(&a[0..4], b"PFS1");
}

#[test]
fn zero_frames_is_a_usage_error_and_writes_nothing() {
    let w = Work::new();
    let cfg = w.file("scene.toml", SCENE);
    let out = w.path("z.pfs");
    let o = photocorr(&[
        "simulate",
        "--config",
        s(&cfg),
        "--out",
        s(&out),
        "--seed",
        "1",
        "--frames",
        "0",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
    assert!(fs::read_dir(w.dir.path()).unwrap().count() == 1);
}

#[test]
fn missing_seed_and_unknown_flags_are_usage_errors() {
    let w = Work::new();
    let cfg = w.file("scene.toml", SCENE);
    let out = w.path("x.pfs");
    let o = photocorr(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("seed"));
    let o = photocorr(&["analyze", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_errors_name_the_line() {
    let w = Work::new();
    let cfg = w.file(
        "bad.toml",
        "[scene]\ngrid_width = 10\ngrid_height = 10\nshape = 1\n",
    );
    let o = photocorr(&[
        "simulate",
        "--config",
        s(&cfg),
        "--out",
        s(&w.path("o.pfs")),
        "--seed",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(3));
    let msg = stderr(&o);
    assert!(msg.contains("bad.toml") && msg.contains("line 4"), "{msg}");
}

#[test]
fn analyze_writes_the_object_table() {
    let w = Work::new();
    let cfg = w.file("scene.toml", SCENE);
    let stack = w.path("s.pfs");
    let out = w.path("objects.csv");
    let o = photocorr(&[
        "simulate",
        "--config",
        s(&cfg),
        "--out",
        s(&stack),
        "--seed",
        "3",
        "--frames",
        "200000",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = photocorr(&[
        "analyze",
        "--stack",
        s(&stack),
        "--regions",
        "auto",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "id,x,y,B,group,g2_raw,g2_norm,g2_corr,stderr,m_hat,confidence"
    );
    assert_eq!(lines.count(), 2);
    // the object table feeds straight into the classifier
    let classified = w.path("classified.csv");
    let o = photocorr(&[
        "classify",
        "--input",
        s(&out),
        "--out",
        s(&classified),
        "--b1",
        "1.0",
        "--g2-1",
        "0.43",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(fs::read_to_string(&classified)
        .unwrap()
        .starts_with("id,B,group,g2,g2_err,"));
}

#[test]
fn region_files_are_read_relative_to_the_config() {
    let w = Work::new();
    let cfg = w.file("scene.toml", SCENE);
    let stack = w.path("s.pfs");
    let o = photocorr(&[
        "simulate",
        "--config",
        s(&cfg),
        "--out",
        s(&stack),
        "--seed",
        "3",
    ]);
    assert_eq!(o.status.code(), Some(0));
    w.file("regions.toml", "[[object]]\nid = 5\na = [4, 4, 9, 9]\n");
    let acfg = w.file(
        "analysis.toml",
        "[analysis]\nregions = \"regions.toml\"\nbaseline_lag = 2\n",
    );
    let out = w.path("o.csv");
    let o = photocorr(&[
        "analyze",
        "--stack",
        s(&stack),
        "--config",
        s(&acfg),
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(&out).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("5,"), "{csv}");
}

#[test]
fn analyzing_an_empty_stack_fails_cleanly() {
    let w = Work::new();
    let cfg = w.file("empty.toml", "[scene]\ngrid_width = 16\ngrid_height = 16\n");
    let stack = w.path("e.pfs");
    let o = photocorr(&[
        "simulate",
        "--config",
        s(&cfg),
        "--out",
        s(&stack),
        "--seed",
        "1",
        "--frames",
        "100",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = w.path("o.csv");
    let o = photocorr(&["analyze", "--stack", s(&stack), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(5));
    assert!(stderr(&o).contains("no objects found"));
}

#[test]
fn corrupt_stacks_are_validation_errors() {
    let w = Work::new();
    let bad = w.file("bad.pfs", "not a stack at all, just some text");
    let o = photocorr(&["analyze", "--stack", s(&bad), "--out", s(&w.path("o.csv"))]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("magic"));
}

#[test]
fn threshold_sweep_on_binary_data_is_a_capability_error() {
    let w = Work::new();
    let cfg = w.file("scene.toml", SCENE);
    let stack = w.path("s.pfs");
    photocorr(&[
        "simulate",
        "--config",
        s(&cfg),
        "--out",
        s(&stack),
        "--seed",
        "1",
    ]);
    let o = photocorr(&[
        "sweep-threshold",
        "--stack",
        s(&stack),
        "--out",
        s(&w.path("t.csv")),
    ]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn nonclassical_report_for_a_lossy_fock_state() {
    let w = Work::new();
    let cfg = w.file("fock.toml", "[distribution]\nprobs = [0.25, 0.5, 0.25]\n");
    let out = w.path("n.csv");
    let o = photocorr(&["nonclassical", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "order,klyshko,chain_lhs,chain_rhs,nonclassical,implied_n"
    );
    assert_eq!(lines.next().unwrap(), "1,0.5,0.5,1,true,2");
}

#[test]
fn undefined_ratios_leave_the_cell_empty() {
    let w = Work::new();
    let cfg = w.file("fock.toml", "[distribution]\nprobs = [0.0, 0.0, 1.0]\n");
    let out = w.path("n.csv");
    let o = photocorr(&["nonclassical", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().nth(1).unwrap(), "1,,0.5,1,true,");
}

#[test]
fn fit_decay_recovers_the_parameters() {
    let w = Work::new();
    let cfg = w.file(
        "hbt.toml",
        "[hbt]\nemitter = { decay_rate_k = 0.1, two_photon_prob_p = 0.22, brightness_coeff = 1.0 }\nduration_ns = 2.0e7\n",
    );
    let out = w.path("d.csv");
    let o = photocorr(&[
        "fit-decay",
        "--config",
        s(&cfg),
        "--out",
        s(&out),
        "--seed",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(fs::read_to_string(&out)
        .unwrap()
        .starts_with("tau,count,g2,stderr,model\n"));
    let msg = stderr(&o);
    let k: f64 = msg
        .split("k = ")
        .nth(1)
        .unwrap()
        .split(' ')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!((k - 0.1).abs() < 0.01, "{msg}");
}

#[test]
fn sweep_gate_writes_one_row_per_gate() {
    let w = Work::new();
    let (head, tail) = SCENE.split_at(SCENE.rfind("[[scene.objects]]").unwrap());
    let single = format!("{head}{}", &tail[tail.find("[camera]").unwrap()..]);
    let cfg = w.file("scene.toml", &single);
    let out = w.path("g.csv");
    let o = photocorr(&[
        "sweep-gate",
        "--config",
        s(&cfg),
        "--out",
        s(&out),
        "--seed",
        "4",
        "--gates",
        "10,20,40",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "Tg,g2_mean,stderr,eq4_model");
    assert_eq!(csv.lines().count(), 4);
    assert!(
        csv.contains("\n10,") && csv.contains(",0.426108\n"),
        "{csv}"
    );
}

#[test]
fn classify_calibrates_from_dim_objects() {
    let w = Work::new();
    let input = w.file(
        "in.csv",
        "id,B,g2,g2_err\n1,1.0,0.44,0.03\n2,0.95,0.41,0.03\n3,1.05,0.43,0.03\n4,2.0,0.71,0.02\n5,4.1,0.86,0.02\n",
    );
    let out = w.path("c.csv");
    let o = photocorr(&["classify", "--input", s(&input), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(&out).unwrap();
    let m: Vec<&str> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(7).unwrap())
        .collect();
    assert_eq!(m, ["1", "1", "1", "2", "4"], "{csv}");
}
