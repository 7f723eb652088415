use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use tiltgyre::cli_io::{zero_isolines, FieldSlice};

const BIN: &str = env!("CARGO_BIN_EXE_tiltgyre");

fn small_config(extra_forcing: &str, amplitude: &str, alpha: f64) -> String {
    format!(
        r#"
[regime]
epsilon = 0.01
a = 0.5
b = 0.0
d = 1.0
e = 2.0
alpha_degrees = {alpha}

[forcing]
x_width = 2.0
x_center = 3.0
y_width = 2.0
gamma = 1.0
amplitude = {amplitude}
{extra_forcing}

[grid]
lx = 16.0
ly = 16.0
nx = 32
ny = 32

[solve]
kappa = 0.25
x1_span = 8.0
nx1 = 40

[output]
dir = "unused"
"#
    )
}

fn run(dir: &Path, cfg: &str, args: &[&str]) -> Output {
    let path = dir.join("run.toml");
    fs::write(&path, cfg).unwrap();
    Command::new(BIN)
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .args(args)
        .output()
        .unwrap()
}

fn slice(dir: &Path) -> FieldSlice {
    FieldSlice::parse(&fs::read_to_string(dir.join("out/psi_x3_0.txt")).unwrap()).unwrap()
}

#[test]
fn minimal_config_writes_manifest_and_slice() {
    let t = tempfile::tempdir().unwrap();
    let o = run(t.path(), &small_config("", "[1.0, 0.5]", -45.0), &["solve"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(t.path().join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["gates"]["no_slip"], true);
    assert!(m["thresholds"]["theta_lo"].is_number());
    assert!(m["files"].as_array().unwrap().iter().any(|f| f == "psi_x3_0.txt"));
    let s = slice(t.path());
    assert_eq!((s.x1.len(), s.x2.len()), (40, 32));
    assert!(s.psi.iter().all(|v| v.is_finite()) && s.max_abs() > 0.0);
    assert!(s.x1.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn out_of_range_exponent_is_named() {
    let t = tempfile::tempdir().unwrap();
    let cfg = small_config("", "[1.0, 0.5]", -45.0).replace("a = 0.5", "a = 1.2");
    let o = run(t.path(), &cfg, &["solve"]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("a<1"), "{err}");
    assert!(err.contains("regime::"), "{err}");
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = small_config("", "[1.0, 0.5]", -45.0);
    assert!(run(a.path(), &cfg, &["--threads", "1", "solve"]).status.success());
    assert!(run(b.path(), &cfg, &["--threads", "3", "solve"]).status.success());
    for f in ["psi_x3_0.txt", "amplitudes.txt", "coefficients.txt", "manifest.json"] {
        let x = fs::read(a.path().join("out").join(f)).unwrap();
        let y = fs::read(b.path().join("out").join(f)).unwrap();
        assert!(x == y, "{f} differs");
    }
}

#[test]
fn odd_forcing_gives_odd_leading_stream_function() {
    let t = tempfile::tempdir().unwrap();
    let cfg = small_config("y_wavenumber = 0.5", "[0.0, 1.0]", -8.0);
    let o = run(t.path(), &cfg, &["solve", "--order", "0"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = slice(t.path());
    let ny = s.x2.len();
    let scale = s.max_abs();
    assert!(scale > 0.0);
    for i in 0..s.x1.len() {
        for j in 0..ny {
            let d = s.at(i, j) + s.at(i, (ny - j) % ny);
            assert!(d.abs() <= 1e-8 * scale, "defect {d:e} at ({i}, {j})");
        }
    }
    // the zero set contains x2 = 0 across the whole slice (other branches
    // meet it at saddles, so no single polyline is singled out)
    let on_axis: Vec<f64> =
        zero_isolines(&s).iter().flatten().filter(|p| p.1.abs() <= 1e-9).map(|p| p.0).collect();
    let h = s.x1[1] - s.x1[0];
    let lo = on_axis.iter().cloned().fold(f64::MAX, f64::min);
    let hi = on_axis.iter().cloned().fold(f64::MIN, f64::max);
    assert!(lo <= s.x1[0] + h && hi >= s.x1[s.x1.len() - 1] - h, "x2 = 0 covered on [{lo}, {hi}]");
}

#[test]
fn zero_forcing_has_no_isolines() {
    let t = tempfile::tempdir().unwrap();
    let o = run(t.path(), &small_config("", "[0.0, 0.0]", -45.0), &["solve"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = slice(t.path());
    assert_eq!(s.max_abs(), 0.0);
    assert!(zero_isolines(&s).is_empty());
}

#[test]
fn figure_needs_both_runs() {
    let t = tempfile::tempdir().unwrap();
    let o = Command::new(BIN)
        .args(["figure", "--reference"])
        .arg(t.path().join("nope"))
        .arg("--sloped")
        .arg(t.path().join("nope2"))
        .arg("--out")
        .arg(t.path().join("fig"))
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("MissingRun"));
}

#[test]
fn figure_from_two_runs() {
    let flat = tempfile::tempdir().unwrap();
    let sloped = tempfile::tempdir().unwrap();
    let forcing = "y_wavenumber = 0.5";
    assert!(run(flat.path(), &small_config(forcing, "[1.0, 0.0]", -8.0), &["solve"]).status.success());
    assert!(run(sloped.path(), &small_config(forcing, "[1.0, 0.0]", -45.0), &["solve"]).status.success());
    let out = flat.path().join("fig");
    let o = Command::new(BIN)
        .arg("figure")
        .arg("--reference")
        .arg(flat.path().join("out"))
        .arg("--sloped")
        .arg(sloped.path().join("out"))
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["reference_psi.txt", "sloped_isolines.txt", "plot_separation.py", "figure.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn inspection_subcommands_run() {
    let t = tempfile::tempdir().unwrap();
    let cfg = small_config("", "[1.0, 0.5]", -45.0);
    for (cmd, file) in [("roots", "roots.txt"), ("green", "green.txt"), ("ekman", "ekman.txt")] {
        let o = run(t.path(), &cfg, &[cmd]);
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        let text = fs::read_to_string(t.path().join("out").join(file)).unwrap();
        assert!(text.lines().count() > 10, "{cmd}");
    }
    let o = run(t.path(), &cfg, &["--seed", "5", "check"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(t.path(), &cfg, &["cascade", "--K", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("residual(2)/residual(1)"));
}
