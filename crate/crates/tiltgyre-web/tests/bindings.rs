use serde_json::Value;
use tiltgyre::regime::{classify_frequency, validate, Parameters, Thresholds};
use tiltgyre_web::{kernel, regime, roots};

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn regime_reports_scales() {
    let v = parse(regime(0.01, 0.5, 0.0, 1.0, 2.0, -45.0));
    let sc = validate(&Parameters::new(0.01, 0.5, 0.0, 1.0, 2.0, -45f64.to_radians())).unwrap();
    assert_eq!(v["regime"], format!("{:?}", classify_frequency(&sc, &Thresholds::default())));
    assert!((v["low_threshold"].as_f64().unwrap() - sc.low_threshold()).abs() < 1e-12);
    assert!((v["beta"].as_f64().unwrap() - 10.0).abs() < 1e-9);
    assert!(v["munk_scale"].as_f64().unwrap() > 0.0);
}

#[test]
fn bad_exponent_comes_back_as_error() {
    let v = parse(regime(0.01, 1.2, 0.0, 1.0, 2.0, -45.0));
    assert!(v["error"].as_str().unwrap().contains("regime::"));
}

#[test]
fn roots_split_and_mirror() {
    let v = parse(roots(0.01, 0.5, 0.0, 1.0, 2.0, -45.0, 1.0, 1.0));
    let r = v["roots"].as_array().unwrap();
    assert_eq!(r.len(), 4);
    assert_eq!(r.iter().filter(|z| z[0].as_f64().unwrap() > 0.0).count(), 2);
    assert_eq!(v["mirror_roots"].as_array().unwrap().len(), 4);
}

#[test]
fn kernel_is_continuous_at_the_source() {
    let v = parse(kernel(0.01, 0.5, 0.0, 1.0, 2.0, -45.0, 1.0, 1.0, 1.0, 400));
    let z = v["z"].as_array().unwrap();
    let re = v["re"].as_array().unwrap();
    assert_eq!(z.len(), 401);
    // z = 0 is sample 200; its neighbours sit a step away on either side
    let mid = re[200].as_f64().unwrap();
    let scale = re.iter().map(|x| x.as_f64().unwrap().abs()).fold(0.0, f64::max);
    assert!((re[199].as_f64().unwrap() - mid).abs() < 0.05 * scale);
    assert!((re[201].as_f64().unwrap() - mid).abs() < 0.05 * scale);
}
