use cipd_web::{budget_view, histogram_view, staircase_view};
use serde_json::Value;

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn budget_view_matches_default_resolution_and_curve_is_non_negative() {
    let v = parse(budget_view(470.0, 1.0, 1.0, 10.0, 20.0).unwrap());
    let r = v["resolution_electrons"].as_f64().unwrap();
    assert!((r - 0.387).abs() < 0.005, "{r}");
    let curve = v["integrand"].as_array().unwrap();
    assert_eq!(curve.len(), v["frequency_hz"].as_array().unwrap().len());
    assert!(curve.iter().all(|x| x.as_f64().unwrap() >= 0.0));
}

#[test]
fn budget_view_rejects_invalid_input() {
    assert!(budget_view(470.0, 1.0, 1.0, 2000.0, 20.0).is_err());
    assert!(budget_view(-1.0, 1.0, 1.0, 10.0, 20.0).is_err());
}

#[test]
fn noiseless_staircase_counts_are_carriers_plus_dark_arrivals() {
    let v = parse(staircase_view(6.0, 30, 0.0, false, 0.8, 4).unwrap());
    let ints = |key: &str| -> Vec<u64> { v[key].as_array().unwrap().iter().map(|x| x.as_u64().unwrap()).collect() };
    let (counts, carriers) = (ints("counts"), ints("carriers"));
    assert!(counts.iter().zip(&carriers).all(|(c, n)| c >= n));
    let excess: u64 = counts.iter().sum::<u64>() - carriers.iter().sum::<u64>();
    assert!(excess <= v["dark_carriers"].as_u64().unwrap());
    assert_eq!(v["pulse_starts"].as_array().unwrap().len(), 30);
    assert_eq!(v["volts"].as_array().unwrap().len(), 30 * 200);
}

#[test]
fn histogram_view_is_consistent() {
    let v = parse(histogram_view(9.89, 300, 291.0, 2).unwrap());
    let observed: u64 = v["observed"].as_array().unwrap().iter().map(|x| x.as_u64().unwrap()).sum();
    let expected: f64 = v["expected"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
    assert_eq!(observed, 300);
    assert!((expected - 300.0).abs() < 1e-6);
    assert!((v["lambda_hat"].as_f64().unwrap() - 9.89).abs() < 4.0 * (9.89f64 / 300.0).sqrt());
}
