use super::*;
use crate::lambda::{signal_strength, LambdaMethod, WeightMode};

const IDENTITY: &str = r#"
name = "small"
m = 20
replicates = 40
seed = 7
k = [2, 5]
q = [0.1, 0.2]
lambda = "max"

[design]
kind = "identity"

[group_sizes]
fixed = [1, 2, 3]
"#;

fn scenario(text: &str) -> Scenario {
    Scenario::from_toml(text).unwrap()
}

#[test]
fn parses_defaults() {
    let s = scenario(IDENTITY);
    assert_eq!(s.design, DesignKind::Identity);
    assert_eq!(s.weights, WeightMode::SqrtRank);
    assert_eq!(s.sigma, SigmaMode::Known);
    assert_eq!(s.effect, EffectRule::SqrtRank);
    assert_eq!(s.lambda, LambdaMethod::Max);
    assert_eq!(s.full_size_factor, 5);
    assert_eq!(&s.group_sizes()[..5], &[1, 2, 3, 1, 2]);
    assert_eq!(s.clone().full_size().m, 100);
}

#[test]
fn schema_errors_name_the_field() {
    let bad = IDENTITY.replace("kind = \"identity\"", "kind = \"toeplitz\"");
    let err = Scenario::from_toml(&bad).unwrap_err().to_string();
    assert!(err.contains("design.kind"), "{err}");
    let err = Scenario::from_toml(&IDENTITY.replace("k = [2, 5]", "k = [2, 50]")).unwrap_err();
    assert!(err.to_string().contains("k = 50"));
    let err = Scenario::from_toml(&IDENTITY.replace("m = 20", "m = 20\ncolour = 1")).unwrap_err();
    assert!(err.to_string().contains("colour"));
    let err = Scenario::from_toml(&IDENTITY.replace("lambda = \"max\"", "lambda = \"median\"")).unwrap_err();
    assert!(err.to_string().contains("median"));
}

#[test]
fn binomial_sizes_are_positive_and_seeded() {
    let text = IDENTITY.replace("fixed = [1, 2, 3]", "binomial = { trials = 10, prob = 0.1 }");
    let s = scenario(&text);
    let sizes = s.group_sizes();
    assert_eq!(sizes.len(), 20);
    assert!(sizes.iter().all(|&l| l > 0));
    assert_eq!(sizes, s.group_sizes());
}

#[test]
fn identity_design_and_signal() {
    let mut s = scenario(IDENTITY);
    s.group_sizes = SizeLaw::Fixed(vec![3, 4]);
    s.m = 2;
    let mut rng = replicate_rng(1, 0, 0);
    let (x, partition) = gen_design(&s, &[3, 4], &mut rng).unwrap();
    assert_eq!(x, DMatrix::identity(7, 7));
    assert_eq!(partition.len(), 2);
    let design = standardize(&x, &partition, DEFAULT_RANK_TOL).unwrap();
    let (beta, relevant) = gen_signal(&design, &[2.0, 3.0], 1, &mut rng).unwrap();
    assert_eq!(relevant.len(), 1);
    let effects = crate::groups::group_effects(&x, &partition, &beta).unwrap();
    let g = relevant[0];
    assert!((effects.values()[g] - [2.0, 3.0][g]).abs() < 1e-12);
    assert_eq!(beta.iter().filter(|v| **v != 0.0).count(), 1);
    let (zero, none) = gen_signal(&design, &[2.0, 3.0], 0, &mut rng).unwrap();
    assert!(none.is_empty() && zero.iter().all(|v| *v == 0.0));
}

#[test]
fn gaussian_design_is_seeded_and_scaled() {
    let text = IDENTITY.replace("kind = \"identity\"", "kind = \"gaussian\"\nn = 400");
    let s = scenario(&text);
    let sizes = s.group_sizes();
    let (a, _) = gen_design(&s, &sizes, &mut replicate_rng(3, 0, 1)).unwrap();
    let (b, _) = gen_design(&s, &sizes, &mut replicate_rng(3, 0, 1)).unwrap();
    assert_eq!(a, b);
    let entries = a.len() as f64;
    let var = a.iter().map(|v| v * v).sum::<f64>() / entries;
    let se = (2.0 / entries).sqrt() / 400.0;
    assert!((var - 1.0 / 400.0).abs() < 3.0 * se, "{var}");

    let std_text = text.replace("n = 400", "n = 400\nstandardize = true");
    let (c, _) = gen_design(&scenario(&std_text), &sizes, &mut replicate_rng(3, 0, 1)).unwrap();
    for col in c.column_iter() {
        assert!(col.mean().abs() < 1e-12);
        assert!((col.norm() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn effect_rules() {
    let mut s = scenario(IDENTITY);
    let ranks = s.group_sizes();
    let strengths: Vec<f64> = ranks.iter().map(|&l| signal_strength(20, l).unwrap()).collect();
    let mean_b = strengths.iter().sum::<f64>() / 20.0;
    let calibrated = s.target_effects(&ranks).unwrap();
    let mean_a = calibrated.iter().sum::<f64>() / 20.0;
    assert!((mean_a - mean_b).abs() < 1e-10);
    let ratio = calibrated[2] / calibrated[0];
    assert!((ratio - 3f64.sqrt()).abs() < 1e-12);
    s.effect = EffectRule::Constant;
    assert_eq!(s.target_effects(&ranks).unwrap(), strengths);
    s.effect = EffectRule::MeanStrength;
    assert!(s
        .target_effects(&ranks)
        .unwrap()
        .iter()
        .all(|v| (v - mean_b).abs() < 1e-12));
}

#[test]
fn score_examples() {
    let empty = score(&[], &[1, 2]);
    assert_eq!((empty.rg, empty.vg, empty.fdp()), (0, 0, 0.0));
    let perfect = score(&[0, 1, 2], &[0, 1, 2]);
    assert_eq!((perfect.rg, perfect.vg, perfect.power(3)), (3, 0, 1.0));
    assert_eq!(score(&[1, 4], &[1, 2]).fdp(), 0.5);
}

#[test]
fn identity_rss_matches_dense_regression() {
    let y = [0.5, -1.0, 2.0, 0.3, 1.1];
    let offsets = [0, 2, 3, 5];
    let (rss, dof) = identity_rss(&y, &offsets, &[0]);
    let x = DMatrix::identity(5, 5);
    let (want, want_dof) = crate::sigma::ols_rss(&DVector::from_row_slice(&y), &x, &[0, 1], true).unwrap();
    assert!((rss - want).abs() < 1e-12);
    assert_eq!(dof, want_dof);
}

#[test]
fn single_replicate_reports_zero_se_with_warning() {
    let s = scenario(&IDENTITY.replace("replicates = 40", "replicates = 1"));
    let report = run_scenario(&s, &RunOptions::default()).unwrap();
    assert!(report.rows.iter().all(|r| r.gfdr_se == 0.0 && r.power_se == 0.0));
    assert!(!report.warnings.is_empty());
}

#[test]
fn reports_do_not_depend_on_worker_count() {
    let s = scenario(IDENTITY);
    let one = run_scenario(
        &s,
        &RunOptions {
            threads: Some(1),
            ..RunOptions::default()
        },
    )
    .unwrap();
    let three = run_scenario(
        &s,
        &RunOptions {
            threads: Some(3),
            ..RunOptions::default()
        },
    )
    .unwrap();
    assert_eq!(one.to_csv(), three.to_csv());
    assert_eq!(one.strg_csv(), three.strg_csv());
    assert_eq!(one.rows.len(), 4);
    assert!(one
        .rows
        .iter()
        .all(|r| (0.0..=1.0).contains(&r.gfdr) && (0.0..=1.0).contains(&r.power)));
    let strg = one.strg.as_ref().unwrap();
    assert_eq!(strg.len(), 4 * 3);
}

#[test]
fn estimated_sigma_identity_runs() {
    let s = scenario(&IDENTITY.replace("lambda = \"max\"", "lambda = \"max\"\nsigma = \"estimated\""));
    let report = run_scenario(&s, &RunOptions::default()).unwrap();
    assert!(report.rows.iter().all(|r| r.replicates + r.failures == 40));
}

#[test]
fn gaussian_scenario_runs() {
    let text = IDENTITY
        .replace("kind = \"identity\"", "kind = \"gaussian\"\nn = 120")
        .replace("lambda = \"max\"", "lambda = \"corrected-general\"")
        .replace("replicates = 40", "replicates = 6");
    let report = run_scenario(&scenario(&text), &RunOptions::default()).unwrap();
    assert_eq!(report.rows.len(), 4);
    assert!(report.rows.iter().all(|r| r.failures == 0));
}

#[test]
fn float_formatting_roundtrips() {
    for x in [
        0.0,
        1.0,
        0.1,
        2.5758293035489,
        1.962615573354719e-17,
        3e20,
        -4.5e-9,
        12345.678,
    ] {
        let text = format_float(x);
        assert_eq!(text.parse::<f64>().unwrap(), x);
        assert!(text.len() < 25, "{text}");
    }
    assert_eq!(format_float(1e-17), "1e-17");
    assert_eq!(format_float(0.05), "0.05");
}
