mod common;

use std::collections::HashSet;

use commlevels::retrieval::{fade_factor, train, ForestConfig, Label, RelevanceModel, Score, FADE_FLOOR};
use common::*;

#[test]
fn two_gaussians_held_out_accuracy() {
    let mut rng = rng(42);
    let train_set = two_gaussians(&mut rng, 40, "train");
    let test_set = two_gaussians(&mut rng, 200, "test");
    let model = train(&train_set, &ForestConfig::default()).unwrap();
    let correct = test_set
        .iter()
        .filter(|e| {
            let p = model.score(&e.features).p;
            let predicted = if p >= 0.5 { Label::Relevant } else { Label::Irrelevant };
            predicted == e.label
        })
        .count();
    assert!(correct as f64 / 200.0 >= 0.95, "{correct}/200");
}

#[test]
fn serialization_is_deterministic() {
    let mut rng = rng(3);
    let examples = two_gaussians(&mut rng, 40, "x");
    let config = ForestConfig { seed: 11, ..Default::default() };
    let a = train(&examples, &config).unwrap().to_json();
    let mut shuffled = examples.clone();
    shuffled.reverse();
    let b = train(&shuffled, &config).unwrap().to_json();
    assert_eq!(a, b);
    let back = RelevanceModel::from_json(&a).unwrap();
    assert_eq!(back.to_json(), a);
    let other = train(&examples, &ForestConfig { seed: 12, ..Default::default() }).unwrap().to_json();
    assert_ne!(a, other);
}

#[test]
fn uncertainty_peaks_at_even_vote() {
    assert_eq!(Score::from_p(0.5).uncertainty, 1.0);
    assert_eq!(Score::from_p(0.0).uncertainty, 0.0);
    assert_eq!(Score::from_p(1.0).uncertainty, 0.0);
}

#[test]
fn fade_is_monotone_with_floor() {
    for threshold in [0.25, 0.5, 0.75, 1.0] {
        let mut last = f64::NEG_INFINITY;
        for k in 0..=100 {
            let p = k as f64 / 100.0;
            let f = fade_factor(p, threshold);
            assert!(f >= last - 1e-15, "threshold {threshold}, p {p}");
            assert!((FADE_FLOOR..=1.0).contains(&f));
            if p >= threshold {
                assert_eq!(f, 1.0);
            }
            last = f;
        }
        assert_eq!(fade_factor(0.0, threshold), FADE_FLOOR);
    }
}

#[test]
fn ranking_skips_labeled_targets() {
    let mut rng = rng(5);
    let model = train(&two_gaussians(&mut rng, 40, "t"), &ForestConfig::default()).unwrap();
    let targets: Vec<(String, Vec<f64>)> = (0..30)
        .map(|i| (format!("c{i:02}"), vec![-3.0 + 0.2 * i as f64, -3.0 + 0.2 * i as f64]))
        .collect();
    let labeled: HashSet<String> = ["c15".to_string()].into();
    let ranked = commlevels::retrieval::rank_ambiguous(&model, &targets, &labeled, 5);
    assert_eq!(ranked.len(), 5);
    assert!(!ranked.contains(&"c15".to_string()));
    let u: Vec<f64> = ranked
        .iter()
        .map(|id| model.score(&targets.iter().find(|t| &t.0 == id).unwrap().1).uncertainty)
        .collect();
    assert!(u.windows(2).all(|w| w[0] >= w[1]));
}
