//! Language and open-loop metrics on small fixtures with known answers.

use cfdrive_core::checklist::Category;
use cfdrive_core::metrics::{
    cider, collision_rate, composite_score, counterfactual_pr, counterfactual_pr_sets, extract_keywords, intersection_rate,
    l2_at_horizons, open_loop_report, render_categories,
};
use cfdrive_core::scene::Pose2;
use cfdrive_core::{RuleConfig, Trajectory, Vec2};
use cfdrive_testkit::{scene_from_parts, Motion};
use std::collections::{BTreeMap, BTreeSet};

fn set(c: &[Category]) -> BTreeSet<Category> {
    c.iter().copied().collect()
}

fn strings(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

fn refs(pairs: &[(&str, &[&str])]) -> BTreeMap<String, Vec<String>> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.iter().map(|s| s.to_string()).collect())).collect()
}

#[test]
fn cider_matches_frozen_reference_values() {
    // values from tests/fixtures/cider_reference.py
    let cands = strings(&[
        ("a", "the ego car waits at the red light behind a truck"),
        ("b", "a pedestrian crosses in front of the ego vehicle"),
        ("c", "the road curves left with parked cars on the right"),
    ]);
    let r = refs(&[
        ("a", &["the ego vehicle is stopped at a red light behind a truck", "ego waits for the red light"]),
        ("b", &["a pedestrian is crossing the road in front of the ego car"]),
        ("c", &["the road bends to the left and cars are parked on the right side", "a left curve with parked cars"]),
    ]);
    let rep = cider(&cands, &r);
    let want = [("a", 3.4181861766882786), ("b", 4.496989414797824), ("c", 2.6011667255350845)];
    for (id, v) in want {
        assert!((rep.scores[id] - v).abs() < 1e-9, "{id}: {} vs {v}", rep.scores[id]);
    }
    assert!((rep.mean - 3.5054474390070625).abs() < 1e-9);
}

#[test]
fn cider_identical_candidate_scores_ten() {
    let cands = strings(&[("x", "alpha beta gamma delta"), ("y", "one two three four five")]);
    let r = refs(&[("x", &["alpha beta gamma delta"]), ("y", &["one two three four five"])]);
    let rep = cider(&cands, &r);
    assert!((rep.scores["x"] - 10.0).abs() < 1e-9);
    assert!((rep.scores["y"] - 10.0).abs() < 1e-9);
}

#[test]
fn pr_with_one_false_positive_and_one_false_negative() {
    // 9 true collisions, 1 miss, 1 false alarm
    let mut preds = vec![set(&[Category::Collision]); 9];
    let mut gts = vec![set(&[Category::Collision]); 9];
    preds.push(set(&[Category::Safety]));
    gts.push(set(&[Category::Collision]));
    preds.push(set(&[Category::Collision]));
    gts.push(set(&[Category::Safety]));
    let pr = counterfactual_pr_sets(&preds, &gts);
    let c = &pr.per_category[&Category::Collision];
    assert!((c.precision.unwrap() - 0.9).abs() < 1e-12);
    assert!((c.recall.unwrap() - 0.9).abs() < 1e-12);
    assert_eq!(pr.per_category[&Category::RedLight].precision, None);
    assert!(pr.has_undefined());
}

#[test]
fn closed_loop_rendered_answers_score_perfectly() {
    let gts = vec![
        set(&[Category::Safety]),
        set(&[Category::Collision]),
        set(&[Category::RedLight, Category::DrivableArea]),
        set(&[Category::Collision, Category::RedLight]),
    ];
    let answers: Vec<String> = gts.iter().map(render_categories).collect();
    let pr = counterfactual_pr(&answers, &gts);
    for (cat, c) in &pr.per_category {
        assert_eq!(c.precision, Some(1.0), "{cat}");
        assert_eq!(c.recall, Some(1.0), "{cat}");
    }
}

/// Hand-labelled answers.
const LABELLED: &[(&str, &[Category])] = &[
    ("This maneuver is safe.", &[Category::Safety]),
    ("It would lead to a collision with the truck ahead.", &[Category::Collision]),
    ("The car would crash into the barrier.", &[Category::Collision]),
    ("You would be running a red light.", &[Category::RedLight]),
    ("Passing the red traffic light is illegal here.", &[Category::RedLight]),
    ("The vehicle would end up out of the drivable area.", &[Category::DrivableArea]),
    ("This path goes off the road near the curb.", &[Category::DrivableArea]),
    ("Crossing the road boundary is likely.", &[Category::DrivableArea]),
    ("There is no collision risk, so it is SAFE.", &[Category::Safety]),
    ("It would collide with the cyclist and then leave the road.", &[Category::Collision, Category::DrivableArea]),
    ("Without any crash, the trajectory remains safe.", &[Category::Safety]),
    ("Not a red light violation.", &[]),
    ("Never mind the turn, it leaves the drivable area.", &[Category::DrivableArea]),
    ("The car will never leave the road.", &[]),
    ("Colliding with the pedestrian while running a red signal.", &[Category::Collision, Category::RedLight]),
    ("Keep lane and proceed.", &[]),
    ("Safely stopping avoids a collision.", &[Category::Safety]),
    ("Red lights ahead; the plan runs red lights and crashes.", &[Category::Collision, Category::RedLight]),
    ("The redlight camera is irrelevant.", &[]),
    ("Unsafe crossing.", &[]),
];

#[test]
fn keywords_on_hand_labelled_answers() {
    assert_eq!(LABELLED.len(), 20);
    for (text, want) in LABELLED {
        assert_eq!(extract_keywords(text), set(want), "{text}");
        assert_eq!(extract_keywords(&text.to_uppercase()), set(want), "{text}");
        let again = extract_keywords(&render_categories(&extract_keywords(text)));
        assert_eq!(again, set(want), "{text}");
    }
}

#[test]
fn composite_weights() {
    assert!((composite_score(10.0, 5.0, 0.0, 0.0) - 5.0).abs() < 1e-12);
    assert!((composite_score(0.0, 1.0, 1.0, 1.0) - 0.6).abs() < 1e-12);
}

fn straight(speed: f64) -> Trajectory {
    let pts: Vec<(f64, f64)> = (1..=6).map(|k| (speed * 0.5 * k as f64, 0.0)).collect();
    Trajectory::from_positions(0.5, &pts).unwrap()
}

#[test]
fn l2_zero_for_identical_and_symmetric() {
    let a = straight(8.0);
    let b = Trajectory::from_positions(0.5, &[(4.0, 0.0), (8.0, 1.0), (12.0, 0.0), (16.0, 2.0), (20.0, 0.0), (24.0, -3.0)]).unwrap();
    let same = l2_at_horizons(&a, &a).unwrap();
    assert_eq!(same.at, [0.0; 3]);
    let ab = l2_at_horizons(&a, &b).unwrap();
    assert_eq!(ab, l2_at_horizons(&b, &a).unwrap());
    assert_eq!(ab.at, [1.0, 2.0, 3.0]);
    assert!((ab.avg - 2.0).abs() < 1e-12);
}

#[test]
fn one_collision_in_four_samples() {
    let cfg = RuleConfig::default();
    let cone = Motion {
        id: "block".into(),
        p0: Vec2::new(15.0, 0.0),
        v: Vec2::new(0.0, 0.0),
        yaw: 0.0,
        length: 1.0,
        width: 1.0,
    };
    let key = Pose2::new(30.0, -12.0, 0.7);
    let hit = scene_from_parts("hit", key, 5.0, &[cone.clone()], None);
    let clear: Vec<_> = (0..3)
        .map(|i| scene_from_parts(&format!("clear-{i}"), key, 5.0, &[Motion { p0: Vec2::new(15.0, 8.0), ..cone.clone() }], None))
        .collect();
    let t = straight(10.0);
    let samples: Vec<_> = std::iter::once(&hit).chain(&clear).map(|s| (s, &t)).collect();
    let rate = collision_rate(&samples, &cfg);
    // front bumper reaches the block at 1.246 s, reported at 1.3 s
    assert_eq!(rate.at, [0.0, 25.0, 25.0]);
    assert_eq!(intersection_rate(&samples, &cfg).at, [0.0; 3]);
    // monotone in the horizon
    assert!(rate.at.windows(2).all(|w| w[0] <= w[1]));

    let triples: Vec<_> = samples.iter().map(|(s, t)| (*s, *t, *t)).collect();
    let rep = open_loop_report(&triples, &cfg).unwrap();
    assert_eq!(rep.l2.at, [0.0; 3]);
    assert_eq!(rep.collision.at, [0.0, 25.0, 25.0]);
    assert!(!rep.has_undefined());
    assert!(open_loop_report(&[], &cfg).unwrap().has_undefined());
}
