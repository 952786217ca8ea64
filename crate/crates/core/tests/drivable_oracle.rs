//! Drivable-area check against dense corner sampling on convex corridors.

use cfdrive_core::checklist::check_drivable;
use cfdrive_core::scene::Pose2;
use cfdrive_core::RuleConfig;
use cfdrive_testkit::{drivable_oracle, random_convex_corridor, random_trajectory, rng, scene_from_parts};
use rand::Rng;

const CASES: usize = 1000;
const DENSE_DT: f64 = 0.001;
const BAND: f64 = 1e-6;

#[test]
fn corner_check_agrees_with_dense_oracle_on_convex_areas() {
    let cfg = RuleConfig::default();
    let mut r = rng(31);
    let (mut checked, mut exits, mut skipped) = (0, 0, 0);
    for i in 0..CASES {
        let traj = random_trajectory(&mut r);
        let area = random_convex_corridor(&mut r);
        let key = Pose2::new(r.random_range(-300.0..300.0), r.random_range(-300.0..300.0), r.random_range(-3.0..3.0));
        let scene = scene_from_parts(&format!("corr-{i}"), key, 0.0, &[], Some(area.clone()));
        let Ok(expected) = drivable_oracle(&traj, scene.ego_length, scene.ego_width, &area, DENSE_DT, BAND) else {
            skipped += 1;
            continue;
        };
        checked += 1;
        let got = check_drivable(&scene, &traj, &cfg);
        match (expected, got.first()) {
            (None, None) => {}
            (Some(t), Some(v)) => {
                exits += 1;
                assert!(v.time >= t - 1e-9 && v.time <= t + cfg.substep_dt + 1e-9, "case {i}: reported {} vs {t}", v.time);
            }
            (e, g) => panic!("case {i}: oracle {e:?}, checklist {g:?}\n{traj:?}\n{area:?}"),
        }
    }
    assert!(exits > 50 && exits < checked, "exits {exits} of {checked}");
    assert!(skipped * 20 < CASES, "skipped {skipped}");
}
