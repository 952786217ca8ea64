//! HTTP contract of the review service on the corridor fixture.

use axum::body::Body;
use axum::http::{Request, StatusCode};
use cfdrive_core::artifacts::{self, SceneQa, SceneVerdicts, TrajectoryVerdict};
use cfdrive_core::checklist::Category;
use cfdrive_core::maneuver::{ManeuverLibrary, EXPERT_ID};
use cfdrive_core::promptqa::{build_bundle, generate_qa, ConversationType, QAItem, QaBackend};
use cfdrive_core::{load_scene, LoadOptions, RuleConfig};
use cfdrive_review::{export_reviewed, router, AppState, ReviewData, ServiceConfig};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use tower::ServiceExt;

fn core_fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

/// Scenes dir with the corridor scene and an output dir with its verdicts
/// and template QA.
fn workspace(root: &Path) -> ServiceConfig {
    let scenes = root.join("scenes");
    let out = root.join("out");
    std::fs::create_dir_all(&scenes).unwrap();
    std::fs::copy(core_fixture("corridor.json"), scenes.join("corridor.json")).unwrap();
    let scene = load_scene(scenes.join("corridor.json"), LoadOptions::default()).unwrap();
    let lib = ManeuverLibrary::load(core_fixture("corridor_library.json")).unwrap();
    let cfg = RuleConfig::default();
    let bundle = build_bundle(&scene, Some(&lib), 8, false, &cfg).unwrap();
    let verdicts = SceneVerdicts {
        scene_id: scene.scene_id.clone(),
        expert: TrajectoryVerdict {
            id: EXPERT_ID.into(),
            trajectory: bundle.expert.clone(),
            verdict: bundle.expert_verdict.clone(),
        },
        candidates: bundle
            .candidates
            .iter()
            .zip(&bundle.verdicts)
            .map(|(c, v)| TrajectoryVerdict {
                id: c.id.clone(),
                trajectory: c.trajectory.clone(),
                verdict: v.clone(),
            })
            .collect(),
    };
    artifacts::write_json(&artifacts::verdicts_path(&out, &scene.scene_id), &verdicts).unwrap();
    let items = generate_qa(&bundle, &ConversationType::ALL, QaBackend::Template);
    artifacts::write_json(
        &artifacts::qa_path(&out, &scene.scene_id),
        &SceneQa {
            scene_id: scene.scene_id.clone(),
            items,
        },
    )
    .unwrap();
    ServiceConfig {
        scenes_dir: scenes,
        out_dir: out,
        log_path: root.join("reviews.jsonl"),
        ui_dir: None,
        bind: "127.0.0.1:0".parse().unwrap(),
        cors_origin: None,
    }
}

struct Client {
    state: Arc<AppState>,
    app: axum::Router,
}

impl Client {
    fn start(cfg: &ServiceConfig) -> Self {
        let state = Arc::new(AppState::open(cfg).unwrap());
        let app = router(state.clone(), cfg.ui_dir.as_deref(), cfg.cors_origin.as_deref());
        Self { state, app }
    }

    async fn call(&self, req: Request<Body>) -> (StatusCode, Value) {
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap_or(Value::Null) };
        (status, v)
    }

    async fn get(&self, uri: &str) -> (StatusCode, Value) {
        self.call(Request::get(uri).body(Body::empty()).unwrap()).await
    }

    async fn post(&self, body: Value) -> (StatusCode, Value) {
        self.call(
            Request::post("/reviews")
                .header("content-type", "application/json")
                .header("x-reviewer", "ana")
                .body(Body::from(body.to_string()))
                .unwrap(),
        )
        .await
    }
}

const SCENE: &str = "corridor-0001";

fn item_ids(state: &AppState) -> Vec<String> {
    state.data.order.clone()
}

#[tokio::test]
async fn scene_payload_is_ego_frame_with_verdict_categories() {
    let dir = tempfile::tempdir().unwrap();
    let c = Client::start(&workspace(dir.path()));
    let (s, list) = c.get("/scenes").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(list["scenes"][0]["scene_id"], SCENE);
    assert_eq!(list["scenes"][0]["unsafe_trajectories"], 1);

    let (s, p) = c.get(&format!("/scenes/{SCENE}")).await;
    assert_eq!(s, StatusCode::OK);
    let agents = p["agents"].as_array().unwrap();
    let cone = agents.iter().find(|a| a["id"] == "cone-1").unwrap();
    assert!((cone["position"]["x"].as_f64().unwrap() - 8.2).abs() < 1e-6);
    assert!((cone["position"]["y"].as_f64().unwrap() - 2.4).abs() < 1e-6);
    let trajs = p["trajectories"].as_array().unwrap();
    assert_eq!(trajs[0]["role"], "expert");
    assert_eq!(trajs[0]["points"][0], json!({"x": 0.0, "y": 0.0}));
    assert_eq!(trajs[0]["categories"], json!(["safety"]));
    assert!(trajs.iter().any(|t| t["categories"] == json!(["drivable area"])));
    // colour keys: one per engine category, no duplicates
    let keys: Vec<Category> = serde_json::from_value(p["category_keys"].clone()).unwrap();
    assert_eq!(keys, Category::ALL);

    assert_eq!(c.get("/scenes/nope").await.0, StatusCode::NOT_FOUND);
    assert_eq!(c.get("/scenes/nope/qa").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn accept_reject_edit_flow_and_conflicts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = workspace(dir.path());
    let c = Client::start(&cfg);
    let ids = item_ids(&c.state);
    let (_, s0) = c.get("/stats").await;
    let total = s0["total"].as_u64().unwrap();
    assert_eq!(s0["pending"], total);

    let (s, r) = c.post(json!({"item_id": ids[0], "revision": 1, "verdict": {"kind": "accept"}})).await;
    assert_eq!(s, StatusCode::OK, "{r}");
    assert_eq!(r["review_state"]["state"], "accepted");
    let (_, s1) = c.get("/stats").await;
    assert_eq!(s1["pending"], total - 1);
    assert_eq!(s1["accepted"], 1);

    // replaying the same revision conflicts and leaves the log alone
    let log_before = std::fs::read(&cfg.log_path).unwrap();
    let (s, r) = c.post(json!({"item_id": ids[0], "revision": 1, "verdict": {"kind": "reject"}})).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(r["current_revision"], 1);
    assert_eq!(std::fs::read(&cfg.log_path).unwrap(), log_before);

    let (s, _) = c
        .post(json!({"item_id": ids[1], "revision": 1, "verdict": {"kind": "edit", "text": "Better answer."}, "gap_tags": ["missed signal"]}))
        .await;
    assert_eq!(s, StatusCode::OK);
    let (s, _) = c.post(json!({"item_id": ids[2], "revision": 1, "verdict": {"kind": "reject"}, "gap_tags": ["missed signal", "wrong lane"]})).await;
    assert_eq!(s, StatusCode::OK);
    let (_, st) = c.get("/stats").await;
    assert_eq!((st["accepted"].as_u64(), st["edited"].as_u64(), st["rejected"].as_u64()), (Some(1), Some(1), Some(1)));
    assert_eq!(st["gap_tags"], json!({"missed signal": 2, "wrong lane": 1}));

    let (_, qa) = c.get(&format!("/scenes/{SCENE}/qa")).await;
    let first = &qa["items"][0];
    assert_eq!(first["revision"], 1);
    assert_eq!(first["review_state"]["state"], "accepted");
    assert_eq!(first["last_decision"]["reviewer"], "ana");

    // a later revision overrides the earlier one
    let (s, _) = c.post(json!({"item_id": ids[0], "revision": 2, "verdict": {"kind": "reject"}})).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(c.get("/stats").await.1["accepted"], 0);
}

#[tokio::test]
async fn bad_bodies_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let c = Client::start(&workspace(dir.path()));
    let ids = item_ids(&c.state);

    let (s, r) = c.post(json!({"item_id": ids[0], "revision": "one", "verdict": {"kind": "accept"}})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(r["errors"][0]["field"], "revision");
    let (s, r) = c.post(json!({"item_id": ids[0], "revision": 1, "verdict": {"kind": "maybe"}})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(r["errors"][0]["field"], "verdict.kind");
    let (s, r) = c.post(json!({"item_id": ids[0], "revision": 1, "verdict": {"kind": "edit", "text": "  "}})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(r["errors"][0]["field"], "verdict.text");
    let (s, r) = c.post(json!({"item_id": ids[0], "revision": 1, "verdict": {"kind": "accept"}, "extra": 1})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST, "{r}");
    let (s, _) = c.post(json!({"item_id": "nope:general:0", "revision": 1, "verdict": {"kind": "accept"}})).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = c
        .call(Request::post("/reviews").header("content-type", "application/json").body(Body::from("{")).unwrap())
        .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(c.get("/stats").await.1["pending"], c.get("/stats").await.1["total"]);
}

#[tokio::test]
async fn restart_replays_log_to_identical_state() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = workspace(dir.path());
    let (before, qa_before) = {
        let c = Client::start(&cfg);
        let ids = item_ids(&c.state);
        for (i, id) in ids.iter().enumerate() {
            let verdict = match i % 3 {
                0 => json!({"kind": "accept"}),
                1 => json!({"kind": "reject"}),
                _ => json!({"kind": "edit", "text": format!("edited {i}")}),
            };
            let (s, _) = c.post(json!({"item_id": id, "revision": 1, "verdict": verdict, "gap_tags": [format!("t{}", i % 2)]})).await;
            assert_eq!(s, StatusCode::OK);
        }
        (c.get("/stats").await.1, c.get(&format!("/scenes/{SCENE}/qa")).await.1)
    };
    let c = Client::start(&cfg);
    assert_eq!(c.get("/stats").await.1, before);
    assert_eq!(c.get(&format!("/scenes/{SCENE}/qa")).await.1, qa_before);
}

#[tokio::test]
async fn export_keeps_accepted_and_edited_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = workspace(dir.path());
    let c = Client::start(&cfg);
    let ids = item_ids(&c.state);
    let out = dir.path().join("export/reviewed.json");

    let empty = export_reviewed(&c.state.data, &c.state.book(), &out).unwrap();
    assert_eq!(empty.exported, 0);
    assert!(empty.warning.is_some());

    for (id, verdict) in [
        (&ids[0], json!({"kind": "accept"})),
        (&ids[1], json!({"kind": "accept"})),
        (&ids[2], json!({"kind": "edit", "text": "Edited answer."})),
        (&ids[3], json!({"kind": "reject"})),
    ] {
        let (s, _) = c.post(json!({"item_id": id, "revision": 1, "verdict": verdict, "gap_tags": ["g"]})).await;
        assert_eq!(s, StatusCode::OK);
    }
    let sum = export_reviewed(&c.state.data, &c.state.book(), &out).unwrap();
    assert_eq!(sum.exported, 3);
    assert!(sum.warning.is_none());
    let first = std::fs::read(&out).unwrap();
    let items: Vec<QAItem> = serde_json::from_slice(&first).unwrap();
    let got: Vec<&str> = items.iter().map(|q| q.id.as_str()).collect();
    assert_eq!(got, [&ids[0], &ids[1], &ids[2]]);
    assert_eq!(items[2].answer, "Edited answer.");
    let gaps: Value = serde_json::from_slice(&std::fs::read(&sum.gap_tags_path).unwrap()).unwrap();
    assert_eq!(gaps, json!({"g": 4}));

    export_reviewed(&c.state.data, &c.state.book(), &out).unwrap();
    assert_eq!(std::fs::read(&out).unwrap(), first);

    // the same export from a fresh load of data and log
    let data = ReviewData::load(&cfg.scenes_dir, &cfg.out_dir).unwrap();
    let state = AppState::new(data, &cfg.log_path).unwrap();
    let again = dir.path().join("export/again.json");
    export_reviewed(&state.data, &state.book(), &again).unwrap();
    assert_eq!(std::fs::read(&again).unwrap(), first);
}

#[tokio::test]
async fn cors_and_static_ui() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = workspace(dir.path());
    let ui = dir.path().join("ui");
    std::fs::create_dir_all(&ui).unwrap();
    std::fs::write(ui.join("index.html"), "<html>review</html>").unwrap();
    cfg.ui_dir = Some(ui);
    cfg.cors_origin = Some("http://localhost:5173".into());
    let c = Client::start(&cfg);
    let resp = c
        .app
        .clone()
        .oneshot(Request::get("/stats").header("origin", "http://localhost:5173").body(Body::empty()).unwrap())
        .await
        .unwrap();
    assert_eq!(resp.headers()["access-control-allow-origin"], "http://localhost:5173");
    let resp = c.app.clone().oneshot(Request::get("/index.html").body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let body = resp.into_body().collect().await.unwrap().to_bytes();
    assert_eq!(&body[..], b"<html>review</html>");
}
