use std::time::Duration;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use chaoscope_core::store::Store;
use chaoscope_service::{router, AppState};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

const LORENZ: &str = "param sigma = 10\nparam b = 8/3\nparam R = 28\n\
    diff(x,t) = sigma*(y-x)\ndiff(y,t) = -x*z+R*x-y\ndiff(z,t) = x*y-b*z";

fn region2() -> Value {
    json!({"ranges": [
        {"var": "x", "lo": -1.001, "hi": 1.001},
        {"var": "y", "lo": -1.001, "hi": 1.001},
        {"var": "z", "lo": 21.999, "hi": 22.001}
    ]})
}

fn solve_payload() -> Value {
    json!({
        "kind": "solve",
        "system": LORENZ,
        "system_name": "lorenz",
        "predicate": "x < 0",
        "region": region2(),
        "t_range": [0.0, 10.0],
        "t_calc_step": 0.005,
        "t_plot_step": 0.01,
        "number_ic": 8,
        "seed": 42
    })
}

fn app(dir: &tempfile::TempDir) -> Router {
    router(AppState::new(Store::new(dir.path()), 2), None)
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header(header::CONTENT_TYPE, "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

async fn wait_for(app: &Router, job_id: &str) -> Value {
    for _ in 0..600 {
        let (status, job) = call(app, Method::GET, &format!("/api/jobs/{job_id}"), None).await;
        assert_eq!(status, StatusCode::OK);
        if ["done", "failed", "canceled"].contains(&job["state"].as_str().unwrap()) {
            return job;
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    panic!("job {job_id} did not finish");
}

#[tokio::test(flavor = "multi_thread")]
async fn health_and_unknown_ids() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    let (s, v) = call(&app, Method::GET, "/api/health", None).await;
    assert_eq!((s, v["status"].as_str()), (StatusCode::OK, Some("ok")));
    let (s, v) = call(&app, Method::GET, "/api/runs", None).await;
    assert_eq!((s, v), (StatusCode::OK, json!([])));
    for uri in ["/api/runs/nope", "/api/runs/nope/trajectories", "/api/jobs/nope"] {
        let (s, v) = call(&app, Method::GET, uri, None).await;
        assert_eq!(s, StatusCode::NOT_FOUND, "{uri}");
        assert!(v["error"].is_string());
    }
    let (s, _) = call(&app, Method::DELETE, "/api/jobs/nope", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread")]
async fn invalid_payloads_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    let mut bad = vec![json!({"kind": "nope"}), json!("x")];
    let mut p = solve_payload();
    p["number_ic"] = json!(0);
    bad.push(p);
    let mut p = solve_payload();
    p["system"] = json!("diff(x,t) = ");
    bad.push(p);
    let mut p = solve_payload();
    p["region"]["ranges"][0]["lo"] = json!(2.0);
    bad.push(p);
    bad.push(json!({
        "kind": "boxcount", "system": LORENZ, "predicate": "x<0", "region": region2(),
        "number_ic": 10, "epsilon": 0.0, "final_time": 16.0, "t_calc_step": 0.02
    }));
    bad.push(json!({
        "kind": "fdim", "system": LORENZ, "predicate": "x<0", "region": region2(),
        "number_ic": 10, "epsilon_range": [2e-7, 1e-6], "n_epsilons": 1, "final_time": 16.0, "t_calc_step": 0.02
    }));
    for body in bad {
        let (s, v) = call(&app, Method::POST, "/api/jobs", Some(body.clone())).await;
        assert_eq!(s, StatusCode::BAD_REQUEST, "{body}");
        assert!(v["error"].is_string());
    }
    let (_, jobs) = call(&app, Method::GET, "/api/jobs", None).await;
    assert_eq!(jobs, json!([]));
}

#[tokio::test(flavor = "multi_thread")]
async fn solve_job_round_trip_and_projection() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    let (s, job) = call(&app, Method::POST, "/api/jobs", Some(solve_payload())).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    assert_eq!(job["state"], "queued");
    let job = wait_for(&app, job["job_id"].as_str().unwrap()).await;
    assert_eq!(job["state"], "done", "{job}");
    assert_eq!(job["progress"], 1.0);
    let run_id = job["result_ref"].as_str().unwrap();

    let (s, detail) = call(&app, Method::GET, &format!("/api/runs/{run_id}"), None).await;
    assert_eq!(s, StatusCode::OK);
    let manifest = &detail["manifest"];
    assert_eq!(manifest["request"], job["request"]);
    assert_eq!(manifest["region"], region2());
    assert_eq!(manifest["seed"], 42);
    assert_eq!(manifest["trajectories"].as_array().unwrap().len(), 8);
    assert_eq!(detail["results"], json!({"kind": "none"}));
    let (_, runs) = call(&app, Method::GET, "/api/runs", None).await;
    assert_eq!(runs[0]["run_id"], run_id);

    // the submitted payload, with defaults filled in, is what the run records
    let mut expected = solve_payload();
    expected["method"] = json!("native");
    expected["compile_command"] = Value::Null;
    assert_eq!(manifest["request"], expected);

    // windowed projection equals the brute-force subset of stored samples
    let store = Store::new(dir.path());
    let run = store.load_run(run_id).unwrap();
    let uri = format!("/api/runs/{run_id}/trajectories?vars=x,z&window=-10,0,20,30");
    let (s, proj) = call(&app, Method::GET, &uri, None).await;
    assert_eq!(s, StatusCode::OK, "{proj}");
    let orbits = proj["orbits"].as_array().unwrap();
    assert_eq!(orbits.len(), 8);
    let mut total_inside = 0;
    for (n, orbit) in orbits.iter().enumerate() {
        let traj = run.trajectory(n).unwrap();
        let inside: Vec<[f64; 2]> = traj
            .states
            .iter()
            .map(|x| [x[0], x[2]])
            .filter(|p| (-10.0..=0.0).contains(&p[0]) && (20.0..=30.0).contains(&p[1]))
            .collect();
        let served: Vec<[f64; 2]> = orbit["segments"]
            .as_array()
            .unwrap()
            .iter()
            .flat_map(|seg| seg.as_array().unwrap().iter().map(|p| [p[0].as_f64().unwrap(), p[1].as_f64().unwrap()]))
            .collect();
        assert_eq!(served, inside);
        assert_eq!(orbit["n_in_window"], inside.len());
        assert!(orbit["class"]["class"].is_string());
        total_inside += inside.len();
    }
    assert!(total_inside > 0);

    let uri = format!("/api/runs/{run_id}/trajectories?vars=x,z&window=-10,0,20,30&decimate=20");
    let (_, dec) = call(&app, Method::GET, &uri, None).await;
    for (full, thin) in orbits.iter().zip(dec["orbits"].as_array().unwrap()) {
        let (fs, ts) = (full["segments"].as_array().unwrap(), thin["segments"].as_array().unwrap());
        assert_eq!(fs.len(), ts.len());
        let kept: usize = ts.iter().map(|s| s.as_array().unwrap().len()).sum();
        assert!(kept <= 20 || ts.iter().all(|s| s.as_array().unwrap().len() <= 2));
        for (a, b) in fs.iter().zip(ts) {
            let (a, b) = (a.as_array().unwrap(), b.as_array().unwrap());
            assert_eq!(a.first(), b.first());
            assert_eq!(a.last(), b.last());
        }
    }

    for uri in ["vars=x,x", "vars=x,q", "vars=x", "window=1,0,0,1", "decimate=0"] {
        let (s, _) = call(&app, Method::GET, &format!("/api/runs/{run_id}/trajectories?{uri}"), None).await;
        assert_eq!(s, StatusCode::BAD_REQUEST, "{uri}");
    }
    let (s, v) = call(&app, Method::GET, &format!("/api/runs/{run_id}/trajectories?vars=t,y"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["orbits"][0]["segments"][0][0][0], 0.0);

    let (s, v) = call(&app, Method::DELETE, &format!("/api/jobs/{}", job["job_id"].as_str().unwrap()), None).await;
    assert_eq!(s, StatusCode::CONFLICT, "{v}");
}

#[tokio::test(flavor = "multi_thread")]
async fn queued_and_running_jobs_can_be_canceled() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    let big = json!({
        "kind": "fdim", "system": LORENZ, "predicate": "x<0", "region": region2(),
        "number_ic": 200000, "epsilon_range": [2e-7, 1e-6], "n_epsilons": 5,
        "final_time": 16.0, "t_calc_step": 0.02
    });
    let (_, first) = call(&app, Method::POST, "/api/jobs", Some(big.clone())).await;
    let (_, second) = call(&app, Method::POST, "/api/jobs", Some(big)).await;
    let (first, second) = (first["job_id"].as_str().unwrap().to_string(), second["job_id"].as_str().unwrap().to_string());

    let (s, v) = call(&app, Method::DELETE, &format!("/api/jobs/{second}"), None).await;
    assert_eq!((s, v["state"].as_str()), (StatusCode::OK, Some("canceled")));

    for _ in 0..200 {
        let (_, v) = call(&app, Method::GET, &format!("/api/jobs/{first}"), None).await;
        if v["state"] == "running" {
            break;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    let (s, _) = call(&app, Method::DELETE, &format!("/api/jobs/{first}"), None).await;
    assert_eq!(s, StatusCode::OK);
    let job = wait_for(&app, &first).await;
    assert_eq!(job["state"], "canceled");
    assert!(job["result_ref"].is_null());
    let (s, _) = call(&app, Method::DELETE, &format!("/api/jobs/{first}"), None).await;
    assert_eq!(s, StatusCode::OK);
    let (_, runs) = call(&app, Method::GET, "/api/runs", None).await;
    assert_eq!(runs, json!([]));
}

#[tokio::test(flavor = "multi_thread")]
async fn boxcount_job_matches_direct_execution() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    let payload = json!({
        "kind": "boxcount", "system": "diff(x,t)=0\ndiff(y,t)=0", "predicate": "x<0",
        "region": {"ranges": [{"var": "x", "lo": -1.0, "hi": 1.0}, {"var": "y", "lo": -1.0, "hi": 1.0}]},
        "number_ic": 3000, "epsilon": 0.05, "final_time": 1.0, "t_calc_step": 0.5, "seed": 7
    });
    let (_, job) = call(&app, Method::POST, "/api/jobs", Some(payload.clone())).await;
    let job = wait_for(&app, job["job_id"].as_str().unwrap()).await;
    assert_eq!(job["state"], "done", "{job}");
    let (_, detail) = call(&app, Method::GET, &format!("/api/runs/{}", job["result_ref"].as_str().unwrap()), None).await;

    let req = serde_json::from_value(payload).unwrap();
    let other = tempfile::tempdir().unwrap();
    let direct = chaoscope_core::workflow::execute(&req, &Store::new(other.path()), &Default::default()).unwrap();
    assert_eq!(detail["results"], serde_json::to_value(&direct.results).unwrap());
}

#[tokio::test(flavor = "multi_thread")]
async fn cors_headers() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    let req = Request::builder()
        .method(Method::OPTIONS)
        .uri("/api/jobs")
        .header(header::ORIGIN, "http://localhost:5173")
        .header(header::ACCESS_CONTROL_REQUEST_METHOD, "POST")
        .body(Body::empty())
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.headers()[header::ACCESS_CONTROL_ALLOW_ORIGIN], "*");

    let pinned = router(AppState::new(Store::new(dir.path()), 1), Some("http://ui.example".parse().unwrap()));
    let req = Request::builder()
        .uri("/api/health")
        .header(header::ORIGIN, "http://ui.example")
        .body(Body::empty())
        .unwrap();
    let resp = pinned.oneshot(req).await.unwrap();
    assert_eq!(resp.headers()[header::ACCESS_CONTROL_ALLOW_ORIGIN], "http://ui.example");
}
