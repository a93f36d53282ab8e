use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use image::{Rgb, RgbImage};
use layoutgen::config::RunConfig;
use layoutgen::service::{encode_png, DesignService, InferenceModel, ServiceOptions};
use layoutgen_cli::http::router;
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;

struct App {
    _dir: TempDir,
    router: Router,
}

fn app() -> App {
    let dir = tempfile::tempdir().unwrap();
    let model = Arc::new(InferenceModel::untrained(&RunConfig::tiny()).unwrap());
    let mut opts = ServiceOptions::new(dir.path());
    opts.fixed_seed = Some(11);
    let svc = Arc::new(DesignService::new(model, opts).unwrap());
    App {
        _dir: dir,
        router: router(svc),
    }
}

fn background_png(w: u32, h: u32) -> Vec<u8> {
    let img = RgbImage::from_fn(w, h, |x, y| Rgb([(x * 255 / w) as u8, (y * 255 / h) as u8, 90]));
    encode_png(&img).unwrap()
}

impl App {
    async fn send(&self, req: Request<Body>) -> (StatusCode, Vec<u8>) {
        let resp = self.router.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
    }

    async fn json(&self, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let mut b = Request::builder().method(method).uri(uri);
        let body = match body {
            Some(v) => {
                b = b.header(header::CONTENT_TYPE, "application/json");
                Body::from(v.to_string())
            }
            None => Body::empty(),
        };
        let (status, bytes) = self.send(b.body(body).unwrap()).await;
        let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
        (status, v)
    }

    async fn upload(&self, id: &str, bytes: Vec<u8>) -> (StatusCode, Value) {
        let req = Request::put(format!("/v1/sessions/{id}/background"))
            .header(header::CONTENT_TYPE, "image/png")
            .body(Body::from(bytes))
            .unwrap();
        let (status, bytes) = self.send(req).await;
        (status, serde_json::from_slice(&bytes).unwrap())
    }

    async fn session(&self) -> String {
        let (status, v) = self.json(Method::POST, "/v1/sessions", None).await;
        assert_eq!(status, StatusCode::CREATED);
        v["id"].as_str().unwrap().to_string()
    }

    /// A session with a background and two texts, ready for candidates.
    async fn ready_session(&self) -> String {
        let id = self.session().await;
        assert_eq!(self.upload(&id, background_png(160, 240)).await.0, StatusCode::OK);
        let fg = json!({ "elements": [
            { "string": "Autumn collection", "class": "header" },
            { "string": "Shop now", "class": "button" },
        ]});
        let (status, _) = self.json(Method::PUT, &format!("/v1/sessions/{id}/foreground"), Some(fg)).await;
        assert_eq!(status, StatusCode::OK);
        id
    }
}

#[tokio::test]
async fn health_and_distinct_url_safe_ids() {
    let app = app();
    let (status, v) = app.json(Method::GET, "/v1/health", None).await;
    assert_eq!((status, v), (StatusCode::OK, json!({ "status": "ok" })));
    let a = app.session().await;
    let b = app.session().await;
    assert_ne!(a, b);
    assert!(a.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_'));
    let (status, v) = app.json(Method::GET, &format!("/v1/sessions/{a}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["foreground"], json!([]));
}

#[tokio::test]
async fn unknown_sessions_are_404() {
    let app = app();
    for (m, uri) in [
        (Method::GET, "/v1/sessions/00000000-0000-4000-8000-000000000000"),
        (Method::GET, "/v1/sessions/not-an-id"),
        (Method::POST, "/v1/sessions/00000000-0000-4000-8000-000000000000/candidates"),
        (Method::GET, "/v1/blobs/0000000000000000000000000000000000000000000000000000000000000000"),
    ] {
        let (status, v) = app.json(m, uri, None).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
        assert!(v["error"].is_string());
    }
    let (status, _) = app.upload("00000000-0000-4000-8000-000000000000", background_png(8, 8)).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn invalid_inputs_are_422() {
    let app = app();
    let id = app.session().await;
    let (status, _) = app.upload(&id, b"definitely not an image".to_vec()).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let uri = format!("/v1/sessions/{id}/foreground");
    for body in [
        json!({ "elements": [{ "string": "x", "class": "logo" }] }),
        json!({ "elements": [{ "string": "  ", "class": "body" }] }),
        json!({ "elements": [{ "string": "x", "class": "body", "font": "Arial" }] }),
        json!({ "items": [] }),
    ] {
        let (status, _) = app.json(Method::PUT, &uri, Some(body.clone())).await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{body}");
    }
    let req = Request::put(&uri)
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from("{not json"))
        .unwrap();
    assert_eq!(app.send(req).await.0, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn footnote_label_maps_to_disclaimer_and_round_trips() {
    let app = app();
    let id = app.session().await;
    let fg = json!({ "elements": [
        { "string": "Terms apply", "class": "footnote" },
        { "string": "Hello", "class": "Header", "color": [10, 20, 30] },
    ], "button_radius": 4 });
    let (status, v) = app.json(Method::PUT, &format!("/v1/sessions/{id}/foreground"), Some(fg)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["count"], 2);
    assert_eq!(v["elements"][0]["class"], "disclaimer");
    let (_, s) = app.json(Method::GET, &format!("/v1/sessions/{id}"), None).await;
    assert_eq!(s["foreground"], v["elements"]);
    assert_eq!(s["button_radius"], 4);
}

#[tokio::test]
async fn state_conflicts_are_409() {
    let app = app();
    let id = app.session().await;
    let (status, _) = app.json(Method::POST, &format!("/v1/sessions/{id}/candidates"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);

    let id = app.ready_session().await;
    let edit = json!({ "edits": [{ "element": 0, "box": [0.5, 0.5, 0.1, 0.1] }] });
    let (status, _) = app.json(Method::PATCH, &format!("/v1/sessions/{id}/layout"), Some(edit)).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, _) = app.json(Method::POST, &format!("/v1/sessions/{id}/export"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn multipart_upload_is_accepted() {
    let app = app();
    let id = app.session().await;
    let png = background_png(40, 30);
    let boundary = "XBOUNDARYX";
    let mut body = format!(
        "--{boundary}\r\nContent-Disposition: form-data; name=\"file\"; filename=\"bg.png\"\r\nContent-Type: image/png\r\n\r\n"
    )
    .into_bytes();
    body.extend_from_slice(&png);
    body.extend_from_slice(format!("\r\n--{boundary}--\r\n").as_bytes());
    let req = Request::put(format!("/v1/sessions/{id}/background"))
        .header(header::CONTENT_TYPE, format!("multipart/form-data; boundary={boundary}"))
        .body(Body::from(body))
        .unwrap();
    let (status, bytes) = app.send(req).await;
    assert_eq!(status, StatusCode::OK);
    let v: Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!((v["width"].as_u64(), v["height"].as_u64()), (Some(40), Some(30)));

    let (status, blob) = app.send(Request::get(v["url"].as_str().unwrap()).body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(blob, png);
}

#[tokio::test]
async fn full_flow_edit_export_exact() {
    let app = app();
    let id = app.ready_session().await;
    let (status, v) = app.json(Method::POST, &format!("/v1/sessions/{id}/candidates"), None).await;
    assert_eq!(status, StatusCode::OK);
    let cands = v["candidates"].as_array().unwrap().clone();
    assert_eq!(cands.len(), 6);
    for c in &cands {
        for b in c["boxes"].as_array().unwrap() {
            let b: Vec<f64> = serde_json::from_value(b.clone()).unwrap();
            let (cy, cx, h, w) = (b[0], b[1], b[2], b[3]);
            assert!(h > 0.0 && w > 0.0 && h <= 1.0 && w <= 1.0);
            assert!((0.0..=1.0).contains(&cy) && (0.0..=1.0).contains(&cx));
        }
        let (status, png) = app.send(Request::get(c["preview"].as_str().unwrap()).body(Body::empty()).unwrap()).await;
        assert_eq!(status, StatusCode::OK);
        assert!(png.starts_with(b"\x89PNG"));
    }

    // Fixed service seed: regeneration is identical.
    let (_, again) = app.json(Method::POST, &format!("/v1/sessions/{id}/candidates"), None).await;
    assert_eq!(again["candidates"], json!(cands));
    let (_, three) = app.json(Method::POST, &format!("/v1/sessions/{id}/candidates?count=3"), None).await;
    assert_eq!(three["candidates"].as_array().unwrap().len(), 3);
    app.json(Method::POST, &format!("/v1/sessions/{id}/candidates"), None).await;

    let (status, _) = app.json(Method::POST, &format!("/v1/sessions/{id}/select"), Some(json!({ "index": 6 }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, v) = app.json(Method::POST, &format!("/v1/sessions/{id}/select"), Some(json!({ "index": 2 }))).await;
    assert_eq!((status, v["selected"].as_u64()), (StatusCode::OK, Some(2)));

    let uri = format!("/v1/sessions/{id}/layout");
    let bad = json!({ "edits": [{ "element": 0, "box": [1.2, 0.5, 0.2, 0.1] }] });
    assert_eq!(app.json(Method::PATCH, &uri, Some(bad)).await.0, StatusCode::UNPROCESSABLE_ENTITY);
    let bad = json!({ "edits": [{ "element": 5, "box": [0.5, 0.5, 0.2, 0.1] }] });
    assert_eq!(app.json(Method::PATCH, &uri, Some(bad)).await.0, StatusCode::UNPROCESSABLE_ENTITY);

    let edited = [0.123456789012345, 0.4321, 0.1000000001, 0.3333333333333333];
    let edit = json!({ "edits": [{ "element": 1, "box": edited }] });
    let (status, v) = app.json(Method::PATCH, &uri, Some(edit)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["boxes"][1], json!(edited));
    assert_eq!(v["boxes"][0], cands[2]["boxes"][0]);

    let (status, ex) = app.json(Method::POST, &format!("/v1/sessions/{id}/export"), None).await;
    assert_eq!(status, StatusCode::OK);
    let got: Vec<f64> = serde_json::from_value(ex["record"]["elements"][1]["box"].clone()).unwrap();
    assert_eq!(got, edited);
    assert_eq!(ex["record"]["width"], 160);
    assert_eq!(ex["record"]["height"], 240);
    let (status, png) = app.send(Request::get(ex["image"].as_str().unwrap()).body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    let img = image::load_from_memory(&png).unwrap();
    assert_eq!((img.width(), img.height()), (160, 240));

    let (_, ex2) = app.json(Method::POST, &format!("/v1/sessions/{id}/export"), None).await;
    assert_eq!(ex, ex2);
}
