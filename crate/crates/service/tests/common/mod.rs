#![allow(dead_code)]

use std::sync::{Arc, OnceLock};

use reqwest::{Client, StatusCode};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use signalgame_core::trial_factory::build_suite;
use signalgame_service::app::practice_suite;
use signalgame_service::session::Catalog;
use signalgame_service::{spawn, AppState, ServiceConfig};

pub fn catalog() -> Catalog {
    static CATALOG: OnceLock<Catalog> = OnceLock::new();
    CATALOG
        .get_or_init(|| Catalog { suite: build_suite(0).unwrap(), practice: practice_suite(1).unwrap() })
        .clone()
}

pub struct Harness {
    pub base: String,
    pub app: Arc<AppState>,
    pub http: Client,
}

pub async fn start(config: ServiceConfig) -> Harness {
    let app = Arc::new(AppState::with_catalog(config, catalog()).await.unwrap());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    spawn(app.clone(), listener);
    Harness { base, app, http: Client::new() }
}

impl Harness {
    pub async fn get<T: DeserializeOwned>(&self, path: &str) -> (StatusCode, T) {
        let r = self.http.get(format!("{}{path}", self.base)).send().await.unwrap();
        let status = r.status();
        (status, r.json().await.unwrap())
    }

    pub async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> (StatusCode, T) {
        let r = self.http.post(format!("{}{path}", self.base)).json(body).send().await.unwrap();
        let status = r.status();
        (status, r.json().await.unwrap())
    }

    /// Posts and expects an error body; returns (status, error tag).
    pub async fn post_err<B: Serialize>(&self, path: &str, body: &B) -> (StatusCode, String) {
        let (status, v): (StatusCode, Value) = self.post(path, body).await;
        assert!(!status.is_success(), "expected failure from {path}, got {v}");
        (status, v["error"].as_str().unwrap_or_default().to_string())
    }
}
