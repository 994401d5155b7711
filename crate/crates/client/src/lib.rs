//! Thin typed wrapper over the service's HTTP API.

use reqwest::{Client, Response, StatusCode};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use signalgame_core::sim_lab::cleaning::ParticipantRecord;
use signalgame_core::trial_factory::TrialSuite;
use signalgame_protocol::{
    ActionSubmission, AnalyzeRequest, AnalyzeResponse, ApiError, CreateSession, GenerateRequest, InstructionsView,
    OutcomeView, QuizResult, QuizSubmission, QuizView, SessionView, SimulateRequest, SimulateResponse,
    SurveySubmission, SweepRequest, SweepResponse, TrialView, ValidateResponse,
};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("{status} {}: {}", .body.error, .body.message)]
    Api { status: StatusCode, body: ApiError },
    #[error("{status}: {text}")]
    Unexpected { status: StatusCode, text: String },
}

impl ClientError {
    /// The service's error tag, e.g. `"wrong_phase"`.
    pub fn tag(&self) -> Option<&str> {
        match self {
            ClientError::Api { body, .. } => Some(&body.error),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct ServiceClient {
    base: String,
    http: Client,
}

impl ServiceClient {
    /// `base` is the service root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        Self { base: base.into().trim_end_matches('/').to_string(), http: Client::new() }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    async fn decode<T: DeserializeOwned>(resp: Response) -> Result<T> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp.json().await?);
        }
        let text = resp.text().await?;
        match serde_json::from_str::<ApiError>(&text) {
            Ok(body) => Err(ClientError::Api { status, body }),
            Err(_) => Err(ClientError::Unexpected { status, text }),
        }
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T> {
        Self::decode(self.http.get(format!("{}{path}", self.base)).send().await?).await
    }

    async fn post<B: Serialize + ?Sized, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T> {
        Self::decode(self.http.post(format!("{}{path}", self.base)).json(body).send().await?).await
    }

    pub async fn health(&self) -> Result<()> {
        let resp = self.http.get(format!("{}/health", self.base)).send().await?;
        let status = resp.status();
        if status.is_success() {
            Ok(())
        } else {
            Err(ClientError::Unexpected { status, text: resp.text().await? })
        }
    }

    // -- participant flow ---------------------------------------------------

    pub async fn instructions(&self) -> Result<InstructionsView> {
        self.get("/instructions").await
    }

    pub async fn quiz(&self) -> Result<QuizView> {
        self.get("/quiz").await
    }

    pub async fn create_session(&self, participant_code: &str, seed: Option<u64>) -> Result<SessionView> {
        self.post("/sessions", &CreateSession { participant_code: participant_code.into(), seed }).await
    }

    pub async fn session(&self, id: &str) -> Result<SessionView> {
        self.get(&format!("/sessions/{id}")).await
    }

    pub async fn finish_instructions(&self, id: &str) -> Result<SessionView> {
        self.post(&format!("/sessions/{id}/instructions/done"), &()).await
    }

    pub async fn submit_quiz(&self, id: &str, answers: &QuizSubmission) -> Result<QuizResult> {
        self.post(&format!("/sessions/{id}/quiz"), answers).await
    }

    pub async fn trial(&self, id: &str, index: u32) -> Result<TrialView> {
        self.get(&format!("/sessions/{id}/trials/{index}")).await
    }

    pub async fn submit_action(&self, id: &str, action: &ActionSubmission) -> Result<OutcomeView> {
        self.post(&format!("/sessions/{id}/actions"), action).await
    }

    pub async fn submit_survey(&self, id: &str, answers: &SurveySubmission) -> Result<SessionView> {
        self.post(&format!("/sessions/{id}/survey"), answers).await
    }

    // -- admin ---------------------------------------------------------------

    pub async fn export(&self) -> Result<Vec<ParticipantRecord>> {
        self.get("/admin/export").await
    }

    pub async fn suite(&self) -> Result<TrialSuite> {
        self.get("/admin/suite").await
    }

    pub async fn session_ids(&self) -> Result<Vec<String>> {
        self.get("/admin/sessions").await
    }

    // -- lab -----------------------------------------------------------------

    pub async fn generate(&self, req: &GenerateRequest) -> Result<TrialSuite> {
        self.post("/lab/generate", req).await
    }

    pub async fn simulate(&self, req: &SimulateRequest) -> Result<SimulateResponse> {
        self.post("/lab/simulate", req).await
    }

    pub async fn sweep(&self, req: &SweepRequest) -> Result<SweepResponse> {
        self.post("/lab/sweep", req).await
    }

    pub async fn analyze(&self, req: &AnalyzeRequest) -> Result<AnalyzeResponse> {
        self.post("/lab/analyze", req).await
    }

    pub async fn validate(&self, suite: &TrialSuite) -> Result<ValidateResponse> {
        self.post("/lab/validate", suite).await
    }
}
