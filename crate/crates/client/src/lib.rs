//! Typed client for the bilayer service.

use std::time::Duration;

use reqwest::{Response, StatusCode};
use serde::de::DeserializeOwned;
use serde::Serialize;

use bilayer_core::api::{
    ApiError, ErrorKind, JobCreated, JobOutput, JobStatus, RunRequest, ScenarioList, SweepRequest,
    VerifyRequest,
};
use bilayer_core::simulation::{EffectiveParameters, RawMaterial, ScenarioConfig};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    /// The service answered with an error body.
    #[error("{0}")]
    Api(ApiError),
    #[error("request failed: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("unexpected response {status}: {body}")]
    Unexpected { status: StatusCode, body: String },
}

impl ClientError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            ClientError::Api(e) => e.kind,
            _ => ErrorKind::Internal,
        }
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Clone, Debug)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` like `http://127.0.0.1:8070`.
    pub fn new(base: impl Into<String>) -> Self {
        Client {
            base: base.into().trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    async fn check(resp: Response) -> Result<Response> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        let body = resp.text().await?;
        match serde_json::from_str::<ApiError>(&body) {
            Ok(e) => Err(ClientError::Api(e)),
            Err(_) => Err(ClientError::Unexpected { status, body }),
        }
    }

    async fn get_json<T: DeserializeOwned>(&self, path: &str) -> Result<T> {
        let resp = self.http.get(self.url(path)).send().await?;
        Ok(Self::check(resp).await?.json().await?)
    }

    async fn post_json<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T> {
        let resp = self.http.post(self.url(path)).json(body).send().await?;
        Ok(Self::check(resp).await?.json().await?)
    }

    pub async fn health(&self) -> Result<()> {
        let resp = self.http.get(self.url("/health")).send().await?;
        Self::check(resp).await.map(|_| ())
    }

    pub async fn scenarios(&self) -> Result<Vec<String>> {
        Ok(self.get_json::<ScenarioList>("/scenarios").await?.scenarios)
    }

    pub async fn scenario(&self, name: &str, paper_scale: bool) -> Result<ScenarioConfig> {
        self.get_json(&format!("/scenarios/{name}?paper_scale={paper_scale}"))
            .await
    }

    pub async fn scenario_document(&self, name: &str, paper_scale: bool) -> Result<String> {
        let url = self.url(&format!("/scenarios/{name}/document?paper_scale={paper_scale}"));
        let resp = self.http.get(url).send().await?;
        Ok(Self::check(resp).await?.text().await?)
    }

    /// Parses a configuration document on the service.
    pub async fn parse_config(&self, text: &str) -> Result<ScenarioConfig> {
        let resp = self
            .http
            .post(self.url("/config/parse"))
            .header(reqwest::header::CONTENT_TYPE, "text/plain")
            .body(text.to_string())
            .send()
            .await?;
        Ok(Self::check(resp).await?.json().await?)
    }

    pub async fn render_config(&self, config: &ScenarioConfig) -> Result<String> {
        let resp = self
            .http
            .post(self.url("/config/render"))
            .json(config)
            .send()
            .await?;
        Ok(Self::check(resp).await?.text().await?)
    }

    pub async fn effective_parameters(&self, raw: &RawMaterial) -> Result<EffectiveParameters> {
        self.post_json("/effective-parameters", raw).await
    }

    pub async fn start_run(&self, req: &RunRequest) -> Result<JobCreated> {
        self.post_json("/jobs/run", req).await
    }

    pub async fn start_sweep(&self, req: &SweepRequest) -> Result<JobCreated> {
        self.post_json("/jobs/sweep-epsilon", req).await
    }

    pub async fn start_verify(&self, req: &VerifyRequest) -> Result<JobCreated> {
        self.post_json("/jobs/verify", req).await
    }

    pub async fn jobs(&self) -> Result<Vec<JobStatus>> {
        self.get_json("/jobs").await
    }

    pub async fn status(&self, id: u64) -> Result<JobStatus> {
        self.get_json(&format!("/jobs/{id}")).await
    }

    pub async fn result(&self, id: u64) -> Result<JobOutput> {
        self.get_json(&format!("/jobs/{id}/result")).await
    }

    pub async fn diagnostics(&self, id: u64) -> Result<String> {
        let resp = self
            .http
            .get(self.url(&format!("/jobs/{id}/diagnostics")))
            .send()
            .await?;
        Ok(Self::check(resp).await?.text().await?)
    }

    pub async fn cancel(&self, id: u64) -> Result<JobStatus> {
        self.post_json(&format!("/jobs/{id}/cancel"), &()).await
    }

    pub async fn delete(&self, id: u64) -> Result<()> {
        let resp = self.http.delete(self.url(&format!("/jobs/{id}"))).send().await?;
        Self::check(resp).await.map(|_| ())
    }

    /// Polls until the job finishes, calling `on_status` after every poll,
    /// then returns its output.
    pub async fn wait(
        &self,
        id: u64,
        interval: Duration,
        mut on_status: impl FnMut(&JobStatus),
    ) -> Result<JobOutput> {
        loop {
            let status = self.status(id).await?;
            on_status(&status);
            if status.state.is_finished() {
                return self.result(id).await;
            }
            tokio::time::sleep(interval).await;
        }
    }
}
