//! Dialog sessions keyed by id, as served over HTTP.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::dialog::{dialog_step, start, AgentOutput, DialogContext, DialogError, DialogState};
use super::graph::{EnvironmentGraph, SensorSpec};
use super::llm::ChatClient;
use super::scoring::{ScoringRules, ScriptProfile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: u64,
    pub state: DialogState,
    pub output: Option<AgentOutput>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ServiceError {
    #[error("no session {0}")]
    UnknownSession(u64),
    #[error(transparent)]
    Dialog(#[from] DialogError),
}

pub struct RecommendService {
    pub graph: EnvironmentGraph,
    pub sensor: SensorSpec,
    pub rules: ScoringRules,
    pub profile: ScriptProfile,
    pub n_sensors: usize,
    client: Option<Arc<dyn ChatClient>>,
    next_id: AtomicU64,
    sessions: Mutex<BTreeMap<u64, Arc<Mutex<(DialogState, Option<AgentOutput>)>>>>,
}

impl RecommendService {
    pub fn new(graph: EnvironmentGraph, sensor: SensorSpec, rules: ScoringRules, profile: ScriptProfile) -> Self {
        RecommendService {
            graph,
            sensor,
            rules,
            profile,
            n_sensors: 1,
            client: None,
            next_id: AtomicU64::new(1),
            sessions: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn with_client(mut self, client: Arc<dyn ChatClient>) -> Self {
        self.client = Some(client);
        self
    }

    fn context(&self) -> DialogContext<'_> {
        DialogContext {
            client: self.client.as_deref(),
            n_sensors: self.n_sensors,
            ..DialogContext::new(&self.graph, &self.sensor, &self.rules, &self.profile)
        }
    }

    pub fn create_session(&self) -> SessionView {
        let (state, output) = start(&self.context());
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        self.sessions
            .lock()
            .insert(id, Arc::new(Mutex::new((state.clone(), Some(output.clone())))));
        SessionView { id, state, output: Some(output) }
    }

    fn session(&self, id: u64) -> Result<Arc<Mutex<(DialogState, Option<AgentOutput>)>>, ServiceError> {
        self.sessions.lock().get(&id).cloned().ok_or(ServiceError::UnknownSession(id))
    }

    pub fn message(&self, id: u64, text: &str) -> Result<SessionView, ServiceError> {
        let slot = self.session(id)?;
        let mut guard = slot.lock();
        let (state, output) = dialog_step(guard.0.clone(), text, &self.context())?;
        *guard = (state.clone(), Some(output.clone()));
        Ok(SessionView { id, state, output: Some(output) })
    }

    pub fn get(&self, id: u64) -> Result<SessionView, ServiceError> {
        let slot = self.session(id)?;
        let guard = slot.lock();
        Ok(SessionView {
            id,
            state: guard.0.clone(),
            output: guard.1.clone(),
        })
    }
}
