//! Sensor placement recommendation.
//!
//! A site description is parsed into an [`EnvironmentGraph`]. The dialog
//! collects [`UserPreferences`], [`generate_candidates`] enumerates every
//! feasible (surface, outlet, gain) triple, [`score_candidate`] rates each
//! on sensing performance and user experience using the published
//! [`ScoringRules`], and [`select`] ranks by the mean of the two scores.

pub mod candidates;
pub mod dialog;
pub mod graph;
pub mod llm;
pub mod scoring;
pub mod service;

pub use candidates::{
    check_feasible, generate_candidates, rank_order, score_all, select, EmptySelection, NoFeasiblePlacement,
    Orientation, Placement, Ranked, Recommendation, Source, Violation,
};
pub use dialog::{dialog_step, start, AgentOutput, DialogContext, DialogError, DialogState, Phase, Speaker, Turn};
pub use graph::{
    parse_environment, parse_site, EnvironmentGraph, Material, ParseError, ParseErrors, SensorSpec, SiteDescription,
};
pub use llm::{ChatClient, HttpChatClient};
pub use scoring::{
    score_candidate, PartialPreferences, PrefField, ScoringRules, ScriptProfile, UserPreferences,
};
pub use service::RecommendService;
