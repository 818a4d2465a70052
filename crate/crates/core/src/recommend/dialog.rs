//! Sufficiency-gated recommendation dialog.
//!
//! The agent asks one question per turn until every preference field is
//! known, then generates, scores and ranks placements in a single step and
//! presents them a page at a time. An external chat client may phrase the
//! questions and propose scored placements; anything it returns is checked
//! against the grammar and the feasibility rules, and on any failure the
//! rule-based expert answers instead and the transcript says so.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::candidates::{
    check_feasible, generate_candidates, score_all, select, NoFeasiblePlacement, Placement, Recommendation, Source,
};
use super::graph::{EnvironmentGraph, SensorSpec};
use super::llm::{self, ChatClient, ChatMessage, ChatRequest, Directive};
use super::scoring::{PartialPreferences, PrefField, ScoringRules, ScriptProfile, UserPreferences};
use crate::devicesim::{ActivityKind, CareTag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    GatherInfo,
    Generate,
    Score,
    Present,
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    User,
    Agent,
    System,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogState {
    pub phase: Phase,
    pub prefs: PartialPreferences,
    pub transcript: Vec<Turn>,
    pub pending: Option<PrefField>,
    /// Ranked list once generated.
    pub recommendations: Vec<Recommendation>,
    /// Number of ranked entries already shown.
    pub shown: usize,
    pub selected: Option<usize>,
    pub infeasible: Option<NoFeasiblePlacement>,
    /// Set once the rule expert had to stand in for the chat client.
    pub degraded: bool,
}

impl Default for DialogState {
    fn default() -> Self {
        DialogState {
            phase: Phase::GatherInfo,
            prefs: PartialPreferences::default(),
            transcript: Vec::new(),
            pending: None,
            recommendations: Vec::new(),
            shown: 0,
            selected: None,
            infeasible: None,
            degraded: false,
        }
    }
}

impl DialogState {
    fn advance(&mut self, to: Phase) {
        assert!(to >= self.phase, "phase may not move back from {:?} to {:?}", self.phase, to);
        if to == Phase::Generate {
            assert!(self.prefs.is_sufficient(), "generation requires complete preferences");
        }
        self.phase = to;
    }

    fn say(&mut self, speaker: Speaker, text: impl Into<String>) {
        self.transcript.push(Turn { speaker, text: text.into() });
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AgentOutput {
    Question { field: PrefField, text: String },
    Recommendations { items: Vec<Recommendation>, remaining: usize },
    NoFeasiblePlacement { status: NoFeasiblePlacement, text: String },
    Accepted { recommendation: Recommendation },
    Info { text: String },
}

impl AgentOutput {
    pub fn text(&self) -> String {
        match self {
            AgentOutput::Question { text, .. } | AgentOutput::Info { text } => text.clone(),
            AgentOutput::NoFeasiblePlacement { text, .. } => text.clone(),
            AgentOutput::Recommendations { items, remaining } => {
                let mut s = String::from("Recommended placements:");
                for (i, r) in items.iter().enumerate() {
                    s += &format!("\n{}. {r}", i + 1);
                }
                if *remaining > 0 {
                    s += &format!("\n({remaining} more; say 'more' to see them, or 'accept <n>')");
                }
                s
            }
            AgentOutput::Accepted { recommendation } => format!("Accepted {}", recommendation.id()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum DialogError {
    #[error("dialog already finished")]
    Finished,
}

pub struct DialogContext<'a> {
    pub graph: &'a EnvironmentGraph,
    pub sensor: &'a SensorSpec,
    pub rules: &'a ScoringRules,
    pub profile: &'a ScriptProfile,
    pub n_sensors: usize,
    pub page_size: usize,
    pub client: Option<&'a dyn ChatClient>,
}

impl<'a> DialogContext<'a> {
    pub fn new(graph: &'a EnvironmentGraph, sensor: &'a SensorSpec, rules: &'a ScoringRules, profile: &'a ScriptProfile) -> Self {
        DialogContext {
            graph,
            sensor,
            rules,
            profile,
            n_sensors: 1,
            page_size: 5,
            client: None,
        }
    }
}

/// Opens a dialog with the agent's first question.
pub fn start(ctx: &DialogContext<'_>) -> (DialogState, AgentOutput) {
    let mut state = DialogState::default();
    let out = next_question(&mut state, ctx, None);
    (state, out)
}

pub fn dialog_step(
    mut state: DialogState,
    message: &str,
    ctx: &DialogContext<'_>,
) -> Result<(DialogState, AgentOutput), DialogError> {
    if state.phase == Phase::Done {
        return Err(DialogError::Finished);
    }
    state.say(Speaker::User, message);
    let out = match state.phase {
        Phase::GatherInfo => gather(&mut state, message, ctx),
        Phase::Present => present(&mut state, message, ctx),
        // Generate and Score never persist between steps
        Phase::Generate | Phase::Score => unreachable!("transient phase"),
        Phase::Done => unreachable!(),
    };
    let text = out.text();
    state.say(Speaker::Agent, text);
    Ok((state, out))
}

fn gather(state: &mut DialogState, message: &str, ctx: &DialogContext<'_>) -> AgentOutput {
    let mut understood = apply_assignments(&mut state.prefs, message);
    let mut missed = false;
    if let Some(field) = state.pending.filter(|_| !understood) {
        if !state.prefs.has(field) {
            if apply_answer(&mut state.prefs, field, message) {
                understood = true;
            } else {
                missed = true;
            }
        }
    }
    let mut preamble = surface_answer(message, ctx).unwrap_or_default();
    if missed && !understood && preamble.is_empty() {
        preamble = "Sorry, I did not catch that. ".into();
    }
    if state.prefs.is_sufficient() {
        return recommend(state, ctx);
    }
    next_question(state, ctx, Some(preamble))
}

fn next_question(state: &mut DialogState, ctx: &DialogContext<'_>, preamble: Option<String>) -> AgentOutput {
    let missing = state.prefs.missing();
    let (field, text) = ctx
        .client
        .and_then(|c| match llm_question(state, ctx, c, &missing) {
            Ok(q) => Some(q),
            Err(reason) => {
                degrade(state, &reason);
                None
            }
        })
        .unwrap_or_else(|| (missing[0], fallback_question(missing[0]).to_string()));
    state.pending = Some(field);
    let text = format!("{}{}", preamble.unwrap_or_default(), text);
    if state.transcript.is_empty() {
        state.say(Speaker::Agent, text.clone());
    }
    AgentOutput::Question { field, text }
}

fn degrade(state: &mut DialogState, reason: &str) {
    state.degraded = true;
    state.say(Speaker::System, format!("[fallback] chat client unusable, rule expert answering: {reason}"));
}

pub fn fallback_question(field: PrefField) -> &'static str {
    match field {
        PrefField::PrivacyConcern => {
            "On a scale from 1 (not at all) to 5 (very), how concerned are you about privacy with a sensor in the home?"
        }
        PrefField::TamperRisk => {
            "Is anyone in the home likely to move, unplug or fiddle with a device, for example because of memory problems?"
        }
        PrefField::TargetActivities => {
            "Which activities matter most to follow? Choose from footstep, door, object_place, shower, medication_shake, or the groups mobility, medication, matters_most."
        }
        PrefField::DiscretionRequired => "Should the sensor be kept out of sight?",
    }
}

fn system_prompt(ctx: &DialogContext<'_>) -> String {
    llm::render(
        llm::SYSTEM_TEMPLATE,
        &[("site", &ctx.graph.to_document()), ("sensor", &ctx.sensor.to_line())],
    )
}

fn history(state: &DialogState) -> Vec<ChatMessage> {
    state
        .transcript
        .iter()
        .filter_map(|t| match t.speaker {
            Speaker::User => Some(ChatMessage::user(&t.text)),
            Speaker::Agent => Some(ChatMessage::assistant(&t.text)),
            Speaker::System => None,
        })
        .collect()
}

fn describe_prefs(p: &PartialPreferences) -> String {
    serde_json::to_string(p).expect("preferences serialize")
}

fn llm_question(
    state: &DialogState,
    ctx: &DialogContext<'_>,
    client: &dyn ChatClient,
    missing: &[PrefField],
) -> Result<(PrefField, String), String> {
    let missing_names: Vec<&str> = missing.iter().map(|f| f.as_str()).collect();
    let mut messages = history(state);
    messages.push(ChatMessage::user(llm::render(
        llm::GATHER_TEMPLATE,
        &[("preferences", &describe_prefs(&state.prefs)), ("missing", &missing_names.join(", "))],
    )));
    let request = ChatRequest {
        model: client.model().to_string(),
        system: system_prompt(ctx),
        messages,
    };
    let reply = client.complete(&request).map_err(|e| e.to_string())?;
    let directives = llm::parse_reply(&reply).map_err(|e| e.to_string())?;
    directives
        .into_iter()
        .find_map(|d| match d {
            Directive::Ask { field, question } if missing.contains(&field) => Some((field, question)),
            _ => None,
        })
        .ok_or_else(|| "no question about a missing field".to_string())
}

fn recommend(state: &mut DialogState, ctx: &DialogContext<'_>) -> AgentOutput {
    state.pending = None;
    let prefs = state.prefs.complete().expect("sufficient preferences are complete");
    state.advance(Phase::Generate);
    let candidates = match generate_candidates(ctx.graph, ctx.sensor, ctx.n_sensors) {
        Ok(c) => c,
        Err(status) => {
            state.advance(Phase::Done);
            state.infeasible = Some(status.clone());
            let text = format!("I could not find a feasible placement ({}).", status.reasons().join(", "));
            return AgentOutput::NoFeasiblePlacement { status, text };
        }
    };
    state.advance(Phase::Score);
    let scored = ctx
        .client
        .and_then(|c| match llm_recommendations(state, ctx, c, &candidates, &prefs) {
            Ok(r) => Some(r),
            Err(reason) => {
                degrade(state, &reason);
                None
            }
        })
        .unwrap_or_else(|| score_all(&candidates, &prefs, ctx.graph, ctx.sensor, ctx.profile, ctx.rules));
    let ranked = select(scored).expect("candidates are non-empty");
    state.recommendations = ranked.ranked;
    state.advance(Phase::Present);
    page(state, ctx)
}

fn llm_recommendations(
    state: &mut DialogState,
    ctx: &DialogContext<'_>,
    client: &dyn ChatClient,
    candidates: &[Placement],
    prefs: &UserPreferences,
) -> Result<Vec<Recommendation>, String> {
    let listing: Vec<String> = candidates
        .iter()
        .map(|p| format!("{} {} {} {}", p.surface, p.outlet, p.gain, p.cable_len_m))
        .collect();
    let mut messages = history(state);
    messages.push(ChatMessage::user(llm::render(
        llm::RECOMMEND_TEMPLATE,
        &[
            ("preferences", &serde_json::to_string(prefs).expect("serialize")),
            ("candidates", &listing.join("\n")),
        ],
    )));
    let request = ChatRequest {
        model: client.model().to_string(),
        system: system_prompt(ctx),
        messages,
    };
    let reply = client.complete(&request).map_err(|e| e.to_string())?;
    let directives = llm::parse_reply(&reply).map_err(|e| e.to_string())?;
    let mut out: Vec<Recommendation> = Vec::new();
    for d in directives {
        let Directive::Recommend { surface, outlet, gain, perf, ux } = d else { continue };
        let found = candidates
            .iter()
            .find(|p| p.surface == surface && p.outlet == outlet && p.gain == gain);
        let Some(p) = found else {
            let probe = Placement {
                surface: surface.clone(),
                outlet: outlet.clone(),
                gain,
                orientation: super::candidates::Orientation::Upright,
                cable_len_m: 0.0,
            };
            let why = check_feasible(ctx.graph, ctx.sensor, &probe)
                .err()
                .map_or_else(|| "not a candidate".to_string(), |v| v.to_string());
            state.say(Speaker::System, format!("[rejected] {surface}/{outlet}/g{gain}: {why}"));
            continue;
        };
        if out.iter().any(|r| r.placement == *p) {
            continue;
        }
        debug_assert!(check_feasible(ctx.graph, ctx.sensor, p).is_ok());
        let r = Recommendation::new(p.clone(), perf, ux, String::new(), Source::Llm);
        let rationale = format!("suggested by the assistant; {}", super::candidates::rationale(ctx.graph, p, r.perf_score, r.ux_score));
        out.push(Recommendation { rationale, ..r });
    }
    if out.is_empty() {
        Err("no feasible suggestion in reply".into())
    } else {
        Ok(out)
    }
}

fn page(state: &mut DialogState, ctx: &DialogContext<'_>) -> AgentOutput {
    let start = state.shown;
    let end = (start + ctx.page_size.max(1)).min(state.recommendations.len());
    state.shown = end;
    AgentOutput::Recommendations {
        items: state.recommendations[start..end].to_vec(),
        remaining: state.recommendations.len() - end,
    }
}

fn present(state: &mut DialogState, message: &str, ctx: &DialogContext<'_>) -> AgentOutput {
    let lower = message.to_lowercase();
    let words: Vec<&str> = lower
        .split(|c: char| !c.is_ascii_alphanumeric() && c != '_')
        .filter(|w| !w.is_empty())
        .collect();
    let has = |ws: &[&str]| words.iter().any(|w| ws.contains(w));
    if has(&["accept", "select", "choose", "take", "yes", "ok", "okay"]) {
        let n = words.iter().find_map(|w| w.parse::<usize>().ok()).unwrap_or(1);
        if n == 0 || n > state.shown {
            return AgentOutput::Info {
                text: format!("Please pick a number between 1 and {}.", state.shown),
            };
        }
        state.selected = Some(n - 1);
        state.advance(Phase::Done);
        return AgentOutput::Accepted {
            recommendation: state.recommendations[n - 1].clone(),
        };
    }
    if has(&["more", "next", "alternative", "alternatives", "other", "others"]) {
        if state.shown >= state.recommendations.len() {
            return AgentOutput::Info {
                text: "There are no further alternatives.".into(),
            };
        }
        return page(state, ctx);
    }
    if let Some(text) = surface_answer(message, ctx) {
        return AgentOutput::Info { text };
    }
    AgentOutput::Info {
        text: "Say 'accept <n>' to choose a placement or 'more' for alternatives.".into(),
    }
}

fn surface_answer(message: &str, ctx: &DialogContext<'_>) -> Option<String> {
    if !message.contains('?') {
        return None;
    }
    let norm = message.to_lowercase().replace([' ', '-'], "_");
    let surface = ctx
        .graph
        .surfaces
        .keys()
        .filter(|id| norm.contains(&id.to_lowercase()))
        .max_by_key(|id| id.len())?;
    let feasible = generate_candidates(ctx.graph, ctx.sensor, 1)
        .ok()
        .and_then(|c| c.into_iter().find(|p| &p.surface == surface));
    let s = &ctx.graph.surfaces[surface];
    Some(match feasible {
        Some(p) => format!(
            "Yes, {surface} in the {} can hold the sensor, powered from {} over {} m. ",
            s.room, p.outlet, p.cable_len_m
        ),
        None => format!("No, {surface} cannot hold the sensor: no outlet within cable reach or it is not upright. "),
    })
}

const YES: &[&str] = &["yes", "y", "yeah", "yep", "true", "likely", "definitely", "sure", "please"];
const NO: &[&str] = &["no", "n", "nope", "false", "not", "unlikely", "never", "none"];

fn parse_bool_answer(text: &str) -> Option<bool> {
    let lower = text.to_lowercase();
    let words: Vec<&str> = lower.split(|c: char| !c.is_ascii_alphanumeric()).filter(|w| !w.is_empty()).collect();
    let yes = words.iter().any(|w| YES.contains(w));
    let no = words.iter().any(|w| NO.contains(w));
    match (yes, no) {
        (true, false) => Some(true),
        (false, true) => Some(false),
        _ => None,
    }
}

fn parse_scale(text: &str) -> Option<u8> {
    const WORDS: [&str; 5] = ["one", "two", "three", "four", "five"];
    let lower = text.to_lowercase();
    lower
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| !w.is_empty())
        .find_map(|w| {
            w.parse::<u8>()
                .ok()
                .or_else(|| WORDS.iter().position(|x| *x == w).map(|i| i as u8 + 1))
        })
        .filter(|v| (1..=5).contains(v))
}

fn parse_activities(text: &str) -> Option<Vec<ActivityKind>> {
    let lower = text.to_lowercase();
    let mut kinds = Vec::new();
    for w in lower.split(|c: char| !(c.is_ascii_alphanumeric() || c == '_')).filter(|w| !w.is_empty()) {
        let stem = w.strip_suffix('s').unwrap_or(w);
        if let Ok(k) = w.parse::<ActivityKind>().or_else(|_| stem.parse::<ActivityKind>()) {
            kinds.push(k);
        } else if let Ok(tag) = w.parse::<CareTag>() {
            kinds.extend(ActivityKind::ALL.into_iter().filter(|k| k.care_tag() == tag));
        }
    }
    kinds.sort_unstable();
    kinds.dedup();
    (!kinds.is_empty()).then_some(kinds)
}

fn apply_answer(prefs: &mut PartialPreferences, field: PrefField, text: &str) -> bool {
    match field {
        PrefField::PrivacyConcern => parse_scale(text).map(|v| prefs.privacy_concern = Some(v)).is_some(),
        PrefField::TamperRisk => parse_bool_answer(text).map(|v| prefs.tamper_risk = Some(v)).is_some(),
        PrefField::TargetActivities => parse_activities(text).map(|v| prefs.target_activities = Some(v)).is_some(),
        PrefField::DiscretionRequired => parse_bool_answer(text).map(|v| prefs.discretion_required = Some(v)).is_some(),
    }
}

/// Reads explicit `field=value` statements anywhere in a message.
fn apply_assignments(prefs: &mut PartialPreferences, text: &str) -> bool {
    let mut any = false;
    for token in text.split_whitespace() {
        let Some((k, v)) = token.split_once('=') else { continue };
        let Ok(field) = k.parse::<PrefField>() else { continue };
        any |= apply_answer(prefs, field, &v.replace(',', " "));
    }
    any
}
