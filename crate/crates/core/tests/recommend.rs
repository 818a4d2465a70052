mod common;

use std::collections::BTreeSet;
use std::sync::Mutex;

use common::sites::{oracle_best, oracle_candidates, oracle_score, random_prefs, random_site};
use proptest::prelude::*;
use vibesense::devicesim::ActivityKind;
use vibesense::recommend::dialog::fallback_question;
use vibesense::recommend::llm::{ChatRequest, LlmError};
use vibesense::recommend::{
    check_feasible, dialog_step, generate_candidates, parse_environment, parse_site, score_all, select, start,
    AgentOutput, ChatClient, DialogContext, Phase, Placement, PrefField, ScoringRules, ScriptProfile, Source,
    Speaker, UserPreferences, Violation,
};

const TRADEOFF: &str = include_str!("../data/sites/tradeoff_home.site");

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn enumeration_matches_brute_force(seed in any::<u64>()) {
        let site = random_site(seed);
        let parsed = parse_site(&site.doc).unwrap();
        let sensor = parsed.sensor.unwrap();
        let want = oracle_candidates(&site);
        match generate_candidates(&parsed.graph, &sensor, 1) {
            Ok(c) => {
                let got: BTreeSet<String> = c.iter().map(Placement::id).collect();
                prop_assert_eq!(got.len(), c.len(), "duplicate candidates");
                prop_assert_eq!(got, want);
                for p in &c {
                    prop_assert!(check_feasible(&parsed.graph, &sensor, p).is_ok());
                }
            }
            Err(status) => {
                prop_assert!(want.is_empty());
                prop_assert!(!status.reasons().is_empty());
            }
        }
    }

    #[test]
    fn document_round_trip(seed in any::<u64>()) {
        let site = random_site(seed);
        let g = parse_environment(&site.doc).unwrap();
        prop_assert_eq!(parse_environment(&g.to_document()).unwrap(), g);
    }

    #[test]
    fn scores_match_oracle_and_selection_is_argmax(seed in any::<u64>()) {
        let site = random_site(seed);
        let prefs = random_prefs(seed);
        let parsed = parse_site(&site.doc).unwrap();
        let sensor = parsed.sensor.unwrap();
        let Ok(c) = generate_candidates(&parsed.graph, &sensor, 1) else { return Ok(()) };
        let recs = score_all(&c, &prefs, &parsed.graph, &sensor, &ScriptProfile::default(), &ScoringRules::default());
        for r in &recs {
            let (p, u) = oracle_score(&site, &prefs, &r.placement.surface, r.placement.gain);
            prop_assert!((r.perf_score - p).abs() < 1e-12 && (r.ux_score - u).abs() < 1e-12, "{}", r.id());
            prop_assert!((0.0..=1.0).contains(&r.perf_score) && (0.0..=1.0).contains(&r.ux_score));
            prop_assert!((r.total - (r.perf_score + r.ux_score) / 2.0).abs() < 1e-15);
        }
        let ranked = select(recs).unwrap();
        let (ids, best) = oracle_best(&site, &prefs, 1e-12).unwrap();
        prop_assert!(ids.contains(&ranked.best().id()));
        prop_assert!((ranked.best().total - best).abs() < 1e-12);
        for w in ranked.ranked.windows(2) {
            prop_assert!(w[0].total >= w[1].total);
        }
    }
}

#[test]
fn parse_errors_carry_lines() {
    let doc = "room a\nsurface s in b material=wood visibility=0.1\nwidget w\nroom c\n";
    let err = parse_environment(doc).unwrap_err();
    let text = err.to_string();
    assert!(text.contains("line 2") && text.contains("undeclared"), "{text}");
    assert!(text.contains("line 3") && text.contains("unknown node type"), "{text}");
    let disconnected = parse_environment("room a\nroom b\n").unwrap_err().to_string();
    assert!(disconnected.contains("disconnected"), "{disconnected}");
    let cross = "room a\nroom b\nadjacent a b\noutlet o in a\nsurface s in b material=wood visibility=0\nreach o s 1\n";
    assert!(parse_environment(cross).unwrap_err().to_string().contains("different rooms"));
}

#[test]
fn cable_reach_is_reported() {
    let doc = "room a\noutlet o in a\nsurface s in a material=wood visibility=0.2\nreach o s 3.0\n";
    let site = parse_site(doc).unwrap();
    let sensor = site.sensor.unwrap_or_default();
    let status = generate_candidates(&site.graph, &sensor, 1).unwrap_err();
    assert_eq!(status.cable_reach, 1);
    assert!(status.reasons().contains(&"cable reach".to_string()));
    let p = Placement {
        surface: "s".into(),
        outlet: "o".into(),
        gain: 1,
        orientation: vibesense::recommend::Orientation::Upright,
        cable_len_m: 3.0,
    };
    assert!(matches!(check_feasible(&site.graph, &sensor, &p), Err(Violation::CableReach { .. })));
}

struct Fixture {
    graph: vibesense::recommend::EnvironmentGraph,
    sensor: vibesense::recommend::SensorSpec,
    rules: ScoringRules,
    profile: ScriptProfile,
}

fn fixture() -> Fixture {
    let site = parse_site(TRADEOFF).unwrap();
    Fixture { graph: site.graph, sensor: site.sensor.unwrap(), rules: ScoringRules::default(), profile: ScriptProfile::default() }
}

fn run_dialog(ctx: &DialogContext<'_>, answers: &[&str]) -> (vibesense::recommend::DialogState, Vec<AgentOutput>) {
    let (mut state, first) = start(ctx);
    let mut outs = vec![first];
    for a in answers {
        let (s, o) = dialog_step(state, a, ctx).unwrap();
        state = s;
        outs.push(o);
    }
    (state, outs)
}

#[test]
fn golden_four_turn_dialog() {
    let f = fixture();
    let ctx = DialogContext::new(&f.graph, &f.sensor, &f.rules, &f.profile);
    let (state, outs) = run_dialog(&ctx, &["3", "yes", "medication", "yes"]);
    let fields: Vec<PrefField> = outs
        .iter()
        .filter_map(|o| match o {
            AgentOutput::Question { field, .. } => Some(*field),
            _ => None,
        })
        .collect();
    assert_eq!(
        fields,
        [PrefField::PrivacyConcern, PrefField::TamperRisk, PrefField::TargetActivities, PrefField::DiscretionRequired]
    );
    assert_eq!(state.phase, Phase::Present);
    assert_eq!(
        state.prefs.complete().unwrap(),
        UserPreferences {
            privacy_concern: 3,
            tamper_risk: true,
            target_activities: vec![ActivityKind::MedicationShake],
            discretion_required: true,
        }
    );
    let turns: Vec<(Speaker, &str)> = state.transcript.iter().map(|t| (t.speaker, t.text.as_str())).collect();
    assert_eq!(turns.len(), 9);
    assert_eq!(turns[0], (Speaker::Agent, fallback_question(PrefField::PrivacyConcern)));
    assert_eq!(turns[1], (Speaker::User, "3"));
    assert_eq!(turns[2], (Speaker::Agent, fallback_question(PrefField::TamperRisk)));
    assert_eq!(turns[4], (Speaker::Agent, fallback_question(PrefField::TargetActivities)));
    assert_eq!(turns[6], (Speaker::Agent, fallback_question(PrefField::DiscretionRequired)));
    let ids: Vec<String> = state.recommendations.iter().map(|r| r.id()).collect();
    assert_eq!(
        &ids[..4],
        [
            "kitchen_cabinet/kitchen_outlet/g1",
            "kitchen_cabinet/kitchen_outlet/g2",
            "kitchen_counter/kitchen_outlet/g1",
            "kitchen_cabinet/kitchen_outlet/g4",
        ]
    );
    // 2 kitchen surfaces and the hallway floor, 4 gains each
    assert_eq!(ids.len(), 12);
    assert!((state.recommendations[0].total - 0.615).abs() < 1e-12);
    assert!(!state.degraded);
}

#[test]
fn question_asked_mid_dialog_is_answered() {
    let f = fixture();
    let ctx = DialogContext::new(&f.graph, &f.sensor, &f.rules, &f.profile);
    let (state, outs) = run_dialog(&ctx, &["2", "Is it ok to put it on the kitchen_counter?"]);
    let AgentOutput::Question { field, text } = &outs[2] else { panic!("{:?}", outs[2]) };
    assert_eq!(*field, PrefField::TamperRisk);
    assert!(text.contains("kitchen_counter"), "{text}");
    assert_eq!(state.phase, Phase::GatherInfo);
}

#[test]
fn paging_and_acceptance() {
    let f = fixture();
    let ctx = DialogContext::new(&f.graph, &f.sensor, &f.rules, &f.profile);
    let (state, outs) = run_dialog(&ctx, &["privacy_concern=1 tamper_risk=no discretion_required=no target_activities=mobility", "more", "accept 7"]);
    let AgentOutput::Recommendations { items, remaining } = &outs[1] else { panic!("{:?}", outs[1]) };
    assert_eq!((items.len(), *remaining), (5, 7));
    let AgentOutput::Recommendations { items: page2, remaining } = &outs[2] else { panic!() };
    assert_eq!((page2.len(), *remaining), (5, 2));
    let AgentOutput::Accepted { recommendation } = &outs[3] else { panic!("{:?}", outs[3]) };
    assert_eq!(recommendation, &state.recommendations[6]);
    assert_eq!(state.phase, Phase::Done);
    assert_eq!(state.selected, Some(6));
    assert!(dialog_step(state, "more", &ctx).is_err());
}

#[test]
fn infeasible_site_ends_with_status() {
    let site = parse_site("room a\noutlet o in a\nsurface s in a material=tile visibility=0 upright=no\nreach o s 0.5\n").unwrap();
    let (rules, profile, sensor) = (ScoringRules::default(), ScriptProfile::default(), site.sensor.unwrap_or_default());
    let ctx = DialogContext::new(&site.graph, &sensor, &rules, &profile);
    let (state, outs) = run_dialog(&ctx, &["privacy_concern=2 tamper_risk=no discretion_required=yes target_activities=door"]);
    let AgentOutput::NoFeasiblePlacement { status, text } = &outs[1] else { panic!("{:?}", outs[1]) };
    assert_eq!(status.not_upright, 1);
    assert!(text.contains("upright"), "{text}");
    assert_eq!(state.phase, Phase::Done);
}

/// Replays canned replies and records requests.
struct Scripted {
    replies: Mutex<Vec<Result<String, String>>>,
    seen: Mutex<Vec<ChatRequest>>,
}

impl Scripted {
    fn new(replies: Vec<Result<&str, &str>>) -> Self {
        Scripted {
            replies: Mutex::new(replies.into_iter().rev().map(|r| r.map(String::from).map_err(String::from)).collect()),
            seen: Mutex::new(Vec::new()),
        }
    }
}

impl ChatClient for Scripted {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        self.seen.lock().unwrap().push(request.clone());
        match self.replies.lock().unwrap().pop() {
            Some(Ok(s)) => Ok(s),
            Some(Err(e)) => Err(LlmError::Transport(e)),
            None => Err(LlmError::Transport("script exhausted".into())),
        }
    }
}

#[test]
fn assistant_suggestions_are_checked() {
    let f = fixture();
    let client = Scripted::new(vec![
        Ok("The pill organiser sits on the counter, so ask about tampering first.\nASK tamper_risk: Might someone unplug a new gadget?"),
        Ok("RECOMMEND hallway_floor kitchen_outlet 1 perf=0.9 ux=0.9\nRECOMMEND kitchen_counter kitchen_outlet 1 perf=1.4 ux=0.2\nRECOMMEND kitchen_cabinet kitchen_outlet 2 perf=0.5 ux=0.7"),
    ]);
    let ctx = DialogContext { client: Some(&client), ..DialogContext::new(&f.graph, &f.sensor, &f.rules, &f.profile) };
    let (state, outs) = run_dialog(&ctx, &["privacy_concern=3 tamper_risk=yes target_activities=medication discretion_required=yes"]);
    let AgentOutput::Question { field, text } = &outs[0] else { panic!("{:?}", outs[0]) };
    assert_eq!((*field, text.as_str()), (PrefField::TamperRisk, "Might someone unplug a new gadget?"));
    assert!(state.transcript.iter().any(|t| t.speaker == Speaker::System && t.text.starts_with("[rejected] hallway_floor/kitchen_outlet/g1")));
    let ids: Vec<String> = state.recommendations.iter().map(|r| r.id()).collect();
    assert_eq!(ids, ["kitchen_cabinet/kitchen_outlet/g2", "kitchen_counter/kitchen_outlet/g1"]);
    assert_eq!(state.recommendations[1].perf_score, 1.0);
    assert!(state.recommendations.iter().all(|r| r.source == Source::Llm));
    assert!(!state.degraded);
    let seen = client.seen.lock().unwrap();
    assert!(seen[0].system.contains("kitchen_counter"));
    assert!(seen[1].messages.last().unwrap().content.contains("kitchen_cabinet kitchen_outlet 1"));
}

#[test]
fn unusable_assistant_falls_back_to_rules() {
    let f = fixture();
    let client = Scripted::new(vec![Err("connection refused"), Ok("no directives here"), Ok("ASK colour: what colour?")]);
    let ctx = DialogContext { client: Some(&client), ..DialogContext::new(&f.graph, &f.sensor, &f.rules, &f.profile) };
    let (state, outs) = run_dialog(&ctx, &["3", "yes", "medication", "yes"]);
    assert!(state.degraded);
    let fallbacks = state.transcript.iter().filter(|t| t.speaker == Speaker::System && t.text.starts_with("[fallback]")).count();
    assert_eq!(fallbacks, 5);
    assert!(matches!(outs[0], AgentOutput::Question { field: PrefField::PrivacyConcern, .. }));
    let plain = DialogContext::new(&f.graph, &f.sensor, &f.rules, &f.profile);
    let (rules_only, _) = run_dialog(&plain, &["3", "yes", "medication", "yes"]);
    assert_eq!(state.recommendations, rules_only.recommendations);
}
