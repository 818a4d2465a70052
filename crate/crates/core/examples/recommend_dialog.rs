//! Scripted placement dialog against the bundled trade-off site, rules only.
//! With VIBESENSE_LLM_ENDPOINT set, questions are worded by the model instead.

use vibesense::recommend::{dialog_step, parse_site, start, DialogContext, HttpChatClient, ScoringRules, ScriptProfile};

fn main() {
    let site = parse_site(include_str!("../data/sites/tradeoff_home.site")).unwrap();
    let sensor = site.sensor.unwrap();
    let (rules, profile) = (ScoringRules::default(), ScriptProfile::default());
    let client = HttpChatClient::from_env().transpose().unwrap();
    let mut ctx = DialogContext::new(&site.graph, &sensor, &rules, &profile);
    ctx.client = client.as_ref().map(|c| c as _);

    let (mut state, out) = start(&ctx);
    println!("agent: {}", out.text());
    for msg in ["3", "yes", "medication", "yes", "more", "accept 1"] {
        println!("user: {msg}");
        let (next, out) = dialog_step(state, msg, &ctx).unwrap();
        println!("agent: {}", out.text());
        state = next;
    }
    println!("phase {:?}, degraded {}", state.phase, state.degraded);
}
