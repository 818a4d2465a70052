//! Seeded random sites and an independent reimplementation of placement
//! enumeration and scoring.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::Rng;
use vibesense::devicesim::ActivityKind;
use vibesense::recommend::UserPreferences;
use vibesense::rng::seeded;

const MATERIALS: [(&str, f64, f64); 8] = [
    ("wood", 1.0, 0.0),
    ("laminate", 0.9, 0.0),
    ("tile", 0.8, 0.33),
    ("stone", 0.7, 0.33),
    ("metal", 0.75, 0.33),
    ("concrete", 0.6, 0.67),
    ("glass", 0.6, 0.67),
    ("carpet", 0.3, 1.0),
];
const TAGS: [&str; 4] = ["mobility", "medication", "matters_most", "mentation"];
const KINDS: [ActivityKind; 5] = [
    ActivityKind::Footstep,
    ActivityKind::ObjectPlace,
    ActivityKind::Shower,
    ActivityKind::MedicationShake,
    ActivityKind::Door,
];

#[derive(Debug, Clone)]
pub struct Site {
    pub doc: String,
    pub sensitivity: BTreeMap<String, f64>,
    pub edges: Vec<(String, String)>,
    /// id -> (room, material, visibility, upright)
    pub surfaces: BTreeMap<String, (String, &'static str, f64, bool)>,
    pub outlets: BTreeMap<String, String>,
    pub reach: BTreeMap<(String, String), f64>,
    /// id -> (surface, tag)
    pub objects: BTreeMap<String, (String, &'static str)>,
    pub gains: Vec<u32>,
    pub max_cable: f64,
    pub requires_upright: bool,
}

fn hundredths(rng: &mut impl Rng, lo: u32, hi: u32) -> f64 {
    rng.random_range(lo..=hi) as f64 / 100.0
}

pub fn random_site(seed: u64) -> Site {
    let mut rng = seeded(seed);
    let n_rooms = rng.random_range(1..=4);
    let rooms: Vec<String> = (0..n_rooms).map(|i| format!("room{i}")).collect();
    let sensitivity: BTreeMap<String, f64> = rooms.iter().map(|r| (r.clone(), hundredths(&mut rng, 0, 100))).collect();
    let mut edges: Vec<(String, String)> = rooms.windows(2).map(|w| (w[0].clone(), w[1].clone())).collect();
    if n_rooms > 2 && rng.random_bool(0.5) {
        edges.push((rooms[0].clone(), rooms[n_rooms - 1].clone()));
    }
    let surfaces: BTreeMap<String, (String, &'static str, f64, bool)> = (0..rng.random_range(1..=7))
        .map(|i| {
            let room = rooms[rng.random_range(0..n_rooms)].clone();
            let m = MATERIALS[rng.random_range(0..MATERIALS.len())].0;
            (format!("surf{i}"), (room, m, hundredths(&mut rng, 0, 100), rng.random_bool(0.8)))
        })
        .collect();
    let outlets: BTreeMap<String, String> =
        (0..rng.random_range(1..=4)).map(|i| (format!("out{i}"), rooms[rng.random_range(0..n_rooms)].clone())).collect();
    let mut reach = BTreeMap::new();
    for (o, oroom) in &outlets {
        for (s, (sroom, ..)) in &surfaces {
            if oroom == sroom && rng.random_bool(0.7) {
                reach.insert((o.clone(), s.clone()), hundredths(&mut rng, 10, 250));
            }
        }
    }
    let surface_ids: Vec<&String> = surfaces.keys().collect();
    let objects: BTreeMap<String, (String, &'static str)> = (0..rng.random_range(0..=4))
        .map(|i| {
            let s = surface_ids[rng.random_range(0..surface_ids.len())].clone();
            (format!("obj{i}"), (s, TAGS[rng.random_range(0..TAGS.len())]))
        })
        .collect();
    let mut gains: Vec<u32> = [1u32, 2, 4, 8, 16].into_iter().filter(|_| rng.random_bool(0.6)).collect();
    if gains.is_empty() {
        gains.push(4);
    }
    let max_cable = hundredths(&mut rng, 80, 200);
    let requires_upright = rng.random_bool(0.7);

    let mut doc = String::new();
    for (r, s) in &sensitivity {
        doc += &format!("room {r} sensitivity={s}\n");
    }
    for (a, b) in &edges {
        doc += &format!("adjacent {a} {b}\n");
    }
    for (id, (room, m, vis, up)) in &surfaces {
        doc += &format!("surface {id} in {room} material={m} visibility={vis} upright={}\n", if *up { "yes" } else { "no" });
    }
    for (id, room) in &outlets {
        doc += &format!("outlet {id} in {room}\n");
    }
    for (id, (s, tag)) in &objects {
        doc += &format!("object {id} on {s} tag={tag}\n");
    }
    for ((o, s), len) in &reach {
        doc += &format!("reach {o} {s} {len}\n");
    }
    let g: Vec<String> = gains.iter().map(|g| g.to_string()).collect();
    doc += &format!(
        "sensor gains={} max_cable={max_cable} rate=7000 upright={}\n",
        g.join(","),
        if requires_upright { "yes" } else { "no" }
    );
    Site { doc, sensitivity, edges, surfaces, outlets, reach, objects, gains, max_cable, requires_upright }
}

pub fn random_prefs(seed: u64) -> UserPreferences {
    let mut rng = seeded(seed ^ 0x9e37);
    let mut targets: Vec<ActivityKind> = KINDS.into_iter().filter(|_| rng.random_bool(0.4)).collect();
    if targets.is_empty() {
        targets.push(KINDS[rng.random_range(0..KINDS.len())]);
    }
    UserPreferences {
        privacy_concern: rng.random_range(1..=5),
        tamper_risk: rng.random_bool(0.5),
        target_activities: targets,
        discretion_required: rng.random_bool(0.5),
    }
}

/// `surface/outlet/g<gain>` for every feasible triple.
pub fn oracle_candidates(site: &Site) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for o in site.outlets.keys() {
        for (s, (_, _, _, upright)) in &site.surfaces {
            let Some(&len) = site.reach.get(&(o.clone(), s.clone())) else { continue };
            if len > site.max_cable || (site.requires_upright && !upright) {
                continue;
            }
            for g in &site.gains {
                out.insert(format!("{s}/{o}/g{g}"));
            }
        }
    }
    out
}

fn room_distance(site: &Site, a: &str, b: &str) -> usize {
    let mut seen = BTreeSet::from([a.to_string()]);
    let mut queue = VecDeque::from([(a.to_string(), 0)]);
    while let Some((r, d)) = queue.pop_front() {
        if r == b {
            return d;
        }
        for (x, y) in &site.edges {
            let next = if *x == r { y } else if *y == r { x } else { continue };
            if seen.insert(next.clone()) {
                queue.push_back((next.clone(), d + 1));
            }
        }
    }
    panic!("rooms {a} and {b} not connected")
}

fn tag_of(kind: ActivityKind) -> &'static str {
    match kind {
        ActivityKind::Footstep | ActivityKind::Door => "mobility",
        ActivityKind::MedicationShake => "medication",
        ActivityKind::ObjectPlace | ActivityKind::Shower => "matters_most",
        ActivityKind::Idle => "mentation",
    }
}

/// (perf, ux) with the bundled rule values.
pub fn oracle_score(site: &Site, prefs: &UserPreferences, surface: &str, gain: u32) -> (f64, f64) {
    let (room, material, vis, _) = &site.surfaces[surface];
    let &(_, coupling, preferred) = MATERIALS.iter().find(|m| m.0 == *material).unwrap();
    let mut kinds = prefs.target_activities.clone();
    kinds.sort();
    kinds.dedup();
    let (mut num, mut den) = (0.0, 0.0);
    for k in kinds {
        let near: Vec<f64> = site
            .objects
            .values()
            .filter(|(_, tag)| *tag == tag_of(k))
            .map(|(s, _)| {
                let hops = if s == surface {
                    0
                } else {
                    1 + room_distance(site, room, &site.surfaces[s].0)
                };
                0.6f64.powi(hops as i32)
            })
            .collect();
        if !near.is_empty() {
            num += near.iter().sum::<f64>() / near.len() as f64;
            den += 1.0;
        }
    }
    let proximity = if den == 0.0 { 0.5 } else { num / den };
    let i = site.gains.iter().position(|&g| g == gain).unwrap();
    let rank = if site.gains.len() == 1 { 0.0 } else { i as f64 / (site.gains.len() - 1) as f64 };
    let perf = coupling * proximity * (1.0 - 0.3 * (rank - preferred).abs());
    let mut ux = 1.0;
    if prefs.tamper_risk {
        ux -= 0.6 * vis;
    }
    if prefs.discretion_required {
        ux -= 0.3 * vis;
    }
    ux -= (prefs.privacy_concern as f64 - 1.0) / 4.0 * site.sensitivity[room] * 0.4;
    (perf.clamp(0.0, 1.0), ux.clamp(0.0, 1.0))
}

/// Ids whose oracle total is within `tol` of the best, and that best total.
pub fn oracle_best(site: &Site, prefs: &UserPreferences, tol: f64) -> Option<(BTreeSet<String>, f64)> {
    let totals: Vec<(String, f64)> = oracle_candidates(site)
        .into_iter()
        .map(|id| {
            let mut parts = id.split('/');
            let surface = parts.next().unwrap().to_string();
            parts.next();
            let gain: u32 = parts.next().unwrap()[1..].parse().unwrap();
            let (p, u) = oracle_score(site, prefs, &surface, gain);
            (id, (p + u) / 2.0)
        })
        .collect();
    let best = totals.iter().map(|t| t.1).fold(f64::NEG_INFINITY, f64::max);
    if totals.is_empty() {
        return None;
    }
    Some((totals.into_iter().filter(|t| t.1 >= best - tol).map(|t| t.0).collect(), best))
}
