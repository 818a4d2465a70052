//! Feasible placements, scored recommendations and equally weighted selection.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::graph::{EnvironmentGraph, SensorSpec};
use super::scoring::{clamp01, score_candidate, ScoringRules, ScriptProfile, UserPreferences};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Upright,
    Flat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub surface: String,
    pub outlet: String,
    pub gain: u32,
    pub orientation: Orientation,
    pub cable_len_m: f64,
}

impl Placement {
    /// `surface/outlet/g<gain>`, the tie-break key for ranking.
    pub fn id(&self) -> String {
        format!("{}/{}/g{}", self.surface, self.outlet, self.gain)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Violation {
    #[error("unknown surface '{0}'")]
    UnknownSurface(String),
    #[error("unknown outlet '{0}'")]
    UnknownOutlet(String),
    #[error("outlet '{outlet}' does not reach surface '{surface}'")]
    NoReach { outlet: String, surface: String },
    #[error("cable reach: {needed_m} m needed, {max_m} m available")]
    CableReach { needed_m: String, max_m: String },
    #[error("surface '{0}' cannot hold the sensor upright")]
    NotUpright(String),
    #[error("gain {0} is not offered by the sensor")]
    Gain(u32),
}

/// Empty candidate set, with how many outlet/surface pairs failed each constraint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Error)]
#[error("no feasible placement: {}", self.reasons().join(", "))]
pub struct NoFeasiblePlacement {
    pub pairs_considered: usize,
    pub cable_reach: usize,
    pub not_upright: usize,
    /// Surfaces no outlet reaches at all.
    pub unreachable_surfaces: usize,
    pub too_few_surfaces: Option<(usize, usize)>,
}

impl NoFeasiblePlacement {
    pub fn reasons(&self) -> Vec<String> {
        let mut r = Vec::new();
        if self.cable_reach > 0 {
            r.push("cable reach".to_string());
        }
        if self.not_upright > 0 {
            r.push("upright surface".to_string());
        }
        if self.pairs_considered == 0 {
            r.push("no outlet reaches any surface".to_string());
        }
        if let Some((have, want)) = self.too_few_surfaces {
            r.push(format!("{have} feasible surfaces for {want} sensors"));
        }
        r
    }
}

fn orientation_for(sensor: &SensorSpec, upright_surface: bool) -> Option<Orientation> {
    match (sensor.requires_upright, upright_surface) {
        (true, false) => None,
        (_, true) => Some(Orientation::Upright),
        (false, false) => Some(Orientation::Flat),
    }
}

/// Checks one placement against the graph and sensor constraints.
pub fn check_feasible(graph: &EnvironmentGraph, sensor: &SensorSpec, p: &Placement) -> Result<(), Violation> {
    let surface = graph
        .surfaces
        .get(&p.surface)
        .ok_or_else(|| Violation::UnknownSurface(p.surface.clone()))?;
    if !graph.outlets.contains_key(&p.outlet) {
        return Err(Violation::UnknownOutlet(p.outlet.clone()));
    }
    let len = *graph
        .reach
        .get(&(p.outlet.clone(), p.surface.clone()))
        .ok_or_else(|| Violation::NoReach {
            outlet: p.outlet.clone(),
            surface: p.surface.clone(),
        })?;
    if len > sensor.max_cable_m {
        return Err(Violation::CableReach {
            needed_m: len.to_string(),
            max_m: sensor.max_cable_m.to_string(),
        });
    }
    if orientation_for(sensor, surface.upright) != Some(p.orientation) {
        return Err(Violation::NotUpright(p.surface.clone()));
    }
    if !sensor.gain_options.contains(&p.gain) {
        return Err(Violation::Gain(p.gain));
    }
    Ok(())
}

/// Every reachable, orientation-compatible (surface, outlet) pair crossed
/// with every gain option, ordered by outlet, surface, gain. Fails when
/// fewer than `n_sensors` distinct surfaces are feasible.
pub fn generate_candidates(
    graph: &EnvironmentGraph,
    sensor: &SensorSpec,
    n_sensors: usize,
) -> Result<Vec<Placement>, NoFeasiblePlacement> {
    let mut out = Vec::new();
    let mut status = NoFeasiblePlacement {
        pairs_considered: graph.reach.len(),
        cable_reach: 0,
        not_upright: 0,
        unreachable_surfaces: graph
            .surfaces
            .keys()
            .filter(|s| !graph.reach.keys().any(|(_, rs)| rs == *s))
            .count(),
        too_few_surfaces: None,
    };
    let mut surfaces = BTreeSet::new();
    for ((outlet, surface), &len) in &graph.reach {
        let s = &graph.surfaces[surface];
        let orientation = orientation_for(sensor, s.upright);
        if len > sensor.max_cable_m {
            status.cable_reach += 1;
        }
        if orientation.is_none() {
            status.not_upright += 1;
        }
        let (Some(orientation), true) = (orientation, len <= sensor.max_cable_m) else { continue };
        surfaces.insert(surface.as_str());
        for &gain in &sensor.gain_options {
            out.push(Placement {
                surface: surface.clone(),
                outlet: outlet.clone(),
                gain,
                orientation,
                cable_len_m: len,
            });
        }
    }
    if out.is_empty() {
        return Err(status);
    }
    if surfaces.len() < n_sensors {
        status.too_few_surfaces = Some((surfaces.len(), n_sensors));
        return Err(status);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Rules,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub placement: Placement,
    pub perf_score: f64,
    pub ux_score: f64,
    pub total: f64,
    pub rationale: String,
    pub source: Source,
}

impl Recommendation {
    /// Clamps both scores to [0, 1] and sets `total` to their mean.
    pub fn new(placement: Placement, perf: f64, ux: f64, rationale: String, source: Source) -> Self {
        let perf_score = clamp01(perf);
        let ux_score = clamp01(ux);
        Recommendation {
            placement,
            perf_score,
            ux_score,
            total: (perf_score + ux_score) / 2.0,
            rationale,
            source,
        }
    }

    pub fn id(&self) -> String {
        self.placement.id()
    }
}

impl fmt::Display for Recommendation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} total={:.3} perf={:.3} ux={:.3}: {}",
            self.id(),
            self.total,
            self.perf_score,
            self.ux_score,
            self.rationale
        )
    }
}

pub fn rationale(graph: &EnvironmentGraph, p: &Placement, perf: f64, ux: f64) -> String {
    let s = &graph.surfaces[&p.surface];
    format!(
        "{} surface in {} ({}, visibility {}), powered from {} over {} m at gain {}; sensing {:.2}, experience {:.2}",
        s.material, s.room, p.surface, s.visibility, p.outlet, p.cable_len_m, p.gain, perf, ux
    )
}

/// Scores every candidate with the rule tables.
pub fn score_all(
    candidates: &[Placement],
    prefs: &UserPreferences,
    graph: &EnvironmentGraph,
    sensor: &SensorSpec,
    profile: &ScriptProfile,
    rules: &ScoringRules,
) -> Vec<Recommendation> {
    candidates
        .iter()
        .map(|p| {
            let (perf, ux) = score_candidate(p, prefs, graph, sensor, profile, rules);
            Recommendation::new(p.clone(), perf, ux, rationale(graph, p, perf, ux), Source::Rules)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("nothing to select from")]
pub struct EmptySelection;

/// Descending total, ties by ascending placement id.
pub fn rank_order(a: &Recommendation, b: &Recommendation) -> Ordering {
    b.total.total_cmp(&a.total).then_with(|| a.id().cmp(&b.id()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranked {
    pub ranked: Vec<Recommendation>,
}

impl Ranked {
    pub fn best(&self) -> &Recommendation {
        &self.ranked[0]
    }

    /// Greedy pick of `n` placements with distinct surfaces and outlets.
    pub fn deployment(&self, n: usize) -> Vec<&Recommendation> {
        let mut surfaces = BTreeSet::new();
        let mut outlets = BTreeSet::new();
        let mut out = Vec::new();
        for r in &self.ranked {
            if out.len() == n {
                break;
            }
            if surfaces.contains(&r.placement.surface) || outlets.contains(&r.placement.outlet) {
                continue;
            }
            surfaces.insert(r.placement.surface.clone());
            outlets.insert(r.placement.outlet.clone());
            out.push(r);
        }
        out
    }
}

pub fn select(mut recs: Vec<Recommendation>) -> Result<Ranked, EmptySelection> {
    if recs.is_empty() {
        return Err(EmptySelection);
    }
    recs.sort_by(rank_order);
    Ok(Ranked { ranked: recs })
}
