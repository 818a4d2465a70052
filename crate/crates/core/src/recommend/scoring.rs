//! Preference model and the rule tables behind the deterministic expert.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::candidates::Placement;
use super::graph::{EnvironmentGraph, Material, SensorSpec};
use crate::devicesim::ActivityKind;

/// The rule tables shipped with the crate.
pub const DEFAULT_RULES_TOML: &str = include_str!("../../data/scoring_rules.toml");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialRule {
    pub coupling: f64,
    pub preferred_gain_rank: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoringRules {
    pub version: u32,
    pub hop_decay: f64,
    pub no_target_proximity: f64,
    pub gain_mismatch_penalty: f64,
    pub tamper_visibility_penalty: f64,
    pub discretion_visibility_penalty: f64,
    pub privacy_sensitivity_penalty: f64,
    pub materials: BTreeMap<Material, MaterialRule>,
}

#[derive(Debug, Error)]
pub enum RulesError {
    #[error("rule file: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("unsupported rule version {0}")]
    Version(u32),
    #[error("no rule for material '{0}'")]
    MissingMaterial(Material),
    #[error("{0} must lie in [0, 1]")]
    Range(&'static str),
}

impl Default for ScoringRules {
    fn default() -> Self {
        ScoringRules::from_toml(DEFAULT_RULES_TOML).expect("bundled rule file is valid")
    }
}

impl ScoringRules {
    pub const VERSION: u32 = 1;

    pub fn from_toml(text: &str) -> Result<Self, RulesError> {
        let rules: ScoringRules = toml::from_str(text)?;
        rules.validate()?;
        Ok(rules)
    }

    pub fn validate(&self) -> Result<(), RulesError> {
        if self.version != Self::VERSION {
            return Err(RulesError::Version(self.version));
        }
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        for (name, v) in [
            ("hop_decay", self.hop_decay),
            ("no_target_proximity", self.no_target_proximity),
            ("gain_mismatch_penalty", self.gain_mismatch_penalty),
            ("tamper_visibility_penalty", self.tamper_visibility_penalty),
            ("discretion_visibility_penalty", self.discretion_visibility_penalty),
            ("privacy_sensitivity_penalty", self.privacy_sensitivity_penalty),
        ] {
            if !unit(v) {
                return Err(RulesError::Range(name));
            }
        }
        for m in Material::ALL {
            let r = self.materials.get(&m).ok_or(RulesError::MissingMaterial(m))?;
            if !unit(r.coupling) {
                return Err(RulesError::Range("coupling"));
            }
            if !unit(r.preferred_gain_rank) {
                return Err(RulesError::Range("preferred_gain_rank"));
            }
        }
        Ok(())
    }

    pub fn material(&self, m: Material) -> MaterialRule {
        self.materials[&m]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrefField {
    PrivacyConcern,
    TamperRisk,
    TargetActivities,
    DiscretionRequired,
}

impl PrefField {
    pub const ALL: [PrefField; 4] = [
        PrefField::PrivacyConcern,
        PrefField::TamperRisk,
        PrefField::TargetActivities,
        PrefField::DiscretionRequired,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PrefField::PrivacyConcern => "privacy_concern",
            PrefField::TamperRisk => "tamper_risk",
            PrefField::TargetActivities => "target_activities",
            PrefField::DiscretionRequired => "discretion_required",
        }
    }
}

impl fmt::Display for PrefField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PrefField {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PrefField::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| format!("unknown preference field '{s}'"))
    }
}

/// Complete preferences; only built once every field is known.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserPreferences {
    /// 1 (not concerned) to 5 (very concerned).
    pub privacy_concern: u8,
    pub tamper_risk: bool,
    pub target_activities: Vec<ActivityKind>,
    pub discretion_required: bool,
}

impl UserPreferences {
    pub fn validate(&self) -> Result<(), String> {
        if !(1..=5).contains(&self.privacy_concern) {
            return Err(format!("privacy_concern {} outside 1..=5", self.privacy_concern));
        }
        if self.target_activities.is_empty() {
            return Err("target_activities must not be empty".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialPreferences {
    pub privacy_concern: Option<u8>,
    pub tamper_risk: Option<bool>,
    pub target_activities: Option<Vec<ActivityKind>>,
    pub discretion_required: Option<bool>,
}

impl PartialPreferences {
    pub fn missing(&self) -> Vec<PrefField> {
        PrefField::ALL.into_iter().filter(|f| !self.has(*f)).collect()
    }

    pub fn has(&self, field: PrefField) -> bool {
        match field {
            PrefField::PrivacyConcern => self.privacy_concern.is_some(),
            PrefField::TamperRisk => self.tamper_risk.is_some(),
            PrefField::TargetActivities => self.target_activities.as_ref().is_some_and(|t| !t.is_empty()),
            PrefField::DiscretionRequired => self.discretion_required.is_some(),
        }
    }

    pub fn is_sufficient(&self) -> bool {
        self.missing().is_empty()
    }

    pub fn complete(&self) -> Option<UserPreferences> {
        let p = UserPreferences {
            privacy_concern: self.privacy_concern?,
            tamper_risk: self.tamper_risk?,
            target_activities: self.target_activities.clone()?,
            discretion_required: self.discretion_required?,
        };
        p.validate().ok()?;
        Some(p)
    }
}

impl From<UserPreferences> for PartialPreferences {
    fn from(p: UserPreferences) -> Self {
        PartialPreferences {
            privacy_concern: Some(p.privacy_concern),
            tamper_risk: Some(p.tamper_risk),
            target_activities: Some(p.target_activities),
            discretion_required: Some(p.discretion_required),
        }
    }
}

/// Relative frequency of each activity in the household routine. Kinds
/// not listed weigh 1.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScriptProfile {
    pub weights: BTreeMap<ActivityKind, f64>,
}

impl ScriptProfile {
    pub fn weight(&self, kind: ActivityKind) -> f64 {
        self.weights.get(&kind).copied().unwrap_or(1.0).max(0.0)
    }
}

/// Hops from a surface to an object: 0 on the same surface, 1 in the same
/// room, otherwise one plus the room distance.
pub fn hops(graph: &EnvironmentGraph, surface: &str, object: &str) -> Option<usize> {
    let obj = graph.objects.get(object)?;
    if obj.surface == surface {
        return Some(0);
    }
    let a = graph.room_of(surface)?;
    let b = graph.room_of(object)?;
    Some(1 + graph.room_distance(a, b)?)
}

pub fn proximity(
    graph: &EnvironmentGraph,
    surface: &str,
    targets: &[ActivityKind],
    profile: &ScriptProfile,
    rules: &ScoringRules,
) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    let mut kinds: Vec<ActivityKind> = targets.to_vec();
    kinds.sort_unstable();
    kinds.dedup();
    for kind in kinds {
        let w = profile.weight(kind);
        let tag = kind.care_tag();
        let closeness: Vec<f64> = graph
            .objects
            .iter()
            .filter(|(_, o)| o.tag == tag)
            .map(|(id, _)| hops(graph, surface, id).map_or(0.0, |h| rules.hop_decay.powi(h as i32)))
            .collect();
        if closeness.is_empty() || w == 0.0 {
            continue;
        }
        num += w * closeness.iter().sum::<f64>() / closeness.len() as f64;
        den += w;
    }
    if den == 0.0 {
        rules.no_target_proximity
    } else {
        num / den
    }
}

pub fn gain_headroom(sensor: &SensorSpec, material: Material, gain: u32, rules: &ScoringRules) -> f64 {
    let rank = sensor.gain_rank(gain).unwrap_or(0.0);
    let pref = rules.material(material).preferred_gain_rank;
    1.0 - rules.gain_mismatch_penalty * (rank - pref).abs()
}

/// Sensing performance and user experience of a feasible placement.
pub fn score_candidate(
    placement: &Placement,
    prefs: &UserPreferences,
    graph: &EnvironmentGraph,
    sensor: &SensorSpec,
    profile: &ScriptProfile,
    rules: &ScoringRules,
) -> (f64, f64) {
    let surface = &graph.surfaces[&placement.surface];
    let coupling = rules.material(surface.material).coupling;
    let prox = proximity(graph, &placement.surface, &prefs.target_activities, profile, rules);
    let headroom = gain_headroom(sensor, surface.material, placement.gain, rules);
    let perf = coupling * prox * headroom;

    let sensitivity = graph.rooms.get(&surface.room).map_or(0.0, |r| r.sensitivity);
    let mut ux = 1.0;
    if prefs.tamper_risk {
        ux -= surface.visibility * rules.tamper_visibility_penalty;
    }
    if prefs.discretion_required {
        ux -= surface.visibility * rules.discretion_visibility_penalty;
    }
    let privacy = (prefs.privacy_concern.clamp(1, 5) - 1) as f64 / 4.0;
    ux -= privacy * sensitivity * rules.privacy_sensitivity_penalty;
    (clamp01(perf), clamp01(ux))
}

pub fn clamp01(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(0.0, 1.0)
    }
}
