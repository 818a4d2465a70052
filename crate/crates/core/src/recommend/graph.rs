//! Environment graph and its line-oriented site description format.
//!
//! ```text
//! # comments start with '#'
//! room kitchen sensitivity=0.2
//! room bedroom sensitivity=0.9
//! adjacent kitchen bedroom
//! surface counter in kitchen material=tile visibility=0.9
//! surface cabinet_shelf in kitchen material=wood visibility=0.1 upright=yes
//! outlet k_out1 in kitchen
//! appliance fridge in kitchen
//! object pillbox on counter tag=medication
//! reach k_out1 counter 0.8
//! sensor gains=1,2,4,8 max_cable=1.5 rate=7000 upright=yes
//! ```
//!
//! Declarations may appear in any order. Every non-room node lives in
//! exactly one room; objects live in the room of their surface. `reach`
//! links an outlet to a surface in the same room with a positive cable
//! length. Rooms must form one connected component over `adjacent`.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::devicesim::CareTag;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Material {
    Wood,
    Laminate,
    Tile,
    Stone,
    Concrete,
    Metal,
    Glass,
    Carpet,
}

impl Material {
    pub const ALL: [Material; 8] = [
        Material::Wood,
        Material::Laminate,
        Material::Tile,
        Material::Stone,
        Material::Concrete,
        Material::Metal,
        Material::Glass,
        Material::Carpet,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Material::Wood => "wood",
            Material::Laminate => "laminate",
            Material::Tile => "tile",
            Material::Stone => "stone",
            Material::Concrete => "concrete",
            Material::Metal => "metal",
            Material::Glass => "glass",
            Material::Carpet => "carpet",
        }
    }
}

impl fmt::Display for Material {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Material {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Material::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown material '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Room {
    /// How private the room is, 0 (public) to 1 (most private).
    pub sensitivity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Surface {
    pub room: String,
    pub material: Material,
    /// How exposed a device on this surface would be, 0 (hidden) to 1.
    pub visibility: f64,
    /// Whether a device can stand upright on it.
    pub upright: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectOfInterest {
    pub surface: String,
    pub tag: CareTag,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EnvironmentGraph {
    pub rooms: BTreeMap<String, Room>,
    pub surfaces: BTreeMap<String, Surface>,
    /// Outlet id to room id.
    pub outlets: BTreeMap<String, String>,
    /// Appliance id to room id.
    pub appliances: BTreeMap<String, String>,
    pub objects: BTreeMap<String, ObjectOfInterest>,
    /// Undirected room adjacency, stored with the smaller id first.
    pub adjacency: BTreeSet<(String, String)>,
    /// `(outlet, surface)` to cable length in metres.
    pub reach: BTreeMap<(String, String), f64>,
}

/// Sensor capabilities and placement constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorSpec {
    /// Selectable amplifier gains, ascending.
    pub gain_options: Vec<u32>,
    pub requires_upright: bool,
    pub max_cable_m: f64,
    pub sampling_rate_hz: f64,
}

impl Default for SensorSpec {
    fn default() -> Self {
        SensorSpec {
            gain_options: vec![1, 2, 4, 8],
            requires_upright: true,
            max_cable_m: 1.5,
            sampling_rate_hz: 7000.0,
        }
    }
}

impl SensorSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.gain_options.is_empty() {
            return Err("gain_options must not be empty".into());
        }
        if !(self.max_cable_m > 0.0) {
            return Err("max_cable must be positive".into());
        }
        Ok(())
    }

    /// Position of `gain` among the options scaled to [0, 1].
    pub fn gain_rank(&self, gain: u32) -> Option<f64> {
        let i = self.gain_options.iter().position(|&g| g == gain)?;
        let n = self.gain_options.len();
        Some(if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 })
    }
}

/// A parsed site description: the environment plus the sensor line if any.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteDescription {
    pub graph: EnvironmentGraph,
    pub sensor: Option<SensorSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    /// 1-based line number; `None` for whole-document problems.
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseErrors(pub Vec<ParseError>);

impl fmt::Display for ParseErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ParseErrors {}

impl EnvironmentGraph {
    pub fn room_of(&self, node: &str) -> Option<&str> {
        if self.rooms.contains_key(node) {
            return Some(self.rooms.get_key_value(node)?.0);
        }
        if let Some(s) = self.surfaces.get(node) {
            return Some(&s.room);
        }
        if let Some(r) = self.outlets.get(node).or_else(|| self.appliances.get(node)) {
            return Some(r);
        }
        let o = self.objects.get(node)?;
        Some(&self.surfaces.get(&o.surface)?.room)
    }

    pub fn neighbours<'a>(&'a self, room: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.adjacency.iter().filter_map(move |(a, b)| {
            if a == room {
                Some(b.as_str())
            } else if b == room {
                Some(a.as_str())
            } else {
                None
            }
        })
    }

    /// Breadth-first hop distance between rooms over adjacency.
    pub fn room_distance<'a>(&'a self, from: &'a str, to: &str) -> Option<usize> {
        if from == to {
            return Some(0);
        }
        let mut seen = BTreeSet::from([from]);
        let mut queue = VecDeque::from([(from, 0usize)]);
        while let Some((room, d)) = queue.pop_front() {
            for n in self.neighbours(room) {
                if n == to {
                    return Some(d + 1);
                }
                if seen.insert(n) {
                    queue.push_back((n, d + 1));
                }
            }
        }
        None
    }

    pub fn is_connected(&self) -> bool {
        let Some(first) = self.rooms.keys().next() else { return true };
        self.rooms.keys().all(|r| self.room_distance(first, r).is_some())
    }

    fn node_kind(&self, id: &str) -> Option<&'static str> {
        if self.rooms.contains_key(id) {
            Some("room")
        } else if self.surfaces.contains_key(id) {
            Some("surface")
        } else if self.outlets.contains_key(id) {
            Some("outlet")
        } else if self.appliances.contains_key(id) {
            Some("appliance")
        } else if self.objects.contains_key(id) {
            Some("object")
        } else {
            None
        }
    }

    pub fn node_count(&self) -> usize {
        self.rooms.len() + self.surfaces.len() + self.outlets.len() + self.appliances.len() + self.objects.len()
    }

    /// Renders the graph in the site description format. Parsing the
    /// output yields an identical graph.
    pub fn to_document(&self) -> String {
        let mut out = String::new();
        for (id, r) in &self.rooms {
            out += &format!("room {id} sensitivity={}\n", r.sensitivity);
        }
        for (a, b) in &self.adjacency {
            out += &format!("adjacent {a} {b}\n");
        }
        for (id, s) in &self.surfaces {
            out += &format!(
                "surface {id} in {} material={} visibility={} upright={}\n",
                s.room,
                s.material,
                s.visibility,
                if s.upright { "yes" } else { "no" }
            );
        }
        for (id, room) in &self.outlets {
            out += &format!("outlet {id} in {room}\n");
        }
        for (id, room) in &self.appliances {
            out += &format!("appliance {id} in {room}\n");
        }
        for (id, o) in &self.objects {
            out += &format!("object {id} on {} tag={}\n", o.surface, o.tag);
        }
        for ((outlet, surface), len) in &self.reach {
            out += &format!("reach {outlet} {surface} {len}\n");
        }
        out
    }
}

impl SensorSpec {
    pub fn to_line(&self) -> String {
        let gains: Vec<String> = self.gain_options.iter().map(|g| g.to_string()).collect();
        format!(
            "sensor gains={} max_cable={} rate={} upright={}",
            gains.join(","),
            self.max_cable_m,
            self.sampling_rate_hz,
            if self.requires_upright { "yes" } else { "no" }
        )
    }
}

pub fn parse_environment(doc: &str) -> Result<EnvironmentGraph, ParseErrors> {
    parse_site(doc).map(|s| s.graph)
}

struct Line<'a> {
    no: usize,
    keyword: &'a str,
    args: Vec<&'a str>,
    attrs: BTreeMap<&'a str, &'a str>,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.')
}

fn parse_bool(v: &str) -> Option<bool> {
    match v {
        "yes" | "true" => Some(true),
        "no" | "false" => Some(false),
        _ => None,
    }
}

pub fn parse_site(doc: &str) -> Result<SiteDescription, ParseErrors> {
    let mut errors = Vec::new();
    let mut err = |line: usize, message: String| errors.push(ParseError { line: Some(line), message });
    let mut lines = Vec::new();
    for (i, raw) in doc.lines().enumerate() {
        let text = raw.split('#').next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        let mut tokens = text.split_whitespace();
        let keyword = tokens.next().expect("non-empty line");
        let mut args = Vec::new();
        let mut attrs = BTreeMap::new();
        for t in tokens {
            match t.split_once('=') {
                Some((k, v)) => {
                    if attrs.insert(k, v).is_some() {
                        err(i + 1, format!("attribute '{k}' given twice"));
                    }
                }
                None => args.push(t),
            }
        }
        lines.push(Line { no: i + 1, keyword, args, attrs });
    }

    let mut g = EnvironmentGraph::default();
    let mut sensor = None;
    let mut declared: BTreeMap<String, usize> = BTreeMap::new();

    // first pass: node declarations
    for l in &lines {
        let is_node = matches!(l.keyword, "room" | "surface" | "outlet" | "appliance" | "object");
        if !is_node {
            continue;
        }
        let Some(&id) = l.args.first() else {
            err(l.no, format!("{} needs an identifier", l.keyword));
            continue;
        };
        if !valid_id(id) {
            err(l.no, format!("invalid identifier '{id}'"));
            continue;
        }
        if let Some(prev) = declared.insert(id.to_string(), l.no) {
            err(l.no, format!("identifier '{id}' already declared on line {prev}"));
            continue;
        }
        let num = |key: &str, lo: f64, hi: f64, default: Option<f64>| -> Result<f64, String> {
            match l.attrs.get(key) {
                None => default.ok_or_else(|| format!("missing attribute '{key}'")),
                Some(v) => match v.parse::<f64>() {
                    Ok(x) if (lo..=hi).contains(&x) => Ok(x),
                    _ => Err(format!("{key}={v} must be a number in [{lo}, {hi}]")),
                },
            }
        };
        let containment = |word: &str| -> Result<String, String> {
            match l.args.as_slice() {
                [_, w, target] if *w == word => Ok(target.to_string()),
                _ => Err(format!("expected '{} <id> {word} <target>'", l.keyword)),
            }
        };
        let result: Result<(), String> = (|| {
            match l.keyword {
                "room" => {
                    if l.args.len() != 1 {
                        return Err("expected 'room <id>'".into());
                    }
                    let sensitivity = num("sensitivity", 0.0, 1.0, Some(0.0))?;
                    g.rooms.insert(id.into(), Room { sensitivity });
                }
                "surface" => {
                    let room = containment("in")?;
                    let material = l
                        .attrs
                        .get("material")
                        .ok_or("missing attribute 'material'")?
                        .parse::<Material>()?;
                    let visibility = num("visibility", 0.0, 1.0, None)?;
                    let upright = match l.attrs.get("upright") {
                        None => true,
                        Some(v) => parse_bool(v).ok_or(format!("upright={v} must be yes or no"))?,
                    };
                    g.surfaces.insert(id.into(), Surface { room, material, visibility, upright });
                }
                "outlet" => {
                    g.outlets.insert(id.into(), containment("in")?);
                }
                "appliance" => {
                    g.appliances.insert(id.into(), containment("in")?);
                }
                "object" => {
                    let surface = containment("on")?;
                    let tag = l.attrs.get("tag").ok_or("missing attribute 'tag'")?.parse::<CareTag>()?;
                    g.objects.insert(id.into(), ObjectOfInterest { surface, tag });
                }
                _ => unreachable!(),
            }
            for k in l.attrs.keys() {
                let allowed: &[&str] = match l.keyword {
                    "room" => &["sensitivity"],
                    "surface" => &["material", "visibility", "upright"],
                    "object" => &["tag"],
                    _ => &[],
                };
                if !allowed.contains(k) {
                    return Err(format!("unknown attribute '{k}' for {}", l.keyword));
                }
            }
            Ok(())
        })();
        if let Err(m) = result {
            err(l.no, m);
        }
    }

    // second pass: edges, references and the sensor line
    for l in &lines {
        match l.keyword {
            "room" | "surface" | "outlet" | "appliance" | "object" => {
                let Some(&id) = l.args.first() else { continue };
                let (target, want) = match l.keyword {
                    "surface" => (g.surfaces.get(id).map(|s| s.room.as_str()), "room"),
                    "outlet" => (g.outlets.get(id).map(String::as_str), "room"),
                    "appliance" => (g.appliances.get(id).map(String::as_str), "room"),
                    "object" => (g.objects.get(id).map(|o| o.surface.as_str()), "surface"),
                    _ => continue,
                };
                if let Some(t) = target {
                    if g.node_kind(t) != Some(want) {
                        err(l.no, format!("'{id}' refers to undeclared {want} '{t}'"));
                    }
                }
            }
            "adjacent" => match l.args.as_slice() {
                [a, b] if l.attrs.is_empty() => {
                    let mut bad = false;
                    for r in [a, b] {
                        if !g.rooms.contains_key(*r) {
                            err(l.no, format!("adjacent refers to undeclared room '{r}'"));
                            bad = true;
                        }
                    }
                    if a == b {
                        err(l.no, format!("room '{a}' cannot be adjacent to itself"));
                    } else if !bad {
                        let key = if a < b { (a.to_string(), b.to_string()) } else { (b.to_string(), a.to_string()) };
                        g.adjacency.insert(key);
                    }
                }
                _ => err(l.no, "expected 'adjacent <room> <room>'".into()),
            },
            "reach" => match l.args.as_slice() {
                [outlet, surface, len] if l.attrs.is_empty() => {
                    let len = match len.parse::<f64>() {
                        Ok(x) if x > 0.0 && x.is_finite() => x,
                        _ => {
                            err(l.no, format!("cable length '{len}' must be a positive number"));
                            continue;
                        }
                    };
                    let o_room = g.outlets.get(*outlet);
                    let s_room = g.surfaces.get(*surface).map(|s| &s.room);
                    if o_room.is_none() {
                        err(l.no, format!("reach refers to undeclared outlet '{outlet}'"));
                    }
                    if s_room.is_none() {
                        err(l.no, format!("reach refers to undeclared surface '{surface}'"));
                    }
                    if let (Some(o), Some(s)) = (o_room, s_room) {
                        if o != s {
                            err(l.no, format!("outlet '{outlet}' ({o}) and surface '{surface}' ({s}) are in different rooms"));
                        } else if g.reach.insert((outlet.to_string(), surface.to_string()), len).is_some() {
                            err(l.no, format!("duplicate reach {outlet} {surface}"));
                        }
                    }
                }
                _ => err(l.no, "expected 'reach <outlet> <surface> <meters>'".into()),
            },
            "sensor" => match parse_sensor(l) {
                Ok(s) if sensor.is_none() => sensor = Some(s),
                Ok(_) => err(l.no, "sensor declared twice".into()),
                Err(m) => err(l.no, m),
            },
            other => err(l.no, format!("unknown node type '{other}'")),
        }
    }

    if errors.is_empty() && !g.is_connected() {
        errors.push(ParseError { line: None, message: "disconnected room graph".into() });
    }
    if errors.is_empty() {
        Ok(SiteDescription { graph: g, sensor })
    } else {
        errors.sort_by_key(|e| e.line);
        Err(ParseErrors(errors))
    }
}

fn parse_sensor(l: &Line<'_>) -> Result<SensorSpec, String> {
    if !l.args.is_empty() {
        return Err("sensor takes only key=value attributes".into());
    }
    let mut spec = SensorSpec::default();
    for (k, v) in &l.attrs {
        match *k {
            "gains" => {
                let mut gains = v
                    .split(',')
                    .map(|g| g.parse::<u32>().map_err(|_| format!("bad gain '{g}'")))
                    .collect::<Result<Vec<_>, _>>()?;
                gains.sort_unstable();
                gains.dedup();
                spec.gain_options = gains;
            }
            "max_cable" => spec.max_cable_m = v.parse().map_err(|_| format!("bad max_cable '{v}'"))?,
            "rate" => spec.sampling_rate_hz = v.parse().map_err(|_| format!("bad rate '{v}'"))?,
            "upright" => spec.requires_upright = parse_bool(v).ok_or(format!("upright={v} must be yes or no"))?,
            other => return Err(format!("unknown sensor attribute '{other}'")),
        }
    }
    spec.validate()?;
    Ok(spec)
}
