//! Deterministic simulated GUI: screens are element lists, interaction is a
//! declarative transition table, observations are rasterized PNGs.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::action::{
    parse_command, scale_point, ActionTriplet, CommandParseError, OperationKind, PixelPoint,
    ScreenDims,
};
use crate::font;
use crate::geometry::NormRect;

pub type Rgb = [u8; 3];

/// Matches any element in a HOTKEY transition, and any value in a
/// `value_pattern`.
pub const WILDCARD: &str = "*";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Element {
    pub id: String,
    pub bbox: NormRect,
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    pub fill_color: Rgb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenModel {
    pub id: String,
    /// Draw order: later elements paint over earlier ones.
    pub elements: Vec<Element>,
    pub background: Rgb,
}

impl ScreenModel {
    pub fn element(&self, id: &str) -> Option<&Element> {
        self.elements.iter().find(|e| e.id == id)
    }

    /// The topmost element covering `px`, using the same pixel spans the
    /// rasterizer fills.
    pub fn hit_test(&self, px: PixelPoint, dims: ScreenDims) -> Option<&Element> {
        self.elements.iter().rev().find(|e| {
            let (x0, x1, y0, y1) = e.bbox.pixel_span(dims);
            (x0..x1).contains(&px.x) && (y0..y1).contains(&px.y)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub from_screen: String,
    /// Element id, or `*` for screen-level HOTKEY transitions.
    pub element: String,
    pub operation: OperationKind,
    /// Exact value to match; absent or `*` accepts any value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value_pattern: Option<String>,
    pub to_screen: String,
    /// `key=value` assignment applied to the state map.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_effect: Option<String>,
}

impl Transition {
    fn accepts_value(&self, value: Option<&str>) -> bool {
        match self.value_pattern.as_deref() {
            None | Some(WILDCARD) => true,
            Some(p) => value == Some(p),
        }
    }
}

/// Conjunction of an optional screen requirement and required state entries.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Goal {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub screen: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub state: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub screens: Vec<ScreenModel>,
    pub transitions: Vec<Transition>,
    pub initial_screen: String,
    pub goal: Goal,
    pub render_dims: ScreenDims,
}

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid spec at `{pointer}`: {message}")]
    Invalid { pointer: String, message: String },
}

impl SpecError {
    pub(crate) fn at(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        SpecError::Invalid {
            pointer: pointer.into(),
            message: message.into(),
        }
    }

    /// JSON pointer of the offending field, when the spec was readable.
    pub fn pointer(&self) -> Option<&str> {
        match self {
            SpecError::Invalid { pointer, .. } => Some(pointer),
            SpecError::Io { .. } => None,
        }
    }
}

fn json_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => {
                out.push('/');
                out.push_str(&key.replace('~', "~0").replace('/', "~1"));
            }
            Segment::Enum { variant } => {
                out.push('/');
                out.push_str(variant);
            }
            Segment::Unknown => out.push_str("/?"),
        }
    }
    out
}

/// Deserializes `T` from JSON, reporting failures as a JSON pointer.
pub(crate) fn from_json_with_pointer<T: serde::de::DeserializeOwned>(
    text: &str,
) -> Result<T, SpecError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let pointer = json_pointer(e.path());
        SpecError::at(pointer, e.into_inner().to_string())
    })
}

impl EnvSpec {
    pub fn from_json(text: &str) -> Result<Self, SpecError> {
        let spec: EnvSpec = from_json_with_pointer(text)?;
        spec.validate_at("")?;
        Ok(spec)
    }

    /// Checks referential integrity; `base` prefixes every reported pointer.
    pub fn validate_at(&self, base: &str) -> Result<(), SpecError> {
        let at = |p: String, m: String| SpecError::at(format!("{base}{p}"), m);
        if self.render_dims.width == 0 {
            return Err(at("/render_dims/width".into(), "must be positive".into()));
        }
        if self.render_dims.height == 0 {
            return Err(at("/render_dims/height".into(), "must be positive".into()));
        }
        let mut screens: HashMap<&str, &ScreenModel> = HashMap::new();
        for (i, s) in self.screens.iter().enumerate() {
            if screens.insert(&s.id, s).is_some() {
                return Err(at(format!("/screens/{i}/id"), format!("duplicate screen id `{}`", s.id)));
            }
            let mut ids = HashSet::new();
            for (j, e) in s.elements.iter().enumerate() {
                if !ids.insert(e.id.as_str()) {
                    return Err(at(
                        format!("/screens/{i}/elements/{j}/id"),
                        format!("duplicate element id `{}` in screen `{}`", e.id, s.id),
                    ));
                }
                if e.id == WILDCARD {
                    return Err(at(format!("/screens/{i}/elements/{j}/id"), "`*` is reserved".into()));
                }
                if e.bbox.is_degenerate() {
                    return Err(at(
                        format!("/screens/{i}/elements/{j}/bbox"),
                        "element bbox must have x0 < x1 and y0 < y1".into(),
                    ));
                }
            }
        }
        if !screens.contains_key(self.initial_screen.as_str()) {
            return Err(at(
                "/initial_screen".into(),
                format!("unknown screen `{}`", self.initial_screen),
            ));
        }
        let mut keys = HashSet::new();
        for (k, t) in self.transitions.iter().enumerate() {
            let Some(from) = screens.get(t.from_screen.as_str()) else {
                return Err(at(
                    format!("/transitions/{k}/from_screen"),
                    format!("unknown screen `{}`", t.from_screen),
                ));
            };
            match t.operation {
                OperationKind::Stop => {
                    return Err(at(
                        format!("/transitions/{k}/operation"),
                        "STOP cannot trigger a transition".into(),
                    ))
                }
                OperationKind::Hotkey if t.element != WILDCARD => {
                    return Err(at(
                        format!("/transitions/{k}/element"),
                        "HOTKEY transitions are screen-level; use `*`".into(),
                    ))
                }
                OperationKind::Hotkey => {}
                _ if from.element(&t.element).is_none() => {
                    return Err(at(
                        format!("/transitions/{k}/element"),
                        format!("no element `{}` on screen `{}`", t.element, t.from_screen),
                    ))
                }
                _ => {}
            }
            if !screens.contains_key(t.to_screen.as_str()) {
                return Err(at(
                    format!("/transitions/{k}/to_screen"),
                    format!("unknown screen `{}`", t.to_screen),
                ));
            }
            if let Some(effect) = &t.state_effect {
                if parse_effect(effect).is_none() {
                    return Err(at(
                        format!("/transitions/{k}/state_effect"),
                        format!("expected `key=value`, got `{effect}`"),
                    ));
                }
            }
            let pattern = t.value_pattern.as_deref().unwrap_or(WILDCARD);
            if !keys.insert((&t.from_screen, &t.element, t.operation, pattern)) {
                return Err(at(format!("/transitions/{k}"), "duplicate transition key".into()));
            }
        }
        if let Some(goal_screen) = &self.goal.screen {
            if !screens.contains_key(goal_screen.as_str()) {
                return Err(at("/goal/screen".into(), format!("unknown screen `{goal_screen}`")));
            }
        }
        if self.goal.screen.is_none() && self.goal.state.is_empty() {
            return Err(at("/goal".into(), "goal needs a screen or state condition".into()));
        }
        Ok(())
    }
}

fn parse_effect(effect: &str) -> Option<(&str, &str)> {
    let (k, v) = effect.split_once('=')?;
    let k = k.trim();
    (!k.is_empty()).then_some((k, v.trim()))
}

/// What the agent sees: a PNG screenshot. Local backends may also read the
/// screen model; remote ones get pixels only.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub png: Vec<u8>,
    pub dims: ScreenDims,
    pub screen_model: Option<ScreenModel>,
}

impl Observation {
    /// Drops the screen model.
    pub fn pixels_only(&self) -> Observation {
        Observation {
            png: self.png.clone(),
            dims: self.dims,
            screen_model: None,
        }
    }

    /// Hex SHA-256 of the PNG bytes.
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(&self.png);
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ApplyOutcome {
    Transitioned { to: String },
    NoOp,
    Stopped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RenderOptions {
    pub labels: bool,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self { labels: true }
    }
}

fn ink_for(fill: Rgb) -> Rgb {
    let luma = 299 * u32::from(fill[0]) + 587 * u32::from(fill[1]) + 114 * u32::from(fill[2]);
    if luma > 128_000 {
        [0, 0, 0]
    } else {
        [255, 255, 255]
    }
}

/// Rasterizes `screen` into packed 8-bit RGB.
pub fn rasterize(screen: &ScreenModel, dims: ScreenDims, opts: RenderOptions) -> Vec<u8> {
    let (w, h) = (dims.width as usize, dims.height as usize);
    let mut buf = Vec::with_capacity(w * h * 3);
    for _ in 0..w * h {
        buf.extend_from_slice(&screen.background);
    }
    let put = |buf: &mut Vec<u8>, x: u32, y: u32, c: Rgb| {
        let i = (y as usize * w + x as usize) * 3;
        buf[i..i + 3].copy_from_slice(&c);
    };
    for e in &screen.elements {
        let (x0, x1, y0, y1) = e.bbox.pixel_span(dims);
        if x0 >= x1 || y0 >= y1 {
            continue;
        }
        let ink = ink_for(e.fill_color);
        for y in y0..y1 {
            for x in x0..x1 {
                let border = x == x0 || x == x1 - 1 || y == y0 || y == y1 - 1;
                put(&mut buf, x, y, if border { ink } else { e.fill_color });
            }
        }
        if !opts.labels {
            continue;
        }
        let label = e.text.as_deref().unwrap_or(&e.id);
        let inner_h = y1 - y0;
        let ox = x0 + 2;
        let oy = y0 + inner_h.saturating_sub(font::GLYPH_HEIGHT) / 2;
        font::for_each_ink(label, |dx, dy| {
            let (x, y) = (ox + dx, oy + dy);
            if x > x0 && x + 1 < x1 && y > y0 && y + 1 < y1 {
                put(&mut buf, x, y, ink);
            }
        });
    }
    buf
}

pub fn encode_png(rgb: &[u8], dims: ScreenDims) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, dims.width, dims.height);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().expect("in-memory png header");
        writer.write_image_data(rgb).expect("in-memory png body");
    }
    out
}

/// Reads the dimensions from a PNG header.
pub fn png_dims(bytes: &[u8]) -> Result<ScreenDims, String> {
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let reader = decoder.read_info().map_err(|e| e.to_string())?;
    let info = reader.info();
    ScreenDims::new(info.width, info.height).map_err(|e| e.to_string())
}

pub fn render_png(screen: &ScreenModel, dims: ScreenDims) -> Vec<u8> {
    encode_png(&rasterize(screen, dims, RenderOptions::default()), dims)
}

/// A running instance of an [`EnvSpec`]. Single-owner; the spec itself is
/// shared.
#[derive(Debug, Clone)]
pub struct Environment {
    spec: Arc<EnvSpec>,
    screen: usize,
    state: BTreeMap<String, String>,
    stopped: bool,
}

pub fn load_env(path: impl AsRef<Path>) -> Result<Environment, SpecError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| SpecError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Environment::new(Arc::new(EnvSpec::from_json(&text)?))
}

impl Environment {
    pub fn new(spec: Arc<EnvSpec>) -> Result<Self, SpecError> {
        spec.validate_at("")?;
        let screen = spec
            .screens
            .iter()
            .position(|s| s.id == spec.initial_screen)
            .expect("validated initial screen");
        Ok(Self {
            spec,
            screen,
            state: BTreeMap::new(),
            stopped: false,
        })
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn screen(&self) -> &ScreenModel {
        &self.spec.screens[self.screen]
    }

    pub fn screen_id(&self) -> &str {
        &self.screen().id
    }

    pub fn state(&self) -> &BTreeMap<String, String> {
        &self.state
    }

    pub fn is_stopped(&self) -> bool {
        self.stopped
    }

    pub fn dims(&self) -> ScreenDims {
        self.spec.render_dims
    }

    pub fn observe(&self) -> Observation {
        Observation {
            png: render_png(self.screen(), self.dims()),
            dims: self.dims(),
            screen_model: Some(self.screen().clone()),
        }
    }

    pub fn apply_action(&mut self, a: &ActionTriplet) -> ApplyOutcome {
        let px = a.location().map(|p| scale_point(p, self.dims()));
        self.apply(a.operation(), px, a.value())
    }

    /// Parses one line of the command grammar and applies it.
    pub fn apply_command(&mut self, line: &str) -> Result<ApplyOutcome, CommandParseError> {
        let cmd = parse_command(line)?;
        Ok(self.apply(cmd.operation, cmd.pixel, cmd.value.as_deref()))
    }

    fn apply(&mut self, op: OperationKind, px: Option<PixelPoint>, value: Option<&str>) -> ApplyOutcome {
        if self.stopped {
            return ApplyOutcome::NoOp;
        }
        if op == OperationKind::Stop {
            self.stopped = true;
            return ApplyOutcome::Stopped;
        }
        let target = if op == OperationKind::Hotkey {
            Some(WILDCARD)
        } else {
            px.and_then(|p| self.screen().hit_test(p, self.dims()))
                .map(|e| e.id.as_str())
        };
        let Some(target) = target else {
            return ApplyOutcome::NoOp;
        };
        let screen_id = self.screen_id();
        let Some(t) = self.spec.transitions.iter().find(|t| {
            t.from_screen == screen_id
                && t.element == target
                && t.operation == op
                && t.accepts_value(value)
        }) else {
            return ApplyOutcome::NoOp;
        };
        let to = t.to_screen.clone();
        if let Some((k, v)) = t.state_effect.as_deref().and_then(parse_effect) {
            self.state.insert(k.to_string(), v.to_string());
        }
        self.screen = self
            .spec
            .screens
            .iter()
            .position(|s| s.id == to)
            .expect("validated transition target");
        ApplyOutcome::Transitioned { to }
    }

    pub fn is_goal(&self) -> bool {
        let goal = &self.spec.goal;
        goal.screen.as_deref().is_none_or(|s| s == self.screen_id())
            && goal.state.iter().all(|(k, v)| self.state.get(k) == Some(v))
    }
}
