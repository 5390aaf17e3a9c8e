//! Action model: normalized points, the closed operation set, validated
//! action triplets, and the rule-based command grammar emitted for executors.
//!
//! Grammar (one action per line, ASCII):
//!
//! ```text
//! click(x, y)
//! type(x, y, "text")
//! select(x, y, "option")
//! scroll(x, y, amount)
//! hotkey("combo")
//! stop()
//! ```
//!
//! `x`/`y` are integer pixels; strings escape `"` and `\` with a backslash.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ActionError {
    #[error("unknown operation `{0}`")]
    UnknownOperation(String),
    #[error("operation {0} requires a value")]
    MissingValue(OperationKind),
    #[error("operation {0} takes no value")]
    UnexpectedValue(OperationKind),
    #[error("operation {0} requires a location")]
    MissingLocation(OperationKind),
    #[error("STOP takes no location")]
    UnexpectedLocation,
    #[error("scroll amount `{0}` is not a signed integer")]
    InvalidScrollAmount(String),
    #[error("screen dimensions must be positive, got {width}x{height}")]
    InvalidDims { width: u32, height: u32 },
    #[error("point ({x}, {y}) lies outside the unit square")]
    PointOutOfRange { x: f64, y: f64 },
}

/// A screen position as fractions of width and height, both in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedPoint {
    pub x: f64,
    pub y: f64,
}

impl NormalizedPoint {
    pub const CENTER: NormalizedPoint = NormalizedPoint { x: 0.5, y: 0.5 };

    pub fn new(x: f64, y: f64) -> Result<Self, ActionError> {
        if (0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y) {
            Ok(Self { x, y })
        } else {
            Err(ActionError::PointOutOfRange { x, y })
        }
    }

    /// Clamps each axis into `[0, 1]`. NaN maps to 0.5.
    pub fn clamped(x: f64, y: f64) -> Self {
        fn clamp(v: f64) -> f64 {
            if v.is_nan() {
                0.5
            } else {
                v.clamp(0.0, 1.0)
            }
        }
        Self {
            x: clamp(x),
            y: clamp(y),
        }
    }
}

impl fmt::Display for NormalizedPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScreenDims {
    pub width: u32,
    pub height: u32,
}

impl ScreenDims {
    pub fn new(width: u32, height: u32) -> Result<Self, ActionError> {
        if width == 0 || height == 0 {
            return Err(ActionError::InvalidDims { width, height });
        }
        Ok(Self { width, height })
    }
}

impl fmt::Display for ScreenDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelPoint {
    pub x: u32,
    pub y: u32,
}

/// What kind of value an operation carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueArity {
    None,
    Text,
    SignedAmount,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum OperationKind {
    Click,
    Type,
    Select,
    Scroll,
    Hotkey,
    Stop,
}

impl OperationKind {
    pub const ALL: [OperationKind; 6] = [
        OperationKind::Click,
        OperationKind::Type,
        OperationKind::Select,
        OperationKind::Scroll,
        OperationKind::Hotkey,
        OperationKind::Stop,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OperationKind::Click => "CLICK",
            OperationKind::Type => "TYPE",
            OperationKind::Select => "SELECT",
            OperationKind::Scroll => "SCROLL",
            OperationKind::Hotkey => "HOTKEY",
            OperationKind::Stop => "STOP",
        }
    }

    pub fn arity(self) -> ValueArity {
        match self {
            OperationKind::Click | OperationKind::Stop => ValueArity::None,
            OperationKind::Type | OperationKind::Select | OperationKind::Hotkey => ValueArity::Text,
            OperationKind::Scroll => ValueArity::SignedAmount,
        }
    }

    pub fn takes_value(self) -> bool {
        self.arity() != ValueArity::None
    }

    pub fn needs_location(self) -> bool {
        self != OperationKind::Stop
    }
}

impl fmt::Display for OperationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OperationKind {
    type Err = ActionError;

    /// Case-insensitive, surrounding whitespace ignored.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        OperationKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(t))
            .ok_or_else(|| ActionError::UnknownOperation(t.to_string()))
    }
}

/// One executable step: where, what, and with which value.
///
/// Only constructible through [`validate_triplet`] (or [`ActionTriplet::new`]),
/// so every instance satisfies the arity and location rules.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActionTriplet {
    operation: OperationKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    location: Option<NormalizedPoint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    value: Option<String>,
}

impl ActionTriplet {
    pub fn new(
        operation: OperationKind,
        value: Option<String>,
        location: Option<NormalizedPoint>,
    ) -> Result<Self, ActionError> {
        match (operation.arity(), value.as_deref()) {
            (ValueArity::None, Some(_)) => return Err(ActionError::UnexpectedValue(operation)),
            (ValueArity::Text | ValueArity::SignedAmount, None) => {
                return Err(ActionError::MissingValue(operation))
            }
            (ValueArity::SignedAmount, Some(v)) => {
                v.trim()
                    .parse::<i64>()
                    .map_err(|_| ActionError::InvalidScrollAmount(v.to_string()))?;
            }
            _ => {}
        }
        match (operation.needs_location(), location) {
            (true, None) => return Err(ActionError::MissingLocation(operation)),
            (false, Some(_)) => return Err(ActionError::UnexpectedLocation),
            _ => {}
        }
        if let Some(p) = location {
            NormalizedPoint::new(p.x, p.y)?;
        }
        Ok(Self {
            operation,
            location,
            value,
        })
    }

    pub fn stop() -> Self {
        Self {
            operation: OperationKind::Stop,
            location: None,
            value: None,
        }
    }

    pub fn operation(&self) -> OperationKind {
        self.operation
    }

    pub fn location(&self) -> Option<NormalizedPoint> {
        self.location
    }

    pub fn value(&self) -> Option<&str> {
        self.value.as_deref()
    }
}

impl<'de> Deserialize<'de> for ActionTriplet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            operation: OperationKind,
            location: Option<NormalizedPoint>,
            value: Option<String>,
        }
        let raw = Raw::deserialize(d)?;
        ActionTriplet::new(raw.operation, raw.value, raw.location).map_err(serde::de::Error::custom)
    }
}

/// Builds a triplet from an operation name as a model would write it.
pub fn validate_triplet(
    op: &str,
    value: Option<&str>,
    location: Option<NormalizedPoint>,
) -> Result<ActionTriplet, ActionError> {
    let kind: OperationKind = op.parse()?;
    ActionTriplet::new(kind, value.map(str::to_string), location)
}

/// Maps a normalized point to the pixel grid: round half up, then clamp to
/// the last row/column.
pub fn scale_point(p: NormalizedPoint, dims: ScreenDims) -> PixelPoint {
    fn axis(v: f64, len: u32) -> u32 {
        let px = (v * f64::from(len) + 0.5).floor();
        px.clamp(0.0, f64::from(len - 1)) as u32
    }
    PixelPoint {
        x: axis(p.x, dims.width),
        y: axis(p.y, dims.height),
    }
}

/// One line of the command grammar.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CommandString(String);

impl CommandString {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CommandString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

pub fn serialize_action(a: &ActionTriplet, dims: ScreenDims) -> CommandString {
    let px = a.location.map(|p| scale_point(p, dims));
    let line = match (a.operation, px) {
        (OperationKind::Stop, _) => "stop()".to_string(),
        (OperationKind::Hotkey, _) => format!("hotkey({})", quote(a.value().unwrap_or(""))),
        (OperationKind::Click, Some(p)) => format!("click({}, {})", p.x, p.y),
        (OperationKind::Type, Some(p)) => {
            format!("type({}, {}, {})", p.x, p.y, quote(a.value().unwrap_or("")))
        }
        (OperationKind::Select, Some(p)) => {
            format!("select({}, {}, {})", p.x, p.y, quote(a.value().unwrap_or("")))
        }
        (OperationKind::Scroll, Some(p)) => {
            let amount: i64 = a.value().and_then(|v| v.trim().parse().ok()).unwrap_or(0);
            format!("scroll({}, {}, {})", p.x, p.y, amount)
        }
        // construction guarantees a location for every non-STOP kind
        (_, None) => unreachable!("validated triplet without location"),
    };
    CommandString(line)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("malformed command `{line}`: {reason}")]
pub struct CommandParseError {
    pub line: String,
    pub reason: &'static str,
}

/// A command line parsed back into pixel space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Command {
    pub operation: OperationKind,
    pub pixel: Option<PixelPoint>,
    pub value: Option<String>,
}

enum Arg {
    Int(i64),
    Str(String),
}

fn parse_args(body: &str) -> Option<Vec<Arg>> {
    let mut args = Vec::new();
    let mut chars = body.chars().peekable();
    loop {
        while chars.peek() == Some(&' ') {
            chars.next();
        }
        match chars.peek() {
            None => break,
            Some('"') => {
                chars.next();
                let mut s = String::new();
                loop {
                    match chars.next()? {
                        '\\' => s.push(chars.next()?),
                        '"' => break,
                        c => s.push(c),
                    }
                }
                args.push(Arg::Str(s));
            }
            Some(_) => {
                let mut tok = String::new();
                while let Some(&c) = chars.peek() {
                    if c == ',' {
                        break;
                    }
                    tok.push(c);
                    chars.next();
                }
                args.push(Arg::Int(tok.trim().parse().ok()?));
            }
        }
        while chars.peek() == Some(&' ') {
            chars.next();
        }
        match chars.next() {
            None => break,
            Some(',') => continue,
            Some(_) => return None,
        }
    }
    Some(args)
}

/// Parses one line of the command grammar.
pub fn parse_command(line: &str) -> Result<Command, CommandParseError> {
    let err = |reason| CommandParseError {
        line: line.to_string(),
        reason,
    };
    let line_t = line.trim();
    let open = line_t.find('(').ok_or_else(|| err("missing `(`"))?;
    if !line_t.ends_with(')') {
        return Err(err("missing `)`"));
    }
    let name = &line_t[..open];
    let operation = match name {
        "click" => OperationKind::Click,
        "type" => OperationKind::Type,
        "select" => OperationKind::Select,
        "scroll" => OperationKind::Scroll,
        "hotkey" => OperationKind::Hotkey,
        "stop" => OperationKind::Stop,
        _ => return Err(err("unknown command")),
    };
    let args = parse_args(&line_t[open + 1..line_t.len() - 1]).ok_or_else(|| err("bad arguments"))?;
    let pixel = |a: &Arg, b: &Arg| match (a, b) {
        (Arg::Int(x), Arg::Int(y)) if *x >= 0 && *y >= 0 => Ok(PixelPoint {
            x: u32::try_from(*x).map_err(|_| err("coordinate overflow"))?,
            y: u32::try_from(*y).map_err(|_| err("coordinate overflow"))?,
        }),
        _ => Err(err("coordinates must be non-negative integers")),
    };
    let (pixel, value) = match (operation, args.as_slice()) {
        (OperationKind::Stop, []) => (None, None),
        (OperationKind::Hotkey, [Arg::Str(s)]) => (None, Some(s.clone())),
        (OperationKind::Click, [a, b]) => (Some(pixel(a, b)?), None),
        (OperationKind::Type | OperationKind::Select, [a, b, Arg::Str(s)]) => {
            (Some(pixel(a, b)?), Some(s.clone()))
        }
        (OperationKind::Scroll, [a, b, Arg::Int(n)]) => (Some(pixel(a, b)?), Some(n.to_string())),
        _ => return Err(err("wrong arguments for command")),
    };
    Ok(Command {
        operation,
        pixel,
        value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pt(x: f64, y: f64) -> NormalizedPoint {
        NormalizedPoint::new(x, y).unwrap()
    }

    #[test]
    fn scale_point_examples() {
        let hd = ScreenDims::new(1920, 1080).unwrap();
        assert_eq!(scale_point(pt(0.5, 0.2), hd), PixelPoint { x: 960, y: 216 });
        assert_eq!(scale_point(pt(0.0, 0.0), hd), PixelPoint { x: 0, y: 0 });
        let d = ScreenDims::new(800, 600).unwrap();
        assert_eq!(scale_point(pt(1.0, 1.0), d), PixelPoint { x: 799, y: 599 });
    }

    #[test]
    fn serialize_examples() {
        let click = validate_triplet("CLICK", None, Some(pt(0.5, 0.2))).unwrap();
        assert_eq!(
            serialize_action(&click, ScreenDims::new(1920, 1080).unwrap()).as_str(),
            "click(960, 216)"
        );
        let ty = validate_triplet("TYPE", Some("Netflix"), Some(pt(0.5, 0.05))).unwrap();
        assert_eq!(
            serialize_action(&ty, ScreenDims::new(1000, 1000).unwrap()).as_str(),
            "type(500, 50, \"Netflix\")"
        );
        assert_eq!(
            serialize_action(&ActionTriplet::stop(), ScreenDims::new(10, 10).unwrap()).as_str(),
            "stop()"
        );
    }

    #[test]
    fn serialize_escapes_quotes_and_backslashes() {
        let a = validate_triplet("TYPE", Some(r#"say "hi" \o/"#), Some(pt(0.0, 0.0))).unwrap();
        let cmd = serialize_action(&a, ScreenDims::new(10, 10).unwrap());
        assert_eq!(cmd.as_str(), r#"type(0, 0, "say \"hi\" \\o/")"#);
        let parsed = parse_command(cmd.as_str()).unwrap();
        assert_eq!(parsed.value.as_deref(), Some(r#"say "hi" \o/"#));
    }

    #[test]
    fn hotkey_and_scroll_commands() {
        let dims = ScreenDims::new(100, 100).unwrap();
        let hk = validate_triplet("hotkey", Some("ctrl+s"), Some(pt(0.3, 0.3))).unwrap();
        assert_eq!(serialize_action(&hk, dims).as_str(), "hotkey(\"ctrl+s\")");
        let sc = validate_triplet("Scroll", Some("-3"), Some(pt(0.3, 0.3))).unwrap();
        assert_eq!(serialize_action(&sc, dims).as_str(), "scroll(30, 30, -3)");
        assert_eq!(
            validate_triplet("SCROLL", Some("down"), Some(pt(0.3, 0.3))),
            Err(ActionError::InvalidScrollAmount("down".into()))
        );
    }

    #[test]
    fn validate_examples() {
        assert!(validate_triplet("TYPE", Some("netflix"), Some(pt(0.5, 0.1))).is_ok());
        assert_eq!(
            validate_triplet("CLICK", None, None),
            Err(ActionError::MissingLocation(OperationKind::Click))
        );
        assert_eq!(
            validate_triplet("FROB", None, Some(pt(0.1, 0.1))),
            Err(ActionError::UnknownOperation("FROB".into()))
        );
    }

    #[test]
    fn validate_accepts_exactly_the_arity_cross_product() {
        for kind in OperationKind::ALL {
            for value in [None, Some("5")] {
                for loc in [None, Some(pt(0.4, 0.6))] {
                    let ok = kind.takes_value() == value.is_some()
                        && kind.needs_location() == loc.is_some();
                    let got = validate_triplet(kind.as_str(), value, loc);
                    assert_eq!(got.is_ok(), ok, "{kind} {value:?} {loc:?} -> {got:?}");
                }
            }
        }
    }

    #[test]
    fn malformed_commands_are_rejected() {
        for bad in ["", "click(1)", "click(1, 2", "jump(1, 2)", "type(1, 2, 3)", "click(-1, 2)", "stop(1)", "type(1, 2, \"open)"] {
            assert!(parse_command(bad).is_err(), "{bad}");
        }
    }

    fn arb_triplet() -> impl Strategy<Value = ActionTriplet> {
        let loc = (0.0f64..=1.0, 0.0f64..=1.0).prop_map(|(x, y)| pt(x, y));
        prop_oneof![
            loc.clone().prop_map(|l| ActionTriplet::new(OperationKind::Click, None, Some(l)).unwrap()),
            (loc.clone(), "[ -~]{0,12}").prop_map(|(l, v)| ActionTriplet::new(OperationKind::Type, Some(v), Some(l)).unwrap()),
            (loc.clone(), "[ -~]{0,12}").prop_map(|(l, v)| ActionTriplet::new(OperationKind::Select, Some(v), Some(l)).unwrap()),
            (loc.clone(), -50i64..50).prop_map(|(l, v)| ActionTriplet::new(OperationKind::Scroll, Some(v.to_string()), Some(l)).unwrap()),
            (loc, "[ -~]{1,12}").prop_map(|(l, v)| ActionTriplet::new(OperationKind::Hotkey, Some(v), Some(l)).unwrap()),
            Just(ActionTriplet::stop()),
        ]
    }

    proptest! {
        #[test]
        fn command_round_trip(a in arb_triplet(), w in 1u32..4000, h in 1u32..4000) {
            let dims = ScreenDims::new(w, h).unwrap();
            let cmd = serialize_action(&a, dims);
            prop_assert!(cmd.as_str().is_ascii());
            let parsed = parse_command(cmd.as_str()).unwrap();
            prop_assert_eq!(parsed.operation, a.operation());
            prop_assert_eq!(parsed.value.as_deref(), a.value());
            if let (Some(px), Some(p)) = (parsed.pixel, a.location()) {
                // Half a pixel, except where the last pixel clamps.
                for (v, len, got) in [(p.x, w, px.x), (p.y, h, px.y)] {
                    let err_px = (f64::from(got) - v * f64::from(len)).abs();
                    let clamped = v * f64::from(len) > f64::from(len) - 0.5;
                    prop_assert!(err_px <= 0.5 + 1e-9 || (clamped && err_px <= 1.0 + 1e-9));
                }
            }
        }

        #[test]
        fn scale_point_monotone_and_on_screen(
            a in 0.0f64..=1.0, b in 0.0f64..=1.0, y in 0.0f64..=1.0, w in 1u32..5000, h in 1u32..5000
        ) {
            let dims = ScreenDims::new(w, h).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let p_lo = scale_point(pt(lo, y), dims);
            let p_hi = scale_point(pt(hi, y), dims);
            prop_assert!(p_lo.x <= p_hi.x);
            prop_assert!(p_hi.x < w && p_hi.y < h);
            let q_lo = scale_point(pt(y, lo), dims);
            let q_hi = scale_point(pt(y, hi), dims);
            prop_assert!(q_lo.y <= q_hi.y);
        }
    }
}
