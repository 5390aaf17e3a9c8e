//! Extraction of coordinates and labeled action fields from free-form model
//! replies.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{NormalizedPoint, ScreenDims};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("no coordinate pair found in model output")]
    NoCoordinates,
    #[error("no `Action:` field found in model output")]
    MissingAction,
    #[error("operation {0} needs an element description")]
    MissingDescription(String),
}

/// Which alternation of the coordinate grammar matched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PatternFamily {
    /// `(a, b)`, `[a, b]`, or a bare `a, b`.
    ParenPair,
    /// `- X: a - Y: b`, optionally with parenthesized notes after each number.
    DashXy,
    /// `- Top: a - Left: b`; left is x, top is y.
    TopLeft,
    /// `(X: a, Y: b)`.
    ParenXy,
}

impl PatternFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            PatternFamily::ParenPair => "PAREN_PAIR",
            PatternFamily::DashXy => "DASH_XY",
            PatternFamily::TopLeft => "TOP_LEFT",
            PatternFamily::ParenXy => "PAREN_XY",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawPointParse {
    pub x: f64,
    pub y: f64,
    pub pattern_family: PatternFamily,
}

// The four families share one leftmost-first alternation so the earliest
// match in the text wins, whichever family it belongs to. Note the `Left`
// number of the TOP_LEFT family requires a decimal point.
static POINT_RE: LazyLock<Regex> = LazyLock::new(|| {
    let num = r"([-+]?\d*\.\d+|\d+)";
    let pattern = [
        format!(r"[\(\[\s]*{num}\s*,\s*{num}\s*[\)\]\s]*"),
        format!(r"-\s*[Xx]:\s*{num}\s*(?:\([^\)]*\))?\s*-\s*[Yy]:\s*{num}\s*(?:\([^\)]*\))?"),
        format!(r"-\s*[Tt]op:\s*{num}\s*-\s*[Ll]eft:\s*([-+]?\d*\.\d+)"),
        format!(r"\(\s*[Xx]:\s*{num}\s*,\s*[Yy]:\s*{num}\s*\)"),
    ]
    .join("|");
    Regex::new(&pattern).expect("coordinate pattern compiles")
});

/// Finds the first coordinate pair in `text`. Values are returned as written.
pub fn extract_point(text: &str) -> Result<RawPointParse, ParseError> {
    let caps = POINT_RE.captures(text).ok_or(ParseError::NoCoordinates)?;
    let num = |i: usize| -> Option<f64> { caps.get(i).and_then(|m| m.as_str().parse().ok()) };
    let pair = |a: usize, b: usize| Some((num(a)?, num(b)?));
    let (x, y, pattern_family) = if let Some((x, y)) = pair(1, 2) {
        (x, y, PatternFamily::ParenPair)
    } else if let Some((x, y)) = pair(3, 4) {
        (x, y, PatternFamily::DashXy)
    } else if let Some((top, left)) = pair(5, 6) {
        (left, top, PatternFamily::TopLeft)
    } else if let Some((x, y)) = pair(7, 8) {
        (x, y, PatternFamily::ParenXy)
    } else {
        return Err(ParseError::NoCoordinates);
    };
    Ok(RawPointParse {
        x,
        y,
        pattern_family,
    })
}

/// Outcome of [`locate_point`]: the point plus how it was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointParse {
    pub point: NormalizedPoint,
    /// `None` when the fallback center was used.
    pub family: Option<PatternFamily>,
    /// The coordinates were read as pixels and divided by the screen size.
    pub pixels: bool,
}

impl PointParse {
    pub fn fallback(&self) -> bool {
        self.family.is_none()
    }
}

/// Total version of [`extract_point`]: pixel pairs (either value above 1) are
/// divided by `dims`, results are clamped to the unit square, and text with no
/// coordinates yields the screen center.
pub fn locate_point(text: &str, dims: ScreenDims) -> PointParse {
    match extract_point(text) {
        Ok(raw) => {
            let pixels = raw.x > 1.0 || raw.y > 1.0;
            let (x, y) = if pixels {
                (raw.x / f64::from(dims.width), raw.y / f64::from(dims.height))
            } else {
                (raw.x, raw.y)
            };
            PointParse {
                point: NormalizedPoint::clamped(x, y),
                family: Some(raw.pattern_family),
                pixels,
            }
        }
        Err(_) => PointParse {
            point: NormalizedPoint::CENTER,
            family: None,
            pixels: false,
        },
    }
}

pub fn point_with_fallback(text: &str, dims: ScreenDims) -> NormalizedPoint {
    locate_point(text, dims).point
}

/// The interpreter's intermediate output: element description, operation
/// name (not yet validated), optional value, and any reasoning that preceded
/// the labeled fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredStep {
    pub description: String,
    #[serde(rename = "operation")]
    pub operation_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub rationale: String,
}

impl StructuredStep {
    pub fn new(description: &str, operation: &str, value: Option<&str>) -> Self {
        Self {
            description: description.to_string(),
            operation_name: operation.to_string(),
            value: value.map(str::to_string),
            rationale: String::new(),
        }
    }

    pub fn is_stop(&self) -> bool {
        self.operation_name.trim().eq_ignore_ascii_case("stop")
    }

    /// Renders the labeled-field block that [`parse_structured_step`] reads.
    pub fn to_labeled_text(&self) -> String {
        let mut out = String::new();
        if !self.rationale.is_empty() {
            out.push_str(&self.rationale);
            out.push('\n');
        }
        out.push_str("Action: ");
        out.push_str(&self.operation_name);
        if let Some(v) = &self.value {
            out.push_str("\nValue: ");
            out.push_str(v);
        }
        if !self.description.is_empty() {
            out.push_str("\nElement Description: ");
            out.push_str(&self.description);
        }
        out
    }
}

static LABEL_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?im)(?:^|,)[ \t]*(action|value|element[ \t]+description)[ \t]*:")
        .expect("label pattern compiles")
});

const QUOTE_PAIRS: [(char, char); 7] = [
    ('"', '"'),
    ('\'', '\''),
    ('`', '`'),
    ('`', '\''),
    ('\u{201c}', '\u{201d}'),
    ('\u{2018}', '\u{2019}'),
    ('[', ']'),
];

fn strip_one_layer(s: &str) -> &str {
    let mut chars = s.chars();
    let (Some(first), Some(last)) = (chars.next(), chars.next_back()) else {
        return s;
    };
    for (open, close) in QUOTE_PAIRS {
        if first == open && last == close {
            return &s[open.len_utf8()..s.len() - close.len_utf8()];
        }
    }
    s
}

fn clean_field(raw: &str) -> String {
    let t = raw.trim().trim_end_matches(',').trim();
    strip_one_layer(t).trim().to_string()
}

fn is_placeholder(v: &str) -> bool {
    matches!(
        v.to_ascii_lowercase().as_str(),
        "" | "none" | "null" | "n/a" | "na" | "-"
    )
}

/// Reads `Action:`, `Value:` and `Element Description:` fields (any order,
/// case-insensitive, one per line or comma-separated). The first occurrence
/// of each label wins.
pub fn parse_structured_step(text: &str) -> Result<StructuredStep, ParseError> {
    let labels: Vec<_> = LABEL_RE.captures_iter(text).collect();
    let mut action = None;
    let mut value = None;
    let mut description = None;
    for (i, caps) in labels.iter().enumerate() {
        let whole = caps.get(0).expect("match");
        let end = labels
            .get(i + 1)
            .map(|next| next.get(0).expect("match").start())
            .unwrap_or(text.len());
        let content = clean_field(&text[whole.end()..end]);
        let label = caps[1].to_ascii_lowercase();
        let slot = match label.as_str() {
            "action" => &mut action,
            "value" => &mut value,
            _ => &mut description,
        };
        if slot.is_none() {
            *slot = Some(content);
        }
    }
    let operation_name = action
        .map(|a| a.trim_end_matches('.').trim().to_string())
        .filter(|a| !a.is_empty())
        .ok_or(ParseError::MissingAction)?;
    let rationale = labels
        .first()
        .map(|c| text[..c.get(0).expect("match").start()].trim().to_string())
        .unwrap_or_default();
    let step = StructuredStep {
        description: description.unwrap_or_default(),
        operation_name,
        value: value.filter(|v| !is_placeholder(v)),
        rationale,
    };
    if step.description.is_empty() && !step.is_stop() {
        return Err(ParseError::MissingDescription(step.operation_name));
    }
    Ok(step)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dims(w: u32, h: u32) -> ScreenDims {
        ScreenDims::new(w, h).unwrap()
    }

    #[test]
    fn extract_examples() {
        let p = extract_point("[0.50, 0.20]").unwrap();
        assert_eq!((p.x, p.y, p.pattern_family), (0.50, 0.20, PatternFamily::ParenPair));
        let p = extract_point("- Top: 0.30 - Left: 0.70").unwrap();
        assert_eq!((p.x, p.y, p.pattern_family), (0.70, 0.30, PatternFamily::TopLeft));
        let p = extract_point("(X: 0.12, Y: 0.88)").unwrap();
        assert_eq!((p.x, p.y, p.pattern_family), (0.12, 0.88, PatternFamily::ParenXy));
        assert_eq!(
            extract_point("The element is near the top."),
            Err(ParseError::NoCoordinates)
        );
    }

    #[test]
    fn dash_xy_with_annotations() {
        let p = extract_point("- X: 0.41 (left third, roughly) - Y: 0.9 (bottom)").unwrap();
        assert_eq!((p.x, p.y, p.pattern_family), (0.41, 0.9, PatternFamily::DashXy));
    }

    #[test]
    fn first_match_wins() {
        let p = extract_point("first (0.1, 0.2) then (0.3, 0.4)").unwrap();
        assert_eq!((p.x, p.y), (0.1, 0.2));
        let p = extract_point("- Top: 0.2 - Left: 0.6 or maybe (0.9, 0.9)").unwrap();
        assert_eq!(p.pattern_family, PatternFamily::TopLeft);
    }

    #[test]
    fn top_left_requires_decimal_left() {
        // an integer `Left` value does not complete the TOP_LEFT family
        assert!(extract_point("- Top: 0.3 - Left: 1").is_err());
    }

    #[test]
    fn fallback_examples() {
        assert_eq!(point_with_fallback("garbage", dims(100, 100)), NormalizedPoint::CENTER);
        assert_eq!(
            point_with_fallback("(480, 270)", dims(960, 540)),
            NormalizedPoint { x: 0.5, y: 0.5 }
        );
        assert_eq!(
            point_with_fallback("(0.25, 0.75)", dims(960, 540)),
            NormalizedPoint { x: 0.25, y: 0.75 }
        );
    }

    #[test]
    fn out_of_range_values_clamp() {
        let p = point_with_fallback("(-0.2, 0.5)", dims(10, 10));
        assert_eq!(p, NormalizedPoint { x: 0.0, y: 0.5 });
        // 2000 px on a 1000 px screen
        let p = point_with_fallback("(2000, 5)", dims(1000, 1000));
        assert_eq!(p, NormalizedPoint { x: 1.0, y: 0.005 });
    }

    const NETFLIX: &str = "I'll use the search bar to look up the company.\nAction: TYPE, Value: 'Netflix', Element Description: 'Search bar with placeholder text [Search for stocks, ETFs & more]'";

    #[test]
    fn structured_step_worked_example() {
        let s = parse_structured_step(NETFLIX).unwrap();
        assert_eq!(
            s.description,
            "Search bar with placeholder text [Search for stocks, ETFs & more]"
        );
        assert_eq!(s.operation_name, "TYPE");
        assert_eq!(s.value.as_deref(), Some("Netflix"));
        assert_eq!(s.rationale, "I'll use the search bar to look up the company.");
    }

    #[test]
    fn structured_step_stop_and_missing() {
        let s = parse_structured_step("Action: STOP").unwrap();
        assert_eq!((s.description.as_str(), s.operation_name.as_str(), s.value), ("", "STOP", None));
        assert_eq!(
            parse_structured_step("I am not sure what to do."),
            Err(ParseError::MissingAction)
        );
        assert_eq!(
            parse_structured_step("Action: CLICK"),
            Err(ParseError::MissingDescription("CLICK".into()))
        );
    }

    #[test]
    fn structured_step_placeholders_and_case() {
        let s = parse_structured_step("action: click\nvalue: None\nELEMENT DESCRIPTION: `OK button`").unwrap();
        assert_eq!(s.operation_name, "click");
        assert_eq!(s.value, None);
        assert_eq!(s.description, "OK button");
    }

    #[test]
    fn labeled_text_round_trip() {
        let mut step = StructuredStep::new("blue Save button", "CLICK", None);
        step.rationale = "Saving first.".into();
        assert_eq!(parse_structured_step(&step.to_labeled_text()).unwrap(), step);
    }

    fn decimals() -> impl Strategy<Value = String> {
        (0u32..=1_000_000, 1usize..=6).prop_map(|(n, d)| {
            let v = f64::from(n) / 1_000_000.0;
            format!("{v:.d$}")
        })
    }

    proptest! {
        #[test]
        fn fallback_is_total(s in ".*") {
            let p = point_with_fallback(&s, dims(1920, 1080));
            prop_assert!((0.0..=1.0).contains(&p.x) && (0.0..=1.0).contains(&p.y));
        }

        #[test]
        fn pattern_fidelity(a in decimals(), b in decimals(), fam in 0usize..4) {
            let text = match fam {
                0 => format!("[{a}, {b}]"),
                1 => format!("- X: {a} - Y: {b}"),
                2 => format!("- Top: {b} - Left: {a}"),
                _ => format!("(X: {a}, Y: {b})"),
            };
            let p = extract_point(&text).unwrap();
            prop_assert_eq!(p.x, a.parse::<f64>().unwrap());
            prop_assert_eq!(p.y, b.parse::<f64>().unwrap());
        }

        #[test]
        fn top_left_swaps(a in decimals(), b in decimals()) {
            prop_assume!(a != b);
            let p = extract_point(&format!("- Top: {a} - Left: {b}")).unwrap();
            prop_assert_eq!((p.x, p.y), (b.parse::<f64>().unwrap(), a.parse::<f64>().unwrap()));
        }

        #[test]
        fn label_order_insensitive(perm in Just([0usize, 1, 2]).prop_shuffle(), comma in any::<bool>()) {
            let fields = ["Action: TYPE", "Value: `netflix`", "Element Description: \"search field\""];
            let sep = if comma { ", " } else { "\n" };
            let text = format!("Thinking.\n{}", perm.iter().map(|&i| fields[i]).collect::<Vec<_>>().join(sep));
            let s = parse_structured_step(&text).unwrap();
            prop_assert_eq!(s, StructuredStep {
                description: "search field".into(),
                operation_name: "TYPE".into(),
                value: Some("netflix".into()),
                rationale: "Thinking.".into(),
            });
        }
    }
}
