//! Built-in fixture data: a 20-task simulated suite, grounding records
//! rendered from its screens, a mixed offline-replay set and a seeded
//! desktop-script set. Everything is deterministic.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::action::{NormalizedPoint, OperationKind, ScreenDims};
use crate::backends::ScriptBook;
use crate::geometry::NormRect;
use crate::metrics::{
    Category, GroundingRecord, IndexedBox, IndexedPoint, IndexedValue, OfflineStepRecord, OmniPrediction,
    OmniRecord, Platform,
};
use crate::parsing::StructuredStep;
use crate::sim::{render_png, Element, EnvSpec, Goal, Rgb, ScreenModel, Transition, WILDCARD};
use crate::suite::{GoldStep, SuiteTask, TaskSuite};

pub const SUITE_DIMS: ScreenDims = ScreenDims {
    width: 640,
    height: 480,
};

const HEADER_FILL: Rgb = [40, 60, 110];
const PANEL_FILL: Rgb = [232, 234, 240];
const DISTRACTOR_FILL: Rgb = [190, 190, 196];
const BACKGROUND: Rgb = [250, 250, 250];

const DISTRACTORS: [(&str, &str); 8] = [
    ("help link", "Help"),
    ("sign in button", "Sign in"),
    ("language menu", "EN"),
    ("notifications bell icon", ""),
    ("cart summary badge", "Cart"),
    ("footer privacy link", "Privacy"),
    ("chat support bubble", ""),
    ("share icon", ""),
];

const SLOTS: [[f64; 4]; 6] = [
    [0.04, 0.11, 0.22, 0.17],
    [0.78, 0.11, 0.96, 0.17],
    [0.04, 0.88, 0.22, 0.94],
    [0.78, 0.88, 0.96, 0.94],
    [0.04, 0.62, 0.16, 0.70],
    [0.84, 0.62, 0.96, 0.70],
];

struct Act {
    title: &'static str,
    id: &'static str,
    desc: &'static str,
    label: &'static str,
    bbox: [f64; 4],
    op: OperationKind,
    value: Option<&'static str>,
    effect: Option<&'static str>,
    panel: bool,
}

impl Act {
    fn effect(mut self, e: &'static str) -> Self {
        self.effect = Some(e);
        self
    }

    fn panel(mut self) -> Self {
        self.panel = true;
        self
    }
}

fn act(
    title: &'static str,
    op: OperationKind,
    id: &'static str,
    desc: &'static str,
    label: &'static str,
    bbox: [f64; 4],
    value: Option<&'static str>,
) -> Act {
    Act {
        title,
        id,
        desc,
        label,
        bbox,
        op,
        value,
        effect: None,
        panel: false,
    }
}

fn click(title: &'static str, id: &'static str, desc: &'static str, label: &'static str, bbox: [f64; 4]) -> Act {
    act(title, OperationKind::Click, id, desc, label, bbox, None)
}

fn typ(title: &'static str, id: &'static str, desc: &'static str, bbox: [f64; 4], value: &'static str) -> Act {
    act(title, OperationKind::Type, id, desc, "", bbox, Some(value))
}

fn select(
    title: &'static str,
    id: &'static str,
    desc: &'static str,
    label: &'static str,
    bbox: [f64; 4],
    value: &'static str,
) -> Act {
    act(title, OperationKind::Select, id, desc, label, bbox, Some(value))
}

fn scroll(title: &'static str, id: &'static str, desc: &'static str, bbox: [f64; 4], amount: &'static str) -> Act {
    act(title, OperationKind::Scroll, id, desc, "", bbox, Some(amount))
}

/// The keyboard focus target is drawn as a window element so locators have
/// something to point at; the transition itself is screen-level.
fn hotkey(title: &'static str, desc: &'static str, combo: &'static str) -> Act {
    act(title, OperationKind::Hotkey, "window", desc, "", [0.25, 0.2, 0.75, 0.58], Some(combo))
}

struct TaskDef {
    id: &'static str,
    instruction: &'static str,
    acts: Vec<Act>,
    done: &'static str,
}

fn task_defs() -> Vec<TaskDef> {
    let t = |id, instruction, done, acts| TaskDef {
        id,
        instruction,
        acts,
        done,
    };
    vec![
        t("shop_cart", "Search for running shoes and add the blue pair in size 42 to the cart", "Cart", vec![
            typ("Home", "search_box", "product search box", [0.25, 0.1, 0.75, 0.16], "running shoes"),
            click("Results", "blue_shoes", "blue running shoes listing", "Blue runner", [0.35, 0.38, 0.65, 0.62]),
            select("Product", "size", "shoe size dropdown", "Size", [0.55, 0.3, 0.85, 0.36], "42"),
            click("Product sized", "add_cart", "add to cart button", "Add to cart", [0.55, 0.72, 0.85, 0.8])
                .effect("cart=blue_shoes"),
        ]),
        t("email_compose", "Write an email to Dana saying the report is ready and send it", "Sent", vec![
            click("Inbox", "compose", "compose button", "Compose", [0.04, 0.2, 0.2, 0.27]),
            typ("Compose", "to", "recipient field", [0.25, 0.15, 0.9, 0.21], "dana@example.com"),
            typ("Compose to", "body", "message body area", [0.25, 0.3, 0.9, 0.7], "The report is ready"),
            click("Compose body", "send", "send button", "Send", [0.75, 0.75, 0.92, 0.82]).effect("sent=yes"),
        ]),
        t("settings_dark", "Turn on dark mode in the display settings", "Display", vec![
            click("Home", "menu", "main menu button", "Menu", [0.42, 0.44, 0.58, 0.56]),
            click("Menu", "settings", "settings menu item", "Settings", [0.3, 0.45, 0.7, 0.55]).panel(),
            click("Settings", "display", "display section", "Display", [0.3, 0.4, 0.7, 0.6]),
            click("Display options", "dark", "dark mode toggle", "", [0.44, 0.46, 0.56, 0.54]).effect("theme=dark"),
        ]),
        t("flight_search", "Search for one-way flights from Boston to Denver", "Flights", vec![
            click("Trip", "oneway", "one-way trip option", "One way", [0.1, 0.2, 0.3, 0.26]),
            typ("Trip one way", "origin", "departure city field", [0.1, 0.3, 0.45, 0.36], "Boston"),
            typ("Trip origin", "dest", "arrival city field", [0.55, 0.3, 0.9, 0.36], "Denver"),
            click("Trip ready", "search", "search flights button", "Search", [0.35, 0.75, 0.65, 0.83])
                .effect("query=bos-den"),
        ]),
        t("doc_save", "Rename the draft to Q3 plan and save it", "Saved", vec![
            click("Editor", "title", "document title", "Untitled", [0.1, 0.12, 0.6, 0.18]),
            typ("Editor title", "title_input", "title text input", [0.1, 0.12, 0.6, 0.18], "Q3 plan"),
            hotkey("Editor renamed", "document editor", "ctrl+s").effect("saved=yes"),
        ]),
        t("video_play", "Play the cooking video and turn on captions", "Captions", vec![
            click("Feed", "video", "cooking video thumbnail", "Cooking", [0.3, 0.35, 0.7, 0.65]),
            click("Player", "play", "play button", "", [0.45, 0.45, 0.55, 0.55]),
            click("Playing", "captions", "captions button", "CC", [0.4, 0.42, 0.6, 0.58]).effect("captions=on"),
        ]),
        t("calendar_event", "Create a team sync event on Friday", "Event saved", vec![
            click("Week", "friday", "Friday column", "Fri", [0.7, 0.15, 0.84, 0.85]),
            typ("New event", "ev_title", "event title field", [0.3, 0.35, 0.7, 0.41], "Team sync").panel(),
            select("New event titled", "duration", "duration dropdown", "Duration", [0.3, 0.45, 0.7, 0.51], "30 minutes")
                .panel(),
            click("New event timed", "save", "save event button", "Save", [0.55, 0.6, 0.7, 0.67])
                .effect("event=friday")
                .panel(),
        ]),
        t("news_scroll", "Scroll down the news feed and open the weather story", "Story", vec![
            scroll("News", "feed", "news feed list", [0.1, 0.1, 0.9, 0.9], "5"),
            click("News lower", "weather", "weather story headline", "Weather", [0.1, 0.7, 0.6, 0.78]),
            click("Weather story", "bookmark", "bookmark icon", "", [0.85, 0.12, 0.93, 0.2]).effect("bookmarked=weather"),
        ]),
        t("bank_transfer", "Transfer 250 dollars from checking to savings", "Transfer done", vec![
            click("Accounts", "transfer", "transfer funds button", "Transfer", [0.6, 0.2, 0.9, 0.27]),
            select("Transfer", "from", "source account dropdown", "From", [0.2, 0.3, 0.8, 0.36], "Checking"),
            select("Transfer from", "to", "destination account dropdown", "To", [0.2, 0.4, 0.8, 0.46], "Savings"),
            typ("Transfer to", "amount", "amount field", [0.2, 0.55, 0.8, 0.61], "250"),
            click("Transfer amount", "confirm", "confirm transfer button", "Confirm", [0.35, 0.7, 0.65, 0.77])
                .effect("transfer=250"),
        ]),
        t("wifi_connect", "Connect to the Guest wifi network", "Connected", vec![
            click("Status bar", "wifi", "wifi status icon", "", [0.46, 0.46, 0.54, 0.54]),
            click("Networks", "guest", "Guest network entry", "Guest", [0.2, 0.44, 0.8, 0.52]),
            typ("Password", "pw", "wifi password field", [0.25, 0.45, 0.75, 0.53], "welcome123"),
            click("Password typed", "join", "join network button", "Join", [0.4, 0.42, 0.6, 0.58]).effect("wifi=guest"),
        ]),
        t("recipe_save", "Find a lasagna recipe and save it to favorites", "Favorites", vec![
            typ("Recipes", "search", "recipe search box", [0.2, 0.12, 0.8, 0.18], "lasagna"),
            click("Recipe results", "lasagna", "classic lasagna result", "Lasagna", [0.05, 0.3, 0.45, 0.45]),
            click("Lasagna", "favorite", "favorite heart button", "", [0.8, 0.3, 0.92, 0.38]).effect("favorite=lasagna"),
        ]),
        t("profile_photo", "Change the profile photo to the beach picture", "Profile updated", vec![
            click("Profile", "avatar", "profile avatar", "", [0.05, 0.12, 0.2, 0.3]),
            click("Avatar menu", "change", "change photo option", "Change photo", [0.05, 0.32, 0.35, 0.38]),
            click("Gallery", "beach", "beach picture thumbnail", "Beach", [0.55, 0.55, 0.75, 0.75]),
            click("Gallery picked", "apply", "apply photo button", "Apply", [0.7, 0.8, 0.9, 0.87]).effect("photo=beach"),
        ]),
        t("map_directions", "Get walking directions to the central library", "Route", vec![
            typ("Map", "search", "map search field", [0.05, 0.2, 0.6, 0.26], "central library"),
            click("Map results", "place", "central library result", "Central Library", [0.05, 0.3, 0.6, 0.38]),
            click("Place", "directions", "directions button", "Directions", [0.6, 0.75, 0.8, 0.81]),
            click("Directions", "walk", "walking mode tab", "Walk", [0.3, 0.2, 0.45, 0.26]).effect("mode=walk"),
        ]),
        t("terminal_build", "Run the build command in the terminal and then clear the screen", "Clean terminal", vec![
            click("Terminal", "prompt", "terminal prompt line", "$", [0.05, 0.8, 0.95, 0.86]),
            typ("Terminal focused", "input", "terminal input line", [0.05, 0.8, 0.95, 0.86], "make build"),
            hotkey("Terminal typed", "terminal window", "enter"),
            hotkey("Terminal built", "terminal window", "ctrl+l").effect("cleared=yes"),
        ]),
        t("music_playlist", "Add the current song to the Focus playlist", "Added", vec![
            click("Now playing", "more", "more options button", "", [0.46, 0.44, 0.54, 0.56]),
            click("Song menu", "add", "add to playlist option", "Add to playlist", [0.3, 0.42, 0.7, 0.52]),
            click("Playlists", "focus", "Focus playlist entry", "Focus", [0.3, 0.46, 0.7, 0.54]).effect("playlist=focus"),
        ]),
        t("newsletter_signup", "Sign up for the newsletter with the address sam@example.org", "Subscribed", vec![
            scroll("Landing", "page", "landing page body", [0.02, 0.1, 0.98, 0.98], "8"),
            typ("Landing footer", "email", "newsletter email field", [0.1, 0.7, 0.6, 0.76], "sam@example.org"),
            click("Footer email", "consent", "consent checkbox", "", [0.3, 0.8, 0.34, 0.85]),
            click("Footer consent", "subscribe", "subscribe button", "Subscribe", [0.65, 0.7, 0.9, 0.76])
                .effect("newsletter=yes"),
        ]),
        t("file_rename", "Rename the file notes.txt to todo.txt", "Renamed", vec![
            click("Files", "file", "notes.txt file row", "notes.txt", [0.1, 0.25, 0.9, 0.31]),
            hotkey("Files selected", "file browser", "f2"),
            typ("Renaming", "name", "file name input", [0.1, 0.25, 0.9, 0.31], "todo.txt"),
            hotkey("Name typed", "file browser", "enter").effect("renamed=todo.txt"),
        ]),
        t("hotel_book", "Book the cheapest hotel in Lisbon for two guests", "Booked", vec![
            typ("Stays", "city", "destination field", [0.1, 0.2, 0.5, 0.26], "Lisbon"),
            select("Stays city", "guests", "guests dropdown", "Guests", [0.55, 0.2, 0.9, 0.26], "2"),
            click("Stays guests", "search", "search hotels button", "Search", [0.35, 0.3, 0.65, 0.36]),
            select("Hotels", "sort", "sort order dropdown", "Sort", [0.6, 0.12, 0.95, 0.18], "Price: low to high"),
            click("Hotels sorted", "first", "first hotel result", "Casa Azul", [0.05, 0.25, 0.95, 0.4]),
            click("Hotel", "book", "book now button", "Book now", [0.7, 0.8, 0.95, 0.86]).effect("booking=lisbon"),
        ]),
        t("chat_reply", "Reply to Alex with see you at noon", "Replied", vec![
            click("Chats", "alex", "Alex conversation", "Alex", [0.05, 0.2, 0.45, 0.3]),
            typ("Thread", "reply", "reply message box", [0.05, 0.85, 0.8, 0.92], "see you at noon"),
            click("Thread typed", "send", "send message button", "Send", [0.82, 0.85, 0.96, 0.92]).effect("replied=alex"),
        ]),
        t("cookie_pricing", "Accept the cookie banner and choose yearly billing on the pricing page", "Plan", vec![
            click("Landing", "accept", "accept cookies button", "Accept", [0.38, 0.45, 0.62, 0.55]).panel(),
            click("Landing clear", "pricing", "pricing link", "Pricing", [0.44, 0.47, 0.56, 0.53]),
            select("Pricing", "billing", "billing period dropdown", "Billing", [0.3, 0.44, 0.7, 0.52], "Yearly")
                .effect("billing=yearly"),
        ]),
    ]
}

fn slug(s: &str) -> String {
    let mut out = String::new();
    for c in s.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    out.trim_matches('_').to_string()
}

fn rect(b: [f64; 4]) -> NormRect {
    NormRect::new(b[0], b[1], b[2], b[3]).expect("fixture rectangles are well-formed")
}

fn overlaps(a: [f64; 4], b: [f64; 4]) -> bool {
    a[0] < b[2] && b[0] < a[2] && a[1] < b[3] && b[1] < a[3]
}

fn element(id: &str, desc: &str, label: &str, bbox: [f64; 4], fill: Rgb) -> Element {
    Element {
        id: id.into(),
        bbox: rect(bbox),
        description: desc.into(),
        text: (!label.is_empty()).then(|| label.to_string()),
        fill_color: fill,
    }
}

fn target_fill(op: OperationKind) -> Rgb {
    match op {
        OperationKind::Click => [70, 130, 200],
        OperationKind::Type => [255, 255, 255],
        OperationKind::Select => [220, 200, 120],
        OperationKind::Scroll => [210, 225, 210],
        _ => [180, 120, 160],
    }
}

fn screen(title: &str, variant: usize, target: Option<&Act>, panel: bool) -> ScreenModel {
    let mut elements = vec![element("header", &format!("{title} page header"), title, [0.0, 0.0, 1.0, 0.08], HEADER_FILL)];
    if panel {
        elements.push(element("panel", "main content panel", "", [0.02, 0.1, 0.98, 0.82], PANEL_FILL));
    }
    let busy = target.map(|t| t.bbox);
    let free = SLOTS.iter().filter(|s| busy.is_none_or(|b| !overlaps(**s, b)));
    for (k, slot) in free.take(3).enumerate() {
        let (desc, label) = DISTRACTORS[(variant + k) % DISTRACTORS.len()];
        elements.push(element(&format!("d{k}"), desc, label, *slot, DISTRACTOR_FILL));
    }
    if let Some(t) = target {
        elements.push(element(t.id, t.desc, t.label, t.bbox, target_fill(t.op)));
    }
    ScreenModel {
        id: slug(title),
        elements,
        background: BACKGROUND,
    }
}

fn build_task(index: usize, def: &TaskDef) -> SuiteTask {
    let mut screens = Vec::new();
    let mut transitions = Vec::new();
    let mut gold = Vec::new();
    let mut state = BTreeMap::new();
    for (i, a) in def.acts.iter().enumerate() {
        screens.push(screen(a.title, index + i, Some(a), a.panel));
        let to = def.acts.get(i + 1).map(|n| n.title).unwrap_or(def.done);
        let element = if a.op == OperationKind::Hotkey { WILDCARD } else { a.id };
        transitions.push(Transition {
            from_screen: slug(a.title),
            element: element.into(),
            operation: a.op,
            value_pattern: a.value.map(str::to_string),
            to_screen: slug(to),
            state_effect: a.effect.map(str::to_string),
        });
        if let Some((k, v)) = a.effect.and_then(|e| e.split_once('=')) {
            state.insert(k.to_string(), v.to_string());
        }
        gold.push(GoldStep {
            screen: slug(a.title),
            element: (a.op != OperationKind::Hotkey).then(|| a.id.to_string()),
            description: a.desc.into(),
            operation: a.op,
            value: a.value.map(str::to_string),
        });
    }
    let mut done = screen(def.done, index + def.acts.len(), None, false);
    done.elements.push(element("home", "back to home link", "Home", [0.3, 0.3, 0.45, 0.36], DISTRACTOR_FILL));
    gold.push(GoldStep {
        screen: done.id.clone(),
        element: None,
        description: String::new(),
        operation: OperationKind::Stop,
        value: None,
    });
    let done_id = done.id.clone();
    screens.push(done);
    SuiteTask {
        task_id: def.id.into(),
        instruction: def.instruction.into(),
        max_steps: 15,
        env: EnvSpec {
            initial_screen: screens[0].id.clone(),
            screens,
            transitions,
            goal: Goal {
                screen: Some(done_id),
                state,
            },
            render_dims: SUITE_DIMS,
        },
        gold,
    }
}

/// The 20-task suite. Each task takes 3 to 6 actions followed by STOP.
pub fn task_suite() -> TaskSuite {
    TaskSuite {
        tasks: task_defs().iter().enumerate().map(|(i, d)| build_task(i, d)).collect(),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, bytes)
}

fn write_jsonl<T: serde::Serialize>(path: &Path, rows: &[T]) -> std::io::Result<()> {
    let mut buf = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut buf, r).map_err(std::io::Error::other)?;
        buf.write_all(b"\n")?;
    }
    write_file(path, &buf)
}

/// Grounding records for every described element on every suite screen.
/// Writes `images/*.png` and `grounding.jsonl` under `dir`; returns the
/// JSONL path.
pub fn write_grounding_fixture(dir: &Path) -> std::io::Result<PathBuf> {
    const PLATFORMS: [Platform; 3] = [Platform::Mobile, Platform::Desktop, Platform::Web];
    let mut records = Vec::new();
    for (i, t) in task_suite().tasks.iter().enumerate() {
        for s in &t.env.screens {
            let image = PathBuf::from(format!("images/{}__{}.png", t.task_id, s.id));
            write_file(&dir.join(&image), &render_png(s, t.env.render_dims))?;
            for e in s.elements.iter().filter(|e| e.id != "panel") {
                records.push(GroundingRecord {
                    id: format!("{}/{}/{}", t.task_id, s.id, e.id),
                    image: image.clone(),
                    description: e.description.clone(),
                    bbox: e.bbox,
                    category: if e.text.is_some() { Category::Text } else { Category::IconWidget },
                    platform: PLATFORMS[i % 3],
                    screen: Some(s.clone()),
                });
            }
        }
    }
    let path = dir.join("grounding.jsonl");
    write_jsonl(&path, &records)?;
    Ok(path)
}

pub const REPLAY_DIMS: ScreenDims = ScreenDims {
    width: 320,
    height: 240,
};

const FORM: [(&str, &str, [f64; 4]); 10] = [
    ("name", "name field", [0.05, 0.1, 0.45, 0.18]),
    ("email", "email field", [0.55, 0.1, 0.95, 0.18]),
    ("phone", "phone field", [0.05, 0.25, 0.45, 0.33]),
    ("city", "city field", [0.55, 0.25, 0.95, 0.33]),
    ("country", "country dropdown", [0.05, 0.4, 0.45, 0.48]),
    ("size", "size dropdown", [0.55, 0.4, 0.95, 0.48]),
    ("submit", "submit button", [0.05, 0.55, 0.45, 0.63]),
    ("cancel", "cancel button", [0.55, 0.55, 0.95, 0.63]),
    ("help", "help link", [0.05, 0.7, 0.45, 0.78]),
    ("draft", "save draft button", [0.55, 0.7, 0.95, 0.78]),
];

const TYPED: [&str; 5] = ["Netflix", "Seattle", "42", "blue shoes", "alex@example.com"];
const SELECTED: [&str; 4] = ["Large", "Canada", "Express shipping", "2"];
const SPLITS: [&str; 3] = ["test_task", "test_website", "test_domain"];

pub fn replay_screen() -> ScreenModel {
    ScreenModel {
        id: "form".into(),
        elements: FORM
            .iter()
            .map(|(id, desc, b)| element(id, desc, "", *b, [200, 210, 230]))
            .collect(),
        background: BACKGROUND,
    }
}

/// Paths written by [`write_replay_fixture`].
#[derive(Debug, Clone)]
pub struct ReplayFixture {
    pub records: PathBuf,
    /// Per-task scripts for the faithful interpreter.
    pub script: PathBuf,
}

/// 200 recorded steps on one form screen: 140 CLICK, 40 TYPE, 20 SELECT.
///
/// The faithful script gets every TYPE/SELECT step right and grounds it on
/// the target. It mislabels 70 of the clicks as TYPE; 20 of those still name
/// the target element, the remaining 50 and all 70 correctly labeled clicks
/// name a decoy element instead.
pub fn write_replay_fixture(dir: &Path) -> std::io::Result<ReplayFixture> {
    let screen = replay_screen();
    let image = PathBuf::from("images/form.png");
    write_file(&dir.join(&image), &render_png(&screen, REPLAY_DIMS))?;
    let mut records = Vec::new();
    let mut scripts: BTreeMap<String, Vec<StructuredStep>> = BTreeMap::new();
    for i in 0..200usize {
        let t = i % FORM.len();
        let (_, target_desc, target_box) = FORM[t];
        let (_, decoy_desc, _) = FORM[(t + 5) % FORM.len()];
        let mut acceptable = vec![rect(target_box)];
        if i % 7 == 0 {
            acceptable.push(rect(FORM[(t + 1) % FORM.len()].2));
        }
        let (gt_op, gt_value, pred) = if i < 140 {
            let pred = if i % 2 == 0 {
                StructuredStep::new(decoy_desc, "CLICK", None)
            } else if i < 40 {
                StructuredStep::new(target_desc, "TYPE", Some("hello"))
            } else {
                StructuredStep::new(decoy_desc, "TYPE", Some("hello"))
            };
            (OperationKind::Click, None, pred)
        } else if i < 180 {
            let v = TYPED[i % TYPED.len()];
            (OperationKind::Type, Some(v), StructuredStep::new(target_desc, "TYPE", Some(v)))
        } else {
            let v = SELECTED[i % SELECTED.len()];
            (OperationKind::Select, Some(v), StructuredStep::new(target_desc, "SELECT", Some(v)))
        };
        let previous: Vec<StructuredStep> = (0..i % 3)
            .map(|k| StructuredStep::new(FORM[(t + k + 2) % FORM.len()].1, "CLICK", None))
            .collect();
        let task = format!("Replay task {i:03}");
        let mut script = previous.clone();
        script.push(pred);
        scripts.insert(task.clone(), script);
        records.push(OfflineStepRecord {
            id: format!("step-{i:03}"),
            task,
            split: Some(SPLITS[i % SPLITS.len()].into()),
            image: image.clone(),
            screen: Some(screen.clone()),
            previous_actions: previous,
            acceptable_bboxes: acceptable,
            gt_operation: gt_op,
            gt_value: gt_value.map(str::to_string),
        });
    }
    let rec_path = dir.join("replay.jsonl");
    write_jsonl(&rec_path, &records)?;
    let script_path = dir.join("replay_script.json");
    let text = serde_json::to_vec_pretty(&ScriptBook::PerTask(scripts)).map_err(std::io::Error::other)?;
    write_file(&script_path, &text)?;
    Ok(ReplayFixture {
        records: rec_path,
        script: script_path,
    })
}

fn random_box(rng: &mut ChaCha8Rng) -> [f64; 4] {
    let x0 = rng.random_range(0.0..0.8);
    let y0 = rng.random_range(0.0..0.8);
    let w = rng.random_range(0.02..0.2);
    let h = rng.random_range(0.02..0.2);
    [x0, y0, x0 + w, y0 + h]
}

/// `n` seeded desktop-script records. About 70% of predictions reproduce the
/// ground-truth sequence; clicks and values are then perturbed.
pub fn omni_records(n: usize, seed: u64) -> Vec<OmniRecord> {
    use OperationKind::*;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ops = [Click, Click, Click, Type, Hotkey, Scroll, Select];
    let words = ["open", "report", "final", "ctrl+c", "ctrl+v", "draft", "q3", "budget", "enter"];
    (0..n)
        .map(|i| {
            let len = rng.random_range(1..=6);
            let gt_sequence: Vec<OperationKind> = (0..len).map(|_| *ops.choose(&mut rng).unwrap()).collect();
            let mut gt_clicks = Vec::new();
            let mut gt_values = Vec::new();
            let mut clicks = Vec::new();
            let mut values = Vec::new();
            for (k, op) in gt_sequence.iter().enumerate() {
                match op {
                    Click => {
                        let b = random_box(&mut rng);
                        let (cx, cy) = ((b[0] + b[2]) / 2.0, (b[1] + b[3]) / 2.0);
                        let point = if rng.random_bool(0.6) {
                            NormalizedPoint::clamped(cx, cy)
                        } else {
                            NormalizedPoint::clamped(cx + rng.random_range(-0.3..0.3), cy + rng.random_range(-0.3..0.3))
                        };
                        gt_clicks.push(IndexedBox { index: k, bbox: rect(b) });
                        if rng.random_bool(0.95) {
                            clicks.push(IndexedPoint { index: k, point });
                        }
                    }
                    Type | Hotkey | Select => {
                        let n_tok = rng.random_range(1..=3);
                        let gt: Vec<&str> = (0..n_tok).map(|_| *words.choose(&mut rng).unwrap()).collect();
                        let mut pred = gt.clone();
                        if rng.random_bool(0.4) {
                            pred[0] = words.choose(&mut rng).unwrap();
                        }
                        if rng.random_bool(0.2) {
                            pred.push(words.choose(&mut rng).unwrap());
                        }
                        gt_values.push(IndexedValue { index: k, value: gt.join(" ") });
                        values.push(IndexedValue { index: k, value: pred.join(" ") });
                    }
                    _ => {}
                }
            }
            let mut sequence = gt_sequence.clone();
            if rng.random_bool(0.3) {
                if sequence.len() > 1 && rng.random_bool(0.5) {
                    sequence.pop();
                    clicks.retain(|c| c.index < sequence.len());
                    values.retain(|v| v.index < sequence.len());
                } else {
                    let k = rng.random_range(0..sequence.len());
                    sequence[k] = if sequence[k] == Click { Type } else { Click };
                }
            }
            OmniRecord {
                id: format!("omni-{i:03}"),
                split: Some(["desktop", "web"][i % 2].into()),
                gt_sequence,
                gt_clicks,
                gt_values,
                predictions: OmniPrediction {
                    sequence,
                    clicks,
                    values,
                },
            }
        })
        .collect()
}

pub fn write_omni_fixture(dir: &Path) -> std::io::Result<PathBuf> {
    let path = dir.join("omni.jsonl");
    write_jsonl(&path, &omni_records(200, 7))?;
    Ok(path)
}

/// Writes `suite.json` and `suite_script.json`, the gold-step scripts keyed
/// by instruction.
pub fn write_suite_fixture(dir: &Path) -> std::io::Result<PathBuf> {
    let suite = task_suite();
    let path = dir.join("suite.json");
    write_file(&path, &serde_json::to_vec_pretty(&suite).map_err(std::io::Error::other)?)?;
    let script = serde_json::to_vec_pretty(&suite.gold_scripts()).map_err(std::io::Error::other)?;
    write_file(&dir.join("suite_script.json"), &script)?;
    Ok(path)
}

/// Writes the suite JSON, grounding, replay and desktop-script fixtures.
pub fn write_all(dir: &Path) -> std::io::Result<()> {
    write_suite_fixture(dir)?;
    write_grounding_fixture(dir)?;
    write_replay_fixture(dir)?;
    write_omni_fixture(dir)?;
    Ok(())
}
