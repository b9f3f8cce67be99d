//! Synthetic labeled sessions with a planted, graph-structural rule: an
//! event fires iff the file it touches was already touched earlier in the
//! session, and the proposed task names that file. Verbs, apps and time
//! gaps are drawn independently of the label.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::session::{EventRecord, GoldClassTag, SessionRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantedTrigger {
    /// Fire on the second and later touches of a file.
    SecondTouch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantedRouting {
    /// The fired event's file is the routing target.
    TouchedFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticProfile {
    pub coding: f64,
    pub writing: f64,
    pub research: f64,
    pub min_events: usize,
    pub max_events: usize,
    /// Probability that an event touches a file.
    pub file_event_rate: f64,
    /// Probability that a file event picks one of the session's recurring files.
    pub recurring_rate: f64,
    pub min_recurring_files: usize,
    pub max_recurring_files: usize,
    pub trigger: PlantedTrigger,
    pub routing: PlantedRouting,
}

impl Default for SyntheticProfile {
    fn default() -> Self {
        SyntheticProfile {
            coding: 1.0,
            writing: 1.0,
            research: 1.0,
            min_events: 30,
            max_events: 60,
            file_event_rate: 0.75,
            recurring_rate: 0.85,
            min_recurring_files: 1,
            max_recurring_files: 2,
            trigger: PlantedTrigger::SecondTouch,
            routing: PlantedRouting::TouchedFile,
        }
    }
}

impl SyntheticProfile {
    /// Named presets: `mixed`, `coding`, `writing`, `research`.
    pub fn preset(name: &str) -> Option<SyntheticProfile> {
        let base = SyntheticProfile::default();
        let only = |c, w, r| SyntheticProfile { coding: c, writing: w, research: r, ..SyntheticProfile::default() };
        match name {
            "mixed" | "default" => Some(base),
            "coding" => Some(only(1.0, 0.0, 0.0)),
            "writing" => Some(only(0.0, 1.0, 0.0)),
            "research" => Some(only(0.0, 0.0, 1.0)),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let weights = [self.coding, self.writing, self.research];
        if weights.iter().any(|w| !(*w >= 0.0)) || weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Config("template weights must be non-negative with a positive sum".into()));
        }
        if self.min_events == 0 || self.min_events > self.max_events || self.max_events > crate::graph::MAX_EVENTS {
            return Err(Error::Config(format!("event range must satisfy 1 <= min <= max <= {}", crate::graph::MAX_EVENTS)));
        }
        if self.min_recurring_files == 0 || self.min_recurring_files > self.max_recurring_files {
            return Err(Error::Config("recurring file range must satisfy 1 <= min <= max".into()));
        }
        for p in [self.file_event_rate, self.recurring_rate] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config("rates must lie in [0, 1]".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Family {
    Coding,
    Writing,
    Research,
}

struct Vocab {
    stems: &'static [&'static str],
    exts: &'static [&'static str],
    apps: &'static [&'static str],
    topics: &'static [&'static str],
    hosts: &'static [&'static str],
}

const CODING: Vocab = Vocab {
    stems: &["email_filter", "parser", "router", "cache", "loader", "auth", "schema", "worker", "client", "utils", "config", "metrics", "scheduler", "handler", "index"],
    exts: &["py", "js", "ts", "go", "rs", "java"],
    apps: &["Visual Studio Code", "VS Code", "IntelliJ IDEA", "Terminal", "IDE"],
    topics: &["regex", "async", "http", "retry", "fade-in", "unit test", "mock", "pagination", "timeout", "logging", "json", "sorting"],
    hosts: &["github.com", "stackoverflow.com", "docs.python.org", "go.dev", "developer.mozilla.org"],
};

const WRITING: Vocab = Vocab {
    stems: &["proposal", "weekly_notes", "outline", "minutes", "cover_letter", "budget", "press_release", "chapter", "memo", "newsletter", "agenda", "brief"],
    exts: &["docx", "md", "txt", "pptx", "xlsx"],
    apps: &["Outlook", "Email Client", "VS Code", "IDE"],
    topics: &["tone", "citation", "deadline", "formatting", "synonym", "summary", "template", "headline", "layout", "grammar"],
    hosts: &["en.wikipedia.org", "medium.com", "docs.google.com", "grammarly.com"],
};

const RESEARCH: Vocab = Vocab {
    stems: &["survey", "results", "experiment", "dataset", "analysis", "figures", "baseline", "ablation", "notes", "appendix", "eval", "samples"],
    exts: &["pdf", "csv", "ipynb", "tex", "json"],
    apps: &["Jupyter Notebook", "Google Chrome", "VS Code", "Terminal"],
    topics: &["graph attention", "calibration", "auc", "bootstrap", "transformer", "embedding", "ablation", "variance", "测试 数据", "机器 学习"],
    hosts: &["arxiv.org", "scholar.google.com", "paperswithcode.com", "openreview.net"],
};

const FILE_VERBS: [&str; 6] = ["opened", "edited", "saved", "reviewed", "closed", "scrolled"];
const TASKS: [&str; 6] = [
    "Add a short test for '{f}'.",
    "Clean up the recent changes in '{f}'.",
    "Summarise what changed in '{f}'.",
    "Check '{f}' for leftover mistakes.",
    "Draft the next step for '{f}'.",
    "Reorganise '{f}' before sharing.",
];

fn render_file_event(rng: &mut ChaCha8Rng, file: &str, app: &str) -> String {
    match *FILE_VERBS.choose(rng).unwrap() {
        "reviewed" => format!("The user reviewed changes to '{file}' in {app}."),
        "scrolled" => format!("The user scrolled through '{file}' in {app}."),
        v => format!("The user {v} '{file}' in {app}."),
    }
}

fn token(rng: &mut ChaCha8Rng) -> String {
    format!("{:06x}", rng.gen_range(0..0x100_0000u32))
}

fn render_other_event(rng: &mut ChaCha8Rng, v: &Vocab) -> String {
    let topic = *v.topics.choose(rng).unwrap();
    let topic2 = *v.topics.choose(rng).unwrap();
    let n = rng.gen_range(2..=999);
    match rng.gen_range(0..5) {
        0 => {
            let site = ["Google", "Bing"].choose(rng).unwrap();
            format!("The user searched for '{topic} {topic2} {n}' on {site}.")
        }
        1 => {
            let host = v.hosts.choose(rng).unwrap();
            format!("The user opened https://{host}/{}/{} in Browser.", topic.replace(' ', "-"), token(rng))
        }
        2 => format!("The user read the article '{topic} notes {n}' in Google Chrome."),
        3 => format!("The user typed '{topic} {n}' in Terminal."),
        _ => {
            let app = v.apps.choose(rng).unwrap();
            format!("The user switched to {app} and reviewed the draft '{topic2} plan {n}'.")
        }
    }
}

/// Deterministic for fixed `(seed, n_sessions, profile)`. Event texts do not
/// repeat across sessions.
pub fn generate_synthetic(seed: u64, n_sessions: usize, profile: &SyntheticProfile) -> Result<Vec<SessionRecord>> {
    profile.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut used_texts: BTreeSet<String> = BTreeSet::new();
    let mut used_files: BTreeSet<String> = BTreeSet::new();
    let total_w = profile.coding + profile.writing + profile.research;
    let mut out = Vec::with_capacity(n_sessions);
    for s in 0..n_sessions {
        let u = rng.gen::<f64>() * total_w;
        let family = if u < profile.coding {
            Family::Coding
        } else if u < profile.coding + profile.writing {
            Family::Writing
        } else {
            Family::Research
        };
        let vocab = match family {
            Family::Coding => &CODING,
            Family::Writing => &WRITING,
            Family::Research => &RESEARCH,
        };
        let mut new_file = |rng: &mut ChaCha8Rng| loop {
            let name = format!(
                "{}_{}.{}",
                vocab.stems.choose(rng).unwrap(),
                rng.gen_range(1..100_000u32),
                vocab.exts.choose(rng).unwrap()
            );
            if used_files.insert(name.clone()) {
                break name;
            }
        };
        let n_rec = rng.gen_range(profile.min_recurring_files..=profile.max_recurring_files);
        let recurring: Vec<String> = (0..n_rec).map(|_| new_file(&mut rng)).collect();
        let n_events = rng.gen_range(profile.min_events..=profile.max_events);
        let sample_id = format!("synth-{seed}-{s:05}");
        let mut ts: i64 = 1_700_000_000 + rng.gen_range(0..86_400 * 365);
        let mut touched: BTreeSet<String> = BTreeSet::new();
        let mut session_texts = Vec::with_capacity(n_events);
        let mut events = Vec::with_capacity(n_events);
        for e in 0..n_events {
            if e > 0 {
                ts += if rng.gen_bool(0.1) { 0 } else { rng.gen_range(1..=900) };
            }
            let mut ev = if rng.gen_bool(profile.file_event_rate) {
                let file = if rng.gen_bool(profile.recurring_rate) {
                    recurring.choose(&mut rng).unwrap().clone()
                } else {
                    new_file(&mut rng)
                };
                let app = vocab.apps.choose(&mut rng).unwrap();
                let text = render_file_event(&mut rng, &file, app);
                let mut ev = EventRecord::new(format!("e{e:03}"), ts, text);
                if !touched.insert(file.clone()) {
                    ev.proposed_task = Some(TASKS.choose(&mut rng).unwrap().replace("{f}", &file));
                    ev.gold = Some(GoldClassTag::MustFire);
                } else {
                    ev.gold = Some(GoldClassTag::CanSkip);
                }
                ev
            } else {
                let text = loop {
                    let t = render_other_event(&mut rng, vocab);
                    if !used_texts.contains(&t) {
                        break t;
                    }
                };
                let mut ev = EventRecord::new(format!("e{e:03}"), ts, text);
                ev.gold = Some(GoldClassTag::MustSkip);
                ev
            };
            ev.accepted = false;
            session_texts.push(ev.text.clone());
            events.push(ev);
        }
        used_texts.extend(session_texts);
        out.push(SessionRecord { sample_id, events });
    }
    Ok(out)
}
