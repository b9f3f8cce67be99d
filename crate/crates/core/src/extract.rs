//! Rule-based entity extraction over rendered activity strings.
//!
//! Rules run in a fixed order: apps, files (with extension and topic type
//! nodes), URLs (with domain), queries (with script class), and quoted
//! artifacts after document nouns. Vocabulary tables live in `data/`.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::graph::NodeType;
use crate::hash::sha1_hex;

pub const APP_TABLE: &str = include_str!("../data/apps.tsv");
pub const EXTENSION_TABLE: &str = include_str!("../data/extensions.tsv");

const DOCUMENT_NOUNS: [&str; 9] = [
    "file",
    "document",
    "report",
    "spreadsheet",
    "article",
    "tab",
    "summary",
    "email",
    "draft",
];

const QUERY_MARKERS: [&str; 2] = ["searched for", "typed"];

const QUOTES: [(char, char); 5] = [('\'', '\''), ('"', '"'), ('\u{2018}', '\u{2019}'), ('\u{201c}', '\u{201d}'), ('`', '`')];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FileTopic {
    Code,
    Writing,
    Data,
    Slides,
    Other,
}

impl FileTopic {
    pub fn as_str(self) -> &'static str {
        match self {
            FileTopic::Code => "code",
            FileTopic::Writing => "writing",
            FileTopic::Data => "data",
            FileTopic::Slides => "slides",
            FileTopic::Other => "other",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "code" => FileTopic::Code,
            "writing" => FileTopic::Writing,
            "data" => FileTopic::Data,
            "slides" => FileTopic::Slides,
            "other" => FileTopic::Other,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QueryLang {
    Cn,
    En,
    Mixed,
    Other,
}

impl QueryLang {
    pub fn as_str(self) -> &'static str {
        match self {
            QueryLang::Cn => "cn",
            QueryLang::En => "en",
            QueryLang::Mixed => "mixed",
            QueryLang::Other => "other",
        }
    }
}

/// One extracted entity: a node type and its canonical label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Entity {
    pub kind: NodeType,
    pub label: String,
}

impl Entity {
    pub fn new(kind: NodeType, label: impl Into<String>) -> Self {
        Entity { kind, label: label.into() }
    }

    /// `<type>:<first 16 hex of sha1(lowercased label)>`.
    pub fn node_id(&self) -> String {
        entity_node_id(self.kind, &self.label)
    }

    /// Text fed to the embedder: the label itself for surface entities,
    /// `"<type>:<label>"` for type nodes.
    pub fn surface_text(&self) -> String {
        if self.kind.is_type_node() {
            let mut s = String::from(self.kind.as_str());
            s.push(':');
            s.push_str(&self.label);
            s
        } else {
            self.label.clone()
        }
    }
}

pub fn entity_node_id(kind: NodeType, label: &str) -> String {
    let hex = sha1_hex(label.to_lowercase().as_bytes());
    let mut id = String::from(kind.as_str());
    id.push(':');
    id.push_str(&hex[..16]);
    id
}

fn table_rows(table: &'static str) -> impl Iterator<Item = (&'static str, &'static str)> {
    table
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .filter_map(|l| l.split_once('\t'))
}

/// Aliases ordered longest first so "Google Chrome" wins over "Google".
fn app_aliases() -> Vec<(&'static str, &'static str)> {
    let mut rows: Vec<_> = table_rows(APP_TABLE).collect();
    rows.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.0.cmp(b.0)));
    rows
}

/// Canonical app id for an exact alias.
pub fn canonical_app(alias: &str) -> Option<&'static str> {
    table_rows(APP_TABLE).find(|(a, _)| *a == alias).map(|(_, c)| c)
}

/// The canonical app ids, in table order.
pub fn canonical_apps() -> Vec<&'static str> {
    let mut out: Vec<&'static str> = Vec::new();
    for (_, c) in table_rows(APP_TABLE) {
        if !out.contains(&c) {
            out.push(c);
        }
    }
    out
}

pub fn extension_topic(ext: &str) -> Option<FileTopic> {
    let lower = ext.to_lowercase();
    table_rows(EXTENSION_TABLE)
        .find(|(e, _)| *e == lower)
        .and_then(|(_, t)| FileTopic::parse(t))
}

pub fn registered_extensions() -> Vec<&'static str> {
    table_rows(EXTENSION_TABLE).map(|(e, _)| e).collect()
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn char_before(text: &str, at: usize) -> Option<char> {
    text[..at].chars().next_back()
}

fn char_after(text: &str, at: usize) -> Option<char> {
    text[at..].chars().next()
}

#[derive(Debug, Clone, Copy)]
struct Span {
    start: usize,
    end: usize,
}

impl Span {
    fn contains(&self, pos: usize) -> bool {
        pos >= self.start && pos < self.end
    }
}

/// A quoted substring: the outer span including quotes and the inner content.
#[derive(Debug, Clone, Copy)]
struct Quoted {
    outer: Span,
    inner: Span,
}

/// Finds the quoted string opening exactly at `open` (byte offset of the quote).
fn quoted_at(text: &str, open: usize) -> Option<Quoted> {
    let c = char_after(text, open)?;
    let (_, close) = QUOTES.iter().copied().find(|(o, _)| *o == c)?;
    if char_before(text, open).is_some_and(is_word_char) {
        return None;
    }
    let content_start = open + c.len_utf8();
    for (off, ch) in text[content_start..].char_indices() {
        let pos = content_start + off;
        if ch == close && pos > content_start {
            let after = pos + ch.len_utf8();
            if !char_after(text, after).is_some_and(is_word_char) {
                return Some(Quoted {
                    outer: Span { start: open, end: after },
                    inner: Span { start: content_start, end: pos },
                });
            }
        }
    }
    None
}

fn quoted_spans(text: &str) -> Vec<Quoted> {
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < text.len() {
        let c = char_after(text, pos).unwrap();
        if let Some(q) = QUOTES.iter().any(|(o, _)| *o == c).then(|| quoted_at(text, pos)).flatten() {
            out.push(q);
            pos = q.outer.end;
        } else {
            pos += c.len_utf8();
        }
    }
    out
}

const URL_TRAILING: &[char] = &['.', ',', ';', ':', '!', '?', ')', ']', '\'', '"', '\u{2019}', '\u{201d}'];

fn url_spans(text: &str) -> Vec<Span> {
    let mut out = Vec::new();
    let mut search = 0;
    while let Some(rel) = text[search..].find("http") {
        let start = search + rel;
        let rest = &text[start..];
        let scheme_len = if rest.starts_with("https://") {
            8
        } else if rest.starts_with("http://") {
            7
        } else {
            search = start + 4;
            continue;
        };
        let mut end = start + scheme_len;
        for (off, ch) in text[end..].char_indices() {
            if ch.is_whitespace() || matches!(ch, '<' | '>' | '"' | '\'' | '`' | '\u{2019}' | '\u{201d}') {
                end = start + scheme_len + off;
                break;
            }
            end = start + scheme_len + off + ch.len_utf8();
        }
        let mut url_end = end;
        while url_end > start + scheme_len && text[..url_end].ends_with(URL_TRAILING) {
            url_end -= char_before(text, url_end).unwrap().len_utf8();
        }
        if url_end > start + scheme_len {
            out.push(Span { start, end: url_end });
        }
        search = end.max(start + scheme_len);
    }
    out
}

/// Registered-domain heuristic: strip `www.`, keep the last two labels.
pub fn url_domain(url: &str) -> Option<String> {
    let rest = url.split_once("://").map(|(_, r)| r).unwrap_or(url);
    let host_end = rest.find(['/', '?', '#']).unwrap_or(rest.len());
    let mut host = &rest[..host_end];
    if let Some((_, h)) = host.rsplit_once('@') {
        host = h;
    }
    if let Some((h, port)) = host.rsplit_once(':') {
        if port.chars().all(|c| c.is_ascii_digit()) {
            host = h;
        }
    }
    let host = host.to_lowercase();
    let host = host.strip_prefix("www.").unwrap_or(&host);
    if host.is_empty() {
        return None;
    }
    let labels: Vec<&str> = host.split('.').filter(|l| !l.is_empty()).collect();
    let keep = labels.len().min(2);
    Some(labels[labels.len() - keep..].join("."))
}

fn is_han(c: char) -> bool {
    matches!(c as u32, 0x4E00..=0x9FFF | 0x3400..=0x4DBF | 0xF900..=0xFAFF | 0x20000..=0x2A6DF)
}

/// Dominant-script class: cn > 80% Han, en > 80% ASCII letters, mixed when
/// both are at least 10%, otherwise other.
pub fn query_lang(text: &str) -> QueryLang {
    let mut han = 0usize;
    let mut ascii = 0usize;
    let mut letters = 0usize;
    for c in text.chars().filter(|c| c.is_alphabetic()) {
        letters += 1;
        if is_han(c) {
            han += 1;
        } else if c.is_ascii_alphabetic() {
            ascii += 1;
        }
    }
    if letters == 0 {
        return QueryLang::Other;
    }
    let (h, a) = (han * 10, ascii * 10);
    if han * 10 > letters * 8 {
        QueryLang::Cn
    } else if ascii * 10 > letters * 8 {
        QueryLang::En
    } else if h >= letters && a >= letters {
        QueryLang::Mixed
    } else {
        QueryLang::Other
    }
}

fn overlaps_any(pos: usize, spans: impl IntoIterator<Item = Span>) -> bool {
    spans.into_iter().any(|s| s.contains(pos))
}

fn extract_apps(text: &str, protected: &[Span]) -> Vec<&'static str> {
    let mut hits: Vec<(usize, usize, &'static str)> = Vec::new();
    for (alias, canon) in app_aliases() {
        let mut from = 0;
        while let Some(rel) = text[from..].find(alias) {
            let start = from + rel;
            let end = start + alias.len();
            from = end;
            let bounded = !char_before(text, start).is_some_and(is_word_char)
                && !char_after(text, end).is_some_and(is_word_char);
            let claimed = hits.iter().any(|&(s, e, _)| start < e && end > s);
            if bounded && !claimed && !overlaps_any(start, protected.iter().copied()) {
                hits.push((start, end, canon));
            }
        }
    }
    hits.sort_by_key(|h| h.0);
    let mut out: Vec<&'static str> = Vec::new();
    for (_, _, c) in hits {
        if !out.contains(&c) {
            out.push(c);
        }
    }
    out
}

fn is_token_boundary(c: char) -> bool {
    c.is_whitespace()
        || matches!(
            c,
            '\'' | '"' | '`' | '(' | ')' | '[' | ']' | '{' | '}' | '<' | '>' | ',' | ';' | '\u{2018}' | '\u{2019}' | '\u{201c}' | '\u{201d}'
        )
}

/// File tokens: a token whose suffix after the last dot is a registered extension.
fn extract_files(text: &str, urls: &[Span]) -> Vec<(String, String, FileTopic)> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    let push = |s: usize, e: usize, out: &mut Vec<(String, String, FileTopic)>| {
        if overlaps_any(s, urls.iter().copied()) {
            return;
        }
        let tok = text[s..e].trim_matches(|c: char| matches!(c, '.' | ':' | '!' | '?'));
        let Some((stem, ext)) = tok.rsplit_once('.') else { return };
        if stem.is_empty() || ext.is_empty() || !ext.chars().all(|c| c.is_ascii_alphanumeric()) {
            return;
        }
        if let Some(topic) = extension_topic(ext) {
            out.push((tok.to_string(), ext.to_lowercase(), topic));
        }
    };
    for (i, c) in text.char_indices() {
        if is_token_boundary(c) {
            if let Some(s) = start.take() {
                push(s, i, &mut out);
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        push(s, text.len(), &mut out);
    }
    out
}

fn extract_queries(text: &str) -> Vec<String> {
    let mut found: Vec<(usize, String)> = Vec::new();
    for marker in QUERY_MARKERS {
        let mut from = 0;
        while let Some(rel) = text[from..].find(marker) {
            let at = from + rel;
            from = at + marker.len();
            if char_before(text, at).is_some_and(is_word_char) {
                continue;
            }
            let after = &text[from..];
            let ws = after.len() - after.trim_start().len();
            if ws == 0 {
                continue;
            }
            if let Some(q) = quoted_at(text, from + ws) {
                let content = text[q.inner.start..q.inner.end].trim();
                if !content.is_empty() {
                    found.push((at, content.to_string()));
                }
            }
        }
    }
    found.sort_by_key(|f| f.0);
    found.into_iter().map(|f| f.1).collect()
}

fn ends_with_noun(before: &str, noun: &str) -> bool {
    if before.len() < noun.len() || !before.is_char_boundary(before.len() - noun.len()) {
        return false;
    }
    let at = before.len() - noun.len();
    before[at..].eq_ignore_ascii_case(noun) && !char_before(before, at).is_some_and(is_word_char)
}

fn extract_artifacts(text: &str, quotes: &[Quoted]) -> Vec<String> {
    let mut out = Vec::new();
    for q in quotes {
        // The noun must directly precede the quote, separated only by whitespace.
        let before = &text[..q.outer.start];
        let trimmed = before.trim_end();
        if trimmed.len() == before.len() {
            continue;
        }
        if DOCUMENT_NOUNS.iter().any(|n| ends_with_noun(trimmed, n)) {
            let content = text[q.inner.start..q.inner.end].trim();
            if !content.is_empty() {
                out.push(content.to_string());
            }
        }
    }
    out
}

/// Applies the five extraction rules in order and returns deduplicated entities.
pub fn extract_entities(text: &str) -> Vec<Entity> {
    let urls = url_spans(text);
    let quotes: Vec<Quoted> = quoted_spans(text)
        .into_iter()
        .filter(|q| !overlaps_any(q.outer.start, urls.iter().copied()))
        .collect();
    let protected: Vec<Span> = urls.iter().copied().chain(quotes.iter().map(|q| q.outer)).collect();

    let mut out: Vec<Entity> = Vec::new();
    let push = |e: Entity, out: &mut Vec<Entity>| {
        let dup = out
            .iter()
            .any(|o| o.kind == e.kind && o.label.to_lowercase() == e.label.to_lowercase());
        if !dup {
            out.push(e);
        }
    };

    for app in extract_apps(text, &protected) {
        push(Entity::new(NodeType::App, app), &mut out);
    }

    let files = extract_files(text, &urls);
    for (label, ext, topic) in &files {
        push(Entity::new(NodeType::File, label.clone()), &mut out);
        push(Entity::new(NodeType::FileExt, ext.clone()), &mut out);
        push(Entity::new(NodeType::FileTopic, topic.as_str()), &mut out);
    }

    for span in &urls {
        let url = &text[span.start..span.end];
        push(Entity::new(NodeType::Url, url), &mut out);
        if let Some(domain) = url_domain(url) {
            push(Entity::new(NodeType::UrlDomain, domain), &mut out);
        }
    }

    for q in extract_queries(text) {
        let lang = query_lang(&q);
        push(Entity::new(NodeType::Query, q), &mut out);
        push(Entity::new(NodeType::QueryLang, lang.as_str()), &mut out);
    }

    for art in extract_artifacts(text, &quotes) {
        let is_file = files.iter().any(|(f, _, _)| f.to_lowercase() == art.to_lowercase());
        if !is_file {
            push(Entity::new(NodeType::Artifact, art), &mut out);
        }
    }
    out
}

/// First app entity if any, otherwise the first entity.
pub fn select_anchor(entities: &[Entity]) -> Option<String> {
    entities
        .iter()
        .find(|e| e.kind == NodeType::App)
        .or_else(|| entities.first())
        .map(Entity::node_id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn pairs(text: &str) -> Vec<(NodeType, String)> {
        extract_entities(text).into_iter().map(|e| (e.kind, e.label)).collect()
    }

    fn p(kind: NodeType, label: &str) -> (NodeType, String) {
        (kind, label.to_string())
    }

    #[test]
    fn opened_file_in_vscode() {
        assert_eq!(
            pairs("The user opened 'email_filter.py' in Visual Studio Code."),
            vec![
                p(NodeType::App, "vscode"),
                p(NodeType::File, "email_filter.py"),
                p(NodeType::FileExt, "py"),
                p(NodeType::FileTopic, "code"),
            ]
        );
    }

    #[test]
    fn searched_on_bing() {
        assert_eq!(
            pairs("The user searched for 'js fade-in' on Bing."),
            vec![p(NodeType::App, "browser"), p(NodeType::Query, "js fade-in"), p(NodeType::QueryLang, "en")]
        );
    }

    #[test]
    fn opened_url_in_browser() {
        assert_eq!(
            pairs("The user opened https://go.dev/doc in Browser."),
            vec![
                p(NodeType::App, "browser"),
                p(NodeType::Url, "https://go.dev/doc"),
                p(NodeType::UrlDomain, "go.dev"),
            ]
        );
    }

    #[test]
    fn artifact_dedup_against_file() {
        let got = pairs("The user saved the document \"report.docx\" in Outlook.");
        assert!(!got.iter().any(|(k, _)| *k == NodeType::Artifact));
        assert!(got.contains(&p(NodeType::File, "report.docx")));
        let got = pairs("The user read the article 'Why Go?' in Chrome.");
        assert!(got.contains(&p(NodeType::Artifact, "Why Go?")));
    }

    #[test]
    fn anchor_prefers_app() {
        let ents = vec![Entity::new(NodeType::File, "a.py"), Entity::new(NodeType::App, "vscode")];
        assert_eq!(select_anchor(&ents), Some(entity_node_id(NodeType::App, "vscode")));
        let ents = vec![Entity::new(NodeType::Query, "q1")];
        assert_eq!(select_anchor(&ents), Some(entity_node_id(NodeType::Query, "q1")));
        assert_eq!(select_anchor(&[]), None);
    }

    #[test]
    fn node_id_scheme() {
        let id = entity_node_id(NodeType::File, "Email_Filter.py");
        assert_eq!(id, entity_node_id(NodeType::File, "email_filter.py"));
        assert!(id.starts_with("file:"));
        assert_eq!(id.len(), "file:".len() + 16);
        assert_eq!(&id[5..], &sha1_hex(b"email_filter.py")[..16]);
    }

    #[test]
    fn domain_heuristic() {
        assert_eq!(url_domain("https://www.docs.python.org/3/").as_deref(), Some("python.org"));
        assert_eq!(url_domain("http://localhost:8080/x").as_deref(), Some("localhost"));
    }

    #[test]
    fn query_lang_classes() {
        assert_eq!(query_lang("rust borrow checker"), QueryLang::En);
        assert_eq!(query_lang("天气预报"), QueryLang::Cn);
        assert_eq!(query_lang("python 教程 入门"), QueryLang::Mixed);
        assert_eq!(query_lang("Привет мир"), QueryLang::Other);
        assert_eq!(query_lang("1234"), QueryLang::Other);
    }

    #[test]
    fn tables_meet_coverage() {
        assert!(registered_extensions().len() >= 25);
        assert_eq!(canonical_apps().len(), 8);
        assert_eq!(extension_topic("PY"), Some(FileTopic::Code));
        assert_eq!(extension_topic(".py"), None);
    }
}
