use std::io::Cursor;
use std::path::Path;

use tgl::io::{load_sessions, parse_sessions, write_sessions};
use tgl::Error;
use tgl_core::session::GoldClassTag;

fn parse(text: &str) -> tgl::Result<tgl::io::Loaded> {
    parse_sessions(Cursor::new(text.as_bytes()), Path::new("mem.jsonl"))
}

#[test]
fn reads_the_documented_fields() {
    let l = parse(concat!(
        r#"{"sample_id":"s1","events":[{"event_id":"e0","ts":5,"text":"The user opened 'a.py' in VS Code.","proposed_task":"Fix 'a.py'","accepted":true,"gold":"must_fire"},"#,
        r#"{"event_id":"e1","ts":9,"text":"The user saved 'a.py'."}]}"#,
        "\n"
    ))
    .unwrap();
    let e = &l.sessions[0].events;
    assert_eq!(e[0].timestamp, 5);
    assert_eq!(e[0].gold, Some(GoldClassTag::MustFire));
    assert!(e[1].proposed_task.is_none() && !e[1].accepted && e[1].gold.is_none());
}

#[test]
fn metadata_events_are_dropped_and_empty_sessions_counted() {
    let l = parse(concat!(
        r##"{"sample_id":"s1","events":[{"event_id":"m","ts":1,"text":"# Assistant Available Operations: x"},{"event_id":"e","ts":2,"text":"The user typed 'ls' in Terminal."}]}"##,
        "\n",
        r#"{"sample_id":"s2","events":[{"event_id":"m","ts":1,"text":"call Operation(name=foo)"}]}"#,
        "\n\n"
    ))
    .unwrap();
    assert_eq!(l.sessions.len(), 1);
    assert_eq!(l.sessions[0].events.len(), 1);
    assert_eq!(l.dropped_empty, 1);
}

#[test]
fn malformed_line_is_reported_with_its_number() {
    let err = parse("{\"sample_id\":\"ok\",\"events\":[{\"event_id\":\"e\",\"ts\":1,\"text\":\"x\"}]}\n{not json\n").unwrap_err();
    match err {
        Error::Parse { line, .. } => assert_eq!(line, 2),
        other => panic!("{other:?}"),
    }
}

#[test]
fn decreasing_timestamps_name_the_session() {
    let err = parse(r#"{"sample_id":"late-one","events":[{"event_id":"a","ts":5,"text":"x"},{"event_id":"b","ts":4,"text":"y"}]}"#)
        .unwrap_err()
        .to_string();
    assert!(err.contains("late-one") && err.contains(":1:"), "{err}");
}

#[test]
fn write_then_load_round_trips() {
    let data = tgl_core::synth::generate_synthetic(3, 5, &Default::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.jsonl");
    write_sessions(&p, &data).unwrap();
    assert_eq!(load_sessions(&p).unwrap().sessions, data);
    assert!(load_sessions(&dir.path().join("missing.jsonl")).unwrap_err().is_not_found());
}
