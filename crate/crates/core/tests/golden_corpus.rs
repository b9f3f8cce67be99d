use std::collections::BTreeSet;

use tgl_core::extract::{extract_entities, select_anchor};
use tgl_core::graph::{build_session_graph, CapPolicy};
use tgl_core::session::{EventRecord, SessionRecord};

const CORPUS: &str = include_str!("data/golden_corpus.txt");
const EDGES: &str = include_str!("data/golden_edges.tsv");

struct Case {
    text: String,
    entities: Vec<(String, String, String)>,
    anchor: Option<String>,
}

fn cases() -> Vec<Case> {
    CORPUS
        .split("\n\n")
        .filter(|b| !b.trim().is_empty())
        .map(|block| {
            let mut case = Case { text: String::new(), entities: Vec::new(), anchor: None };
            for line in block.lines() {
                let f: Vec<&str> = line.split('\t').collect();
                match f[0] {
                    "text" => case.text = f[1].to_string(),
                    "entity" => case.entities.push((f[1].into(), f[2].into(), f[3].into())),
                    "anchor" => case.anchor = (f[1] != "-").then(|| f[1].to_string()),
                    other => panic!("bad corpus line kind {other}"),
                }
            }
            case
        })
        .collect()
}

#[test]
fn corpus_has_thirty_strings() {
    assert_eq!(cases().len(), 30);
}

#[test]
fn entities_and_ids_match_golden() {
    for c in cases() {
        let got: Vec<(String, String, String)> = extract_entities(&c.text)
            .into_iter()
            .map(|e| (e.kind.as_str().to_string(), e.label.clone(), e.node_id()))
            .collect();
        assert_eq!(got, c.entities, "{}", c.text);
        assert_eq!(select_anchor(&extract_entities(&c.text)), c.anchor, "{}", c.text);
    }
}

#[test]
fn corpus_session_edges_match_golden() {
    let events = cases()
        .iter()
        .enumerate()
        .map(|(i, c)| EventRecord::new(format!("g{i:02}"), i as i64 * 10, c.text.clone()))
        .collect();
    let g = build_session_graph(&SessionRecord { sample_id: "golden".into(), events }, CapPolicy::KeepFirst);
    let got: BTreeSet<String> = g
        .edges
        .iter()
        .map(|e| format!("{}\t{}\t{}", g.nodes[e.src].node_id, g.nodes[e.dst].node_id, e.channel.as_str()))
        .collect();
    let want: BTreeSet<String> = EDGES.lines().map(str::to_string).collect();
    assert_eq!(got, want);
    assert_eq!(g.edges.len(), want.len(), "no duplicate edges");
}
