use super::*;
use crate::graph::Polarity;

fn candidate(cui: &str, name: &str, sem: &str) -> Candidate {
    Candidate {
        cui: cui.into(),
        name: name.into(),
        semantic_type: sem.into(),
    }
}

fn mention(surface: &str, start: usize, end: usize, candidates: Vec<Candidate>) -> Mention {
    Mention {
        surface: surface.into(),
        start,
        end,
        candidates,
    }
}

fn record(id: &str, images: &[&str], text: &str, mentions: Vec<Mention>) -> AnnotationRecord {
    AnnotationRecord {
        report_id: id.into(),
        image_ids: images.iter().map(|s| s.to_string()).collect(),
        report_text: text.into(),
        mentions,
    }
}

// ---- section extraction ----

#[test]
fn sections_basic_split() {
    assert_eq!(
        extract_report_sections("FINDINGS: clear lungs. IMPRESSION: normal."),
        "clear lungs.\nnormal."
    );
}

#[test]
fn sections_no_headers() {
    assert_eq!(extract_report_sections("just a note with no structure"), "");
}

#[test]
fn sections_hand_parsed_corpus() {
    // Each expectation was derived by hand from the section grammar:
    // case-insensitive FINDINGS/IMPRESSION headers, body ending at the next
    // all-caps header (or another target header) or end of text, trimmed,
    // findings before impression, empty bodies dropped.
    let corpus: Vec<(&str, &str)> = vec![
        ("FINDINGS: clear lungs. IMPRESSION: normal.", "clear lungs.\nnormal."),
        ("IMPRESSION: stable cardiomegaly.", "stable cardiomegaly."),
        ("FINDINGS: low lung volumes.", "low lung volumes."),
        ("no structured sections here", ""),
        ("", ""),
        (
            "Findings: mild edema. Impression: worsening congestion.",
            "mild edema.\nworsening congestion.",
        ),
        (
            "TECHNIQUE: portable AP. FINDINGS: consolidation at the base. IMPRESSION: pneumonia.",
            "consolidation at the base.\npneumonia.",
        ),
        (
            "FINDINGS: effusion. COMPARISON: prior study. IMPRESSION: unchanged.",
            "effusion.\nunchanged.",
        ),
        // Impression stated before findings still renders findings first.
        (
            "IMPRESSION: no acute process. FINDINGS: lungs are clear.",
            "lungs are clear.\nno acute process.",
        ),
        ("FINDINGS: IMPRESSION: only the impression has content.", "only the impression has content."),
        ("FINDINGS:", ""),
        ("IMPRESSION:   ", ""),
        (
            "findings : lowercase header with spaced colon. impression : also lower.",
            "lowercase header with spaced colon.\nalso lower.",
        ),
        (
            "FINDINGS:\n  Lungs clear.\n  No effusion.\n\nIMPRESSION:\n  Normal exam.\n",
            "Lungs clear.\n  No effusion.\nNormal exam.",
        ),
        // Only the first occurrence of each header counts.
        (
            "FINDINGS: first body. FINDINGS: second body. IMPRESSION: closing.",
            "first body.\nclosing.",
        ),
        ("refindings: no word boundary, so no header", ""),
        (
            "FINDINGS AND IMPRESSION: combined section text.",
            "combined section text.",
        ),
        (
            "CLINICAL HISTORY: cough. FINDINGS: hyperinflated lungs. BONES: intact. IMPRESSION: copd.",
            "hyperinflated lungs.\ncopd.",
        ),
        ("FINDINGS:no space after colon. IMPRESSION:tight.", "no space after colon.\ntight."),
        (
            "ImPrEsSiOn: mixed-case header is accepted.",
            "mixed-case header is accepted.",
        ),
    ];
    assert_eq!(corpus.len(), 20);
    for (input, expected) in corpus {
        assert_eq!(
            extract_report_sections(input),
            expected,
            "input was {input:?}"
        );
    }
}

// ---- semantic type filtering ----

#[test]
fn default_exclusion_matches_shipped_list() {
    let list = default_exclusion_list();
    assert_eq!(list.len(), 25);
    assert!(list.contains("Geographic Area"));
    assert!(list.contains("Body System"));
    assert!(!list.contains("Disease or Syndrome"));
}

#[test]
fn excluded_type_removed() {
    let mentions = vec![mention(
        "boston",
        0,
        6,
        vec![candidate("C0006023", "Boston", "Geographic Area")],
    )];
    let kept = filter_semantic_types(&mentions, &default_exclusion_list());
    assert!(kept.is_empty());
}

#[test]
fn empty_exclusion_is_identity() {
    let mentions = vec![
        mention("a", 0, 1, vec![candidate("C1", "a", "Finding")]),
        mention("b", 1, 2, vec![candidate("C2", "b", "Geographic Area")]),
    ];
    assert_eq!(filter_semantic_types(&mentions, &BTreeSet::new()), mentions);
}

#[test]
fn filter_matches_naive_predicate_and_is_idempotent() {
    // Oracle: per-candidate predicate filter written out longhand.
    let types = ["Finding", "Geographic Area", "Body System", "Disease or Syndrome"];
    let mut mentions = Vec::new();
    for i in 0..24 {
        let candidates: Vec<Candidate> = (0..(i % 4) + 1)
            .map(|j| candidate(&format!("C{i}{j}"), "n", types[(i + j) % 4]))
            .collect();
        mentions.push(mention(&format!("m{i}"), i, i + 1, candidates));
    }
    let exclusion = default_exclusion_list();
    let got = filter_semantic_types(&mentions, &exclusion);

    let mut expected = Vec::new();
    for m in &mentions {
        let mut kept = Vec::new();
        for c in &m.candidates {
            if !exclusion.contains(&c.semantic_type) {
                kept.push(c.clone());
            }
        }
        if !kept.is_empty() {
            expected.push(Mention {
                surface: m.surface.clone(),
                start: m.start,
                end: m.end,
                candidates: kept,
            });
        }
    }
    assert_eq!(got, expected);
    assert_eq!(filter_semantic_types(&got, &exclusion), got);
}

// ---- annotator block parsing ----

#[test]
fn block_two_lines_parse() {
    let raw = "preamble\n***start***\n(C0020538, Positive)\n(C0011849, Negative)\n***end***\n";
    let parsed = parse_annotator_block(raw).unwrap();
    assert_eq!(
        parsed.selections,
        vec![
            ("C0020538".to_string(), Polarity::Positive),
            ("C0011849".to_string(), Polarity::Negative),
        ]
    );
    assert_eq!(parsed.skipped_lines, 0);
}

#[test]
fn missing_delimiters_are_malformed() {
    assert!(matches!(
        parse_annotator_block("(C1, Positive)"),
        Err(ConstructError::MalformedResponse(_))
    ));
    assert!(matches!(
        parse_annotator_block("***start***\n(C1, Positive)\n"),
        Err(ConstructError::MalformedResponse(_))
    ));
    assert!(matches!(
        parse_annotator_block("(C1, Positive)\n***end***"),
        Err(ConstructError::MalformedResponse(_))
    ));
}

#[test]
fn malformed_lines_skipped_with_count() {
    let raw = "***start***\n(C1, Positive)\nnot a tuple\n(C2, Uncertain)\n(C3, Sideways)\n***end***";
    let parsed = parse_annotator_block(raw).unwrap();
    assert_eq!(parsed.selections.len(), 2);
    assert_eq!(parsed.skipped_lines, 2);
}

#[test]
fn polarity_is_case_insensitive_and_bounded() {
    let raw = "***start***\n( C7 , NEGATIVE )\n(C8, uncertain)\n***end***";
    let parsed = parse_annotator_block(raw).unwrap();
    assert_eq!(
        parsed.selections,
        vec![
            ("C7".to_string(), Polarity::Negative),
            ("C8".to_string(), Polarity::Uncertain),
        ]
    );
    for (_, p) in parsed.selections {
        assert!(Polarity::ALL.contains(&p));
    }
}

// ---- disambiguation ----

fn two_mention_record() -> AnnotationRecord {
    record(
        "r1",
        &["img_a"],
        "FINDINGS: pleural effusion. IMPRESSION: infection likely.",
        vec![
            mention(
                "pleural effusion",
                10,
                26,
                vec![
                    candidate("C0032227", "Pleural effusion disorder", "Disease or Syndrome"),
                    candidate("C2073625", "Pleural effusion finding", "Finding"),
                ],
            ),
            mention(
                "infection",
                39,
                48,
                vec![candidate("C0009450", "Communicable Diseases", "Disease or Syndrome")],
            ),
        ],
    )
}

#[test]
fn mock_rule_selects_first_candidate_positive() {
    let result = disambiguate(&two_mention_record(), &MockAnnotator::new(), false).unwrap();
    assert_eq!(
        result.selections,
        vec![
            ("C0032227".to_string(), Polarity::Positive),
            ("C0009450".to_string(), Polarity::Positive),
        ]
    );
}

#[test]
fn scripted_negative_selection() {
    let client = FnAnnotator(|_: &str| {
        Ok("***start***\n(C0032227, Negative)\n***end***".to_string())
    });
    let result = disambiguate(&two_mention_record(), &client, false).unwrap();
    assert_eq!(
        result.selections,
        vec![("C0032227".to_string(), Polarity::Negative)]
    );
}

#[test]
fn out_of_candidate_cui_rejected_others_kept() {
    let client = FnAnnotator(|_: &str| {
        Ok("***start***\n(C0099999, Positive)\n(C0009450, Uncertain)\n***end***".to_string())
    });
    let result = disambiguate(&two_mention_record(), &client, false).unwrap();
    assert_eq!(
        result.selections,
        vec![("C0009450".to_string(), Polarity::Uncertain)]
    );
    assert_eq!(result.rejected_cuis, 1);
}

#[test]
fn empty_record_is_an_error() {
    let r = record("r9", &["img"], "text", vec![]);
    assert!(matches!(
        disambiguate(&r, &MockAnnotator::new(), false),
        Err(ConstructError::EmptyRecord(_))
    ));
}

#[test]
fn prompt_carries_sections_and_contract() {
    let prompt = build_prompt(&two_mention_record(), false);
    assert!(prompt.contains("Report Text: pleural effusion.\ninfection likely."));
    assert!(prompt.contains("***start***"));
    assert!(prompt.contains("***end***"));
    assert!(prompt.contains("- \"pleural effusion\": (C0032227,"));
    let full = build_prompt(&two_mention_record(), true);
    assert!(full.contains("Report Text: FINDINGS: pleural effusion."));
}

#[test]
fn headerless_report_falls_back_to_full_text() {
    let mut r = two_mention_record();
    r.report_text = "unstructured note mentioning an effusion".into();
    let prompt = build_prompt(&r, false);
    assert!(prompt.contains("Report Text: unstructured note mentioning an effusion"));
}

// ---- record ingestion ----

#[test]
fn jsonl_roundtrip_and_validation() {
    let line = serde_json::to_string(&two_mention_record()).unwrap();
    let records = read_records(format!("# header\n{line}\n\n").as_bytes()).unwrap();
    assert_eq!(records, vec![two_mention_record()]);

    let bad_span = record("r2", &["i"], "ab", vec![mention("x", 1, 9, vec![candidate("C1", "n", "t")])]);
    let line = serde_json::to_string(&bad_span).unwrap();
    assert!(matches!(
        read_records(line.as_bytes()),
        Err(ConstructError::InvalidRecord { line: 1, .. })
    ));

    let line = serde_json::to_string(&two_mention_record()).unwrap();
    let doubled = format!("{line}\n{line}\n");
    assert!(matches!(
        read_records(doubled.as_bytes()),
        Err(ConstructError::DuplicateReport(_))
    ));
}

// ---- relation table ----

#[test]
fn relation_table_rejects_self_pairs() {
    let tsv = "C1\ttreats\tC1\n";
    assert!(matches!(
        RelationTable::read_tsv(tsv.as_bytes()),
        Err(ConstructError::InvalidTableEntry { line: 1, .. })
    ));
    let tsv = "# comment\nC1\ttreats\tC2\nC2\tcauses\tC1\n";
    let table = RelationTable::read_tsv(tsv.as_bytes()).unwrap();
    assert_eq!(table.len(), 2);
    assert_eq!(table.relations_between("C1", "C2"), &["treats".to_string()]);
    assert!(table.relations_between("C1", "C3").is_empty());
}

// ---- graph assembly ----

fn one_record_fixture() -> (Vec<AnnotationRecord>, RelationTable) {
    let mut table = RelationTable::new();
    table.insert("C0032227", "associated_with", "C0009450").unwrap();
    (vec![two_mention_record()], table)
}

#[test]
fn one_record_builds_two_cross_one_intra() {
    let (records, table) = one_record_fixture();
    let (graph, report) =
        build_graph(&records, &table, &MockAnnotator::new(), &BuildOptions::default()).unwrap();
    let stats = graph.compute_stats();
    assert_eq!(stats.cross_edges, 2);
    assert_eq!(stats.intra_edges, 1);
    assert!(graph.contains_triple(&Triple::new("img_a", "positive", "C0032227")));
    assert!(graph.contains_triple(&Triple::new("img_a", "positive", "C0009450")));
    assert!(graph.contains_triple(&Triple::new("C0032227", "associated_with", "C0009450")));
    assert_eq!(report.records_succeeded, 1);
    graph.check_consistency().unwrap();
}

#[test]
fn empty_stream_builds_empty_graph() {
    let (_, table) = one_record_fixture();
    let (graph, report) =
        build_graph(&[], &table, &MockAnnotator::new(), &BuildOptions::default()).unwrap();
    assert_eq!(graph.num_triples(), 0);
    assert_eq!(report.records_total, 0);
}

#[test]
fn identical_selections_across_records_dedup() {
    let (mut records, table) = one_record_fixture();
    let mut second = records[0].clone();
    second.report_id = "r2".into();
    records.push(second);
    let (graph, report) =
        build_graph(&records, &table, &MockAnnotator::new(), &BuildOptions::default()).unwrap();
    assert_eq!(graph.compute_stats().cross_edges, 2);
    assert!(report.duplicates_skipped >= 2);
}

#[test]
fn duplicate_report_ids_skipped() {
    let (mut records, table) = one_record_fixture();
    records.push(records[0].clone());
    let (_, report) =
        build_graph(&records, &table, &MockAnnotator::new(), &BuildOptions::default()).unwrap();
    assert_eq!(report.records_succeeded, 1);
    assert_eq!(report.failures.len(), 1);
}

#[test]
fn failing_records_counted_not_fatal() {
    let (mut records, table) = one_record_fixture();
    let mut second = records[0].clone();
    second.report_id = "r2".into();
    records.push(second);
    // Fail exactly the r2 prompt.
    let client = FnAnnotator(|prompt: &str| {
        if prompt.contains("infection likely") && prompt.contains("pleural") {
            Ok(MockAnnotator::new().complete(prompt).unwrap())
        } else {
            Err(ConstructError::AnnotatorUnavailable("down".into()))
        }
    });
    let (_, report) = build_graph(&records, &table, &client, &BuildOptions::default()).unwrap();
    assert_eq!(report.records_succeeded, 2);

    let always_down = FnAnnotator(|_: &str| {
        Err(ConstructError::AnnotatorUnavailable("down".into()))
    });
    let (graph, report) =
        build_graph(&records, &table, &always_down, &BuildOptions::default()).unwrap();
    assert_eq!(report.records_succeeded, 0);
    assert_eq!(report.failures.len(), 2);
    assert_eq!(graph.num_triples(), 0);
}

#[test]
fn intra_edges_only_from_table_and_cross_only_selected() {
    let (records, table) = one_record_fixture();
    let (graph, _) =
        build_graph(&records, &table, &MockAnnotator::new(), &BuildOptions::default()).unwrap();
    for t in graph.triples() {
        if graph.image(&t.head).is_some() {
            // Mock selects first candidates only.
            assert!(["C0032227", "C0009450"].contains(&t.tail.as_str()));
        } else {
            assert!(table
                .iter()
                .any(|(a, r, b)| *a == t.head && *r == t.relation && *b == t.tail));
        }
    }
}

#[test]
fn deterministic_given_deterministic_client() {
    let (mut records, table) = one_record_fixture();
    let mut second = records[0].clone();
    second.report_id = "r2".into();
    second.image_ids = vec!["img_b".into(), "img_c".into()];
    records.push(second);
    let a = build_graph(&records, &table, &MockAnnotator::new(), &BuildOptions::default())
        .unwrap()
        .0;
    let b = build_graph(&records, &table, &MockAnnotator::new(), &BuildOptions::default())
        .unwrap()
        .0;
    assert_eq!(a, b);
}

#[test]
fn global_intra_mode_connects_across_records() {
    // r1 selects C0032227 only; r2 selects C0009450 only. PerRecord adds no
    // intra edge, Global connects them through the table.
    let r1 = record(
        "r1",
        &["img_a"],
        "IMPRESSION: effusion.",
        vec![mention(
            "effusion",
            12,
            20,
            vec![candidate("C0032227", "Pleural effusion", "Disease or Syndrome")],
        )],
    );
    let r2 = record(
        "r2",
        &["img_b"],
        "IMPRESSION: infection.",
        vec![mention(
            "infection",
            12,
            21,
            vec![candidate("C0009450", "Communicable Diseases", "Disease or Syndrome")],
        )],
    );
    let mut table = RelationTable::new();
    table.insert("C0032227", "associated_with", "C0009450").unwrap();
    let records = vec![r1, r2];

    let per_record = build_graph(
        &records,
        &table,
        &MockAnnotator::new(),
        &BuildOptions::default(),
    )
    .unwrap()
    .0;
    assert_eq!(per_record.compute_stats().intra_edges, 0);

    let global = build_graph(
        &records,
        &table,
        &MockAnnotator::new(),
        &BuildOptions {
            intra_mode: IntraMode::Global,
            full_report: false,
        },
    )
    .unwrap()
    .0;
    assert_eq!(global.compute_stats().intra_edges, 1);
}

#[test]
fn reserved_relation_id_in_table_conflicts() {
    let mut table = RelationTable::new();
    table.insert("C1", "positive", "C2").unwrap();
    let err = build_graph(&[], &table, &MockAnnotator::new(), &BuildOptions::default())
        .unwrap_err();
    assert!(matches!(err, ConstructError::ConflictingRelation(_)));
}
