//! Neighbor-aware informativeness filtering of images.
//!
//! An image scores the sum, over its 1-hop (relation, concept) pairs, of
//! `ln(M / |N_(r,c)|)` where `M` is the number of images in the graph and
//! `N_(r,c)` the set of images linked to concept `c` through relation `r`.
//! Pairs shared by few images contribute more; a pair shared by every image
//! contributes nothing. Scores are never negative.
//!
//! Selection is greedy: images are visited in descending score order (ties
//! broken by ascending image id) and taken until the covered concepts equal
//! the full set of concepts reachable from any image. Concepts with no cross
//! edge cannot be covered by any image and are excluded from the target.

use std::collections::BTreeSet;

use rayon::prelude::*;
use thiserror::Error;

use crate::graph::{GraphError, MultimodalGraph, Triple};

#[derive(Debug, Error)]
pub enum NafError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("stale outcome: selected image {0} is not in the graph")]
    StaleOutcome(String),
}

/// Informativeness score of one image, in natural-log units.
#[derive(Debug, Clone, PartialEq)]
pub struct NafScore {
    pub image_id: String,
    pub score: f64,
}

/// Result of a filtering run.
///
/// `scores` covers every image, ordered exactly as the greedy pass visited
/// them; `selected` is the prefix that was taken.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub selected: Vec<String>,
    pub covered_concepts: BTreeSet<String>,
    pub scores: Vec<NafScore>,
    pub coverage_incomplete: bool,
}

/// Informativeness score of a single image. Images without cross edges
/// score 0 (empty sum).
pub fn naf_score(graph: &MultimodalGraph, image_id: &str) -> Result<f64, NafError> {
    if graph.image(image_id).is_none() {
        return Err(GraphError::UnknownNode(image_id.to_string()).into());
    }
    let m = graph.num_images() as f64;
    let mut total = 0.0;
    for t in graph.incident_triples(image_id) {
        if t.head != image_id {
            continue;
        }
        let n_rc = graph
            .images_for_pair(&t.relation, &t.tail)
            .map(|s| s.len())
            .unwrap_or(0);
        if n_rc > 0 {
            total += (m / n_rc as f64).ln();
        }
    }
    Ok(total)
}

/// Concepts reachable through at least one cross edge: the coverage target.
fn coverage_target(graph: &MultimodalGraph) -> BTreeSet<String> {
    graph
        .cross_pairs()
        .map(|((_, concept), _)| concept.clone())
        .collect()
}

/// Score every image, rank them, and greedily select until the reachable
/// concept set is covered.
pub fn run_naf(graph: &MultimodalGraph) -> FilterOutcome {
    let image_ids: Vec<&str> = graph.images().map(|i| i.image_id.as_str()).collect();
    let mut scores: Vec<NafScore> = image_ids
        .par_iter()
        .map(|id| NafScore {
            image_id: id.to_string(),
            score: naf_score(graph, id).expect("image enumerated from the graph"),
        })
        .collect();
    scores.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.image_id.cmp(&b.image_id))
    });

    let target = coverage_target(graph);
    let mut covered: BTreeSet<String> = BTreeSet::new();
    let mut selected = Vec::new();
    for entry in &scores {
        if covered == target {
            break;
        }
        selected.push(entry.image_id.clone());
        for t in graph.incident_triples(&entry.image_id) {
            if t.head == entry.image_id {
                covered.insert(t.tail.clone());
            }
        }
    }
    let coverage_incomplete = covered != target;
    FilterOutcome {
        selected,
        covered_concepts: covered,
        scores,
        coverage_incomplete,
    }
}

/// Keep all concepts, the selected images, every intra triple, and exactly
/// the cross triples incident to a selected image.
pub fn subgraph_from_selection(
    graph: &MultimodalGraph,
    outcome: &FilterOutcome,
) -> Result<MultimodalGraph, NafError> {
    let selected: BTreeSet<&str> = outcome.selected.iter().map(|s| s.as_str()).collect();
    for id in &selected {
        if graph.image(id).is_none() {
            return Err(NafError::StaleOutcome(id.to_string()));
        }
    }
    let mut out = MultimodalGraph::new();
    for c in graph.concepts() {
        out.add_concept(c.clone())?;
    }
    for i in graph.images() {
        if selected.contains(i.image_id.as_str()) {
            out.add_image(i.clone())?;
        }
    }
    for r in graph.relations() {
        out.add_relation(r.clone())?;
    }
    for t in graph.triples() {
        let keep = if graph.image(&t.head).is_some() {
            selected.contains(t.head.as_str())
        } else {
            true
        };
        if keep {
            out.add_triple(t.clone())?;
        }
    }
    Ok(out)
}

/// Straight-line reimplementation of scoring and greedy selection that
/// scans the raw triple list instead of the graph indices. Test oracle.
#[doc(hidden)]
pub fn brute_force_reference(graph: &MultimodalGraph) -> FilterOutcome {
    let triples: Vec<&Triple> = graph.triples().collect();
    let is_cross = |t: &Triple| graph.image(&t.head).is_some();
    let m = graph.num_images() as f64;

    let mut scores: Vec<NafScore> = graph
        .images()
        .map(|img| {
            let mut score = 0.0;
            for t in &triples {
                if is_cross(t) && t.head == img.image_id {
                    let n_rc = triples
                        .iter()
                        .filter(|u| is_cross(u) && u.relation == t.relation && u.tail == t.tail)
                        .count();
                    score += (m / n_rc as f64).ln();
                }
            }
            NafScore {
                image_id: img.image_id.clone(),
                score,
            }
        })
        .collect();
    scores.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.image_id.cmp(&b.image_id))
    });

    let target: BTreeSet<String> = triples
        .iter()
        .filter(|t| is_cross(t))
        .map(|t| t.tail.clone())
        .collect();
    let mut covered = BTreeSet::new();
    let mut selected = Vec::new();
    for entry in &scores {
        if covered == target {
            break;
        }
        selected.push(entry.image_id.clone());
        for t in &triples {
            if is_cross(t) && t.head == entry.image_id {
                covered.insert(t.tail.clone());
            }
        }
    }
    let coverage_incomplete = covered != target;
    FilterOutcome {
        selected,
        covered_concepts: covered,
        scores,
        coverage_incomplete,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{ConceptNode, ImageNode, Polarity, RelationType};
    use crate::synthdata::{generate_random_graph, SynthSpec};

    fn fixture() -> MultimodalGraph {
        // Four images: a holds an exclusive pair and one shared pair, b shares
        // with a, c has its own concept, d is edgeless.
        let mut g = MultimodalGraph::new();
        for cui in ["C1", "C2", "C3"] {
            g.add_concept(ConceptNode::new(cui, cui, "Finding").unwrap()).unwrap();
        }
        for id in ["a", "b", "c", "d"] {
            g.add_image(ImageNode::new(id, "fix").unwrap()).unwrap();
        }
        g.add_relation(RelationType::cross(Polarity::Positive)).unwrap();
        g.add_triple(Triple::new("a", "positive", "C1")).unwrap();
        g.add_triple(Triple::new("a", "positive", "C2")).unwrap();
        g.add_triple(Triple::new("b", "positive", "C2")).unwrap();
        g.add_triple(Triple::new("c", "positive", "C3")).unwrap();
        g
    }

    #[test]
    fn score_from_formula_enumeration() {
        let g = fixture();
        // M = 4. Image a: (positive, C1) exclusive, (positive, C2) shared
        // with b.
        let expected = (4.0_f64 / 1.0).ln() + (4.0_f64 / 2.0).ln();
        let got = naf_score(&g, "a").unwrap();
        assert!((got - expected).abs() < 1e-12, "got {got}, want {expected}");
    }

    #[test]
    fn edgeless_image_scores_zero() {
        let g = fixture();
        assert_eq!(naf_score(&g, "d").unwrap(), 0.0);
    }

    #[test]
    fn pair_linking_all_images_scores_zero() {
        let mut g = MultimodalGraph::new();
        g.add_concept(ConceptNode::new("C1", "c", "Finding").unwrap()).unwrap();
        g.add_relation(RelationType::cross(Polarity::Positive)).unwrap();
        for id in ["a", "b", "c"] {
            g.add_image(ImageNode::new(id, "fix").unwrap()).unwrap();
        }
        for id in ["a", "b", "c"] {
            g.add_triple(Triple::new(id, "positive", "C1")).unwrap();
        }
        for id in ["a", "b", "c"] {
            assert_eq!(naf_score(&g, id).unwrap(), 0.0);
        }
    }

    #[test]
    fn unknown_image_errors() {
        let g = fixture();
        assert!(matches!(
            naf_score(&g, "nope"),
            Err(NafError::Graph(GraphError::UnknownNode(_)))
        ));
        // Concept ids are not image ids.
        assert!(naf_score(&g, "C1").is_err());
    }

    #[test]
    fn greedy_selection_covers_reachable_concepts() {
        let g = fixture();
        let outcome = run_naf(&g);
        assert!(!outcome.coverage_incomplete);
        let target: BTreeSet<String> =
            ["C1", "C2", "C3"].iter().map(|s| s.to_string()).collect();
        assert_eq!(outcome.covered_concepts, target);
        // a scores highest and covers C1, C2; c adds C3; selection stops as
        // soon as coverage is reached.
        assert_eq!(outcome.selected, vec!["a".to_string(), "c".to_string()]);
    }

    #[test]
    fn single_image_covering_everything_selects_one() {
        let mut g = MultimodalGraph::new();
        for cui in ["C1", "C2"] {
            g.add_concept(ConceptNode::new(cui, cui, "Finding").unwrap()).unwrap();
        }
        for id in ["top", "z"] {
            g.add_image(ImageNode::new(id, "fix").unwrap()).unwrap();
        }
        g.add_relation(RelationType::cross(Polarity::Positive)).unwrap();
        g.add_triple(Triple::new("top", "positive", "C1")).unwrap();
        g.add_triple(Triple::new("top", "positive", "C2")).unwrap();
        g.add_triple(Triple::new("z", "positive", "C1")).unwrap();
        let outcome = run_naf(&g);
        assert_eq!(outcome.selected, vec!["top".to_string()]);
    }

    #[test]
    fn empty_graph_selects_nothing() {
        let outcome = run_naf(&MultimodalGraph::new());
        assert!(outcome.selected.is_empty());
        assert!(outcome.covered_concepts.is_empty());
        assert!(!outcome.coverage_incomplete);
    }

    #[test]
    fn matches_brute_force_on_random_graphs() {
        for seed in 0..25 {
            let spec = SynthSpec {
                num_concepts: 30,
                num_images: 50,
                num_relations: 5,
                cross_edges: 180,
                intra_edges: 40,
                seed,
                planted: None,
            };
            let g = generate_random_graph(&spec).unwrap();
            let fast = run_naf(&g);
            let slow = brute_force_reference(&g);
            assert_eq!(fast.selected, slow.selected, "seed {seed}");
            assert_eq!(fast.covered_concepts, slow.covered_concepts);
            for (a, b) in fast.scores.iter().zip(slow.scores.iter()) {
                assert_eq!(a.image_id, b.image_id, "seed {seed}");
                assert!((a.score - b.score).abs() < 1e-12, "seed {seed}");
            }
        }
    }

    #[test]
    fn no_over_selection() {
        // Dropping the last selected image must lose coverage.
        for seed in 0..10 {
            let spec = SynthSpec {
                num_concepts: 20,
                num_images: 30,
                num_relations: 4,
                cross_edges: 90,
                intra_edges: 0,
                seed: seed + 100,
                planted: None,
            };
            let g = generate_random_graph(&spec).unwrap();
            let outcome = run_naf(&g);
            if outcome.coverage_incomplete || outcome.selected.is_empty() {
                continue;
            }
            let mut covered = BTreeSet::new();
            for id in &outcome.selected[..outcome.selected.len() - 1] {
                for t in g.incident_triples(id) {
                    if &t.head == id {
                        covered.insert(t.tail.clone());
                    }
                }
            }
            assert!(
                covered.len() < outcome.covered_concepts.len(),
                "seed {seed}: last selection was redundant"
            );
        }
    }

    #[test]
    fn scores_are_never_negative() {
        for seed in 200..210 {
            let spec = SynthSpec {
                num_concepts: 15,
                num_images: 12,
                num_relations: 4,
                cross_edges: 60,
                intra_edges: 10,
                seed,
                planted: None,
            };
            let g = generate_random_graph(&spec).unwrap();
            for entry in run_naf(&g).scores {
                assert!(entry.score >= 0.0);
            }
        }
    }

    #[test]
    fn exclusive_neighbor_raises_score_and_sharing_lowers_it() {
        let mut g = fixture();
        let before = naf_score(&g, "a").unwrap();
        g.add_concept(ConceptNode::new("C9", "new", "Finding").unwrap()).unwrap();
        g.add_triple(Triple::new("a", "positive", "C9")).unwrap();
        let with_exclusive = naf_score(&g, "a").unwrap();
        assert!(with_exclusive > before);

        // Sharing a's exclusive pair weakly decreases every holder's score.
        g.add_triple(Triple::new("b", "positive", "C9")).unwrap();
        let after_share = naf_score(&g, "a").unwrap();
        assert!(after_share < with_exclusive);
    }

    #[test]
    fn select_all_subgraph_is_identity() {
        let g = fixture();
        let outcome = FilterOutcome {
            selected: vec!["a".into(), "b".into(), "c".into(), "d".into()],
            covered_concepts: BTreeSet::new(),
            scores: Vec::new(),
            coverage_incomplete: false,
        };
        assert_eq!(subgraph_from_selection(&g, &outcome).unwrap(), g);
    }

    #[test]
    fn empty_selection_keeps_intra_edges() {
        let mut g = fixture();
        g.add_relation(RelationType::intra("treats").unwrap()).unwrap();
        g.add_triple(Triple::new("C1", "treats", "C2")).unwrap();
        let outcome = FilterOutcome {
            selected: Vec::new(),
            covered_concepts: BTreeSet::new(),
            scores: Vec::new(),
            coverage_incomplete: false,
        };
        let sub = subgraph_from_selection(&g, &outcome).unwrap();
        let stats = sub.compute_stats();
        assert_eq!(stats.cross_edges, 0);
        assert_eq!(stats.intra_edges, 1);
        assert_eq!(sub.num_concepts(), 3);
        assert_eq!(sub.num_images(), 0);
    }

    #[test]
    fn partial_selection_matches_incidence_filter() {
        let g = fixture();
        let outcome = FilterOutcome {
            selected: vec!["a".into(), "c".into()],
            covered_concepts: BTreeSet::new(),
            scores: Vec::new(),
            coverage_incomplete: false,
        };
        let sub = subgraph_from_selection(&g, &outcome).unwrap();
        let expected: Vec<&Triple> = g
            .triples()
            .filter(|t| t.head == "a" || t.head == "c")
            .collect();
        let got: Vec<&Triple> = sub.triples().collect();
        assert_eq!(got, expected);
        sub.check_consistency().unwrap();
    }

    #[test]
    fn stale_outcome_detected() {
        let g = fixture();
        let outcome = FilterOutcome {
            selected: vec!["ghost".into()],
            covered_concepts: BTreeSet::new(),
            scores: Vec::new(),
            coverage_incomplete: false,
        };
        assert!(matches!(
            subgraph_from_selection(&g, &outcome),
            Err(NafError::StaleOutcome(_))
        ));
    }
}
