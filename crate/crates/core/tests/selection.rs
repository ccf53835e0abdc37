mod common;

use std::collections::BTreeSet;

use common::{contiguous_clusters, random_vectors, rng};
use eventsift_core::acquisition::{
    bald_kmeans_select, pseudo_label_select, select_from_clusters, Candidate, SelectConfig,
};
use eventsift_core::ClassIndex;
use proptest::prelude::*;
use rand::Rng;

fn candidates(seed: u64, n: usize, ties: bool) -> Vec<Candidate> {
    let mut r = rng(seed);
    (0..n)
        .map(|i| Candidate {
            id: format!("p{i}"),
            score: if ties {
                r.random_range(0..4) as f64 / 4.0
            } else {
                r.random::<f64>()
            },
            predicted: ClassIndex(r.random_range(0..3)),
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn batch_size_and_distinct(seed in any::<u64>(), n in 1usize..=300, d in 1usize..=8, ties in any::<bool>()) {
        let cands = candidates(seed, n, ties);
        let emb = random_vectors(&mut rng(seed ^ 1), n, d);
        let refs: Vec<&[f32]> = emb.iter().map(|v| v.as_slice()).collect();
        let sel = bald_kmeans_select(&cands, &refs, &SelectConfig::default(), seed).unwrap();
        prop_assert_eq!(sel.ids.len(), n.min(16));
        let unique: BTreeSet<&String> = sel.ids.iter().collect();
        prop_assert_eq!(unique.len(), sel.ids.len());
        let again = bald_kmeans_select(&cands, &refs, &SelectConfig::default(), seed).unwrap();
        prop_assert_eq!(&sel, &again);
    }

    #[test]
    fn allocation_follows_survivor_count(seed in any::<u64>(), sizes in prop::collection::vec(1usize..60, 1..=16)) {
        let total: usize = sizes.iter().sum();
        let cands = candidates(seed, total, false);
        let cl = contiguous_clusters(&sizes, 16);
        let survivors = cl.surviving();
        let sel = select_from_clusters(&cands, cl.clone(), 16, seed).unwrap();
        let s = survivors.len();
        if s == 0 {
            prop_assert!(sel.fallback);
            return Ok(());
        }
        let roomy = survivors.iter().all(|&c| cl.members[c].len() >= 16 / s + 1);
        if roomy {
            let base = 16 / s;
            let extra = survivors.iter().filter(|&&c| sel.allocation[c] == base + 1).count();
            prop_assert!(survivors.iter().all(|&c| sel.allocation[c] == base || sel.allocation[c] == base + 1));
            prop_assert_eq!(extra, 16 % s);
            // The chosen posts per cluster are its top-scoring members.
            for &c in &survivors {
                let mut ranked = cl.members[c].clone();
                ranked.sort_by(|&a, &b| cands[b].score.total_cmp(&cands[a].score).then(a.cmp(&b)));
                let got: BTreeSet<usize> = sel.positions.iter().copied().filter(|&p| cl.assignment[p] == c).collect();
                let want: BTreeSet<usize> = ranked[..sel.allocation[c]].iter().copied().collect();
                prop_assert_eq!(got, want);
            }
        }
        prop_assert_eq!(sel.positions.len(), 16.min(total));
        for (c, &a) in sel.allocation.iter().enumerate() {
            if cl.discarded[c] {
                prop_assert_eq!(a, 0);
            }
        }
    }

    #[test]
    fn pseudo_and_annotation_disjoint(seed in any::<u64>(), sizes in prop::collection::vec(1usize..60, 1..=16)) {
        let total: usize = sizes.iter().sum();
        let cands = candidates(seed, total, seed % 2 == 0);
        let cl = contiguous_clusters(&sizes, 16);
        let sel = select_from_clusters(&cands, cl.clone(), 16, seed).unwrap();
        let annotated: BTreeSet<usize> = sel.positions.iter().copied().collect();
        let pseudo = pseudo_label_select(&cands, &cl, 16, &annotated);
        for (p, class) in &pseudo {
            prop_assert!(!annotated.contains(p));
            prop_assert_eq!(*class, cands[*p].predicted);
            prop_assert!(!cl.discarded[cl.assignment[*p]]);
        }
        let unique: BTreeSet<usize> = pseudo.iter().map(|x| x.0).collect();
        prop_assert_eq!(unique.len(), pseudo.len());
    }
}

#[test]
fn remainder_depends_on_seed() {
    let sizes = [30usize; 6];
    let cands = candidates(3, 180, false);
    let patterns: BTreeSet<Vec<usize>> = (0..30)
        .map(|seed| select_from_clusters(&cands, contiguous_clusters(&sizes, 16), 16, seed).unwrap().allocation)
        .collect();
    assert!(patterns.len() > 1);
    assert!(patterns.iter().all(|a| a.iter().sum::<usize>() == 16));
}
