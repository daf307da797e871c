use std::collections::{BTreeMap, BTreeSet};

use netedu::peerreview::{
    allocate_balanced, allocate_choice, coverage_report, record_choice, PeerReviewError, Roster,
};
use netedu::rng::SplitMix64;

fn single(n: usize) -> Roster {
    let names: Vec<String> = (0..n).map(|i| format!("s{i:02}")).collect();
    Roster::single_author(&names)
}

/// Groups of 1..=3 authors; group sizes vary.
fn grouped(rng: &mut SplitMix64, projects: usize) -> Roster {
    let mut r = Roster { projects: Vec::new(), authors: BTreeMap::new(), students: Vec::new() };
    let mut next = 0;
    for p in 0..projects {
        let id = format!("g{p}");
        let size = 1 + rng.next_index(3);
        let members: BTreeSet<String> = (next..next + size).map(|s| format!("st{s}")).collect();
        next += size;
        r.students.extend(members.iter().cloned());
        r.projects.push(id.clone());
        r.authors.insert(id, members);
    }
    r
}

fn owner(roster: &Roster) -> BTreeMap<String, String> {
    roster
        .authors
        .iter()
        .flat_map(|(p, a)| a.iter().map(move |s| (s.clone(), p.clone())))
        .collect()
}

#[test]
fn balanced_over_random_rosters() {
    let mut rng = SplitMix64::new(2024);
    for case in 0..1000 {
        let n = 3 + rng.next_index(48);
        let roster = single(n);
        let seed = rng.next_u64();
        let alloc = allocate_balanced(&roster, seed).unwrap();
        let own = owner(&roster);
        for (s, list) in &alloc.assigned {
            assert_eq!(list.len(), 2);
            assert_ne!(list[0], list[1], "case {case}");
            assert!(!list.contains(&own[s]), "case {case}: self review");
        }
        let cov = coverage_report(&roster, &alloc);
        assert!(cov.counts.values().all(|&c| c == 2), "case {case} n={n}: {:?}", cov.counts);
        assert!(cov.uncovered.is_empty());
        assert_eq!(allocate_balanced(&roster, seed).unwrap(), alloc);
    }
}

#[test]
fn balanced_with_groups_never_self_reviews() {
    let mut rng = SplitMix64::new(7);
    for _ in 0..300 {
        let projects = 3 + rng.next_index(20);
        let roster = grouped(&mut rng, projects);
        let alloc = allocate_balanced(&roster, rng.next_u64()).unwrap();
        let own = owner(&roster);
        for (s, list) in &alloc.assigned {
            assert!(!list.contains(&own[s]));
            assert_ne!(list[0], list[1]);
        }
        // every project is reviewed twice per author of some other project
        let total: usize = coverage_report(&roster, &alloc).counts.values().sum();
        assert_eq!(total, 2 * roster.students.len());
    }
}

#[test]
fn choice_over_random_rosters() {
    let mut rng = SplitMix64::new(99);
    for _ in 0..1000 {
        let n = 3 + rng.next_index(48);
        let roster = single(n);
        let seed = rng.next_u64();
        let alloc = allocate_choice(&roster, seed, 5).unwrap();
        let own = owner(&roster);
        for (s, list) in &alloc.assigned {
            assert_eq!(list.len(), 5.min(n - 1));
            assert!(!list.contains(&own[s]));
            assert_eq!(list.iter().collect::<BTreeSet<_>>().len(), list.len());
        }
        assert_eq!(allocate_choice(&roster, seed, 5).unwrap(), alloc);
    }
}

#[test]
fn choice_covers_every_foreign_project_across_seeds() {
    let roster = single(20);
    let mut seen: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for seed in 0..1000 {
        for (s, list) in allocate_choice(&roster, seed, 5).unwrap().assigned {
            seen.entry(s).or_default().extend(list);
        }
    }
    for (s, lists) in seen {
        assert_eq!(lists.len(), 19, "{s}");
    }
}

#[test]
fn small_rosters_are_infeasible() {
    assert!(matches!(allocate_balanced(&single(2), 1), Err(PeerReviewError::Infeasible(_))));
    assert!(matches!(allocate_choice(&single(1), 1, 5), Err(PeerReviewError::Infeasible(_))));
}

#[test]
fn avoided_project_is_reported() {
    let roster = single(8);
    let mut alloc = allocate_choice(&roster, 5, 5).unwrap();
    let avoid = "p-s00".to_string();
    for (s, list) in alloc.assigned.clone() {
        let picks: Vec<&String> = list.iter().filter(|p| **p != avoid).take(2).collect();
        record_choice(&mut alloc, &s, &picks).unwrap();
    }
    let cov = coverage_report(&roster, &alloc);
    assert_eq!(cov.counts[&avoid], 0);
    assert!(cov.uncovered.contains(&avoid));
}
