//! Peer-review allocation.
//!
//! Two strategies: `balanced` gives every student two foreign projects with
//! equal review load per project, `choice` gives every student up to `k`
//! candidates of which they later pick two.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{derive_seed, SplitMix64};

pub const DEFAULT_CANDIDATES: usize = 5;
pub const REVIEWS_PER_STUDENT: usize = 2;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PeerReviewError {
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("invalid roster: {0}")]
    Roster(String),
    #[error("invalid choice: {0}")]
    Input(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roster {
    pub projects: Vec<String>,
    pub authors: BTreeMap<String, BTreeSet<String>>,
    pub students: Vec<String>,
}

impl Roster {
    /// One project per student, named after the student.
    pub fn single_author<S: AsRef<str>>(students: &[S]) -> Self {
        let students: Vec<String> = students.iter().map(|s| s.as_ref().to_string()).collect();
        let projects: Vec<String> = students.iter().map(|s| format!("p-{s}")).collect();
        let authors = projects
            .iter()
            .zip(&students)
            .map(|(p, s)| (p.clone(), BTreeSet::from([s.clone()])))
            .collect();
        Roster {
            projects,
            authors,
            students,
        }
    }

    /// Checks the roster and returns each student's own project index.
    pub fn own_projects(&self) -> Result<BTreeMap<&str, usize>, PeerReviewError> {
        let bad = |m: String| Err(PeerReviewError::Roster(m));
        let projects: BTreeSet<&String> = self.projects.iter().collect();
        if projects.len() != self.projects.len() {
            return bad("duplicate project id".into());
        }
        let students: BTreeSet<&String> = self.students.iter().collect();
        if students.len() != self.students.len() {
            return bad("duplicate student id".into());
        }
        let mut own = BTreeMap::new();
        for (i, p) in self.projects.iter().enumerate() {
            let authors = match self.authors.get(p) {
                Some(a) if !a.is_empty() => a,
                _ => return bad(format!("project {p} has no author")),
            };
            for a in authors {
                if !students.contains(a) {
                    return bad(format!("author {a} of {p} is not a listed student"));
                }
                if own.insert(a.as_str(), i).is_some() {
                    return bad(format!("student {a} authors more than one project"));
                }
            }
        }
        if let Some(p) = self.authors.keys().find(|p| !projects.contains(p)) {
            return bad(format!("authors listed for unknown project {p}"));
        }
        if let Some(s) = self.students.iter().find(|s| !own.contains_key(s.as_str())) {
            return bad(format!("student {s} authors no project"));
        }
        Ok(own)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Balanced,
    Choice,
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "balanced" => Ok(Strategy::Balanced),
            "choice" => Ok(Strategy::Choice),
            other => Err(format!("unknown strategy `{other}` (balanced|choice)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    pub strategy: Strategy,
    pub seed: u64,
    /// Balanced: the two projects to review. Choice: the candidate list.
    pub assigned: BTreeMap<String, Vec<String>>,
    /// Choices recorded so far (choice strategy only).
    #[serde(default)]
    pub chosen: BTreeMap<String, Vec<String>>,
}

/// Two distinct nonzero shifts of a seeded project permutation.
pub fn allocate_balanced(roster: &Roster, seed: u64) -> Result<Allocation, PeerReviewError> {
    let own = roster.own_projects()?;
    let n = roster.projects.len();
    if n < 3 {
        return Err(PeerReviewError::Infeasible(format!(
            "{n} projects cannot give every student {REVIEWS_PER_STUDENT} distinct foreign projects"
        )));
    }
    let mut rng = SplitMix64::new(derive_seed(seed, "peerreview/balanced", 0));
    let mut perm: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut perm);
    let mut pos = vec![0; n];
    for (i, &p) in perm.iter().enumerate() {
        pos[p] = i;
    }
    let (a, b) = loop {
        let a = 1 + rng.next_index(n - 1);
        let b = 1 + rng.next_index(n - 1);
        // with three projects the only pair sums to n
        if a != b && (n == 3 || !(a + b).is_multiple_of(n)) {
            break (a, b);
        }
    };
    let assigned = roster
        .students
        .iter()
        .map(|s| {
            let p = pos[own[s.as_str()]];
            let list = [a, b]
                .iter()
                .map(|shift| roster.projects[perm[(p + shift) % n]].clone())
                .collect();
            (s.clone(), list)
        })
        .collect();
    Ok(Allocation {
        strategy: Strategy::Balanced,
        seed,
        assigned,
        chosen: BTreeMap::new(),
    })
}

/// Up to `k` uniformly sampled foreign candidates per student.
pub fn allocate_choice(roster: &Roster, seed: u64, k: usize) -> Result<Allocation, PeerReviewError> {
    let own = roster.own_projects()?;
    let n = roster.projects.len();
    if n < 2 {
        return Err(PeerReviewError::Infeasible(format!(
            "{n} project(s) leave no foreign project to review"
        )));
    }
    let take = k.min(n - 1);
    let mut rng = SplitMix64::new(derive_seed(seed, "peerreview/choice", 0));
    let assigned = roster
        .students
        .iter()
        .map(|s| {
            let mine = own[s.as_str()];
            let foreign: Vec<usize> = (0..n).filter(|&i| i != mine).collect();
            let list = rng
                .sample_indices(foreign.len(), take)
                .into_iter()
                .map(|i| roster.projects[foreign[i]].clone())
                .collect();
            (s.clone(), list)
        })
        .collect();
    Ok(Allocation {
        strategy: Strategy::Choice,
        seed,
        assigned,
        chosen: BTreeMap::new(),
    })
}

pub fn allocate(roster: &Roster, strategy: Strategy, seed: u64) -> Result<Allocation, PeerReviewError> {
    match strategy {
        Strategy::Balanced => allocate_balanced(roster, seed),
        Strategy::Choice => allocate_choice(roster, seed, DEFAULT_CANDIDATES),
    }
}

/// Records a student's pick of two candidates.
pub fn record_choice<S: AsRef<str>>(
    alloc: &mut Allocation,
    student: &str,
    chosen: &[S],
) -> Result<(), PeerReviewError> {
    let candidates = alloc
        .assigned
        .get(student)
        .ok_or_else(|| PeerReviewError::Input(format!("unknown student {student}")))?;
    let picked: Vec<String> = chosen.iter().map(|c| c.as_ref().to_string()).collect();
    let distinct: BTreeSet<&String> = picked.iter().collect();
    if picked.len() != REVIEWS_PER_STUDENT || distinct.len() != picked.len() {
        return Err(PeerReviewError::Input(format!(
            "pick exactly {REVIEWS_PER_STUDENT} distinct projects"
        )));
    }
    if let Some(p) = picked.iter().find(|p| !candidates.contains(p)) {
        return Err(PeerReviewError::Input(format!(
            "{p} is not among the candidates of {student}"
        )));
    }
    alloc.chosen.insert(student.to_string(), picked);
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub counts: BTreeMap<String, usize>,
    /// Projects nobody reviews.
    pub uncovered: Vec<String>,
}

/// Review count per project: assignments for `balanced`, recorded choices
/// for `choice`.
pub fn coverage_report(roster: &Roster, alloc: &Allocation) -> CoverageReport {
    let mut counts: BTreeMap<String, usize> =
        roster.projects.iter().map(|p| (p.clone(), 0)).collect();
    let source = match alloc.strategy {
        Strategy::Balanced => &alloc.assigned,
        Strategy::Choice => &alloc.chosen,
    };
    for p in source.values().flatten() {
        *counts.entry(p.clone()).or_default() += 1;
    }
    let uncovered = roster
        .projects
        .iter()
        .filter(|p| counts[*p] == 0)
        .cloned()
        .collect();
    CoverageReport { counts, uncovered }
}
