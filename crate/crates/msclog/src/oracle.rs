//! Bounded exhaustive enumeration of MSCs and equivalence checking.
//!
//! The enumerator streams every valid MSC over a signature with at most a
//! given number of events per process. It first enumerates *structures*
//! (word lengths plus roles: internal, send-to, receive-from, with FIFO
//! pairing and acyclicity enforced), then all labelings of each structure.
//! The happens-before cache is computed once per structure and shared by
//! all labelings.

use crate::msc::{Causality, EventId, ExtLabel, Msc, Signature};
use std::sync::Arc;

/// Size limits for bounded checks.
#[derive(Debug, Clone, Copy)]
pub struct Bounds {
    /// Maximum number of events on each process.
    pub max_events_per_process: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Internal,
    Send(usize),
    Recv(usize),
}

/// Calls `f` with every valid MSC over `sig` within `bounds`.
///
/// Every chart passed to `f` is valid (non-empty, acyclic, FIFO, single-use
/// endpoints), and every valid chart within the bounds appears exactly once.
pub fn for_each_msc(sig: &Arc<Signature>, bounds: Bounds, mut f: impl FnMut(&Msc)) {
    for_each_structure(sig, bounds, &mut |base: &Msc| {
        let n_labels = sig.ext_label_count();
        let events: usize = base.words.iter().map(|w| w.len()).sum();
        let labels = sig.ext_labels();
        // Odometer over all labelings of the structure.
        let mut digits = vec![0usize; events];
        let mut msc = base.clone();
        loop {
            let mut k = 0;
            for w in msc.words.iter_mut() {
                for slot in w.iter_mut() {
                    *slot = labels[digits[k]];
                    k += 1;
                }
            }
            f(&msc);
            let mut i = 0;
            loop {
                if i == events {
                    return;
                }
                digits[i] += 1;
                if digits[i] < n_labels {
                    break;
                }
                digits[i] = 0;
                i += 1;
            }
        }
    });
}

/// Collects all valid MSCs within bounds. Intended for small bounds only.
pub fn all_mscs(sig: &Arc<Signature>, bounds: Bounds) -> Vec<Msc> {
    let mut out = Vec::new();
    for_each_msc(sig, bounds, |m| out.push(m.clone()));
    out
}

/// Counts valid MSCs within bounds without materialising them.
pub fn count_mscs(sig: &Arc<Signature>, bounds: Bounds) -> u64 {
    let mut n = 0u64;
    let labels = sig.ext_label_count() as u64;
    for_each_structure(sig, bounds, &mut |base| {
        n += labels.pow(base.event_count() as u32);
    });
    n
}

/// Enumerates message structures: charts with all labels set to label 0 and
/// the happens-before cache already forced.
fn for_each_structure(sig: &Arc<Signature>, bounds: Bounds, f: &mut impl FnMut(&Msc)) {
    let np = sig.processes.len();
    let max = bounds.max_events_per_process;
    let mut lens = vec![0usize; np];
    loop {
        if lens.iter().any(|&l| l > 0) {
            emit_roles(sig, &lens, f);
        }
        // Advance the length vector.
        let mut i = 0;
        loop {
            if i == np {
                return;
            }
            lens[i] += 1;
            if lens[i] <= max {
                break;
            }
            lens[i] = 0;
            i += 1;
        }
    }
}

fn emit_roles(sig: &Arc<Signature>, lens: &[usize], f: &mut impl FnMut(&Msc)) {
    let np = lens.len();
    // Flattened event order: process by process.
    let total: usize = lens.iter().sum();
    let mut roles: Vec<Role> = Vec::with_capacity(total);
    // sent[p][q] / rcvd[q][p]: counts so far.
    let mut sent = vec![vec![0usize; np]; np];
    let mut rcvd = vec![vec![0usize; np]; np];
    let owner: Vec<usize> = lens
        .iter()
        .enumerate()
        .flat_map(|(p, &l)| std::iter::repeat(p).take(l))
        .collect();
    let remaining_on = |roles_len: usize, p: usize, owner: &[usize]| -> usize {
        owner[roles_len..].iter().filter(|&&o| o == p).count()
    };

    fn rec(
        sig: &Arc<Signature>,
        lens: &[usize],
        owner: &[usize],
        roles: &mut Vec<Role>,
        sent: &mut Vec<Vec<usize>>,
        rcvd: &mut Vec<Vec<usize>>,
        remaining_on: &dyn Fn(usize, usize, &[usize]) -> usize,
        f: &mut impl FnMut(&Msc),
    ) {
        let np = lens.len();
        if roles.len() == owner.len() {
            // Channels must balance.
            for p in 0..np {
                for q in 0..np {
                    if sent[p][q] != rcvd[q][p] {
                        return;
                    }
                }
            }
            // FIFO pairing: k-th send on (p,q) pairs with k-th receive.
            let mut messages = Vec::new();
            let mut send_idx: Vec<Vec<Vec<usize>>> = vec![vec![Vec::new(); np]; np];
            let mut recv_idx: Vec<Vec<Vec<usize>>> = vec![vec![Vec::new(); np]; np];
            let mut k = 0;
            for (p, &l) in lens.iter().enumerate() {
                for i in 1..=l {
                    match roles[k] {
                        Role::Internal => {}
                        Role::Send(q) => send_idx[p][q].push(i),
                        Role::Recv(q) => recv_idx[p][q].push(i),
                    }
                    k += 1;
                }
            }
            for p in 0..np {
                for q in 0..np {
                    for (s, r) in send_idx[p][q].iter().zip(&recv_idx[q][p]) {
                        messages.push((EventId::new(p, *s), EventId::new(q, *r)));
                    }
                }
            }
            let words = lens.iter().map(|&l| vec![ExtLabel::plain(0); l]).collect();
            let msc = Msc::new(sig.clone(), words, messages);
            if Causality::try_new(&msc).is_some() {
                msc.causality(); // force the cache so labelings share it
                f(&msc);
            }
            return;
        }
        let p = owner[roles.len()];
        for role in std::iter::once(Role::Internal)
            .chain((0..np).filter(|&q| q != p).map(Role::Send))
            .chain((0..np).filter(|&q| q != p).map(Role::Recv))
        {
            match role {
                Role::Internal => {}
                Role::Send(_) => {}
                Role::Recv(q) => {
                    // A receive needs a matching send; sends on (q,p) so far
                    // plus future events on q must cover it.
                    let needed = rcvd[p][q] + 1;
                    if sent[q][p] + remaining_on(roles.len(), q, owner) < needed {
                        continue;
                    }
                }
            }
            if let Role::Send(q) = role {
                // Future events on q must be able to absorb all sends.
                let needed = sent[p][q] + 1;
                if rcvd[q][p] + remaining_on(roles.len(), q, owner) < needed {
                    continue;
                }
            }
            match role {
                Role::Send(q) => sent[p][q] += 1,
                Role::Recv(q) => rcvd[p][q] += 1,
                Role::Internal => {}
            }
            roles.push(role);
            rec(sig, lens, owner, roles, sent, rcvd, remaining_on, f);
            roles.pop();
            match role {
                Role::Send(q) => sent[p][q] -= 1,
                Role::Recv(q) => rcvd[p][q] -= 1,
                Role::Internal => {}
            }
        }
    }

    rec(sig, lens, &owner, &mut roles, &mut sent, &mut rcvd, &remaining_on, f);
}

/// Result of a bounded equivalence check.
#[derive(Debug, Clone)]
pub enum Verdict {
    Equivalent { checked: u64 },
    Counterexample { checked: u64, msc: Msc, left: bool, right: bool },
}

impl Verdict {
    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Verdict::Equivalent { checked } => serde_json::json!({
                "status": "equivalent",
                "checked": checked,
            }),
            Verdict::Counterexample { checked, msc, left, right } => serde_json::json!({
                "status": "counterexample",
                "checked": checked,
                "left": left,
                "right": right,
                "counterexample": msc.to_json(),
            }),
        }
    }
}

/// Compares two MSC predicates on every chart within bounds.
pub fn bounded_equiv(
    sig: &Arc<Signature>,
    bounds: Bounds,
    mut left: impl FnMut(&Msc) -> bool,
    mut right: impl FnMut(&Msc) -> bool,
) -> Verdict {
    let mut checked = 0u64;
    let mut cex: Option<(Msc, bool, bool)> = None;
    for_each_msc(sig, bounds, |m| {
        if cex.is_some() {
            return;
        }
        checked += 1;
        let (l, r) = (left(m), right(m));
        if l != r {
            cex = Some((m.clone(), l, r));
        }
    });
    match cex {
        None => Verdict::Equivalent { checked },
        Some((msc, left, right)) => Verdict::Counterexample { checked, msc, left, right },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn single_process_counts() {
        // One process, one label, up to two events: "a" and "aa".
        let sig = Signature::new(["p"], ["a"], 0);
        assert_eq!(count_mscs(&sig, Bounds { max_events_per_process: 2 }), 2);
    }

    #[test]
    fn two_process_single_event_counts() {
        // Words: (a,-), (-,a), (a,a) unlinked, and one message each way: 5.
        let sig = Signature::new(["p", "q"], ["a"], 0);
        assert_eq!(count_mscs(&sig, Bounds { max_events_per_process: 1 }), 5);
    }

    #[test]
    fn enumerated_charts_are_valid_and_distinct() {
        let sig = Signature::new(["p", "q"], ["a", "b"], 0);
        let mut seen = BTreeSet::new();
        let mut n = 0u64;
        for_each_msc(&sig, Bounds { max_events_per_process: 2 }, |m| {
            assert!(m.validate().is_empty(), "{m:?}");
            let key = format!("{:?}{:?}", m.words, m.messages);
            assert!(seen.insert(key));
            n += 1;
        });
        assert_eq!(n, count_mscs(&sig, Bounds { max_events_per_process: 2 }));
    }

    #[test]
    fn bounded_equiv_finds_planted_difference() {
        let sig = Signature::new(["p", "q"], ["a", "b"], 0);
        let bounds = Bounds { max_events_per_process: 2 };
        let v = bounded_equiv(
            &sig,
            bounds,
            |m| m.messages.len() % 2 == 0,
            |m| m.messages.len() % 2 == 0,
        );
        assert!(matches!(v, Verdict::Equivalent { .. }));
        let v = bounded_equiv(
            &sig,
            bounds,
            |m| m.messages.is_empty(),
            |m| m.messages.len() < 2,
        );
        match v {
            Verdict::Counterexample { msc, left, right, .. } => {
                assert!(!left && right);
                assert_eq!(msc.messages.len(), 1);
            }
            _ => panic!("expected counterexample"),
        }
    }
}
