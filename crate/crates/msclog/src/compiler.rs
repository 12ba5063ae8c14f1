//! End-to-end compilation of sentences into machines.
//!
//! Pipeline: normalise the sentence ([`scott_normal_form`]), extend the
//! alphabet by one guessed bit per set variable, run one annotation machine
//! per relation symbol the kernels actually depend on, and restrict each
//! event to letter/type combinations under which every universal kernel
//! holds for all related events and every witness kernel holds for some
//! related event. Hiding the guessed bits then yields a machine over the
//! plain alphabet with the sentence's language.
//!
//! The module also ships the formula suite used by the equivalence tests and
//! the two families of small formulas whose minimal recognisers blow up
//! doubly exponentially.

use crate::cfm::{AccRect, Cfm, InitRect, KeepFn, Offer, Prim, Shape, StateSet, Val};
use crate::cfm::explicit::ExplicitCfm;
use crate::logic::{
    rewrite_type, scott_normal_form, Formula, LogicError, Sentence, Snf,
};
use crate::msc::{ExtLabel, Rel, Signature};
use crate::parallelcfm::ParLayout;
use crate::typecfm::relation_machine;
use std::collections::HashSet;
use std::sync::Arc;

// ---------------------------------------------------------------------------
// Kernel analysis.
// ---------------------------------------------------------------------------

/// Letter/process combinations that can actually occur as (event, related
/// event) under `rel`: same-process relations need equal processes, message
/// and parallel relations distinct ones.
fn combos(sig: &Signature, rel: Rel) -> Vec<((usize, ExtLabel), (usize, ExtLabel))> {
    let np = sig.processes.len();
    let letters = sig.ext_labels();
    let mut out = Vec::new();
    for p1 in 0..np {
        for p2 in 0..np {
            let ok = match rel {
                Rel::Eq | Rel::Proc | Rel::ProcInv => p1 == p2,
                Rel::Msg | Rel::MsgInv | Rel::Par => p1 != p2,
                Rel::Less | Rel::LessInv => true,
            };
            if !ok {
                continue;
            }
            for &l1 in &letters {
                for &l2 in &letters {
                    if rel == Rel::Eq && l1 != l2 {
                        continue;
                    }
                    out.push(((p1, l1), (p2, l2)));
                }
            }
        }
    }
    out
}

/// Does checking `kernel` against `rel`-partners ever add information beyond
/// the self-check the event always gets (the `Eq` pair)? A pair attaining
/// `value` under `rel` only matters when the self-pair does not already
/// attain it: a universal kernel violated at an event whose self-check also
/// fails rejects the event either way, and a witness found for an event that
/// witnesses itself is redundant.
fn kernel_attains(
    kernel: &Formula,
    set_vars: &[String],
    sig: &Signature,
    rel: Rel,
    value: bool,
) -> bool {
    combos(sig, rel).into_iter().any(|(src, dst)| {
        rewrite_type(kernel, set_vars, src, dst, rel) == value
            && rewrite_type(kernel, set_vars, src, src, Rel::Eq) != value
    })
}

/// Decodes a relation machine's annotation value back into its set of
/// (process, letter) pairs.
fn decode_pairs(v: &Val) -> Vec<(usize, ExtLabel)> {
    let Val::Set(items) = v else { panic!("expected a type component, got {v:?}") };
    items
        .iter()
        .map(|item| {
            let Val::Seq(pair) = item else { panic!("bad type pair {item:?}") };
            let Val::Int(p) = pair[0] else { panic!("bad type pair {item:?}") };
            let Val::Seq(l) = &pair[1] else { panic!("bad type pair {item:?}") };
            let (Val::Int(lab), Val::Int(bits)) = (&l[0], &l[1]) else {
                panic!("bad type pair {item:?}")
            };
            (p as usize, ExtLabel { label: *lab as u16, bits: *bits as u32 })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Kernel decomposition.
//
// A universal kernel is a conjunction of clauses over the pair (x, y). A
// clause free of relational atoms constrains only the two letters, and
// `forall x forall y (A(x) or B(y))` is the same as
// `(forall x A(x)) or (forall y B(y))`: a pair of global flags tracked by a
// tiny deterministic primitive, with no relation annotation needed. Likewise
// a witness kernel free of relational atoms asks, per (process, letter)
// class, that the class be absent or some event anywhere satisfy the
// witness predicate. Splitting these parts off leaves only the genuinely
// relational residue to the (much heavier) relation machines — in
// particular the parallel-pairs machinery is engaged only by kernels that
// actually compare positions.
// ---------------------------------------------------------------------------

/// CNF clauses (lists of literals) of a quantifier-free formula, or `None`
/// when distribution would exceed `cap` clauses.
fn cnf_clauses(f: &Formula, pos: bool, cap: usize) -> Option<Vec<Vec<Formula>>> {
    match (f, pos) {
        (Formula::Not(g), _) => cnf_clauses(g, !pos, cap),
        (Formula::And(a, b), true) | (Formula::Or(a, b), false) => {
            let mut ca = cnf_clauses(a, pos, cap)?;
            let cb = cnf_clauses(b, pos, cap)?;
            ca.extend(cb);
            (ca.len() <= cap).then_some(ca)
        }
        (Formula::Or(a, b), true) | (Formula::And(a, b), false) => {
            let ca = cnf_clauses(a, pos, cap)?;
            let cb = cnf_clauses(b, pos, cap)?;
            let mut out = Vec::with_capacity(ca.len() * cb.len());
            for x in &ca {
                for y in &cb {
                    let mut c = x.clone();
                    c.extend(y.iter().cloned());
                    if out.len() == cap {
                        return None;
                    }
                    out.push(c);
                }
            }
            Some(out)
        }
        (Formula::Exists(..) | Formula::Forall(..) | Formula::ExistsSet(..), _) => None,
        (atom, true) => Some(vec![vec![atom.clone()]]),
        (atom, false) => Some(vec![vec![Formula::not(atom.clone())]]),
    }
}

enum LitKind {
    ConstTrue,
    ConstFalse,
    /// A unary literal on the named kernel variable.
    OnVar(String),
    Relational,
}

fn lit_kind(lit: &Formula) -> LitKind {
    let (atom, pos) = match lit {
        Formula::Not(g) => (&**g, false),
        a => (a, true),
    };
    match atom {
        Formula::Proc(_, v) | Formula::Lab(_, v) | Formula::SetMem(_, v) => {
            LitKind::OnVar(v.clone())
        }
        Formula::Eq(v, w) | Formula::Leq(v, w) if v == w => {
            if pos { LitKind::ConstTrue } else { LitKind::ConstFalse }
        }
        Formula::ProcEdge(v, w) | Formula::MsgEdge(v, w) if v == w => {
            if pos { LitKind::ConstFalse } else { LitKind::ConstTrue }
        }
        _ => LitKind::Relational,
    }
}

/// Does the formula's truth under [`rewrite_type`] depend only on the two
/// (process, letter) arguments, never on the relation between them?
fn relation_free(f: &Formula) -> bool {
    match f {
        Formula::Proc(..) | Formula::Lab(..) | Formula::SetMem(..) => true,
        Formula::Eq(v, w)
        | Formula::Leq(v, w)
        | Formula::ProcEdge(v, w)
        | Formula::MsgEdge(v, w) => v == w,
        Formula::Not(g) => relation_free(g),
        Formula::And(a, b) | Formula::Or(a, b) => relation_free(a) && relation_free(b),
        _ => false,
    }
}

/// A universal kernel split into relation-free clauses (as optional
/// per-variable disjuncts `A(x)`, `B(y)`) and the relational residue.
struct AaSplit {
    free: Vec<(Option<Formula>, Option<Formula>)>,
    residue: Option<Formula>,
}

fn split_aa(kernel: &Formula) -> AaSplit {
    const CAP: usize = 64;
    let Some(clauses) = cnf_clauses(kernel, true, CAP) else {
        return AaSplit { free: Vec::new(), residue: Some(kernel.clone()) };
    };
    let mut free = Vec::new();
    let mut residual: Vec<Vec<Formula>> = Vec::new();
    'clauses: for clause in clauses {
        let mut on_x: Option<Formula> = None;
        let mut on_y: Option<Formula> = None;
        for lit in &clause {
            match lit_kind(lit) {
                LitKind::ConstTrue => continue 'clauses,
                LitKind::ConstFalse => {}
                LitKind::OnVar(v) => {
                    let side = if v == "x" { &mut on_x } else { &mut on_y };
                    *side = Some(match side.take() {
                        None => lit.clone(),
                        Some(acc) => Formula::or(acc, lit.clone()),
                    });
                }
                LitKind::Relational => {
                    residual.push(clause);
                    continue 'clauses;
                }
            }
        }
        free.push((on_x, on_y));
    }
    let residue = residual
        .into_iter()
        .map(|c| c.into_iter().reduce(Formula::or).expect("relational clause is nonempty"))
        .reduce(Formula::and);
    AaSplit { free, residue }
}

/// A (process, letter-with-bits) class, the granularity at which
/// relation-free kernels distinguish events.
type ClassKey = (usize, u16, u32);

fn class_key(p: usize, l: ExtLabel) -> ClassKey {
    (p, l.label, l.bits)
}

fn bool_pair(a: bool, b: bool) -> Val {
    Val::pair(Val::Bool(a), Val::Bool(b))
}

/// Accepts iff every event's class is in `a` or every event's class is in
/// `b`. Per-process state: the pair of flags "all events here so far were in
/// `a`" / "... in `b`".
struct AllOrAll {
    name: String,
    np: usize,
    a: HashSet<ClassKey>,
    b: HashSet<ClassKey>,
}

impl Prim for AllOrAll {
    fn name(&self) -> String {
        self.name.clone()
    }
    fn initial_rects(&self) -> Vec<InitRect> {
        vec![vec![vec![bool_pair(true, true)]; self.np]]
    }
    fn accepting_rects(&self) -> Vec<AccRect> {
        let all_a = StateSet::List(vec![bool_pair(true, true), bool_pair(true, false)]);
        let all_b = StateSet::List(vec![bool_pair(true, true), bool_pair(false, true)]);
        vec![vec![all_a; self.np], vec![all_b; self.np]]
    }
    fn offers(&self, p: usize, state: &Val, letter: ExtLabel, _shape: Shape<'_>) -> Vec<Offer> {
        let Val::Pair(fa, fb) = state else { return Vec::new() };
        let key = class_key(p, letter);
        let na = matches!(fa.as_ref(), Val::Bool(true)) && self.a.contains(&key);
        let nb = matches!(fb.as_ref(), Val::Bool(true)) && self.b.contains(&key);
        vec![Offer::new(bool_pair(na, nb))]
    }
}

/// Accepts iff no event has class `cls` or some event's class is in `wit`.
/// Per-process state: (saw an event of `cls` here, saw a witness here).
struct ClassWitness {
    name: String,
    np: usize,
    cls: ClassKey,
    wit: HashSet<ClassKey>,
}

impl Prim for ClassWitness {
    fn name(&self) -> String {
        self.name.clone()
    }
    fn initial_rects(&self) -> Vec<InitRect> {
        vec![vec![vec![bool_pair(false, false)]; self.np]]
    }
    fn accepting_rects(&self) -> Vec<AccRect> {
        let no_cls = StateSet::List(vec![bool_pair(false, false), bool_pair(false, true)]);
        let mut rects = vec![vec![no_cls; self.np]];
        for q in 0..self.np {
            let mut rect: AccRect = vec![StateSet::Any; self.np];
            rect[q] = StateSet::List(vec![bool_pair(false, true), bool_pair(true, true)]);
            rects.push(rect);
        }
        rects
    }
    fn offers(&self, p: usize, state: &Val, letter: ExtLabel, _shape: Shape<'_>) -> Vec<Offer> {
        let Val::Pair(sc, sw) = state else { return Vec::new() };
        let key = class_key(p, letter);
        let nc = matches!(sc.as_ref(), Val::Bool(true)) || key == self.cls;
        let nw = matches!(sw.as_ref(), Val::Bool(true)) || self.wit.contains(&key);
        vec![Offer::new(bool_pair(nc, nw))]
    }
}

// ---------------------------------------------------------------------------
// Compilation.
// ---------------------------------------------------------------------------

/// Compiles a sentence into a machine with the same language: the machine
/// reads plain charts (set-variable bits are guessed internally) and accepts
/// exactly the charts satisfying the sentence.
pub fn compile(sentence: &Sentence) -> Result<Cfm, LogicError> {
    Ok(compile_snf(&scott_normal_form(sentence)?))
}

/// Compiles an already-normalised sentence.
pub fn compile_snf(snf: &Snf) -> Cfm {
    let ext_sig = snf.sig.with_setvars(snf.width());
    let np = ext_sig.processes.len();
    let classes: Vec<(usize, ExtLabel)> = (0..np)
        .flat_map(|p| ext_sig.ext_labels().into_iter().map(move |l| (p, l)))
        .collect();

    // Relation-free kernel parts become dedicated flag primitives; only the
    // relational residue goes through the relation machines below.
    let mut extra: Vec<Arc<dyn Prim>> = Vec::new();
    let aa_split = snf.kernel_aa.as_ref().map(split_aa);
    let kernel_aa: Option<Formula> = aa_split.as_ref().and_then(|s| s.residue.clone());
    if let Some(split) = &aa_split {
        for (i, (fx, fy)) in split.free.iter().enumerate() {
            // A clause side mentions one kernel variable only, so it reads
            // off a single (process, letter); the relation argument is inert.
            let classes_of = |f: &Option<Formula>| -> HashSet<ClassKey> {
                classes
                    .iter()
                    .filter(|&&c| {
                        f.as_ref()
                            .is_some_and(|f| rewrite_type(f, &snf.set_vars, c, c, Rel::Eq))
                    })
                    .map(|&(p, l)| class_key(p, l))
                    .collect()
            };
            let a = classes_of(fx);
            let b = classes_of(fy);
            if a.len() == classes.len() || b.len() == classes.len() {
                continue; // one side holds at every event: clause is vacuous
            }
            extra.push(Arc::new(AllOrAll { name: format!("all-or-all-{i}"), np, a, b }));
        }
    }
    let mut kernel_ae: Vec<Formula> = Vec::new();
    for (ki, k) in snf.kernel_ae.iter().enumerate() {
        if !relation_free(k) {
            kernel_ae.push(k.clone());
            continue;
        }
        for &c in &classes {
            if rewrite_type(k, &snf.set_vars, c, c, Rel::Eq) {
                continue; // events of this class witness themselves
            }
            let wit: HashSet<ClassKey> = classes
                .iter()
                .filter(|&&d| rewrite_type(k, &snf.set_vars, c, d, Rel::Eq))
                .map(|&(p, l)| class_key(p, l))
                .collect();
            let (p, l) = c;
            extra.push(Arc::new(ClassWitness {
                name: format!("witness-{ki}-p{p}-l{}b{}", l.label, l.bits),
                np,
                cls: class_key(p, l),
                wit,
            }));
        }
    }

    // A relation needs its annotation machine when some kernel's truth
    // depends on the related events under it: a universal kernel that can be
    // false, or a witness kernel that can be true. The event's own pair
    // (relation `Eq`) is known without a machine.
    let mut machine_rels: Vec<Rel> = Vec::new();
    for rel in Rel::ALL {
        if rel == Rel::Eq || (rel == Rel::Par && np < 2) {
            continue;
        }
        let needed = kernel_aa
            .iter()
            .any(|k| kernel_attains(k, &snf.set_vars, &ext_sig, rel, false))
            || kernel_ae
                .iter()
                .any(|k| kernel_attains(k, &snf.set_vars, &ext_sig, rel, true));
        if needed {
            machine_rels.push(rel);
        }
    }

    // Product of the needed annotation machines, remembering where each
    // relation's tracks start.
    let mut machines: Vec<(Rel, usize)> = Vec::new();
    let mut cfm: Option<Cfm> = None;
    let mut offset = 0;
    for &rel in &machine_rels {
        let m = relation_machine(&ext_sig, rel);
        machines.push((rel, offset));
        offset += m.track_count;
        cfm = Some(match cfm {
            None => m,
            Some(acc) => acc.product(m),
        });
    }
    // A kernel may constrain only the event itself; keep a carrier machine
    // so the restriction has somewhere to run.
    let cfm = cfm.unwrap_or_else(|| relation_machine(&ext_sig, Rel::Eq));

    let layout = ParLayout::new(&ext_sig);
    let need_keep = kernel_aa.is_some() || !kernel_ae.is_empty();
    let set_vars = snf.set_vars.clone();
    let keep: KeepFn = Arc::new(move |p, l, tracks| {
        let pairs_for = |rel: Rel| -> Vec<(usize, ExtLabel)> {
            if rel == Rel::Eq {
                return vec![(p, l)];
            }
            match machines.iter().find(|(r, _)| *r == rel) {
                None => Vec::new(),
                Some((_, base)) if rel == Rel::Par => layout
                    .groups
                    .iter()
                    .enumerate()
                    .filter(|(i, (gp, _, _))| {
                        *gp == p && matches!(tracks[base + 3 * i], Val::Bool(true))
                    })
                    .map(|(_, &(_, q, a))| (q, a))
                    .collect(),
                Some((_, base)) => decode_pairs(&tracks[*base]),
            }
        };
        if let Some(aa) = &kernel_aa {
            for rel in Rel::ALL {
                for (p2, l2) in pairs_for(rel) {
                    if !rewrite_type(aa, &set_vars, (p, l), (p2, l2), rel) {
                        return false;
                    }
                }
            }
        }
        kernel_ae.iter().all(|k| {
            Rel::ALL.iter().any(|&rel| {
                pairs_for(rel)
                    .into_iter()
                    .any(|(p2, l2)| rewrite_type(k, &set_vars, (p, l), (p2, l2), rel))
            })
        })
    });

    let mut cfm = cfm;
    let sig = cfm.sig.clone();
    for prim in extra {
        cfm = cfm.product(Cfm::from_prim(sig.clone(), prim));
    }
    if need_keep {
        cfm = cfm.restrict(keep);
    }
    cfm.hide_bits()
}

// ---------------------------------------------------------------------------
// Statistics.
// ---------------------------------------------------------------------------

/// Size summary of an explicit machine.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CfmStats {
    pub states_per_process: Vec<usize>,
    pub transitions_per_process: Vec<usize>,
    pub messages: usize,
    pub initial_rects: usize,
    pub accepting_rects: usize,
}

impl CfmStats {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "states_per_process": self.states_per_process,
            "transitions_per_process": self.transitions_per_process,
            "messages": self.messages,
            "initial_rects": self.initial_rects,
            "accepting_rects": self.accepting_rects,
        })
    }
}

pub fn report_stats(a: &ExplicitCfm) -> CfmStats {
    CfmStats {
        states_per_process: a.procs.iter().map(|p| p.states.len()).collect(),
        transitions_per_process: a.procs.iter().map(|p| p.transitions.len()).collect(),
        messages: a.messages.len(),
        initial_rects: a.global_initial.len(),
        accepting_rects: a.global_accepting.len(),
    }
}

// ---------------------------------------------------------------------------
// The formula suite.
// ---------------------------------------------------------------------------

/// Named sentences over two processes and letters `a`, `b`, exercising every
/// atom and the set-variable machinery; the equivalence tests compare each
/// compiled machine against brute-force evaluation.
pub fn formula_suite() -> Vec<(&'static str, &'static str)> {
    const SIG: &str = "signature processes p,q labels a,b;\n";
    let texts: [(&str, &str); 10] = [
        ("accept-all", "forall x. x = x"),
        (
            "mutual-exclusion",
            "not exists x. exists y. (lab[b](x) and lab[b](y) and par(x,y))",
        ),
        (
            "request-ack",
            "forall x. exists y. (lab[a](x) implies (le(x,y) and lab[b](y)))",
        ),
        ("totally-ordered", "forall x. forall y. (x = y or le(x,y) or le(y,x))"),
        (
            "a-then-b-adjacent",
            "forall x. exists y. (lab[a](x) implies (po(x,y) and lab[b](y)))",
        ),
        (
            "a-on-message",
            "forall x. exists y. (lab[a](x) implies (msg(x,y) or msg(y,x)))",
        ),
        (
            "no-backflow",
            "not exists x. exists y. (proc[p](x) and proc[q](y) and le(y,x))",
        ),
        (
            "no-repeated-a",
            "forall x. forall y. (po(x,y) implies not (lab[a](x) and lab[a](y)))",
        ),
        (
            "no-b-above-a",
            "existsSet X1. (forall x. forall y. ((X1(x) and le(x,y)) implies X1(y)) \
             and forall x. (lab[a](x) implies X1(x)) \
             and forall x. (X1(x) implies not lab[b](x)))",
        ),
        ("b-has-parallel", "forall x. exists y. (lab[b](x) implies par(x,y))"),
    ];
    texts
        .into_iter()
        .map(|(name, body)| (name, &*Box::leak(format!("{SIG}{body}").into_boxed_str())))
        .collect()
}

// ---------------------------------------------------------------------------
// Lower-bound formula families.
// ---------------------------------------------------------------------------

/// The two families of small sentences with doubly exponential minimal
/// recognisers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbFamily {
    /// Single process, two letters, successor only; size grows
    /// quadratically in `n`, minimal DFA at least `2^(2^n)` states.
    ProcEdge,
    /// Two processes, `n` letters, order only; size linear in `n`, some
    /// process needs at least `2^(2^(n-1))` states.
    Order,
}

/// Number of AST nodes, for size-envelope measurements.
pub fn formula_size(f: &Formula) -> usize {
    use Formula::*;
    match f {
        Not(g) | Exists(_, g) | Forall(_, g) | ExistsSet(_, g) => 1 + formula_size(g),
        And(a, b) | Or(a, b) => 1 + formula_size(a) + formula_size(b),
        _ => 1,
    }
}

fn other(v: &str) -> &'static str {
    if v == "x" { "y" } else { "x" }
}

fn iff(a: Formula, b: Formula) -> Formula {
    Formula::and(Formula::implies(a.clone(), b.clone()), Formula::implies(b, a))
}

/// A chain of `k` successor steps from `var`, with letter `a1` at the end.
fn succ_chain(k: usize, var: &str) -> Formula {
    if k == 0 {
        return Formula::Lab(1, var.to_string());
    }
    let nxt = other(var);
    Formula::exists(
        nxt,
        Formula::and(
            Formula::ProcEdge(var.to_string(), nxt.to_string()),
            succ_chain(k - 1, nxt),
        ),
    )
}

/// Builds the requested lower-bound sentence.
///
/// `ProcEdge` needs `n ≥ 1`, `Order` needs `n ≥ 2`.
pub fn lower_bound_formula(n: usize, family: LbFamily) -> Result<Sentence, LogicError> {
    match family {
        LbFamily::ProcEdge => {
            if n < 1 {
                return Err(LogicError::Other("proc-edge family needs n >= 1".into()));
            }
            let sig = Signature::new(["p"], ["a0", "a1"], 0);
            // beta(v): v starts a block — letters a1 a1 a0.
            let beta = |v: &str| -> Formula {
                let w = other(v);
                Formula::and(
                    Formula::Lab(1, v.to_string()),
                    Formula::exists(
                        w,
                        Formula::and(
                            Formula::ProcEdge(v.to_string(), w.to_string()),
                            Formula::and(
                                Formula::Lab(1, w.to_string()),
                                Formula::exists(
                                    v,
                                    Formula::and(
                                        Formula::ProcEdge(w.to_string(), v.to_string()),
                                        Formula::Lab(0, v.to_string()),
                                    ),
                                ),
                            ),
                        ),
                    ),
                )
            };
            // alpha_i(v): a1 at distance 2i + 3.
            let alpha = |i: usize, v: &str| succ_chain(2 * i + 3, v);
            let conjunct = |positive: bool| -> Formula {
                let guard = |v: &str| {
                    let a0 = alpha(0, v);
                    Formula::and(beta(v), if positive { a0 } else { Formula::not(a0) })
                };
                let mut partner = {
                    let a0 = alpha(0, "y");
                    Formula::and(beta("y"), if positive { Formula::not(a0) } else { a0 })
                };
                for i in 1..=n {
                    partner = Formula::and(partner, iff(alpha(i, "x"), alpha(i, "y")));
                }
                Formula::forall(
                    "x",
                    Formula::implies(guard("x"), Formula::exists("y", partner)),
                )
            };
            Ok(Sentence {
                sig,
                formula: Formula::and(conjunct(true), conjunct(false)),
            })
        }
        LbFamily::Order => {
            if n < 2 {
                return Err(LogicError::Other("order family needs n >= 2".into()));
            }
            let labels: Vec<String> = (1..=n).map(|i| format!("a{i}")).collect();
            let sig = Signature::new(
                vec!["p".to_string(), "q".to_string()],
                labels,
                0,
            );
            // alpha_i(v): some a_i-labeled event is parallel to v.
            let alpha = |i: usize, v: &str| -> Formula {
                let w = other(v);
                Formula::exists(
                    w,
                    Formula::and(
                        Formula::Lab(i - 1, w.to_string()),
                        Formula::and(
                            Formula::not(Formula::Leq(v.to_string(), w.to_string())),
                            Formula::not(Formula::Leq(w.to_string(), v.to_string())),
                        ),
                    ),
                )
            };
            let conjunct = |positive: bool| -> Formula {
                let lit = |v: &str, pos: bool| {
                    let a1 = Formula::Lab(0, v.to_string());
                    if pos { a1 } else { Formula::not(a1) }
                };
                let guard =
                    Formula::and(lit("x", positive), Formula::Proc(0, "x".to_string()));
                let mut partner =
                    Formula::and(lit("y", !positive), Formula::Proc(0, "y".to_string()));
                for i in 1..=n {
                    partner = Formula::and(partner, iff(alpha(i, "x"), alpha(i, "y")));
                }
                Formula::forall(
                    "x",
                    Formula::implies(guard, Formula::exists("y", partner)),
                )
            };
            Ok(Sentence {
                sig,
                formula: Formula::and(conjunct(true), conjunct(false)),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::msc::{fig_example, Msc};
    use crate::oracle::{bounded_equiv, Bounds, Verdict};

    fn suite_sentence(name: &str) -> Sentence {
        let (_, text) = formula_suite().into_iter().find(|(n, _)| *n == name).unwrap();
        Sentence::parse(text).unwrap()
    }

    fn assert_compiled_matches(sentence: &Sentence, maxev: usize) {
        let cfm = compile(sentence).unwrap();
        let v = bounded_equiv(
            &sentence.sig,
            Bounds { max_events_per_process: maxev },
            |m| cfm.accepts(m),
            |m| sentence.evaluate(m),
        );
        match v {
            Verdict::Equivalent { checked } => assert!(checked > 0),
            Verdict::Counterexample { msc, left, right, .. } => panic!(
                "machine {} but formula {} on {:?} {:?} for {}",
                left,
                right,
                msc.words,
                msc.messages,
                sentence.print()
            ),
        }
    }

    #[test]
    fn accept_all_compiles_to_the_full_language() {
        assert_compiled_matches(&suite_sentence("accept-all"), 3);
    }

    #[test]
    fn kernel_only_formulas_compile_correctly() {
        for name in ["totally-ordered", "no-backflow", "no-repeated-a"] {
            assert_compiled_matches(&suite_sentence(name), 3);
        }
    }

    #[test]
    fn witness_formulas_compile_correctly() {
        for name in ["request-ack", "a-then-b-adjacent", "a-on-message"] {
            assert_compiled_matches(&suite_sentence(name), 3);
        }
    }

    #[test]
    fn parallel_formulas_compile_correctly() {
        for name in ["mutual-exclusion", "b-has-parallel"] {
            assert_compiled_matches(&suite_sentence(name), 2);
        }
    }

    #[test]
    fn set_variable_formula_compiles_correctly() {
        assert_compiled_matches(&suite_sentence("no-b-above-a"), 2);
    }

    #[test]
    fn mutual_exclusion_separates_overlapping_critical_sections() {
        let s = Sentence::parse(
            "signature processes p,r,q labels a,b,c;\n\
             not exists x. exists y. (lab[c](x) and lab[c](y) and par(x,y))",
        )
        .unwrap();
        // On the three-process example chart the two critical sections
        // overlap, so the sentence evaluates to false; relabeling one
        // critical event removes the overlap. (Running the compiled machine
        // itself on this 27-event chart blows past the witness-search caps,
        // so its language is checked on reduced charts below.)
        let fig = fig_example();
        assert!(!s.evaluate(&fig));
        let mut words = fig.words.clone();
        let c = 2u16;
        let slot = words[2]
            .iter()
            .position(|l| l.label == c)
            .expect("q has a c-labeled event");
        words[2][slot] = ExtLabel::plain(0);
        let fixed = Msc::new(fig.sig.clone(), words, fig.messages.clone());
        assert!(fixed.validate().is_empty());
        assert!(s.evaluate(&fixed));

        let cfm = compile(&s).unwrap();
        let parallel_cs = Msc::build(&s.sig, &["c", "a", "c"], &[]);
        assert!(!s.evaluate(&parallel_cs));
        assert!(!cfm.accepts(&parallel_cs));
        // Ordering the two critical events through a message restores
        // mutual exclusion.
        let ordered_cs = Msc::build(&s.sig, &["c a", "a", "a c"], &[((0, 2), (2, 1))]);
        assert!(s.evaluate(&ordered_cs));
        assert!(cfm.accepts(&ordered_cs));
    }

    #[test]
    fn proc_edge_lower_bound_words_behave_as_constructed() {
        let s = lower_bound_formula(1, LbFamily::ProcEdge).unwrap();
        // Encoding of I ⊆ {1}: header a1 a1 a0 (x1|a0) a0 x1.
        let word = |header_bit: u16, x1: u16| -> Vec<ExtLabel> {
            [1, 1, 0, header_bit, 0, x1].iter().map(|&l| ExtLabel::plain(l as usize)).collect()
        };
        let w_a = word(1, 1); // w_I for I = {1}
        let wbar_a = word(0, 1); // the barred copy
        let wbar_b = word(0, 0); // barred encoding of I = {}
        let chart = |parts: &[&Vec<ExtLabel>]| -> Msc {
            let w: Vec<ExtLabel> = parts.iter().flat_map(|p| p.iter().copied()).collect();
            Msc::new(s.sig.clone(), vec![w], vec![])
        };
        assert!(s.evaluate(&chart(&[&w_a, &wbar_a])));
        assert!(!s.evaluate(&chart(&[&w_a, &wbar_b])));
        // Size envelope: quadratic growth in n.
        let sizes: Vec<usize> = (1..=6)
            .map(|n| {
                formula_size(
                    &lower_bound_formula(n, LbFamily::ProcEdge).unwrap().formula,
                )
            })
            .collect();
        // Second difference of a quadratic is a positive constant.
        let d2 = |n: usize| (sizes[n + 1] - sizes[n]) as i64 - (sizes[n] - sizes[n - 1]) as i64;
        assert!(d2(1) > 0, "sizes {sizes:?}");
        for n in 2..=4 {
            assert_eq!(d2(n), d2(1), "sizes {sizes:?}");
        }
    }

    #[test]
    fn order_lower_bound_instances_behave_as_constructed() {
        let s = lower_bound_formula(2, LbFamily::Order).unwrap();
        // One block: p has e1 f1 (both a1); q has a receive, a middle event,
        // and a send; the middle event is parallel to both p-events.
        let block = |p_lab: usize, mid_lab: usize, base_p: usize, base_q: usize| {
            (
                vec![ExtLabel::plain(p_lab); 2],
                vec![ExtLabel::plain(0), ExtLabel::plain(mid_lab), ExtLabel::plain(0)],
                vec![
                    ((1usize, base_q + 1), (0usize, base_p + 1)),
                    ((0, base_p + 2), (1, base_q + 3)),
                ],
            )
        };
        let chart = |mid2: usize| -> Msc {
            let (w1p, w1q, m1) = block(0, 1, 0, 0);
            let (w2p, w2q, m2) = block(1, mid2, 2, 3);
            let words = vec![[w1p, w2p].concat(), [w1q, w2q].concat()];
            let msgs = [m1, m2]
                .concat()
                .into_iter()
                .map(|((sp, si), (rp, ri))| {
                    (crate::msc::EventId::new(sp, si), crate::msc::EventId::new(rp, ri))
                })
                .collect();
            Msc::new(s.sig.clone(), words, msgs)
        };
        // Matching middle labels: every a1 p-event has an a2 partner with the
        // same parallel letters and vice versa.
        assert!(s.evaluate(&chart(1)));
        assert!(!s.evaluate(&chart(0)));
        // Size envelope: linear growth in n.
        let sizes: Vec<usize> = (2..=7)
            .map(|n| {
                formula_size(&lower_bound_formula(n, LbFamily::Order).unwrap().formula)
            })
            .collect();
        let d: Vec<usize> = sizes.windows(2).map(|w| w[1] - w[0]).collect();
        assert!(d.windows(2).all(|w| w[0] == w[1]), "sizes {sizes:?}");
    }

    #[test]
    fn stats_reflect_the_materialized_machine() {
        use crate::cfm::materialize::Limits;
        let s = suite_sentence("accept-all");
        let cfm = compile(&s).unwrap();
        let explicit = cfm.materialize(&Limits::default()).unwrap();
        let stats = report_stats(&explicit);
        assert_eq!(stats.states_per_process, vec![1, 1]);
        assert!(stats.transitions_per_process.iter().all(|&t| t > 0));
    }
}
