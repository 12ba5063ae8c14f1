//! Message sequence charts (MSCs), two-variable existential monadic
//! second-order logic over them, and a compiler from that logic into
//! communicating finite-state machines (CFMs).
//!
//! The crate is organised bottom-up:
//!
//! * [`msc`] — the MSC data model: per-process words, FIFO message edges,
//!   the induced partial order, and the eight pairwise relations between
//!   events (equality, process edge, message edge, parallel, the two
//!   inverses, and strict order minus immediate edges in both directions).
//! * [`logic`] — formula AST, concrete syntax parser/printer, brute-force
//!   evaluation, Scott normal form, and the letter-level kernel rewriting
//!   that turns quantifier-free kernels into per-transition predicates.
//! * [`cfm`] — the machine model: composable machine primitives, products,
//!   transition restriction, track hiding, mirroring, acceptance checking
//!   by run search, explicit (table-form) machines with JSON and DOT
//!   export, and DFA minimisation for single-process machines.
//! * [`typecfm`] — one machine per relation symbol; each annotates every
//!   event with the labels of its related events, and their product
//!   annotates events with their full relational type.
//! * [`parallelcfm`] — the machinery for the "parallel" relation: token
//!   machines, interval discipline, path labelling, and their composition.
//! * [`compiler`] — Scott normal form to CFM, end to end, plus the
//!   lower-bound formula families.
//! * [`oracle`] — bounded exhaustive MSC enumeration and equivalence
//!   checking of machines against brute-force formula evaluation.
//! * [`cli`] — the `msclog` command-line front end.

pub mod cfm;
pub mod cli;
pub mod compiler;
pub mod logic;
pub mod msc;
pub mod oracle;
pub mod parallelcfm;
pub mod typecfm;
