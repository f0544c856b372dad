//! Protocol kernel for the Experts' Dialogue Game (EDG).
//!
//! The crate is layered bottom-up:
//!
//! * [`content`] – the ground content language (atoms, negation, rules).
//! * [`corpus`] – the `id: formula @category` corpus file format.
//! * [`protocol`] – locution kinds, reply legality, move validation and the
//!   stage machine.
//! * [`ledger`] – commitment stores, the agreement store and closure.
//! * [`session`] – multi-participant sessions backed by an append-only event log.
//! * [`api`] – JSON request/response types shared by the service and its clients.

pub mod api;
pub mod content;
pub mod corpus;
pub mod labels;
pub mod ledger;
pub mod protocol;
pub mod session;
#[cfg(feature = "testkit")]
pub mod testkit;

pub use content::{Atom, Category, ConflictPolicy, Formula, Literal, Rule, Statement, SyntaxError, Term};
pub use ledger::{ClosureMode, CommitmentLedger};
pub use protocol::{
    DialogueConfig, DialogueStage, DialogueState, LocutionId, LocutionKind, Move, ParticipantId, Turn, TurnOrder,
    Violation, ViolationCode,
};
