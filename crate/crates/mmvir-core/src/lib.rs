//! Engine for multi-modal, multi-grained video representations.
//!
//! Long videos enter as timestamped frame-embedding series plus frame
//! references. The engine segments them into event-coherent clips, builds a
//! three-tier representation document per video (timeline summaries,
//! coarse action/scene/object blocks, fine text-frame pairs), and serves
//! retrieval, question answering, summarization, temporal localization, and
//! metric evaluation over those documents.
//!
//! Model capabilities (embedder, captioner, answerer) are reached through
//! the [`gateway`] layer, which ships deterministic offline mocks so the
//! whole pipeline runs reproducibly without network access.
//!
//! With the default `parallel` feature the data-parallel inner loops
//! (gram matrix, DP rows, index scans, batch metrics) run on rayon;
//! disabling it falls back to sequential code with identical results.

pub mod builder;
pub mod canon;
pub mod eval;
pub mod gateway;
pub mod repr;
pub mod retrieval;
pub mod segmentation;

pub(crate) mod hash;
pub(crate) mod par;
