//! Networking lab toolkit.
//!
//! The crate bundles the pieces of a hands-on networking course: byte
//! codecs, a pcap dissector, a small reliable transport protocol (MTP)
//! over UDP, a deterministic link impairment simulator, a New Reno
//! timeline predictor, an exercise grading engine, an interoperability
//! harness, peer-review allocation, and an HTTP service tying them
//! together.

pub mod codec;
pub mod dissect;
pub mod exercises;
pub mod interop;
pub mod linksim;
pub mod mtp;
pub mod newreno;
pub mod peerreview;
pub mod rng;
pub mod service;
