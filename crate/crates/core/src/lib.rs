//! Deterministic simulator for the four-qubit quantum switchboard.
//!
//! A single shared four-qubit state lets Alice teleclone an unknown qubit to
//! Bob and Charlene with optimal symmetric fidelity, or route it perfectly to
//! either of them by having Dick forward his qubit. The crate is split into:
//!
//! - [`qcore`]: dense state vectors, operators, partial traces and Bell
//!   measurements.
//! - [`switchboard`]: the shared state, its Bell-pair expansions, correction
//!   unitaries and every fidelity the protocol promises.
//! - [`parties`]: an event-driven harness that runs sessions between the four
//!   parties and records replayable transcripts.
//! - [`mgchain`]: exact diagonalization of the Majumdar-Ghosh ring, used to
//!   show the shared state is one of its ground states.
//! - [`cli`]: the `qswitch` command-line front end.
//!
//! ```
//! use qswitch::parties::{replay, run_session};
//! use qswitch::qcore::StateVector;
//! use qswitch::switchboard::{clone_fidelity, Party, Route};
//!
//! let alpha = StateVector::from_bloch_angles(1.1, 0.3);
//! assert!((clone_fidelity(Party::Bob, &alpha)?.average_fidelity - 5.0 / 6.0).abs() < 1e-12);
//!
//! let t = run_session(Route::ToCharlene, &alpha, 42)?;
//! assert!((t.final_fidelity - 1.0).abs() < 1e-9);
//! assert!((replay(&t)? - t.final_fidelity).abs() < 1e-12);
//! # Ok::<(), qswitch::Error>(())
//! ```

pub mod cli;
pub mod error;
pub mod fmt;
pub mod mgchain;
pub mod parties;
pub mod qcore;
pub mod switchboard;

pub use error::{Error, Result};
