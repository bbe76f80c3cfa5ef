//! Double-loop tracking solver for hierarchical variational inequalities.
//!
//! The problem is to find `u` in `S0 = zer(M)` with `<G u, v - u> >= 0` for
//! every `v` in `S0`, where `M` is maximally monotone with bounded domain and
//! `G` is monotone and Lipschitz. The solver regularizes the lower level with
//! a Tikhonov weight `beta` and a proximal anchor `alpha (x - w)`, tracks the
//! resulting auxiliary solutions with an inertial Krasnoselskii-Mann inner
//! loop, and averages the anchors in the outer loop.
//!
//! Module map:
//!
//! * [`vectorspace`]: dense points, checked arithmetic, seeded sampling.
//! * [`operators`]: single-valued operators, resolvents, the anchored map `Phi`.
//! * [`encodings`]: forward-backward, backward-forward, Douglas-Rachford and
//!   three-operator fixed-point encodings of the auxiliary problem.
//! * [`inner_loop`]: the inertial KM iteration with its stopping rule and caps.
//! * [`outer_loop`]: the anchor/averaging loop and its parameter schedules.
//! * [`gaps`]: optimality/feasibility gaps and the theoretical bounds.
//! * [`problems`]: the equilibrium, least-norm least-squares and inpainting
//!   instances.
//! * [`io`]: trace CSV and PGM/CSV image formats.
//! * [`verify`]: the acceptance checks shared by the test suite and the CLI.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod encodings;
pub mod error;
pub mod gaps;
pub mod inner_loop;
pub mod io;
pub mod operators;
pub mod outer_loop;
pub mod problems;
pub mod vectorspace;
pub mod verify;

pub use error::{Error, Result};
pub use vectorspace::{Point, SeededRng};
