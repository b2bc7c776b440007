//! Private evaluation of polynomials over networks.
//!
//! A library, deterministic multi-agent simulator, and supporting analysis
//! tools for evaluating general polynomial functions over the private values
//! of an agent's immediate neighbors, using Paillier partially-homomorphic
//! encryption combined with multiplicative-additive secret sharing. The
//! crate also audits network-level identifiability of private values under
//! collusion.
//!
//! The narrative guide lives in `book/`; its code snippets are compiled and
//! run as doc-tests through the [`guide`] module.
//!
//! Module map:
//!
//! * [`modmath`] — big-integer modular arithmetic and prime generation
//! * [`paillier`] — the additively homomorphic cryptosystem
//! * [`codec`] — fixed-point encoding into the public prime field
//! * [`poly`] — polynomial model and bivariate/multiplicative decomposition
//! * [`shares`] — multiplicative-additive secret share generation
//! * [`netsim`] — deterministic message-passing harness with transcripts
//! * [`protocol`] — the private evaluation protocol itself
//! * [`privacy`] — collusion identifiability analysis
//! * [`scenario`] — scenario configs, case studies, and benchmark sweeps

pub mod agent;
pub mod codec;
pub mod error;
pub mod guide;
pub mod modmath;
pub mod paillier;
pub mod poly;
pub mod privacy;
pub mod protocol;
pub mod netsim;
pub mod scenario;
pub mod shares;

pub use agent::AgentId;
