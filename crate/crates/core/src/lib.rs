//! Almost-sure stochastic reach-avoid analysis over one-dimensional
//! probability measures.
//!
//! State distributions are finite Gaussian/atomic mixtures ([`Measure1D`]).
//! They are pushed through the affine closed loop
//! `x' = (1 + dt·h)·x + dt·v + w`, checked against (possibly random)
//! target and avoid regions, and used to synthesize per-step affine
//! feedback under hard input bounds.

pub mod error;
pub mod export;
pub mod measure;
pub mod montecarlo;
pub mod normal;
pub mod propagation;
pub mod rng;
pub mod scenario;
pub mod search;
pub mod sets;
pub mod synthesis;
pub mod transport;

pub use error::{Error, Result};
pub use measure::{Measure1D, MixtureComponent, SampleBatch};
pub use sets::{Interval, RandomSetSpec, RegionSet};
pub use propagation::{
    AffinePolicy, AffinePolicyStep, Certificate, CertificateKind, PropagationTrace, SystemModel,
    Verification,
};
pub use scenario::Scenario;
pub use synthesis::{FeasibilityGrid, SynthesisConfig, SynthesisReport};
