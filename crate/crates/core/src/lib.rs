//! Probabilistic ethical decision engine.
//!
//! A scenario pairs circumstantial dicta (context factors with a categorical
//! distribution P(C)) with prioritized ethical prescripts (relevance P(E|C))
//! and a utility tensor u(a|c,e). The engine picks the action of maximal
//! expected utility, samples from a softmax policy, summarizes scenarios as
//! profile matrices for clustering and retrieval, learns policies
//! iteratively, and checks consistency, optimality, robustness and alignment
//! empirically.

pub mod decision;
pub mod error;
pub mod learning;
pub mod model;
pub mod profiles;
pub mod scenario_io;
pub mod synth;
pub mod verifier;

pub use decision::{decide, decide_sampled, sample_action, sample_many, DecisionReport};
pub use error::{Error, Result};
pub use learning::{run_learning, ConvergenceReport, LearningConfig};
pub use model::{validate_scenario, ScenarioModel, ValidationReport};
pub use scenario_io::{parse_scenario, serialize_scenario};
pub use verifier::{Verdict, VerifierReport};
