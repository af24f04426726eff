//! Game-theoretic concept decomposition and edge-aware image revision.
//!
//! The crate is organised around a cooperative game whose players are grid
//! cells of an image and whose value function is the feature vector a small
//! CNN produces for the baseline-masked image. On top of that substrate it
//! provides exact and sampled Shapley values, multi-variate interactions and
//! their decomposition identities, coalition sampling with salient/inessential
//! partitioning, four smooth edge-preserving revision operators, a gradient
//! descent loop that learns the revision coefficients, and the distribution
//! analyses used to compare image corpora.

pub mod analysis;
pub mod game;
pub mod imageio;
pub mod optimizer;
pub mod revision;
pub mod saliency;
pub mod scorer;
pub mod subset;

pub use game::{CoalitionGame, GameError, InteractionTable};
pub use scorer::{GridImage, ScorerModel};
pub use subset::Subset;
