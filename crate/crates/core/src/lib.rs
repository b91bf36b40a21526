//! Counterfactual explanations and responsibility scores for naive-Bayes
//! classifiers over categorical features.

pub mod asp;
pub mod constraints;
pub mod emitter;
pub mod engine;
pub mod naive_bayes;
pub mod query;
pub mod schema;

pub use constraints::{ConstraintError, ConstraintSet};
pub use engine::{CounterfactualVersion, EngineOptions, Enumeration, Explanation, ResponsibilityReport};
pub use naive_bayes::{Classifier, ModelError, NaiveBayesModel, PercentModel};
pub use schema::{Dataset, Entity, FeatureSchema, SchemaError};
