//! Supervised learners built from scratch: CART trees, random forests,
//! L2 logistic regression, and rule extraction from fitted trees.

mod forest;
mod logistic;
pub mod optim;
mod rules;
mod tree;

pub use forest::{Forest, ForestFit, ForestParams};
pub use logistic::{fit_logistic, sigmoid, LinearModel, Standardizer};
pub(crate) use logistic::{fit_logistic_rows, softplus};
pub use optim::{OptOptions, OptReport, StepRule};
pub use rules::{extract_rules, Op, Predicate, Rule, RuleSet};
pub use tree::{DecisionTree, Node, TreeParams};
