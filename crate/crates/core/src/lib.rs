//! Question + database in, SQL plan, extracted data, chart and five-bullet
//! analysis out; plus the rubric, aggregation and cost arithmetic used to
//! score runs.

pub mod chart;
pub mod corpus;
pub mod eval;
pub mod executor;
#[cfg(any(test, feature = "fixtures"))]
pub mod fixtures;
pub mod gateway;
pub mod insight;
pub mod knowledge;
pub mod par;
pub mod pipeline;
pub mod plan;
pub mod prompt;
pub mod sandbox;
pub mod schema;

pub use corpus::{Corpus, Difficulty, TaskFilter, TaskSpec};
pub use plan::{AnalysisPlan, ChartSpec, ChartType};
