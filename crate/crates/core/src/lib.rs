pub mod analysis;
pub mod corpus;
pub mod embed;
pub mod eval;
pub mod graph;
pub mod lgat;
pub mod screenplay;
pub mod summarize;
pub mod tensor;
