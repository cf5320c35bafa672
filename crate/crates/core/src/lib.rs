pub mod bench;
pub mod config;
pub mod corpus;
pub mod engine;
pub mod heuristics;
pub mod metadata;
pub mod pagination;
pub mod query;
pub mod storage;
