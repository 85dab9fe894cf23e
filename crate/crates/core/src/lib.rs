pub mod host;
pub mod safety;
pub mod sandbox;
pub mod store;
pub mod llm;
pub mod context;
pub mod agent;
pub mod bench;
pub mod service;
