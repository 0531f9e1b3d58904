pub mod conversation;
pub mod demographics;
pub mod eval;
pub mod flowchart;
pub mod gateway;
pub mod interpretation;
pub mod retrieval;
