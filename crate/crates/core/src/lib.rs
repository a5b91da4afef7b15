pub mod corpus;
pub mod dynamics;
pub mod levels;
pub mod thematic;
pub mod retrieval;
pub mod provenance;
pub mod session;
pub mod matrixview;
pub mod fixture;
pub mod cli;
