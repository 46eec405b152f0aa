pub mod corpus;
pub mod diffmath;
pub mod hashing;
pub mod models;
