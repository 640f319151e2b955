pub mod corpus_io;
pub mod error;
pub mod factorization;
pub mod linalg;
pub mod matching;
pub mod hypernet;
pub mod initializer;
pub mod eval;
