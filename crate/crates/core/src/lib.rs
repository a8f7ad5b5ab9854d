pub mod corpus;
pub mod model;
pub mod ner;
pub mod numerics;
pub mod optim;
pub mod tokenizer;
pub mod training;
