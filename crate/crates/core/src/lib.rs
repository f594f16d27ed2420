pub mod audit;
pub mod census;
pub mod corpus;
pub mod extract;
pub mod lexicon;
pub mod logodds;
pub mod parse;
pub mod pipeline;
pub mod regression;
pub mod synth;
