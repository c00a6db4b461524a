#![allow(dead_code)]

pub mod gradcheck;
pub mod invariants;
pub mod oracles;
pub mod pipeline;
