#![no_std]

extern crate alloc;

pub mod gf;
pub mod ir;
pub mod typeinf;
pub mod target;
pub mod secsets;
pub mod model;
pub mod fixtures;
pub mod leakage;
pub mod solver;
pub mod oracle;
