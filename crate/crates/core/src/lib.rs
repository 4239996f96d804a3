pub mod agent;
pub mod harness;
pub mod mdp;
pub mod mutation;
pub mod qnet;
pub mod sample;
pub mod fuzz_loop;
pub mod experiments;
