pub mod belief;
pub mod despot;
pub mod grid;
pub mod harness;
pub mod mdp;
pub mod pomdp;
pub mod seed;
pub mod sim;
pub mod tracker;
