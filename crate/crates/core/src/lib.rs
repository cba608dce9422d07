pub mod chart;
pub mod controller;
pub mod corridor;
pub mod grammar;
pub mod orchestrator;
pub mod qp;
pub mod resolver;
pub mod world;
