pub mod backend;
pub mod canonical;
pub mod config;
pub mod engine;
pub mod par;
pub mod quality;
pub mod repo;
pub mod report;
pub mod sandbox;
pub mod state;
pub mod score;
pub mod knowledge;
