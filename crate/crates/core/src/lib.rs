pub mod addr;
pub mod analysis;
pub mod burst;
pub mod capture;
pub mod inference;
pub mod mapper;
pub mod report;
pub mod signature;
pub mod synth;
