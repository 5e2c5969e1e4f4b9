pub mod bvh;
pub mod rotation;
pub mod features;
pub mod conditioning;
pub mod nn;
pub mod diffusion;
pub mod eval;
pub mod dataset;
pub mod checkpoint;
pub mod selfcheck;
