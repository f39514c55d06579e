pub mod builder;
pub mod exploration;
pub mod geometry;
pub mod grounding;
pub mod perception;
pub mod render;
pub mod scene;
pub mod signs;
pub mod sim;
