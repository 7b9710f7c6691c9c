pub mod cert;
pub mod error;
pub mod fit;
pub mod geometry;
pub mod graph;
pub mod io;
pub mod mjls;
pub mod pipeline;
pub mod sdp;

pub use error::{Error, Result};
