pub mod clock;
pub mod geom;
pub mod io;
pub mod observation;
pub mod text;
pub mod augment;
pub mod skill;
pub mod provider;
pub mod prompt;
pub mod memory;
pub mod pipeline;
pub mod simenv;
pub mod trajectory;
pub mod profile;
pub mod harness;
