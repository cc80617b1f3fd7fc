pub mod audit;
pub mod bench;
pub mod client;
pub mod codec;
pub mod collision;
pub mod dpf;
pub mod error;
pub mod field;
pub mod group;
pub mod hash;
pub mod payload;
pub mod prg;
pub mod row;
pub mod server;
pub mod sim;
pub mod wire;
pub mod zk;

pub use error::{Error, Result};
