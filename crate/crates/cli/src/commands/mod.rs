pub mod fit;
pub mod sweep;
pub mod tomo;
pub mod verify;
