pub mod association;
pub mod error;
pub mod model;
pub mod scenario;
pub mod loadpower;
pub mod icupa;
pub mod iulp;
pub mod campaign;
pub mod verify;
pub mod report;
