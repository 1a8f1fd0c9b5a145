pub mod assets;
pub mod collision;
pub mod costs;
pub mod liegroups;
pub mod robot;
pub mod session;
pub mod solver;
pub mod tasks;
