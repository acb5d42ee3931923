mod eval;
mod gen_data;
mod run;
mod train_agent;
mod train_tools;

pub use eval::eval;
pub use gen_data::gen_data;
pub use run::run;
pub use train_agent::train_agent;
pub use train_tools::train_tools;
