pub mod audit;
pub mod chsh;
pub mod dice;
pub mod protocol;
pub mod torre;
