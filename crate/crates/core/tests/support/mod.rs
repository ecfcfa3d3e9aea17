pub mod netcheck;
pub mod oracles;
