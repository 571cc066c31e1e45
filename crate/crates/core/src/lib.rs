pub mod automata;
pub mod constants;
pub mod error;
pub mod exact;
pub mod harness;
pub mod rates;
pub mod report;
pub mod simulator;
pub mod special;

pub use automata::{AutomataTable, DjBackend};
pub use constants::ModelConstants;
pub use error::{Error, Result};
pub use exact::{DistBackend, ExactEngine, FinalSizeDistribution, ResourceCaps, TailSide};
pub use rates::RateFunctionSet;
pub use simulator::{ChainState, Histogram, RateConvention, SimConfig, Trajectory};
pub use harness::{Harness, ScaleChoice};
pub use report::{DeviationReport, DeviationRow, Metric};
