//! Gauge and gauge_p functions over finite atom alphabets, the learning
//! machines built on them, recovery certificates, and an experiment harness.

pub mod alphabet;
pub mod certify;
pub mod combinatorics;
pub mod gauge;
pub mod harness;
pub mod linops;
pub mod machine;
pub mod optcore;
pub mod rng;

pub use alphabet::{Alphabet, AlphabetError, AlphabetFlags, Model};
pub use gauge::{Decomposition, GaugeError, GaugeValue, Spark};
pub use linops::{LinOp, LinOpError};
pub use machine::{MachineError, MachineProblem, SolveResult, SolverKind};
pub use optcore::{SolveStatus, Status};
