//! Foundational value types: units, two-level states, Pauli-basis operators
//! and drive waveforms.

mod pauli;
mod state;
mod units;
mod waveform;

pub use pauli::PauliOperator;
pub use state::{state_population, Level, StateVector};
pub use units::{Frequency, Time};
pub use waveform::{waveform_derivative, waveform_eval, Waveform};
