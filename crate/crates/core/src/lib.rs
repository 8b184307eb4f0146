//! Energy-stable time stepping for two immiscible, incompressible magnetic
//! fluids with different densities on a 2D staggered grid.
//!
//! Every numerical routine is generic over [`Real`] (`f32` or `f64`); the
//! `*64` aliases below fix the scalar to `f64`.

pub mod diagnostics;
pub mod grid;
pub mod linsolve;
pub mod materials;
pub mod real;
pub mod scenario;
pub mod state;
pub mod stepper;
pub mod verify;

pub use diagnostics::{check_energy_ledger, check_m_growth, check_m_growth_rate, LedgerRow, Recorder, Verdict};
pub use grid::{FaceField, Grid, MagField, ScalarField};
pub use linsolve::{Preconditioner, SolveError, SolverOptions};
pub use materials::{Params, EPS_SAT};
pub use real::Real;
pub use scenario::{build_initial_state, Scenario};
pub use state::{total_energy, EnergyBreakdown, Splitting, State, StepReport};
pub use stepper::{run, step, RunError, RunSummary, StepError, StepOptions, StepSink, Stepper};

pub type Grid64 = Grid<f64>;
pub type ScalarField64 = ScalarField<f64>;
pub type FaceField64 = FaceField<f64>;
pub type MagField64 = MagField<f64>;
pub type Params64 = Params<f64>;
pub type State64 = State<f64>;
pub type StepOptions64 = StepOptions<f64>;
pub type StepReport64 = StepReport<f64>;
pub type Scenario64 = Scenario<f64>;
