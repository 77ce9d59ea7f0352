//! One module per subcommand. Each returns a summary value so tests can
//! inspect results without parsing stdout.

mod bound;
mod iw;
mod reliability;
mod run;

pub use bound::{verify_bound, BoundOptions, BoundRow, BoundSummary, SLACK_TOL, TIGHT_TOL};
pub use iw::{iw_report, IwOutcome};
pub use reliability::{reliability, ReliabilityOutcome};
pub use run::{run, ResultRow, RunOutcome, RESULTS_HEADER};
