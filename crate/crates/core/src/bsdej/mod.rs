//! Recombining-lattice solver for multi-dimensional backward equations with
//! jumps, and the harnesses that exercise comparison results on it.

mod builder;
mod compare;
mod inequality;
mod lattice;

pub use builder::{
    ComponentGenerator, CrossTerm, GeneratorSpec, IncreasingMap, Source, TerminalSpec, TerminalTerm,
};
pub use compare::{
    check_comparison, random_pair, run_harness, ComparisonReport, HarnessConfig, HarnessReport, Pairing,
    Verdict,
};
pub use inequality::{check_elementary_inequality, slack, slack_exact, InequalityReport, FRAC_BITS};
pub use lattice::{
    solve_lattice, solve_root, total_nodes, Discretization, LatticeBsdej, LatticeOptions, LatticeSolution,
    Layout, Stepping, NODE_CAPACITY,
};
