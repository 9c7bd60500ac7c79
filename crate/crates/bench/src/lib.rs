//! Fixtures shared by the solver benchmarks: small instances of the three
//! experiments with their default weights.

use nested_bregman::experiments::{ExperimentId, ExperimentSpec, GroundTruth};
use nested_bregman::{DecompositionProblem, SolverConfig};

/// A benchmark instance: the ground truth, its decomposition problem and the
/// solver settings the experiment uses.
pub struct Instance {
    pub truth: GroundTruth,
    pub problem: DecompositionProblem,
    pub config: SolverConfig,
}

/// Default experiment configuration at a reduced size.
pub fn instance(experiment: ExperimentId, size: usize) -> Instance {
    let mut spec = ExperimentSpec::defaults(experiment);
    spec.size = size;
    let truth = spec.ground_truth().expect("valid benchmark size");
    let problem = spec.problem(&truth).expect("valid benchmark problem");
    Instance { truth, problem, config: spec.solver_config() }
}
