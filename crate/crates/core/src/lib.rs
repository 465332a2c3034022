//! Gromov-Wasserstein programs between finite metric-measure spaces.
//!
//! The GW_p^p value between `(X, d_X, μ_X)` and `(Y, d_Y, μ_Y)` is the minimum of
//! `μ'Γ_p μ` over couplings `μ` of the two measures, where
//! `Γ_p[(i,j),(k,l)] = |d_X(x_i,x_k) − d_Y(y_j,y_l)|^p`. The crate builds this
//! program, certifies that Γ_p is indefinite, solves it locally
//! (Frank-Wolfe, entropic mirror descent, multistart), and computes ground
//! truth on small instances.
//!
//! ```
//! use gw_core::{delta_space, GwProblem, certify_nonconvex};
//!
//! let x = delta_space(2).unwrap();
//! let y = delta_space(5).unwrap();
//! let problem = GwProblem::new(&x, &y, 1.0).unwrap();
//! let report = certify_nonconvex(&problem).unwrap();
//! assert_eq!(report.negative_count, 4);
//! assert!(report.minor_det < 0.0);
//! ```

pub mod error;
pub mod experiments;
pub mod matrix;
pub mod mmspace;
pub mod oracle;
pub mod problem;
pub mod sampling;
pub mod solvers;
pub mod spectral;
pub mod transport;

pub use error::{GwError, Result};
pub use experiments::{qap_check, sweep_curves, sweep_delta, QapCheckReport, SweepRow};
pub use matrix::Matrix;
pub use mmspace::{
    arc_length_space, delta_space, load_curve, load_space, make_space, Curve3D, MetricMeasureSpace, SpaceFormat,
};
pub use oracle::{oracle_1dof, oracle_grid, OracleMethod, OracleResult};
pub use problem::{
    build_constraints, build_gamma, flat_index, gw_distance, independence_coupling, objective, objective_tensor,
    qap_decompose, Coupling, GwProblem, QapSplit,
};
pub use solvers::{entropic_gw, frank_wolfe, multistart, EntropicOptions, FwOptions, SolveResult};
pub use spectral::{certify_nonconvex, count_negative, eigenvalues_symmetric, principal_minor_2x2, SpectralReport};
pub use transport::ot_linear;
