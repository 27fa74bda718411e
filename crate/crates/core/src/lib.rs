//! Market equilibria for Fisher markets with a perfectly price-discriminating
//! middleman and non-separable concave or quasiconcave buyer utilities.

pub mod error;
pub mod market;
pub mod oracle;
pub mod rates;
pub mod solver;
pub mod utility;
pub mod welfare;

pub use error::{Error, Result};
pub use market::{
    middleman_profit, rate_of, verify_equilibrium, Allocation, Buyer, EquilibriumCertificate,
    Market, PriceVector, RateInfo, RateVector,
};
pub use oracle::{grid_equilibrium_scan, grid_optimize, GridOptimum, GridSpec, ScanEntry};
pub use rates::{
    check_no_loss, no_loss_margin_at, r_star, u_of_r, NoLossReport, NoLossWitness, RateCurvePoint,
    RateProblem,
};
pub use solver::{
    kkt_residuals, recover_prices, solve, solve_from, KktResiduals, SolveConfig, SolveResult,
    UtilityCase,
};
pub use utility::{parse_utility, ExprAst, UtilityFn, UtilityKind};
pub use welfare::{
    check_pareto, counterexample_market, demonstrate_second_welfare_failure, second_welfare_moneys,
    weighted_pareto_point, CounterexampleReport, ParetoReport, ParetoWitness, SecondWelfare, WelfareWeights,
};
