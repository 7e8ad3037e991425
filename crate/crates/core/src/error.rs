use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("derivative order {0} is not supported (orders 0..=4 only)")]
    UnsupportedOrder(u32),

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("xi'' vanishes at t = {0}; the discriminant is singular there")]
    Singular(f64),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("infeasible parameters: {0}")]
    Infeasible(String),

    #[error("infeasible dual variable: {0}")]
    InfeasibleDual(String),

    #[error("adaptive quadrature did not converge on [{a}, {b}]")]
    Quadrature { a: f64, b: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
