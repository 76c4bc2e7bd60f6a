//! Aggregation of AR(p) and OU(p) processes with random poles.
//!
//! The limit of `B_N^{-1} Σ X^i` is Gaussian with spectral density either the
//! mixture `F = E[g(λ, Y)]` or `|H|²` with `H = E[h(λ, Y)]`, depending on how
//! the members' innovations are correlated. This crate evaluates both by
//! quadrature, decides existence and long memory, simulates finite panels and
//! fits the local power laws. The guide in `book/` walks through each part.

pub mod quad;
pub mod laws;
pub mod poles;
pub mod model;
pub mod classify;
pub mod spectral;
pub mod panel;
pub mod asymptotics;

// Book chapters run as doctests so their snippets cannot drift.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/overview.md")]
    mod overview {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/classification.md")]
    mod classification {}
    #[doc = include_str!("../../../book/src/spectra.md")]
    mod spectra {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/power-laws.md")]
    mod power_laws {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
