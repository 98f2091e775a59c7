pub mod potential;
pub mod rates;
pub mod wkb;
pub mod banded;
pub mod operator;
pub mod spectra;
pub mod hypo;
pub mod quasimode;
pub mod sde;
pub mod config;
pub mod acceptance;
pub mod report;
