use thiserror::Error;

use crate::cca::CcaError;
use crate::cepstral::CepstralError;
use crate::dataset::DatasetError;
use crate::simulate::SimulationError;
use crate::spectral::SpectralError;

/// Any failure raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Cepstral(#[from] CepstralError),
    #[error(transparent)]
    Cca(#[from] CcaError),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
