use std::process::ExitCode;

use autoctx_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn io(context: impl std::fmt::Display, err: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{context}: {err}"))
    }

    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) => match e {
                CoreError::Signal(_) => 3,
                CoreError::Features(_) => 4,
                CoreError::Learn(_) => 5,
                CoreError::Chain(_) => 6,
                CoreError::Context(_) => 7,
                CoreError::Registry(_) => 8,
                CoreError::Synth(_) => 9,
            },
            CliError::Io(_) => 10,
        }
    }

    pub fn exit(&self) -> ExitCode {
        ExitCode::from(self.code())
    }
}

macro_rules! from_core {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Core(e.into())
            }
        }
    )*};
}

from_core!(
    autoctx_core::signal::SignalError,
    autoctx_core::features::FeatureError,
    autoctx_core::learn::LearnError,
    autoctx_core::chain::ChainError,
    autoctx_core::context::ContextError,
    autoctx_core::registry::RegistryError,
    autoctx_core::synth::SynthError
);

pub type Result<T> = std::result::Result<T, CliError>;
