use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] cdfa::Error),
}

impl CliError {
    /// 1 usage, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        use cdfa::Error as E;
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) => match e {
                E::Config(_) => 1,
                E::Numerical(_) | E::DegenerateLosses(_) | E::Contract(_) => 3,
                _ => 2,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
