use thiserror::Error;

/// Errors raised by the simulator library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported modulation `{0}`")]
    UnsupportedModulation(String),

    #[error("sample rate {sample_rate} Hz is below twice the bandwidth {bandwidth} Hz")]
    Aliasing { sample_rate: f64, bandwidth: f64 },

    #[error("signal shorter than one symbol")]
    SignalTooShort,

    #[error("unknown subcarrier {0}")]
    UnknownSubcarrier(u16),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("zero-energy input")]
    ZeroEnergy,

    #[error("sample rates differ: {0} vs {1}")]
    SampleRateMismatch(f64, f64),

    #[error("frequency estimate {estimate_hz:.3} Hz outside unambiguous range ±{limit_hz:.3} Hz")]
    Ambiguous { estimate_hz: f64, limit_hz: f64 },

    #[error("least-squares fit is singular (fewer than two distinct power levels)")]
    SingularFit,

    #[error("model slope is zero")]
    ZeroSlope,

    #[error("protocol violation: event {event} in mode {mode}")]
    ProtocolViolation { mode: String, event: String },

    #[error("backup downlink subcarriers exhausted")]
    BackupsExhausted,

    #[error("join timed out for node {0}")]
    JoinTimeout(usize),

    #[error("overlapping radio intervals for node {0}")]
    OverlappingIntervals(usize),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
