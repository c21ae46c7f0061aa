use thiserror::Error;

/// Failures reported by the value models, replay memory, projections,
/// environments and diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("state {state} out of range for {n_states} states")]
    StateOutOfRange { state: usize, n_states: usize },
    #[error("feature vector has length {got}, model expects {expected}")]
    FeatureMismatch { expected: usize, got: usize },
    #[error("action {action} out of range for {n_actions} actions")]
    ActionOutOfRange { action: usize, n_actions: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("ensemble has no members")]
    EmptyEnsemble,
    #[error("non-finite gradient entry at parameter {index}")]
    NonFiniteGradient { index: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("prefix mass {mass} outside [0, {total})")]
    MassOutOfRange { mass: f64, total: f64 },
    #[error("replay holds {size} transitions, {required} required")]
    InsufficientFill { size: usize, required: usize },
    #[error("replay slot {0} is unoccupied")]
    UnoccupiedIndex(usize),
    #[error("replay member {member} out of range for {members} samplers")]
    MemberOutOfRange { member: usize, members: usize },
    #[error("negative priority input {0}")]
    NegativePriority(f64),
    #[error("zero sampling probability at batch position {0}")]
    ZeroProbability(usize),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid support: {0}")]
    InvalidSupport(String),
    #[error("distribution has {got} atoms, support has {expected}")]
    SupportMismatch { expected: usize, got: usize },
    #[error("atom {atom} has zero probability but carries target mass")]
    ProbabilityFloor { atom: usize },
    #[error("invalid MDP: {0}")]
    InvalidMdp(String),
    #[error("value iteration requires discount < 1, got {0}")]
    DiscountNotBelowOne(f64),
    #[error("value iteration did not reach tolerance {tolerance} within {iterations} sweeps")]
    NoConvergence { tolerance: f64, iterations: usize },
    #[error("episode is over; call reset before stepping")]
    EpisodeOver,
    #[error("{required} runs required, got {got}")]
    InsufficientRuns { required: usize, got: usize },
    #[error("{runs} runs cannot be split into groups of {group_size}")]
    IndivisibleGroups { runs: usize, group_size: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
