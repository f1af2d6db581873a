use std::fmt;

use peduncle::cloud_io::CloudError;
use peduncle::eval::EvalError;
use peduncle::learn::LearnError;
use peduncle::pipeline::PipelineError;
use peduncle::preprocess::PreprocessError;
use peduncle::synth::SceneSpecError;

/// Failure classes, each with its own process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config, scene file or input format.
    Usage(String),
    Io(String),
    /// Training or evaluation could not produce a result.
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Failed(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) | CliError::Failed(m) => f.write_str(m),
        }
    }
}

impl From<CloudError> for CliError {
    fn from(e: CloudError) -> Self {
        match e {
            CloudError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<LearnError> for CliError {
    fn from(e: LearnError) -> Self {
        match e {
            LearnError::Io(..) => CliError::Io(e.to_string()),
            LearnError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            _ => CliError::Failed(e.to_string()),
        }
    }
}

impl From<PreprocessError> for CliError {
    fn from(e: PreprocessError) -> Self {
        match e {
            PreprocessError::InvalidParams(_) => CliError::Usage(e.to_string()),
            _ => CliError::Failed(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Cloud(c) => c.into(),
            PipelineError::Scene { ref source, .. } => match source {
                CloudError::Io { .. } => CliError::Io(e.to_string()),
                _ => CliError::Usage(e.to_string()),
            },
            PipelineError::Preprocess(p) => p.into(),
            PipelineError::Learn(l) => l.into(),
            PipelineError::Config(_) => CliError::Usage(e.to_string()),
            PipelineError::Features(_) => CliError::Failed(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Pipeline(p) => p.into(),
            EvalError::Learn(l) => l.into(),
            EvalError::Io(..) => CliError::Io(e.to_string()),
            EvalError::InvalidSplit(_) | EvalError::EmptyStratum(_) | EvalError::EmptyManifest => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Failed(e.to_string()),
        }
    }
}

impl From<SceneSpecError> for CliError {
    fn from(e: SceneSpecError) -> Self {
        CliError::Usage(e.to_string())
    }
}
