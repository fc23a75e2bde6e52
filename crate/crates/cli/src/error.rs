use lpcc::codecs::CodecError;
use lpcc::container::ContainerError;
use lpcc::pipeline::PipelineError;
use lpcc::projection::ProjectionError;

pub const INPUT: u8 = 2;
pub const INTERNAL: u8 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        CliError {
            code: INPUT,
            message: message.into(),
        }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        CliError {
            code: INTERNAL,
            message: message.into(),
        }
    }

    pub fn report(&self) {
        let kind = if self.code == INPUT {
            "input"
        } else {
            "internal"
        };
        let obj = serde_json::json!({ "error": self.message, "kind": kind, "code": self.code });
        eprintln!("{obj}");
    }

    pub fn context(mut self, what: impl std::fmt::Display) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

fn codec_is_internal(e: &CodecError) -> bool {
    matches!(e, CodecError::Encoder { .. })
}

fn projection_is_internal(e: &ProjectionError) -> bool {
    matches!(e, ProjectionError::WrongState { .. })
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let internal = match &e {
            PipelineError::Codec { source, .. } => codec_is_internal(source),
            PipelineError::Projection(p) => projection_is_internal(p),
            _ => false,
        };
        if internal {
            CliError::internal(e.to_string())
        } else {
            CliError::input(e.to_string())
        }
    }
}

impl From<ContainerError> for CliError {
    fn from(e: ContainerError) -> Self {
        CliError::input(e.to_string())
    }
}
