use std::fmt;
use std::sync::Arc;

/// A chat-completion style model: one system message, one user message,
/// one text reply. Implementations must tolerate concurrent calls.
pub trait LlmBackend: Send + Sync {
    fn backend_id(&self) -> &str;

    fn complete(&self, system: &str, user: &str) -> Result<String, BackendError>;
}

impl<T: LlmBackend + ?Sized> LlmBackend for &T {
    fn backend_id(&self) -> &str {
        (**self).backend_id()
    }

    fn complete(&self, system: &str, user: &str) -> Result<String, BackendError> {
        (**self).complete(system, user)
    }
}

impl<T: LlmBackend + ?Sized> LlmBackend for Arc<T> {
    fn backend_id(&self) -> &str {
        (**self).backend_id()
    }

    fn complete(&self, system: &str, user: &str) -> Result<String, BackendError> {
        (**self).complete(system, user)
    }
}

impl<T: LlmBackend + ?Sized> LlmBackend for Box<T> {
    fn backend_id(&self) -> &str {
        (**self).backend_id()
    }

    fn complete(&self, system: &str, user: &str) -> Result<String, BackendError> {
        (**self).complete(system, user)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendErrorKind {
    Timeout,
    Transport,
    /// Non-success HTTP status.
    Status(u16),
    /// The backend answered but the reply could not be used.
    InvalidResponse,
    /// The backend refused the request outright.
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct BackendError {
    pub kind: BackendErrorKind,
    pub message: String,
}

impl BackendError {
    pub fn new(kind: BackendErrorKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }

    pub fn timeout(message: impl Into<String>) -> Self {
        Self::new(BackendErrorKind::Timeout, message)
    }

    pub fn transport(message: impl Into<String>) -> Self {
        Self::new(BackendErrorKind::Transport, message)
    }

    pub fn is_retriable(&self) -> bool {
        match self.kind {
            BackendErrorKind::Timeout | BackendErrorKind::Transport => true,
            BackendErrorKind::Status(code) => code == 408 || code == 429 || code >= 500,
            BackendErrorKind::InvalidResponse | BackendErrorKind::Rejected => false,
        }
    }
}

impl fmt::Display for BackendError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            BackendErrorKind::Timeout => write!(f, "timeout: {}", self.message),
            BackendErrorKind::Transport => write!(f, "transport error: {}", self.message),
            BackendErrorKind::Status(code) => write!(f, "HTTP {code}: {}", self.message),
            BackendErrorKind::InvalidResponse => write!(f, "invalid response: {}", self.message),
            BackendErrorKind::Rejected => write!(f, "rejected: {}", self.message),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn retriable_kinds() {
        assert!(BackendError::timeout("t").is_retriable());
        assert!(BackendError::transport("t").is_retriable());
        assert!(BackendError::new(BackendErrorKind::Status(503), "").is_retriable());
        assert!(BackendError::new(BackendErrorKind::Status(429), "").is_retriable());
        assert!(!BackendError::new(BackendErrorKind::Status(401), "").is_retriable());
        assert!(!BackendError::new(BackendErrorKind::InvalidResponse, "").is_retriable());
    }
}
