//! Rewriting of rendered paragraphs (diversity Levels 3 and 4).

use crate::error::Result;
use crate::graph_gen::{LlmTransport, RetryPolicy};

pub trait RephraseProvider: Sync {
    fn rephrase(&self, text: &str, level: u8) -> Result<String>;
}

/// Returns the text unchanged.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityRephraser;

impl RephraseProvider for IdentityRephraser {
    fn rephrase(&self, text: &str, _level: u8) -> Result<String> {
        Ok(text.to_string())
    }
}

pub struct RemoteRephraser<T> {
    pub transport: T,
    pub retry: RetryPolicy,
}

impl<T: LlmTransport + Sync> RemoteRephraser<T> {
    pub fn new(transport: T) -> Self {
        RemoteRephraser { transport, retry: RetryPolicy::default() }
    }

    pub fn prompt(text: &str, level: u8) -> String {
        let style = if level >= 4 {
            "Rewrite the facts below as a short, natural biography-style paragraph. Vary sentence structure freely."
        } else {
            "Rewrite the facts below, changing the wording of each sentence."
        };
        format!("{style} Keep every name exactly as written and do not add facts.\n\n{text}")
    }
}

impl<T: LlmTransport + Sync> RephraseProvider for RemoteRephraser<T> {
    fn rephrase(&self, text: &str, level: u8) -> Result<String> {
        let prompt = Self::prompt(text, level);
        self.retry.run(|| self.transport.complete(&prompt).map(|s| s.trim().to_string()))
    }
}

/// Outcome of a rephrase attempt after the factual-retention check.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rephrased {
    pub text: String,
    /// The provider failed or dropped a name; `text` is the original rendering.
    pub fell_back: bool,
}

/// Rephrases `text`, keeping the original unless every name in `names` survives verbatim.
pub fn rephrase_checked(provider: &dyn RephraseProvider, text: &str, level: u8, names: &[&str]) -> Rephrased {
    match provider.rephrase(text, level) {
        Ok(new) if !new.is_empty() && names.iter().all(|n| new.contains(n)) => Rephrased { text: new, fell_back: false },
        _ => Rephrased { text: text.to_string(), fell_back: true },
    }
}
