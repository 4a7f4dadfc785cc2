use std::fmt;

use super::TransferError;

/// One protocol command, sent as a single `VERB arg...` line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Command {
    verb: String,
    args: Vec<String>,
}

impl Command {
    pub fn new<I, S>(verb: &str, args: I) -> Result<Self, TransferError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        if verb.is_empty() || verb.contains([' ', '\r', '\n']) {
            return Err(TransferError::InvalidCommand(format!("bad verb {verb:?}")));
        }
        let args: Vec<String> = args.into_iter().map(Into::into).collect();
        if args.iter().any(|a| a.contains(['\r', '\n'])) {
            return Err(TransferError::InvalidCommand("argument contains a line break".into()));
        }
        Ok(Self {
            verb: verb.to_string(),
            args,
        })
    }

    pub fn verb(&self) -> &str {
        &self.verb
    }

    pub fn args(&self) -> &[String] {
        &self.args
    }

    /// The line as sent, including the trailing newline.
    pub fn wire(&self) -> String {
        let mut s = self.to_string();
        s.push('\n');
        s
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.verb)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        Ok(())
    }
}
