use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use crate::error::{QsiError, Result};

use super::Evaluator;

struct Session {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

/// Out-of-process evaluator speaking a line protocol on standard streams.
///
/// Each request is the whitespace-separated coordinates `x… s…` followed by a
/// newline; the process answers with one line holding the value.
pub struct ExternalEvaluator {
    command: String,
    session: Mutex<Session>,
}

impl std::fmt::Debug for ExternalEvaluator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalEvaluator").field("command", &self.command).finish()
    }
}

impl ExternalEvaluator {
    /// Starts `command` through `sh -c`.
    pub fn spawn(command: &str) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let stdout = BufReader::new(child.stdout.take().expect("stdout is piped"));
        Ok(ExternalEvaluator {
            command: command.to_string(),
            session: Mutex::new(Session { child, stdin, stdout }),
        })
    }

    pub fn command(&self) -> &str {
        &self.command
    }
}

impl Evaluator for ExternalEvaluator {
    fn evaluate(&self, x: &[f64], s: &[f64]) -> Result<f64> {
        let request = x
            .iter()
            .chain(s)
            .map(|v| format!("{v:?}"))
            .collect::<Vec<_>>()
            .join(" ");
        let mut session = self
            .session
            .lock()
            .map_err(|_| QsiError::Evaluation("evaluator session poisoned".into()))?;
        writeln!(session.stdin, "{request}")?;
        session.stdin.flush()?;
        let mut line = String::new();
        if session.stdout.read_line(&mut line)? == 0 {
            return Err(QsiError::Evaluation(format!(
                "`{}` closed its output before answering",
                self.command
            )));
        }
        let value: f64 = line
            .trim()
            .parse()
            .map_err(|_| QsiError::Evaluation(format!("unparsable response {:?}", line.trim())))?;
        if !value.is_finite() {
            return Err(QsiError::Evaluation(format!("non-finite response {value}")));
        }
        Ok(value)
    }
}

impl Drop for ExternalEvaluator {
    fn drop(&mut self) {
        if let Ok(session) = self.session.get_mut() {
            let _ = session.child.kill();
            let _ = session.child.wait();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_through_a_child_process() {
        let ev = ExternalEvaluator::spawn("perl -lane 'BEGIN { $| = 1 } print $F[0] + 2 * $F[1]'").unwrap();
        assert_eq!(ev.evaluate(&[1.5], &[0.25]).unwrap(), 2.0);
        assert_eq!(ev.evaluate(&[-1.0], &[3.0]).unwrap(), 5.0);
    }

    #[test]
    fn garbage_response_is_an_error() {
        let ev = ExternalEvaluator::spawn("perl -ne 'BEGIN { $| = 1 } print \"oops\\n\"'").unwrap();
        assert!(matches!(ev.evaluate(&[0.0], &[0.0]), Err(QsiError::Evaluation(_))));
    }

    #[test]
    fn dead_process_is_an_error() {
        let ev = ExternalEvaluator::spawn("true").unwrap();
        assert!(ev.evaluate(&[0.0], &[0.0]).is_err());
    }
}
