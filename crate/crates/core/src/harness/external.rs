use std::io::Write as _;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use wait_timeout::ChildExt;

use super::{BlockId, ExecutionTrace, HarnessError, Outcome, Target};

/// Environment variable naming the file an instrumented target writes its
/// block ids to, one decimal id per line.
pub const COVERAGE_ENV_VAR: &str = "QFUZZ_COVERAGE_FILE";

/// Argument placeholder replaced by the input file path. Without it the
/// input is written to the target's stdin.
pub const INPUT_PLACEHOLDER: &str = "@@";

/// Runs an external instrumented program once per input.
#[derive(Debug)]
pub struct CommandTarget {
    program: String,
    args: Vec<String>,
    scratch: tempfile::TempDir,
}

impl CommandTarget {
    /// `template` is a shell-style command line such as `./target --strict @@`.
    pub fn new(template: &str) -> Result<Self, HarnessError> {
        let mut words = shlex::split(template)
            .ok_or_else(|| HarnessError::Environment(format!("cannot split {template:?}")))?;
        if words.is_empty() {
            return Err(HarnessError::Environment("empty target command".into()));
        }
        let program = words.remove(0);
        let scratch = tempfile::tempdir()
            .map_err(|e| HarnessError::Environment(format!("scratch directory: {e}")))?;
        Ok(Self {
            program,
            args: words,
            scratch,
        })
    }

    fn input_path(&self) -> PathBuf {
        self.scratch.path().join("input")
    }

    fn coverage_path(&self) -> PathBuf {
        self.scratch.path().join("coverage")
    }

    fn uses_file(&self) -> bool {
        self.args.iter().any(|a| a.contains(INPUT_PLACEHOLDER))
    }

    fn read_coverage(&self) -> Result<Vec<BlockId>, HarnessError> {
        let path = self.coverage_path();
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(HarnessError::Environment(format!("coverage file: {e}"))),
        };
        let _ = std::fs::remove_file(&path);
        text.lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| {
                l.parse::<BlockId>()
                    .map_err(|_| HarnessError::Environment(format!("bad coverage line {l:?}")))
            })
            .collect()
    }
}

impl Target for CommandTarget {
    fn execute(&mut self, input: &[u8], timeout: Duration) -> Result<ExecutionTrace, HarnessError> {
        let env_err = |what: &str, e: std::io::Error| {
            HarnessError::Environment(format!("{what} {}: {e}", self.program))
        };
        let _ = std::fs::remove_file(self.coverage_path());
        let by_file = self.uses_file();
        let input_path = self.input_path();
        if by_file {
            std::fs::write(&input_path, input).map_err(|e| env_err("writing input for", e))?;
        }
        let path_str = input_path.to_string_lossy();
        let args: Vec<String> = self
            .args
            .iter()
            .map(|a| a.replace(INPUT_PLACEHOLDER, &path_str))
            .collect();

        let start = Instant::now();
        let mut child = Command::new(&self.program)
            .args(&args)
            .env(COVERAGE_ENV_VAR, self.coverage_path())
            .stdin(if by_file { Stdio::null() } else { Stdio::piped() })
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| env_err("spawning", e))?;
        if let Some(mut stdin) = child.stdin.take() {
            // a target that exits without reading produces EPIPE; not an error
            let _ = stdin.write_all(input);
        }
        let status = child.wait_timeout(timeout).map_err(|e| env_err("waiting for", e))?;
        let (outcome, wall_time) = match status {
            None => {
                let _ = child.kill();
                let _ = child.wait();
                (Outcome::TimedOut, timeout.as_secs_f64())
            }
            Some(status) => {
                let elapsed = start.elapsed().as_secs_f64();
                let outcome = match status.code() {
                    Some(0) => Outcome::Completed,
                    Some(_) => Outcome::RejectedEarly,
                    None => Outcome::Crashed,
                };
                (outcome, elapsed)
            }
        };
        let blocks = self.read_coverage()?;
        Ok(ExecutionTrace::new(blocks, wall_time, outcome))
    }

    fn describe(&self) -> String {
        let mut words = vec![self.program.clone()];
        words.extend(self.args.iter().cloned());
        shlex::try_join(words.iter().map(String::as_str)).unwrap_or_else(|_| words.join(" "))
    }
}

#[cfg(all(test, unix))]
mod tests {
    use super::*;

    fn sh(script: &str) -> CommandTarget {
        let template = shlex::try_join(["sh", "-c", script, "target", "@@"]).unwrap();
        CommandTarget::new(&template).unwrap()
    }

    #[test]
    fn coverage_and_exit_code() {
        let mut t = sh("printf '3\\n1\\n3\\n' > \"$QFUZZ_COVERAGE_FILE\"; exit 0");
        let trace = t.execute(b"abc", Duration::from_secs(5)).unwrap();
        assert_eq!(trace.outcome, Outcome::Completed);
        assert_eq!(trace.blocks.into_iter().collect::<Vec<_>>(), vec![1, 3]);

        let mut t = sh("exit 3");
        let trace = t.execute(b"abc", Duration::from_secs(5)).unwrap();
        assert_eq!(trace.outcome, Outcome::RejectedEarly);
        assert!(trace.blocks.is_empty());
    }

    #[test]
    fn reads_input_file() {
        let mut t = sh("test \"$(cat \"$1\")\" = hello");
        assert_eq!(t.execute(b"hello", Duration::from_secs(5)).unwrap().outcome, Outcome::Completed);
        assert_eq!(t.execute(b"other", Duration::from_secs(5)).unwrap().outcome, Outcome::RejectedEarly);
    }

    #[test]
    fn stdin_mode() {
        let mut t = CommandTarget::new("sh -c 'test \"$(cat)\" = hi'").unwrap();
        assert!(!t.uses_file());
        assert_eq!(t.execute(b"hi", Duration::from_secs(5)).unwrap().outcome, Outcome::Completed);
    }

    #[test]
    fn signal_is_crash() {
        let mut t = sh("kill -SEGV $$");
        assert_eq!(t.execute(b"", Duration::from_secs(5)).unwrap().outcome, Outcome::Crashed);
    }

    #[test]
    fn hang_is_timeout() {
        let mut t = sh("sleep 10");
        let start = Instant::now();
        let trace = t.execute(b"", Duration::from_millis(200)).unwrap();
        assert_eq!(trace.outcome, Outcome::TimedOut);
        assert!(start.elapsed() < Duration::from_secs(5));
    }

    #[test]
    fn missing_binary_is_environment_error() {
        let mut t = CommandTarget::new("/nonexistent/qfuzz-target @@").unwrap();
        assert!(matches!(
            t.execute(b"", Duration::from_secs(1)),
            Err(HarnessError::Environment(_))
        ));
    }

    #[test]
    fn garbage_coverage_is_environment_error() {
        let mut t = sh("echo nope > \"$QFUZZ_COVERAGE_FILE\"");
        assert!(t.execute(b"", Duration::from_secs(5)).is_err());
    }

    #[test]
    fn empty_template_rejected() {
        assert!(CommandTarget::new("   ").is_err());
    }
}
