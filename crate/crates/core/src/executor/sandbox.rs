//! Child-process plumbing for the Python runner.
//!
//! Each job gets a fresh scratch directory, a process group of its own and
//! rlimits set between fork and exec. The parent enforces the wall-clock
//! limit by killing the whole group.

use std::io::Read;
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use crate::domain::SandboxLimits;

use super::ExecError;

pub(crate) const RUNNER: &str = include_str!("runner.py");
pub(crate) const INFRA_EXIT: i32 = 97;
const STDERR_CAP: usize = 8 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Exit {
    Code(i32),
    Signal(i32),
}

#[derive(Debug)]
pub(crate) struct RawRun {
    pub stdout: String,
    pub stderr: String,
    pub exit: Exit,
    pub wall_killed: bool,
    pub wall: Duration,
    pub cpu: Duration,
}

/// Locates the interpreter: `MARCO_PYTHON`, else `python3` on `PATH`.
pub fn find_python() -> Option<PathBuf> {
    if let Some(p) = std::env::var_os("MARCO_PYTHON") {
        return Some(PathBuf::from(p));
    }
    let path = std::env::var_os("PATH")?;
    std::env::split_paths(&path)
        .map(|dir| dir.join("python3"))
        .find(|p| p.is_file())
}

fn read_capped(mut src: impl Read, cap: usize) -> String {
    let mut kept = Vec::new();
    let mut buf = [0u8; 8192];
    loop {
        match src.read(&mut buf) {
            Ok(0) | Err(_) => break,
            Ok(n) => {
                let room = cap.saturating_sub(kept.len());
                kept.extend_from_slice(&buf[..n.min(room)]);
            }
        }
    }
    String::from_utf8_lossy(&kept).into_owned()
}

fn set_limit(resource: libc::__rlimit_resource_t, soft: u64, hard: u64) -> std::io::Result<()> {
    let lim = libc::rlimit {
        rlim_cur: soft as libc::rlim_t,
        rlim_max: hard as libc::rlim_t,
    };
    // SAFETY: setrlimit only reads the struct we pass.
    if unsafe { libc::setrlimit(resource, &lim) } != 0 {
        return Err(std::io::Error::last_os_error());
    }
    Ok(())
}

fn timeval(tv: libc::timeval) -> Duration {
    Duration::from_secs(tv.tv_sec.max(0) as u64) + Duration::from_micros(tv.tv_usec.max(0) as u64)
}

pub(crate) fn run_job(
    python: &Path,
    job: &serde_json::Value,
    limits: &SandboxLimits,
) -> Result<RawRun, ExecError> {
    let scratch = tempfile::Builder::new()
        .prefix("marco-sbx-")
        .tempdir()
        .map_err(|e| ExecError::Sandbox(format!("scratch dir: {e}")))?;
    let job_path = scratch.path().join("job.json");
    std::fs::write(&job_path, job.to_string())
        .map_err(|e| ExecError::Sandbox(format!("write job: {e}")))?;

    let cpu = limits.cpu_seconds;
    let mem = limits.memory_bytes;
    // Scratch files may be a little larger than captured output.
    let fsize = limits.output_bytes.saturating_mul(16).max(1 << 20);
    let mut cmd = Command::new(python);
    cmd.args(["-S", "-B", "-c", RUNNER, "job.json"])
        .current_dir(scratch.path())
        .env_clear()
        .env("PYTHONHASHSEED", "0")
        .env("PYTHONUTF8", "1")
        .env("PYTHONDONTWRITEBYTECODE", "1")
        .env("HOME", scratch.path())
        .env("TMPDIR", scratch.path())
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    // SAFETY: only async-signal-safe calls (setpgid, setrlimit) run between
    // fork and exec.
    unsafe {
        cmd.pre_exec(move || {
            if libc::setpgid(0, 0) != 0 {
                return Err(std::io::Error::last_os_error());
            }
            set_limit(libc::RLIMIT_CPU, cpu, cpu + 1)?;
            set_limit(libc::RLIMIT_AS, mem, mem)?;
            set_limit(libc::RLIMIT_FSIZE, fsize, fsize)?;
            set_limit(libc::RLIMIT_CORE, 0, 0)?;
            set_limit(libc::RLIMIT_NOFILE, 64, 64)?;
            Ok(())
        });
    }

    let started = Instant::now();
    let mut child = cmd
        .spawn()
        .map_err(|e| ExecError::Sandbox(format!("spawn {}: {e}", python.display())))?;
    let pid = child.id() as libc::pid_t;
    let stdout = child.stdout.take().expect("piped stdout");
    let stderr = child.stderr.take().expect("piped stderr");
    let out_cap = limits.output_bytes as usize + 4096;
    let out_reader = std::thread::spawn(move || read_capped(stdout, out_cap));
    let err_reader = std::thread::spawn(move || read_capped(stderr, STDERR_CAP));

    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        let mut status = 0;
        // SAFETY: zeroed rusage is a valid out-parameter.
        let mut usage: libc::rusage = unsafe { std::mem::zeroed() };
        loop {
            // SAFETY: waiting on our own child pid.
            let r = unsafe { libc::wait4(pid, &mut status, 0, &mut usage) };
            if r == pid {
                let _ = tx.send(Ok((status, usage)));
                return;
            }
            let err = std::io::Error::last_os_error();
            if err.kind() != std::io::ErrorKind::Interrupted {
                let _ = tx.send(Err(err));
                return;
            }
        }
    });

    let wall_limit = Duration::from_secs(limits.wall_seconds);
    let mut wall_killed = false;
    let waited = match rx.recv_timeout(wall_limit) {
        Ok(r) => r,
        Err(_) => {
            wall_killed = true;
            // SAFETY: the child is not yet reaped, so its group id is ours.
            unsafe {
                libc::killpg(pid, libc::SIGKILL);
            }
            rx.recv()
                .map_err(|_| ExecError::Sandbox("waiter thread vanished".into()))?
        }
    };
    let wall = started.elapsed();
    let (status, usage) = waited.map_err(|e| ExecError::Sandbox(format!("wait: {e}")))?;
    drop(child);

    let exit = if libc::WIFSIGNALED(status) {
        Exit::Signal(libc::WTERMSIG(status))
    } else {
        Exit::Code(libc::WEXITSTATUS(status))
    };
    let stdout = out_reader.join().unwrap_or_default();
    let stderr = err_reader.join().unwrap_or_default();
    Ok(RawRun {
        stdout,
        stderr,
        exit,
        wall_killed,
        wall,
        cpu: timeval(usage.ru_utime) + timeval(usage.ru_stime),
    })
}
