//! Child processes, each leading its own process group.

use std::io;
use std::os::unix::process::CommandExt;
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

/// Spawn `exe args...` as the leader of a new process group, optionally
/// pinned to `cpus` before it starts any thread.
pub fn spawn_group(
    exe: &Path,
    args: &[String],
    envs: &[(String, String)],
    cpus: Option<&[usize]>,
) -> io::Result<Child> {
    let mut cmd = Command::new(exe);
    cmd.args(args)
        .process_group(0)
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::inherit());
    for (k, v) in envs {
        cmd.env(k, v);
    }
    if let Some(cpus) = cpus {
        let cpus = cpus.to_vec();
        // SAFETY: only async-signal-safe libc calls between fork and exec.
        unsafe {
            cmd.pre_exec(move || {
                let mut set: libc::cpu_set_t = std::mem::zeroed();
                for &c in &cpus {
                    libc::CPU_SET(c, &mut set);
                }
                if libc::sched_setaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &set) != 0 {
                    return Err(io::Error::last_os_error());
                }
                Ok(())
            });
        }
    }
    cmd.spawn()
}

/// True while any live (non-zombie) process of group `pgid` exists.
///
/// Orphaned zombies are ignored: they have exited, but a PID 1 that does not
/// reap keeps them visible to `kill(-pgid, 0)`.
pub fn group_alive(pgid: i32) -> bool {
    // SAFETY: signal 0 only probes for existence.
    let r = unsafe { libc::kill(-pgid, 0) };
    if r != 0 && io::Error::last_os_error().raw_os_error() == Some(libc::ESRCH) {
        return false;
    }
    !live_members(pgid).is_empty()
}

/// Non-zombie pids whose process group is `pgid`.
pub fn live_members(pgid: i32) -> Vec<i32> {
    let Ok(dir) = std::fs::read_dir("/proc") else {
        return Vec::new();
    };
    dir.filter_map(|e| e.ok()?.file_name().to_str()?.parse::<i32>().ok())
        .filter(|&pid| match super::sampler::read_stat(pid) {
            Some(st) => st.pgrp == pgid && st.state != 'Z' && st.state != 'X',
            None => false,
        })
        .collect()
}

pub fn signal_group(pgid: i32, sig: libc::c_int) {
    // SAFETY: plain kill(2) on a process group we created.
    unsafe {
        libc::kill(-pgid, sig);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    /// Exited on its own before teardown started.
    Exited(Option<i32>),
    Terminated,
    Killed,
}

/// SIGTERM the group, escalate to SIGKILL after `grace`, reap the leader and
/// wait until the whole group is gone.
pub fn terminate_group(child: &mut Child, grace: Duration) -> Exit {
    let pgid = child.id() as i32;
    if let Ok(Some(status)) = child.try_wait() {
        // leader is gone; stragglers in its group still get reaped below
        if group_alive(pgid) {
            signal_group(pgid, libc::SIGKILL);
            wait_group_gone(pgid, grace);
        }
        return Exit::Exited(status.code());
    }
    signal_group(pgid, libc::SIGTERM);
    let deadline = Instant::now() + grace;
    while Instant::now() < deadline {
        if let Ok(Some(_)) = child.try_wait() {
            if !group_alive(pgid) {
                return Exit::Terminated;
            }
        }
        std::thread::sleep(Duration::from_millis(10));
    }
    signal_group(pgid, libc::SIGKILL);
    let _ = child.wait();
    wait_group_gone(pgid, Duration::from_secs(2));
    Exit::Killed
}

fn wait_group_gone(pgid: i32, limit: Duration) {
    let deadline = Instant::now() + limit;
    while group_alive(pgid) && Instant::now() < deadline {
        std::thread::sleep(Duration::from_millis(5));
    }
}

/// Wait for the leader to exit on its own, up to `limit`.
pub fn wait_exit(child: &mut Child, limit: Duration) -> Option<Option<i32>> {
    let deadline = Instant::now() + limit;
    loop {
        match child.try_wait() {
            Ok(Some(status)) => return Some(status.code()),
            Ok(None) if Instant::now() < deadline => std::thread::sleep(Duration::from_millis(10)),
            _ => return None,
        }
    }
}
