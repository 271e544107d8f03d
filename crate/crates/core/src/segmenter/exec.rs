//! Child-process segmenter speaking FSEG over stdin/stdout.

use std::io::{BufReader, BufWriter, ErrorKind};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread::JoinHandle;
use std::time::Duration;

use super::wire::{read_frame, write_frame, FrameKind, SegFrameHeader};
use super::{Capabilities, SegmenterBackend, MAP_SIDE};
use crate::error::{Error, Result};
use crate::freespace::FreespaceMap;
use crate::image::ByteImage;

pub const DEFAULT_TIMEOUT_MS: u64 = 1000;

type Reply = Result<(SegFrameHeader, Vec<u8>)>;

/// Runs `sh -c <command>` and exchanges one request/response pair per frame.
///
/// Mask bytes are `0` for obstacle and non-zero for free space. After a
/// timeout or protocol error the stream is out of sync and every later call
/// fails.
pub struct ExecBackend {
    command: String,
    child: Child,
    stdin: Option<BufWriter<ChildStdin>>,
    replies: Receiver<Reply>,
    reader: Option<JoinHandle<()>>,
    timeout: Duration,
    poisoned: Option<String>,
}

impl ExecBackend {
    pub fn spawn(command: &str) -> Result<Self> {
        Self::spawn_with_timeout(command, Duration::from_millis(DEFAULT_TIMEOUT_MS))
    }

    pub fn spawn_with_timeout(command: &str, timeout: Duration) -> Result<Self> {
        let mut cmd = Command::new("sh");
        cmd.arg("-c").arg(command);
        // own process group, so Drop can stop grandchildren spawned by the shell
        #[cfg(unix)]
        std::os::unix::process::CommandExt::process_group(&mut cmd, 0);
        let mut child = cmd
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Backend(format!("cannot start `{command}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel::<Reply>();
        let max_payload = MAP_SIDE * MAP_SIDE;
        let reader = std::thread::Builder::new().name("fseg-reader".into()).spawn(move || {
            let mut stdout = BufReader::new(stdout);
            loop {
                let reply = match read_frame(&mut stdout, max_payload) {
                    Ok(Some(frame)) => Ok(frame),
                    Ok(None) => Err(Error::Backend("segmenter process closed its output".into())),
                    Err(e) => Err(e),
                };
                let stop = reply.is_err();
                if tx.send(reply).is_err() || stop {
                    break;
                }
            }
        })?;
        Ok(Self {
            command: command.to_string(),
            child,
            stdin: Some(BufWriter::with_capacity(1 << 16, stdin)),
            replies: rx,
            reader: Some(reader),
            timeout,
            poisoned: None,
        })
    }

    fn poison(&mut self, err: Error) -> Error {
        self.poisoned = Some(err.to_string());
        err
    }

    fn exchange(&mut self, frame_index: u32, rgb: &ByteImage) -> Result<FreespaceMap> {
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| Error::Backend("segmenter input already closed".into()))?;
        if let Err(e) = write_frame(stdin, FrameKind::Request, frame_index, rgb.data()) {
            return Err(match e {
                Error::Io(io) if io.kind() == ErrorKind::BrokenPipe => {
                    Error::Backend(format!("`{}` exited", self.command))
                }
                other => other,
            });
        }
        let (header, payload) = match self.replies.recv_timeout(self.timeout) {
            Ok(reply) => reply?,
            Err(RecvTimeoutError::Timeout) => return Err(Error::BackendTimeout(self.timeout.as_millis() as u64)),
            Err(RecvTimeoutError::Disconnected) => return Err(Error::Backend(format!("`{}` exited", self.command))),
        };
        if header.kind != FrameKind::Response {
            return Err(Error::Protocol("expected a response frame".into()));
        }
        if header.frame_index != frame_index {
            return Err(Error::Protocol(format!(
                "response for frame {} while waiting for {frame_index}",
                header.frame_index
            )));
        }
        if payload.len() != MAP_SIDE * MAP_SIDE {
            return Err(Error::Protocol(format!(
                "mask payload has {} bytes, expected {}",
                payload.len(),
                MAP_SIDE * MAP_SIDE
            )));
        }
        let cells = payload.into_iter().map(|b| u8::from(b != 0)).collect();
        FreespaceMap::from_cells(MAP_SIDE, MAP_SIDE, cells)
    }
}

impl SegmenterBackend for ExecBackend {
    fn capabilities(&self) -> Capabilities {
        Capabilities::new(format!("exec:{}", self.command))
    }

    fn segment(&mut self, frame_index: u32, rgb: &ByteImage) -> Result<FreespaceMap> {
        if let Some(reason) = &self.poisoned {
            return Err(Error::Backend(format!(
                "segmenter unusable after earlier error: {reason}"
            )));
        }
        super::check_input(rgb)?;
        self.exchange(frame_index, rgb).map_err(|e| self.poison(e))
    }
}

impl Drop for ExecBackend {
    fn drop(&mut self) {
        // closing stdin lets a well-behaved child exit on its own
        drop(self.stdin.take());
        #[cfg(unix)]
        if let Ok(pgid) = i32::try_from(self.child.id()) {
            // SAFETY: kill(2) with a negative pid only signals that group
            unsafe {
                libc::kill(-pgid, libc::SIGKILL);
            }
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
        if let Some(reader) = self.reader.take() {
            let _ = reader.join();
        }
    }
}
