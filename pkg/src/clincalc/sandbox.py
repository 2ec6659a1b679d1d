"""Host-side client for the external sandbox runner.

The runner is a separate executable (configured via ``--sandbox-cmd``)
speaking newline-delimited JSON on its standard streams: one job object
per request line, one result object per response line, in order. This
module only speaks the protocol; enforcement of time/memory limits lives
in the runner process.
"""

from __future__ import annotations

import json
import os
import select
import subprocess
import threading
import time
from decimal import Decimal
from typing import Literal

from pydantic import BaseModel, ConfigDict, model_validator

from .errors import SandboxFailure

# Extra host-side patience beyond the job's own limit before declaring the
# runner itself hung.
HOST_GRACE_S = 10.0


class SandboxJob(BaseModel):
    model_config = ConfigDict(frozen=True)

    job_id: str
    code: str
    timeout_s: float = 10.0
    memory_mb: int = 256

    @model_validator(mode="after")
    def _check(self) -> "SandboxJob":
        if self.timeout_s <= 0:
            raise ValueError("timeout_s must be positive")
        if not self.code:
            raise ValueError("code must be non-empty")
        return self


class SandboxResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    job_id: str
    status: Literal["ok", "timeout", "error", "killed"]
    result: Decimal | None = None
    stdout: str = ""
    stderr: str = ""
    wall_ms: int = 0

    @model_validator(mode="after")
    def _check(self) -> "SandboxResult":
        if self.status == "ok" and self.result is None:
            raise ValueError("ok results must carry a numeric result")
        if self.status != "ok" and self.result is not None:
            raise ValueError("non-ok results must not carry a result")
        return self


class _LineReader:
    """select()-based line reader over a pipe fd, so a hung runner cannot
    hang the host."""

    def __init__(self, pipe):
        self._fd = pipe.fileno()
        self._buffer = b""

    def readline(self, deadline: float) -> bytes | None:
        while b"\n" not in self._buffer:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                return None
            ready, _, _ = select.select([self._fd], [], [], remaining)
            if not ready:
                return None
            chunk = os.read(self._fd, 65536)
            if not chunk:
                return None  # EOF
            self._buffer += chunk
        line, self._buffer = self._buffer.split(b"\n", 1)
        return line


class SandboxClient:
    """Runs jobs through one runner subprocess, serially.

    Lazily spawns the runner on first use; parallelism is achieved by the
    caller holding several clients.
    """

    def __init__(self, command: list[str]):
        if not command:
            raise ValueError("sandbox command must be non-empty")
        self.command = list(command)
        self._process: subprocess.Popen | None = None
        self._reader: _LineReader | None = None
        # The runner handles jobs serially; concurrent callers take turns.
        self._lock = threading.Lock()

    def _ensure_started(self) -> None:
        if self._process is not None and self._process.poll() is None:
            return
        self._process = subprocess.Popen(
            self.command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=None,  # runner diagnostics pass through
        )
        self._reader = _LineReader(self._process.stdout)

    def execute(self, job: SandboxJob) -> SandboxResult:
        """Send one job and wait for its result line.

        Raises SandboxFailure when the runner process itself misbehaves
        (dies, emits garbage, or exceeds the job limit plus grace).
        """
        with self._lock:
            return self._execute_locked(job)

    def _execute_locked(self, job: SandboxJob) -> SandboxResult:
        self._ensure_started()
        assert self._process is not None and self._reader is not None
        line = json.dumps(
            {
                "job_id": job.job_id,
                "code": job.code,
                "timeout_s": job.timeout_s,
                "memory_mb": job.memory_mb,
            },
            ensure_ascii=False,
        )
        try:
            self._process.stdin.write(line.encode("utf-8") + b"\n")
            self._process.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise SandboxFailure(f"sandbox runner is gone: {exc}") from exc

        deadline = time.monotonic() + job.timeout_s + HOST_GRACE_S
        raw = self._reader.readline(deadline)
        if raw is None:
            self.close(kill=True)
            raise SandboxFailure(
                f"sandbox runner produced no result for job {job.job_id} "
                f"within {job.timeout_s + HOST_GRACE_S:.1f}s"
            )
        try:
            payload = json.loads(raw.decode("utf-8"), parse_float=Decimal)
            return SandboxResult.model_validate(payload)
        except (ValueError, UnicodeDecodeError) as exc:
            raise SandboxFailure(f"unparseable sandbox result line: {exc}") from exc

    def close(self, kill: bool = False) -> None:
        process, self._process, self._reader = self._process, None, None
        if process is None:
            return
        try:
            if process.stdin:
                process.stdin.close()
            if kill:
                process.kill()
            process.wait(timeout=5)
        except Exception:
            process.kill()
            process.wait(timeout=5)

    def __enter__(self) -> "SandboxClient":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()
