"""Isolated executor for generated calculation scripts.

Protocol: one JSON job per stdin line, one JSON result per stdout line, in
order. Nothing but protocol lines is ever written to stdout; diagnostics
go to stderr.

Each job runs in a fresh child Python process (`python -I`) inside its own
session and scratch directory, with an address-space cap, a file-size cap,
and the socket layer stubbed out before user code runs. On timeout the
whole process group is killed. Container-grade isolation is a deployment
concern, not provided here.

Result convention: the script either assigns a numeric variable named
``result`` or prints exactly one final numeric line.
"""

from __future__ import annotations

import json
import os
import re
import shutil
import signal
import subprocess
import sys
import tempfile
import time

STREAM_CAP = 64 * 1024

# Harness executed as the child process: applies limits, runs the user
# script, reports the `result` variable through outcome.json. Exceptions
# propagate so the traceback lands on the child's stderr.
_HARNESS = r"""
import json, os, resource, socket, sys

scratch, code_path, outcome_path, memory_mb = (
    sys.argv[1], sys.argv[2], sys.argv[3], int(sys.argv[4])
)
os.chdir(scratch)
os.environ["HOME"] = scratch
os.environ["TMPDIR"] = scratch
limit = memory_mb * 1024 * 1024
resource.setrlimit(resource.RLIMIT_AS, (limit, limit))
resource.setrlimit(resource.RLIMIT_FSIZE, (8 * 1024 * 1024,) * 2)


def _deny(*args, **kwargs):
    raise OSError("network access is disabled in the sandbox")


socket.socket = _deny
socket.socketpair = _deny
socket.create_connection = _deny
socket.getaddrinfo = _deny

with open(code_path, "r", encoding="utf-8") as handle:
    code = handle.read()

outcome = {"has_result": False, "result": None, "error": None}


def _write():
    with open(outcome_path, "w", encoding="utf-8") as handle:
        json.dump(outcome, handle)


namespace = {"__name__": "__main__"}
try:
    exec(compile(code, "script.py", "exec"), namespace)
except BaseException as exc:
    outcome["error"] = f"{type(exc).__name__}: {exc}"
    _write()
    raise

value = namespace.get("result")
if not isinstance(value, bool):
    if isinstance(value, (int, float)):
        outcome["has_result"] = True
        outcome["result"] = value
    elif value is not None:
        try:
            outcome["has_result"] = True
            outcome["result"] = float(value)
        except (TypeError, ValueError):
            outcome["has_result"] = False
            outcome["result"] = None
_write()
"""

_NUMERIC_LINE = re.compile(
    r"^\s*[-+]?(?:\d+(?:\.\d+)?|\.\d+)(?:[eE][-+]?\d+)?\s*$"
)


def _read_capped(path: str) -> str:
    try:
        with open(path, "rb") as handle:
            data = handle.read(STREAM_CAP)
    except OSError:
        return ""
    return data.decode("utf-8", errors="replace")


def _last_numeric_line(stdout: str) -> float | None:
    value = None
    for line in stdout.splitlines():
        if _NUMERIC_LINE.match(line):
            try:
                value = float(line.strip())
            except ValueError:
                continue
    return value


def execute(job: dict) -> dict:
    """Run one job to completion and build its result object."""
    job_id = str(job.get("job_id", "unknown"))
    code = job.get("code")
    try:
        timeout_s = float(job.get("timeout_s", 10.0))
        memory_mb = int(job.get("memory_mb", 256))
    except (TypeError, ValueError):
        return _result(job_id, "error", stderr="invalid timeout_s or memory_mb")
    if not isinstance(code, str) or not code or timeout_s <= 0 or memory_mb <= 0:
        return _result(job_id, "error", stderr="job needs non-empty code and positive limits")

    scratch = tempfile.mkdtemp(prefix="sbx-")
    code_path = os.path.join(scratch, "script.py")
    outcome_path = os.path.join(scratch, "outcome.json")
    stdout_path = os.path.join(scratch, "stdout.log")
    stderr_path = os.path.join(scratch, "stderr.log")
    start = time.monotonic()
    try:
        with open(code_path, "w", encoding="utf-8") as handle:
            handle.write(code)
        with open(stdout_path, "wb") as out, open(stderr_path, "wb") as err:
            process = subprocess.Popen(
                [sys.executable, "-I", "-c", _HARNESS,
                 scratch, code_path, outcome_path, str(memory_mb)],
                stdout=out,
                stderr=err,
                stdin=subprocess.DEVNULL,
                start_new_session=True,
                cwd=scratch,
            )
            timed_out = False
            try:
                process.wait(timeout=timeout_s)
            except subprocess.TimeoutExpired:
                timed_out = True
                try:
                    os.killpg(process.pid, signal.SIGKILL)
                except ProcessLookupError:
                    pass
                process.wait()
        wall_ms = int((time.monotonic() - start) * 1000)
        stdout = _read_capped(stdout_path)
        stderr = _read_capped(stderr_path)

        if timed_out:
            return _result(job_id, "timeout", stdout=stdout,
                           stderr=stderr or "wall clock limit exceeded",
                           wall_ms=wall_ms)

        outcome = None
        if os.path.exists(outcome_path):
            try:
                with open(outcome_path, "r", encoding="utf-8") as handle:
                    outcome = json.load(handle)
            except (OSError, ValueError):
                outcome = None

        memory_hit = (
            process.returncode == -signal.SIGKILL
            or "MemoryError" in stderr
            or (outcome is not None and "MemoryError" in (outcome.get("error") or ""))
        )
        if memory_hit:
            return _result(job_id, "killed", stdout=stdout,
                           stderr=stderr or "memory cap exceeded",
                           wall_ms=wall_ms)
        if process.returncode != 0 or (outcome and outcome.get("error")):
            detail = (outcome or {}).get("error") or f"exit code {process.returncode}"
            return _result(job_id, "error", stdout=stdout,
                           stderr=stderr or detail, wall_ms=wall_ms)

        if outcome and outcome.get("has_result"):
            value = outcome.get("result")
        else:
            value = _last_numeric_line(stdout)
        if value is None:
            return _result(
                job_id, "error", stdout=stdout,
                stderr="script produced neither a `result` variable nor a "
                       "final numeric line",
                wall_ms=wall_ms,
            )
        return _result(job_id, "ok", result=value, stdout=stdout,
                       stderr=stderr, wall_ms=wall_ms)
    finally:
        shutil.rmtree(scratch, ignore_errors=True)


def _result(job_id: str, status: str, result=None, stdout: str = "",
            stderr: str = "", wall_ms: int = 0) -> dict:
    return {
        "job_id": job_id,
        "status": status,
        "result": result if status == "ok" else None,
        "stdout": stdout[:STREAM_CAP],
        "stderr": stderr[:STREAM_CAP],
        "wall_ms": wall_ms,
    }


def serve(stdin=None, stdout=None) -> None:
    """Protocol loop: jobs in, results out, strictly in order."""
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    for line in stdin:
        if not line.strip():
            continue
        try:
            job = json.loads(line)
            if not isinstance(job, dict):
                raise ValueError("job line must be a JSON object")
        except ValueError as exc:
            print(f"sandbox-runner: malformed job line: {exc}", file=sys.stderr)
            payload = _result("unknown", "error", stderr=f"malformed job line: {exc}")
            stdout.write(json.dumps(payload) + "\n")
            stdout.flush()
            continue
        stdout.write(json.dumps(execute(job)) + "\n")
        stdout.flush()


def main() -> None:
    try:
        serve()
    except KeyboardInterrupt:
        pass


if __name__ == "__main__":
    main()
