"""Runner behaviour: result capture, limits, statuses, and the protocol."""

import json
import subprocess
import sys
import time

import pytest

from sandbox_runner.runner import STREAM_CAP, execute


def job(code, job_id="j", timeout_s=10.0, memory_mb=256):
    return {"job_id": job_id, "code": code, "timeout_s": timeout_s,
            "memory_mb": memory_mb}


class TestExecute:
    def test_result_variable(self):
        result = execute(job("result = 127 + 0.024*(527-100)"))
        assert result["status"] == "ok"
        assert result["result"] == 137.248
        assert json.dumps(result["result"]) == "137.248"

    def test_final_printed_line_fallback(self):
        result = execute(job("print('intermediate 3')\nprint(19.5)"))
        assert result["status"] == "ok"
        assert result["result"] == 19.5

    def test_result_variable_preferred_over_stdout(self):
        result = execute(job("print(1)\nresult = 2"))
        assert result["result"] == 2

    def test_no_result_is_error(self):
        result = execute(job("x = 5"))
        assert result["status"] == "error"
        assert "result" in result["stderr"]

    def test_timeout_kills_process_tree(self):
        start = time.monotonic()
        result = execute(job("while True: pass", timeout_s=1.0))
        elapsed = time.monotonic() - start
        assert result["status"] == "timeout"
        assert result["result"] is None
        assert elapsed < 1.5, f"took {elapsed:.2f}s"
        assert result["wall_ms"] <= 1500

    def test_exception_reports_error_with_stderr(self):
        result = execute(job("1/0"))
        assert result["status"] == "error"
        assert "ZeroDivisionError" in result["stderr"]

    def test_memory_cap_reports_killed(self):
        result = execute(job("x = bytearray(400 * 1024 * 1024)\nresult = 1",
                             memory_mb=128))
        assert result["status"] == "killed"
        assert result["result"] is None

    def test_network_denied(self):
        result = execute(job(
            "import socket\nsocket.socket()\nresult = 1"
        ))
        assert result["status"] == "error"
        assert "network access is disabled" in result["stderr"]

    def test_runs_inside_scratch_directory(self):
        result = execute(job(
            "import os\nresult = 1 if 'sbx-' in os.getcwd() else 0"
        ))
        assert result["status"] == "ok"
        assert result["result"] == 1

    def test_scratch_file_writes_allowed(self):
        result = execute(job(
            "with open('x.txt', 'w') as h:\n    h.write('ok')\n"
            "result = len(open('x.txt').read())"
        ))
        assert result["status"] == "ok"
        assert result["result"] == 2

    def test_stdout_truncated(self):
        result = execute(job(
            "print('x' * 200000)\nresult = 7"
        ))
        assert result["status"] == "ok"
        assert len(result["stdout"]) <= STREAM_CAP

    def test_deterministic_across_runs(self):
        code = "result = (1.1 + 2.2) * 3.3 / 7"
        assert execute(job(code))["result"] == execute(job(code))["result"]

    def test_bad_job_fields(self):
        assert execute({"job_id": "x", "code": ""})["status"] == "error"
        assert execute({"job_id": "x", "code": "result=1", "timeout_s": -1})["status"] == "error"
        assert execute({"job_id": "x", "code": "result=1", "timeout_s": "soon"})["status"] == "error"

    @pytest.mark.parametrize("code", [
        "import sys; sys.exit(3)",
        "raise SystemExit('going')",
        "\x00\x01\x02",
        "def f(:",
    ])
    def test_malformed_scripts_still_structured(self, code):
        result = execute(job(code))
        assert result["status"] == "error"
        assert result["result"] is None
        assert isinstance(result["stderr"], str)


class TestProtocol:
    def _run(self, jobs, timeout=120):
        process = subprocess.run(
            [sys.executable, "-m", "sandbox_runner"],
            input="\n".join(json.dumps(j) for j in jobs) + "\n",
            capture_output=True, text=True, timeout=timeout,
        )
        assert process.returncode == 0
        lines = [line for line in process.stdout.splitlines() if line]
        return [json.loads(line) for line in lines]

    def test_three_jobs_in_order(self):
        results = self._run([
            job("result = 1", job_id="a"),
            job("result = 2", job_id="b"),
            job("result = 3", job_id="c"),
        ])
        assert [r["job_id"] for r in results] == ["a", "b", "c"]
        assert [r["result"] for r in results] == [1, 2, 3]

    def test_empty_stdin_clean_exit(self):
        process = subprocess.run(
            [sys.executable, "-m", "sandbox_runner"],
            input="", capture_output=True, text=True, timeout=30,
        )
        assert process.returncode == 0
        assert process.stdout == ""

    def test_fifty_mixed_jobs_preserve_order(self):
        jobs = []
        for i in range(50):
            if i % 10 == 7:
                jobs.append(job("while True: pass", job_id=f"idx-{i}",
                                timeout_s=0.3))
            elif i % 10 == 3:
                jobs.append(job("1/0", job_id=f"idx-{i}"))
            else:
                jobs.append(job(f"result = {i} * 2", job_id=f"idx-{i}"))
        results = self._run(jobs, timeout=300)
        assert len(results) == 50
        assert [r["job_id"] for r in results] == [f"idx-{i}" for i in range(50)]
        for i, result in enumerate(results):
            if i % 10 == 7:
                assert result["status"] == "timeout"
            elif i % 10 == 3:
                assert result["status"] == "error"
            else:
                assert result["status"] == "ok"
                assert result["result"] == i * 2

    def test_stdout_carries_only_protocol_lines(self):
        results_input = [job("print('hello')\nresult = 1", job_id="p")]
        process = subprocess.run(
            [sys.executable, "-m", "sandbox_runner"],
            input="\n".join(json.dumps(j) for j in results_input) + "\nnot json\n",
            capture_output=True, text=True, timeout=60,
        )
        for line in process.stdout.splitlines():
            if line:
                parsed = json.loads(line)  # every line must parse
                assert set(parsed) == {
                    "job_id", "status", "result", "stdout", "stderr", "wall_ms",
                }
