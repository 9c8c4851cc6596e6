"""Client for external reward workers speaking newline-delimited JSON over
stdio.

Protocol, one JSON object per line:

    worker -> client   {"hello": {"protocol": 1, "reward_name": "<name>"}}
    client -> worker   {"id": 1, "sample_rate": 16000, "prompt": "<id>",
                        "audio_b64": "<base64 little-endian float32>"}
    worker -> client   {"id": 1, "reward": 0.73}
                 or    {"id": 1, "error": "<message>"}

Exchanges are lockstep: one outstanding request at a time, ids strictly
increasing from 1.
"""

from __future__ import annotations

import base64
import json
import os
import select
import shlex
import subprocess
import time

import numpy as np

from .errors import (
    WorkerCrashError,
    WorkerHandshakeError,
    WorkerProtocolError,
    WorkerRewardError,
    WorkerSpawnError,
    WorkerTimeoutError,
)
from .rewards import RewardSpec

PROTOCOL_VERSION = 1

HANDSHAKE_TIMEOUT_ENV = "TONESEEK_WORKER_HANDSHAKE_TIMEOUT"
REQUEST_TIMEOUT_ENV = "TONESEEK_WORKER_TIMEOUT"
DEFAULT_HANDSHAKE_TIMEOUT = 10.0
DEFAULT_REQUEST_TIMEOUT = 60.0


def _env_timeout(name: str, default: float) -> float:
    raw = os.environ.get(name)
    if raw is None:
        return default
    try:
        value = float(raw)
    except ValueError as exc:
        raise ValueError(f"{name} must be a number, got {raw!r}") from exc
    if value <= 0:
        raise ValueError(f"{name} must be positive")
    return value


def encode_waveform(waveform: np.ndarray) -> str:
    """Base64 of the waveform as little-endian float32 bytes."""
    arr = np.asarray(waveform, dtype="<f4")
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("waveform must be a nonempty 1-D array")
    return base64.b64encode(arr.tobytes()).decode("ascii")


def decode_waveform_b64(payload: str) -> np.ndarray:
    raw = base64.b64decode(payload.encode("ascii"), validate=True)
    if len(raw) == 0 or len(raw) % 4 != 0:
        raise ValueError("audio payload is not a float32 byte string")
    return np.frombuffer(raw, dtype="<f4").astype(np.float64)


class WorkerHandle:
    """A running reward worker and its lockstep request state.

    Args:
        proc: the worker subprocess, pipes already attached.
        reward_name: name announced in the handshake.
        record_transcript: keep (sent, received) line bytes per exchange.
    """

    def __init__(self, proc: subprocess.Popen, reward_name: str, record_transcript: bool = False):
        self._proc = proc
        self._rbuf = b""
        self._next_id = 1
        self._closed = False
        self.reward_name = reward_name
        self.transcript: list[tuple[bytes, bytes]] = []
        self._record = record_transcript

    @property
    def pid(self) -> int:
        return self._proc.pid

    def _read_line(self, timeout: float) -> bytes:
        """One newline-terminated line from worker stdout, or raise."""
        deadline = time.monotonic() + timeout
        fd = self._proc.stdout.fileno()
        while b"\n" not in self._rbuf:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                self.kill()
                raise WorkerTimeoutError(f"no reply from worker within {timeout:.1f}s")
            ready, _, _ = select.select([fd], [], [], remaining)
            if not ready:
                continue
            chunk = os.read(fd, 65536)
            if chunk == b"":
                code = self._proc.poll()
                raise WorkerCrashError(f"worker closed stdout (exit code {code})")
            self._rbuf += chunk
        line, self._rbuf = self._rbuf.split(b"\n", 1)
        return line

    def _send_line(self, line: bytes) -> None:
        try:
            self._proc.stdin.write(line + b"\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            code = self._proc.poll()
            raise WorkerCrashError(f"worker pipe closed (exit code {code})") from exc

    def request(self, waveform: np.ndarray, sample_rate: int, prompt_text: str) -> float:
        """One scoring round trip."""
        if self._closed:
            raise WorkerProtocolError("worker handle is closed")
        payload = {
            "id": self._next_id,
            "sample_rate": int(sample_rate),
            "prompt": str(prompt_text),
            "audio_b64": encode_waveform(waveform),
        }
        self._next_id += 1
        sent = json.dumps(payload, separators=(",", ":")).encode("ascii")
        self._send_line(sent)
        line = self._read_line(_env_timeout(REQUEST_TIMEOUT_ENV, DEFAULT_REQUEST_TIMEOUT))
        if self._record:
            self.transcript.append((sent, line))
        try:
            reply = json.loads(line)
        except json.JSONDecodeError as exc:
            raise WorkerProtocolError(f"worker sent invalid JSON: {line[:200]!r}") from exc
        if not isinstance(reply, dict) or reply.get("id") != payload["id"]:
            raise WorkerProtocolError(
                f"reply id mismatch: sent {payload['id']}, got {reply!r}"
            )
        if "error" in reply:
            raise WorkerRewardError(str(reply["error"]))
        if "reward" not in reply:
            raise WorkerProtocolError(f"reply has neither reward nor error: {reply!r}")
        reward = reply["reward"]
        if not isinstance(reward, (int, float)) or isinstance(reward, bool) or not np.isfinite(reward):
            raise WorkerProtocolError(f"reward is not a finite number: {reward!r}")
        return float(reward)

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        try:
            self._proc.stdin.close()
        except OSError:
            pass
        try:
            self._proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self.kill()

    def kill(self) -> None:
        self._closed = True
        if self._proc.poll() is None:
            self._proc.kill()
            self._proc.wait(timeout=5)

    def __enter__(self) -> "WorkerHandle":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def spawn_worker(cmd, record_transcript: bool = False) -> WorkerHandle:
    """Launch a worker command and complete the handshake.

    Args:
        cmd: argv list, or a string split with shell-like rules.
        record_transcript: keep per-exchange line bytes on the handle.
    """
    argv = shlex.split(cmd) if isinstance(cmd, str) else list(cmd)
    if not argv:
        raise WorkerSpawnError("empty worker command")
    try:
        proc = subprocess.Popen(
            argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE, stderr=None, bufsize=0
        )
    except OSError as exc:
        raise WorkerSpawnError(f"cannot launch worker {argv[0]!r}: {exc}") from exc
    handle = WorkerHandle(proc, reward_name="", record_transcript=record_transcript)
    try:
        line = handle._read_line(_env_timeout(HANDSHAKE_TIMEOUT_ENV, DEFAULT_HANDSHAKE_TIMEOUT))
    except WorkerCrashError as exc:
        raise WorkerSpawnError(f"worker exited before handshake: {exc}") from exc
    except WorkerTimeoutError as exc:
        raise WorkerHandshakeError(str(exc)) from exc
    try:
        hello = json.loads(line)
    except json.JSONDecodeError as exc:
        handle.kill()
        raise WorkerHandshakeError(f"handshake is not JSON: {line[:200]!r}") from exc
    body = hello.get("hello") if isinstance(hello, dict) else None
    if not isinstance(body, dict):
        handle.kill()
        raise WorkerHandshakeError(f"missing hello object: {hello!r}")
    if body.get("protocol") != PROTOCOL_VERSION:
        handle.kill()
        raise WorkerHandshakeError(
            f"protocol {body.get('protocol')!r} unsupported; this client speaks {PROTOCOL_VERSION}"
        )
    name = body.get("reward_name")
    if not isinstance(name, str) or not name:
        handle.kill()
        raise WorkerHandshakeError(f"missing reward_name: {hello!r}")
    handle.reward_name = name
    return handle


def request_reward(handle: WorkerHandle, waveform: np.ndarray, sample_rate: int, prompt_text: str) -> float:
    return handle.request(waveform, sample_rate, prompt_text)


def external_reward_spec(handle: WorkerHandle, sample_rate: int) -> RewardSpec:
    """Adapter so search and calibration can score through a worker."""

    def evaluate(waveform, prompt):
        prompt_text = prompt.prompt_id if prompt is not None else ""
        return request_reward(handle, waveform, sample_rate, prompt_text)

    return RewardSpec(name=handle.reward_name, kind="external", evaluator=evaluate)
