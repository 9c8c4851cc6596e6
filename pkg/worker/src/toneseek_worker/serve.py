"""Reference reward worker.

Speaks the toneseek external-reward protocol: newline-delimited JSON over
stdin/stdout, UTF-8, one document per line, nothing else on stdout. On
startup the worker prints ``{"hello": {"protocol": 1, "reward_name": ...}}``,
then answers each request ``{"id", "sample_rate", "prompt", "audio_b64"}``
(audio is base64 of little-endian float32 samples) with ``{"id", "reward"}``
or ``{"id", "error"}`` until stdin closes. The loop is single-threaded and
lockstep; a request failure produces an error reply, never a dead process.

The worker holds no dependency on the toneseek package itself. Everything it
needs to score comes from the task document passed via --task, so it can run
on a different host, interpreter, or language runtime than the engine.
"""

import argparse
import base64
import json
import sys

import numpy as np

PROTOCOL_VERSION = 1
TASK_FORMAT = "toneseek-task-v1"


class SpectralScorer:
    """Alignment reward recomputed from the task document alone.

    Cosine between the waveform's unit-normalized DFT magnitude and the
    requested prompt's target spectrum, clamped to [0, 1]; all-zero audio
    scores 0. Prompts resolve by exact string match on their id, which keeps
    this scorer free of any model dependency.
    """

    reward_name = "alignment"

    def __init__(self, doc):
        self.sample_rate = int(doc["sample_rate"])
        self.num_samples = int(doc["num_samples"])
        self.targets = {}
        for p in doc["prompts"]:
            target = np.asarray(p["target_spectrum"], dtype=float)
            if target.shape != (self.num_samples // 2 + 1,):
                raise ValueError(
                    f"target spectrum for {p['prompt_id']!r} has {target.size} bins, "
                    f"expected {self.num_samples // 2 + 1}"
                )
            self.targets[str(p["prompt_id"])] = target

    def score(self, samples, sample_rate, prompt):
        if prompt not in self.targets:
            raise ValueError(f"unknown prompt {prompt!r}")
        if sample_rate != self.sample_rate:
            raise ValueError(f"sample rate {sample_rate} does not match task ({self.sample_rate})")
        if samples.size != self.num_samples:
            raise ValueError(
                f"audio has {samples.size} samples, task expects {self.num_samples}"
            )
        mag = np.abs(np.fft.rfft(samples))
        norm = float(np.linalg.norm(mag))
        if norm == 0.0:
            return 0.0
        return float(np.clip(mag @ self.targets[prompt] / norm, 0.0, 1.0))


class AqaScorer:
    """Integration point for an audio-question-answering reward: ask a
    multimodal audio model whether the clip contains what the prompt names
    and return the model's yes-probability.

    No model runtime ships with this worker, so selecting the scorer fails
    loudly at startup instead of silently falling back to the spectral
    reward. A real implementation would load its model here and answer in
    score(); the serve loop and protocol handling need no changes.
    """

    reward_name = "aqa"

    def __init__(self, doc):
        raise NotImplementedError(
            "the aqa scorer is a documented stub: it needs an audio-LM runtime "
            "to produce yes-probabilities, and none ships with this worker"
        )


SCORERS = {"spectral": SpectralScorer, "aqa": AqaScorer}


def decode_audio(b64: str) -> np.ndarray:
    raw = base64.b64decode(b64, validate=True)
    if len(raw) == 0 or len(raw) % 4 != 0:
        raise ValueError("audio payload must be a nonempty multiple of 4 bytes")
    return np.frombuffer(raw, dtype="<f4").astype(np.float64)


def handle_request(scorer, line: str) -> dict:
    """One reply per input line; malformed input yields id -1 per protocol."""
    rid = -1
    try:
        req = json.loads(line)
        if not isinstance(req, dict):
            raise ValueError("request must be a JSON object")
        got = req.get("id")
        if isinstance(got, int) and not isinstance(got, bool):
            rid = got
        samples = decode_audio(req["audio_b64"])
        reward = scorer.score(samples, int(req["sample_rate"]), str(req["prompt"]))
        return {"id": rid, "reward": reward}
    except Exception as exc:
        return {"id": rid, "error": f"{type(exc).__name__}: {exc}"}


def serve(scorer, stdin=None, stdout=None) -> int:
    stdin = sys.stdin if stdin is None else stdin
    stdout = sys.stdout if stdout is None else stdout

    def emit(doc):
        stdout.write(json.dumps(doc, separators=(",", ":")) + "\n")
        stdout.flush()

    emit({"hello": {"protocol": PROTOCOL_VERSION, "reward_name": scorer.reward_name}})
    for line in stdin:
        emit(handle_request(scorer, line))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="toneseek-worker",
        description="Score audio rewards for a toneseek engine over stdin/stdout.",
    )
    parser.add_argument("--task", required=True, help=f"path to a {TASK_FORMAT} JSON document")
    parser.add_argument(
        "--scorer",
        choices=sorted(SCORERS),
        default="spectral",
        help="reward implementation; aqa is a documented stub that exits with an error",
    )
    args = parser.parse_args(argv)

    # Any startup failure must leave stdout untouched: the client treats the
    # first stdout line as the handshake.
    try:
        with open(args.task, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"cannot load task file {args.task!r}: {exc}", file=sys.stderr)
        return 2
    if not isinstance(doc, dict) or doc.get("format") != TASK_FORMAT:
        print(f"task file {args.task!r} is not a {TASK_FORMAT} document", file=sys.stderr)
        return 2
    try:
        scorer = SCORERS[args.scorer](doc)
    except (NotImplementedError, ValueError, KeyError, TypeError) as exc:
        print(f"cannot build {args.scorer!r} scorer: {exc}", file=sys.stderr)
        return 2
    return serve(scorer)


if __name__ == "__main__":
    sys.exit(main())
