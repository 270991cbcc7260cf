"""Run configuration, presets and report emission."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

from .lattice import ParameterError, SchemeParams


class ConfigError(ValueError):
    """Bad configuration; the CLI maps it to exit code 2."""


PRESETS = {
    # noiseless ciphertexts so the simulated games isolate the key-state behaviour
    "sim-tiny": SchemeParams(n=1, m=3, q=7, sigma=2.0),
    "sim-small": SchemeParams(n=2, m=5, q=5, sigma=2.5),
    # alpha q = beta q = 1 puts the decryption error far below 1e-3
    "classical-medium": SchemeParams(n=8, m=144, q=257, sigma=3.2, alpha=1 / 257, beta=1 / 257, p=4),
}

PARAM_KEYS = ("n", "m", "q", "sigma", "alpha", "beta", "p", "L", "strict_mode")
RUN_KEYS = ("preset", "seed", "trials", "output")
_INT = {"n", "m", "q", "p", "L", "seed", "trials"}
_FLOAT = {"sigma", "alpha", "beta"}


@dataclass
class RunConfig:
    params: SchemeParams
    seed: int = 0
    trials: int = 1000
    preset: str = "custom"
    output: str | None = None

    def to_text(self) -> str:
        lines = [f"preset={self.preset}"]
        for k in PARAM_KEYS:
            lines.append(f"{k}={_fmt(getattr(self.params, k))}")
        lines += [f"seed={self.seed}", f"trials={self.trials}"]
        if self.output is not None:
            lines.append(f"output={self.output}")
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _convert(key: str, raw: str):
    try:
        if key in _INT:
            v = int(raw, 0)
            if key == "seed" and not 0 <= v < 2**64:
                raise ValueError("seed must fit in u64")
            return v
        if key in _FLOAT:
            return float(raw)
        if key == "strict_mode":
            if raw.lower() not in ("true", "false", "1", "0"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1")
    except ValueError as e:
        raise ConfigError(f"bad value for {key!r}: {raw!r} ({e})") from None
    return raw


def parse_config(text: str) -> dict:
    """Flat ``key=value`` lines; ``#`` comments and blank lines ignored."""
    out = {}
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected key=value")
        k, v = (s.strip() for s in line.split("=", 1))
        if k not in PARAM_KEYS and k not in RUN_KEYS:
            raise ConfigError(f"unknown config key {k!r}")
        out[k] = _convert(k, v)
    return out


def build_config(values: dict) -> RunConfig:
    values = dict(values)
    preset = values.pop("preset", "custom")
    if preset != "custom" and preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}")
    base = {} if preset == "custom" else {k: getattr(PRESETS[preset], k) for k in PARAM_KEYS}
    for k in PARAM_KEYS:
        if k in values:
            base[k] = values.pop(k)
    for k in ("n", "m", "q", "sigma"):
        if k not in base:
            raise ConfigError(f"missing required parameter {k!r}")
    try:
        params = SchemeParams(**base)
    except ParameterError as e:
        raise ConfigError(str(e)) from None
    return RunConfig(params, seed=values.get("seed", 0), trials=values.get("trials", 1000),
                     preset=preset, output=values.get("output"))


def load_config(path: str | None = None, preset: str | None = None, overrides: dict | None = None) -> RunConfig:
    """File values, then ``preset`` (if the file names none), then overrides."""
    values = {}
    if path is not None:
        try:
            with open(path) as f:
                values = parse_config(f.read())
        except OSError as e:
            raise ConfigError(f"cannot read config: {e}") from None
    if preset is not None:
        values["preset"] = preset
    if "preset" not in values and not any(k in values for k in PARAM_KEYS):
        values["preset"] = "sim-tiny"
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return build_config(values)


# ------------------------------------------------------------ reports

@dataclass
class ExperimentReport:
    command: str
    config: RunConfig | None = None
    summary: dict = field(default_factory=dict)
    records: list = field(default_factory=list)  # dicts, sorted by trial index
    lemmas: list = field(default_factory=list)   # LemmaRecord
    lines: list = field(default_factory=list)    # free-form "key=value" info
    wall_clock: float | None = None

    def emit(self, fmt: str = "text", clock: bool = True) -> str:
        if fmt == "text":
            return self._text(clock)
        if fmt == "json-lines":
            return self._jsonl(clock)
        raise ConfigError(f"unknown format {fmt!r}")

    def _text(self, clock: bool) -> str:
        out = [f"command={self.command}"]
        if self.config is not None:
            out += ["config." + s for s in self.config.to_text().splitlines()]
        out += list(self.lines)
        for r in self.records:
            out.append("trial " + " ".join(f"{k}={_fmt(v)}" for k, v in r.items()))
        out += [lm.line() for lm in self.lemmas]
        out += [f"{k}={_fmt(v)}" for k, v in self.summary.items()]
        if clock and self.wall_clock is not None:
            out.append(f"wall_clock={self.wall_clock:.6f}")
        return "\n".join(out) + "\n"

    def _jsonl(self, clock: bool) -> str:
        rows = [{"type": "command", "command": self.command}]
        if self.config is not None:
            cfg = {k: getattr(self.config.params, k) for k in PARAM_KEYS}
            cfg.update(preset=self.config.preset, seed=self.config.seed, trials=self.config.trials)
            rows.append({"type": "config", **cfg})
        for ln in self.lines:
            k, _, v = ln.partition("=")
            rows.append({"type": "info", "key": k, "value": v})
        rows += [{"type": "trial", **r} for r in self.records]
        rows += [{"type": "lemma", **asdict(lm)} for lm in self.lemmas]
        if self.summary:
            rows.append({"type": "summary", **self.summary})
        if clock and self.wall_clock is not None:
            rows.append({"type": "wall_clock", "seconds": self.wall_clock})
        return "".join(json.dumps(r, sort_keys=True, allow_nan=True) + "\n" for r in rows)


def strip_wall_clock(text: str) -> str:
    """Drop the wall-clock line from either report format."""
    keep = [ln for ln in text.splitlines(True)
            if not ln.startswith("wall_clock=") and '"type": "wall_clock"' not in ln]
    return "".join(keep)


def parse_json_lines(text: str) -> list[dict]:
    return [json.loads(ln) for ln in text.splitlines() if ln.strip()]


def save_report(report: ExperimentReport, path: str | None, fmt: str = "text", clock: bool = True) -> str:
    text = report.emit(fmt, clock)
    if path:
        with open(path, "w") as f:
            f.write(text)
    return text


def binomial_summary(prefix: str, successes: int, trials: int) -> dict:
    p = successes / trials if trials else float("nan")
    se = math.sqrt(max(p * (1 - p), 0.0) / trials) if trials else float("nan")
    return {f"{prefix}_count": successes, f"{prefix}_rate": p, f"{prefix}_stderr": se}
