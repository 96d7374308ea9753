"""Scenario configuration files (TOML) for the command-line harness.

Example::

    [problem]
    n = 1
    gamma = [0.25]
    initial = [{ id = "gaussian", a = 1.0 }]
    source = { id = "constant" }        # optional

    [quadrature]
    rtol = 1e-11

    [verification]
    x = [0.3, 0.9, 1.6, 2.4]
    t = [0.1, 0.5, 1.0]
    fd = { L = 8.0, N = 2048, dt = 1e-4, T = 0.5 }
    tolerances = { "kernel.mass" = 1e-10 }

    [output]
    dir = "out"
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field as dc_field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .bessel_diffop import GammaVec, ProblemSpec
from .fields import FIELD_CATALOG, SOURCE_CATALOG, make_field, make_source
from .numerics import QuadSpec

__all__ = ["ConfigError", "ScenarioConfig", "load_config", "parse_config", "DEFAULT_CONFIG"]

DEFAULT_CONFIG = """\
[problem]
n = 1
gamma = [0.25]
initial = [{ id = "gaussian", a = 1.0 }]

[quadrature]
rtol = 1e-11

[verification]
x = [0.3, 0.9, 1.6, 2.4]
t = [0.1, 0.5, 1.0]
"""

_DEFAULT_FD = {"L": 8.0, "N": 2048, "dt": 1e-4, "T": 0.5}
_DEFAULT_KERNEL = {"gamma": [-0.4, 0.0, 0.25], "x": [0.0, 0.5, 1.0, 2.0], "s": [0.25, 0.5, 1.0, 1.5, 2.0, 3.0], "t": [0.1, 1.0]}


class ConfigError(ValueError):
    """Invalid scenario file; ``line`` points at the offending table or key."""

    def __init__(self, message: str, source: str = "<config>", line: int | None = None):
        self.line = line
        self.source = source
        where = f"{source}:{line}" if line else source
        super().__init__(f"{where}: {message}")


def _find_line(text: str, table: str, key: str | None = None) -> int | None:
    lines = text.splitlines()
    header = re.compile(r"^\s*\[\s*" + re.escape(table) + r"\s*\]")
    start = next((i for i, ln in enumerate(lines) if header.match(ln)), None)
    if start is None:
        return None
    if key is None:
        return start + 1
    pat = re.compile(r"^\s*" + re.escape(key) + r"\s*=")
    for i in range(start + 1, len(lines)):
        if lines[i].lstrip().startswith("["):
            break
        if pat.match(lines[i]):
            return i + 1
    return start + 1


@dataclass(frozen=True)
class ScenarioConfig:
    """Parsed, validated scenario; ``raw`` keeps the normalized tree."""

    raw: dict
    source: str = "<config>"
    text: str = dc_field(default="", repr=False, compare=False)

    @property
    def config_hash(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    @property
    def n(self) -> int:
        return self.raw["problem"]["n"]

    @property
    def gamma(self) -> tuple[float, ...]:
        return tuple(self.raw["problem"]["gamma"])

    @property
    def quadrature(self) -> QuadSpec:
        q = self.raw["quadrature"]
        return QuadSpec(kind="gaussian_tail", rtol=q["rtol"], max_level=q["max_level"], trunc_c=q["trunc_c"], margin=q["margin"])

    @property
    def verification(self) -> dict:
        return self.raw["verification"]

    @property
    def kernel_table(self) -> dict:
        return self.raw["kernel"]

    @property
    def output(self) -> dict:
        return self.raw["output"]

    def build_problem(self) -> ProblemSpec:
        p = self.raw["problem"]
        n = p["n"]
        try:
            gamma = GammaVec(tuple(p["gamma"]))
            phis = tuple(make_field({**spec, "n": n}) for spec in p["initial"])
            src = make_source({**p["source"], "n": n}) if p.get("source") else None
            return ProblemSpec(gamma, phis, src)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(str(exc), self.source, _find_line(self.text, "problem")) from exc


def _positive(value, what, text, source, table, key):
    try:
        ok = float(value) > 0
    except (TypeError, ValueError):
        ok = False
    if not ok:
        raise ConfigError(f"{what} must be a positive number, got {value!r}", source, _find_line(text, table, key))


def parse_config(text: str, source: str = "<config>") -> ScenarioConfig:
    """Parse and validate TOML ``text``; raises :class:`ConfigError`."""
    try:
        tree = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"TOML syntax error: {exc}", source, int(m.group(1)) if m else None) from exc

    prob = tree.get("problem")
    if not isinstance(prob, dict):
        raise ConfigError("missing [problem] table", source, 1)
    pl = _find_line(text, "problem")
    if "gamma" not in prob:
        raise ConfigError("[problem] is missing required key 'gamma'", source, pl)
    gamma = prob["gamma"]
    gamma = [gamma] if isinstance(gamma, (int, float)) else gamma
    if not isinstance(gamma, list) or not gamma or not all(isinstance(g, (int, float)) for g in gamma):
        raise ConfigError("'gamma' must be a number or a non-empty list of numbers", source, _find_line(text, "problem", "gamma"))
    n = int(prob.get("n", len(gamma)))
    if len(gamma) != n:
        raise ConfigError(f"'gamma' has {len(gamma)} entries but n = {n}", source, _find_line(text, "problem", "gamma"))
    if not 1 <= n <= 3:
        raise ConfigError(f"n must be 1, 2 or 3, got {n}", source, _find_line(text, "problem", "n"))
    if any(abs(g) >= 0.5 for g in gamma):
        raise ConfigError(f"every gamma must satisfy |gamma| < 1/2, got {gamma}", source, _find_line(text, "problem", "gamma"))
    initial = prob.get("initial")
    if initial is None:
        raise ConfigError("[problem] is missing required key 'initial'", source, pl)
    initial = [initial] if isinstance(initial, (str, dict)) else initial
    initial = [{"id": s} if isinstance(s, str) else dict(s) for s in initial]
    m = int(prob.get("m", len(initial)))
    if len(initial) != m or not 1 <= m <= 3:
        raise ConfigError(f"need m = len(initial) in 1..3, got m = {m} with {len(initial)} initial fields", source, _find_line(text, "problem", "initial"))
    for spec in initial:
        if spec.get("id") not in FIELD_CATALOG:
            raise ConfigError(f"unknown field id {spec.get('id')!r}; known: {sorted(FIELD_CATALOG)}", source, _find_line(text, "problem", "initial"))
    src = prob.get("source")
    if src is not None:
        src = {"id": src} if isinstance(src, str) else dict(src)
        if src.get("id") not in SOURCE_CATALOG:
            raise ConfigError(f"unknown source id {src.get('id')!r}; known: {sorted(SOURCE_CATALOG)}", source, _find_line(text, "problem", "source"))

    quad = {"rtol": 1e-11, "max_level": 6, "trunc_c": 1.2, "margin": 10.0, **tree.get("quadrature", {})}
    for key in ("rtol", "trunc_c", "margin", "max_level"):
        _positive(quad[key], f"quadrature.{key}", text, source, "quadrature", key)

    ver = dict(tree.get("verification", {}))
    ver.setdefault("x", [0.3, 0.9, 1.6, 2.4])
    ver.setdefault("t", [0.1, 0.5, 1.0])
    ver.setdefault("h_x", 1e-2)
    ver.setdefault("h_t", 1e-3)
    ver.setdefault("init_times", [1e-2, 1e-3, 1e-4])
    ver.setdefault("random_probes", 0)
    ver["fd"] = {**_DEFAULT_FD, **ver.get("fd", {})}
    ver["tolerances"] = dict(ver.get("tolerances", {}))
    for key in ("h_x", "h_t"):
        _positive(ver[key], f"verification.{key}", text, source, "verification", key)
    for key in ("L", "dt", "T"):
        _positive(ver["fd"][key], f"verification.fd.{key}", text, source, "verification", "fd")
    for name, tol in ver["tolerances"].items():
        _positive(tol, f"tolerance for {name}", text, source, "verification", "tolerances")
    if any(v < 0 for v in ver["x"]) or any(v <= 0 for v in ver["t"]):
        raise ConfigError("probe x must be >= 0 and t > 0", source, _find_line(text, "verification"))

    kern = {**_DEFAULT_KERNEL, **tree.get("kernel", {})}
    out = {"dir": None, **tree.get("output", {})}
    raw = {
        "problem": {"n": n, "m": m, "gamma": [float(g) for g in gamma], "initial": initial, "source": src},
        "quadrature": quad,
        "verification": ver,
        "kernel": kern,
        "output": out,
    }
    return ScenarioConfig(raw, source, text)


def load_config(path: str | Path | None) -> ScenarioConfig:
    """Read a scenario file; ``None`` gives the built-in default scenario."""
    if path is None:
        return parse_config(DEFAULT_CONFIG, "<default>")
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(p)) from exc
    return parse_config(text, str(p))
