"""Run configuration: flat ``key = value`` text with one section per experiment.

Example::

    experiment = basin-grid
    output = out/basin
    formats = csv,svg

    [params]
    nu = 0.00870134
    a = 0.01

    [basin-grid]
    n_u = 200
    n_v = 200
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .core_system import Params
from .errors import ConfigError

FORMATS = ("csv", "json", "svg")
PARAM_KEYS = ("eps", "nu", "a", "b", "c")

# experiment -> key -> (type, default, (lo, hi) or None)
SCHEMA: dict[str, dict[str, tuple]] = {
    "equilibrium": {},
    "hopf-scan": {
        "nu_lo": (float, 0.0, None),
        "nu_hi": (float, 0.00647, None),
    },
    "tangency-scan": {
        "nu_lo": (float, 0.00640, None),
        "nu_hi": (float, 0.00655, None),
        "width": (float, 1e-5, (1e-12, 1.0)),
        "x_anchor": (float, 0.27, None),
        "z_lo": (float, 0.0, None),
        "z_hi": (float, 0.3, None),
        "n_seeds": (int, 30, (2, 10000)),
        "offset": (float, 0.0, None),
    },
    "return-map-1d": {
        "z_lo": (float, 0.03, None),
        "z_hi": (float, 0.07, None),
        "n": (int, 401, (2, 1_000_000)),
        "levels": (int, 3, (0, 10)),
    },
    "basin-grid": {
        "u_lo": (float, -0.07, None),
        "u_hi": (float, 0.11, None),
        "v_lo": (float, -0.005, None),
        "v_hi": (float, 0.01, None),
        "n_u": (int, 100, (2, 2000)),
        "n_v": (int, 100, (2, 2000)),
        "t_max": (float, 600.0, (0.0, 1e6)),
        "count": (int, 1, (1, 10**9)),
    },
    "winding-partition": {
        "u_lo": (float, -0.07, None),
        "u_hi": (float, 0.11, None),
        "v_lo": (float, -0.005, None),
        "v_hi": (float, 0.01, None),
        "n_u": (int, 200, (2, 2000)),
        "n_v": (int, 200, (2, 2000)),
        "max_len": (int, 3, (1, 1000)),
        "sc_turns": (int, 3, (0, 1000)),
        "min_turns": (int, 10, (0, 1000)),
    },
    "saddle-and-homoclinic": {
        "seed_u": (float, -0.0534, None),
        "seed_v": (float, 0.0019, None),
        "h": (float, 2e-4, (1e-9, 1e-1)),
        "n_steps": (int, 420, (1, 100000)),
        "half_width": (float, 2e-3, (1e-9, 1.0)),
        "n_grid": (int, 30, (2, 2000)),
    },
    "saddle-node-scan": {
        "nu_lo": (float, 0.00795, None),
        "nu_hi": (float, 0.00810, None),
        "z_lo": (float, 0.040, None),
        "z_hi": (float, 0.047, None),
        "n": (int, 351, (3, 1_000_000)),
        "width": (float, 1e-6, (1e-15, 1.0)),
    },
    "orbit-diagram": {
        "nu_lo": (float, 0.008685, None),
        "nu_hi": (float, 0.0087013, None),
        "n_nu": (int, 200, (1, 100000)),
        "transient": (int, 200, (0, 10**7)),
        "keep": (int, 100, (1, 10**7)),
    },
    "critical-orbit": {
        "nu_lo": (float, 0.0087000, None),
        "nu_hi": (float, 0.0087020, None),
        "n_scan": (int, 81, (2, 100000)),
        "max_iter": (int, 100000, (1, 10**8)),
        "bins": (int, 100, (1, 100000)),
    },
}

TOP_KEYS = ("experiment", "output", "formats")


def _convert(kind, raw: str, key: str, line: int | None):
    try:
        return kind(raw)
    except ValueError:
        raise ConfigError(f"expected {kind.__name__}, got {raw!r}", line, key) from None


def _check_params(values: dict, line_of: dict) -> Params:
    eps = values.get("eps", Params.eps)
    if not 0.0 < eps <= 0.1:
        raise ConfigError(f"eps must lie in (0, 0.1], got {eps}", line_of.get("eps"), "eps")
    try:
        return Params(**values)
    except ValueError as e:
        raise ConfigError(str(e)) from None


@dataclass
class RunConfig:
    experiment: str
    params: Params = field(default_factory=Params)
    fields: dict = field(default_factory=dict)
    output_dir: str = "out"
    formats: tuple = FORMATS

    def __post_init__(self):
        if self.experiment not in SCHEMA:
            raise ConfigError(f"unknown experiment {self.experiment!r}", key="experiment")
        full = {k: d for k, (_, d, _) in SCHEMA[self.experiment].items()}
        full.update(self.fields)
        self.fields = full
        for f in self.formats:
            if f not in FORMATS:
                raise ConfigError(f"unknown format {f!r}", key="formats")

    def __getitem__(self, key):
        return self.fields[key]

    def to_text(self) -> str:
        from .io import fmt

        lines = [
            f"experiment = {self.experiment}",
            f"output = {self.output_dir}",
            f"formats = {','.join(self.formats)}",
            "",
            "[params]",
        ]
        lines += [f"{k} = {fmt(getattr(self.params, k))}" for k in PARAM_KEYS]
        if self.fields:
            lines += ["", f"[{self.experiment}]"]
            lines += [f"{k} = {fmt(v)}" for k, v in sorted(self.fields.items())]
        return "\n".join(lines) + "\n"

    def echo(self) -> dict:
        return {
            "experiment": self.experiment,
            "output": self.output_dir,
            "formats": list(self.formats),
            "params": {k: getattr(self.params, k) for k in PARAM_KEYS},
            "fields": dict(self.fields),
        }


def parse(text: str, overrides: list[str] | tuple = (), experiment: str | None = None) -> RunConfig:
    """Parse config text plus ``KEY=VALUE`` overrides.

    ``experiment`` (from the command line) is required to match the file's
    ``experiment`` key when both are present; without a file it stands in for it.
    """
    top: dict[str, tuple[str, int | None]] = {}
    sections: dict[str, dict[str, tuple[str, int | None]]] = {}
    current = None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {raw.strip()!r}", no)
            current = line[1:-1].strip()
            if current != "params" and current not in SCHEMA:
                raise ConfigError(f"unknown section [{current}]", no, current)
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", no)
        k, v = (s.strip() for s in line.split("=", 1))
        if not k:
            raise ConfigError("empty key", no)
        target = top if current is None else sections[current]
        if k in target:
            raise ConfigError("duplicate key", no, k)
        target[k] = (v, no)

    if text.strip():
        if "experiment" not in top:
            raise ConfigError("missing required key", None, "experiment")
        exp = top["experiment"][0]
        if experiment is not None and exp != experiment:
            raise ConfigError(
                f"file declares {exp!r} but the command asks for {experiment!r}", top["experiment"][1], "experiment"
            )
    else:
        if experiment is None:
            raise ConfigError("missing required key", None, "experiment")
        exp = experiment
    if exp not in SCHEMA:
        raise ConfigError(f"unknown experiment {exp!r}", top.get("experiment", (None, None))[1], "experiment")
    for k, (_, no) in top.items():
        if k not in TOP_KEYS:
            raise ConfigError("unknown key", no, k)
    for name in sections:
        if name not in ("params", exp):
            raise ConfigError(f"section [{name}] does not belong to experiment {exp!r}", None, name)

    params_raw = dict(sections.get("params", {}))
    fields_raw = dict(sections.get(exp, {}))
    top_raw = dict(top)
    for ov in overrides:
        if "=" not in ov:
            raise ConfigError(f"override must be KEY=VALUE, got {ov!r}")
        k, v = (s.strip() for s in ov.split("=", 1))
        if k.startswith("params."):
            k = k[len("params."):]
            params_raw[k] = (v, None)
        elif k in PARAM_KEYS:
            params_raw[k] = (v, None)
        elif k in ("output", "formats"):
            top_raw[k] = (v, None)
        else:
            fields_raw[k] = (v, None)

    pvals, plines = {}, {}
    for k, (v, no) in params_raw.items():
        if k not in PARAM_KEYS:
            raise ConfigError("unknown parameter", no, k)
        pvals[k] = _convert(float, v, k, no)
        plines[k] = no
    params = _check_params(pvals, plines)

    schema = SCHEMA[exp]
    fields = {}
    for k, (v, no) in fields_raw.items():
        if k not in schema:
            raise ConfigError(f"unknown key for {exp}", no, k)
        kind, _, rng = schema[k]
        val = _convert(kind, v, k, no)
        if rng is not None and not (rng[0] <= val <= rng[1]):
            raise ConfigError(f"value {val} outside [{rng[0]}, {rng[1]}]", no, k)
        fields[k] = val
    for a, b in (("n_u", "n_v"),):
        if a in schema:
            n = fields.get(a, schema[a][1]) * fields.get(b, schema[b][1])
            if n > 2000 * 2000:
                raise ConfigError("grid larger than 2000 x 2000", None, a)

    formats = FORMATS
    if "formats" in top_raw:
        formats = tuple(s.strip() for s in top_raw["formats"][0].split(",") if s.strip())
        for f in formats:
            if f not in FORMATS:
                raise ConfigError(f"unknown format {f!r}", top_raw["formats"][1], "formats")
    output = top_raw["output"][0] if "output" in top_raw else "out"
    return RunConfig(exp, params, fields, output, formats)


def load(path, overrides=(), experiment: str | None = None) -> RunConfig:
    return parse(Path(path).read_text(encoding="utf-8"), overrides, experiment)
