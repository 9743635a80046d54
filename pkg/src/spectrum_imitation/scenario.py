"""Scenario files: parsing, validation, serialization and system construction.

A scenario is sectioned ``key = value`` text; see ``docs/scenario-format.md``.
Lists are comma separated and accept fractions such as ``2/3``.
"""

from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np

from .channel import ChannelSpec, IIDIdle, MarkovIdle, UserRadioSpec, calibrate_mean_gain, dbm_to_mw
from .engine import EngineConfig, SystemModel
from .estimation import default_noise
from .graph import (TOPOLOGIES, SocialGraph, cluster_topology, effective_neighborhoods,
                    random_geometric_graph, read_edge_list)

DEFAULT_THETA = (2 / 3, 4 / 7, 5 / 9, 1 / 2, 4 / 5)
DEFAULT_RATE = (15.0, 70.0, 90.0, 40.0, 100.0)


class ScenarioError(ValueError):
    def __init__(self, message, line=None, key=None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")
        self.line, self.key = line, key


@dataclass
class Scenario:
    # [channels]
    theta: tuple = DEFAULT_THETA
    rate: tuple = DEFAULT_RATE
    model: str = "iid"
    mixing: float = 0.5
    markov_p: Optional[tuple] = None
    markov_q: Optional[tuple] = None
    bandwidth: float = 10.0
    noise_dbm: float = -100.0
    # [users]
    count: int = 150
    tx_power_mw: float = 100.0
    heterogeneous: int = 0
    het_low: float = 100.0
    het_span: float = 100.0
    rate_file: Optional[str] = None
    # [graph]
    source: str = "topology"
    topology: str = "chain"
    sizes: Optional[tuple] = None
    file: Optional[str] = None
    side: float = 250.0
    radius: Optional[float] = None
    # [engine]
    slots: int = 100
    fanout: int = 1
    delay: int = 0
    mode: str = "hom"
    periods: int = 500
    lambda_max: int = 50
    estimator: str = "mle"
    noise_fraction: float = 0.05
    reset_on_return: bool = False
    # [analysis]
    meanfield: bool = False
    window: int = 100
    threshold: float = 0.02
    epsilon: float = 0.05
    # [run]
    seed: int = 0
    base_dir: Optional[str] = field(default=None, repr=False, compare=False)

    @property
    def n_channels(self):
        return len(self.theta)

    def engine_config(self):
        return EngineConfig(slots_per_period=self.slots, enquiry_fanout=self.fanout, delay=self.delay,
                            mode=self.mode, max_periods=self.periods, lambda_max=self.lambda_max,
                            estimator=self.estimator, reset_on_return=self.reset_on_return)


def _number_list(text):
    return tuple(float(Fraction(x.strip())) for x in text.split(",") if x.strip())


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _optional(conv):
    def parse(text):
        return None if text.strip().lower() in ("", "none", "auto") else conv(text)
    return parse


def _int_list(text):
    return tuple(int(x) for x in text.split(",") if x.strip())


def _float(text):
    return float(Fraction(text.strip()))


SCHEMA = {
    "channels": {
        "theta": ("theta", _number_list),
        "rate": ("rate", _number_list),
        "model": ("model", str),
        "mixing": ("mixing", _float),
        "p": ("markov_p", _optional(_number_list)),
        "q": ("markov_q", _optional(_number_list)),
        "bandwidth": ("bandwidth", _float),
        "noise_dbm": ("noise_dbm", _float),
    },
    "users": {
        "count": ("count", int),
        "tx_power_mw": ("tx_power_mw", _float),
        "heterogeneous": ("heterogeneous", int),
        "het_low": ("het_low", _float),
        "het_span": ("het_span", _float),
        "rate_file": ("rate_file", _optional(str)),
    },
    "graph": {
        "source": ("source", str),
        "topology": ("topology", str),
        "sizes": ("sizes", _optional(_int_list)),
        "file": ("file", _optional(str)),
        "side": ("side", _float),
        "radius": ("radius", _optional(_float)),
    },
    "engine": {
        "slots": ("slots", int),
        "fanout": ("fanout", int),
        "delay": ("delay", int),
        "mode": ("mode", str),
        "periods": ("periods", int),
        "lambda_max": ("lambda_max", int),
        "estimator": ("estimator", str),
        "noise_fraction": ("noise_fraction", _float),
        "reset_on_return": ("reset_on_return", _bool),
    },
    "analysis": {
        "meanfield": ("meanfield", _bool),
        "window": ("window", int),
        "threshold": ("threshold", _float),
        "epsilon": ("epsilon", _float),
    },
    "run": {
        "seed": ("seed", int),
    },
}

_FIELD_TO_KEY = {attr: (section, key) for section, keys in SCHEMA.items() for key, (attr, _) in keys.items()}


def parse_scenario_text(text, base_dir=None, check_files=True):
    values, lines = {}, {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            if section not in SCHEMA:
                raise ScenarioError(f"unknown section [{section}]", lineno)
            continue
        if section is None:
            raise ScenarioError("key outside of any section", lineno)
        if "=" not in line:
            raise ScenarioError(f"expected 'key = value', got {line!r}", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA[section]:
            raise ScenarioError(f"unknown key {key!r} in [{section}]", lineno, key)
        attr, conv = SCHEMA[section][key]
        if attr in values:
            raise ScenarioError(f"duplicate key {key!r}", lineno, key)
        try:
            values[attr] = conv(value)
        except (ValueError, ZeroDivisionError) as exc:
            raise ScenarioError(f"bad value for {key!r}: {exc}", lineno, key) from None
        lines[attr] = lineno
    scenario = Scenario(**values, base_dir=str(base_dir) if base_dir is not None else None)
    validate(scenario, lines, check_files)
    return scenario


def parse_scenario(path, check_files=True):
    path = Path(path)
    return parse_scenario_text(path.read_text(), base_dir=path.parent, check_files=check_files)


def _fail(message, attr, lines):
    raise ScenarioError(message, lines.get(attr), _FIELD_TO_KEY.get(attr, (None, attr))[1])


def resolve_path(scenario, name):
    p = Path(name)
    if not p.is_absolute() and scenario.base_dir is not None:
        p = Path(scenario.base_dir) / p
    return p


def validate(s, lines=None, check_files=True):
    """Range and consistency checks; raises ScenarioError naming the key."""
    lines = lines or {}
    M = len(s.theta)
    if M < 1:
        _fail("theta needs at least one channel", "theta", lines)
    for t in s.theta:
        if not 0.0 < t < 1.0:
            _fail(f"theta = {t:g} outside (0, 1)", "theta", lines)
    if len(s.rate) != M:
        _fail(f"rate has {len(s.rate)} entries but theta has {M}", "rate", lines)
    if any(b <= 0 for b in s.rate):
        _fail("rate values must be positive", "rate", lines)
    if s.model not in ("iid", "markov"):
        _fail(f"model must be 'iid' or 'markov', got {s.model!r}", "model", lines)
    if not 0.0 < s.mixing <= 1.0:
        _fail(f"mixing = {s.mixing:g} outside (0, 1]", "mixing", lines)
    if (s.markov_p is None) != (s.markov_q is None):
        _fail("p and q must be given together", "markov_p" if s.markov_p is None else "markov_q", lines)
    if s.markov_p is not None:
        for attr in ("markov_p", "markov_q"):
            vals = getattr(s, attr)
            if len(vals) != M or any(not 0.0 < v <= 1.0 for v in vals):
                _fail(f"{attr[-1]} needs {M} values in (0, 1]", attr, lines)
    if s.bandwidth <= 0:
        _fail("bandwidth must be positive", "bandwidth", lines)
    if s.count < 1:
        _fail("count must be >= 1", "count", lines)
    if s.tx_power_mw <= 0:
        _fail("tx_power_mw must be positive", "tx_power_mw", lines)
    if not 0 <= s.heterogeneous <= s.count:
        _fail("heterogeneous must lie in [0, count]", "heterogeneous", lines)
    if s.het_low < 0 or s.het_span < 0 or s.het_low + s.het_span <= 0:
        _fail("het_low and het_span must be nonnegative with a positive sum", "het_low", lines)
    if s.source not in ("topology", "file", "geometric", "complete"):
        _fail(f"unknown graph source {s.source!r}", "source", lines)
    if s.source == "topology":
        if s.topology not in TOPOLOGIES:
            _fail(f"unknown topology {s.topology!r}; choose from {', '.join(TOPOLOGIES)}", "topology", lines)
        if s.sizes is None:
            _fail("topology graphs need cluster sizes", "sizes", lines)
        if any(z < 1 for z in s.sizes):
            _fail("cluster sizes must be positive", "sizes", lines)
        if sum(s.sizes) != s.count:
            _fail(f"cluster sizes sum to {sum(s.sizes)} but count = {s.count}", "sizes", lines)
    if s.source == "file":
        if s.file is None:
            _fail("graph source 'file' needs a file", "file", lines)
        if check_files and not resolve_path(s, s.file).is_file():
            _fail(f"graph file {s.file!r} not found", "file", lines)
    if s.source == "geometric":
        if s.side <= 0:
            _fail("side must be positive", "side", lines)
        if s.radius is not None and s.radius <= 0:
            _fail("radius must be positive", "radius", lines)
    if s.rate_file is not None and check_files and not resolve_path(s, s.rate_file).is_file():
        _fail(f"rate file {s.rate_file!r} not found", "rate_file", lines)
    for attr, lo in (("slots", 1), ("fanout", 1), ("delay", 0), ("periods", 1), ("lambda_max", 1), ("window", 1)):
        if getattr(s, attr) < lo:
            _fail(f"{attr} must be >= {lo}", attr, lines)
    if s.mode not in ("hom", "het"):
        _fail(f"mode must be 'hom' or 'het', got {s.mode!r}", "mode", lines)
    if s.estimator not in ("mle", "noise"):
        _fail(f"estimator must be 'mle' or 'noise', got {s.estimator!r}", "estimator", lines)
    if s.mode == "het" and s.estimator == "noise":
        _fail("the abstract-noise estimator only supports mode = hom", "estimator", lines)
    if s.mode == "het" and s.periods <= M:
        _fail(f"heterogeneous runs need more than {M} periods (scan stage)", "periods", lines)
    if s.noise_fraction <= 0:
        _fail("noise_fraction must be positive", "noise_fraction", lines)
    if not 0.0 < s.threshold:
        _fail("threshold must be positive", "threshold", lines)
    if s.epsilon < 0:
        _fail("epsilon must be nonnegative", "epsilon", lines)
    if s.meanfield and (s.heterogeneous or s.rate_file):
        _fail("mean-field dynamics need homogeneous users", "meanfield", lines)
    return s


def _format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "none"
    if isinstance(value, tuple):
        return ", ".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_scenario(scenario):
    """Text form with every key written out; parses back to an equal Scenario."""
    out = []
    for section, keys in SCHEMA.items():
        out.append(f"[{section}]")
        for key, (attr, _) in keys.items():
            out.append(f"{key} = {_format_value(getattr(scenario, attr))}")
        out.append("")
    return "\n".join(out)


def channel_specs(s):
    specs = []
    noise_mw = dbm_to_mw(s.noise_dbm)
    for m, theta in enumerate(s.theta):
        if s.model == "iid":
            model = IIDIdle(theta)
        elif s.markov_p is not None:
            model = MarkovIdle(s.markov_p[m], s.markov_q[m])
        else:
            model = MarkovIdle.from_theta(theta, s.mixing)
        gain = calibrate_mean_gain(s.rate[m], s.bandwidth, s.tx_power_mw, noise_mw)
        specs.append(ChannelSpec(m, model, s.bandwidth, noise_mw, gain))
    return specs


def rate_table(s, rng):
    """(N, M) mean rates B_m^n and the indices of heterogeneous users."""
    N, M = s.count, len(s.theta)
    if s.rate_file is not None:
        table = np.loadtxt(resolve_path(s, s.rate_file), delimiter=",", ndmin=2)
        if table.shape != (N, M):
            raise ScenarioError(f"rate file must hold a {N} x {M} table, got {table.shape}", key="rate_file")
        return table, np.arange(N)
    table = np.tile(np.asarray(s.rate, dtype=float), (N, 1))
    het = np.sort(rng.choice(N, size=s.heterogeneous, replace=False)) if s.heterogeneous else np.array([], dtype=int)
    table[het] = s.het_low + rng.uniform(0.0, s.het_span, size=(len(het), M))
    return np.maximum(table, 1e-6), het


def build_graph(s, rng):
    """Social graph plus metadata describing how it was made."""
    meta = {"graph_source": s.source}
    if s.source == "topology":
        graph = cluster_topology(s.topology, s.sizes)
        meta["topology"] = s.topology
    elif s.source == "complete":
        graph = cluster_topology("full", [s.count])
    elif s.source == "file":
        graph = read_edge_list(resolve_path(s, s.file))
        if graph.n_users != s.count:
            raise ScenarioError(f"graph file has {graph.n_users} users but count = {s.count}", key="file")
    else:
        graph, _, radius = random_geometric_graph(s.count, s.side, s.radius, rng)
        meta["radius"] = radius
        meta["radius_auto"] = s.radius is None
    return graph, meta


@dataclass
class BuiltScenario:
    scenario: Scenario
    system: SystemModel
    graph: SocialGraph
    rates: np.ndarray
    heterogeneous_users: np.ndarray
    metadata: dict


def build(s):
    """Resolve a scenario into a runnable system; setup draws use their own stream."""
    rng = np.random.default_rng([s.seed, 7919])
    channels = channel_specs(s)
    rates, het = rate_table(s, rng)
    graph, meta = build_graph(s, rng)
    noise_mw = dbm_to_mw(s.noise_dbm)
    users = [
        UserRadioSpec(n, s.tx_power_mw, tuple(
            calibrate_mean_gain(rates[n, m], s.bandwidth, s.tx_power_mw, noise_mw) for m in range(len(channels))
        ))
        for n in range(s.count)
    ]
    theta = np.array([c.theta for c in channels])
    noise = default_noise(theta * np.asarray(s.rate), s.noise_fraction)
    system = SystemModel.from_radios(channels, users, effective_neighborhoods(graph), noise)
    meta.update(n_users=s.count, n_channels=len(channels), seed=s.seed, heterogeneous_users=len(het))
    return BuiltScenario(s, system, graph, rates, het, meta)


def default_scenario(**overrides):
    """Homogeneous five-channel setup used throughout the experiments."""
    base = Scenario(sizes=(50, 50, 50))
    return replace(base, **overrides)
