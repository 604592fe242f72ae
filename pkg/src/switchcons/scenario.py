"""JSON scenario files.

Layout::

    {
      "name": "...",
      "plant": {"n": 3, "m": 1, "q": 1, "A": [[...]], "B": [[...]], "C": [[...]]},
      "n_followers": 8,
      "topologies": [{"adjacency": [[...]], "leader_links": [...]}],
      "schedule": {"phases": [{"topology": 0, "duration": 0.05}],
                   "window_boundaries": [0], "T_c": 0.1, "dwell_floor": 0.05},
      "design": {"alpha": 3, "t_star": 5, "mu": "auto", "mode": "both",
                 "aggressive": false},
      "sim": {"horizon": 15, "sample_step": 0.001, "seed": 7,
              "initial": "random_unit_cube"}
    }

``sim.initial`` may instead be an object with ``leader``, ``followers`` and
(optionally) ``observers`` arrays. Random initial states are drawn from the
unit cube in the order leader, followers, observers.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ScenarioError, SwitchconsError
from .netgraph import FollowerTopology, SwitchingSchedule
from .spectral import lambda_H, min_nonzero_eigenvalue
from .switchsim import Scenario
from .synthesis import GainDesign, PlantModel, design_gains

DESIGN_MODES = ("consensus", "observer", "both")


@dataclass(frozen=True, eq=False)
class ScenarioFile:
    """Parsed scenario document."""

    name: str
    plant: PlantModel
    schedule: SwitchingSchedule
    alpha: float
    t_star: float
    mu: float
    mode: str
    aggressive: bool
    eig_floor: Optional[float]
    horizon: float
    sample_step: float
    seed: Optional[int]
    initial_leader: np.ndarray
    initial_followers: np.ndarray
    initial_observers: np.ndarray
    source: Optional[str] = None

    @property
    def n_followers(self) -> int:
        return self.schedule.n_followers

    @property
    def sim_modes(self) -> tuple:
        return ("consensus", "observer") if self.mode == "both" else (self.mode,)

    def design(self) -> GainDesign:
        return design_gains(
            self.plant,
            self.alpha,
            self.t_star,
            self.mu,
            mode=self.mode,
            n_followers=None if self.aggressive else self.n_followers,
            eig_floor=self.eig_floor if self.aggressive else None,
        )

    def scenario(self, design: GainDesign, mode: str, horizon=None, sample_step=None) -> Scenario:
        agents = self.initial_followers if mode == "consensus" else self.initial_observers
        return Scenario(
            self.plant,
            self.schedule,
            design,
            self.initial_leader,
            agents,
            self.horizon if horizon is None else horizon,
            self.sample_step if sample_step is None else sample_step,
            mode,
        )


class _Locator:
    """Maps a JSON key to the first line where it appears, for diagnostics."""

    def __init__(self, text):
        self.text = text

    def line(self, key):
        m = re.search(r'"%s"\s*:' % re.escape(key), self.text)
        return self.text.count("\n", 0, m.start()) + 1 if m else None

    def error(self, message, field, key=None):
        return ScenarioError(message, field=field, line=self.line(key or field.split(".")[-1].split("[")[0]))


def _get(obj, key, path, loc, kind=None, default=...):
    if not isinstance(obj, dict):
        raise loc.error(f"expected an object at '{path}'", path)
    if key not in obj:
        if default is not ...:
            return default
        raise ScenarioError(f"missing required field '{key}'", field=f"{path}.{key}" if path else key)
    value = obj[key]
    full = f"{path}.{key}" if path else key
    if kind == "number":
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise loc.error(f"expected a finite number, got {value!r}", full, key)
    elif kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise loc.error(f"expected an integer, got {value!r}", full, key)
    return value


def _matrix(value, rows, cols, field, loc, key):
    try:
        M = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise loc.error("matrix entries must be numbers in nested arrays", field, key) from None
    if M.ndim == 1 and rows == 1:
        M = M.reshape(1, -1)
    if M.shape != (rows, cols):
        raise loc.error(f"expected a {rows}x{cols} matrix, got shape {M.shape}", field, key)
    if not np.all(np.isfinite(M)):
        raise loc.error("matrix has non-finite entries", field, key)
    return M


def parse_scenario(text: str, source: Optional[str] = None) -> ScenarioFile:
    """Parse and validate a scenario document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON: {exc.msg} (column {exc.colno})", line=exc.lineno) from None
    loc = _Locator(text)
    if not isinstance(doc, dict):
        raise ScenarioError("top level must be a JSON object", line=1)

    plant_doc = _get(doc, "plant", "", loc)
    n = _get(plant_doc, "n", "plant", loc, "int")
    m = _get(plant_doc, "m", "plant", loc, "int")
    if n < 1 or m < 1:
        raise loc.error("dimensions n and m must be positive", "plant.n", "n")
    A = _matrix(_get(plant_doc, "A", "plant", loc), n, n, "plant.A", loc, "A")
    B = _matrix(_get(plant_doc, "B", "plant", loc), n, m, "plant.B", loc, "B")
    C = None
    if plant_doc.get("C") is not None:
        q = _get(plant_doc, "q", "plant", loc, "int")
        C = _matrix(plant_doc["C"], q, n, "plant.C", loc, "C")
    plant = PlantModel(A, B, C)

    N = _get(doc, "n_followers", "", loc, "int")
    if N < 1:
        raise loc.error("n_followers must be positive", "n_followers")
    topo_docs = _get(doc, "topologies", "", loc)
    if not isinstance(topo_docs, list) or not topo_docs:
        raise loc.error("expected a nonempty list of topologies", "topologies")
    topologies = []
    for i, t in enumerate(topo_docs):
        path = f"topologies[{i}]"
        adj = _matrix(_get(t, "adjacency", path, loc), N, N, f"{path}.adjacency", loc, "adjacency")
        links = _matrix(
            _get(t, "leader_links", path, loc), 1, N, f"{path}.leader_links", loc, "leader_links"
        )
        try:
            topologies.append(FollowerTopology(adj, links.reshape(-1)))
        except SwitchconsError as exc:
            raise loc.error(str(exc), path, "adjacency") from None

    sched_doc = _get(doc, "schedule", "", loc)
    phase_docs = _get(sched_doc, "phases", "schedule", loc)
    if not isinstance(phase_docs, list) or not phase_docs:
        raise loc.error("expected a nonempty list of phases", "schedule.phases", "phases")
    phases = []
    for j, p in enumerate(phase_docs):
        path = f"schedule.phases[{j}]"
        k = _get(p, "topology", path, loc, "int")
        if not 0 <= k < len(topologies):
            raise loc.error(
                f"phase {j} references topology {k}, but only {len(topologies)} are defined",
                f"{path}.topology",
                "topology",
            )
        phases.append((k, _get(p, "duration", path, loc, "number")))
    bounds = _get(sched_doc, "window_boundaries", "schedule", loc, default=[0])
    try:
        schedule = SwitchingSchedule(
            phases,
            topologies,
            tuple(bounds),
            _get(sched_doc, "T_c", "schedule", loc, "number"),
            _get(sched_doc, "dwell_floor", "schedule", loc, "number"),
        )
    except SwitchconsError as exc:
        raise loc.error(str(exc), "schedule") from None

    design_doc = _get(doc, "design", "", loc)
    alpha = _get(design_doc, "alpha", "design", loc, "number")
    t_star = _get(design_doc, "t_star", "design", loc, "number")
    mode = _get(design_doc, "mode", "design", loc, default="consensus")
    if mode not in DESIGN_MODES:
        raise loc.error(f"mode must be one of {DESIGN_MODES}, got {mode!r}", "design.mode", "mode")
    if mode != "consensus" and C is None:
        raise loc.error(f"mode '{mode}' needs the output matrix plant.C", "design.mode", "mode")
    aggressive = bool(_get(design_doc, "aggressive", "design", loc, default=False))
    eig_floor = min_nonzero_eigenvalue(schedule) if aggressive else None
    mu_raw = _get(design_doc, "mu", "design", loc, default="auto")
    if mu_raw == "auto":
        mu = 1.0 / eig_floor if aggressive else 1.0 / lambda_H(N)
    else:
        mu = _get(design_doc, "mu", "design", loc, "number")

    sim_doc = _get(doc, "sim", "", loc)
    horizon = _get(sim_doc, "horizon", "sim", loc, "number")
    sample_step = _get(sim_doc, "sample_step", "sim", loc, "number")
    if not horizon > 0 or not sample_step > 0:
        raise loc.error("horizon and sample_step must be positive", "sim")
    initial = _get(sim_doc, "initial", "sim", loc, default="random_unit_cube")
    seed = sim_doc.get("seed")
    if initial == "random_unit_cube":
        seed = _get(sim_doc, "seed", "sim", loc, "int")
        rng = np.random.default_rng(seed)
        x0 = rng.random(n)
        xf = rng.random((N, n))
        eta = rng.random((N, n))
    elif isinstance(initial, dict):
        x0 = _matrix(_get(initial, "leader", "sim.initial", loc), 1, n, "sim.initial.leader", loc, "leader")[0]
        xf = _matrix(
            _get(initial, "followers", "sim.initial", loc), N, n, "sim.initial.followers", loc, "followers"
        )
        eta_doc = initial.get("observers")
        eta = (
            xf.copy()
            if eta_doc is None
            else _matrix(eta_doc, N, n, "sim.initial.observers", loc, "observers")
        )
    else:
        raise loc.error(
            "initial must be 'random_unit_cube' or an object with leader/followers",
            "sim.initial",
            "initial",
        )

    return ScenarioFile(
        name=str(doc.get("name", source or "scenario")),
        plant=plant,
        schedule=schedule,
        alpha=float(alpha),
        t_star=float(t_star),
        mu=float(mu),
        mode=mode,
        aggressive=aggressive,
        eig_floor=eig_floor,
        horizon=float(horizon),
        sample_step=float(sample_step),
        seed=seed,
        initial_leader=x0,
        initial_followers=xf,
        initial_observers=eta,
        source=source,
    )


def load_scenario(path) -> ScenarioFile:
    path = Path(path)
    return parse_scenario(path.read_text(), source=str(path))


def bundled_path(name: str) -> Path:
    """Path of a scenario shipped with the package (``name`` without ``.json``)."""
    return Path(__file__).parent / "data" / f"{name}.json"


def bundled_names() -> list[str]:
    return sorted(p.stem for p in (Path(__file__).parent / "data").glob("*.json"))
