"""Switching communication graphs for one leader and ``N`` followers.

Followers are numbered ``1..N`` in messages and in :func:`FollowerTopology.from_edges`;
array indices are zero-based. The leader is node 0 and only ever transmits.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

# Durations are compared against T_c and the dwell floor with this slack so
# that decimal schedule files (0.1 = 0.05 + 0.05) do not fail on rounding.
TIME_RTOL = 1e-9


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class FollowerTopology:
    """One snapshot of the leader-follower graph.

    Attributes
    ----------
    adjacency : (N, N) ndarray
        Symmetric 0/1 follower adjacency with zero diagonal.
    leader_links : (N,) ndarray
        ``leader_links[i] = 1`` when follower ``i+1`` hears the leader.
    """

    adjacency: np.ndarray
    leader_links: np.ndarray

    def __post_init__(self):
        adj = _frozen(self.adjacency)
        links = _frozen(self.leader_links).reshape(-1)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise ValidationError(f"adjacency must be square, got shape {adj.shape}")
        if adj.shape[0] < 1:
            raise ValidationError("a topology needs at least one follower")
        if links.shape[0] != adj.shape[0]:
            raise ValidationError(
                f"leader_links has length {links.shape[0]}, expected {adj.shape[0]}"
            )
        if not np.all((adj == 0) | (adj == 1)):
            raise ValidationError("adjacency entries must be exactly 0 or 1")
        if not np.all((links == 0) | (links == 1)):
            raise ValidationError("leader_links entries must be exactly 0 or 1")
        if np.any(np.diag(adj) != 0):
            raise ValidationError("adjacency must have a zero diagonal")
        if not np.array_equal(adj, adj.T):
            bad = np.argwhere(adj != adj.T)[0]
            raise ValidationError(
                "adjacency must be symmetric (undirected follower graph); "
                f"a[{bad[0] + 1},{bad[1] + 1}] != a[{bad[1] + 1},{bad[0] + 1}]"
            )
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "leader_links", links)

    def __eq__(self, other):
        if not isinstance(other, FollowerTopology):
            return NotImplemented
        return np.array_equal(self.adjacency, other.adjacency) and np.array_equal(
            self.leader_links, other.leader_links
        )

    def __hash__(self):
        return hash((self.adjacency.tobytes(), self.leader_links.tobytes()))

    @property
    def n_followers(self) -> int:
        return self.adjacency.shape[0]

    @classmethod
    def from_edges(cls, n_followers, edges=(), leaders=()):
        """Build a topology from 1-based follower edges and leader-linked followers."""
        adj = np.zeros((n_followers, n_followers))
        for i, j in edges:
            if not (1 <= i <= n_followers and 1 <= j <= n_followers) or i == j:
                raise ValidationError(f"invalid edge ({i}, {j}) for N={n_followers}")
            adj[i - 1, j - 1] = adj[j - 1, i - 1] = 1.0
        links = np.zeros(n_followers)
        for i in leaders:
            if not 1 <= i <= n_followers:
                raise ValidationError(f"invalid leader link to follower {i}")
            links[i - 1] = 1.0
        return cls(adj, links)

    def edges(self):
        """Undirected follower edges as sorted 1-based pairs."""
        iu, ju = np.nonzero(np.triu(self.adjacency, 1))
        return [(int(i) + 1, int(j) + 1) for i, j in zip(iu, ju)]

    def permuted(self, perm):
        """Relabel followers so that old follower ``perm[k]`` becomes follower ``k``."""
        perm = np.asarray(perm)
        return FollowerTopology(self.adjacency[np.ix_(perm, perm)], self.leader_links[perm])


def laplacian(topology: FollowerTopology) -> np.ndarray:
    """Laplacian of the follower subgraph: degree matrix minus adjacency."""
    adj = topology.adjacency
    return np.diag(adj.sum(axis=1)) - adj


def leader_follower_matrix(topology: FollowerTopology) -> np.ndarray:
    """``H = L + diag(leader_links)``."""
    return laplacian(topology) + np.diag(topology.leader_links)


def union_topology(topologies) -> FollowerTopology:
    """Entrywise OR of adjacencies and leader links."""
    topologies = list(topologies)
    if not topologies:
        raise ValidationError("union of an empty list of topologies is undefined")
    n = topologies[0].n_followers
    adj = np.zeros((n, n))
    links = np.zeros(n)
    for topo in topologies:
        if topo.n_followers != n:
            raise ValidationError(
                f"cannot unite topologies with N={n} and N={topo.n_followers}"
            )
        adj = np.maximum(adj, topo.adjacency)
        links = np.maximum(links, topo.leader_links)
    return FollowerTopology(adj, links)


def unreachable_followers(topology: FollowerTopology) -> list[int]:
    """1-based labels of followers with no path from the leader (BFS from node 0)."""
    adj = topology.adjacency
    seen = topology.leader_links > 0
    queue = deque(np.flatnonzero(seen))
    while queue:
        u = queue.popleft()
        for v in np.flatnonzero(adj[u]):
            if not seen[v]:
                seen[v] = True
                queue.append(v)
    return [int(i) + 1 for i in np.flatnonzero(~seen)]


def leader_reachable(topology: FollowerTopology) -> bool:
    """True iff every follower is reachable from the leader."""
    return not unreachable_followers(topology)


@dataclass(frozen=True)
class SwitchingSchedule:
    """Periodic piecewise-constant switching signal.

    ``phases`` holds ``(topology_index, duration)`` pairs for one period.
    ``window_boundaries`` are phase indices where connectivity windows start;
    the first is always 0 and the last window runs to the end of the period.
    """

    phases: tuple
    topologies: tuple
    window_boundaries: tuple = (0,)
    T_c: float = 1.0
    dwell_floor: float = 1.0

    def __post_init__(self):
        phases = tuple((int(k), float(d)) for k, d in self.phases)
        topologies = tuple(self.topologies)
        bounds = tuple(int(b) for b in self.window_boundaries)
        if not topologies:
            raise ValidationError("schedule has no topologies")
        n = topologies[0].n_followers
        if any(t.n_followers != n for t in topologies):
            raise ValidationError("all topologies in a schedule must share N")
        for j, (k, d) in enumerate(phases):
            if not 0 <= k < len(topologies):
                raise ValidationError(f"phase {j} references unknown topology {k}")
            if not d > 0:
                raise ValidationError(f"phase {j} has non-positive duration {d}")
        if not bounds or bounds[0] != 0:
            raise ValidationError("window_boundaries must start at phase index 0")
        if any(b1 <= b0 for b0, b1 in zip(bounds, bounds[1:])):
            raise ValidationError("window_boundaries must be strictly increasing")
        if phases and bounds[-1] >= len(phases):
            raise ValidationError(
                f"window boundary {bounds[-1]} is past the last phase ({len(phases) - 1})"
            )
        if not self.T_c > 0:
            raise ValidationError("T_c must be positive")
        if not self.dwell_floor > 0:
            raise ValidationError("dwell_floor must be positive")
        object.__setattr__(self, "phases", phases)
        object.__setattr__(self, "topologies", topologies)
        object.__setattr__(self, "window_boundaries", bounds)
        object.__setattr__(self, "T_c", float(self.T_c))
        object.__setattr__(self, "dwell_floor", float(self.dwell_floor))

    @property
    def n_followers(self) -> int:
        return self.topologies[0].n_followers

    @property
    def period(self) -> float:
        return sum(d for _, d in self.phases)

    def windows(self) -> list[list[int]]:
        """Phase indices of each connectivity window in one period."""
        ends = list(self.window_boundaries[1:]) + [len(self.phases)]
        return [list(range(b, e)) for b, e in zip(self.window_boundaries, ends)]

    def phase_topology(self, j: int) -> FollowerTopology:
        return self.topologies[self.phases[j][0]]

    def permuted(self, perm) -> "SwitchingSchedule":
        return SwitchingSchedule(
            self.phases,
            tuple(t.permuted(perm) for t in self.topologies),
            self.window_boundaries,
            self.T_c,
            self.dwell_floor,
        )


@dataclass
class WindowVerdict:
    index: int
    phases: list[int]
    length: float
    within_T_c: bool
    reachable: bool
    unreachable: list[int] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.within_T_c and self.reachable


@dataclass
class ScheduleReport:
    windows: list[WindowVerdict]
    dwell_ok: bool
    short_phases: list[int]
    T_c: float
    dwell_floor: float

    @property
    def valid(self) -> bool:
        return self.dwell_ok and all(w.ok for w in self.windows)

    def messages(self) -> list[str]:
        out = []
        for w in self.windows:
            if not w.within_T_c:
                out.append(
                    f"window {w.index}: window exceeds T_c ({w.length:.6g} > {self.T_c:.6g})"
                )
            if not w.reachable:
                names = ", ".join(str(i) for i in w.unreachable)
                out.append(
                    f"window {w.index}: follower(s) {names} unreachable from the leader "
                    "in the union graph"
                )
        if not self.dwell_ok:
            out.append(
                f"phases {self.short_phases} are shorter than the dwell floor "
                f"{self.dwell_floor:.6g}"
            )
        return out

    def summary(self) -> str:
        lines = []
        for w in self.windows:
            verdict = "ok" if w.ok else "FAIL"
            lines.append(
                f"window {w.index}: phases {w.phases[0]}..{w.phases[-1]}, "
                f"length {w.length:.6g} (T_c {self.T_c:.6g}), "
                f"reachable={'yes' if w.reachable else 'no'} [{verdict}]"
            )
        lines.append(
            f"dwell floor {self.dwell_floor:.6g}: {'ok' if self.dwell_ok else 'FAIL'}"
        )
        lines.extend(self.messages())
        lines.append("schedule VALID" if self.valid else "schedule INVALID")
        return "\n".join(lines)


def validate_schedule(schedule: SwitchingSchedule) -> ScheduleReport:
    """Check dwell floor, window lengths against ``T_c`` and union reachability."""
    if not schedule.phases:
        raise ValidationError("schedule has an empty phase list")
    slack = TIME_RTOL * max(1.0, schedule.T_c)
    verdicts = []
    for k, idx in enumerate(schedule.windows()):
        length = sum(schedule.phases[j][1] for j in idx)
        union = union_topology(schedule.phase_topology(j) for j in idx)
        missing = unreachable_followers(union)
        verdicts.append(
            WindowVerdict(
                index=k,
                phases=idx,
                length=length,
                within_T_c=length <= schedule.T_c + slack,
                reachable=not missing,
                unreachable=missing,
            )
        )
    floor = schedule.dwell_floor * (1.0 - TIME_RTOL)
    short = [j for j, (_, d) in enumerate(schedule.phases) if d < floor]
    return ScheduleReport(verdicts, not short, short, schedule.T_c, schedule.dwell_floor)
