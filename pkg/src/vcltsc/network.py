"""Road network topology, stochastic demand and random-walk vehicle routes."""

from __future__ import annotations

import configparser
import csv
import enum
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DeadEnd, ParseError, TopologyError

APPROACHES = ("N", "E", "S", "W")

# Four arms of two unsignalized nodes each around signalized node 9.
DEFAULT_NETWORK = """\
[network]
edge_length_m = 500
; neighbour of the signalized node on each compass arm
arms = N:6, E:8, S:10, W:12

[node 1]
kind = source_sink
neighbors = 5

[node 2]
kind = source_sink
neighbors = 7

[node 3]
kind = source_sink
neighbors = 11

[node 4]
kind = source_sink
neighbors = 13

[node 5]
kind = unsignalized
neighbors = 1, 6

[node 6]
kind = unsignalized
neighbors = 5, 9

[node 7]
kind = unsignalized
neighbors = 2, 8

[node 8]
kind = unsignalized
neighbors = 7, 9

[node 9]
kind = signalized
neighbors = 6, 8, 10, 12

[node 10]
kind = unsignalized
neighbors = 9, 11

[node 11]
kind = unsignalized
neighbors = 10, 3

[node 12]
kind = unsignalized
neighbors = 9, 13

[node 13]
kind = unsignalized
neighbors = 12, 4
"""


class NodeKind(enum.Enum):
    SOURCE_SINK = "source_sink"
    UNSIGNALIZED = "unsignalized"
    SIGNALIZED = "signalized"


@dataclass(frozen=True)
class RoadNode:
    id: int
    kind: NodeKind
    neighbors: tuple[int, ...]


@dataclass
class Network:
    nodes: dict[int, RoadNode]
    edge_length_m: float = 500.0
    arms: dict[str, int] = field(default_factory=dict)
    strict: bool = field(default=True, repr=False)

    def __post_init__(self):
        # strict=False skips the single-intersection checks (toy graphs for route tests)
        if self.strict:
            self.validate()

    @property
    def signalized(self) -> int:
        return next(i for i, n in self.nodes.items() if n.kind is NodeKind.SIGNALIZED)

    @property
    def sources(self) -> list[int]:
        return sorted(i for i, n in self.nodes.items() if n.kind is NodeKind.SOURCE_SINK)

    def neighbors(self, node: int) -> tuple[int, ...]:
        return self.nodes[node].neighbors

    def validate(self) -> None:
        if self.edge_length_m <= 0:
            raise TopologyError("edge_length_m must be positive")
        for n in self.nodes.values():
            for m in n.neighbors:
                if m not in self.nodes:
                    raise TopologyError(f"node {n.id} lists unknown neighbour {m}")
                if n.id not in self.nodes[m].neighbors:
                    raise TopologyError(f"adjacency is not symmetric: {n.id}->{m} has no reverse edge")
            if n.id in n.neighbors:
                raise TopologyError(f"node {n.id} is its own neighbour")
            if n.kind is NodeKind.SOURCE_SINK and len(n.neighbors) != 1:
                raise TopologyError(f"source/sink node {n.id} must have exactly one neighbour")
        sig = [n for n in self.nodes.values() if n.kind is NodeKind.SIGNALIZED]
        if len(sig) != 1:
            raise TopologyError(f"expected exactly one signalized node, found {len(sig)}")
        if len(sig[0].neighbors) != 4:
            raise TopologyError(f"signalized node {sig[0].id} must have four neighbours")
        seen, todo = set(), [next(iter(self.nodes))]
        while todo:
            k = todo.pop()
            if k not in seen:
                seen.add(k)
                todo.extend(self.nodes[k].neighbors)
        if seen != set(self.nodes):
            raise TopologyError(f"graph is not connected; unreachable: {sorted(set(self.nodes) - seen)}")
        if not self.arms:
            self.arms = dict(zip(APPROACHES, sig[0].neighbors))
        if sorted(self.arms) != sorted(APPROACHES) or sorted(self.arms.values()) != sorted(sig[0].neighbors):
            raise TopologyError(f"arms {self.arms} must map N/E/S/W onto the signalized node's neighbours")

    def arm_path(self, approach: str) -> list[int]:
        """Nodes from the signalized node outwards along an arm, ending at a source/sink."""
        sig = self.signalized
        path = [sig, self.arms[approach]]
        while self.nodes[path[-1]].kind is not NodeKind.SOURCE_SINK:
            nxt = [m for m in self.neighbors(path[-1]) if m != path[-2]]
            if len(nxt) != 1:
                raise TopologyError(f"arm {approach} branches at node {path[-1]}; the simulator needs simple arms")
            path.append(nxt[0])
        return path

    def arm_length_m(self, approach: str) -> float:
        return (len(self.arm_path(approach)) - 1) * self.edge_length_m

    def approach_of(self, node: int) -> str:
        for k, v in self.arms.items():
            if v == node:
                return k
        raise KeyError(node)


def load_network(document: str | Path | None = None) -> Network:
    """Parse a network document (INI-style text or a path to one).

    ``None`` loads the built-in four-arm default.
    """
    if document is None:
        text = DEFAULT_NETWORK
    elif isinstance(document, Path) or ("\n" not in str(document) and Path(document).exists()):
        text = Path(document).read_text(encoding="utf-8")
    else:
        text = str(document)
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
        edge = cp.getfloat("network", "edge_length_m", fallback=500.0)
        arms = {}
        raw_arms = cp.get("network", "arms", fallback="").strip()
        if raw_arms:
            for part in raw_arms.split(","):
                k, v = part.split(":")
                arms[k.strip().upper()] = int(v)
        nodes = {}
        for sect in cp.sections():
            if not sect.startswith("node "):
                continue
            nid = int(sect.split()[1])
            kind = NodeKind(cp.get(sect, "kind").strip().lower())
            nb = tuple(int(x) for x in cp.get(sect, "neighbors").replace(",", " ").split())
            nodes[nid] = RoadNode(nid, kind, nb)
    except (configparser.Error, ValueError, KeyError, IndexError) as exc:
        raise ParseError(f"malformed network document: {exc}") from exc
    if not nodes:
        raise ParseError("network document defines no nodes")
    return Network(nodes, edge, arms)


# ---------------------------------------------------------------- demand

@dataclass(frozen=True)
class DemandSpec:
    flow_multiplier_range: tuple[int, int] = (3, 6)
    unit_flow: float = 400.0
    per_source_jitter: tuple[float, float] = (0.8, 1.2)
    horizon_s: float = 3600.0

    def check(self) -> None:
        lo, hi = self.flow_multiplier_range
        if not (0 < lo <= hi):
            raise ValueError(f"bad multiplier range {self.flow_multiplier_range}")
        jl, jh = self.per_source_jitter
        if not (0 < jl <= 1.0 <= jh):
            raise ValueError(f"jitter {self.per_source_jitter} must bracket 1.0")
        if self.unit_flow < 0 or self.horizon_s <= 0:
            raise ValueError("unit_flow must be >= 0 and horizon_s > 0")

    @classmethod
    def fixed_flow(cls, veh_per_h: float, horizon_s: float = 3600.0) -> "DemandSpec":
        """Exactly ``veh_per_h`` summed over the sources, split evenly."""
        return cls((1, 1), float(veh_per_h), (1.0, 1.0), horizon_s)


@dataclass(frozen=True)
class Demand:
    multiplier: int
    total_veh_per_h: float
    counts: dict[int, int]


def generate_demand(rng: np.random.Generator, spec: DemandSpec, sources=(1, 2, 3, 4)) -> Demand:
    spec.check()
    lo, hi = spec.flow_multiplier_range
    k = int(rng.integers(lo, hi + 1))
    total = k * spec.unit_flow
    mean = total / len(sources)
    scale = spec.horizon_s / 3600.0
    counts = {}
    for s in sources:
        jitter = rng.uniform(*spec.per_source_jitter) if spec.per_source_jitter[0] < spec.per_source_jitter[1] \
            else spec.per_source_jitter[0]
        counts[s] = int(math.floor(jitter * mean * scale + 0.5))
    return Demand(k, total, counts)


# ---------------------------------------------------------------- routes

@dataclass(frozen=True)
class Route:
    node_sequence: tuple[int, ...]
    depart_time_s: float
    id: int = -1

    @property
    def origin(self) -> int:
        return self.node_sequence[0]


def generate_trajectory(rng: np.random.Generator, network: Network, origin: int,
                        max_retries: int = 100) -> Route:
    """Random walk from ``origin`` to any source/sink, never stepping straight back."""
    if network.nodes[origin].kind is not NodeKind.SOURCE_SINK:
        raise ValueError(f"origin {origin} is not a source/sink node")
    max_len = 4 * len(network.nodes) + 2
    for _ in range(max_retries):
        path = [origin]
        prev = None
        while network.nodes[path[-1]].kind is not NodeKind.SOURCE_SINK or len(path) < 2:
            cand = [m for m in network.neighbors(path[-1]) if m != prev]
            if not cand or len(path) > max_len:
                break
            path.append(cand[int(rng.integers(len(cand)))])
            prev = path[-2]
        else:
            return Route(tuple(path), 0.0)
    raise DeadEnd(f"no complete route from node {origin} after {max_retries} attempts")


def generate_trajectories(rng: np.random.Generator, network: Network, counts: dict[int, int],
                          horizon_s: float) -> list[Route]:
    routes = []
    for src in sorted(counts):
        n = counts[src]
        departs = np.sort(rng.uniform(0.0, horizon_s, size=n))
        for t in departs:
            r = generate_trajectory(rng, network, src)
            routes.append((float(t), src, r.node_sequence))
    routes.sort(key=lambda x: (x[0], x[1]))
    return [Route(seq, t, i) for i, (t, _, seq) in enumerate(routes)]


def write_routes(routes: list[Route], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "depart_time_s", "nodes"])
        for r in routes:
            w.writerow([r.id, repr(r.depart_time_s), ",".join(map(str, r.node_sequence))])


def read_routes(path: str | Path) -> list[Route]:
    with open(path, newline="", encoding="utf-8") as fh:
        text = fh.read()
    try:
        rows = list(csv.DictReader(io.StringIO(text)))
        return [Route(tuple(int(x) for x in row["nodes"].split(",")), float(row["depart_time_s"]), int(row["id"]))
                for row in rows]
    except (KeyError, ValueError) as exc:
        raise ParseError(f"malformed route file {path}: {exc}") from exc
