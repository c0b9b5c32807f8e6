"""Truncated-octahedron tensegrity cell and lattice construction.

The canonical cell nodes are the 24 permutations of (0, +-1, +-2), scaled
by l/4 so that opposite square faces sit a distance l apart.  A lattice is
grown by mirror-reflecting cells about their shared square faces, merging
the coincident nodes and deduplicating the shared face cables.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

TOPOLOGY_SCHEMA_VERSION = "1.0"


class ConfigurationError(ValueError):
    """Invalid connectivity table or topology file."""


class GeometryError(ValueError):
    """Assembly produced inconsistent geometry (bad merges, broken faces)."""


class MemberKind(Enum):
    BAR = "bar"
    EDGE_CABLE = "edge_cable"
    ATTACHMENT_CABLE = "attachment_cable"
    ACTUATOR_CABLE = "actuator_cable"


@dataclass(frozen=True)
class Member:
    kind: MemberKind
    i: int
    j: int
    natural_length: float

    def __post_init__(self):
        if self.i == self.j:
            raise ConfigurationError(f"member endpoints coincide: {self.i}")
        if not self.natural_length > 0.0:
            raise ConfigurationError(
                f"member natural length must be positive, got {self.natural_length}")


# Canonical (unscaled) node coordinates: permutations of (0, +-1, +-2).
CANONICAL_NODES: tuple[tuple[int, int, int], ...] = tuple(sorted(set(
    tuple(s * v for s, v in zip(signs, perm))
    for perm in itertools.permutations((0, 1, 2))
    for signs in itertools.product((1, -1), repeat=3)
)))

# Built-in 12-bar connectivity, in canonical coordinates.  Three length
# classes: four bars spanning the +x/+y faces, their point reflections on
# the -x/-y faces, and four twisted bars between the +z and -z faces.  The
# set is a perfect matching on the 24 nodes and is closed under the
# coordinate swap (x, y, z) -> (y, x, z), which makes a 2x2 assembly
# invariant under a quarter-turn about its central vertical axis.
DEFAULT_BAR_TABLE: tuple[tuple[tuple[int, int, int], tuple[int, int, int]], ...] = (
    ((2, 1, 0), (-1, 2, 0)),
    ((2, -1, 0), (1, 2, 0)),
    ((2, 0, 1), (0, 2, 1)),
    ((2, 0, -1), (0, 2, -1)),
    ((-2, -1, 0), (1, -2, 0)),
    ((-2, 1, 0), (-1, -2, 0)),
    ((-2, 0, 1), (0, -2, 1)),
    ((-2, 0, -1), (0, -2, -1)),
    ((1, 0, 2), (0, 1, -2)),
    ((0, 1, 2), (1, 0, -2)),
    ((-1, 0, 2), (0, -1, -2)),
    ((0, -1, 2), (-1, 0, -2)),
)

_EDGE_LENGTH_SQ = 2  # squared polyhedron edge length in canonical coords
_AXES = np.eye(3)


@dataclass(frozen=True)
class FacePlane:
    """Oriented square-face plane, point `origin` with outward `normal`."""
    normal: np.ndarray
    origin: np.ndarray

    def mirror(self, points: np.ndarray) -> np.ndarray:
        d = (points - self.origin) @ self.normal
        return points - 2.0 * np.outer(d, self.normal)


@dataclass(frozen=True)
class CellTopology:
    """One truncated-octahedron cell.

    `nodes` holds the 24 structural nodes followed by the two actuator end
    anchors (top then bottom); members reference indices into that array.
    """
    nodes: np.ndarray              # (26, 3)
    structural_count: int          # 24
    members: tuple[Member, ...]
    top_face: tuple[int, ...]
    bottom_face: tuple[int, ...]
    face_planes: tuple[FacePlane, ...]
    l: float

    def member_counts(self) -> dict[MemberKind, int]:
        counts = {kind: 0 for kind in MemberKind}
        for m in self.members:
            counts[m.kind] += 1
        return counts


def _members_of_kind(members, kind):
    return [m for m in members if m.kind is kind]


def _validate_bar_table(table) -> None:
    nodes = set(CANONICAL_NODES)
    seen: set = set()
    for a, b in table:
        for p in (a, b):
            if tuple(p) not in nodes:
                raise ConfigurationError(f"bar endpoint {p} is not a cell node")
            if tuple(p) in seen:
                raise ConfigurationError(
                    f"bar table is not a perfect matching: node {p} reused")
            seen.add(tuple(p))
    if len(table) != 12 or len(seen) != 24:
        raise ConfigurationError(
            f"bar table must contain 12 bars covering all 24 nodes, "
            f"got {len(table)} bars on {len(seen)} nodes")


def build_unit_cell(l: float, bar_table=None) -> CellTopology:
    """Build the canonical unit cell with opposed square faces l apart."""
    if not l > 0.0:
        raise ValueError(f"l must be positive, got {l}")
    table = DEFAULT_BAR_TABLE if bar_table is None else tuple(
        (tuple(a), tuple(b)) for a, b in bar_table)
    _validate_bar_table(table)

    scale = l / 4.0
    structural = np.array(CANONICAL_NODES, dtype=float) * scale
    index = {p: k for k, p in enumerate(CANONICAL_NODES)}

    top_face = tuple(k for k, p in enumerate(CANONICAL_NODES) if p[2] == 2)
    bottom_face = tuple(k for k, p in enumerate(CANONICAL_NODES) if p[2] == -2)
    anchor_top = np.array([0.0, 0.0, 2.0 * scale])
    anchor_bottom = np.array([0.0, 0.0, -2.0 * scale])
    nodes = np.vstack([structural, anchor_top, anchor_bottom])
    i_top, i_bottom = 24, 25

    members: list[Member] = []
    canon = np.array(CANONICAL_NODES, dtype=float)
    for i in range(24):
        for j in range(i + 1, 24):
            if np.sum((canon[i] - canon[j]) ** 2) == _EDGE_LENGTH_SQ:
                members.append(Member(MemberKind.EDGE_CABLE, i, j,
                                      float(np.sqrt(_EDGE_LENGTH_SQ)) * scale))
    for a, b in table:
        i, j = index[a], index[b]
        length = float(np.linalg.norm(structural[i] - structural[j]))
        members.append(Member(MemberKind.BAR, i, j, length))
    for k in top_face:
        members.append(Member(MemberKind.ATTACHMENT_CABLE, i_top, k,
                              float(np.linalg.norm(nodes[i_top] - nodes[k]))))
    for k in bottom_face:
        members.append(Member(MemberKind.ATTACHMENT_CABLE, i_bottom, k,
                              float(np.linalg.norm(nodes[i_bottom] - nodes[k]))))
    members.append(Member(MemberKind.ACTUATOR_CABLE, i_top, i_bottom, l))

    face_planes = tuple(
        FacePlane(normal=sign * _AXES[axis].copy(),
                  origin=sign * 2.0 * scale * _AXES[axis])
        for axis in range(3) for sign in (1.0, -1.0)
    )
    cell = CellTopology(nodes=nodes, structural_count=24,
                        members=tuple(members), top_face=top_face,
                        bottom_face=bottom_face, face_planes=face_planes, l=l)
    _validate_cell(cell)
    return cell


def _validate_cell(cell: CellTopology) -> None:
    counts = cell.member_counts()
    expected = {MemberKind.BAR: 12, MemberKind.EDGE_CABLE: 36,
                MemberKind.ATTACHMENT_CABLE: 8, MemberKind.ACTUATOR_CABLE: 1}
    for kind, n in expected.items():
        if counts[kind] != n:
            raise ConfigurationError(f"expected {n} members of {kind}, got {counts[kind]}")
    endpoints = [p for m in _members_of_kind(cell.members, MemberKind.BAR)
                 for p in (m.i, m.j)]
    if sorted(endpoints) != list(range(cell.structural_count)):
        raise ConfigurationError("bars are not a perfect matching on the cell nodes")
    top_c = cell.nodes[list(cell.top_face)].mean(axis=0)
    bot_c = cell.nodes[list(cell.bottom_face)].mean(axis=0)
    if not np.isclose(np.linalg.norm(top_c - bot_c), cell.l, rtol=1e-12):
        raise GeometryError("top/bottom face centroid distance does not equal l")


def reflection_isometry(cell: CellTopology, face: FacePlane):
    """Mirror transform (A, b) about one of the cell's face planes.

    The returned map is p -> A @ p + b.  Verifies that, restricted to the
    cell's node set, the reflection is congruent to the original via a
    proper rigid motion (the cell is symmetric under a coordinate swap, so
    the mirror image equals a rotation plus translation of the cell).
    """
    if not any(face is fp or (np.allclose(face.normal, fp.normal)
                              and np.allclose(face.origin, fp.origin))
               for fp in cell.face_planes):
        raise ValueError("face is not one of the cell's face planes")
    n = face.normal
    A = np.eye(3) - 2.0 * np.outer(n, n)
    b = 2.0 * float(face.origin @ n) * n

    structural = cell.nodes[:cell.structural_count]
    reflected = structural @ A.T + b
    if not _congruent_by_proper_isometry(structural, reflected):
        raise GeometryError("reflected node set is not congruent by a proper isometry")
    return A, b


def _congruent_by_proper_isometry(points: np.ndarray, target: np.ndarray,
                                  tol: float = 1e-9) -> bool:
    # Try the coordinate-swap rotations fixing the reflection axis; the
    # canonical node set is closed under swapping the two in-plane axes.
    c0 = points.mean(axis=0)
    c1 = target.mean(axis=0)
    p = points - c0
    t = target - c1
    for a, bx in ((0, 1), (0, 2), (1, 2)):
        perm = [0, 1, 2]
        perm[a], perm[bx] = perm[bx], perm[a]
        for flips in itertools.product((1.0, -1.0), repeat=3):
            Q = np.zeros((3, 3))
            for r, cpos in enumerate(perm):
                Q[r, cpos] = flips[r]
            if np.linalg.det(Q) < 0:
                continue
            if _point_sets_match(p @ Q.T, t, tol):
                return True
    return False


def _point_sets_match(a: np.ndarray, b: np.ndarray, tol: float) -> bool:
    used = np.zeros(len(b), dtype=bool)
    for p in a:
        d = np.linalg.norm(b - p, axis=1)
        d[used] = np.inf
        k = int(np.argmin(d))
        if d[k] > tol:
            return False
        used[k] = True
    return True


@dataclass(frozen=True)
class LatticeTopology:
    """An nx-by-ny assembly of mirror-image cells.

    `nodes` holds the merged structural nodes first, then the actuator end
    anchors (two per cell, top then bottom, in actuator order).
    """
    nodes: np.ndarray
    structural_count: int
    members: tuple[Member, ...]
    actuators: tuple[int, ...]        # member indices, paper ordering
    actuator_cells: tuple[tuple[int, int], ...]
    cell_count: tuple[int, int]
    l: float

    def member_counts(self) -> dict[MemberKind, int]:
        counts = {kind: 0 for kind in MemberKind}
        for m in self.members:
            counts[m.kind] += 1
        return counts

    @property
    def cable_count(self) -> int:
        c = self.member_counts()
        return c[MemberKind.EDGE_CABLE] + c[MemberKind.ATTACHMENT_CABLE]

    @property
    def bar_count(self) -> int:
        return self.member_counts()[MemberKind.BAR]


def _actuator_cell_order(nx: int, ny: int) -> list[tuple[int, int]]:
    # Row-major cell order; for the 2x2 the differential stretch
    # l1 - l2 + l3 - l4 is then the column imbalance, which steers
    # the hop along the x axis.
    return [(i, j) for j in range(ny) for i in range(nx)]


def assemble_lattice(cell: CellTopology, nx: int, ny: int) -> LatticeTopology:
    """Assemble an nx-by-ny lattice by mirror reflection about shared faces."""
    if nx < 1 or ny < 1:
        raise ValueError(f"lattice size must be at least 1x1, got {nx}x{ny}")

    scale = cell.l / 4.0
    merge_tol = 1e-9 * cell.l

    # Cell (i, j) node coordinates: reflect the base cell i times about
    # x-planes and j times about y-planes.  Parity alone determines the
    # orientation; position follows from the running reflection planes.
    cell_nodes: dict[tuple[int, int], np.ndarray] = {(0, 0): cell.nodes.copy()}
    for i in range(1, nx):
        plane_x = (4.0 * (i - 1) + 2.0) * scale
        prev = cell_nodes[(i - 1, 0)]
        nxt = prev.copy()
        nxt[:, 0] = 2.0 * plane_x - nxt[:, 0]
        cell_nodes[(i, 0)] = nxt
    for j in range(1, ny):
        plane_y = (4.0 * (j - 1) + 2.0) * scale
        for i in range(nx):
            prev = cell_nodes[(i, j - 1)]
            nxt = prev.copy()
            nxt[:, 1] = 2.0 * plane_y - nxt[:, 1]
            cell_nodes[(i, j)] = nxt

    order = [(i, j) for j in range(ny) for i in range(nx)]
    s = cell.structural_count

    global_nodes: list[np.ndarray] = []
    local_to_global: dict[tuple[int, int], np.ndarray] = {}
    for ij in order:
        pts = cell_nodes[ij][:s]
        gids = np.empty(s, dtype=int)
        for k, p in enumerate(pts):
            gid = -1
            if global_nodes:
                arr = np.array(global_nodes)
                d = np.linalg.norm(arr - p, axis=1)
                hit = int(np.argmin(d))
                if d[hit] <= merge_tol:
                    gid = hit
            if gid < 0:
                gid = len(global_nodes)
                global_nodes.append(p)
            gids[k] = gid
        if len(set(gids.tolist())) != s:
            raise GeometryError(
                f"merge tolerance collapsed distinct nodes within cell {ij}")
        local_to_global[ij] = gids

    structural_total = len(global_nodes)

    # Actuator anchors, appended after the structural block in paper order.
    act_order = _actuator_cell_order(nx, ny)
    anchor_gid: dict[tuple[int, int, int], int] = {}
    for ij in act_order:
        for local in (s, s + 1):  # top, bottom
            anchor_gid[(ij[0], ij[1], local)] = structural_total + len(anchor_gid)
            global_nodes.append(cell_nodes[ij][local])

    members: list[Member] = []
    seen: dict[tuple, int] = {}
    actuator_member_of_cell: dict[tuple[int, int], int] = {}
    for ij in order:
        gids = local_to_global[ij]

        def gid_of(local: int, ij=ij, gids=gids) -> int:
            if local < s:
                return int(gids[local])
            return anchor_gid[(ij[0], ij[1], local)]

        for m in cell.members:
            gi, gj = gid_of(m.i), gid_of(m.j)
            key = (m.kind, min(gi, gj), max(gi, gj))
            if key in seen:
                if not np.isclose(members[seen[key]].natural_length,
                                  m.natural_length, rtol=1e-12):
                    raise GeometryError("duplicate member with mismatched natural length")
                continue
            seen[key] = len(members)
            members.append(Member(m.kind, gi, gj, m.natural_length))
            if m.kind is MemberKind.ACTUATOR_CABLE:
                actuator_member_of_cell[ij] = seen[key]

    actuators = tuple(actuator_member_of_cell[ij] for ij in act_order)
    lattice = LatticeTopology(
        nodes=np.array(global_nodes), structural_count=structural_total,
        members=tuple(members), actuators=actuators,
        actuator_cells=tuple(act_order), cell_count=(nx, ny), l=cell.l)
    _validate_lattice(lattice, cell, nx, ny)
    return lattice


def _validate_lattice(lat: LatticeTopology, cell: CellTopology,
                      nx: int, ny: int) -> None:
    counts = lat.member_counts()
    if counts[MemberKind.ACTUATOR_CABLE] != nx * ny:
        raise GeometryError("actuator count does not match cell count")
    comps = bar_components(lat)
    if any(len(c) > 4 for c in comps):
        raise GeometryError("bar connected component larger than four bars")


def bar_components(lat: LatticeTopology) -> list[list[int]]:
    """Connected components of the bar graph, as lists of member indices."""
    bars = [(k, m) for k, m in enumerate(lat.members) if m.kind is MemberKind.BAR]
    parent: dict[int, int] = {}

    def find(x: int) -> int:
        while parent.setdefault(x, x) != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a: int, b: int) -> None:
        parent[find(a)] = find(b)

    for _, m in bars:
        union(m.i, m.j)
    groups: dict[int, list[int]] = {}
    for k, m in bars:
        groups.setdefault(find(m.i), []).append(k)
    return list(groups.values())


def component_is_loop(lat: LatticeTopology, component: list[int]) -> bool:
    """True when the component's bars form a simple cycle."""
    degree: dict[int, int] = {}
    for k in component:
        m = lat.members[k]
        degree[m.i] = degree.get(m.i, 0) + 1
        degree[m.j] = degree.get(m.j, 0) + 1
    return len(degree) == len(component) and all(d == 2 for d in degree.values())


def load_topology_file(path) -> CellTopology:
    """Load a unit-cell topology override.

    JSON schema (documented in the README): {"schema_version": "1.0",
    "l": float, "bars": [[i, j], ...]} where i, j index the canonical node
    list in lexicographic order.  All cell invariants are re-validated.
    """
    raw = json.loads(Path(path).read_text())
    version = raw.get("schema_version", "")
    if version.split(".")[0] != TOPOLOGY_SCHEMA_VERSION.split(".")[0]:
        raise ConfigurationError(f"unsupported topology schema version {version!r}")
    unknown = set(raw) - {"schema_version", "l", "bars"}
    if unknown:
        raise ConfigurationError(f"unknown topology keys: {sorted(unknown)}")
    l = float(raw.get("l", 1.0))
    try:
        table = [(CANONICAL_NODES[i], CANONICAL_NODES[j]) for i, j in raw["bars"]]
    except (KeyError, IndexError, TypeError) as exc:
        raise ConfigurationError(f"invalid bar list: {exc}") from exc
    return build_unit_cell(l, bar_table=table)
