"""Graph-based SLAM backend: pose+scan nodes, odometry / scan-match / loop
closure edges, Gauss-Newton optimization with Levenberg damping, map
rendering, and a versioned checksummed save format for save-and-continue.

Edge residuals are the standard SE(2) form r = Z^-1 * (X_i^-1 * X_j) with a
wrap-aware angle component; the anchor node's variables are removed from the
system (hard gauge fix), so its pose is bit-identical across optimize calls.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
import threading
import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from packmap.grid import OccupancyGrid, scan_endpoints
from packmap.scanmatch import MatchConfig, MatchDegenerateError, MatchResult, scan_match
from packmap.se2 import Pose2, wrap_angle
from packmap.world import LaserScan

MAGIC = b"PMG1"
FORMAT_VERSION = 1

ODOMETRY = "odometry"
SCAN_MATCH = "scan-match"
LOOP_CLOSURE = "loop-closure"
EDGE_KINDS = (ODOMETRY, SCAN_MATCH, LOOP_CLOSURE)


class GraphError(ValueError):
    pass


class GraphConnectivityError(GraphError):
    pass


class GraphOptimizeError(GraphError):
    pass


class GraphFormatError(GraphError):
    """Base for deserialization failures."""


class GraphVersionError(GraphFormatError):
    pass


class GraphTruncatedError(GraphFormatError):
    pass


class GraphChecksumError(GraphFormatError):
    pass


@dataclass
class PoseGraphNode:
    id: int
    pose: Pose2
    scan: LaserScan


@dataclass
class PoseGraphEdge:
    from_id: int
    to_id: int
    measurement: Pose2
    information: np.ndarray  # 3x3 SPD
    kind: str

    def __post_init__(self) -> None:
        if self.from_id == self.to_id:
            raise GraphError("edge endpoints must differ")
        if self.kind not in EDGE_KINDS:
            raise GraphError(f"unknown edge kind {self.kind!r}")
        self.information = np.asarray(self.information, dtype=float).reshape(3, 3)
        if not np.allclose(self.information, self.information.T, atol=1e-9):
            raise GraphError("information matrix must be symmetric")
        if np.linalg.eigvalsh(self.information).min() <= 0.0:
            raise GraphError("information matrix must be positive definite")


@dataclass
class PoseGraph:
    nodes: list[PoseGraphNode] = field(default_factory=list)
    edges: list[PoseGraphEdge] = field(default_factory=list)
    anchor: int = 0

    def node(self, node_id: int) -> PoseGraphNode:
        return self._index()[node_id]

    def _index(self) -> dict[int, PoseGraphNode]:
        return {n.id: n for n in self.nodes}

    def validate(self) -> None:
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise GraphError("duplicate node ids")
        if ids != sorted(ids):
            raise GraphError("node ids must increase in insertion order")
        known = set(ids)
        for e in self.edges:
            if e.from_id not in known or e.to_id not in known:
                raise GraphError(f"edge {e.from_id}->{e.to_id} references missing node")

    def connected_from_anchor(self) -> bool:
        if not self.nodes:
            return True
        adj: dict[int, set[int]] = {n.id: set() for n in self.nodes}
        for e in self.edges:
            adj[e.from_id].add(e.to_id)
            adj[e.to_id].add(e.from_id)
        seen = {self.anchor}
        stack = [self.anchor]
        while stack:
            for nb in adj[stack.pop()]:
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        return len(seen) == len(self.nodes)


@dataclass(frozen=True)
class GraphConfig:
    node_trans_spacing: float = 0.2
    node_rot_spacing: float = 0.35
    match: MatchConfig = field(default_factory=MatchConfig)
    match_min_score: float = 0.5
    loop_radius: float = 2.0
    loop_min_score: float = 0.6
    loop_exclude_recent: int = 10
    loop_window_xy: float = 0.5
    loop_window_theta: float = math.radians(20.0)
    max_iterations: int = 50
    tolerance: float = 1e-6
    mode: str = "synchronous"
    odom_information: tuple[float, float, float] = (50.0, 50.0, 100.0)
    match_information: tuple[float, float, float] = (400.0, 400.0, 1000.0)

    def __post_init__(self) -> None:
        if self.node_trans_spacing <= 0 or self.node_rot_spacing <= 0:
            raise ValueError("node spacing thresholds must be > 0")
        if self.mode not in ("synchronous", "asynchronous"):
            raise ValueError("mode must be 'synchronous' or 'asynchronous'")

    def config_hash(self) -> str:
        blob = repr(
            (
                self.node_trans_spacing,
                self.node_rot_spacing,
                self.match,
                self.match_min_score,
                self.loop_radius,
                self.loop_min_score,
                self.loop_exclude_recent,
                self.max_iterations,
                self.tolerance,
                self.odom_information,
                self.match_information,
            )
        ).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# -- residuals -----------------------------------------------------------


def edge_residual(pose_i: Pose2, pose_j: Pose2, z: Pose2) -> np.ndarray:
    ci, si = math.cos(pose_i.theta), math.sin(pose_i.theta)
    dx = pose_j.x - pose_i.x
    dy = pose_j.y - pose_i.y
    # relative transform in i's frame
    rx = ci * dx + si * dy
    ry = -si * dx + ci * dy
    cz, sz = math.cos(z.theta), math.sin(z.theta)
    ex = cz * (rx - z.x) + sz * (ry - z.y)
    ey = -sz * (rx - z.x) + cz * (ry - z.y)
    et = wrap_angle(pose_j.theta - pose_i.theta - z.theta)
    return np.array([ex, ey, et])


def edge_jacobians(pose_i: Pose2, pose_j: Pose2, z: Pose2) -> tuple[np.ndarray, np.ndarray]:
    """Analytic d(residual)/d(pose_i), d(residual)/d(pose_j)."""
    ci, si = math.cos(pose_i.theta), math.sin(pose_i.theta)
    cz, sz = math.cos(z.theta), math.sin(z.theta)
    dx = pose_j.x - pose_i.x
    dy = pose_j.y - pose_i.y
    Rz = np.array([[cz, -sz], [sz, cz]])
    Ri = np.array([[ci, -si], [si, ci]])
    RzT_RiT = Rz.T @ Ri.T
    # d(R_i^T)/dtheta_i applied to (t_j - t_i)
    dRiT = np.array([[-si, ci], [-ci, -si]])
    dtheta_i = Rz.T @ (dRiT @ np.array([dx, dy]))
    A = np.zeros((3, 3))
    A[:2, :2] = -RzT_RiT
    A[:2, 2] = dtheta_i
    A[2, 2] = -1.0
    B = np.zeros((3, 3))
    B[:2, :2] = RzT_RiT
    B[2, 2] = 1.0
    return A, B


def graph_chi2(graph: PoseGraph) -> float:
    idx = graph._index()
    total = 0.0
    for e in graph.edges:
        r = edge_residual(idx[e.from_id].pose, idx[e.to_id].pose, e.measurement)
        total += float(r @ e.information @ r)
    return total


def optimize(graph: PoseGraph, cfg: GraphConfig) -> tuple[PoseGraph, float]:
    """Gauss-Newton with Levenberg damping on non-decreasing error.

    Mutates node poses in place (anchor fixed) and returns (graph, final chi2).
    """
    graph.validate()
    if not graph.connected_from_anchor():
        raise GraphConnectivityError("graph is not connected from the anchor")
    if len(graph.nodes) <= 1 or not graph.edges:
        return graph, graph_chi2(graph)

    ids = [n.id for n in graph.nodes]
    var_ids = [i for i in ids if i != graph.anchor]
    col = {node_id: 3 * k for k, node_id in enumerate(var_ids)}
    idx = graph._index()
    dim = 3 * len(var_ids)

    chi = graph_chi2(graph)
    for _ in range(cfg.max_iterations):
        H = np.zeros((dim, dim))
        b = np.zeros(dim)
        for e in graph.edges:
            ni, nj = idx[e.from_id], idx[e.to_id]
            r = edge_residual(ni.pose, nj.pose, e.measurement)
            A, B = edge_jacobians(ni.pose, nj.pose, e.measurement)
            omega = e.information
            if e.from_id in col:
                ci = col[e.from_id]
                H[ci : ci + 3, ci : ci + 3] += A.T @ omega @ A
                b[ci : ci + 3] += A.T @ omega @ r
            if e.to_id in col:
                cj = col[e.to_id]
                H[cj : cj + 3, cj : cj + 3] += B.T @ omega @ B
                b[cj : cj + 3] += B.T @ omega @ r
            if e.from_id in col and e.to_id in col:
                ci, cj = col[e.from_id], col[e.to_id]
                H[ci : ci + 3, cj : cj + 3] += A.T @ omega @ B
                H[cj : cj + 3, ci : ci + 3] += B.T @ omega @ A

        saved = {node_id: idx[node_id].pose for node_id in var_ids}
        new_chi = None
        lam = 0.0
        while True:
            try:
                H_damped = H if lam == 0.0 else H + lam * np.diag(np.diag(H))
                delta = np.linalg.solve(H_damped, -b)
            except np.linalg.LinAlgError:
                delta = None
            if delta is not None and np.isfinite(delta).all():
                for node_id in var_ids:
                    c = col[node_id]
                    p = saved[node_id]
                    idx[node_id].pose = Pose2(p.x + delta[c], p.y + delta[c + 1], wrap_angle(p.theta + delta[c + 2]))
                trial = graph_chi2(graph)
                if trial <= chi + 1e-12:
                    new_chi = trial
                    break
                for node_id in var_ids:  # reject: restore and damp harder
                    idx[node_id].pose = saved[node_id]
            lam = 1e-6 if lam == 0.0 else lam * 10.0
            if lam > 1e8:
                break
        if new_chi is None:
            if delta is None:
                raise GraphOptimizeError("normal equations singular even under damping")
            break  # no damped step improves: converged at a (local) minimum
        decrease = chi - new_chi
        chi = new_chi
        if chi < 1e-15 or decrease < cfg.tolerance * max(chi, 1.0):
            break
    return graph, chi


def render_map(graph: PoseGraph, resolution: float) -> OccupancyGrid:
    """Ray-trace every node's scan from its estimated pose into a fresh grid."""
    if not graph.nodes:
        raise GraphError("cannot render an empty graph")
    all_pts = []
    for n in graph.nodes:
        pts = scan_endpoints(n.pose, n.scan.angle_min, n.scan.angle_increment, n.scan.ranges, range_max=1e12)
        all_pts.append(pts)
        all_pts.append(np.array([[n.pose.x, n.pose.y]]))
    pts = np.vstack(all_pts)
    pad = 2.0 * resolution
    if pts.shape[0] <= len(graph.nodes):  # only pose points: no returns at all
        xmin, ymin = pts.min(axis=0) - 10 * resolution
        xmax, ymax = pts.max(axis=0) + 10 * resolution
    else:
        xmin, ymin = pts.min(axis=0) - pad
        xmax, ymax = pts.max(axis=0) + pad
    w = int(math.ceil((xmax - xmin) / resolution)) + 1
    h = int(math.ceil((ymax - ymin) / resolution)) + 1
    grid = OccupancyGrid(resolution=resolution, width=w, height=h, origin=Pose2(float(xmin), float(ymin), 0.0))
    for n in graph.nodes:
        eps = scan_endpoints(n.pose, n.scan.angle_min, n.scan.angle_increment, n.scan.ranges, range_max=_scan_range_max(n.scan))
        grid.integrate_scan(n.pose, eps, grow=False)
    return grid


def _scan_range_max(scan: LaserScan) -> float:
    finite = scan.ranges[np.isfinite(scan.ranges)]
    if finite.size == 0:
        return 1.0
    return float(finite.max()) + 1.0


# -- serialization ---------------------------------------------------------


def serialize(graph: PoseGraph, cfg: GraphConfig | None = None) -> bytes:
    header = {
        "anchor": graph.anchor,
        "config_hash": cfg.config_hash() if cfg is not None else "",
        "nodes": [
            {
                "id": n.id,
                "pose": [n.pose.x, n.pose.y, n.pose.theta],
                "ts": n.scan.timestamp,
                "angle_min": n.scan.angle_min,
                "angle_increment": n.scan.angle_increment,
                "n": int(n.scan.ranges.shape[0]),
            }
            for n in graph.nodes
        ],
        "edges": [
            {
                "from": e.from_id,
                "to": e.to_id,
                "kind": e.kind,
                "z": [e.measurement.x, e.measurement.y, e.measurement.theta],
                "info": [float(v) for v in e.information.ravel()],
            }
            for e in graph.edges
        ],
    }
    header_bytes = json.dumps(header, separators=(",", ":")).encode()
    blob = b"".join(np.ascontiguousarray(n.scan.ranges, dtype=np.float64).tobytes() for n in graph.nodes)
    body = MAGIC + struct.pack(">II", FORMAT_VERSION, len(header_bytes)) + header_bytes + blob
    return body + struct.pack(">I", zlib.crc32(body) & 0xFFFFFFFF)


def deserialize(data: bytes) -> PoseGraph:
    if len(data) < 16:
        raise GraphTruncatedError("payload shorter than the fixed header")
    if data[:4] != MAGIC:
        raise GraphVersionError("bad magic: not a pose-graph save")
    version, header_len = struct.unpack(">II", data[4:12])
    if version != FORMAT_VERSION:
        raise GraphVersionError(f"unsupported format version {version}")
    body, crc_bytes = data[:-4], data[-4:]
    if len(body) < 12 + header_len:
        raise GraphTruncatedError("header extends past end of payload")
    if struct.unpack(">I", crc_bytes)[0] != (zlib.crc32(body) & 0xFFFFFFFF):
        raise GraphChecksumError("checksum mismatch")
    try:
        header = json.loads(body[12 : 12 + header_len].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise GraphChecksumError(f"header not decodable: {exc}") from exc
    blob = body[12 + header_len :]
    total_ranges = sum(n["n"] for n in header["nodes"])
    if len(blob) != 8 * total_ranges:
        raise GraphTruncatedError("range blob length mismatch")
    graph = PoseGraph(anchor=int(header["anchor"]))
    offset = 0
    for n in header["nodes"]:
        count = int(n["n"])
        ranges = np.frombuffer(blob, dtype=np.float64, count=count, offset=offset).copy()
        offset += 8 * count
        graph.nodes.append(
            PoseGraphNode(
                id=int(n["id"]),
                pose=Pose2(*n["pose"]),
                scan=LaserScan(n["ts"], n["angle_min"], n["angle_increment"], ranges),
            )
        )
    for e in header["edges"]:
        graph.edges.append(
            PoseGraphEdge(
                from_id=int(e["from"]),
                to_id=int(e["to"]),
                measurement=Pose2(*e["z"]),
                information=np.array(e["info"], dtype=float).reshape(3, 3),
                kind=e["kind"],
            )
        )
    graph.validate()
    return graph


# -- incremental frontend ---------------------------------------------------


class GraphSlam:
    """Incremental mapping frontend over a PoseGraph."""

    def __init__(self, cfg: GraphConfig | None = None) -> None:
        self.cfg = cfg or GraphConfig()
        self.graph = PoseGraph()
        self._pending = Pose2()
        self._have_pending = False
        self.closures_added = 0

    @classmethod
    def from_graph(cls, graph: PoseGraph, cfg: GraphConfig | None = None) -> "GraphSlam":
        """Continue mapping from a deserialized graph (ids keep increasing)."""
        slam = cls(cfg)
        graph.validate()
        slam.graph = graph
        return slam

    @property
    def _loop_cfg(self) -> MatchConfig:
        return self.cfg.match.widened(self.cfg.loop_window_xy, self.cfg.loop_window_theta)

    def add_scan(self, odom_delta: Pose2, scan: LaserScan) -> int | None:
        """Accumulate odometry; create a node when spacing is exceeded.

        Returns the new node id, or None while below the spacing thresholds.
        The first scan always creates the anchor node at the origin.
        """
        if not self.graph.nodes:
            node_id = 0
            self.graph.anchor = 0
            self.graph.nodes.append(PoseGraphNode(id=node_id, pose=Pose2(), scan=scan))
            return node_id

        self._pending = self._pending.compose(odom_delta)
        self._have_pending = True
        if (
            self._pending.translation_norm() < self.cfg.node_trans_spacing
            and abs(self._pending.theta) < self.cfg.node_rot_spacing
        ):
            return None

        prev = self.graph.nodes[-1]
        node_id = prev.id + 1
        odo_pose = prev.pose.compose(self._pending)
        node = PoseGraphNode(id=node_id, pose=odo_pose, scan=scan)
        self.graph.nodes.append(node)
        self.graph.edges.append(
            PoseGraphEdge(
                from_id=prev.id,
                to_id=node_id,
                measurement=self._pending,
                information=np.diag(self.cfg.odom_information),
                kind=ODOMETRY,
            )
        )
        self._pending = Pose2()
        self._have_pending = False

        try:
            result = scan_match(prev.scan, prev.pose, scan, odo_pose, self.cfg.match)
        except MatchDegenerateError:
            result = None
        if result is not None and result.score >= self.cfg.match_min_score:
            node.pose = result.pose
            measurement = prev.pose.delta_to(result.pose)
            info = np.diag(self.cfg.match_information) * result.score
            self._upsert_edge(prev.id, node_id, measurement, info, SCAN_MATCH)

        closures = self.detect_loop_closures(node_id)
        for edge in closures:
            self.graph.edges.append(edge)
        if closures:
            self.closures_added += len(closures)
            optimize(self.graph, self.cfg)
        return node_id

    def _upsert_edge(self, from_id: int, to_id: int, z: Pose2, info: np.ndarray, kind: str) -> None:
        for i, e in enumerate(self.graph.edges):
            if e.from_id == from_id and e.to_id == to_id and e.kind == kind:
                self.graph.edges[i] = PoseGraphEdge(from_id, to_id, z, info, kind)
                return
        self.graph.edges.append(PoseGraphEdge(from_id, to_id, z, info, kind))

    def detect_loop_closures(self, node_id: int) -> list[PoseGraphEdge]:
        """Scan-match against older nearby nodes; high scores become edges."""
        node = self.graph.node(node_id)
        order = [n.id for n in self.graph.nodes]
        recent = set(order[-(self.cfg.loop_exclude_recent + 1) :])
        edges: list[PoseGraphEdge] = []
        loop_cfg = self._loop_cfg
        for cand in self.graph.nodes:
            if cand.id in recent:
                continue
            if math.hypot(cand.pose.x - node.pose.x, cand.pose.y - node.pose.y) > self.cfg.loop_radius:
                continue
            try:
                result = scan_match(cand.scan, cand.pose, node.scan, node.pose, loop_cfg)
            except MatchDegenerateError:
                continue
            if result.score < self.cfg.loop_min_score:
                continue
            z = cand.pose.delta_to(result.pose)
            info = np.diag(self.cfg.match_information) * result.score
            edges.append(PoseGraphEdge(cand.id, node_id, z, info, LOOP_CLOSURE))
        return edges

    def optimize(self) -> float:
        _, chi = optimize(self.graph, self.cfg)
        return chi

    def render_map(self, resolution: float) -> OccupancyGrid:
        return render_map(self.graph, resolution)

    def serialize(self) -> bytes:
        return serialize(self.graph, self.cfg)

    def trajectory(self) -> list[tuple[float, Pose2]]:
        return [(n.scan.timestamp, n.pose) for n in self.graph.nodes]


# -- mapping modes -----------------------------------------------------------


class ScanQueue:
    """Producer/consumer handoff implementing the two mapping modes.

    synchronous: bounded FIFO; every scan is processed in order and the
    producer blocks when the consumer lags.
    asynchronous: the producer never blocks; only the newest unprocessed scan
    is kept, with the odometry of displaced items composed into its delta so
    no motion is lost.
    """

    def __init__(self, mode: str = "synchronous", maxsize: int = 16) -> None:
        if mode not in ("synchronous", "asynchronous"):
            raise ValueError("mode must be 'synchronous' or 'asynchronous'")
        self.mode = mode
        self.maxsize = maxsize
        self._items: list[tuple[Pose2, LaserScan]] = []
        self._lock = threading.Condition()
        self._closed = False
        self.dropped = 0

    def put(self, odom_delta: Pose2, scan: LaserScan) -> None:
        with self._lock:
            if self._closed:
                raise RuntimeError("queue closed")
            if self.mode == "synchronous":
                while len(self._items) >= self.maxsize and not self._closed:
                    self._lock.wait()
                self._items.append((odom_delta, scan))
            else:
                if self._items:
                    last_delta, _ = self._items[-1]
                    self._items[-1] = (last_delta.compose(odom_delta), scan)
                    self.dropped += 1
                else:
                    self._items.append((odom_delta, scan))
            self._lock.notify_all()

    def get(self, timeout: float | None = None) -> tuple[Pose2, LaserScan] | None:
        with self._lock:
            if not self._items and not self._closed:
                self._lock.wait(timeout)
            if not self._items:
                return None
            item = self._items.pop(0)
            self._lock.notify_all()
            return item

    def pending(self) -> int:
        with self._lock:
            return len(self._items)

    def close(self) -> None:
        with self._lock:
            self._closed = True
            self._lock.notify_all()
