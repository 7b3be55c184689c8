"""Scene geometry: meshes, BVH ray tracing, pinhole cameras and orbits

All ray queries are batched: arrays of origins/directions go in, arrays of hit
records come out. Single-ray helpers wrap the batched versions.
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from pbr_recon.errors import InputError, MeshError, MeshParseError

#barycentric slack so rays through shared edges never slip between triangles
BARY_EPS = 1e-9
#relative offset for secondary ray origins (fraction of the scene diagonal)
SPAWN_EPS = 1e-4
LEAF_SIZE = 4


def dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    #explicit sum keeps results identical for any array shape
    return a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1] + a[..., 2] * b[..., 2]


def cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.stack([
        a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1],
        a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2],
        a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0],
    ], axis=-1)


def normalize(v: np.ndarray, fallback: Optional[np.ndarray] = None) -> np.ndarray:
    """unit vectors along the last axis; zero vectors become fallback (or stay 0)"""
    length = np.sqrt(dot(v, v))[..., None]
    with np.errstate(invalid='ignore', divide='ignore'):
        out = v / length
    bad = ~(length[..., 0] > 0)
    if np.any(bad):
        out[bad] = 0.0 if fallback is None else np.broadcast_to(fallback, out.shape)[bad]
    return out


def _frozen(a: np.ndarray, dtype) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


#mesh

@dataclass(frozen=True)
class TriangleMesh:
    """indexed triangle mesh with per-vertex normals and UVs"""
    positions: np.ndarray
    normals: np.ndarray
    uvs: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'positions', _frozen(self.positions, np.float64).reshape(-1, 3))
        object.__setattr__(self, 'normals', _frozen(self.normals, np.float64).reshape(-1, 3))
        object.__setattr__(self, 'uvs', _frozen(self.uvs, np.float64).reshape(-1, 2))
        object.__setattr__(self, 'faces', _frozen(self.faces, np.int64).reshape(-1, 3))

    @property
    def n_faces(self) -> int:
        return self.faces.shape[0]

    @property
    def bbox_min(self) -> np.ndarray:
        return self.positions.min(axis=0)

    @property
    def bbox_max(self) -> np.ndarray:
        return self.positions.max(axis=0)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.bbox_min + self.bbox_max)

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.bbox_max - self.bbox_min))

    def validate(self) -> Dict:
        """check the structural invariants; returns a validation result dict"""
        errors = []
        n_vertices = self.positions.shape[0]
        if self.n_faces == 0:
            errors.append("mesh has no faces")
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= n_vertices):
            errors.append(f"face index out of bounds (vertex count {n_vertices})")
        if self.normals.shape[0] != n_vertices or self.uvs.shape[0] != n_vertices:
            errors.append("normals/uvs do not match vertex count")
        else:
            lengths = np.linalg.norm(self.normals, axis=1)
            if np.any(np.abs(lengths - 1.0) > 1e-4):
                errors.append("vertex normals are not unit length")
        if errors:
            return {'valid': False, 'errors': errors}
        return {'valid': True, 'faces': self.n_faces, 'vertices': n_vertices}


def area_weighted_normals(positions: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """vertex normals as the normalized sum of unnormalized face normals"""
    p0, p1, p2 = (positions[faces[:, k]] for k in range(3))
    face_n = cross(p1 - p0, p2 - p0)
    acc = np.zeros_like(positions)
    for k in range(3):
        np.add.at(acc, faces[:, k], face_n)
    return normalize(acc, fallback=np.array([0.0, 0.0, 1.0]))


def _resolve_index(token: str, count: int, kind: str, line_no: int, path: str) -> int:
    try:
        index = int(token)
    except ValueError:
        raise MeshParseError(f"bad {kind} index {token!r}", line_no, path)
    if index == 0:
        raise MeshParseError(f"{kind} index 0 is invalid (indices are 1-based)", line_no, path)
    #negative indices are relative to the elements read so far
    return count + index if index < 0 else index - 1


def load_mesh(path: Path, normalize_to_unit: bool = False) -> TriangleMesh:
    """parse a Wavefront .obj (v/vn/vt/f) into a TriangleMesh

    faces with more than three corners are fan-triangulated; if any corner lacks
    a normal, all normals are recomputed as area-weighted vertex normals.
    """
    path = Path(path)
    if not path.exists():
        raise InputError("mesh file not found", str(path))
    src = str(path)

    positions, normals, texcoords = [], [], []
    corners = []        #(v, vt, vn) per triangle corner, -1 when absent
    corner_lines = []   #source line per triangle, for bounds errors

    with open(path, 'r', encoding='utf-8', errors='replace') as f:
        for line_no, raw in enumerate(f, start=1):
            line = raw.split('#', 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            tag = parts[0]
            try:
                if tag == 'v':
                    positions.append([float(x) for x in parts[1:4]])
                    if len(positions[-1]) != 3:
                        raise ValueError("vertex needs 3 coordinates")
                elif tag == 'vn':
                    normals.append([float(x) for x in parts[1:4]])
                    if len(normals[-1]) != 3:
                        raise ValueError("normal needs 3 components")
                elif tag == 'vt':
                    texcoords.append([float(x) for x in parts[1:3]])
                    if len(texcoords[-1]) != 2:
                        raise ValueError("texture coordinate needs 2 components")
            except ValueError as e:
                raise MeshParseError(str(e), line_no, src)

            if tag != 'f':
                continue
            if len(parts) < 4:
                raise MeshParseError("face needs at least 3 vertices", line_no, src)

            face = []
            for token in parts[1:]:
                fields = token.split('/')
                if len(fields) > 3 or not fields[0]:
                    raise MeshParseError(f"bad face corner {token!r}", line_no, src)
                v = _resolve_index(fields[0], len(positions), 'vertex', line_no, src)
                vt = _resolve_index(fields[1], len(texcoords), 'texcoord', line_no, src) \
                    if len(fields) > 1 and fields[1] else -1
                vn = _resolve_index(fields[2], len(normals), 'normal', line_no, src) \
                    if len(fields) > 2 and fields[2] else -1
                face.append((v, vt, vn))

            #fan triangulation around the first corner
            for k in range(1, len(face) - 1):
                corners.append((face[0], face[k], face[k + 1]))
                corner_lines.append(line_no)

    if not corners:
        raise MeshError("mesh has no faces", src)

    tri = np.array(corners, dtype=np.int64)        #(F, 3 corners, 3 fields)
    lines = np.array(corner_lines, dtype=np.int64)
    for field_idx, (kind, count) in enumerate((('vertex', len(positions)),
                                               ('texcoord', len(texcoords)),
                                               ('normal', len(normals)))):
        idx = tri[:, :, field_idx]
        present = idx >= 0 if field_idx else np.ones_like(idx, dtype=bool)
        bad = present & ((idx < 0) | (idx >= count))
        if np.any(bad):
            face_i, corner_i = np.argwhere(bad)[0]
            raw_index = idx[face_i, corner_i] + 1
            raise MeshParseError(f"face references {kind} {raw_index} of {count}",
                                 int(lines[face_i]), src)

    if np.any(tri[:, :, 1] < 0):
        raise MeshError("mesh has faces without texture coordinates (UVs are required for baking)", src)

    pos = np.array(positions, dtype=np.float64)
    uv_table = np.array(texcoords, dtype=np.float64).reshape(-1, 2)

    #one output vertex per distinct (v, vt, vn) corner
    flat = tri.reshape(-1, 3)
    unique, inverse = np.unique(flat, axis=0, return_inverse=True)
    faces = inverse.reshape(-1, 3)

    out_pos = pos[unique[:, 0]]
    out_uv = uv_table[unique[:, 1]]
    if np.any(unique[:, 2] < 0):
        smooth = area_weighted_normals(pos, tri[:, :, 0])
        out_n = smooth[unique[:, 0]]
    else:
        nrm_table = np.array(normals, dtype=np.float64).reshape(-1, 3)
        out_n = normalize(nrm_table[unique[:, 2]], fallback=np.array([0.0, 0.0, 1.0]))

    mesh = TriangleMesh(out_pos, out_n, out_uv, faces)
    return normalize_mesh(mesh) if normalize_to_unit else mesh


def normalize_mesh(mesh: TriangleMesh) -> TriangleMesh:
    """rescale to a unit-diagonal bounding box centered at the origin"""
    diag = mesh.diagonal
    if diag <= 0:
        raise MeshError("cannot normalize a mesh with a degenerate bounding box")
    positions = (mesh.positions - mesh.center) / diag
    return TriangleMesh(positions, mesh.normals, mesh.uvs, mesh.faces)


def save_obj(path: Path, mesh: TriangleMesh):
    """write v/vt/vn/f records with shared indices"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w') as f:
        for p in mesh.positions:
            f.write(f"v {p[0]:.9g} {p[1]:.9g} {p[2]:.9g}\n")
        for t in mesh.uvs:
            f.write(f"vt {t[0]:.9g} {t[1]:.9g}\n")
        for n in mesh.normals:
            f.write(f"vn {n[0]:.9g} {n[1]:.9g} {n[2]:.9g}\n")
        for a, b, c in mesh.faces + 1:
            f.write(f"f {a}/{a}/{a} {b}/{b}/{b} {c}/{c}/{c}\n")


#rays and hits

@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    tmin: float = 0.0
    tmax: float = np.inf


@dataclass(frozen=True)
class Hit:
    """nearest hit; barycentric = weights of vertex 0 and vertex 1"""
    triangle: int
    barycentric: Tuple[float, float]
    t: float


@dataclass(frozen=True)
class ShadePoint:
    position: np.ndarray
    normal: np.ndarray
    geometric_normal: np.ndarray
    uv: np.ndarray
    wo: np.ndarray


@dataclass
class Hits:
    """batched hit records; triangle == -1 marks a miss"""
    triangle: np.ndarray
    w0: np.ndarray
    w1: np.ndarray
    t: np.ndarray

    @property
    def valid(self) -> np.ndarray:
        return self.triangle >= 0

    def take(self, index) -> 'Hits':
        return Hits(self.triangle[index], self.w0[index], self.w1[index], self.t[index])


@dataclass
class ShadePoints:
    """batched shading records"""
    position: np.ndarray
    normal: np.ndarray
    geometric_normal: np.ndarray
    uv: np.ndarray
    wo: np.ndarray
    triangle: np.ndarray

    def __len__(self):
        return self.position.shape[0]

    def take(self, index) -> 'ShadePoints':
        return ShadePoints(self.position[index], self.normal[index], self.geometric_normal[index],
                           self.uv[index], self.wo[index], self.triangle[index])


#BVH

@dataclass(frozen=True)
class AccelerationStructure:
    """binary BVH over a mesh; leaves hold ranges of tri_order"""
    mesh: TriangleMesh
    node_min: np.ndarray
    node_max: np.ndarray
    node_left: np.ndarray
    node_right: np.ndarray
    node_start: np.ndarray
    node_count: np.ndarray
    tri_order: np.ndarray
    v0: np.ndarray = field(repr=False)
    e1: np.ndarray = field(repr=False)
    e2: np.ndarray = field(repr=False)
    degenerate: np.ndarray = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return self.node_min.shape[0]

    @property
    def spawn_eps(self) -> float:
        return SPAWN_EPS * max(self.mesh.diagonal, 1e-12)

    def is_leaf(self, node: int) -> bool:
        return self.node_left[node] < 0


def _triangle_data(mesh: TriangleMesh):
    p = mesh.positions
    v0 = p[mesh.faces[:, 0]]
    e1 = p[mesh.faces[:, 1]] - v0
    e2 = p[mesh.faces[:, 2]] - v0
    n = cross(e1, e2)
    area2 = dot(n, n)
    scale = max(mesh.diagonal, 1e-300)
    degenerate = area2 <= (1e-14 * scale * scale) ** 2
    return v0, e1, e2, degenerate


def build_bvh(mesh: TriangleMesh, leaf_size: int = LEAF_SIZE) -> AccelerationStructure:
    """median split on the longest centroid axis, built iteratively"""
    if mesh.n_faces == 0:
        raise MeshError("cannot build a BVH over an empty mesh")

    tri_pts = mesh.positions[mesh.faces]          #(F, 3, 3)
    tri_min = tri_pts.min(axis=1)
    tri_max = tri_pts.max(axis=1)
    centroids = tri_pts.mean(axis=1)
    pad = 1e-9 * max(mesh.diagonal, 1e-12)

    order = np.arange(mesh.n_faces, dtype=np.int64)
    node_min, node_max, left, right, start, count = [], [], [], [], [], []

    def new_node(lo: int, hi: int) -> int:
        idx = order[lo:hi]
        node_min.append(tri_min[idx].min(axis=0) - pad)
        node_max.append(tri_max[idx].max(axis=0) + pad)
        left.append(-1)
        right.append(-1)
        start.append(lo)
        count.append(hi - lo)
        return len(node_min) - 1

    stack = [(new_node(0, mesh.n_faces), 0, mesh.n_faces)]
    while stack:
        node, lo, hi = stack.pop()
        n = hi - lo
        if n <= leaf_size:
            continue
        cent = centroids[order[lo:hi]]
        extent = cent.max(axis=0) - cent.min(axis=0)
        axis = int(np.argmax(extent))
        if extent[axis] <= 0:
            continue
        perm = np.argsort(cent[:, axis], kind='stable')
        order[lo:hi] = order[lo:hi][perm]
        mid = lo + n // 2

        l_node = new_node(lo, mid)
        r_node = new_node(mid, hi)
        left[node], right[node] = l_node, r_node
        count[node] = 0
        stack.append((r_node, mid, hi))
        stack.append((l_node, lo, mid))

    v0, e1, e2, degenerate = _triangle_data(mesh)
    return AccelerationStructure(
        mesh=mesh,
        node_min=_frozen(np.array(node_min), np.float64),
        node_max=_frozen(np.array(node_max), np.float64),
        node_left=_frozen(np.array(left), np.int64),
        node_right=_frozen(np.array(right), np.int64),
        node_start=_frozen(np.array(start), np.int64),
        node_count=_frozen(np.array(count), np.int64),
        tri_order=_frozen(order, np.int64),
        v0=_frozen(v0, np.float64),
        e1=_frozen(e1, np.float64),
        e2=_frozen(e2, np.float64),
        degenerate=_frozen(degenerate, bool),
    )


def _moller_trumbore(o, d, v0, e1, e2, degenerate):
    """two-sided ray/triangle test on matched pairs; returns (hit, t, u, v)"""
    p = cross(d, e2)
    det = dot(e1, p)
    with np.errstate(divide='ignore', invalid='ignore'):
        inv_det = 1.0 / det
        s = o - v0
        u = dot(s, p) * inv_det
        q = cross(s, e1)
        v = dot(d, q) * inv_det
        t = dot(e2, q) * inv_det
    ok = (det != 0.0) & ~degenerate & np.isfinite(t)
    ok &= (u >= -BARY_EPS) & (v >= -BARY_EPS) & (u + v <= 1.0 + BARY_EPS)
    return ok, t, u, v


def _update_best(ray, tri, t, u, v, best_t, best_tri, best_u, best_v):
    """keep the lexicographic minimum (t, triangle id) per ray"""
    if ray.size == 0:
        return
    order = np.lexsort((tri, t, ray))
    ray, tri, t, u, v = ray[order], tri[order], t[order], u[order], v[order]
    _, first = np.unique(ray, return_index=True)
    ray, tri, t, u, v = ray[first], tri[first], t[first], u[first], v[first]
    cur_t = best_t[ray]
    cur_tri = best_tri[ray]
    better = (t < cur_t) | ((t == cur_t) & ((cur_tri < 0) | (tri < cur_tri)))
    ray, tri, t, u, v = ray[better], tri[better], t[better], u[better], v[better]
    best_t[ray] = t
    best_tri[ray] = tri
    best_u[ray] = u
    best_v[ray] = v


def _finish_hits(best_tri, best_u, best_v, best_t) -> Hits:
    valid = best_tri >= 0
    u = np.clip(best_u, 0.0, 1.0)
    v = np.clip(best_v, 0.0, 1.0)
    v = np.minimum(v, 1.0 - u)
    w0 = np.where(valid, 1.0 - u - v, 0.0)
    w1 = np.where(valid, u, 0.0)
    t = np.where(valid, best_t, np.inf)
    return Hits(best_tri, w0, w1, t)


def _ray_limits(n: int, tmin, tmax):
    tmin = np.zeros(n) if tmin is None else np.broadcast_to(np.asarray(tmin, dtype=np.float64), (n,))
    tmax = np.full(n, np.inf) if tmax is None else np.broadcast_to(np.asarray(tmax, dtype=np.float64), (n,))
    return tmin, np.array(tmax, dtype=np.float64)


def intersect_rays(accel: AccelerationStructure, origins: np.ndarray, directions: np.ndarray,
                   tmin=None, tmax=None) -> Hits:
    """nearest hits for a batch of rays by breadth-first BVH frontier traversal"""
    origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    directions = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
    n = origins.shape[0]
    tmin, best_t = _ray_limits(n, tmin, tmax)
    best_tri = np.full(n, -1, dtype=np.int64)
    best_u = np.zeros(n)
    best_v = np.zeros(n)
    if n == 0:
        return _finish_hits(best_tri, best_u, best_v, best_t)

    with np.errstate(divide='ignore'):
        inv_d = 1.0 / directions

    f_ray = np.arange(n, dtype=np.int64)
    f_node = np.zeros(n, dtype=np.int64)
    while f_ray.size:
        o = origins[f_ray]
        inv = inv_d[f_ray]
        with np.errstate(invalid='ignore'):
            t1 = (accel.node_min[f_node] - o) * inv
            t2 = (accel.node_max[f_node] - o) * inv
        t_near = np.fmax.reduce(np.fmin(t1, t2), axis=1)
        t_far = np.fmin.reduce(np.fmax(t1, t2), axis=1)
        keep = (t_near <= t_far) & (t_far >= tmin[f_ray]) & (t_near <= best_t[f_ray])
        f_ray, f_node = f_ray[keep], f_node[keep]

        leaf = accel.node_left[f_node] < 0
        l_ray, l_node = f_ray[leaf], f_node[leaf]
        if l_ray.size:
            counts = accel.node_count[l_node]
            pair_ray = np.repeat(l_ray, counts)
            first = np.repeat(accel.node_start[l_node], counts)
            offsets = np.arange(pair_ray.size) - np.repeat(np.cumsum(counts) - counts, counts)
            tri = accel.tri_order[first + offsets]

            hit, t, u, v = _moller_trumbore(origins[pair_ray], directions[pair_ray],
                                            accel.v0[tri], accel.e1[tri], accel.e2[tri],
                                            accel.degenerate[tri])
            hit &= (t > tmin[pair_ray]) & (t <= best_t[pair_ray])
            _update_best(pair_ray[hit], tri[hit], t[hit], u[hit], v[hit],
                         best_t, best_tri, best_u, best_v)

        i_ray, i_node = f_ray[~leaf], f_node[~leaf]
        f_ray = np.concatenate([i_ray, i_ray])
        f_node = np.concatenate([accel.node_left[i_node], accel.node_right[i_node]])

    return _finish_hits(best_tri, best_u, best_v, best_t)


def intersect_brute_force(accel: AccelerationStructure, origins: np.ndarray, directions: np.ndarray,
                          tmin=None, tmax=None, chunk: int = 1 << 20) -> Hits:
    """reference nearest-hit over every triangle (test oracle)"""
    origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    directions = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
    n = origins.shape[0]
    n_tri = accel.mesh.n_faces
    tmin, best_t = _ray_limits(n, tmin, tmax)
    best_tri = np.full(n, -1, dtype=np.int64)
    best_u = np.zeros(n)
    best_v = np.zeros(n)

    rays_per_chunk = max(1, chunk // n_tri)
    for lo in range(0, n, rays_per_chunk):
        ray = np.repeat(np.arange(lo, min(n, lo + rays_per_chunk)), n_tri)
        tri = np.tile(np.arange(n_tri), min(n, lo + rays_per_chunk) - lo)
        hit, t, u, v = _moller_trumbore(origins[ray], directions[ray], accel.v0[tri],
                                        accel.e1[tri], accel.e2[tri], accel.degenerate[tri])
        hit &= (t > tmin[ray]) & (t <= best_t[ray])
        _update_best(ray[hit], tri[hit], t[hit], u[hit], v[hit], best_t, best_tri, best_u, best_v)
    return _finish_hits(best_tri, best_u, best_v, best_t)


def intersect(accel: AccelerationStructure, ray: Ray) -> Optional[Hit]:
    """nearest hit of one ray, or None"""
    hits = intersect_rays(accel, ray.origin[None], ray.direction[None], ray.tmin, ray.tmax)
    if not hits.valid[0]:
        return None
    return Hit(int(hits.triangle[0]), (float(hits.w0[0]), float(hits.w1[0])), float(hits.t[0]))


def occluded(accel: AccelerationStructure, origins: np.ndarray, directions: np.ndarray,
             tmax=None) -> np.ndarray:
    return intersect_rays(accel, origins, directions, tmax=tmax).valid


def shade_points(mesh: TriangleMesh, hits: Hits, origins: np.ndarray, directions: np.ndarray) -> ShadePoints:
    """interpolate attributes at valid hits (pass only valid hits)"""
    faces = mesh.faces[hits.triangle]
    w0 = hits.w0[:, None]
    w1 = hits.w1[:, None]
    w2 = 1.0 - w0 - w1

    p = mesh.positions
    p0, p1, p2 = p[faces[:, 0]], p[faces[:, 1]], p[faces[:, 2]]
    ng = normalize(cross(p1 - p0, p2 - p0), fallback=np.array([0.0, 0.0, 1.0]))
    nrm = mesh.normals
    n = w0 * nrm[faces[:, 0]] + w1 * nrm[faces[:, 1]] + w2 * nrm[faces[:, 2]]
    n = normalize(n)
    zero = ~np.any(n != 0.0, axis=1)
    n[zero] = ng[zero]

    uv = w0 * mesh.uvs[faces[:, 0]] + w1 * mesh.uvs[faces[:, 1]] + w2 * mesh.uvs[faces[:, 2]]
    wo = -directions
    position = origins + hits.t[:, None] * directions

    #two-sided shading: face the incoming ray
    back = dot(ng, wo) < 0.0
    ng[back] = -ng[back]
    n[back] = -n[back]
    bent = dot(n, wo) <= 0.0
    n[bent] = ng[bent]

    return ShadePoints(position, n, ng, uv, wo, hits.triangle.copy())


def shade_point_from(hit: Hit, mesh: TriangleMesh, ray: Ray) -> ShadePoint:
    """single-hit wrapper over shade_points"""
    hits = Hits(np.array([hit.triangle]), np.array([hit.barycentric[0]]),
                np.array([hit.barycentric[1]]), np.array([hit.t]))
    sp = shade_points(mesh, hits, np.asarray(ray.origin, dtype=np.float64)[None],
                      np.asarray(ray.direction, dtype=np.float64)[None])
    return ShadePoint(sp.position[0], sp.normal[0], sp.geometric_normal[0], sp.uv[0], sp.wo[0])


def spawn_origins(points: ShadePoints, directions: np.ndarray, eps: float) -> np.ndarray:
    """offset along the geometric normal, on the side the new ray leaves from"""
    side = np.where(dot(points.geometric_normal, directions) >= 0.0, 1.0, -1.0)
    return points.position + (eps * side)[:, None] * points.geometric_normal


#cameras

@dataclass(frozen=True)
class Camera:
    """pinhole camera looking down -Z in camera space, +Y up, +X right"""
    world_from_camera: np.ndarray
    fov_y: float
    width: int
    height: int

    def __post_init__(self):
        m = np.array(self.world_from_camera, dtype=np.float64).reshape(4, 4)
        m.setflags(write=False)
        object.__setattr__(self, 'world_from_camera', m)
        rot = m[:3, :3]
        if abs(np.linalg.det(rot) - 1.0) > 1e-5 or not np.allclose(rot.T @ rot, np.eye(3), atol=1e-5):
            raise ValueError("camera rotation is not orthonormal with determinant 1")
        if not (0.0 < self.fov_y < np.pi):
            raise ValueError(f"fov_y must be in (0, pi), got {self.fov_y}")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"camera resolution must be >= 1, got {self.width}x{self.height}")

    @property
    def origin(self) -> np.ndarray:
        return self.world_from_camera[:3, 3]

    @property
    def rotation(self) -> np.ndarray:
        return self.world_from_camera[:3, :3]

    @property
    def forward(self) -> np.ndarray:
        return -self.rotation[:, 2]

    @property
    def tan_half(self) -> float:
        return float(np.tan(0.5 * self.fov_y))

    @property
    def aspect(self) -> float:
        return self.width / self.height

    @property
    def focal_pixels(self) -> float:
        """focal length in pixels (vertical)"""
        return 0.5 * self.height / self.tan_half

    def pixel_directions(self, px: np.ndarray, py: np.ndarray) -> np.ndarray:
        """world-space unit directions through continuous pixel coordinates"""
        x = (2.0 * np.asarray(px, dtype=np.float64) / self.width - 1.0) * self.tan_half * self.aspect
        y = (1.0 - 2.0 * np.asarray(py, dtype=np.float64) / self.height) * self.tan_half
        d_cam = np.stack([x, y, -np.ones_like(x)], axis=-1)
        return normalize(d_cam @ self.rotation.T)

    def pixel_centers(self) -> Tuple[np.ndarray, np.ndarray]:
        """(H*W,) continuous coordinates of every pixel center, row-major"""
        ys, xs = np.mgrid[0:self.height, 0:self.width]
        return xs.ravel() + 0.5, ys.ravel() + 0.5

    def to_camera(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.origin) @ self.rotation

    def project(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """continuous pixel coordinates and view depth (-z) of world points"""
        q = self.to_camera(points)
        depth = -q[:, 2]
        with np.errstate(divide='ignore', invalid='ignore'):
            px = (q[:, 0] / depth / (self.tan_half * self.aspect) + 1.0) * 0.5 * self.width
            py = (1.0 - q[:, 1] / depth / self.tan_half) * 0.5 * self.height
        return px, py, depth


def look_at(eye: Sequence[float], target: Sequence[float], up=(0.0, 1.0, 0.0)) -> np.ndarray:
    """world-from-camera matrix for a camera at eye looking at target"""
    eye = np.asarray(eye, dtype=np.float64)
    f = normalize(np.asarray(target, dtype=np.float64) - eye)
    up = np.asarray(up, dtype=np.float64)
    if np.linalg.norm(cross(f, up)) < 1e-9:
        up = np.array([0.0, 0.0, 1.0])
    x = normalize(cross(f, up))
    y = cross(x, f)
    m = np.eye(4)
    m[:3, 0] = x
    m[:3, 1] = y
    m[:3, 2] = -f
    m[:3, 3] = eye
    return m


def orbit_camera(index: int, n_frames: int, elevation: float, radius: float, fov: float,
                 width: int, height: int, center=(0.0, 0.0, 0.0)) -> Camera:
    """camera of an evenly spaced orbit; index wraps modulo n_frames"""
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    if radius <= 0:
        raise ValueError("radius must be > 0")
    azimuth = 2.0 * np.pi * (index % n_frames) / n_frames
    center = np.asarray(center, dtype=np.float64)
    eye = center + radius * np.array([
        np.cos(elevation) * np.cos(azimuth),
        np.sin(elevation),
        np.cos(elevation) * np.sin(azimuth),
    ])
    return Camera(look_at(eye, center), fov, width, height)


def generate_orbit(n_frames: int = 121, elevation: float = 0.0, radius: float = 2.0,
                   fov: float = None, width: int = 1280, height: int = 704,
                   center=(0.0, 0.0, 0.0)) -> List[Camera]:
    """fixed-elevation 360 degree orbit, frame 0 at azimuth 0 (+X)"""
    if fov is None:
        raise ValueError("fov is required (the orbit does not guess intrinsics)")
    return [orbit_camera(i, n_frames, elevation, radius, fov, width, height, center)
            for i in range(n_frames)]


def augmented_order(n_frames: int, reverse: bool, offset: int) -> List[int]:
    """frame order of a cyclic orbit started at offset, optionally reversed"""
    step = -1 if reverse else 1
    return [(offset + step * k) % n_frames for k in range(n_frames)]


def augment_orbit(cameras: List[Camera], reverse: bool, offset: int) -> List[Camera]:
    return [cameras[i] for i in augmented_order(len(cameras), reverse, offset)]


def save_cameras(path: Path, cameras: List[Camera]):
    """one frame per line: 16 row-major matrix values, fov_y, width, height"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w') as f:
        f.write("# world_from_camera (4x4 row-major) fov_y width height\n")
        for cam in cameras:
            values = ' '.join(repr(float(x)) for x in cam.world_from_camera.ravel())
            f.write(f"{values} {float(cam.fov_y)!r} {cam.width} {cam.height}\n")


def load_cameras(path: Path) -> List[Camera]:
    path = Path(path)
    if not path.exists():
        raise InputError("camera file not found", str(path))
    cameras = []
    with open(path) as f:
        for line_no, raw in enumerate(f, start=1):
            line = raw.split('#', 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 19:
                raise InputError(f"line {line_no}: expected 19 values, got {len(parts)}", str(path))
            try:
                matrix = np.array([float(x) for x in parts[:16]]).reshape(4, 4)
                cameras.append(Camera(matrix, float(parts[16]), int(parts[17]), int(parts[18])))
            except ValueError as e:
                raise InputError(f"line {line_no}: {e}", str(path))
    return cameras
