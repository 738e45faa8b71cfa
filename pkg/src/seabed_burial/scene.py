"""Scene data types and the on-disk formats (scene.json, OBJ, ASCII PLY, P5 PGM)."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.spatial import ConvexHull, QhullError
from scipy.spatial.distance import pdist

from .errors import MissingFile, ParseError, ValidationError
from .geometry import CameraIntrinsics, RigidTransform, quat_from_axis_angle


class Label(enum.IntEnum):
    UNLABELED = 0
    OBJECT = 1
    FLOOR = 2


@dataclass(frozen=True)
class SymmetrySet:
    """Rotation-only symmetries: explicit members plus discretised continuous axes."""

    discrete: tuple = ()
    axes: tuple = ()  # ((unit 3-vector, k), ...)

    def __post_init__(self):
        disc = tuple(self.discrete)
        for s in disc:
            if not isinstance(s, RigidTransform):
                raise ValidationError("discrete symmetries must be RigidTransform values")
            if np.any(s.t != 0.0):
                raise ValidationError("discrete symmetries must have zero translation")
        axes = []
        for d, k in self.axes:
            d = np.asarray(d, dtype=float).reshape(3)
            n = np.linalg.norm(d)
            if not np.isfinite(n) or n == 0:
                raise ValidationError("symmetry axis must be a non-zero vector")
            if int(k) != k or k < 2:
                raise ValidationError(f"axis discretisation k must be an integer >= 2, got {k}")
            axes.append((d / n, int(k)))
        object.__setattr__(self, "discrete", disc)
        object.__setattr__(self, "axes", tuple(axes))

    @classmethod
    def cylinder(cls, axis=(0.0, 0.0, 1.0), k: int = 64) -> SymmetrySet:
        return cls(axes=((axis, k),))


def expand_symmetries(s: SymmetrySet) -> list[RigidTransform]:
    """Identity, then every axis step 2*pi*m/k, then the discrete members (duplicates dropped)."""
    out = [RigidTransform.identity()]
    for d, k in s.axes:
        for m in range(1, k):
            out.append(RigidTransform(quat_from_axis_angle(d, 2.0 * math.pi * m / k), np.zeros(3)))
    for member in s.discrete:
        if all(abs(abs(float(member.q @ o.q)) - 1.0) > 1e-12 for o in out):
            out.append(member)
    return out


def _diameter(vertices: np.ndarray) -> float:
    pts = vertices
    if len(pts) > 64:
        try:
            pts = vertices[ConvexHull(vertices).vertices]
        except QhullError:
            pass  # flat or degenerate: fall back to all vertices
    if len(pts) < 2:
        return 0.0
    if len(pts) <= 4000:
        return float(pdist(pts).max())
    best = 0.0
    for i in range(0, len(pts), 1000):
        block = pts[i : i + 1000]
        d2 = ((block[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
        best = max(best, float(d2.max()))
    return math.sqrt(best)


@dataclass(frozen=True, eq=False)
class ReferenceModel:
    vertices: np.ndarray
    triangles: np.ndarray
    symmetries: SymmetrySet = field(default_factory=SymmetrySet)
    name: str = "model"
    diameter: float = field(init=False)

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float).reshape(-1, 3)
        f = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if len(f) == 0:
            raise ValidationError("mesh has no triangles")
        if f.min() < 0 or f.max() >= len(v):
            raise ValidationError("triangle index out of range")
        if not np.all(np.isfinite(v)):
            raise ValidationError("non-finite vertex coordinate")
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", f)
        diam = _diameter(v)
        if not diam > 0:
            raise ValidationError("mesh diameter must be positive")
        object.__setattr__(self, "diameter", diam)

    def triangle_areas(self) -> np.ndarray:
        a, b, c = (self.vertices[self.triangles[:, i]] for i in range(3))
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def with_symmetries(self, symmetries: SymmetrySet) -> ReferenceModel:
        return ReferenceModel(self.vertices, self.triangles, symmetries, self.name)


def sample_surface(model: ReferenceModel, n: int, seed: int, return_triangles: bool = False):
    """``n`` points uniformly distributed over the mesh surface (area weighted).

    With ``return_triangles`` also returns the triangle index of every point.
    """
    if n < 1:
        raise ValidationError("need at least one sample")
    areas = model.triangle_areas()
    total = areas.sum()
    if not total > 0:
        raise ValidationError("mesh has zero surface area")
    rng = np.random.default_rng(seed)
    tri = rng.choice(len(areas), size=n, p=areas / total)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    a, b, c = (model.vertices[model.triangles[tri, i]] for i in range(3))
    pts = (1 - r1)[:, None] * a + (r1 * (1 - r2))[:, None] * b + (r1 * r2)[:, None] * c
    return (pts, tri) if return_triangles else pts


@dataclass(frozen=True, eq=False)
class LabeledPointCloud:
    points: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        p = np.ascontiguousarray(self.points, dtype=float).reshape(-1, 3)
        lab = np.ascontiguousarray(self.labels, dtype=np.int8).reshape(-1)
        if len(lab) != len(p):
            raise ValidationError("labels and points differ in length")
        if len(lab) and (lab.min() < 0 or lab.max() > 2):
            raise ValidationError("labels must be 0 (unlabeled), 1 (object) or 2 (floor)")
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "labels", lab)

    @classmethod
    def unlabeled(cls, points) -> LabeledPointCloud:
        points = np.asarray(points, dtype=float).reshape(-1, 3)
        return cls(points, np.zeros(len(points), dtype=np.int8))

    def __len__(self):
        return len(self.points)

    def select(self, label: Label) -> np.ndarray:
        return self.points[self.labels == label]

    @property
    def is_labeled(self) -> bool:
        return bool(np.any(self.labels != Label.UNLABELED))


@dataclass(frozen=True, eq=False)
class BinaryMask:
    values: np.ndarray  # (height, width) bool

    def __post_init__(self):
        v = np.asarray(self.values, dtype=bool)
        if v.ndim != 2:
            raise ValidationError("mask must be 2-D")
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class CameraView:
    id: str
    intrinsics: CameraIntrinsics
    world_pose: RigidTransform  # camera -> world
    hypotheses: tuple = ()  # object -> camera, metric
    mask_path: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "hypotheses", tuple(self.hypotheses))


@dataclass(frozen=True, eq=False)
class SceneInput:
    cameras: tuple
    cloud: LabeledPointCloud
    model: ReferenceModel | None = None
    masks: dict = field(default_factory=dict)  # camera id -> BinaryMask
    metric: bool = False

    def __post_init__(self):
        cams = tuple(self.cameras)
        ids = [c.id for c in cams]
        if len(set(ids)) != len(ids):
            raise ValidationError("camera ids must be unique")
        by_id = {c.id: c for c in cams}
        for cid, m in self.masks.items():
            if cid not in by_id:
                raise ValidationError(f"mask for unknown camera {cid!r}")
            K = by_id[cid].intrinsics
            if (m.width, m.height) != (K.width, K.height):
                raise ValidationError(
                    f"mask for camera {cid!r} is {m.width}x{m.height}, camera is {K.width}x{K.height}"
                )
        object.__setattr__(self, "cameras", cams)

    def camera(self, cid: str) -> CameraView:
        for c in self.cameras:
            if c.id == cid:
                return c
        raise KeyError(cid)


# --------------------------------------------------------------------------- OBJ


def parse_obj(text: str, name: str = "model", symmetries: SymmetrySet | None = None) -> ReferenceModel:
    verts, faces = [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        key = parts[0]
        try:
            if key == "v":
                if len(parts) < 4:
                    raise ParseError(f"line {lineno}: vertex needs 3 coordinates")
                xyz = [float(x) for x in parts[1:4]]
                if not all(math.isfinite(x) for x in xyz):
                    raise ParseError(f"line {lineno}: non-finite vertex")
                verts.append(xyz)
            elif key == "f":
                if len(parts) != 4:
                    raise ParseError(f"line {lineno}: only triangular faces are supported")
                idx = []
                for tok in parts[1:]:
                    i = int(tok.split("/")[0])
                    if i == 0:
                        raise ParseError(f"line {lineno}: OBJ indices start at 1")
                    idx.append(i - 1 if i > 0 else len(verts) + i)
                faces.append(idx)
        except ValueError as e:
            if isinstance(e, ValidationError):
                raise
            raise ParseError(f"line {lineno}: {e}") from None
    if not faces:
        raise ValidationError("mesh has no triangles")
    return ReferenceModel(
        np.array(verts, dtype=float).reshape(-1, 3),
        np.array(faces, dtype=np.int64),
        symmetries or SymmetrySet(),
        name,
    )


def format_obj(model: ReferenceModel) -> str:
    lines = [f"v {x!r} {y!r} {z!r}" for x, y, z in model.vertices.tolist()]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in model.triangles.tolist()]
    return "\n".join(lines) + "\n"


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except FileNotFoundError:
        raise MissingFile(f"{path} does not exist") from None
    except IsADirectoryError:
        raise MissingFile(f"{path} is a directory") from None


def _read_text(path) -> str:
    try:
        return _read_bytes(path).decode("utf-8")
    except UnicodeDecodeError as e:
        raise ParseError(f"{path}: not UTF-8 text ({e})") from None


def load_mesh(path, symmetries: SymmetrySet | None = None) -> ReferenceModel:
    return parse_obj(_read_text(path), Path(path).stem, symmetries)


def save_mesh(model: ReferenceModel, path) -> None:
    Path(path).write_text(format_obj(model))


# --------------------------------------------------------------------------- PLY


def parse_ply(text: str) -> LabeledPointCloud:
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ParseError("missing 'ply' magic")
    n_vertex = None
    props: list[str] = []
    in_vertex = False
    body_start = None
    fmt_ok = False
    for i, raw in enumerate(lines[1:], 1):
        parts = raw.split()
        if not parts or parts[0] in ("comment", "obj_info"):
            continue
        if parts[0] == "format":
            if parts[1:] != ["ascii", "1.0"]:
                raise ParseError("only 'format ascii 1.0' is supported")
            fmt_ok = True
        elif parts[0] == "element":
            if len(parts) != 3:
                raise ParseError(f"bad element line: {raw!r}")
            in_vertex = parts[1] == "vertex"
            if in_vertex:
                if n_vertex is not None:
                    raise ParseError("duplicate vertex element")
                try:
                    n_vertex = int(parts[2])
                except ValueError:
                    raise ParseError(f"bad vertex count {parts[2]!r}") from None
                if n_vertex < 0:
                    raise ParseError("negative vertex count")
                if props:
                    raise ParseError("vertex element must come first")
        elif parts[0] == "property":
            if len(parts) < 3:
                raise ParseError(f"bad property line: {raw!r}")
            if in_vertex:
                if parts[1] == "list":
                    raise ParseError("list properties are not supported on vertices")
                props.append(parts[-1])
        elif parts[0] == "end_header":
            body_start = i + 1
            break
        else:
            raise ParseError(f"unexpected header line: {raw!r}")
    if body_start is None:
        raise ParseError("missing end_header")
    if not fmt_ok:
        raise ParseError("missing format line")
    if n_vertex is None:
        raise ParseError("no vertex element")
    try:
        ix, iy, iz = props.index("x"), props.index("y"), props.index("z")
    except ValueError:
        raise ParseError("vertex element needs x, y and z properties") from None
    il = props.index("label") if "label" in props else None
    body = lines[body_start : body_start + n_vertex]
    if len(body) < n_vertex:
        raise ParseError(f"expected {n_vertex} vertex rows, found {len(body)}")
    pts = np.empty((n_vertex, 3))
    labels = np.zeros(n_vertex, dtype=np.int64)
    for r, row in enumerate(body):
        vals = row.split()
        if len(vals) != len(props):
            raise ParseError(f"vertex row {r} has {len(vals)} values, expected {len(props)}")
        try:
            pts[r] = float(vals[ix]), float(vals[iy]), float(vals[iz])
            if il is not None:
                labels[r] = int(vals[il])
        except ValueError as e:
            raise ParseError(f"vertex row {r}: {e}") from None
    if not np.all(np.isfinite(pts)):
        raise ParseError("non-finite vertex coordinate")
    if n_vertex and (labels.min() < 0 or labels.max() > 2):
        raise ValidationError("labels must be 0, 1 or 2")
    return LabeledPointCloud(pts, labels)


def format_ply(cloud: LabeledPointCloud) -> str:
    head = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(cloud)}",
        "property double x",
        "property double y",
        "property double z",
        "property uchar label",
        "end_header",
    ]
    rows = [
        f"{x!r} {y!r} {z!r} {lab}"
        for (x, y, z), lab in zip(cloud.points.tolist(), cloud.labels.tolist())
    ]
    return "\n".join(head + rows) + "\n"


def load_cloud(path) -> LabeledPointCloud:
    return parse_ply(_read_text(path))


def save_cloud(cloud: LabeledPointCloud, path) -> None:
    Path(path).write_text(format_ply(cloud))


# --------------------------------------------------------------------------- PGM


def parse_pgm(data: bytes) -> BinaryMask:
    tokens: list[bytes] = []
    pos = 0
    n = len(data)
    while len(tokens) < 4:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ParseError("truncated PGM header")
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise ParseError("only binary P5 PGM is supported")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise ParseError("bad PGM header numbers") from None
    if w < 1 or h < 1:
        raise ParseError("PGM dimensions must be positive")
    if maxval != 255:
        raise ParseError("PGM maxval must be 255")
    pos += 1  # single whitespace byte after maxval
    raster = data[pos : pos + w * h]
    if len(raster) != w * h:
        raise ParseError(f"PGM raster has {len(raster)} bytes, expected {w * h}")
    return BinaryMask(np.frombuffer(raster, dtype=np.uint8).reshape(h, w) > 0)


def format_pgm(mask: BinaryMask) -> bytes:
    head = f"P5\n{mask.width} {mask.height}\n255\n".encode()
    return head + (mask.values.astype(np.uint8) * 255).tobytes()


def load_mask(path) -> BinaryMask:
    return parse_pgm(_read_bytes(path))


def save_mask(mask: BinaryMask, path) -> None:
    Path(path).write_bytes(format_pgm(mask))


# --------------------------------------------------------------------------- scene.json


def pose_to_json(T: RigidTransform) -> dict:
    return {"q_wxyz": T.q.tolist(), "t": T.t.tolist()}


def pose_from_json(d) -> RigidTransform:
    if not isinstance(d, dict):
        raise ParseError("pose must be an object with q_wxyz and t")
    q, t = _vec(d, "q_wxyz", 4), _vec(d, "t", 3)
    return RigidTransform(q, t)


def symmetry_to_json(s: SymmetrySet) -> dict:
    return {
        "discrete": [m.q.tolist() for m in s.discrete],
        "axes": [{"dir": d.tolist(), "k": k} for d, k in s.axes],
    }


def symmetry_from_json(d) -> SymmetrySet:
    if d is None:
        return SymmetrySet()
    if not isinstance(d, dict):
        raise ParseError("symmetry must be an object")
    disc = []
    for item in d.get("discrete", []):
        q = item.get("q_wxyz") if isinstance(item, dict) else item
        disc.append(RigidTransform(_as_vec(q, 4, "discrete symmetry"), np.zeros(3)))
    axes = []
    for a in d.get("axes", []):
        if not isinstance(a, dict) or "k" not in a:
            raise ParseError("symmetry axis needs 'dir' and 'k'")
        k = a["k"]
        if not isinstance(k, int) or isinstance(k, bool):
            raise ParseError("symmetry axis 'k' must be an integer")
        axes.append((_vec(a, "dir", 3), k))
    return SymmetrySet(tuple(disc), tuple(axes))


def _as_vec(v, n, what) -> np.ndarray:
    if not isinstance(v, list) or len(v) != n:
        raise ParseError(f"{what} must be a list of {n} numbers")
    if not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
        raise ParseError(f"{what} must contain numbers only")
    return np.array(v, dtype=float)


def _vec(d: dict, key: str, n: int) -> np.ndarray:
    if key not in d:
        raise ParseError(f"missing key {key!r}")
    return _as_vec(d[key], n, key)


def _num(d: dict, key: str) -> float:
    v = d.get(key)
    if not isinstance(v, (int, float)) or isinstance(v, bool):
        raise ParseError(f"{key!r} must be a number")
    return float(v)


def _resolve(base: Path, p) -> Path:
    if not isinstance(p, str):
        raise ParseError("file references must be strings")
    return base / p


def parse_scene(doc, base_dir, model: ReferenceModel | None = None) -> SceneInput:
    """Build a validated ``SceneInput`` from an already-decoded scene document."""
    base = Path(base_dir)
    if not isinstance(doc, dict):
        raise ParseError("scene must be a JSON object")
    for key in ("metric", "cameras", "cloud"):
        if key not in doc:
            raise ParseError(f"scene is missing {key!r}")
    if not isinstance(doc["metric"], bool):
        raise ParseError("'metric' must be a boolean")
    if not isinstance(doc["cameras"], list):
        raise ParseError("'cameras' must be a list")
    cameras, masks = [], {}
    for c in doc["cameras"]:
        if not isinstance(c, dict):
            raise ParseError("camera entries must be objects")
        if not isinstance(c.get("id"), str):
            raise ParseError("camera 'id' must be a string")
        for k in ("width", "height"):
            if not isinstance(c.get(k), int) or isinstance(c.get(k), bool):
                raise ParseError(f"camera {k!r} must be an integer")
        K = CameraIntrinsics(_num(c, "f"), _num(c, "cx"), _num(c, "cy"), c["width"], c["height"])
        hyps = c.get("hypotheses")
        if not isinstance(hyps, list):
            raise ParseError("camera 'hypotheses' must be a list")
        view = CameraView(
            c["id"],
            K,
            RigidTransform(_vec(c, "q_wxyz", 4), _vec(c, "t", 3)),
            tuple(pose_from_json(h) for h in hyps),
            c.get("mask"),
        )
        if view.mask_path is not None:
            masks[view.id] = load_mask(_resolve(base, view.mask_path))
        cameras.append(view)
    cloud = load_cloud(_resolve(base, doc["cloud"]))
    if model is None and "model" in doc:
        m = doc["model"]
        if not isinstance(m, dict) or "mesh" not in m:
            raise ParseError("'model' must be an object with a 'mesh' path")
        model = load_mesh(_resolve(base, m["mesh"]), symmetry_from_json(m.get("symmetry")))
    return SceneInput(tuple(cameras), cloud, model, masks, doc["metric"])


def load_scene(path, model: ReferenceModel | None = None) -> SceneInput:
    text = _read_text(path)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: {e}") from None
    return parse_scene(doc, Path(path).parent, model)


def scene_document(scene: SceneInput, cloud_name="cloud.ply", mesh_name="model.obj") -> dict:
    cams = []
    for c in scene.cameras:
        K = c.intrinsics
        entry = {
            "id": c.id,
            "f": K.f,
            "cx": K.cx,
            "cy": K.cy,
            "width": K.width,
            "height": K.height,
            **pose_to_json(c.world_pose),
            "hypotheses": [pose_to_json(h) for h in c.hypotheses],
        }
        if c.id in scene.masks:
            entry["mask"] = f"masks/{c.id}.pgm"
        cams.append(entry)
    doc = {"metric": scene.metric, "cameras": cams, "cloud": cloud_name}
    if scene.model is not None:
        doc["model"] = {"mesh": mesh_name, "symmetry": symmetry_to_json(scene.model.symmetries)}
    return doc


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


def save_scene(scene: SceneInput, directory) -> Path:
    """Write scene.json plus cloud.ply, model.obj and masks/ into ``directory``."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    if scene.masks:
        (out / "masks").mkdir(exist_ok=True)
    for cid, m in sorted(scene.masks.items()):
        save_mask(m, out / "masks" / f"{cid}.pgm")
    save_cloud(scene.cloud, out / "cloud.ply")
    if scene.model is not None:
        save_mesh(scene.model, out / "model.obj")
    doc = scene_document(scene)
    path = out / "scene.json"
    path.write_text(dump_json(doc))
    return path


def with_cloud(scene: SceneInput, cloud: LabeledPointCloud) -> SceneInput:
    return replace(scene, cloud=cloud)

