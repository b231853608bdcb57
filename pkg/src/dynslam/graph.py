"""Variable keys, value containers, factors and sparse linearization."""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp

from .se3 import Pose, compose_rt, se3_exp


class StructureError(ValueError):
    """Malformed problem: missing keys, wrong dimensions, bad layouts."""


class KeyKind(enum.IntEnum):
    CAMERA_POSE = 0
    OBJECT_MOTION = 1
    OBJECT_POSE = 2
    STATIC_POINT = 3
    DYNAMIC_POINT_WORLD = 4
    DYNAMIC_POINT_LOCAL = 5


POSE_KINDS = frozenset({KeyKind.CAMERA_POSE, KeyKind.OBJECT_MOTION, KeyKind.OBJECT_POSE})

_KEY_NAMES = {
    KeyKind.CAMERA_POSE: "X",
    KeyKind.OBJECT_MOTION: "H",
    KeyKind.OBJECT_POSE: "L",
    KeyKind.STATIC_POINT: "S",
    KeyKind.DYNAMIC_POINT_WORLD: "D",
    KeyKind.DYNAMIC_POINT_LOCAL: "M",
}


class Key(NamedTuple):
    """State variable identifier.

    ``a``/``b`` hold the indices in the order of the constructor helpers below,
    e.g. ``ObjectMotion(j, k)`` is ``Key(OBJECT_MOTION, j, k)`` and denotes the
    world-frame motion of object ``j`` from ``k - 1`` to ``k``.
    """

    kind: KeyKind
    a: int
    b: int = -1

    @property
    def dim(self) -> int:
        return 6 if self.kind in POSE_KINDS else 3

    @property
    def is_pose(self) -> bool:
        return self.kind in POSE_KINDS

    def __str__(self):
        name = _KEY_NAMES[self.kind]
        return f"{name}({self.a})" if self.b < 0 else f"{name}({self.a},{self.b})"


def CameraPose(k: int) -> Key:
    return Key(KeyKind.CAMERA_POSE, k)


def ObjectMotion(j: int, k: int) -> Key:
    return Key(KeyKind.OBJECT_MOTION, j, k)


def ObjectPose(j: int, k: int) -> Key:
    return Key(KeyKind.OBJECT_POSE, j, k)


def StaticPoint(i: int) -> Key:
    return Key(KeyKind.STATIC_POINT, i)


def DynamicPointWorld(i: int, k: int) -> Key:
    return Key(KeyKind.DYNAMIC_POINT_WORLD, i, k)


def DynamicPointLocal(i: int, j: int) -> Key:
    return Key(KeyKind.DYNAMIC_POINT_LOCAL, i, j)


class Values(Mapping):
    """Immutable assignment of poses and points to keys.

    Poses and points are held in stacked arrays; the tangent vector is laid out
    in sorted key order, 6 entries per pose and 3 per point.
    """

    def __init__(self, items: Mapping[Key, object] | Iterable[tuple[Key, object]] = ()):
        if isinstance(items, Mapping):
            items = items.items()
        pose_items, point_items = {}, {}
        for key, val in items:
            key = Key(KeyKind(key[0]), *key[1:])
            if key.is_pose:
                if not isinstance(val, Pose):
                    raise StructureError(f"{key} expects a Pose, got {type(val).__name__}")
                pose_items[key] = val
            else:
                arr = np.asarray(val, dtype=float)
                if arr.shape != (3,):
                    raise StructureError(f"{key} expects a 3-vector, got shape {arr.shape}")
                point_items[key] = arr
        self._keys = tuple(sorted([*pose_items, *point_items]))
        self._pose_keys = tuple(k for k in self._keys if k.is_pose)
        self._point_keys = tuple(k for k in self._keys if not k.is_pose)
        n_pose = len(self._pose_keys)
        self._R = np.empty((n_pose, 3, 3))
        self._t = np.empty((n_pose, 3))
        for n, k in enumerate(self._pose_keys):
            self._R[n] = pose_items[k].R
            self._t[n] = pose_items[k].t
        self._p = np.array([point_items[k] for k in self._point_keys], dtype=float).reshape(-1, 3)
        self._init_layout()

    def _init_layout(self):
        self._slot = {}
        offsets = np.zeros(len(self._keys), dtype=np.int64)
        pose_off, point_off = [], []
        off = 0
        ip = iq = 0
        for n, k in enumerate(self._keys):
            offsets[n] = off
            if k.is_pose:
                self._slot[k] = (True, ip, off)
                pose_off.append(off)
                ip += 1
            else:
                self._slot[k] = (False, iq, off)
                point_off.append(off)
                iq += 1
            off += k.dim
        self._dim = off
        self._pose_off = np.array(pose_off, dtype=np.int64)
        self._point_off = np.array(point_off, dtype=np.int64)

    @classmethod
    def _from_arrays(cls, template: Values, R, t, p) -> Values:
        out = cls.__new__(cls)
        out._keys = template._keys
        out._pose_keys = template._pose_keys
        out._point_keys = template._point_keys
        out._slot = template._slot
        out._dim = template._dim
        out._pose_off = template._pose_off
        out._point_off = template._point_off
        out._R, out._t, out._p = R, t, p
        return out

    def __getitem__(self, key):
        try:
            is_pose, idx, _ = self._slot[key]
        except KeyError:
            raise KeyError(str(Key(*key))) from None
        if is_pose:
            return Pose(self._R[idx], self._t[idx])
        return self._p[idx].copy()

    def __iter__(self):
        return iter(self._keys)

    def __len__(self):
        return len(self._keys)

    def __contains__(self, key):
        return key in self._slot

    @property
    def dim(self) -> int:
        """Total tangent dimension."""
        return self._dim

    def offset(self, key: Key) -> int:
        return self._slot[key][2]

    def index(self, key: Key) -> tuple[bool, int]:
        is_pose, idx, _ = self._slot[key]
        return is_pose, idx

    def same_layout(self, other: Values) -> bool:
        return self._keys == other._keys

    def counts(self) -> dict[str, int]:
        c = Counter(k.kind.name for k in self._keys)
        return {kind.name: c.get(kind.name, 0) for kind in KeyKind}

    def retract(self, delta: np.ndarray) -> Values:
        """Right-perturb poses by ``exp(delta)``, add ``delta`` to points."""
        delta = np.asarray(delta, dtype=float).reshape(-1)
        if delta.shape[0] != self._dim:
            raise StructureError(f"delta has dimension {delta.shape[0]}, values need {self._dim}")
        if len(self._pose_keys):
            xi = delta[self._pose_off[:, None] + np.arange(6)]
            dR, dt = se3_exp(xi)
            R, t = compose_rt(self._R, self._t, dR, dt)
        else:
            R, t = self._R.copy(), self._t.copy()
        p = self._p + delta[self._point_off[:, None] + np.arange(3)] if len(self._point_keys) else self._p.copy()
        return Values._from_arrays(self, R, t, p)

    def replace(self, updates: Mapping[Key, object]) -> Values:
        merged = dict(self.items())
        merged.update(updates)
        return Values(merged)

    def subset(self, keys: Iterable[Key]) -> Values:
        return Values({k: self[k] for k in keys})

    def local(self, other: Values) -> np.ndarray:
        """Tangent vector d with ``self.retract(d) == other`` (same layout)."""
        if not self.same_layout(other):
            raise StructureError("values have different key sets")
        from .se3 import inverse_rt, se3_log

        out = np.zeros(self._dim)
        if len(self._pose_keys):
            Ri, ti = inverse_rt(self._R, self._t)
            dR, dt = compose_rt(Ri, ti, other._R, other._t)
            out[self._pose_off[:, None] + np.arange(6)] = se3_log(dR, dt)
        if len(self._point_keys):
            out[self._point_off[:, None] + np.arange(3)] = other._p - self._p
        return out


@dataclass(frozen=True)
class NoiseModel:
    """Diagonal Gaussian noise; whitening divides by ``sigmas``."""

    sigmas: tuple[float, ...]

    def __post_init__(self):
        s = tuple(float(x) for x in self.sigmas)
        if not s or any(not (x > 0) for x in s):
            raise ValueError(f"sigmas must be strictly positive, got {s}")
        object.__setattr__(self, "sigmas", s)

    @classmethod
    def isotropic(cls, dim: int, sigma: float) -> NoiseModel:
        return cls((sigma,) * dim)

    @classmethod
    def twist(cls, sigma_rot: float, sigma_trans: float) -> NoiseModel:
        return cls((sigma_rot,) * 3 + (sigma_trans,) * 3)

    @property
    def dim(self) -> int:
        return len(self.sigmas)

    def whiten(self, r: np.ndarray) -> np.ndarray:
        return np.asarray(r) / np.asarray(self.sigmas)


class Factor:
    """Residual over an ordered tuple of variables.

    Subclasses define ``slot_is_pose`` (one flag per key), ``dim``,
    ``measurement_fields`` and a batched ``kernel``. The kernel receives one
    argument per slot (``(R, t)`` stacks for poses, ``(N, 3)`` arrays for
    points) and a dict of stacked measurements, and returns the unwhitened
    residuals ``(N, dim)`` plus, if requested, one Jacobian stack
    ``(N, dim, slot_dim)`` per slot with respect to the right-perturbation
    retraction.
    """

    slot_is_pose: tuple[bool, ...] = ()
    dim: int = 0
    measurement_fields: tuple[str, ...] = ()

    def __init__(self, keys: Sequence[Key], noise: NoiseModel, **measurements):
        self.keys = tuple(keys)
        if len(self.keys) != len(self.slot_is_pose):
            raise StructureError(
                f"{type(self).__name__} takes {len(self.slot_is_pose)} keys, got {len(self.keys)}"
            )
        for key, want_pose in zip(self.keys, self.slot_is_pose):
            if key.is_pose != want_pose:
                raise StructureError(f"{type(self).__name__}: {key} has the wrong variable type")
        if noise.dim != self.dim:
            raise StructureError(f"{type(self).__name__} needs a {self.dim}-d noise model")
        self.noise = noise
        for name in self.measurement_fields:
            setattr(self, name, measurements.pop(name))
        if measurements:
            raise TypeError(f"unexpected measurements {sorted(measurements)}")

    @classmethod
    def kernel(cls, args, meas, want_jac: bool = True):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({', '.join(map(str, self.keys))})"

    def _args(self, values: Values):
        missing = [k for k in self.keys if k not in values]
        if missing:
            raise StructureError(f"{self!r}: key {missing[0]} missing from values")
        args = []
        for key in self.keys:
            v = values[key]
            args.append((v.R[None], v.t[None]) if key.is_pose else np.asarray(v)[None])
        return args

    def _meas(self):
        return _stack_measurements([self], self.measurement_fields)

    def error_vector(self, values: Values) -> np.ndarray:
        """Unwhitened residual."""
        r, _ = self.kernel(self._args(values), self._meas(), want_jac=False)
        return r[0]

    def whitened_error(self, values: Values) -> np.ndarray:
        return self.noise.whiten(self.error_vector(values))

    def chi2(self, values: Values) -> float:
        return float(np.sum(self.whitened_error(values) ** 2))

    def jacobians(self, values: Values) -> list[np.ndarray]:
        """Unwhitened analytic Jacobian blocks, one per key."""
        _, jac = self.kernel(self._args(values), self._meas(), want_jac=True)
        return [J[0] for J in jac]


def _stack_measurements(factors: Sequence[Factor], fields: Sequence[str]) -> dict:
    meas = {}
    for name in fields:
        first = getattr(factors[0], name)
        if isinstance(first, Pose):
            meas[name] = (
                np.stack([getattr(f, name).R for f in factors]),
                np.stack([getattr(f, name).t for f in factors]),
            )
        else:
            meas[name] = np.stack([np.asarray(getattr(f, name), dtype=float) for f in factors])
    return meas


def numerical_jacobian(factor: Factor, values: Values, step: float = 1e-6) -> list[np.ndarray]:
    """Central finite differences of the unwhitened residual along the retraction."""
    blocks = []
    sub = values.subset(dict.fromkeys(factor.keys))
    for key in factor.keys:
        off = sub.offset(key)
        J = np.zeros((factor.dim, key.dim))
        for c in range(key.dim):
            d = np.zeros(sub.dim)
            d[off + c] = step
            J[:, c] = (factor.error_vector(sub.retract(d)) - factor.error_vector(sub.retract(-d))) / (2 * step)
        blocks.append(J)
    return blocks


class _Group:
    """Factors of one type, stacked for batched evaluation."""

    def __init__(self, cls, members: list[tuple[int, Factor]], values: Values, row0: int):
        self.cls = cls
        self.order = np.array([i for i, _ in members], dtype=np.int64)
        factors = [f for _, f in members]
        self.n = len(factors)
        self.dim = cls.dim
        self.meas = _stack_measurements(factors, cls.measurement_fields)
        self.inv_sigma = 1.0 / np.array([f.noise.sigmas for f in factors])
        self.slot_index = []
        self.slot_offset = []
        for s in range(len(cls.slot_is_pose)):
            idx = np.empty(self.n, dtype=np.int64)
            off = np.empty(self.n, dtype=np.int64)
            for n, f in enumerate(factors):
                key = f.keys[s]
                try:
                    _, idx[n], off[n] = values._slot[key]
                except KeyError:
                    raise StructureError(f"{f!r}: key {key} missing from values") from None
            self.slot_index.append(idx)
            self.slot_offset.append(off)
        self.rows = row0 + np.arange(self.n)[:, None] * self.dim + np.arange(self.dim)

    def args(self, values: Values):
        out = []
        for is_pose, idx in zip(self.cls.slot_is_pose, self.slot_index):
            out.append((values._R[idx], values._t[idx]) if is_pose else values._p[idx])
        return out

    def evaluate(self, values: Values, want_jac: bool):
        r, jac = self.cls.kernel(self.args(values), self.meas, want_jac=want_jac)
        r = r * self.inv_sigma
        if want_jac:
            jac = [J * self.inv_sigma[:, :, None] for J in jac]
        return r, jac


@dataclass
class SparseSystem:
    """Whitened linear system ``J delta ~= -r`` at a linearization point."""

    jacobian: sp.csr_matrix
    residual: np.ndarray

    @property
    def chi2(self) -> float:
        return float(self.residual @ self.residual)

    @property
    def rows(self) -> int:
        return self.residual.shape[0]


class LinearizationPlan:
    """Precomputed grouping of a graph against a fixed Values layout."""

    def __init__(self, factors: Sequence[Factor], values: Values):
        self.layout = values
        by_cls: dict[type, list[tuple[int, Factor]]] = {}
        for i, f in enumerate(factors):
            by_cls.setdefault(type(f), []).append((i, f))
        self.groups = []
        row = 0
        for cls, members in by_cls.items():
            g = _Group(cls, members, values, row)
            self.groups.append(g)
            row += g.n * g.dim
        self.n_rows = row
        self.n_cols = values.dim
        self._cols = []
        self._jrows = []
        for g in self.groups:
            cols, rows = [], []
            for is_pose, off in zip(g.cls.slot_is_pose, g.slot_offset):
                d = 6 if is_pose else 3
                c = off[:, None, None] + np.arange(d)[None, None, :]
                c = np.broadcast_to(c, (g.n, g.dim, d))
                cols.append(c.reshape(-1))
                rows.append(np.broadcast_to(g.rows[:, :, None], (g.n, g.dim, d)).reshape(-1))
            self._cols.append(np.concatenate(cols) if cols else np.zeros(0, np.int64))
            self._jrows.append(np.concatenate(rows) if rows else np.zeros(0, np.int64))

    def _check(self, values: Values):
        if not values.same_layout(self.layout):
            raise StructureError("values layout differs from the one the plan was built for")

    def residual(self, values: Values) -> np.ndarray:
        self._check(values)
        if not self.groups:
            return np.zeros(0)
        return np.concatenate([g.evaluate(values, False)[0].reshape(-1) for g in self.groups])

    def chi2(self, values: Values) -> float:
        r = self.residual(values)
        return float(r @ r)

    def linearize(self, values: Values) -> SparseSystem:
        self._check(values)
        data, res = [], []
        for g in self.groups:
            r, jac = g.evaluate(values, True)
            res.append(r.reshape(-1))
            data.append(np.concatenate([J.reshape(-1) for J in jac]))
        if not self.groups:
            J = sp.csr_matrix((0, self.n_cols))
            return SparseSystem(J, np.zeros(0))
        J = sp.coo_matrix(
            (np.concatenate(data), (np.concatenate(self._jrows), np.concatenate(self._cols))),
            shape=(self.n_rows, self.n_cols),
        ).tocsr()
        return SparseSystem(J, np.concatenate(res))

    def row_owner(self) -> list[tuple[int, int]]:
        """(factor index, residual component) for every row."""
        out = [None] * self.n_rows
        for g in self.groups:
            for n, fi in enumerate(g.order):
                for d in range(g.dim):
                    out[g.rows[n, d]] = (int(fi), d)
        return out


class Graph:
    """Ordered list of factors."""

    def __init__(self, factors: Iterable[Factor] = ()):
        self.factors: list[Factor] = list(factors)

    def add(self, factor: Factor) -> None:
        self.factors.append(factor)

    def __len__(self):
        return len(self.factors)

    def __iter__(self):
        return iter(self.factors)

    def keys(self) -> set[Key]:
        return {k for f in self.factors for k in f.keys}

    def counts(self) -> dict[str, int]:
        return dict(Counter(type(f).__name__ for f in self.factors))

    def plan(self, values: Values) -> LinearizationPlan:
        return LinearizationPlan(self.factors, values)

    def chi2(self, values: Values) -> float:
        return self.plan(values).chi2(values)


def linearize(graph: Graph, values: Values) -> SparseSystem:
    return graph.plan(values).linearize(values)
