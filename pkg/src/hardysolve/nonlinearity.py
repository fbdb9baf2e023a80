"""Mixed nonlinearity: superlinear on K, asymptotically linear off K.

A ``NonlinearitySpec`` pairs one branch used at nodes inside K with one
used elsewhere.  Branch coefficients are scalars or per-node tables
indexed by grid node.  All evaluators are vectorized over ``u`` and take
the grid node indices the values live on.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError


def _coef(value, nodes):
    value = np.asarray(value, dtype=float)
    if value.ndim == 0 or nodes is None:
        return value
    return value[nodes]


@dataclass(frozen=True, eq=False)
class PowerBranch:
    """f = gamma |u|^(p-2) u, or gamma * max(u, 0)^(p-1) if ``positive_part``."""

    p: float
    gamma: object = 1.0
    positive_part: bool = False

    family = "power"
    slope = None

    def __post_init__(self):
        if not self.p > 2:
            raise ConfigError(f"power exponent must exceed 2, got {self.p}")
        if np.any(np.asarray(self.gamma, dtype=float) < 0):
            raise ConfigError("gamma must be nonnegative")

    @property
    def odd(self):
        return not self.positive_part

    def _base(self, u):
        return np.maximum(u, 0.0) if self.positive_part else u

    def f(self, u, nodes=None):
        v = self._base(u)
        return _coef(self.gamma, nodes) * np.abs(v) ** (self.p - 2) * v

    def F(self, u, nodes=None):
        return _coef(self.gamma, nodes) * np.abs(self._base(u)) ** self.p / self.p

    def df(self, u, nodes=None):
        return (self.p - 1) * _coef(self.gamma, nodes) * np.abs(self._base(u)) ** (self.p - 2)

    def to_dict(self):
        return {"family": "power", "p": self.p, "gamma": _table_repr(self.gamma),
                "positive_part": self.positive_part}


@dataclass(frozen=True, eq=False)
class SaturatingBranch:
    """f = s u^3/(1+u^2) for |u| <= u0 and theta*u beyond.

    The inner scale s = theta (1 + u0^2)/u0^2 makes f continuous at u0;
    theta = 1/2 with u0 = 1 gives s = 1.
    """

    theta: object = 0.5
    u0: float = 1.0

    family = "saturating"
    odd = True

    def __post_init__(self):
        if not self.u0 > 0:
            raise ConfigError("u0 must be positive")

    @property
    def slope(self):
        return self.theta

    def _s(self, nodes):
        return _coef(self.theta, nodes) * (1 + self.u0 ** 2) / self.u0 ** 2

    def f(self, u, nodes=None):
        th = _coef(self.theta, nodes)
        inner = self._s(nodes) * u ** 3 / (1 + u ** 2)
        return np.where(np.abs(u) <= self.u0, inner, th * u)

    def F(self, u, nodes=None):
        th = _coef(self.theta, nodes)
        s = self._s(nodes)
        u2 = u * u
        inner = s * 0.5 * (u2 - np.log1p(u2))
        at_u0 = s * 0.5 * (self.u0 ** 2 - np.log1p(self.u0 ** 2))
        outer = at_u0 + 0.5 * th * (u2 - self.u0 ** 2)
        return np.where(np.abs(u) <= self.u0, inner, outer)

    def df(self, u, nodes=None):
        th = _coef(self.theta, nodes)
        u2 = u * u
        inner = self._s(nodes) * (u2 * u2 + 3 * u2) / (1 + u2) ** 2
        return np.where(np.abs(u) <= self.u0, inner, th + 0 * u)

    def to_dict(self):
        return {"family": "saturating", "theta": _table_repr(self.theta), "u0": self.u0}


@dataclass(frozen=True)
class ZeroBranch:
    family = "zero"
    odd = True
    slope = 0.0
    u0 = 0.0

    def f(self, u, nodes=None):
        return np.zeros_like(np.asarray(u, dtype=float))

    F = f
    df = f

    def to_dict(self):
        return {"family": "zero"}


def _table_repr(value):
    value = np.asarray(value, dtype=float)
    return float(value) if value.ndim == 0 else value.tolist()


@dataclass(frozen=True, eq=False)
class NonlinearitySpec:
    on_k: object = field(default_factory=lambda: PowerBranch(4.0, 1.0))
    off_k: object = field(default_factory=SaturatingBranch)

    @classmethod
    def mixed_default(cls, p=4.0, gamma=1.0):
        return cls(PowerBranch(p, gamma), SaturatingBranch(0.5, 1.0))

    @classmethod
    def zero(cls):
        return cls(ZeroBranch(), ZeroBranch())

    @classmethod
    def pure_power(cls, p, gamma=1.0):
        """The same power law on and off K."""
        b = PowerBranch(p, gamma)
        return cls(b, b)

    @property
    def odd(self):
        return self.on_k.odd and self.off_k.odd

    @property
    def exponent(self):
        ps = [b.p for b in (self.on_k, self.off_k) if isinstance(b, PowerBranch)]
        return max(ps) if ps else None

    @property
    def is_zero(self):
        return isinstance(self.on_k, ZeroBranch) and isinstance(self.off_k, ZeroBranch)

    def _split(self, name, u, in_k, nodes):
        u = np.asarray(u, dtype=float)
        in_k = np.broadcast_to(np.asarray(in_k, dtype=bool), u.shape)
        if nodes is None:
            nodes = np.arange(u.size) if u.ndim == 1 else None
        a = getattr(self.on_k, name)(u, nodes)
        b = getattr(self.off_k, name)(u, nodes)
        return np.where(in_k, a, b)

    def f(self, u, in_k, nodes=None):
        return self._split("f", u, in_k, nodes)

    def F(self, u, in_k, nodes=None):
        return self._split("F", u, in_k, nodes)

    def df(self, u, in_k, nodes=None):
        return self._split("df", u, in_k, nodes)

    def theta_values(self, in_k):
        """Asymptotic slope per grid node, zero on K (and for branches without one)."""
        in_k = np.asarray(in_k, dtype=bool)
        slope = self.off_k.slope
        if slope is None:
            slope = 0.0
        th = np.broadcast_to(np.asarray(slope, dtype=float), in_k.shape).copy()
        th[in_k] = 0.0
        return th

    def to_dict(self):
        return {"on_k": self.on_k.to_dict(), "off_k": self.off_k.to_dict()}


def eval_f(spec, node, in_K, u):
    branch = spec.on_k if in_K else spec.off_k
    return float(branch.f(np.asarray(u, dtype=float), node))


def eval_F(spec, node, in_K, u):
    branch = spec.on_k if in_K else spec.off_k
    return float(branch.F(np.asarray(u, dtype=float), node))


def theta_sup(spec, in_k=None):
    """max |Theta| over nodes outside K."""
    if in_k is not None and np.all(in_k):
        return 0.0
    slope = spec.off_k.slope
    if slope is None:
        return 0.0
    th = np.abs(np.asarray(slope, dtype=float))
    if th.ndim and in_k is not None and th.size == np.size(in_k):
        th = th[~np.asarray(in_k, dtype=bool)]
    return float(np.max(th)) if th.size else 0.0


def load_node_table(path, size=None):
    """Read a CSV of (node index, value) rows into a dense table."""
    idx, vals = [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                i, v = int(row[0]), float(row[1])
            except ValueError:
                continue  # header
            idx.append(i)
            vals.append(v)
    if not idx:
        raise ConfigError(f"no rows in node table {path}")
    n = size if size is not None else max(idx) + 1
    if max(idx) >= n or min(idx) < 0:
        raise ConfigError(f"node index out of range in {path}")
    table = np.zeros(n)
    table[idx] = vals
    return table


# ---------------------------------------------------------------- verification

@dataclass(frozen=True)
class SamplePlan:
    u_min: float = 1e-6
    u_max: float = 1e4
    n_u: int = 201
    max_nodes: int = 32
    growth_threshold: float = 1.0


@dataclass
class ConditionCheck:
    passed: bool
    worst: float
    detail: str = ""

    def to_dict(self):
        return {"passed": bool(self.passed), "worst": float(self.worst), "detail": self.detail}


def _sample_nodes(in_k, max_nodes):
    nodes = []
    for flag in (True, False):
        cand = np.flatnonzero(in_k == flag)
        if cand.size:
            pick = np.unique(np.linspace(0, cand.size - 1, min(max_nodes, cand.size)).round().astype(int))
            nodes.extend(cand[pick].tolist())
    return np.array(sorted(nodes), dtype=int)


def verify_conditions(spec, grid, in_k, plan=SamplePlan()):
    """Sample-based checks of the growth conditions (F1)-(F5).

    Returns a dict condition name -> ConditionCheck; failures are report
    entries, never exceptions.
    """
    in_k = np.asarray(in_k, dtype=bool)
    N = grid.dimension
    crit = 2 * N / (N - 2)
    us = np.logspace(np.log10(plan.u_min), np.log10(plan.u_max), plan.n_u)
    decade = us[-1] / 10
    i_dec = int(np.searchsorted(us, decade))
    nodes = _sample_nodes(in_k, plan.max_nodes)
    p = spec.exponent if spec.exponent is not None else 0.5 * (2 + crit)

    def fvals(u, node):
        return spec.f(u, in_k[node], np.full(u.shape, node))

    def Fvals(u, node):
        return spec.F(u, in_k[node], np.full(u.shape, node))

    # (F1)
    c_fit, growth = 0.0, 0.0
    for node in nodes:
        for sgn in (1.0, -1.0):
            ratio = np.abs(fvals(sgn * us, node)) / (1 + us ** (p - 1))
            c_fit = max(c_fit, float(ratio.max()))
            if ratio[i_dec] > 0:
                growth = max(growth, float(ratio[-1] / ratio[i_dec]) - 1.0)
            elif ratio[-1] > 0:
                growth = np.inf
    p_ok = 2 < p < crit
    f1 = ConditionCheck(p_ok and growth <= 1e-6, max(growth, 0.0),
                        f"p={p:g} in (2,{crit:g}): {p_ok}; fitted constant {c_fit:.6g}")

    # (F2)
    small = us[us <= 1e-3]
    worst2, ok2 = 0.0, True
    for node in nodes:
        for sgn in (1.0, -1.0):
            ratio = np.abs(fvals(sgn * small, node)) / small
            worst2 = max(worst2, float(ratio[0]))
            if ratio[-1] == 0:
                continue
            monotone = np.all(np.diff(ratio) >= -1e-12 * ratio[-1])
            ok2 &= bool(monotone and ratio[0] <= 0.5 * ratio[-1])
    f2 = ConditionCheck(ok2, worst2, f"|f|/|u| at |u|={plan.u_min:g}")

    # (F3), only on K
    k_nodes = nodes[in_k[nodes]]
    big = us[us >= plan.growth_threshold]
    i_big = int(np.searchsorted(big, decade))
    worst3, ok3 = 0.0, True
    for node in k_nodes:
        for sgn in (1.0, -1.0):
            q = Fvals(sgn * big, node) / big ** 2
            drop = float(max(0.0, -np.min(np.diff(q))))
            worst3 = max(worst3, drop)
            ok3 &= bool(drop <= 1e-12 * np.abs(q).max() and q[-1] > (1 + 1e-3) * q[i_big] > 0)
    f3 = ConditionCheck(ok3, worst3, "F/u^2 nondecreasing and unbounded on K"
                        if k_nodes.size else "no K nodes: vacuous")

    # (F4)
    worst4 = 0.0
    for node in nodes:
        for u in (us, -us[::-1]):
            q = fvals(u, node) / np.abs(u)
            scale = max(1.0, float(np.abs(q).max()))
            worst4 = max(worst4, float(max(0.0, -np.min(np.diff(q)))) / scale)
    f4 = ConditionCheck(worst4 <= 1e-12, worst4, "max relative decrease of f/|u|")

    # (F5), only off K
    off_nodes = nodes[~in_k[nodes]]
    slope = spec.off_k.slope
    worst5 = 0.0
    if off_nodes.size and slope is None:
        for node in off_nodes:
            q = fvals(us[i_dec:], node) / us[i_dec:]
            worst5 = max(worst5, float((q.max() - q.min()) / max(abs(q).max(), 1e-300)))
        f5 = ConditionCheck(False, worst5, "off-K branch has no asymptotic slope")
    else:
        u0 = getattr(spec.off_k, "u0", 0.0)
        tail = us[us > u0]
        for node in off_nodes:
            th = float(_coef(slope, node))
            for sgn in (1.0, -1.0):
                u = sgn * tail
                dev = np.abs(fvals(u, node) - th * u) / np.maximum(np.abs(th * u), 1e-300)
                worst5 = max(worst5, float(dev.max()))
        f5 = ConditionCheck(worst5 <= 1e-12, worst5,
                            "f = Theta u beyond u0" if off_nodes.size else "no off-K nodes: vacuous")

    return {"F1": f1, "F2": f2, "F3": f3, "F4": f4, "F5": f5}
