"""Exact enumeration of causal information measures on small discrete pmfs.

A :class:`JointPmf` is a dense table over ``(x^N, y^N, z^N)`` with one axis
per variable and time, ordered ``X_1..X_N, Y_1..Y_N, Z_1..Z_N``. Every
measure is available in two independently coded forms:

* :func:`oracle_measure` sums entropies of marginal tables;
* :func:`oracle_measure_kl` averages per-history KL divergences between
  explicitly normalized conditional distributions.

Both use the conventions ``0 log 0 = 0`` and ``0 log(0/0) = 0``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import rel_entr

from .exceptions import CapacityError, ConfigurationError, DataError
from .gaussian import MeasureKind

DEFAULT_MAX_ENTRIES = 10**6
ROLES = ("X", "Y", "Z")


@dataclass(frozen=True)
class JointPmf:
    p: np.ndarray
    alphabets: tuple
    N: int

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        ax, ay, az = (int(a) for a in self.alphabets)
        N = int(self.N)
        if p.shape != (ax,) * N + (ay,) * N + (az,) * N:
            raise DataError(
                f"table shape {p.shape} does not match alphabets {self.alphabets} and N={N}",
                operation="JointPmf",
                parameter="p",
            )
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise DataError("probabilities must be finite and >= 0", operation="JointPmf", parameter="p")
        if abs(p.sum() - 1.0) > 1e-12:
            raise DataError(
                f"probabilities sum to {p.sum():.15f}", operation="JointPmf", parameter="p"
            )
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "alphabets", (ax, ay, az))
        object.__setattr__(self, "N", N)

    # axis bookkeeping -----------------------------------------------------

    def ax(self, role: str, t: int) -> int:
        """Axis of ``role`` at one-based time ``t``."""
        return ROLES.index(role) * self.N + (t - 1)

    def prefix(self, n_x=0, n_y=0, n_z=0) -> frozenset:
        return frozenset(
            [self.ax("X", t) for t in range(1, n_x + 1)]
            + [self.ax("Y", t) for t in range(1, n_y + 1)]
            + [self.ax("Z", t) for t in range(1, n_z + 1)]
        )

    def span(self, role, first, last) -> frozenset:
        """``role`` at times ``first..last`` inclusive (empty if first > last)."""
        return frozenset(self.ax(role, t) for t in range(first, last + 1))

    # marginals ---------------------------------------------------------------

    def marginal(self, axes, keepdims=True) -> np.ndarray:
        drop = tuple(a for a in range(self.p.ndim) if a not in set(axes))
        return self.p.sum(axis=drop, keepdims=keepdims)

    def entropy(self, axes) -> float:
        q = self.marginal(axes, keepdims=False).ravel()
        q = q[q > 0]
        return float(-np.sum(q * np.log(q)))

    def cmi(self, a, b, c=frozenset()) -> float:
        """``I(A; B | C)`` for axis sets."""
        a, b, c = frozenset(a), frozenset(b), frozenset(c)
        return self.entropy(a | c) + self.entropy(b | c) - self.entropy(a | b | c) - self.entropy(c)

    # role transforms ---------------------------------------------------------

    def swapped(self) -> "JointPmf":
        """Exchange the X and Y roles."""
        N = self.N
        order = list(range(N, 2 * N)) + list(range(N)) + list(range(2 * N, 3 * N))
        ax, ay, az = self.alphabets
        return JointPmf(np.transpose(self.p, order), (ay, ax, az), N)

    def drop_z(self) -> "JointPmf":
        """Marginalize Z away, leaving a constant (size-1) Z alphabet."""
        N = self.N
        q = self.p.sum(axis=tuple(range(2 * N, 3 * N)), keepdims=True)
        ax, ay, _ = self.alphabets
        return JointPmf(q, (ax, ay, 1), N)

    @classmethod
    def from_samples(cls, samples, alphabets, N) -> "JointPmf":
        """Plug-in (relative frequency) estimate from sampled tuples."""
        samples = np.asarray(samples)
        if samples.ndim != 2 or samples.shape[0] == 0:
            raise DataError(
                "cannot estimate a pmf from zero samples",
                operation="JointPmf.from_samples",
                parameter="samples",
            )
        ax, ay, az = alphabets
        shape = (ax,) * N + (ay,) * N + (az,) * N
        flat = np.ravel_multi_index(tuple(samples.T), shape)
        counts = np.bincount(flat, minlength=int(np.prod(shape)))
        return cls((counts / counts.sum()).reshape(shape), alphabets, N)


def random_pmf(rng, alphabets=(2, 2, 2), N=3, concentration=1.0) -> JointPmf:
    """Dirichlet-random dense pmf."""
    ax, ay, az = alphabets
    shape = (ax,) * N + (ay,) * N + (az,) * N
    p = rng.dirichlet(np.full(int(np.prod(shape)), concentration)).reshape(shape)
    return JointPmf(p, alphabets, N)


# ---------------------------------------------------------------------------
# Channel specifications
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Node:
    name: str
    role: str
    alphabet: int
    parents: tuple  # ((name, delay), ...)
    table: np.ndarray  # shape (*parent_alphabets, alphabet)


@dataclass(frozen=True)
class ChannelSpec:
    """A small time-unrolled network of conditional kernels.

    Node ``v`` at time ``n`` is drawn from ``table[parents..., :]`` where the
    parents are other nodes (or ``v`` itself) at times ``n - delay``. Parent
    values before the first time step are taken as symbol 0.
    """

    nodes: tuple
    horizon: int

    def __post_init__(self):
        nodes = tuple(self.nodes)
        names = [v.name for v in nodes]
        if len(set(names)) != len(names):
            raise ConfigurationError("duplicate node names", operation="ChannelSpec", parameter="nodes")
        roles = [v.role for v in nodes]
        if roles.count("X") != 1 or roles.count("Y") != 1 or set(roles) - set(ROLES):
            raise ConfigurationError(
                "need exactly one X node, one Y node and any number of Z nodes",
                operation="ChannelSpec",
                parameter="nodes",
            )
        by_name = {v.name: v for v in nodes}
        fixed = []
        for v in nodes:
            parents = tuple((str(u), int(d)) for u, d in v.parents)
            for u, d in parents:
                if u not in by_name or d < 0:
                    raise ConfigurationError(
                        f"bad parent ({u}, {d}) of {v.name}", operation="ChannelSpec", parameter="parents"
                    )
            if len(set(parents)) != len(parents):
                raise ConfigurationError(
                    f"repeated parent of {v.name}", operation="ChannelSpec", parameter="parents"
                )
            table = np.asarray(v.table, dtype=float)
            shape = tuple(by_name[u].alphabet for u, _ in parents) + (v.alphabet,)
            if table.shape != shape:
                raise ConfigurationError(
                    f"kernel of {v.name} has shape {table.shape}, expected {shape}",
                    operation="ChannelSpec",
                    parameter="table",
                )
            if np.any(table < 0) or not np.allclose(table.sum(axis=-1), 1.0, atol=1e-12):
                raise ConfigurationError(
                    f"kernel of {v.name} is not a conditional pmf", operation="ChannelSpec", parameter="table"
                )
            fixed.append(Node(v.name, v.role, int(v.alphabet), parents, table))
        object.__setattr__(self, "nodes", tuple(fixed))
        object.__setattr__(self, "horizon", int(self.horizon))
        self.topological_order()

    def topological_order(self) -> list:
        """Order of nodes within one time step (zero-delay edges only)."""
        pending = {v.name: {u for u, d in v.parents if d == 0} for v in self.nodes}
        order = []
        while pending:
            ready = sorted(n for n, deps in pending.items() if not deps - set(order))
            if not ready:
                raise ConfigurationError(
                    "zero-delay dependencies form a cycle", operation="ChannelSpec", parameter="parents"
                )
            for n in ready:
                order.append(n)
                del pending[n]
        return order

    def alphabets(self) -> tuple:
        ax = next(v.alphabet for v in self.nodes if v.role == "X")
        ay = next(v.alphabet for v in self.nodes if v.role == "Y")
        az = int(np.prod([v.alphabet for v in self.nodes if v.role == "Z"])) if any(
            v.role == "Z" for v in self.nodes
        ) else 1
        return ax, ay, az

    # JSON ---------------------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "nodes": [
                {
                    "name": v.name,
                    "role": v.role,
                    "alphabet": v.alphabet,
                    "parents": [[u, d] for u, d in v.parents],
                    "table": v.table.tolist(),
                }
                for v in self.nodes
            ],
        }

    @classmethod
    def from_dict(cls, d) -> "ChannelSpec":
        nodes = tuple(
            Node(
                str(n["name"]),
                str(n["role"]),
                int(n["alphabet"]),
                tuple((u, d) for u, d in n.get("parents", [])),
                np.asarray(n["table"], dtype=float),
            )
            for n in d["nodes"]
        )
        return cls(nodes, int(d["horizon"]))

    @classmethod
    def from_json(cls, text) -> "ChannelSpec":
        return cls.from_dict(json.loads(text))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def build_pmf(spec: ChannelSpec, max_entries: int = DEFAULT_MAX_ENTRIES) -> JointPmf:
    """Exact joint pmf by chain-rule product of the kernels over time."""
    N = spec.horizon
    nodes = {v.name: v for v in spec.nodes}
    size = math.prod(v.alphabet for v in spec.nodes) ** N
    if size > max_entries:
        raise CapacityError(
            f"joint table would have {size} entries (limit {max_entries})",
            operation="build_pmf",
            parameter="horizon",
        )
    x_name = next(v.name for v in spec.nodes if v.role == "X")
    y_name = next(v.name for v in spec.nodes if v.role == "Y")
    z_names = [v.name for v in spec.nodes if v.role == "Z"]
    node_order = [x_name, y_name] + z_names
    axis = {(name, t): i * N + t for i, name in enumerate(node_order) for t in range(N)}
    shape = [nodes[name].alphabet for name in node_order for _ in range(N)]
    p = np.ones(shape)
    ndim = len(shape)
    for t in range(N):
        for name in spec.topological_order():
            v = nodes[name]
            table = v.table
            axes = []
            # Out-of-range parents are fixed at symbol 0: slice them away.
            index = []
            for u, d in v.parents:
                if t - d < 0:
                    index.append(0)
                else:
                    index.append(slice(None))
                    axes.append(axis[(u, t - d)])
            factor = table[tuple(index) + (slice(None),)]
            axes.append(axis[(name, t)])
            order = np.argsort(axes)
            factor = np.transpose(factor, order)
            bshape = [1] * ndim
            for a in sorted(axes):
                bshape[a] = shape[a]
            p = p * factor.reshape(bshape)
    # Merge the Z nodes of each time step into one Z symbol.
    ax, ay, az = spec.alphabets()
    lead = p.reshape((ax,) * N + (ay,) * N + (-1,))
    if z_names:
        zs = p.reshape((ax,) * N + (ay,) * N + tuple(shape[2 * N :]))
        k = len(z_names)
        # Current Z axes are node-major; reorder to time-major then merge.
        perm = list(range(2 * N)) + [2 * N + i * N + t for t in range(N) for i in range(k)]
        zs = np.transpose(zs, perm)
        q = zs.reshape((ax,) * N + (ay,) * N + (az,) * N)
    else:
        q = lead.reshape((ax,) * N + (ay,) * N + (1,) * N)
    q = q / q.sum()
    return JointPmf(q, (ax, ay, az), N)


def _uniform(a):
    return np.full(a, 1.0 / a)


def bsc_table(eps):
    return np.array([[1 - eps, eps], [eps, 1 - eps]])


def bsc_spec(eps=0.1, N=1) -> ChannelSpec:
    """Uniform binary input through a memoryless binary symmetric channel."""
    return ChannelSpec(
        (
            Node("X", "X", 2, (), _uniform(2)),
            Node("Y", "Y", 2, (("X", 0),), bsc_table(eps)),
        ),
        N,
    )


def copy_spec(N=2) -> ChannelSpec:
    """``Y_n = X_n`` with i.i.d. uniform bits."""
    return ChannelSpec(
        (
            Node("X", "X", 2, (), _uniform(2)),
            Node("Y", "Y", 2, (("X", 0),), np.eye(2)),
        ),
        N,
    )


def relay_spec(eps=0.05, N=3) -> ChannelSpec:
    """Relay ``X -> Z -> Y`` with one step of delay and a BSC on each hop."""
    return ChannelSpec(
        (
            Node("X", "X", 2, (), _uniform(2)),
            Node("Z", "Z", 2, (("X", 1),), bsc_table(eps)),
            Node("Y", "Y", 2, (("Z", 1),), bsc_table(eps)),
        ),
        N,
    )


def mac_feedback_spec(rng, N=3, direct_weight=0.0) -> ChannelSpec:
    """Two senders with output feedback feeding a noisy multiple-access channel.

    Each sender sees its own past and the past channel output only, so the
    inputs are conditionally independent given the output history. A
    positive ``direct_weight`` mixes in a direct ``X_{n-1} -> Y_n`` copy.
    """
    x_tab = rng.dirichlet(np.ones(2), size=(2, 2))
    y_base = rng.dirichlet(np.ones(2), size=(2, 2))
    z_tab = rng.dirichlet(np.ones(2), size=(2, 2))
    nodes = [
        Node("X", "X", 2, (("X", 1), ("Z", 1)), x_tab),
        Node("Z", "Z", 2, (("X", 0), ("Y", 0)), z_tab),
    ]
    if direct_weight:
        copy = np.eye(2)[None, None, :, :]  # indexed [y', z', x', y]
        table = (1 - direct_weight) * y_base[:, :, None, :] + direct_weight * copy
        nodes.append(Node("Y", "Y", 2, (("Y", 1), ("Z", 1), ("X", 1)), table))
    else:
        nodes.append(Node("Y", "Y", 2, (("Y", 1), ("Z", 1)), y_base))
    return ChannelSpec(tuple(nodes), N)


# ---------------------------------------------------------------------------
# Entropy-sum forms
# ---------------------------------------------------------------------------


def _prepare(pmf, direction, conditioned):
    if direction not in ("XY", "YX"):
        raise ConfigurationError(
            "direction must be 'XY' or 'YX'", operation="oracle_measure", parameter="direction"
        )
    q = pmf.swapped() if direction == "YX" else pmf
    return q if conditioned else q.drop_z()


def _causal_entropy(q, roles) -> float:
    """``H(A^N || Z^{N-1}) = sum_n H(A_n | A^{n-1} Z^{n-1})`` for a role set."""
    total = 0.0
    for n in range(1, q.N + 1):
        past = frozenset().union(*(q.span(r, 1, n - 1) for r in roles)) | q.span("Z", 1, n - 1)
        now = frozenset(q.ax(r, n) for r in roles)
        total += q.entropy(now | past) - q.entropy(past)
    return total


def _entropy_form(q, kind) -> float:
    N = q.N
    X = lambda a, b: q.span("X", a, b)  # noqa: E731
    Y = lambda a, b: q.span("Y", a, b)  # noqa: E731
    Z = lambda a, b: q.span("Z", a, b)  # noqa: E731
    if kind is MeasureKind.MASSEY:
        return sum(q.cmi(X(1, n), Y(n, n), Y(1, n - 1) | Z(1, n - 1)) for n in range(1, N + 1))
    if kind is MeasureKind.SUM_TE:
        return sum(q.cmi(Y(n, n), X(1, n - 1), Y(1, n - 1) | Z(1, n - 1)) for n in range(1, N + 1))
    if kind is MeasureKind.KAMITAKE:
        return sum(
            q.cmi(X(n, n), Y(n + 1, N), X(1, n - 1) | Y(1, n) | Z(1, n - 1)) for n in range(1, N + 1)
        )
    if kind is MeasureKind.CAUSAL_MI:
        return sum(q.cmi(X(1, N), Y(n, n), Y(1, n - 1) | Z(1, n - 1)) for n in range(1, N + 1))
    if kind is MeasureKind.CBI:
        return _causal_entropy(q, "X") + _causal_entropy(q, "Y") - _causal_entropy(q, "XY")
    if kind is MeasureKind.CONDITIONAL_MI:
        return q.cmi(X(1, N), Y(1, N), Z(1, N - 1))
    raise ConfigurationError(f"unsupported kind {kind}", operation="oracle_measure", parameter="kind")


def oracle_measure(pmf: JointPmf, kind, direction="XY", conditioned=True) -> float:
    """Exact value of a measure by summing marginal entropies (nats).

    ``direction='YX'`` exchanges the roles of X and Y; ``conditioned=False``
    drops the Z process (unconditioned variants).
    """
    return _entropy_form(_prepare(pmf, direction, conditioned), MeasureKind.parse(kind))


def causal_mi_dual(pmf: JointPmf, direction="XY", conditioned=True) -> float:
    """``sum_n I(X_n; Y^N | X^{n-1} Z^{n-1})``."""
    q = _prepare(pmf, direction, conditioned)
    N = q.N
    return sum(
        q.cmi(q.span("X", n, n), q.span("Y", 1, N), q.span("X", 1, n - 1) | q.span("Z", 1, n - 1))
        for n in range(1, N + 1)
    )


def instantaneous_exchange(pmf: JointPmf, direction="XY", conditioned=True) -> float:
    """``sum_n I(X_n; Y_n | X^{n-1} Y^{n-1} Z^{n-1})``."""
    q = _prepare(pmf, direction, conditioned)
    return sum(
        q.cmi(
            q.span("X", n, n),
            q.span("Y", n, n),
            q.prefix(n - 1, n - 1, n - 1),
        )
        for n in range(1, q.N + 1)
    )


def modified_massey(pmf: JointPmf, direction="XY", conditioned=True) -> float:
    """Flow from ``X^{N-1}`` to ``Y^N``: ``H(Y^N||Z^{N-1}) - H(Y^N||X^{N-1} Z^{N-1})``."""
    q = _prepare(pmf, direction, conditioned)
    total = 0.0
    for n in range(1, q.N + 1):
        yz = q.prefix(0, n - 1, n - 1)
        xyz = q.prefix(n - 1, n - 1, n - 1)
        yn = frozenset([q.ax("Y", n)])
        h_plain = q.entropy(yn | yz) - q.entropy(yz)
        h_causal = q.entropy(yn | xyz) - q.entropy(xyz)
        total += h_plain - h_causal
    return total


# ---------------------------------------------------------------------------
# KL-divergence forms
# ---------------------------------------------------------------------------


def _conditional(q, target, given):
    """``p(target | given)`` broadcast over the full table (0 where undefined)."""
    joint = q.marginal(target | given)
    cond = q.marginal(given)
    return np.divide(joint, cond, out=np.zeros(np.broadcast_shapes(joint.shape, cond.shape)), where=cond > 0)


def _expected_kl(q, target, history, reference) -> float:
    """``sum_h p(h) KL(p(target|h) || prod_i p(t_i|c_i))`` over histories ``h``.

    ``reference`` lists ``(t_i, c_i)`` factors whose targets partition
    ``target`` and whose conditioning sets lie inside ``history``.
    """
    if not target:
        return 0.0
    p_cond = _conditional(q, target, history)
    ref = np.ones(1)
    for t_i, c_i in reference:
        ref = ref * _conditional(q, t_i, c_i)
    full_shape = np.broadcast_shapes(p_cond.shape, ref.shape)
    p_cond = np.broadcast_to(p_cond, full_shape)
    ref = np.broadcast_to(ref, full_shape)
    keep = target | history
    drop = tuple(a for a in range(q.p.ndim) if a not in keep)
    # Reference conditionals never depend on dropped axes; take index 0 there.
    sl = tuple(0 if a in drop else slice(None) for a in range(q.p.ndim))
    p_cond, ref = p_cond[sl], ref[sl]
    axes_kept = sorted(keep)
    t_pos = tuple(i for i, a in enumerate(axes_kept) if a in target)
    per_history = rel_entr(p_cond, ref).sum(axis=t_pos, keepdims=True)
    p_hist = q.marginal(history)[sl]
    weight = np.broadcast_to(p_hist, per_history.shape)
    mask = weight > 0
    return float(np.sum(weight[mask] * per_history[mask]))


def _kl_form(q, kind) -> float:
    N = q.N
    P = q.prefix
    S = q.span
    total = 0.0
    if kind is MeasureKind.CONDITIONAL_MI:
        x, y, z = S("X", 1, N), S("Y", 1, N), S("Z", 1, N - 1)
        return _expected_kl(q, x | y, z, [(x, z), (y, z)])
    for n in range(1, N + 1):
        yn, xn = S("Y", n, n), S("X", n, n)
        if kind is MeasureKind.MASSEY:
            total += _expected_kl(q, yn, P(n, n - 1, n - 1), [(yn, P(0, n - 1, n - 1))])
        elif kind is MeasureKind.SUM_TE:
            total += _expected_kl(q, yn, P(n - 1, n - 1, n - 1), [(yn, P(0, n - 1, n - 1))])
        elif kind is MeasureKind.CAUSAL_MI:
            total += _expected_kl(q, yn, P(N, n - 1, n - 1), [(yn, P(0, n - 1, n - 1))])
        elif kind is MeasureKind.KAMITAKE:
            fut = S("Y", n + 1, N)
            total += _expected_kl(q, fut, P(n, n, n - 1), [(fut, P(n - 1, n, n - 1))])
        elif kind is MeasureKind.CBI:
            total += _expected_kl(
                q,
                xn | yn,
                P(n - 1, n - 1, n - 1),
                [(xn, P(n - 1, 0, n - 1)), (yn, P(0, n - 1, n - 1))],
            )
        else:
            raise ConfigurationError(f"unsupported kind {kind}", operation="oracle_measure_kl", parameter="kind")
    return total


def oracle_measure_kl(pmf: JointPmf, kind, direction="XY", conditioned=True) -> float:
    """Exact value of a measure as an average of per-history KL divergences."""
    return _kl_form(_prepare(pmf, direction, conditioned), MeasureKind.parse(kind))


# ---------------------------------------------------------------------------
# Identity suite
# ---------------------------------------------------------------------------

IDENTITIES = (
    "massey_kamitake_exchange",
    "causal_mi_decomposition",
    "causal_mi_dual_form",
    "massey_te_decomposition",
    "modified_massey_equals_te",
    "cbi_decomposition",
    "cbi_symmetry",
    "form_equivalence",
)


def identity_residuals(pmf: JointPmf) -> dict:
    """Signed residual of every identity relating the measures on one pmf."""
    M = lambda kind, d="XY": oracle_measure(pmf, kind, d)  # noqa: E731
    K = MeasureKind
    di1_xy, di1_yx = M(K.MASSEY), M(K.MASSEY, "YX")
    di2_xy, di2_yx = M(K.KAMITAKE), M(K.KAMITAKE, "YX")
    te_xy, te_yx = M(K.SUM_TE), M(K.SUM_TE, "YX")
    cmi = M(K.CAUSAL_MI)
    cbi_xy, cbi_yx = M(K.CBI), M(K.CBI, "YX")
    form = max(
        abs(oracle_measure(pmf, k, d) - oracle_measure_kl(pmf, k, d))
        for k in MeasureKind
        for d in ("XY", "YX")
    )
    return {
        "massey_kamitake_exchange": (di2_yx + di1_xy) - (di2_xy + di1_yx),
        "causal_mi_decomposition": cmi - (di1_xy + di2_yx),
        "causal_mi_dual_form": cmi - causal_mi_dual(pmf),
        "massey_te_decomposition": di1_xy - (te_xy + instantaneous_exchange(pmf)),
        "modified_massey_equals_te": modified_massey(pmf) - te_xy,
        "cbi_decomposition": cbi_xy - (di1_xy + te_yx),
        "cbi_symmetry": max(abs(cbi_xy - cbi_yx), abs(cbi_xy - (di1_yx + te_xy))),
        "form_equivalence": form,
    }


def verify_identities(pmfs) -> dict:
    """Maximum absolute residual per identity over one or many pmfs."""
    if isinstance(pmfs, JointPmf):
        pmfs = [pmfs]
    report = {name: 0.0 for name in IDENTITIES}
    count = 0
    for pmf in pmfs:
        for name, r in identity_residuals(pmf).items():
            report[name] = max(report[name], abs(r))
        count += 1
    return {"n_pmfs": count, "max_abs_residual": report}


def random_identity_suite(n_pmfs=200, seed=0, alphabet_choices=(2, 3), max_entries=20000) -> dict:
    """Identity report over random pmfs with binary/ternary alphabets and N <= 3."""
    rng = np.random.default_rng(seed)
    pmfs = []
    while len(pmfs) < n_pmfs:
        N = int(rng.integers(1, 4))
        alph = tuple(int(rng.choice(alphabet_choices)) for _ in range(3))
        if math.prod(alph) ** N > max_entries:
            continue
        pmfs.append(random_pmf(rng, alph, N, concentration=float(rng.choice([0.3, 1.0]))))
    return verify_identities(pmfs)


# ---------------------------------------------------------------------------
# Monte-Carlo bridge
# ---------------------------------------------------------------------------


def sample_from_pmf(pmf: JointPmf, n_samples: int, seed) -> np.ndarray:
    """``n_samples`` i.i.d. tuples as an integer array ``(n_samples, 3N)``."""
    n_samples = int(n_samples)
    rng = np.random.default_rng(seed)
    if n_samples == 0:
        return np.empty((0, pmf.p.ndim), dtype=np.int64)
    flat = rng.choice(pmf.p.size, size=n_samples, p=pmf.p.ravel())
    return np.stack(np.unravel_index(flat, pmf.p.shape), axis=1).astype(np.int64)


def plug_in_measure(samples, alphabets, N, kind, direction="XY", conditioned=True) -> float:
    return oracle_measure(JointPmf.from_samples(samples, alphabets, N), kind, direction, conditioned)


def binary_entropy(p) -> float:
    """Binary entropy in nats."""
    if p in (0.0, 1.0):
        return 0.0
    return -p * math.log(p) - (1 - p) * math.log(1 - p)
