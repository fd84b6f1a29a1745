import math
import warnings

import numpy as np
import pytest
from gauss_models import EntropyOracle, linear_system_covariance, relay_matrices
from hypothesis import given, settings
from hypothesis import strategies as st

from causalflow.ensemble import PrefixCovariance, WindowEnsemble, estimate_joint_covariance
from causalflow.exceptions import ConfigurationError, NumericalError
from causalflow.gaussian import (
    InformationRateTransformer,
    MeasureKind,
    causal_mi_dual_rate,
    clamp,
    evaluate_measures,
    gaussian_entropy,
    identity_residuals_gaussian,
    instantaneous_exchange_rate,
    measure_rate,
    mutual_information_rate,
    random_prefix_covariance,
    rate_vectors_over_windows,
)

KINDS = [m.value for m in MeasureKind]


def layout(dim_z):
    return [("X", 1), ("Y", 2)] + [("Z", 3 + i) for i in range(dim_z)]


def random_pc(seed, N, dim_z):
    return random_prefix_covariance(np.random.default_rng(seed), N, dim_z)


covariances = st.tuples(st.integers(0, 2**32 - 1), st.integers(1, 5), st.integers(0, 2)).map(lambda a: random_pc(*a))


# ---------------------------------------------------------------------------
# entropy
# ---------------------------------------------------------------------------


def test_entropy_examples():
    assert abs(gaussian_entropy(np.eye(1)) - 1.418939) < 1e-6
    assert abs(gaussian_entropy(np.eye(2)) - 2.837877) < 1e-6
    assert gaussian_entropy(np.zeros((0, 0))) == 0.0


def test_entropy_matches_monte_carlo():
    C = np.array([[1.0, 0.5], [0.5, 1.0]])
    Ci = np.linalg.inv(C)
    logdet = math.log(np.linalg.det(C))
    rng = np.random.default_rng(0)
    L = np.linalg.cholesky(C)
    total, n = 0.0, 0
    for _ in range(10):
        x = rng.standard_normal((1_000_000, 2)) @ L.T
        q = np.einsum("ij,jk,ik->i", x, Ci, x)
        total += np.sum(0.5 * q + 0.5 * logdet + math.log(2 * math.pi))
        n += x.shape[0]
    assert abs(total / n - gaussian_entropy(C)) < 1e-3


def test_entropy_non_pd_raises():
    with pytest.raises(NumericalError):
        gaussian_entropy(np.array([[1.0, 2.0], [2.0, 1.0]]))


# ---------------------------------------------------------------------------
# agreement with an independent entropy oracle
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("N,dim_z", [(1, 0), (1, 2), (3, 0), (3, 1), (5, 3)])
def test_rates_match_entropy_oracle(kind, N, dim_z):
    pc = random_pc(N * 10 + dim_z, N, dim_z)
    oracle = EntropyOracle(pc.C, N, dim_z)
    assert abs(measure_rate(pc, kind) - oracle.measure(kind)) < 1e-10


def test_instantaneous_exchange_matches_oracle():
    pc = random_pc(11, 4, 2)
    o = EntropyOracle(pc.C, 4, 2)
    expected = sum(o.cmi(o.X(n, n), o.Y(n, n), o.X(1, n - 1) + o.Y(1, n - 1) + o.Z(1, n - 1)) for n in range(1, 5))
    assert abs(instantaneous_exchange_rate(pc) - expected) < 1e-10


# ---------------------------------------------------------------------------
# examples
# ---------------------------------------------------------------------------


def block_diagonal_pc(N, dim_z, seed=0):
    """X, Y and Z mutually independent, each with its own temporal covariance."""
    rng = np.random.default_rng(seed)
    nv = 2 + dim_z
    C = np.zeros((nv * N, nv * N))
    for v in range(nv):
        A = rng.standard_normal((N, N))
        idx = [t * nv + v for t in range(N)]
        C[np.ix_(idx, idx)] = A @ A.T + np.eye(N)
    return PrefixCovariance(C, layout(dim_z), N)


@pytest.mark.parametrize("kind", KINDS)
def test_independence_gives_zero(kind):
    assert abs(measure_rate(block_diagonal_pc(4, 2), kind)) < 1e-12


def test_relay_conditioned_zero_unconditioned_positive():
    _, C = relay_matrices(4)
    pc = PrefixCovariance(C, [("X", 1), ("Y", 2), ("Z", 3)], 4)
    assert abs(measure_rate(pc, "massey")) < 1e-12
    assert abs(measure_rate(pc, "cbi")) < 1e-12
    assert measure_rate(pc.drop_z(), "massey") > 0.1


def test_single_step_pair_equals_mutual_information():
    rho = 0.5
    pc = PrefixCovariance(np.array([[1.0, rho], [rho, 1.0]]), layout(0), 1)
    expected = 0.5 * math.log(1 / (1 - rho**2))
    assert abs(expected - 0.143841) < 1e-6
    assert abs(measure_rate(pc, "massey") - expected) < 1e-14
    assert abs(mutual_information_rate(pc) - expected) < 1e-14


def test_sum_te_zero_at_single_step():
    assert measure_rate(random_pc(3, 1, 2), "sum_te") == 0.0


def test_no_feedback_channel_equalities():
    # X is autoregressive and never sees Y; Y is driven by past X through a
    # hidden third state, which is dropped.
    A = np.array([[0.6, 0.0, 0.0], [1.0, 0.0, 0.7], [1.0, 0.0, 0.0]])
    C = linear_system_covariance(A, 5)
    pc = PrefixCovariance(C, [("X", 1), ("Y", 2), ("Z", 3)], 5).drop_z()
    mi = mutual_information_rate(pc)
    assert abs(measure_rate(pc, "massey") - mi) < 1e-9
    assert abs(measure_rate(pc, "causal_mi") - mi) < 1e-9
    assert abs(measure_rate(pc, "conditional_mi") - mi) < 1e-12


def test_conditional_mi_zero_for_chain_through_z():
    # X and Y are driven only by Z^{N-1}; Z_N is independent of both.
    rng = np.random.default_rng(5)
    N, dz = 3, 2
    nz = dz * (N - 1)
    Ax, Ay = rng.standard_normal((N, nz)), rng.standard_normal((N, nz))
    # joint generator over (zpast, z_N, ex, ey)
    G = np.zeros((N * (2 + dz), nz + dz + 2 * N))
    nv = 2 + dz
    for t in range(N):
        G[t * nv + 0, :nz] = Ax[t]
        G[t * nv + 0, nz + dz + t] = 1.0
        G[t * nv + 1, :nz] = Ay[t]
        G[t * nv + 1, nz + dz + N + t] = 1.0
        for k in range(dz):
            col = t * dz + k if t < N - 1 else nz + k
            G[t * nv + 2 + k, col] = 1.0
    pc = PrefixCovariance(G @ G.T, layout(dz), N)
    assert abs(measure_rate(pc, "conditional_mi")) < 1e-8
    assert mutual_information_rate(pc) > 0.01


# ---------------------------------------------------------------------------
# identities
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("seed", range(10))
def test_identities_without_z(seed):
    pc = random_pc(seed, 1 + seed % 6, 0)
    res = identity_residuals_gaussian(pc)
    assert max(abs(r) for r in res.values()) < 1e-9
    assert abs(causal_mi_dual_rate(pc) - measure_rate(pc, "causal_mi")) < 1e-9


@pytest.mark.parametrize("seed", range(10))
def test_identities_that_survive_causal_conditioning(seed):
    pc = random_pc(100 + seed, 1 + seed % 6, 1 + seed % 3)
    res = identity_residuals_gaussian(pc)
    for name in ("causal_mi_decomposition", "massey_te_decomposition", "cbi_decomposition", "cbi_symmetry"):
        assert abs(res[name]) < 1e-9, name


def exchange_counterexample():
    """``Z_1`` copies ``Y_1`` and ``X_2`` copies ``Z_1``; all else is noise."""
    eps = 0.1
    # variables per time: X, Y, Z; sources: y1, y2, x1, x2, z1, z2 noises
    G = np.zeros((6, 6))
    G[0, 2] = 1.0  # X_1
    G[1, 0] = 1.0  # Y_1
    G[2, 0], G[2, 4] = 1.0, eps  # Z_1 = Y_1 + noise
    G[3, 0], G[3, 4], G[3, 3] = 1.0, eps, eps  # X_2 = Z_1 + noise
    G[4, 1] = 1.0  # Y_2
    G[5, 5] = 1.0  # Z_2
    return PrefixCovariance(G @ G.T, layout(1), 2)


def test_exchange_identity_fails_with_causal_conditioning():
    pc = exchange_counterexample()
    res = identity_residuals_gaussian(pc)
    assert abs(res["massey_kamitake_exchange"]) > 0.1
    # The decomposition of causal MI into DI1 and reverse Kamitake still holds.
    assert abs(res["causal_mi_decomposition"]) < 1e-12
    # Without Z the exchange identity is restored.
    assert abs(identity_residuals_gaussian(pc.drop_z())["massey_kamitake_exchange"]) < 1e-12


# ---------------------------------------------------------------------------
# properties
# ---------------------------------------------------------------------------


@settings(max_examples=40, deadline=None)
@given(covariances)
def test_non_negative(pc):
    vals = evaluate_measures(pc, KINDS)
    assert all(v >= -1e-8 for v in vals.values())


@settings(max_examples=40, deadline=None)
@given(covariances)
def test_ordering_from_decompositions(pc):
    di1 = measure_rate(pc, "massey")
    assert di1 <= measure_rate(pc, "causal_mi") + 1e-9
    assert measure_rate(pc, "sum_te") <= di1 + 1e-9


@settings(max_examples=40, deadline=None)
@given(covariances, st.floats(0.01, 100.0), st.floats(0.01, 100.0))
def test_scale_invariance(pc, a, b):
    d = np.ones(pc.C.shape[0])
    d[pc.indices((pc.N, 0, 0))] = a
    d[pc.indices((0, pc.N, 0))] = b
    scaled = PrefixCovariance(pc.C * np.outer(d, d), pc.var_layout, pc.N)
    for k in KINDS:
        assert abs(measure_rate(scaled, k) - measure_rate(pc, k)) < 1e-10


@settings(max_examples=30, deadline=None)
@given(covariances, st.integers(0, 2**32 - 1))
def test_independent_z_changes_nothing(pc, seed):
    rng = np.random.default_rng(seed)
    N, nv = pc.N, pc.n_vars
    A = rng.standard_normal((N, N))
    W = A @ A.T + np.eye(N)
    big = np.zeros(((nv + 1) * N, (nv + 1) * N))
    old = [t * (nv + 1) + v for t in range(N) for v in range(nv)]
    new = [t * (nv + 1) + nv for t in range(N)]
    big[np.ix_(old, old)] = pc.C
    big[np.ix_(new, new)] = W
    enlarged = PrefixCovariance(big, list(pc.var_layout) + [("Z", 99)], N)
    for k in KINDS:
        assert abs(measure_rate(enlarged, k) - measure_rate(pc, k)) < 1e-9


@settings(max_examples=30, deadline=None)
@given(covariances)
def test_cbi_symmetric(pc):
    assert abs(measure_rate(pc, "cbi") - measure_rate(pc.swap_xy(), "cbi")) < 1e-10


def test_section_order_does_not_matter():
    rng = np.random.default_rng(8)
    S = rng.standard_normal((500, 3, 4))
    S[:, 1, 1:] += S[:, 0, :-1]
    lay = layout(1)
    a = evaluate_measures(estimate_joint_covariance(WindowEnsemble(S, lay)), KINDS)
    b = evaluate_measures(estimate_joint_covariance(WindowEnsemble(S[rng.permutation(500)], lay)), KINDS)
    for k in a:
        assert abs(a[k] - b[k]) < 1e-10


# ---------------------------------------------------------------------------
# clamping, rate vectors and the transformer
# ---------------------------------------------------------------------------


def test_clamp():
    assert clamp(0.3) == (0.3, False)
    assert clamp(-1e-10) == (0.0, True)
    with pytest.raises(NumericalError):
        clamp(-1e-6)


def test_measure_names():
    assert MeasureKind.parse("CBI") is MeasureKind.CBI
    with pytest.raises(ConfigurationError):
        MeasureKind.parse("granger")


def test_rate_vectors_counting():
    rng = np.random.default_rng(9)
    lay = layout(1)
    K = 5
    ens = {tag: [WindowEnsemble(rng.standard_normal((60, 3, 4)), lay) for _ in range(K)] for tag in ("high", "low")}
    vecs = rate_vectors_over_windows(ens, (1, 2), ["cbi", "massey", "kamitake", "sum_te"])
    assert len(vecs) == 8 and all(len(v) == K for v in vecs)


def test_rate_vectors_per_sample():
    rng = np.random.default_rng(10)
    ens = {"t": [WindowEnsemble(rng.standard_normal((60, 3, 4)), layout(1))]}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        total = rate_vectors_over_windows(ens, (1, 2), ["massey"])[0].values
        per = rate_vectors_over_windows(ens, (1, 2), ["massey"], per_sample=True)[0].values
    np.testing.assert_allclose(per * 4, total)


def test_transformer_matches_functions():
    pcs = [random_pc(s, 3, 1) for s in range(4)]
    out = InformationRateTransformer(measures=("cbi", "massey")).fit().transform(pcs)
    assert out.shape == (4, 2)
    for i, pc in enumerate(pcs):
        assert out[i, 0] == measure_rate(pc, "cbi")
        assert out[i, 1] == measure_rate(pc, "massey")
