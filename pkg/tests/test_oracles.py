import math

import numpy as np
import pytest

from ckn.oracles import (OracleReport, exact_gaussian, exact_match_kernel,
                         mc_gaussian_estimate)


@pytest.mark.parametrize("cos", [-0.5, 0.0, 0.8])
def test_monte_carlo_gaussian_within_four_standard_errors(cos):
    x = np.array([1.0, 0.0, 0.0])
    xp = np.array([cos, math.sqrt(1 - cos**2), 0.0])
    est, se = mc_gaussian_estimate(x, xp, 1.0, 200_000, seed=0)
    assert abs(est - exact_gaussian(x, xp, 1.0)) < 4 * se


def test_match_kernel_vectorized_cross_check(rng):
    M, Mp = rng.standard_normal((5, 4, 2)), rng.standard_normal((5, 4, 2))
    e, alpha, beta = 2, 0.7, 1.1
    def rows(A):
        P = np.array([A[i:i + e, j:j + e].ravel() for i in range(4) for j in range(3)])
        Z = np.array([(i, j) for i in range(4) for j in range(3)], dtype=float)
        return P, Z
    P, Z = rows(M)
    Q, _ = rows(Mp)
    nP, nQ = np.linalg.norm(P, axis=1), np.linalg.norm(Q, axis=1)
    d2 = ((P / nP[:, None])[:, None] - (Q / nQ[:, None])[None]) ** 2
    z2 = ((Z[:, None] - Z[None]) ** 2).sum(-1)
    K = np.exp(-z2 / (2 * beta**2)) * np.outer(nP, nQ) * np.exp(-d2.sum(-1) / (2 * alpha**2))
    assert exact_match_kernel(M, Mp, e, alpha, beta) == pytest.approx(K.sum(), rel=1e-12)


def test_match_kernel_ignores_zero_subpatches(rng):
    M = np.zeros((3, 3, 1))
    assert exact_match_kernel(M, rng.random((3, 3, 1)), 2, 1.0, 1.0) == 0.0


def test_report_errors():
    r = OracleReport.build("x", 2.0, 2.5)
    assert (r.abs_error, r.rel_error) == (0.5, 0.25)
    assert "seed" not in r.to_dict()
