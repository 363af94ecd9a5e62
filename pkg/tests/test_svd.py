import numpy as np
import pytest
import scipy.sparse as sp

from patientvec.numeric import Rng
from patientvec.svd import fit_truncated_svd, project


def gram_oracle(M):
    """Singular values / right vectors from the eigendecomposition of M^T M."""
    M = np.asarray(M.toarray() if sp.issparse(M) else M)
    w, V = np.linalg.eigh(M.T @ M)
    order = np.argsort(w)[::-1]
    return np.sqrt(np.clip(w[order], 0, None)), V[:, order]


def random_sparse(seed, rows=40, cols=60, density=0.2):
    r = Rng(seed)
    mask = r.random((rows, cols)) < density
    return sp.csr_matrix(r.normal((rows, cols)) * mask)


def test_identity():
    f = fit_truncated_svd(np.eye(3), 2)
    np.testing.assert_allclose(f.singular_values, [1.0, 1.0], atol=1e-12)
    np.testing.assert_allclose(f.components.T @ f.components, np.eye(2), atol=1e-12)


def test_diagonal():
    f = fit_truncated_svd(np.diag([3.0, 2.0, 1.0]), 2)
    np.testing.assert_allclose(f.singular_values, [3.0, 2.0], atol=1e-12)
    np.testing.assert_allclose(f.components, np.eye(3)[:, :2], atol=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_random_against_gram_oracle(seed):
    M = random_sparse(seed)
    f = fit_truncated_svd(M, 5, seed=seed)
    s, _ = gram_oracle(M)
    np.testing.assert_allclose(f.singular_values, s[:5], atol=1e-8)
    np.testing.assert_allclose(f.components.T @ f.components, np.eye(5), atol=1e-8)
    assert np.all(np.diff(f.singular_values) <= 0) and np.all(f.singular_values >= 0)


def test_components_match_oracle_up_to_sign():
    M = random_sparse(11)
    f = fit_truncated_svd(M, 5)
    _, V = gram_oracle(M)
    for j in range(5):
        assert abs(abs(f.components[:, j] @ V[:, j]) - 1.0) < 1e-8


def test_sign_convention():
    f = fit_truncated_svd(random_sparse(3), 5, seed=3)
    for j in range(5):
        col = f.components[:, j]
        assert col[np.argmax(np.abs(col))] > 0
    g = fit_truncated_svd(random_sparse(3), 5, seed=99)
    np.testing.assert_allclose(f.components, g.components, atol=1e-8)


def test_eckart_young():
    for seed in range(4):
        M = random_sparse(seed, 30, 25, 0.3)
        k = 4
        f = fit_truncated_svd(M, k, seed=seed)
        D = M.toarray()
        err = np.linalg.norm(D - (D @ f.components) @ f.components.T)
        s, _ = gram_oracle(D)
        best = np.sqrt(np.sum(s[k:] ** 2))
        assert err == pytest.approx(best, rel=1e-6)


def test_projection_identities():
    M = random_sparse(2)
    f = fit_truncated_svd(M, 5)
    assert not project(f, np.zeros(60)).any()
    U, s, _ = np.linalg.svd(M.toarray())
    us = U[:, :5] * s[:5]
    proj = project(f, M)
    # columns agree up to the sign of each singular vector
    for j in range(5):
        sign = np.sign(proj[:, j] @ us[:, j])
        np.testing.assert_allclose(proj[:, j], sign * us[:, j], atol=1e-6)
    r = Rng(5)
    x, y = r.normal(60), r.normal(60)
    np.testing.assert_allclose(project(f, x + y), project(f, x) + project(f, y), atol=1e-10)
    np.testing.assert_allclose(project(f, M[3]).ravel(), proj[3], atol=1e-12)


def test_errors():
    with pytest.raises(ValueError):
        fit_truncated_svd(np.eye(3), 4)
    with pytest.raises(ValueError):
        fit_truncated_svd(np.eye(3), 0)
    with pytest.raises(ValueError):
        fit_truncated_svd(np.zeros((0, 3)), 1)
    f = fit_truncated_svd(np.eye(3), 1)
    with pytest.raises(ValueError, match="dimension mismatch"):
        project(f, np.ones(4))


def test_no_extra_iterations_option():
    M = random_sparse(8)
    f = fit_truncated_svd(M, 5, power_iters=0, max_power_iters=0)
    s, _ = gram_oracle(M)
    # plain sketch without refinement is still within a loose tolerance of the top value
    assert f.singular_values[0] == pytest.approx(s[0], rel=0.2)
