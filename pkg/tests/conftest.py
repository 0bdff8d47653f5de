import numpy as np
import pytest


def unit_rows(rng, n, d):
    """Random unit-norm embedding rows."""
    z = rng.standard_normal((n, d))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def assert_greedy_matches_oracle(z, picks, farthest, atol=1e-12):
    """Replay a greedy selection against a literal per-step rescan.

    Every pick must attain the step's best objective value and be the lowest
    index among candidates within `atol` of it (scores exactly equal in exact
    arithmetic can differ by an ulp between computation orders).
    """
    z = np.asarray(z, dtype=np.float64)
    mu = z.mean(axis=0)
    running = np.zeros(z.shape[1])
    pool = list(range(z.shape[0]))
    for k, pick in enumerate(picks, start=1):
        scores = np.array([np.linalg.norm(mu - (running + z[i]) / k) for i in pool])
        best = scores.max() if farthest else scores.min()
        tied = [i for i, s in zip(pool, scores) if abs(s - best) <= atol]
        assert abs(np.linalg.norm(mu - (running + z[pick]) / k) - best) <= atol, (
            f"step {k}: pick {pick} does not attain the best objective")
        assert pick == min(tied), f"step {k}: pick {pick}, tie-break expects {min(tied)}"
        pool.remove(pick)
        running += z[pick]


def assert_grad_close(analytic, numeric, rtol=1e-4, atol=1e-8):
    """Entrywise |a - n| <= atol + rtol * max(|a|, |n|)."""
    for a, n in zip(analytic.arrays(), numeric.arrays()):
        scale = np.maximum(np.abs(a), np.abs(n))
        bad = np.abs(a - n) > atol + rtol * scale
        assert not bad.any(), (
            f"gradient mismatch: analytic {a[bad][:3]} vs numeric {n[bad][:3]}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
