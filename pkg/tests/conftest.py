import functools

import numpy as np

from cfran.sysmodel import EffectiveStatistics, SystemConfig, assign_pilots, estimate_effective_statistics, generate_scenario


@functools.lru_cache(maxsize=None)
def table_stats(L, K, seed, n_mc=200):
    """Monte Carlo statistics for a default-configuration deployment."""
    cfg = SystemConfig()
    sc = generate_scenario(cfg, L, K, seed=seed)
    pil = assign_pilots(sc, cfg.tau_p)
    return estimate_effective_statistics(sc, pil, cfg, n_mc=n_mc, seed=seed)


def scalar_stats(b, c, sigma2=1.0):
    return EffectiveStatistics(np.array([[b]], float), np.full((1, 1, 1, 1), c, dtype=complex), 1, {}, sigma2)


def random_stats(rng, K, L, sigma2=1e-3):
    """Synthetic statistics with PSD interference matrices."""
    b = rng.uniform(0.1, 1.0, (K, L))
    C = np.zeros((K, K, L, L), dtype=complex)
    for k in range(K):
        for i in range(K):
            A = rng.normal(size=(L, L)) + 1j * rng.normal(size=(L, L))
            C[k, i] = 0.05 * A @ A.conj().T / L
    return EffectiveStatistics(b, C, 1, {}, sigma2)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
