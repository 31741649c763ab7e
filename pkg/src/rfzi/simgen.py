"""Synthetic data: the 50-variable selection benchmark and zero-inflated counts."""

from dataclasses import dataclass, field

import numpy as np

from .dataset import ColumnMeta, CountDataset, Dataset
from .zicount import ZIP, ZINB, link_eval

TRUE_COEFS = (4.0, 4.0, 2.0, 2.0)
CORRELATED_PAIRS = (("c1", "c2"), ("c3", "c4"), ("b1", "b2"), ("b3", "b4"))
TRUE_VARIABLES = ("c1", "c2", "c3", "c4", "b1", "b2", "b3", "b4")


def _default_coefs():
    return TRUE_COEFS + (0.0,) * 21


@dataclass(frozen=True)
class SimConfig:
    n: int = 200
    n_cont: int = 25
    n_bin: int = 25
    cont_coefs: tuple = field(default_factory=_default_coefs)
    bin_coefs: tuple = field(default_factory=_default_coefs)
    pair_correlation: float = 0.9
    noise_sd: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.n_cont < 4 or self.n_bin < 4:
            raise ValueError("need at least 4 continuous and 4 binary variables")
        if len(self.cont_coefs) != self.n_cont or len(self.bin_coefs) != self.n_bin:
            raise ValueError("coefficient vectors must match the block sizes")
        if not -1.0 < self.pair_correlation < 1.0:
            raise ValueError("pair_correlation must lie in (-1, 1)")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")


def latent_binary_correlation(rho):
    """Latent normal correlation whose sign-thresholded pair has Pearson ``rho``.

    For zero thresholds P(both positive) = 1/4 + arcsin(r) / (2 pi), which
    gives a binary correlation of (2 / pi) arcsin(r).
    """
    return float(np.sin(rho * np.pi / 2.0))


def _correlated_normals(gen, n, rho):
    a = gen.standard_normal(n)
    b = rho * a + np.sqrt(1.0 - rho * rho) * gen.standard_normal(n)
    return a, b


def generate_selection_sim(config=SimConfig()):
    gen = np.random.default_rng(config.seed)
    n, rho = config.n, config.pair_correlation
    cont = gen.standard_normal((n, config.n_cont))
    for j in (0, 2):
        cont[:, j], cont[:, j + 1] = _correlated_normals(gen, n, rho)
    latent = gen.standard_normal((n, config.n_bin))
    r_star = latent_binary_correlation(rho)
    for j in (0, 2):
        latent[:, j], latent[:, j + 1] = _correlated_normals(gen, n, r_star)
    binary = (latent > 0).astype(float)
    y = cont @ np.asarray(config.cont_coefs) + binary @ np.asarray(config.bin_coefs)
    if config.noise_sd > 0:
        y = y + config.noise_sd * gen.standard_normal(n)
    columns = ([ColumnMeta(f"c{j + 1}", "continuous") for j in range(config.n_cont)]
               + [ColumnMeta(f"b{j + 1}", "binary") for j in range(config.n_bin)])
    return Dataset(columns, np.hstack([cont, binary]), y, response_name="y")


def _group_matrix(cov):
    """One row per group; a 1-D input is a single covariate."""
    cov = np.asarray(cov, dtype=float)
    if cov.ndim == 1:
        cov = cov[:, None]
    if cov.ndim != 2:
        raise ValueError("group covariates must be 1-D or 2-D")
    return cov


def generate_zi_counts(family, beta, gamma, group_x, group_z, mosquitoes_per_group,
                       theta=None, seed=0, x_names=None, z_names=None):
    """Draw per-mosquito counts for groups with covariates ``group_x``/``group_z``.

    Covariate matrices exclude the intercept column.  ``mosquitoes_per_group``
    is an int or one count per group.
    """
    gen = np.random.default_rng(seed)
    family = family.lower()
    if family not in (ZIP, ZINB):
        raise ValueError(f"unknown family {family!r}")
    if family == ZINB and (theta is None or theta <= 0):
        raise ValueError("ZINB needs theta > 0")
    gx, gz = _group_matrix(group_x), _group_matrix(group_z)
    if gx.shape[0] != gz.shape[0]:
        raise ValueError("group_x and group_z describe different numbers of groups")
    n_groups = gx.shape[0]
    sizes = np.broadcast_to(np.asarray(mosquitoes_per_group, dtype=int), (n_groups,))
    if np.any(sizes < 1):
        raise ValueError("every group needs at least one mosquito")
    lam, pi = link_eval(beta, gamma, gx, gz)
    group = np.repeat(np.arange(n_groups), sizes)
    lam_r, pi_r = lam[group], pi[group]
    if family == ZIP:
        counts = gen.poisson(lam_r)
    else:
        # gamma-Poisson mixture: mean lam, variance lam + lam^2 / theta
        counts = gen.poisson(gen.gamma(theta, lam_r / theta))
    counts = np.where(gen.random(group.size) < pi_r, 0, counts)
    return CountDataset(group_id=group, counts=counts.astype(np.int64), group_x=gx,
                        group_z=gz, x_names=list(x_names or [f"x{j + 1}" for j in range(gx.shape[1])]),
                        z_names=list(z_names or [f"z{j + 1}" for j in range(gz.shape[1])]))
