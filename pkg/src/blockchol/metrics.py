"""Loss measures comparing an estimate against a known truth.

Six losses: the max-column-sum norm L1, the spectral norm L2 of the error
(largest absolute eigenvalue of the symmetric difference), the Frobenius
norm, the Kullback-Leibler and quadratic divergences scaled by 1/p, and the
false selection loss over the full p x p support grid in percent.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, fields

import numpy as np

from .errors import InvalidInputError, NotPositiveDefiniteError
from .linalg import check_symmetric, spd_cholesky, spd_logdet
from .scenarios import GeneratedTruth
from .selection import NONZERO_TOL

__all__ = ["LossReport", "losses", "aggregate"]

LOSS_FIELDS = ("l1", "l2", "fnorm", "kl", "ql", "fsl_percent")


@dataclass(frozen=True)
class LossReport:
    l1: float
    l2: float
    fnorm: float
    kl: float
    ql: float
    fsl_percent: float

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(getattr(self, f.name) for f in fields(self))


def losses(truth: GeneratedTruth, est: np.ndarray) -> LossReport:
    """All six losses of `est` against the generated truth.

    KL needs an SPD estimate; a non-SPD one is reported as KL = +inf with a
    warning rather than an error.
    """
    est = check_symmetric(est, "estimate")
    omega = truth.omega
    p = omega.shape[0]
    if est.shape != omega.shape:
        raise InvalidInputError("estimate dimension does not match the truth")

    diff = omega - est
    l1 = float(np.max(np.sum(np.abs(diff), axis=0)))
    l2 = float(np.max(np.abs(np.linalg.eigvalsh(diff))))
    fnorm = float(np.linalg.norm(diff, "fro"))

    prod = truth.sigma @ est
    trace = float(np.trace(prod))
    try:
        logdet = spd_logdet(spd_cholesky(truth.sigma)) + spd_logdet(spd_cholesky(est))
        kl = (trace - logdet - p) / p
        if -1e-10 < kl < 0.0:
            kl = 0.0
    except NotPositiveDefiniteError:
        warnings.warn("estimate is not positive definite; reporting KL = inf")
        kl = math.inf
    m = prod - np.eye(p)
    ql = float(np.sum(m * m.T)) / p

    est_nonzero = np.abs(est) > NONZERO_TOL
    fp = int(np.count_nonzero(est_nonzero & ~truth.support))
    fn = int(np.count_nonzero(~est_nonzero & truth.support))
    fsl = 100.0 * (fp + fn) / (p * p)

    return LossReport(l1=l1, l2=l2, fnorm=fnorm, kl=kl, ql=ql, fsl_percent=fsl)


def aggregate(reports: list[LossReport]) -> tuple[LossReport, LossReport]:
    """Per-field mean and standard error (sample std / sqrt(R)) over replicates."""
    if len(reports) < 2:
        raise InvalidInputError("aggregation needs at least 2 reports")
    arr = np.array([r.as_tuple() for r in reports])
    means = arr.mean(axis=0)
    ses = arr.std(axis=0, ddof=1) / math.sqrt(arr.shape[0])
    return LossReport(*means), LossReport(*ses)
