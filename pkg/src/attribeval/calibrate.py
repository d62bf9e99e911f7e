"""Bayesian calibration of utility ratings with Expectation Propagation.

Generative model: each item i has a latent true utility mu_i ~ N(0, 1);
each annotator j has an accuracy tau_j ~ Gamma(shape k, rate theta); an
observed rating is s_ij ~ N(mu_i, 1/tau_j).  Ratings are z-scored per
annotator before inference so lenient and harsh raters land on one scale.

Inference approximates every likelihood factor with a Gaussian message in
mu_i and a Gamma message in tau_j, refined by moment matching over a
log-tau quadrature grid until the natural parameters stop moving.  theta
is a RATE parameter: the prior mean of tau is k/theta.
"""
from __future__ import annotations

import logging
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import digamma, gammaln

__all__ = [
    "UtilityObservation",
    "ZScoreResult",
    "CalibrationResult",
    "zscore_per_annotator",
    "ep_calibrate",
]

logger = logging.getLogger(__name__)

# log-tau quadrature grid; wide enough for any cavity that can arise from
# z-scored data, fine enough for 1e-3 oracle agreement
_LOG_TAU_GRID = np.linspace(-15.0, 10.0, 1201)
_TAU_GRID = np.exp(_LOG_TAU_GRID)

_MIN_PRECISION = 1e-12
_MIN_SHAPE = 1e-8
_MIN_RATE = 1e-10


@dataclass(frozen=True)
class UtilityObservation:
    """One annotator's utility rating of one item."""

    item_id: str
    annotator_id: str
    score: float


@dataclass(frozen=True)
class ZScoreResult:
    observations: tuple[UtilityObservation, ...]
    degenerate_annotators: frozenset[str]


@dataclass
class CalibrationResult:
    """Posteriors from one EP run.

    ``items`` maps item_id to (posterior mean, posterior variance) of the
    true utility; ``annotators`` maps annotator_id to (shape, rate) of the
    accuracy posterior.
    """

    items: dict[str, tuple[float, float]]
    annotators: dict[str, tuple[float, float]]
    converged: bool
    iterations: int
    skipped_factors: int = 0

    def to_dict(self) -> dict:
        return {
            "items": {k: list(v) for k, v in self.items.items()},
            "annotators": {k: list(v) for k, v in self.annotators.items()},
            "converged": self.converged,
            "iterations": self.iterations,
            "skipped_factors": self.skipped_factors,
        }


def _check_unique_pairs(observations: Sequence[UtilityObservation]) -> None:
    seen = set()
    for obs in observations:
        pair = (obs.item_id, obs.annotator_id)
        if pair in seen:
            raise ValueError(f"duplicate observation for item/annotator pair {pair}")
        seen.add(pair)


def zscore_per_annotator(observations: Sequence[UtilityObservation]) -> ZScoreResult:
    """Standardize each annotator's scores to mean 0 and population std 1.

    Annotators whose scores carry no variation (all equal, or only one
    rating) cannot be standardized; their scores map to 0 and the annotator
    is flagged as degenerate.
    """
    _check_unique_pairs(observations)
    by_annotator: dict[str, list[UtilityObservation]] = {}
    for obs in observations:
        by_annotator.setdefault(obs.annotator_id, []).append(obs)
    transformed: list[UtilityObservation] = []
    degenerate: set[str] = set()
    stats: dict[str, tuple[float, float]] = {}
    for annotator, group in by_annotator.items():
        scores = np.asarray([o.score for o in group], dtype=float)
        mean = float(scores.mean())
        std = float(scores.std())
        if std == 0.0:
            degenerate.add(annotator)
        stats[annotator] = (mean, std)
    for obs in observations:
        mean, std = stats[obs.annotator_id]
        score = 0.0 if std == 0.0 else (obs.score - mean) / std
        transformed.append(UtilityObservation(obs.item_id, obs.annotator_id, score))
    return ZScoreResult(tuple(transformed), frozenset(degenerate))


def _solve_gamma_shape(delta: float) -> float:
    """Solve ln(shape) - digamma(shape) = delta for the shape parameter."""
    if delta <= 1e-12:
        return 1e9
    lo, hi = 1e-9, 1e9
    def gap(alpha: float) -> float:
        return math.log(alpha) - digamma(alpha) - delta
    if gap(hi) > 0.0:
        return hi
    if gap(lo) < 0.0:
        return lo
    return float(brentq(gap, lo, hi, xtol=1e-10, rtol=1e-12))


def _tilted_moments(
    cav_precision: float,
    cav_meanprec: float,
    cav_shape: float,
    cav_rate: float,
    score: float,
) -> tuple[float, float, float, float] | None:
    """Moments of the tilted distribution for one factor.

    Integrates the cavity Gamma times the marginal likelihood of the score
    over a log-tau grid; the mu moments use the exact Gaussian conditional
    at each tau.  Returns (E[mu], Var[mu], E[tau], E[ln tau]) or None when
    the integral degenerates.
    """
    cav_mean = cav_meanprec / cav_precision
    cav_var = 1.0 / cav_precision
    tau = _TAU_GRID
    log_u = _LOG_TAU_GRID
    total_var = cav_var + 1.0 / tau
    log_w = (
        cav_shape * math.log(cav_rate)
        - gammaln(cav_shape)
        + cav_shape * log_u
        - cav_rate * tau
        - 0.5 * np.log(2.0 * math.pi * total_var)
        - 0.5 * (score - cav_mean) ** 2 / total_var
    )
    log_w -= log_w.max()
    w = np.exp(log_w)
    z = w.sum()
    if not np.isfinite(z) or z <= 0.0:
        return None
    w /= z
    cond_precision = cav_precision + tau
    cond_mean = (cav_meanprec + tau * score) / cond_precision
    e_mu = float(w @ cond_mean)
    e_mu2 = float(w @ (1.0 / cond_precision + cond_mean**2))
    var_mu = e_mu2 - e_mu * e_mu
    e_tau = float(w @ tau)
    e_log_tau = float(w @ log_u)
    if not all(map(math.isfinite, (e_mu, var_mu, e_tau, e_log_tau))) or var_mu <= 0.0:
        return None
    return e_mu, var_mu, e_tau, e_log_tau


def ep_calibrate(
    observations: Sequence[UtilityObservation],
    k: float = 1.5,
    theta: float = 0.5,
    tol: float = 1e-6,
    max_iter: int = 500,
    damping: float = 0.8,
    item_ids: Iterable[str] | None = None,
    annotator_ids: Iterable[str] | None = None,
    clamp_tau: Mapping[str, float] | None = None,
) -> CalibrationResult:
    """Infer posteriors over item utilities and annotator accuracies.

    Sweeps the observation factors in input order, moment-matching one
    factor at a time with damped message updates, until the largest natural
    parameter change falls below ``tol`` or ``max_iter`` sweeps pass (the
    result is then flagged unconverged but still returned).  Items or
    annotators registered via ``item_ids``/``annotator_ids`` without any
    observation keep their prior.  ``clamp_tau`` fixes named annotators'
    accuracy to a constant, turning their factors into exact conjugate
    Gaussian updates; used for testing against closed forms.
    """
    if k <= 0.0 or theta <= 0.0:
        raise ValueError(f"priors must be positive, got k={k} theta={theta}")
    if not 0.0 < damping <= 1.0:
        raise ValueError(f"damping must be in (0, 1], got {damping}")
    if not observations:
        raise ValueError("no observations to calibrate")
    _check_unique_pairs(observations)
    clamp_tau = dict(clamp_tau or {})

    items = list(dict.fromkeys([o.item_id for o in observations]))
    for extra in item_ids or ():
        if extra not in items:
            items.append(extra)
    annotators = list(dict.fromkeys([o.annotator_id for o in observations]))
    for extra in annotator_ids or ():
        if extra not in annotators:
            annotators.append(extra)
    item_pos = {item: pos for pos, item in enumerate(items)}
    annot_pos = {annot: pos for pos, annot in enumerate(annotators)}

    # messages per factor: Gaussian (precision, mean*precision) on mu and
    # Gamma natural parameters (shape-1, rate) on tau, all starting at zero
    n_factors = len(observations)
    msg_mu = np.zeros((n_factors, 2))
    msg_tau = np.zeros((n_factors, 2))

    # running totals avoid rescanning observations every factor visit
    mu_precision = np.ones(len(items))
    mu_meanprec = np.zeros(len(items))
    tau_shape = np.full(len(annotators), k)
    tau_rate = np.full(len(annotators), theta)

    skipped = 0
    converged = False
    sweeps = 0
    for sweeps in range(1, max_iter + 1):
        max_delta = 0.0
        skipped = 0
        for f, obs in enumerate(observations):
            i = item_pos[obs.item_id]
            j = annot_pos[obs.annotator_id]
            cav_precision = mu_precision[i] - msg_mu[f, 0]
            cav_meanprec = mu_meanprec[i] - msg_mu[f, 1]
            if cav_precision <= _MIN_PRECISION:
                skipped += 1
                continue

            if obs.annotator_id in clamp_tau:
                tau0 = clamp_tau[obs.annotator_id]
                new_mu = np.array([tau0, tau0 * obs.score])
                delta = np.abs(new_mu - msg_mu[f]).max()
                mu_precision[i] = cav_precision + new_mu[0]
                mu_meanprec[i] = cav_meanprec + new_mu[1]
                msg_mu[f] = new_mu
                max_delta = max(max_delta, delta)
                continue

            cav_shape = tau_shape[j] - msg_tau[f, 0]
            cav_rate = tau_rate[j] - msg_tau[f, 1]
            if cav_shape <= _MIN_SHAPE or cav_rate <= _MIN_RATE:
                skipped += 1
                continue

            moments = _tilted_moments(
                cav_precision, cav_meanprec, cav_shape, cav_rate, obs.score
            )
            if moments is None:
                skipped += 1
                continue
            e_mu, var_mu, e_tau, e_log_tau = moments

            new_mu_msg = np.array(
                [1.0 / var_mu - cav_precision, e_mu / var_mu - cav_meanprec]
            )
            new_mu_msg = damping * new_mu_msg + (1.0 - damping) * msg_mu[f]
            if cav_precision + new_mu_msg[0] <= _MIN_PRECISION:
                skipped += 1
            else:
                delta = np.abs(new_mu_msg - msg_mu[f]).max()
                mu_precision[i] = cav_precision + new_mu_msg[0]
                mu_meanprec[i] = cav_meanprec + new_mu_msg[1]
                msg_mu[f] = new_mu_msg
                max_delta = max(max_delta, delta)

            fitted_shape = _solve_gamma_shape(math.log(e_tau) - e_log_tau)
            fitted_rate = fitted_shape / e_tau
            new_tau_msg = np.array([fitted_shape - cav_shape, fitted_rate - cav_rate])
            new_tau_msg = damping * new_tau_msg + (1.0 - damping) * msg_tau[f]
            if (
                cav_shape + new_tau_msg[0] <= _MIN_SHAPE
                or cav_rate + new_tau_msg[1] <= _MIN_RATE
            ):
                skipped += 1
            else:
                delta = np.abs(new_tau_msg - msg_tau[f]).max()
                tau_shape[j] = cav_shape + new_tau_msg[0]
                tau_rate[j] = cav_rate + new_tau_msg[1]
                msg_tau[f] = new_tau_msg
                max_delta = max(max_delta, delta)

        if max_delta < tol:
            converged = True
            break

    if not converged:
        logger.warning("EP stopped unconverged after %d sweeps", sweeps)

    item_posteriors = {}
    for item, pos in item_pos.items():
        precision, meanprec = mu_precision[pos], mu_meanprec[pos]
        item_posteriors[item] = (meanprec / precision, 1.0 / precision)
    annotator_posteriors = {}
    for annotator, pos in annot_pos.items():
        annotator_posteriors[annotator] = (float(tau_shape[pos]), float(tau_rate[pos]))
    return CalibrationResult(
        items=item_posteriors,
        annotators=annotator_posteriors,
        converged=converged,
        iterations=sweeps,
        skipped_factors=skipped,
    )
