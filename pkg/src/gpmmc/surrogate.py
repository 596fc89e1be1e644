"""Metropolis kernel that answers most candidate evaluations from a local
surrogate and falls back to the true model only when the surrogate cannot be
trusted to bin the candidate correctly.

A candidate's surrogate prediction (mu, sigma) is accepted as a stand-in for
the true value only when the predictive probability of landing outside the
bin that mu falls in,

    beta = Phi(lo_edge; mu, sigma) + 1 - Phi(hi_edge; mu, sigma),

stays at or below the configured threshold. Otherwise the true model is
evaluated and the result feeds the evaluation store, shrinking the surrogate's
uncertainty exactly where the chain visits. An independent gate evaluates the
true model with small probability gamma regardless of beta, so the store keeps
growing even where the surrogate is confident; gamma = 1 degenerates to the
exact kernel and replays its trajectory from the same seed, which is what the
fixed per-step RNG layout in mcmc.py exists for.

The target density only sees which bin a value lands in (through the weight
lookup), so a surrogate value that bins correctly leaves the chain's law
unchanged; beta bounds the per-step probability of getting that bin wrong.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .binning import Binning
from .errors import SurrogateError
from .gp import EvaluationStore, build_local_surrogate, local_size
from .mcmc import ChainState, Proposal, StepRecord, Target
from .problem import EvalLedger, PerformanceModel, evaluate

__all__ = ["SurrogateKernelConfig", "misassignment_probability",
           "SurrogateKernel", "surrogate_mh_step"]

_INV_SQRT2 = 1.0 / math.sqrt(2.0)


def _phi(z: float) -> float:
    return 0.5 * (1.0 + math.erf(z * _INV_SQRT2))


@dataclass(frozen=True)
class SurrogateKernelConfig:
    """Refinement policy and kernel family for the surrogate step kernel.

    gamma is the per-step probability of an unconditional true evaluation;
    beta_max the largest tolerated bin-misassignment probability; lengths and
    p the frozen correlation kernel; prop the random-walk proposal.
    """

    gamma: float
    beta_max: float
    lengths: np.ndarray
    p: int
    prop: Proposal

    def __post_init__(self):
        object.__setattr__(self, "lengths",
                           np.atleast_1d(np.asarray(self.lengths, dtype=float)))
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if not 0.0 < self.beta_max < 1.0:
            raise ValueError(f"beta_max must lie in (0, 1), got {self.beta_max}")
        if np.any(self.lengths <= 0) or not np.all(np.isfinite(self.lengths)):
            raise ValueError("kernel lengthscales must be positive and finite")
        if self.p not in (1, 2):
            raise ValueError(f"kernel exponent must be 1 or 2, got {self.p}")


def misassignment_probability(mu: float, sigma: float,
                              binning: Binning) -> tuple[float, int | None]:
    """Probability that a Gaussian prediction lands outside its assigned cell.

    Returns (beta, bin index of mu). An in-range prediction is assigned to
    its bin and beta is the posterior mass outside that bin. A prediction
    outside the binned range is assigned to the rejection region, so beta is
    the posterior mass back inside the range: a confidently out-of-range
    prediction is a certain rejection and needs no true evaluation. sigma = 0
    means a point prediction, which assigns exactly: beta = 0.
    """
    if sigma < 0 or not math.isfinite(sigma):
        raise ValueError(f"sigma must be finite and nonnegative, got {sigma}")
    i = binning.index(mu)
    if sigma == 0.0:
        return 0.0, i
    if i is None:
        return (_phi((binning.hi - mu) / sigma)
                - _phi((binning.lo - mu) / sigma)), None
    lo = binning.lo + i * binning.delta
    hi = lo + binning.delta
    return _phi((lo - mu) / sigma) + 1.0 - _phi((hi - mu) / sigma), i


class SurrogateKernel:
    """Step kernel with per-candidate local surrogates and audited refinement.

    Tracks how every true evaluation was triggered (random gate, beta above
    threshold, or surrogate construction failure) so a run's cost can be
    reconciled exactly from the counters.
    """

    def __init__(self, model: PerformanceModel, store: EvaluationStore,
                 binning: Binning, config: SurrogateKernelConfig,
                 ledger: EvalLedger):
        self.model = model
        self.store = store
        self.binning = binning
        self.config = config
        self.ledger = ledger
        self.n_local = local_size(model.dimension)
        self.steps = 0
        self.refine_random = 0
        self.refine_beta = 0
        self.refine_fallback = 0
        self.surrogate_steps = 0

    def step(self, rng: np.random.Generator, state: ChainState,
             target: Target) -> tuple[ChainState, StepRecord]:
        cfg = self.config
        x_new = state.x + cfg.prop.scale * rng.standard_normal(state.x.size)
        mu = sigma = None
        try:
            gp = build_local_surrogate(self.store, x_new, cfg.lengths, cfg.p,
                                       self.n_local)
            mu, var = gp.posterior(x_new)
            sigma = math.sqrt(var)
            self.ledger.surrogate_evals += 1
        except SurrogateError:
            pass

        gate = rng.random()
        beta = None
        used_surrogate = False
        if gate < cfg.gamma:
            y_new = evaluate(self.model, x_new, self.ledger)
            self.store.insert(x_new, y_new)
            self.refine_random += 1
        elif mu is None:
            y_new = evaluate(self.model, x_new, self.ledger)
            self.store.insert(x_new, y_new)
            self.refine_fallback += 1
        else:
            beta, _ = misassignment_probability(mu, sigma, self.binning)
            if beta > cfg.beta_max:
                y_new = evaluate(self.model, x_new, self.ledger)
                self.store.insert(x_new, y_new)
                self.refine_beta += 1
            else:
                y_new = mu
                used_surrogate = True
                self.surrogate_steps += 1

        log_q_new = target(x_new, y_new)
        u = rng.random()
        accepted = False
        if log_q_new > -math.inf:
            if u == 0.0 or math.log(u) < log_q_new - state.log_q:
                accepted = True
        self.steps += 1
        rec = StepRecord(used_surrogate=used_surrogate, beta=beta,
                         refined=not used_surrogate, accepted=accepted)
        if accepted:
            return ChainState(x=x_new, y=y_new, log_q=log_q_new), rec
        return state, rec

    def counters(self) -> dict:
        return {
            "steps": self.steps,
            "surrogate_steps": self.surrogate_steps,
            "refine_random": self.refine_random,
            "refine_beta": self.refine_beta,
            "refine_fallback": self.refine_fallback,
        }


def surrogate_mh_step(rng: np.random.Generator, state: ChainState,
                      target: Target,
                      kernel: SurrogateKernel) -> tuple[ChainState, StepRecord]:
    """One surrogate-gated Metropolis step; see SurrogateKernel.step."""
    return kernel.step(rng, state, target)
