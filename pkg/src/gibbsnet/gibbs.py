"""Spike-and-slab prior over sparse network weights and the tempered
posterior sampler.

The prior mixes, over nonempty active sets of a flat parameter space,
geometrically decaying support weights with uniform "slab" values on
[-weight_bound, weight_bound]; the posterior reweights it by
exp(-temperature * empirical risk).  Sampling uses a reversible-jump
Metropolis-Hastings chain with three moves: activate a coordinate at a
uniform value, deactivate a coordinate, or perturb one active weight by a
reflected uniform step.  For the geometric/uniform prior the
dimension-matching factors collapse, leaving acceptance ratios

    add:     exp(-lambda dR) * (p_remove / p_add) / s
    remove:  exp(-lambda dR) * (p_add / p_remove) * s
    perturb: exp(-lambda dR)

The chain is strictly sequential per seed; draws are immutable afterwards.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyDataset, InvalidClass, NoDraws, OutOfSupport
from .model import Dataset
from .network import (
    ACTIVATIONS,
    Architecture,
    SparseNetwork,
    forward,
    layer_slices,
    max_param_count,
    param_count,
)


@dataclass(frozen=True)
class ClassDef:
    """Bounded sparse network class: depth, width, sparsity cap, weight
    bound and output clip, plus the activation."""

    depth: int
    width: int
    sparsity: int
    weight_bound: float
    output_clip: float
    activation: str = "relu"

    def __post_init__(self):
        if self.depth < 0 or self.width < 1:
            raise InvalidClass("need depth >= 0 and width >= 1")
        if self.sparsity < 1:
            raise InvalidClass("sparsity cap must be at least 1")
        if self.sparsity > max_param_count(self.depth, self.width):
            raise InvalidClass("sparsity cap exceeds the padded parameter count")
        if self.weight_bound <= 0 or self.output_clip <= 0:
            raise InvalidClass("bounds must be positive")
        if self.activation not in ACTIVATIONS:
            raise InvalidClass(f"unknown activation {self.activation!r}")

    def architecture(self, input_dim: int, output_dim: int = 1) -> Architecture:
        widths = (input_dim,) + (self.width,) * self.depth + (output_dim,)
        return Architecture(depth=self.depth, widths=widths)


@dataclass(frozen=True)
class GibbsConfig:
    """Prior and sampler settings.

    ``move_probs`` are the (add, remove, perturb) proposal probabilities;
    ``step`` defaults to a tenth of the slab half-width.
    """

    support_decay: float
    weight_bound: float
    output_clip: float
    temperature: float
    move_probs: tuple = (0.25, 0.25, 0.5)
    step: float | None = None
    iters: int = 10_000
    burn_in: int = 2_000
    thin: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.support_decay < 2:
            raise ValueError("support decay must be at least 2")
        if self.weight_bound <= 0 or self.output_clip <= 0:
            raise ValueError("bounds must be positive")
        if self.temperature < 0:
            raise ValueError("temperature must be nonnegative")
        probs = tuple(float(p) for p in self.move_probs)
        object.__setattr__(self, "move_probs", probs)
        if len(probs) != 3 or any(p < 0 for p in probs):
            raise ValueError("need three nonnegative move probabilities")
        if abs(sum(probs) - 1.0) > 1e-12:
            raise ValueError("move probabilities must sum to 1")
        if self.step is None:
            object.__setattr__(self, "step", self.weight_bound / 10.0)
        if self.step <= 0:
            raise ValueError("perturbation step must be positive")
        if self.iters <= self.burn_in:
            raise ValueError("iters must exceed burn_in")
        if self.thin < 1:
            raise ValueError("thin must be at least 1")

    @classmethod
    def for_class(cls, classdef: ClassDef, **kwargs) -> "GibbsConfig":
        return cls(
            weight_bound=classdef.weight_bound,
            output_clip=classdef.output_clip,
            **kwargs,
        )


def prior_support_normalizer(decay: float, n_max: int) -> float:
    """Normalising constant of the geometric support-size weights:
    (1 - decay^-n_max) / (decay - 1)."""
    if decay < 2:
        raise ValueError("support decay must be at least 2")
    if n_max < 1:
        raise ValueError("n_max must be positive")
    return (1.0 - decay ** (-n_max)) / (decay - 1.0)


def log_prior(net: SparseNetwork, cfg: GibbsConfig, n_max: int) -> float:
    """Log prior density of a sparse network: the geometric weight of its
    support size, split evenly over supports of that size, times the
    uniform slab density on the active coordinates."""
    k = int(net.active.size)
    if k < 1 or k > n_max:
        raise OutOfSupport(f"support size {k} outside 1..{n_max}")
    if np.any(np.abs(net.theta[net.active]) > cfg.weight_bound):
        raise OutOfSupport("an active weight exceeds the slab half-width")
    decay = cfg.support_decay
    log_binom = (
        math.lgamma(n_max + 1) - math.lgamma(k + 1) - math.lgamma(n_max - k + 1)
    )
    return (
        -k * math.log(decay)
        - log_binom
        - k * math.log(2.0 * cfg.weight_bound)
        - math.log(prior_support_normalizer(decay, n_max))
    )


def temperature(n: int, gamma: float, bernstein_k: float) -> float:
    """Posterior temperature n*gamma / (32K + 10) for effective sample size
    n*gamma and Bernstein constant K."""
    if n < 1:
        raise ValueError("n must be positive")
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    if bernstein_k <= 0:
        raise ValueError("Bernstein constant must be positive")
    return n * gamma / (32.0 * bernstein_k + 10.0)


@dataclass(frozen=True)
class PosteriorDraws:
    """Retained post-burn-in draws in compact array form."""

    arch: Architecture
    weight_bound: float
    output_clip: float
    activation: str
    thetas: np.ndarray
    actives: np.ndarray
    log_scores: np.ndarray
    acceptance_rates: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.thetas.shape[0]

    def network(self, i: int) -> SparseNetwork:
        return SparseNetwork(
            arch=self.arch,
            theta=self.thetas[i].copy(),
            active=np.flatnonzero(self.actives[i]),
            weight_bound=self.weight_bound,
            output_clip=self.output_clip,
        )

    def networks(self) -> list:
        return [self.network(i) for i in range(len(self))]

    @property
    def support_sizes(self) -> np.ndarray:
        return self.actives.sum(axis=1)

    def to_jsonl(self) -> str:
        lines = []
        for i in range(len(self)):
            net = self.network(i)
            doc = json.loads(net.to_json())
            doc["log_score"] = float(self.log_scores[i])
            lines.append(json.dumps(doc))
        return "\n".join(lines) + ("\n" if lines else "")


def _reflect(value: float, bound: float) -> float:
    """Fold a real number into [-bound, bound] (triangle-wave reflection)."""
    period = 4.0 * bound
    y = (value + bound) % period
    if y > 2.0 * bound:
        y = period - y
    return y - bound


def _per_state_risk(data: Dataset, loss: str):
    """Collapse the sample onto unique input rows.

    Returns (points, risk_fn) where risk_fn maps the vector of predictions
    at those rows to the empirical risk; inputs repeat heavily on a finite
    state space, so the sampler only ever evaluates networks there.
    """
    points, inverse = np.unique(data.inputs, axis=0, return_inverse=True)
    n = float(len(data))
    m = points.shape[0]
    if loss == "square":
        weight = np.bincount(inverse, minlength=m) / n
        y_mean = np.bincount(inverse, weights=data.outputs, minlength=m) / n
        y_sq = float(np.sum(data.outputs**2)) / n

        def risk_fn(h):
            return float(np.dot(weight, h * h) - 2.0 * np.dot(y_mean, h) + y_sq)

    elif loss == "logistic":
        pos = np.bincount(inverse, weights=(data.outputs > 0), minlength=m) / n
        neg = np.bincount(inverse, weights=(data.outputs < 0), minlength=m) / n

        def risk_fn(h):
            return float(
                np.dot(pos, np.logaddexp(0.0, -h)) + np.dot(neg, np.logaddexp(0.0, h))
            )

    else:
        raise ValueError(f"unknown loss {loss!r}")
    return points, risk_fn


def sample_posterior(
    data: Dataset, loss: str, classdef: ClassDef, cfg: GibbsConfig
) -> PosteriorDraws:
    """Run the reversible-jump chain and return thinned post-burn-in draws.

    The stationary law is the tempered posterior on the class, restricted
    to supports of size at most the sparsity cap; every draw satisfies the
    hard class constraints (active weights inside the slab, support never
    empty, support size capped).
    """
    if len(data) == 0:
        raise EmptyDataset("cannot sample a posterior from no data")
    if classdef.sparsity < 1:
        raise InvalidClass("sparsity cap must be at least 1")
    if not (
        math.isclose(cfg.weight_bound, classdef.weight_bound)
        and math.isclose(cfg.output_clip, classdef.output_clip)
    ):
        raise InvalidClass("config bounds must match the class bounds")

    arch = classdef.architecture(input_dim=data.inputs.shape[1])
    n_params = param_count(arch)
    slab = classdef.weight_bound
    clip = classdef.output_clip
    cap = min(classdef.sparsity, n_params)
    act_fn = ACTIVATIONS[classdef.activation].fn
    slices = layer_slices(arch)
    points, risk_fn = _per_state_risk(data, loss)

    def outputs(theta):
        a = points
        last = len(slices) - 1
        for idx, (w_sl, b_sl, (rows, cols)) in enumerate(slices):
            w = theta[w_sl].reshape((rows, cols), order="F")
            a = a @ w.T + theta[b_sl]
            if idx < last:
                a = act_fn(a)
        return np.clip(a[:, 0], -clip, clip)

    rng = np.random.default_rng(cfg.seed)
    theta = np.zeros(n_params)
    active = np.zeros(n_params, dtype=bool)
    active[rng.integers(n_params)] = True  # one active coordinate, value 0
    risk = risk_fn(outputs(theta))

    lam = cfg.temperature
    p_add, p_remove, _ = cfg.move_probs
    log_decay = math.log(cfg.support_decay)
    log_add_ratio = (
        math.log(p_remove / p_add) - log_decay if p_add > 0 and p_remove > 0 else None
    )
    log_remove_ratio = (
        math.log(p_add / p_remove) + log_decay if p_add > 0 and p_remove > 0 else None
    )

    n_keep = (cfg.iters - cfg.burn_in + cfg.thin - 1) // cfg.thin
    thetas = np.empty((n_keep, n_params))
    actives = np.empty((n_keep, n_params), dtype=bool)
    log_scores = np.empty(n_keep)
    kept = 0
    proposed = {"add": 0, "remove": 0, "perturb": 0}
    accepted = {"add": 0, "remove": 0, "perturb": 0}

    for it in range(cfg.iters):
        u = rng.random()
        if u < p_add:
            proposed["add"] += 1
            k = int(active.sum())
            if k < cap and log_add_ratio is not None:
                inactive_idx = np.flatnonzero(~active)
                j = int(inactive_idx[rng.integers(inactive_idx.size)])
                value = rng.uniform(-slab, slab)
                theta[j] = value
                new_risk = risk_fn(outputs(theta))
                log_alpha = -lam * (new_risk - risk) + log_add_ratio
                if math.log(rng.random()) < log_alpha:
                    active[j] = True
                    risk = new_risk
                    accepted["add"] += 1
                else:
                    theta[j] = 0.0
        elif u < p_add + p_remove:
            proposed["remove"] += 1
            k = int(active.sum())
            if k > 1 and log_remove_ratio is not None:
                active_idx = np.flatnonzero(active)
                j = int(active_idx[rng.integers(active_idx.size)])
                old = theta[j]
                theta[j] = 0.0
                new_risk = risk_fn(outputs(theta))
                log_alpha = -lam * (new_risk - risk) + log_remove_ratio
                if math.log(rng.random()) < log_alpha:
                    active[j] = False
                    risk = new_risk
                    accepted["remove"] += 1
                else:
                    theta[j] = old
        else:
            proposed["perturb"] += 1
            active_idx = np.flatnonzero(active)
            j = int(active_idx[rng.integers(active_idx.size)])
            old = theta[j]
            theta[j] = _reflect(old + rng.uniform(-cfg.step, cfg.step), slab)
            new_risk = risk_fn(outputs(theta))
            if math.log(rng.random()) < -lam * (new_risk - risk):
                risk = new_risk
                accepted["perturb"] += 1
            else:
                theta[j] = old

        if it >= cfg.burn_in and (it - cfg.burn_in) % cfg.thin == 0:
            thetas[kept] = theta
            actives[kept] = active
            log_scores[kept] = -lam * risk
            kept += 1

    rates = {
        move: (accepted[move] / proposed[move] if proposed[move] else 0.0)
        for move in proposed
    }
    return PosteriorDraws(
        arch=arch,
        weight_bound=slab,
        output_clip=clip,
        activation=classdef.activation,
        thetas=thetas[:kept],
        actives=actives[:kept],
        log_scores=log_scores[:kept],
        acceptance_rates=rates,
    )


def posterior_predictor(draws: PosteriorDraws, mode: str = "single_draw"):
    """Turn retained draws into a predictor.

    ``single_draw`` evaluates the final retained network (the estimator is
    one posterior draw); ``average`` evaluates the pointwise mean over all
    retained draws, a smoother diagnostic variant.
    """
    if len(draws) == 0:
        raise NoDraws("posterior sample is empty")
    scalar_out = draws.arch.output_dim == 1

    def flatten(values):
        arr = np.asarray(values)
        return arr[..., 0] if scalar_out and arr.ndim == 2 else arr

    if mode == "single_draw":
        net = draws.network(len(draws) - 1)
        return lambda x: flatten(forward(net, x, activation=draws.activation))
    if mode == "average":
        nets = draws.networks()

        def averaged(x):
            acc = forward(nets[0], x, activation=draws.activation)
            for net in nets[1:]:
                acc = acc + forward(net, x, activation=draws.activation)
            return flatten(acc / len(nets))

        return averaged
    raise ValueError(f"unknown predictor mode {mode!r}")
