"""Kernel thinning: randomized halving into candidate coresets, then
selection and greedy refinement against a baseline.

The pipeline has two stages.  The split stage consumes the input two points
at a time and recursively halves it m times, keeping the within-pair
assignment balanced through a probabilistic swap rule driven by running
sub-Gaussian scale parameters; it emits 2^m candidate coresets of size
floor(n / 2^m).  The swap stage picks the candidate (or a standard-thinning
baseline) with the smallest MMD to the input and then sweeps the coreset
once, replacing each element by whichever input point most reduces MMD.
The returned coreset therefore never has larger MMD to the input than the
baseline does.

Randomness is confined to the split stage and drawn from counter-based
streams keyed by (round, level, slot), so results are reproducible across
platforms and independent of evaluation order.  Swap decisions depend on
the split kernel only through scale-free ratios, so the kernel's scale
factor is divided out up front; c * k yields the same candidates as k under
the same seed, bitwise.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import rng
from .discrepancy import SwapCache, kernel_row_means
from .kernels import (
    IdentityPerturbedKernel,
    KernelSpec,
    KernelError,
    gram,
    gram_rows,
    ktplus_kernel,
    power_kernel,
)


@dataclass(frozen=True)
class DeltaSchedule:
    """Per-round failure probabilities delta_i for i = 1..floor(n/2).

    rule "known_n" gives delta_i = delta / n (requires the input length up
    front); rule "oblivious" gives
    delta_i = m * delta / (2^(m+2) * (i+1) * log^2(i+1)) and is valid for
    any stopping time.
    """

    rule: str = "known_n"
    delta: float = 0.5

    def __post_init__(self):
        if self.rule not in ("known_n", "oblivious"):
            raise ValueError(f"unknown delta schedule rule {self.rule!r}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")

    def value(self, i: int, n: int, m: int) -> float:
        if self.rule == "known_n":
            return self.delta / n
        return m * self.delta / (2 ** (m + 2) * (i + 1) * math.log(i + 1) ** 2)


@dataclass(frozen=True)
class ThinningConfig:
    """Thinning depth, failure-probability schedule, seed, and baseline rule.

    The output size is floor(n / 2^m).  Kernels are passed to the thinning
    operations directly rather than stored here.
    """

    m: int = 1
    delta_schedule: DeltaSchedule = field(default_factory=DeltaSchedule)
    seed: int = 0
    baseline: str = "standard"
    refine_sweeps: int = 1

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"thinning depth m must be >= 1, got {self.m}")
        if self.baseline not in ("standard",):
            raise ValueError(f"unknown baseline rule {self.baseline!r}")
        if self.refine_sweeps < 1:
            raise ValueError("refine_sweeps must be >= 1")

    def to_json_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_json_dict(obj: dict) -> "ThinningConfig":
        sched = obj.get("delta_schedule", {})
        return ThinningConfig(
            m=obj.get("m", 1),
            delta_schedule=DeltaSchedule(**sched),
            seed=obj.get("seed", 0),
            baseline=obj.get("baseline", "standard"),
            refine_sweeps=obj.get("refine_sweeps", 1),
        )


@dataclass
class Coreset:
    """Indices into the input point set plus provenance of how they were chosen."""

    indices: np.ndarray
    provenance: dict

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=int)

    def __len__(self) -> int:
        return len(self.indices)

    def points(self, input_points: np.ndarray) -> np.ndarray:
        return np.asarray(input_points)[self.indices]

    def to_json(self) -> str:
        return json.dumps(
            {"indices": self.indices.tolist(), "provenance": self.provenance}
        )

    def to_csv(self) -> str:
        return "\n".join(["index"] + [str(i) for i in self.indices]) + "\n"


# ---------------------------------------------------------------------------
# split-kernel evaluation helpers
# ---------------------------------------------------------------------------

class _SplitEvaluator:
    """Index-based kernel evaluation for the split stage.

    The kernel's scale factor is divided out: the swap statistic ratio and
    the scale-parameter recursion are invariant to positive rescaling, so
    normalizing makes that invariance exact in floating point.
    """

    def __init__(self, kernel: KernelSpec, points: np.ndarray):
        kernel.validate_dim(points.shape[1])
        self.kernel = kernel.normalized()
        self.points = points
        self.diag_value = self.kernel.sup_norm()

    def pair(self, i: int, j: int) -> float:
        return float(gram_rows(self.kernel, self.points, [i], [j])[0, 0])

    def rows_pair(self, idxs: list, j1: int, j2: int) -> tuple[np.ndarray, np.ndarray]:
        """k(points[idxs], points[j1]) and k(points[idxs], points[j2])."""
        if not idxs:
            return np.zeros(0), np.zeros(0)
        block = gram_rows(self.kernel, self.points, idxs, [j1, j2])
        return block[:, 0], block[:, 1]

    def diag(self, i: int) -> float:
        return self.diag_value


class _PerturbedSplitEvaluator(_SplitEvaluator):
    """Split evaluation under the identity-perturbed kernel on indexed inputs."""

    def __init__(self, kernel: IdentityPerturbedKernel, points: np.ndarray):
        super().__init__(kernel.base, points)
        self.weight = kernel.weight

    def pair(self, i: int, j: int) -> float:
        val = super().pair(i, j)
        return val + self.weight if i == j else val

    def rows_pair(self, idxs: list, j1: int, j2: int) -> tuple[np.ndarray, np.ndarray]:
        v1, v2 = super().rows_pair(idxs, j1, j2)
        for pos, idx in enumerate(idxs):
            if idx == j1:
                v1[pos] += self.weight
            if idx == j2:
                v2[pos] += self.weight
        return v1, v2

    def diag(self, i: int) -> float:
        return self.diag_value + self.weight


def _make_split_evaluator(kernel, points: np.ndarray) -> _SplitEvaluator:
    if isinstance(kernel, IdentityPerturbedKernel):
        return _PerturbedSplitEvaluator(kernel, points)
    if isinstance(kernel, KernelSpec):
        return _SplitEvaluator(kernel, points)
    raise KernelError(f"unsupported split kernel type {type(kernel).__name__}")


# ---------------------------------------------------------------------------
# the split stage
# ---------------------------------------------------------------------------

def get_swap_params(sigma_sq: float, b_sq: float, delta_hat: float) -> tuple[float, float]:
    """One step of the swap-threshold recursion.

    Args:
      sigma_sq: current squared sub-Gaussian scale for this (level, slot).
      b_sq: squared within-pair kernel distance k(x,x) + k(y,y) - 2k(x,y).
      delta_hat: failure-probability budget for this step.

    Returns:
      (threshold a, updated sigma_sq).  With sigma = 0 the update reduces to
      sigma_sq = b_sq.
    """
    # log term clamped at 0: extreme schedules can push delta_hat above 2
    log_term = max(0.0, 2.0 * math.log(2.0 / delta_hat))
    a = max(math.sqrt(b_sq * sigma_sq * log_term), b_sq)
    growth = max(0.0, 1.0 + (b_sq - 2.0 * a) * sigma_sq / (a * a))
    return a, sigma_sq + b_sq * growth


def swap_probability(alpha: float, a: float) -> float:
    """min(1, (1 - alpha/a)_+ / 2): always in [0, 1], and 1/2 when alpha = 0."""
    return min(1.0, max(0.0, 0.5 * (1.0 - alpha / a)))


def kt_split(k_split, points, cfg: ThinningConfig, _check_invariants: bool = False) -> list[np.ndarray]:
    """Divide the input into 2^m candidate coresets of size floor(n / 2^m).

    Consumes the input in consecutive pairs (x_{2i-1}, x_{2i}); with odd n
    the final point is skipped here (it stays eligible for the refinement
    stage).  Returns index arrays into `points`.

    Args:
      k_split: KernelSpec or IdentityPerturbedKernel used for swap decisions.
      points: (n, d) input array.
      cfg: thinning configuration; cfg.m halvings, counter-based randomness
        from cfg.seed.
      _check_invariants: assert size and partition invariants of the
        internal state after every round (debug builds / tests only).
    """
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    n = len(points)
    if n < 2:
        raise ValueError(f"kt_split needs at least 2 points, got {n}")
    m = cfg.m
    if n // 2 ** m < 1:
        raise ValueError(f"m={m} too large for n={n}: output would be empty")
    ev = _make_split_evaluator(k_split, points)
    sched = cfg.delta_schedule

    # coresets[j][l] for level j in 0..m, slot l in 0..2^j - 1 (0-based slots)
    coresets: list[list[list[int]]] = [
        [[] for _ in range(2 ** j)] for j in range(m + 1)
    ]
    sigma_sq = [np.zeros(2 ** max(j - 1, 0)) for j in range(m + 1)]

    for i in range(1, n // 2 + 1):
        coresets[0][0].append(2 * i - 2)
        coresets[0][0].append(2 * i - 1)
        j = 1
        while j <= m and i % 2 ** (j - 1) == 0:
            for l in range(2 ** (j - 1)):
                parent = coresets[j - 1][l]
                left_child = coresets[j][2 * l]
                x, xt = parent[-2], parent[-1]

                k_xx = ev.diag(x)
                k_tt = ev.diag(xt)
                k_xt = ev.pair(x, xt)
                b_sq = max(0.0, k_xx + k_tt - 2.0 * k_xt)

                if b_sq == 0.0:
                    # identical pair: either assignment is equivalent, and the
                    # threshold/scale update would be 0/0
                    left_child.append(x)
                    coresets[j][2 * l + 1].append(xt)
                    continue

                delta_i = sched.value(len(parent) // 2, n, m)
                a, sigma_sq[j][l] = get_swap_params(
                    float(sigma_sq[j][l]), b_sq, delta_i * 2 ** (j - 1) / m
                )

                # alignment of the pair difference with the running signed sum:
                # alpha = k(xt,xt) - k(x,x) + sum_{y in parent} (k(y,x) - k(y,xt))
                #         - 2 sum_{z in left child} (k(z,x) - k(z,xt))
                par_x, par_t = ev.rows_pair(parent, x, xt)
                alpha = k_tt - k_xx + float(np.sum(par_x) - np.sum(par_t))
                if left_child:
                    ch_x, ch_t = ev.rows_pair(left_child, x, xt)
                    alpha -= 2.0 * float(np.sum(ch_x) - np.sum(ch_t))

                prob = swap_probability(alpha, a)
                if rng.swap_uniform(cfg.seed, i, j, l + 1) < prob:
                    x, xt = xt, x
                left_child.append(x)
                coresets[j][2 * l + 1].append(xt)
            j += 1
        if _check_invariants:
            _assert_split_invariants(coresets, m, consumed=2 * i)

    return [np.asarray(c, dtype=int) for c in coresets[m]]


def _assert_split_invariants(coresets, m: int, consumed: int) -> None:
    """After consuming `consumed` input points, each level-j coreset holds
    floor(consumed / 2^j) of them, and sibling pairs partition the prefix of
    their parent that has been passed down."""
    for j in range(m + 1):
        for l, c in enumerate(coresets[j]):
            assert len(c) == consumed // 2 ** j, (j, l, len(c), consumed)
    for j in range(1, m + 1):
        for l in range(2 ** (j - 1)):
            left, right = coresets[j][2 * l], coresets[j][2 * l + 1]
            parent = coresets[j - 1][l]
            merged = sorted(left + right)
            assert merged == sorted(parent[: len(merged)]), (j, l)


# ---------------------------------------------------------------------------
# baseline and the swap stage
# ---------------------------------------------------------------------------

def baseline_thin(n: int, m: int) -> np.ndarray:
    """Standard thinning: every 2^m-th index, anchored to include the last.

    m = 0 returns the identity selection.
    """
    if m < 0:
        raise ValueError(f"m must be >= 0, got {m}")
    size = n // 2 ** m
    if size < 1:
        raise ValueError(f"m={m} too large for n={n}")
    step = 2 ** m
    return np.array([n - 1 - step * (size - 1 - j) for j in range(size)], dtype=int)


def kt_swap(
    k: KernelSpec,
    points,
    candidates: list[np.ndarray],
    cfg: ThinningConfig,
) -> Coreset:
    """Select the best of {baseline, candidates} by MMD, then refine it.

    One greedy sweep over coreset positions replaces each element by the
    input point minimizing the resulting MMD (ties to the lowest index).
    The incumbent is always a valid replacement, so MMD never increases and
    the result never exceeds the baseline's MMD to the input.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    n = len(points)
    if not candidates:
        raise ValueError("kt_swap needs at least one candidate coreset")
    sizes = {len(c) for c in candidates}
    if len(sizes) != 1:
        raise ValueError(f"candidate coresets differ in size: {sorted(sizes)}")

    base = baseline_thin(n, cfg.m)
    if len(base) != len(candidates[0]):
        raise ValueError(
            f"baseline size {len(base)} does not match candidate size {len(candidates[0])}"
        )

    # one O(n^2) pass serves candidate ranking and the refinement cache
    row_mean = kernel_row_means(k, points)
    input_self = float(row_mean.mean())

    pool = [base] + list(candidates)
    mmd_sqs = []
    for c in pool:
        s = float(len(c))
        coreset_self = float(gram(k, points[c], points[c]).sum()) / (s * s)
        cross = 2.0 * float(row_mean[c].mean())
        mmd_sqs.append(max(0.0, input_self + coreset_self - cross))
    chosen = int(np.argmin(mmd_sqs))

    cache = SwapCache(k, points, pool[chosen], row_mean=row_mean)
    accepted = 0
    for _ in range(cfg.refine_sweeps):
        for pos in range(cache.out_size):
            best, _ = cache.best_swap(pos)
            if best != cache.coreset[pos]:
                accepted += 1
            cache.apply_swap(pos, best)

    return Coreset(
        indices=cache.coreset.copy(),
        provenance={
            "algorithm": "kt",
            "candidate": chosen,  # 0 = baseline, 1..2^m = split candidates
            "accepted_swaps": accepted,
            "selection_mmds": [float(np.sqrt(v)) for v in mmd_sqs],
        },
    )


# ---------------------------------------------------------------------------
# the full pipeline and its front-ends
# ---------------------------------------------------------------------------

def _sigma_diagnostics(n: int, m: int, sched: DeltaSchedule, k_sup: float) -> dict:
    """High-probability bound parameters of the split stage, for reporting only.

    p_sg is reported with the conventional choice delta' = delta / 2.
    """
    delta_star = min(sched.value(i, n, m) for i in range(1, n // 2 + 1))
    sigma_m = (
        2.0 / math.sqrt(3.0) * 2 ** m / n
        * math.sqrt(k_sup * max(0.0, math.log(6 * m / (2 ** m * delta_star))))
    )
    level_sum = sum(
        2 ** (j - 1) / m * sum(sched.value(i, n, m) for i in range(1, n // 2 ** j + 1))
        for j in range(1, m + 1)
    )
    p_sg = 1.0 - sched.delta / 2.0 - level_sum
    return {"sigma_m": sigma_m, "p_sg": p_sg}


def generalized_kt(k_split, k_target: KernelSpec, points, cfg: ThinningConfig) -> Coreset:
    """Split with k_split, then select and refine with k_target."""
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    candidates = kt_split(k_split, points, cfg)
    out = kt_swap(k_target, points, candidates, cfg)
    sup = (
        k_split.sup_norm() if isinstance(k_split, KernelSpec)
        else 1.0 + k_split.weight
    )
    out.provenance.update(_sigma_diagnostics(len(points), cfg.m, cfg.delta_schedule, sup))
    return out


def target_kt(k: KernelSpec, points, cfg: ThinningConfig) -> Coreset:
    """Generalized thinning with the target kernel doing both stages."""
    out = generalized_kt(k, k, points, cfg)
    out.provenance["variant"] = "targetkt"
    return out


def power_kt(
    k: KernelSpec,
    points,
    cfg: ThinningConfig,
    alpha: float,
    split_kernel: KernelSpec | None = None,
) -> Coreset:
    """Split with the alpha-power kernel of k, refine with k.

    If the family has no closed-form power kernel, pass `split_kernel`
    explicitly.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    if split_kernel is None:
        split_kernel = power_kernel(k, alpha, dim=points.shape[1]).power
    out = generalized_kt(split_kernel, k, points, cfg)
    out.provenance["variant"] = "powerkt"
    out.provenance["alpha"] = alpha
    return out


def kt_plus(
    k: KernelSpec,
    points,
    cfg: ThinningConfig,
    alpha: float,
    split_kernel: KernelSpec | None = None,
) -> Coreset:
    """Split with the normalized sum of k and its alpha-power, refine with k.

    `split_kernel`, when given, replaces the closed-form power kernel as the
    second summand.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    if split_kernel is None:
        split_kernel = power_kernel(k, alpha, dim=points.shape[1]).power
    out = generalized_kt(ktplus_kernel(k, split_kernel), k, points, cfg)
    out.provenance["variant"] = "ktplus"
    out.provenance["alpha"] = alpha
    return out
