"""Experiment runner: thinning-error decay curves and rate regression.

A plan names a target, a kernel (plus bandwidth rule), thinning variants,
input sizes, and a replicate count.  For each (size, replicate) cell the
runner draws one input sample shared by every variant, thins it, and
records MMD against the input, MMD against a fixed surrogate sample of the
target, and integration errors for the configured test functions.  Raw
values go to CSV; aggregated curves and log-log decay fits go to a JSON
report.

All per-cell seeds derive from the plan seed and the cell coordinates, so
cells can run in any order (or in parallel) with identical results, and a
rerun of the same plan is byte-identical.
"""

from __future__ import annotations

import io
import json
import math
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .discrepancy import _quadratic_form
from .kernels import (
    KernelSpec,
    NoClosedFormPowerError,
    from_json_dict as kernel_from_json_dict,
    gram,
)
from .targets import (
    ExternalTarget,
    TargetSpec,
    TestFunction,
    make_cif,
    make_rkhs_witness,
    median_heuristic_bandwidth,
    moment1,
    moment2,
    sqrt2d_bandwidth,
    target_from_json_dict,
    target_to_json_dict,
)
from .thinning import (
    Coreset,
    DeltaSchedule,
    ThinningConfig,
    baseline_thin,
    kt_plus,
    power_kt,
    target_kt,
)

DEFAULT_SIZES = (16, 64, 256, 1024, 4096)
SURROGATE_SIZE = 2 ** 15

_VARIANT_IDS = {"standard": 0, "targetkt": 1, "powerkt": 2, "ktplus": 3, "rootkt": 4}
_INPUT_SALT = 9001
_SURROGATE_SALT = 9002
_BANDWIDTH_SALT = 9003
_WITNESS_SALT = 9004
_CIF_SALT = 9005


@dataclass(frozen=True)
class Variant:
    """A thinning method under comparison; alpha applies to the power variants."""

    name: str
    alpha: float | None = None

    def __post_init__(self):
        if self.name not in _VARIANT_IDS:
            raise ValueError(f"unknown variant {self.name!r}")
        if self.name in ("powerkt", "ktplus") and self.alpha is None:
            raise ValueError(f"variant {self.name} needs an alpha")

    @property
    def tag(self) -> str:
        if self.alpha is not None and self.name in ("powerkt", "ktplus"):
            return f"{self.name}(a={self.alpha:g})"
        return self.name

    def _seed_parts(self) -> tuple[int, int]:
        alpha = self.alpha if self.alpha is not None else -1.0
        return _VARIANT_IDS[self.name], int(round(alpha * 1e6))


@dataclass(frozen=True)
class ExperimentPlan:
    """Everything needed to reproduce one decay-rate study."""

    target: TargetSpec
    kernel: KernelSpec
    variants: tuple[Variant, ...] = (Variant("standard"), Variant("targetkt"))
    sizes: tuple[int, ...] = DEFAULT_SIZES
    replicates: int = 10
    delta: float = 0.5  # delta_i = delta / n
    seed: int = 0
    bandwidth_rule: str = "fixed"  # fixed | sqrt2d | median
    aggregate: str = "mean"  # mean | median
    test_functions: tuple[str, ...] = ()
    metrics: tuple[str, ...] = ("mmd_input", "mmd_surrogate")
    surrogate_size: int = SURROGATE_SIZE

    def __post_init__(self):
        for n in self.sizes:
            m = _depth_for(n)
            if 2 ** (2 * m) != n:
                raise ValueError(f"size {n} is not a power of 4; output size sqrt(n) undefined")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.bandwidth_rule not in ("fixed", "sqrt2d", "median"):
            raise ValueError(f"unknown bandwidth rule {self.bandwidth_rule!r}")
        if self.aggregate not in ("mean", "median"):
            raise ValueError(f"unknown aggregate {self.aggregate!r}")
        for name in self.test_functions:
            if name not in ("rkhs_witness", "moment1", "moment2", "cif"):
                raise ValueError(f"unknown test function {name!r}")

    def to_json_dict(self) -> dict:
        return {
            "target": target_to_json_dict(self.target),
            "kernel": self.kernel.to_json_dict(),
            "variants": [
                {"name": v.name, **({"alpha": v.alpha} if v.alpha is not None else {})}
                for v in self.variants
            ],
            "sizes": list(self.sizes),
            "replicates": self.replicates,
            "delta": self.delta,
            "seed": self.seed,
            "bandwidth_rule": self.bandwidth_rule,
            "aggregate": self.aggregate,
            "test_functions": list(self.test_functions),
            "metrics": list(self.metrics),
            "surrogate_size": self.surrogate_size,
        }

    @staticmethod
    def from_json_dict(obj: dict) -> "ExperimentPlan":
        return ExperimentPlan(
            target=target_from_json_dict(obj["target"]),
            kernel=kernel_from_json_dict(obj["kernel"]),
            variants=tuple(
                Variant(v["name"], v.get("alpha")) for v in obj.get("variants", [])
            ) or (Variant("standard"), Variant("targetkt")),
            sizes=tuple(obj.get("sizes", DEFAULT_SIZES)),
            replicates=int(obj.get("replicates", 10)),
            delta=float(obj.get("delta", 0.5)),
            seed=int(obj.get("seed", 0)),
            bandwidth_rule=obj.get("bandwidth_rule", "fixed"),
            aggregate=obj.get("aggregate", "mean"),
            test_functions=tuple(obj.get("test_functions", ())),
            metrics=tuple(obj.get("metrics", ("mmd_input", "mmd_surrogate"))),
            surrogate_size=int(obj.get("surrogate_size", SURROGATE_SIZE)),
        )

    @staticmethod
    def from_json(text: str) -> "ExperimentPlan":
        return ExperimentPlan.from_json_dict(json.loads(text))


def _depth_for(n: int) -> int:
    """Thinning depth m = log2(n) / 2, so the output size is sqrt(n)."""
    return max(1, round(math.log2(n) / 2.0))


def resolve_bandwidth(plan: ExperimentPlan) -> KernelSpec:
    """Apply the plan's bandwidth rule to its kernel."""
    if plan.bandwidth_rule == "fixed":
        return plan.kernel
    if plan.bandwidth_rule == "sqrt2d":
        length = sqrt2d_bandwidth(plan.target.dim)
    else:
        pts = plan.target.sample(max(plan.sizes), rng.derive_seed(plan.seed, _BANDWIDTH_SALT))
        length = median_heuristic_bandwidth(pts)
    k = plan.kernel
    if k.family in ("gauss", "laplace"):
        return KernelSpec(k.family, (length,), k.scale)
    if k.family in ("matern", "imq"):
        return KernelSpec(k.family, (k.params[0], 1.0 / length), k.scale)
    if k.family == "sinc":
        return KernelSpec("sinc", (1.0 / length,), k.scale)
    if k.family == "bspline":
        return KernelSpec("bspline", (k.params[0], 1.0 / length), k.scale)
    raise ValueError(f"bandwidth rule cannot rescale family {k.family!r}")


# ---------------------------------------------------------------------------
# metric plumbing
# ---------------------------------------------------------------------------

class _ReferenceMMD:
    """MMD against one fixed reference sample, with its self-term cached."""

    def __init__(self, k: KernelSpec, ref: np.ndarray):
        self.kernel = k
        self.ref = ref
        w = np.full(len(ref), 1.0 / len(ref))
        self._w = w
        self.self_term = _quadratic_form(k, ref, w, ref, w)

    def mmd_to(self, out: np.ndarray) -> float:
        s = len(out)
        out_self = float(gram(self.kernel, out, out).sum()) / (s * s)
        wv = np.full(s, 1.0 / s)
        cross = _quadratic_form(self.kernel, self.ref, self._w, out, wv)
        return float(np.sqrt(max(0.0, self.self_term + out_self - 2.0 * cross)))


def _make_test_functions(plan: ExperimentPlan, k: KernelSpec) -> dict[str, TestFunction]:
    out = {}
    for name in plan.test_functions:
        if name == "rkhs_witness":
            out[name] = make_rkhs_witness(
                k, plan.target, rng.derive_seed(plan.seed, _WITNESS_SALT)
            )
        elif name == "cif":
            out[name] = make_cif(plan.target.dim, rng.derive_seed(plan.seed, _CIF_SALT))
        elif name == "moment1":
            out[name] = moment1()
        else:
            out[name] = moment2()
    return out


def _thin(variant: Variant, k: KernelSpec, points: np.ndarray, cfg: ThinningConfig) -> Coreset:
    if variant.name == "standard":
        return Coreset(baseline_thin(len(points), cfg.m), {"variant": "standard"})
    if variant.name == "targetkt":
        return target_kt(k, points, cfg)
    if variant.name == "rootkt":
        out = power_kt(k, points, cfg, alpha=0.5)
        out.provenance["variant"] = "rootkt"
        return out
    if variant.name == "powerkt":
        return power_kt(k, points, cfg, alpha=variant.alpha)
    return kt_plus(k, points, cfg, alpha=variant.alpha)


def _resolvable(variant: Variant, k: KernelSpec, dim: int) -> str | None:
    """None if the variant can run, else the reason it cannot."""
    if variant.name in ("rootkt", "powerkt", "ktplus"):
        from .kernels import power_kernel

        alpha = 0.5 if variant.name == "rootkt" else variant.alpha
        try:
            power_kernel(k, alpha, dim=dim)
        except NoClosedFormPowerError as exc:
            return str(exc)
    return None


# ---------------------------------------------------------------------------
# rate fitting and reports
# ---------------------------------------------------------------------------

def fit_loglog(x_values, y_values) -> dict:
    """Ordinary least squares of log(y) on log(x).

    Returns {"slope", "intercept", "residual_rms"}; requires positive data.
    """
    x = np.log(np.asarray(x_values, dtype=float))
    y = np.log(np.asarray(y_values, dtype=float))
    if len(x) < 2:
        raise ValueError("need at least two points to fit a rate")
    xc = x - x.mean()
    slope = float((xc @ (y - y.mean())) / (xc @ xc))
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (slope * x + intercept)
    return {
        "slope": slope,
        "intercept": intercept,
        "residual_rms": float(np.sqrt(np.mean(resid ** 2))),
    }


@dataclass
class RateReport:
    """Aggregated error curves and their fitted decay rates.

    rows: per (variant, metric, n): aggregated error and standard error of
      the mean across replicates.
    fits: per (variant, metric): OLS of log error on log n_out, plus the
      same fit against log n (input size); on the default grid n_out =
      sqrt(n), so the input-size slope is exactly half the output-size one.
    """

    plan: ExperimentPlan
    rows: list = field(default_factory=list)
    fits: dict = field(default_factory=dict)
    skipped: list = field(default_factory=list)

    def fit_for(self, variant_tag: str, metric: str) -> dict:
        return self.fits[f"{variant_tag}|{metric}"]

    def curve(self, variant_tag: str, metric: str) -> list:
        return [
            r for r in self.rows if r["variant"] == variant_tag and r["metric"] == metric
        ]

    def to_json_dict(self) -> dict:
        return {
            "plan": self.plan.to_json_dict(),
            "rows": self.rows,
            "fits": self.fits,
            "skipped": self.skipped,
        }


def run_experiment(
    plan: ExperimentPlan,
    out_dir: str | None = None,
    _error_injector=None,
) -> RateReport:
    """Execute a plan; optionally write raw.csv and report.json to out_dir.

    The injector hook replaces the sampled/thinned error values with
    synthetic ones (signature: injector(variant_tag, n, replicate) ->
    {metric: value}); it exercises the aggregation and fitting pipeline on
    known curves and is used by the tests.
    """
    kernel = resolve_bandwidth(plan)
    dim = plan.target.dim

    runnable: list[Variant] = []
    skipped: list[dict] = []
    for variant in plan.variants:
        reason = _resolvable(variant, kernel, dim)
        if reason is None:
            runnable.append(variant)
        else:
            warnings.warn(f"skipping variant {variant.tag}: {reason}")
            skipped.append({"variant": variant.tag, "reason": reason})

    metrics = list(plan.metrics) + [f"ierr_{n}" for n in plan.test_functions]
    test_fns = _make_test_functions(plan, kernel) if _error_injector is None else {}

    surrogate_ref: _ReferenceMMD | None = None
    if "mmd_surrogate" in plan.metrics and _error_injector is None:
        if isinstance(plan.target, ExternalTarget):
            surr = plan.target.holdout(plan.surrogate_size)
        else:
            surr = plan.target.sample(
                plan.surrogate_size, rng.derive_seed(plan.seed, _SURROGATE_SALT)
            )
        surrogate_ref = _ReferenceMMD(kernel, surr)

    records: list[dict] = []
    for n in plan.sizes:
        m = _depth_for(n)
        for rep in range(plan.replicates):
            cell_values: dict[str, dict[str, float]] = {}
            if _error_injector is None:
                points = plan.target.sample(
                    n, rng.derive_seed(plan.seed, n, rep, _INPUT_SALT)
                )
                input_ref = (
                    _ReferenceMMD(kernel, points)
                    if "mmd_input" in plan.metrics
                    else None
                )
                input_means = {
                    name: float(np.mean(fn(points))) for name, fn in test_fns.items()
                }
                for variant in runnable:
                    cfg = ThinningConfig(
                        m=m,
                        delta_schedule=DeltaSchedule("known_n", plan.delta),
                        seed=rng.derive_seed(plan.seed, n, rep, *variant._seed_parts()),
                    )
                    coreset = _thin(variant, kernel, points, cfg)
                    out_points = points[coreset.indices]
                    values = {}
                    if input_ref is not None:
                        values["mmd_input"] = input_ref.mmd_to(out_points)
                    if surrogate_ref is not None:
                        values["mmd_surrogate"] = surrogate_ref.mmd_to(out_points)
                    for name, fn in test_fns.items():
                        values[f"ierr_{name}"] = abs(
                            input_means[name] - float(np.mean(fn(out_points)))
                        )
                    cell_values[variant.tag] = values
            else:
                for variant in runnable:
                    cell_values[variant.tag] = _error_injector(variant.tag, n, rep)

            for variant in runnable:
                for metric in metrics:
                    if metric in cell_values[variant.tag]:
                        records.append(
                            {
                                "variant": variant.tag,
                                "n": n,
                                "n_out": n // 2 ** m,
                                "replicate": rep,
                                "metric": metric,
                                "value": cell_values[variant.tag][metric],
                            }
                        )

    report = RateReport(plan=plan, skipped=skipped)
    _aggregate(plan, runnable, metrics, records, report)

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "raw.csv"), "w", encoding="utf-8", newline="") as fh:
            fh.write(records_to_csv(records))
        with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
            json.dump(report.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    return report


def _aggregate(plan, variants, metrics, records, report: RateReport) -> None:
    for variant in variants:
        for metric in metrics:
            curve_ns, curve_outs, curve_means = [], [], []
            for n in plan.sizes:
                vals = np.array(
                    [
                        r["value"]
                        for r in records
                        if r["variant"] == variant.tag
                        and r["metric"] == metric
                        and r["n"] == n
                    ]
                )
                if len(vals) == 0:
                    continue
                center = float(np.mean(vals)) if plan.aggregate == "mean" else float(
                    np.median(vals)
                )
                stderr = (
                    float(np.std(vals, ddof=1) / np.sqrt(len(vals)))
                    if len(vals) > 1
                    else 0.0
                )
                n_out = n // 2 ** _depth_for(n)
                report.rows.append(
                    {
                        "variant": variant.tag,
                        "metric": metric,
                        "n": n,
                        "n_out": n_out,
                        plan.aggregate: center,
                        "stderr": stderr,
                    }
                )
                curve_ns.append(n)
                curve_outs.append(n_out)
                curve_means.append(center)
            if len(curve_means) >= 2 and all(v > 0 for v in curve_means):
                fit_out = fit_loglog(curve_outs, curve_means)
                fit_in = fit_loglog(curve_ns, curve_means)
                report.fits[f"{variant.tag}|{metric}"] = {
                    "slope": fit_out["slope"],
                    "intercept": fit_out["intercept"],
                    "residual_rms": fit_out["residual_rms"],
                    "slope_vs_input_n": fit_in["slope"],
                }


def records_to_csv(records: list[dict]) -> str:
    """Render raw records as CSV; floats carry 17 significant digits."""
    buf = io.StringIO()
    buf.write("variant,n,n_out,replicate,metric,value\n")
    for r in records:
        buf.write(
            f"{r['variant']},{r['n']},{r['n_out']},{r['replicate']},"
            f"{r['metric']},{format(r['value'], '.17g')}\n"
        )
    return buf.getvalue()
