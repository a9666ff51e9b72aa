"""Loss families and tuning-constant policies for robust fitting.

The bisquare family caps the influence of a case once its residual norm
passes the tuning constant c:

    rho_c(x) = c^2/6 * (1 - (1 - x^2/c^2)^3)   for 0 <= x <= c
    rho_c(x) = c^2/6                           for x > c

and the reweighting function is phi(x) = rho'(x)/x = (1 - x^2/c^2)^2 on
[0, c], zero beyond, with phi(0) = 1.

c is either fixed or resolved from the distribution of the current
residual norms: six times their median, a percentile, or six times a
percentile, always over the norms that are not (numerically) zero, since
exact-fit cases carry no scale information.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError

_PERCENTILE_CHOICES = (25.0, 50.0, 75.0)

# Norms at or below this fraction of the largest norm count as exact fits.
_ZERO_NORM_REL_FLOOR = 1e-12


@dataclass(frozen=True)
class TuningPolicy:
    """How the bisquare tuning constant is chosen.

    kind is one of ``fixed`` (value = c), ``median6`` (c = 6 * median of
    nonzero norms), ``percentile`` (c = P_j of nonzero norms) or
    ``percentile6`` (c = 6 * P_j), with j restricted to 25, 50 or 75.
    """

    kind: str
    value: float | None = None

    def __post_init__(self):
        if self.kind == "fixed":
            if self.value is None or not self.value > 0:
                raise InputError("fixed policy needs a positive c")
        elif self.kind == "median6":
            if self.value is not None:
                raise InputError("median6 takes no value")
        elif self.kind in ("percentile", "percentile6"):
            if self.value not in _PERCENTILE_CHOICES:
                raise InputError("percentile policies need j in {25, 50, 75}")
        else:
            raise InputError(f"unknown tuning policy kind {self.kind!r}")

    def label(self) -> str:
        if self.kind == "fixed":
            return f"fixed({self.value:g})"
        if self.kind == "median6":
            return "median6"
        return f"{self.kind}({self.value:g})"

    @classmethod
    def parse(cls, text: str) -> "TuningPolicy":
        """Parse labels like ``median6``, ``percentile(50)``, ``fixed(2.5)``.

        A colon separator (``percentile:50``) is accepted as well so the
        policy can be passed on a command line without quoting.
        """
        text = text.strip()
        if text == "median6":
            return cls("median6")
        for sep_open, sep_close in (("(", ")"), (":", "")):
            for kind in ("percentile6", "percentile", "fixed"):
                prefix = kind + sep_open
                if text.startswith(prefix) and text.endswith(sep_close):
                    inner = text[len(prefix): len(text) - len(sep_close)]
                    try:
                        value = float(inner)
                    except ValueError as exc:
                        raise InputError(f"bad policy value in {text!r}") from exc
                    return cls(kind, value)
        raise InputError(f"cannot parse tuning policy {text!r}")


@dataclass(frozen=True)
class LossSpec:
    """Loss family plus, for bisquare, its tuning policy and resolved c."""

    family: str
    policy: TuningPolicy | None = None
    resolved_c: float | None = None

    def __post_init__(self):
        if self.family == "squared":
            if self.policy is not None or self.resolved_c is not None:
                raise InputError("squared loss takes no tuning policy")
        elif self.family == "bisquare":
            if self.policy is None:
                raise InputError("bisquare loss needs a tuning policy")
            if self.resolved_c is not None and not self.resolved_c > 0:
                raise InputError("resolved_c must be positive")
        else:
            raise InputError(f"unknown loss family {self.family!r}")

    @classmethod
    def squared(cls) -> "LossSpec":
        return cls("squared")

    @classmethod
    def bisquare(cls, policy) -> "LossSpec":
        if isinstance(policy, str):
            policy = TuningPolicy.parse(policy)
        return cls("bisquare", policy)

    def with_resolved_c(self, c: float) -> "LossSpec":
        return LossSpec(self.family, self.policy, float(c))

    def describe(self) -> dict:
        out = {"family": self.family}
        if self.policy is not None:
            out["policy"] = self.policy.label()
        if self.resolved_c is not None:
            out["resolved_c"] = self.resolved_c
        return out

    @classmethod
    def from_dict(cls, payload: dict) -> "LossSpec":
        family = payload.get("family", "squared")
        if family == "squared":
            return cls.squared()
        policy = TuningPolicy.parse(payload["policy"])
        spec = cls("bisquare", policy)
        if payload.get("resolved_c") is not None:
            spec = spec.with_resolved_c(payload["resolved_c"])
        return spec


def bisquare_loss(x, c: float):
    """Bisquare rho at residual norm(s) x with tuning constant c."""
    if not c > 0:
        raise InputError("c must be positive")
    x = np.abs(np.asarray(x, dtype=float))
    scaled = np.minimum(x / c, 1.0)
    out = (c * c / 6.0) * (1.0 - (1.0 - scaled * scaled) ** 3)
    return out if out.ndim else float(out)


def bisquare_weight(x, c: float):
    """Reweighting function phi(x) = rho'(x)/x, with phi(0) = 1."""
    if not c > 0:
        raise InputError("c must be positive")
    x = np.abs(np.asarray(x, dtype=float))
    scaled = np.minimum(x / c, 1.0)
    out = (1.0 - scaled * scaled) ** 2
    return out if out.ndim else float(out)


def resolve_tuning(norms, policy: TuningPolicy) -> float:
    """Resolve the tuning constant from residual norms under a policy.

    Exact-fit norms (zero up to a relative floor) are screened out first;
    with nothing left the scale is undefined and an error is raised.
    Percentiles interpolate linearly between order statistics.
    """
    if policy.kind == "fixed":
        return float(policy.value)
    norms = np.asarray(norms, dtype=float)
    if norms.ndim != 1 or norms.size == 0:
        raise InputError("norms must be a nonempty 1-d array")
    if not np.all(np.isfinite(norms)) or np.any(norms < 0):
        raise InputError("norms must be finite and nonnegative")
    top = norms.max()
    if top <= 0.0:
        raise InputError("all residual norms are zero; tuning constant undefined")
    nonzero = norms[norms > _ZERO_NORM_REL_FLOOR * top]
    if policy.kind == "median6":
        return 6.0 * float(np.median(nonzero))
    q = float(np.percentile(nonzero, policy.value, method="linear"))
    if policy.kind == "percentile":
        return q
    return 6.0 * q


def loss_values(norms, spec: LossSpec):
    """Per-case loss contributions for residual norms under a LossSpec."""
    norms = np.asarray(norms, dtype=float)
    if spec.family == "squared":
        return norms * norms
    if spec.resolved_c is None:
        raise InputError("bisquare loss evaluated before c was resolved")
    return bisquare_loss(norms, spec.resolved_c)
