"""Learning-curve fits and ensemble statistics.

A trajectory ``T(g)`` is fitted with a logistic step on a flat pedestal::

    f(g) = L / (1 + exp(k (g - g0))) + c

``L + c`` is the initial plateau, ``c`` the convergence point and ``g0`` the
inflection point.  Across an ensemble, the fitted ``g0`` and ``c`` values are
histogrammed and fitted with one or two Gaussians.
"""
from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize, special

from .config import AnalysisConfig

PARAMS = ("L", "k", "g0", "c")


def eval_logistic(g, L, k, g0, c):
    """Logistic-on-pedestal value; saturates cleanly to ``c`` or ``L + c`` for large ``|k (g - g0)|``."""
    g = np.asarray(g, dtype=np.float64)
    with np.errstate(over="ignore"):
        out = L * special.expit(-k * (g - g0)) + c
    return out if out.ndim else float(out)


def logistic_jacobian(g, L, k, g0, c) -> np.ndarray:
    g = np.asarray(g, dtype=np.float64)
    s = special.expit(-k * (g - g0))
    ds = s * (1.0 - s)
    return np.column_stack([s, -L * ds * (g - g0), L * ds * k, np.ones_like(g)])


@dataclass
class LogisticFit:
    L: float
    k: float
    g0: float
    c: float
    L_err: float = math.nan
    k_err: float = math.nan
    g0_err: float = math.nan
    c_err: float = math.nan
    chi2: float = math.nan
    n_points: int = 0
    converged: bool = False
    message: str = ""

    @property
    def params(self) -> np.ndarray:
        return np.array([self.L, self.k, self.g0, self.c])

    @property
    def errors(self) -> np.ndarray:
        return np.array([self.L_err, self.k_err, self.g0_err, self.c_err])

    @property
    def initial_plateau(self) -> float:
        return self.L + self.c

    def __call__(self, g):
        return eval_logistic(g, self.L, self.k, self.g0, self.c)

    def to_dict(self) -> dict:
        return asdict(self)


def initial_guess(g: np.ndarray, T: np.ndarray, k_guess: float = 0.02) -> np.ndarray:
    """Data-driven starting point: plateaus from the first and last 10 %, g0 at the half-way crossing."""
    n = len(T)
    m = max(1, n // 10)
    c = float(np.mean(T[-m:]))
    L = float(np.mean(T[:m])) - c
    mid = c + L / 2
    below = np.flatnonzero(T <= mid) if L >= 0 else np.flatnonzero(T >= mid)
    g0 = float(g[below[0]]) if len(below) else float(g[n // 2])
    return np.array([L, k_guess, g0, c])


def _canonical(p: np.ndarray) -> np.ndarray:
    # (L, k, g0, c) and (-L, -k, g0, c + L) describe the same curve; keep k >= 0
    L, k, g0, c = p
    if k < 0:
        return np.array([-L, -k, g0, c + L])
    return p


def fit_logistic(g: Sequence[float], T: Sequence[float], p0: Sequence[float] | None = None,
                 k_guess: float = 0.02, max_nfev: int = 5000) -> LogisticFit:
    """Unweighted least-squares fit of the logistic-on-pedestal model.

    Parameter uncertainties are ``sqrt(diag(s^2 (J^T J)^-1))`` with
    ``s^2 = chi2 / (n - 4)``.  ``converged`` is False when the optimizer
    stops without convergence, the normal matrix is singular, or the fitted
    amplitude or convergence point is not positive.
    """
    g = np.asarray(g, dtype=np.float64)
    T = np.asarray(T, dtype=np.float64)
    n = len(g)
    if n < 5:
        p = np.full(4, math.nan) if p0 is None else np.asarray(p0, float)
        return LogisticFit(*p, n_points=n, message=f"too few points ({n})")
    p0 = initial_guess(g, T, k_guess) if p0 is None else np.asarray(p0, dtype=np.float64)

    def resid(p):
        return eval_logistic(g, *p) - T

    def jac(p):
        return logistic_jacobian(g, *p)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = optimize.least_squares(resid, p0, jac=jac, method="lm", x_scale="jac",
                                     max_nfev=max_nfev, xtol=1e-12, ftol=1e-12, gtol=1e-12)
    p = _polish(resid, jac, res.x) if np.all(np.isfinite(res.x)) else res.x
    p = _canonical(p)
    r = resid(p)
    chi2 = float(r @ r)
    fit = LogisticFit(*map(float, p), chi2=chi2, n_points=n)
    msgs = []
    if not res.success:
        msgs.append(f"optimizer: {res.message}")
    J = jac(p)
    cov = _covariance(J, chi2, n)
    if cov is None:
        msgs.append("singular normal matrix")
    else:
        fit.L_err, fit.k_err, fit.g0_err, fit.c_err = map(float, np.sqrt(np.diag(cov)))
    if not fit.L > 0:
        msgs.append("non-positive amplitude L")
    if not fit.c > 0:
        msgs.append("non-positive convergence point c")
    fit.converged = not msgs
    fit.message = "; ".join(msgs) or "ok"
    return fit


def _polish(resid, jac, p: np.ndarray, iters: int = 20) -> np.ndarray:
    """Gauss-Newton steps from the optimizer's endpoint, kept only while chi2 drops.

    Levenberg-Marquardt stops on relative tolerances; along a stiff
    parameter such as ``k`` that can leave a visible residual gradient.
    """
    r = resid(p)
    best = float(r @ r)
    for _ in range(iters):
        J = jac(p)
        if not np.all(np.isfinite(J)):
            break
        step = np.linalg.lstsq(J, -r, rcond=None)[0]
        q = p + step
        rq = resid(q)
        cq = float(rq @ rq)
        if not cq < best:
            break
        p, r, best = q, rq, cq
    return p


def _covariance(J: np.ndarray, chi2: float, n: int, weighted: bool = False) -> np.ndarray | None:
    """Covariance from the normal matrix; None if it is (numerically) singular."""
    p = J.shape[1]
    if n <= p or not np.all(np.isfinite(J)):
        return None
    # column scaling keeps the condition test meaningful for mixed-unit parameters
    scale = np.linalg.norm(J, axis=0)
    if np.any(scale == 0):
        return None
    Js = J / scale
    JTJ = Js.T @ Js
    if np.linalg.cond(JTJ) > 1e12:
        return None
    inv = np.linalg.inv(JTJ) / np.outer(scale, scale)
    s2 = 1.0 if weighted else chi2 / (n - p)
    return inv * s2


def chi2_gradient(g, T, p, rel_step: float = 1e-6) -> np.ndarray:
    """Central finite-difference gradient of the residual sum of squares."""
    g = np.asarray(g, float)
    T = np.asarray(T, float)
    p = np.asarray(p, float)
    out = np.zeros(4)
    for i in range(4):
        h = rel_step * max(abs(p[i]), 1e-3)
        up, dn = p.copy(), p.copy()
        up[i] += h
        dn[i] -= h
        fu = np.sum((eval_logistic(g, *up) - T) ** 2)
        fd = np.sum((eval_logistic(g, *dn) - T) ** 2)
        out[i] = (fu - fd) / (2 * h)
    return out


# ---------------------------------------------------------------------------
# Histogram fits


@dataclass(frozen=True)
class HistogramSpec:
    bin_width: float
    range: tuple[float, float] | None = None
    # bin edges sit at origin + m * bin_width
    origin: float = 0.0

    def __post_init__(self):
        if not self.bin_width > 0:
            raise ValueError("bin_width must be positive")

    def edges(self, samples: np.ndarray) -> np.ndarray:
        if self.range is not None:
            lo, hi = self.range
        else:
            lo, hi = float(np.min(samples)), float(np.max(samples))
        w, o = self.bin_width, self.origin
        start = o + math.floor((lo - o) / w) * w
        nb = max(1, math.floor((hi - start) / w) + 1)
        return start + w * np.arange(nb + 1)


@dataclass
class Histogram:
    edges: np.ndarray
    counts: np.ndarray

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    def to_csv(self) -> str:
        out = ["lo,hi,count"]
        out += [f"{lo!r},{hi!r},{int(c)}" for lo, hi, c in zip(self.edges[:-1], self.edges[1:], self.counts)]
        return "\n".join(out) + "\n"


def histogram(samples: Sequence[float], spec: HistogramSpec) -> Histogram:
    x = np.asarray(samples, dtype=np.float64)
    x = x[np.isfinite(x)]
    if len(x) == 0:
        raise ValueError("empty sample")
    edges = spec.edges(x)
    counts, _ = np.histogram(x, bins=edges)
    return Histogram(edges, counts)


@dataclass
class GaussianComponent:
    mean: float
    sigma: float
    area: float
    mean_err: float = math.nan
    sigma_err: float = math.nan
    area_err: float = math.nan
    weight: float = 1.0

    @property
    def amplitude(self) -> float:
        """Peak height of the fitted density, in counts per unit of the sample variable."""
        return self.area / (self.sigma * math.sqrt(2 * math.pi))


@dataclass
class GaussianFit:
    components: list[GaussianComponent]
    chi2: float
    dof: int
    converged: bool
    histogram: Histogram | None = field(default=None, repr=False)
    message: str = ""

    @property
    def n_components(self) -> int:
        return len(self.components)

    @property
    def mean(self) -> float:
        return self.components[0].mean

    @property
    def sigma(self) -> float:
        return self.components[0].sigma


def _binned_model(edges: np.ndarray, params: np.ndarray) -> np.ndarray:
    """Expected counts per bin for a sum of Gaussians with (mean, sigma, area) triples."""
    out = np.zeros(len(edges) - 1)
    for mu, sig, area in params.reshape(-1, 3):
        cdf = special.ndtr((edges - mu) / abs(sig))
        out += area * np.diff(cdf)
    return out


def _split_guess(x: np.ndarray) -> np.ndarray:
    """Two-group starting point: the split of the sorted sample maximizing between-group variance."""
    xs = np.sort(x)
    n = len(xs)
    csum = np.cumsum(xs)
    i = np.arange(1, n)
    m1 = csum[:-1] / i
    m2 = (csum[-1] - csum[:-1]) / (n - i)
    score = i * (n - i) * (m1 - m2) ** 2
    cut = int(np.argmax(score)) + 1
    a, b = xs[:cut], xs[cut:]
    spread = max(np.std(x) * 0.1, 1e-6)
    return np.array([a.mean(), max(a.std(), spread), len(a), b.mean(), max(b.std(), spread), len(b)],
                    dtype=np.float64)


def fit_gaussians(samples: Sequence[float], spec: HistogramSpec, n_components: int = 1
                  ) -> GaussianFit:
    """Least-squares fit of one or two Gaussians to a histogram of ``samples``.

    The model integrates each Gaussian over every bin, so coarse bins do not
    inflate the fitted width.  Residuals are weighted by Poisson errors
    ``sqrt(max(count, 1))``.  Components come back ordered by mean, with
    ``weight`` the share of the total fitted area.
    """
    if n_components not in (1, 2):
        raise ValueError("n_components must be 1 or 2")
    x = np.asarray(samples, dtype=np.float64)
    x = x[np.isfinite(x)]
    if len(x) == 0:
        raise ValueError("cannot fit an empty histogram")
    hist = histogram(x, spec)
    edges, counts = hist.edges, hist.counts.astype(np.float64)
    if counts.sum() == 0:
        raise ValueError("cannot fit an empty histogram")
    npar = 3 * n_components
    nonempty = int(np.count_nonzero(counts))
    sd = max(float(np.std(x)), 1e-12)
    if n_components == 1:
        p0 = np.array([x.mean(), max(sd, spec.bin_width / 4), len(x)])
    else:
        p0 = _split_guess(x)
        p0[1] = max(p0[1], spec.bin_width / 4)
        p0[4] = max(p0[4], spec.bin_width / 4)
    comps = [GaussianComponent(*map(float, p0[i:i + 3])) for i in range(0, npar, 3)]
    if nonempty < 3 or np.ptp(x) == 0:
        return GaussianFit(comps, math.nan, 0, False, hist, "degenerate histogram (fewer than 3 filled bins)")

    # pad with empty bins so the tails are constrained
    pad = 3
    w = spec.bin_width
    # work relative to the first edge so a shift by whole bins poses the identical problem
    off = float(edges[0])
    rel = edges - off
    edges_fit = np.concatenate([rel[0] - w * np.arange(pad, 0, -1), rel, rel[-1] + w * np.arange(1, pad + 1)])
    p0 = p0.copy()
    p0[0::3] -= off
    counts_fit = np.concatenate([np.zeros(pad), counts, np.zeros(pad)])
    err = np.sqrt(np.maximum(counts_fit, 1.0))

    def resid(p):
        return (_binned_model(edges_fit, p) - counts_fit) / err

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = optimize.least_squares(resid, p0, method="lm", x_scale="jac", max_nfev=5000,
                                     xtol=1e-12, ftol=1e-12)
    p = res.x.copy()
    p[1::3] = np.abs(p[1::3])
    r = resid(p)
    J = _num_jac(resid, p)
    p[0::3] += off
    chi2 = float(r @ r)
    dof = len(counts_fit) - npar
    # a peak narrower than a bin is reproduced exactly while its width keeps shrinking
    exact = chi2 < 1e-12 * counts.sum()
    msgs = [] if res.success or exact else [f"optimizer: {res.message}"]
    notes = []
    errs = np.full(npar, math.nan)
    cov = _covariance(J, chi2, len(counts_fit), weighted=True) if dof > 0 else None
    if cov is not None:
        errs = np.sqrt(np.diag(cov))
    else:
        # means and areas may still be pinned down when only the widths are not
        keep = np.array([i for i in range(npar) if i % 3 != 1])
        sub = _covariance(J[:, keep], chi2, len(counts_fit), weighted=True) if dof > 0 else None
        if sub is None:
            msgs.append("singular normal matrix")
        else:
            errs[keep] = np.sqrt(np.diag(sub))
            notes.append("widths unresolved at this bin width")
    comps = [GaussianComponent(*map(float, (p[i], p[i + 1], p[i + 2], errs[i], errs[i + 1], errs[i + 2])))
             for i in range(0, npar, 3)]
    if any(not (c.sigma > 0 and c.area > 0) for c in comps):
        msgs.append("non-positive width or area")
    comps.sort(key=lambda c: c.mean)
    total = sum(c.area for c in comps)
    for c in comps:
        c.weight = float(c.area / total) if total > 0 else math.nan
    return GaussianFit(comps, chi2, dof, not msgs, hist, "; ".join(msgs + notes) or "ok")


def _num_jac(fun, p: np.ndarray) -> np.ndarray:
    f0 = fun(p)
    J = np.empty((len(f0), len(p)))
    for i in range(len(p)):
        h = 1e-6 * max(abs(p[i]), 1.0)
        up, dn = p.copy(), p.copy()
        up[i] += h
        dn[i] -= h
        J[:, i] = (fun(up) - fun(dn)) / (2 * h)
    return J


@dataclass
class BimodalityVerdict:
    bimodal: bool
    one: GaussianFit
    two: GaussianFit
    chi2_ratio: float
    minor_weight: float
    dip: float = math.nan

    @property
    def best(self) -> GaussianFit:
        return self.two if self.bimodal else self.one

    @property
    def upper_fraction(self) -> float:
        """Area share of the higher-mean component (0 when unimodal)."""
        return self.two.components[1].weight if self.bimodal else 0.0


def dip_depth(fit: GaussianFit) -> float:
    """Lowest expected bin count strictly between the two peak bins, relative to the lower peak.

    Returns 1.0 when the peaks share a bin or sit in adjacent bins, so
    there is no room for a dip at this binning.
    """
    if fit.n_components != 2 or fit.histogram is None:
        return math.nan
    edges = fit.histogram.edges
    w = edges[1] - edges[0]
    a, b = fit.components
    lo = min(a.mean - 4 * a.sigma, edges[0])
    hi = max(b.mean + 4 * b.sigma, edges[-1])
    grid = edges[0] + w * np.arange(math.floor((lo - edges[0]) / w), math.ceil((hi - edges[0]) / w) + 1)
    params = np.array([[c.mean, c.sigma, c.area] for c in fit.components]).ravel()
    model = _binned_model(grid, params)
    ia, ib = (int(np.searchsorted(grid, m, side="right")) - 1 for m in (a.mean, b.mean))
    if ib - ia < 2:
        return 1.0
    peak = min(model[ia], model[ib])
    return float(model[ia + 1:ib].min() / peak) if peak > 0 else 1.0


def bimodality(samples: Sequence[float], spec: HistogramSpec, chi2_drop: float = 0.5,
               min_weight: float = 0.1, max_dip: float = 0.5) -> BimodalityVerdict:
    """Decide between one and two Gaussian components.

    Two components are accepted when they cut chi2 by more than
    ``chi2_drop`` (as a fraction), the minor component holds more than
    ``min_weight`` of the area, and the fitted two-component histogram dips
    below ``max_dip`` of the lower peak somewhere between the peaks.  The
    dip condition stops a coarsely binned unimodal sample, which two narrow
    components can reproduce exactly, from counting as bimodal.
    """
    one = fit_gaussians(samples, spec, 1)
    two = fit_gaussians(samples, spec, 2)
    if two.converged and one.chi2 > 0 and math.isfinite(one.chi2):
        ratio = two.chi2 / one.chi2
    elif two.converged and one.chi2 == 0:
        ratio = 1.0
    else:
        ratio = math.nan
    minor = min(c.weight for c in two.components) if two.converged else 0.0
    dip = dip_depth(two) if two.converged else math.nan
    bimodal = bool(two.converged and ratio < 1 - chi2_drop and minor > min_weight and dip < max_dip)
    return BimodalityVerdict(bimodal, one, two, ratio, minor, dip)


# ---------------------------------------------------------------------------
# Strategy comparison


@dataclass
class StrategySummary:
    name: str
    n_fits: int
    n_converged: int
    g0_values: np.ndarray = field(repr=False)
    c_values: np.ndarray = field(repr=False)
    inflection: GaussianFit | None
    convergence: BimodalityVerdict | None

    @property
    def g0_mean(self) -> float:
        """Gaussian-fit mean of the inflection points (sample mean if the fit failed)."""
        if self.inflection is not None and self.inflection.converged:
            return self.inflection.mean
        return float(np.mean(self.g0_values)) if len(self.g0_values) else math.nan

    @property
    def g0_sem(self) -> float:
        n = len(self.g0_values)
        return float(np.std(self.g0_values, ddof=1) / math.sqrt(n)) if n > 1 else math.nan

    @property
    def g0_sample_mean(self) -> float:
        return float(np.mean(self.g0_values)) if len(self.g0_values) else math.nan

    def convergence_label(self) -> str:
        v = self.convergence
        if v is None:
            return "n/a"
        if v.bimodal:
            a, b = v.two.components
            return f"{a.mean:.0f} ± {a.sigma:.0f} and {b.mean:.0f} ± {b.sigma:.0f}"
        f = v.one
        if f.converged:
            return f"{f.mean:.0f} ± {f.sigma:.0f}"
        return f"{np.mean(self.c_values):.0f} ± {np.std(self.c_values):.0f} (sample)"

    def inflection_label(self) -> str:
        f = self.inflection
        if f is not None and f.converged:
            return f"{f.mean:.0f} ± {f.sigma:.0f}"
        if len(self.g0_values):
            return f"{np.mean(self.g0_values):.0f} ± {np.std(self.g0_values):.0f} (sample)"
        return "n/a"


@dataclass
class Comparison:
    a: StrategySummary
    b: StrategySummary
    speedup: float
    warnings: list[str] = field(default_factory=list)

    def rows(self) -> list[dict]:
        out = []
        for s in (self.a, self.b):
            v = s.convergence
            out.append({
                "strategy": s.name,
                "n_fits": s.n_fits,
                "n_converged": s.n_converged,
                "g0_mean": s.g0_mean,
                "g0_sigma": s.inflection.sigma if s.inflection and s.inflection.converged else math.nan,
                "g0_sample_mean": s.g0_sample_mean,
                "g0_sem": s.g0_sem,
                "c_bimodal": bool(v.bimodal) if v else False,
                "c_mean_1": v.best.components[0].mean if v and v.best.converged else math.nan,
                "c_sigma_1": v.best.components[0].sigma if v and v.best.converged else math.nan,
                "c_mean_2": v.two.components[1].mean if v and v.bimodal else math.nan,
                "c_sigma_2": v.two.components[1].sigma if v and v.bimodal else math.nan,
                "suboptimal_fraction": v.upper_fraction if v else math.nan,
                "speedup_vs_first": 0.0 if s is self.a else self.speedup,
            })
        return out

    def to_csv(self) -> str:
        rows = self.rows()
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        return buf.getvalue()

    def table(self) -> str:
        """Plain-text table: strategy, inflection point, convergence point."""
        head = ("Evolutionary Strategy", "Inflection Point", "Convergence Point")
        units = ("", "(generations)", "(time-steps)")
        body = [(s.name, s.inflection_label(), s.convergence_label()) for s in (self.a, self.b)]
        widths = [max(len(r[i]) for r in (head, units, *body)) for i in range(3)]
        fmt = "  ".join("{:<%d}" % w for w in widths)
        rule = "=" * (sum(widths) + 4)
        lines = [rule, fmt.format(*head), fmt.format(*units), "-" * len(rule)]
        lines += [fmt.format(*r) for r in body]
        lines.append(rule)
        lines.append(f"speedup of {self.b.name} over {self.a.name}: {100 * self.speedup:.1f}%")
        for s in (self.a, self.b):
            if s.convergence is not None and s.convergence.bimodal:
                lines.append(f"{s.name}: {100 * s.convergence.upper_fraction:.0f}% converge to the upper mode")
        lines += [f"warning: {w}" for w in self.warnings]
        return "\n".join(lines) + "\n"


def speedup(g0_first: float, g0_second: float) -> float:
    """Fractional reduction of the inflection point of the second strategy relative to the first."""
    return 1.0 - g0_second / g0_first


def summarize(name: str, fits: Sequence[LogisticFit], cfg: AnalysisConfig = AnalysisConfig()
              ) -> StrategySummary:
    ok = [f for f in fits if f.converged]
    g0 = np.array([f.g0 for f in ok])
    c = np.array([f.c for f in ok])
    infl = conv = None
    if len(ok) >= 3:
        infl = fit_gaussians(g0, HistogramSpec(cfg.inflection_bin), 1)
        conv = bimodality(c, HistogramSpec(cfg.convergence_bin), cfg.bimodal_chi2_drop,
                          cfg.bimodal_min_weight, cfg.bimodal_dip)
    return StrategySummary(name, len(fits), len(ok), g0, c, infl, conv)


def compare_strategies(fits_a: Sequence[LogisticFit], fits_b: Sequence[LogisticFit],
                       cfg: AnalysisConfig = AnalysisConfig(), names: tuple[str, str] = ("Mutation", "Crossover with Mutation")
                       ) -> Comparison:
    sa = summarize(names[0], fits_a, cfg)
    sb = summarize(names[1], fits_b, cfg)
    warn = [f"{s.name}: only {s.n_converged} converged fits (< {cfg.min_converged})"
            for s in (sa, sb) if s.n_converged < cfg.min_converged]
    for w in warn:
        warnings.warn(w)
    return Comparison(sa, sb, speedup(sa.g0_mean, sb.g0_mean), warn)
