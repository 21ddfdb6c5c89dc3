"""Profile-to-sources inversion.

Pipeline: detect peaks (seeds) -> damped nonlinear least squares over
(position, strength) pairs -> model-order selection with a BIC-style
penalty.  A brute-force grid search with per-candidate linear strength
solves serves as the independent check on the continuous fit.

The fit kernel evaluates the same wall-offset 3D distances as the forward
sensor model, so a profile generated by the simulator is exactly realizable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from itertools import combinations

import numpy as np

from .acquisition import Profile, ProfileBin, Trace, build_profile
from .kinematics import DrumConfig, RobotProfile
from .route import PipeRoute
from .sensors import (
    COUNTER,
    DEFAULT_DISTANCE_FLOOR,
    HALL,
    MAGNETIC_DIPOLE,
    SensorConfig,
    kernel,
    resolve_offset,
    sensor_points,
    unquantize,
)

MAX_FIT_ITERATIONS = 200
RSS_IMPROVEMENT_TOL = 1e-10
_POSITION_DIFF_STEP = 1e-6


class IllPosedFitError(ValueError):
    """More free parameters than the profile can support."""


@dataclass(frozen=True)
class Peak:
    """A local maximum of the profile: bin center, height, topographic
    prominence (height above the higher flanking base)."""

    s: float
    height: float
    prominence: float


@dataclass(frozen=True)
class SourceEstimate:
    """Fitted source.  The continuous fit always yields positive strengths
    (log-parameterized); the grid oracle's linear solve may legitimately
    return zero on blank profiles."""

    s: float
    strength: float
    kind: str


@dataclass
class FitReport:
    estimates: list[SourceEstimate]
    rss: float
    n_iterations: int
    converged: bool
    selected_k: int
    rss_history: list[float] = field(default_factory=list)


@dataclass(frozen=True)
class FitGeometry:
    """Everything the kernel needs besides the candidate position."""

    route: PipeRoute
    lateral_offset: float | None = None  # None: wall placement, bore/2 at s
    mu: float = 0.0
    distance_floor: float = DEFAULT_DISTANCE_FLOOR
    baseline: float = 0.0


@dataclass
class MapOptions:
    """Knobs for the trace-to-report pipeline."""

    bin_width: float = 0.01
    include_retract: bool = False
    sensor: SensorConfig | None = None
    kind: str | None = None  # None: dipole for hall, gamma for counter
    lateral_offset: float | None = None
    mu: float = 0.0
    baseline: float | None = None  # None: from sensor config (or 0)
    kmax: int = 4
    min_prominence: float = 0.0
    min_separation: float = 0.05
    strength_floor: float = 0.0
    distance_floor: float | None = None


def detect_peaks(profile: Profile, min_prominence: float = 0.0,
                 min_separation: float | None = None) -> list[Peak]:
    """Local maxima with prominence >= threshold, thinned by separation.

    Plateaus count as one peak at their center bin.  Among peaks closer than
    ``min_separation`` the higher one wins; equal heights keep the smaller s.
    """
    if not profile.bins:
        raise ValueError("cannot detect peaks on an empty profile")
    if min_separation is None:
        min_separation = profile.bin_width
    if min_separation < profile.bin_width - 1e-12:
        raise ValueError(
            f"min_separation {min_separation} must be >= bin_width {profile.bin_width}"
        )
    values = profile.readings()
    centers = profile.s_centers()
    n = len(values)

    candidates: list[tuple[int, float]] = []  # (plateau-center index, height)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and values[j + 1] == values[i]:
            j += 1
        interior = i > 0 and j < n - 1
        if interior and values[i - 1] < values[i] and values[j + 1] < values[i]:
            candidates.append(((i + j) // 2, float(values[i])))
        i = j + 1

    peaks: list[Peak] = []
    for idx, height in candidates:
        left_base = height
        k = idx
        while k > 0:
            k -= 1
            left_base = min(left_base, float(values[k]))
            if values[k] > height:
                break
        right_base = height
        k = idx
        while k < n - 1:
            k += 1
            right_base = min(right_base, float(values[k]))
            if values[k] > height:
                break
        prominence = height - max(left_base, right_base)
        if prominence >= min_prominence:
            peaks.append(Peak(s=float(centers[idx]), height=height, prominence=prominence))

    # keep the higher of any pair closer than min_separation (ties: smaller s)
    kept: list[Peak] = []
    for peak in sorted(peaks, key=lambda p: (-p.height, p.s)):
        if all(abs(peak.s - other.s) >= min_separation for other in kept):
            kept.append(peak)
    kept.sort(key=lambda p: p.s)
    return kept


def _peak_width(profile: Profile, peak: Peak) -> float:
    """Width at half prominence, in meters; used to split seeds."""
    values = profile.readings()
    centers = profile.s_centers()
    idx = int(np.argmin(np.abs(centers - peak.s)))
    cutoff = peak.height - max(peak.prominence, 1e-300) / 2.0
    lo = idx
    while lo > 0 and values[lo - 1] >= cutoff:
        lo -= 1
    hi = idx
    while hi < len(values) - 1 and values[hi + 1] >= cutoff:
        hi += 1
    return (hi - lo + 1) * profile.bin_width


def _pad_seeds(profile: Profile, seeds: list[Peak], k: int) -> list[Peak]:
    """Ensure at least k seeds by splitting the widest peak in two."""
    seeds = list(seeds)
    if not seeds:
        lo, hi = profile.span()
        height = float(profile.readings().max())
        seeds.append(Peak(s=(lo + hi) / 2.0, height=height, prominence=0.0))
    while len(seeds) < k:
        widths = [_peak_width(profile, p) for p in seeds]
        i = int(np.argmax(widths))
        victim = seeds.pop(i)
        shift = max(widths[i] / 4.0, profile.bin_width)
        for sign in (-1.0, 1.0):
            seeds.append(Peak(
                s=victim.s + sign * shift,
                height=victim.height / 2.0,
                prominence=victim.prominence / 2.0,
            ))
    return seeds


def _kernel_column(geometry: FitGeometry, kind: str, points: np.ndarray, s: float) -> np.ndarray:
    """Unit-strength model column for a source at arc position s."""
    route = geometry.route
    s_clamped = min(max(s, 0.0), route.total_length)
    offset = resolve_offset(route, s_clamped, geometry.lateral_offset)
    pose = route.pose_at(s_clamped)
    wall = pose.position + offset * pose.normal
    d = np.linalg.norm(points - wall, axis=1)
    return np.asarray(kernel(kind, d, geometry.mu, geometry.distance_floor))


def _profile_points(profile: Profile, route: PipeRoute) -> np.ndarray:
    # end bins may overhang the route end by half a bin; clamp for the pose
    centers = np.clip(profile.s_centers(), 0.0, route.total_length)
    return sensor_points(route, centers)


def fit_sources(profile: Profile, k: int, kind: str, geometry: FitGeometry,
                seeds: list[Peak]) -> FitReport:
    """Damped least squares over k (position, strength) pairs.

    Strengths stay positive via log-parameterization.  Damping grows on
    rejected steps and shrinks on accepted ones, so the rss trajectory over
    accepted iterations never increases.  Stops on relative rss improvement
    below 1e-10 or after 200 iterations.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    n = len(profile.bins)
    if k > n // 2:
        raise IllPosedFitError(f"k={k} is ill-posed for {n} bins")
    y = profile.readings() - geometry.baseline
    if not np.all(np.isfinite(y)):
        raise ValueError("profile contains non-finite readings")
    points = _profile_points(profile, geometry.route)
    lo, hi = profile.span()
    s_min, s_max = lo - profile.bin_width, hi + profile.bin_width

    seeds = _pad_seeds(profile, seeds, k)
    seeds = sorted(seeds, key=lambda p: (-p.prominence, -p.height, p.s))[:k]
    scale = max(float(np.max(np.abs(y))), 1e-30)
    positions = np.array([min(max(p.s, s_min), s_max) for p in seeds])
    strengths = []
    for p in seeds:
        peak_gain = float(_kernel_column(geometry, kind, points, p.s).max())
        amp = max(p.height - geometry.baseline, 1e-6 * scale)
        strengths.append(amp / max(peak_gain, 1e-300))
    log_strengths = np.log(np.asarray(strengths))

    def model_and_columns(pos: np.ndarray, logc: np.ndarray):
        cols = np.column_stack([
            _kernel_column(geometry, kind, points, float(sj)) for sj in pos
        ])
        f = cols @ np.exp(logc)
        return f, cols

    def rss_of(pos: np.ndarray, logc: np.ndarray) -> float:
        f, _ = model_and_columns(pos, logc)
        r = y - f
        return float(r @ r)

    f, cols = model_and_columns(positions, log_strengths)
    rss = float((y - f) @ (y - f))
    history = [rss]
    lam = 1e-3
    converged = False
    iterations = 0

    for iterations in range(1, MAX_FIT_ITERATIONS + 1):
        c = np.exp(log_strengths)
        # model Jacobian: analytic in log-strength, central difference in position
        jac = np.empty((n, 2 * k))
        h = _POSITION_DIFF_STEP
        for j in range(k):
            col_plus = _kernel_column(geometry, kind, points, float(positions[j]) + h)
            col_minus = _kernel_column(geometry, kind, points, float(positions[j]) - h)
            jac[:, j] = c[j] * (col_plus - col_minus) / (2.0 * h)
            jac[:, k + j] = c[j] * cols[:, j]
        residual = y - cols @ c
        gradient = jac.T @ residual
        hessian = jac.T @ jac
        diag = np.diag(hessian).copy()
        diag[diag <= 0.0] = max(float(diag.max()), 1e-300) * 1e-12 + 1e-300

        accepted = False
        while lam <= 1e15:
            try:
                step = np.linalg.solve(hessian + lam * np.diag(diag), gradient)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial_pos = np.clip(positions + step[:k], s_min, s_max)
            trial_logc = np.clip(log_strengths + step[k:], -700.0, 700.0)
            trial_rss = rss_of(trial_pos, trial_logc)
            if trial_rss < rss:
                positions, log_strengths = trial_pos, trial_logc
                improvement = rss - trial_rss
                rss = trial_rss
                history.append(rss)
                lam = max(lam / 3.0, 1e-12)
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            converged = True  # no descent direction left: stationary point
            break
        f, cols = model_and_columns(positions, log_strengths)
        if improvement < RSS_IMPROVEMENT_TOL * max(history[-2], 1e-300):
            converged = True
            break

    order = np.argsort(positions)
    estimates = [
        SourceEstimate(s=float(positions[j]), strength=float(np.exp(log_strengths[j])), kind=kind)
        for j in order
    ]
    return FitReport(
        estimates=estimates,
        rss=rss,
        n_iterations=iterations,
        converged=converged,
        selected_k=k,
        rss_history=history,
    )


def select_model(profile: Profile, kmax: int, kind: str, geometry: FitGeometry,
                 seeds: list[Peak] | None = None) -> FitReport:
    """Fit k = 1..kmax and keep the k minimizing n*ln(rss/n) + 2k*ln(n)."""
    if kmax < 1:
        raise ValueError(f"kmax must be >= 1, got {kmax}")
    if seeds is None:
        seeds = detect_peaks(profile)
    n = len(profile.bins)
    best: FitReport | None = None
    best_bic = math.inf
    for k in range(1, kmax + 1):
        if k > n // 2:
            break
        report = fit_sources(profile, k, kind, geometry, seeds)
        bic = n * math.log(max(report.rss, 1e-300) / n) + 2 * k * math.log(n)
        if bic < best_bic:
            best, best_bic = report, bic
    if best is None:
        raise IllPosedFitError(f"profile with {n} bins cannot support any fit")
    return best


def grid_oracle(profile: Profile, k: int, kind: str, geometry: FitGeometry,
                grid_step: float) -> FitReport:
    """Exhaustive search over grid position subsets, strengths by linear LS.

    For fixed positions the model is linear in strengths, so each candidate
    subset is solved exactly.  Deliberately brute force: this is the
    verification path for the continuous fit, not a production solver.
    """
    if k < 1 or k > 2:
        raise ValueError(f"grid oracle supports k in {{1, 2}}, got {k}")
    if grid_step < profile.bin_width - 1e-12:
        raise ValueError(
            f"grid_step {grid_step} must be >= bin_width {profile.bin_width}"
        )
    centers = profile.s_centers()
    stride = max(1, round(grid_step / profile.bin_width))
    positions = centers[::stride]
    m = len(positions)
    n_candidates = m if k == 1 else m * (m - 1) // 2
    if n_candidates > 1_000_000:
        raise ValueError(f"grid too large: {n_candidates} candidates (cap 1e6)")
    if n_candidates == 0:
        raise ValueError("empty position grid")

    y = profile.readings() - geometry.baseline
    points = _profile_points(profile, geometry.route)
    cols = np.column_stack([
        _kernel_column(geometry, kind, points, float(s)) for s in positions
    ])
    gram = cols.T @ cols
    proj = cols.T @ y
    yy = float(y @ y)

    best_rss = math.inf
    best_idx: tuple[int, ...] = ()
    best_strengths: tuple[float, ...] = ()
    if k == 1:
        strengths = proj / np.diag(gram)
        rss_all = yy - strengths * proj
        i = int(np.argmin(rss_all))
        best_idx, best_strengths = (i,), (float(strengths[i]),)
    else:
        for i, j in combinations(range(m), 2):
            g11, g22, g12 = gram[i, i], gram[j, j], gram[i, j]
            det = g11 * g22 - g12 * g12
            if det <= 1e-14 * g11 * g22:
                continue  # near-identical columns; degenerate candidate
            c1 = (proj[i] * g22 - proj[j] * g12) / det
            c2 = (proj[j] * g11 - proj[i] * g12) / det
            rss = yy - (c1 * proj[i] + c2 * proj[j])
            if rss < best_rss:
                best_rss = rss
                best_idx, best_strengths = (i, j), (float(c1), float(c2))

    # recompute exactly at the winner; the fast form cancels catastrophically
    design = cols[:, list(best_idx)]
    residual = y - design @ np.asarray(best_strengths)
    best_rss = float(residual @ residual)
    estimates = sorted(
        (
            SourceEstimate(s=float(positions[i]), strength=strength, kind=kind)
            for i, strength in zip(best_idx, best_strengths)
        ),
        key=lambda e: e.s,
    )
    return FitReport(
        estimates=estimates,
        rss=best_rss,
        n_iterations=n_candidates,
        converged=True,
        selected_k=k,
        rss_history=[best_rss],
    )


def calibrate_profile(profile: Profile, sensor: SensorConfig) -> Profile:
    """Convert binned raw sensor values back into reading units.

    Hall + ADC: affine unquantization (commutes with bin averaging).
    Counter: counts / dwell -> rate units.  Hall without an ADC is already in
    reading units.
    """
    if sensor.kind == HALL and sensor.adc_bits is not None:
        convert = lambda v: float(unquantize(v, sensor.adc_bits, sensor.adc_range))
    elif sensor.kind == COUNTER:
        convert = lambda v: v / sensor.dwell_time
    else:
        return profile
    bins = [replace(b, mean_reading=convert(b.mean_reading)) for b in profile.bins]
    return Profile(bin_width=profile.bin_width, bins=bins)


def localize(trace: Trace, drum: DrumConfig, robot: RobotProfile,
             route: PipeRoute, options: MapOptions | None = None) -> FitReport:
    """Full trace-to-sources pipeline; deterministic for fixed inputs.

    Estimates whose strength falls below ``options.strength_floor`` are
    suppressed (the report then says "no sources found"); ``selected_k``
    reflects the estimates that survive.
    """
    options = options or MapOptions()
    profile = build_profile(trace, drum, robot, options.bin_width, options.include_retract)
    if options.sensor is not None:
        profile = calibrate_profile(profile, options.sensor)
    baseline = options.baseline
    if baseline is None:
        baseline = options.sensor.baseline if options.sensor else 0.0
    floor = options.distance_floor
    if floor is None:
        floor = options.sensor.distance_floor if options.sensor else DEFAULT_DISTANCE_FLOOR
    kind = options.kind
    if kind is None:
        kind = MAGNETIC_DIPOLE
        if options.sensor is not None and options.sensor.kind == COUNTER:
            kind = "gamma_point"
    geometry = FitGeometry(
        route=route,
        lateral_offset=options.lateral_offset,
        mu=options.mu,
        distance_floor=floor,
        baseline=baseline,
    )
    separation = max(options.min_separation, options.bin_width)
    peaks = detect_peaks(profile, options.min_prominence, separation)
    report = select_model(profile, options.kmax, kind, geometry, seeds=peaks)
    kept = [e for e in report.estimates if e.strength >= options.strength_floor]
    report.estimates = kept
    report.selected_k = len(kept)
    return report


def _fmt(value: float) -> str:
    return format(value, ".9g")


def format_report_text(report: FitReport) -> str:
    """Human-readable summary."""
    lines = [
        "source map report",
        "-----------------",
        f"selected_k   : {report.selected_k}",
        f"converged    : {'yes' if report.converged else 'no'}",
        f"rss          : {_fmt(report.rss)}",
        f"iterations   : {report.n_iterations}",
    ]
    if report.estimates:
        lines.append("estimates:")
        for i, est in enumerate(report.estimates, start=1):
            lines.append(f"  {i}) s = {_fmt(est.s)} m, strength = {_fmt(est.strength)}")
    else:
        lines.append("no sources found")
    return "\n".join(lines) + "\n"


def format_report_kv(report: FitReport) -> str:
    """Machine-readable report in the sectioned key-value format."""
    from .configio import emit_sections

    sections: list[tuple[str, dict[str, str]]] = [(
        "fit",
        {
            "selected_k": str(report.selected_k),
            "converged": "true" if report.converged else "false",
            "rss": _fmt(report.rss),
            "n_iterations": str(report.n_iterations),
        },
    )]
    for est in report.estimates:
        sections.append(("estimate", {"s_m": _fmt(est.s), "strength": _fmt(est.strength)}))
    return emit_sections(sections)
