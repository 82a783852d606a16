"""Monte Carlo experiments, ordered parallel reduction and result files.

Every trial draws its randomness from :func:`onebit_mimo.rng.stream` keyed by
the trial index, and per-trial results are reduced in trial order, so outputs
do not depend on the number of workers.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .bounds import bayesian_crb, general_crb, numerical_bias_gradient
from .channel import draw_channel, empirical_bias_check, estimate_rh_adaptive, simulate_quantized_pilots
from .config import SystemConfig
from .costs import CostEstimator, complexity, receiver_power
from .detector import ser_block
from .estimators import _lms_recursion, _window_operators, estimate_step_bound, make_estimator
from .quantizer import quantize_1bit
from .rng import stream
from .waveform import filter_bank, orthogonal_pilots, dft_pilots, random_qpsk_pilots, synthesize_noise

__all__ = [
    "CurvePoint",
    "ExperimentResult",
    "StabilityResult",
    "run_mse_sweep",
    "run_convergence",
    "run_ser_sweep",
    "run_bounds",
    "run_costs",
    "run_power",
    "run_bias_check",
    "run_step_stability",
    "emit",
    "to_csv",
    "to_json",
]

CHUNK = 10  # trials per task; fixed so that task boundaries never depend on workers


@dataclass(frozen=True)
class CurvePoint:
    """One point of a curve: ``y`` (with standard error) at abscissa ``x`` from ``n`` samples."""

    x: float
    y: float
    stderr: float
    n: int
    label: str

    def __post_init__(self):
        if not self.stderr >= 0:
            raise ValueError("stderr must be nonnegative")
        if self.n <= 0:
            raise ValueError("n must be positive")


@dataclass
class ExperimentResult:
    """Curves of one experiment plus the configuration that produced them."""

    experiment: str
    points: list
    config: SystemConfig
    metadata: dict = field(default_factory=dict)

    def curve(self, label: str) -> list:
        return [p for p in self.points if p.label == label]

    @property
    def labels(self) -> list:
        return list(dict.fromkeys(p.label for p in self.points))


# ----------------------------------------------------------------------------
# execution helpers


def _chunks(n: int) -> list:
    return [range(i, min(i + CHUNK, n)) for i in range(0, n, CHUNK)]


def _pmap(fn: Callable, tasks: Sequence, workers: int) -> list:
    """Ordered map, in-process for one worker and over a process pool otherwise."""
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(fn, tasks))


def _mean_se(values: np.ndarray, axis: int = 0) -> tuple:
    values = np.asarray(values, dtype=float)
    n = values.shape[axis]
    mean = values.mean(axis=axis)
    se = values.std(axis=axis, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(mean)
    return mean, se, n


def _db_points(per_trial: np.ndarray, xs: Iterable, label: str) -> list:
    """dB points from per-trial linear metrics of shape ``(trials, len(xs))``.

    The mean is taken in the linear domain; the standard error is mapped to
    dB by first-order propagation.
    """
    mean, se, n = _mean_se(per_trial)
    out = []
    for x, m, s in zip(xs, np.atleast_1d(mean), np.atleast_1d(se)):
        if not (np.isfinite(m) and m > 0):
            raise FloatingPointError(f"non-finite or nonpositive metric for {label} at x={x}")
        out.append(CurvePoint(float(x), float(10 * np.log10(m)), float(10 / np.log(10) * s / m), n, label))
    return out


def _pilots(design: str, tau: int, n_t: int, rng) -> np.ndarray:
    if design == "orthogonal":
        return orthogonal_pilots(tau, n_t)
    if design == "dft":
        return dft_pilots(tau, n_t)
    return random_qpsk_pilots(tau, n_t, rng)


# ----------------------------------------------------------------------------
# NMSE versus SNR

# estimators whose covariance input is replaced by the recursive estimate in adaptive mode
_PRIOR_USERS = ("lra_lmmse", "simplified_lmmse")


def _mse_task(args) -> np.ndarray:
    """Per-trial NMSE, shape ``(len(trials), n_snr, n_est)``."""
    cfg, m, trials = args
    fb = filter_bank(cfg.rolloff, m, cfg.filter_span(cfg.tau), cfg.tau)
    pilots = _pilots(cfg.pilot_design, cfg.tau, cfg.n_t, stream(cfg.seed, 0, "pilots"))
    snrs = cfg.snr_db_grid
    ests = [[make_estimator(name, cfg, m, cfg.at(snr_db=s).sigma2).fit(pilots) for name in cfg.estimators]
            for s in snrs]
    b = fb.z_sel @ pilots
    out = np.empty((len(trials), len(snrs), len(cfg.estimators)))
    for i, t in enumerate(trials):
        ch = draw_channel(cfg, stream(cfg.seed, t, "channel"))
        w = synthesize_noise(fb, 1.0, stream(cfg.seed, t, "noise", m), n_r=cfg.n_r).reshape(cfg.n_r, -1)
        clean = ch.h_matrix @ b.T
        h = ch.h_vec
        for s_idx, s in enumerate(snrs):
            sigma2 = cfg.at(snr_db=s).sigma2
            y_u = clean + math.sqrt(sigma2) * w
            y_q = quantize_1bit(y_u)
            r_known = None if ch.is_white else ch.r_h
            r_use = estimate_rh_adaptive(y_q, pilots, fb, cfg.lam) if cfg.rh_mode == "adaptive" else r_known
            for e_idx, (name, est) in enumerate(zip(cfg.estimators, ests[s_idx])):
                if est.quantized_input:
                    h_hat = est.predict(y_q, r_h=r_use if name in _PRIOR_USERS else r_known)
                else:
                    h_hat = est.predict(y_u, r_h=r_known)
                out[i, s_idx, e_idx] = np.sum(np.abs(h_hat - h) ** 2) / np.sum(np.abs(h) ** 2)
    return out


def run_mse_sweep(cfg: SystemConfig) -> ExperimentResult:
    """NMSE (dB) versus SNR for every estimator and oversampling factor.

    Labels are ``"<estimator>/M=<m>"``.  Within a trial all estimators and
    SNR points share the channel and the (scaled) noise.
    """
    points = []
    for m in cfg.m_grid:
        tasks = [(cfg, m, ch) for ch in _chunks(cfg.trials)]
        per_trial = np.concatenate(_pmap(_mse_task, tasks, cfg.workers))
        for e_idx, name in enumerate(cfg.estimators):
            points += _db_points(per_trial[:, :, e_idx], cfg.snr_db_grid, f"{name}/M={m}")
    return ExperimentResult("mse", points, cfg, {"x": "snr_db", "y": "nmse_db"})


# ----------------------------------------------------------------------------
# LMS convergence and stability


def _convergence_task(args) -> np.ndarray:
    cfg, m, mu, trials = args
    est_cfg = cfg.at(m=m)
    out = np.empty((len(trials), len(cfg.tau_grid)))
    for i, t in enumerate(trials):
        for k, tau in enumerate(cfg.tau_grid):
            rng = stream(cfg.seed, t, "convergence", m, tau)
            pilots = _pilots(cfg.lms_pilot_design, tau, cfg.n_t, rng)
            ch = draw_channel(cfg, rng)
            fb = filter_bank(cfg.rolloff, m, cfg.filter_span(tau), tau)
            y_q = simulate_quantized_pilots(ch.h_matrix, pilots, fb, cfg.sigma2, rng)
            est = make_estimator("lra_lms", est_cfg, m).set_params(mu=mu).fit(pilots)
            h_hat = est.predict(y_q, r_h=None if ch.is_white else ch.r_h)
            h = ch.h_vec
            out[i, k] = np.sum(np.abs(h_hat - h) ** 2) / np.sum(np.abs(h) ** 2)
    return out


def run_convergence(cfg: SystemConfig, mu_scale: float = 1.0) -> ExperimentResult:
    """LRA-LMS NMSE (dB) versus pilot length ``tau`` at ``cfg.snr_db``.

    Each ``tau`` is an independent pilot block; ``mu_scale`` multiplies the
    configured step size.  Labels are ``"lra_lms/M=<m>"``.
    """
    points = []
    for m in cfg.m_grid:
        mu = cfg.step_size(m) * mu_scale
        tasks = [(cfg, m, mu, ch) for ch in _chunks(cfg.trials)]
        per_trial = np.concatenate(_pmap(_convergence_task, tasks, cfg.workers))
        points += _db_points(per_trial, cfg.tau_grid, f"lra_lms/M={m}")
    return ExperimentResult("convergence", points, cfg,
                            {"x": "tau", "y": "nmse_db", "snr_db": cfg.snr_db, "mu_scale": mu_scale})


@dataclass(frozen=True)
class StabilityResult:
    """Trial-averaged LMS error trajectories for one step size.

    ``mean_norm[n]`` is the average of ``||h_hat(n) - h||`` (standard error
    ``mean_norm_se[n]``) and ``norm_mean[n]`` the norm of the average error,
    after ``n`` windows.
    """

    mu: float
    mu_max: float
    gamma_max: float
    mean_norm: np.ndarray
    mean_norm_se: np.ndarray
    norm_mean: np.ndarray
    diverged: bool
    diverged_at: int | None


def _stability_task(args) -> tuple:
    cfg, mu, n_windows, trials = args
    tau = n_windows + cfg.l_win - 1
    fb = filter_bank(cfg.rolloff, cfg.m, cfg.filter_span(cfg.tau), tau)
    fbw = filter_bank(cfg.rolloff, cfg.m, cfg.filter_span(cfg.tau), cfg.l_win)
    norms = np.empty((len(trials), n_windows + 1))
    errs = np.empty((len(trials), n_windows + 1, cfg.n_t), dtype=complex)
    for i, t in enumerate(trials):
        rng = stream(cfg.seed, t, "stability")
        pilots = random_qpsk_pilots(tau, cfg.n_t, rng)
        h = (rng.standard_normal(cfg.n_t) + 1j * rng.standard_normal(cfg.n_t)) / math.sqrt(2)
        y_q = simulate_quantized_pilots(h[None, :], pilots, fb, cfg.sigma2, rng)
        trace = []
        with np.errstate(over="ignore", invalid="ignore"):
            _lms_recursion(_window_operators(pilots, fbw, cfg.sigma2), y_q[None], mu, cfg.m, trace=trace)
            e = np.concatenate([-h[None, :], np.array([tr[0, :, 0] for tr in trace]) - h[None, :]])
            errs[i] = e
            norms[i] = np.linalg.norm(e, axis=1)
    return norms, errs


def run_step_stability(cfg: SystemConfig, factor: float, n_windows: int = 200, trials: int = 100,
                       growth: float = 10.0) -> StabilityResult:
    """LMS error trajectories with ``mu = factor * 2 / gamma_max`` on one long random pilot stream.

    The divergence detector fires at the first window where the trial-averaged
    error norm exceeds ``growth`` times its initial value or stops being finite.
    """
    gamma, mu_max = estimate_step_bound(cfg, rng=stream(cfg.seed, 0, "step-bound"))
    mu = factor * mu_max
    tasks = [(cfg, mu, n_windows, ch) for ch in _chunks(trials)]
    parts = _pmap(_stability_task, tasks, cfg.workers)
    norms = np.concatenate([p[0] for p in parts])
    errs = np.concatenate([p[1] for p in parts])
    with np.errstate(over="ignore", invalid="ignore"):
        mean_norm = norms.mean(axis=0)
        mean_norm_se = norms.std(axis=0, ddof=1) / math.sqrt(norms.shape[0])
        norm_mean = np.linalg.norm(errs.mean(axis=0), axis=1)
    bad = np.flatnonzero(~np.isfinite(mean_norm) | (mean_norm > growth * mean_norm[0]))
    at = int(bad[0]) if bad.size else None
    return StabilityResult(mu, mu_max, gamma, mean_norm, mean_norm_se, norm_mean, at is not None, at)


# ----------------------------------------------------------------------------
# symbol error rate


def _ser_task(args) -> np.ndarray:
    cfg, m, choices, trials = args
    out = np.empty((len(trials), len(cfg.snr_db_grid), len(choices)))
    for s_idx, s in enumerate(cfg.snr_db_grid):
        c = cfg.at(m=m, snr_db=s)
        pilots = orthogonal_pilots(c.tau, c.n_t)
        ests = [None if ch in ("perfect", None) else make_estimator(ch, c).fit(pilots) for ch in choices]
        for i, t in enumerate(trials):
            for e_idx, choice in enumerate(choices):
                err, n = ser_block(c, choice, stream(cfg.seed, t, "ser-channel"),
                                   rng_pilot=stream(cfg.seed, t, "ser-pilot", m, s_idx),
                                   rng_data=stream(cfg.seed, t, "ser-data", m, s_idx), estimator=ests[e_idx])
                out[i, s_idx, e_idx] = err / n
    return out


def run_ser_sweep(cfg: SystemConfig, estimators: Sequence | None = None) -> ExperimentResult:
    """SER versus SNR of the sliding-window detector.

    ``estimators`` lists CSI sources (``"perfect"`` or an estimator name);
    by default perfect CSI and LRA-LMMSE.  Each trial sends ``cfg.ser_blocks``
    payload blocks, so ``cfg.trials * cfg.ser_blocks`` blocks per point.
    Labels are ``"<csi>/M=<m>"``.
    """
    choices = tuple(estimators) if estimators else ("perfect", "lra_lmmse")
    n_blocks = cfg.trials * cfg.ser_blocks
    points = []
    for m in cfg.m_grid:
        tasks = [(cfg, m, choices, ch) for ch in _chunks(n_blocks)]
        per_block = np.concatenate(_pmap(_ser_task, tasks, cfg.workers))
        for e_idx, choice in enumerate(choices):
            mean, se, n = _mean_se(per_block[:, :, e_idx])
            points += [CurvePoint(float(x), float(y), float(e), n, f"{choice}/M={m}")
                       for x, y, e in zip(cfg.snr_db_grid, mean, se)]
    return ExperimentResult("ser", points, cfg, {"x": "snr_db", "y": "ser", "symbols_per_block": cfg.n_t * cfg.data_len})


# ----------------------------------------------------------------------------
# bounds, costs, bias


def _crb_task(args) -> tuple:
    cfg, m, s_idx = args
    c = cfg.at(m=m, snr_db=cfg.snr_db_grid[s_idx])
    res = bayesian_crb(c, rng=stream(cfg.seed, 0, "crb", m))
    return res.nmse_db, res.is_upper_bound


def run_bounds(cfg: SystemConfig) -> ExperimentResult:
    """Bayesian CRB (dB) versus SNR per oversampling factor; labels ``"crb/M=<m>"``.

    Every SNR point of one ``M`` uses the same channel draws.
    """
    tasks = [(cfg, m, s) for m in cfg.m_grid for s in range(len(cfg.snr_db_grid))]
    res = iter(_pmap(_crb_task, tasks, cfg.workers))
    points, upper = [], {}
    for m in cfg.m_grid:
        for s in cfg.snr_db_grid:
            y, is_upper = next(res)
            upper[str(m)] = is_upper
            points.append(CurvePoint(float(s), float(y), 0.0, cfg.n_channel_draws, f"crb/M={m}"))
    return ExperimentResult("bounds", points, cfg, {"x": "snr_db", "y": "nmse_db", "upper_bound": upper})


def run_costs(cfg: SystemConfig) -> ExperimentResult:
    """Operation counts versus ``n_r`` for each closed-form estimator; labels ``"<name>/M=<m>"``."""
    points = []
    for m in cfg.m_grid:
        for est in CostEstimator:
            for n_r in cfg.n_r_grid:
                rep = complexity(est, n_r, cfg.n_t, m, cfg.tau, cfg.l_win)
                points.append(CurvePoint(float(n_r), float(rep.total), 0.0, 1, f"{est.value}/M={m}"))
    return ExperimentResult("complexity", points, cfg, {"x": "n_r", "y": "operations"})


def run_power(cfg: SystemConfig) -> ExperimentResult:
    """Receiver power (mW) versus ADC resolution; labels ``"power/M=<m>"``."""
    points = [CurvePoint(float(b), receiver_power(b, m, cfg.n_r).total_mw, 0.0, 1, f"power/M={m}")
              for m in cfg.m_grid for b in cfg.b_grid]
    return ExperimentResult("power", points, cfg, {"x": "bits", "y": "power_mw", "n_r": cfg.n_r})


def run_bias_check(cfg: SystemConfig, estimators: Sequence | None = None) -> ExperimentResult:
    """Bias diagnostics at ``cfg.snr_db``.

    Curves (``x`` is the coefficient or terminal index):

    - ``instantaneous_gain``: diagonal of the expected gain of the per-symbol
      estimator (identity for an unbiased estimator);
    - ``grad_re/<est>``, ``grad_im/<est>``: diagonal of the finite-difference
      gradient of the estimator mean;
    - ``general_crb/<est>``: bias-aware bound per coefficient.

    ``metadata['max_z']`` holds the largest ``|B - I| / stderr`` per estimator.
    """
    names = tuple(estimators) if estimators else ("lra_ls_adaptive", "unquantized_ls")
    rep = empirical_bias_check(cfg, cfg.bias_realizations, stream(cfg.seed, 0, "bias-check"))
    points = [CurvePoint(float(j), float(np.real(rep.matrix[j, j])), float(rep.stderr[j, j]), rep.n_trials,
                         "instantaneous_gain") for j in range(cfg.n_t)]
    meta = {"x": "index", "y": "gain", "snr_db": cfg.snr_db, "instantaneous_deviation": rep.deviation,
            "max_z": {}, "general_crb_db": {}}
    for name in names:
        g = numerical_bias_gradient(name, cfg, rng=stream(cfg.seed, 0, "bias-gradient"))
        eye = np.eye(len(g.coeffs))
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.concatenate([np.abs(g.real - eye) / g.real_stderr, np.abs(g.imag - eye) / g.imag_stderr])
        z = np.where(np.isfinite(z), z, 0.0)
        meta["max_z"][name] = float(z.max())
        n = cfg.bias_realizations
        for part, mat, se in (("grad_re", g.real, g.real_stderr), ("grad_im", g.imag, g.imag_stderr)):
            points += [CurvePoint(float(c), float(mat[i, i]), float(se[i, i]), n, f"{part}/{name}")
                       for i, c in enumerate(g.coeffs)]
        crb = general_crb(name, cfg, gradient=g)
        meta["general_crb_db"][name] = crb.nmse_db
        points += [CurvePoint(float(c), float(v), 0.0, n, f"general_crb/{name}") for c, v in zip(g.coeffs, crb.bound_diag)]
    return ExperimentResult("bias-check", points, cfg, meta)


# ----------------------------------------------------------------------------
# output


def _num(v: float) -> str:
    return repr(float(v))


def to_csv(result: ExperimentResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "y", "stderr", "n", "label"])
    for p in result.points:
        w.writerow([_num(p.x), _num(p.y), _num(p.stderr), int(p.n), p.label])
    return buf.getvalue()


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        return float(v) if math.isfinite(v) else str(float(v))
    if isinstance(v, (np.integer, int)) and not isinstance(v, bool):
        return int(v)
    return v


def to_json(result: ExperimentResult) -> str:
    curves = {}
    for label in result.labels:
        pts = result.curve(label)
        curves[label] = {"x": [p.x for p in pts], "y": [p.y for p in pts],
                         "stderr": [p.stderr for p in pts], "n": [p.n for p in pts]}
    doc = {
        "experiment": result.experiment,
        "seed": result.config.seed,
        "metadata": result.metadata,
        "config": result.config.to_dict(),
        "curves": curves,
    }
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


def emit(result: ExperimentResult, fmt: str, path: str | os.PathLike) -> Path:
    """Write ``result`` as CSV or JSON atomically.

    ``path`` is a file path or an existing directory; in the latter case the
    file is named ``<experiment>.<fmt>``.
    """
    if fmt not in ("csv", "json"):
        raise ValueError(f"unknown format {fmt!r}")
    path = Path(path)
    if path.is_dir():
        path = path / f"{result.experiment}.{fmt}"
    text = to_csv(result) if fmt == "csv" else to_json(result)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path
