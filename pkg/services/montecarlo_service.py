import asyncio
import logging
import time
from typing import Callable, List, Optional, Sequence, Tuple, TypeVar

import numpy as np
from scipy.stats import linregress

import config
from models.simulation import (
    ContractionReport,
    CouplingConfig,
    DecaySeries,
    ErgodicAverageReport,
    FloorReport,
    ModelSpec,
    RateFit,
)
from services.bounds_service import BoundsService
from services.coupling_simulator import REFERENCE_STREAM, BlockDistance, CouplingSimulator
from services.errors import DomainError, FitError

logger = logging.getLogger(__name__)

T = TypeVar("T")

MIN_PATHS = 100
USABLE_SIGMAS = 5.0


class MonteCarloService:
    """Ensemble estimates of E[d_{f,w}(X_t, Y_t)], decay-rate fits and contraction checks"""

    def __init__(self, workers: int = config.MC_WORKERS, chunk_size: int = config.MC_CHUNK_SIZE):
        if workers < 1 or chunk_size < 1:
            raise DomainError(f"workers and chunk_size must be at least 1, got {workers}, {chunk_size}")
        self.workers = workers
        self.chunk_size = chunk_size
        self.bounds = BoundsService()

    async def _run_chunks(self, n_paths: int, run: Callable[[List[int]], T]) -> List[Tuple[List[int], T]]:
        """Run path chunks in worker threads, at most `workers` at a time, results in chunk order"""
        semaphore = asyncio.Semaphore(self.workers)
        chunks = [list(range(start, min(start + self.chunk_size, n_paths))) for start in range(0, n_paths, self.chunk_size)]

        async def run_chunk(indices: List[int]) -> Tuple[List[int], T]:
            async with semaphore:
                return indices, await asyncio.to_thread(run, indices)

        return await asyncio.gather(*(run_chunk(c) for c in chunks))

    async def estimate_mean_distance_async(
        self,
        model: ModelSpec,
        coupling: CouplingConfig,
        distances: Sequence[BlockDistance],
        weights: Sequence[float],
        x0: np.ndarray,
        y0: np.ndarray,
    ) -> DecaySeries:
        """
        Sample mean and standard error of d_{f,w}(X_t, Y_t) at the save times

        Per-path values land in a path-indexed array before the reduction, so
        the result is identical for any chunk size or worker count.
        """
        if coupling.n_paths < MIN_PATHS:
            raise DomainError(f"n_paths must be at least {MIN_PATHS}, got {coupling.n_paths}")
        start_time = time.time()
        simulator = CouplingSimulator(model, coupling)
        values = np.empty((coupling.n_paths, len(coupling.save_times)))

        results = await self._run_chunks(
            coupling.n_paths,
            lambda idx: simulator.simulate_paths(distances, weights, x0, y0, idx).distances,
        )
        for indices, chunk_values in results:
            values[indices[0] : indices[-1] + 1] = chunk_values

        mean = values.mean(axis=0)
        stderr = values.std(axis=0, ddof=1) / np.sqrt(coupling.n_paths)
        note = None
        if np.all(values == 0):
            note = "all paths coupled before the first save time"
            logger.warning(note)

        elapsed = time.time() - start_time
        logger.info(f"Ensemble of {coupling.n_paths} paths ({coupling.kind}) finished in {elapsed:.2f}s")
        return DecaySeries(
            times=np.asarray(coupling.save_times, dtype=float),
            mean=mean,
            stderr=stderr,
            n_paths=coupling.n_paths,
            config_echo=coupling.model_dump(),
            note=note,
        )

    def estimate_mean_distance(self, model, coupling, distances, weights, x0, y0) -> DecaySeries:
        return asyncio.run(self.estimate_mean_distance_async(model, coupling, distances, weights, x0, y0))

    def fit_decay_rate(self, series: DecaySeries) -> RateFit:
        """
        Least-squares slope of log(mean) against t; rate = -slope

        Only the first run of points with mean > 5 stderr is used, so the
        floor left by coupled paths does not bend the fit.
        """
        usable = (series.mean > USABLE_SIGMAS * series.stderr) & (series.mean > 0)
        indices = np.flatnonzero(usable)
        if indices.size < 3:
            raise FitError(f"need at least 3 usable points (mean > {USABLE_SIGMAS:g} stderr), got {indices.size}")
        first = int(indices[0])
        last = first
        while last + 1 < usable.size and usable[last + 1]:
            last += 1
        if last - first + 1 < 3:
            raise FitError(f"need at least 3 consecutive usable points, got {last - first + 1}")
        if last < indices[-1]:
            logger.warning(f"Fit window truncated to indices {first}..{last}")

        t = series.times[first : last + 1]
        log_mean = np.log(series.mean[first : last + 1])
        fit = linregress(t, log_mean)
        return RateFit(
            rate=float(-fit.slope),
            intercept=float(fit.intercept),
            r_squared=float(fit.rvalue**2),
            rate_stderr=float(fit.stderr),
            window=(first, last),
            n_points=last - first + 1,
        )

    def check_contraction(self, series: DecaySeries, c: float, rel_tol: float = 1e-9, scale_stderr: bool = True) -> ContractionReport:
        """
        Check e^{c t_k} mean_k <= e^{c t_j} mean_j + 2 (s_k + s_j) for all j < k

        With scale_stderr (default) s_k = e^{c t_k} stderr_k, the standard error
        of the quantity being compared. Without it s_k = stderr_k as reported,
        which is stricter at late times.
        """
        if not c > 0:
            raise DomainError(f"c must be positive, got {c}")
        growth = np.exp(c * series.times)
        a = growth * series.mean
        s = growth * series.stderr if scale_stderr else np.asarray(series.stderr, dtype=float)
        # excess[j, k] for the pair j < k
        excess = a[None, :] - a[:, None] - 2.0 * (s[:, None] + s[None, :]) - rel_tol * np.maximum(a[:, None], a[None, :])
        pairs = np.triu(np.ones_like(excess, dtype=bool), k=1)
        if not np.any(pairs):
            return ContractionReport(passed=True, c=c, worst_violation=0.0)
        masked = np.where(pairs, excess, -np.inf)
        j, k = np.unravel_index(int(np.argmax(masked)), masked.shape)
        worst = float(masked[j, k])
        passed = worst <= 0
        if not passed:
            logger.warning(f"Contraction check failed at t={series.times[j]:g} -> t={series.times[k]:g} by {worst:.3g}")
        return ContractionReport(passed=passed, c=c, worst_violation=worst, worst_pair=(int(j), int(k)))

    def check_floor(self, series: DecaySeries, m_delta: float, c: float) -> FloorReport:
        """Compare the final value of the series with the componentwise floor m(delta)/c"""
        if not c > 0:
            raise DomainError(f"c must be positive, got {c}")
        floor, floor_stderr = float(series.mean[-1]), float(series.stderr[-1])
        threshold = m_delta / c + 3.0 * floor_stderr
        return FloorReport(
            passed=floor <= threshold,
            floor=floor,
            floor_stderr=floor_stderr,
            m_delta=m_delta,
            c=c,
            threshold=threshold,
        )

    async def ergodic_average_stats_async(
        self,
        model: ModelSpec,
        g: Callable[[np.ndarray], np.ndarray],
        t: float,
        n_paths: int,
        coupling: CouplingConfig,
        c: float,
        lip_g: float,
        distances: Sequence[BlockDistance],
        weights: Sequence[float],
        x0: np.ndarray,
        burn_in: Optional[float] = None,
    ) -> ErgodicAverageReport:
        """
        Empirical bias and variance of (1/t) int_0^t g(X_s) ds started at x0

        The stationary reference is the ensemble after a burn-in of 10/c by
        default; it is an empirical stand-in and its standard error is reported.
        """
        if not (t > 0 and c > 0):
            raise DomainError(f"t and c must be positive, got t={t}, c={c}")
        if n_paths < 2:
            raise DomainError(f"n_paths must be at least 2, got {n_paths}")
        burn_in = 10.0 / c if burn_in is None else burn_in
        burn_in_warning = burn_in < 5.0 / c
        if burn_in_warning:
            logger.warning(f"Burn-in {burn_in:g} is shorter than 5/c = {5.0 / c:g}")

        simulator = CouplingSimulator(model, coupling)
        h = coupling.h
        averages = np.empty(n_paths)
        reference = np.empty((n_paths, model.dim))
        for indices, (_, avg) in await self._run_chunks(n_paths, lambda idx: simulator.simulate_marginal(x0, idx, int(round(t / h)), g)):
            averages[indices[0] : indices[-1] + 1] = avg
        for indices, (states, _) in await self._run_chunks(
            n_paths, lambda idx: simulator.simulate_marginal(x0, idx, int(round(burn_in / h)), None, REFERENCE_STREAM)
        ):
            reference[indices[0] : indices[-1] + 1] = states

        g_reference = np.asarray(g(reference), dtype=float)
        reference_mean = float(g_reference.mean())
        reference_stderr = float(g_reference.std(ddof=1) / np.sqrt(n_paths))
        moment, _ = simulator.block_distance(np.asarray(x0, dtype=float)[None, :] - reference, distances, weights)
        moment_d_f = float(moment.mean())

        average_mean = float(averages.mean())
        variance_estimate = float(averages.var(ddof=1))
        bias_estimate = abs(average_mean - reference_mean)
        bounds = self.bounds.ergodic_average_bounds(t, c, lip_g, moment_d_f)
        slack = 3.0 * (reference_stderr + float(averages.std(ddof=1)) / np.sqrt(n_paths))
        within = variance_estimate <= bounds.variance_bound and bias_estimate <= bounds.bias_bound + slack
        return ErgodicAverageReport(
            t=t,
            bias_estimate=bias_estimate,
            variance_estimate=variance_estimate,
            bias_bound=bounds.bias_bound,
            variance_bound=bounds.variance_bound,
            reference_mean=reference_mean,
            reference_stderr=reference_stderr,
            moment_d_f=moment_d_f,
            burn_in=burn_in,
            burn_in_warning=burn_in_warning,
            within_bounds=within,
        )

    def ergodic_average_stats(self, *args, **kwargs) -> ErgodicAverageReport:
        return asyncio.run(self.ergodic_average_stats_async(*args, **kwargs))
