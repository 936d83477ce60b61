import logging
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from models.distance import DistanceFunction, LocalDistanceFunction
from models.simulation import CouplingConfig, ModelSpec, NoiseIncrement, PairState, PathRecord
from services.distance_builder import DistanceBuilder
from services.errors import DomainError, SimulationAbort

logger = logging.getLogger(__name__)

BlockDistance = Union[DistanceFunction, LocalDistanceFunction, Callable[[np.ndarray], np.ndarray]]

# Stream tags for runs that simulate a single copy of the process
MARGINAL_STREAM = 1
REFERENCE_STREAM = 2


def ramp_lambda(delta: float, s: Union[float, np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    """
    Reflection weight lambda and synchronous weight pi with lambda^2 + pi^2 = 1

    lambda is 0 for s <= delta/2, 1 for s >= delta and linear in between.
    """
    if not delta > 0:
        raise DomainError(f"delta must be positive, got {delta}")
    lam = np.clip((np.asarray(s, dtype=float) - 0.5 * delta) / (0.5 * delta), 0.0, 1.0)
    return lam, np.sqrt(1.0 - lam * lam)


def reflect(dB: np.ndarray, e: np.ndarray) -> np.ndarray:
    """(I - 2 e e^T) dB row by row"""
    return dB - 2.0 * np.sum(dB * e, axis=1, keepdims=True) * e


def path_generator(seed: int, path_index: int, stream: Optional[int] = None) -> np.random.Generator:
    entropy = [seed, path_index] if stream is None else [seed, path_index, stream]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


class NoiseSource:
    """
    Per-path Philox streams drawn in fixed blocks of steps

    Each path owns its generator, so the increments of a path do not depend
    on which other paths share its batch.
    """

    def __init__(self, seed: int, path_indices: Sequence[int], width: int, h: float, block: int, uniforms: bool = False, stream: Optional[int] = None):
        self.generators = [path_generator(seed, idx, stream) for idx in path_indices]
        self.width = width
        self.scale = np.sqrt(h)
        self.block = block
        self.uniforms = uniforms
        self._normals = None
        self._uniform = None
        self._cursor = block

    def next(self) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        if self._cursor == self.block:
            normals, uniform = [], []
            for gen in self.generators:
                normals.append(gen.standard_normal((self.block, self.width)))
                if self.uniforms:
                    uniform.append(gen.random(self.block))
            self._normals = np.stack(normals, axis=1) * self.scale  # (block, paths, width)
            self._uniform = np.stack(uniform, axis=1) if self.uniforms else None
            self._cursor = 0
        k = self._cursor
        self._cursor += 1
        return self._normals[k], (self._uniform[k] if self._uniform is not None else None)


class CouplingSimulator:
    """Euler-Maruyama simulation of coupled pairs under synchronous, reflection or componentwise coupling"""

    def __init__(self, model: ModelSpec, config: CouplingConfig, builder: Optional[DistanceBuilder] = None):
        self.model = model
        self.config = config
        self.sigma = model.sigma_matrix()
        self.sigma_inv = np.linalg.inv(self.sigma)
        self.builder = builder or DistanceBuilder()

    def noise_width(self) -> int:
        # componentwise consumes B and B~ for every block
        return 2 * self.model.dim if self.config.kind == "componentwise" else self.model.dim

    def step_pair(self, state: PairState, noise: NoiseIncrement) -> PairState:
        """One Euler-Maruyama step of the coupled pair"""
        model, cfg, h = self.model, self.config, self.config.h
        x, y = state.x, state.y
        bx = model.drift(x)
        by = model.drift(y)
        if not (np.all(np.isfinite(bx)) and np.all(np.isfinite(by))):
            bad = ~(np.all(np.isfinite(bx), axis=1) & np.all(np.isfinite(by), axis=1))
            raise SimulationAbort(
                f"non-finite drift at t={state.t:.6g}",
                t=state.t,
                x=x[bad],
                y=y[bad],
                path_indices=[p for p, b in zip(state.path_indices, bad) if b],
            )

        merged = state.merged.copy()
        if cfg.kind == "componentwise":
            if noise.dB_tilde is None:
                dB, dB_tilde = noise.dB[:, : model.dim], noise.dB[:, model.dim :]
            else:
                dB, dB_tilde = noise.dB, noise.dB_tilde
            u = (x - y) @ self.sigma_inv.T
            noise_x = np.empty_like(dB)
            noise_y = np.empty_like(dB)
            reflecting = []
            for sl in model.block_slices:
                r = np.linalg.norm(u[:, sl], axis=1, keepdims=True)
                lam, pi = ramp_lambda(cfg.delta, r)
                # e is irrelevant where r = 0 since lambda vanishes there
                e = np.divide(u[:, sl], r, out=np.zeros_like(u[:, sl]), where=r > 0)
                noise_x[:, sl] = lam * dB[:, sl] + pi * dB_tilde[:, sl]
                noise_y[:, sl] = lam * reflect(dB[:, sl], e) + pi * dB_tilde[:, sl]
                reflecting.append(lam[:, 0] > 0)
            x_new = x + bx * h + noise_x @ self.sigma.T
            y_new = y + by * h + noise_y @ self.sigma.T

            # a reflected block whose difference crosses zero within the step has hit
            # the synchronous band; it continues from Y^i = X^i
            u_new = (x_new - y_new) @ self.sigma_inv.T
            for i, sl in enumerate(model.block_slices):
                crossed = reflecting[i] & (np.sum(u_new[:, sl] * u[:, sl], axis=1) <= 0)
                y_new[crossed, sl] = x_new[crossed, sl]
            return PairState(x=x_new, y=y_new, merged=merged, t=state.t + h, path_indices=state.path_indices)

        dB = noise.dB
        x_new = x + bx * h + dB @ self.sigma.T
        if cfg.kind == "synchronous":
            y_new = y + by * h + dB @ self.sigma.T
            return PairState(x=x_new, y=y_new, merged=merged, t=state.t + h, path_indices=state.path_indices)

        u = (x - y) @ self.sigma_inv.T
        r = np.linalg.norm(u, axis=1, keepdims=True)
        active = ~merged[:, :1] & (r > 0)
        e = np.divide(u, r, out=np.zeros_like(u), where=active)
        y_new = y + by * h + np.where(active, reflect(dB, e), dB) @ self.sigma.T

        u_new = (x_new - y_new) @ self.sigma_inv.T
        r_new = np.linalg.norm(u_new, axis=1)
        # a difference that turned past zero met within the step
        meet = (r_new <= cfg.eps_merge) | (active[:, 0] & (np.sum(u_new * u, axis=1) <= 0))
        if cfg.bridge_correction and noise.uniform is not None:
            # the difference moves with noise 2 dW along e, so a bridge from r to r_new hits 0 w.p. exp(-r r_new / (2h))
            meet |= noise.uniform < np.exp(-r[:, 0] * r_new / (2.0 * h))
        newly = meet & ~merged[:, 0]
        merged[newly, :] = True
        y_new = np.where(merged[:, :1], x_new, y_new)
        return PairState(x=x_new, y=y_new, merged=merged, t=state.t + h, path_indices=state.path_indices)

    def block_distance(self, z: np.ndarray, distances: Sequence[BlockDistance], weights: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
        """d_{f,w} = sum_i w_i f_i(r_i) and the raw block radii r_i for differences z of shape (paths, d)"""
        radii = self.model.block_radii(z, self.sigma_inv)
        total = np.zeros(z.shape[0])
        for i, (dist, w) in enumerate(zip(distances, weights)):
            total += w * self._evaluate(dist, radii[:, i])
        return total, radii

    def _evaluate(self, dist: BlockDistance, r: np.ndarray) -> np.ndarray:
        if isinstance(dist, DistanceFunction):
            return self.builder.eval_f(dist, r)
        if isinstance(dist, LocalDistanceFunction):
            return self.builder.eval_local_f(dist, r)
        return np.asarray(dist(r), dtype=float)

    def simulate_paths(
        self,
        distances: Sequence[BlockDistance],
        weights: Sequence[float],
        x0: np.ndarray,
        y0: np.ndarray,
        path_indices: Sequence[int],
    ) -> PathRecord:
        """
        Simulate a batch of coupled paths to the horizon

        Records d_{f,w}(X_t, Y_t) and the block radii at every save time; the
        result for a path depends only on (seed, path index).
        """
        model, cfg = self.model, self.config
        if len(distances) != model.n_blocks or len(weights) != model.n_blocks:
            raise DomainError(f"need one distance and one weight per block ({model.n_blocks}), got {len(distances)} and {len(weights)}")
        P = len(path_indices)
        x = np.tile(np.asarray(x0, dtype=float).reshape(1, -1), (P, 1))
        y = np.tile(np.asarray(y0, dtype=float).reshape(1, -1), (P, 1))
        if x.shape[1] != model.dim or y.shape[1] != model.dim:
            raise DomainError(f"initial states must have dimension {model.dim}")
        state = PairState(x=x, y=y, merged=np.zeros((P, model.n_blocks), dtype=bool), path_indices=list(path_indices))

        save_steps = cfg.save_steps
        n_saves = save_steps.size
        values = np.empty((P, n_saves))
        radii = np.empty((P, n_saves, model.n_blocks))
        merge_times = np.full(P, np.nan)
        noise = NoiseSource(cfg.seed, path_indices, self.noise_width(), cfg.h, cfg.noise_block, uniforms=cfg.bridge_correction)

        save_at = {int(k): j for j, k in enumerate(save_steps)}
        for step in range(cfg.n_steps + 1):
            if step in save_at:
                j = save_at[step]
                values[:, j], radii[:, j, :] = self.block_distance(state.x - state.y, distances, weights)
            if step == cfg.n_steps:
                break
            dB, uniform = noise.next()
            before = state.merged[:, 0].copy()
            state = self.step_pair(state, NoiseIncrement(dB=dB, uniform=uniform))
            merge_times[state.merged[:, 0] & ~before] = state.t

        return PathRecord(
            path_indices=list(path_indices),
            times=np.asarray(cfg.save_times, dtype=float),
            distances=values,
            radii=radii,
            merge_times=merge_times,
            x_final=state.x,
            y_final=state.y,
        )

    def simulate_pair(
        self,
        distances: Sequence[BlockDistance],
        weights: Sequence[float],
        x0: np.ndarray,
        y0: np.ndarray,
        path_index: int,
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Values of d_{f,w} at the save times and the raw radii for a single path"""
        record = self.simulate_paths(distances, weights, x0, y0, [path_index])
        return record.distances[0], record.radii[0]

    def simulate_marginal(
        self,
        x0: np.ndarray,
        path_indices: Sequence[int],
        n_steps: int,
        g: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        stream: int = MARGINAL_STREAM,
    ) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        """
        Simulate one copy of the process for n_steps

        Returns:
            final states (paths, d) and, when g is given, the time averages
            (1/t) sum_k g(X_k) h over the run
        """
        model, cfg = self.model, self.config
        P = len(path_indices)
        x = np.tile(np.asarray(x0, dtype=float).reshape(1, -1), (P, 1))
        noise = NoiseSource(cfg.seed, path_indices, model.dim, cfg.h, cfg.noise_block, stream=stream)
        total = np.zeros(P) if g is not None else None
        for _ in range(n_steps):
            if g is not None:
                total += np.asarray(g(x), dtype=float)
            b = model.drift(x)
            if not np.all(np.isfinite(b)):
                raise SimulationAbort("non-finite drift in marginal run", t=float("nan"), x=x, y=x, path_indices=path_indices)
            dB, _ = noise.next()
            x = x + b * cfg.h + dB @ self.sigma.T
        averages = total / max(n_steps, 1) if g is not None else None
        return x, averages
