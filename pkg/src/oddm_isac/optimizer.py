"""Genetic search for CRLB-minimizing sensing combiners and beam-scan regeneration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .beamforming import HybridBeamformer, steering_combiner
from .crlb import analytic_angle_fim, fitness
from .scenario import ScenarioConfig, rng_stream


@dataclass(frozen=True)
class GaConfig:
    population_size: int = 64
    elite_rate: float = 0.4
    generations: int = 100
    mutation_sigma_deg: float = 1.0
    init_spread_deg: float = 20.0
    # stop after this many generations without a relative improvement above stall_tolerance
    stall_tolerance: float = 1e-9
    stall_generations: int = 100
    mutation: bool = True

    def __post_init__(self):
        if not 0 < self.elite_rate < 1:
            raise ValueError("elite_rate must lie in (0, 1)")
        if self.num_elites < 2:
            raise ValueError("elite_rate * population_size must be at least 2")
        if self.generations < 1:
            raise ValueError("generations must be positive")

    @property
    def num_elites(self) -> int:
        return int(round(self.elite_rate * self.population_size))


@dataclass(frozen=True)
class CombinerIndividual:
    gene_angles: np.ndarray  # (N_RF, 2): theta, phi in degrees
    matrix: np.ndarray
    fitness: float


@dataclass(frozen=True)
class GaResult:
    combiner: HybridBeamformer
    best: CombinerIndividual
    history: np.ndarray  # best fitness per generation, generation 0 = initial population
    median_history: np.ndarray
    theta_bar: float
    phi_bar: float

    def generations_to_converge(self, rel: float = 0.01) -> int:
        """First generation whose best fitness is within ``rel`` of the final value."""
        final = self.history[-1]
        return int(np.argmax(self.history <= final * (1 + rel)))


class CombinerFitness:
    """CRLB(theta) + CRLB(phi) at a fixed look direction and precoder."""

    def __init__(self, theta_bar: float, phi_bar: float, precoder: np.ndarray, cfg: ScenarioConfig,
                 alpha: complex | None = None, noise_variance: float | None = None):
        self.theta_bar, self.phi_bar = theta_bar, phi_bar
        self.F = precoder
        self.cfg = cfg
        self.alpha = cfg.path_coeff if alpha is None else alpha
        self.noise_variance = noise_variance

    def matrix(self, genes: np.ndarray) -> np.ndarray:
        return steering_combiner(genes, self.cfg).effective

    def __call__(self, genes: np.ndarray) -> float:
        try:
            rep = analytic_angle_fim(self.theta_bar, self.phi_bar, self.alpha, self.F,
                                     self.matrix(genes), self.cfg, self.noise_variance)
        except np.linalg.LinAlgError:
            return float("inf")
        return float(fitness(rep))


def random_genes(theta_bar: float, phi_bar: float, n_rf: int, spread: float,
                 rng: np.random.Generator) -> np.ndarray:
    return np.column_stack([
        theta_bar + rng.uniform(-spread, spread, n_rf),
        phi_bar + rng.uniform(-spread, spread, n_rf),
    ])


def _individual(genes: np.ndarray, fit: CombinerFitness) -> CombinerIndividual:
    return CombinerIndividual(genes, fit.matrix(genes), fit(genes))


def optimize_combiner(theta_bar: float, phi_bar: float, precoder: np.ndarray, cfg: ScenarioConfig,
                      ga: GaConfig = GaConfig(), seed: int | None = None,
                      label: str = "ga") -> GaResult:
    """Elitist GA over gene angles.

    Each generation keeps the best ``elite_rate`` fraction unchanged and fills
    the rest with single-point crossovers of two random elites, followed by
    Gaussian angle mutation (unless ``ga.mutation`` is off). Random draws for
    child i of generation g come from the stream ``(seed, label/g/i)``.
    """
    seed = cfg.rng_seed if seed is None else seed
    fit = CombinerFitness(theta_bar, phi_bar, precoder, cfg)
    n_rf = cfg.num_rf_chains_rx
    P, n_elite = ga.population_size, ga.num_elites

    def init_population(tag: str):
        return [_individual(random_genes(theta_bar, phi_bar, n_rf, ga.init_spread_deg,
                                         rng_stream(seed, f"{label}/{tag}/{i}")), fit)
                for i in range(P)]

    pop = init_population("init")
    if not any(np.isfinite(ind.fitness) for ind in pop):
        pop = init_population("reseed")
        if not any(np.isfinite(ind.fitness) for ind in pop):
            raise RuntimeError("every initial combiner has a singular W^H W")

    pop.sort(key=lambda ind: ind.fitness)
    history = [pop[0].fitness]
    medians = [float(np.median([ind.fitness for ind in pop]))]
    stall = 0
    for g in range(1, ga.generations + 1):
        elites = pop[:n_elite]
        children = []
        for i in range(P - n_elite):
            rng = rng_stream(seed, f"{label}/{g}/{i}")
            pa, pb = rng.choice(n_elite, size=2, replace=False)
            cut = int(rng.integers(1, n_rf)) if n_rf > 1 else 0
            genes = np.vstack([elites[pa].gene_angles[:cut], elites[pb].gene_angles[cut:]])
            if ga.mutation:
                genes = genes + rng.normal(0.0, ga.mutation_sigma_deg, genes.shape)
            children.append(_individual(genes, fit))
        # stable sort keeps elites ahead of equally fit children
        pop = sorted(elites + children, key=lambda ind: ind.fitness)
        prev = history[-1]
        history.append(pop[0].fitness)
        medians.append(float(np.median([ind.fitness for ind in pop])))
        improved = prev - pop[0].fitness > ga.stall_tolerance * abs(prev)
        stall = 0 if improved else stall + 1
        if stall >= ga.stall_generations:
            break

    best = pop[0]
    return GaResult(steering_combiner(best.gene_angles, cfg), best, np.array(history),
                    np.array(medians), theta_bar, phi_bar)


def regenerate_for_scan(base: GaResult, theta_scan: float, phi_scan: float,
                        cfg: ScenarioConfig) -> HybridBeamformer:
    """Shift every gene by the scan offset and rebuild the steering combiner."""
    genes = base.best.gene_angles + np.array([theta_scan - base.theta_bar, phi_scan - base.phi_bar])
    if np.any(np.abs(genes[:, 0]) > 90) or np.any((genes[:, 1] < 0) | (genes[:, 1] > 180)):
        raise ValueError("shifted gene angles leave theta in [-90, 90], phi in [0, 180]")
    return steering_combiner(genes, cfg)


def random_combiner_fitness(theta_bar: float, phi_bar: float, precoder: np.ndarray,
                            cfg: ScenarioConfig, count: int = 100, spread: float | None = None,
                            seed: int = 0) -> np.ndarray:
    """Fitness of ``count`` random beam-steered combiners.

    Gene angles are uniform over the whole field of view (theta in [-90, 90],
    phi in [0, 180]) when ``spread`` is None, else within +-spread of the look
    direction.
    """
    fit = CombinerFitness(theta_bar, phi_bar, precoder, cfg)
    n_rf = cfg.num_rf_chains_rx
    out = []
    for i in range(count):
        rng = rng_stream(seed, f"random-combiner/{i}")
        if spread is None:
            genes = np.column_stack([rng.uniform(-90, 90, n_rf), rng.uniform(0, 180, n_rf)])
        else:
            genes = random_genes(theta_bar, phi_bar, n_rf, spread, rng)
        out.append(fit(genes))
    return np.array(out)
