"""Built-in benchmark systems in document form."""

from __future__ import annotations

from dataclasses import dataclass

from energy.benchmarks import (
    FISHER_CASE1,
    FISHER_CASE1_INITIAL_STATE,
    FISHER_CASE2,
    SCALAR_EXAMPLE_ETA,
    FisherConfig,
    build_fisher,
    build_fisher_distributed,
    build_scalar_example,
)
from energy.dae_reduction import StokesDaeSystem

BENCHMARK_NAMES = ("scalar", "fisher-case1", "fisher-case2", "fisher-distributed")
X0_PRESETS = {"fisher-case1": FISHER_CASE1_INITIAL_STATE}


@dataclass(frozen=True)
class Benchmark:
    system: StokesDaeSystem
    eta: float
    initial_state: tuple[float, ...] | None = None


def run_benchmark_stage(name: str, ne: int | None = None) -> Benchmark:
    if name == "scalar":
        return Benchmark(build_scalar_example(), SCALAR_EXAMPLE_ETA, (1.0,))
    if name not in BENCHMARK_NAMES:
        raise ValueError(f"unknown benchmark '{name}', expected one of {', '.join(BENCHMARK_NAMES)}")
    cfg = FISHER_CASE2 if name == "fisher-case2" else FISHER_CASE1
    if ne is not None:
        cfg = FisherConfig(**{**cfg.model_dump(), "ne": ne})
    if name == "fisher-distributed":
        return Benchmark(build_fisher_distributed(cfg), cfg.eta)
    initial = FISHER_CASE1_INITIAL_STATE if name == "fisher-case1" and cfg.ne == FISHER_CASE1.ne else None
    return Benchmark(build_fisher(cfg), cfg.eta, initial)
