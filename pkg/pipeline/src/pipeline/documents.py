"""Conversion between numerical objects and the JSON/CSV documents of the CLI."""

from __future__ import annotations

import csv
import io
import logging
import math
from collections.abc import Iterable, Sequence
from pathlib import Path

import numpy as np
from daekron.schemas import (
    CoefficientBlock,
    ComparisonRow,
    CooMatrix,
    DenseMatrix,
    EnergyDocument,
    QuadraticTriplets,
    ReducedDocument,
    RunDocument,
    SweepSummary,
    SystemDimensions,
    SystemDocument,
    SystemMetadata,
)
from energy.dae_reduction import ReducedOdeSystem, StokesDaeSystem
from energy.feedback_sim import ClosedLoopRun
from energy.poly_algebra import EnergyPolynomial

logger = logging.getLogger(__name__)

ROW_COLUMNS = ("degree", "value", "integral", "abs_err", "rel_err_pct")
SWEEP_COLUMNS = ("degree", "runs", "unstable", "average_rel_err_pct")
DIVERGED_MARK = "divergence"


def _dense(matrix: np.ndarray) -> DenseMatrix:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    return DenseMatrix(rows=matrix.shape[0], cols=matrix.shape[1], data=matrix.tolist())


def _block_array(block: DenseMatrix | CooMatrix) -> np.ndarray:
    if isinstance(block, DenseMatrix):
        return np.array(block.data, dtype=float).reshape(block.rows, block.cols)
    out = np.zeros((block.rows, block.cols))
    for i, j, value in block.entries:
        out[i, j] += value
    return out


def _quadratic_triplets(N: np.ndarray, n: int) -> QuadraticTriplets:
    tensor = np.asarray(N, dtype=float).reshape(n, n, n)
    entries = [(int(i), int(j), int(k), float(tensor[i, j, k])) for i, j, k in zip(*np.nonzero(tensor), strict=True)]
    return QuadraticTriplets(n=n, entries=entries)


def _quadratic_matrix(triplets: QuadraticTriplets) -> np.ndarray:
    """``N`` from triplets, symmetrized in its two Kronecker slots."""
    n = triplets.n
    tensor = np.zeros((n, n, n))
    for i, j, k, value in triplets.entries:
        tensor[i, j, k] += value
    tensor = 0.5 * (tensor + tensor.transpose(0, 2, 1))
    return tensor.reshape(n, n * n)


def system_to_document(
    sys: StokesDaeSystem,
    eta: float | None = None,
    initial_state: Sequence[float] | None = None,
) -> SystemDocument:
    return SystemDocument(
        dimensions=SystemDimensions(n1=sys.n1, n2=sys.n2, m=sys.m, p=sys.p),
        matrices={
            "E11": _dense(sys.E11),
            "A11": _dense(sys.A11),
            "A12": _dense(sys.A12),
            "B1": _dense(sys.B1),
            "B2": _dense(sys.B2),
            "C1": _dense(sys.C1),
        },
        N=_quadratic_triplets(sys.N, sys.n1),
        metadata=SystemMetadata(
            name=sys.name,
            eta=eta,
            initial_state=None if initial_state is None else [float(v) for v in initial_state],
        ),
    )


def document_to_system(doc: SystemDocument) -> StokesDaeSystem:
    blocks = {name: _block_array(block) for name, block in doc.matrices.items()}
    return StokesDaeSystem(
        E11=blocks["E11"],
        A11=blocks["A11"],
        A12=blocks["A12"],
        N=_quadratic_matrix(doc.N),
        B1=blocks["B1"],
        B2=blocks["B2"],
        C1=blocks["C1"],
        name=doc.metadata.name,
    )


def _write(text: str, path: str | Path) -> None:
    Path(path).write_text(text, encoding="utf-8")
    logger.info("Wrote %s", path)


def load_system(path: str | Path) -> tuple[StokesDaeSystem, SystemMetadata]:
    doc = SystemDocument.model_validate_json(Path(path).read_text(encoding="utf-8"))
    return document_to_system(doc), doc.metadata


def dump_system(
    sys: StokesDaeSystem,
    path: str | Path,
    eta: float | None = None,
    initial_state: Sequence[float] | None = None,
) -> None:
    _write(system_to_document(sys, eta, initial_state).model_dump_json(indent=2), path)


def reduced_to_document(reduced: ReducedOdeSystem) -> ReducedDocument:
    pair = reduced.projectors
    matrices = {
        "E_d": reduced.E_d,
        "A_d": reduced.A_d,
        "N_d": reduced.N_d,
        "B_const": reduced.B_const,
        "G_lin": reduced.G_lin,
        "s_d": reduced.s_d,
        "s": reduced.s,
        "C_d": reduced.C_d,
        "D_d": reduced.D_d,
        "Pi": pair.Pi,
        "Theta_l": pair.Theta_l,
        "Theta_r": pair.Theta_r,
    }
    return ReducedDocument(
        source_name=reduced.name,
        n=reduced.n,
        m=reduced.m,
        matrices={name: _dense(value) for name, value in matrices.items()},
        diagnostics={key: float(value) for key, value in reduced.diagnostics.items()},
    )


def dump_reduced(reduced: ReducedOdeSystem, path: str | Path) -> None:
    _write(reduced_to_document(reduced).model_dump_json(indent=2), path)


def energy_to_document(poly: EnergyPolynomial) -> EnergyDocument:
    return EnergyDocument(
        kind=poly.kind,
        method=poly.method,
        eta=poly.eta,
        degree=poly.degree,
        n=poly.n,
        coefficients=[CoefficientBlock(order=k, data=np.asarray(c).tolist()) for k, c in sorted(poly.coeffs.items())],
        diagnostics={key: float(value) for key, value in poly.diagnostics.items()},
    )


def document_to_energy(doc: EnergyDocument) -> EnergyPolynomial:
    return EnergyPolynomial(
        kind=doc.kind,
        eta=doc.eta,
        n=doc.n,
        coeffs={block.order: np.array(block.data, dtype=float) for block in doc.coefficients},
        method=doc.method,
        diagnostics=dict(doc.diagnostics),
    )


def load_energy(path: str | Path) -> EnergyPolynomial:
    return document_to_energy(EnergyDocument.model_validate_json(Path(path).read_text(encoding="utf-8")))


def dump_energy(poly: EnergyPolynomial, path: str | Path) -> None:
    _write(energy_to_document(poly).model_dump_json(indent=2), path)


def run_to_document(run: ClosedLoopRun, degree: int, eta: float, horizon: float) -> RunDocument:
    def finite(value: float | None) -> float | None:
        return value if value is not None and math.isfinite(value) else None

    return RunDocument(
        degree=degree,
        eta=eta,
        horizon=horizon,
        initial_state=run.x_d[:, 0].tolist(),
        cost=None if run.diverged else finite(run.total_cost),
        diverged=run.diverged,
        terminated_early=run.terminated_early,
        final_time=run.final_time,
        final_norm=finite(run.final_norm),
        max_constraint_residual=run.max_constraint_residual,
        max_momentum_residual=run.max_momentum_residual,
        t=run.t.tolist(),
        x_d=run.x_d.T.tolist() if not run.diverged else [],
        u=run.u.T.tolist() if not run.diverged else [],
    )


def dump_run(doc: RunDocument, path: str | Path) -> None:
    _write(doc.model_dump_json(indent=2), path)


def format_number(value: float | int | None, digits: int) -> str:
    if value is None:
        return ""
    if isinstance(value, int):
        return str(value)
    return f"{value:.{digits}g}"


def _csv_text(header: Sequence[str], rows: Iterable[Sequence[str]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def comparison_csv(rows: Sequence[ComparisonRow], digits: int = 6) -> str:
    """CSV text with one line per degree; diverged runs carry ``divergence`` in the integral column."""
    lines = []
    for row in rows:
        if row.diverged:
            lines.append([str(row.degree), format_number(row.value, digits), DIVERGED_MARK, "", ""])
            continue
        lines.append(
            [
                str(row.degree),
                format_number(row.value, digits),
                format_number(row.integral, digits),
                format_number(row.abs_err, digits),
                format_number(row.rel_err_pct, digits),
            ]
        )
    return _csv_text(ROW_COLUMNS, lines)


def sweep_csv(summary: SweepSummary, digits: int = 6) -> str:
    lines = [
        [str(d.degree), str(d.runs), str(d.unstable), format_number(d.average_rel_err_pct, digits)]
        for d in summary.degrees
    ]
    return _csv_text(SWEEP_COLUMNS, lines)


def write_rows_csv(text: str, path: str | Path | None = None) -> str:
    """Write CSV text to ``path``, or return it for stdout when no path is given."""
    if path:
        _write(text, path)
    return text
