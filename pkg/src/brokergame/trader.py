"""Informed trader: speed-filter variance, coefficient system and feedback rate.

The trader watches the drift-corrected price increments to estimate the
broker's lit-market speed, then trades at a rate that is linear in his signal,
in that estimate, and in his own inventory.  The time-dependent loadings solve
a scalar Riccati equation plus a triangular system of linear ODEs, all
integrated backward from zero terminal conditions on the shared grid.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import AdmissibilityError, ModelInconsistencyError
from .odes import DeterministicTable, TimeGrid, rk4_integrate, solve_scalar_riccati, write_columns_csv
from .params import ModelParams

__all__ = [
    "TraderCoefficients",
    "solve_speed_filter_variance",
    "solve_inventory_coeff",
    "solve_linear_coeffs",
    "solve_trader",
    "trader_control",
    "trader_value",
    "export_trader_csv",
]


@dataclass(frozen=True)
class TraderCoefficients:
    """Solved deterministic coefficients of the informed trader's problem."""

    grid: TimeGrid
    var_nu: DeterministicTable       # conditional variance of the speed estimate
    g2: DeterministicTable           # quadratic inventory coefficient (negative)
    z1: DeterministicTable
    z2: DeterministicTable
    z3: DeterministicTable
    z4: DeterministicTable
    z5: DeterministicTable
    z6: DeterministicTable
    z7: DeterministicTable
    z8: DeterministicTable
    f1: DeterministicTable           # signal loading of the feedback rate
    f2: DeterministicTable           # speed-estimate loading
    f3: DeterministicTable           # inventory loading (negative)

    @property
    def z_tables(self):
        return (self.z1, self.z2, self.z3, self.z4, self.z5, self.z6, self.z7, self.z8)


def _impact_ratio(params: ModelParams) -> float:
    """perm_impact / sigma_price, with the all-degenerate zero case mapped to 0."""
    if params.sigma_price == 0.0:
        return 0.0
    return params.perm_impact / params.sigma_price


def solve_speed_filter_variance(params: ModelParams, grid: TimeGrid) -> DeterministicTable:
    """Forward Riccati for the trader's filter variance, started at 0.

    The initial transient relaxes at rate 2*theta_speed, which is fast on the
    default grid; substepping keeps the table at closed-form accuracy.
    """
    r = _impact_ratio(params)
    return solve_scalar_riccati(
        quad=-r * r,
        lin=-2.0 * params.theta_speed,
        const=params.sigma_speed ** 2,
        boundary=0.0,
        grid=grid,
        direction="forward",
        name="var_nu",
        substeps=4,
    )


def solve_inventory_coeff(params: ModelParams, var_nu: DeterministicTable,
                          grid: TimeGrid) -> DeterministicTable:
    """Backward Riccati for the quadratic inventory coefficient g2 (< 0)."""
    terminal = -(params.beta0_trader + params.beta1_trader * var_nu.at_index(grid.steps))
    # the quadratic term g2^2/fee is stiff near the horizon; substeps keep the
    # backward march stable on coarse grids as well
    g2 = solve_scalar_riccati(
        quad=1.0 / params.fee_informed,
        lin=0.0,
        const=lambda t: -(params.phi0_trader + params.phi1_trader * var_nu(t)),
        boundary=terminal,
        grid=grid,
        direction="backward",
        name="g2",
        substeps=4,
    )
    v = g2.values
    if np.any(v[:-1] >= 0.0) or v[-1] > 0.0:
        raise ModelInconsistencyError(
            "inventory coefficient must be negative before the horizon; "
            f"max value {v.max():.3e}"
        )
    return g2


def solve_linear_coeffs(params: ModelParams, g2: DeterministicTable,
                        var_nu: DeterministicTable, grid: TimeGrid):
    """Backward triangular system for the eight linear/value coefficients.

    Solved jointly as one vector ODE; the right-hand side is triangular in
    the order z1,z2 -> z6,z7,z8 -> z4,z5 -> z3, so stage values stay
    consistent without intermediate interpolation.
    """
    p = params.perm_impact
    b = params.fee_informed
    ka = params.kappa_signal
    th = params.theta_speed
    sa = params.sigma_signal
    rho = params.rho
    ratio = _impact_ratio(params)   # perm_impact / sigma_price

    def rhs(t, z):
        z1, z2, z3, z4, z5, z6, z7, z8 = z
        g = g2(t)
        v = var_nu(t)
        rv = ratio * v
        return np.array([
            ka * z1 - g * z1 / (2.0 * b) - 1.0,
            th * z2 - g * z2 / (2.0 * b) - p,
            -(p * sa * rho * v / params.sigma_price if params.sigma_price else 0.0) * z6
            - sa * sa * z7 - rv * rv * z8,
            ka * z4 - g * z1 / (2.0 * b),
            th * z5 - g * z2 / (2.0 * b),
            (ka + th) * z6 - z1 * z2 / (2.0 * b),
            2.0 * ka * z7 - z1 * z1 / (4.0 * b),
            2.0 * th * z8 - z2 * z2 / (4.0 * b),
        ])

    sol = rk4_integrate(rhs, np.zeros(8), grid, direction="backward", name="z")
    tables = tuple(
        DeterministicTable(f"z{i + 1}", grid, sol.values[:, i]) for i in range(8)
    )
    z1v, z2v = tables[0].values, tables[1].values
    if np.any(z1v < -1e-12) or np.any(z2v < -1e-12):
        raise ModelInconsistencyError("z1 and z2 must be non-negative on the grid")
    return tables


def solve_trader(params: ModelParams, grid: TimeGrid,
                 strict_admissibility: bool = True) -> TraderCoefficients:
    """Solve the full trader system and derive the feedback loadings f1, f2, f3.

    The broker's matrix Riccati is only well-posed when 1 + fee_informed*f3 > 0
    on the whole grid; by default a violation is a hard error
    (``strict_admissibility=False`` downgrades it to a warning).
    """
    var_nu = solve_speed_filter_variance(params, grid)
    g2 = solve_inventory_coeff(params, var_nu, grid)
    z = solve_linear_coeffs(params, g2, var_nu, grid)
    b = params.fee_informed
    f1 = DeterministicTable("f1", grid, z[0].values / (2.0 * b))
    f2 = DeterministicTable("f2", grid, z[1].values / (2.0 * b))
    f3 = DeterministicTable("f3", grid, g2.values / b)
    margin = 1.0 + b * f3.values
    if np.any(margin <= 0.0):
        msg = (f"admissibility violated: min(1 + fee_informed*f3) = {margin.min():.3e} <= 0; "
               "reduce fees or terminal penalties")
        if strict_admissibility:
            raise AdmissibilityError(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return TraderCoefficients(grid, var_nu, g2, *z, f1, f2, f3)


def trader_control(t: float, alpha: float, nu_hat: float, q: float,
                   coeffs: TraderCoefficients) -> float:
    """Feedback trading rate at time t: linear in signal, estimate and inventory."""
    return coeffs.f1(t) * alpha + coeffs.f2(t) * nu_hat + coeffs.f3(t) * q


def trader_value(coeffs: TraderCoefficients, t: float, price: float, cash: float,
                 q: float, alpha: float, nu_hat: float) -> float:
    """Value function of the trader's problem at the given state."""
    g0 = (coeffs.z3(t) + coeffs.z4(t) * alpha + coeffs.z5(t) * nu_hat
          + coeffs.z6(t) * alpha * nu_hat + coeffs.z7(t) * alpha ** 2
          + coeffs.z8(t) * nu_hat ** 2)
    g1 = coeffs.z1(t) * alpha + coeffs.z2(t) * nu_hat
    return cash + q * price + g0 + q * g1 + q * q * coeffs.g2(t)


def export_trader_csv(coeffs: TraderCoefficients, path_or_file) -> None:
    """All trader tables in one CSV (t, var_nu, g2, z1..z8, f1..f3)."""
    header = ["t", "var_nu", "g2"] + [f"z{i}" for i in range(1, 9)] + ["f1", "f2", "f3"]
    cols = [coeffs.grid.times, coeffs.var_nu.values, coeffs.g2.values]
    cols += [z.values for z in coeffs.z_tables]
    cols += [coeffs.f1.values, coeffs.f2.values, coeffs.f3.values]
    write_columns_csv(path_or_file, header, cols)
