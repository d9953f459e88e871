"""Fixed-step deterministic ODE machinery on a shared uniform time grid.

Everything downstream (coefficient systems, filter variances, the matrix
Riccati solve) runs on one uniform grid so that deterministic tables line up
exactly with the Monte Carlo grid.  The integrator is classical fourth-order
Runge-Kutta with a fixed step; tabulated inputs are evaluated at stage
midpoints by linear interpolation.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .errors import IntegrationBlowupError, TableRangeError, ValidationError

__all__ = [
    "TimeGrid",
    "DeterministicTable",
    "rk4_integrate",
    "solve_scalar_riccati",
    "riccati_constant_solution",
    "write_columns_csv",
]

# full round-trip precision for float64
FLOAT_FMT = "%.17g"


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition of [0, horizon] into `steps` intervals."""

    horizon: float = 1.0
    steps: int = 1000

    def __post_init__(self):
        if not (self.horizon > 0.0 and np.isfinite(self.horizon)):
            raise ValidationError(f"horizon must be positive and finite, got {self.horizon}")
        if int(self.steps) != self.steps or self.steps < 2:
            raise ValidationError(f"steps must be an integer >= 2, got {self.steps}")

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def times(self) -> np.ndarray:
        # linspace pins the last node at `horizon` exactly
        return np.linspace(0.0, self.horizon, self.steps + 1)


class DeterministicTable:
    """A deterministic function of time stored at the grid nodes.

    Values may be scalars or small dense arrays (one entry per node).
    Evaluation between nodes is linear interpolation; evaluation outside
    [0, horizon] raises ``TableRangeError``.
    """

    __slots__ = ("name", "grid", "values")

    def __init__(self, name: str, grid: TimeGrid, values):
        values = np.asarray(values, dtype=float)
        if values.shape[0] != grid.steps + 1:
            raise ValidationError(
                f"table '{name}': expected {grid.steps + 1} rows, got {values.shape[0]}"
            )
        values.setflags(write=False)
        self.name = name
        self.grid = grid
        self.values = values

    def __call__(self, t):
        g = self.grid
        t_arr = np.asarray(t, dtype=float)
        tol = 1e-9 * max(1.0, g.horizon)
        if np.any(t_arr < -tol) or np.any(t_arr > g.horizon + tol):
            raise TableRangeError(
                f"table '{self.name}' evaluated at t={t!r} outside [0, {g.horizon}]"
            )
        x = np.clip(t_arr / g.dt, 0.0, float(g.steps))
        k0 = np.minimum(np.floor(x).astype(int), g.steps - 1)
        w = x - k0
        if self.values.ndim > 1:
            w = np.reshape(w, np.shape(w) + (1,) * (self.values.ndim - 1))
        out = (1.0 - w) * self.values[k0] + w * self.values[k0 + 1]
        if np.isscalar(t) or np.ndim(t) == 0:
            return out if self.values.ndim > 1 else float(out)
        return out

    def at_index(self, k: int):
        return self.values[k]

    def __len__(self):
        return self.values.shape[0]

    def __repr__(self):
        return f"DeterministicTable({self.name!r}, steps={self.grid.steps}, shape={self.values.shape})"

    def to_csv(self, path_or_file) -> None:
        """Dump the table as `t,value...` rows at full double precision."""
        flat = self.values.reshape(self.values.shape[0], -1)
        header = ["t"] + (
            ["value"] if flat.shape[1] == 1 else [f"value{i}" for i in range(flat.shape[1])]
        )
        write_columns_csv(path_or_file, header, [self.grid.times] + [flat[:, j] for j in range(flat.shape[1])])


def write_columns_csv(path_or_file, header, columns) -> None:
    """Write named columns at 17 significant digits (byte-stable round trips)."""
    cols = [np.asarray(c, dtype=float) for c in columns]
    n = len(cols[0])
    if any(len(c) != n for c in cols):
        raise ValidationError("csv columns must have equal length")
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for i in range(n):
        buf.write(",".join(FLOAT_FMT % c[i] for c in cols) + "\n")
    data = buf.getvalue()
    if hasattr(path_or_file, "write"):
        path_or_file.write(data)
    else:
        with open(path_or_file, "w", encoding="ascii", newline="") as fh:
            fh.write(data)


def _rk4_step(rhs, t, y, h):
    k1 = rhs(t, y)
    k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = rhs(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_integrate(rhs, boundary_value, grid: TimeGrid, direction: str = "forward",
                  project=None, name: str = "rk4", substeps: int = 1) -> DeterministicTable:
    """Integrate y' = rhs(t, y) over the grid with classical RK4.

    direction="forward" starts from ``boundary_value`` at t=0; "backward"
    stores ``boundary_value`` at t=horizon and marches toward t=0 (rhs is the
    ordinary time derivative in both cases; the step is just negated).

    ``project`` is an optional map applied to the state after every grid step
    (used e.g. to re-symmetrise matrix solutions).  ``substeps`` splits each
    grid interval into that many equal RK4 steps; values are still stored at
    the grid nodes only, so tables stay aligned with the simulation grid.
    """
    if direction not in ("forward", "backward"):
        raise ValidationError(f"direction must be 'forward' or 'backward', got {direction!r}")
    if substeps < 1:
        raise ValidationError(f"substeps must be >= 1, got {substeps}")
    y = np.array(boundary_value, dtype=float)
    if not np.all(np.isfinite(y)):
        raise ValidationError(f"boundary value for '{name}' is not finite")
    out = np.empty((grid.steps + 1,) + y.shape, dtype=float)
    times = grid.times

    def advance(y, t_from, h):
        # non-finite states are handled by the blow-up contract below
        sub = h / substeps
        with np.errstate(over="ignore", invalid="ignore"):
            for j in range(substeps):
                y = _rk4_step(rhs, t_from + j * sub, y, sub)
        return y

    if direction == "forward":
        out[0] = y
        for k in range(grid.steps):
            y = advance(y, times[k], grid.dt)
            if project is not None:
                y = project(y)
            if not np.all(np.isfinite(y)):
                raise IntegrationBlowupError(
                    f"'{name}' produced a non-finite value at t={times[k + 1]:.10g}"
                )
            out[k + 1] = y
    else:
        out[grid.steps] = y
        for k in range(grid.steps, 0, -1):
            y = advance(y, times[k], -grid.dt)
            if project is not None:
                y = project(y)
            if not np.all(np.isfinite(y)):
                raise IntegrationBlowupError(
                    f"'{name}' produced a non-finite value at t={times[k - 1]:.10g}"
                )
            out[k - 1] = y
    return DeterministicTable(name, grid, out)


def _as_timefunc(c):
    if isinstance(c, DeterministicTable):
        return c
    if callable(c):
        return c
    value = float(c)
    return lambda t: value


def solve_scalar_riccati(quad, lin, const, boundary: float, grid: TimeGrid,
                         direction: str = "forward", name: str = "riccati",
                         substeps: int = 1) -> DeterministicTable:
    """Solve a scalar Riccati equation on the grid.

    forward:   y' = const(t) + lin(t) y + quad(t) y^2,  y(0) = boundary
    backward:  0 = y' + const(t) + lin(t) y + quad(t) y^2,  y(horizon) = boundary

    Coefficients may be numbers, callables of t, or DeterministicTables.
    """
    q, l, c = _as_timefunc(quad), _as_timefunc(lin), _as_timefunc(const)
    if direction == "forward":
        rhs = lambda t, y: c(t) + l(t) * y + q(t) * y * y
    else:
        rhs = lambda t, y: -(c(t) + l(t) * y + q(t) * y * y)
    return rk4_integrate(rhs, float(boundary), grid, direction=direction, name=name,
                         substeps=substeps)


def riccati_constant_solution(quad: float, lin: float, const: float, y0: float, t):
    """Closed-form solution of y' = const + lin y + quad y^2 with constant
    coefficients and two distinct real roots.  Used as an oracle in tests and
    steady-state checks.
    """
    t = np.asarray(t, dtype=float)
    if quad == 0.0:
        if lin == 0.0:
            return y0 + const * t
        yinf = -const / lin
        return yinf + (y0 - yinf) * np.exp(lin * t)
    disc = lin * lin - 4.0 * quad * const
    if disc <= 0.0:
        raise ValidationError("constant-coefficient oracle requires distinct real roots")
    r = np.sqrt(disc)
    y_plus = (-lin + r) / (2.0 * quad)
    y_minus = (-lin - r) / (2.0 * quad)
    if y0 == y_plus:
        return np.full_like(t, y_plus, dtype=float)
    if y0 == y_minus:
        return np.full_like(t, y_minus, dtype=float)
    ratio = (y0 - y_plus) / (y0 - y_minus)
    e = ratio * np.exp(r * t)
    return (y_plus - y_minus * e) / (1.0 - e)
