"""Digital controller synthesis and execution in RST form.

A controller  S(q^-1) u(t) = -R(q^-1) y(t) + T(q^-1) r(t)  is synthesised by
pole placement: the closed-loop characteristic polynomial  A S + q^-d B R  is
assigned a desired P, factored as dominant second-order dynamics times
optional auxiliary poles.  Fixed parts H_S and H_R (integral action, a zero
at the Nyquist frequency, ...) are imposed by solving the Bezout identity for
the remaining factors with a Sylvester matrix.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DesignError
from .fileio import format_float, parse_key_values, write_csv
from .plant import DiscretePlantModel

SYLVESTER_MAX_COND = 1e10
DB_FLOOR = -400.0


@dataclass(frozen=True)
class DelayPolynomial:
    """Polynomial in the delay operator q^-1 with real coefficients c0..cm."""

    coeffs: tuple[float, ...]

    def __post_init__(self):
        cs = tuple(float(c) for c in self.coeffs)
        if not cs:
            cs = (0.0,)
        if not all(math.isfinite(c) for c in cs):
            raise ValueError("coefficients must be finite")
        object.__setattr__(self, "coeffs", cs)

    @property
    def degree(self) -> int:
        for i in range(len(self.coeffs) - 1, -1, -1):
            if self.coeffs[i] != 0.0:
                return i
        return 0

    def __mul__(self, other):
        if isinstance(other, DelayPolynomial):
            return DelayPolynomial(tuple(np.convolve(self.coeffs, other.coeffs)))
        return DelayPolynomial(tuple(float(other) * c for c in self.coeffs))

    __rmul__ = __mul__

    def __add__(self, other: "DelayPolynomial") -> "DelayPolynomial":
        n = max(len(self.coeffs), len(other.coeffs))
        a = np.zeros(n)
        b = np.zeros(n)
        a[: len(self.coeffs)] = self.coeffs
        b[: len(other.coeffs)] = other.coeffs
        return DelayPolynomial(tuple(a + b))

    def __call__(self, z):
        """Evaluate sum c_i z^-i for scalar or array z (z != 0)."""
        z = np.asarray(z, dtype=complex)
        acc = np.zeros_like(z)
        for c in reversed(self.coeffs):
            acc = acc / z + c
        if np.isscalar(z) or z.ndim == 0:
            val = complex(acc)
            return val.real if val.imag == 0.0 else val
        return acc

    def on_circle(self, omegas: np.ndarray, Ts: float) -> np.ndarray:
        return self(unit_circle(omegas, Ts))

    def shifted(self, k: int) -> "DelayPolynomial":
        """Multiply by q^-k."""
        if k < 0:
            raise ValueError("shift must be >= 0")
        return DelayPolynomial((0.0,) * k + self.coeffs)

    def trimmed(self, rel_tol: float = 1e-12) -> "DelayPolynomial":
        cs = np.array(self.coeffs)
        scale = np.abs(cs).max()
        if scale == 0.0:
            return DelayPolynomial((0.0,))
        keep = len(cs)
        while keep > 1 and abs(cs[keep - 1]) <= rel_tol * scale:
            keep -= 1
        return DelayPolynomial(tuple(cs[:keep]))

    def roots(self) -> np.ndarray:
        """Roots in the z plane of z^m P(z^-1)."""
        cs = self.trimmed().coeffs
        if len(cs) == 1:
            return np.array([], dtype=complex)
        return np.roots(cs)

    def is_zero(self, rel_tol: float = 0.0) -> bool:
        return all(abs(c) <= rel_tol for c in self.coeffs)


ONE = DelayPolynomial((1.0,))
# Common fixed parts: an integrator in S, and a zero of R at the Nyquist
# frequency (opens the loop at 0.5 fs, nulling the input sensitivity there).
HS_INTEGRATOR = DelayPolynomial((1.0, -1.0))
HR_NYQUIST_ZERO = DelayPolynomial((1.0, 1.0))


def unit_circle(omegas: np.ndarray, Ts: float) -> np.ndarray:
    """e^{j w Ts}, with the Nyquist point snapped to exactly -1."""
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    z = np.exp(1j * omegas * Ts)
    z[np.abs(omegas * Ts - math.pi) < 1e-12] = -1.0
    return z


def model_polynomials(model: DiscretePlantModel) -> tuple[DelayPolynomial, DelayPolynomial]:
    """(A, q^-d B) of the model, B including its implicit one-step delay."""
    a = DelayPolynomial((1.0, *model.a_coeffs))
    b = DelayPolynomial((0.0, *model.b_coeffs)).shifted(model.delay)
    return a, b


@dataclass(frozen=True)
class PoleSpec:
    """Desired dominant closed-loop dynamics plus optional auxiliary poles."""

    omega0: float
    zeta: float
    Ts: float
    auxiliary: DelayPolynomial = ONE

    def __post_init__(self):
        if self.omega0 <= 0:
            raise ValueError("omega0 must be > 0")
        if self.zeta <= 0:
            raise ValueError("zeta must be > 0")
        if self.Ts <= 0:
            raise ValueError("Ts must be > 0")
        if self.omega0 * self.Ts >= math.pi:
            raise ValueError("omega0 Ts must be below pi (sampling too slow)")
        if self.auxiliary.is_zero():
            raise ValueError("auxiliary polynomial must not be zero")


def dominant_poles(spec: PoleSpec) -> DelayPolynomial:
    """Second-order polynomial 1 + p1 q^-1 + p2 q^-2 from (omega0, zeta).

    The continuous pole pair  s = -zeta w0 +/- w0 sqrt(zeta^2 - 1)  is mapped
    through z = exp(s Ts); complex pairs yield real coefficients.
    """
    w0, zeta, Ts = spec.omega0, spec.zeta, spec.Ts
    if zeta >= 1.0:
        root = math.sqrt(zeta * zeta - 1.0)
        z1 = math.exp((-zeta * w0 + w0 * root) * Ts)
        z2 = math.exp((-zeta * w0 - w0 * root) * Ts)
        p1 = -(z1 + z2)
        p2 = z1 * z2
    else:
        s = complex(-zeta * w0, w0 * math.sqrt(1.0 - zeta * zeta))
        z1 = cmath.exp(s * Ts)
        p1 = -2.0 * z1.real
        p2 = abs(z1) ** 2
    return DelayPolynomial((1.0, p1, p2))


def desired_poles(spec: PoleSpec) -> DelayPolynomial:
    return dominant_poles(spec) * spec.auxiliary


@dataclass(frozen=True)
class RstController:
    """RST control law with its generating factorization retained.

    R = H_R * R' and S = H_S * S'; keeping the parts lets evaluations at the
    fixed parts' zeros (z = 1 for the integrator, z = -1 for the Nyquist
    zero) return exact nulls instead of rounding residue.
    """

    r_core: DelayPolynomial
    s_core: DelayPolynomial
    t: DelayPolynomial
    Ts: float
    hr: DelayPolynomial = ONE
    hs: DelayPolynomial = ONE
    r: DelayPolynomial = field(init=False)
    s: DelayPolynomial = field(init=False)

    def __post_init__(self):
        if self.Ts <= 0:
            raise ValueError("Ts must be > 0")
        object.__setattr__(self, "r", self.hr * self.r_core)
        object.__setattr__(self, "s", self.hs * self.s_core)
        if abs(self.s.coeffs[0] - 1.0) > 1e-9:
            raise ValueError("S must be normalized with s0 = 1")

    def r_on_circle(self, omegas, Ts=None) -> np.ndarray:
        z = unit_circle(omegas, Ts or self.Ts)
        return self.hr(z) * self.r_core(z)

    def s_on_circle(self, omegas, Ts=None) -> np.ndarray:
        z = unit_circle(omegas, Ts or self.Ts)
        return self.hs(z) * self.s_core(z)

    @property
    def has_integral_action(self) -> bool:
        return self.hs(1.0) == 0.0 or abs(self.s(1.0)) < 1e-12


def pi_design(a1_hat: float, b1_hat: float, pole_poly: DelayPolynomial, Ts: float = 0.05) -> RstController:
    """Digital PI placing the poles of a first-order model at pole_poly.

    With S = 1 - q^-1 and R = r0 + r1 q^-1 the closed-loop polynomial of
    y(t) = -a1 y(t-1) + b1 u(t-1) matches 1 + p1 q^-1 + p2 q^-2 for

        r0 = (p1 - a1 + 1) / b1        r1 = (p2 + a1) / b1

    and T = r0 + r1 gives unit DC gain.
    """
    if b1_hat == 0.0 or not math.isfinite(b1_hat) or not math.isfinite(a1_hat):
        raise DesignError("PI design needs a finite model with b1 != 0")
    cs = pole_poly.trimmed().coeffs
    if len(cs) != 3 or cs[0] != 1.0:
        raise DesignError("pole polynomial must be monic of degree 2")
    _, p1, p2 = cs
    r0 = (p1 - a1_hat + 1.0) / b1_hat
    r1 = (p2 + a1_hat) / b1_hat
    return RstController(
        r_core=DelayPolynomial((r0, r1)),
        s_core=ONE,
        t=DelayPolynomial((r0 + r1,)),
        Ts=Ts,
        hr=ONE,
        hs=HS_INTEGRATOR,
    )


def bezout_design(
    model: DiscretePlantModel,
    pole_poly: DelayPolynomial,
    hs: DelayPolynomial = HS_INTEGRATOR,
    hr: DelayPolynomial = HR_NYQUIST_ZERO,
) -> RstController:
    """Solve  A H_S S' + q^-d B H_R R' = P  for S', R' via a Sylvester system.

    Degrees follow the minimal unique solution: deg S' = deg(B1) - 1 and
    deg R' = deg(A1) - 1 with A1 = A H_S, B1 = q^-d B H_R.  T = R(1) yields
    unit closed-loop DC gain whenever S contains an integrator.
    """
    a_poly, b_poly = model_polynomials(model)
    a1p = (a_poly * hs).trimmed()
    b1p = (b_poly * hr).trimmed()
    if b1p.is_zero():
        raise DesignError("plant numerator is zero")
    n_a = a1p.degree
    n_b = b1p.degree
    if n_b < 1:
        raise DesignError("plant must have at least one step of delay")
    n_unknowns = n_a + n_b
    p = pole_poly.trimmed()
    if p.degree > n_unknowns - 1:
        raise DesignError(
            f"desired polynomial degree {p.degree} exceeds solvable degree {n_unknowns - 1}"
        )

    M = np.zeros((n_unknowns, n_unknowns))
    a_c = np.array(a1p.coeffs)
    b_c = np.array(b1p.coeffs)
    for j in range(n_b):  # columns for S' coefficients
        M[j : j + len(a_c), j] = a_c
    for j in range(n_a):  # columns for R' coefficients
        M[j : j + len(b_c), n_b + j] = b_c

    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > SYLVESTER_MAX_COND:
        raise DesignError(
            f"Sylvester matrix condition {cond:.3g} exceeds {SYLVESTER_MAX_COND:.0e}; "
            "plant and fixed parts likely share a common factor"
        )
    rhs = np.zeros(n_unknowns)
    rhs[: p.degree + 1] = p.coeffs[: p.degree + 1]
    sol = np.linalg.solve(M, rhs)
    s_core = sol[:n_b]
    r_core = sol[n_b:]
    # Monic P against monic A1 pins s'_0 = 1; renormalize defensively so the
    # stored controller always has s0 = 1.
    lead = s_core[0]
    if lead == 0.0 or not np.isfinite(lead):
        raise DesignError("degenerate solution with s0 = 0")
    s_core = s_core / lead
    r_core = r_core / lead
    r_poly = (hr * DelayPolynomial(tuple(r_core))).trimmed()
    t_gain = float(np.real(r_poly(1.0)))
    return RstController(
        r_core=DelayPolynomial(tuple(r_core)),
        s_core=DelayPolynomial(tuple(s_core)),
        t=DelayPolynomial((t_gain,)),
        Ts=model.Ts,
        hr=hr,
        hs=hs,
    )


def closed_loop_polynomial(model: DiscretePlantModel, controller: RstController) -> DelayPolynomial:
    a_poly, b_poly = model_polynomials(model)
    return a_poly * controller.s + b_poly * controller.r


def check_pole_placement(
    model: DiscretePlantModel,
    controller: RstController,
    pole_poly: DelayPolynomial,
    tol: float = 1e-9,
) -> float:
    """Distance between achieved and prescribed closed-loop polynomials.

    Compared coefficient-wise after monic normalization; root positions are
    ill-conditioned near multiple poles (the critically damped target has a
    double root) while the coefficients are not.  Raises
    :class:`DesignError` above tol.
    """
    achieved = closed_loop_polynomial(model, controller).trimmed(1e-9)
    wanted = pole_poly.trimmed(1e-9)
    if achieved.coeffs[0] == 0.0 or wanted.coeffs[0] == 0.0:
        raise DesignError("closed-loop polynomial lost its leading coefficient")
    a = np.array(achieved.coeffs) / achieved.coeffs[0]
    w = np.array(wanted.coeffs) / wanted.coeffs[0]
    n = max(len(a), len(w))
    a = np.pad(a, (0, n - len(a)))
    w = np.pad(w, (0, n - len(w)))
    err = float(np.max(np.abs(a - w)))
    if err > tol:
        raise DesignError(f"pole placement error {err:.3g} exceeds {tol:.1e}")
    return err


# ---------------------------------------------------------------------------
# Sensitivity analysis


@dataclass(frozen=True)
class SensitivityAnalysis:
    """Output / input sensitivity and open-loop response on a frequency grid."""

    omegas: np.ndarray
    syp: np.ndarray
    sup: np.ndarray
    open_loop: np.ndarray
    Ts: float

    @property
    def syp_db(self) -> np.ndarray:
        return _db_floor(self.syp)

    @property
    def sup_db(self) -> np.ndarray:
        return _db_floor(self.sup)

    @property
    def max_syp_db(self) -> float:
        return float(np.max(self.syp_db))

    @property
    def modulus_margin(self) -> float:
        return float(1.0 / np.max(np.abs(self.syp)))

    @property
    def margin_db(self) -> float:
        """Modulus margin in dB (>= -6 dB means |Syp| stays under 6 dB)."""
        return float(20.0 * math.log10(self.modulus_margin))

    @property
    def sup_db_at_nyquist(self) -> float:
        return float(self.sup_db[-1])


def _db_floor(values: np.ndarray) -> np.ndarray:
    mag = np.abs(values)
    out = np.full(mag.shape, DB_FLOOR)
    nz = mag > 10 ** (DB_FLOOR / 20.0)
    out[nz] = 20.0 * np.log10(mag[nz])
    return out


def sensitivity(
    model: DiscretePlantModel, controller: RstController, n_freq: int = 512
) -> SensitivityAnalysis:
    """Evaluate Syp = A S / P, Sup = -A R / P and B R / (A S) on a log grid.

    The grid spans 0.01/Ts .. pi/Ts rad/s inclusive, so the Nyquist endpoint
    is always present.  P is the achieved polynomial A S + q^-d B R.
    """
    if n_freq < 64:
        raise ValueError("n_freq must be >= 64")
    Ts = controller.Ts
    omegas = np.geomspace(0.01 / Ts, math.pi / Ts, n_freq)
    omegas[-1] = math.pi / Ts
    a_poly, b_poly = model_polynomials(model)
    z = unit_circle(omegas, Ts)
    a_v = a_poly(z)
    b_v = b_poly(z)
    r_v = controller.hr(z) * controller.r_core(z)
    s_v = controller.hs(z) * controller.s_core(z)
    p_v = a_v * s_v + b_v * r_v
    if np.any(np.abs(p_v) == 0.0):
        raise DesignError("closed-loop polynomial vanishes on the unit circle")
    syp = a_v * s_v / p_v
    sup = -a_v * r_v / p_v
    with np.errstate(divide="ignore", invalid="ignore"):
        hol = np.where(np.abs(a_v * s_v) > 0, b_v * r_v / (a_v * s_v), np.inf)
    return SensitivityAnalysis(omegas=omegas, syp=syp, sup=sup, open_loop=hol, Ts=Ts)


def save_sensitivity_csv(path, analysis: SensitivityAnalysis) -> None:
    write_csv(
        path,
        ["omega_rad_s", "Syp_db", "Sup_db"],
        [analysis.omegas, analysis.syp_db, analysis.sup_db],
    )


# ---------------------------------------------------------------------------
# Controller execution


def controller_step(
    controller: RstController,
    u_hist: np.ndarray,
    y_hist: np.ndarray,
    r_hist: np.ndarray,
    y_t: float,
    r_t: float,
    limits: tuple[float, float] | None = (0.0, 100.0),
) -> tuple[float, bool]:
    """Compute u(t) from S u = -R y + T r; returns (u, saturated).

    Histories hold past values, most recent last.  The returned u is clamped
    to `limits`; no anti-windup correction is applied beyond the clamp.
    """
    u_hist = np.asarray(u_hist, dtype=float)
    y_hist = np.asarray(y_hist, dtype=float)
    r_hist = np.asarray(r_hist, dtype=float)
    s_c = controller.s.coeffs
    r_c = controller.r.coeffs
    t_c = controller.t.coeffs
    if len(u_hist) < len(s_c) - 1 or len(y_hist) < len(r_c) - 1 or len(r_hist) < len(t_c) - 1:
        raise ValueError("history too short for controller degrees")
    u = t_c[0] * r_t - r_c[0] * y_t
    for i in range(1, len(s_c)):
        u -= s_c[i] * u_hist[-i]
    for i in range(1, len(r_c)):
        u -= r_c[i] * y_hist[-i]
    for i in range(1, len(t_c)):
        u += t_c[i] * r_hist[-i]
    saturated = False
    if limits is not None:
        lo, hi = limits
        if u < lo:
            u, saturated = lo, True
        elif u > hi:
            u, saturated = hi, True
    return float(u), saturated


class ControllerRuntime:
    """Mutable execution state (u, y, r histories) around an RST law."""

    def __init__(self, controller: RstController, limits: tuple[float, float] | None = (0.0, 100.0)):
        self.controller = controller
        self.limits = limits
        depth = max(
            len(controller.s.coeffs), len(controller.r.coeffs), len(controller.t.coeffs), 2
        )
        self._u = [0.0] * depth
        self._y = [0.0] * depth
        self._r = [0.0] * depth

    def prime(self, u: float = 0.0, y: float = 0.0, r: float = 0.0) -> None:
        """Fill histories with steady values (bumpless start at a setpoint)."""
        self._u = [float(u)] * len(self._u)
        self._y = [float(y)] * len(self._y)
        self._r = [float(r)] * len(self._r)

    def step(self, y_t: float, r_t: float) -> tuple[float, bool]:
        u, sat = controller_step(
            self.controller, self._u, self._y, self._r, y_t, r_t, self.limits
        )
        self._u.append(u)
        self._u.pop(0)
        self._y.append(float(y_t))
        self._y.pop(0)
        self._r.append(float(r_t))
        self._r.pop(0)
        return u, sat


class ReferenceModel:
    """Tracking target: the design transfer T B / P_D scaled to unit DC gain."""

    def __init__(self, pole_poly: DelayPolynomial, b_poly: DelayPolynomial, t_gain: float):
        dc_num = float(np.real(b_poly(1.0))) * t_gain
        dc_den = float(np.real(pole_poly(1.0)))
        if dc_num == 0.0:
            raise DesignError("reference model has zero DC numerator")
        self.p = pole_poly
        self.b = b_poly
        self.scale = t_gain * dc_den / dc_num
        n = max(len(pole_poly.coeffs), len(b_poly.coeffs))
        self._y = [0.0] * n
        self._r = [0.0] * n

    def prime(self, y: float, r: float) -> None:
        self._y = [float(y)] * len(self._y)
        self._r = [float(r)] * len(self._r)

    def step(self, r_t: float) -> float:
        # B carries the plant's input delay (b0 = 0), so only lagged r terms
        # contribute.
        self._r.append(float(r_t))
        self._r.pop(0)
        p_c = self.p.coeffs
        b_c = self.b.coeffs
        y = 0.0
        for i in range(1, len(p_c)):
            y -= p_c[i] * self._y[-i]
        for j in range(1, len(b_c)):
            y += self.scale * b_c[j] * self._r[-1 - j]
        self._y.append(y)
        self._y.pop(0)
        return y


# ---------------------------------------------------------------------------
# Text round trip


def controller_to_text(controller: RstController) -> str:
    def fmt(poly: DelayPolynomial) -> str:
        return ", ".join(format_float(c) for c in poly.coeffs)

    lines = [
        f"Ts = {format_float(controller.Ts)}",
        f"R = {fmt(controller.r)}",
        f"S = {fmt(controller.s)}",
        f"T = {fmt(controller.t)}",
        f"H_R = {fmt(controller.hr)}",
        f"H_S = {fmt(controller.hs)}",
        f"R_core = {fmt(controller.r_core)}",
        f"S_core = {fmt(controller.s_core)}",
    ]
    return "\n".join(lines) + "\n"


def controller_from_text(text: str) -> RstController:
    entries = {e.key: (e.value, e.line) for e in parse_key_values(text)}
    required = ["Ts", "T", "H_R", "H_S", "R_core", "S_core"]
    for key in required:
        if key not in entries:
            raise ConfigError(f"controller text missing {key!r}")

    def poly(key: str) -> DelayPolynomial:
        raw, line = entries[key]
        try:
            return DelayPolynomial(tuple(float(v) for v in raw.split(",")))
        except ValueError as exc:
            raise ConfigError(f"bad coefficients for {key}: {raw!r}", line) from exc

    try:
        ts = float(entries["Ts"][0])
    except ValueError as exc:
        raise ConfigError(f"bad Ts: {entries['Ts'][0]!r}", entries["Ts"][1]) from exc
    return RstController(
        r_core=poly("R_core"),
        s_core=poly("S_core"),
        t=poly("T"),
        Ts=ts,
        hr=poly("H_R"),
        hs=poly("H_S"),
    )
