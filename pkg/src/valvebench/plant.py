"""Throttle-valve simulator and discrete linear plant models.

The valve is modelled as a return-spring-loaded plate driven by a PWM motor
stage.  Inertia is negligible against viscous drag, so the plate obeys a
first-order torque balance with Coulomb friction and stiction:

    viscous * d(angle)/dt = motor + spring - coulomb(direction) * sign(velocity)

with motor = -motor_gain * u (larger duty cycle closes the valve, so the DC
gain from duty cycle to angle is negative) and spring = spring_stiffness *
(spring_rest_angle - angle).  At rest the plate stays put until the net torque
exceeds stiction_ratio times the direction's Coulomb level.  Asymmetric
coulomb_open / coulomb_close levels give the asymmetric hysteresis seen on
real hardware.

Integration runs on an internal 1 ms sub-step.  Within a sub-step the active
friction mode is frozen, which makes the dynamics linear and allows an exact
exponential update; with friction, quantization and noise disabled the sampled
response therefore matches the zero-order-hold discretization of the
continuous model to floating-point accuracy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

# Internal integration sub-step, s.
DT_INTERNAL = 1e-3
# Below this speed (deg/s) a moving plate is considered latched again.
V_STOP = 1e-7


@dataclass(frozen=True)
class ValveParams:
    """Physical and measurement parameters of one simulated valve.

    Parameters
    ----------
    spring_stiffness:
        Return-spring rate, torque units per degree.  Must be > 0.
    spring_rest_angle:
        Angle the spring relaxes to with the motor off, deg.
    motor_gain:
        Torque per percent duty cycle.  Acts to close the valve.
    viscous_coeff:
        Viscous drag, torque per (deg/s).  Must be > 0.
    coulomb_open, coulomb_close:
        Kinetic Coulomb friction torque for opening / closing motion (>= 0).
    stiction_ratio:
        Breakaway torque as a multiple of the kinetic level (>= 1).
    angle_min, angle_max:
        Hard stops, deg.
    adc_bits:
        Angle sensor resolution over [angle_min, angle_max]; 0 disables
        quantization.
    pwm_levels:
        Number of distinct duty-cycle levels over [0, 100]; 0 disables input
        quantization.
    output_noise_std:
        Std-dev of Gaussian measurement noise, deg.
    rng_seed:
        Seed for the measurement-noise stream.
    """

    spring_stiffness: float
    spring_rest_angle: float
    motor_gain: float
    viscous_coeff: float
    coulomb_open: float = 0.0
    coulomb_close: float = 0.0
    stiction_ratio: float = 1.0
    angle_min: float = 0.0
    angle_max: float = 95.0
    adc_bits: int = 10
    pwm_levels: int = 256
    output_noise_std: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if not (self.spring_stiffness > 0):
            raise ValueError("spring_stiffness must be > 0")
        if not (self.viscous_coeff > 0):
            raise ValueError("viscous_coeff must be > 0")
        if self.coulomb_open < 0 or self.coulomb_close < 0:
            raise ValueError("coulomb levels must be >= 0")
        if self.stiction_ratio < 1.0:
            raise ValueError("stiction_ratio must be >= 1")
        if not (self.angle_min < self.angle_max):
            raise ValueError("angle_min must be < angle_max")
        if not (self.angle_min <= self.spring_rest_angle <= self.angle_max):
            raise ValueError("spring_rest_angle must lie within the stops")
        if self.adc_bits < 0 or self.pwm_levels < 0:
            raise ValueError("adc_bits and pwm_levels must be >= 0")
        if self.pwm_levels == 1:
            raise ValueError("pwm_levels must be 0 (off) or >= 2")
        if self.output_noise_std < 0:
            raise ValueError("output_noise_std must be >= 0")

    @property
    def time_constant(self) -> float:
        """viscous_coeff / spring_stiffness, s."""
        return self.viscous_coeff / self.spring_stiffness

    @property
    def dc_gain(self) -> float:
        """Static angle change per percent duty cycle (negative)."""
        return -self.motor_gain / self.spring_stiffness


@dataclass(frozen=True)
class ValveState:
    angle: float
    velocity: float = 0.0
    moving: bool = False


def rest_state(params: ValveParams) -> ValveState:
    return ValveState(angle=params.spring_rest_angle, velocity=0.0, moving=False)


def valve_step(state: ValveState, params: ValveParams, u: float, dt: float) -> ValveState:
    """Advance the plate by one sub-step of dt seconds under duty cycle u.

    Pure function of its inputs; quantization and noise are applied at the
    sampling layer (see :class:`ValveSimulator`), not here.
    """
    if not (0.0 < dt <= 0.01):
        raise ValueError("dt must be in (0, 0.01] s")
    if not (0.0 <= u <= 100.0):
        raise ValueError("u must be in [0, 100] %")

    k = params.spring_stiffness
    angle = state.angle
    # Net torque toward increasing angle, friction excluded.
    net = params.spring_stiffness * (params.spring_rest_angle - angle) - params.motor_gain * u

    def mode_target(direction: float) -> float:
        c_kin = params.coulomb_open if direction > 0.0 else params.coulomb_close
        # Equilibrium of the active friction mode; motion decays toward it.
        return params.spring_rest_angle - (params.motor_gain * u + direction * c_kin) / k

    direction = 0.0
    if state.moving:
        d = 1.0 if state.velocity > 0.0 else -1.0
        target = mode_target(d)
        if d * (target - angle) > 0.0:
            direction = d
    if direction == 0.0:
        # At rest, or the moving-mode torque reversed: static breakaway test.
        d = 1.0 if net > 0.0 else -1.0
        c_break = params.stiction_ratio * (
            params.coulomb_open if d > 0.0 else params.coulomb_close
        )
        if abs(net) <= c_break:
            return state if not state.moving and state.velocity == 0.0 else ValveState(angle, 0.0, False)
        # Breakaway implies the kinetic mode can sustain motion
        # (stiction_ratio >= 1 makes |net| > coulomb(d)).
        direction = d
        target = mode_target(d)

    tau = params.viscous_coeff / k
    decay = math.exp(-dt / tau)
    new_angle = target + (angle - target) * decay
    velocity = (target - new_angle) / tau

    moving = True
    if abs(velocity) < V_STOP:
        velocity = 0.0
        moving = False
    if new_angle <= params.angle_min:
        new_angle, velocity, moving = params.angle_min, 0.0, False
    elif new_angle >= params.angle_max:
        new_angle, velocity, moving = params.angle_max, 0.0, False
    return ValveState(new_angle, velocity, moving)


class ValveSimulator:
    """Sampled-data wrapper around :func:`valve_step`.

    The convention is measure-then-apply: :meth:`measure` senses the current
    angle (quantization plus noise), then :meth:`advance` applies a duty cycle
    for one sampling period.  Output sample k therefore depends on inputs up
    to k - 1, matching the one-step-delayed discrete models used elsewhere.
    """

    def __init__(self, params: ValveParams, Ts: float = 0.05, state: ValveState | None = None):
        if Ts <= 0:
            raise ValueError("Ts must be > 0")
        n_sub = Ts / DT_INTERNAL
        if abs(n_sub - round(n_sub)) > 1e-9:
            raise ValueError("Ts must be an integer multiple of the 1 ms sub-step")
        self.params = params
        self.Ts = Ts
        self.n_sub = int(round(n_sub))
        self.state = state if state is not None else rest_state(params)
        self.rng = np.random.default_rng(params.rng_seed)
        if params.adc_bits:
            self._q_step = (params.angle_max - params.angle_min) / (2**params.adc_bits - 1)
        else:
            self._q_step = 0.0

    def measure(self) -> float:
        y = self.state.angle
        if self._q_step:
            code = round((y - self.params.angle_min) / self._q_step)
            y = self.params.angle_min + code * self._q_step
        if self.params.output_noise_std > 0:
            y += self.params.output_noise_std * self.rng.standard_normal()
        return y

    def advance(self, u: float) -> None:
        if not np.isfinite(u):
            raise ValueError("duty cycle must be finite")
        u = min(100.0, max(0.0, float(u)))
        if self.params.pwm_levels:
            levels = self.params.pwm_levels - 1
            u = round(u / 100.0 * levels) * 100.0 / levels
        state = self.state
        params = self.params
        for _ in range(self.n_sub):
            state = valve_step(state, params, u, DT_INTERNAL)
        self.state = state


def valve_run(params: ValveParams, u_sequence: np.ndarray, Ts: float = 0.05) -> np.ndarray:
    """Simulate a full input sequence; returns one output sample per input.

    Two calls with identical params (same rng_seed) and input are
    bit-identical.
    """
    u_sequence = np.asarray(u_sequence, dtype=float)
    if u_sequence.ndim != 1:
        raise ValueError("u_sequence must be one-dimensional")
    if not np.all(np.isfinite(u_sequence)):
        raise ValueError("u_sequence must be finite")
    sim = ValveSimulator(params, Ts)
    y = np.empty(len(u_sequence))
    for k, u in enumerate(u_sequence):
        y[k] = sim.measure()
        sim.advance(u)
    return y


@dataclass(frozen=True)
class HysteresisMap:
    levels: np.ndarray
    angle_up: np.ndarray
    angle_down: np.ndarray

    @property
    def width(self) -> float:
        """Largest branch separation over the swept levels, deg."""
        return float(np.max(np.abs(self.angle_up - self.angle_down)))


def static_sweep(
    params: ValveParams,
    u_levels: np.ndarray,
    hold: float = 2.5,
    Ts: float = 0.05,
) -> HysteresisMap:
    """Quasi-static staircase up and back down through u_levels.

    Each level is held for `hold` seconds; the steady angle per level is the
    mean over the final 0.5 s of the hold.  Ascending and descending branches
    are returned separately.
    """
    u_levels = np.asarray(u_levels, dtype=float)
    if hold < 2.5:
        raise ValueError("hold must be >= 2.5 s for a quasi-static sweep")
    n_hold = int(round(hold / Ts))
    n_avg = max(1, int(round(0.5 / Ts)))
    sim = ValveSimulator(params, Ts)

    def run_branch(levels):
        steady = np.empty(len(levels))
        for i, u in enumerate(levels):
            samples = np.empty(n_hold)
            for k in range(n_hold):
                samples[k] = sim.measure()
                sim.advance(u)
            steady[i] = samples[-n_avg:].mean()
        return steady

    up = run_branch(u_levels)
    down = run_branch(u_levels[::-1])[::-1]
    return HysteresisMap(levels=u_levels, angle_up=up, angle_down=down)


def measure_rise_time(y: np.ndarray, Ts: float, settle: float = 0.5) -> float:
    """10 % to 90 % rise (or fall) time of a step response, s.

    The final value is the mean over the trailing `settle` seconds; crossing
    instants are linearly interpolated between samples.
    """
    y = np.asarray(y, dtype=float)
    n_avg = max(1, int(round(settle / Ts)))
    y0 = y[0]
    yf = y[-n_avg:].mean()
    span = yf - y0
    if span == 0:
        raise ValueError("no transition in response")
    frac = (y - y0) / span

    def crossing(level):
        idx = np.nonzero(frac >= level)[0]
        if len(idx) == 0:
            raise ValueError("response never reaches threshold")
        i = idx[0]
        if i == 0:
            return 0.0
        f0, f1 = frac[i - 1], frac[i]
        return Ts * ((i - 1) + (level - f0) / (f1 - f0))

    return crossing(0.9) - crossing(0.1)


# ---------------------------------------------------------------------------
# Discrete linear models


@dataclass(frozen=True)
class DiscretePlantModel:
    """ARX-form model  A(q^-1) y(t) = q^-d B(q^-1) u(t)  with monic A.

    a_coeffs are a1..a_na, b_coeffs are b1..b_nb (B starts at q^-1), delay d
    counts extra whole-sample delays beyond the implicit one in B.
    """

    a_coeffs: tuple[float, ...]
    b_coeffs: tuple[float, ...]
    delay: int = 0
    Ts: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "a_coeffs", tuple(float(a) for a in self.a_coeffs))
        object.__setattr__(self, "b_coeffs", tuple(float(b) for b in self.b_coeffs))
        if len(self.b_coeffs) < 1:
            raise ValueError("model needs at least b1")
        if self.delay < 0:
            raise ValueError("delay must be >= 0")
        if self.Ts <= 0:
            raise ValueError("Ts must be > 0")
        vals = self.a_coeffs + self.b_coeffs
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("coefficients must be finite")

    @property
    def na(self) -> int:
        return len(self.a_coeffs)

    @property
    def nb(self) -> int:
        return len(self.b_coeffs)

    @property
    def theta(self) -> np.ndarray:
        return np.array(self.a_coeffs + self.b_coeffs)

    @classmethod
    def from_theta(cls, theta: np.ndarray, na: int, nb: int, delay: int = 0, Ts: float = 0.05):
        theta = np.asarray(theta, dtype=float)
        if len(theta) != na + nb:
            raise ValueError("theta length must equal na + nb")
        return cls(tuple(theta[:na]), tuple(theta[na:]), delay, Ts)

    @property
    def dc_gain(self) -> float:
        return sum(self.b_coeffs) / (1.0 + sum(self.a_coeffs))

    def is_stable(self, radius: float = 1.0) -> bool:
        if self.na == 0:
            return True
        poles = np.roots([1.0, *self.a_coeffs])
        return bool(np.all(np.abs(poles) < radius))

    def frequency_response(self, omegas: np.ndarray) -> np.ndarray:
        """Evaluate q^-d B / A on the unit circle at omegas rad/s."""
        omegas = np.asarray(omegas, dtype=float)
        z_inv = np.exp(-1j * omegas * self.Ts)
        num = np.zeros_like(z_inv)
        for j, b in enumerate(self.b_coeffs, start=1):
            num += b * z_inv ** (self.delay + j)
        den = np.ones_like(z_inv)
        for i, a in enumerate(self.a_coeffs, start=1):
            den += a * z_inv**i
        return num / den


def linear_plant_step(model: DiscretePlantModel, y_hist: np.ndarray, u_hist: np.ndarray) -> float:
    """One step of the ARX difference equation.

    y_hist[-i] is y(t-i); u_hist[-j] is u(t-j).  Histories must cover na and
    nb + delay past samples respectively.
    """
    y_hist = np.asarray(y_hist, dtype=float)
    u_hist = np.asarray(u_hist, dtype=float)
    if len(y_hist) < model.na or len(u_hist) < model.nb + model.delay:
        raise ValueError("history too short for model orders")
    y = 0.0
    for i, a in enumerate(model.a_coeffs, start=1):
        y -= a * y_hist[-i]
    for j, b in enumerate(model.b_coeffs, start=1):
        y += b * u_hist[-(model.delay + j)]
    return y


class LinearSimulator:
    """Sampled linear plant with the same measure/advance interface as
    :class:`ValveSimulator`.

    Measurement noise is additive on the sensed output only; the internal
    recursion stays noise free (output-error structure).
    """

    def __init__(
        self,
        model: DiscretePlantModel,
        noise_std: float = 0.0,
        rng_seed: int = 0,
        y_init: float = 0.0,
        u_init: float = 0.0,
    ):
        self.model = model
        self.noise_std = noise_std
        self.rng = np.random.default_rng(rng_seed)
        self._y = [float(y_init)] * max(1, model.na)
        self._u = [float(u_init)] * (model.nb + model.delay)
        self._current: float | None = None

    def _output(self) -> float:
        if self._current is None:
            self._current = linear_plant_step(self.model, np.array(self._y), np.array(self._u))
        return self._current

    def measure(self) -> float:
        y = self._output()
        if self.noise_std > 0:
            y += self.noise_std * self.rng.standard_normal()
        return y

    def advance(self, u: float) -> None:
        y = self._output()
        self._y.append(y)
        self._y.pop(0)
        self._u.append(float(u))
        self._u.pop(0)
        self._current = None


def linear_run(model: DiscretePlantModel, u_sequence: np.ndarray, noise_std: float = 0.0, rng_seed: int = 0) -> np.ndarray:
    sim = LinearSimulator(model, noise_std=noise_std, rng_seed=rng_seed)
    u_sequence = np.asarray(u_sequence, dtype=float)
    y = np.empty(len(u_sequence))
    for k, u in enumerate(u_sequence):
        y[k] = sim.measure()
        sim.advance(u)
    return y


def zoh_first_order(params: ValveParams, u_sequence: np.ndarray, Ts: float) -> np.ndarray:
    """Zero-order-hold sampled response of the friction-free valve.

    Reference model for the linear-limit check: gain -motor_gain /
    spring_stiffness, time constant viscous_coeff / spring_stiffness.
    """
    tau = params.time_constant
    alpha = math.exp(-Ts / tau)
    gain = params.dc_gain
    y = np.empty(len(u_sequence))
    angle = params.spring_rest_angle
    for k, u in enumerate(np.asarray(u_sequence, dtype=float)):
        y[k] = angle
        target = params.spring_rest_angle + gain * u
        angle = target + (angle - target) * alpha
    return y


def params_to_text(params: ValveParams) -> str:
    from .fileio import format_value

    lines = [f"{f.name} = {format_value(getattr(params, f.name))}" for f in fields(ValveParams)]
    return "\n".join(lines) + "\n"


def params_from_entries(entries, source: str = "<preset>") -> ValveParams:
    from .errors import ConfigError

    known = {f.name: f for f in fields(ValveParams)}
    values = {}
    for e in entries:
        if e.section:
            raise ConfigError(f"preset files take no sections, got [{e.section}]", e.line)
        if e.key not in known:
            raise ConfigError(f"unknown preset key {e.key!r}", e.line)
        f = known[e.key]
        try:
            if f.type in ("int", int):
                values[e.key] = int(e.value)
            else:
                values[e.key] = float(e.value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {e.key!r}: {e.value!r}", e.line) from exc
    missing = sorted(set(known) - set(values))
    if missing:
        raise ConfigError(f"{source}: missing preset keys: {', '.join(missing)}")
    try:
        return ValveParams(**values)
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
