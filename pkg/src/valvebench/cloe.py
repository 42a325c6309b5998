"""Closed-loop output-error identification.

When a plant must stay under feedback during identification, regressing on
measured signals biases least squares: the controller correlates measurement
noise with the plant input.  The closed-loop output-error scheme avoids this
by running a parallel predictor of the whole loop, driven only by the
external excitation r_u added at the controller output:

    u_hat(t) = -(R/S) y_hat(t) + r_u(t)
    y_hat(t+1) = -A*_hat y_hat(t) + B*_hat u_hat(t - d) = theta_hat' phi(t)

The adaptation error y(t+1) - y_hat(t+1) then updates theta_hat with the
same recursive machinery as open-loop estimation.  Measured y and u never
enter the regressor.

Identification runs in deviation variables around the loop's operating
reference; with integral action in S the controller's deviation recursion is
exactly S u = -R y, so the predictor needs no knowledge of the operating
duty cycle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .control import RstController
from .fileio import write_csv
from .ident import AdaptationState, rls_step


class ClosedLoopPredictor:
    """Parallel simulated loop (controller + adjustable model) with RLS update.

    Call :meth:`predict` once per sample to form u_hat(t) and the one-step
    prediction, then :meth:`adapt` with the next measured output.  The
    histories carry a posteriori predictions.
    """

    def __init__(
        self,
        controller: RstController,
        na: int,
        nb: int,
        delay: int,
        adaptation: AdaptationState,
        y_hist: np.ndarray | None = None,
        u_hist: np.ndarray | None = None,
    ):
        if na < 1 or nb < 1:
            raise ValueError("predictor needs na >= 1 and nb >= 1")
        if delay < 0:
            raise ValueError("delay must be >= 0")
        if len(adaptation.theta_hat) != na + nb:
            raise ValueError("adaptation state dimension must equal na + nb")
        self.controller = controller
        self.na = na
        self.nb = nb
        self.delay = delay
        self.state = adaptation
        depth = max(
            na,
            nb + delay,
            len(controller.s.coeffs),
            len(controller.r.coeffs),
            len(controller.t.coeffs),
        )
        self._depth = depth

        def init_hist(values):
            hist = [0.0] * depth
            if values is not None and len(values):
                tail = list(np.asarray(values, dtype=float))[-depth:]
                hist[depth - len(tail):] = tail
            return hist

        if y_hist is not None and len(y_hist):
            # the newest supplied sample plays the role of y_hat(t)
            self._y_current = float(np.asarray(y_hist, dtype=float)[-1])
            self._y = init_hist(np.asarray(y_hist, dtype=float)[:-1])
        else:
            self._y_current = 0.0
            self._y = init_hist(None)
        self._u = init_hist(u_hist)  # u_hat history, most recent last
        self._uc = list(self._u)  # controller-only output history
        self._rdev = [0.0] * depth  # reference deviation history
        self._pending_phi: np.ndarray | None = None
        self._pending: tuple[float, float, float] | None = None

    @property
    def theta_hat(self) -> np.ndarray:
        return self.state.theta_hat

    def predict(self, r_u: float, r_dev: float = 0.0) -> tuple[float, float]:
        """Form u_hat(t) and the a priori prediction of y(t+1).

        r_dev is the reference deviation from the operating point; it stays
        zero during plain regulation-with-excitation identification.
        """
        if self._pending_phi is not None:
            raise RuntimeError("predict called twice without adapt")
        ctrl = self.controller
        s_c = ctrl.s.coeffs
        r_c = ctrl.r.coeffs
        t_c = ctrl.t.coeffs
        y_now = self._y_current
        r_full = self._rdev + [float(r_dev)]
        u_ctrl = t_c[0] * float(r_dev) - r_c[0] * y_now
        for i in range(1, len(t_c)):
            u_ctrl += t_c[i] * r_full[-1 - i]
        for i in range(1, len(s_c)):
            u_ctrl -= s_c[i] * self._uc[-i]
        for i in range(1, len(r_c)):
            u_ctrl -= r_c[i] * self._y[-i]
        u_hat = u_ctrl + float(r_u)

        y_lags = [y_now] + [self._y[-i] for i in range(1, self.na)]
        u_full = self._u + [u_hat]
        u_lags = [u_full[-1 - self.delay - j] for j in range(self.nb)]
        phi = np.array([-v for v in y_lags] + u_lags)
        y_pred = float(self.state.theta_hat @ phi)

        self._pending_phi = phi
        self._pending = (u_hat, u_ctrl, float(r_dev))
        return y_pred, u_hat

    def adapt(self, y_measured_next: float, update: bool = True) -> tuple[float, float]:
        """Consume the next measured output; returns (a priori, a posteriori)
        closed-loop errors.  With update=False the parameters are frozen and
        the predictor simply advances."""
        if self._pending_phi is None:
            raise RuntimeError("adapt called before predict")
        phi = self._pending_phi
        if update:
            self.state, eps0, eps = rls_step(self.state, phi, float(y_measured_next))
        else:
            eps0 = float(y_measured_next) - float(self.state.theta_hat @ phi)
            eps = eps0
        # a posteriori prediction becomes the new current history sample
        y_post = float(self.state.theta_hat @ phi)
        u_hat, u_ctrl, r_dev = self._pending
        self._y.append(self._y_current)
        self._y.pop(0)
        self._u.append(u_hat)
        self._u.pop(0)
        self._uc.append(u_ctrl)
        self._uc.pop(0)
        self._rdev.append(r_dev)
        self._rdev.pop(0)
        self._y_current = y_post
        self._pending_phi = None
        self._pending = None
        return eps0, eps


@dataclass(frozen=True)
class CloeRun:
    """Closed-loop identification traces (all in deviation variables)."""

    theta: np.ndarray  # (T, n)
    y: np.ndarray
    y_hat: np.ndarray
    u: np.ndarray
    u_hat: np.ndarray
    eps_apriori: np.ndarray
    eps_aposteriori: np.ndarray
    saturated: np.ndarray
    final_state: AdaptationState
    u_operating: float = 0.0  # estimated duty holding the loop at its reference
    y_last: float = 0.0  # last absolute measurement, for bumpless phase handover

    @property
    def theta_final(self) -> np.ndarray:
        return self.theta[-1] if len(self.theta) else self.final_state.theta_hat


def cl_identify(
    plant,
    controller: RstController,
    excitation: np.ndarray,
    init: AdaptationState,
    na: int,
    nb: int,
    delay: int = 0,
    operating_reference: float = 0.0,
    warmup: int = 0,
    limits: tuple[float, float] | None = None,
    update: bool = True,
) -> CloeRun:
    """Run the real loop and the predictor in lockstep over the excitation.

    `plant` provides measure()/advance(); the loop regulates at
    operating_reference with r_u added to the controller output.  A warmup
    of that many samples settles the loop first and seeds the predictor
    histories with measured data, suppressing the initial transient of the
    parallel predictor.
    """
    from .control import ControllerRuntime

    excitation = np.asarray(excitation, dtype=float)
    runtime = ControllerRuntime(controller, limits=limits)
    r_bar = float(operating_reference)

    y_dev_hist: list[float] = []
    u_dev_hist: list[float] = []
    u_log: list[float] = []
    runtime.prime(u=0.0, y=0.0, r=0.0)
    if warmup > 0:
        for _ in range(warmup):
            y_abs = plant.measure()
            u_cmd, _ = runtime.step(y_abs, r_bar)
            plant.advance(u_cmd)
            y_dev_hist.append(y_abs - r_bar)
            u_log.append(u_cmd)
        u_bar = float(np.mean(u_log[-max(1, warmup // 4):]))
        u_dev_hist = [u - u_bar for u in u_log]
    else:
        u_bar = 0.0

    predictor = ClosedLoopPredictor(
        controller,
        na,
        nb,
        delay,
        init,
        y_hist=np.array(y_dev_hist) if y_dev_hist else None,
        u_hist=np.array(u_dev_hist) if u_dev_hist else None,
    )

    T = len(excitation)
    n = na + nb
    theta = np.empty((T, n))
    y_arr = np.empty(T)
    yh_arr = np.empty(T)
    u_arr = np.empty(T)
    uh_arr = np.empty(T)
    e0_arr = np.empty(T)
    e1_arr = np.empty(T)
    sat_arr = np.zeros(T, dtype=bool)

    y_abs = plant.measure()
    for k in range(T):
        y_dev = y_abs - r_bar
        y_pred, u_hat = predictor.predict(excitation[k])
        u_cmd, sat = runtime.step(y_abs, r_bar)
        u_plant = u_cmd + excitation[k]
        if limits is not None:
            lo, hi = limits
            clipped = min(hi, max(lo, u_plant))
            sat = sat or (clipped != u_plant)
            u_plant = clipped
        plant.advance(u_plant)
        y_abs = plant.measure()
        eps0, eps = predictor.adapt(y_abs - r_bar, update=update)

        theta[k] = predictor.theta_hat
        y_arr[k] = y_dev
        yh_arr[k] = y_pred
        u_arr[k] = u_plant - u_bar
        uh_arr[k] = u_hat
        e0_arr[k] = eps0
        e1_arr[k] = eps
        sat_arr[k] = sat

    return CloeRun(
        theta=theta,
        y=y_arr,
        y_hat=yh_arr,
        u=u_arr,
        u_hat=uh_arr,
        eps_apriori=e0_arr,
        eps_aposteriori=e1_arr,
        saturated=sat_arr,
        final_state=predictor.state,
        u_operating=u_bar,
        y_last=y_abs,
    )


def save_cloe_csv(path, run: CloeRun) -> None:
    n = run.theta.shape[1] if run.theta.size else 0
    header = ["t", "y", "y_hat", "u", "u_hat", "eps_cl"] + [f"theta_{i + 1}" for i in range(n)]
    T = len(run.y)
    cols = [np.arange(T), run.y, run.y_hat, run.u, run.u_hat, run.eps_aposteriori]
    cols += [run.theta[:, i] for i in range(n)]
    write_csv(path, header, cols)
