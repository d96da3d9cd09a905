"""Piecewise-constant pulse synthesis of target unitaries (GRAPE).

A pulse is an ``(n, A)`` amplitude matrix ``u``; step ``k`` evolves with
``exp(-i dt sum_a u[k, a] H_a)`` and step 0 acts first (rightmost factor).
Losses are ``1 - |tr(U^dag V)|^2 / D^2``.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .models import CHANNELS

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ControlPulse:
    amplitudes: np.ndarray
    dt: float

    def __post_init__(self):
        u = np.atleast_2d(np.asarray(self.amplitudes, dtype=float))
        object.__setattr__(self, "amplitudes", u)
        if u.shape[0] < 1:
            raise ValueError("pulse needs at least one step")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not np.all(np.isfinite(u)):
            raise ValueError("non-finite amplitude")

    @property
    def n(self) -> int:
        return self.amplitudes.shape[0]

    @property
    def channels(self) -> int:
        return self.amplitudes.shape[1]

    @property
    def duration(self) -> float:
        return self.n * self.dt

    @classmethod
    def zeros(cls, n: int, channels: int, dt: float) -> "ControlPulse":
        return cls(np.zeros((n, channels)), dt)

    def extended(self, n: int) -> "ControlPulse":
        """Append idle (zero-amplitude) steps up to ``n`` total."""
        if n < self.n:
            raise ValueError("cannot shrink a pulse")
        pad = np.zeros((n - self.n, self.channels))
        return ControlPulse(np.vstack([self.amplitudes, pad]), self.dt)

    def inverse(self) -> "ControlPulse":
        """Pulse realizing the inverse evolution (reversed order, negated amplitudes)."""
        return ControlPulse(-self.amplitudes[::-1], self.dt)

    def then(self, other: "ControlPulse") -> "ControlPulse":
        """Concatenate: ``self`` acts first, then ``other``."""
        if other.dt != self.dt or other.channels != self.channels:
            raise ValueError("incompatible pulses")
        return ControlPulse(np.vstack([self.amplitudes, other.amplitudes]), self.dt)


@dataclass(frozen=True)
class GrapeConfig:
    """Optimizer settings.  Unset physics parameters default to the library choices."""

    iterations: int = 300
    learning_rate: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    threshold: float = 1e-3
    tau: float = 0.5
    dt: float = 0.1
    u_max: float | None = None
    seed: int = 0
    restarts: int = 3
    init_scale: float = 1e-2
    stop_below: float | None = None

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if not 0 < self.threshold < 1:
            raise ValueError("threshold must lie in (0, 1)")
        if not (self.tau > 0 and self.dt > 0):
            raise ValueError("tau and dt must be positive")
        if self.restarts < 1:
            raise ValueError("need at least one restart")

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class GrapeResult:
    pulse: ControlPulse
    loss: float
    history: np.ndarray
    converged: bool

    def to_json(self) -> dict:
        return {
            "loss": self.loss,
            "converged": self.converged,
            "n": self.pulse.n,
            "dt": self.pulse.dt,
            "history": [float(x) for x in self.history],
        }


@dataclass
class SynthesisCurve:
    steps: list[int] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)
    threshold: float = 1e-3
    pulses: list[ControlPulse] = field(default_factory=list, repr=False)

    @property
    def n_c(self) -> int | None:
        """Smallest scheduled step count whose best loss is below the threshold."""
        for n, loss in zip(self.steps, self.losses):
            if loss < self.threshold:
                return n
        return None

    def rows(self):
        return list(zip(self.steps, self.losses))


# -- propagation -------------------------------------------------------------

def _as_stack(natives_dense) -> np.ndarray:
    """Stack channel matrices, dropping a vanishing imaginary part for faster eigh."""
    hs = np.asarray(natives_dense)
    if np.iscomplexobj(hs) and not np.any(hs.imag):
        hs = np.ascontiguousarray(hs.real)
    return hs


def step_hamiltonian(u_k: Sequence[float], natives_dense: Sequence[np.ndarray]) -> np.ndarray:
    if len(u_k) != len(natives_dense):
        raise ValueError(f"{len(u_k)} amplitudes for {len(natives_dense)} channels")
    return np.tensordot(np.asarray(u_k, dtype=float), np.asarray(natives_dense), axes=1)


def _expm_from_eig(lam: np.ndarray, v: np.ndarray, dt: float) -> np.ndarray:
    return (v * np.exp(-1j * lam * dt)) @ v.conj().T


def propagate(pulse: ControlPulse, natives_dense: Sequence[np.ndarray]) -> np.ndarray:
    """Total evolution ``U_n ... U_1`` with step 0 applied first."""
    hs = _as_stack(natives_dense)
    if pulse.channels != hs.shape[0]:
        raise ValueError(f"pulse has {pulse.channels} channels, {hs.shape[0]} natives given")
    u = np.eye(hs.shape[1], dtype=complex)
    for row in pulse.amplitudes:
        lam, v = np.linalg.eigh(np.tensordot(row, hs, axes=1))
        u = _expm_from_eig(lam, v, pulse.dt) @ u
    return u


def fidelity(u: np.ndarray, v: np.ndarray) -> float:
    """Phase-insensitive unitary fidelity ``|tr(U^dag V)|^2 / D^2``."""
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch {u.shape} vs {v.shape}")
    d = u.shape[0]
    return min(1.0, float(abs(np.vdot(u, v)) ** 2 / d**2))


def target_unitary(h_dense: np.ndarray, tau: float) -> np.ndarray:
    """``exp(-i H tau)`` by Hermitian eigendecomposition."""
    lam, v = np.linalg.eigh(h_dense)
    return _expm_from_eig(lam, v, tau)


def loss_and_gradient(pulse: ControlPulse, natives_dense: Sequence[np.ndarray], u_target: np.ndarray):
    """Loss ``1 - F`` and its exact gradient with respect to every amplitude.

    The derivative of ``exp(-i H dt)`` along ``H_a`` is ``V (G * V^dag H_a V) V^dag``
    in the eigenbasis of ``H``, with divided differences
    ``G_ij = (e^{-i l_i dt} - e^{-i l_j dt}) / (l_i - l_j)``.  They are
    evaluated as ``-i dt e^{-i (l_i + l_j) dt / 2} sinc((l_i - l_j) dt / 2)``,
    which is exact for degenerate eigenvalues too.
    """
    hs = _as_stack(natives_dense)
    n, dt = pulse.n, pulse.dt
    d = hs.shape[1]
    lam, v = np.linalg.eigh(np.tensordot(pulse.amplitudes, hs, axes=1))
    vh = np.conj(np.swapaxes(v, 1, 2))
    steps = (v * np.exp(-1j * dt * lam)[:, None, :]) @ vh
    # fwd[k] = U_{k-1} ... U_0 ; bwd[k] = W^dag U_{n-1} ... U_{k+1}
    fwd = np.empty((n + 1, d, d), dtype=complex)
    fwd[0] = np.eye(d)
    for k in range(n):
        fwd[k + 1] = steps[k] @ fwd[k]
    bwd = np.empty((n, d, d), dtype=complex)
    acc = u_target.conj().T
    for k in range(n - 1, -1, -1):
        bwd[k] = acc
        acc = acc @ steps[k]
    g = np.trace(acc)  # tr(W^dag U)
    loss = max(0.0, 1.0 - abs(g) ** 2 / d**2)

    half = np.exp(-0.5j * dt * lam)
    dl = lam[:, :, None] - lam[:, None, :]
    gamma = (-1j * dt) * (half[:, :, None] * half[:, None, :]) * np.sinc(dl * (dt / (2 * np.pi)))
    m = vh @ (fwd[:-1] @ bwd) @ v  # eigenbasis images of A_k B_k
    h_eig = vh[:, None] @ hs[None] @ v[:, None]  # (n, A, d, d)
    # dg[k, a] = sum_ij m[k, j, i] gamma[k, i, j] h_eig[k, a, i, j]
    w = (np.swapaxes(m, 1, 2) * gamma).reshape(n, 1, d * d)
    dg = (w @ h_eig.reshape(n, -1, d * d).swapaxes(1, 2))[:, 0, :]
    grad = -2.0 * np.real(np.conj(g) * dg) / d**2
    return float(loss), grad


# -- optimization ------------------------------------------------------------

class NonFiniteLossError(FloatingPointError):
    pass


def optimize(
    init: ControlPulse,
    target: np.ndarray,
    cfg: GrapeConfig,
    natives_dense: Sequence[np.ndarray],
    iterations: int | None = None,
) -> GrapeResult:
    """Adam descent on ``1 - F`` for a fixed step count.

    Adam runs on the step angles ``theta = u dt`` so the learning rate is a
    rotation angle per iteration, independent of ``dt``.

    The best pulse seen (including ``init``) is returned.  Iteration stops
    early once the best loss drops below ``cfg.stop_below`` when that is set.
    """
    budget = cfg.iterations if iterations is None else iterations
    u = init.amplitudes.copy()
    dt = init.dt
    m1 = np.zeros_like(u)
    m2 = np.zeros_like(u)
    history = []
    best_loss, best_u = math.inf, u.copy()
    for it in range(budget + 1):
        loss, grad = loss_and_gradient(ControlPulse(u, dt), natives_dense, target)
        if not math.isfinite(loss) or not np.all(np.isfinite(grad)):
            raise NonFiniteLossError(f"non-finite loss/gradient at iteration {it}")
        history.append(loss)
        if loss < best_loss:
            best_loss, best_u = loss, u.copy()
        if it == budget or (cfg.stop_below is not None and best_loss < cfg.stop_below):
            break
        grad = grad / dt  # gradient in step angles theta = u dt
        m1 = cfg.beta1 * m1 + (1 - cfg.beta1) * grad
        m2 = cfg.beta2 * m2 + (1 - cfg.beta2) * grad**2
        mhat = m1 / (1 - cfg.beta1 ** (it + 1))
        vhat = m2 / (1 - cfg.beta2 ** (it + 1))
        u = u - (cfg.learning_rate / dt) * mhat / (np.sqrt(vhat) + cfg.adam_eps)
        if cfg.u_max is not None:
            np.clip(u, -cfg.u_max, cfg.u_max, out=u)
    return GrapeResult(ControlPulse(best_u, dt), float(best_loss), np.asarray(history), best_loss < cfg.threshold)


def random_pulse(n: int, channels: int, dt: float, scale: float, seed) -> ControlPulse:
    rng = np.random.default_rng(seed)
    return ControlPulse(scale * rng.standard_normal((n, channels)), dt)


def warm_start_sweep(
    target: np.ndarray,
    schedule: Sequence[int],
    cfg: GrapeConfig,
    natives_dense: Sequence[np.ndarray],
    stop_at_threshold: bool = False,
) -> SynthesisCurve:
    """Best loss versus step count with warm-started, fixed-budget runs.

    ``cfg.restarts`` independent chains advance in lockstep.  Chain ``r``
    starts from a small random pulse seeded by ``(cfg.seed, r)``; at every
    later step count it starts from its own previous optimum padded with
    idle steps, which preserves the incumbent loss.  The curve keeps the
    best chain at each ``n``.  With ``stop_at_threshold`` the sweep ends at
    the first ``n`` below ``cfg.threshold``.
    """
    schedule = list(schedule)
    if not schedule:
        raise ValueError("empty schedule")
    if any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("schedule must be strictly increasing")
    channels = len(natives_dense)
    chains: list[ControlPulse | None] = [None] * cfg.restarts
    curve = SynthesisCurve(threshold=cfg.threshold)
    for n in schedule:
        best: GrapeResult | None = None
        for r in range(cfg.restarts):
            prior = chains[r]
            if prior is None:
                init = random_pulse(n, channels, cfg.dt, cfg.init_scale, (cfg.seed, r))
            else:
                init = prior.extended(n)
            res = optimize(init, target, cfg, natives_dense)
            chains[r] = res.pulse
            if best is None or res.loss < best.loss:
                best = res
        curve.steps.append(n)
        curve.losses.append(best.loss)
        curve.pulses.append(best.pulse)
        logger.debug("n=%d best loss %.3e", n, best.loss)
        if stop_at_threshold and best.loss < cfg.threshold:
            break
    return curve


# -- constructive product formulas -----------------------------------------

def _channel(ch, channels: int) -> int:
    if isinstance(ch, str):
        return CHANNELS.index(ch)
    if not 0 <= ch < channels:
        raise IndexError(f"channel {ch} out of range")
    return int(ch)


def trotter_pulse(alpha: float, beta: float, ch1, ch2, n: int, dt: float, channels: int = 4) -> ControlPulse:
    """Steps realizing ``(e^{i alpha H1/n} e^{i beta H2/n})^n``.

    Each group applies ``H2`` first, then ``H1``, with amplitudes
    ``-beta/(n dt)`` and ``-alpha/(n dt)`` since ``e^{i t H} = e^{-i (-t/dt) H dt}``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    a, b = _channel(ch1, channels), _channel(ch2, channels)
    if a == b:
        raise ValueError("channels must differ")
    u = np.zeros((2 * n, channels))
    u[0::2, b] = -beta / (n * dt)
    u[1::2, a] = -alpha / (n * dt)
    return ControlPulse(u, dt)


def commutator_pulse(ch1, ch2, n: int, dt: float, channels: int = 4) -> ControlPulse:
    """Steps realizing ``(e^{i H1/s} e^{i H2/s} e^{-i H1/s} e^{-i H2/s})^n`` with ``s = sqrt(n)``.

    The product tends to ``exp(-[H1, H2])``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    a, b = _channel(ch1, channels), _channel(ch2, channels)
    amp = 1.0 / (math.sqrt(n) * dt)
    group = np.zeros((4, channels))
    # rightmost factor first: e^{-i H2/s}, e^{-i H1/s}, e^{+i H2/s}, e^{+i H1/s}
    group[0, b] = amp
    group[1, a] = amp
    group[2, b] = -amp
    group[3, a] = -amp
    return ControlPulse(np.tile(group, (n, 1)), dt)


def nested_commutator_pulse(base: ControlPulse, native: ControlPulse) -> ControlPulse:
    """Group commutator of a composite segment with a native segment.

    Steps run ``native``, ``base``, ``native`` reversed, ``base`` reversed,
    so the step count is ``2 * base.n + 2 * native.n``.
    """
    return native.then(base).then(native.inverse()).then(base.inverse())


# -- pulse files -------------------------------------------------------------

def write_pulse(pulse: ControlPulse, path: str | Path, meta: dict | None = None) -> Path:
    """CSV ``step,u_X,u_Z,u_break,u_int`` plus a ``.json`` sidecar."""
    path = Path(path)
    names = [f"u_{c}" for c in CHANNELS] if pulse.channels == len(CHANNELS) else [
        f"u_{i}" for i in range(pulse.channels)
    ]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", *names])
        for k, row in enumerate(pulse.amplitudes):
            w.writerow([k, *(repr(float(x)) for x in row)])
    side = {"dt": pulse.dt, "n": pulse.n, "channels": names}
    side.update(meta or {})
    path.with_suffix(".json").write_text(json.dumps(side, indent=2, sort_keys=True) + "\n")
    return path


def read_pulse(path: str | Path) -> ControlPulse:
    path = Path(path)
    side = json.loads(path.with_suffix(".json").read_text())
    with path.open() as fh:
        rows = list(csv.reader(fh))
    amps = np.array([[float(x) for x in r[1:]] for r in rows[1:]])
    return ControlPulse(amps, float(side["dt"]))
