"""
Pseudospectral reference solvers and dataset generators.

1D nonlinear advection (``u_t = -u u_x``, optional ``-nu k^4`` hyperviscosity)
lives on the unit torus with the package-wide ``2*pi*k`` derivative factor.
The 2D Kolmogorov-forced Navier-Stokes problem keeps the literal forcing
``4 cos(4y) x_hat - 0.1 u`` of its source experiments, so that solver alone
works on the ``[0, 2*pi)`` convention with integer wavenumbers.

Nonlinear products are formed by the transform method; the 3/2 rule forms
them on a 3N/2 grid and truncates back so quadratic products generate no
aliases, while the 2/3 rule truncates the inputs instead.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, replace

import numpy as np

from spectralops.grid import (
    Domain,
    RealField,
    colatitudes,
    irfft_norm,
    longitudes,
    rfft_norm,
)
from spectralops.sphere import latitude_mask


class Dealias(enum.Enum):
    NONE = "none"
    THREE_HALVES = "three_halves"
    TWO_THIRDS = "two_thirds"


class Integrator(enum.Enum):
    RK4 = "rk4"
    EULER = "euler"


@dataclass(frozen=True)
class SolverConfig:
    """Shared solver settings (1D advection and 2D Navier-Stokes)."""

    n: int = 128
    dt: float = 1e-3
    nu: float = 0.0
    dealias: Dealias = Dealias.THREE_HALVES
    integrator: Integrator = Integrator.RK4
    reynolds: float = 1000.0
    drag: float = 0.1
    forcing_amplitude: float = 4.0
    forcing_wavenumber: int = 4

    def __post_init__(self) -> None:
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.n < 4 or self.n % 2 != 0:
            raise ValueError("n must be even and >= 4")
        if self.dealias is Dealias.THREE_HALVES and (3 * self.n) % 2 != 0:
            raise ValueError("3/2 dealiasing needs 3N/2 integral")


# ---------------------------------------------------------------------------
# dealiased products (rfft layout, amplitude normalization)
# ---------------------------------------------------------------------------


def _pad_rfft_1d(z: np.ndarray, n_old: int, n_new: int) -> np.ndarray:
    out = np.zeros(z.shape[:-1] + (n_new // 2 + 1,), dtype=np.complex128)
    k = n_old // 2
    out[..., : k + 1] = z
    if n_old % 2 == 0:
        out[..., k] *= 0.5
    return out


def _truncate_rfft_1d(z: np.ndarray, n_new: int) -> np.ndarray:
    """Strict truncation: retain |k| < N/2, zeroing the new Nyquist bin.

    Keeping a folded Nyquist value breaks the conservation properties of
    the dealiased advection term (producing a slow numerical instability),
    so products are truncated strictly below the fold boundary.
    """
    k = n_new // 2
    out = np.array(z[..., : k + 1])
    if n_new % 2 == 0:
        out[..., k] = 0.0
    return out


def product_1d(z_a: np.ndarray, z_b: np.ndarray, n: int, dealias: Dealias) -> np.ndarray:
    """Spectrum of the pointwise product of two 1D spectra."""
    if dealias is Dealias.THREE_HALVES:
        m = (3 * n) // 2
        a = irfft_norm(_pad_rfft_1d(z_a, n, m), m)
        b = irfft_norm(_pad_rfft_1d(z_b, n, m), m)
        return _truncate_rfft_1d(rfft_norm(a * b), n)
    if dealias is Dealias.TWO_THIRDS:
        kc = n // 3
        mask = np.arange(n // 2 + 1) <= kc
        a = irfft_norm(z_a * mask, n)
        b = irfft_norm(z_b * mask, n)
        return rfft_norm(a * b) * mask
    a = irfft_norm(z_a, n)
    b = irfft_norm(z_b, n)
    return rfft_norm(a * b)


def _pad_rows(z: np.ndarray, h_old: int, h_new: int) -> np.ndarray:
    out = np.zeros(z.shape[:-2] + (h_new,) + z.shape[-1:], dtype=np.complex128)
    k = h_old // 2
    out[..., :k, :] = z[..., :k, :]
    if h_old % 2 == 0:
        out[..., k, :] = 0.5 * z[..., k, :]
        out[..., h_new - k, :] = 0.5 * z[..., k, :]
        out[..., h_new - k + 1 :, :] = z[..., k + 1 :, :]
    else:
        out[..., : k + 1, :] = z[..., : k + 1, :]
        out[..., h_new - k :, :] = z[..., k + 1 :, :]
    return out


def _truncate_rows(z: np.ndarray, h_new: int) -> np.ndarray:
    """Strict row truncation: retain |k| < H/2 (see _truncate_rfft_1d)."""
    h_old = z.shape[-2]
    k = h_new // 2
    out = np.zeros(z.shape[:-2] + (h_new,) + z.shape[-1:], dtype=np.complex128)
    out[..., :k, :] = z[..., :k, :]
    if h_new % 2 == 0:
        out[..., k + 1 :, :] = z[..., h_old - k + 1 :, :]
    else:
        out[..., : k + 1, :] = z[..., : k + 1, :]
        out[..., k + 1 :, :] = z[..., h_old - k :, :]
    return out


def product_2d(z_a: np.ndarray, z_b: np.ndarray, hw: tuple[int, int], dealias: Dealias) -> np.ndarray:
    """Spectrum of the pointwise product of two 2D rfft2 spectra."""
    h, w = hw
    if dealias is Dealias.THREE_HALVES:
        mh, mw = (3 * h) // 2, (3 * w) // 2
        za = _pad_rfft_1d(_pad_rows(z_a, h, mh), w, mw)
        zb = _pad_rfft_1d(_pad_rows(z_b, h, mh), w, mw)
        a = np.fft.irfft2(za, s=(mh, mw)) * (mh * mw)
        b = np.fft.irfft2(zb, s=(mh, mw)) * (mh * mw)
        prod = np.fft.rfft2(a * b) / (mh * mw)
        return _truncate_rfft_1d(_truncate_rows(prod, h), w)
    if dealias is Dealias.TWO_THIRDS:
        kh, kw = h // 3, w // 3
        rows = np.abs(np.fft.fftfreq(h, d=1.0 / h))
        mask = (rows[:, None] <= kh) & (np.arange(w // 2 + 1)[None, :] <= kw)
        a = np.fft.irfft2(z_a * mask, s=(h, w)) * (h * w)
        b = np.fft.irfft2(z_b * mask, s=(h, w)) * (h * w)
        return (np.fft.rfft2(a * b) / (h * w)) * mask
    a = np.fft.irfft2(z_a, s=(h, w)) * (h * w)
    b = np.fft.irfft2(z_b, s=(h, w)) * (h * w)
    return np.fft.rfft2(a * b) / (h * w)


# ---------------------------------------------------------------------------
# 1D nonlinear advection
# ---------------------------------------------------------------------------


def deriv_wavenumbers(n: int) -> np.ndarray:
    """rfft wavenumbers with the even-size Nyquist zeroed.

    The Nyquist bin of a real signal folds +N/2 and -N/2 together; its odd
    derivative is not representable on the grid, so the standard convention
    drops it (even powers of k keep the full range).
    """
    k = np.arange(n // 2 + 1, dtype=np.float64)
    if n % 2 == 0:
        k[-1] = 0.0
    return k


def advection_rhs(u_hat: np.ndarray, cfg: SolverConfig) -> np.ndarray:
    """Spectrum of ``-u u_x`` (plus optional hyperviscosity) on the unit torus."""
    n = cfg.n
    if u_hat.shape[-1] != n // 2 + 1:
        raise ValueError(f"expected {n // 2 + 1} bins for n={n}")
    ux_hat = (2j * np.pi * deriv_wavenumbers(n)) * u_hat
    rhs = -product_1d(u_hat, ux_hat, n, cfg.dealias)
    if cfg.nu:
        k = np.arange(n // 2 + 1)
        rhs = rhs - cfg.nu * (2.0 * np.pi * k) ** 4 * u_hat
    return rhs


def rk4_step(state: np.ndarray, rhs, dt: float):
    """Classical four-stage Runge-Kutta update; NaNs propagate as divergence."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    k1 = rhs(state)
    k2 = rhs(state + 0.5 * dt * k1)
    k3 = rhs(state + 0.5 * dt * k2)
    k4 = rhs(state + dt * k3)
    return state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def euler_step(state: np.ndarray, rhs, dt: float):
    return state + dt * rhs(state)


def step_fn(cfg: SolverConfig):
    return rk4_step if cfg.integrator is Integrator.RK4 else euler_step


def run_advection(
    u0: np.ndarray,
    cfg: SolverConfig,
    n_steps: int,
    record_every: int = 1,
) -> tuple[np.ndarray, int | None]:
    """March the 1D advection equation, recording spectra.

    Returns ``(spectra, divergence_step)`` where spectra stacks the initial
    spectrum and every ``record_every``-th step; a non-finite state stops
    the run and reports the step index.
    """
    u_hat = rfft_norm(np.asarray(u0, dtype=np.float64))
    stepper = step_fn(cfg)
    frames = [u_hat.copy()]
    for step in range(1, n_steps + 1):
        u_hat = stepper(u_hat, lambda z: advection_rhs(z, cfg), cfg.dt)
        if not np.all(np.isfinite(u_hat)):
            return np.stack(frames), step
        if step % record_every == 0:
            frames.append(u_hat.copy())
    return np.stack(frames), None


# ---------------------------------------------------------------------------
# 2D Kolmogorov-forced Navier-Stokes (vorticity form, 2*pi domain)
# ---------------------------------------------------------------------------


def _ns_wavenumbers(n: int):
    """Returns (kx_d, ky_d, k2, k2_safe): derivative grids zero the Nyquist."""
    ky = np.fft.fftfreq(n, d=1.0 / n).astype(np.float64)[:, None]
    kx = np.arange(n // 2 + 1, dtype=np.float64)[None, :]
    k2 = kx**2 + ky**2
    k2_safe = k2.copy()
    k2_safe[0, 0] = 1.0
    kx_d = kx.copy()
    ky_d = ky.copy()
    if n % 2 == 0:
        kx_d[0, -1] = 0.0
        ky_d[n // 2, 0] = 0.0
    return kx_d, ky_d, k2, k2_safe


def forcing_curl_spectrum(cfg: SolverConfig) -> np.ndarray:
    """curl of ``A cos(q y) x_hat`` is ``A q sin(q y)``: two row-axis modes."""
    n = cfg.n
    a, q = cfg.forcing_amplitude, cfg.forcing_wavenumber
    out = np.zeros((n, n // 2 + 1), dtype=np.complex128)
    out[q, 0] = a * q / 2j
    out[n - q, 0] = -a * q / 2j
    return out


def velocity_from_vorticity(omega_hat: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Spatial (u, v) recovered through the streamfunction (omega = -laplace psi)."""
    kx, ky, _, k2_safe = _ns_wavenumbers(n)
    psi_hat = omega_hat / k2_safe
    psi_hat[0, 0] = 0.0
    u_hat = 1j * ky * psi_hat
    v_hat = -1j * kx * psi_hat
    u = np.fft.irfft2(u_hat, s=(n, n)) * (n * n)
    v = np.fft.irfft2(v_hat, s=(n, n)) * (n * n)
    return u, v


def ns2d_kolmogorov_rhs(omega_hat: np.ndarray, cfg: SolverConfig) -> np.ndarray:
    """Vorticity tendency: advection + (1/Re) laplacian + forcing curl - drag."""
    n = cfg.n
    if omega_hat.shape != (n, n // 2 + 1):
        raise ValueError(f"expected ({n}, {n // 2 + 1}) spectrum")
    if np.abs(omega_hat[0, 0]) > 1e-12:
        warnings.warn("nonzero mean vorticity projected out", stacklevel=2)
        omega_hat = omega_hat.copy()
        omega_hat[0, 0] = 0.0
    kx, ky, k2, k2_safe = _ns_wavenumbers(n)
    psi_hat = omega_hat / k2_safe
    psi_hat[0, 0] = 0.0
    u_hat = 1j * ky * psi_hat
    v_hat = -1j * kx * psi_hat
    wx_hat = 1j * kx * omega_hat
    wy_hat = 1j * ky * omega_hat
    adv = product_2d(u_hat, wx_hat, (n, n), cfg.dealias) + product_2d(
        v_hat, wy_hat, (n, n), cfg.dealias
    )
    return -adv - (k2 / cfg.reynolds) * omega_hat + forcing_curl_spectrum(cfg) - cfg.drag * omega_hat


def initial_vorticity(rng: np.random.Generator, n: int, k_peak: float = 6.0, rms: float = 4.0) -> np.ndarray:
    """Random smooth zero-mean vorticity spectrum with a low-k envelope."""
    _, _, k2, _ = _ns_wavenumbers(n)
    envelope = np.exp(-k2 / (2.0 * k_peak**2))
    phase = rng.standard_normal((n, n // 2 + 1)) + 1j * rng.standard_normal((n, n // 2 + 1))
    omega_hat = envelope * phase
    omega_hat[0, 0] = 0.0
    omega_hat[:, -1] = 0.0  # keep initial data clear of the fold boundary
    omega_hat[n // 2, :] = 0.0
    omega = np.fft.irfft2(omega_hat, s=(n, n)) * (n * n)
    omega *= rms / max(np.sqrt(np.mean(omega**2)), 1e-30)
    return np.fft.rfft2(omega) / (n * n)


@dataclass
class NsDataset:
    """In-memory trajectory bundle: (n_traj, n_snap, 2, N, N) velocities."""

    snapshots: np.ndarray
    cfg: SolverConfig
    snap_interval: float
    burn_in: float
    seed: int
    diverged_trajectories: list[int]


def ns_timestep(cfg: SolverConfig, omega_hat: np.ndarray, snap_interval: float, cfl: float = 0.5) -> float:
    """Fixed step from a CFL estimate at init, rounded to divide snap_interval.

    The velocity scale is the max of the initial speed and the laminar
    forcing-balance speed ``A / (drag + q^2/Re)``, which bounds the
    transient spin-up before nonlinear transfer saturates the flow.
    """
    n = cfg.n
    u, v = velocity_from_vorticity(omega_hat, n)
    u_laminar = cfg.forcing_amplitude / (cfg.drag + cfg.forcing_wavenumber**2 / cfg.reynolds)
    umax = max(float(np.max(np.abs(u))), float(np.max(np.abs(v))), u_laminar, 1e-6)
    dt_max = cfl * (2.0 * np.pi / n) / umax
    n_sub = max(1, int(np.ceil(snap_interval / dt_max)))
    return snap_interval / n_sub


def generate_ns_dataset(
    cfg: SolverConfig,
    n_traj: int,
    n_snapshots: int,
    snap_interval: float,
    burn_in: float,
    seed: int = 0,
) -> NsDataset:
    """Integrate Kolmogorov flow and record (u, v) snapshots after burn-in."""
    if snap_interval <= 0:
        raise ValueError("snap_interval must be positive")
    rng = np.random.default_rng(seed)
    n = cfg.n
    out = np.zeros((n_traj, n_snapshots, 2, n, n))
    diverged = []
    for traj in range(n_traj):
        omega_hat = initial_vorticity(rng, n)
        dt = ns_timestep(cfg, omega_hat, snap_interval)
        cfg_t = replace(cfg, dt=dt)
        stepper = step_fn(cfg_t)
        n_burn = int(round(burn_in / dt))
        n_sub = int(round(snap_interval / dt))
        ok = True
        for _ in range(n_burn):
            omega_hat = stepper(omega_hat, lambda z: ns2d_kolmogorov_rhs(z, cfg_t), dt)
            if not np.all(np.isfinite(omega_hat)):
                ok = False
                break
        snap = 0
        while ok and snap < n_snapshots:
            u, v = velocity_from_vorticity(omega_hat, n)
            out[traj, snap, 0] = u
            out[traj, snap, 1] = v
            snap += 1
            if snap == n_snapshots:
                break
            for _ in range(n_sub):
                omega_hat = stepper(omega_hat, lambda z: ns2d_kolmogorov_rhs(z, cfg_t), dt)
            if not np.all(np.isfinite(omega_hat)):
                ok = False
        if not ok:
            diverged.append(traj)
    return NsDataset(
        snapshots=out,
        cfg=cfg,
        snap_interval=snap_interval,
        burn_in=burn_in,
        seed=seed,
        diverged_trajectories=diverged,
    )


# ---------------------------------------------------------------------------
# spherical analytic dataset and forcing
# ---------------------------------------------------------------------------


DAY_HOURS = 24.0
YEAR_HOURS = 1008.0


def find_center(t: float) -> tuple[float, float, float, float]:
    """Daily-circling, seasonally-declining forcing centers."""
    time_of_day = t / DAY_HOURS
    time_of_year = t / YEAR_HOURS
    max_declination = 0.4
    lon_center = time_of_day * 2.0 * np.pi
    lat_center = np.sin(time_of_year * 2.0 * np.pi) * max_declination
    lon_anti = np.pi + lon_center
    return lon_center, lat_center, lon_anti, lat_center


def season_day_forcing(
    lon_grid: np.ndarray, colat_grid: np.ndarray, t: float, h_f0: float
) -> RealField:
    """Gaussian-in-latitude, cosine-in-longitude forcing field.

    The center circles the globe once per 24 model hours; its latitude
    oscillates about the equator with amplitude 0.4 rad over a 1008-hour
    year.  ``colat_grid`` is colatitude; the Gaussian acts on latitude.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    lon_c, lat_c, _, _ = find_center(t)
    sigma = np.pi / 2.0
    lat = np.pi / 2.0 - colat_grid
    coefficients = np.cos(lon_grid[None, :] - lon_c) * np.exp(
        -((lat[:, None] - lat_c) ** 2) / sigma**2
    )
    return RealField((h_f0 * coefficients)[None], domain=Domain.SPHERE)


def smooth_sphere_field(
    rng: np.random.Generator, n_rows: int, n_cols: int, k_eq: int
) -> np.ndarray:
    """Bandlimited random field shaped by the latitude-dependent cutoff."""
    z = np.fft.rfft2(rng.standard_normal((n_rows, n_cols))) / (n_rows * n_cols)
    rows = np.abs(np.fft.fftfreq(n_rows, d=1.0 / n_rows))
    z *= (rows[:, None] <= max(n_rows // 3, 2)) * np.exp(
        -np.arange(n_cols // 2 + 1)[None, :] ** 2 / (2.0 * (k_eq / 2.0) ** 2)
    )
    f = np.fft.irfft2(z, s=(n_rows, n_cols)) * (n_rows * n_cols)
    zr = rfft_norm(f, axis=-1) * latitude_mask(n_rows, n_cols, k_eq)
    f = irfft_norm(zr, n_cols, axis=-1)
    return f / max(np.sqrt(np.mean(f**2)), 1e-30)


@dataclass
class SphereDataset:
    snapshots: np.ndarray  # (n_traj, n_snap, 1, H, W)
    omega_rot: float
    snap_interval: float
    k_eq: int
    seed: int
    forcing_h_f0: float | None


def generate_sphere_dataset(
    n_rows: int,
    n_cols: int,
    omega_rot: float,
    n_traj: int,
    n_snapshots: int,
    snap_interval: float = 1.0,
    k_eq: int | None = None,
    seed: int = 0,
    forcing_h_f0: float | None = None,
) -> SphereDataset:
    """Analytic solid-body-rotation trajectories (exact spectral shifts).

    ``u(lambda, theta, t) = f0(lambda - omega_rot * t, theta)`` for random
    smooth ``f0``; an optional additive forcing term keeps the truth
    analytic while introducing daily/yearly time dependence.
    """
    rng = np.random.default_rng(seed)
    k_eq = k_eq if k_eq is not None else n_cols // 4
    out = np.zeros((n_traj, n_snapshots, 1, n_rows, n_cols))
    lam = longitudes(n_cols)
    colat = colatitudes(n_rows)
    k = np.arange(n_cols // 2 + 1)
    for traj in range(n_traj):
        f0 = smooth_sphere_field(rng, n_rows, n_cols, k_eq)
        z0 = rfft_norm(f0, axis=-1)
        for snap in range(n_snapshots):
            t = snap * snap_interval
            shift = omega_rot * t / (2.0 * np.pi)  # domain units of [0, 1)
            field = irfft_norm(z0 * np.exp(-2j * np.pi * k * shift), n_cols, axis=-1)
            if forcing_h_f0 is not None:
                field = field + season_day_forcing(lam, colat, t, forcing_h_f0).data[0]
            out[traj, snap, 0] = field
    return SphereDataset(
        snapshots=out,
        omega_rot=omega_rot,
        snap_interval=snap_interval,
        k_eq=k_eq,
        seed=seed,
        forcing_h_f0=forcing_h_f0,
    )
