"""Closed-loop assembly, fixed-step integration, and proof-derived oracles.

Leaders translate at the common velocity v_c; each follower is a double
integrator driven by its control input plus an exosystem-generated
disturbance.  The engine integrates the full stack

    [p (all agents) | v_f | eta_f | vartheta_f | theta_hat_f]

with classical RK4, enforces the no-collision assumption at every step, and
exposes the quantities the stability proofs reason about: the closed-loop
system matrix, the xi-transformation, and the Lyapunov certificate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .control_laws import validate_gains
from .errors import (
    CertificateFailed,
    CollisionDetected,
    DimensionMismatch,
    NonFiniteState,
)

DEFAULT_STEP = 1e-3
DEFAULT_COLLISION_EPS = 1e-3


@dataclass
class CompiledScenario:
    """Everything the engine needs, synthesized once at load time."""

    graph: object
    bearings: object
    laplacian: object
    p_star0: np.ndarray          # (n, d) target configuration at t=0
    v_c: np.ndarray              # (d,)
    p0: np.ndarray               # (n, d) initial positions
    v_f0: np.ndarray             # (n_f, d) initial follower velocities
    mode: str                    # "known" | "adaptive" | "feedback_only"
    gains: object
    specs: list                  # per-follower DisturbanceSpec
    exos: list                   # per-follower CanonicalExosystem
    models: list                 # per-follower InternalModel
    params: list                 # per-follower AdaptiveParameterization
    eta0: list                   # per-follower initial compensator state
    theta_hat0: list             # per-follower initial estimates
    lambdas: list                # per-follower adaptation-gain matrices
    freeze_theta: bool = False
    h: float = DEFAULT_STEP
    t_final: float = 10.0
    record_every: int = 100
    collision_eps: float = DEFAULT_COLLISION_EPS
    output_dir: str = "out"
    oracles: bool = False

    @property
    def n(self):
        return self.graph.n

    @property
    def d(self):
        return self.graph.d

    @property
    def n_l(self):
        return self.graph.n_l

    @property
    def n_f(self):
        return self.graph.n_f

    def target_positions(self, t):
        """Target configuration at time t (leaders anchor it, followers solved)."""
        from .formation_graph import localize_followers

        p_l = self.p_star0[: self.n_l] + t * self.v_c
        p_f, _ = localize_followers(self.laplacian, p_l, self.v_c)
        return np.vstack([p_l, p_f])


@dataclass
class Trajectory:
    """Recorded samples of one simulation run."""

    times: np.ndarray            # (S,)
    positions: np.ndarray        # (S, n, d)
    velocities: np.ndarray       # (S, n, d); leaders at v_c
    eta: np.ndarray              # (S, q_f)
    vartheta: np.ndarray         # (S, q_f)
    theta_hat: np.ndarray        # (S, K); K = 0 outside adaptive mode
    min_dist: np.ndarray         # (S,)
    step: float = 0.0


@dataclass
class LyapunovCertificate:
    """Constants of the Lyapunov argument for the adaptive closed loop."""

    Q_c: np.ndarray
    P_c: np.ndarray
    G_c: np.ndarray
    gamma: float
    gamma_sigma: float


def stack_follower_blocks(models, d):
    """Block-diagonal (M_f, E_f) over the followers, each block kron'd with I_d."""
    M_f = sla.block_diag(*[np.kron(m.M, np.eye(d)) for m in models])
    E_f = sla.block_diag(*[np.kron(m.E.reshape(1, -1), np.eye(d)) for m in models])
    return M_f, E_f


def assemble_A_sigma(B_ff, models, d, gains):
    """Closed-loop system matrix [[0, I, 0], [-kp B_ff, -kv B_ff, E_f], [0, 0, M_f]]."""
    B_ff = np.asarray(B_ff, dtype=float)
    nfd = B_ff.shape[0]
    if B_ff.shape[0] != B_ff.shape[1]:
        raise DimensionMismatch("B_ff must be square")
    if nfd != len(models) * d:
        raise DimensionMismatch(
            f"B_ff is {nfd}x{nfd} but {len(models)} models in dimension {d} "
            f"need {len(models) * d}"
        )
    M_f, E_f = stack_follower_blocks(models, d)
    q_f = M_f.shape[0]
    if E_f.shape != (nfd, q_f):
        raise DimensionMismatch(
            f"E_f has shape {E_f.shape}, expected ({nfd}, {q_f})"
        )
    A = np.zeros((2 * nfd + q_f, 2 * nfd + q_f))
    A[:nfd, nfd : 2 * nfd] = np.eye(nfd)
    A[nfd : 2 * nfd, :nfd] = -gains.kappa_p * B_ff
    A[nfd : 2 * nfd, nfd : 2 * nfd] = -gains.kappa_v * B_ff
    A[nfd : 2 * nfd, 2 * nfd :] = E_f
    A[2 * nfd :, 2 * nfd :] = M_f
    return A


def spectral_abscissa(A):
    """Maximum real part of the eigenvalues."""
    return float(np.linalg.eigvals(A).real.max())


class Engine:
    """Precomputed dense operators for the right-hand side."""

    def __init__(self, sc: CompiledScenario):
        n, d, n_l, n_f = sc.n, sc.d, sc.n_l, sc.n_f
        self.sc = sc
        self.n, self.d, self.n_l, self.n_f = n, d, n_l, n_f
        self.orders = [m.order for m in sc.models]
        self.q_f = sum(self.orders) * d
        self.K = sum(p.k for p in sc.params) if sc.mode == "adaptive" else 0

        B = sc.laplacian.B
        self.Bf = B[n_l * d :, :]                       # follower rows, acts on full stacks
        self.vc_tile = np.tile(sc.v_c, n_l)

        eye_d = np.eye(d)
        self.M_blk = sla.block_diag(*[np.kron(m.M, eye_d) for m in sc.models])
        self.N_blk = sla.block_diag(
            *[np.kron(m.N.reshape(-1, 1), eye_d) for m in sc.models]
        )
        self.MN_blk = sla.block_diag(
            *[np.kron((m.M @ m.N).reshape(-1, 1), eye_d) for m in sc.models]
        )
        self.Phi_blk = sla.block_diag(*[np.kron(e.Phi, eye_d) for e in sc.exos])
        self.E_blk = sla.block_diag(
            *[np.kron(m.E.reshape(1, -1), eye_d) for m in sc.models]
        )
        # index of the signal block (first d entries) of each follower's vartheta
        idx = []
        off = 0
        for m in self.orders:
            idx.extend(range(off, off + d))
            off += m * d
        self.d_idx = np.array(idx, dtype=int)
        # per-follower slices into the eta / vartheta stack
        self.blk_slices = []
        off = 0
        for m in self.orders:
            self.blk_slices.append(slice(off, off + m * d))
            off += m * d
        self.th_slices = []
        off = 0
        for p in sc.params:
            self.th_slices.append(slice(off, off + p.k))
            off += p.k

        # state layout offsets
        self.i_p = 0
        self.i_vf = n * d
        self.i_eta = self.i_vf + n_f * d
        self.i_var = self.i_eta + self.q_f
        self.i_th = self.i_var + self.q_f
        self.dim = self.i_th + self.K

    def initial_state(self):
        sc = self.sc
        y = np.zeros(self.dim)
        y[self.i_p : self.i_vf] = sc.p0.ravel()
        y[self.i_vf : self.i_eta] = sc.v_f0.ravel()
        y[self.i_eta : self.i_var] = np.concatenate(sc.eta0)
        y[self.i_var : self.i_th] = np.concatenate([e.theta0 for e in sc.exos])
        if self.K:
            y[self.i_th :] = np.concatenate(sc.theta_hat0)
        return y

    def rhs(self, y):
        sc = self.sc
        d, n_f = self.d, self.n_f
        p = y[self.i_p : self.i_vf]
        v_f = y[self.i_vf : self.i_eta]
        eta = y[self.i_eta : self.i_var]
        var = y[self.i_var : self.i_th]

        s_p = self.Bf @ p
        s_v = self.Bf @ np.concatenate([self.vc_tile, v_f])
        w = eta - self.N_blk @ v_f

        dy = np.empty(self.dim)
        if sc.mode == "known":
            u = self.E_blk @ w - sc.gains.kappa_p * s_p - sc.gains.kappa_v * s_v
        elif sc.mode == "adaptive":
            th = y[self.i_th :]
            u = -sc.gains.kappa_p * s_p - sc.gains.kappa_v * s_v
            for i in range(n_f):
                blk = self.blk_slices[i]
                param = sc.params[i]
                Wi = w[blk].reshape(self.orders[i], d)
                th_i = th[self.th_slices[i]]
                u[i * d : (i + 1) * d] += (param.E_nominal + th_i @ param.basis) @ Wi
                if sc.freeze_theta:
                    dy[self.i_th :][self.th_slices[i]] = 0.0
                else:
                    G = param.basis @ Wi        # (k, d): rho_i^T
                    s_i = s_p[i * d : (i + 1) * d] + s_v[i * d : (i + 1) * d]
                    dy[self.i_th :][self.th_slices[i]] = -sc.lambdas[i] @ (G @ s_i)
        else:  # feedback_only
            u = -sc.gains.kappa_p * s_p - sc.gains.kappa_v * s_v

        dy[self.i_p : self.i_p + self.n_l * d] = self.vc_tile
        dy[self.i_p + self.n_l * d : self.i_vf] = v_f
        dy[self.i_vf : self.i_eta] = u + var[self.d_idx]
        dy[self.i_eta : self.i_var] = self.M_blk @ eta + self.N_blk @ u - self.MN_blk @ v_f
        dy[self.i_var : self.i_th] = self.Phi_blk @ var
        return dy


def integrate(sc: CompiledScenario, t_final=None, h=None):
    """Run the closed loop with classical RK4 and record a Trajectory.

    Raises CollisionDetected when two agents come within the collision
    threshold and NonFiniteState on divergence.
    """
    t_final = sc.t_final if t_final is None else t_final
    h = sc.h if h is None else h
    if h <= 0 or t_final <= 0:
        raise ValueError("h and t_final must be positive")
    validate_gains(sc.gains, sc.laplacian.B_ff, sc.mode)

    eng = Engine(sc)
    y = eng.initial_state()
    n_steps = int(round(t_final / h))
    n, d = eng.n, eng.d
    iu, ju = np.triu_indices(n, 1)

    times, samples, dists = [], [], []

    def min_pair_dist(state):
        pm = state[eng.i_p : eng.i_vf].reshape(n, d)
        diff = pm[iu] - pm[ju]
        return np.sqrt((diff * diff).sum(axis=1))

    def check(state, t):
        if not np.isfinite(state).all():
            raise NonFiniteState(f"non-finite state component at t={t:.6f}")
        dv = min_pair_dist(state)
        k = int(dv.argmin())
        if dv[k] < sc.collision_eps:
            raise CollisionDetected(t, (int(iu[k]) + 1, int(ju[k]) + 1), float(dv[k]))
        return float(dv[k])

    dmin = check(y, 0.0)
    times.append(0.0)
    samples.append(y.copy())
    dists.append(dmin)

    rhs = eng.rhs
    for step in range(1, n_steps + 1):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * h * k1)
        k3 = rhs(y + 0.5 * h * k2)
        k4 = rhs(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = step * h
        dmin = check(y, t)
        if step % sc.record_every == 0 or step == n_steps:
            times.append(t)
            samples.append(y.copy())
            dists.append(dmin)

    S = len(times)
    arr = np.array(samples)
    positions = arr[:, eng.i_p : eng.i_vf].reshape(S, n, d)
    velocities = np.empty((S, n, d))
    velocities[:, : eng.n_l, :] = sc.v_c
    velocities[:, eng.n_l :, :] = arr[:, eng.i_vf : eng.i_eta].reshape(S, eng.n_f, d)
    return Trajectory(
        times=np.array(times),
        positions=positions,
        velocities=velocities,
        eta=arr[:, eng.i_eta : eng.i_var],
        vartheta=arr[:, eng.i_var : eng.i_th],
        theta_hat=arr[:, eng.i_th :],
        min_dist=np.array(dists),
        step=h,
    )


def _xi_samples(traj, sc):
    """xi_i(t) = eta_i + (T kron I) vartheta_i - (N kron I) v_i at each sample."""
    d = sc.d
    eye_d = np.eye(d)
    T_blk = sla.block_diag(*[np.kron(m.T, eye_d) for m in sc.models])
    N_blk = sla.block_diag(
        *[np.kron(m.N.reshape(-1, 1), eye_d) for m in sc.models]
    )
    v_f = traj.velocities[:, sc.n_l :, :].reshape(len(traj.times), -1)
    return traj.eta + traj.vartheta @ T_blk.T - v_f @ N_blk.T


def xi_oracle(traj, sc):
    """Max deviation of the transformed state from its exact flow exp(M t) xi(0)."""
    xi = _xi_samples(traj, sc)
    d = sc.d
    max_dev = 0.0
    off = 0
    for model in sc.models:
        m = model.order
        blk = xi[:, off : off + m * d]
        xi0 = blk[0].reshape(m, d)
        for t, row in zip(traj.times, blk):
            ref = sla.expm(model.M * t) @ xi0
            dev = np.linalg.norm(row.reshape(m, d) - ref)
            if dev > max_dev:
                max_dev = dev
        off += m * d
    return max_dev


def build_certificate(B_ff, gains, M_f, E_f):
    """Lyapunov certificate for the adaptive closed loop.

    Q_c = blkdiag(2 kp B_ff^2, 2 (kv B_ff^2 - B_ff)), P_c solves the Lyapunov
    identity with the feedback block, G_c solves G M_f + M_f^T G = -I, and
    gamma exceeds the Schur-complement threshold by 1 percent.
    """
    B_ff = np.asarray(B_ff, dtype=float)
    nfd = B_ff.shape[0]
    B2 = B_ff @ B_ff
    kp, kv = gains.kappa_p, gains.kappa_v
    Q_c = sla.block_diag(2.0 * kp * B2, 2.0 * (kv * B2 - B_ff))
    P_c = np.block([[(kp + kv) * B2, B_ff], [B_ff, B_ff]])
    for name, mat in (("Q_c", Q_c), ("P_c", P_c)):
        if np.linalg.eigvalsh(mat)[0] <= 0:
            raise CertificateFailed(f"{name} is not positive definite")
    q_f = M_f.shape[0]
    # G M_f + M_f^T G = -I  solved as a dense continuous Lyapunov equation
    G_c = sla.solve_continuous_lyapunov(M_f.T, -np.eye(q_f))
    G_c = 0.5 * (G_c + G_c.T)
    if np.linalg.eigvalsh(G_c)[0] <= 0:
        raise CertificateFailed("G_c is not positive definite")
    PBE = P_c[:, nfd:] @ E_f                     # P_c B_c E_f with B_c = [0; I]
    gamma_sigma = float(
        np.linalg.eigvalsh(PBE @ PBE.T)[-1] / np.linalg.eigvalsh(Q_c)[0]
    )
    return LyapunovCertificate(
        Q_c=Q_c, P_c=P_c, G_c=G_c, gamma=1.01 * gamma_sigma, gamma_sigma=gamma_sigma
    )


def lyapunov_monitor(traj, certificate, sc):
    """Per-sample value of V = x~' P_c x~ + gamma xi' G_c xi + th~' Lam^-1 th~.

    Requires the ground-truth parameter vectors (the simulation knows the
    frequencies even when the controller does not).
    """
    S = len(traj.times)
    d, n_l, n_f = sc.d, sc.n_l, sc.n_f
    xi = _xi_samples(traj, sc)
    lam_inv = sla.block_diag(*[np.linalg.inv(np.atleast_2d(L)) for L in sc.lambdas])
    theta_true = np.concatenate([p.theta_true for p in sc.params])
    V = np.empty(S)
    for s in range(S):
        t = traj.times[s]
        p_star = sc.target_positions(t)
        p_t = traj.positions[s, n_l:, :] - p_star[n_l:, :]
        v_t = traj.velocities[s, n_l:, :] - sc.v_c
        x_t = np.concatenate([p_t.ravel(), v_t.ravel()])
        th_t = theta_true - traj.theta_hat[s]
        V[s] = (
            x_t @ certificate.P_c @ x_t
            + certificate.gamma * (xi[s] @ certificate.G_c @ xi[s])
            + th_t @ lam_inv @ th_t
        )
    return V


def metrics(traj, sc):
    """Error time series, terminal errors, decay-rate fit, and min distance."""
    S = len(traj.times)
    d, n_l, n_f = sc.d, sc.n_l, sc.n_f
    err_p = np.empty((S, n_f))
    err_v = np.empty((S, n_f))
    for s in range(S):
        p_star = sc.target_positions(traj.times[s])
        dp = traj.positions[s, n_l:, :] - p_star[n_l:, :]
        dv = traj.velocities[s, n_l:, :] - sc.v_c
        err_p[s] = np.linalg.norm(dp, axis=1)
        err_v[s] = np.linalg.norm(dv, axis=1)
    err_p_norm = np.linalg.norm(err_p, axis=1)
    err_v_norm = np.linalg.norm(err_v, axis=1)
    combined = np.hypot(err_p_norm, err_v_norm)

    # least-squares exponential-rate fit over the final half of the run
    half = S // 2
    t_fit = traj.times[half:]
    c_fit = combined[half:]
    mask = c_fit > 1e-300
    rate = None
    if mask.sum() >= 2 and c_fit[mask].max() > 1e-12:
        rate = float(np.polyfit(t_fit[mask], np.log(c_fit[mask]), 1)[0])

    return {
        "err_p": err_p,
        "err_v": err_v,
        "err_p_norm": err_p_norm,
        "err_v_norm": err_v_norm,
        "terminal_err_p": float(err_p_norm[-1]),
        "terminal_err_v": float(err_v_norm[-1]),
        "decay_rate": rate,
        "min_distance": float(traj.min_dist.min()),
    }
