"""Two-sector sampler for the off-diagonal correlation sigma_rho(x).

The extended ensemble contains a diagonal (closed) sector, weighted like the
canonical cycle ensemble, and an open sector holding one trajectory pinned at
the origin and at x, winding n in [1, N] times around the time direction,
alongside N - n closed particles.  The open sector carries a tunable constant
J, and sigma is read off the sector visit ratio:

    sigma_hat(x) = (1/J) * P(open) / P(closed).

Sector changes are transdimensional Metropolis moves (open/close at winding 1,
advance/recede at the pinned head with whole-leg redraws); their acceptance
ratios use the image-summed kernels at times beta and 2*beta.  For U = 0 the
estimator must reproduce the exact finite-volume correlation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import PoorOverlapWarning
from .pimc import (
    PathEnsembleState,
    _free_bridge_interior,
    _image_range,
    _log_image_kernel,
    _replacement_action_delta,
    _sample_image_shift_fast,
    bridge_move,
    init_state,
    swap_move,
    wrap_move,
)
from .potentials import PairPotential
from .system import SimulationBox


@dataclass(frozen=True)
class OpenCycleSchedule:
    sweeps: int
    equilibration: int
    blocks: int = 32
    window: int | None = None          # bridge window (interior beads)
    sector_moves: int | None = None    # sector-change attempts per sweep
    worm_constant: float | None = None  # fixed J; None -> calibrated
    calibration_interval: int = 50


@dataclass
class OpenCycleResult:
    sigma: float
    sigma_err: float
    open_fraction: float
    worm_constant: float
    winding_counts: np.ndarray   # histogram of open-sector windings (length N+1)
    acceptance: dict
    meta: dict = field(default_factory=dict)


class OpenCycleSampler:
    """Holds both sectors and performs the extended-ensemble sweeps."""

    def __init__(self, box: SimulationBox, beta: float, n_particles: int,
                 m_slices: int, potential: PairPotential, x, rng,
                 worm_constant: float = 1.0):
        self.box = box
        self.beta = beta
        self.n_total = n_particles
        self.m = m_slices
        self.potential = potential
        self.x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.x.shape != (box.dim,):
            raise ValueError(f"x must be a {box.dim}-vector")
        self.rng = rng
        self.J = float(worm_constant)
        self.closed = init_state(box, beta, n_particles, m_slices, potential)
        self.n_open = 0
        self.open_beads: np.ndarray | None = None   # (n*M + 1, d)
        self.delta = beta / m_slices
        self._ks_beta = _image_range(beta, box.side)
        self._ks_2beta = _image_range(2.0 * beta, box.side)
        self.acc = {k: [0, 0] for k in
                    ("bridge", "swap", "wrap", "open_bridge", "open", "close",
                     "advance", "recede")}

    # ---------------------------------------------------------- kinetics

    def _log_hk(self, y: np.ndarray, t: float) -> float:
        ks = self._ks_beta if t == self.beta else self._ks_2beta
        pref = -0.5 * self.box.dim * np.log(4.0 * np.pi * t)
        return pref + float(_log_image_kernel(y, self.box.side, 4.0 * t, ks))

    # ------------------------------------------------------- open helpers

    def open_legs(self) -> np.ndarray:
        """Open-path interaction beads as legs (n_open, M, d)."""
        n = self.n_open
        if n == 0:
            return np.zeros((0, self.m, self.box.dim))
        return self.open_beads[:n * self.m].reshape(n, self.m, self.box.dim)

    def _open_replacement_delta(self, replacements) -> float:
        """Action change when open-path beads (bead_index, new_pos) change."""
        if self.potential.is_zero:
            return 0.0
        box, delta, m = self.box, self.delta, self.m
        legs = self.open_legs()
        total = 0.0
        for b, new in replacements:
            s = b % m
            k = b // m
            others = [self.closed.positions[:, s, :]]
            mask = np.ones(self.n_open, dtype=bool)
            mask[k] = False
            others.append(legs[mask, s, :])
            others = np.concatenate(others, axis=0)
            old = self.open_beads[b]
            for pt, sign in ((new, +1.0), (old, -1.0)):
                dx = box.minimum_image(pt[None, :] - others)
                r = np.sqrt(np.sum(dx * dx, axis=-1))
                total += sign * float(np.sum(self.potential(r)))
            if total == float("inf"):
                return float("inf")
        return delta * total


    def _local_action(self, groups, exclude_closed=(), exclude_open_beads=()) -> float:
        """delta * sum_s [cross(group_s, spectators_s) + pairs within group_s].

        `groups`: mapping slice -> list of points.  Spectators are all closed
        beads (minus excluded particles) plus all open interaction beads
        (minus excluded bead indices) at that slice.
        """
        if self.potential.is_zero:
            return 0.0
        box, m = self.box, self.m
        excl_open = set(exclude_open_beads)
        total = 0.0
        closed_mask = np.ones(self.closed.n_particles, dtype=bool)
        for p in exclude_closed:
            closed_mask[p] = False
        for s, pts in groups.items():
            spect = [self.closed.positions[closed_mask, s, :]]
            for k in range(self.n_open):
                b = k * m + s
                if b not in excl_open:
                    spect.append(self.open_beads[b][None, :])
            spect = np.concatenate(spect, axis=0)
            pts_arr = np.array(pts)
            if len(spect):
                dx = box.minimum_image(pts_arr[:, None, :] - spect[None, :, :])
                r = np.sqrt(np.sum(dx * dx, axis=-1))
                total += float(np.sum(self.potential(r)))
            if len(pts_arr) > 1:
                iu, ju = np.triu_indices(len(pts_arr), k=1)
                dx = box.minimum_image(pts_arr[iu] - pts_arr[ju])
                r = np.sqrt(np.sum(dx * dx, axis=-1))
                total += float(np.sum(self.potential(r)))
            if not np.isfinite(total):
                return float("inf")
        return self.delta * total

    def _leg_groups(self, beads, first_index, count) -> dict:
        """Slice -> points mapping for open-bead indices [first, first+count)."""
        groups: dict[int, list] = {}
        for t in range(count):
            b = first_index + t
            groups.setdefault(b % self.m, []).append(beads[t])
        return groups

    # ------------------------------------------------------- sector moves

    def _attempt_open(self) -> bool:
        """closed -> open(1): delete a 1-cycle, draw the pinned leg."""
        self.acc["open"][1] += 1
        rng = self.rng
        n_tot = self.n_total
        victim = int(rng.integers(n_tot))
        if self.closed.perm[victim] != victim:
            return False
        box, beta, m = self.box, self.beta, self.m
        z = _sample_image_shift_fast(self.x, box.side, 4.0 * beta,
                                     self._ks_beta, rng)
        target = self.x + box.side * z
        origin = np.zeros(box.dim)
        interior = (_free_bridge_interior(origin, target, m, self.delta, rng)
                    if m > 1 else np.zeros((0, box.dim)))
        new_beads = np.concatenate([origin[None, :], interior, target[None, :]])

        log_r = (np.log(self.J * n_tot / (2.0 * box.volume))
                 + self._log_hk(self.x, beta) - self._log_hk(origin, beta))
        if not self.potential.is_zero:
            groups_new = self._leg_groups(new_beads[:m], 0, m)
            d_add = self._local_action(groups_new, exclude_closed=(victim,))
            groups_old = {s: [self.closed.positions[victim, s]] for s in range(m)}
            d_rem = self._local_action(groups_old, exclude_closed=(victim,))
            if d_add == float("inf"):
                return False
            log_r -= d_add - d_rem
        if log_r < 0.0 and rng.random() >= np.exp(log_r):
            return False
        self._delete_closed(victim)
        self.n_open = 1
        self.open_beads = new_beads
        self.acc["open"][0] += 1
        return True

    def _attempt_close(self) -> bool:
        """open(1) -> closed: delete the pinned leg, insert a fresh 1-cycle."""
        self.acc["close"][1] += 1
        rng = self.rng
        box, beta, m = self.box, self.beta, self.m
        n_tot = self.n_total
        base = rng.random(box.dim) * box.side
        z = _sample_image_shift_fast(np.zeros(box.dim), box.side, 4.0 * beta,
                                     self._ks_beta, rng)
        target = base + box.side * z
        interior = (_free_bridge_interior(base, target, m, self.delta, rng)
                    if m > 1 else np.zeros((0, box.dim)))
        cycle_beads = np.concatenate([base[None, :], interior])  # M beads

        log_r = (np.log(2.0 * box.volume / (self.J * n_tot))
                 + self._log_hk(np.zeros(box.dim), beta) - self._log_hk(self.x, beta))
        if not self.potential.is_zero:
            groups_new = {s: [cycle_beads[s]] for s in range(m)}
            d_add = self._local_action(groups_new,
                                       exclude_open_beads=range(m))
            groups_old = self._leg_groups(self.open_beads[:m], 0, m)
            d_rem = self._local_action(groups_old,
                                       exclude_open_beads=range(m))
            if d_add == float("inf"):
                return False
            log_r -= d_add - d_rem
        if log_r < 0.0 and rng.random() >= np.exp(log_r):
            return False
        slot = int(rng.integers(n_tot))
        self._insert_closed(slot, cycle_beads, z)
        self.n_open = 0
        self.open_beads = None
        self.acc["close"][0] += 1
        return True

    def _attempt_advance(self) -> bool:
        """open(n) -> open(n+1): absorb a 1-cycle, redraw the final 2-beta span."""
        self.acc["advance"][1] += 1
        rng = self.rng
        n = self.n_open
        n_closed = self.closed.n_particles
        if n_closed == 0:
            return False
        victim = int(rng.integers(n_closed))
        if self.closed.perm[victim] != victim:
            return False
        box, beta, m = self.box, self.beta, self.m
        anchor = self.open_beads[(n - 1) * m]
        z = _sample_image_shift_fast(self.x - anchor, box.side, 8.0 * beta,
                                     self._ks_2beta, rng)
        target = self.x + box.side * z
        interior = _free_bridge_interior(anchor, target, 2 * m, self.delta, rng)
        seg = np.concatenate([interior, target[None, :]])  # 2M beads after anchor

        log_r = (np.log((n_closed) / box.volume)
                 + self._log_hk(self.x - anchor, 2.0 * beta)
                 - self._log_hk(np.zeros(box.dim), beta)
                 - self._log_hk(self.x - anchor, beta))
        if not self.potential.is_zero:
            first = (n - 1) * m + 1
            groups_new = self._leg_groups(seg[:2 * m - 1], first, 2 * m - 1)
            old_count = m - 1
            excl = range(first, first + old_count)
            d_add = self._local_action(groups_new, exclude_closed=(victim,),
                                       exclude_open_beads=excl)
            groups_old = self._leg_groups(self.open_beads[first:first + old_count],
                                          first, old_count)
            for s in range(m):
                groups_old.setdefault(s, []).append(self.closed.positions[victim, s])
            d_rem = self._local_action(groups_old, exclude_closed=(victim,),
                                       exclude_open_beads=excl)
            if d_add == float("inf"):
                return False
            log_r -= d_add - d_rem
        if log_r < 0.0 and rng.random() >= np.exp(log_r):
            return False
        self._delete_closed(victim)
        self.open_beads = np.concatenate(
            [self.open_beads[: (n - 1) * m + 1], seg], axis=0)
        self.n_open = n + 1
        self.acc["advance"][0] += 1
        return True

    def _attempt_recede(self) -> bool:
        """open(n) -> open(n-1) for n >= 2: shed one winding, emit a 1-cycle."""
        self.acc["recede"][1] += 1
        rng = self.rng
        n = self.n_open
        box, beta, m = self.box, self.beta, self.m
        anchor = self.open_beads[(n - 2) * m]
        z = _sample_image_shift_fast(self.x - anchor, box.side, 4.0 * beta,
                                     self._ks_beta, rng)
        target = self.x + box.side * z
        interior = (_free_bridge_interior(anchor, target, m, self.delta, rng)
                    if m > 1 else np.zeros((0, box.dim)))
        new_leg = np.concatenate([interior, target[None, :]])  # M beads after anchor

        base = rng.random(box.dim) * box.side
        zc = _sample_image_shift_fast(np.zeros(box.dim), box.side, 4.0 * beta,
                                      self._ks_beta, rng)
        ctarget = base + box.side * zc
        cinterior = (_free_bridge_interior(base, ctarget, m, self.delta, rng)
                     if m > 1 else np.zeros((0, box.dim)))
        cycle_beads = np.concatenate([base[None, :], cinterior])

        n_closed_after = self.closed.n_particles + 1
        log_r = (np.log(box.volume / n_closed_after)
                 + self._log_hk(np.zeros(box.dim), beta)
                 + self._log_hk(self.x - anchor, beta)
                 - self._log_hk(self.x - anchor, 2.0 * beta))
        if not self.potential.is_zero:
            first = (n - 2) * m + 1
            old_count = 2 * m - 1
            excl = range(first, first + old_count)
            groups_new = self._leg_groups(new_leg[:m - 1], first, m - 1)
            for s in range(m):
                groups_new.setdefault(s, []).append(cycle_beads[s])
            d_add = self._local_action(groups_new, exclude_open_beads=excl)
            groups_old = self._leg_groups(self.open_beads[first:first + old_count],
                                          first, old_count)
            d_rem = self._local_action(groups_old, exclude_open_beads=excl)
            if d_add == float("inf"):
                return False
            log_r -= d_add - d_rem
        if log_r < 0.0 and rng.random() >= np.exp(log_r):
            return False
        slot = int(rng.integers(n_closed_after))
        self.open_beads = np.concatenate(
            [self.open_beads[: (n - 2) * m + 1], new_leg], axis=0)
        self.n_open = n - 1
        self._insert_closed(slot, cycle_beads, zc)
        self.acc["recede"][0] += 1
        return True

    # -------------------------------------------------- closed bookkeeping

    def _delete_closed(self, j: int) -> None:
        st = self.closed
        keep = np.arange(st.n_particles) != j
        perm = st.perm[keep].copy()
        perm[perm > j] -= 1
        self.closed = PathEnsembleState(
            box=st.box, beta=st.beta,
            positions=st.positions[keep].copy(),
            perm=perm, wrap=st.wrap[keep].copy(),
            cached_action=0.0)

    def _insert_closed(self, slot: int, leg_beads: np.ndarray, z: np.ndarray) -> None:
        st = self.closed
        perm = st.perm.copy()
        perm[perm >= slot] += 1
        positions = np.insert(st.positions, slot, leg_beads, axis=0)
        perm = np.insert(perm, slot, slot)
        wrap = np.insert(st.wrap, slot, z, axis=0)
        self.closed = PathEnsembleState(
            box=st.box, beta=st.beta, positions=positions, perm=perm,
            wrap=wrap, cached_action=0.0)

    # ------------------------------------------------------------- sweeps

    def _open_bridge_move(self, window: int) -> bool:
        """Resample interior beads of the open path between two anchors."""
        n, m = self.n_open, self.m
        n_beads = n * m + 1
        if n_beads < 3:
            return False
        w = int(min(window, m - 1, n_beads - 2))
        i0 = int(self.rng.integers(n_beads - w - 1))
        a = self.open_beads[i0]
        b = self.open_beads[i0 + w + 1]
        interior = _free_bridge_interior(a, b, w + 1, self.delta, self.rng)
        repl = [(i0 + 1 + t, interior[t]) for t in range(w)]
        d_act = self._open_replacement_delta(repl)
        if d_act == float("inf"):
            return False
        if d_act > 0.0 and self.rng.random() >= np.exp(-d_act):
            return False
        for b_idx, new in repl:
            self.open_beads[b_idx] = new
        return True

    def sweep(self, window: int, sector_moves: int) -> None:
        st = self.closed
        extra = self.open_legs() if self.n_open else None
        nc = st.n_particles
        for _ in range(nc):
            self.acc["bridge"][1] += 1
            self.acc["bridge"][0] += bridge_move(st, self.potential, self.rng,
                                                 window, extra)
        for _ in range(nc if nc >= 2 else 0):
            self.acc["swap"][1] += 1
            self.acc["swap"][0] += swap_move(st, self.potential, self.rng, extra)
        for _ in range(max(1, nc // 2) if nc else 0):
            self.acc["wrap"][1] += 1
            self.acc["wrap"][0] += wrap_move(st, self.rng)
        if self.n_open:
            for _ in range(self.n_open):
                self.acc["open_bridge"][1] += 1
                self.acc["open_bridge"][0] += self._open_bridge_move(window)
        for _ in range(sector_moves):
            if self.n_open == 0:
                self._attempt_open()
            elif self.rng.random() < 0.5:
                if self.n_open == 1:
                    self._attempt_close()
                else:
                    self._attempt_recede()
            else:
                self._attempt_advance()


def open_cycle_estimator(box: SimulationBox, beta: float, n_particles: int,
                         m_slices: int, potential: PairPotential, x,
                         schedule: OpenCycleSchedule, seed: int = 0) -> OpenCycleResult:
    """Estimate sigma_rho(x) from the two-sector visit ratio.

    The worm constant J is calibrated during equilibration (unless fixed in
    the schedule) and frozen for the measurement phase.  A poor-overlap
    warning is raised when either sector's residence fraction drops below
    1e-3.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    sampler = OpenCycleSampler(box, beta, n_particles, m_slices, potential, x,
                               rng, worm_constant=schedule.worm_constant or 1.0)
    window = schedule.window if schedule.window is not None else max(1, m_slices // 2)
    sector_moves = (schedule.sector_moves if schedule.sector_moves is not None
                    else max(2, n_particles))

    calibrate = schedule.worm_constant is None
    open_count = 0
    for sweep in range(1, schedule.equilibration + 1):
        sampler.sweep(window, sector_moves)
        open_count += sampler.n_open > 0
        if calibrate and sweep % schedule.calibration_interval == 0:
            frac = open_count / schedule.calibration_interval
            ratio = (1.0 - frac + 0.5 / schedule.calibration_interval) / (
                frac + 0.5 / schedule.calibration_interval)
            sampler.J *= float(np.clip(ratio, 0.125, 8.0))
            open_count = 0

    n = n_particles
    indicator = np.zeros(schedule.sweeps, dtype=np.int8)
    winding_counts = np.zeros(n + 1, dtype=np.int64)
    for sweep in range(schedule.sweeps):
        sampler.sweep(window, sector_moves)
        if sampler.n_open:
            indicator[sweep] = 1
            winding_counts[sampler.n_open] += 1

    blocks = max(2, min(schedule.blocks, schedule.sweeps))
    edges = np.linspace(0, schedule.sweeps, blocks + 1).astype(int)
    ob = np.array([indicator[a:b].mean() for a, b in zip(edges[:-1], edges[1:])])
    open_frac = float(indicator.mean())
    meta: dict = {"seed": seed, "sweeps": schedule.sweeps}
    warn: list[str] = []
    if open_frac < 1e-3 or open_frac > 1.0 - 1e-3:
        warnings.warn(
            f"sector residence fraction {open_frac:.2e} leaves poor overlap; "
            "sigma estimate unreliable", PoorOverlapWarning, stacklevel=2)
        warn.append("poor_overlap")
    # jackknife over blocks of the ratio estimator
    tot_o = ob.sum()
    tot_c = blocks - tot_o  # block means of the closed indicator sum to this
    sigma = (tot_o / tot_c) / sampler.J if tot_c > 0 else float("inf")
    jk = []
    for b in range(blocks):
        o = tot_o - ob[b]
        c = (blocks - 1) - o
        jk.append((o / c) / sampler.J if c > 0 else float("inf"))
    jk = np.array(jk)
    if np.all(np.isfinite(jk)):
        err = float(np.sqrt((blocks - 1) / blocks * np.sum((jk - jk.mean()) ** 2)))
    else:
        err = float("inf")
    acc_rates = {k: (v[0] / v[1] if v[1] else 0.0)
                 for k, v in sampler.acc.items()}
    meta["warnings"] = warn
    return OpenCycleResult(
        sigma=float(sigma), sigma_err=err, open_fraction=open_frac,
        worm_constant=sampler.J, winding_counts=winding_counts,
        acceptance=acc_rates, meta=meta)
