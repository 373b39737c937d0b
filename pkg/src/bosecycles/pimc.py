"""Path-integral Monte Carlo for the interacting Bose gas in a periodic box.

State layout: each of the N particles owns one beta-leg of M beads with
unwrapped coordinates; the permutation stitches legs into closed cycles.  The
junction spring of particle j runs from its last bead to
positions[perm[j], 0] + L * wrap[j] over the grid spacing beta/M, so spatial
windings stay recoverable from the integer wrap counts.

Moves: (a) worldline bridge resampling (exact kinetic proposal, accepted on
the interaction-action change alone), (b) permutation transpositions with the
interiors of both affected legs redrawn, accepted on the image-summed kernel
ratio at time beta times the action change, (c) junction wrap shifts.  All
three satisfy detailed balance with respect to the discretized cycle weight.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import NonErgodicWarning
from .heatkernel import heat_kernel, sample_image_shift
from .potentials import PairPotential
from .system import SimulationBox

CHECKPOINT_VERSION = 1


@dataclass
class PathEnsembleState:
    """N particles x M beads plus the permutation: one PIMC configuration."""

    box: SimulationBox
    beta: float
    positions: np.ndarray      # (N, M, d) unwrapped bead coordinates
    perm: np.ndarray           # (N,) successor map stitching legs into cycles
    wrap: np.ndarray           # (N, d) integer junction image shifts
    cached_action: float = 0.0

    @property
    def n_particles(self) -> int:
        return self.positions.shape[0]

    @property
    def m_slices(self) -> int:
        return self.positions.shape[1]

    @property
    def delta(self) -> float:
        return self.beta / self.positions.shape[1]

    def copy(self) -> "PathEnsembleState":
        return PathEnsembleState(self.box, self.beta, self.positions.copy(),
                                 self.perm.copy(), self.wrap.copy(),
                                 self.cached_action)


def init_state(box: SimulationBox, beta: float, n_particles: int,
               m_slices: int, potential: PairPotential | None = None) -> PathEnsembleState:
    """Straight worldlines on a cubic sublattice, identity permutation."""
    if n_particles < 1 or m_slices < 1:
        raise ValueError("need n_particles >= 1 and m_slices >= 1")
    d = box.dim
    per_side = int(np.ceil(n_particles ** (1.0 / d)))
    spacing = box.side / per_side
    if potential is not None and potential.hard_core_radius > 0.0:
        if spacing <= 2.0 * potential.hard_core_radius:
            raise ValueError("initial lattice spacing inside the hard core; "
                             "reduce density or core radius")
    sites = np.stack(np.meshgrid(*[np.arange(per_side)] * d, indexing="ij"),
                     axis=-1).reshape(-1, d)[:n_particles]
    base = (sites + 0.5) * spacing
    positions = np.repeat(base[:, None, :], m_slices, axis=1).astype(float)
    state = PathEnsembleState(
        box=box, beta=beta, positions=positions,
        perm=np.arange(n_particles), wrap=np.zeros((n_particles, d), dtype=int))
    state.cached_action = interaction_action(state, potential) if potential else 0.0
    return state


# ---------------------------------------------------------------- actions

def pair_potential_sum(points: np.ndarray, box: SimulationBox,
                       potential: PairPotential) -> float:
    """Sum of U over unordered pairs of points under the minimum image."""
    n = len(points)
    if n < 2:
        return 0.0
    iu, ju = np.triu_indices(n, k=1)
    dx = box.minimum_image(points[iu] - points[ju])
    r = np.sqrt(np.sum(dx * dx, axis=-1))
    return float(np.sum(potential(r)))


def action_from_legs(legs: np.ndarray, delta: float, box: SimulationBox,
                     potential: PairPotential) -> float:
    """delta * sum over time slices of the pairwise potential of all legs.

    `legs` has shape (n_legs, M, d); every leg counts as one particle at each
    of the M slices (the time-beta cap slice coincides with slice 0 of the
    successors and is not double counted).
    """
    if potential.is_zero:
        return 0.0
    total = 0.0
    for s in range(legs.shape[1]):
        total += pair_potential_sum(legs[:, s, :], box, potential)
        if not np.isfinite(total):
            return float("inf")
    return delta * total


def interaction_action(state: PathEnsembleState, potential: PairPotential) -> float:
    """Total discretized interaction action of the configuration."""
    return action_from_legs(state.positions, state.delta, state.box, potential)


def interaction_action_by_cycles(state: PathEnsembleState,
                                 potential: PairPotential) -> float:
    """Same action, regrouped per closed trajectory.

    beta * [sum over cycles of the intra-trajectory leg-pair term plus the sum
    over trajectory pairs]; must agree with the per-slice bookkeeping.
    """
    if potential.is_zero:
        return 0.0
    box, delta = state.box, state.delta
    cycles = measure_cycles(state)
    trajs = []  # each: (n_legs, M, d) array of the cycle's legs in time order
    for cyc in cycles:
        trajs.append(state.positions[cyc])

    def leg_pair(a, b):
        dx = box.minimum_image(a - b)
        r = np.sqrt(np.sum(dx * dx, axis=-1))
        return float(np.sum(potential(r)))

    total = 0.0
    for tr in trajs:  # intra-trajectory: legs i < j of the same winding path
        n = len(tr)
        for i in range(n):
            for j in range(i + 1, n):
                total += leg_pair(tr[i], tr[j])
    for a in range(len(trajs)):  # trajectory pairs
        for b in range(a + 1, len(trajs)):
            for la in trajs[a]:
                for lb in trajs[b]:
                    total += leg_pair(la, lb)
    if not np.isfinite(total):
        return float("inf")
    return delta * total


def kinetic_log_weight(state: PathEnsembleState) -> float:
    """log of the product of free Gaussian spring densities (all legs + junctions)."""
    box, delta = state.box, state.delta
    d = box.dim
    n, m = state.n_particles, state.m_slices
    sq = 0.0
    if m > 1:
        diffs = state.positions[:, 1:, :] - state.positions[:, :-1, :]
        sq += float(np.sum(diffs * diffs))
    junc = (state.positions[state.perm, 0, :] + box.side * state.wrap
            - state.positions[:, -1, :])
    sq += float(np.sum(junc * junc))
    n_springs = n * m
    return -sq / (4.0 * delta) - 0.5 * d * n_springs * np.log(4.0 * np.pi * delta)


def log_state_weight(state: PathEnsembleState, potential: PairPotential) -> float:
    """Unnormalized log density of a configuration (kinetic minus action)."""
    act = interaction_action(state, potential)
    if not np.isfinite(act):
        return float("-inf")
    return kinetic_log_weight(state) - act


# ---------------------------------------------------------------- cycles

def measure_cycles(state: PathEnsembleState) -> list[np.ndarray]:
    """Decompose the permutation into cycles (lists of particle indices)."""
    perm = state.perm
    seen = np.zeros(len(perm), dtype=bool)
    cycles = []
    for start in range(len(perm)):
        if seen[start]:
            continue
        cyc = [start]
        seen[start] = True
        nxt = perm[start]
        while nxt != start:
            cyc.append(int(nxt))
            seen[nxt] = True
            nxt = perm[nxt]
        cycles.append(np.array(cyc))
    return cycles


def cycle_lengths(state: PathEnsembleState) -> list[int]:
    """Multiset of permutation-cycle lengths; sums to N."""
    return sorted(len(c) for c in measure_cycles(state))


def cycle_count_vector(state: PathEnsembleState) -> np.ndarray:
    """counts[n] = number of cycles of length n, padded to length N+1."""
    n = state.n_particles
    counts = np.zeros(n + 1, dtype=np.int64)
    for ln in cycle_lengths(state):
        counts[ln] += 1
    return counts


# ---------------------------------------------------------------- moves

def _image_range(beta: float, side: float) -> np.ndarray:
    """Integer shifts covering the time-beta kernel to ~1e-18 relative."""
    kmax = int(np.ceil(np.sqrt(41.5 * 4.0 * beta) / side)) + 1
    return np.arange(-kmax, kmax + 1, dtype=float)


def _log_image_kernel(y: np.ndarray, side: float, four_t: float,
                      ks: np.ndarray) -> np.ndarray:
    """log sum_z exp(-(y + L z)^2 / 4t) up to the (4 pi t)^{-d/2} prefactor.

    Accepts a batch of displacement vectors (..., d); the image sum is
    L-periodic, so y is reduced to the primary cell first.  The leading
    exponent is factored out so deep tails never underflow to log(0).
    """
    y = y - side * np.round(y * (1.0 / side))
    e = ((y[..., None] + side * ks) ** 2) / four_t
    m = e.min(axis=-1)
    w = np.exp(m[..., None] - e)
    return (-m + np.log(w.sum(axis=-1))).sum(axis=-1)


def _sample_image_shift_fast(dxy: np.ndarray, side: float, four_t: float,
                             ks: np.ndarray, rng) -> np.ndarray:
    """Per-coordinate z with weight exp(-(dxy + L z)^2/4t), via inverse CDF."""
    k0 = np.round(dxy / side)
    red = dxy - side * k0
    e = ((red[:, None] + side * ks[None, :]) ** 2) / four_t
    w = np.exp(e.min(axis=1, keepdims=True) - e)
    cum = np.cumsum(w, axis=1)
    u = rng.random(len(dxy)) * cum[:, -1]
    idx = np.array([int(np.searchsorted(cum[c], u[c])) for c in range(len(dxy))])
    return (ks[idx] - k0).astype(int)


def _walk_worldline(state: PathEnsembleState, j0: int, s0: int, count: int):
    """Consecutive worldline slots from (j0, s0): (particle, slot, shift)."""
    box = state.box
    m = state.m_slices
    p, s = j0, s0
    shift = np.zeros(box.dim)
    out = [(p, s, shift)]
    for _ in range(count):
        if s + 1 < m:
            s += 1
        else:
            shift = shift + box.side * state.wrap[p]
            p = int(state.perm[p])
            s = 0
        out.append((p, s, shift))
    return out


def _free_bridge_interior(a: np.ndarray, b: np.ndarray, steps: int, delta: float,
                          rng) -> np.ndarray:
    """Interior beads of a free-space bridge a -> b over `steps` springs.

    A free walk of iid N(0, 2*delta) increments is pinned by the linear
    bridge correction B_j = W_j + (j/steps) * (b - W_steps), which reproduces
    the exact bridge joint distribution.
    """
    d = len(a)
    incr = np.sqrt(2.0 * delta) * rng.standard_normal((steps, d))
    walk = a + np.cumsum(incr, axis=0)          # W_1 .. W_steps
    frac = (np.arange(1, steps, dtype=float) / steps)[:, None]
    return walk[:-1] + frac * (b - walk[-1])


def _replacement_action_delta(state: PathEnsembleState, potential: PairPotential,
                              replacements, extra_legs: np.ndarray | None = None) -> float:
    """Action change when beads are replaced.

    `replacements`: list of (particle, slice, new_position) with particles
    understood in the stored (unshifted) frame.  Beads replaced at the same
    slice interact with each other once.  `extra_legs` (n_extra, M, d) adds
    spectator legs (used by the open-path sampler) that interact with the
    replaced beads but are never replaced themselves.
    """
    if potential.is_zero:
        return 0.0
    box, delta = state.box, state.delta

    by_slice: dict[int, list[tuple[int, np.ndarray]]] = {}
    for p, s, new in replacements:
        by_slice.setdefault(s, []).append((p, new))

    def one_sided(points_changed, old_pts, others):
        new_pts = np.array([pt for _, pt in points_changed])
        tot = 0.0
        if len(others):
            for pts, sign in ((new_pts, +1.0), (old_pts, -1.0)):
                dx = box.minimum_image(pts[:, None, :] - others[None, :, :])
                r = np.sqrt(np.sum(dx * dx, axis=-1))
                tot += sign * float(np.sum(potential(r)))
        if len(points_changed) > 1:
            tot += pair_potential_sum(new_pts, box, potential)
            tot -= pair_potential_sum(old_pts, box, potential)
        return tot

    total = 0.0
    for s, changed in by_slice.items():
        changed_ids = {p for p, _ in changed}
        mask = np.ones(state.n_particles, dtype=bool)
        for p in changed_ids:
            mask[p] = False
        others = state.positions[mask, s, :]
        if extra_legs is not None and len(extra_legs):
            others = np.concatenate([others, extra_legs[:, s, :]], axis=0)
        old_pts = np.array([state.positions[p, s] for p, _ in changed])
        total += one_sided(changed, old_pts, others)
        if total == float("inf"):
            return float("inf")
    return delta * total


def bridge_move(state: PathEnsembleState, potential: PairPotential, rng,
                window: int, extra_legs: np.ndarray | None = None) -> bool:
    """Redraw `window` consecutive worldline beads from the exact free bridge."""
    n, m = state.n_particles, state.m_slices
    window = int(min(max(window, 1), m - 1)) if m > 1 else 0
    if window == 0:
        return False
    j0 = int(rng.integers(n))
    s0 = int(rng.integers(m))
    slots = _walk_worldline(state, j0, s0, window + 1)
    pa, sa, sh_a = slots[0]
    pb, sb, sh_b = slots[-1]
    a = state.positions[pa, sa] + sh_a
    b = state.positions[pb, sb] + sh_b
    interior = _free_bridge_interior(a, b, window + 1, state.delta, rng)
    repl = [(p, s, interior[t - 1] - sh)
            for t, (p, s, sh) in enumerate(slots[1:-1], start=1)]
    d_act = _replacement_action_delta(state, potential, repl, extra_legs)
    if d_act == float("inf"):
        return False
    if d_act > 0.0 and rng.random() >= np.exp(-d_act):
        return False
    for p, s, new in repl:
        state.positions[p, s] = new
    state.cached_action += d_act
    return True


def swap_move(state: PathEnsembleState, potential: PairPotential, rng,
              extra_legs: np.ndarray | None = None) -> bool:
    """Propose the transposition perm -> perm o (i j), redrawing both legs.

    Interior beads of legs i and j are marginalized exactly, so the acceptance
    carries the periodic kernel ratio at time beta for the rewired junctions
    times the interaction-action change.
    """
    n = state.n_particles
    if n < 2:
        return False
    i = int(rng.integers(n))
    j = int(rng.integers(n - 1))
    if j >= i:
        j += 1
    box, beta = state.box, state.beta
    b_i, b_j = state.positions[i, 0], state.positions[j, 0]
    t_i = state.positions[state.perm[i], 0]
    t_j = state.positions[state.perm[j], 0]
    ks = _image_range(beta, box.side)
    four_t = 4.0 * beta
    lw = _log_image_kernel(
        np.stack((t_j - b_i, t_i - b_j, t_i - b_i, t_j - b_j)),
        box.side, four_t, ks)
    log_r = lw[0] + lw[1] - lw[2] - lw[3]

    m = state.m_slices
    z_i = _sample_image_shift_fast(t_j - b_i, box.side, four_t, ks, rng)
    z_j = _sample_image_shift_fast(t_i - b_j, box.side, four_t, ks, rng)
    repl = []
    if m > 1:
        new_i = _free_bridge_interior(b_i, t_j + box.side * z_i, m, state.delta, rng)
        new_j = _free_bridge_interior(b_j, t_i + box.side * z_j, m, state.delta, rng)
        repl = [(i, s, new_i[s - 1]) for s in range(1, m)]
        repl += [(j, s, new_j[s - 1]) for s in range(1, m)]
    d_act = _replacement_action_delta(state, potential, repl, extra_legs)
    if d_act == float("inf"):
        return False
    log_r -= d_act
    if log_r < 0.0 and rng.random() >= np.exp(log_r):
        return False
    state.perm[i], state.perm[j] = state.perm[j], state.perm[i]
    state.wrap[i] = z_i
    state.wrap[j] = z_j
    for p, s, new in repl:
        state.positions[p, s] = new
    state.cached_action += d_act
    return True


def wrap_move(state: PathEnsembleState, rng) -> bool:
    """Shift one junction image count by +-1 (interactions are unaffected)."""
    n = state.n_particles
    j = int(rng.integers(n))
    c = int(rng.integers(state.box.dim))
    dz = 1 if rng.random() < 0.5 else -1
    L = state.box.side
    old = (state.positions[state.perm[j], 0, c] + L * state.wrap[j, c]
           - state.positions[j, -1, c])
    new = old + L * dz
    log_r = -(new * new - old * old) / (4.0 * state.delta)
    if log_r < 0.0 and rng.random() >= np.exp(log_r):
        return False
    state.wrap[j, c] += dz
    return True


@dataclass(frozen=True)
class MoveMix:
    """Per-sweep move counts; None fields default to system-size choices."""

    bridge: int | None = None     # default N
    swap: int | None = None       # default N
    wrap: int | None = None       # default max(1, N // 2)
    window: int | None = None     # bridge window, default M // 2

    def resolved(self, n: int, m: int) -> tuple[int, int, int, int]:
        return (
            self.bridge if self.bridge is not None else n,
            self.swap if self.swap is not None else n,
            self.wrap if self.wrap is not None else max(1, n // 2),
            self.window if self.window is not None else max(1, m // 2),
        )


def metropolis_sweep(state: PathEnsembleState, potential: PairPotential, rng,
                     move_mix: MoveMix, debug_checks: bool = False) -> dict:
    """One sweep of the move mix; returns per-move (accepted, attempted)."""
    nb, ns, nw, window = move_mix.resolved(state.n_particles, state.m_slices)
    acc = {"bridge": [0, nb], "swap": [0, ns], "wrap": [0, nw]}
    for _ in range(nb):
        acc["bridge"][0] += bridge_move(state, potential, rng, window)
    for _ in range(ns):
        acc["swap"][0] += swap_move(state, potential, rng)
    for _ in range(nw):
        acc["wrap"][0] += wrap_move(state, rng)
    if debug_checks:
        fresh = interaction_action(state, potential)
        if not np.isclose(fresh, state.cached_action, rtol=0.0, atol=1e-9):
            raise AssertionError(
                f"action cache incoherent: {state.cached_action} vs {fresh}")
        state.cached_action = fresh
    return acc


# ---------------------------------------------------------------- driver

@dataclass(frozen=True)
class PimcParams:
    box: SimulationBox
    beta: float
    n_particles: int
    beads_per_beta: int = 16


@dataclass(frozen=True)
class Schedule:
    sweeps: int
    equilibration: int
    chains: int = 1
    blocks: int = 32
    move_mix: MoveMix = field(default_factory=MoveMix)
    debug_checks: bool = False


@dataclass
class CycleHistogram:
    """Sampled cycle-length spectrum with blocked errors."""

    n_particles: int
    volume: float
    counts_mean: np.ndarray     # (N+1,) mean number of cycles of length n
    densities: np.ndarray       # (N+1,) n * counts_mean[n] / V
    density_err: np.ndarray     # (N+1,) blocked standard errors
    block_densities: np.ndarray  # (B, N+1) per-block density estimates
    n_sweeps: int
    acceptance: dict
    meta: dict


def histogram_from_series(series: np.ndarray, volume: float, blocks: int,
                          acceptance: dict, meta: dict) -> CycleHistogram:
    """Blocked estimates from the per-sweep cycle-count series (S, N+1)."""
    s, width = series.shape
    n = width - 1
    blocks = max(1, min(blocks, s))
    edges = np.linspace(0, s, blocks + 1).astype(int)
    ns = np.arange(width, dtype=float)
    block_d = np.array([
        series[a:b].mean(axis=0) * ns / volume for a, b in zip(edges[:-1], edges[1:])
    ])
    counts_mean = series.mean(axis=0)
    densities = counts_mean * ns / volume
    if blocks > 1:
        err = block_d.std(axis=0, ddof=1) / np.sqrt(blocks)
    else:
        err = np.zeros(width)
    return CycleHistogram(
        n_particles=n, volume=volume, counts_mean=counts_mean,
        densities=densities, density_err=err, block_densities=block_d,
        n_sweeps=s, acceptance=acceptance, meta=meta)


def _rng_state_to_json(rng) -> dict:
    st = rng.bit_generator.state
    return json.loads(json.dumps(st))  # plain dict of ints/strings


def config_digest(payload: dict) -> str:
    return hashlib.sha256(
        json.dumps(payload, sort_keys=True, default=str).encode()).hexdigest()


def _run_payload(params: PimcParams, schedule: Schedule, seed: int,
                 potential: PairPotential) -> dict:
    return {
        "box": [params.box.dim, params.box.side],
        "beta": params.beta,
        "n_particles": params.n_particles,
        "beads_per_beta": params.beads_per_beta,
        "equilibration": schedule.equilibration,
        "chains": schedule.chains,
        "move_mix": [schedule.move_mix.bridge, schedule.move_mix.swap,
                     schedule.move_mix.wrap, schedule.move_mix.window],
        "seed": seed,
        "potential": potential.kind,
    }


def save_checkpoint(path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_checkpoint(path) -> dict:
    with open(path) as fh:
        data = json.load(fh)
    if data.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {data.get('version')!r}")
    return data


def run_canonical_pimc(params: PimcParams, potential: PairPotential,
                       schedule: Schedule, seed: int = 0,
                       checkpoint_path=None, resume_from=None) -> CycleHistogram:
    """Sample the canonical cycle ensemble; blocked cycle densities out.

    Deterministic for a given (params, schedule, seed).  With
    `checkpoint_path` the full run state is saved at the end; `resume_from`
    continues a previous run bit-reproducibly up to `schedule.sweeps` total
    measurement sweeps.
    """
    n, m = params.n_particles, params.beads_per_beta
    digest = config_digest(_run_payload(params, schedule, seed, potential))

    chains_data = []
    if resume_from is not None:
        ck = load_checkpoint(resume_from)
        if ck["config_digest"] != digest:
            raise ValueError("checkpoint was produced by a different configuration")
        for ch in ck["chains"]:
            state = PathEnsembleState(
                box=params.box, beta=params.beta,
                positions=np.array(ch["positions"], dtype=float),
                perm=np.array(ch["perm"], dtype=int),
                wrap=np.array(ch["wrap"], dtype=int),
                cached_action=ch["cached_action"])
            rng = np.random.Generator(np.random.PCG64())
            rng.bit_generator.state = ch["rng_state"]
            series = [np.array(row, dtype=np.int64) for row in ch["series"]]
            acc = {k: list(v) for k, v in ch["acceptance"].items()}
            chains_data.append({"state": state, "rng": rng, "series": series,
                                "acceptance": acc})
        warn_flags = set(ck.get("warnings", []))
    else:
        seeds = np.random.SeedSequence(seed).spawn(schedule.chains)
        warn_flags = set()
        for ss in seeds:
            rng = np.random.Generator(np.random.PCG64(ss))
            state = init_state(params.box, params.beta, n, m, potential)
            eq_acc = {"bridge": [0, 0], "swap": [0, 0], "wrap": [0, 0]}
            for _ in range(schedule.equilibration):
                a = metropolis_sweep(state, potential, rng, schedule.move_mix,
                                     schedule.debug_checks)
                for k in eq_acc:
                    eq_acc[k][0] += a[k][0]
                    eq_acc[k][1] += a[k][1]
            if eq_acc["swap"][1] > 0 and n > 1:
                frac = eq_acc["swap"][0] / eq_acc["swap"][1]
                if frac < 1e-4:
                    warnings.warn(
                        f"permutation-move acceptance {frac:.2e} < 1e-4 over "
                        "equilibration; cycle statistics may not be ergodic",
                        NonErgodicWarning, stacklevel=2)
                    warn_flags.add("non_ergodic")
            chains_data.append({"state": state, "rng": rng, "series": [],
                                "acceptance": {k: [0, 0] for k in eq_acc}})

    for ch in chains_data:
        state, rng = ch["state"], ch["rng"]
        acc = ch["acceptance"]
        while len(ch["series"]) < schedule.sweeps:
            a = metropolis_sweep(state, potential, rng, schedule.move_mix,
                                 schedule.debug_checks)
            for k in acc:
                acc[k][0] += a[k][0]
                acc[k][1] += a[k][1]
            counts = cycle_count_vector(state)
            if int(np.dot(np.arange(n + 1), counts)) != n:
                raise AssertionError("cycle counts do not resolve N particles")
            ch["series"].append(counts)

    if checkpoint_path is not None:
        payload = {
            "version": CHECKPOINT_VERSION,
            "config_digest": digest,
            "warnings": sorted(warn_flags),
            "chains": [{
                "positions": ch["state"].positions.tolist(),
                "perm": ch["state"].perm.tolist(),
                "wrap": ch["state"].wrap.tolist(),
                "cached_action": ch["state"].cached_action,
                "rng_state": _rng_state_to_json(ch["rng"]),
                "series": [row.tolist() for row in ch["series"]],
                "acceptance": ch["acceptance"],
            } for ch in chains_data],
        }
        save_checkpoint(checkpoint_path, payload)

    series = np.concatenate([np.array(ch["series"]) for ch in chains_data], axis=0)
    acceptance = {k: [0, 0] for k in ("bridge", "swap", "wrap")}
    for ch in chains_data:
        for k in acceptance:
            acceptance[k][0] += ch["acceptance"][k][0]
            acceptance[k][1] += ch["acceptance"][k][1]
    acc_rates = {k: (v[0] / v[1] if v[1] else 0.0) for k, v in acceptance.items()}
    meta = {"config_digest": digest, "seed": seed,
            "warnings": sorted(warn_flags), "acceptance_rates": acc_rates}
    return histogram_from_series(series, params.box.volume,
                                 schedule.blocks * schedule.chains,
                                 acceptance, meta)


# ------------------------------------------------------- validation helpers

@dataclass(frozen=True)
class Chi2Report:
    chi2: float
    dof: int
    p_value: float
    bins: list


def compare_cycle_histogram(hist: CycleHistogram, exact_densities: np.ndarray,
                            min_expected_hits: float = 50.0) -> Chi2Report:
    """Blocked chi^2 of sampled cycle densities against an exact spectrum.

    Cycle lengths whose expected hit count over the run is below
    `min_expected_hits` are pooled into a single tail bin; one degree of
    freedom is dropped for the exact per-configuration sum rule.
    """
    from scipy.stats import chi2 as chi2_dist

    n = hist.n_particles
    exact = np.asarray(exact_densities, dtype=float)
    if exact.shape != (n + 1,):
        raise ValueError(f"exact densities must have shape ({n + 1},)")
    ns = np.arange(n + 1, dtype=float)
    expected_hits = np.zeros(n + 1)
    expected_hits[1:] = hist.n_sweeps * hist.volume * exact[1:] / ns[1:]
    single = [k for k in range(1, n + 1) if expected_hits[k] >= min_expected_hits]
    pooled = [k for k in range(1, n + 1) if k not in single]

    bins = []
    blocks = hist.block_densities
    nb = blocks.shape[0]
    for k in single:
        se = blocks[:, k].std(ddof=1) / np.sqrt(nb)
        bins.append((f"n={k}", hist.densities[k], exact[k], se))
    if pooled and sum(expected_hits[k] for k in pooled) >= min_expected_hits:
        pooled_blocks = blocks[:, pooled].sum(axis=1)
        se = pooled_blocks.std(ddof=1) / np.sqrt(nb)
        bins.append((f"n in {pooled[0]}..{pooled[-1]}",
                     float(pooled_blocks.mean()), float(exact[pooled].sum()), se))
    chi2 = 0.0
    used = 0
    for _, est, ex, se in bins:
        if se > 0:
            chi2 += ((est - ex) / se) ** 2
            used += 1
    dof = max(used - 1, 1)
    return Chi2Report(chi2=float(chi2), dof=dof,
                      p_value=float(chi2_dist.sf(chi2, dof)), bins=bins)
