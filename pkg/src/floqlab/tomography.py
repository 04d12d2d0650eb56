"""Synthetic gate tomography: simulate the prepare/gate/readout chain and
reconstruct gates and detunings from population records.

Measurement model.  Atoms are prepared in a spin basis state, the gate under
study is applied, an optional resonant readout pulse rotates the measurement
basis, and populations are read out projectively along z.  The readout pulse
with area a and phase p applies exp[-i a (cos(p) fx + sin(p) fy)]; the phase
reference (rotation axis at p = 0 along fx) is a fixed convention used
identically for generation and fitting, so it cancels in round trips.

Reconstruction.  A measured gate is parameterized as exp(-i sum c_n g_n)
over the su(N) generator basis and the coefficients are fit by simplex
minimization of the summed squared population residuals; the fit knows
nothing about the Hamiltonian that produced the data.  A separate
one-dimensional fit recovers the z detuning using the full physical model.

Noise model.  Each record draws its own detuning delta_z (mean + Gaussian
shot-to-shot jitter), populations optionally receive multinomial atom-count
noise and additive imaging noise.  Per-record RNG streams are spawned from
the master seed, so records are reproducible independent of generation order.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .gauge import fidelity
from .hamiltonians import DrivingConfig
from .loops import ParameterLoop, make_loop
from .propagation import holonomy_for_config, holonomy_nonadiabatic
from .simplex import SimplexOptions, nelder_mead
from .spin import Unitary, expm_generator, spin_matrices, su_generators

__all__ = [
    "ReadoutSetting",
    "MeasurementRecord",
    "TomographyDataset",
    "HolonomyEstimate",
    "NoiseModel",
    "FidelityReport",
    "readout_unitary",
    "default_settings_plan",
    "simulate_measurement",
    "generate_dataset",
    "dataset_from_gate",
    "fit_holonomy",
    "fit_detuning",
    "fidelity_report",
]

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ReadoutSetting:
    """One readout pulse: area and phase in radians; disabled means a bare
    z-basis measurement."""

    pulse_area: float
    pulse_phase: float = 0.0
    enabled: bool = True

    def __post_init__(self):
        if self.pulse_area < 0:
            raise ValueError("pulse_area must be non-negative")


@dataclass(frozen=True)
class MeasurementRecord:
    """Populations measured after one prepare/gate/readout shot.

    ``prep_index`` is the magnetic quantum number m of the prepared basis
    state.  ``populations`` has length 2F+1 ordered m = F ... -F and sums
    to one.
    """

    prep_index: float
    setting: ReadoutSetting
    populations: tuple
    atom_count: int
    scan_id: str = ""


@dataclass
class HolonomyEstimate:
    """Result of a gate fit: generator coefficients, the reconstructed
    unitary exp(-i sum c_n g_n), the residual at the optimum, and (when a
    detuning fit ran) the recovered delta_z."""

    coefficients: np.ndarray
    reconstructed: Unitary
    residual: float
    converged: bool
    fitted_delta_z: float | None = None


@dataclass(frozen=True)
class NoiseModel:
    """Detuning and readout noise applied while generating a dataset.

    delta_z_mean     scan-level detuning offset (rad/s)
    delta_z_sigma    Gaussian detuning spread (rad/s)
    per_record       True draws a fresh detuning for every record
                     (shot-to-shot field jitter); False draws one value
                     for the whole scan
    atom_count       multinomial sample size per record; 0 means noiseless
                     probabilities
    imaging_sigma    additive Gaussian noise on populations (renormalized),
                     disabled at 0
    """

    delta_z_mean: float = 0.0
    delta_z_sigma: float = 2.0 * math.pi * 200.0
    per_record: bool = True
    atom_count: int = 100_000
    imaging_sigma: float = 0.0

    @classmethod
    def noiseless(cls) -> "NoiseModel":
        return cls(delta_z_mean=0.0, delta_z_sigma=0.0, atom_count=0, imaging_sigma=0.0)


@dataclass
class TomographyDataset:
    """A full tomography scan: records plus the configuration that made them.

    ``hidden_true_delta`` carries the synthetic ground truth (the scan-mean
    detuning vector) when known.  ``informationally_complete`` reports the
    build-time rank check of the linearized coefficients-to-populations map.
    """

    spin_f: float
    loop_label: str
    config: DrivingConfig
    records: list[MeasurementRecord]
    rng_seed: int
    informationally_complete: bool
    hidden_true_delta: tuple[float, float, float] | None = None

    # ------------------------------------------------------------------ io
    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "spin_f": self.spin_f,
            "loop_label": self.loop_label,
            "config": {
                "omega0_rad_s": self.config.omega0,
                "omega_rad_s": self.config.omega,
                "loop_rate_rad_s": self.config.loop_rate,
                "omega_rf_rad_s": self.config.omega_rf,
                "omega_z_rad_s": self.config.omega_z,
                "delta_rad_s": list(self.config.delta),
                "epsilon_rad_s": self.config.epsilon,
            },
            "rng_seed": self.rng_seed,
            "informationally_complete": self.informationally_complete,
            "hidden_true_delta_rad_s": (
                list(self.hidden_true_delta) if self.hidden_true_delta is not None else None
            ),
            "records": [
                {
                    "prep_index": r.prep_index,
                    "setting": {
                        "pulse_area": r.setting.pulse_area,
                        "pulse_phase": r.setting.pulse_phase,
                        "enabled": r.setting.enabled,
                    },
                    "populations": list(r.populations),
                    "atom_count": r.atom_count,
                    "scan_id": r.scan_id,
                }
                for r in self.records
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TomographyDataset":
        if data.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported dataset schema version {data.get('schema_version')!r}")
        c = data["config"]
        config = DrivingConfig(
            omega0=c["omega0_rad_s"],
            omega=c["omega_rad_s"],
            loop_rate=c["loop_rate_rad_s"],
            spin_f=data["spin_f"],
            omega_rf=c["omega_rf_rad_s"],
            omega_z=c["omega_z_rad_s"],
            delta=tuple(c["delta_rad_s"]),
            epsilon=c["epsilon_rad_s"],
        )
        records = [
            MeasurementRecord(
                prep_index=r["prep_index"],
                setting=ReadoutSetting(
                    pulse_area=r["setting"]["pulse_area"],
                    pulse_phase=r["setting"]["pulse_phase"],
                    enabled=r["setting"]["enabled"],
                ),
                populations=tuple(r["populations"]),
                atom_count=r["atom_count"],
                scan_id=r.get("scan_id", ""),
            )
            for r in data["records"]
        ]
        hidden = data.get("hidden_true_delta_rad_s")
        return cls(
            spin_f=data["spin_f"],
            loop_label=data["loop_label"],
            config=config,
            records=records,
            rng_seed=data["rng_seed"],
            informationally_complete=data["informationally_complete"],
            hidden_true_delta=tuple(hidden) if hidden is not None else None,
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "TomographyDataset":
        return cls.from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# Forward model


def readout_unitary(setting: ReadoutSetting, spin_f: float) -> Unitary:
    """Readout rotation exp[-i area (cos(phase) fx + sin(phase) fy)]."""
    ops = spin_matrices(spin_f)
    if not setting.enabled or setting.pulse_area == 0.0:
        return Unitary(np.eye(ops.dim, dtype=complex))
    axis = (math.cos(setting.pulse_phase), math.sin(setting.pulse_phase), 0.0)
    return expm_generator(ops.dot(axis), setting.pulse_area)


def default_settings_plan(spin_f: float) -> list[ReadoutSetting]:
    """Bare z readout, half-turn pulses at 8 phases, full inversions at 2.

    For spin 1 this yields 11 settings and, with all 2F+1 preparations,
    33 records, enough for an informationally complete gate fit.
    """
    plan = [ReadoutSetting(0.0, 0.0, enabled=False)]
    plan += [ReadoutSetting(math.pi / 2.0, k * math.pi / 4.0) for k in range(8)]
    plan += [ReadoutSetting(math.pi, 0.0), ReadoutSetting(math.pi, math.pi / 2.0)]
    return plan


def _prep_column(spin_f: float, prep_index: float) -> int:
    dim = spin_matrices(spin_f).dim
    col = int(round(spin_f - prep_index))
    if not (0 <= col < dim) or abs((spin_f - prep_index) - col) > 1e-9:
        raise ValueError(f"prep_index {prep_index} is not a basis state of spin {spin_f}")
    return col


def _model_probabilities(gate: np.ndarray, prep_cols, readouts: np.ndarray) -> np.ndarray:
    """Populations for each (prep, readout) pair: |readout @ gate @ e_prep|^2.

    ``readouts`` has shape (n_records, N, N); ``prep_cols`` indexes the gate
    columns per record.  Returns (n_records, N).
    """
    cols = gate[:, prep_cols]  # (N, n_records)
    amps = np.einsum("rij,jr->ri", readouts, cols)
    return np.abs(amps) ** 2


def simulate_measurement(gate, prep_index: float, setting: ReadoutSetting,
                         spin_f: float, atom_count: int = 0,
                         rng: np.random.Generator | None = None,
                         scan_id: str = "") -> MeasurementRecord:
    """Populations for one prepared state under ``gate`` and one readout.

    With atom_count = 0 the exact model probabilities are recorded; otherwise
    populations are a normalized multinomial draw of that many atoms.
    """
    if atom_count < 0:
        raise ValueError("atom_count must be non-negative")
    gate = gate.matrix if isinstance(gate, Unitary) else np.asarray(gate, dtype=complex)
    col = _prep_column(spin_f, prep_index)
    r = readout_unitary(setting, spin_f).matrix
    probs = np.abs(r @ gate[:, col]) ** 2
    probs = probs / probs.sum()
    if atom_count > 0:
        if rng is None:
            raise ValueError("atom_count > 0 requires an rng")
        counts = rng.multinomial(atom_count, probs)
        probs = counts / atom_count
    return MeasurementRecord(
        prep_index=float(prep_index),
        setting=setting,
        populations=tuple(float(p) for p in probs),
        atom_count=int(atom_count),
        scan_id=scan_id,
    )


def _rank_complete(spin_f: float, plan, preps) -> bool:
    """Numerical rank check of the linearized coefficients -> populations map.

    The Jacobian is taken at the identity gate; the plan is complete when its
    rank reaches N^2 - 1.
    """
    ops = spin_matrices(spin_f)
    basis = su_generators(ops.dim).generators
    dim = ops.dim
    rows = []
    for prep in preps:
        col = _prep_column(spin_f, prep)
        e = np.zeros(dim, dtype=complex)
        e[col] = 1.0
        for setting in plan:
            r = readout_unitary(setting, spin_f).matrix
            base = r @ e
            for gen in basis:
                d_amp = r @ (-1j * gen @ e)
                rows.append(2.0 * (base.conj() * d_amp).real)
    jac = np.array(rows).reshape(len(preps) * len(plan) * dim, len(basis), order="F")
    # rows above were appended generator-fastest; reshape accordingly
    jac = np.array(rows).reshape(-1, dim).T  # not used; see below
    # Build the Jacobian explicitly: one column per generator.
    cols = []
    for n in range(len(basis)):
        cols.append(np.concatenate([rows[i] for i in range(n, len(rows), len(basis))]))
    jac = np.column_stack(cols)
    s = np.linalg.svd(jac, compute_uv=False)
    return bool(s.size >= len(basis) and s[len(basis) - 1] > 1e-9 * s[0])


def _spawn_rngs(seed: int, count: int) -> list[np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(count)
    return [np.random.default_rng(c) for c in children]


def generate_dataset(
    loop: ParameterLoop,
    config: DrivingConfig,
    plan=None,
    noise: NoiseModel | None = None,
    rng_seed: int = 0,
    scan_id: str = "scan-0",
    tol: float = 1e-10,
) -> TomographyDataset:
    """Simulate one full tomography scan of the loop holonomy.

    Every preparation (all 2F+1 basis states) is combined with every readout
    setting.  Detunings are drawn per the noise model and applied through the
    time-ordered holonomy; record ordering is shuffled by the seed, as scans
    randomize acquisition order.  Per-record noise streams are spawned from
    ``rng_seed`` so the dataset is reproducible bit for bit.
    """
    noise = noise or NoiseModel()
    plan = list(plan) if plan is not None else default_settings_plan(config.spin_f)
    if not plan:
        raise ValueError("settings plan must be non-empty")
    ops = spin_matrices(config.spin_f)
    preps = [config.spin_f - i for i in range(ops.dim)]
    pairs = [(p, s) for p in preps for s in plan]

    rngs = _spawn_rngs(rng_seed, len(pairs) + 2)
    scan_rng, shuffle_rng = rngs[-2], rngs[-1]

    scan_delta = noise.delta_z_mean
    if noise.delta_z_sigma > 0 and not noise.per_record:
        scan_delta = scan_delta + scan_rng.normal(0.0, noise.delta_z_sigma)

    if noise.per_record and noise.delta_z_sigma > 0:
        deltas = np.array([
            scan_delta + rngs[i].normal(0.0, noise.delta_z_sigma) for i in range(len(pairs))
        ])
    else:
        deltas = np.full(len(pairs), scan_delta)

    # one propagation per distinct detuning, batched when they all differ
    unique, inverse = np.unique(deltas, return_inverse=True)
    if unique.size == 1:
        gates = [holonomy_nonadiabatic(loop, config.with_delta_z(unique[0]), tol).matrix]
    else:
        from .propagation import holonomy_nonadiabatic_delta_sweep

        gates = list(holonomy_nonadiabatic_delta_sweep(loop, config, unique, tol))

    records = []
    for i, (prep, setting) in enumerate(pairs):
        rec = simulate_measurement(
            gates[inverse[i]], prep, setting, config.spin_f,
            atom_count=noise.atom_count, rng=rngs[i], scan_id=scan_id,
        )
        if noise.imaging_sigma > 0:
            pops = np.asarray(rec.populations) + rngs[i].normal(
                0.0, noise.imaging_sigma, size=ops.dim
            )
            pops = np.clip(pops, 0.0, None)
            pops = pops / pops.sum()
            rec = replace(rec, populations=tuple(float(p) for p in pops))
        records.append(rec)
    shuffle_rng.shuffle(records)

    return TomographyDataset(
        spin_f=config.spin_f,
        loop_label=loop.label,
        config=config,
        records=records,
        rng_seed=rng_seed,
        informationally_complete=_rank_complete(config.spin_f, plan, preps),
        hidden_true_delta=(config.delta[0], config.delta[1], float(scan_delta)),
    )


def dataset_from_gate(gate, spin_f: float, plan=None, rng_seed: int = 0,
                      atom_count: int = 0, config: DrivingConfig | None = None,
                      loop_label: str = "external") -> TomographyDataset:
    """Dataset for an externally supplied gate (no loop propagation).

    Useful for round-trip tests of the fitting pipeline against arbitrary
    unitaries.
    """
    plan = list(plan) if plan is not None else default_settings_plan(spin_f)
    ops = spin_matrices(spin_f)
    preps = [spin_f - i for i in range(ops.dim)]
    pairs = [(p, s) for p in preps for s in plan]
    rngs = _spawn_rngs(rng_seed, len(pairs) + 1)
    records = [
        simulate_measurement(gate, prep, setting, spin_f, atom_count=atom_count, rng=rngs[i])
        for i, (prep, setting) in enumerate(pairs)
    ]
    rngs[-1].shuffle(records)
    if config is None:
        config = DrivingConfig(
            omega0=2.0 * math.pi * 14.27e3,
            omega=2.0 * math.pi * 14.27e3,
            loop_rate=2.0 * math.pi * 1.427e3,
            spin_f=spin_f,
        )
    return TomographyDataset(
        spin_f=spin_f,
        loop_label=loop_label,
        config=config,
        records=records,
        rng_seed=rng_seed,
        informationally_complete=_rank_complete(spin_f, plan, preps),
    )


# ---------------------------------------------------------------------------
# Fitting


def _dataset_arrays(dataset: TomographyDataset):
    spin_f = dataset.spin_f
    readouts = np.stack([readout_unitary(r.setting, spin_f).matrix for r in dataset.records])
    prep_cols = np.array([_prep_column(spin_f, r.prep_index) for r in dataset.records])
    pops = np.array([r.populations for r in dataset.records])
    return readouts, prep_cols, pops


def fit_holonomy(
    dataset: TomographyDataset,
    n_restarts: int = 8,
    max_evals: int = 6000,
    stop_objective: float = 1e-12,
    seed: int | None = None,
) -> HolonomyEstimate:
    """Fit generator coefficients of the measured gate to the populations.

    Minimizes the summed squared difference between predicted and recorded
    populations over the N^2-1 coefficients with the simplex method, from a
    zero start plus ``n_restarts`` seeded random starts (local minima are
    real here), keeping the best and polishing it with one more simplex pass.
    The restart stream derives from the dataset seed unless ``seed`` is given,
    so fits are reproducible.
    """
    readouts, prep_cols, pops = _dataset_arrays(dataset)
    basis = su_generators(spin_matrices(dataset.spin_f).dim).generators
    n_par = basis.shape[0]

    def unitary_of(c: np.ndarray) -> np.ndarray:
        h = np.tensordot(c, basis, axes=1)
        w, v = np.linalg.eigh(h)
        return (v * np.exp(-1j * w)) @ v.conj().T

    def objective(c: np.ndarray) -> float:
        resid = _model_probabilities(unitary_of(c), prep_cols, readouts) - pops
        return float(np.sum(resid * resid))

    rng = np.random.default_rng(
        np.random.SeedSequence([dataset.rng_seed if seed is None else seed, 0x0F17])
    )
    starts = [np.zeros(n_par)]
    starts += [rng.uniform(-1.2, 1.2, size=n_par) for _ in range(n_restarts)]

    opts = SimplexOptions(max_evals=max_evals, x_tol=1e-9, f_tol=1e-15)
    best = None
    for x0 in starts:
        res = nelder_mead(objective, x0, opts)
        if best is None or res.fun < best.fun:
            best = res
        if best.fun < stop_objective:
            break
    polish = nelder_mead(objective, best.x, opts)
    if polish.fun < best.fun:
        best = polish

    return HolonomyEstimate(
        coefficients=best.x,
        reconstructed=Unitary(unitary_of(best.x)),
        residual=best.fun,
        converged=best.converged or best.fun < stop_objective,
    )


def fit_detuning(
    dataset: TomographyDataset,
    bracket: tuple[float, float] | None = None,
    coarse_points: int = 49,
    tol: float = 1e-10,
    max_evals: int = 80,
) -> float:
    """Recover the z detuning by fitting the full physical model to the data.

    All drive parameters stay fixed at the dataset configuration; only
    delta_z varies.  The residual landscape oscillates (fidelity revivals),
    so a coarse scan over the bracket (default +-0.2 omega0, integrated as
    one batch) locates the basin and a one-dimensional simplex polishes it.
    """
    from .propagation import holonomy_nonadiabatic_delta_sweep

    readouts, prep_cols, pops = _dataset_arrays(dataset)
    loop = make_loop(dataset.loop_label, dataset.config.loop_rate)
    config = dataset.config

    def residual_for_gates(gates) -> np.ndarray:
        out = np.empty(len(gates))
        for i, gate in enumerate(gates):
            r = _model_probabilities(gate, prep_cols, readouts) - pops
            out[i] = np.sum(r * r)
        return out

    if bracket is None:
        bracket = (-0.2 * config.omega0, 0.2 * config.omega0)
    grid = np.linspace(bracket[0], bracket[1], coarse_points)
    coarse = residual_for_gates(holonomy_nonadiabatic_delta_sweep(loop, config, grid, tol))
    x_start = float(grid[int(np.argmin(coarse))])

    def objective(x: np.ndarray) -> float:
        gate = holonomy_nonadiabatic(loop, config.with_delta_z(float(x[0])), tol).matrix
        r = _model_probabilities(gate, prep_cols, readouts) - pops
        return float(np.sum(r * r))

    # x_tol at the sub-Hz level; the objective itself is smooth in delta_z
    opts = SimplexOptions(max_evals=max_evals, x_tol=2.0 * math.pi * 0.05, f_tol=1e-18)
    res = nelder_mead(objective, np.array([x_start]), opts)
    return float(res.x[0])


@dataclass
class FidelityReport:
    """Fidelities of the fitted gate against the two reference models:
    ``fbar`` ignores detuning (detuning-free target), ``fbar_delta``
    compares against the model evaluated at the fitted detuning."""

    fbar: float
    fbar_delta: float
    fitted_delta_z: float
    estimate: HolonomyEstimate


def fidelity_report(dataset: TomographyDataset, tol: float = 1e-10,
                    fit_kwargs: dict | None = None) -> FidelityReport:
    """Fit the gate and the detuning, then score against both targets."""
    estimate = fit_holonomy(dataset, **(fit_kwargs or {}))
    delta_z = fit_detuning(dataset, tol=tol)
    estimate.fitted_delta_z = delta_z
    loop = make_loop(dataset.loop_label, dataset.config.loop_rate)
    ideal = holonomy_for_config(loop, dataset.config)
    detuned = holonomy_nonadiabatic(loop, dataset.config.with_delta_z(delta_z), tol)
    return FidelityReport(
        fbar=fidelity(estimate.reconstructed, ideal),
        fbar_delta=fidelity(estimate.reconstructed, detuned),
        fitted_delta_z=delta_z,
        estimate=estimate,
    )
