"""Tabular POMDP container, validation, sink extension and the JSON model format.

Array layout (all steps use the 1-based step numbers directly as the first
array index, so ``T[h]`` is the kernel used between steps ``h`` and ``h+1``):

* ``T``  shape ``(H, A, nS, nS)``; ``T[h, a, s_next, s_cur]`` for ``h = 1..H-1``
  (slice ``T[0]`` is unused and kept at the identity).
* ``Ob`` shape ``(H + 1, nO, nS)``; ``Ob[h, o, s]`` for ``h = 2..H``
  (``Ob[0]`` and ``Ob[1]`` are unused; no observation is emitted at step 1).
* ``R``  shape ``(H + 1, nO)``; ``R[h, o]`` for ``h = 2..H``.

``nS``/``nO`` count the sink symbols when ``has_sinks`` is true.  The sink
state is always the last state index and the sink observation the last
observation index.

The JSON file stores the same tables as nested lists whose position ``i``
corresponds to step ``i + 1`` (``T``) or ``i + 2`` (``Ob``, ``R``); sink rows
are never written and are re-added on load.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1
STOCH_TOL = 1e-12


def _frozen(x):
    x = np.array(x, dtype=float)
    x.setflags(write=False)
    return x


@dataclass(frozen=True, eq=False)
class PomdpModel:
    horizon: int
    states: tuple
    actions: tuple
    observations: tuple
    b1: np.ndarray
    T: np.ndarray
    Ob: np.ndarray
    R: np.ndarray
    has_sinks: bool = False

    def __post_init__(self):
        for name in ("b1", "T", "Ob", "R"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "actions", tuple(self.actions))
        object.__setattr__(self, "observations", tuple(self.observations))

    @property
    def H(self) -> int:
        return self.horizon

    @property
    def S(self) -> int:
        """Number of non-sink states."""
        return len(self.states)

    @property
    def A(self) -> int:
        return len(self.actions)

    @property
    def O(self) -> int:
        """Number of non-sink observations."""
        return len(self.observations)

    @property
    def n_states(self) -> int:
        return self.S + int(self.has_sinks)

    @property
    def n_obs(self) -> int:
        return self.O + int(self.has_sinks)

    @property
    def sink_state(self) -> int:
        if not self.has_sinks:
            raise ValueError("model has no sink state; call extend_with_sinks first")
        return self.S

    @property
    def sink_obs(self) -> int:
        if not self.has_sinks:
            raise ValueError("model has no sink observation; call extend_with_sinks first")
        return self.O

    def replace(self, **changes) -> "PomdpModel":
        kw = dict(horizon=self.horizon, states=self.states, actions=self.actions,
                  observations=self.observations, b1=self.b1, T=self.T, Ob=self.Ob,
                  R=self.R, has_sinks=self.has_sinks)
        kw.update(changes)
        return PomdpModel(**kw)


@dataclass
class Issue:
    severity: str
    location: str
    message: str


@dataclass
class ValidationReport:
    issues: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not any(i.severity == "error" for i in self.issues)

    def error(self, location, message):
        self.issues.append(Issue("error", location, message))

    def warning(self, location, message):
        self.issues.append(Issue("warning", location, message))

    def __str__(self):
        if not self.issues:
            return "ok"
        return "\n".join(f"[{i.severity}] {i.location}: {i.message}" for i in self.issues)


def from_tables(b1, T, Ob, R, *, states=None, actions=None, observations=None,
                extend=True) -> PomdpModel:
    """Build a model from paper-shaped tables without sink rows.

    ``T`` is indexed ``[h-1][a][s_next][s_cur]`` for steps ``1..H-1``;
    ``Ob`` is ``[h-2][o][s]`` and ``R`` is ``[h-2][o]`` for steps ``2..H``.
    """
    T = np.asarray(T, dtype=float)
    Ob = np.asarray(Ob, dtype=float)
    R = np.asarray(R, dtype=float)
    b1 = np.asarray(b1, dtype=float)
    H = T.shape[0] + 1
    if Ob.shape[0] != H - 1 or R.shape[0] != H - 1:
        raise ValueError(f"Ob/R must have H-1={H - 1} step entries, got {Ob.shape[0]}/{R.shape[0]}")
    A, S = T.shape[1], T.shape[2]
    O = Ob.shape[1]
    full_T = np.zeros((H, A, S, S))
    full_T[0] = np.eye(S)
    full_T[1:] = T
    full_Ob = np.zeros((H + 1, O, S))
    full_Ob[2:] = Ob
    full_R = np.zeros((H + 1, O))
    full_R[2:] = R
    model = PomdpModel(
        horizon=H,
        states=tuple(states) if states is not None else tuple(f"s{i}" for i in range(S)),
        actions=tuple(actions) if actions is not None else tuple(f"a{i}" for i in range(A)),
        observations=tuple(observations) if observations is not None else tuple(f"o{i}" for i in range(O)),
        b1=b1, T=full_T, Ob=full_Ob, R=full_R,
    )
    return extend_with_sinks(model) if extend else model


def validate_model(model: PomdpModel) -> ValidationReport:
    rep = ValidationReport()
    H, A = model.H, model.A
    nS, nO = model.n_states, model.n_obs
    if H < 1:
        rep.error("horizon", f"horizon must be positive, got {H}")
        return rep
    shapes = {"b1": (nS,), "T": (H, A, nS, nS), "Ob": (H + 1, nO, nS), "R": (H + 1, nO)}
    bad_shape = False
    for name, shp in shapes.items():
        got = getattr(model, name).shape
        if got != shp:
            rep.error(name, f"shape {got}, expected {shp}")
            bad_shape = True
    if bad_shape:
        return rep
    for name in ("b1", "T", "Ob", "R"):
        if not np.all(np.isfinite(getattr(model, name))):
            rep.error(name, "non-finite entries")
    if np.any(model.b1 < 0) or abs(model.b1.sum() - 1) > STOCH_TOL:
        rep.error("b1", f"not a distribution (sum={model.b1.sum():.15g})")
    for h in range(1, H):
        for a in range(A):
            col = model.T[h, a]
            sums = col.sum(axis=0)
            for s in range(nS):
                if np.any(col[:, s] < 0) or abs(sums[s] - 1) > STOCH_TOL:
                    rep.error(f"T(h={h},a={a},s={s})",
                              f"column is not a distribution (sum={sums[s]:.15g})")
    for h in range(2, H + 1):
        sums = model.Ob[h].sum(axis=0)
        for s in range(nS):
            if np.any(model.Ob[h, :, s] < 0) or abs(sums[s] - 1) > STOCH_TOL:
                rep.error(f"Ob(h={h},s={s})", f"column is not a distribution (sum={sums[s]:.15g})")
        for o in range(nO):
            r = model.R[h, o]
            if not 0.0 <= r <= 1.0:
                rep.error(f"R(h={h},o={o})", f"reward outside [0,1]: {r}")
    if np.any(model.Ob[:2] != 0) or np.any(model.R[:2] != 0):
        rep.error("Ob/R", "no observation or reward may be attached to step 1")
    if model.has_sinks:
        ss, so = model.S, model.O
        if model.b1[ss] != 0:
            rep.warning("b1", "initial mass on the sink state")
        for h in range(1, H):
            for a in range(A):
                if model.T[h, a, ss, ss] != 1.0:
                    rep.error(f"T(h={h},a={a},sink)", "sink state is not absorbing")
        for h in range(2, H + 1):
            if model.Ob[h, so, ss] != 1.0:
                rep.error(f"Ob(h={h},sink)", "sink state must emit the sink observation")
            if np.any(model.Ob[h, so, :ss] != 0):
                rep.error(f"Ob(h={h},sink)", "non-sink states emit the sink observation")
            if model.R[h, so] != 0:
                rep.error(f"R(h={h},sink)", "sink observation must carry zero reward")
    return rep


def extend_with_sinks(model: PomdpModel) -> PomdpModel:
    """Append an absorbing sink state and a zero-reward sink observation.

    Idempotent: an already extended model is returned unchanged.
    """
    if model.has_sinks:
        return model
    rep = validate_model(model)
    if not rep.passed:
        raise ValueError(f"invalid model:\n{rep}")
    H, A, S, O = model.H, model.A, model.S, model.O
    b1 = np.append(model.b1, 0.0)
    T = np.zeros((H, A, S + 1, S + 1))
    T[:, :, :S, :S] = model.T
    T[:, :, S, S] = 1.0
    Ob = np.zeros((H + 1, O + 1, S + 1))
    Ob[:, :O, :S] = model.Ob
    Ob[2:, O, S] = 1.0
    R = np.zeros((H + 1, O + 1))
    R[:, :O] = model.R
    return model.replace(b1=b1, T=T, Ob=Ob, R=R, has_sinks=True)


def strip_sinks(model: PomdpModel) -> PomdpModel:
    """Inverse of ``extend_with_sinks``; only valid when no mass reaches the sink."""
    if not model.has_sinks:
        return model
    S, O = model.S, model.O
    return model.replace(b1=model.b1[:S], T=model.T[:, :, :S, :S], Ob=model.Ob[:, :O, :S],
                         R=model.R[:, :O], has_sinks=False)


def model_to_dict(model: PomdpModel) -> dict:
    m = strip_sinks(model)
    H = m.H
    return {
        "format_version": FORMAT_VERSION,
        "horizon": H,
        "states": list(m.states),
        "actions": list(m.actions),
        "observations": list(m.observations),
        "b1": m.b1.tolist(),
        "T": m.T[1:H].tolist(),
        "Ob": m.Ob[2:H + 1].tolist(),
        "R": m.R[2:H + 1].tolist(),
    }


def model_from_dict(d: dict, *, extend: bool = True) -> PomdpModel:
    """Parse a model file body; ``extend=False`` skips validation and sink extension."""
    if d.get("format_version", FORMAT_VERSION) != FORMAT_VERSION:
        raise ValueError(f"unsupported model format_version {d['format_version']}")
    H = int(d["horizon"])
    S, A, O = len(d["states"]), len(d["actions"]), len(d["observations"])
    T = np.asarray(d["T"], dtype=float).reshape(H - 1, A, S, S)
    Ob = np.asarray(d["Ob"], dtype=float).reshape(H - 1, O, S)
    R = np.asarray(d["R"], dtype=float).reshape(H - 1, O)
    raw = from_tables(d["b1"], T, Ob, R, states=d["states"], actions=d["actions"],
                      observations=d["observations"], extend=False)
    return extend_with_sinks(raw) if extend else raw


def save_model(model: PomdpModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1))


def load_model(path, *, extend: bool = True) -> PomdpModel:
    return model_from_dict(json.loads(Path(path).read_text()), extend=extend)
