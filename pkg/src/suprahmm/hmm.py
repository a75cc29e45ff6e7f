"""Circular hidden Markov models of order 1-3 with Gaussian-mixture emissions.

States sit on a ring: from state i the only legal moves are the self-loop
and the clockwise successor (i+1) mod N.  Higher-order chains are scored
and trained by reduction to a first-order lattice over context tuples, so
forward, Viterbi, and Baum-Welch stay textbook-standard.  An order-r model
keeps one tensor per context length 1..r: the shorter ones boot the chain
at t = 2..r, the full-order tensor drives every later step.

All probability math runs in log space; illegal moves are structurally
absent from the sparse tensors and therefore carry exactly zero mass.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

LOG_ZERO = -np.inf

TRANSITION_FLOOR = 1e-6
MIXTURE_WEIGHT_FLOOR = 1e-6
VARIANCE_FLOOR_SCALE = 1e-4
ABS_VARIANCE_FLOOR = 1e-8

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class CircularTopology:
    """Ring of num_states states; legal moves are self-loop and successor."""

    num_states: int

    def __post_init__(self):
        if self.num_states < 1:
            raise ValueError("need at least one state")

    def successors(self, state: int) -> tuple[int, ...]:
        """Successors in storage order: (self, clockwise next)."""
        if not 0 <= state < self.num_states:
            raise ValueError("state %d out of range [0, %d)" % (state, self.num_states))
        if self.num_states == 1:
            return (0,)
        return (state, (state + 1) % self.num_states)

    @property
    def branch(self) -> int:
        """Number of legal successors per state (2, or 1 when N = 1)."""
        return 1 if self.num_states == 1 else 2


def legal_successors(topology: CircularTopology, state: int) -> set[int]:
    """The set of states reachable from `state` in one step."""
    return set(topology.successors(state))


def legal_contexts(topology: CircularTopology, order: int) -> list[tuple[int, ...]]:
    """All length-`order` state tuples whose consecutive moves are legal, sorted."""
    if order < 1:
        raise ValueError("order must be >= 1")
    contexts = [(i,) for i in range(topology.num_states)]
    for _ in range(order - 1):
        contexts = [c + (s,) for c in contexts for s in topology.successors(c[-1])]
    return sorted(contexts)


def _floored_row(probs: np.ndarray, floor: float) -> np.ndarray:
    probs = np.maximum(probs, floor)
    return probs / probs.sum()


class TransitionTensor:
    """Order-r transition probabilities stored only on legal circular paths.

    Row `contexts[i]` holds the distribution over the successors of the
    context's last state, in `CircularTopology.successors` order.
    """

    def __init__(self, topology: CircularTopology, order: int, matrix: np.ndarray):
        self.topology = topology
        self.order = order
        self.contexts = tuple(legal_contexts(topology, order))
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.shape != (len(self.contexts), topology.branch):
            raise ValueError(
                "transition matrix must have shape (%d, %d)"
                % (len(self.contexts), topology.branch)
            )
        self.matrix = matrix
        self._row_index = {ctx: i for i, ctx in enumerate(self.contexts)}

    @classmethod
    def uniform(cls, topology: CircularTopology, order: int) -> "TransitionTensor":
        rows = len(legal_contexts(topology, order))
        matrix = np.full((rows, topology.branch), 1.0 / topology.branch)
        return cls(topology, order, matrix)

    def row(self, context: tuple[int, ...]) -> np.ndarray:
        return self.matrix[self._row_index[context]]

    def row_index(self, context: tuple[int, ...]) -> int:
        return self._row_index[context]

    def prob(self, context: tuple[int, ...], next_state: int) -> float:
        """Probability of `next_state` after `context`; 0 for illegal moves."""
        if context not in self._row_index:
            return 0.0
        successors = self.topology.successors(context[-1])
        if next_state not in successors:
            return 0.0
        return float(self.row(context)[successors.index(next_state)])

    def copy(self) -> "TransitionTensor":
        return TransitionTensor(self.topology, self.order, self.matrix.copy())

    def validate(self, tol: float = 1e-12) -> None:
        if np.any(self.matrix < 0):
            raise ValueError("negative transition probability")
        sums = self.matrix.sum(axis=1)
        if np.max(np.abs(sums - 1.0)) > tol:
            raise ValueError("transition rows must sum to 1 within %g" % tol)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, TransitionTensor)
            and self.order == other.order
            and self.topology == other.topology
            and np.array_equal(self.matrix, other.matrix)
        )


@dataclass
class GaussianMixtureEmission:
    """Per-state diagonal Gaussian mixtures: weights (N,M), means and
    variances (N,M,D)."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.means = np.asarray(self.means, dtype=np.float64)
        self.variances = np.asarray(self.variances, dtype=np.float64)
        if self.weights.ndim != 2 or self.means.ndim != 3 or self.variances.ndim != 3:
            raise ValueError("expected weights (N,M), means and variances (N,M,D)")
        if self.means.shape != self.variances.shape or self.means.shape[:2] != self.weights.shape:
            raise ValueError("inconsistent emission parameter shapes")

    @property
    def num_states(self) -> int:
        return self.weights.shape[0]

    @property
    def num_mixtures(self) -> int:
        return self.weights.shape[1]

    @property
    def dim(self) -> int:
        return self.means.shape[2]

    def component_log_probs(self, obs: np.ndarray) -> np.ndarray:
        """Weighted per-component log densities, shape (T, N, M)."""
        x = obs[:, None, None, :]
        sq = ((x - self.means[None]) ** 2 / self.variances[None]).sum(axis=3)
        log_det = np.log(self.variances).sum(axis=2)
        with np.errstate(divide="ignore"):
            log_w = np.log(self.weights)
        return log_w[None] - 0.5 * (self.dim * _LOG_2PI + log_det[None] + sq)

    def log_prob_matrix(self, obs: np.ndarray) -> np.ndarray:
        """log b_q(O_t) for every frame and state, shape (T, N)."""
        return logsumexp(self.component_log_probs(obs), axis=2)

    def copy(self) -> "GaussianMixtureEmission":
        return GaussianMixtureEmission(
            self.weights.copy(), self.means.copy(), self.variances.copy()
        )

    def validate(self, tol: float = 1e-12) -> None:
        if np.any(self.weights < 0):
            raise ValueError("negative mixture weight")
        sums = self.weights.sum(axis=1)
        if np.max(np.abs(sums - 1.0)) > tol:
            raise ValueError("mixture weights must sum to 1 within %g" % tol)
        if np.any(self.variances <= 0):
            raise ValueError("variances must be strictly positive")


@dataclass
class HmmModel:
    """Order-r circular HMM.

    tensors[k] is the order-k transition tensor: it drives the step at
    time t = k+1 for k < r and every step from t = r+1 on for k = r.
    """

    topology: CircularTopology
    order: int
    initial: np.ndarray
    tensors: dict[int, TransitionTensor]
    emissions: GaussianMixtureEmission

    def __post_init__(self):
        self.initial = np.asarray(self.initial, dtype=np.float64)
        if self.order not in (1, 2, 3):
            raise ValueError("supported orders are 1, 2, 3")
        if self.initial.shape != (self.topology.num_states,):
            raise ValueError("initial distribution must have one entry per state")
        if sorted(self.tensors) != list(range(1, self.order + 1)):
            raise ValueError("need one tensor per context length 1..order")
        for k, tensor in self.tensors.items():
            if tensor.order != k or tensor.topology != self.topology:
                raise ValueError("tensor for context length %d is inconsistent" % k)
        if self.emissions.num_states != self.topology.num_states:
            raise ValueError("emissions must cover every state")

    @property
    def num_states(self) -> int:
        return self.topology.num_states

    @property
    def dim(self) -> int:
        return self.emissions.dim

    def copy(self) -> "HmmModel":
        return HmmModel(
            self.topology,
            self.order,
            self.initial.copy(),
            {k: t.copy() for k, t in self.tensors.items()},
            self.emissions.copy(),
        )

    def validate(self, tol: float = 1e-12) -> None:
        if abs(self.initial.sum() - 1.0) > tol or np.any(self.initial < 0):
            raise ValueError("initial distribution must be a probability vector")
        for tensor in self.tensors.values():
            tensor.validate(tol)
        self.emissions.validate(tol)

    def to_dict(self) -> dict:
        return {
            "format": "circular-hmm",
            "version": 1,
            "order": self.order,
            "num_states": self.num_states,
            "num_mixtures": self.emissions.num_mixtures,
            "dim": self.dim,
            "initial": self.initial.tolist(),
            "tensors": {
                str(k): {
                    ",".join(map(str, ctx)): tensor.matrix[i].tolist()
                    for i, ctx in enumerate(tensor.contexts)
                }
                for k, tensor in self.tensors.items()
            },
            "emissions": {
                "weights": self.emissions.weights.tolist(),
                "means": self.emissions.means.tolist(),
                "variances": self.emissions.variances.tolist(),
            },
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "HmmModel":
        if doc.get("format") != "circular-hmm":
            raise ValueError("not a circular-hmm document")
        topology = CircularTopology(int(doc["num_states"]))
        tensors = {}
        for key, rows in doc["tensors"].items():
            order = int(key)
            tensor = TransitionTensor.uniform(topology, order)
            matrix = np.empty_like(tensor.matrix)
            for ctx_key, row in rows.items():
                ctx = tuple(int(v) for v in ctx_key.split(","))
                matrix[tensor.row_index(ctx)] = row
            tensors[order] = TransitionTensor(topology, order, matrix)
        emissions = GaussianMixtureEmission(
            np.array(doc["emissions"]["weights"]),
            np.array(doc["emissions"]["means"]),
            np.array(doc["emissions"]["variances"]),
        )
        model = cls(topology, int(doc["order"]), np.array(doc["initial"]), tensors, emissions)
        model.validate(tol=1e-9)
        return model

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path) -> "HmmModel":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _as_frames(observations) -> np.ndarray:
    frames = getattr(observations, "frames", observations)
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[0] < 1:
        raise ValueError("observations must form a non-empty (T, D) matrix")
    if not np.all(np.isfinite(frames)):
        raise ValueError("observations contain non-finite values")
    return frames


def _check_dim(model: HmmModel, frames: np.ndarray) -> None:
    if frames.shape[1] != model.dim:
        raise ValueError(
            "observation dim %d does not match emission dim %d"
            % (frames.shape[1], model.dim)
        )


# ---------------------------------------------------------------------------
# Path scoring
# ---------------------------------------------------------------------------


def _log(p: float) -> float:
    return float(np.log(p)) if p > 0.0 else LOG_ZERO


def sequence_log_prob(model: HmmModel, states) -> float:
    """Log-probability of a state path; -inf if it uses an illegal move.

    The path factorizes as initial * boot terms * full-order terms: step t
    conditions on the previous min(t-1, order) states.
    """
    states = [int(s) for s in np.asarray(states).ravel()]
    if not states:
        raise ValueError("state sequence must be non-empty")
    for s in states:
        if not 0 <= s < model.num_states:
            raise ValueError("state %d out of range" % s)
    total = _log(float(model.initial[states[0]]))
    for t in range(1, len(states)):
        k = min(t, model.order)
        context = tuple(states[t - k : t])
        total += _log(model.tensors[k].prob(context, states[t]))
    return total


def joint_log_prob(model: HmmModel, states, observations) -> float:
    """Log of the joint path/observation probability under the model."""
    frames = _as_frames(observations)
    _check_dim(model, frames)
    states = [int(s) for s in np.asarray(states).ravel()]
    if len(states) != frames.shape[0]:
        raise ValueError("state path and observations must have equal length")
    path_lp = sequence_log_prob(model, states)
    if path_lp == LOG_ZERO:
        return LOG_ZERO
    log_b = model.emissions.log_prob_matrix(frames)
    return path_lp + float(log_b[np.arange(len(states)), states].sum())


# ---------------------------------------------------------------------------
# Composite lattice
# ---------------------------------------------------------------------------


class _Step:
    """One lattice time step with both predecessor and successor views."""

    __slots__ = (
        "order",
        "prev_states",
        "next_states",
        "pred_idx",
        "pred_logw",
        "pred_row",
        "pred_col",
        "succ_idx",
        "succ_logw",
        "emit",
    )


class CompositeLattice:
    """First-order view of an order-r circular model over context tuples.

    Lattice states at time t are the last min(t, r) path states; boot
    steps extend the tuple, stationary steps shift it.  Every state has at
    most two predecessors and two successors, so the DP recursions reduce
    to fixed-width gather/logaddexp operations.
    """

    def __init__(self, model: HmmModel):
        self.model = model
        self.order = model.order
        topology = model.topology

        layers = [[(i,) for i in range(topology.num_states)]]
        for k in range(2, model.order + 1):
            layers.append(sorted(c + (s,) for c in layers[-1] for s in topology.successors(c[-1])))
        self.boot_layers = layers[:-1] if model.order > 1 else []
        self.stationary_states = layers[-1]
        self.layer_emit = [np.array([c[-1] for c in layer]) for layer in layers]

        self.boot_steps = [
            self._build_boot_step(layers[k - 1], layers[k], model.tensors[k])
            for k in range(1, model.order)
        ]
        self.stationary_step = self._build_stationary_step(model.tensors[model.order])
        self.stationary_size = len(self.stationary_states)
        self.initial_log = self._safe_log(model.initial)

    @staticmethod
    def _safe_log(values: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(values)

    def _build_boot_step(self, prev_layer, next_layer, tensor) -> _Step:
        topology = self.model.topology
        prev_index = {c: i for i, c in enumerate(prev_layer)}
        next_index = {c: i for i, c in enumerate(next_layer)}
        log_matrix = self._safe_log(tensor.matrix)

        step = _Step()
        step.order = tensor.order
        step.prev_states = prev_layer
        step.next_states = next_layer
        n_next, n_prev = len(next_layer), len(prev_layer)
        width = topology.branch

        step.pred_idx = np.zeros((n_next, 1), dtype=np.intp)
        step.pred_logw = np.full((n_next, 1), LOG_ZERO)
        step.pred_row = np.zeros(n_next, dtype=np.intp)
        step.pred_col = np.zeros(n_next, dtype=np.intp)
        step.succ_idx = np.zeros((n_prev, width), dtype=np.intp)
        step.succ_logw = np.full((n_prev, width), LOG_ZERO)

        for j, ctx in enumerate(next_layer):
            prefix, last = ctx[:-1], ctx[-1]
            row = tensor.row_index(prefix)
            col = topology.successors(prefix[-1]).index(last)
            step.pred_idx[j, 0] = prev_index[prefix]
            step.pred_logw[j, 0] = log_matrix[row, col]
            step.pred_row[j] = row
            step.pred_col[j] = col
        for i, ctx in enumerate(prev_layer):
            for col, s in enumerate(topology.successors(ctx[-1])):
                step.succ_idx[i, col] = next_index[ctx + (s,)]
                step.succ_logw[i, col] = log_matrix[tensor.row_index(ctx), col]
        step.emit = self.layer_emit[len(next_layer[0]) - 1]
        return step

    def _build_stationary_step(self, tensor) -> _Step:
        topology = self.model.topology
        states = self.stationary_states
        index = {c: i for i, c in enumerate(states)}
        log_matrix = self._safe_log(tensor.matrix)
        width = topology.branch
        n = len(states)

        step = _Step()
        step.order = tensor.order
        step.prev_states = states
        step.next_states = states
        step.succ_idx = np.zeros((n, width), dtype=np.intp)
        step.succ_logw = np.full((n, width), LOG_ZERO)
        incoming: list[list[tuple[int, float]]] = [[] for _ in range(n)]
        for i, ctx in enumerate(states):
            row = tensor.row_index(ctx)
            for col, s in enumerate(topology.successors(ctx[-1])):
                dst = index[ctx[1:] + (s,)]
                step.succ_idx[i, col] = dst
                step.succ_logw[i, col] = log_matrix[row, col]
                incoming[dst].append((i, log_matrix[row, col]))

        max_in = max(len(edges) for edges in incoming)
        step.pred_idx = np.zeros((n, max_in), dtype=np.intp)
        step.pred_logw = np.full((n, max_in), LOG_ZERO)
        for j, edges in enumerate(incoming):
            for slot, (src, logw) in enumerate(sorted(edges)):
                step.pred_idx[j, slot] = src
                step.pred_logw[j, slot] = logw
        step.emit = self.layer_emit[-1]
        return step

    def _step_for_time(self, t: int) -> _Step:
        """Step structure feeding the lattice layer at (0-based) time t."""
        if t < self.order:
            return self.boot_steps[t - 1]
        return self.stationary_step

    @staticmethod
    def _lse_rows(z: np.ndarray) -> np.ndarray:
        if z.shape[1] == 1:
            return z[:, 0].copy()
        out = np.logaddexp(z[:, 0], z[:, 1])
        for col in range(2, z.shape[1]):
            out = np.logaddexp(out, z[:, col])
        return out

    def emission_lattice(self, log_b: np.ndarray) -> list[np.ndarray]:
        """Per-layer emission log-probs for each of the T time steps."""
        T = log_b.shape[0]
        return [log_b[t, self.layer_emit[min(t, self.order - 1)]] for t in range(T)]

    def forward(self, log_b: np.ndarray):
        """Forward pass; returns (alphas per layer, total log-likelihood)."""
        T = log_b.shape[0]
        alphas = [self.initial_log + log_b[0]]
        for t in range(1, T):
            step = self._step_for_time(t)
            z = alphas[-1][step.pred_idx] + step.pred_logw
            alphas.append(self._lse_rows(z) + log_b[t, step.emit])
        return alphas, float(logsumexp(alphas[-1]))

    def backward(self, log_b: np.ndarray) -> list[np.ndarray]:
        T = log_b.shape[0]
        betas = [np.zeros(len(self._layer_states(T - 1)))]
        for t in range(T - 1, 0, -1):
            step = self._step_for_time(t)
            z = step.succ_logw + (betas[-1] + log_b[t, step.emit])[step.succ_idx]
            betas.append(self._lse_rows(z))
        betas.reverse()
        return betas

    def _layer_states(self, t: int):
        if t < self.order - 1:
            return self.boot_layers[t]
        return self.stationary_states

    def viterbi(self, log_b: np.ndarray):
        """Best path and its log-probability; ties prefer the lowest
        composite-state index (layers are sorted lexicographically)."""
        T = log_b.shape[0]
        scores = self.initial_log + log_b[0]
        backptr = []
        for t in range(1, T):
            step = self._step_for_time(t)
            z = scores[step.pred_idx] + step.pred_logw
            best = np.argmax(z, axis=1)
            backptr.append(step.pred_idx[np.arange(z.shape[0]), best])
            scores = z[np.arange(z.shape[0]), best] + log_b[t, step.emit]
        final = int(np.argmax(scores))
        best_lp = float(scores[final])
        idx_path = [final]
        for ptr in reversed(backptr):
            idx_path.append(int(ptr[idx_path[-1]]))
        idx_path.reverse()
        states = [int(self._layer_states(t)[i][-1]) for t, i in enumerate(idx_path)]
        return np.array(states, dtype=np.intp), best_lp


def forward_log_likelihood(model: HmmModel, observations) -> float:
    """log P(O | model): the exact sum over all legal state paths."""
    frames = _as_frames(observations)
    _check_dim(model, frames)
    log_b = model.emissions.log_prob_matrix(frames)
    _, ll = CompositeLattice(model).forward(log_b)
    return ll


def viterbi_align(model: HmmModel, observations):
    """Most likely state path and its joint log-probability."""
    frames = _as_frames(observations)
    _check_dim(model, frames)
    log_b = model.emissions.log_prob_matrix(frames)
    return CompositeLattice(model).viterbi(log_b)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


class _Accumulators:
    """Expected sufficient statistics; merging across utterances is a sum."""

    def __init__(self, model: HmmModel):
        self.initial = np.zeros(model.num_states)
        self.tensor_counts = {
            k: np.zeros_like(t.matrix) for k, t in model.tensors.items()
        }
        em = model.emissions
        self.occupancy = np.zeros((em.num_states, em.num_mixtures))
        self.weighted_sum = np.zeros((em.num_states, em.num_mixtures, em.dim))
        self.weighted_sq_sum = np.zeros((em.num_states, em.num_mixtures, em.dim))


def _accumulate_utterance(lattice: CompositeLattice, model: HmmModel,
                          frames: np.ndarray, acc: _Accumulators) -> float:
    comp_log = model.emissions.component_log_probs(frames)
    log_b = logsumexp(comp_log, axis=2)
    alphas, ll = lattice.forward(log_b)
    if not np.isfinite(ll):
        raise ValueError("observation sequence has zero likelihood under the model")
    betas = lattice.backward(log_b)
    T = frames.shape[0]
    order = model.order

    # State-level posteriors, folded from lattice tuples onto ring states.
    gamma_states = np.zeros((T, model.num_states))
    for t in range(T):
        g = np.exp(alphas[t] + betas[t] - ll)
        np.add.at(gamma_states[t], lattice.layer_emit[min(t, order - 1)], g)

    acc.initial += gamma_states[0]

    # Mixture responsibilities.
    with np.errstate(invalid="ignore"):
        post = np.exp(comp_log - log_b[:, :, None])
    post = np.where(np.isfinite(post), post, 0.0)
    resp = gamma_states[:, :, None] * post
    acc.occupancy += resp.sum(axis=0)
    acc.weighted_sum += np.einsum("tnm,td->nmd", resp, frames)
    acc.weighted_sq_sum += np.einsum("tnm,td->nmd", resp, frames**2)

    # Boot transitions (one edge per destination state).
    for t in range(1, min(order, T)):
        step = lattice.boot_steps[t - 1]
        xi = np.exp(
            alphas[t - 1][step.pred_idx[:, 0]]
            + step.pred_logw[:, 0]
            + log_b[t, step.emit]
            + betas[t]
            - ll
        )
        np.add.at(acc.tensor_counts[step.order], (step.pred_row, step.pred_col), xi)

    # Stationary transitions, vectorized over time.  Stationary layers are
    # t = order-1 .. T-1; source rows coincide with main-tensor rows.
    if T > order:
        step = lattice.stationary_step
        alpha_stat = np.stack(alphas[order - 1 : T - 1])
        beta_stat = np.stack(betas[order:T])
        tail = beta_stat[:, step.succ_idx] + log_b[order:T, step.emit][:, step.succ_idx]
        xi = np.exp(alpha_stat[:, :, None] + step.succ_logw[None] + tail - ll)
        acc.tensor_counts[order] += xi.sum(axis=0)
    return ll


def _m_step(model: HmmModel, acc: _Accumulators, transition_floor: float,
            weight_floor: float, variance_floor: np.ndarray) -> HmmModel:
    new = model.copy()
    new.initial = _floored_row(acc.initial / acc.initial.sum(), transition_floor)

    for k, tensor in new.tensors.items():
        counts = acc.tensor_counts[k]
        totals = counts.sum(axis=1)
        for i in np.flatnonzero(totals > 0):
            tensor.matrix[i] = _floored_row(counts[i] / totals[i], transition_floor)

    em = new.emissions
    for q in range(em.num_states):
        occ = acc.occupancy[q]
        if occ.sum() <= 0:
            continue  # state never visited: keep previous parameters
        em.weights[q] = _floored_row(occ / occ.sum(), weight_floor)
        for m in np.flatnonzero(occ > 0):
            mean = acc.weighted_sum[q, m] / occ[m]
            var = acc.weighted_sq_sum[q, m] / occ[m] - mean**2
            em.means[q, m] = mean
            em.variances[q, m] = np.maximum(var, variance_floor)
    return new


def corpus_variance_floor(corpus, scale: float = VARIANCE_FLOOR_SCALE) -> np.ndarray:
    """Per-dimension variance floor from pooled corpus statistics."""
    pooled = np.vstack([_as_frames(seq) for seq in corpus])
    global_var = pooled.var(axis=0)
    if np.any(global_var < ABS_VARIANCE_FLOOR):
        warnings.warn(
            "degenerate corpus: near-zero variance in some dimensions; "
            "variance floor engaged",
            RuntimeWarning,
            stacklevel=3,
        )
    return np.maximum(scale * global_var, ABS_VARIANCE_FLOOR)


def baum_welch_train(
    model: HmmModel,
    corpus,
    max_iters: int = 15,
    tol: float | None = 1e-4,
    transition_floor: float = TRANSITION_FLOOR,
    weight_floor: float = MIXTURE_WEIGHT_FLOOR,
    variance_floor: np.ndarray | None = None,
):
    """EM on the composite lattice; returns (model, per-iteration log-likelihoods).

    The i-th returned log-likelihood is the total corpus score of the model
    entering iteration i, so the list is non-decreasing.  Stops early once
    the relative gain falls below `tol` (pass None to always run max_iters).
    """
    if not corpus:
        raise ValueError("training corpus must be non-empty")
    frames_list = [_as_frames(seq) for seq in corpus]
    for frames in frames_list:
        _check_dim(model, frames)
    if max_iters == 0:
        return model.copy(), []
    if variance_floor is None:
        variance_floor = corpus_variance_floor(frames_list)
    variance_floor = np.broadcast_to(np.asarray(variance_floor, dtype=np.float64),
                                     (model.dim,))

    current = model
    log_likelihoods: list[float] = []
    for _ in range(max_iters):
        lattice = CompositeLattice(current)
        acc = _Accumulators(current)
        total = 0.0
        for frames in frames_list:
            total += _accumulate_utterance(lattice, current, frames, acc)
        log_likelihoods.append(total)
        current = _m_step(current, acc, transition_floor, weight_floor, variance_floor)
        if tol is not None and len(log_likelihoods) >= 2:
            prev = log_likelihoods[-2]
            if log_likelihoods[-1] - prev < tol * abs(prev):
                break
    return current, log_likelihoods


def promote_order(model: HmmModel) -> HmmModel:
    """Initialize an order-(r+1) model from a trained order-r model.

    The new full-order tensor replicates each order-r row across every
    legal added context symbol; shorter tensors, emissions, and the
    initial distribution are copied, so every observation sequence keeps
    its likelihood.
    """
    if model.order not in (1, 2):
        raise ValueError("can only promote models of order 1 or 2")
    source = model.tensors[model.order]
    promoted = TransitionTensor.uniform(model.topology, model.order + 1)
    matrix = np.empty_like(promoted.matrix)
    for i, ctx in enumerate(promoted.contexts):
        matrix[i] = source.row(ctx[1:])
    tensors = {k: t.copy() for k, t in model.tensors.items()}
    tensors[model.order + 1] = TransitionTensor(model.topology, model.order + 1, matrix)
    return HmmModel(
        model.topology,
        model.order + 1,
        model.initial.copy(),
        tensors,
        model.emissions.copy(),
    )


def sample_sequence(model: HmmModel, num_frames: int, rng_seed):
    """Ancestral sampling; returns (states, observations (T, D)).

    Deterministic given the seed; the sampled path only uses legal moves.
    """
    if num_frames < 1:
        raise ValueError("need at least one frame")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    states = [int(rng.choice(model.num_states, p=model.initial))]
    for t in range(1, num_frames):
        k = min(t, model.order)
        context = tuple(states[t - k : t])
        successors = model.topology.successors(context[-1])
        row = model.tensors[k].row(context)
        states.append(int(successors[rng.choice(len(successors), p=row)]))
    em = model.emissions
    obs = np.empty((num_frames, em.dim))
    for t, q in enumerate(states):
        m = int(rng.choice(em.num_mixtures, p=em.weights[q]))
        obs[t] = rng.normal(em.means[q, m], np.sqrt(em.variances[q, m]))
    return np.array(states, dtype=np.intp), obs


# ---------------------------------------------------------------------------
# Initialization and the order-promotion training chain
# ---------------------------------------------------------------------------


def lloyd_kmeans(data: np.ndarray, num_clusters: int, rng, iters: int = 10):
    """Plain k-means; empty clusters keep their previous centroid.

    Returns (centroids (K, D), assignment (n,)).
    """
    data = np.asarray(data, dtype=np.float64)
    n = data.shape[0]
    if n == 0:
        raise ValueError("cannot cluster an empty data set")
    k = min(num_clusters, n)
    pick = rng.choice(n, size=k, replace=False)
    centroids = data[pick].copy()
    if k < num_clusters:
        extra = np.repeat(centroids[-1:], num_clusters - k, axis=0)
        centroids = np.vstack([centroids, extra])
    assign = np.zeros(n, dtype=np.intp)
    for _ in range(iters):
        dists = ((data[:, None, :] - centroids[None]) ** 2).sum(axis=2)
        assign = dists.argmin(axis=1)
        for c in range(num_clusters):
            members = data[assign == c]
            if members.shape[0]:
                centroids[c] = members.mean(axis=0)
    return centroids, assign


def initial_model(
    corpus,
    num_states: int,
    num_mixtures: int = 3,
    seed: int = 0,
    weight_floor: float = MIXTURE_WEIGHT_FLOOR,
) -> HmmModel:
    """Untrained order-1 model: uniform start and transitions, emission
    means from segmental k-means over uniform time slices, variances from
    global corpus statistics."""
    frames_list = [_as_frames(seq) for seq in corpus]
    if not frames_list:
        raise ValueError("corpus must be non-empty")
    dim = frames_list[0].shape[1]
    topology = CircularTopology(num_states)
    rng = np.random.default_rng(seed)

    pooled = np.vstack(frames_list)
    global_var = np.maximum(pooled.var(axis=0), ABS_VARIANCE_FLOOR)

    per_state: list[list[np.ndarray]] = [[] for _ in range(num_states)]
    for frames in frames_list:
        for state, chunk in enumerate(np.array_split(frames, num_states)):
            if chunk.shape[0]:
                per_state[state].append(chunk)

    weights = np.zeros((num_states, num_mixtures))
    means = np.zeros((num_states, num_mixtures, dim))
    variances = np.tile(global_var, (num_states, num_mixtures, 1))
    for q in range(num_states):
        data = np.vstack(per_state[q]) if per_state[q] else pooled
        centroids, assign = lloyd_kmeans(data, num_mixtures, rng)
        means[q] = centroids
        counts = np.bincount(assign, minlength=num_mixtures).astype(np.float64)
        weights[q] = _floored_row(counts / counts.sum(), weight_floor)

    return HmmModel(
        topology,
        1,
        np.full(num_states, 1.0 / num_states),
        {1: TransitionTensor.uniform(topology, 1)},
        GaussianMixtureEmission(weights, means, variances),
    )


def train_circular_chain(
    corpus,
    num_states: int = 6,
    num_mixtures: int = 3,
    iters: tuple[int, int, int] = (6, 6, 8),
    tol: float | None = 1e-4,
    seed: int = 0,
    transition_floor: float = TRANSITION_FLOOR,
):
    """Order-promotion training: fit order 1, promote, refit, promote, refit.

    Returns (order-3 model, {"order1": lls, "order2": lls, "order3": lls}).
    """
    frames_list = [_as_frames(seq) for seq in corpus]
    variance_floor = corpus_variance_floor(frames_list)
    model = initial_model(frames_list, num_states, num_mixtures, seed)
    history = {}
    for stage, stage_iters in enumerate(iters, start=1):
        model, lls = baum_welch_train(
            model,
            frames_list,
            max_iters=stage_iters,
            tol=tol,
            transition_floor=transition_floor,
            variance_floor=variance_floor,
        )
        history["order%d" % stage] = lls
        if stage < len(iters):
            model = promote_order(model)
    return model, history
