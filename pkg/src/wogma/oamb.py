"""Online action modeling branch: causal recurrent scoring of clips.

Each clip advances an LSTM state and emits a softmax over n_c action classes
plus background (index 0). Row i of the timeline depends on clips 1..i only;
the streaming path and the training path execute the same per-step
operations in the same order, so their outputs are bitwise identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import DTensor, Parameter
from .autodiff import _sigmoid_vals, _softmax_vals
from .cpgb import PROB_EPS, binary_cross_entropy, top_k_count, top_k_indices
from .lfem import ClipWindowing


@dataclass
class OnlineState:
    """Single-owner recurrent state; advanced exactly once per clip."""

    h: np.ndarray
    c: np.ndarray
    clips_seen: int = 0


@dataclass(frozen=True)
class DetectionInstance:
    start_frame: int
    end_frame: int
    score: float
    label: int


class OnlineBranch:
    """LSTM over clip features plus an affine scoring head."""

    def __init__(self, feature_dim: int, hidden: int, n_classes: int,
                 rng: np.random.Generator):
        self.feature_dim = feature_dim
        self.hidden = hidden
        self.n_classes = n_classes
        self.params: dict[str, Parameter] = {}
        gate_fan = feature_dim + hidden
        self._add(ad.init_uniform(rng, (feature_dim, 4 * hidden), gate_fan, "oamb.w_ih"))
        self._add(ad.init_uniform(rng, (hidden, 4 * hidden), gate_fan, "oamb.w_hh"))
        self._add(ad.init_zeros((4 * hidden,), "oamb.b"))
        self._add(ad.init_uniform(rng, (hidden, n_classes + 1), hidden, "oamb.w_a"))
        self._add(ad.init_zeros((n_classes + 1,), "oamb.b_a"))

    def _add(self, param: Parameter) -> Parameter:
        self.params[param.name] = param
        return param

    def initial_state(self) -> OnlineState:
        return OnlineState(h=np.zeros(self.hidden), c=np.zeros(self.hidden), clips_seen=0)

    # -- streaming (inference) path ----------------------------------------

    def online_step(self, state: OnlineState, feature: np.ndarray) -> tuple[OnlineState, np.ndarray]:
        """Advance one clip; returns the new state and the (n_c+1,) softmax row.

        Mirrors the training-path operation order exactly so streaming and
        batch outputs agree bitwise.
        """
        hidden = self.hidden
        w_ih = self.params["oamb.w_ih"].values
        w_hh = self.params["oamb.w_hh"].values
        bias = self.params["oamb.b"].values
        z = (feature @ w_ih + bias) + state.h @ w_hh
        gate_i = _sigmoid_vals(z[0:hidden])
        gate_f = _sigmoid_vals(z[hidden:2 * hidden])
        cand = np.tanh(z[2 * hidden:3 * hidden])
        gate_o = _sigmoid_vals(z[3 * hidden:4 * hidden])
        c = gate_f * state.c + gate_i * cand
        h = gate_o * np.tanh(c)
        logits = h @ self.params["oamb.w_a"].values + self.params["oamb.b_a"].values
        probs = _softmax_vals(logits)
        return OnlineState(h=h, c=c, clips_seen=state.clips_seen + 1), probs

    def stream(self, features: np.ndarray) -> np.ndarray:
        """Run the streaming path over (L, C_f) features -> (L, n_c+1)."""
        state = self.initial_state()
        rows = np.empty((features.shape[0], self.n_classes + 1))
        for i in range(features.shape[0]):
            state, rows[i] = self.online_step(state, features[i])
        return rows

    # -- training path -------------------------------------------------------

    def timeline(self, features: DTensor) -> DTensor:
        """Differentiable timeline (L, n_c+1) over clip features (L, C_f)."""
        count = features.values.shape[0]
        h = DTensor(np.zeros(self.hidden))
        c = DTensor(np.zeros(self.hidden))
        rows = []
        for i in range(count):
            f_i = ad.slice_rows(features, i, i + 1)
            f_i = ad.reshape(f_i, (self.feature_dim,))
            h, c = ad.lstm_cell(h, c, f_i, self.params["oamb.w_ih"],
                                self.params["oamb.w_hh"], self.params["oamb.b"])
            rows.append(ad.softmax(ad.affine(h, self.params["oamb.w_a"],
                                             self.params["oamb.b_a"])))
        return ad.stack_rows(rows)


def frame_loss(timeline: DTensor, pseudo_labels: np.ndarray) -> DTensor:
    """Mean cross-entropy of timeline rows against one-hot pseudo labels."""
    labels = np.asarray(pseudo_labels, dtype=np.intp)
    count = timeline.values.shape[0]
    if labels.shape != (count,):
        raise ad.ShapeError(
            f"frame_loss: {labels.shape[0]} labels for {count} timeline rows")
    picked = ad.take_entries(ad.log(ad.clip_min(timeline, PROB_EPS)),
                             np.arange(count), labels)
    return ad.scale(ad.reduce_mean(picked), -1.0)


def mil_loss_online(timeline: DTensor, labels: np.ndarray, kappa: int) -> DTensor:
    """Top-K pooled video probability per action class, scored as BCE.

    Pooling runs on the post-softmax action columns, which already live in
    [0, 1], so no extra squashing is applied.
    """
    action_probs = timeline.values[:, 1:]
    picked = top_k_indices(action_probs, kappa)
    per_class = []
    for c, idx in enumerate(picked):
        cols = np.full(idx.size, c + 1, dtype=np.intp)
        per_class.append(ad.reduce_mean(ad.take_entries(timeline, idx, cols)))
    video = ad.reshape(ad.stack_rows([ad.reshape(p, (1,)) for p in per_class]),
                       (len(per_class),))
    return binary_cross_entropy(video, labels)


def prefix_video_prob(timeline_probs: np.ndarray, prefix: int, kappa: int) -> np.ndarray:
    """Top-K video probability per action class over the first `prefix` clips."""
    count = timeline_probs.shape[0]
    if not 1 <= prefix <= count:
        raise ValueError(f"prefix {prefix} outside 1..{count}")
    head = timeline_probs[:prefix, 1:]
    k = top_k_count(prefix, kappa)
    out = np.empty(head.shape[1])
    for c in range(head.shape[1]):
        order = np.lexsort((np.arange(prefix), -head[:, c]))
        out[c] = head[order[:k], c].mean()
    return out


def extract_instances(timeline_probs: np.ndarray, threshold: float,
                      windowing: ClipWindowing) -> list[DetectionInstance]:
    """Maximal runs of consecutive above-threshold clips, one instance each.

    Instance score is the mean clip probability over the run; boundaries map
    through the clip window. Instances come back sorted by score descending.
    """
    instances: list[DetectionInstance] = []
    count = timeline_probs.shape[0]
    for cls in range(1, timeline_probs.shape[1]):
        col = timeline_probs[:, cls]
        i = 0
        while i < count:
            if col[i] >= threshold:
                j = i
                while j + 1 < count and col[j + 1] >= threshold:
                    j += 1
                start, _ = windowing.frame_interval(i + 1)
                _, end = windowing.frame_interval(j + 1)
                instances.append(DetectionInstance(
                    start_frame=start, end_frame=end,
                    score=float(col[i:j + 1].mean()), label=cls))
                i = j + 1
            else:
                i += 1
    instances.sort(key=lambda inst: (-inst.score, inst.start_frame, inst.label))
    return instances


def stream_record(clip_index: int, windowing: ClipWindowing, probs: np.ndarray) -> dict:
    """One JSONL record of the streaming detection output."""
    start, end = windowing.frame_interval(clip_index)
    return {"clip": clip_index, "start_frame": start, "end_frame": end,
            "probs": [float(p) for p in probs]}
