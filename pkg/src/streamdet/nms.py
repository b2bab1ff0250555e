"""Greedy, global and stateful (windowed) non-maximum suppression.

Suppression is class-aware by default: only same-class detections suppress
each other.  Ties in score are broken by input position, so results are
deterministic.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .errors import ContractViolation, InvalidInputError
from .geometry import get_iou


@dataclass(frozen=True)
class NmsConfig:
    iou_threshold: float = 0.5
    window_k: int = 1
    iou_kind: str = "bev"
    class_aware: bool = True
    wrap_seam: bool = False   # let slice 0's keepers also suppress the last slice

    def __post_init__(self):
        if not 0.0 <= self.iou_threshold <= 1.0:
            raise InvalidInputError(f"iou_threshold must lie in [0, 1], got {self.iou_threshold}")
        if self.window_k < 0:
            raise InvalidInputError("window_k must be >= 0")
        get_iou(self.iou_kind)


@dataclass
class NmsState:
    window_k: int = 1
    last_index: int = -1
    buffer: deque = field(default_factory=deque)

    def __post_init__(self):
        self.buffer = deque(self.buffer, maxlen=self.window_k)

    def remembered(self):
        for kept in self.buffer:
            yield from kept


def _overlaps(det, others, iou, threshold, class_aware=True) -> bool:
    return any((o.cls == det.cls or not class_aware) and iou(det.box, o.box) > threshold for o in others)


def nms_greedy(dets, config: NmsConfig = NmsConfig()) -> list:
    """Keep detections in descending score unless they overlap an earlier keeper."""
    iou = get_iou(config.iou_kind)
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    kept = []
    for i in order:
        if not _overlaps(dets[i], kept, iou, config.iou_threshold, config.class_aware):
            kept.append(dets[i])
    return kept


def global_nms(all_dets, config: NmsConfig = NmsConfig()) -> list:
    """Greedy NMS over every slice's detections at once (needs the full rotation)."""
    return nms_greedy(list(all_dets), config)


def stateful_nms(slice_dets, state: NmsState | None, config: NmsConfig = NmsConfig(),
                 index: int | None = None):
    """Suppress within the slice, then against the previous ``window_k`` slices' keepers.

    Returns ``(kept, new_state)``.  ``index`` defaults to the slice after the
    state's last one; passing it explicitly enforces increasing order.
    """
    if state is None:
        state = NmsState(config.window_k)
    elif state.window_k != config.window_k:
        raise InvalidInputError("state window does not match config.window_k")
    if index is None:
        index = state.last_index + 1
    if index <= state.last_index:
        raise ContractViolation(f"slice {index} presented after slice {state.last_index}")
    iou = get_iou(config.iou_kind)
    local = nms_greedy(slice_dets, config)
    prev = list(state.remembered())
    kept = [d for d in local if not _overlaps(d, prev, iou, config.iou_threshold, config.class_aware)]
    buf = deque(state.buffer, maxlen=config.window_k)
    if config.window_k > 0:
        buf.append(kept)
    return kept, NmsState(config.window_k, index, buf)


def per_slice_nms(slices, config: NmsConfig = NmsConfig()) -> list:
    """Independent greedy NMS inside each slice, concatenated in slice order."""
    out = []
    for dets in slices:
        out.extend(nms_greedy(dets, config))
    return out


def run_stateful(slices, config: NmsConfig = NmsConfig()) -> list:
    """Stream a scan's per-slice detection lists through :func:`stateful_nms`."""
    slices = list(slices)
    state = NmsState(config.window_k)
    out, first = [], []
    for i, dets in enumerate(slices):
        kept, state = stateful_nms(dets, state, config, i)
        if i == 0:
            first = kept
        elif config.wrap_seam and i == len(slices) - 1:
            iou = get_iou(config.iou_kind)
            kept = [d for d in kept if not _overlaps(d, first, iou, config.iou_threshold, config.class_aware)]
        out.extend(kept)
    return out
