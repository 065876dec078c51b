"""Core value types for the edge re-ranking engine.

Everything here is an immutable value object; the watched-video list is the
only thing that "mutates", and it does so by returning a new list.  All types
round-trip losslessly through plain dicts so they can be written to and read
back from newline-delimited JSON event logs.
"""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Sequence

DURATION_CAP_S = 1800.0
DEFAULT_HISTORY_LEN = 20

# effective-view thresholds by duration bucket: (duration upper bound, threshold)
EFFECTIVE_VIEW_THRESHOLDS = (
    (15.0, 5.0),
    (600.0, 10.0),
    (float("inf"), 20.0),
)


class NetCondition(enum.Enum):
    WIFI = "wifi"
    CELL_GOOD = "cell_good"
    CELL_POOR = "cell_poor"
    OFFLINE_RISK = "offline_risk"

    @property
    def index(self) -> int:
        return list(NetCondition).index(self)


def effective_view_threshold_s(duration_s: float) -> float:
    """Watch-time threshold above which a view counts as effective."""
    for upper, threshold in EFFECTIVE_VIEW_THRESHOLDS:
        if duration_s < upper or upper == float("inf"):
            return threshold
    raise AssertionError("unreachable")


def effective_view_label(watch_time_s: float, duration_s: float) -> bool:
    """Duration-bucketed effective-view rule shared by labels and simulator."""
    if watch_time_s < 0 or duration_s < 0:
        raise ValueError("watch_time_s and duration_s must be non-negative")
    return bool(watch_time_s >= effective_view_threshold_s(duration_s))


@dataclass(frozen=True)
class VideoMeta:
    video_id: str
    category_id: int
    duration_s: float

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ValueError(f"duration_s must be positive, got {self.duration_s}")
        if self.category_id < 0:
            raise ValueError("category_id must be non-negative")

    @property
    def clamped_duration_s(self) -> float:
        # long-tail durations are cut off before any encoding
        return min(self.duration_s, DURATION_CAP_S)


@dataclass(frozen=True)
class ServerScores:
    """Engagement rates predicted by the server-side ranking stack."""

    p_effective_view: float
    p_like: float
    p_follow: float

    def __post_init__(self):
        for name in ("p_effective_view", "p_like", "p_follow"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0,1], got {v}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.p_effective_view, self.p_like, self.p_follow)


@dataclass(frozen=True)
class Feedback:
    effective_view: bool
    like: bool
    follow: bool
    share: bool
    watch_time_s: float

    def __post_init__(self):
        if self.watch_time_s < 0:
            raise ValueError("watch_time_s must be non-negative")

    @classmethod
    def from_watch(
        cls,
        watch_time_s: float,
        duration_s: float,
        like: bool = False,
        follow: bool = False,
        share: bool = False,
    ) -> "Feedback":
        """Build feedback with the effective_view flag derived from watch time."""
        return cls(
            effective_view=effective_view_label(watch_time_s, duration_s),
            like=like,
            follow=follow,
            share=share,
            watch_time_s=watch_time_s,
        )


@dataclass(frozen=True)
class WatchedRecord:
    video: VideoMeta
    server_scores: ServerScores
    feedback: Feedback
    impression_ts_ms: int
    impression_pos: int

    def __post_init__(self):
        if self.impression_pos < 1:
            raise ValueError("impression_pos is 1-based")


@dataclass(frozen=True)
class WatchHistory:
    """Bounded FIFO of consumed videos, newest last."""

    records: tuple[WatchedRecord, ...] = ()
    max_len: int = DEFAULT_HISTORY_LEN

    def __post_init__(self):
        if self.max_len < 1:
            raise ValueError("max_len must be positive")
        if len(self.records) > self.max_len:
            raise ValueError("history longer than max_len")
        positions = [r.impression_pos for r in self.records]
        if any(b <= a for a, b in zip(positions, positions[1:])):
            raise ValueError("impression_pos must be strictly increasing")

    def __len__(self) -> int:
        return len(self.records)

    @property
    def last(self) -> WatchedRecord | None:
        return self.records[-1] if self.records else None


def push_watched(history: WatchHistory, record: WatchedRecord) -> WatchHistory:
    """Append a consumed video, evicting the oldest record when full.

    Rejects non-monotone impression positions: those indicate a session
    bookkeeping bug, not a recoverable condition.
    """
    last = history.last
    if last is not None and record.impression_pos <= last.impression_pos:
        raise ValueError(
            f"impression_pos {record.impression_pos} not after {last.impression_pos}"
        )
    records = history.records + (record,)
    if len(records) > history.max_len:
        records = records[len(records) - history.max_len:]
    return replace(history, records=records)


@dataclass(frozen=True)
class ClientContext:
    net_condition: NetCondition
    next_impression_pos: int
    now_ts_ms: int

    def __post_init__(self):
        if self.next_impression_pos < 1:
            raise ValueError("next_impression_pos is 1-based")


@dataclass(frozen=True)
class Candidate:
    video: VideoMeta
    server_scores: ServerScores
    buffered_len_s: float
    server_rank: int

    def __post_init__(self):
        if self.buffered_len_s < 0:
            raise ValueError("buffered_len_s must be non-negative")
        if self.buffered_len_s > self.video.duration_s + 1e-9:
            raise ValueError("cannot buffer more than the video length")
        if self.server_rank < 0:
            raise ValueError("server_rank must be non-negative")


STABILITY_DISABLED = 0.0  # sentinel: never stop early


@dataclass(frozen=True)
class RerankConfig:
    beam_size_k: int = 4
    n_show: int = 1
    stability_threshold_t: float = 0.95  # STABILITY_DISABLED turns early stop off
    alpha: float = 1.0
    beta: float = 1.0
    max_steps: int = 5

    def __post_init__(self):
        if self.beam_size_k < 1 or self.n_show < 1 or self.max_steps < 1:
            raise ValueError("beam_size_k, n_show and max_steps must be >= 1")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        if not 0.0 <= self.stability_threshold_t <= 1.0:
            raise ValueError("stability_threshold_t must be in [0,1]")

    @property
    def early_stop_enabled(self) -> bool:
        return self.stability_threshold_t > STABILITY_DISABLED


@dataclass(frozen=True)
class ProtocolConfig:
    """Pagination contract: consume m per page, server returns m + extras."""

    page_consume_m: int = 6
    page_return_total: int = 9

    def __post_init__(self):
        if self.page_consume_m < 1:
            raise ValueError("page_consume_m must be >= 1")
        if self.page_return_total < self.page_consume_m:
            raise ValueError("page_return_total must be >= page_consume_m")

    @property
    def extra_n(self) -> int:
        return self.page_return_total - self.page_consume_m


# ---------------------------------------------------------------------------
# dict round-trips for ndjson logs

def video_to_dict(v: VideoMeta) -> dict:
    return {"video_id": v.video_id, "category_id": v.category_id, "duration_s": v.duration_s}


def record_to_dict(r: WatchedRecord) -> dict:
    return {
        "video": video_to_dict(r.video),
        "server_scores": asdict(r.server_scores),
        "feedback": asdict(r.feedback),
        "impression_ts_ms": r.impression_ts_ms,
        "impression_pos": r.impression_pos,
    }


def record_from_dict(d: dict) -> WatchedRecord:
    return WatchedRecord(
        video=VideoMeta(**d["video"]),
        server_scores=ServerScores(**d["server_scores"]),
        feedback=Feedback(**d["feedback"]),
        impression_ts_ms=d["impression_ts_ms"],
        impression_pos=d["impression_pos"],
    )


def candidate_to_dict(c: Candidate) -> dict:
    return {
        "video": video_to_dict(c.video),
        "server_scores": asdict(c.server_scores),
        "buffered_len_s": c.buffered_len_s,
        "server_rank": c.server_rank,
    }


def candidate_from_dict(d: dict) -> Candidate:
    return Candidate(
        video=VideoMeta(**d["video"]),
        server_scores=ServerScores(**d["server_scores"]),
        buffered_len_s=d["buffered_len_s"],
        server_rank=d["server_rank"],
    )
