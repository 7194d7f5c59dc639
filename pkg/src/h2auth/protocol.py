"""Four-step mutual authentication session between a drone and a verifier.

Both endpoints record the hovering drone simultaneously, exchange the
recordings over a MAC-protected channel, and independently require a
positive similarity decision AND a clean attack verdict. Any reject is
retried up to the attempt budget; any integrity failure aborts.
"""

from __future__ import annotations

import base64
import enum
import hashlib
import hmac
import json
import time
from collections import deque
from dataclasses import dataclass, field

from .attack_detect import (
    AttackVerdict,
    GateConfig,
    Overall,
    attack_verdict,
    measure_level,
)
from .audio import AudioClip, Origin
from .classify import LinearModel, predict
from .errors import InvalidConfig, MacFailure, ProtocolViolation, Timeout
from .similarity import (
    BandSpec,
    DEFAULT_ESSENTIAL_CONFIG,
    DEFAULT_MAX_LAG_MS,
    EssentialBandConfig,
    band_feature_vector,
    essential_bands,
)


class Side(enum.Enum):
    DRONE = "drone"
    VERIFIER = "verifier"

    @property
    def peer(self) -> "Side":
        return Side.VERIFIER if self is Side.DRONE else Side.DRONE


class Decision(enum.Enum):
    ACCEPT = "accept"
    REJECT = "reject"
    ABORTED = "aborted"


@dataclass(frozen=True)
class SessionConfig:
    shared_key: bytes
    record_duration_s: float = 3.0
    max_attempts: int = 3
    gate: GateConfig = field(default_factory=GateConfig)
    similarity_model_ref: str | None = None
    liveness_model_ref: str | None = None
    content_model_ref: str | None = None

    def __post_init__(self):
        if self.record_duration_s <= 0.0:
            raise InvalidConfig("record_duration_s must be > 0")
        if self.max_attempts < 1:
            raise InvalidConfig("max_attempts must be >= 1")


@dataclass(frozen=True)
class DecisionBreakdown:
    decision: Decision
    similarity_score: float
    similar: bool
    verdict: AttackVerdict


@dataclass(frozen=True)
class DecisionPipeline:
    """Everything one endpoint needs to judge an exchanged pair of clips.

    Both endpoints run the identical deterministic pipeline on the same
    two quantized clips, which is what makes the authentication mutual.
    """

    similarity_model: LinearModel
    gate: GateConfig = field(default_factory=GateConfig)
    liveness_model: LinearModel | None = None
    content_model: LinearModel | None = None
    band_config: EssentialBandConfig = DEFAULT_ESSENTIAL_CONFIG
    max_lag_ms: float = DEFAULT_MAX_LAG_MS

    def decide(self, own_clip: AudioClip, peer_clip: AudioClip,
               own_side: Side) -> DecisionBreakdown:
        """Similarity comparison AND attack detection, oriented by side."""
        if own_side is Side.DRONE:
            c, d = peer_clip, own_clip
        else:
            c, d = own_clip, peer_clip
        features = band_feature_vector(c, d, essential_bands(self.band_config),
                                       self.max_lag_ms)
        score, similar = predict(self.similarity_model, features.scores)
        reading = measure_level(d, self.gate.calibration)
        verdict = attack_verdict(
            c, reading, self.gate, self.liveness_model, self.content_model,
            essential_band=BandSpec(self.band_config.center_band_low_hz,
                                    self.band_config.center_band_high_hz,
                                    "essential"))
        accept = similar and verdict.overall is Overall.CLEAN
        return DecisionBreakdown(
            Decision.ACCEPT if accept else Decision.REJECT,
            score, similar, verdict)


def decide(own_clip: AudioClip, peer_clip: AudioClip, own_side: Side,
           pipeline: DecisionPipeline) -> DecisionBreakdown:
    """Module-level convenience over DecisionPipeline.decide."""
    return pipeline.decide(own_clip, peer_clip, own_side)


class MessageKind(enum.Enum):
    HELLO = "hello"
    START_RECORDING = "start_recording"
    RECORDING = "recording"
    VERDICT = "verdict"
    ABORT = "abort"


def _canonical(body: dict) -> bytes:
    return json.dumps(body, sort_keys=True, separators=(",", ":")).encode()


@dataclass(frozen=True)
class Message:
    """A protocol message: JSON body plus HMAC-SHA256 tag under the shared
    session key. The tag is verified before any body field is interpreted."""

    body: dict
    mac: str

    @classmethod
    def seal(cls, body: dict, key: bytes) -> "Message":
        mac = hmac.new(key, _canonical(body), hashlib.sha256).hexdigest()
        return cls(body, mac)

    def to_wire(self) -> bytes:
        return json.dumps({"body": self.body, "mac": self.mac},
                          sort_keys=True, separators=(",", ":")).encode()

    @classmethod
    def from_wire(cls, wire: bytes, key: bytes) -> "Message":
        try:
            outer = json.loads(wire.decode())
            body = outer["body"]
            mac = outer["mac"]
        except (UnicodeDecodeError, json.JSONDecodeError, KeyError,
                TypeError) as exc:
            raise MacFailure(f"unparseable message: {exc}") from exc
        expected = hmac.new(key, _canonical(body), hashlib.sha256).hexdigest()
        if not hmac.compare_digest(expected, str(mac)):
            raise MacFailure("message authentication tag mismatch")
        return cls(body, str(mac))

    @property
    def kind(self) -> MessageKind:
        return MessageKind(self.body["kind"])


class _State(enum.Enum):
    IDLE = "idle"
    WAIT_START = "wait_start"
    RECORDING = "recording"
    WAIT_PEER = "wait_peer"
    WAIT_VERDICT = "wait_verdict"
    DONE = "done"
    ABORTED = "aborted"


class Endpoint:
    """One side of the session; a deterministic message-driven state machine."""

    def __init__(self, side: Side, cfg: SessionConfig,
                 pipeline: DecisionPipeline):
        self.side = side
        self.cfg = cfg
        self.pipeline = pipeline
        self.state = _State.IDLE
        self.attempt = 0
        self.own_clip: AudioClip | None = None
        self.peer_clip: AudioClip | None = None
        self._peer_recording_wire: bytes | None = None
        self.own_breakdown: DecisionBreakdown | None = None
        self.peer_decision: Decision | None = None
        self.final_decision: Decision | None = None
        self.abort_reason: str | None = None
        self.decide_seconds = 0.0

    # -- helpers -------------------------------------------------------------

    def _seal(self, kind: MessageKind, **payload) -> bytes:
        body = {"kind": kind.value, "sender": self.side.value,
                "attempt": self.attempt, **payload}
        return Message.seal(body, self.cfg.shared_key).to_wire()

    def _abort(self, reason: str) -> list[bytes]:
        if self.state is _State.ABORTED:
            return []
        self.state = _State.ABORTED
        self.abort_reason = reason
        self.final_decision = Decision.ABORTED
        return [self._seal(MessageKind.ABORT, reason=reason)]

    def _reset_attempt(self) -> None:
        self.own_clip = None
        self.peer_clip = None
        self._peer_recording_wire = None
        self.own_breakdown = None
        self.peer_decision = None

    # -- drone bootstrap -----------------------------------------------------

    def start(self) -> list[bytes]:
        """Drone-side session opener (the drone announces its arrival)."""
        if self.side is not Side.DRONE or self.state is not _State.IDLE:
            raise ProtocolViolation("only an idle drone endpoint can start")
        self.state = _State.WAIT_START
        return [self._seal(MessageKind.HELLO)]

    # -- recording capture (driven by the harness) ----------------------------

    @property
    def needs_recording(self) -> bool:
        return self.state is _State.RECORDING and self.own_clip is None

    def capture(self, clip: AudioClip) -> list[bytes]:
        """Record this attempt's clip; emits the Recording message.

        The clip is quantized to the 16-bit wire form first so both sides
        decide on bit-identical audio.
        """
        if not self.needs_recording:
            raise ProtocolViolation("endpoint is not recording")
        self.own_clip = clip.quantized()
        reading = measure_level(self.own_clip, self.cfg.gate.calibration)
        out = [self._seal(
            MessageKind.RECORDING,
            side=self.side.value,
            sample_rate_hz=self.own_clip.sample_rate_hz,
            level_db=reading.level_db,
            pcm=base64.b64encode(self.own_clip.to_pcm_bytes()).decode(),
        )]
        self.state = _State.WAIT_PEER
        return out + self._maybe_decide()

    # -- message handling ----------------------------------------------------

    def receive(self, wire: bytes) -> list[bytes]:
        if self.state is _State.ABORTED:
            return []
        try:
            msg = Message.from_wire(wire, self.cfg.shared_key)
        except MacFailure as exc:
            return self._abort(f"mac_failure: {exc}")
        try:
            return self._dispatch(msg, wire)
        except ProtocolViolation as exc:
            return self._abort(f"protocol_violation: {exc}")

    def _dispatch(self, msg: Message, wire: bytes) -> list[bytes]:
        kind = msg.kind
        if kind is MessageKind.ABORT:
            self.state = _State.ABORTED
            self.abort_reason = f"peer_abort: {msg.body.get('reason')}"
            self.final_decision = Decision.ABORTED
            return []

        if kind is MessageKind.HELLO:
            if self.side is not Side.VERIFIER or self.state is not _State.IDLE:
                raise ProtocolViolation("unexpected hello")
            self.attempt = 1
            self.state = _State.RECORDING
            return [self._seal(MessageKind.START_RECORDING,
                               sync_timestamp=self.attempt - 1)]

        if kind is MessageKind.START_RECORDING:
            if self.side is not Side.DRONE or self.state is not _State.WAIT_START:
                raise ProtocolViolation("unexpected start_recording")
            self.attempt = int(msg.body["attempt"])
            self.state = _State.RECORDING
            return []

        if kind is MessageKind.RECORDING:
            if self.state not in (_State.RECORDING, _State.WAIT_PEER):
                raise ProtocolViolation("recording outside recording phase")
            if int(msg.body["attempt"]) != self.attempt:
                raise ProtocolViolation("recording for a different attempt")
            if msg.body.get("side") != self.side.peer.value:
                raise ProtocolViolation("recording claims the wrong side")
            if self._peer_recording_wire is not None:
                if self._peer_recording_wire == wire:
                    return []  # duplicate delivery is idempotent
                raise ProtocolViolation("conflicting recording for one attempt")
            self._peer_recording_wire = wire
            self.peer_clip = AudioClip.from_pcm_bytes(
                base64.b64decode(msg.body["pcm"]),
                int(msg.body["sample_rate_hz"]),
                (Origin.DRONE_SIDE if self.side is Side.VERIFIER
                 else Origin.VERIFIER_SIDE))
            return self._maybe_decide()

        if kind is MessageKind.VERDICT:
            if self.state not in (_State.WAIT_PEER, _State.WAIT_VERDICT):
                raise ProtocolViolation("verdict outside verdict phase")
            if int(msg.body["attempt"]) != self.attempt:
                raise ProtocolViolation("verdict for a different attempt")
            self.peer_decision = Decision(msg.body["decision"])
            return self._maybe_resolve()

        raise ProtocolViolation(f"unhandled kind {kind}")  # pragma: no cover

    def _maybe_decide(self) -> list[bytes]:
        if self.own_clip is None or self.peer_clip is None:
            return []
        t0 = time.perf_counter()
        self.own_breakdown = self.pipeline.decide(self.own_clip,
                                                  self.peer_clip, self.side)
        self.decide_seconds += time.perf_counter() - t0
        self.state = _State.WAIT_VERDICT
        out = [self._seal(MessageKind.VERDICT,
                          decision=self.own_breakdown.decision.value,
                          attempt_no=self.attempt)]
        return out + self._maybe_resolve()

    def _maybe_resolve(self) -> list[bytes]:
        if self.own_breakdown is None or self.peer_decision is None:
            return []
        own = self.own_breakdown.decision
        peer = self.peer_decision
        if own is not peer:
            # identical pipelines on identical inputs cannot disagree;
            # treat asymmetry as tampering rather than guess a resolution
            return self._abort("verdict_mismatch")
        if own is Decision.ACCEPT:
            self.state = _State.DONE
            self.final_decision = Decision.ACCEPT
            return []
        if self.attempt >= self.cfg.max_attempts:
            self.state = _State.DONE
            self.final_decision = Decision.REJECT
            return []
        # retry: the verifier paces the next attempt
        self._reset_attempt()
        if self.side is Side.VERIFIER:
            self.attempt += 1
            self.state = _State.RECORDING
            return [self._seal(MessageKind.START_RECORDING,
                               sync_timestamp=self.attempt - 1)]
        self.state = _State.WAIT_START
        return []

    @property
    def finished(self) -> bool:
        return self.state in (_State.DONE, _State.ABORTED)


def endpoint_step(ep: Endpoint, wire: bytes) -> list[bytes]:
    """Deterministic transition of one endpoint on one incoming message."""
    return ep.receive(wire)


@dataclass(frozen=True)
class TranscriptEntry:
    direction: str
    body: dict
    mac: str


@dataclass(frozen=True)
class SessionTranscript:
    messages: tuple[TranscriptEntry, ...]
    drone_decision: Decision
    verifier_decision: Decision
    attempts_used: int
    aborted_reason: str | None
    timings: dict = field(default_factory=dict)

    def to_json(self, include_timings: bool = False) -> str:
        """Canonical form; timings are wall-clock and excluded by default so
        equal world seeds serialize bit-identically."""
        payload = {
            "messages": [{"direction": e.direction, "body": e.body,
                          "mac": e.mac} for e in self.messages],
            "drone_decision": self.drone_decision.value,
            "verifier_decision": self.verifier_decision.value,
            "attempts_used": self.attempts_used,
            "aborted_reason": self.aborted_reason,
        }
        if include_timings:
            payload["timings"] = self.timings
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def run_session(drone_ep: Endpoint, verifier_ep: Endpoint, cfg: SessionConfig,
                world, tamper=None) -> SessionTranscript:
    """Drive both endpoints against an acoustic world until they finish.

    `world.attempt(k)` supplies both sides' recordings for attempt k
    (0-based). `tamper(wire, direction, index)`, if given, may mutate each
    message in flight; integrity failures abort the session rather than
    change any decision.
    """
    t_start = time.perf_counter()
    world_seconds = 0.0
    endpoints = {Side.DRONE: drone_ep, Side.VERIFIER: verifier_ep}
    entries: list[TranscriptEntry] = []
    queue: deque[tuple[Side, bytes]] = deque(
        (Side.DRONE, wire) for wire in drone_ep.start())
    steps = 0
    max_steps = 60 * cfg.max_attempts

    def _log(sender: Side, wire: bytes) -> None:
        direction = f"{sender.value}->{sender.peer.value}"
        try:
            outer = json.loads(wire.decode())
            entries.append(TranscriptEntry(direction, outer["body"],
                                           str(outer["mac"])))
        except (UnicodeDecodeError, json.JSONDecodeError, KeyError,
                TypeError):
            # tampering can corrupt the framing itself; keep the raw bytes
            entries.append(TranscriptEntry(direction, {"raw_hex": wire.hex()},
                                           ""))

    while True:
        while queue:
            steps += 1
            if steps > max_steps:
                raise Timeout(f"session exceeded {max_steps} steps")
            sender, wire = queue.popleft()
            if tamper is not None:
                wire = tamper(wire, sender.value, steps)
            _log(sender, wire)
            receiver = endpoints[sender.peer]
            for out in receiver.receive(wire):
                queue.append((sender.peer, out))

        if drone_ep.finished or verifier_ep.finished:
            break
        if drone_ep.needs_recording and verifier_ep.needs_recording \
                and drone_ep.attempt == verifier_ep.attempt:
            t0 = time.perf_counter()
            try:
                out = world.attempt(drone_ep.attempt - 1)
            finally:
                world_seconds += time.perf_counter() - t0
            for wire in drone_ep.capture(out.drone_side_clip):
                queue.append((Side.DRONE, wire))
            for wire in verifier_ep.capture(out.verifier_side_clip):
                queue.append((Side.VERIFIER, wire))
            continue
        if not queue:
            break  # one side is stuck waiting; report what we have

    attempts = max(drone_ep.attempt, verifier_ep.attempt)
    aborted = drone_ep.abort_reason or verifier_ep.abort_reason
    total = time.perf_counter() - t_start
    return SessionTranscript(
        messages=tuple(entries),
        drone_decision=drone_ep.final_decision or Decision.ABORTED,
        verifier_decision=verifier_ep.final_decision or Decision.ABORTED,
        attempts_used=attempts,
        aborted_reason=aborted,
        timings={
            "decision_s": drone_ep.decide_seconds + verifier_ep.decide_seconds,
            "total_excl_recording_s": total - world_seconds,
        },
    )
