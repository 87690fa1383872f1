"""Streaming greedy decoding for the slot and intent heads."""
from streamslu.decoder.greedy import DecodeEvent, HeadState, ctl_threshold_step, greedy_ctc_step
from streamslu.decoder.scoring import joint_accuracy, sequence_accuracy
from streamslu.decoder.streaming import (
    DecodeResult,
    StreamingDecoder,
    StreamState,
    chunked,
    decode_last_steps,
    decode_output,
    stream_decode,
)

__all__ = [
    "DecodeEvent",
    "DecodeResult",
    "HeadState",
    "StreamState",
    "StreamingDecoder",
    "chunked",
    "ctl_threshold_step",
    "decode_last_steps",
    "decode_output",
    "greedy_ctc_step",
    "joint_accuracy",
    "sequence_accuracy",
    "stream_decode",
]
