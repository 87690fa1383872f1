import io
import json

import numpy as np
import pytest

from streamslu.decoder.greedy import HeadState, ctl_threshold_step, greedy_ctc_step, onset_row
from streamslu.decoder.scoring import joint_accuracy, sequence_accuracy
from streamslu.decoder.streaming import (
    StreamingDecoder,
    chunked,
    completion_order,
    decode_last_steps,
    decode_output,
    stream_decode,
)
from streamslu.kernel.errors import ConfigError
from streamslu.kernel.features import accumulate_cmvn
from streamslu.network.config import ModelConfig
from streamslu.network.model import ForwardOutput, SluModel
from streamslu.network.params import ModelParams
from streamslu.synth.corpus import CorpusSpec, generate


def _one_hot_logp(symbols: list[int], vocab: int) -> np.ndarray:
    probs = np.full((len(symbols), vocab), 0.1 / (vocab - 1))
    probs[np.arange(len(symbols)), symbols] = 0.9
    return np.log(probs)


def test_greedy_collapses_repeats_and_blanks() -> None:
    state = HeadState("slot")
    events = []
    for row in _one_hot_logp([0, 1, 1, 0, 1, 2], vocab=3):
        state, event = greedy_ctc_step(state, row)
        if event is not None:
            events.append(event)
    assert [e.label for e in events] == [0, 0, 1]
    assert [e.frame for e in events] == [1, 4, 5]
    assert events[0].score == pytest.approx(0.9)
    assert state.emitted == [0, 0, 1]


def test_onset_threshold() -> None:
    state = HeadState("intent")
    fired = []
    for y in ([0.1, 0.7], [0.2, 0.9], [0.8, 0.2], [0.9, 0.1]):
        state, events = ctl_threshold_step(state, onset_row(state, y), theta=0.5)
        fired.extend((e.frame, e.label) for e in events)
    assert fired == [(0, 1), (2, 0)]
    with pytest.raises(ValueError):
        ctl_threshold_step(HeadState("intent"), [0.4], theta=1.0)


def test_decode_output_reads_both_heads() -> None:
    cfg = ModelConfig(slot_vocab=3, intent_vocab=4)
    slot = _one_hot_logp([0, 3, 3, 0], vocab=4)
    intent = _one_hot_logp([2, 0], vocab=5)
    out = ForwardOutput(slot=slot, intent=intent, slot_logits=slot, intent_logits=intent, rate_ratio=4)
    result = decode_output(out, cfg)
    assert result.slots == [2]
    assert result.intents == [1]
    assert [e.head for e in result.events_for("intent")] == ["intent"]



def test_last_step_decode_ignores_blank_and_earlier_steps() -> None:
    slot = _one_hot_logp([2, 0, 0], vocab=4)
    intent = _one_hot_logp([3, 0], vocab=5)
    out = ForwardOutput(slot=slot, intent=intent, slot_logits=slot, intent_logits=intent, rate_ratio=4)
    result = decode_last_steps(out)
    assert len(result.slots) == 1 and len(result.intents) == 1
    assert [(e.head, e.frame) for e in result.events] == [("slot", 2), ("intent", 1)]

    pair = decode_last_steps(out, count=2)
    assert pair.intents[0] == 2
    everything = decode_last_steps(out, count=5)
    assert len(everything.slots) == 3
    assert everything.slots[0] == 1
    with pytest.raises(ConfigError):
        decode_last_steps(out, count=0)


def test_completion_order_interleaves_heads() -> None:
    assert completion_order(5, 2, 4) == [
        ("slot", 0), ("slot", 1), ("slot", 2), ("slot", 3), ("intent", 0), ("slot", 4), ("intent", 1),
    ]
    assert completion_order(8, 2, 4)[-2:] == [("slot", 7), ("intent", 1)]
    assert completion_order(2, 2, 1) == [("slot", 0), ("intent", 0), ("slot", 1), ("intent", 1)]
    assert completion_order(0, 0, 4) == []


def test_bad_stream_arguments_are_config_errors() -> None:
    cfg = ModelConfig()
    model = SluModel(cfg, ModelParams.init(cfg, 0))
    with pytest.raises(ConfigError):
        StreamingDecoder(model, theta=1.5)
    with pytest.raises(ConfigError):
        list(chunked(np.zeros((4, cfg.feat_dim)), 0))

def test_scoring() -> None:
    assert sequence_accuracy([1, 2], (1, 2)) == 1
    assert sequence_accuracy([2, 1], (1, 2)) == 0
    assert sequence_accuracy([1], (1, 2)) == 0
    assert joint_accuracy(1, 0) == 0
    assert joint_accuracy(1, 1) == 1


@pytest.fixture(scope="module")
def corpus() -> list:
    return generate(CorpusSpec(size=6, speakers=3, seed=2, command_frames=(40, 50), silence_frames=(6, 10)))


@pytest.mark.parametrize("head_mode", ["ctc", "ctl"])
@pytest.mark.parametrize("reductions", [(1, 4), (2, 3)])
def test_chunking_never_changes_the_decode(corpus: list, head_mode: str, reductions: tuple[int, int]) -> None:
    cfg = ModelConfig(head_mode=head_mode, slot_reduction=reductions[0], intent_reduction=reductions[1])
    model = SluModel(cfg, ModelParams.init(cfg, 11), accumulate_cmvn(u.features for u in corpus))
    for u in corpus:
        whole = decode_output(model.forward(u.features), cfg)
        expected = [(e.head, e.label, e.frame) for e in whole.events]
        for size in (1, 3, 16, u.frames):
            streamed = stream_decode(model, chunked(u.features, size))
            assert [(e.head, e.label, e.frame) for e in streamed.events] == expected
            assert streamed.intents == whole.intents
            assert streamed.slots == whole.slots


def test_events_are_logged_as_they_complete(corpus: list) -> None:
    cfg = ModelConfig()
    model = SluModel(cfg, ModelParams.init(cfg, 0))
    log = io.StringIO()
    result = stream_decode(model, chunked(corpus[0].features, 7), session="s1", log=log)
    lines = [json.loads(line) for line in log.getvalue().splitlines()]
    assert len(lines) == len(result.events)
    for line in lines:
        assert list(line) == ["session", "head", "frame", "label", "score"]
        assert line["session"] == "s1"


def test_empty_chunks_are_harmless(corpus: list) -> None:
    cfg = ModelConfig()
    model = SluModel(cfg, ModelParams.init(cfg, 0))
    decoder = StreamingDecoder(model)
    assert decoder.push(np.zeros((0, cfg.feat_dim))) == []
    decoder.push(corpus[0].features)
    decoder.finish()
    assert decoder.state.raw_frames == corpus[0].frames


def test_argument_checks() -> None:
    cfg = ModelConfig()
    model = SluModel(cfg, ModelParams.zeros(cfg))
    with pytest.raises(ValueError):
        StreamingDecoder(model, theta=0.0)
    with pytest.raises(ValueError):
        list(chunked(np.zeros((4, 2)), 0))
