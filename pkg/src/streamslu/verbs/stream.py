"""StreamVerb - decode one utterance chunk by chunk and log every event."""
from __future__ import annotations

import sys
from pathlib import Path
from typing import Any, Mapping

from streamslu.decoder.streaming import chunked, stream_decode
from streamslu.harness.runs import load_run
from streamslu.kernel.containers import read_features
from streamslu.kernel.errors import ConfigError
from streamslu.kernel.layout import LayoutResolver
from streamslu.verbs.verb_class import EXIT_OK, VerbClass


class StreamVerb(VerbClass):
    name = "stream"

    def __init__(self) -> None:
        self.resolver = LayoutResolver()

    def run(self, options: Mapping[str, Any]) -> int:
        config, model, layout = load_run(Path(options["run"]), self.resolver)
        if config.final_steps is not None:
            raise ConfigError(f"a '{config.loss}' run decodes whole utterances only; use slu eval")
        source = Path(options["features"])
        frames = read_features(source)
        chunk = options["chunk"] if options.get("chunk") is not None else max(frames.shape[0], 1)
        theta = config.theta if options.get("theta") is None else options["theta"]
        target = options.get("events")
        session = options.get("session") or source.stem

        if target == "-":
            result = stream_decode(model, chunked(frames, chunk), theta=theta, session=session, log=sys.stdout)
        else:
            path = Path(target) if target else layout.events
            with open(path, "a") as log:
                result = stream_decode(model, chunked(frames, chunk), theta=theta, session=session, log=log)
            print(f"📁 {len(result.events)} events -> {path}")
        print(f"✅ intents {result.intents}  slots {result.slots}")
        return EXIT_OK
