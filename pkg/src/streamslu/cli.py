#!/usr/bin/env python3
"""slu - command line harness for the streaming SLU losses, model and decoders."""
from __future__ import annotations

import importlib
import logging
import pkgutil
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Iterator, Optional

import click
import typer
from typer.core import TyperGroup

try:  # typer >= 0.2x vendors click; its parser raises the vendored exceptions
    from typer._click.exceptions import UsageError
except ImportError:  # pragma: no cover
    from click import UsageError

from streamslu.verbs.verb_class import EXIT_ERROR, VerbClass

logger = logging.getLogger(__name__)


@contextmanager
def _usage_errors_exit_with_error() -> Iterator[None]:
    try:
        yield
    except UsageError as exc:
        exc.exit_code = EXIT_ERROR
        raise


class SluGroup(TyperGroup):
    """Command group whose usage errors exit 1; exit 2 belongs to failed verification."""

    def make_context(self, *args: Any, **kwargs: Any) -> click.Context:
        with _usage_errors_exit_with_error():
            return super().make_context(*args, **kwargs)

    def invoke(self, ctx: click.Context) -> Any:
        with _usage_errors_exit_with_error():
            return super().invoke(ctx)


app = typer.Typer(
    name="slu",
    cls=SluGroup,
    help="Streaming SLU: CTC / CTL losses, training, streaming decode",
    no_args_is_help=True,
)


def _load_verbs() -> dict[str, VerbClass]:
    """Instantiate ``<Name>Verb`` from every module of ``streamslu.verbs``."""
    from streamslu import verbs as verbs_package

    verbs: dict[str, VerbClass] = {}
    for info in pkgutil.iter_modules(verbs_package.__path__):
        if info.name == "verb_class":
            continue
        module = importlib.import_module(f"streamslu.verbs.{info.name}")
        cls = getattr(module, f"{info.name.title()}Verb", None)
        if cls is not None:
            verbs[info.name] = cls()
    return verbs


def run_verb(name: str, options: dict[str, Any]) -> None:
    verbs = _load_verbs()
    if name not in verbs:
        typer.echo(f"❌ verb '{name}' not available")
        raise typer.Exit(EXIT_ERROR)
    code = verbs[name].execute(options)
    if code != 0:
        raise typer.Exit(code)


@app.callback()
def main_callback(
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Debug logging"),
) -> None:
    """Streaming SLU: CTC / CTL losses, training, streaming decode."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )


@app.command("init")
def init_command(
    name: str = typer.Argument(..., help="Experiment directory to create"),
    force: bool = typer.Option(False, "--force", help="Overwrite an existing experiment.yml"),
) -> None:
    """Scaffold an experiment directory with a complete experiment.yml."""
    run_verb("init", {"name": name, "force": force})


@app.command("gen")
def gen_command(
    out: Path = typer.Argument(..., help="Corpus directory"),
    size: Optional[int] = typer.Option(None, "--size", help="Number of utterances"),
    labels: Optional[int] = typer.Option(None, "--labels", help="Commands per utterance (1 or 2)"),
    seed: Optional[int] = typer.Option(None, "--seed"),
    speakers: Optional[int] = typer.Option(None, "--speakers", help="Speaker groups"),
    noise: Optional[float] = typer.Option(None, "--noise", help="Gaussian noise sigma"),
    feat_dim: Optional[int] = typer.Option(None, "--feat-dim"),
    n_intents: Optional[int] = typer.Option(None, "--intents"),
    n_slots: Optional[int] = typer.Option(None, "--slots"),
) -> None:
    """Generate a synthetic corpus (manifests, FEAT files, CMVN stats)."""
    run_verb(
        "gen",
        {
            "out": out,
            "size": size,
            "labels_per_utterance": labels,
            "seed": seed,
            "speakers": speakers,
            "noise": noise,
            "feat_dim": feat_dim,
            "n_intents": n_intents,
            "n_slots": n_slots,
        },
    )


@app.command("train")
def train_command(
    config: Path = typer.Option(..., "--config", "-c", help="experiment.yml"),
    run: Optional[Path] = typer.Option(None, "--run", help="Run directory (default: the config's directory)"),
    seed: Optional[int] = typer.Option(None, "--seed"),
    epochs: Optional[int] = typer.Option(None, "--epochs"),
    workers: Optional[int] = typer.Option(None, "--workers", help="Threads per batch"),
    deterministic: bool = typer.Option(False, "--deterministic", help="Force a single worker"),
    quiet: bool = typer.Option(False, "--quiet", help="No progress bars"),
) -> None:
    """Train under the configured strategy; writes model.ckpt and metrics.jsonl."""
    run_verb(
        "train",
        {
            "config": config,
            "run": run,
            "seed": seed,
            "epochs": epochs,
            "workers": workers,
            "deterministic": deterministic,
            "quiet": quiet,
        },
    )


@app.command("eval")
def eval_command(
    run: Path = typer.Argument(..., help="Trained run directory"),
    manifest: str = typer.Option(..., "--manifest", "-m", help="Manifest file, or a split name of the run's corpus"),
    theta: Optional[float] = typer.Option(None, "--theta", help="CTL decode threshold"),
    predictor: str = typer.Option("model", "--predictor", help="model | oracle | template"),
) -> None:
    """Exact-match intent / slot / intent+slot accuracy."""
    run_verb("eval", {"run": run, "manifest": manifest, "theta": theta, "predictor": predictor})


@app.command("stream")
def stream_command(
    run: Path = typer.Argument(..., help="Trained run directory"),
    features: Path = typer.Argument(..., help="FEAT file of one utterance"),
    chunk: Optional[int] = typer.Option(None, "--chunk", help="Frames per chunk (default: whole file)"),
    theta: Optional[float] = typer.Option(None, "--theta", help="CTL decode threshold"),
    events: Optional[str] = typer.Option(None, "--events", help="Event log path, '-' for stdout"),
    session: Optional[str] = typer.Option(None, "--session"),
) -> None:
    """Decode an utterance chunk by chunk, logging each event as it is emitted."""
    run_verb(
        "stream",
        {"run": run, "features": features, "chunk": chunk, "theta": theta, "events": events, "session": session},
    )


@app.command("verify")
def verify_command(
    quick: bool = typer.Option(False, "--quick", help="Fewer trials"),
    seed: Optional[int] = typer.Option(None, "--seed"),
    mutate: Optional[str] = typer.Option(None, "--mutate", help="Inject a known bug (ctl-grad-sign)"),
    suite: Optional[list[str]] = typer.Option(None, "--suite", help="Run only these suites"),
) -> None:
    """Oracle, gradient, shape/causality and prefix-consistency suites; exit 2 on failure."""
    run_verb("verify", {"quick": quick, "seed": seed, "mutate": mutate, "suites": suite})


@app.command("ablate")
def ablate_command(
    out: Path = typer.Argument(..., help="Directory for one run per grid cell and seed"),
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="Base experiment.yml (default: packaged)"),
    seed: Optional[list[int]] = typer.Option(None, "--seed", help="Seeds (default 0 1 2)"),
    loss: Optional[list[str]] = typer.Option(None, "--loss", help="1-label losses to train (default: all)"),
    epochs: Optional[int] = typer.Option(None, "--epochs"),
    size: Optional[int] = typer.Option(None, "--size", help="Utterances per corpus"),
    workers: Optional[int] = typer.Option(None, "--workers", help="Threads per batch"),
    quiet: bool = typer.Option(False, "--quiet", help="No progress bars"),
) -> None:
    """Train the loss x train-labels grid and check the accuracy orderings; exit 2 if one fails."""
    run_verb(
        "ablate",
        {
            "out": out,
            "config": config,
            "seeds": seed,
            "losses": loss,
            "epochs": epochs,
            "size": size,
            "workers": workers,
            "quiet": quiet,
        },
    )


def main() -> int:
    """Entry point for the slu command."""
    try:
        app()
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_ERROR
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
