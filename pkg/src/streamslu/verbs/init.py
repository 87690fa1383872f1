"""InitVerb - scaffold an experiment directory from the packaged template."""
from __future__ import annotations

from importlib import resources
from pathlib import Path
from typing import Any, Mapping

from streamslu.kernel.layout import LayoutResolver
from streamslu.verbs.verb_class import EXIT_ERROR, EXIT_OK, VerbClass


def template_text(name: str) -> str:
    template = resources.files("streamslu").joinpath("templates/experiment.yml").read_text()
    return template.replace("{NAME}", name)


class InitVerb(VerbClass):
    name = "init"

    def __init__(self) -> None:
        self.resolver = LayoutResolver()

    def run(self, options: Mapping[str, Any]) -> int:
        root = Path(options["name"])
        layout = self.resolver.layout(root)
        if layout.config.exists() and not options.get("force", False):
            print(f"⚠️  {layout.config} exists, use --force to overwrite")
            return EXIT_ERROR
        root.mkdir(parents=True, exist_ok=True)
        layout.config.write_text(template_text(root.name))
        print(f"✅ Created {layout.config}")
        return EXIT_OK
