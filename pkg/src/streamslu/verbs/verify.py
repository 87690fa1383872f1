"""VerifyVerb - run the oracle, gradient and streaming suites."""
from __future__ import annotations

from typing import Any, Mapping

from streamslu.harness.verify import VerifyContext, run_suites
from streamslu.verbs.verb_class import EXIT_OK, EXIT_VERIFY_FAILED, VerbClass


class VerifyVerb(VerbClass):
    name = "verify"

    def run(self, options: Mapping[str, Any]) -> int:
        ctx = VerifyContext(
            seed=options.get("seed") or 0,
            quick=bool(options.get("quick")),
            mutate=options.get("mutate"),
        )
        results = run_suites(ctx, options.get("suites") or None)
        for result in results:
            print(result.line())
        failing = [r.name for r in results if not r.passed]
        if failing:
            print(f"❌ failing: {', '.join(failing)}")
            return EXIT_VERIFY_FAILED
        print(f"✅ {len(results)} suites passed")
        return EXIT_OK
