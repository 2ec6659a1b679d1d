"""Prompt template loading and placeholder substitution.

Templates live as package data and are the bit-exact source of truth for
every prompt the harness sends. Substitution is a single pass over the
template: only ``{name}`` placeholders are touched, the many literal JSON
braces inside the prompts are not, and substituted content is never
re-scanned.
"""

from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources

_PLACEHOLDER = re.compile(r"\{([a-z_]+)\}")


@lru_cache(maxsize=None)
def load_template(group: str, name: str) -> str:
    """Read ``prompts/<group>/<name>.txt``, dropping the file's one trailing
    newline so the template ends exactly where its text does."""
    text = (
        resources.files("clincalc.prompts")
        .joinpath(f"{group}/{name}.txt")
        .read_text(encoding="utf-8")
    )
    return text.removesuffix("\n")


def render(template: str, mapping: dict[str, str]) -> str:
    def substitute(match: re.Match) -> str:
        key = match.group(1)
        return mapping.get(key, match.group(0))

    return _PLACEHOLDER.sub(substitute, template)
