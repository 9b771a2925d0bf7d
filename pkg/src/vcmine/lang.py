"""Project language from the names in a revision's root directory."""
from __future__ import annotations

import enum
from typing import Iterable

# "__init.py__" is matched verbatim as well as the real package marker.
PYTHON_MARKERS = frozenset({"setup.py", "__init__.py", "__init.py__"})
# package.json is deliberately absent: other ecosystems ship one too.
JAVASCRIPT_MARKERS = frozenset({"index.js", "app.js", "server.js"})


class ProjectLanguage(str, enum.Enum):
    PYTHON = "Python"
    JAVASCRIPT = "JavaScript"
    BOTH = "Both"
    UNKNOWN = "Unknown"

    @property
    def short(self) -> str:
        return _SHORT[self]

    @classmethod
    def from_text(cls, text: str) -> "ProjectLanguage":
        for lang in cls:
            if text in (lang.value, lang.short):
                return lang
        raise ValueError(f"unknown language: {text!r}")


_SHORT = {
    ProjectLanguage.PYTHON: "PY",
    ProjectLanguage.JAVASCRIPT: "JS",
    ProjectLanguage.BOTH: "Both",
    ProjectLanguage.UNKNOWN: "Unknown",
}


def classify(root: Iterable[str]) -> ProjectLanguage:
    """Classify a root listing (base names, compared case-sensitively)."""
    names = set(root)
    is_python = not names.isdisjoint(PYTHON_MARKERS)
    is_js = not names.isdisjoint(JAVASCRIPT_MARKERS)
    if is_python and is_js:
        return ProjectLanguage.BOTH
    if is_python:
        return ProjectLanguage.PYTHON
    if is_js:
        return ProjectLanguage.JAVASCRIPT
    return ProjectLanguage.UNKNOWN


def series_for(lang: ProjectLanguage, include_both: bool = True,
               include_unknown: bool = False) -> tuple[ProjectLanguage, ...]:
    """Languages whose statistics a revision of language ``lang`` counts towards."""
    if lang is ProjectLanguage.BOTH:
        return (ProjectLanguage.JAVASCRIPT, ProjectLanguage.PYTHON) if include_both else ()
    if lang is ProjectLanguage.UNKNOWN:
        return (ProjectLanguage.UNKNOWN,) if include_unknown else ()
    return (lang,)
