
import pytest
from hypothesis import given, strategies as st

from vcmine.lang import ProjectLanguage, classify, series_for

PY, JS, BOTH, UNK = (ProjectLanguage.PYTHON, ProjectLanguage.JAVASCRIPT,
                     ProjectLanguage.BOTH, ProjectLanguage.UNKNOWN)


@pytest.mark.parametrize("root, expected", [
    ({"setup.py", "README.md"}, PY),
    ({"package.json", "composer.json"}, UNK),
    ({"index.js", "setup.py"}, BOTH),
    (set(), UNK),
    ({"__init__.py"}, PY),
    ({"__init.py__"}, PY),
    ({"app.js", "package.json"}, JS),
    ({"Setup.py", "INDEX.JS"}, UNK),
    ({"src", "lib"}, UNK),
])
def test_classify(root, expected):
    assert classify(root) is expected


def test_both_flags_by_membership():
    root = {"index.js", "setup.py"}
    assert "setup.py" in root and "index.js" in root
    assert classify(root) is BOTH


names = st.sets(st.sampled_from(["setup.py", "__init__.py", "__init.py__", "index.js", "app.js",
                                 "server.js", "package.json", "README.md", "src", "main.py"]))


@given(names)
def test_server_js_monotone(root):
    assert classify(root | {"server.js"}) in (JS, BOTH)


@given(names)
def test_package_json_insensitive(root):
    assert classify(root) == classify(root | {"package.json"})


@given(names, st.sets(st.text(max_size=8)))
def test_depends_only_on_trigger_names(root, noise):
    triggers = {"setup.py", "__init__.py", "__init.py__", "index.js", "app.js", "server.js"}
    assert classify(root | (noise - triggers)) == classify(root)


def test_series_for():
    assert series_for(BOTH) == (JS, PY)
    assert series_for(BOTH, include_both=False) == ()
    assert series_for(UNK) == ()
    assert series_for(UNK, include_unknown=True) == (UNK,)
    assert series_for(PY) == (PY,)


def test_language_text_forms():
    assert ProjectLanguage.from_text("JS") is JS
    assert ProjectLanguage.from_text("Python") is PY
    with pytest.raises(ValueError):
        ProjectLanguage.from_text("Ruby")
