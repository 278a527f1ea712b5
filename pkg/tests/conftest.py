import numpy as np
import pytest

from ifslearn import pipeline

_ACCEPTANCE = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(name): primary acceptance criterion, reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _ACCEPTANCE.append((mark.args[0], rep.passed, getattr(item, "acceptance_detail", "")))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name, ok, detail in _ACCEPTANCE:
        line = f"{'PASS' if ok else 'FAIL'}  {name}"
        if detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)


@pytest.fixture
def note(request):
    """Attach a one-line measurement to the acceptance summary."""

    def _note(text):
        request.node.acceptance_detail = text

    return _note


@pytest.fixture(scope="session")
def preset_run(tmp_path_factory):
    """Run a preset once per session and cache the artifacts and wall time."""
    import time

    cache = {}

    def run(name, seed=0, tag="a"):
        key = (name, seed, tag)
        if key not in cache:
            out = tmp_path_factory.mktemp(f"{name}_{seed}_{tag}")
            t0 = time.perf_counter()
            art = pipeline.run_pipeline(pipeline.preset_config(name, seed), output_dir=out)
            cache[key] = (art, time.perf_counter() - t0)
        return cache[key]

    return run


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def preset_series():
    """Ground-truth trajectory and observations for a preset, cached per session."""
    from ifslearn import markov, systems

    cache = {}

    def make(name, seed=0):
        if (name, seed) not in cache:
            cfg = pipeline.preset_config(name, seed)
            gs = cfg.generator_set()
            d = markov.sample_chain(cfg.transition_matrix(gs.k), cfg.length - 1 + cfg.burn_in, seed=seed)
            tr = systems.simulate(gs, d, cfg.x0, burn_in=cfg.burn_in)
            cache[name, seed] = (tr, systems.observe(tr, cfg.observable))
        return cache[name, seed]

    return make
