import os

from hypothesis import HealthCheck, settings

from oaelink.netsim import EndpointSpec, LinkParams, Scenario, ScriptEntry

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=500, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

CLEAN = dict(loss_prob=0.0, dup_prob=0.0, reorder_prob=0.0, corrupt_prob=0.0)


def clean_params(**kw) -> LinkParams:
    return LinkParams(**{**CLEAN, **kw})


def scenario(a=(), b=(), *, params=None, horizon=80, versions=(1, 1), mode="oae", **kw) -> Scenario:
    """Build a scenario from (tick, writes) initiations; writes=None means an observer read."""

    def entries(ep, items):
        return [ScriptEntry(at, ep, "read") if w is None else ScriptEntry(at, ep, "initiate", dict(w))
                for at, w in items]

    return Scenario(
        name="test",
        link=params or clean_params(),
        endpoints={"A": EndpointSpec(versions[0], entries("A", a)), "B": EndpointSpec(versions[1], entries("B", b))},
        horizon=horizon,
        mode=mode,
        **kw,
    )


# One line per acceptance criterion, repeated at the end of the session.
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
