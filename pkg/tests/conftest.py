import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def fixture_dir(tmp_path_factory):
    """The bundled synthetic registry fixture (36 months, 5,000 firms, 8,000 officers)."""
    from firmshock.synthetic import FixtureSpec, generate

    root = tmp_path_factory.mktemp("fixture")
    generate(root, FixtureSpec())
    return root


@pytest.fixture(scope="session")
def small_fixture(tmp_path_factory):
    from firmshock.synthetic import FixtureSpec, generate

    root = tmp_path_factory.mktemp("small_fixture")
    generate(root, FixtureSpec(months=12, firms=400, officers=600))
    return root
