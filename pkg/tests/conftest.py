import numpy as np
import pytest

from biasmon.synthetic import GroupSpec, make_table


@pytest.fixture
def write_csv(tmp_path):
    def _write(text, name="table.csv"):
        p = tmp_path / name
        p.write_text(text, encoding="utf-8")
        return p
    return _write


@pytest.fixture
def rng():
    return np.random.default_rng(20241015)


@pytest.fixture(scope="session")
def five_group_table():
    specs = [GroupSpec(f"g{i}", 200 + 40 * i, 1800 + 200 * i, s)
             for i, s in enumerate([0.8, 0.75, 0.7, 0.65, 0.6])]
    return make_table(specs, seed=1)


@pytest.fixture(scope="session")
def separated_table():
    specs = [GroupSpec("u", 300, 2700, 0.3)] + [GroupSpec(f"g{i}", 300, 2700, 0.9) for i in range(4)]
    return make_table(specs, seed=2)
