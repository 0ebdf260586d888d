import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from lsreopt.core import GenerationSpec, generate_instance


def desk_spec(set_id=1, machines=(2,), items=(5,), periods=(8,), caps=(100.0, 120.0)):
    return GenerationSpec.for_set(
        set_id,
        machine_choices=machines,
        item_choices=items,
        period_choices=periods,
        capacity_choices=caps,
    )


def tiny_spec():
    """M=1, N=2, T=3: the brute-force-enumerable scale."""
    return desk_spec(machines=(1,), items=(2,), periods=(3,))


@pytest.fixture
def tiny_instance():
    return generate_instance(tiny_spec(), 11)


@pytest.fixture
def desk_instance():
    return generate_instance(desk_spec(), 5)
