import time

import pytest

from cargohitch.generator import PRESETS, GenerationError, GeneratorConfig, generate_instance, preset
from cargohitch.graph import build_graph
from cargohitch.model import dumps_instance
from cargohitch.solve import solve


def test_same_seed_same_instance():
    a = dumps_instance(generate_instance("tiny-oracle", 1))
    b = dumps_instance(generate_instance("tiny-oracle", 1))
    assert a == b
    assert a != dumps_instance(generate_instance("tiny-oracle", 2))


def test_tiny_preset_respects_its_limits():
    for seed in range(20):
        inst = generate_instance("tiny-oracle", seed)
        assert len(inst.network.routes) <= 3
        assert len(inst.network.stops) <= 8
        assert len(inst.freight_requests) <= 6
        assert len(inst.passenger_requests) <= 4


def test_tiny_instance_solves_quickly():
    t = time.monotonic()
    sol = solve(generate_instance("tiny-oracle", 0), "mip")
    assert sol.status == "optimal"
    assert time.monotonic() - t < 10


def test_no_freight_gives_no_design():
    cfg = GeneratorConfig(n_freight=0)
    sol = solve(generate_instance(cfg, 4), "mip")
    assert sol.objective == 0.0
    assert all(v == 0 for v in sol.y.values())


def test_generated_networks_are_contractible():
    for name in PRESETS:
        for seed in range(3):
            build_graph(generate_instance(name, seed))


def test_config_from_dict():
    cfg = GeneratorConfig.from_dict({"preset": "sweep", "n_freight": 7, "hotspots": [[0, 0, 1]]})
    assert cfg.n_freight == 7 and cfg.name == "sweep"
    assert cfg.hotspots == ((0, 0, 1),)
    with pytest.raises(GenerationError, match="unknown generator keys"):
        GeneratorConfig.from_dict({"colour": "red"})


def test_unknown_preset_lists_the_choices():
    with pytest.raises(GenerationError) as err:
        preset("nope")
    for name in PRESETS:
        assert name in str(err.value)


def test_total_freight_volume():
    inst = generate_instance(GeneratorConfig(n_freight=5, freight_volume=3.0), 0)
    assert sum(r.demand for r in inst.freight_requests) == pytest.approx(3.0, abs=1e-3)


@pytest.mark.parametrize(
    "kw",
    [
        {"n_stops": 1},
        {"stops_per_route": (1, 3)},
        {"n_terminals": 1},
        {"n_terminals": 9},
        {"freight_demand": (0.0, 1.0)},
    ],
)
def test_invalid_configs(kw):
    with pytest.raises(GenerationError):
        GeneratorConfig(**kw)
