import copy
import json

import numpy as np
import pytest

from switchcons.errors import ScenarioError
from switchcons.scenario import bundled_names, bundled_path, load_scenario, parse_scenario
from switchcons.spectral import lambda_H


def base_doc():
    return json.loads(bundled_path("two_follower").read_text())


def parse(doc):
    return parse_scenario(json.dumps(doc, indent=2))


class TestBundled:
    def test_names(self):
        assert bundled_names() == ["certified_scalar", "standin8", "static_connected", "two_follower"]

    def test_standin_defaults(self):
        sf = load_scenario(bundled_path("standin8"))
        assert sf.mu == pytest.approx(1 / lambda_H(8))
        assert sf.mode == "both"
        assert sf.initial_followers.shape == (8, 3)

    def test_seeded_unit_cube(self, bundled):
        again = load_scenario(bundled.source)
        np.testing.assert_array_equal(bundled.initial_followers, again.initial_followers)
        for arr in (bundled.initial_leader, bundled.initial_followers, bundled.initial_observers):
            assert np.all((arr >= 0) & (arr < 1))


class TestParseErrors:
    def test_invalid_json_reports_line(self):
        with pytest.raises(ScenarioError, match=r"line 3"):
            parse_scenario('{\n  "plant": {\n    "n": ,\n')

    def test_dimension_mismatch_names_field(self):
        doc = base_doc()
        doc["plant"]["A"] = [[0.1, 0.0]]
        with pytest.raises(ScenarioError, match=r"field 'plant.A', line \d+\] expected a 1x1"):
            parse(doc)

    def test_missing_field(self):
        doc = base_doc()
        del doc["schedule"]["T_c"]
        with pytest.raises(ScenarioError, match="missing required field 'T_c'"):
            parse(doc)

    def test_unknown_topology(self):
        doc = base_doc()
        doc["schedule"]["phases"][1]["topology"] = 7
        with pytest.raises(ScenarioError, match=r"schedule.phases\[1\].topology.*references topology 7"):
            parse(doc)

    def test_weighted_edges_rejected(self):
        doc = base_doc()
        doc["topologies"][1]["adjacency"] = [[0, 2], [2, 0]]
        with pytest.raises(ScenarioError, match="0 or 1"):
            parse(doc)

    def test_asymmetric_rejected(self):
        doc = base_doc()
        doc["topologies"][1]["adjacency"] = [[0, 1], [0, 0]]
        with pytest.raises(ScenarioError, match="symmetric"):
            parse(doc)

    def test_random_needs_seed(self):
        doc = base_doc()
        del doc["sim"]["seed"]
        with pytest.raises(ScenarioError, match="seed"):
            parse(doc)

    def test_observer_needs_output(self):
        doc = base_doc()
        del doc["plant"]["C"]
        with pytest.raises(ScenarioError, match="needs the output matrix"):
            parse(doc)

    @pytest.mark.parametrize("value", ["fast", True, None])
    def test_non_numeric(self, value):
        doc = base_doc()
        doc["design"]["alpha"] = value
        with pytest.raises(ScenarioError, match="design.alpha"):
            parse(doc)


class TestOptions:
    def test_explicit_initial_states(self):
        doc = base_doc()
        doc["sim"]["initial"] = {"leader": [0.5], "followers": [[1.0], [2.0]]}
        sf = parse(doc)
        np.testing.assert_array_equal(sf.initial_followers, [[1.0], [2.0]])
        np.testing.assert_array_equal(sf.initial_observers, sf.initial_followers)

    def test_numeric_mu(self):
        doc = base_doc()
        doc["design"]["mu"] = 7.5
        assert parse(doc).mu == 7.5

    def test_aggressive_uses_measured_floor(self):
        doc = base_doc()
        doc["design"]["aggressive"] = True
        sf = parse(doc)
        assert sf.eig_floor == pytest.approx(1.0)
        assert sf.mu == pytest.approx(1.0)
        assert sf.design().K is not None

    def test_scenario_modes(self):
        sf = parse(base_doc())
        design = sf.design()
        assert sf.sim_modes == ("consensus", "observer")
        sc = sf.scenario(design, "observer", horizon=1.0)
        assert sc.horizon == 1.0
        np.testing.assert_array_equal(sc.initial_followers, sf.initial_observers)

    def test_parse_does_not_mutate(self):
        doc = base_doc()
        before = copy.deepcopy(doc)
        parse(doc)
        assert doc == before
