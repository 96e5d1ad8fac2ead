import numpy as np
import pytest

from netchoice.errors import ModelFormatError
from netchoice.estimation import (
    DecisivenessBound,
    GroupImportance,
    PreferenceRatio,
    SparsityPin,
    build_polyhedron,
    export_lp,
    interior_point_estimate,
    parse_knowledge,
    phase1_min_slack,
)
from netchoice.model import build_model
from netchoice.shares import solve_choice_matrix

from conftest import influential_agent_model, random_model


def observed_from_model(model):
    return solve_choice_matrix(model).pi


def example2_observed():
    model = influential_agent_model()
    return model, observed_from_model(model)


def point_satisfies(poly, adoption, direct, plus, minus, tol=1e-8):
    """Check a (P, Q, eps) assignment against every polyhedron row."""
    values = {}
    for idx, var in enumerate(poly.variables):
        if var.kind == "p":
            values[idx] = adoption[var.row, var.col]
        elif var.kind == "q":
            values[idx] = direct[var.row, var.col]
        elif var.kind == "epsp":
            values[idx] = plus[var.row, var.col]
        else:
            values[idx] = minus[var.row, var.col]
    for row in poly.rows:
        total = sum(coef * values[idx] for idx, coef in row.coeffs.items())
        if row.sense == "=" and abs(total - row.rhs) > tol:
            return False
        if row.sense == "<=" and total > row.rhs + tol:
            return False
        if row.sense == ">=" and total < row.rhs - tol:
            return False
    return True


class TestBuildPolyhedron:
    def test_trivial_point_is_feasible_without_knowledge(self):
        model, observed = example2_observed()
        poly = build_polyhedron(observed, [], model.agents, model.choices)
        zeros_p = np.zeros((3, 3))
        zeros_eps = np.zeros((3, 2))
        assert point_satisfies(poly, zeros_p, observed, zeros_eps, zeros_eps)

    def test_row_tags_and_counts(self):
        model, observed = example2_observed()
        knowledge = [
            SparsityPin("1", "2"),
            PreferenceRatio("1", "A", "B", ratio=2.0, uncertainty=0.0),
            PreferenceRatio("2", "B", "A", ratio=1.5, uncertainty=0.25),
            GroupImportance("3", favored=("1",), disfavored=("2",), factor=1.0),
            DecisivenessBound("2", factor=1.0, direction="adoption_at_least"),
        ]
        poly = build_polyhedron(observed, knowledge, model.agents, model.choices)
        tags = [row.tag for row in poly.rows]
        assert tags.count("fit") == 6
        assert tags.count("rowsum") == 3
        assert tags.count("sparsity") == 1
        assert tags.count("preference_ratio") == 3  # one equality + one pair
        assert tags.count("group_importance") == 1
        assert tags.count("decisiveness") == 1

    def test_zero_uncertainty_ratio_is_equality(self):
        model, observed = example2_observed()
        poly = build_polyhedron(
            observed, [PreferenceRatio("1", "A", "B", ratio=2.0)],
            model.agents, model.choices)
        row = [r for r in poly.rows if r.tag == "preference_ratio"][0]
        assert row.sense == "="

    def test_rejects_non_distribution(self):
        with pytest.raises(ModelFormatError, match="distribution"):
            build_polyhedron(np.array([[0.5, 0.4]]), [])

    def test_rejects_unknown_references(self):
        model, observed = example2_observed()
        with pytest.raises(ModelFormatError, match="unknown agent"):
            build_polyhedron(observed, [SparsityPin("1", "9")],
                             model.agents, model.choices)

    def test_parse_knowledge_document(self, tmp_path):
        doc = tmp_path / "knowledge.json"
        doc.write_text(
            '[{"type": "sparsity", "agent": "1", "other": "2"},'
            ' {"type": "preference_ratio", "agent": "1", "preferred": "A",'
            '  "baseline": "B", "ratio": 2.0},'
            ' {"type": "group_importance", "agent": "3", "favored": ["1"],'
            '  "disfavored": ["2"], "factor": 1.5},'
            ' {"type": "decisiveness", "agent": "2", "factor": 1.0,'
            '  "direction": "adoption_at_most"}]',
            encoding="utf-8")
        items = parse_knowledge(doc)
        assert isinstance(items[0], SparsityPin)
        assert isinstance(items[1], PreferenceRatio)
        assert items[2].factor == 1.5
        assert items[3].direction == "adoption_at_most"

    def test_parse_knowledge_rejects_unknown_fields(self):
        with pytest.raises(ModelFormatError, match="unknown field"):
            parse_knowledge([{"type": "sparsity", "agent": "1", "other": "2", "x": 1}])
        with pytest.raises(ModelFormatError, match="unknown type"):
            parse_knowledge([{"type": "telepathy"}])


class TestPhase1:
    def test_consistent_knowledge_needs_no_slack(self):
        model, observed = example2_observed()
        poly = build_polyhedron(observed, [SparsityPin("1", "2")],
                                model.agents, model.choices)
        result = phase1_min_slack(poly)
        assert result.objective == pytest.approx(0.0, abs=1e-9)
        np.testing.assert_allclose(result.slack_plus, 0.0, atol=1e-9)
        np.testing.assert_allclose(result.slack_minus, 0.0, atol=1e-9)

    def test_empty_knowledge_needs_no_slack(self):
        model, observed = example2_observed()
        poly = build_polyhedron(observed, [], model.agents, model.choices)
        assert phase1_min_slack(poly).objective == pytest.approx(0.0, abs=1e-9)

    def test_inconsistent_instance_needs_slack(self):
        # pinning agent 2's adoption row forces q_2A to equal the observed
        # 0.4, which contradicts a preference ratio demanding q_2A = 2 q_2B
        # (q_2B would also be pinned at 0.6)
        model, observed = example2_observed()
        knowledge = [
            SparsityPin("2", "1"),
            SparsityPin("2", "3"),
            PreferenceRatio("2", "A", "B", ratio=2.0, uncertainty=0.0),
        ]
        poly = build_polyhedron(observed, knowledge, model.agents, model.choices)
        result = phase1_min_slack(poly)
        assert result.objective > 1e-3

        # grid oracle: no (q_2A, q_2B) on the simplex satisfies both pinned
        # fit rows and the ratio without slack
        feasible = False
        for q_a in np.linspace(0.0, 1.0, 201):
            q_b = 1.0 - q_a
            fit_ok = abs(q_a - observed[1, 0]) < 1e-6 and abs(q_b - observed[1, 1]) < 1e-6
            ratio_ok = abs(q_a - 2.0 * q_b) < 1e-6
            if fit_ok and ratio_ok:
                feasible = True
        assert not feasible


class TestInteriorPoint:
    def test_single_point_polyhedron_returns_it(self):
        # one agent, one choice: q_11 = 1 is forced by the row sum; the upper
        # bound is an implicit equality and gets absorbed, after which the
        # reported margin is the distance to the one remaining bound plane
        poly = build_polyhedron(np.array([[1.0]]), [])
        fixed = poly.with_slacks(np.zeros((1, 1)), np.zeros((1, 1)))
        result = interior_point_estimate(fixed)
        assert result.direct[0, 0] == pytest.approx(1.0, abs=1e-9)
        assert result.converted_rows == 1
        assert result.margin == pytest.approx(1.0, abs=1e-9)

    def test_empty_knowledge_gives_interior_point(self):
        model, observed = example2_observed()
        poly = build_polyhedron(observed, [], model.agents, model.choices)
        phase1 = phase1_min_slack(poly)
        result = interior_point_estimate(
            poly.with_slacks(phase1.slack_plus, phase1.slack_minus))
        assert result.margin > 0.0
        # margin is honest: every free entry sits at least that far inside [0, 1]
        mask = ~np.eye(3, dtype=bool)
        assert np.all(result.adoption[mask] >= result.margin - 1e-8)
        assert np.all(result.direct >= result.margin - 1e-8)

    def test_estimate_reproduces_observed_through_the_model(self):
        model, observed = example2_observed()
        poly = build_polyhedron(observed, [SparsityPin("1", "3")],
                                model.agents, model.choices)
        phase1 = phase1_min_slack(poly)
        result = interior_point_estimate(
            poly.with_slacks(phase1.slack_plus, phase1.slack_minus))
        estimate = build_model(model.agents, model.choices,
                               result.adoption, result.direct)
        refit = solve_choice_matrix(estimate).pi
        resolvent = np.linalg.inv(np.eye(3) - result.adoption)
        bound = resolvent @ (phase1.slack_plus + phase1.slack_minus)
        assert np.all(np.abs(refit - observed) <= bound + 1e-7)

    def test_estimates_satisfy_model_invariants(self):
        rng = np.random.default_rng(55)
        for _ in range(5):
            model = random_model(rng, n_agents=3, n_choices=2)
            observed = observed_from_model(model)
            poly = build_polyhedron(observed, [], model.agents, model.choices)
            phase1 = phase1_min_slack(poly)
            result = interior_point_estimate(
                poly.with_slacks(phase1.slack_plus, phase1.slack_minus))
            rebuilt = build_model(model.agents, model.choices,
                                  result.adoption, result.direct)
            assert np.all(np.diagonal(rebuilt.adoption) == 0.0)
            rows = rebuilt.adoption.sum(axis=1) + rebuilt.direct.sum(axis=1)
            np.testing.assert_allclose(rows, 1.0, atol=1e-9)

    def test_requires_fixed_slacks(self):
        model, observed = example2_observed()
        poly = build_polyhedron(observed, [], model.agents, model.choices)
        with pytest.raises(Exception, match="phase 1"):
            interior_point_estimate(poly)


class TestExportLp:
    def test_trivial_model_golden_document(self):
        poly = build_polyhedron(np.array([[1.0]]), [])
        text = export_lp(poly, objective="phase1")
        expected = (
            "Minimize\n"
            " obj: 1 t\n"
            "Subject To\n"
            " fit_1_1: 1 q_1_1 - 1 epsp_1_1 + 1 epsm_1_1 = 1\n"
            " rowsum_1: 1 q_1_1 = 1\n"
            " cap_1_1: 1 epsp_1_1 + 1 epsm_1_1 - 1 t <= 0\n"
            "Bounds\n"
            " 0 <= q_1_1 <= 1\n"
            " 0 <= epsp_1_1 <= 2\n"
            " 0 <= epsm_1_1 <= 2\n"
            " 0 <= t <= 10000000000\n"
            "End\n"
        )
        assert text == expected

    def test_byte_stable_across_builds(self):
        model, observed = example2_observed()
        knowledge = [SparsityPin("1", "2"),
                     PreferenceRatio("1", "A", "B", ratio=2.0, uncertainty=0.5)]
        first = export_lp(build_polyhedron(observed, knowledge,
                                           model.agents, model.choices))
        second = export_lp(build_polyhedron(observed, knowledge,
                                            model.agents, model.choices))
        assert first == second

    def test_round_trip_row_count(self):
        model, observed = example2_observed()
        poly = build_polyhedron(observed, [SparsityPin("1", "2")],
                                model.agents, model.choices)
        text = export_lp(poly, objective="phase1")
        lines = text.splitlines()
        start = lines.index("Subject To") + 1
        stop = lines.index("Bounds")
        parsed_rows = lines[start:stop]
        assert len(parsed_rows) == len(poly.rows) + 6  # six slack-cap rows
        assert all(("<=" in r) or (">=" in r) or ("=" in r) for r in parsed_rows)

    def test_interior_phase_requires_slacks(self):
        model, observed = example2_observed()
        poly = build_polyhedron(observed, [], model.agents, model.choices)
        with pytest.raises(Exception, match="phase 1"):
            export_lp(poly, objective="interior")
        phase1 = phase1_min_slack(poly)
        text = export_lp(poly.with_slacks(phase1.slack_plus, phase1.slack_minus),
                         objective="interior")
        assert text.startswith("Maximize\n obj: 1 s\n")
        assert text.endswith("End\n")
