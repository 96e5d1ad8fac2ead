import json

import numpy as np
import pytest

from netchoice.model import NetworkModel, build_model


def influential_agent_model() -> NetworkModel:
    """Three agents, two choices; agent 1 is the influential one.

    Known exact values: pi column for choice A is (0.6, 0.4, 0.4); with the
    uniform endowment e/3 the choice shares are (7/15, 8/15) and the decision
    shares (7/10, 3/20, 3/20).
    """
    return build_model(
        ["1", "2", "3"],
        ["A", "B"],
        [[0, 1 / 8, 1 / 8],
         [1 / 2, 0, 1 / 4],
         [1 / 2, 1 / 4, 0]],
        [[1 / 2, 1 / 4],
         [0, 1 / 4],
         [0, 1 / 4]],
    )


def influential_agent_document() -> dict:
    return {
        "agents": ["1", "2", "3"],
        "choices": ["A", "B"],
        "adoption": [
            {"from": "1", "to": "2", "p": 0.125},
            {"from": "1", "to": "3", "p": 0.125},
            {"from": "2", "to": "1", "p": 0.5},
            {"from": "2", "to": "3", "p": 0.25},
            {"from": "3", "to": "1", "p": 0.5},
            {"from": "3", "to": "2", "p": 0.25},
        ],
        "direct": [
            {"agent": "1", "choice": "A", "q": 0.5},
            {"agent": "1", "choice": "B", "q": 0.25},
            {"agent": "2", "choice": "B", "q": 0.25},
            {"agent": "3", "choice": "B", "q": 0.25},
        ],
        "endowment": {"1": 1 / 3, "2": 1 / 3, "3": 1 / 3},
    }


def random_model(rng: np.random.Generator, n_agents=None, n_choices=None,
                 min_decisiveness=0.05) -> NetworkModel:
    """Random valid model; every agent keeps some direct-selection mass."""
    n = int(n_agents if n_agents is not None else rng.integers(2, 9))
    c = int(n_choices if n_choices is not None else rng.integers(2, 5))
    adoption = rng.random((n, n)) * rng.integers(0, 2, size=(n, n))
    np.fill_diagonal(adoption, 0.0)
    direct = rng.random((n, c)) + min_decisiveness
    total = adoption.sum(axis=1) + direct.sum(axis=1)
    adoption /= total[:, None]
    direct /= total[:, None]
    agents = [f"a{i}" for i in range(n)]
    choices = [f"c{j}" for j in range(c)]
    return build_model(agents, choices, adoption, direct, rng.random(n) + 0.1)


def hub_network_model(n: int, rho_f: float, rho_h: float) -> NetworkModel:
    """Fully connected network with one extra-weight hub (agent 0)."""
    adoption = np.full((n, n), rho_f / (n - 1))
    np.fill_diagonal(adoption, 0.0)
    adoption[1:, 0] += rho_h
    direct = (1.0 - adoption.sum(axis=1))[:, None]
    return build_model([f"a{i}" for i in range(n)], ["c"], adoption, direct)


@pytest.fixture
def example2():
    return influential_agent_model()


@pytest.fixture
def example2_path(tmp_path):
    path = tmp_path / "example2.json"
    path.write_text(json.dumps(influential_agent_document()), encoding="utf-8")
    return path
