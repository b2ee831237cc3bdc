import numpy as np
import pytest

from brfmob.distributions import BrfQuantile, DgbdParams
from brfmob.errors import DomainError
from brfmob.fitting import fit_dgbd, rank_sample
from brfmob.od_network import centralities
from brfmob.synthetic import generate_synthetic_day


def edge_list(net):
    return list(net.edges())


class TestGenerator:
    def test_deterministic(self):
        a = generate_synthetic_day(300, seed=5)
        b = generate_synthetic_day(300, seed=5)
        assert edge_list(a) == edge_list(b)
        assert edge_list(a) != edge_list(generate_synthetic_day(300, seed=6))

    def test_simple_graph_invariants(self):
        net = generate_synthetic_day(400, seed=1)
        assert net.n_self_loops == 0 and net.n_merged == 0
        assert np.all(net.weight >= 1)
        c = centralities(net)
        assert np.all(c.total_strength >= c.total_degree)
        assert c.in_strength.sum() == c.out_strength.sum() == net.weight.sum()

    @pytest.mark.filterwarnings("ignore:.*clamped:RuntimeWarning")
    @pytest.mark.parametrize("seed", range(5))
    def test_minimal_n10(self, seed):
        net = generate_synthetic_day(10, seed=seed)
        assert net.n_nodes == 10
        c = centralities(net)
        assert np.all(c.in_degree <= 9) and np.all(c.out_degree <= 9)
        assert c.in_strength.sum() == c.out_strength.sum()

    def test_too_small(self):
        with pytest.raises(DomainError):
            generate_synthetic_day(9)

    def test_clamp_warns(self):
        with pytest.warns(RuntimeWarning, match="clamped"):
            generate_synthetic_day(20, (50.0, 0.8, 0.3), seed=0)

    def test_accepts_dgbd_params(self):
        p = DgbdParams(30.0, 0.35, 0.45, 1000)
        net = generate_synthetic_day(200, degree_params=p, seed=2)
        q = p.to_brf()
        assert net.meta["degree_params"] == pytest.approx([q.A, q.a, q.b])


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(10))
def test_refit_recovers_parameters(seed):
    strength = BrfQuantile.from_values(300.0, 0.6, 0.3)
    degree = BrfQuantile.from_values(30.0, 0.35, 0.45)
    c = centralities(generate_synthetic_day(2000, degree, strength, seed=seed))
    fs = fit_dgbd(rank_sample(c.total_strength)).dgbd()
    fd = fit_dgbd(rank_sample(c.total_degree)).dgbd()
    assert abs(fs.a - 0.6) < 0.1 and abs(fs.b - 0.3) < 0.1
    assert abs(fd.a - 0.35) < 0.1 and abs(fd.b - 0.45) < 0.1
