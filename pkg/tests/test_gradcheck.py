from shadowloss.gradcheck import check_kernels, check_network, near_kink, run_gradcheck
from shadowloss.losses import MarginConfig


def test_kernel_check_small():
    rep = check_kernels(dims=(2, 8), trials=50, seed=1)
    for r in rep.values():
        assert r["passed"]
        assert r["samples"] == 100
        assert r["max_relative_error"] < 1e-5


def test_kink_exclusion_is_counted():
    # a tiny anchor puts most samples near the shadow kink
    assert near_kink("shadow", [1e-6, 0.0], [1.0, 0.0], [0.0, 1.0], MarginConfig(), 1e-4)
    assert near_kink("triplet", [0.0, 0.0], [1.0, 0.0], [1.0, 1.0], MarginConfig(), 1e-4)
    rep = check_kernels(dims=(2,), trials=300, seed=0, kink_tol=0.2)
    assert rep["shadow"]["kink_excluded"] > 0


def test_network_check():
    for kind in ("shadow", "triplet"):
        r = check_network(kind, params=30, seed=2)
        assert r["passed"], r


def test_seed_replay():
    assert run_gradcheck((2,), 20, 5) == run_gradcheck((2,), 20, 5)
