import math

import pytest

from manevkit import potentials
from manevkit.verify import VerifyContext, kernel_scale, registry, run_checks

STATELESS = ["kernel.poisson_origin", "kernel.manev_origin", "kernel.exterior_law",
             "kernel.energy_pairing", "abel.round_trip", "jacobian.square_well"]


@pytest.fixture
def ctx(j4, options):
    return VerifyContext(j4, options, seed=11)


def test_registry_keeps_declaration_order():
    names = list(registry)
    assert len(names) == 22
    assert names[:4] == STATELESS[:4]
    assert names[5] == "abel.re_solve"
    assert names[-1] == "potentials.k_invariance"


def test_stateless_checks_pass(ctx):
    statuses = run_checks(ctx, STATELESS)
    assert [s.name for s in statuses] == STATELESS
    failed = [(s.name, s.value) for s in statuses if not s.passed]
    assert failed == []


def test_scale_checks_pass(ctx):
    names = ["rescaling.factors", "rescaling.power_law_closed_form",
             "potentials.interpolation_invariance", "potentials.k_invariance"]
    assert all(s.passed for s in run_checks(ctx, names))


def test_scaled_kernels_fail_exactly_the_kernel_checks(ctx):
    statuses = run_checks(ctx, STATELESS, scale=2.0)
    failed = [s.name for s in statuses if not s.passed]
    assert failed == [n for n in STATELESS if n.startswith("kernel.")]


def test_kernel_scale_restores_the_prefactors():
    saved = potentials.POISSON_PREFACTOR, potentials.MANEV_PREFACTOR
    with pytest.raises(RuntimeError):
        with kernel_scale(3.0):
            assert potentials.MANEV_PREFACTOR == pytest.approx(3.0 / math.pi)
            raise RuntimeError("boom")
    assert (potentials.POISSON_PREFACTOR, potentials.MANEV_PREFACTOR) == saved


def test_unknown_check(ctx):
    with pytest.raises(KeyError):
        run_checks(ctx, ["kernel.nothing"])
