from __future__ import annotations

import json
import os
import subprocess
import sys

import numpy as np
import pytest

from phiquad import kernels as K
from phiquad.divergences import parse_spec

from _pool import SPECS

# evaluates a fixed battery in a fresh interpreter, since the backend is chosen at import
_WORKER = r"""
import json
import numpy as np
from phiquad import USING_NUMBA
from phiquad.divergences import catalog
from phiquad.empirical import EmpiricalDistribution
from phiquad.primal import primal_quadrangle
from phiquad.divergences import parse_spec

rng = np.random.default_rng(0)
out = {"numba": USING_NUMBA, "values": []}
for spec in catalog(0.75, 0.7, 0.5, 2.0):
    for _ in range(3):
        X = EmpiricalDistribution(np.round(rng.normal(size=4), 2), rng.dirichlet(np.ones(4)))
        q = primal_quadrangle(spec, 0.5, X)
        out["values"].append([q.risk, q.regret, q.statistic_interval[0], q.statistic_interval[1]])
from phiquad import kernels as K
kind, a, b = parse_spec("kl").kernel_args
x, p = np.array([0.0, 1.3]), np.array([0.5, 0.5])
cgrid = np.linspace(-2.0, 3.0, 101)
v, beta = K.recovery_inner_regret(kind, a, b, x, p, 0.9, np.log(1e-10), np.log(1e3), cgrid, 0.0)
c, cc = K.certainty_on_grid(kind, a, b, x, p, 0.5, cgrid, 0.0)
out["values"].append([float(v), float(beta), float(c), float(cc)])
print(json.dumps(out))
"""


def _run(disable: bool) -> dict:
    env = dict(os.environ, PHIQUAD_DISABLE_NUMBA="1" if disable else "0")
    proc = subprocess.run([sys.executable, "-c", _WORKER], env=env, capture_output=True, text=True, check=True)
    return json.loads(proc.stdout.strip().splitlines()[-1])


def test_backends_agree():
    fast, slow = _run(False), _run(True)
    assert slow["numba"] is False
    a, b = np.array(fast["values"]), np.array(slow["values"])
    assert np.allclose(a, b, rtol=1e-9, atol=1e-9)


@pytest.mark.parametrize("spec", SPECS, ids=[s.name for s in SPECS])
def test_persp_matches_definition(spec):
    kind, a, b = spec.kernel_args
    ys = np.linspace(-2.0, 2.0, 9)
    for t in (0.3, 1.0, 2.5):
        for y in ys:
            direct = t * float(K.conj(kind, a, b, y / t))
            assert float(K.persp(kind, a, b, y, t)) == pytest.approx(direct, rel=1e-12, abs=1e-12)


def test_t_objective_is_convex():
    spec = parse_spec("kl")
    kind, a, b = spec.kernel_args
    y = np.array([-1.0, 0.2, 1.5])
    p = np.array([0.3, 0.3, 0.4])
    ts = np.linspace(0.2, 5.0, 200)
    vals = np.array([K.t_objective(kind, a, b, y, p, 0.5, t) for t in ts])
    assert np.all(np.diff(vals, 2) >= -1e-12)
