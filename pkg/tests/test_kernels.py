import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nanofluxonium import _fallback, kernels

try:
    from nanofluxonium import _kernels
except ImportError:  # pragma: no cover - depends on the build
    _kernels = None

needs_ext = pytest.mark.skipif(_kernels is None, reason="compiled extension not built")


def lindblad_case(d, n_steps, seed, drive=True):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    h0 = 0.5 * (a + a.conj().T)
    b = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    hd = (0.05 * (b + b.conj().T))[None] if drive else np.zeros((0, d, d), complex)
    t = np.arange(2 * n_steps + 1) * 0.5e-2
    coeff = np.cos(3.0 * t)[None] if drive else np.zeros((0, t.size))
    jumps = np.array([(k + 1, k) for k in range(d - 1)])
    rates = np.full(d - 1, 0.02)
    rho0 = np.zeros((d, d), complex)
    rho0[-1, -1] = 1.0
    return rho0, h0, hd, coeff, jumps, rates, 1e-2, n_steps, 7


def test_compiled_backend_selected():
    assert kernels.BACKEND == ("compiled" if _kernels is not None else "python")


@needs_ext
@given(st.integers(2, 120), st.floats(0.01, 3.0))
def test_displacement_backends_agree(dim, s):
    a = _fallback.displacement_moduli(dim, s)
    b = _kernels.displacement_moduli(dim, s)
    # Entries are bounded by 1; the recurrences differ only in rounding.
    assert np.abs(a - b).max() < 1e-13


@needs_ext
@pytest.mark.parametrize("d,drive", [(2, False), (4, True), (7, True)])
def test_lindblad_backends_agree(d, drive):
    args = lindblad_case(d, 300, d, drive)
    a = _fallback.lindblad_rk4(*args)
    b = _kernels.lindblad_rk4(*args)
    assert a.shape == b.shape == (300 // 7 + 1, d, d)
    assert np.abs(a - b).max() < 1e-12


def test_pure_env_selects_fallback():
    code = "from nanofluxonium import kernels; print(kernels.BACKEND)"
    env = {**os.environ, "NANOFLUXONIUM_PURE": "1"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_fallback_end_to_end():
    # A short solve with the pure backend matches the default one.
    code = ("import math; from nanofluxonium.spectra import solve; "
            "from nanofluxonium.circuit import SingleModeParams; "
            "print(repr(list(solve(SingleModeParams(0.89, 1.37, 10.95), -1.2, k=4).energies)))")
    outs = []
    for pure in ("1", "0"):
        env = {**os.environ, "NANOFLUXONIUM_PURE": pure}
        r = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        outs.append(np.array(eval(r.stdout)))
    assert np.abs(outs[0] - outs[1]).max() < 1e-10
