import numpy as np
import pytest

from switchmrac.dynamics import (
    BasisSpec,
    PlantSegment,
    ReferenceModelSpec,
    ReferenceSignalSpec,
    SwitchedPlantSpec,
)
from switchmrac.engine import Scenario

A0 = np.array([[1.0, 1.0], [-1.0, -1.0]])
B0 = np.array([[0.8, 0.8], [0.0, 0.8]])
TH0 = np.array([[0.2, 0.0], [0.0, -0.1]])
A1 = np.array([[-1.0, -1.0], [1.0, 1.0]])
B1 = np.array([[0.8, -0.8], [0.0, -0.8]])
TH1 = np.array([[-0.2, 0.0], [0.0, 0.1]])

A_REF = np.array([[0.0, 1.0], [-4.0, -2.0]])
B_REF = np.array([[4.0, 0.0], [0.0, 4.0]])

KX0 = np.array([[2.5, 1.25], [-3.75, -1.25]])
KR0 = np.array([[5.0, -5.0], [0.0, 5.0]])


def reference_model(x0_ref=(-1.0, 0.0)):
    return ReferenceModelSpec(
        A_ref=A_REF,
        B_ref=B_REF,
        x0_ref=np.asarray(x0_ref, dtype=float),
        r=ReferenceSignalSpec(
            channels=(
                {"kind": "constant", "value": 1.0},
                {"kind": "exp_decay", "a": 1.0, "b": 1.0, "c": -1.0},
            )
        ),
    )


def canonical_plant(switches=(0.0, 5.0, 10.0)):
    mats = [(A0, B0, TH0), (A1, B1, TH1), (A0, B0, TH0)]
    segs = tuple(
        PlantSegment(A=a, B=b, theta_unc=th, t_start=ts)
        for (a, b, th), ts in zip(mats, switches)
    )
    return SwitchedPlantSpec(segments=segs, x0=[-1.0, 0.0], basis=BasisSpec(kind="tanh", n=2))


def feedforward_theta0():
    th = np.zeros((6, 2))
    th[2, 0] = 1.0
    th[3, 1] = 1.0
    return th


def make_scenario(h=1e-3, t_end=2.5, switches=(0.0, 5.0, 10.0), **kw):
    defaults = dict(
        plant=canonical_plant(switches),
        rm=reference_model(),
        theta_hat0=feedforward_theta0(),
        l=10.0,
        sigma=5.0,
        delta_pr=0.1,
        rho=None,
        gamma0=1.0,
        gamma1=1.0,
        h=h,
        t_end=t_end,
        name="test-scenario",
    )
    defaults.update(kw)
    return Scenario(**defaults)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
