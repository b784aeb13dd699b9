import numpy as np
import pytest

from mfcert import MsdParams, certify, design_gains, msd_plant


@pytest.fixture(scope="session")
def table_params():
    """Shipped benchmark parameters including uncertainties."""
    return MsdParams(
        k=1.5, c_d=0.3, alpha=0.5, m=1.0, g0=9.81,
        dk=-0.075, dc_d=0.06, dalpha=-0.1,
    )


@pytest.fixture(scope="session")
def nominal_params():
    return MsdParams(k=1.5, c_d=0.3, alpha=0.5, m=1.0, g0=9.81)


@pytest.fixture(scope="session")
def gains():
    return design_gains([-2.0, -2.0], 0.1)


@pytest.fixture(scope="session")
def cert(gains):
    return certify(gains, 1000.0)


@pytest.fixture(scope="session")
def plant(table_params):
    return msd_plant(table_params)


@pytest.fixture(scope="session")
def p_expected():
    return np.array([[36.0, 4.0], [4.0, 5.0]]) / 32.0
